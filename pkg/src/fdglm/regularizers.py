"""Separable regularizers and their proximal maps.

Three kinds: ``zero`` (no penalty), ``l1`` with weight w (r(u) = w * ||u||_1)
and ``sql2`` with weight mu (r(u) = (mu/2) * ||u||^2).  All are block
separable, so per-agent application and whole-vector application agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError

__all__ = ["RegKind", "ZERO", "l1", "squared_l2", "parse_reg", "reg_value", "prox"]


@dataclass(frozen=True)
class RegKind:
    """A regularizer kind; ``weight`` is w for l1 and mu for sql2 (unused for zero)."""

    name: str
    weight: float = 0.0

    def __post_init__(self):
        if self.name not in ("zero", "l1", "sql2"):
            raise ParameterError(f"unknown regularizer {self.name!r}")
        if self.name != "zero" and not (math.isfinite(self.weight) and self.weight >= 0):
            raise ParameterError(f"{self.name} weight must be non-negative, got {self.weight}")

    def __str__(self):
        return "zero" if self.name == "zero" else f"{self.name}:{self.weight:g}"


ZERO = RegKind("zero")


def l1(weight: float) -> RegKind:
    return RegKind("l1", float(weight))


def squared_l2(weight: float) -> RegKind:
    return RegKind("sql2", float(weight))


def parse_reg(spec: str) -> RegKind:
    """Parse ``zero``, ``l1:<w>`` or ``sql2:<mu>``."""
    name, _, arg = spec.strip().partition(":")
    if name == "zero":
        if arg:
            raise ParameterError(f"zero takes no parameter (got {spec!r})")
        return ZERO
    if name in ("l1", "sql2"):
        if not arg:
            raise ParameterError(f"{name} needs a weight, e.g. {name}:0.1")
        try:
            return RegKind(name, float(arg))
        except ValueError as exc:
            raise ParameterError(f"bad weight in {spec!r}") from exc
    raise ParameterError(f"unknown regularizer spec {spec!r}")


def _check(u):
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise DomainError("regularizer: non-finite input")
    return u


def reg_value(kind: RegKind, u) -> float:
    """r(u) for a vector (or scalar) u."""
    u = _check(u)
    if kind.name == "zero":
        return 0.0
    if kind.name == "l1":
        return float(kind.weight * np.sum(np.abs(u)))
    return float(0.5 * kind.weight * np.sum(u * u))


def prox(kind: RegKind, u, tau: float):
    """argmin_x r(x) + ||x - u||^2 / (2 tau); elementwise, tau > 0."""
    u = _check(u)
    if not (math.isfinite(tau) and tau > 0):
        raise ParameterError(f"prox step tau must be positive, got {tau}")
    if kind.name == "zero":
        return u.copy()
    if kind.name == "l1":
        t = tau * kind.weight
        return np.sign(u) * np.maximum(np.abs(u) - t, 0.0)
    return u / (1.0 + tau * kind.weight)
