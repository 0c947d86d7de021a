"""Scalar loss functions, their smoothness reports, and the dual coordinate solve.

Each loss is a convex, non-negative function ``l(u, y)`` of a scalar prediction
``u`` and a response ``y``.  Four variants are provided:

* ``squared``:   l(u, y) = (u - y)^2 / 2
* ``absolute``:  l(u, y) = |u - y|
* ``logistic``:  l(u, y) = log(1 + exp(-sign(y) * u))
* ``huber``:     l(u, y) = min_w (w - (u - y))^2 / 2 + kappa * |w - ... |,
  i.e. the quadratic near zero / linear in the tails compromise with
  threshold ``kappa``.

The logistic variant interprets the response as a binary label through its
sign, so its gradient stays bounded by one for arbitrary real responses.

Two smoothness families matter downstream.  A loss is *Lipschitz* with
constant rho when ``|l'(u, y)| <= rho`` everywhere, and *square-root
Lipschitz* with constant rho when ``|l'(u, y)| <= rho * sqrt(l(u, y))``
(equivalently sqrt(l) is rho/2-Lipschitz).  ``lipschitz_report`` states which
family each variant belongs to and with which constants.

``dual_coordinate_update`` solves the one-dimensional strongly convex problem

    min over lam of  (1/n) * l((n/sigma) * (a - lam), y) + lam^2 / (2 sigma)

that the lead agent faces once per response coordinate per round.  The
functions here are pure and operate elementwise on arrays, so they are safe
to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError, ParameterError

__all__ = [
    "LossKind",
    "SQUARED",
    "ABSOLUTE",
    "LOGISTIC",
    "huber",
    "parse_loss",
    "loss_value",
    "loss_grad",
    "LipschitzReport",
    "lipschitz_report",
    "dual_coordinate_update",
    "dual_coordinate_update_array",
    "ConvexQuadratic",
    "conjugate_duality_gap",
]

_NAMES = ("squared", "absolute", "logistic", "huber")


@dataclass(frozen=True)
class LossKind:
    """A loss variant; ``kappa`` is the huber threshold and ignored elsewhere."""

    name: str
    kappa: float = 1.0

    def __post_init__(self):
        if self.name not in _NAMES:
            raise ParameterError(f"unknown loss {self.name!r}; expected one of {_NAMES}")
        if self.name == "huber" and not (math.isfinite(self.kappa) and self.kappa > 0):
            raise ParameterError(f"huber threshold must be positive, got {self.kappa}")

    def __str__(self):
        return f"huber:{self.kappa:g}" if self.name == "huber" else self.name


SQUARED = LossKind("squared")
ABSOLUTE = LossKind("absolute")
LOGISTIC = LossKind("logistic")


def huber(kappa: float = 1.0) -> LossKind:
    """Huber loss with threshold ``kappa`` (quadratic within, linear beyond)."""
    return LossKind("huber", float(kappa))


def parse_loss(spec: str) -> LossKind:
    """Parse a loss spec string: ``squared``, ``absolute``, ``logistic``, ``huber[:kappa]``."""
    name, _, arg = spec.strip().partition(":")
    if name == "huber":
        try:
            return huber(float(arg)) if arg else huber()
        except ValueError as exc:
            raise ParameterError(f"bad huber threshold in {spec!r}") from exc
    if arg:
        raise ParameterError(f"loss {name!r} takes no parameter (got {spec!r})")
    return LossKind(name)


def _labels(y):
    """Binary labels from the sign of the response (non-negative -> +1)."""
    return np.where(np.asarray(y, dtype=float) >= 0.0, 1.0, -1.0)


def _softplus(x):
    # log(1 + exp(x)) without overflow on either tail
    x = np.asarray(x, dtype=float)
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def _expit(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        e = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def _value(kind: LossKind, u, y):
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if kind.name == "squared":
        return 0.5 * (u - y) ** 2
    if kind.name == "absolute":
        return np.abs(u - y)
    if kind.name == "logistic":
        return _softplus(-_labels(y) * u)
    r = u - y
    k = kind.kappa
    return np.where(np.abs(r) <= k, 0.5 * r * r, k * np.abs(r) - 0.5 * k * k)


def _grad(kind: LossKind, u, y):
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if kind.name == "squared":
        return u - y
    if kind.name == "absolute":
        # subgradient selection: 0 exactly at the kink
        return np.sign(u - y)
    if kind.name == "logistic":
        lab = _labels(y)
        return -lab * _expit(-lab * u)
    r = u - y
    k = kind.kappa
    return np.clip(r, -k, k)


def _curvature(kind: LossKind, u, y):
    """Second derivative in u (a.e.), used by the Newton dual solve."""
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if kind.name == "squared":
        return np.ones_like(u)
    if kind.name == "absolute":
        return np.zeros_like(u)
    if kind.name == "logistic":
        s = _expit(-_labels(y) * u)
        return s * (1.0 - s)
    return np.where(np.abs(u - y) <= kind.kappa, 1.0, 0.0)


def _check_finite(name, *vals):
    for v in vals:
        if not np.all(np.isfinite(v)):
            raise DomainError(f"{name}: non-finite input")


def loss_value(kind: LossKind, u, y):
    """Evaluate the loss; scalar in, scalar out (arrays broadcast elementwise)."""
    _check_finite("loss_value", u, y)
    out = _value(kind, u, y)
    return float(out) if np.ndim(out) == 0 else out


def loss_grad(kind: LossKind, u, y):
    """Derivative of the loss in its first argument (subgradient 0 at kinks)."""
    _check_finite("loss_grad", u, y)
    out = _grad(kind, u, y)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class LipschitzReport:
    """Smoothness family of a loss.

    ``cls`` is ``"Lip"``, ``"SqrtLip"`` or ``"Both"``; ``rho`` is the constant
    for that family (the plain Lipschitz constant when both apply).  The
    per-family constants are always available in ``rho_lip`` / ``rho_sqrt``;
    a ``None`` means the loss is not in that family.
    """

    cls: str
    rho: float
    rho_lip: float | None
    rho_sqrt: float | None


def lipschitz_report(kind: LossKind) -> LipschitzReport:
    """Report the smoothness family and gradient-growth constant of a loss."""
    if kind.name == "squared":
        return LipschitzReport("SqrtLip", math.sqrt(2.0), None, math.sqrt(2.0))
    if kind.name in ("absolute", "logistic"):
        return LipschitzReport("Lip", 1.0, 1.0, None)
    # huber: gradient bounded by kappa, and sqrt(loss) has slope at most 1/sqrt(2)
    return LipschitzReport("Both", kind.kappa, kind.kappa, math.sqrt(2.0))


# ---------------------------------------------------------------------------
# dual coordinate solve
# ---------------------------------------------------------------------------

_DUAL_TOL = 1e-12


def dual_coordinate_update_array(
    kind: LossKind, a, y, sigma: float, n: int, *, tol: float = _DUAL_TOL, max_iter: int = 100
):
    """Vectorised form of :func:`dual_coordinate_update` over coordinate arrays.

    Solves, independently for every coordinate i,

        min over lam of  (1/n) * l((n/sigma) * (a_i - lam), y_i) + lam^2 / (2 sigma)

    The stationarity condition is ``lam = l'((n/sigma) * (a - lam), y)``, a
    strictly increasing fixed-point equation, solved by a safeguarded Newton
    iteration that falls back to bisection whenever the Newton candidate
    leaves the current bracket or fails to halve the previous step (without
    the step-halving guard, Newton can two-cycle across a sharp sigmoid
    transition); every iteration therefore shrinks the enclosing interval.
    The squared loss short-circuits to its closed form
    ``(n a - sigma y) / (n + sigma)``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    y = np.broadcast_to(np.asarray(y, dtype=float), a.shape)
    if not (math.isfinite(sigma) and sigma > 0):
        raise ParameterError(f"sigma must be positive, got {sigma}")
    if n < 1:
        raise ParameterError(f"n must be a positive integer, got {n}")
    _check_finite("dual_coordinate_update", a, y)

    if kind.name == "squared":
        return (n * a - sigma * y) / (n + sigma)

    scale = n / sigma

    def resid(lam):
        return lam - _grad(kind, scale * (a - lam), y)

    # For the bounded-gradient variants the solution lives in [-rho, rho];
    # otherwise widen geometrically from a data-scaled first guess.
    rep = lipschitz_report(kind)
    if rep.rho_lip is not None:
        lo = np.full_like(a, -rep.rho_lip)
        hi = np.full_like(a, rep.rho_lip)
    else:  # pragma: no cover - all current non-squared variants are bounded
        b = np.maximum(1.0, np.abs(_grad(kind, scale * a, y)))
        for _ in range(80):
            lo, hi = -b, b
            if np.all(resid(lo) <= 0) and np.all(resid(hi) >= 0):
                break
            b = 2.0 * b
        else:
            raise NumericalError("dual solve: could not bracket the stationary point")

    lam = 0.5 * (lo + hi)
    step_old = hi - lo
    eps = np.finfo(float).eps
    for _ in range(max_iter):
        u = scale * (a - lam)
        psi = lam - _grad(kind, u, y)
        ok_resid = np.abs(psi) <= tol * sigma * np.maximum(1.0, np.abs(lam))
        ok_width = (hi - lo) <= 8.0 * eps * np.maximum(1.0, np.abs(lam))
        done = ok_resid | ok_width
        if done.all():
            break
        lo = np.where(psi < 0, lam, lo)
        hi = np.where(psi > 0, lam, hi)
        dpsi = 1.0 + scale * _curvature(kind, u, y)
        cand = lam - psi / dpsi
        inside = (cand > lo) & (cand < hi) & np.isfinite(cand)
        halving = np.abs(2.0 * psi) <= np.abs(step_old * dpsi)
        take = inside & halving
        lam_next = np.where(take, cand, 0.5 * (lo + hi))
        step_new = np.where(take, np.abs(lam_next - lam), 0.5 * (hi - lo))
        step_old = np.where(done, step_old, step_new)
        lam = np.where(done, lam, lam_next)
    else:
        worst = int(np.argmax(hi - lo))
        raise NumericalError(
            f"dual solve: no convergence after {max_iter} iterations",
            bracket=(float(lo[worst]), float(hi[worst])),
        )
    return lam


def dual_coordinate_update(
    kind: LossKind, a: float, y: float, sigma: float, n: int, *, tol: float = _DUAL_TOL, max_iter: int = 100
) -> float:
    """Solve ``min over lam of (1/n) l((n/sigma)(a - lam), y) + lam^2/(2 sigma)``.

    Returns the unique minimiser.  Raises :class:`NumericalError` carrying the
    last search bracket if the safeguarded Newton/bisection iteration does not
    converge within ``max_iter`` steps.
    """
    out = dual_coordinate_update_array(kind, a, y, sigma, n, tol=tol, max_iter=max_iter)
    return float(out[0])


# ---------------------------------------------------------------------------
# scalar conjugate-duality gap on a known family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvexQuadratic:
    """f(x) = (a/2) x^2 + b x + c |x| with a > 0, c >= 0; conjugate in closed form."""

    a: float
    b: float
    c: float = 0.0

    def __post_init__(self):
        if not (self.a > 0 and self.c >= 0):
            raise ParameterError("ConvexQuadratic needs a > 0 and c >= 0")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.a * x * x + self.b * x + self.c * np.abs(x)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return self.a * x + self.b + self.c * np.sign(x)

    def conjugate(self, v):
        v = np.asarray(v, dtype=float)
        t = np.maximum(np.abs(v - self.b) - self.c, 0.0)
        return 0.5 * t * t / self.a


def conjugate_duality_gap(f1: ConvexQuadratic, f2: ConvexQuadratic, u: float, grid) -> tuple[float, float]:
    """Evaluate both sides of the scalar duality inequality

        max_v [ u v - f1*(v) - f2*(v) ]  >=  f1(u) - f2*(f1'(u))

    with the max approximated over ``grid``.  ``f1`` must be differentiable
    (``c == 0``).  Returns ``(lhs, rhs)``; the inequality holds up to the
    grid resolution.
    """
    if f1.c != 0.0:
        raise ParameterError("conjugate_duality_gap: f1 must be differentiable (c == 0)")
    grid = np.asarray(grid, dtype=float)
    _check_finite("conjugate_duality_gap", grid, u)
    lhs = float(np.max(u * grid - f1.conjugate(grid) - f2.conjugate(grid)))
    rhs = float(f1.value(u) - f2.conjugate(f1.grad(u)))
    return lhs, rhs
