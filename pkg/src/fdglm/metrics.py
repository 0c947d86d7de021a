"""Objectives, reference optima, error curves, guarantee bounds and cost model.

The objective is ``(1/n) sum_i l(x_i' theta, y_i) + r(theta)``.  Convergence
is reported as ``log10((L_t - L*) / (L_0 - L*))`` where L_t is the objective
along the run, L_0 the objective at the zero start and L* the reference
optimal value; the metric is invariant to positive rescaling of the
objective.  Values below a floor (default -16, roughly float64 resolution)
are clipped and flagged.

The run-time guarantee bounds the objective at the running average after T
rounds.  With A(T) = (chi+D) R rho sqrt(1 + 2 chi^2/delta^2) / (sqrt(n/m) T):

* Lipschitz losses:        obj(theta_bar_T) <= L* + 2 A(T)
* sqrt-Lipschitz losses:   obj(theta_bar_T) <= (1 + 2 A(T)) (L* + A(T)),
  valid once T >= 2 m n rho^2 / sigma (equivalently A(T) <= 1/2), sigma
  being the prescribed step size.

The cost model mirrors the engine's instrumented counter (see
``solver``): per agent and iteration the distributed engine spends
``n (4 b + 2 Delta + 7) + 5 b`` flops with ``b = ceil(d/m)`` and Delta the
maximum degree, against ``n (4 d + 1) + 5 d`` for the single-agent baseline;
their ratio converts iteration counts into baseline-equivalent work units.
A flop is one multiply or one add at the accounting's granularity;
comparisons and prox branch logic are excluded.  For non-regularized least
squares 3 b ops per theta update can be omitted, exposed as a flag.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import losses as ls
from . import regularizers as rg
from .data import Dataset, ProblemConstants
from .errors import ParameterError
from .solver import RunResult, StepSizes, step_sizes_from_theorem

__all__ = [
    "objective",
    "RefOptimum",
    "reference_optimum",
    "relative_error_curve",
    "theorem_bound",
    "sqrt_lip_min_rounds",
    "CostModel",
    "cost_model",
    "save_curve_csv",
]


def objective(dataset: Dataset, loss: ls.LossKind, reg: rg.RegKind, theta) -> float:
    """(1/n) sum_i l(x_i' theta, y_i) + r(theta)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (dataset.d,):
        raise ParameterError(f"theta must have shape ({dataset.d},), got {theta.shape}")
    u = dataset.X @ theta
    return float(np.mean(ls.loss_value(loss, u, dataset.y))) + rg.reg_value(reg, theta)


@dataclass
class RefOptimum:
    """A reference minimiser with the route that produced it."""

    theta: np.ndarray
    value: float
    method: str
    grad_norm: float
    converged: bool


def _smooth_grad(dataset, loss, reg, theta):
    u = dataset.X @ theta
    g = dataset.X.T @ ls._grad(loss, u, dataset.y) / dataset.n
    if reg.name == "sql2":
        g = g + reg.weight * theta
    return g


def reference_optimum(
    dataset: Dataset,
    loss: ls.LossKind,
    reg: rg.RegKind,
    *,
    max_rounds: int = 500_000,
    tol: float = 1e-12,
) -> RefOptimum:
    """High-accuracy minimiser of the objective.

    Route depends on smoothness: squared loss with zero/sql2 regularization
    solves the normal equations directly; other smooth combinations run a
    quasi-Newton solve (Newton-polished for the logistic loss); combinations
    involving a kink (absolute loss, l1) run the single-agent primal-dual
    iteration until the objective moves less than ``tol`` over 100 rounds.
    """
    X, y, n, d = dataset.X, dataset.y, dataset.n, dataset.d

    if loss.name == "squared" and reg.name in ("zero", "sql2"):
        if reg.name == "zero":
            theta = np.linalg.lstsq(X, y, rcond=None)[0]
        else:
            G = X.T @ X / n + reg.weight * np.eye(d)
            theta = np.linalg.solve(G, X.T @ y / n)
        gn = float(np.linalg.norm(_smooth_grad(dataset, loss, reg, theta)))
        return RefOptimum(theta, objective(dataset, loss, reg, theta), "normal-equations", gn, True)

    smooth = loss.name in ("logistic", "huber", "squared") and reg.name in ("zero", "sql2")
    if smooth:
        from scipy.optimize import minimize

        def fun(th):
            val = objective(dataset, loss, reg, th)
            return val, _smooth_grad(dataset, loss, reg, th)

        x0 = np.linalg.lstsq(X, np.where(y >= 0, 1.0, -1.0) if loss.name == "logistic" else y, rcond=None)[0]
        res = minimize(
            fun, x0, jac=True, method="L-BFGS-B",
            options={"maxiter": 50_000, "ftol": 1e-18, "gtol": 1e-12, "maxcor": 50},
        )
        theta = res.x
        # Newton polish: the logistic loss has a smooth Hessian, so a handful
        # of damped steps push the gradient to machine scale
        if loss.name == "logistic" and d <= 4096:
            mu = reg.weight if reg.name == "sql2" else 0.0
            val = objective(dataset, loss, reg, theta)
            for _ in range(25):
                g = _smooth_grad(dataset, loss, reg, theta)
                if np.linalg.norm(g) <= 1e-13 * max(1.0, abs(val)):
                    break
                s = ls._curvature(loss, X @ theta, y)
                H = (X.T * s) @ X / n + mu * np.eye(d)
                try:
                    step = np.linalg.solve(H, g)
                except np.linalg.LinAlgError:
                    break
                amount = 1.0
                for _ in range(40):
                    cand = theta - amount * step
                    cval = objective(dataset, loss, reg, cand)
                    if cval <= val:
                        theta, val = cand, cval
                        break
                    amount *= 0.5
                else:
                    break
        gn = float(np.linalg.norm(_smooth_grad(dataset, loss, reg, theta)))
        val = objective(dataset, loss, reg, theta)
        converged = gn <= 1e-6 * max(1.0, abs(val))
        if not converged:
            warnings.warn(f"reference_optimum: gradient norm {gn:.3g} after quasi-Newton solve")
        return RefOptimum(theta, val, "quasi-newton", gn, converged)

    # kinked objective: run the single-agent iteration to high accuracy
    from .data import operator_norm

    chi = operator_norm(X)
    theta_ls = np.linalg.lstsq(X, y, rcond=None)[0]
    consts = ProblemConstants(
        R=max(1.0, 2.0 * float(np.linalg.norm(theta_ls))),
        chi=chi,
        rho=ls.lipschitz_report(loss).rho,
        delta=math.inf,
        D=0.0,
    )
    steps = step_sizes_from_theorem(consts, 1, n)
    tau, sigma = steps.tau, steps.sigma
    theta = np.zeros(d)
    lam = np.zeros(n)
    prev = objective(dataset, loss, reg, theta)
    converged = False
    for t in range(1, max_rounds + 1):
        theta_new = rg.prox(reg, theta - (tau / n) * (X.T @ lam), tau)
        lam = ls.dual_coordinate_update_array(loss, lam + (sigma / n) * (X @ (2.0 * theta_new - theta)), y, sigma, n)
        theta = theta_new
        if t % 100 == 0:
            val = objective(dataset, loss, reg, theta)
            if abs(prev - val) < tol:
                converged = True
                break
            prev = val
    val = objective(dataset, loss, reg, theta)
    if not converged:
        warnings.warn(
            f"reference_optimum: objective still moving after {max_rounds} rounds (last {val:.6g})"
        )
    return RefOptimum(theta, val, "long-run", math.nan, converged)


def relative_error_curve(objectives, L0: float, L_star: float, floor: float = -16.0):
    """log10((L_t - L*) / (L_0 - L*)), clipped at ``floor``.

    Returns ``(curve, clipped)`` where ``clipped`` marks entries at or below
    the floor (including objectives that dipped under the reference value,
    whose logarithm is undefined).
    """
    objectives = np.asarray(objectives, dtype=float)
    if not (L0 > L_star):
        raise ParameterError(
            f"relative error needs L0 > L*, got L0={L0} and L*={L_star} (degenerate start)"
        )
    gap = (objectives - L_star) / (L0 - L_star)
    with np.errstate(divide="ignore", invalid="ignore"):
        curve = np.where(gap > 0, np.log10(np.maximum(gap, 1e-300)), -np.inf)
    clipped = curve <= floor
    return np.maximum(curve, floor), clipped


def _bound_terms(constants: ProblemConstants, m: int, n: int, T: int):
    c = constants
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    cond = 1.0 if math.isinf(c.delta) else 1.0 + 2.0 * (c.chi / c.delta) ** 2
    return (c.chi + c.D) * c.R * c.rho * math.sqrt(cond) / (math.sqrt(n / m) * T)


def theorem_bound(
    model: str, constants: ProblemConstants, m: int, n: int, T: int, L_hat: float
) -> float:
    """Guaranteed upper bound on the objective at the running average after T rounds.

    ``model`` is ``"Lip"`` or ``"SqrtLip"``; ``L_hat`` is the optimal value.
    The sqrt-Lipschitz form requires ``T >= 2 m n rho^2 / sigma`` and raises
    :class:`ParameterError` when the horizon is too short for the bound to
    apply.
    """
    A = _bound_terms(constants, m, n, T)
    if model == "Lip":
        return L_hat + 2.0 * A
    if model == "SqrtLip":
        if 2.0 * A > 1.0:
            raise ParameterError(
                "sqrt-Lipschitz bound not applicable: "
                f"T={T} < 2 m n rho^2 / sigma = {sqrt_lip_min_rounds(constants, m, n):.6g}"
            )
        return (1.0 + 2.0 * A) * (L_hat + A)
    raise ParameterError(f"unknown bound model {model!r}; expected 'Lip' or 'SqrtLip'")


def sqrt_lip_min_rounds(constants: ProblemConstants, m: int, n: int) -> float:
    """The horizon 2 m n rho^2 / sigma from which the sqrt-Lipschitz bound applies."""
    sigma = step_sizes_from_theorem(constants, m, n).sigma
    return 2.0 * m * n * constants.rho**2 / sigma


@dataclass(frozen=True)
class CostModel:
    """Closed-form per-iteration flop counts and the work-unit conversion ratio."""

    per_agent_per_iter: int
    single_agent_per_iter: int
    ratio: float
    block: int  # ceil(d/m), the per-agent feature count the formula uses
    uneven: bool  # true when m does not divide d exactly
    leader_solve_per_iter: int  # closed-form solve cost at the lead agent (squared loss)


def cost_model(
    n: int, d: int, m: int, max_degree: int, *, least_squares_deduction: bool = False
) -> CostModel:
    """Closed-form cost model; see the module docstring for the formulas."""
    if n < 1 or d < 1 or m < 1:
        raise ParameterError(f"need n, d, m >= 1, got n={n}, d={d}, m={m}")
    if max_degree < 0 or (m == 1 and max_degree != 0) or (m > 1 and max_degree < 1):
        raise ParameterError(f"max_degree={max_degree} impossible for m={m}")
    b = -(-d // m)
    per_agent = n * (4 * b + 2 * max_degree + 7) + 5 * b
    single = n * (4 * d + 1) + 5 * d
    if least_squares_deduction:
        per_agent -= 3 * b
        single -= 3 * d
    return CostModel(
        per_agent_per_iter=per_agent,
        single_agent_per_iter=single,
        ratio=per_agent / single,
        block=b,
        uneven=(d % m != 0),
        leader_solve_per_iter=2 * n,
    )


def save_curve_csv(
    path, result: RunResult, L0: float, L_star: float, work_ratio: float = 1.0, floor: float = -16.0
) -> None:
    """Write a convergence curve as delimited text.

    Columns: round, work units (round times the cost-model ratio, the
    baseline-equivalent x axis), objective at the running average, log10
    relative error, dual consensus residual, cumulative per-agent flops,
    cumulative floats communicated.
    """
    curve, _ = relative_error_curve(result.objective_ergodic, L0, L_star, floor)
    rows = np.column_stack(
        [
            result.t,
            result.t * float(work_ratio),
            result.objective_ergodic,
            curve,
            result.consensus_residual,
            result.cum_flops,
            result.cum_floats_sent,
        ]
    )
    header = "t,work_units,objective,log10_rel_err,consensus_residual,cum_flops,cum_floats_sent"
    np.savetxt(path, rows, fmt="%.17g", delimiter=",", header=header, comments="")
