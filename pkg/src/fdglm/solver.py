"""Primal-dual engine for feature-distributed GLM fitting.

The problem is ``min over theta of (1/n) sum_i l(x_i' theta, y_i) + r(theta)``
with the columns of X split across m agents on a connected graph.  Each agent
j owns a feature block X_j, a primal block theta_j, an auxiliary consensus
block v_j and a dual vector lambda_j; agent 0 (the lead agent) additionally
owns the responses.  One round applies, in order,

* the theta update: ``theta_j <- prox_{tau r_j}(theta_j - (tau/n) X_j' lam_j)``
* the v update:     ``v_j <- v_j - (tau/n) sum_{j'~j} (lam_j - lam_j')``
* a neighbour exchange of the fresh v blocks,
* the dual update:  followers set
  ``lam_j <- lam_j + (sigma/n) X_j (2 theta_j+ - theta_j)
    + (sigma/n) sum_{j'~j} [2 (v_j+ - v_j'+) - v_j + v_j']``
  while the lead agent applies the same affine half-step and then solves the
  per-coordinate strongly convex problem (see ``losses.dual_coordinate_update``),
* a neighbour exchange of the fresh lambda blocks.

All iterates start at zero.  Per round each agent sends one v-vector and one
lambda-vector per neighbour (2n reals per direction).  Iterate histories are
bit-identical for any worker count because agents within a phase read only
already-published values and never mutate published arrays.

Step sizes must satisfy ``tau * sigma * ((chi + D) / n)^2 <= 1`` where chi
bounds the operator norm of X and D the Laplacian's largest eigenvalue; the
prescription from the convergence guarantee is

    sigma = sqrt(m) n^{3/2} rho / ((chi + D) R sqrt(1 + 2 chi^2 / delta^2))
    tau   = n^2 / ((chi + D)^2 sigma)

which saturates the product constraint exactly.

The engine counts work with an instrumented counter whose unit is one
multiply or one add at the cost accounting's granularity (a k-term
accumulation is k ops, an n-by-k matvec 2nk; comparisons and prox branch
logic are excluded).  Per round and agent the rule tallies are

    theta update:  2 n d_j + 4 d_j
    v update:      n (deg_j + 3)
    lambda update: n (2 d_j + deg_j + 4) + d_j

The per-coordinate solve of the lead agent is excluded by default; for the
squared loss it is a closed form worth 2n ops, included when
``count_leader_solve=True``.  Degenerate degrees keep the uniform convention
(the per-coordinate scale/update passes are modelled as running regardless),
so the counter matches the closed-form cost model on regular graphs.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import losses as ls
from . import regularizers as rg
from .data import Dataset, FeaturePartition, ProblemConstants, partition_features
from .errors import DivergenceError, ParameterError
from .graphs import NetworkGraph, laplacian_consensus_residual

__all__ = [
    "StepSizes",
    "step_sizes_from_theorem",
    "AgentState",
    "RunResult",
    "primal_update_theta",
    "primal_update_v",
    "dual_update_follower",
    "dual_update_leader",
    "run",
    "baseline_single_agent",
    "save_history_csv",
]

_PRODUCT_SLACK = 1e-12


@dataclass(frozen=True)
class StepSizes:
    """A (tau, sigma) pair; ``source`` records whether it came from the guarantee."""

    tau: float
    sigma: float
    source: str = "manual"

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ParameterError(f"tau must be positive, got {self.tau}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ParameterError(f"sigma must be positive, got {self.sigma}")

    def product_ratio(self, chi: float, D: float, n: int) -> float:
        """tau * sigma * ((chi + D)/n)^2; must stay <= 1 for convergence."""
        return self.tau * self.sigma * ((chi + D) / n) ** 2


def step_sizes_from_theorem(constants: ProblemConstants, m: int, n: int) -> StepSizes:
    """Step sizes prescribed by the convergence guarantee.

    ``constants.delta`` may be +inf (the single-agent degenerate case), which
    simply drops the consensus conditioning term.  The returned pair
    saturates ``tau sigma ((chi+D)/n)^2 = 1`` exactly.
    """
    c = constants
    if m < 1 or n < 1:
        raise ParameterError(f"need m >= 1 and n >= 1, got m={m}, n={n}")
    if c.R <= 0 or c.rho <= 0:
        raise ParameterError(f"R and rho must be positive, got R={c.R}, rho={c.rho}")
    if c.chi + c.D <= 0:
        raise ParameterError(f"chi + D must be positive, got {c.chi + c.D}")
    if c.delta <= 0:
        raise ParameterError(f"delta must be positive, got {c.delta}")
    cond = 1.0 if math.isinf(c.delta) else 1.0 + 2.0 * (c.chi / c.delta) ** 2
    sigma = math.sqrt(m) * n**1.5 * c.rho / ((c.chi + c.D) * c.R * math.sqrt(cond))
    tau = n**2 / ((c.chi + c.D) ** 2 * sigma)
    return StepSizes(tau=tau, sigma=sigma, source="theorem")


# ---------------------------------------------------------------------------
# update rules (pure functions; the engine calls exactly these)
# ---------------------------------------------------------------------------


def primal_update_theta(theta, X_j, lam_j, reg_j, tau: float, n: int):
    """prox_{tau r_j}(theta - (tau/n) X_j' lam_j)."""
    return rg.prox(reg_j, theta - (tau / n) * (X_j.T @ lam_j), tau)


def primal_update_v(v_j, lam_j, neighbor_lams, tau: float, n: int):
    """v_j - (tau/n) sum over neighbours of (lam_j - lam_j')."""
    if not neighbor_lams:
        return v_j
    acc = len(neighbor_lams) * lam_j - np.add.reduce(list(neighbor_lams))
    return v_j - (tau / n) * acc


def _dual_half_step(
    lam_j, X_j, theta_new, theta_old, v_new, v_old, neighbor_v_new, neighbor_v_old, sigma: float, n: int
):
    t = X_j @ (2.0 * theta_new - theta_old)
    if neighbor_v_new:
        deg = len(neighbor_v_new)
        nbr = (
            2.0 * (deg * v_new - np.add.reduce(list(neighbor_v_new)))
            - deg * v_old
            + np.add.reduce(list(neighbor_v_old))
        )
        t = t + nbr
    return lam_j + (sigma / n) * t


def dual_update_follower(
    lam_j, X_j, theta_new, theta_old, v_new, v_old, neighbor_v_new, neighbor_v_old, sigma: float, n: int
):
    """The affine dual update of a non-lead agent (extrapolated in theta and v)."""
    return _dual_half_step(
        lam_j, X_j, theta_new, theta_old, v_new, v_old, neighbor_v_new, neighbor_v_old, sigma, n
    )


def dual_update_leader(
    lam_j,
    X_j,
    theta_new,
    theta_old,
    v_new,
    v_old,
    neighbor_v_new,
    neighbor_v_old,
    sigma: float,
    n: int,
    loss: ls.LossKind,
    y,
):
    """The lead agent's dual update: affine half-step, then the per-coordinate solve."""
    half = _dual_half_step(
        lam_j, X_j, theta_new, theta_old, v_new, v_old, neighbor_v_new, neighbor_v_old, sigma, n
    )
    return ls.dual_coordinate_update_array(loss, half, y, sigma, n)


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------


@dataclass
class AgentState:
    """Mutable state of one agent inside a run."""

    j: int
    X: np.ndarray  # this agent's feature block, n x d_j
    reg: rg.RegKind
    neighbors: tuple
    theta: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)
    lam: np.ndarray = field(init=False)
    ergo_theta: np.ndarray = field(init=False)
    ergo_lam: np.ndarray = field(init=False)
    flops: int = field(init=False, default=0)

    def __post_init__(self):
        n, d_j = self.X.shape
        self.theta = np.zeros(d_j)
        self.v = np.zeros(n)
        self.lam = np.zeros(n)
        self.ergo_theta = np.zeros(d_j)
        self.ergo_lam = np.zeros(n)

    @property
    def deg(self) -> int:
        return len(self.neighbors)


@dataclass
class RunResult:
    """History and final state of a run.

    ``history`` columns are parallel arrays indexed by checkpoint: round
    number, objective at the running (ergodic) average, objective at the last
    iterate, dual consensus residual, cumulative per-agent flops (max over
    agents) and cumulative floats communicated.
    """

    t: np.ndarray
    objective_ergodic: np.ndarray
    objective_last: np.ndarray
    consensus_residual: np.ndarray
    cum_flops: np.ndarray
    cum_floats_sent: np.ndarray
    theta_bar: np.ndarray
    theta_last: np.ndarray
    lambda_last: list
    flops_per_agent: np.ndarray
    floats_sent_total: int
    steps: StepSizes
    T: int
    config: dict
    # per-round iterates, recorded only on request (testing/diagnostics):
    # trace[t-1] = {"theta": d-vector, "v": m x n, "lam": m x n}
    trace: list | None = None


def _resolve_checkpoints(T, checkpoints, checkpoint_every):
    if checkpoints is not None:
        pts = sorted({int(t) for t in checkpoints})
        if not pts or pts[0] < 1 or pts[-1] > T:
            raise ParameterError(f"checkpoints must lie in [1, {T}]")
    else:
        every = checkpoint_every if checkpoint_every is not None else max(1, T // 200)
        if every < 1:
            raise ParameterError(f"checkpoint_every must be >= 1, got {every}")
        pts = list(range(every, T + 1, every))
    if not pts or pts[-1] != T:
        pts.append(T)
    return pts


def _as_reg_list(reg, m):
    if isinstance(reg, rg.RegKind):
        return [reg] * m
    regs = list(reg)
    if len(regs) != m:
        raise ParameterError(f"expected one regularizer or {m}, got {len(regs)}")
    return regs


def _check_steps(steps: StepSizes, constants: ProblemConstants | None, n: int):
    if constants is None:
        return
    ratio = steps.product_ratio(constants.chi, constants.D, n)
    if ratio > 1.0 + _PRODUCT_SLACK:
        msg = (
            f"step sizes violate tau*sigma*((chi+D)/n)^2 <= 1 (got {ratio:.6g}); "
            "convergence is not guaranteed"
        )
        if steps.source == "theorem":
            raise ParameterError(msg)
        warnings.warn(msg, stacklevel=3)


def _objective_parts(loss, y, preds, regs, thetas):
    obj = float(np.mean(ls._value(loss, preds, y)))
    for reg_j, th in zip(regs, thetas):
        obj += rg.reg_value(reg_j, th)
    return obj


def run(
    dataset: Dataset,
    graph: NetworkGraph,
    loss: ls.LossKind,
    reg,
    steps: StepSizes,
    T: int,
    *,
    partition: FeaturePartition | None = None,
    constants: ProblemConstants | None = None,
    checkpoints=None,
    checkpoint_every: int | None = None,
    workers: int = 1,
    count_leader_solve: bool = False,
    record_iterates: bool = False,
) -> RunResult:
    """Run T synchronous rounds of the feature-distributed primal-dual iteration.

    Parameters
    ----------
    dataset : Dataset
        The instance; agent 0 holds ``dataset.y``.
    graph : NetworkGraph
        Connected communication graph with ``graph.m`` agents.
    loss, reg :
        Loss kind and regularizer kind (one for all agents, or a length-m
        sequence of per-agent regularizers).
    steps : StepSizes
        Step sizes; validated against ``constants`` when those are given
        (error for theorem-sourced steps, warning for manual ones).
    T : int
        Number of rounds; must be >= 1.
    partition : FeaturePartition, optional
        Defaults to the consecutive near-equal split.
    checkpoints, checkpoint_every :
        Rounds at which history rows are recorded (the final round is always
        included).  ``checkpoints`` wins when both are given.
    workers : int
        Thread count for the per-agent phases.  Results are bit-identical
        for any value.
    count_leader_solve : bool
        Include the lead agent's per-coordinate solve in its flop tally
        (modelled only for the squared loss, 2n ops per round).
    record_iterates : bool
        Keep every round's (theta, v, lambda) in ``RunResult.trace``; memory
        grows with T, so meant for small diagnostic runs.

    Raises
    ------
    ParameterError
        On inconsistent shapes, T < 1, or invalid theorem-sourced steps.
    DivergenceError
        When an iterate turns non-finite; carries round, agent and variable.
    """
    if not isinstance(T, (int, np.integer)) or isinstance(T, bool) or T < 1:
        raise ParameterError(f"T must be an integer >= 1, got {T!r}")
    m, n, d = graph.m, dataset.n, dataset.d
    if partition is None:
        partition = partition_features(d, m)
    if partition.m != m or partition.d != d:
        raise ParameterError(
            f"partition is for (d={partition.d}, m={partition.m}), expected (d={d}, m={m})"
        )
    if not graph.is_connected():
        raise ParameterError("the communication graph must be connected")
    regs = _as_reg_list(reg, m)
    _check_steps(steps, constants, n)
    pts = _resolve_checkpoints(T, checkpoints, checkpoint_every)
    tau, sigma = steps.tau, steps.sigma
    y = np.asarray(dataset.y, dtype=float)

    agents = [
        AgentState(j, np.ascontiguousarray(dataset.X[:, sl]), regs[j], graph.neighbors[j])
        for j, sl in enumerate(partition.slices())
    ]
    d_sizes = [ag.X.shape[1] for ag in agents]
    # inboxes: lam_in[j][k] is the last lambda received from neighbour k, etc.
    lam_in = [{k: np.zeros(n) for k in ag.neighbors} for ag in agents]
    v_in = [{k: np.zeros(n) for k in ag.neighbors} for ag in agents]
    directed_edges = int(sum(ag.deg for ag in agents))
    floats_sent = 0
    leader_solve_cost = 2 * n if (count_leader_solve and loss.name == "squared") else 0

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    pmap = pool.map if pool is not None else map

    hist = {k: [] for k in ("t", "oe", "ol", "cr", "fl", "fs")}
    trace = [] if record_iterates else None
    try:
        cp = set(pts)
        for t in range(1, T + 1):
            # --- phase A: theta and v from round-(t-1) state and held neighbour lambdas
            def _phase_a(ag: AgentState):
                pre = ag.theta - (tau / n) * (ag.X.T @ ag.lam)
                if not np.all(np.isfinite(pre)):
                    raise DivergenceError(t, ag.j, "theta")
                theta_new = rg.prox(ag.reg, pre, tau)
                v_new = primal_update_v(
                    ag.v, ag.lam, [lam_in[ag.j][k] for k in ag.neighbors], tau, n
                )
                if not np.all(np.isfinite(v_new)):
                    raise DivergenceError(t, ag.j, "v")
                return theta_new, v_new

            news = list(pmap(_phase_a, agents))
            theta_new = [tn for tn, _ in news]
            v_new = [vn for _, vn in news]
            for ag in agents:
                ag.flops += 2 * n * d_sizes[ag.j] + 4 * d_sizes[ag.j] + n * (ag.deg + 3)

            # --- exchange fresh v blocks (one n-vector per direction)
            floats_sent += n * directed_edges

            # --- phase C: dual updates from extrapolated theta and fresh v
            def _phase_c(ag: AgentState):
                j = ag.j
                nbr_new = [v_new[k] for k in ag.neighbors]
                nbr_old = [v_in[j][k] for k in ag.neighbors]
                half = _dual_half_step(
                    ag.lam, ag.X, theta_new[j], ag.theta, v_new[j], ag.v, nbr_new, nbr_old, sigma, n
                )
                if not np.all(np.isfinite(half)):
                    raise DivergenceError(t, j, "lambda")
                if j == 0:
                    return ls.dual_coordinate_update_array(loss, half, y, sigma, n)
                return half

            lam_new = list(pmap(_phase_c, agents))
            for ag in agents:
                ag.flops += n * (2 * d_sizes[ag.j] + ag.deg + 4) + d_sizes[ag.j]
            agents[0].flops += leader_solve_cost

            # --- exchange fresh lambda blocks, then commit round t
            floats_sent += n * directed_edges
            for ag in agents:
                j = ag.j
                for k in ag.neighbors:
                    v_in[j][k] = v_new[k]
                    lam_in[j][k] = lam_new[k]
            for ag in agents:
                j = ag.j
                ag.theta, ag.v, ag.lam = theta_new[j], v_new[j], lam_new[j]
                ag.ergo_theta = ag.ergo_theta + ag.theta
                ag.ergo_lam = ag.ergo_lam + ag.lam
            if trace is not None:
                trace.append(
                    {
                        "theta": np.concatenate(theta_new),
                        "v": np.vstack(v_new),
                        "lam": np.vstack(lam_new),
                    }
                )

            if t in cp:
                bar = [ag.ergo_theta / t for ag in agents]
                pred_bar = np.add.reduce([ag.X @ b for ag, b in zip(agents, bar)])
                pred_last = np.add.reduce([ag.X @ ag.theta for ag in agents])
                hist["t"].append(t)
                hist["oe"].append(_objective_parts(loss, y, pred_bar, regs, bar))
                hist["ol"].append(
                    _objective_parts(loss, y, pred_last, regs, [ag.theta for ag in agents])
                )
                hist["cr"].append(laplacian_consensus_residual(graph, [ag.lam for ag in agents]))
                hist["fl"].append(max(ag.flops for ag in agents))
                hist["fs"].append(floats_sent)
    finally:
        if pool is not None:
            pool.shutdown()

    theta_bar = np.concatenate([ag.ergo_theta / T for ag in agents])
    theta_last = np.concatenate([ag.theta for ag in agents])
    return RunResult(
        t=np.array(hist["t"], dtype=int),
        objective_ergodic=np.array(hist["oe"]),
        objective_last=np.array(hist["ol"]),
        consensus_residual=np.array(hist["cr"]),
        cum_flops=np.array(hist["fl"], dtype=np.int64),
        cum_floats_sent=np.array(hist["fs"], dtype=np.int64),
        theta_bar=theta_bar,
        theta_last=theta_last,
        lambda_last=[ag.lam for ag in agents],
        flops_per_agent=np.array([ag.flops for ag in agents], dtype=np.int64),
        floats_sent_total=floats_sent,
        steps=steps,
        T=T,
        config={
            "n": n,
            "d": d,
            "m": m,
            "graph": graph.spec_string(),
            "loss": str(loss),
            "reg": [str(r) for r in regs] if len(set(map(str, regs))) > 1 else str(regs[0]),
            "T": T,
            "tau": tau,
            "sigma": sigma,
            "workers": workers,
            "seed": dataset.seed,
        },
        trace=trace,
    )


def baseline_single_agent(
    dataset: Dataset,
    loss: ls.LossKind,
    reg: rg.RegKind,
    steps: StepSizes,
    T: int,
    *,
    constants: ProblemConstants | None = None,
    checkpoints=None,
    checkpoint_every: int | None = None,
    count_leader_solve: bool = False,
    record_iterates: bool = False,
) -> RunResult:
    """All features on one agent: the same iteration with the consensus block inert.

    Produces iterates identical to :func:`run` on the single-agent graph with
    equal inputs; only the work accounting differs (no v update, no
    communication: ``n (4 d + 1) + 5 d`` flops per round).
    """
    if not isinstance(T, (int, np.integer)) or isinstance(T, bool) or T < 1:
        raise ParameterError(f"T must be an integer >= 1, got {T!r}")
    if not isinstance(reg, rg.RegKind):
        raise ParameterError("baseline_single_agent takes a single regularizer")
    _check_steps(steps, constants, dataset.n)
    n, d = dataset.n, dataset.d
    pts = _resolve_checkpoints(T, checkpoints, checkpoint_every)
    tau, sigma = steps.tau, steps.sigma
    X, y = dataset.X, np.asarray(dataset.y, dtype=float)
    leader_solve_cost = 2 * n if (count_leader_solve and loss.name == "squared") else 0

    theta = np.zeros(d)
    lam = np.zeros(n)
    ergo = np.zeros(d)
    flops = 0
    hist = {k: [] for k in ("t", "oe", "ol", "fl")}
    trace = [] if record_iterates else None
    cp = set(pts)
    for t in range(1, T + 1):
        pre = theta - (tau / n) * (X.T @ lam)
        if not np.all(np.isfinite(pre)):
            raise DivergenceError(t, 0, "theta")
        theta_new = rg.prox(reg, pre, tau)
        half = lam + (sigma / n) * (X @ (2.0 * theta_new - theta))
        if not np.all(np.isfinite(half)):
            raise DivergenceError(t, 0, "lambda")
        lam = ls.dual_coordinate_update_array(loss, half, y, sigma, n)
        theta = theta_new
        ergo = ergo + theta
        flops += 2 * n * d + 4 * d + n * (2 * d + 1) + d + leader_solve_cost
        if trace is not None:
            trace.append({"theta": theta.copy(), "v": np.zeros((1, n)), "lam": lam[None, :].copy()})
        if t in cp:
            bar = ergo / t
            hist["t"].append(t)
            hist["oe"].append(_objective_parts(loss, y, X @ bar, [reg], [bar]))
            hist["ol"].append(_objective_parts(loss, y, X @ theta, [reg], [theta]))
            hist["fl"].append(flops)

    k = len(hist["t"])
    return RunResult(
        t=np.array(hist["t"], dtype=int),
        objective_ergodic=np.array(hist["oe"]),
        objective_last=np.array(hist["ol"]),
        consensus_residual=np.zeros(k),
        cum_flops=np.array(hist["fl"], dtype=np.int64),
        cum_floats_sent=np.zeros(k, dtype=np.int64),
        theta_bar=ergo / T,
        theta_last=theta,
        lambda_last=[lam],
        flops_per_agent=np.array([flops], dtype=np.int64),
        floats_sent_total=0,
        steps=steps,
        T=T,
        config={
            "n": n,
            "d": d,
            "m": 1,
            "graph": "baseline",
            "loss": str(loss),
            "reg": str(reg),
            "T": T,
            "tau": tau,
            "sigma": sigma,
            "workers": 1,
            "seed": dataset.seed,
        },
        trace=trace,
    )


def save_history_csv(result: RunResult, path) -> None:
    """Write the checkpoint history as delimited text (one row per checkpoint)."""
    header = "t,objective_ergodic,objective_last,consensus_residual,cum_flops,cum_floats_sent"
    rows = np.column_stack(
        [
            result.t,
            result.objective_ergodic,
            result.objective_last,
            result.consensus_residual,
            result.cum_flops,
            result.cum_floats_sent,
        ]
    )
    np.savetxt(path, rows, fmt="%.17g", delimiter=",", header=header, comments="")
