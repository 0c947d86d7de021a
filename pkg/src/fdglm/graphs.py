"""Communication graphs over agents, their Laplacians and spectral constants.

Agents are numbered 0..m-1 internally; agent 0 is the lead agent that holds
the responses.  Five generator families are supported:

* ``complete``           every pair connected
* ``star``               every agent connected to agent 0 only
* ``er:<p>``             Erdos-Renyi, each pair present with probability p
* ``lattice2d``          sqrt(m) x sqrt(m) grid, cardinal and diagonal
                         neighbours, agent 0 placed at a centre-most point
* ``geo:<radius>``       uniform positions in the unit square, pairs closer
                         than the radius connected (default 0.3)

Random families redraw with seed+attempt until the graph is connected (at
most 100 attempts).  Spectral constants come from a dense symmetric
eigendecomposition, which keeps this module exact but limits it to
m <= 4096.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import CapabilityError, GenerationError, ParameterError

__all__ = [
    "NetworkGraph",
    "SpectralConstants",
    "generate",
    "parse_graph",
    "generate_from_spec",
    "from_edges",
    "load_edge_csv",
    "laplacian",
    "spectral_constants",
    "laplacian_consensus_residual",
    "mohar_lower",
    "mckay_upper",
]

_FAMILIES = ("complete", "star", "er", "lattice2d", "geo")
_MAX_RETRIES = 100
_EIG_LIMIT = 4096
# relative safety margins applied to the spectral constants fed to step-size
# formulas: delta is deflated, D inflated, so they stay valid bounds on
# 1/||L^+|| and ||L|| in the presence of eigensolver rounding
_MARGIN = 1e-6


def _neighbors_connected(m: int, neighbors) -> bool:
    if m <= 1:
        return True
    seen = np.zeros(m, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in neighbors[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return bool(seen.all())


def _edges_connected(m: int, edges) -> bool:
    nbrs = [[] for _ in range(m)]
    for i, j in edges:
        nbrs[i].append(j)
        nbrs[j].append(i)
    return _neighbors_connected(m, nbrs)


@dataclass
class NetworkGraph:
    """An undirected connected graph over ``m`` agents.

    ``edges`` holds each undirected edge once as an ``(i, j)`` pair with
    ``i < j`` (0-based).  ``neighbors[j]`` lists the neighbours of agent j in
    increasing order.  Instances are treated as immutable after construction.
    """

    m: int
    edges: tuple
    family: str = "custom"
    params: dict = field(default_factory=dict)
    seed: int | None = None
    retries: int = 0
    positions: np.ndarray | None = None
    neighbors: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.m < 1:
            raise ParameterError(f"graph needs m >= 1 agents, got {self.m}")
        seen = set()
        nbrs = [[] for _ in range(self.m)]
        for e in self.edges:
            i, j = int(e[0]), int(e[1])
            if i == j:
                raise ParameterError(f"self-loop on agent {i}")
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise ParameterError(f"edge ({i},{j}) out of range for m={self.m}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ParameterError(f"duplicate edge {key}")
            seen.add(key)
            nbrs[key[0]].append(key[1])
            nbrs[key[1]].append(key[0])
        self.edges = tuple(sorted(seen))
        self.neighbors = tuple(tuple(sorted(ns)) for ns in nbrs)
        if not _neighbors_connected(self.m, self.neighbors):
            raise ParameterError(f"graph on m={self.m} agents is disconnected")

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(ns) for ns in self.neighbors], dtype=int)

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.m else 0

    def is_connected(self) -> bool:
        # construction enforces connectivity; kept as a cheap recheck
        return _neighbors_connected(self.m, self.neighbors)

    def spec_string(self) -> str:
        if self.family == "er":
            return f"er:{self.params['p']:g}"
        if self.family == "geo":
            return f"geo:{self.params['radius']:g}"
        return self.family


def from_edges(m: int, edges, family: str = "custom") -> NetworkGraph:
    """Build a graph from explicit 0-based edge pairs."""
    return NetworkGraph(m=m, edges=tuple((int(i), int(j)) for i, j in edges), family=family)


def load_edge_csv(path, m: int | None = None) -> NetworkGraph:
    """Read a two-column edge list CSV with 1-based agent ids.

    A non-numeric first line is treated as a header and skipped.  ``m``
    defaults to the largest agent id seen.
    """
    edges = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise ParameterError(f"{path}: line {lineno}: expected two columns")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                if lineno == 1:  # header row
                    continue
                raise ParameterError(f"{path}: line {lineno}: expected integer agent ids")
            if i < 1 or j < 1:
                raise ParameterError(f"{path}: line {lineno}: agent ids are 1-based")
            edges.append((i - 1, j - 1))
    if not edges and m is None:
        raise ParameterError(f"{path}: no edges found")
    inferred = max(max(e) for e in edges) + 1 if edges else 1
    return from_edges(m if m is not None else inferred, edges)


def parse_graph(spec: str) -> tuple[str, dict]:
    """Parse a family spec string into (family, params)."""
    name, _, arg = spec.strip().partition(":")
    if name not in _FAMILIES:
        raise ParameterError(f"unknown graph family {name!r}; expected one of {_FAMILIES}")
    if name == "er":
        if not arg:
            raise ParameterError("er needs an edge probability, e.g. er:0.5")
        p = float(arg)
        if not 0.0 < p <= 1.0:
            raise ParameterError(f"er probability must be in (0, 1], got {p}")
        return "er", {"p": p}
    if name == "geo":
        radius = float(arg) if arg else 0.3
        if not 0.0 < radius:
            raise ParameterError(f"geo radius must be positive, got {radius}")
        return "geo", {"radius": radius}
    if arg:
        raise ParameterError(f"graph family {name!r} takes no parameter (got {spec!r})")
    return name, {}


def _complete_edges(m):
    return [(i, j) for i in range(m) for j in range(i + 1, m)]


def _star_edges(m):
    return [(0, j) for j in range(1, m)]


def _lattice_edges(m):
    side = math.isqrt(m)
    if side * side != m:
        raise ParameterError(f"lattice2d needs a perfect-square agent count, got m={m}")
    # natural row-major labels, then swap agent 0 onto a centre-most point
    centre = (side - 1) // 2 * side + (side - 1) // 2
    relabel = list(range(m))
    relabel[0], relabel[centre] = relabel[centre], relabel[0]
    edges = []
    for r in range(side):
        for c in range(side):
            for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < side and 0 <= cc < side:
                    edges.append((relabel[r * side + c], relabel[rr * side + cc]))
    return edges


def _er_edges(m, p, rng):
    iu, ju = np.triu_indices(m, k=1)
    keep = rng.random(iu.size) < p
    return list(zip(iu[keep].tolist(), ju[keep].tolist()))


def _geo_edges(m, radius, rng):
    pos = rng.random((m, 2))
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    iu, ju = np.triu_indices(m, k=1)
    keep = dist[iu, ju] < radius
    return list(zip(iu[keep].tolist(), ju[keep].tolist())), pos


def generate(family: str, m: int, seed: int = 0, **params) -> NetworkGraph:
    """Generate a connected graph from one of the five families.

    Random families (``er``, ``geo``) are redrawn with ``seed + attempt``
    until connected; the number of redraws is recorded in ``retries``.
    Deterministic families ignore the seed.
    """
    if m < 1:
        raise ParameterError(f"graph needs m >= 1 agents, got {m}")
    if family == "complete":
        return NetworkGraph(m, tuple(_complete_edges(m)), "complete", {}, seed)
    if family == "star":
        return NetworkGraph(m, tuple(_star_edges(m)), "star", {}, seed)
    if family == "lattice2d":
        return NetworkGraph(m, tuple(_lattice_edges(m)), "lattice2d", {}, seed)
    if family == "er":
        p = float(params.get("p", 0.5))
        if not (0.0 < p <= 1.0):
            raise ParameterError(f"er edge probability must be in (0, 1], got {p}")
        for attempt in range(_MAX_RETRIES):
            rng = np.random.default_rng(seed + attempt)
            edges = _er_edges(m, p, rng)
            if _edges_connected(m, edges):
                return NetworkGraph(m, tuple(edges), "er", {"p": p}, seed, attempt)
        raise GenerationError(
            f"er:{p:g} with m={m}: no connected draw in {_MAX_RETRIES} attempts (seed {seed})"
        )
    if family == "geo":
        radius = float(params.get("radius", 0.3))
        if radius <= 0.0:
            raise ParameterError(f"geo radius must be positive, got {radius}")
        for attempt in range(_MAX_RETRIES):
            rng = np.random.default_rng(seed + attempt)
            edges, pos = _geo_edges(m, radius, rng)
            if _edges_connected(m, edges):
                return NetworkGraph(m, tuple(edges), "geo", {"radius": radius}, seed, attempt, pos)
        raise GenerationError(
            f"geo:{radius:g} with m={m}: no connected draw in {_MAX_RETRIES} attempts (seed {seed})"
        )
    raise ParameterError(f"unknown graph family {family!r}")


def generate_from_spec(spec: str, m: int, seed: int = 0) -> NetworkGraph:
    family, params = parse_graph(spec)
    return generate(family, m, seed, **params)


def laplacian(g: NetworkGraph) -> np.ndarray:
    """Dense combinatorial Laplacian L = deg(.) - adjacency."""
    L = np.zeros((g.m, g.m))
    for i, j in g.edges:
        L[i, i] += 1.0
        L[j, j] += 1.0
        L[i, j] -= 1.0
        L[j, i] -= 1.0
    return L


def _diameter(g: NetworkGraph) -> int:
    if g.m == 1:
        return 0
    import scipy.sparse as sp
    import scipy.sparse.csgraph as csgraph

    ij = np.array(g.edges, dtype=int)
    adj = sp.coo_matrix(
        (np.ones(len(g.edges)), (ij[:, 0], ij[:, 1])), shape=(g.m, g.m)
    ).tocsr()
    dist = csgraph.shortest_path(adj, method="D", directed=False, unweighted=True)
    if not np.all(np.isfinite(dist)):
        raise ParameterError("diameter of a disconnected graph is undefined")
    return int(dist.max())


@dataclass(frozen=True)
class SpectralConstants:
    """Spectral summary of a connected graph.

    ``lambda2`` and ``lambda_max`` are the exact computed eigenvalues;
    ``delta`` and ``D`` are the safety-margined versions meant for step-size
    and bound formulas (delta deflated, D inflated and capped at the
    always-valid bound 2 * max degree).  The single-agent graph is the
    documented degenerate case: its Laplacian is 0, so ``delta`` is +inf and
    ``D`` is 0, which makes the consensus terms drop out of downstream
    formulas.
    """

    lambda2: float
    lambda_max: float
    delta: float
    D: float
    max_degree: int
    diameter: int


def spectral_constants(g: NetworkGraph) -> SpectralConstants:
    """Exact dense-eigendecomposition spectral constants (m <= 4096)."""
    if g.m > _EIG_LIMIT:
        raise CapabilityError(
            f"spectral_constants uses a dense eigendecomposition; m={g.m} exceeds the {_EIG_LIMIT} limit"
        )
    if not g.is_connected():
        raise ParameterError("spectral constants are defined for connected graphs only")
    if g.m == 1:
        return SpectralConstants(math.inf, 0.0, math.inf, 0.0, 0, 0)
    w = np.linalg.eigvalsh(laplacian(g))
    lambda2 = float(w[1])
    lambda_max = float(w[-1])
    delta = lambda2 * (1.0 - _MARGIN)
    D = min(lambda_max * (1.0 + _MARGIN), 2.0 * g.max_degree)
    return SpectralConstants(lambda2, lambda_max, delta, D, g.max_degree, _diameter(g))


def mohar_lower(sc: SpectralConstants, m: int) -> float:
    """Lower bound on 1/lambda2: 2 (diam - 1 - ln(m-1)) / max_degree.

    Informative only when positive; vacuous (can be negative) on dense
    graphs.  Defined for m >= 2.
    """
    if m < 2:
        raise ParameterError("mohar_lower needs m >= 2")
    return 2.0 * (sc.diameter - 1.0 - math.log(m - 1)) / sc.max_degree


def mckay_upper(sc: SpectralConstants, m: int) -> float:
    """Upper bound on 1/lambda2: m * diam / 4.  Defined for m >= 2."""
    if m < 2:
        raise ParameterError("mckay_upper needs m >= 2")
    return m * sc.diameter / 4.0


def laplacian_consensus_residual(g: NetworkGraph, lambdas) -> float:
    """Frobenius norm of L applied to the stacked dual vectors.

    ``lambdas`` is a length-m sequence of equal-length vectors.  Each agent's
    row is accumulated edge-wise (sum over neighbours of lambda_j -
    lambda_j'), so computing it needs only neighbour values; the result
    equals the dense ``norm(L @ Lambda^T)``.
    """
    lambdas = [np.asarray(lam, dtype=float) for lam in lambdas]
    if len(lambdas) != g.m:
        raise ParameterError(f"expected {g.m} dual vectors, got {len(lambdas)}")
    total = 0.0
    for j in range(g.m):
        row = len(g.neighbors[j]) * lambdas[j].astype(float)
        for k in g.neighbors[j]:
            row = row - lambdas[k]
        total += float(np.sum(row * row))
    return math.sqrt(total)
