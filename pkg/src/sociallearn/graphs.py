"""Communication graphs, weight matrices and connectivity diagnostics.

Edges are stored as ordered pairs (j, i) meaning j sends to i; undirected
graphs keep both orientations.  Self-loops never appear in edge sets.  Mixing
weights follow the Metropolis construction, where the weight on an edge is
one over the larger incident degree plus one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

# Stochasticity checks on weight matrices use this absolute tolerance.
STOCHASTIC_TOL = 1e-9


class ReducibleMatrixError(ArithmeticError):
    """Power iteration failed to find a strictly positive fixed point."""


@dataclass(frozen=True)
class Graph:
    """Finite graph on nodes 0..n-1 with directed sender-to-receiver edges."""

    n: int
    edges: frozenset[tuple[int, int]]
    directed: bool

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"graph needs at least one node, got n={self.n}")
        for j, i in self.edges:
            if not (0 <= j < self.n and 0 <= i < self.n):
                raise ValueError(f"edge ({j}, {i}) is out of range for n={self.n}")
            if j == i:
                raise ValueError(f"self-loop ({j}, {i}) is not allowed")
            if not self.directed and (i, j) not in self.edges:
                raise ValueError(f"undirected graph is missing the reverse of ({j}, {i})")

    @classmethod
    def undirected(cls, n: int, pairs: Iterable[tuple[int, int]]) -> "Graph":
        """Build an undirected graph; each pair is stored in both orientations."""
        edges = set()
        for a, b in pairs:
            edges.add((a, b))
            edges.add((b, a))
        return cls(n, frozenset(edges), directed=False)

    @classmethod
    def from_arcs(cls, n: int, arcs: Iterable[tuple[int, int]]) -> "Graph":
        """Build a directed graph from (sender, receiver) arcs."""
        return cls(n, frozenset((int(a), int(b)) for a, b in arcs), directed=True)

    def degree(self, node: int) -> int:
        """Number of neighbors; meaningful for undirected graphs."""
        return sum(1 for j, i in self.edges if i == node)

    def out_degree(self, node: int) -> int:
        return sum(1 for j, _ in self.edges if j == node)

    def in_neighbors(self, node: int) -> tuple[int, ...]:
        return tuple(sorted(j for j, i in self.edges if i == node))

    def out_neighbors(self, node: int) -> tuple[int, ...]:
        return tuple(sorted(i for j, i in self.edges if j == node))

    def undirected_pairs(self) -> tuple[tuple[int, int], ...]:
        """Each undirected edge once, as a sorted pair."""
        if self.directed:
            raise ValueError("undirected pair listing needs an undirected graph")
        return tuple(sorted({(min(a, b), max(a, b)) for a, b in self.edges}))

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n))
        for j, i in self.edges:
            adj[j, i] = 1.0
        return adj

    def is_regular(self) -> bool:
        """True when every node has equal in-degree and equal out-degree."""
        outs = {self.out_degree(v) for v in range(self.n)}
        ins = {len(self.in_neighbors(v)) for v in range(self.n)}
        return len(outs) == 1 and len(ins) == 1 and outs == ins


def ring_graph(n: int) -> Graph:
    """Undirected cycle; for n = 2 a single edge, for n = 1 an isolated node."""
    if n == 1:
        return Graph.undirected(1, [])
    return Graph.undirected(n, [(v, (v + 1) % n) for v in range(n)])


def path_graph(n: int) -> Graph:
    return Graph.undirected(n, [(v, v + 1) for v in range(n - 1)])


def complete_graph(n: int) -> Graph:
    return Graph.undirected(n, [(a, b) for a in range(n) for b in range(a + 1, n)])


def directed_cycle(n: int) -> Graph:
    if n == 1:
        return Graph.from_arcs(1, [])
    return Graph.from_arcs(n, [(v, (v + 1) % n) for v in range(n)])


def edgeless_graph(n: int) -> Graph:
    return Graph.undirected(n, [])


@dataclass(frozen=True)
class GraphSequence:
    """Deterministic map from step index k to the graph active at that step."""

    n: int
    graph_fn: Callable[[int], Graph]
    period: int | None = None

    def graph_at(self, k: int) -> Graph:
        if k < 0:
            raise ValueError(f"step index must be nonnegative, got {k}")
        g = self.graph_fn(k % self.period if self.period else k)
        if g.n != self.n:
            raise ValueError(f"graph at step {k} has {g.n} nodes, sequence declares {self.n}")
        return g

    @classmethod
    def static(cls, graph: Graph) -> "GraphSequence":
        return cls(graph.n, lambda _k: graph, period=1)

    @classmethod
    def cyclic(cls, graphs: Sequence[Graph]) -> "GraphSequence":
        graphs = tuple(graphs)
        if not graphs:
            raise ValueError("cyclic sequence needs at least one graph")
        n = graphs[0].n
        for g in graphs:
            if g.n != n:
                raise ValueError("all graphs in a sequence must share the node count")
        return cls(n, lambda k: graphs[k], period=len(graphs))

    @property
    def any_directed(self) -> bool:
        """Whether any graph in one period (or the first graph) is directed."""
        horizon = self.period if self.period else 1
        return any(self.graph_at(k).directed for k in range(horizon))


@dataclass(frozen=True)
class WeightSchedule:
    """Deterministic map from step index k to the mixing matrix used at k.

    ``eta`` is the declared floor under every positive entry across the
    schedule; constructors default it to the smallest positive entry seen
    over one period.
    """

    n: int
    matrix_fn: Callable[[int], np.ndarray]
    eta: float
    period: int | None = None

    def matrix_at(self, k: int) -> np.ndarray:
        if k < 0:
            raise ValueError(f"step index must be nonnegative, got {k}")
        mat = np.asarray(self.matrix_fn(k % self.period if self.period else k), dtype=float)
        if mat.shape != (self.n, self.n):
            raise ValueError(f"matrix at step {k} has shape {mat.shape}, expected ({self.n}, {self.n})")
        return mat

    @classmethod
    def static(cls, matrix, eta: float | None = None) -> "WeightSchedule":
        mat = np.array(matrix, dtype=float)
        mat.setflags(write=False)
        if eta is None:
            eta = _min_positive(mat)
        return cls(mat.shape[0], lambda _k: mat, float(eta), period=1)

    @classmethod
    def cyclic(cls, matrices: Sequence, eta: float | None = None) -> "WeightSchedule":
        mats = tuple(np.array(mat, dtype=float) for mat in matrices)
        if not mats:
            raise ValueError("cyclic schedule needs at least one matrix")
        n = mats[0].shape[0]
        for mat in mats:
            if mat.shape != (n, n):
                raise ValueError("all matrices in a schedule must share one shape")
            mat.setflags(write=False)
        if eta is None:
            eta = min(_min_positive(mat) for mat in mats)
        return cls(n, lambda k: mats[k], float(eta), period=len(mats))

    @classmethod
    def from_graphs(cls, graphs: GraphSequence, kind: str = "lazy-metropolis") -> "WeightSchedule":
        """Metropolis-style weights recomputed from each step's graph."""
        builders = {"metropolis": metropolis_weights, "lazy-metropolis": lazy_metropolis_weights}
        if kind not in builders:
            raise ValueError(f"unknown weight kind {kind!r}")
        build = builders[kind]
        if graphs.period:
            mats = [build(graphs.graph_at(k)) for k in range(graphs.period)]
            return cls.cyclic(mats)
        fn = lambda k: build(graphs.graph_at(k))
        # Without a period the floor cannot be scanned; use the first matrix.
        return cls(graphs.n, fn, _min_positive(fn(0)), period=None)


def _min_positive(mat: np.ndarray) -> float:
    positive = mat[mat > 0]
    return float(positive.min()) if positive.size else 0.0


def metropolis_weights(graph: Graph) -> np.ndarray:
    """Doubly stochastic weights: 1/max(deg+1) on edges, complement on the diagonal."""
    if graph.directed:
        raise ValueError("Metropolis weights need an undirected graph")
    n = graph.n
    deg = [graph.degree(v) for v in range(n)]
    mat = np.zeros((n, n))
    for a, b in graph.undirected_pairs():
        w = 1.0 / max(deg[a] + 1, deg[b] + 1)
        mat[a, b] = w
        mat[b, a] = w
    for v in range(n):
        mat[v, v] = 1.0 - mat[v].sum()
    return mat


def lazy_metropolis_weights(graph: Graph) -> np.ndarray:
    """Half identity plus half Metropolis; keeps every diagonal at least one half."""
    return 0.5 * np.eye(graph.n) + 0.5 * metropolis_weights(graph)


@dataclass(frozen=True)
class WeightViolation:
    """One defect of a weight matrix at one step."""

    k: int
    kind: str
    detail: str
    i: int | None = None
    j: int | None = None


@dataclass(frozen=True)
class WeightReport:
    violations: tuple[WeightViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_weight_schedule(
    schedule: WeightSchedule,
    graphs: GraphSequence,
    horizon: int,
    *,
    require_doubly_stochastic: bool = True,
    tol: float = STOCHASTIC_TOL,
) -> WeightReport:
    """Check each step's matrix against its graph and the declared floor.

    Flags negative entries, off-floor positive entries, nonpositive
    diagonals, row (and optionally column) sums away from one, and positive
    weights on pairs that are not edges of the step's graph.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")
    if schedule.n != graphs.n:
        raise ValueError("schedule and graph sequence disagree on the node count")
    violations: list[WeightViolation] = []
    n = schedule.n
    for k in range(horizon):
        mat = schedule.matrix_at(k)
        g = graphs.graph_at(k)
        for i in range(n):
            row_sum = float(mat[i].sum())
            if abs(row_sum - 1.0) > tol:
                violations.append(
                    WeightViolation(k, "row-sum", f"row {i} sums to {row_sum!r}", i=i)
                )
            if mat[i, i] <= 0:
                violations.append(
                    WeightViolation(k, "diagonal", f"diagonal entry {i} is {mat[i, i]!r}", i=i, j=i)
                )
            for j in range(n):
                w = mat[i, j]
                if w < 0:
                    violations.append(
                        WeightViolation(k, "negative", f"entry ({i}, {j}) is {w!r}", i=i, j=j)
                    )
                elif w > 0:
                    if 0 < w < schedule.eta - tol:
                        violations.append(
                            WeightViolation(
                                k, "floor", f"entry ({i}, {j}) = {w!r} is below eta = {schedule.eta}",
                                i=i, j=j,
                            )
                        )
                    if i != j and (j, i) not in g.edges:
                        violations.append(
                            WeightViolation(
                                k, "conformance",
                                f"positive weight on ({i}, {j}) but ({j}, {i}) is not an edge",
                                i=i, j=j,
                            )
                        )
        if require_doubly_stochastic:
            for j in range(n):
                col_sum = float(mat[:, j].sum())
                if abs(col_sum - 1.0) > tol:
                    violations.append(
                        WeightViolation(k, "column-sum", f"column {j} sums to {col_sum!r}", j=j)
                    )
    return WeightReport(tuple(violations))


@dataclass(frozen=True)
class ConnectivityResult:
    ok: bool
    first_failing_window: int | None = None


def b_connectivity_check(graphs: GraphSequence, b: int, horizon: int) -> ConnectivityResult:
    """Union the edges over each length-b window and test connectivity.

    Windows are [w*b, (w+1)*b - 1] for w = 0, 1, ...; the horizon must be a
    positive multiple of b.  Unions containing any directed graph are tested
    for strong connectivity, otherwise for plain connectivity.
    """
    if b < 1:
        raise ValueError(f"window length must be at least 1, got {b}")
    if horizon < b or horizon % b != 0:
        raise ValueError(f"horizon {horizon} must be a positive multiple of b={b}")
    n = graphs.n
    for w in range(horizon // b):
        edges: set[tuple[int, int]] = set()
        directed = False
        for k in range(w * b, (w + 1) * b):
            g = graphs.graph_at(k)
            directed = directed or g.directed
            edges.update(g.edges)
        if directed:
            connected = _strongly_connected(n, edges)
        else:
            connected = _connected(n, edges)
        if not connected:
            return ConnectivityResult(False, w)
    return ConnectivityResult(True, None)


def _connected(n: int, edges: set[tuple[int, int]]) -> bool:
    """Union-find connectivity over node set 0..n-1."""
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    return len({find(v) for v in range(n)}) == 1


def _strongly_connected(n: int, edges: set[tuple[int, int]]) -> bool:
    """Single-pass iterative Tarjan; true when there is exactly one SCC."""
    succ: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        succ[a].append(b)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    counter = 0
    components = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, child = work[-1]
            if child == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            while child < len(succ[v]):
                w = succ[v][child]
                child += 1
                if index[w] == -1:
                    work[-1] = (v, child)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                components += 1
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    if w == v:
                        break
    return components == 1


def stationary_distribution(
    matrix, *, tol: float = 1e-12, max_iter: int = 10**6
) -> np.ndarray:
    """Left fixed-point probability vector of a row-stochastic matrix.

    Found by power iteration.  Iterating (I + A)/2 keeps the same fixed point
    while removing periodicity, so the iteration converges for every
    irreducible matrix.  Raises ReducibleMatrixError when no strictly
    positive fixed point emerges within the budget.
    """
    mat = np.asarray(matrix, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"need a square matrix, got shape {mat.shape}")
    n = mat.shape[0]
    if (mat < 0).any() or not np.allclose(mat.sum(axis=1), 1.0, atol=STOCHASTIC_TOL):
        raise ValueError("matrix is not row-stochastic")
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = pi @ mat
        residual = float(np.abs(nxt - pi).sum())
        if residual <= tol:
            pi = nxt
            break
        pi = 0.5 * (pi + nxt)
    else:
        raise ReducibleMatrixError(f"no fixed point after {max_iter} iterations")
    pi = pi / pi.sum()
    # Transient states decay toward zero but stall just under the residual
    # tolerance, so sub-tolerance mass is read as a vanished entry.
    if (pi <= 10.0 * tol).any():
        raise ReducibleMatrixError("fixed point loses mass on some state; matrix is reducible")
    return pi


def second_eigenvalue_modulus(matrix) -> float:
    """Second-largest eigenvalue modulus of a stochastic matrix, clipped to [0, 1]."""
    mat = np.asarray(matrix, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"need a square matrix, got shape {mat.shape}")
    if mat.shape[0] == 1:
        return 0.0
    moduli = np.sort(np.abs(np.linalg.eigvals(mat)))[::-1]
    return float(min(max(moduli[1], 0.0), 1.0))
