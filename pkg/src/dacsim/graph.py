"""Weighted digraphs, Laplacians and spectral helpers.

Convention: ``weights[i, j] > 0`` means agent ``i`` receives from agent ``j``.
The Laplacian is ``diag(row sums) - A`` so that ``L @ 1 == 0`` for every graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

BALANCE_TOL = 1e-9


class GraphError(ValueError):
    """Invalid graph input."""


@dataclass(frozen=True)
class WeightedDigraph:
    weights: np.ndarray

    def __post_init__(self):
        a = np.array(self.weights, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise GraphError(f"adjacency must be a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise GraphError("adjacency contains non-finite entries")
        if np.any(a < 0):
            raise GraphError("adjacency weights must be non-negative")
        if np.any(np.diag(a) != 0):
            raise GraphError("self-loops are not allowed")
        a.setflags(write=False)
        object.__setattr__(self, "weights", a)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int, float]]) -> "WeightedDigraph":
        """Build from ``(receiver, sender, weight)`` triples."""
        a = np.zeros((n, n))
        for i, j, w in edges:
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"edge ({i}, {j}) out of range for n={n}")
            a[i, j] = w
        return cls(a)

    @classmethod
    def ring(cls, n: int, directed: bool = False, weight: float = 1.0) -> "WeightedDigraph":
        a = np.zeros((n, n))
        for i in range(n):
            a[i, (i + 1) % n] = weight
            if not directed:
                a[(i + 1) % n, i] = weight
        return cls(a)

    @classmethod
    def complete(cls, n: int) -> "WeightedDigraph":
        return cls(np.ones((n, n)) - np.eye(n))

    def in_degree(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def out_degree(self) -> np.ndarray:
        return self.weights.sum(axis=0)

    def is_undirected(self) -> bool:
        return bool(np.array_equal(self.weights, self.weights.T))

    def subgraph(self, nodes: Sequence[int]) -> "WeightedDigraph":
        idx = np.asarray(nodes, dtype=int)
        return WeightedDigraph(self.weights[np.ix_(idx, idx)])

    def to_dict(self) -> dict:
        edges = [
            {"from": int(i), "to": int(j), "w": float(self.weights[i, j])}
            for i, j in zip(*np.nonzero(self.weights))
        ]
        return {"n": self.n, "edges": edges}

    @classmethod
    def from_dict(cls, data: dict) -> "WeightedDigraph":
        try:
            n = int(data["n"])
            edges = [(int(e["from"]), int(e["to"]), float(e.get("w", 1.0))) for e in data["edges"]]
        except (KeyError, TypeError) as exc:
            raise GraphError(f"malformed graph description: {exc!r}") from exc
        if n <= 0:
            raise GraphError("n must be positive")
        return cls.from_edges(n, edges)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "WeightedDigraph":
        return cls.from_dict(json.loads(text))


def scale_weights(g: WeightedDigraph, delta: float) -> WeightedDigraph:
    if not delta > 0:
        raise GraphError("scale factor must be positive")
    return WeightedDigraph(g.weights * delta)


def laplacian(g: WeightedDigraph) -> np.ndarray:
    a = g.weights
    return np.diag(a.sum(axis=1)) - a


def is_weight_balanced(g: WeightedDigraph, tol: float = BALANCE_TOL) -> bool:
    """True when every node's in-weight equals its out-weight, i.e. ``1^T L = 0``.

    ``tol`` is relative to the largest out-degree (absolute below 1).
    """
    if tol < 0:
        raise GraphError("tol must be non-negative")
    dout = g.out_degree()
    scale = max(1.0, float(dout.max()))
    return bool(np.max(np.abs(g.in_degree() - dout)) <= tol * scale)


def is_strongly_connected(g: WeightedDigraph) -> bool:
    """Breadth-first reachability from node 0 along both edge directions."""
    reach = g.weights > 0

    def visits(adj: np.ndarray) -> bool:
        seen = np.zeros(g.n, dtype=bool)
        seen[0] = True
        frontier = [0]
        while frontier:
            i = frontier.pop()
            for j in np.nonzero(adj[:, i])[0]:
                if not seen[j]:
                    seen[j] = True
                    frontier.append(j)
        return bool(seen.all())

    return visits(reach) and visits(reach.T)


def sym_laplacian(g: WeightedDigraph) -> np.ndarray:
    L = laplacian(g)
    return 0.5 * (L + L.T)


def spectrum(g: WeightedDigraph) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(eig(L), eig(Sym(L)))``.

    Eigenvalues of ``L`` are sorted by real part then imaginary part; those of
    the symmetric part are sorted ascending.
    """
    L = laplacian(g)
    lam = np.linalg.eigvals(L)
    lam = lam[np.lexsort((lam.imag, lam.real))]
    if np.allclose(lam.imag, 0.0, atol=1e-12):
        lam = lam.real
    lam_hat = np.linalg.eigvalsh(sym_laplacian(g))
    return lam, lam_hat


def algebraic_connectivity(g: WeightedDigraph) -> float:
    """Second smallest eigenvalue of ``Sym(L)``."""
    if g.n < 2:
        raise GraphError("algebraic connectivity needs at least two agents")
    return float(np.linalg.eigvalsh(sym_laplacian(g))[1])


def disagreement_basis(n: int) -> np.ndarray:
    """Orthonormal ``n x (n-1)`` basis of the complement of ``1``.

    Built from the Householder reflector that maps ``e_1`` onto ``1/sqrt(n)``.
    """
    if n < 2:
        raise GraphError("disagreement basis needs n >= 2")
    v = -np.ones(n) / np.sqrt(n)
    v[0] += 1.0
    H = np.eye(n) - 2.0 * np.outer(v, v) / (v @ v)
    return H[:, 1:]


def averaging_projector(n: int) -> np.ndarray:
    return np.eye(n) - np.ones((n, n)) / n


def contraction_norm(g: WeightedDigraph, scale: float = 1.0) -> float:
    """``|| I - scale*L - 11^T/n ||_2``."""
    n = g.n
    return float(np.linalg.norm(np.eye(n) - scale * laplacian(g) - np.ones((n, n)) / n, 2))


@dataclass(frozen=True)
class TopologySchedule:
    """Piecewise-constant topology; segment ``i`` is active on ``[starts[i], starts[i+1])``."""

    starts: tuple[float, ...]
    graphs: tuple[WeightedDigraph, ...]
    dwell: float | None = None
    end: float = field(default=np.inf)

    def __post_init__(self):
        if len(self.starts) == 0 or len(self.starts) != len(self.graphs):
            raise GraphError("schedule needs one start time per graph")
        if any(b <= a for a, b in zip(self.starts, self.starts[1:])):
            raise GraphError("schedule start times must be strictly increasing")
        if len({g.n for g in self.graphs}) != 1:
            raise GraphError("all graphs in a schedule must have the same node count")
        if self.dwell is not None:
            gaps = np.diff(list(self.starts) + ([self.end] if np.isfinite(self.end) else []))
            if np.any(gaps < self.dwell - 1e-12):
                raise GraphError("segment shorter than the declared dwell time")

    @classmethod
    def constant(cls, g: WeightedDigraph) -> "TopologySchedule":
        return cls((0.0,), (g,))

    @property
    def n(self) -> int:
        return self.graphs[0].n

    def index_at(self, t: float) -> int:
        return max(int(np.searchsorted(self.starts, t, side="right")) - 1, 0)

    def graph_at(self, t: float) -> WeightedDigraph:
        return self.graphs[self.index_at(t)]

    def union_strongly_connected(self, window: tuple[float, float]) -> bool:
        t0, t1 = window
        if not t1 > t0:
            raise GraphError("empty window")
        bounds = list(self.starts[1:]) + [self.end]
        union = np.zeros((self.n, self.n))
        for start, stop, g in zip(self.starts, bounds, self.graphs):
            if start < t1 and stop > t0:
                union += g.weights
        return is_strongly_connected(WeightedDigraph(union))

    def to_dict(self) -> dict:
        out = {"segments": [{"start": s, "graph": g.to_dict()} for s, g in zip(self.starts, self.graphs)]}
        if self.dwell is not None:
            out["dwell"] = self.dwell
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TopologySchedule":
        segs = data["segments"]
        return cls(
            tuple(float(s["start"]) for s in segs),
            tuple(WeightedDigraph.from_dict(s["graph"]) for s in segs),
            data.get("dwell"),
        )


def as_schedule(topology: WeightedDigraph | TopologySchedule) -> TopologySchedule:
    if isinstance(topology, TopologySchedule):
        return topology
    return TopologySchedule.constant(topology)


def random_connected_graph(n: int, rng: np.random.Generator, p: float = 0.4,
                           weight_range: tuple[float, float] = (0.5, 2.0)) -> WeightedDigraph:
    """Random undirected graph with uniform weights, resampled until connected."""
    while True:
        mask = np.triu(rng.random((n, n)) < p, 1)
        a = mask * rng.uniform(*weight_range, size=(n, n))
        a = a + a.T
        g = WeightedDigraph(a)
        if is_strongly_connected(g):
            return g


# reference graphs used throughout the examples and tests
GRAPH_A = WeightedDigraph(np.array([[0, 0, 1, 0], [1, 0, 0, 1], [0, 2, 0, 0], [0, 0, 1, 0]], float))
GRAPH_B = WeightedDigraph(np.array([[0, 1, 1, 0], [1, 0, 1, 1], [1, 1, 0, 1], [0, 1, 1, 0]], float))
