"""Connectivity observables on edge configurations.

Components, two-arm events, crossing-cluster counts, trifurcations, rectangle
crossings and winding circuits on 2-tori.  The functional API takes
``(graph, omega, ...)``; the ``*Counter`` classes precompute masks once and
are what the Monte Carlo drivers call per sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .configuration import BoundaryPartition, as_state
from .lattice import BOX, EdgeGraph, edges_touching, edges_within

_EMPTY = np.zeros(0, dtype=np.int64)


class DisjointSets:
    """Union-find with optional displacement offsets.

    With ``d`` given, every element carries its position relative to its
    root in Z^d; a union between elements already in one set whose implied
    displacement disagrees is recorded in :attr:`cycle_vectors`.
    """

    def __init__(self, n: int, d: int | None = None):
        self.parent = list(range(n))
        self.rank = [0] * n
        self.d = d
        self.offset = [(0,) * d for _ in range(n)] if d else None
        self.cycle_vectors: list[tuple[int, ...]] = []

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        if self.offset is None:
            while self.parent[x] != root:
                self.parent[x], x = root, self.parent[x]
            return root
        path = []
        y = x
        while self.parent[y] != y:
            path.append(y)
            y = self.parent[y]
        # offsets along the path, nearest to root first
        acc = (0,) * self.d
        for node in reversed(path):
            acc = tuple(a + b for a, b in zip(acc, self.offset[node]))
            self.offset[node] = acc
            self.parent[node] = root
        return root

    def position(self, x: int) -> tuple[int, ...]:
        self.find(x)
        return self.offset[x] if self.parent[x] != x else (0,) * self.d

    def union(self, a: int, b: int, delta=None) -> bool:
        """Merge the sets of ``a`` and ``b``; ``delta`` = pos(b) - pos(a)."""
        ra, rb = self.find(a), self.find(b)
        if self.offset is not None:
            delta = tuple(delta) if delta is not None else (0,) * self.d
            pa, pb = self.position(a), self.position(b)
            # pos(rb) - pos(ra) implied by this edge
            shift = tuple(x + dx - y for x, dx, y in zip(pa, delta, pb))
            if ra == rb:
                if any(shift):
                    self.cycle_vectors.append(shift)
                return False
        elif ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
            if self.offset is not None:
                shift = tuple(-s for s in shift)
        self.parent[rb] = ra
        if self.offset is not None:
            self.offset[rb] = shift
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True

    def same(self, a: int, b: int) -> bool:
        return self.find(a) == self.find(b)


@dataclass(frozen=True, eq=False)
class ClusterLabeling:
    labels: np.ndarray
    count: int

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)

    def same(self, x: int, y: int) -> bool:
        return bool(self.labels[x] == self.labels[y])


def _edge_mask(g: EdgeGraph, restriction) -> np.ndarray:
    if restriction is None:
        return np.ones(g.n_edges, dtype=bool)
    if callable(restriction):
        return np.fromiter((bool(restriction(e)) for e in range(g.n_edges)), bool, g.n_edges)
    mask = np.asarray(restriction, dtype=bool)
    if mask.shape != (g.n_edges,):
        raise ValueError("edge restriction must be a mask over all edges")
    return mask


def components(g: EdgeGraph, omega, restriction=None, identify: BoundaryPartition | None = None) -> ClusterLabeling:
    """Clusters of the open edges passing ``restriction``.

    ``identify`` pre-merges each block of a boundary partition, so the count
    equals k(omega^xi) for boundary condition xi.
    """
    state = as_state(omega, g.n_edges)
    mask = _edge_mask(g, restriction) & state.astype(bool)
    pu, pv = identify.merge_pairs() if identify is not None else (_EMPTY, _EMPTY)
    labels, count = K.label_components(g.n_vertices, g.edges[:, 0], g.edges[:, 1], mask, pu, pv)
    return ClusterLabeling(labels, int(count))


def _norm_from(g: EdgeGraph, x: int) -> np.ndarray:
    return np.abs(g.coords - g.coords[x]).max(axis=1)


def _fits(g: EdgeGraph, x: int, n: int) -> bool:
    c = g.coords[x]
    return bool(np.all(c - n >= np.asarray(g.lo)) and np.all(c + n <= np.asarray(g.hi)))


class TwoArm:
    """A_2^e(n) for a fixed edge: both endpoints reach L-inf distance n from
    the lower endpoint, in two distinct clusters."""

    def __init__(self, g: EdgeGraph, e: int, n: int):
        if g.is_torus:
            raise ValueError("two-arm events are defined on boxes and rectangles")
        x, y = int(g.edges[e, 0]), int(g.edges[e, 1])
        if n < 1 or not _fits(g, x, n):
            raise ValueError(f"box of radius {n} around edge {e} does not fit in the graph")
        self.g, self.e, self.n, self.x, self.y = g, e, n, x, y
        self._mark = np.zeros(g.n_vertices, dtype=np.int64)
        self._queue = np.empty(g.n_vertices, dtype=np.int64)

    def __call__(self, omega) -> bool:
        g = self.g
        state = as_state(omega, g.n_edges)
        return bool(
            K.two_arm(g.indptr, g.adj_vertex, g.adj_edge, state, g.coords, self.x, self.y, self.n, self._mark, self._queue)
        )


def two_arm_event(g: EdgeGraph, omega, e: int, n: int) -> bool:
    return TwoArm(g, e, n)(omega)


class CrossingCounter:
    """N_{m,n}: clusters joining the outer and inner faces of A_{m,n}.

    ``restriction="annulus"`` keeps edges with both endpoints in A_{m,n} and
    uses the layer of norm m+1 as inner face; ``restriction="box"`` keeps all
    edges of Lambda_n and uses the layer of norm m.
    """

    def __init__(self, g: EdgeGraph, m: int, n: int, restriction: str = "annulus"):
        if g.kind != BOX and g.kind != "rectangle":
            raise ValueError("crossing counts need a box")
        if m < 0 or m >= n:
            raise ValueError(f"need 0 <= m < n, got m={m}, n={n}")
        norm = g.linf_norm()
        if norm.max() < n:
            raise ValueError(f"graph does not contain Lambda_{n}")
        if restriction == "annulus":
            region = (norm > m) & (norm <= n)
            inner = norm == m + 1
        elif restriction == "box":
            region = norm <= n
            inner = norm == m
        else:
            raise ValueError(f"unknown restriction {restriction!r}")
        self.g = g
        self.edge_mask = edges_within(g, region)
        self.inner = np.flatnonzero(inner)
        self.outer = np.flatnonzero(norm == n)

    def __call__(self, omega) -> int:
        g = self.g
        state = as_state(omega, g.n_edges)
        labels, _ = K.label_components(
            g.n_vertices, g.edges[:, 0], g.edges[:, 1], self.edge_mask & state.astype(bool), _EMPTY, _EMPTY
        )
        return int(np.intersect1d(labels[self.inner], labels[self.outer]).shape[0])


def crossing_cluster_count(g: EdgeGraph, omega, m: int, n: int, restriction: str = "annulus") -> int:
    return CrossingCounter(g, m, n, restriction)(omega)


def coarse_trifurcation(g: EdgeGraph, omega, k: int, n: int) -> bool:
    """At least three distinct crossing clusters of A_{k,n}."""
    return crossing_cluster_count(g, omega, k, n) >= 3


STRIPS = ("U", "R", "L", "D")


def strip_geometry(strip: str, m: int, *, width: int = 5):
    """Rectangle ``(lo, hi)`` and crossing axis of a short-side strip.

    U = [-5m,5m] x [m,5m], R = [-5m,-m] x [-5m,5m], L = [m,5m] x [-5m,5m],
    D = [-5m,5m] x [-5m,-m]; the crossing joins the two long sides.
    """
    w = width * m
    table = {
        "U": ((-w, m), (w, w), 1),
        "D": ((-w, -w), (w, -m), 1),
        "R": ((-w, -w), (-m, w), 0),
        "L": ((m, -w), (w, w), 0),
    }
    if strip not in table:
        raise ValueError(f"unknown strip {strip!r}; expected one of {STRIPS}")
    return table[strip]


class ShortSideCounter:
    def __init__(self, g: EdgeGraph, strip: str, m: int):
        if g.d != 2 or g.is_torus:
            raise ValueError("strips live in planar boxes or rectangles")
        if m < 1:
            raise ValueError("strip scale m must be positive")
        lo, hi, ax = strip_geometry(strip, m)
        if any(l < gl for l, gl in zip(lo, g.lo)) or any(h > gh for h, gh in zip(hi, g.hi)):
            raise ValueError(f"strip {strip} at m={m} does not fit inside the graph")
        c = g.coords
        inside = np.all((c >= np.asarray(lo)) & (c <= np.asarray(hi)), axis=1)
        self.g = g
        self.edge_mask = edges_within(g, inside)
        self.side_a = np.flatnonzero(inside & (c[:, ax] == lo[ax]))
        self.side_b = np.flatnonzero(inside & (c[:, ax] == hi[ax]))

    def __call__(self, omega) -> int:
        g = self.g
        state = as_state(omega, g.n_edges)
        labels, _ = K.label_components(
            g.n_vertices, g.edges[:, 0], g.edges[:, 1], self.edge_mask & state.astype(bool), _EMPTY, _EMPTY
        )
        return int(np.intersect1d(labels[self.side_a], labels[self.side_b]).shape[0])


def shortside_crossing_count(g: EdgeGraph, omega, strip: str, m: int) -> int:
    return ShortSideCounter(g, strip, m)(omega)


class TrifurcationCounter:
    """All x in Lambda_n with Trif_n(x), for a box of radius at least n+1.

    The configuration is restricted to edges inside Lambda_{n+1} with at
    least one endpoint in Lambda_n; clusters must reach Lambda_{n+1} minus
    Lambda_n.
    """

    def __init__(self, g: EdgeGraph, n: int):
        if g.kind != BOX:
            raise ValueError("trifurcations are counted in a box")
        if n < 0 or g.radius < n + 1:
            raise ValueError(f"box of radius {g.radius} cannot hold Lambda_{n + 1}")
        norm = g.linf_norm()
        inner = norm <= n
        self.g = g
        self.n = n
        self.edge_ok = edges_touching(g, inner) & edges_within(g, norm <= n + 1)
        self.candidate = inner
        self.is_boundary = norm == n + 1
        self.bound = int(self.is_boundary.sum())

    def flags(self, omega) -> np.ndarray:
        g = self.g
        state = as_state(omega, g.n_edges)
        return K.trifurcation_flags(
            g.indptr, g.adj_vertex, g.adj_edge, state, self.edge_ok, self.candidate, self.is_boundary
        )

    def __call__(self, omega) -> int:
        return int(self.flags(omega).sum())


def trifurcation(g: EdgeGraph, omega, x: int, n: int) -> bool:
    norm = g.linf_norm()
    if norm[x] > n:
        raise ValueError(f"vertex {x} is not in Lambda_{n}")
    return bool(TrifurcationCounter(g, n).flags(omega)[x])


@dataclass(frozen=True)
class TrifurcationCount:
    count: int
    bound: int

    @property
    def holds(self) -> bool:
        return self.count <= self.bound


def trifurcation_count_and_bound(g: EdgeGraph, omega, n: int) -> TrifurcationCount:
    tc = TrifurcationCounter(g, n)
    return TrifurcationCount(tc(omega), tc.bound)


def _require_2torus(g: EdgeGraph):
    if not g.is_torus or g.d != 2:
        raise ValueError("winding circuits are detected on 2-dimensional tori only")


def nontrivial_circuit(g: EdgeGraph, omega) -> bool:
    """Open cycle with non-zero winding vector."""
    _require_2torus(g)
    state = as_state(omega, g.n_edges)
    found, _, _ = K.winding_scan(g.n_vertices, g.edges[:, 0], g.edges[:, 1], g.axis, g.d, state, -1)
    return bool(found)


def circuit_with_and_without(g: EdgeGraph, omega, e: int) -> tuple[bool, bool]:
    _require_2torus(g)
    state = as_state(omega, g.n_edges)
    on, off = K.circuit_pivotal(g.n_vertices, g.edges[:, 0], g.edges[:, 1], g.axis, g.d, state, e)
    return bool(on), bool(off)


def pivotal_for_circuit(g: EdgeGraph, omega, e: int) -> bool:
    on, off = circuit_with_and_without(g, omega, e)
    return on and not off


def rectangle_crossing(g: EdgeGraph, omega, axis: int = 0) -> bool:
    """Open path inside g joining its two faces orthogonal to ``axis``."""
    if g.is_torus:
        raise ValueError("crossings are defined on rectangles and boxes")
    labels = components(g, omega).labels
    c = g.coords[:, axis]
    left = labels[c == g.lo[axis]]
    right = labels[c == g.hi[axis]]
    return bool(np.intersect1d(left, right).shape[0])
