"""Finite hypercubic graphs: boxes, tori, rectangles, annuli and translations.

Vertices are indexed row-major over coordinates shifted to start at zero
(first axis most significant).  Edges are grouped by axis, then by the index
of their lower endpoint, so edge ``(u, u + e_a)`` always stores ``u`` first.
On a torus the stored orientation also fixes the geometric displacement of
every edge: walking from ``edges[k, 0]`` to ``edges[k, 1]`` moves by ``+e_a``
in the universal cover.  The winding detector in :mod:`percbk.clusters`
relies on this.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError

MAX_VERTICES = 4_000_000

BOX = "box"
TORUS = "torus"
RECTANGLE = "rectangle"


@dataclass(frozen=True, eq=False)
class EdgeGraph:
    kind: str
    d: int
    lo: tuple[int, ...]
    hi: tuple[int, ...]
    coords: np.ndarray
    edges: np.ndarray
    axis: np.ndarray
    indptr: np.ndarray = field(repr=False)
    adj_vertex: np.ndarray = field(repr=False)
    adj_edge: np.ndarray = field(repr=False)
    edge_lookup: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return int(self.coords.shape[0])

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))

    @property
    def radii(self) -> tuple[float, ...]:
        return tuple((h - l) / 2 for l, h in zip(self.lo, self.hi))

    @property
    def radius(self) -> int:
        """Radius ``n`` of a centred box or torus."""
        if self.kind == RECTANGLE or len(set(self.hi)) != 1:
            raise ValueError(f"{self.kind} graph has no single radius")
        return int(self.hi[0])

    @property
    def is_torus(self) -> bool:
        return self.kind == TORUS

    def linf_norm(self) -> np.ndarray:
        return np.abs(self.coords).max(axis=1) if self.d else np.zeros(0, dtype=np.int64)

    def vertex_index(self, coord) -> int:
        c = np.asarray(coord, dtype=np.int64) - np.asarray(self.lo)
        if self.is_torus:
            c = c % np.asarray(self.shape)
        elif np.any(c < 0) or np.any(c >= np.asarray(self.shape)):
            raise ValueError(f"coordinate {tuple(coord)} lies outside the graph")
        return int(np.ravel_multi_index(tuple(c), self.shape))

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edge_between(self, u: int, v: int) -> int:
        for k in range(self.indptr[u], self.indptr[u + 1]):
            if self.adj_vertex[k] == v:
                return int(self.adj_edge[k])
        raise ValueError(f"vertices {u} and {v} are not adjacent")

    # serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "d": self.d,
            "radii": list(self.radii),
            "lo": list(self.lo),
            "hi": list(self.hi),
            "vertex_count": self.n_vertices,
            "edges": self.edges.tolist(),
        }

    def to_bytes(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()

    def manifest(self) -> dict:
        """Compact descriptor (no edge list) plus a digest of the full graph."""
        return {
            "kind": self.kind,
            "d": self.d,
            "lo": list(self.lo),
            "hi": list(self.hi),
            "hash": hashlib.sha256(self.to_bytes()).hexdigest()[:16],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EdgeGraph":
        kind = data["kind"]
        if kind == TORUS:
            g = build_torus(int(data["d"]), int(data["hi"][0]))
        else:
            g = _build(kind, tuple(data["lo"]), tuple(data["hi"]), periodic=False)
        if data.get("vertex_count", g.n_vertices) != g.n_vertices:
            raise ValueError("vertex count does not match the rebuilt graph")
        if "edges" in data and g.edges.tolist() != data["edges"]:
            raise ValueError("edge list does not match the rebuilt graph")
        return g

    @classmethod
    def from_bytes(cls, raw: bytes) -> "EdgeGraph":
        return cls.from_dict(json.loads(raw))

    def __eq__(self, other):
        if not isinstance(other, EdgeGraph):
            return NotImplemented
        return (self.kind, self.d, self.lo, self.hi) == (other.kind, other.d, other.lo, other.hi) and (
            np.array_equal(self.edges, other.edges)
        )

    def __hash__(self):
        return hash((self.kind, self.d, self.lo, self.hi))


@dataclass(frozen=True, eq=False)
class VertexSet:
    indices: np.ndarray
    tag: str = ""

    def __len__(self):
        return int(self.indices.shape[0])

    def __contains__(self, v):
        i = np.searchsorted(self.indices, v)
        return bool(i < len(self.indices) and self.indices[i] == v)

    def mask(self, n_vertices: int) -> np.ndarray:
        m = np.zeros(n_vertices, dtype=bool)
        m[self.indices] = True
        return m


def _build(kind, lo, hi, periodic, max_vertices=MAX_VERTICES) -> EdgeGraph:
    d = len(lo)
    if d < 1:
        raise ValueError("dimension must be at least 1")
    shape = tuple(int(h) - int(l) + 1 for l, h in zip(lo, hi))
    if any(s < 1 for s in shape):
        raise ValueError(f"empty coordinate range lo={lo} hi={hi}")
    n_vertices = int(np.prod(shape, dtype=object))
    if n_vertices > max_vertices:
        raise CapacityError("vertex count", n_vertices, max_vertices)

    grid = np.indices(shape).reshape(d, -1).T
    coords = (grid + np.asarray(lo)).astype(np.int64)
    index = np.arange(n_vertices, dtype=np.int64).reshape(shape)

    edge_lists, axes = [], []
    lookup = np.full((d, n_vertices), -1, dtype=np.int64)
    offset = 0
    for a in range(d):
        if periodic:
            src = index.reshape(-1)
            dst = np.roll(index, -1, axis=a).reshape(-1)
        else:
            sl_src = [slice(None)] * d
            sl_dst = [slice(None)] * d
            sl_src[a] = slice(0, shape[a] - 1)
            sl_dst[a] = slice(1, None)
            src = index[tuple(sl_src)].reshape(-1)
            dst = index[tuple(sl_dst)].reshape(-1)
        order = np.argsort(src, kind="stable")
        src, dst = src[order], dst[order]
        edge_lists.append(np.stack([src, dst], axis=1))
        axes.append(np.full(src.shape[0], a, dtype=np.int64))
        lookup[a, src] = offset + np.arange(src.shape[0])
        offset += src.shape[0]
    edges = np.concatenate(edge_lists) if edge_lists else np.zeros((0, 2), np.int64)
    axis = np.concatenate(axes)

    # CSR adjacency; each edge contributes one entry per endpoint.
    ends = np.concatenate([edges[:, 0], edges[:, 1]])
    others = np.concatenate([edges[:, 1], edges[:, 0]])
    eids = np.concatenate([np.arange(len(edges)), np.arange(len(edges))])
    order = np.lexsort((eids, ends))
    counts = np.bincount(ends, minlength=n_vertices)
    indptr = np.zeros(n_vertices + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])

    return EdgeGraph(
        kind=kind,
        d=d,
        lo=tuple(int(x) for x in lo),
        hi=tuple(int(x) for x in hi),
        coords=coords,
        edges=edges.astype(np.int64),
        axis=axis,
        indptr=indptr,
        adj_vertex=others[order].astype(np.int64),
        adj_edge=eids[order].astype(np.int64),
        edge_lookup=lookup,
    )


def build_box(d: int, n: int, *, max_vertices: int = MAX_VERTICES) -> EdgeGraph:
    """The box [-n, n]^d with all nearest-neighbour edges inside it."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if n < 0:
        raise ValueError("box radius must be non-negative")
    return _build(BOX, (-n,) * d, (n,) * d, periodic=False, max_vertices=max_vertices)


def build_rectangle(lo, hi, *, max_vertices: int = MAX_VERTICES) -> EdgeGraph:
    """Axis-parallel rectangle ``prod [lo_k, hi_k]`` (inclusive, free boundary)."""
    if len(lo) != len(hi):
        raise ValueError("lo and hi must have the same length")
    return _build(RECTANGLE, tuple(lo), tuple(hi), periodic=False, max_vertices=max_vertices)


def build_crossing_rectangle(n: int, a: float) -> EdgeGraph:
    """R_n[a] = [-an, an] x [-n, n]."""
    w = int(round(a * n))
    return build_rectangle((-w, -n), (w, n))


def build_torus(d: int, n: int, *, max_vertices: int = MAX_VERTICES) -> EdgeGraph:
    """Periodic graph of side 2n+1; every vertex has degree 2d."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if n < 1:
        raise ValueError("torus radius must be at least 1")
    return _build(TORUS, (-n,) * d, (n,) * d, periodic=True, max_vertices=max_vertices)


def _require_box(g: EdgeGraph):
    if g.kind != BOX:
        raise ValueError(f"operation requires a box, got {g.kind}")


def ball(g: EdgeGraph, n: int) -> VertexSet:
    """Vertices of the box with L-infinity norm at most n."""
    return VertexSet(np.flatnonzero(g.linf_norm() <= n), f"Lambda_{n}")


def annulus(g: EdgeGraph, m: int, n: int) -> VertexSet:
    """A_{m,n} = Lambda_n minus Lambda_m, i.e. norms in (m, n]."""
    _require_box(g)
    if m >= n:
        raise ValueError(f"annulus needs m < n, got m={m}, n={n}")
    if m < 0 or n > g.radius:
        raise ValueError(f"annulus radii ({m}, {n}) do not fit in a box of radius {g.radius}")
    norm = g.linf_norm()
    return VertexSet(np.flatnonzero((norm > m) & (norm <= n)), f"A_{{{m},{n}}}")


def boundary(g: EdgeGraph, n: int) -> VertexSet:
    """Vertices with L-infinity norm exactly n."""
    if g.is_torus:
        raise ValueError("a torus has no boundary")
    return VertexSet(np.flatnonzero(g.linf_norm() == n), f"dLambda_{n}")


def outer_shell(g: EdgeGraph, n: int) -> VertexSet:
    """Lambda_{n+1} minus Lambda_n, the boundary used for trifurcations."""
    vs = boundary(g, n + 1)
    return VertexSet(vs.indices, f"Lambda_{n + 1}\\Lambda_{n}")


def edges_within(g: EdgeGraph, vertex_mask: np.ndarray) -> np.ndarray:
    return vertex_mask[g.edges[:, 0]] & vertex_mask[g.edges[:, 1]]


def edges_touching(g: EdgeGraph, vertex_mask: np.ndarray) -> np.ndarray:
    return vertex_mask[g.edges[:, 0]] | vertex_mask[g.edges[:, 1]]


def translate(g: EdgeGraph, e: int, x) -> int:
    """Index of edge ``e`` shifted by the integer vector ``x``."""
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (g.d,):
        raise ValueError(f"displacement must have length {g.d}")
    a = int(g.axis[e])
    c = g.coords[g.edges[e, 0]] + x
    if not g.is_torus:
        top = np.asarray(g.hi).copy()
        top[a] -= 1
        if np.any(c < np.asarray(g.lo)) or np.any(c > top):
            raise ValueError(f"translating edge {e} by {tuple(x)} leaves the graph")
    u = g.vertex_index(c)
    out = int(g.edge_lookup[a, u])
    if out < 0:  # pragma: no cover - guarded by the bounds check
        raise ValueError(f"translating edge {e} by {tuple(x)} leaves the graph")
    return out
