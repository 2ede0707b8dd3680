"""Exact laws on {0,1}^E for small edge sets, and the (FE)/(FKG) checkers.

Weights are kept as log-weights indexed by configuration (bit ``i`` of the
index is the state of edge ``i``); probabilities are obtained by
exponentiating against the maximum.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import expit

from . import _kernels as K
from .configuration import FREE, BoundaryPartition, Configuration, as_state
from .errors import CapacityError, DegenerateMeasureError
from .lattice import EdgeGraph

MAX_EDGES = 24
FKG_CAP = 16
FKG_EXHAUSTIVE_CAP = 12
FKG_TOL = 1e-12


def all_configurations(n: int) -> np.ndarray:
    return np.arange(1 << n, dtype=np.int64)


def bit_table(n: int) -> np.ndarray:
    """``(2^n, n)`` array of edge states, row = configuration index."""
    idx = all_configurations(n)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class ExplicitMeasure:
    n: int
    log_weights: np.ndarray = field(repr=False)
    descriptor: dict = field(default_factory=dict)
    graph: EdgeGraph | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.log_weights.shape != (1 << self.n,):
            raise ValueError(f"expected {1 << self.n} log-weights, got {self.log_weights.shape}")
        if not np.any(np.isfinite(self.log_weights)):
            raise DegenerateMeasureError("all configurations have zero weight")

    @cached_property
    def log_Z(self) -> float:
        top = float(np.max(self.log_weights))
        return top + float(np.log(np.sum(np.exp(self.log_weights - top))))

    @cached_property
    def probs(self) -> np.ndarray:
        p = np.exp(self.log_weights - self.log_Z)
        return p / p.sum()

    def prob(self, omega) -> float:
        return float(self.probs[_index(omega, self.n)])

    def expect(self, values) -> float:
        return float(np.dot(self.probs, values))

    def conditional_column(self, i: int) -> np.ndarray:
        """P(omega_i = 1 | omega^i) for every configuration (ignores bit i)."""
        bit = 1 << i
        idx = all_configurations(self.n)
        lo = idx & ~bit
        lw1 = self.log_weights[lo | bit]
        lw0 = self.log_weights[lo]
        with np.errstate(invalid="ignore"):
            out = expit(lw1 - lw0)
        both_dead = np.isneginf(lw1) & np.isneginf(lw0)
        out[both_dead] = np.nan
        return out

    @cached_property
    def conditional_table(self) -> np.ndarray:
        return np.stack([self.conditional_column(i) for i in range(self.n)])

    def is_product(self, tol: float = 1e-12) -> bool:
        """True when every single-edge conditional is constant."""
        for i in range(self.n):
            c = self.conditional_column(i)
            if np.any(np.isnan(c)) or np.ptp(c) > tol:
                return False
        return True

    def to_json(self) -> str:
        d = dict(self.descriptor)
        if self.graph is not None:
            d["graph"] = self.graph.manifest()["hash"]
        return json.dumps(d, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def label(self) -> str:
        d = self.descriptor
        model = d.get("model", "custom")
        if model == "bernoulli":
            return f"bernoulli(p={d['p']:g})"
        if model == "random-cluster":
            return f"rcm(p={d['p']:g},q={d['q']:g},{d.get('bc', 'free')})"
        return model


def _index(omega, n: int) -> int:
    if isinstance(omega, Configuration):
        return omega.bits
    if isinstance(omega, (int, np.integer)):
        return int(omega)
    return Configuration.from_array(as_state(omega, n)).bits


def _check_size(n: int):
    if n > MAX_EDGES:
        raise CapacityError("edge count", n, MAX_EDGES)


def _check_p(p: float):
    if not 0.0 < p < 1.0:
        raise ValueError(f"edge weight p must lie in (0, 1), got {p}")


def from_log_weights(log_weights, descriptor=None, graph=None) -> ExplicitMeasure:
    lw = np.asarray(log_weights, dtype=float)
    n = int(lw.shape[0]).bit_length() - 1
    if 1 << n != lw.shape[0]:
        raise ValueError("number of weights must be a power of two")
    return ExplicitMeasure(n, lw, descriptor or {"model": "custom"}, graph)


def from_weights(weights, descriptor=None, graph=None) -> ExplicitMeasure:
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    with np.errstate(divide="ignore"):
        return from_log_weights(np.log(w), descriptor, graph)


def product_measure(n: int, p: float) -> ExplicitMeasure:
    """Bernoulli(p) on n anonymous coordinates."""
    _check_size(n)
    _check_p(p)
    opens = bit_table(n).sum(axis=1) if n else np.zeros(1)
    lw = opens * np.log(p) + (n - opens) * np.log1p(-p)
    return ExplicitMeasure(n, lw.astype(float), {"model": "bernoulli", "p": float(p)})


def bernoulli_measure(g: EdgeGraph, p: float) -> ExplicitMeasure:
    """weight(omega) = p^{open} (1-p)^{closed}."""
    _check_size(g.n_edges)
    mu = product_measure(g.n_edges, p)
    return ExplicitMeasure(mu.n, mu.log_weights, mu.descriptor, g)


def random_cluster_measure(g: EdgeGraph, p: float, q: float, xi: BoundaryPartition | None = None) -> ExplicitMeasure:
    """weight(omega) = p^{o} (1-p)^{c} q^{k(omega^xi)}."""
    _check_size(g.n_edges)
    _check_p(p)
    if q <= 0:
        raise ValueError(f"cluster weight q must be positive, got {q}")
    xi = xi or FREE
    n = g.n_edges
    pu, pv = xi.merge_pairs()
    k = K.count_components_all(g.n_vertices, g.edges[:, 0], g.edges[:, 1], pu, pv)
    opens = bit_table(n).sum(axis=1) if n else np.zeros(1)
    lw = opens * np.log(p) + (n - opens) * np.log1p(-p) + k * np.log(q)
    desc = {"model": "random-cluster", "p": float(p), "q": float(q), "bc": xi.tag}
    if not xi.is_free:
        desc["blocks"] = [list(b) for b in xi.blocks]
    return ExplicitMeasure(n, lw.astype(float), desc, g)


def conditional_open_prob(mu: ExplicitMeasure, i: int, omega) -> float:
    """P(omega_i = 1 | omega^i)."""
    c = _index(omega, mu.n)
    lw1 = mu.log_weights[c | (1 << i)]
    lw0 = mu.log_weights[c & ~(1 << i)]
    if np.isneginf(lw1) and np.isneginf(lw0):
        raise DegenerateMeasureError(f"omega^{i} has zero weight")
    return float(expit(lw1 - lw0))


def finite_energy_constant(mu: ExplicitMeasure) -> float:
    """Attained min over i, omega of min(P(omega_i=1|omega^i), 1 - that)."""
    best = 0.5
    for i in range(mu.n):
        c = mu.conditional_column(i)
        if np.any(np.isnan(c)):
            return 0.0
        best = min(best, float(np.min(np.minimum(c, 1.0 - c))))
    return best


@dataclass(frozen=True)
class FKGResult:
    holds: bool
    witness: tuple[int, Configuration, Configuration] | None = None

    def __bool__(self):
        return self.holds


def check_strong_fkg(mu: ExplicitMeasure, *, exhaustive: bool = False, cap: int = FKG_CAP, tol: float = FKG_TOL) -> FKGResult:
    """Monotonicity of every single-edge conditional in the other edges.

    The default scans pairs differing in one further coordinate, which is
    equivalent to the lattice condition; ``exhaustive=True`` compares every
    comparable pair and serves as the oracle.
    """
    n = mu.n
    limit = min(cap, FKG_EXHAUSTIVE_CAP) if exhaustive else cap
    if n > limit:
        raise CapacityError("edge count", n, limit)
    idx = all_configurations(n)
    for i in range(n):
        bit_i = 1 << i
        c = mu.conditional_column(i)
        if np.any(np.isnan(c)):
            raise DegenerateMeasureError(f"edge {i} has a degenerate conditional")
        if exhaustive:
            others = idx[(idx & bit_i) == 0]
            ca = c[others]
            comparable = (others[:, None] & ~others[None, :]) == 0
            bad = comparable & (ca[:, None] > ca[None, :] + tol)
            if bad.any():
                a, b = np.argwhere(bad)[0]
                return FKGResult(False, (i, Configuration(int(others[a]), n), Configuration(int(others[b]), n)))
            continue
        for j in range(n):
            if j == i:
                continue
            bit_j = 1 << j
            base = idx[(idx & (bit_i | bit_j)) == 0]
            bad = c[base] > c[base | bit_j] + tol
            if bad.any():
                lo = int(base[np.argmax(bad)])
                return FKGResult(False, (i, Configuration(lo, n), Configuration(lo | bit_j, n)))
    return FKGResult(True)
