"""Sampling and estimation beyond exhaustive enumeration.

Random numbers come from Philox streams keyed by ``(seed, chain)``.  A chain
consumes its stream strictly in order (sweep by sweep, edge by edge), so the
output depends only on the :class:`SamplerConfig`, never on block sizes or
on how many worker threads run the chains.
"""

from __future__ import annotations

import copy
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K
from .configuration import as_state
from .errors import PreconditionError
from .lattice import EdgeGraph

THREADS_ENV = "PERC_BK_THREADS"
SWEEP_BLOCK = 256
N_BATCHES = 20


def resolve_threads(threads: int | None = None) -> int:
    """Explicit argument, else ``PERC_BK_THREADS``, else the CPU count."""
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else (os.cpu_count() or 1)
    if threads < 1:
        raise ValueError("thread count must be positive")
    return threads


def stream(seed: int, chain: int = 0) -> np.random.Generator:
    key = np.array([int(seed) % 2**64, int(chain)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def p_c(q: float) -> float:
    """Self-dual point sqrt(q) / (1 + sqrt(q))."""
    if q <= 0:
        raise ValueError(f"q must be positive, got {q}")
    r = math.sqrt(q)
    return r / (1.0 + r)


def sle_exponent(q: float) -> float:
    """(3 s^2 + 10 s + 3) / (4 (1 + s)) with s = (2/pi) arcsin(sqrt(q)/2)."""
    if not 0 < q <= 4:
        raise ValueError(f"q must lie in (0, 4], got {q}")
    s = 2.0 / math.pi * math.asin(math.sqrt(q) / 2.0)
    return (3 * s * s + 10 * s + 3) / (4 * (1 + s))


def sle_exponent_root(lo: float = 0.3, hi: float = 0.6, target: float = 1.0) -> float:
    """q in (lo, hi) with sle_exponent(q) = target, by bracketing.

    Raises ValueError when the bracket holds no sign change.
    """
    return brentq(lambda q: sle_exponent(q) - target, lo, hi, xtol=1e-14)


# ---------------------------------------------------------------------------
# models and chain graphs


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Random-cluster model (q = 1 is Bernoulli) on a graph.

    ``bc`` is "free", "wired" (boundary vertices joined through a ghost
    vertex) or "periodic" (tori).
    """

    graph: EdgeGraph
    p: float
    q: float = 1.0
    bc: str = "free"

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if self.q <= 0:
            raise ValueError(f"q must be positive, got {self.q}")
        if self.bc not in ("free", "wired", "periodic"):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if (self.bc == "periodic") != self.graph.is_torus:
            raise ValueError("periodic boundary conditions go with tori and only tori")

    @property
    def open_if_connected(self) -> float:
        return self.p

    @property
    def open_if_separated(self) -> float:
        return self.p / (self.p + (1 - self.p) * self.q)

    def to_dict(self) -> dict:
        return {"graph": self.graph.manifest(), "p": self.p, "q": self.q, "bc": self.bc}


def boundary_vertices(g: EdgeGraph) -> np.ndarray:
    c = g.coords
    on = np.any((c == np.asarray(g.lo)) | (c == np.asarray(g.hi)), axis=1)
    return np.flatnonzero(on)


def _csr(n_vertices: int, eu: np.ndarray, ev: np.ndarray):
    ends = np.concatenate([eu, ev])
    other = np.concatenate([ev, eu])
    eid = np.concatenate([np.arange(eu.shape[0]), np.arange(eu.shape[0])])
    order = np.lexsort((eid, ends))
    indptr = np.zeros(n_vertices + 1, dtype=np.int64)
    np.cumsum(np.bincount(ends, minlength=n_vertices), out=indptr[1:])
    return indptr, other[order].astype(np.int64), eid[order].astype(np.int64)


@dataclass(frozen=True, eq=False)
class ChainGraph:
    """Adjacency used by the heat-bath kernel.

    Wired boundaries add a ghost vertex; its edges sit after the real ones
    and are never updated, so they stay open.
    """

    n_edges: int
    eu: np.ndarray
    ev: np.ndarray
    indptr: np.ndarray
    adj_v: np.ndarray
    adj_e: np.ndarray

    @classmethod
    def build(cls, g: EdgeGraph, bc: str = "free") -> "ChainGraph":
        eu = g.edges[:, 0].astype(np.int64)
        ev = g.edges[:, 1].astype(np.int64)
        n_v = g.n_vertices
        if bc == "wired":
            b = boundary_vertices(g)
            eu = np.concatenate([eu, b])
            ev = np.concatenate([ev, np.full(b.shape[0], n_v, dtype=np.int64)])
            n_v += 1
        return cls(g.n_edges, eu, ev, *_csr(n_v, eu, ev))

    def initial_state(self) -> np.ndarray:
        state = np.zeros(self.eu.shape[0], dtype=np.uint8)
        state[self.n_edges :] = 1
        return state

    def scratch(self) -> np.ndarray:
        return np.zeros(self.indptr.shape[0] - 1, dtype=np.int64)


def kernel_open_prob(model: ModelSpec, omega, e: int) -> float:
    """Open probability the heat-bath kernel uses for edge ``e`` given omega^e."""
    cg = ChainGraph.build(model.graph, model.bc)
    state = cg.initial_state()
    state[: cg.n_edges] = as_state(omega, cg.n_edges)
    mark = cg.scratch()
    qa = np.empty_like(mark)
    qb = np.empty_like(mark)
    return float(
        K.heat_bath_prob(
            cg.indptr, cg.adj_v, cg.adj_e, cg.eu, cg.ev, state, e,
            model.open_if_connected, model.open_if_separated, mark, 1, qa, qb,
        )
    )


def _check_q(model: ModelSpec, allow_small_q: bool):
    if model.q < 1:
        if not allow_small_q:
            raise PreconditionError(f"q = {model.q} < 1 lies outside the positively associated regime")
        warnings.warn("heat-bath dynamics for q < 1 may mix slowly", RuntimeWarning, stacklevel=3)


class Chain:
    """Heat-bath chain for one model and one RNG stream."""

    def __init__(self, model: ModelSpec, rng: np.random.Generator, *, allow_small_q: bool = False):
        _check_q(model, allow_small_q)
        self.model = model
        self.rng = rng
        self.graph = ChainGraph.build(model.graph, model.bc)
        self.state = self.graph.initial_state()
        self._mark = self.graph.scratch()
        self._stamp = 1

    @property
    def omega(self) -> np.ndarray:
        return self.state[: self.graph.n_edges]

    def sweep(self, n_sweeps: int = 1):
        cg = self.graph
        done = 0
        while done < n_sweeps:
            b = min(SWEEP_BLOCK, n_sweeps - done)
            u = self.rng.random((b, cg.n_edges))
            self._stamp = K.heat_bath_sweeps(
                cg.indptr, cg.adj_v, cg.adj_e, cg.eu, cg.ev, self.state, cg.n_edges, u,
                self.model.open_if_connected, self.model.open_if_separated, self._mark, self._stamp,
            )
            if self._stamp > 2**62:
                self._mark[:] = 0
                self._stamp = 1
            done += b


def sample_bernoulli(g: EdgeGraph, p: float, rng: np.random.Generator) -> np.ndarray:
    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    return (rng.random(g.n_edges) < p).astype(np.uint8)


def glauber_sweep(g: EdgeGraph, omega, p: float, q: float, bc: str, rng: np.random.Generator, *, allow_small_q=False):
    """One systematic heat-bath sweep; returns the new configuration."""
    chain = Chain(ModelSpec(g, p, q, bc), rng, allow_small_q=allow_small_q)
    chain.state[: g.n_edges] = as_state(omega, g.n_edges)
    chain.sweep(1)
    return chain.omega.copy()


# ---------------------------------------------------------------------------
# sampler configuration and estimators


@dataclass(frozen=True, eq=False)
class SamplerConfig:
    model: ModelSpec
    seed: int
    n_samples: int
    burn_in: int = 200
    thinning: int = 5
    n_chains: int = 1
    method: str = "auto"  # "auto", "direct" (q = 1 only) or "chain"

    def __post_init__(self):
        for name in ("n_samples", "burn_in", "thinning", "n_chains"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.n_chains < 1:
            raise ValueError("need at least one chain")
        if self.method not in ("auto", "direct", "chain"):
            raise ValueError(f"unknown sampling method {self.method!r}")
        if self.method == "direct" and self.model.q != 1:
            raise ValueError("direct sampling needs q = 1")

    @property
    def direct(self) -> bool:
        return self.method == "direct" or (self.method == "auto" and self.model.q == 1)

    def chain_sizes(self) -> list[int]:
        base, extra = divmod(self.n_samples, self.n_chains)
        return [base + (1 if c < extra else 0) for c in range(self.n_chains)]

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "seed": self.seed,
            "n_samples": self.n_samples,
            "burn_in": self.burn_in,
            "thinning": self.thinning,
            "n_chains": self.n_chains,
            "method": self.method,
        }


@dataclass(frozen=True)
class EstimatorResult:
    mean: float
    std_error: float
    n_samples: int
    seed: int
    tau_int: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _as_vector(value) -> np.ndarray:
    return np.atleast_1d(np.asarray(value, dtype=float))


def run_chain(cfg: SamplerConfig, observable, chain: int, *, allow_small_q: bool = False) -> np.ndarray:
    """Observable values ``(n_samples_of_chain, k)`` for one chain."""
    size = cfg.chain_sizes()[chain]
    rng = stream(cfg.seed, chain)
    observable = copy.deepcopy(observable)
    rows = []
    if cfg.direct:
        g = cfg.model.graph
        for _ in range(size):
            rows.append(_as_vector(observable(sample_bernoulli(g, cfg.model.p, rng))))
    else:
        ch = Chain(cfg.model, rng, allow_small_q=allow_small_q)
        ch.sweep(cfg.burn_in)
        for _ in range(size):
            ch.sweep(max(cfg.thinning, 1))
            rows.append(_as_vector(observable(ch.omega)))
    if not rows:
        return np.zeros((0, 0))
    return np.vstack(rows)


def run_chains(cfg: SamplerConfig, observable, threads: int | None = None, **kw) -> list[np.ndarray]:
    """All chains, returned in chain order whatever the thread count."""
    threads = min(resolve_threads(threads), cfg.n_chains)
    if threads == 1:
        return [run_chain(cfg, observable, c, **kw) for c in range(cfg.n_chains)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(run_chain, cfg, observable, c, **kw) for c in range(cfg.n_chains)]
        return [f.result() for f in futures]


def integrated_autocorrelation(x: np.ndarray, c: float = 5.0) -> float:
    """Sokal's self-consistent window estimate of tau_int (>= 1/2)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 2:
        return 0.5
    y = x - x.mean()
    var = float(y @ y) / n
    if var == 0:
        return 0.5
    size = 1 << (2 * n - 1).bit_length()
    fy = np.fft.rfft(y, size)
    acf = np.fft.irfft(fy * np.conj(fy), size)[:n] / (n * var)
    tau = 0.5
    for w in range(1, n):
        tau += acf[w]
        if w >= c * tau:
            break
    return max(float(tau), 0.5)


def _batch_stats(per_chain: list[np.ndarray]) -> tuple[float, float]:
    means, weights = [], []
    for x in per_chain:
        n = x.shape[0]
        nb = min(N_BATCHES, n)
        for part in np.array_split(x, nb) if nb else []:
            means.append(part.mean())
            weights.append(part.shape[0])
    means = np.asarray(means)
    w = np.asarray(weights, dtype=float)
    mean = float(np.dot(w, means) / w.sum())
    if means.shape[0] < 2:
        return mean, math.inf
    # weighted batch-means variance of the overall mean
    dev = means - mean
    var = float(np.dot(w**2, dev**2)) / w.sum() ** 2 * means.shape[0] / (means.shape[0] - 1)
    return mean, math.sqrt(var)


def summarize(cfg: SamplerConfig, per_chain: list[np.ndarray], column: int = 0) -> EstimatorResult:
    xs = [c[:, column] for c in per_chain if c.shape[0]]
    n = int(sum(x.shape[0] for x in xs))
    if n == 0:
        raise ValueError("no samples")
    allx = np.concatenate(xs)
    if cfg.direct:
        se = float(allx.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return EstimatorResult(float(allx.mean()), se, n, cfg.seed)
    mean, se = _batch_stats(xs)
    tau = float(np.mean([integrated_autocorrelation(x) for x in xs]))
    return EstimatorResult(mean, se, n, cfg.seed, tau)


def estimate(cfg: SamplerConfig, observable, threads: int | None = None, **kw) -> list[EstimatorResult]:
    """One estimator per component of a (vector-valued) observable."""
    if cfg.n_samples == 0:
        raise ValueError("n_samples must be positive")
    per_chain = run_chains(cfg, observable, threads, **kw)
    k = next(c.shape[1] for c in per_chain if c.shape[0])
    return [summarize(cfg, per_chain, j) for j in range(k)]


def estimate_event(cfg: SamplerConfig, event, threads: int | None = None, **kw) -> EstimatorResult:
    return estimate(cfg, lambda w: float(bool(event(w))), threads, **kw)[0]


class MomentsObservable:
    """(N, N^2, ..., [N_U >= k for k = 1..k_max])."""

    def __init__(self, crossing, max_power: int, strip_counter=None, k_max: int = 0):
        self.crossing = crossing
        self.max_power = max_power
        self.strip = strip_counter
        self.k_max = k_max

    def __call__(self, omega) -> np.ndarray:
        n = self.crossing(omega)
        out = [float(n) ** j for j in range(1, self.max_power + 1)]
        if self.strip is not None:
            s = self.strip(omega)
            out.extend(float(s >= k) for k in range(1, self.k_max + 1))
        return np.asarray(out)


@dataclass(frozen=True)
class MomentsResult:
    powers: dict  # power -> EstimatorResult
    tail: dict = field(default_factory=dict)  # k -> EstimatorResult for P(N_U >= k)


def estimate_moments_N(
    cfg: SamplerConfig,
    m: int,
    n: int,
    max_power: int = 2,
    *,
    strip: str | None = "U",
    k_max: int = 4,
    restriction: str = "annulus",
    threads: int | None = None,
) -> MomentsResult:
    """E[N_{m,n}^j] for j <= max_power and the tail of the strip count."""
    from .clusters import CrossingCounter, ShortSideCounter

    g = cfg.model.graph
    counter = CrossingCounter(g, m, n, restriction)
    strip_counter = ShortSideCounter(g, strip, m) if strip else None
    obs = MomentsObservable(counter, max_power, strip_counter, k_max if strip else 0)
    res = estimate(cfg, obs, threads)
    powers = {j + 1: res[j] for j in range(max_power)}
    tail = {k: res[max_power + k - 1] for k in range(1, (k_max if strip else 0) + 1)}
    return MomentsResult(powers, tail)


# ---------------------------------------------------------------------------
# scaling


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    std_error: float
    intercept: float

    def band(self, z: float = 1.96) -> tuple[float, float]:
        return self.slope - z * self.std_error, self.slope + z * self.std_error


def loglog_slope(sizes, means, errors=None) -> SlopeFit:
    """Weighted least squares of log(mean) on log(size)."""
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.asarray(means, dtype=float))
    if x.shape[0] < 2:
        raise ValueError("need at least two sizes")
    weighted = errors is not None and bool(np.all(np.asarray(errors) > 0))
    w = np.asarray(means, dtype=float) / np.asarray(errors, dtype=float) if weighted else np.ones_like(x)
    A = np.vstack([x, np.ones_like(x)]).T * w[:, None]
    coef, *_ = np.linalg.lstsq(A, y * w, rcond=None)
    resid = y * w - A @ coef
    dof = x.shape[0] - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    # with known errors, inflate by the reduced chi^2 only when it exceeds 1
    cov = np.linalg.pinv(A.T @ A) * (max(s2, 1.0) if weighted else s2)
    return SlopeFit(float(coef[0]), float(math.sqrt(max(cov[0, 0], 0.0))), float(coef[1]))


@dataclass(frozen=True)
class ScalingRow:
    size: int
    estimate: EstimatorResult


def scaling_experiment(sizes, make_config, make_observable, threads: int | None = None):
    """Estimate ``make_observable(size)`` under ``make_config(size)`` per size.

    Returns ``(rows, fit)``; ``fit`` is None when a log is undefined.
    """
    sizes = list(sizes)
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be increasing")
    rows = [ScalingRow(s, estimate(make_config(s), make_observable(s), threads)[0]) for s in sizes]
    means = np.array([r.estimate.mean for r in rows])
    fit = None
    if len(rows) >= 2 and np.all(means > 0):
        fit = loglog_slope(sizes, means, [r.estimate.std_error for r in rows])
    return rows, fit
