"""Exhaustive verification of variance / gradient inequalities.

Functions and events are evaluation tables over all 2^n configurations.
Every inequality check returns an :class:`InequalityReport`; the tolerance
is absolute-plus-relative, ``TOL * max(1, |lhs|)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CapacityError, PreconditionError
from .measures import (
    ExplicitMeasure,
    all_configurations,
    bit_table,
    check_strong_fkg,
    finite_energy_constant,
    from_log_weights,
)

TOL = 1e-12
MAX_TABLE_EDGES = 20


def _flip_violation(values: np.ndarray, n: int, direction: int = 1, tol: float = 0.0):
    """First (i, index) where flipping bit i upward breaks monotonicity."""
    idx = all_configurations(n)
    for i in range(n):
        bit = 1 << i
        lo = idx[(idx & bit) == 0]
        step = direction * (values[lo | bit] - values[lo])
        bad = step < -tol
        if bad.any():
            return i, int(lo[np.argmax(bad)])
    return None


def is_monotone(values, n: int, direction: int = 1) -> bool:
    """Single-bit-flip test: grad_i f >= 0 (or <= 0) everywhere."""
    return _flip_violation(np.asarray(values, dtype=float), n, direction) is None


def is_monotone_pairwise(values, n: int, direction: int = 1) -> bool:
    """Oracle: compare f on every comparable pair (n <= 10)."""
    if n > 10:
        raise CapacityError("edge count", n, 10)
    v = np.asarray(values, dtype=float)
    idx = all_configurations(n)
    below = (idx[:, None] & ~idx[None, :]) == 0
    return not np.any(below & (direction * (v[None, :] - v[:, None]) < 0))


@dataclass(frozen=True, eq=False)
class MonotoneFunction:
    """Table of f over all configurations; ``direction`` is +1 or -1."""

    values: np.ndarray
    n: int
    direction: int = 1
    verified: bool = False

    @classmethod
    def from_table(cls, values, n: int | None = None, direction: int = 1, verify: bool = True):
        v = np.asarray(values, dtype=float)
        if n is None:
            n = int(v.shape[0]).bit_length() - 1
        if v.shape != (1 << n,):
            raise ValueError(f"table must have length 2^{n}")
        obj = cls(v, n, direction, False)
        return obj.checked() if verify else obj

    @classmethod
    def from_callback(cls, fn, n: int, direction: int = 1, verify: bool = True):
        """Evaluate ``fn(bits)`` on the ``(2^n, n)`` state matrix once."""
        if n > MAX_TABLE_EDGES:
            raise CapacityError("edge count", n, MAX_TABLE_EDGES)
        return cls.from_table(np.asarray(fn(bit_table(n)), dtype=float), n, direction, verify)

    def checked(self):
        if self.verified:
            return self
        bad = _flip_violation(self.values, self.n, self.direction)
        if bad is not None:
            kind = "non-decreasing" if self.direction > 0 else "non-increasing"
            raise PreconditionError(f"function is not {kind}: flipping edge {bad[0]} at {bad[1]:#x}", bad)
        return replace(self, verified=True)

    def oriented(self) -> "MonotoneFunction":
        """Non-decreasing version (negated when decreasing)."""
        if self.direction > 0:
            return self
        return replace(self, values=-self.values, direction=1)

    def __neg__(self):
        return replace(self, values=-self.values, direction=-self.direction)

    def gradient(self, i: int) -> np.ndarray:
        """grad_i f at every configuration."""
        idx = all_configurations(self.n)
        bit = 1 << i
        return self.values[idx | bit] - self.values[idx & ~bit]


@dataclass(frozen=True, eq=False)
class MonotoneEvent(MonotoneFunction):
    label: str = ""

    @classmethod
    def from_mask(cls, mask, n: int | None = None, verify: bool = True, label: str = ""):
        m = np.asarray(mask, dtype=bool)
        if n is None:
            n = int(m.shape[0]).bit_length() - 1
        obj = cls(m.astype(float), n, 1, False, label)
        return obj.checked() if verify else obj

    @property
    def mask(self) -> np.ndarray:
        return self.values > 0.5


@dataclass(frozen=True, eq=False)
class InequalityReport:
    lhs: float
    rhs: float
    constant: float
    terms: np.ndarray = field(repr=False)
    sense: str = ">="
    label: str = ""

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs

    @property
    def tolerance(self) -> float:
        return TOL * max(1.0, abs(self.lhs))

    @property
    def holds(self) -> bool:
        if self.sense == ">=":
            return self.lhs >= self.rhs - self.tolerance
        return self.lhs <= self.rhs + self.tolerance

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "constant": self.constant,
            "slack": self.slack,
            "sense": self.sense,
            "holds": self.holds,
            "label": self.label,
        }


def _check_table(mu: ExplicitMeasure, f: MonotoneFunction):
    if f.n != mu.n:
        raise ValueError(f"function lives on {f.n} edges, measure on {mu.n}")


def expectation(mu: ExplicitMeasure, f: MonotoneFunction) -> float:
    _check_table(mu, f)
    return mu.expect(f.values)


def variance(mu: ExplicitMeasure, f: MonotoneFunction) -> float:
    """Two-pass variance under mu, shifted so constant tables give exactly 0."""
    _check_table(mu, f)
    v = f.values - f.values[0]
    mean = mu.expect(v)
    return max(0.0, mu.expect((v - mean) ** 2))


def gradient_expectation(mu: ExplicitMeasure, f: MonotoneFunction, i: int) -> float:
    """E[f(omega^i x 1) - f(omega^i x 0)]."""
    _check_table(mu, f)
    return mu.expect(f.gradient(i))


def gradient_expectations(mu: ExplicitMeasure, f: MonotoneFunction) -> np.ndarray:
    return np.array([gradient_expectation(mu, f, i) for i in range(mu.n)])


def gradient_identity_gap(mu: ExplicitMeasure, f: MonotoneFunction, i: int) -> float:
    """E[grad_i f ; omega_i = 0] - (E[f(omega^i x 1)] - E[f]); exactly zero."""
    idx = all_configurations(mu.n)
    bit = 1 << i
    closed = (idx & bit) == 0
    lhs = mu.expect(np.where(closed, f.gradient(i), 0.0))
    rhs = mu.expect(f.values[idx | bit]) - mu.expect(f.values)
    return lhs - rhs


def pivotal_probability(mu: ExplicitMeasure, A: MonotoneEvent, i: int) -> float:
    """P(omega^i x 1 in A, omega^i x 0 not in A)."""
    _check_table(mu, A)
    idx = all_configurations(mu.n)
    bit = 1 << i
    m = A.mask
    return mu.expect((m[idx | bit] & ~m[idx & ~bit]).astype(float))


def pivotal_probabilities(mu: ExplicitMeasure, A: MonotoneEvent) -> np.ndarray:
    return np.array([pivotal_probability(mu, A, i) for i in range(mu.n)])


def c_p(c_fe: float) -> float:
    """Reverse Poincare constant c_FE^3 / (2 - c_FE)^2."""
    if not 0.0 < c_fe <= 0.5:
        raise ValueError(f"finite-energy constant must lie in (0, 1/2], got {c_fe}")
    return c_fe**3 / (2.0 - c_fe) ** 2


def _model_constant(mu: ExplicitMeasure, force: bool) -> float:
    fkg = mu.__dict__.get("_fkg")
    if fkg is None:
        fkg = check_strong_fkg(mu)
        mu.__dict__["_fkg"] = fkg
    if not fkg.holds and not force:
        raise PreconditionError("measure fails the strong FKG condition", fkg.witness)
    c_fe = mu.__dict__.get("_c_fe")
    if c_fe is None:
        c_fe = finite_energy_constant(mu)
        mu.__dict__["_c_fe"] = c_fe
    if c_fe <= 0:
        raise PreconditionError("measure has no finite-energy constant")
    return c_p(c_fe)


def verify_reverse_poincare(mu: ExplicitMeasure, f: MonotoneFunction, *, force: bool = False) -> InequalityReport:
    """Var(f) >= c_P * sum_i E[grad_i f]^2.

    ``force`` skips the FKG precondition (the inequality may then fail).
    """
    _check_table(mu, f)
    f = f.checked().oriented()
    const = _model_constant(mu, force)
    grads = gradient_expectations(mu, f)
    return InequalityReport(variance(mu, f), const * float(np.sum(grads**2)), const, grads, ">=", "reverse-poincare")


def verify_event_form(mu: ExplicitMeasure, A: MonotoneEvent, *, force: bool = False) -> InequalityReport:
    """P(A)(1 - P(A)) >= c_P * sum_i P(Piv_i(A))^2."""
    _check_table(mu, A)
    A = A.checked()
    const = _model_constant(mu, force)
    pa = mu.expect(A.mask.astype(float))
    piv = pivotal_probabilities(mu, A)
    return InequalityReport(pa * (1 - pa), const * float(np.sum(piv**2)), const, piv, ">=", "event-form")


def verify_direct_poincare(mu: ExplicitMeasure, A: MonotoneEvent) -> InequalityReport:
    """P(A)(1 - P(A)) <= (1/4) sum_i P(Piv_i(A)), product measures only."""
    _check_table(mu, A)
    if not mu.is_product():
        raise PreconditionError("the direct Poincare inequality needs independent edges")
    A = A.checked()
    pa = mu.expect(A.mask.astype(float))
    piv = pivotal_probabilities(mu, A)
    return InequalityReport(pa * (1 - pa), 0.25 * float(np.sum(piv)), 0.25, piv, "<=", "direct-poincare")


def _slice_direction(values: np.ndarray, n: int) -> int:
    if is_monotone(values, n, 1):
        return 1
    if is_monotone(values, n, -1):
        return -1
    return 0


def verify_conditional_form(mu, inner, f, *, n_total: int | None = None, outer=None, force: bool = False):
    """Per outer configuration eta, the reverse Poincare inequality for
    omega -> f(eta x omega) under the conditional law on ``inner`` edges.

    ``mu`` is either an :class:`ExplicitMeasure` on all edges or a callable
    ``eta_state -> ExplicitMeasure`` on the inner edges.  ``f`` is a
    :class:`MonotoneFunction` on all edges or a callable taking a
    ``(K, n_total)`` state matrix.  ``outer`` lists outer configurations as
    ``uint8`` arrays over the outer edges (all of them when omitted).
    Returns ``[(eta_index, report), ...]``.
    """
    inner = np.asarray(inner, dtype=np.int64)
    if isinstance(mu, ExplicitMeasure):
        n_total = mu.n
    elif n_total is None:
        raise ValueError("n_total is required when mu is a conditional-law callable")
    outer_edges = np.setdiff1d(np.arange(n_total), inner)
    k = inner.shape[0]
    if k > MAX_TABLE_EDGES:
        raise CapacityError("inner edge count", k, MAX_TABLE_EDGES)
    if outer is None:
        if outer_edges.shape[0] > 16:
            raise CapacityError("outer edge count for full enumeration", outer_edges.shape[0], 16)
        outer = bit_table(outer_edges.shape[0])
    inner_bits = bit_table(k)
    reports = []
    for t, eta in enumerate(outer):
        eta = np.asarray(eta, dtype=np.uint8)
        states = np.zeros((1 << k, n_total), dtype=np.uint8)
        states[:, inner] = inner_bits
        states[:, outer_edges] = eta
        full_index = (states.astype(np.int64) << np.arange(n_total)).sum(axis=1)
        if isinstance(mu, ExplicitMeasure):
            cond = from_log_weights(mu.log_weights[full_index], {"model": "conditional", "eta": t})
        else:
            cond = mu(eta)
        if isinstance(f, MonotoneFunction):
            vals = f.values[full_index]
        else:
            vals = np.asarray(f(states), dtype=float)
        direction = _slice_direction(vals, k)
        if direction == 0:
            raise PreconditionError(f"slice {t} of f is not monotone in the inner edges", t)
        g = MonotoneFunction(vals, k, direction, True)
        rep = verify_reverse_poincare(cond, g, force=force)
        reports.append((t, replace(rep, label=f"conditional eta={t}")))
    return reports


def random_monotone_event(n: int, seed: int, n_generators: int = 3, density: float = 0.5) -> MonotoneEvent:
    """Union of up-closures of ``n_generators`` random configurations.

    Each generator has every bit set independently with probability
    ``density``; the result is non-decreasing by construction.
    """
    rng = np.random.default_rng(seed)
    gens = rng.random((n_generators, n)) < density
    idx = all_configurations(n)
    mask = np.zeros(1 << n, dtype=bool)
    for row in gens:
        g = int(np.dot(row.astype(np.int64), 1 << np.arange(n, dtype=np.int64))) if n else 0
        mask |= (idx & g) == g
    return MonotoneEvent(mask.astype(float), n, 1, True, f"up-set(seed={seed},r={n_generators})")


def random_monotone_function(n: int, seed: int, n_terms: int = 4, density: float = 0.5) -> MonotoneFunction:
    """Positive combination of random up-set indicators and edge states."""
    rng = np.random.default_rng(seed)
    values = np.zeros(1 << n)
    bits = bit_table(n).astype(float)
    for t in range(n_terms):
        A = random_monotone_event(n, int(rng.integers(2**31)), int(rng.integers(1, 4)), density)
        values += rng.exponential() * A.values
    values += bits @ (rng.random(n) * (rng.random(n) < 0.5))
    return MonotoneFunction(values, n, 1, True)
