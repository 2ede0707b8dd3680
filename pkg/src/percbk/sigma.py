"""The auxiliary field sigma coupled to omega, and checks of its properties.

Given omega, the sigma_i are independent with
``P(sigma_i = 1 | omega) = p * omega_i / P(omega_i = 1 | omega^i)``, where
``p = c_FE / 2`` unless overridden.  Quantities that only involve sigma
through one or two coordinates are summed analytically against mu; checks
on general functions of sigma use the ``2^n x 2^n`` kernel ``P(sigma | omega)``
and are limited to ``JOINT_CAP`` edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .configuration import as_state
from .errors import CapacityError, ConditioningError, PreconditionError
from .exact import MonotoneFunction
from .measures import ExplicitMeasure, all_configurations, bit_table, finite_energy_constant

JOINT_CAP = 10
TOL = 1e-12
FREE_EIG_THRESHOLD = 1e-10


@dataclass(frozen=True, eq=False)
class SigmaJoint:
    mu: ExplicitMeasure
    p: float
    h: np.ndarray = field(repr=False)  # (n, 2^n): P(sigma_i = 1 | omega)

    @property
    def n(self) -> int:
        return self.mu.n

    @cached_property
    def kernel(self) -> np.ndarray:
        """K[omega, sigma] = P(sigma | omega)."""
        if self.n > JOINT_CAP:
            raise CapacityError("edge count for joint queries", self.n, JOINT_CAP)
        bits = bit_table(self.n).astype(bool)  # rows: sigma
        K = np.ones((1 << self.n, 1 << self.n))
        for i in range(self.n):
            hi = self.h[i][:, None]
            K *= np.where(bits[None, :, i], hi, 1.0 - hi)
        return K

    @cached_property
    def joint(self) -> np.ndarray:
        return self.mu.probs[:, None] * self.kernel

    def sigma_expect(self, g) -> float:
        """E-hat[g(sigma)] for a table g over sigma configurations."""
        return float(self.mu.probs @ (self.kernel @ np.asarray(g, dtype=float)))

    def sigma_means(self) -> np.ndarray:
        return self.h @ self.mu.probs

    def with_conditionals(self, h) -> "SigmaJoint":
        """Copy with replaced success probabilities (negative controls)."""
        return SigmaJoint(self.mu, self.p, np.asarray(h, dtype=float))


def build_sigma_joint(mu: ExplicitMeasure, p: float | None = None) -> SigmaJoint:
    c_fe = finite_energy_constant(mu)
    if c_fe <= 0:
        raise PreconditionError("the sigma field needs a positive finite-energy constant")
    if p is None:
        p = c_fe / 2
    elif not 0 < p <= c_fe / 2:
        raise ValueError(f"p must lie in (0, c_FE/2] = (0, {c_fe / 2}], got {p}")
    idx = all_configurations(mu.n)
    h = np.empty((mu.n, 1 << mu.n))
    for i in range(mu.n):
        is_open = ((idx >> i) & 1).astype(float)
        h[i] = p * is_open / mu.conditional_column(i)
    return SigmaJoint(mu, float(p), h)


def check_p1(J: SigmaJoint) -> bool:
    """No joint mass on {sigma_i = 1, omega_i = 0}."""
    idx = all_configurations(J.n)
    bad = (idx[None, :] & ~idx[:, None]) != 0  # [omega, sigma]
    return bool(np.all(J.joint[bad] == 0.0))


@dataclass(frozen=True)
class P2Result:
    holds: bool
    gaps: np.ndarray
    identity_errors: np.ndarray


def conditional_means(J: SigmaJoint, f: MonotoneFunction) -> tuple[np.ndarray, np.ndarray]:
    """(f_i(1), f_i(0)) with f_i(s) = E-hat[f(omega) | sigma_i = s]."""
    w = J.mu.probs
    fv = f.values
    p1 = J.h @ w
    f1 = (J.h * fv) @ w / p1
    f0 = ((1.0 - J.h) * fv) @ w / (1.0 - p1)
    return f1, f0


def check_p2(J: SigmaJoint, f: MonotoneFunction) -> P2Result:
    f = f.checked().oriented()
    f1, f0 = conditional_means(J, f)
    gaps = f1 - f0
    idx = all_configurations(J.n)
    mean = J.mu.expect(f.values)
    raised = np.array([J.mu.expect(f.values[idx | (1 << i)]) for i in range(J.n)]) - mean
    errors = (1.0 - J.p) * gaps - raised
    scale = max(1.0, float(np.max(np.abs(f.values))))
    holds = bool(np.all(gaps >= -TOL * scale) and np.all(np.abs(errors) <= TOL * scale))
    return P2Result(holds, gaps, errors)


@dataclass(frozen=True)
class CovarianceResult:
    holds: bool
    lhs: float
    rhs: float

    @property
    def covariance(self) -> float:
        return self.lhs - self.rhs


def _depends_on(g: np.ndarray, n: int, i: int) -> bool:
    idx = all_configurations(n)
    lo = idx[(idx >> i) & 1 == 0]
    return bool(np.any(g[lo] != g[lo | (1 << i)]))


def negative_association_gap(J: SigmaJoint, f, g) -> float:
    """E-hat[f g] - E-hat[f] E-hat[g] for arbitrary tables over sigma."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    return J.sigma_expect(f * g) - J.sigma_expect(f) * J.sigma_expect(g)


def check_p3(J: SigmaJoint, f, i: int) -> CovarianceResult:
    """E-hat[f(sigma^i) sigma_i] <= E-hat[f(sigma^i)] E-hat[sigma_i].

    ``f`` is a table over sigma configurations that must ignore bit ``i``.
    """
    f = np.asarray(getattr(f, "values", f), dtype=float)
    if _depends_on(f, J.n, i):
        raise ValueError(f"f must not depend on sigma_{i}")
    s_i = ((all_configurations(J.n) >> i) & 1).astype(float)
    lhs = J.sigma_expect(f * s_i)
    rhs = J.sigma_expect(f) * J.sigma_expect(s_i)
    return CovarianceResult(lhs - rhs <= TOL * max(1.0, abs(lhs)), lhs, rhs)


@dataclass(frozen=True)
class DominationResult:
    holds: bool
    upper: float
    lower: float


def check_domination_claim(J: SigmaJoint, I, omega_hi, omega_lo, f) -> DominationResult:
    """E-hat[f(sigma^I) | omega_hi] <= E-hat[f(sigma^I) | omega_lo].

    ``omega_hi`` dominates ``omega_lo`` on ``I`` and they agree elsewhere.
    """
    I = [int(i) for i in I]
    a = as_state(omega_hi, J.n).astype(np.int64)
    b = as_state(omega_lo, J.n).astype(np.int64)
    off = np.ones(J.n, dtype=bool)
    off[I] = False
    if np.any(a[off] != b[off]) or np.any(a < b):
        raise ValueError("configurations must agree off I and be ordered on I")
    f = np.asarray(getattr(f, "values", f), dtype=float)
    for i in I:
        if _depends_on(f, J.n, i):
            raise ValueError(f"f must not depend on sigma_{i}")
    ia = int(a @ (1 << np.arange(J.n)))
    ib = int(b @ (1 << np.arange(J.n)))
    for c in (ia, ib):
        if J.mu.probs[c] == 0.0:
            raise ConditioningError(f"conditioning configuration {c:#x} has zero probability", c)
    upper = float(J.kernel[ia] @ f)
    lower = float(J.kernel[ib] @ f)
    return DominationResult(upper <= lower + TOL * max(1.0, abs(lower)), upper, lower)


def sigma_gram(J: SigmaJoint) -> np.ndarray:
    """G_ij = E-hat[(sigma_i - p)(sigma_j - p)], using conditional independence."""
    w = J.mu.probs
    second = (J.h * w) @ J.h.T
    first = J.h @ w
    np.fill_diagonal(second, first)
    return second - J.p * first[:, None] - J.p * first[None, :] + J.p**2


@dataclass(frozen=True)
class P4Result:
    free: bool | None  # None: smallest eigenvalue below the threshold
    min_eigenvalue: float
    conditional_variances: np.ndarray
    holds: bool

    @property
    def min_conditional_variance(self) -> float:
        return float(np.min(self.conditional_variances)) if self.conditional_variances.size else np.inf


def check_p4(J: SigmaJoint) -> P4Result:
    """Linear independence of sigma_i - p, and E-hat[h_i(1 - h_i)] >= p/2."""
    gram = sigma_gram(J)
    lam = float(np.linalg.eigvalsh(gram)[0]) if J.n else np.inf
    free = True if lam > FREE_EIG_THRESHOLD else None
    cv = (J.h * (1.0 - J.h)) @ J.mu.probs
    ok = bool(np.all(cv >= J.p / 2 - TOL))
    return P4Result(free, lam, cv, ok and free is True)


def marginal_gap(J: SigmaJoint) -> float:
    """max |sum_sigma joint(omega, sigma) - mu(omega)|."""
    return float(np.max(np.abs(J.joint.sum(axis=1) - J.mu.probs)))


def independence_gap(J: SigmaJoint, i: int) -> float:
    """max_x |P(sigma_i = 1, omega^i = x) - p P(omega^i = x)|."""
    idx = all_configurations(J.n)
    bit = 1 << i
    w = J.mu.probs
    lo = idx[(idx & bit) == 0]
    joint_one = w[lo] * J.h[i][lo] + w[lo | bit] * J.h[i][lo | bit]
    marg = w[lo] + w[lo | bit]
    return float(np.max(np.abs(joint_one - J.p * marg)))
