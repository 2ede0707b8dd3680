"""Obtuse cones in finite-dimensional inner-product spaces.

A family is described by its Gram matrix; explicit coordinates are optional.
Targets are described by their inner products with the family, so the same
code serves coordinate vectors and the L2 family extracted from the sigma
field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalError, PreconditionError
from .exact import MonotoneFunction
from .sigma import SigmaJoint, conditional_means, sigma_gram

COND_LIMIT = 1e12
UNIT_TOL = 1e-12
LEMMA_TOL = 1e-9
STEP_TOL = 1e-12
EMPTY_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class VectorFamily:
    gram: np.ndarray
    vectors: np.ndarray | None = field(default=None, repr=False)  # rows are f_1..f_n

    @classmethod
    def from_vectors(cls, vectors) -> "VectorFamily":
        V = np.atleast_2d(np.asarray(vectors, dtype=float))
        return cls(V @ V.T, V)

    @property
    def n(self) -> int:
        return self.gram.shape[0]

    def inner(self, f) -> np.ndarray:
        if self.vectors is None:
            raise ValueError("family has no coordinates; pass inner products instead")
        return self.vectors @ np.asarray(f, dtype=float)

    def obtuse_violation(self, tol: float = UNIT_TOL):
        """None for a normalized obtuse family, else a description."""
        d = np.diag(self.gram)
        bad = np.flatnonzero(np.abs(d - 1.0) > tol)
        if bad.size:
            return f"f_{bad[0]} has squared norm {d[bad[0]]}"
        off = self.gram - np.diag(d)
        if np.any(off > tol):
            j, k = np.argwhere(off > tol)[0]
            return f"<f_{j}, f_{k}> = {off[j, k]} > 0"
        return None

    def is_normalized_obtuse(self, tol: float = UNIT_TOL) -> bool:
        return self.obtuse_violation(tol) is None and self.condition() < COND_LIMIT

    def condition(self) -> float:
        if self.n == 0:
            return 1.0
        s = np.linalg.eigvalsh(self.gram)
        return np.inf if s[0] <= 0 else float(s[-1] / s[0])


def _products(B: VectorFamily, f, products) -> np.ndarray:
    if products is not None:
        return np.asarray(products, dtype=float)
    return B.inner(f)


def solve_coefficients(B: VectorFamily, f=None, *, products=None) -> np.ndarray:
    """lambda with G lambda = (<f, f_j>)_j, i.e. the coefficients of the
    orthogonal projection of f onto span(B)."""
    b = _products(B, f, products)
    if B.n == 0:
        return np.zeros(0)
    w, U = scipy.linalg.eigh(B.gram)
    if w[0] <= 0 or w[-1] / w[0] > COND_LIMIT:
        cond = np.inf if w[0] <= 0 else w[-1] / w[0]
        raise NumericalError(f"Gram matrix condition number {cond:.3g} exceeds {COND_LIMIT:g}")
    return U @ ((U.T @ b) / w)


def projection_residual(B: VectorFamily, f, lam) -> float:
    """||f - sum lambda_i f_i|| for a family with coordinates."""
    return float(np.linalg.norm(np.asarray(f, dtype=float) - lam @ B.vectors))


@dataclass(frozen=True)
class ConeCheck:
    holds: bool
    coefficients: np.ndarray
    products: np.ndarray

    @property
    def slack(self) -> np.ndarray:
        return self.coefficients - self.products


def _require_obtuse(B: VectorFamily):
    why = B.obtuse_violation()
    if why is not None:
        raise PreconditionError(f"not a normalized obtuse family: {why}")


def verify_obtuse_cone_lemma(B: VectorFamily, f=None, *, products=None, tol: float = LEMMA_TOL) -> ConeCheck:
    """lambda_i >= <f, f_i> and lambda_i >= 0 whenever all <f, f_i> >= 0."""
    _require_obtuse(B)
    b = _products(B, f, products)
    neg = np.flatnonzero(b < -UNIT_TOL)
    if neg.size:
        raise PreconditionError(f"<f, f_{neg[0]}> = {b[neg[0]]} is negative", int(neg[0]))
    lam = solve_coefficients(B, products=b)
    holds = bool(np.all(lam >= b - tol) and np.all(lam >= -tol))
    return ConeCheck(holds, lam, b)


@dataclass(frozen=True, eq=False)
class ProjectionStep:
    family: VectorFamily
    products: np.ndarray
    target: np.ndarray | None
    obtuse: bool
    dominates: bool

    @property
    def holds(self) -> bool:
        return self.obtuse and self.dominates


def projection_step(B: VectorFamily, f=None, *, products=None) -> ProjectionStep:
    """Remove the f_1 direction.

    F_i = (f_i - <f_i, f_1> f_1) / sqrt(1 - <f_1, f_i>^2) for i >= 2 and
    F = f - <f, f_1> f_1.  Checks <F_i, F_j> <= 0 for i != j and
    <F, F_i> >= <f, f_i> >= 0.
    """
    _require_obtuse(B)
    if B.n < 2:
        raise ValueError("projection needs at least two vectors")
    b = _products(B, f, products)
    g1 = B.gram[0, 1:]
    if np.any(np.abs(g1) >= 1.0):
        raise PreconditionError("f_1 is parallel to another family member")
    s = np.sqrt(1.0 - g1**2)
    G = B.gram[1:, 1:]
    new_gram = (G - np.outer(g1, g1)) / np.outer(s, s)
    new_products = (b[1:] - b[0] * g1) / s
    vectors = target = None
    if B.vectors is not None:
        vectors = (B.vectors[1:] - g1[:, None] * B.vectors[0]) / s[:, None]
        new_gram = vectors @ vectors.T
        if f is not None:
            target = np.asarray(f, dtype=float) - b[0] * B.vectors[0]
            new_products = vectors @ target
    off = new_gram - np.diag(np.diag(new_gram))
    obtuse = bool(np.all(off <= STEP_TOL))
    dominates = bool(np.all(new_products >= b[1:] - STEP_TOL) and np.all(b[1:] >= -STEP_TOL))
    return ProjectionStep(VectorFamily(new_gram, vectors), new_products, target, obtuse, dominates)


def random_obtuse_gram(n: int, seed, spread: float = 0.9) -> np.ndarray:
    """Unit diagonal, off-diagonals uniform in [-spread/(n-1), 0]."""
    if n < 1:
        raise ValueError("dimension must be at least 1")
    rng = np.random.default_rng(seed)
    G = np.eye(n)
    if n > 1:
        iu = np.triu_indices(n, 1)
        vals = -rng.uniform(0.0, spread / (n - 1), size=iu[0].size)
        G[iu] = vals
        G[iu[1], iu[0]] = vals
    return G


def random_obtuse_basis(n: int, seed, spread: float = 0.9) -> VectorFamily:
    """Normalized obtuse basis of R^n; rows of a Cholesky factor of a
    diagonally dominant random Gram matrix."""
    G = random_obtuse_gram(n, seed, spread)
    V = np.linalg.cholesky(G)
    return VectorFamily(V @ V.T, V)


def random_cone_target(B: VectorFamily, seed, max_tries: int = 100, shape: float = 4.0) -> np.ndarray:
    """Random non-negative combination of the family with <f, f_i> >= 0.

    Weights are Gamma(``shape``) and are redrawn until the hypothesis holds,
    at most ``max_tries`` times.  Exponential weights (shape 1) almost
    never pass in dimension 10.
    """
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        c = rng.gamma(shape, size=B.n)
        f = c @ B.vectors
        if np.all(B.inner(f) >= 0):
            return f
    raise PreconditionError(f"no admissible target after {max_tries} draws")


def random_dual_target(B: VectorFamily, seed) -> np.ndarray:
    """Target with prescribed random non-negative inner products.

    Covers the whole hypothesis region, including targets near its
    boundary that non-negative combinations rarely produce.
    """
    rng = np.random.default_rng(seed)
    b = rng.exponential(size=B.n) * (rng.random(B.n) < 0.8)
    return solve_coefficients(B, products=b) @ B.vectors


@dataclass(frozen=True, eq=False)
class ProjectionFamily:
    """Normalized f_i(sigma_i), i in ``index``, and the target's inner products."""

    family: VectorFamily
    products: np.ndarray
    norms: np.ndarray
    index: np.ndarray


def extract_projection_family(J: SigmaJoint, f: MonotoneFunction) -> ProjectionFamily:
    """The L2(P-hat) family behind the reverse Poincare proof.

    With ``f`` centred, f_i(sigma_i) = E-hat[f | sigma_i] = d_i (sigma_i - p)
    where d_i = f_i(1) - f_i(0).  Inner products are exact sums under the
    joint law: <f_i, f_j> = d_i d_j Cov(sigma_i, sigma_j) and
    <f, f_i> = d_i E-hat[f(omega) (sigma_i - p)].
    """
    f = f.checked().oriented()
    centred = f.values - J.mu.expect(f.values)
    f1, f0 = conditional_means(J, MonotoneFunction(centred, f.n, 1, True))
    d = f1 - f0
    cov = sigma_gram(J)
    sq = d**2 * np.diag(cov)
    index = np.flatnonzero(sq > EMPTY_TOL)
    d = d[index]
    norms = np.sqrt(sq[index])
    gram = np.outer(d, d) * cov[np.ix_(index, index)] / np.outer(norms, norms)
    np.fill_diagonal(gram, 1.0)
    # E-hat[f (sigma_i - p)] = sum_omega mu f (h_i - p); the p term vanishes as f is centred
    products = d * (J.h[index] @ (J.mu.probs * centred)) / norms
    return ProjectionFamily(VectorFamily(gram), products, norms, index)


@dataclass(frozen=True)
class GammaCertificate:
    holds: bool
    gamma: np.ndarray
    index: np.ndarray


def certify_gamma(J: SigmaJoint, f: MonotoneFunction, tol: float = LEMMA_TOL) -> GammaCertificate:
    """gamma_i >= 1 for the projection of f onto span{f_i(sigma_i)}."""
    fam = extract_projection_family(J, f)
    if fam.index.size == 0:
        return GammaCertificate(True, np.zeros(0), fam.index)
    check = verify_obtuse_cone_lemma(fam.family, products=fam.products)
    gamma = check.coefficients / fam.norms
    return GammaCertificate(check.holds and bool(np.all(gamma >= 1.0 - tol)), gamma, fam.index)
