import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from percbk import sigma as S
from percbk.errors import CapacityError, ConditioningError, PreconditionError
from percbk.exact import MonotoneFunction, random_monotone_function
from percbk.lattice import build_rectangle
from percbk.measures import from_weights, product_measure, random_cluster_measure

CYCLE4 = build_rectangle((0, 0), (1, 1))
GRID = build_rectangle((0, 0), (1, 2))


def joint_oracle(mu, p):
    """Joint table built with explicit loops from the defining conditionals."""
    n = mu.n
    probs = mu.probs
    out = np.zeros((1 << n, 1 << n))
    for w in range(1 << n):
        hs = []
        for i in range(n):
            if (w >> i) & 1:
                other = w & ~(1 << i)
                cond = probs[w] / (probs[w] + probs[other])
                hs.append(p / cond)
            else:
                hs.append(0.0)
        for s in range(1 << n):
            t = probs[w]
            for i in range(n):
                t *= hs[i] if (s >> i) & 1 else 1 - hs[i]
            out[w, s] = t
    return out


def sigma_bit(n, i):
    return ((np.arange(1 << n) >> i) & 1).astype(float)


# ---------------------------------------------------------------------------
# construction


def test_single_edge_hand_values():
    J = S.build_sigma_joint(product_measure(1, 0.5))
    assert J.p == 0.25
    assert J.h[0].tolist() == [0.0, 0.5]
    assert J.sigma_expect([0, 1]) == pytest.approx(0.25, abs=1e-15)
    assert np.allclose(J.joint, [[0.5, 0.0], [0.25, 0.25]], atol=1e-15)
    assert S.check_p1(J)


@pytest.mark.parametrize("mu", [
    product_measure(3, 0.3),
    random_cluster_measure(CYCLE4, 0.5, 2.0),
    random_cluster_measure(GRID, 0.4, 4.0),
])
def test_joint_matches_oracle(mu):
    J = S.build_sigma_joint(mu)
    assert np.allclose(J.joint, joint_oracle(mu, J.p), atol=1e-15)
    assert S.marginal_gap(J) < 1e-14
    assert np.allclose(J.sigma_means(), J.p, atol=1e-14)
    assert np.all((J.h >= 0) & (J.h <= 1))
    for i in range(mu.n):
        assert S.independence_gap(J, i) < 1e-14


def test_construction_errors():
    degenerate = from_weights([1.0, 0.0, 1.0, 1.0])
    with pytest.raises(PreconditionError):
        S.build_sigma_joint(degenerate)
    with pytest.raises(ValueError):
        S.build_sigma_joint(product_measure(2, 0.5), p=0.3)
    big = S.build_sigma_joint(product_measure(11, 0.5))
    with pytest.raises(CapacityError):
        big.kernel


def test_p1_negative_control():
    J = S.build_sigma_joint(product_measure(2, 0.5))
    h = J.h.copy()
    h[0, 0] = 0.1
    assert not S.check_p1(J.with_conditionals(h))


# ---------------------------------------------------------------------------
# P2 and the gradient identity


def test_p2_single_edge():
    J = S.build_sigma_joint(product_measure(1, 0.5))
    res = S.check_p2(J, MonotoneFunction.from_table([0, 1]))
    f1, f0 = S.conditional_means(J, MonotoneFunction.from_table([0, 1]))
    assert (f1[0], f0[0]) == pytest.approx((1.0, 1 / 3), abs=1e-15)
    assert res.gaps[0] == pytest.approx(2 / 3, abs=1e-15)
    assert 0.75 * res.gaps[0] == pytest.approx(0.5, abs=1e-15)
    assert res.holds and abs(res.identity_errors[0]) < 1e-15


def test_p2_constant():
    J = S.build_sigma_joint(random_cluster_measure(CYCLE4, 0.5, 2.0))
    res = S.check_p2(J, MonotoneFunction.from_table(np.full(16, 2.5)))
    assert res.holds and np.allclose(res.gaps, 0, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.2, 0.8), st.sampled_from([1.0, 2.0, 4.0]))
def test_p2_random_functions(seed, p, q):
    mu = random_cluster_measure(CYCLE4, p, q)
    J = S.build_sigma_joint(mu)
    f = random_monotone_function(4, seed)
    res = S.check_p2(J, f)
    assert res.holds
    joint = joint_oracle(mu, J.p)
    for i in range(4):
        s = sigma_bit(4, i)
        f1 = (f.values @ joint @ s) / (joint @ s).sum()
        f0 = (f.values @ joint @ (1 - s)) / (joint @ (1 - s)).sum()
        assert res.gaps[i] == pytest.approx(f1 - f0, abs=1e-12)


# ---------------------------------------------------------------------------
# P3, domination and the Gram matrix


def test_p3_examples():
    J = S.build_sigma_joint(product_measure(2, 0.5))
    flat = S.check_p3(J, np.ones(4), 0)
    assert flat.holds and abs(flat.covariance) < 1e-15
    indep = S.check_p3(J, sigma_bit(2, 1), 0)
    assert abs(indep.covariance) < 1e-15
    with pytest.raises(ValueError):
        S.check_p3(J, sigma_bit(2, 0), 0)


def test_p3_cycle_pairs():
    mu = random_cluster_measure(CYCLE4, 0.5, 2.0)
    J = S.build_sigma_joint(mu)
    joint = joint_oracle(mu, J.p)
    for i in range(4):
        for j in range(4):
            if i == j:
                continue
            res = S.check_p3(J, sigma_bit(4, j), i)
            assert res.holds
            a, b = sigma_bit(4, i), sigma_bit(4, j)
            cov = joint.sum(axis=0) @ (a * b) - (joint.sum(axis=0) @ a) * (joint.sum(axis=0) @ b)
            assert res.covariance == pytest.approx(cov, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 3))
def test_p3_random_functions_of_the_rest(seed, i):
    J = S.build_sigma_joint(random_cluster_measure(CYCLE4, 0.5, 2.0))
    base = random_monotone_function(4, seed).values
    idx = np.arange(16)
    f = base[idx & ~(1 << i)]  # drop the dependence on sigma_i
    assert S.check_p3(J, f, i).holds


def test_domination_examples():
    mu = random_cluster_measure(CYCLE4, 0.5, 2.0)
    J = S.build_sigma_joint(mu)
    rest = lambda i: sum(sigma_bit(4, j) for j in range(4) if j != i)
    for i in range(4):
        for c in range(16):
            if (c >> i) & 1:
                continue
            hi = [(c | (1 << i)) >> k & 1 for k in range(4)]
            lo = [c >> k & 1 for k in range(4)]
            assert S.check_domination_claim(J, [i], hi, lo, rest(i)).holds
            same = S.check_domination_claim(J, [i], lo, lo, rest(i))
            assert same.upper == same.lower
            flat = S.check_domination_claim(J, [i], hi, lo, np.ones(16))
            assert flat.upper == pytest.approx(flat.lower, abs=1e-15)


def test_domination_zero_probability():
    mu = from_weights([1.0, 1.0, 0.0, 1.0])
    J = S.SigmaJoint(mu, 0.1, np.zeros((2, 4)))
    with pytest.raises(ConditioningError):
        S.check_domination_claim(J, [0], [1, 1], [0, 1], sigma_bit(2, 1))


def test_gram_and_p4_examples():
    J1 = S.build_sigma_joint(product_measure(1, 0.5))
    r1 = S.check_p4(J1)
    assert r1.conditional_variances[0] == pytest.approx(1 / 8, abs=1e-15)
    assert r1.conditional_variances[0] == pytest.approx(J1.p / 2, abs=1e-15) and r1.holds
    J2 = S.build_sigma_joint(product_measure(2, 0.5))
    assert np.allclose(S.sigma_gram(J2), J2.p * (1 - J2.p) * np.eye(2), atol=1e-15)
    assert S.check_p4(J2).free is True
    Jc = S.build_sigma_joint(random_cluster_measure(CYCLE4, 0.5, 2.0))
    r = S.check_p4(Jc)
    assert r.holds and r.min_eigenvalue > 0


@pytest.mark.parametrize("p,q", [(0.2, 1.5), (0.5, 2.0), (0.8, 4.0)])
def test_gram_matches_oracle_and_has_nonpositive_offdiagonal(p, q):
    mu = random_cluster_measure(GRID, p, q)
    J = S.build_sigma_joint(mu)
    marg = joint_oracle(mu, J.p).sum(axis=0)
    n = mu.n
    bits = np.stack([sigma_bit(n, i) for i in range(n)]) - J.p
    gram = (bits * marg) @ bits.T
    G = S.sigma_gram(J)
    assert np.allclose(G, gram, atol=1e-13)
    off = G[~np.eye(n, dtype=bool)]
    assert np.all(off <= 1e-12)


def test_negative_association_general_form():
    J = S.build_sigma_joint(random_cluster_measure(CYCLE4, 0.5, 2.0))
    f = sigma_bit(4, 0) * sigma_bit(4, 1)
    g = sigma_bit(4, 2) + sigma_bit(4, 3)
    assert S.negative_association_gap(J, f, g) <= 1e-12
