import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from percbk import exact as E
from percbk.clusters import CrossingCounter
from percbk.errors import PreconditionError
from percbk.lattice import build_box, build_rectangle, edges_within
from percbk.measures import bernoulli_measure, product_measure, random_cluster_measure

CYCLE4 = build_rectangle((0, 0), (1, 1))
GRID = build_rectangle((0, 0), (1, 2))


def event(mask):
    return E.MonotoneEvent.from_mask(mask)


def brute_pivotal(mu, mask, i):
    """Sum over configurations with bit i cleared, weighting both halves."""
    total = 0.0
    for c in range(1 << mu.n):
        if mask[c | (1 << i)] and not mask[c & ~(1 << i)]:
            total += mu.probs[c]
    return total


# ---------------------------------------------------------------------------
# basic quantities


def test_variance_and_pivotal_examples():
    mu = product_measure(1, 0.5)
    assert E.variance(mu, E.MonotoneFunction.from_table([0, 1])) == pytest.approx(0.25, abs=1e-15)
    mu2 = product_measure(2, 0.3)
    both = event([0, 0, 0, 1])
    assert E.pivotal_probability(mu2, both, 0) == pytest.approx(0.3, abs=1e-15)
    assert E.variance(mu2, E.MonotoneFunction.from_table([2.0] * 4)) == 0.0


def test_c_p_values():
    assert E.c_p(0.5) == pytest.approx(1 / 18, abs=1e-15)
    assert E.c_p(0.4) == pytest.approx(0.025, abs=1e-15)
    assert E.c_p(1e-9) < 1e-26
    p = 0.2
    assert E.c_p(2 * p) == pytest.approx(2 * p**3 / (1 - p) ** 2, rel=1e-14)
    for bad in (0.0, 0.6, -1.0):
        with pytest.raises(ValueError):
            E.c_p(bad)


def test_monotone_check_reports_witness():
    with pytest.raises(PreconditionError) as info:
        E.MonotoneFunction.from_table([1, 0])
    assert info.value.witness[0] == 0
    f = E.MonotoneFunction.from_table([1, 0], direction=-1)
    assert np.array_equal((-f).values, [-1, 0]) and f.oriented().direction == 1


# ---------------------------------------------------------------------------
# reverse Poincare


def test_reverse_poincare_examples():
    mu = bernoulli_measure(build_rectangle((0, 0), (1, 0)), 0.5)
    rep = E.verify_reverse_poincare(mu, E.MonotoneFunction.from_table([0, 1]))
    assert rep.lhs == pytest.approx(0.25, abs=1e-15)
    assert rep.rhs == pytest.approx(1 / 18, abs=1e-15)
    assert rep.holds and rep.sense == ">="
    flat = E.verify_reverse_poincare(mu, E.MonotoneFunction.from_table([3.0, 3.0]))
    assert flat.lhs == 0 and flat.rhs == 0 and flat.holds
    rcm = random_cluster_measure(CYCLE4, 0.5, 2.0)
    count = E.MonotoneFunction.from_table([bin(c).count("1") for c in range(16)])
    assert E.verify_reverse_poincare(rcm, count).holds


def test_event_form_examples():
    mu = product_measure(2, 0.5)
    rep = E.verify_event_form(mu, event([0, 1, 0, 1]))
    assert (rep.lhs, rep.rhs) == pytest.approx((0.25, 1 / 18), abs=1e-15)
    full = E.verify_event_form(mu, event([1, 1, 1, 1]))
    assert full.lhs == 0 and full.rhs == 0 and full.holds
    union = E.verify_event_form(mu, event([0, 1, 1, 1]))
    assert union.lhs == pytest.approx(3 / 16, abs=1e-15)
    assert np.allclose(union.terms, [0.5, 0.5], atol=1e-15)
    assert union.rhs == pytest.approx(1 / 36, abs=1e-15)


def test_direct_poincare_examples():
    mu = product_measure(2, 0.5)
    single = E.verify_direct_poincare(mu, event([0, 1, 0, 1]))
    assert single.lhs == pytest.approx(0.25) and single.rhs == pytest.approx(0.25) and single.holds
    empty = E.verify_direct_poincare(mu, event([0, 0, 0, 0]))
    assert empty.lhs == 0 and empty.rhs == 0
    both = E.verify_direct_poincare(mu, event([0, 0, 0, 1]))
    assert (both.lhs, both.rhs) == pytest.approx((3 / 16, 0.25), abs=1e-15) and both.holds
    with pytest.raises(PreconditionError):
        E.verify_direct_poincare(random_cluster_measure(CYCLE4, 0.5, 2.0), event([0] * 15 + [1]))


def test_fkg_precondition_and_force():
    mu = random_cluster_measure(CYCLE4, 0.5, 0.5)
    f = E.random_monotone_function(4, 1)
    with pytest.raises(PreconditionError):
        E.verify_reverse_poincare(mu, f)
    assert E.verify_reverse_poincare(mu, f, force=True).constant > 0


def test_report_serializes():
    rep = E.verify_event_form(product_measure(2, 0.5), event([0, 1, 1, 1]))
    d = rep.to_dict()
    assert d["holds"] is True and d["slack"] == pytest.approx(3 / 16 - 1 / 36)


# ---------------------------------------------------------------------------
# conditional form


def test_conditional_single_edge_and_constant():
    mu = random_cluster_measure(CYCLE4, 0.4, 2.0)
    f = E.MonotoneFunction.from_table([(c >> 2) & 1 for c in range(16)])
    reps = E.verify_conditional_form(mu, [2], f)
    assert len(reps) == 8 and all(r.holds for _, r in reps)
    flat = E.verify_conditional_form(mu, [0, 1], E.MonotoneFunction.from_table(np.ones(16)))
    assert all(r.lhs == 0 and r.rhs == 0 and r.holds for _, r in flat)


def test_conditional_non_monotone_slice():
    mu = product_measure(2, 0.5)
    f = E.MonotoneFunction.from_table([0, 1, 1, 0], verify=False)
    with pytest.raises(PreconditionError):
        E.verify_conditional_form(mu, [0, 1], f)


def test_conditional_crossing_count_on_small_box():
    g = build_box(2, 2)
    inner = np.flatnonzero(edges_within(g, g.linf_norm() <= 1))
    assert inner.shape[0] == 12
    counter = CrossingCounter(g, 1, 2, restriction="box")
    f = lambda states: -np.array([counter(s) for s in states], dtype=float)
    law = lambda eta: product_measure(len(inner), 0.5)
    rng = np.random.default_rng(7)
    outer = (rng.random((8, g.n_edges - len(inner))) < 0.5).astype(np.uint8)
    outer[0] = 1
    reps = E.verify_conditional_form(law, inner, f, n_total=g.n_edges, outer=outer)
    assert len(reps) == 8 and all(r.holds for _, r in reps)
    assert any(r.lhs > 0 for _, r in reps)


# ---------------------------------------------------------------------------
# identities and oracles


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_single_flip_check_matches_pairwise(n, seed):
    rng = np.random.default_rng(seed)
    if rng.random() < 0.5:
        values = E.random_monotone_function(n, seed).values
        values = values + (rng.random(values.shape) < 0.05) * rng.normal(size=values.shape)
    else:
        values = rng.integers(0, 3, size=1 << n).astype(float)
    for direction in (1, -1):
        assert E.is_monotone(values, n, direction) == E.is_monotone_pairwise(values, n, direction)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 0.9), st.floats(1.0, 4.0))
def test_gradient_identity_and_pivotal_oracle(seed, p, q):
    mu = random_cluster_measure(CYCLE4, p, q)
    f = E.random_monotone_function(4, seed)
    for i in range(4):
        assert abs(E.gradient_identity_gap(mu, f, i)) < 1e-12
    A = E.random_monotone_event(4, seed)
    for i in range(4):
        assert E.pivotal_probability(mu, A, i) == pytest.approx(brute_pivotal(mu, A.mask, i), abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.2, 0.5, 0.8]), st.sampled_from([1.0, 2.0, 4.0]))
def test_event_and_function_paths_agree(seed, p, q):
    mu = random_cluster_measure(GRID, p, q)
    A = E.random_monotone_event(GRID.n_edges, seed)
    a = E.verify_event_form(mu, A)
    b = E.verify_reverse_poincare(mu, E.MonotoneFunction(A.values, A.n, 1, True))
    assert a.rhs == pytest.approx(b.rhs, abs=1e-15)
    assert a.lhs == pytest.approx(b.lhs, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.2, 0.5, 0.8]), st.sampled_from([1.0, 1.5, 2.0, 4.0]),
       st.sampled_from(["cycle", "grid", "box"]))
def test_reverse_poincare_holds_on_fkg_models(seed, p, q, shape):
    g = {"cycle": CYCLE4, "grid": GRID, "box": build_box(2, 1)}[shape]
    mu = random_cluster_measure(g, p, q)
    f = E.random_monotone_function(g.n_edges, seed)
    rep = E.verify_reverse_poincare(mu, f)
    assert rep.holds, rep.to_dict()


def test_random_event_generator_contract():
    assert not E.random_monotone_event(5, 3, n_generators=0).mask.any()
    full = E.random_monotone_event(5, 3, n_generators=4, density=0.0)
    assert full.mask.all()
    a, b = E.random_monotone_event(6, 11), E.random_monotone_event(6, 11)
    assert np.array_equal(a.values, b.values)
    assert E.is_monotone(a.values, 6)


def test_monotone_from_callback_matches_table():
    f = E.MonotoneFunction.from_callback(lambda bits: bits.sum(axis=1), 3)
    assert list(f.values) == [bin(c).count("1") for c in range(8)]
    for c, (i, j) in itertools.product(range(8), [(0, 1)]):
        assert f.gradient(i)[c] == 1 and f.gradient(j)[c] == 1
