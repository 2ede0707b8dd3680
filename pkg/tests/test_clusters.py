from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from percbk import clusters as C
from percbk.configuration import BoundaryPartition
from percbk.lattice import build_box, build_rectangle, build_torus, edges_within


def open_path(g, state, points):
    """Open the unit edges along a polyline of lattice points."""
    for a, b in zip(points, points[1:]):
        a, b = np.array(a), np.array(b)
        step = np.sign(b - a)
        while np.any(a != b):
            nxt = a + step * (np.abs(b - a) > 0) * (np.arange(len(a)) == np.argmax(np.abs(b - a) > 0))
            state[g.edge_between(g.vertex_index(tuple(a)), g.vertex_index(tuple(nxt)))] = 1
            a = nxt
    return state


def bfs(g, state, start, allowed=None, removed=None):
    seen = {start}
    queue = deque([start])
    while queue:
        x = queue.popleft()
        for k in range(g.indptr[x], g.indptr[x + 1]):
            e = g.adj_edge[k]
            y = int(g.adj_vertex[k])
            if not state[e] or (allowed is not None and not allowed[e]) or y == removed or y in seen:
                continue
            seen.add(y)
            queue.append(y)
    return seen


# ---------------------------------------------------------------------------
# oracles


def trifurcation_oracle(g, state, x, n):
    norm = g.linf_norm()
    ends = g.edges
    allowed = (norm[ends[:, 0]] <= n) | (norm[ends[:, 1]] <= n)
    allowed &= (norm[ends[:, 0]] <= n + 1) & (norm[ends[:, 1]] <= n + 1)
    nbrs = [int(g.adj_vertex[k]) for k in range(g.indptr[x], g.indptr[x + 1]) if state[g.adj_edge[k]] and allowed[g.adj_edge[k]]]
    if len(nbrs) != 3:
        return False
    pieces = []
    for y in nbrs:
        piece = frozenset(bfs(g, state, y, allowed, removed=x))
        if piece not in pieces:
            pieces.append(piece)
    if len(pieces) != 3:
        return False
    return all(any(norm[v] == n + 1 for v in piece) for piece in pieces)


def winding_oracle(g, state):
    """BFS positions in the universal cover; any open non-tree edge with a
    displacement mismatch closes a winding cycle."""
    pos = {}
    for s in range(g.n_vertices):
        if s in pos:
            continue
        pos[s] = np.zeros(g.d, dtype=int)
        queue = deque([s])
        while queue:
            x = queue.popleft()
            for k in range(g.indptr[x], g.indptr[x + 1]):
                e = g.adj_edge[k]
                if not state[e]:
                    continue
                y = int(g.adj_vertex[k])
                step = np.zeros(g.d, dtype=int)
                step[g.axis[e]] = 1 if g.edges[e, 0] == x else -1
                if y not in pos:
                    pos[y] = pos[x] + step
                    queue.append(y)
    for e in range(g.n_edges):
        if state[e]:
            u, v = g.edges[e]
            step = np.zeros(g.d, dtype=int)
            step[g.axis[e]] = 1
            if np.any(pos[int(u)] + step != pos[int(v)]):
                return True
    return False


def crossing_oracle(g, state, m, n):
    norm = g.linf_norm()
    region = (norm > m) & (norm <= n)
    allowed = region[g.edges[:, 0]] & region[g.edges[:, 1]]
    seen, count = set(), 0
    for s in np.flatnonzero(norm == n):
        s = int(s)
        if s in seen:
            continue
        comp = bfs(g, state, s, allowed)
        seen |= comp
        count += any(norm[v] == m + 1 for v in comp)
    return count


# ---------------------------------------------------------------------------
# components


def test_components_examples():
    g = build_box(2, 1)
    assert C.components(g, np.zeros(12, np.uint8)).count == 9
    assert C.components(g, np.ones(12, np.uint8)).count == 1
    one = np.zeros(12, np.uint8)
    one[3] = 1
    assert C.components(g, one).count == 8


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_wired_identification_equals_collapse(seed):
    g = build_box(2, 2)
    rng = np.random.default_rng(seed)
    state = (rng.random(g.n_edges) < 0.4).astype(np.uint8)
    bnd = np.flatnonzero(g.linf_norm() == 2)
    wired = C.components(g, state, identify=BoundaryPartition.wired(bnd))
    plain = C.components(g, state)
    collapsed = len(set(plain.labels[bnd])) - 1
    assert wired.count == plain.count - collapsed


# ---------------------------------------------------------------------------
# two arms


def test_two_arm_examples():
    g = build_box(2, 5)
    x, y = g.vertex_index((0, 0)), g.vertex_index((1, 0))
    e = g.edge_between(x, y)
    assert not C.two_arm_event(g, np.ones(g.n_edges, np.uint8), e, 4)
    assert not C.two_arm_event(g, np.zeros(g.n_edges, np.uint8), e, 4)
    state = np.zeros(g.n_edges, np.uint8)
    open_path(g, state, [(0, 0), (0, 4)])
    open_path(g, state, [(1, 0), (1, -4)])
    assert C.two_arm_event(g, state, e, 4)
    state[e] = 1
    assert not C.two_arm_event(g, state, e, 4)
    with pytest.raises(ValueError):
        C.TwoArm(g, e, 6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_two_arm_matches_bfs(seed, n):
    g = build_box(2, 4)
    rng = np.random.default_rng(seed)
    state = (rng.random(g.n_edges) < 0.55).astype(np.uint8)
    x, y = g.vertex_index((0, 0)), g.vertex_index((0, 1))
    e = g.edge_between(x, y)
    cx = g.coords[x]
    far = lambda comp: any(np.abs(g.coords[v] - cx).max() >= n for v in comp)
    cx_comp, cy_comp = bfs(g, state, x), bfs(g, state, y)
    want = (y not in cx_comp) and far(cx_comp) and far(cy_comp)
    assert C.two_arm_event(g, state, e, n) == want
    opened = state.copy()
    opened[e] = 1
    assert C.two_arm_event(g, opened, e, n) <= C.two_arm_event(g, state, e, n)


# ---------------------------------------------------------------------------
# crossing counts


def test_crossing_examples():
    g = build_box(2, 3)
    assert C.crossing_cluster_count(g, np.ones(g.n_edges, np.uint8), 1, 3) == 1
    assert C.crossing_cluster_count(g, np.zeros(g.n_edges, np.uint8), 1, 3) == 0
    state = np.zeros(g.n_edges, np.uint8)
    open_path(g, state, [(2, 0), (3, 0)])
    open_path(g, state, [(-2, 0), (-3, 0)])
    assert C.crossing_cluster_count(g, state, 1, 3) == 2
    assert not C.coarse_trifurcation(g, state, 1, 3)
    open_path(g, state, [(0, 2), (0, 3)])
    assert C.coarse_trifurcation(g, state, 1, 3)
    assert not C.coarse_trifurcation(g, np.ones(g.n_edges, np.uint8), 1, 3)
    with pytest.raises(ValueError):
        C.crossing_cluster_count(g, state, 3, 3)


def test_box_restriction_counts_through_the_middle():
    g = build_box(2, 3)
    state = np.zeros(g.n_edges, np.uint8)
    open_path(g, state, [(-3, 0), (3, 0)])
    assert C.crossing_cluster_count(g, state, 1, 3, "annulus") == 2
    assert C.crossing_cluster_count(g, state, 1, 3, "box") == 1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.2, 0.8))
def test_crossing_count_oracle_and_inner_monotone(seed, p):
    g = build_box(2, 4)
    rng = np.random.default_rng(seed)
    state = (rng.random(g.n_edges) < p).astype(np.uint8)
    counter = C.CrossingCounter(g, 1, 4)
    assert counter(state) == crossing_oracle(g, state, 1, 4)
    # opening an edge inside the inner box can only merge clusters that
    # already reach it; elsewhere it may create a new crossing
    boxed = C.CrossingCounter(g, 1, 4, "box")
    inner = np.flatnonzero(edges_within(g, g.linf_norm() <= 1))
    more = state.copy()
    more[int(rng.choice(inner))] = 1
    assert boxed(more) <= boxed(state)


# ---------------------------------------------------------------------------
# strips


def test_strip_examples():
    m = 1
    g = build_box(2, 5)
    assert C.shortside_crossing_count(g, np.ones(g.n_edges, np.uint8), "U", m) == 1
    assert C.shortside_crossing_count(g, np.zeros(g.n_edges, np.uint8), "U", m) == 0
    state = np.zeros(g.n_edges, np.uint8)
    for x in (-4, 0, 3):
        open_path(g, state, [(x, 1), (x, 5)])
    assert C.shortside_crossing_count(g, state, "U", m) == 3
    with pytest.raises(ValueError):
        C.shortside_crossing_count(build_box(2, 4), state[:0], "U", 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.3, 0.7), st.sampled_from(C.STRIPS))
def test_strip_count_matches_bfs(seed, p, strip):
    m = 1
    g = build_box(2, 5)
    rng = np.random.default_rng(seed)
    state = (rng.random(g.n_edges) < p).astype(np.uint8)
    lo, hi, ax = C.strip_geometry(strip, m)
    inside = np.all((g.coords >= lo) & (g.coords <= hi), axis=1)
    allowed = inside[g.edges[:, 0]] & inside[g.edges[:, 1]]
    seen, count = set(), 0
    for s in np.flatnonzero(inside & (g.coords[:, ax] == lo[ax])):
        if int(s) in seen:
            continue
        comp = bfs(g, state, int(s), allowed)
        seen |= comp
        count += any(g.coords[v, ax] == hi[ax] for v in comp)
    assert C.shortside_crossing_count(g, state, strip, m) == count


# ---------------------------------------------------------------------------
# trifurcations


def y_tree(g, centre, arms):
    state = np.zeros(g.n_edges, np.uint8)
    for end in arms:
        open_path(g, state, [centre, end])
    return state


def test_trifurcation_examples():
    g = build_box(2, 3)
    o = g.vertex_index((0, 0))
    assert not C.trifurcation(g, np.ones(g.n_edges, np.uint8), o, 2)
    state = y_tree(g, (0, 0), [(-3, 0), (3, 0), (0, 3)])
    assert C.trifurcation(g, state, o, 2)
    short = y_tree(g, (0, 0), [(-3, 0), (3, 0), (0, 2)])
    assert not C.trifurcation(g, short, o, 2)


def test_two_y_trees():
    g = build_box(2, 5)
    state = y_tree(g, (0, 2), [(0, 5), (-5, 2), (5, 2)]) | y_tree(g, (0, -2), [(0, -5), (-5, -2), (5, -2)])
    res = C.trifurcation_count_and_bound(g, state, 4)
    assert res.count == 2 and res.holds
    assert res.bound == 11**2 - 9**2
    for s in (np.zeros(g.n_edges, np.uint8), np.ones(g.n_edges, np.uint8)):
        assert C.trifurcation_count_and_bound(g, s, 4).count == 0


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.35, 0.75), st.sampled_from([(2, 2), (2, 3), (3, 1)]))
def test_trifurcation_kernel_matches_oracle(seed, p, dn):
    d, n = dn
    g = build_box(d, n + 1)
    rng = np.random.default_rng(seed)
    state = (rng.random(g.n_edges) < p).astype(np.uint8)
    flags = C.TrifurcationCounter(g, n).flags(state)
    for x in np.flatnonzero(g.linf_norm() <= n):
        assert flags[x] == trifurcation_oracle(g, state, int(x), n)


# ---------------------------------------------------------------------------
# circuits on tori


def test_circuit_examples():
    t = build_torus(2, 1)
    full = np.ones(t.n_edges, np.uint8)
    assert C.nontrivial_circuit(t, full)
    assert not any(C.pivotal_for_circuit(t, full, e) for e in range(t.n_edges))
    assert not C.nontrivial_circuit(t, np.zeros(t.n_edges, np.uint8))
    t2 = build_torus(2, 2)
    line = np.zeros(t2.n_edges, np.uint8)
    row = [e for e in range(t2.n_edges) if t2.axis[e] == 0 and t2.coords[t2.edges[e, 0], 1] == 0]
    line[row] = 1
    assert C.nontrivial_circuit(t2, line)
    assert all(C.pivotal_for_circuit(t2, line, e) for e in row)
    with pytest.raises(ValueError):
        C.nontrivial_circuit(build_box(2, 2), np.ones(40, np.uint8))


def test_contractible_loop_is_not_a_circuit():
    t = build_torus(2, 2)
    state = np.zeros(t.n_edges, np.uint8)
    open_path(t, state, [(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)])
    assert not C.nontrivial_circuit(t, state)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.3, 0.7), st.integers(1, 3))
def test_circuit_matches_oracle_and_is_monotone(seed, p, n):
    t = build_torus(2, n)
    rng = np.random.default_rng(seed)
    state = (rng.random(t.n_edges) < p).astype(np.uint8)
    got = C.nontrivial_circuit(t, state)
    assert got == winding_oracle(t, state)
    e = int(rng.integers(t.n_edges))
    on, off = state.copy(), state.copy()
    on[e], off[e] = 1, 0
    assert C.circuit_with_and_without(t, state, e) == (winding_oracle(t, on), winding_oracle(t, off))
    assert C.nontrivial_circuit(t, on) >= got >= C.nontrivial_circuit(t, off)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.3, 0.7))
def test_offset_union_find_detects_winding(seed, p):
    t = build_torus(2, 2)
    rng = np.random.default_rng(seed)
    state = (rng.random(t.n_edges) < p).astype(np.uint8)
    ds = C.DisjointSets(t.n_vertices, d=2)
    for e in np.flatnonzero(state):
        delta = [0, 0]
        delta[t.axis[e]] = 1
        ds.union(int(t.edges[e, 0]), int(t.edges[e, 1]), delta)
    assert bool(ds.cycle_vectors) == C.nontrivial_circuit(t, state)
    side = t.shape[0]
    assert all(all(v % side == 0 for v in vec) for vec in ds.cycle_vectors)


def test_disjoint_sets_plain():
    ds = C.DisjointSets(5)
    assert ds.union(0, 1) and ds.union(1, 2) and not ds.union(0, 2)
    assert ds.same(0, 2) and not ds.same(0, 3)
    assert ds.find(ds.find(2)) == ds.find(2)


# ---------------------------------------------------------------------------
# rectangle crossings


def test_rectangle_crossing_examples():
    g = build_rectangle((-3, -1), (3, 1))
    assert C.rectangle_crossing(g, np.ones(g.n_edges, np.uint8))
    assert not C.rectangle_crossing(g, np.zeros(g.n_edges, np.uint8))
    row = np.zeros(g.n_edges, np.uint8)
    open_path(g, row, [(-3, 0), (3, 0)])
    assert C.rectangle_crossing(g, row)
    assert not C.rectangle_crossing(g, row, axis=1)
