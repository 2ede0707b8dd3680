"""Compiled inner loops: union-find, winding detection, DFS, heat-bath sweeps.

Everything here takes plain arrays so it can be jitted; the typed wrappers
live in :mod:`percbk.clusters` and :mod:`percbk.montecarlo`.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True, nogil=True)
def union(parent, size, a, b):
    ra = find(parent, a)
    rb = find(parent, b)
    if ra == rb:
        return False
    if size[ra] < size[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    size[ra] += size[rb]
    return True


@njit(cache=True, nogil=True)
def label_components(n_vertices, eu, ev, open_mask, pu, pv):
    """Dense component labels (ordered by smallest vertex) and their count.

    ``pu``/``pv`` are vertex pairs merged unconditionally (wired blocks).
    """
    parent = np.arange(n_vertices)
    size = np.ones(n_vertices, dtype=np.int64)
    for k in range(pu.shape[0]):
        union(parent, size, pu[k], pv[k])
    for k in range(eu.shape[0]):
        if open_mask[k]:
            union(parent, size, eu[k], ev[k])
    labels = np.empty(n_vertices, dtype=np.int64)
    remap = np.full(n_vertices, -1, dtype=np.int64)
    count = 0
    for x in range(n_vertices):
        r = find(parent, x)
        if remap[r] < 0:
            remap[r] = count
            count += 1
        labels[x] = remap[r]
    return labels, count


@njit(cache=True, nogil=True)
def count_components_all(n_vertices, eu, ev, pu, pv):
    """k(omega^xi) for every configuration index 0 .. 2^|E| - 1."""
    n_edges = eu.shape[0]
    total = 1 << n_edges
    out = np.empty(total, dtype=np.int64)
    parent = np.empty(n_vertices, dtype=np.int64)
    size = np.empty(n_vertices, dtype=np.int64)
    for c in range(total):
        for x in range(n_vertices):
            parent[x] = x
            size[x] = 1
        k = n_vertices
        for j in range(pu.shape[0]):
            if union(parent, size, pu[j], pv[j]):
                k -= 1
        for j in range(n_edges):
            if (c >> j) & 1:
                if union(parent, size, eu[j], ev[j]):
                    k -= 1
        out[c] = k
    return out


# ---------------------------------------------------------------------------
# winding union-find on tori


@njit(cache=True, nogil=True)
def _find_offset(parent, pot, x, acc):
    """Root of ``x``; ``acc`` receives position(x) - position(root)."""
    acc[:] = 0
    while parent[x] != x:
        acc += pot[x]
        x = parent[x]
    return x


@njit(cache=True, nogil=True)
def winding_scan(n_vertices, eu, ev, axis, d, open_mask, skip):
    """Union-find with displacement offsets over open edges except ``skip``.

    Returns ``(found, parent, pot)``; ``found`` is True when some open cycle
    has a non-zero total displacement, i.e. winds around the torus.  Union by
    size without path compression keeps offsets trivially consistent.
    """
    parent = np.arange(n_vertices)
    size = np.ones(n_vertices, dtype=np.int64)
    pot = np.zeros((n_vertices, d), dtype=np.int64)
    au = np.zeros(d, dtype=np.int64)
    av = np.zeros(d, dtype=np.int64)
    found = False
    for k in range(eu.shape[0]):
        if k == skip or not open_mask[k]:
            continue
        u = eu[k]
        v = ev[k]
        ru = _find_offset(parent, pot, u, au)
        rv = _find_offset(parent, pot, v, av)
        # position(v) = position(u) + e_axis along this edge
        au[axis[k]] += 1
        if ru == rv:
            for j in range(d):
                if au[j] != av[j]:
                    found = True
                    break
        else:
            if size[ru] >= size[rv]:
                parent[rv] = ru
                pot[rv] = au - av
                size[ru] += size[rv]
            else:
                parent[ru] = rv
                pot[ru] = av - au
                size[rv] += size[ru]
    return found, parent, pot


@njit(cache=True, nogil=True)
def edge_closes_winding(parent, pot, u, v, a, d):
    au = np.zeros(d, dtype=np.int64)
    av = np.zeros(d, dtype=np.int64)
    ru = _find_offset(parent, pot, u, au)
    rv = _find_offset(parent, pot, v, av)
    if ru != rv:
        return False
    au[a] += 1
    for j in range(d):
        if au[j] != av[j]:
            return True
    return False


@njit(cache=True, nogil=True)
def circuit_pivotal(n_vertices, eu, ev, axis, d, state, e):
    """(circuit with e open, circuit with e closed) in one pass."""
    found, parent, pot = winding_scan(n_vertices, eu, ev, axis, d, state, e)
    if found:
        return True, True
    return edge_closes_winding(parent, pot, eu[e], ev[e], axis[e], d), False


# ---------------------------------------------------------------------------
# trifurcations via articulation points


@njit(cache=True, nogil=True)
def trifurcation_flags(indptr, adj_v, adj_e, state, edge_ok, candidate, is_boundary):
    """Flag every candidate vertex satisfying both trifurcation conditions.

    One iterative Tarjan DFS over open, allowed edges.  For a vertex x,
    removing it splits its cluster into one piece per DFS child c with
    low[c] >= disc[x], plus the piece containing its DFS parent.
    """
    n = indptr.shape[0] - 1
    disc = np.full(n, -1, dtype=np.int64)
    low = np.zeros(n, dtype=np.int64)
    sub = np.zeros(n, dtype=np.int64)
    sep = np.zeros(n, dtype=np.int64)
    sep_reach = np.zeros(n, dtype=np.int64)
    sep_sub = np.zeros(n, dtype=np.int64)
    comp_root = np.full(n, -1, dtype=np.int64)
    is_root = np.zeros(n, dtype=np.bool_)
    open_deg = np.zeros(n, dtype=np.int64)
    stack_v = np.empty(n, dtype=np.int64)
    stack_ptr = np.empty(n, dtype=np.int64)
    stack_pe = np.empty(n, dtype=np.int64)
    t = 0
    for x in range(n):
        for k in range(indptr[x], indptr[x + 1]):
            ee = adj_e[k]
            if edge_ok[ee] and state[ee]:
                open_deg[x] += 1
    for s in range(n):
        if disc[s] >= 0:
            continue
        is_root[s] = True
        top = 0
        stack_v[0] = s
        stack_ptr[0] = indptr[s]
        stack_pe[0] = -1
        disc[s] = t
        low[s] = t
        t += 1
        sub[s] = 1 if is_boundary[s] else 0
        comp_root[s] = s
        while top >= 0:
            x = stack_v[top]
            k = stack_ptr[top]
            if k < indptr[x + 1]:
                stack_ptr[top] = k + 1
                ee = adj_e[k]
                if ee == stack_pe[top] or not edge_ok[ee] or not state[ee]:
                    continue
                y = adj_v[k]
                if disc[y] < 0:
                    disc[y] = t
                    low[y] = t
                    t += 1
                    sub[y] = 1 if is_boundary[y] else 0
                    comp_root[y] = s
                    top += 1
                    stack_v[top] = y
                    stack_ptr[top] = indptr[y]
                    stack_pe[top] = ee
                elif disc[y] < low[x]:
                    low[x] = disc[y]
            else:
                top -= 1
                if top >= 0:
                    px = stack_v[top]
                    sub[px] += sub[x]
                    if low[x] < low[px]:
                        low[px] = low[x]
                    if low[x] >= disc[px]:
                        sep[px] += 1
                        sep_sub[px] += sub[x]
                        if sub[x] > 0:
                            sep_reach[px] += 1
    flags = np.zeros(n, dtype=np.bool_)
    for x in range(n):
        if not candidate[x] or open_deg[x] != 3:
            continue
        pieces = sep[x] + (0 if is_root[x] else 1)
        if pieces != 3 or sep_reach[x] != sep[x]:
            continue
        if not is_root[x]:
            rest = sub[comp_root[x]] - sep_sub[x] - (1 if is_boundary[x] else 0)
            if rest <= 0:
                continue
        flags[x] = True
    return flags


# ---------------------------------------------------------------------------
# arms


@njit(cache=True, nogil=True)
def _bfs_far(indptr, adj_v, adj_e, state, coords, src, origin, n, target, mark, stamp, queue):
    """BFS from src; returns (hit_target, reached L-inf distance >= n from origin)."""
    d = coords.shape[1]
    mark[src] = stamp
    queue[0] = src
    head = 0
    tail = 1
    far = False
    hit = False
    while head < tail:
        x = queue[head]
        head += 1
        if x == target:
            hit = True
        if not far:
            dist = 0
            for j in range(d):
                dj = abs(coords[x, j] - coords[origin, j])
                if dj > dist:
                    dist = dj
            if dist >= n:
                far = True
        for k in range(indptr[x], indptr[x + 1]):
            if not state[adj_e[k]]:
                continue
            y = adj_v[k]
            if mark[y] != stamp:
                mark[y] = stamp
                queue[tail] = y
                tail += 1
    return hit, far


@njit(cache=True, nogil=True)
def two_arm(indptr, adj_v, adj_e, state, coords, x, y, n, mark, queue):
    hit, far_x = _bfs_far(indptr, adj_v, adj_e, state, coords, x, x, n, y, mark, 1, queue)
    if hit or not far_x:
        mark[:] = 0
        return False
    _, far_y = _bfs_far(indptr, adj_v, adj_e, state, coords, y, x, n, -1, mark, 2, queue)
    mark[:] = 0
    return far_y


# ---------------------------------------------------------------------------
# heat-bath dynamics


@njit(cache=True, nogil=True)
def connected_off_edge(indptr, adj_v, adj_e, state, e, u, v, mark, stamp, qa, qb):
    """Are u and v joined by open edges other than e?  Bidirectional BFS.

    ``mark`` holds stamps; ``stamp`` and ``stamp + 1`` must be unused.
    """
    if u == v:
        return True
    sa = stamp
    sb = stamp + 1
    mark[u] = sa
    mark[v] = sb
    qa[0] = u
    qb[0] = v
    ha = 0
    ta = 1
    hb = 0
    tb = 1
    while ha < ta and hb < tb:
        if ta - ha <= tb - hb:
            x = qa[ha]
            ha += 1
            for k in range(indptr[x], indptr[x + 1]):
                ee = adj_e[k]
                if ee == e or not state[ee]:
                    continue
                y = adj_v[k]
                m = mark[y]
                if m == sb:
                    return True
                if m != sa:
                    mark[y] = sa
                    qa[ta] = y
                    ta += 1
        else:
            x = qb[hb]
            hb += 1
            for k in range(indptr[x], indptr[x + 1]):
                ee = adj_e[k]
                if ee == e or not state[ee]:
                    continue
                y = adj_v[k]
                m = mark[y]
                if m == sa:
                    return True
                if m != sb:
                    mark[y] = sb
                    qb[tb] = y
                    tb += 1
    return False


@njit(cache=True, nogil=True)
def heat_bath_prob(indptr, adj_v, adj_e, eu, ev, state, e, p_conn, p_disc, mark, stamp, qa, qb):
    if connected_off_edge(indptr, adj_v, adj_e, state, e, eu[e], ev[e], mark, stamp, qa, qb):
        return p_conn
    return p_disc


@njit(cache=True, nogil=True)
def heat_bath_sweeps(indptr, adj_v, adj_e, eu, ev, state, n_update, uniforms, p_conn, p_disc, mark, stamp0):
    """Systematic sweeps: row s of ``uniforms`` drives sweep s over edges 0..n_update-1."""
    n_v = indptr.shape[0] - 1
    qa = np.empty(n_v, dtype=np.int64)
    qb = np.empty(n_v, dtype=np.int64)
    stamp = stamp0
    for s in range(uniforms.shape[0]):
        for e in range(n_update):
            if p_conn == p_disc:
                pr = p_conn
            else:
                pr = heat_bath_prob(indptr, adj_v, adj_e, eu, ev, state, e, p_conn, p_disc, mark, stamp, qa, qb)
                stamp += 2
            state[e] = 1 if uniforms[s, e] < pr else 0
    return stamp
