"""Experiment drivers shared by the command line and the acceptance tests.

Each ``run_*`` function takes a plain parameter dict (the body of a
manifest) and returns tables as lists of row dicts.  Nothing here touches
the filesystem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import clusters, cone, exact, sigma
from .configuration import BoundaryPartition
from .errors import PreconditionError
from .lattice import build_box, build_rectangle, build_torus, EdgeGraph
from .measures import bernoulli_measure, random_cluster_measure
from .montecarlo import (
    ModelSpec,
    SamplerConfig,
    boundary_vertices,
    estimate,
    estimate_moments_N,
    loglog_slope,
    p_c,
)

SIGMA_TOL = 1e-12


@dataclass
class Tables:
    """Named tables produced by one run; ``main`` is always present."""

    columns: dict = field(default_factory=dict)
    rows: dict = field(default_factory=dict)
    text: str = ""

    def add(self, name: str, columns, rows=None):
        self.columns[name] = list(columns)
        self.rows[name] = list(rows or [])

    @property
    def failures(self) -> int:
        return sum(1 for rows in self.rows.values() for r in rows if r.get("holds") is False)

    @property
    def skipped(self) -> int:
        return sum(1 for rows in self.rows.values() for r in rows if r.get("holds") == "skipped")


def item_seed(*keys) -> int:
    """Independent 63-bit seed for an (experiment seed, index, ...) tuple."""
    ss = np.random.SeedSequence([int(k) for k in keys])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def parse_graph(label: str) -> EdgeGraph:
    """``cycle4``, ``grid2x3``, ``edge``, ``box:d:n``, ``torus:d:n`` or ``rect:x0,y0:x1,y1``."""
    named = {
        "edge": ((0, 0), (1, 0)),
        "cycle4": ((0, 0), (1, 1)),
        "grid2x3": ((0, 0), (1, 2)),
    }
    if label in named:
        return build_rectangle(*named[label])
    kind, *args = label.split(":")
    if kind in ("box", "torus") and len(args) == 2:
        d, n = int(args[0]), int(args[1])
        return build_box(d, n) if kind == "box" else build_torus(d, n)
    if kind == "rect" and len(args) == 2:
        lo = tuple(int(v) for v in args[0].split(","))
        hi = tuple(int(v) for v in args[1].split(","))
        return build_rectangle(lo, hi)
    raise ValueError(f"unrecognised graph name {label!r}")


def exact_models(params: dict, max_edges: int | None = None):
    """Yield ``(index, descriptor, measure)`` over graphs x p-grid x q-grid."""
    k = 0
    for label in params.get("graphs", []):
        g = parse_graph(label)
        if max_edges is not None and g.n_edges > max_edges:
            continue
        bc = params.get("bc", "free")
        xi = BoundaryPartition.wired(boundary_vertices(g)) if bc == "wired" else None
        for q in params.get("q_grid", []):
            for p in params.get("p_grid", []):
                desc = {"graph": label, "p": float(p), "q": float(q), "bc": bc, "n_edges": g.n_edges}
                if q == 1 and bc == "free":
                    mu = bernoulli_measure(g, p)
                    desc["model"] = "bernoulli"
                else:
                    mu = random_cluster_measure(g, p, q, xi)
                    desc["model"] = "random-cluster"
                yield k, desc, mu
                k += 1


def _random_event(n: int, s: int) -> exact.MonotoneEvent:
    rng = np.random.default_rng(s)
    return exact.random_monotone_event(n, s, int(rng.integers(1, 6)), float(rng.uniform(0.25, 0.75)))


# ---------------------------------------------------------------------------
# exhaustive inequality suite

EXACT_DEFAULTS = {
    "graphs": ["cycle4", "grid2x3", "box:2:1"],
    "p_grid": [0.2, 0.5, 0.8],
    "q_grid": [1, 1.5, 2, 4],
    "bc": "free",
    "n_events": 50,
    "n_functions": 50,
    "direct": True,
    "force": False,
    "seed": 1,
}
EXACT_COLUMNS = [
    "model", "graph", "p", "q", "bc", "n_edges", "kind", "item", "seed",
    "lhs", "rhs", "constant", "slack", "holds", "note",
]


def _report_row(desc, kind, item, s, rep: exact.InequalityReport):
    return {
        **desc, "kind": kind, "item": item, "seed": s, "lhs": rep.lhs, "rhs": rep.rhs,
        "constant": rep.constant, "slack": rep.slack, "holds": rep.holds, "note": "",
    }


def run_verify_exact(params: dict) -> Tables:
    params = {**EXACT_DEFAULTS, **params}
    seed = int(params["seed"])
    force = bool(params["force"])
    rows = []
    for k, desc, mu in exact_models(params):
        n = mu.n
        try:
            model_rows = []
            for j in range(int(params["n_events"])):
                s = item_seed(seed, k, 0, j)
                A = _random_event(n, s)
                model_rows.append(_report_row(desc, "event", j, s, exact.verify_event_form(mu, A, force=force)))
                if params["direct"] and mu.is_product():
                    model_rows.append(_report_row(desc, "direct", j, s, exact.verify_direct_poincare(mu, A)))
            for j in range(int(params["n_functions"])):
                s = item_seed(seed, k, 1, j)
                f = exact.random_monotone_function(n, s)
                model_rows.append(_report_row(desc, "function", j, s, exact.verify_reverse_poincare(mu, f, force=force)))
            rows.extend(model_rows)
        except PreconditionError as err:
            rows.append({**desc, "kind": "model", "item": "", "holds": "skipped", "note": str(err)})
    t = Tables()
    t.add("main", EXACT_COLUMNS, rows)
    return t


# ---------------------------------------------------------------------------
# sigma-field suite

SIGMA_DEFAULTS = {
    "graphs": ["cycle4", "grid2x3"],
    "p_grid": [0.2, 0.5, 0.8],
    "q_grid": [1, 1.5, 2, 4],
    "bc": "free",
    "max_edges": 8,
    "n_functions": 100,
    "n_covariance": 500,
    "seed": 1,
}
SIGMA_COLUMNS = ["model", "graph", "p", "q", "bc", "n_edges", "property", "item", "value", "holds", "note"]


def _embed_without(table: np.ndarray, n: int, i: int) -> np.ndarray:
    """Table over sigma (n bits) equal to ``table`` on the other n-1 bits."""
    idx = np.arange(1 << n, dtype=np.int64)
    low = idx & ((1 << i) - 1)
    high = (idx >> (i + 1)) << i
    return table[low | high]


def sigma_rows(desc: dict, mu, params: dict, k: int) -> list[dict]:
    seed = int(params["seed"])
    n = mu.n
    J = sigma.build_sigma_joint(mu)
    out = []

    def row(prop, item, value, holds, note=""):
        out.append({**desc, "property": prop, "item": item, "value": float(value), "holds": bool(holds), "note": note})

    row("support", "", 0.0 if sigma.check_p1(J) else -1.0, sigma.check_p1(J))
    gap = sigma.marginal_gap(J)
    row("marginal", "", -gap, gap <= SIGMA_TOL)
    for i in range(n):
        gi = sigma.independence_gap(J, i)
        row("independence", i, -gi, gi <= SIGMA_TOL)
    p4 = sigma.check_p4(J)
    row("free", "", p4.min_eigenvalue, p4.free is True, "" if p4.free else "indeterminate")
    for i in range(n):
        row("conditional-variance", i, p4.conditional_variances[i] - J.p / 2, p4.conditional_variances[i] >= J.p / 2 - SIGMA_TOL)
    gram = sigma.sigma_gram(J)
    off = gram - np.diag(np.diag(gram))
    worst = float(off.max()) if n > 1 else 0.0
    row("gram-offdiagonal", "", -worst, worst <= SIGMA_TOL)
    bits = ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1).astype(float)
    idx = np.arange(1 << n)
    for i in range(n):
        f = bits.sum(axis=1) - bits[:, i]
        worst = np.inf
        ok = True
        lo = idx[(idx >> i) & 1 == 0]
        for a in lo:
            if mu.probs[a] == 0 or mu.probs[a | (1 << i)] == 0:
                continue
            r = sigma.check_domination_claim(J, [i], int(a | (1 << i)), int(a), f)
            worst = min(worst, r.lower - r.upper)
            ok &= r.holds
        row("domination", i, worst, ok)
    for j in range(int(params["n_functions"])):
        s = item_seed(seed, k, 2, j)
        f = exact.random_monotone_function(n, s)
        p2 = sigma.check_p2(J, f)
        row("conditional-monotone", j, float(p2.gaps.min()), bool(np.all(p2.gaps >= -SIGMA_TOL)))
        err = float(np.abs(p2.identity_errors).max())
        row("gradient-identity", j, -err, err <= SIGMA_TOL * max(1.0, float(np.abs(f.values).max())))
        cert = cone.certify_gamma(J, f)
        row("gamma", j, float(cert.gamma.min() - 1.0) if cert.gamma.size else 0.0, cert.holds)
    for j in range(int(params["n_covariance"])):
        s = item_seed(seed, k, 3, j)
        i = int(np.random.default_rng(s).integers(n))
        if n == 1:
            table = np.zeros(2)
        else:
            base = exact.random_monotone_function(n - 1, s)
            table = _embed_without(base.values, n, i)
        res = sigma.check_p3(J, table, i)
        row("negative-association", f"{j}:{i}", -res.covariance, res.holds)
    return out


def run_verify_sigma(params: dict) -> Tables:
    params = {**SIGMA_DEFAULTS, **params}
    rows = []
    for k, desc, mu in exact_models(params, max_edges=int(params["max_edges"])):
        try:
            rows.extend(sigma_rows(desc, mu, params, k))
        except PreconditionError as err:
            rows.append({**desc, "property": "model", "item": "", "holds": "skipped", "note": str(err)})
    t = Tables()
    t.add("main", SIGMA_COLUMNS, rows)
    return t


# ---------------------------------------------------------------------------
# obtuse cone suite

CONE_DEFAULTS = {"dims": list(range(1, 11)), "n_instances": 1000, "seed": 1}
CONE_COLUMNS = ["dim", "instance", "target", "check", "value", "holds", "note"]


def cone_rows(dim: int, instance, seed: int) -> list[dict]:
    out = []
    if instance == "orthonormal":
        B = cone.VectorFamily.from_vectors(np.eye(dim))
        f = np.random.default_rng(seed).exponential(size=dim)
        target = "orthonormal"
    else:
        B = cone.random_obtuse_basis(dim, seed)
        target = "combination" if instance % 2 == 0 else "dual"
        f = cone.random_cone_target(B, seed) if target == "combination" else cone.random_dual_target(B, seed)
    chk = cone.verify_obtuse_cone_lemma(B, f)
    value = float(min(chk.slack.min(), chk.coefficients.min()))
    note = ""
    if instance == "orthonormal":
        note = "equality" if float(np.abs(chk.slack).max()) <= 1e-12 else "no equality"
    out.append({"dim": dim, "instance": instance, "target": target, "check": "lemma", "value": value, "holds": chk.holds, "note": note})
    if dim >= 2:
        step = cone.projection_step(B, f)
        off = step.family.gram - np.diag(np.diag(step.family.gram))
        b = B.inner(f)
        margin = float(min(-off.max() if dim > 2 else 0.0, (step.products - b[1:]).min()))
        out.append({"dim": dim, "instance": instance, "target": target, "check": "projection", "value": margin, "holds": step.holds, "note": ""})
    return out


def run_verify_cone(params: dict) -> Tables:
    params = {**CONE_DEFAULTS, **params}
    seed = int(params["seed"])
    rows = []
    for dim in params["dims"]:
        dim = int(dim)
        rows.extend(cone_rows(dim, "orthonormal", item_seed(seed, dim, 0)))
        for j in range(int(params["n_instances"])):
            rows.extend(cone_rows(dim, j, item_seed(seed, dim, 1, j)))
    t = Tables()
    t.add("main", CONE_COLUMNS, rows)
    return t


# ---------------------------------------------------------------------------
# trifurcations


class OriginTrifurcation:
    """Trif_{2n}(0) read off a torus through a box window around the origin."""

    def __init__(self, torus: EdgeGraph, n: int):
        radius = 2 * n + 1
        if torus.shape[0] < 2 * radius + 1:
            raise ValueError(f"torus too small for a window of radius {radius}")
        self.box = build_box(torus.d, radius)
        self.counter = clusters.TrifurcationCounter(self.box, 2 * n)
        self.origin = self.box.vertex_index((0,) * torus.d)
        ends = self.box.coords[self.box.edges]
        self.window = np.array(
            [torus.edge_between(torus.vertex_index(a), torus.vertex_index(b)) for a, b in ends], dtype=np.int64
        )

    def __call__(self, omega) -> float:
        return float(self.counter.flags(np.asarray(omega)[self.window])[self.origin])


def trifurcation_bound_ratio(d: int, n: int) -> float:
    """|boundary of Lambda_{n+1}| / |Lambda_n|."""
    return ((2 * n + 3) ** d - (2 * n + 1) ** d) / (2 * n + 1) ** d


TRIF_DEFAULTS = {
    "fuzz": [{"d": 2, "n": 5}, {"d": 3, "n": 3}],
    "fuzz_samples": 100000,
    "fuzz_p": 0.5,
    "torus": {"d": 2, "n": [1, 2], "samples": 20000, "p": 0.5, "q": 1, "burn_in": 200, "thinning": 5, "chains": 4},
    "seed": 1,
}
TRIF_COLUMNS = ["check", "d", "n", "samples", "value", "std_error", "bound", "holds"]


def run_trifurcation(params: dict, threads: int | None = None) -> Tables:
    params = {**TRIF_DEFAULTS, **params}
    seed = int(params["seed"])
    rows = []
    for k, geo in enumerate(params["fuzz"]):
        d, n = int(geo["d"]), int(geo["n"])
        g = build_box(d, n + 1)
        counter = clusters.TrifurcationCounter(g, n)
        rng = np.random.default_rng(item_seed(seed, 0, k))
        worst = 0
        violations = 0
        for _ in range(int(params["fuzz_samples"])):
            c = counter((rng.random(g.n_edges) < params["fuzz_p"]).astype(np.uint8))
            worst = max(worst, c)
            violations += c > counter.bound
        rows.append({
            "check": "count-bound", "d": d, "n": n, "samples": int(params["fuzz_samples"]),
            "value": worst, "bound": counter.bound, "holds": violations == 0,
        })
    tor = params.get("torus")
    if tor:
        d = int(tor["d"])
        for k, n in enumerate(tor["n"]):
            n = int(n)
            g = build_torus(d, 2 * n + 1)
            q = float(tor.get("q", 1))
            model = ModelSpec(g, float(tor["p"]) if tor.get("p") is not None else p_c(q), q, "periodic")
            cfg = SamplerConfig(
                model, item_seed(seed, 1, k), int(tor["samples"]), int(tor.get("burn_in", 200)),
                int(tor.get("thinning", 5)), int(tor.get("chains", 4)),
            )
            est = estimate(cfg, OriginTrifurcation(g, n), threads)[0]
            bound = trifurcation_bound_ratio(d, n)
            rows.append({
                "check": "origin-probability", "d": d, "n": n, "samples": est.n_samples, "value": est.mean,
                "std_error": est.std_error, "bound": bound, "holds": est.mean <= bound + 4 * est.std_error,
            })
    t = Tables()
    t.add("main", TRIF_COLUMNS, rows)
    return t


# ---------------------------------------------------------------------------
# arm events


class OriginArms:
    """Mean of A_2^e(n) over the d edges leaving the origin in positive directions."""

    def __init__(self, g: EdgeGraph, n: int):
        o = g.vertex_index((0,) * g.d)
        self.events = []
        for a in range(g.d):
            unit = [0] * g.d
            unit[a] = 1
            self.events.append(clusters.TwoArm(g, g.edge_between(o, g.vertex_index(tuple(unit))), n))

    def __call__(self, omega) -> float:
        return sum(ev(omega) for ev in self.events) / len(self.events)


class EdgePivotal:
    def __init__(self, g: EdgeGraph, e: int = 0):
        self.g, self.e = g, e

    def __call__(self, omega) -> float:
        return float(clusters.pivotal_for_circuit(self.g, omega, self.e))


FOURARM_DEFAULTS = {
    "variant": "torus-pivotal",
    "sizes": [4, 8, 16, 32],
    "d": 2,
    "p": 0.5,
    "q": 1,
    "samples": 100000,
    "burn_in": 200,
    "thinning": 5,
    "chains": 4,
    "box_factor": 2,
    "bound_factor": 1.5,
    "seed": 1,
}
FOURARM_COLUMNS = ["variant", "size", "p", "q", "samples", "estimate", "std_error", "tau_int", "scaled", "scaled_error"]
CHECK_COLUMNS = ["check", "item", "value", "threshold", "holds"]
SLOPE_COLUMNS = ["variant", "slope", "std_error", "band_lo", "band_hi"]


def fourarm_config(params: dict, size: int, k: int) -> tuple[SamplerConfig, object]:
    q = float(params["q"])
    p = float(params["p"]) if params.get("p") is not None else p_c(q)
    seed = item_seed(int(params["seed"]), k)
    if params["variant"] == "torus-pivotal":
        g = build_torus(int(params["d"]), size)
        model = ModelSpec(g, p, q, "periodic")
        obs = EdgePivotal(g, 0)
    elif params["variant"] == "box-A2":
        g = build_box(int(params["d"]), int(params["box_factor"]) * size)
        model = ModelSpec(g, p, q, params.get("bc", "free"))
        obs = OriginArms(g, size)
    else:
        raise ValueError(f"unknown variant {params['variant']!r}")
    cfg = SamplerConfig(model, seed, int(params["samples"]), int(params["burn_in"]), int(params["thinning"]), int(params["chains"]))
    return cfg, obs


def run_fourarm(params: dict, threads: int | None = None) -> Tables:
    params = {**FOURARM_DEFAULTS, **params}
    rows = []
    for k, size in enumerate(params["sizes"]):
        size = int(size)
        cfg, obs = fourarm_config(params, size, k)
        est = estimate(cfg, obs, threads)[0]
        rows.append({
            "variant": params["variant"], "size": size, "p": cfg.model.p, "q": cfg.model.q,
            "samples": est.n_samples, "estimate": est.mean, "std_error": est.std_error, "tau_int": est.tau_int,
            "scaled": size * est.mean, "scaled_error": size * est.std_error,
        })
    checks = bounded_checks(rows, float(params["bound_factor"]))
    slope_rows = []
    if len(rows) >= 2 and all(r["estimate"] > 0 for r in rows):
        fit = loglog_slope([r["size"] for r in rows], [r["estimate"] for r in rows], [r["std_error"] for r in rows])
        lo, hi = fit.band()
        slope_rows.append({"variant": params["variant"], "slope": fit.slope, "std_error": fit.std_error, "band_lo": lo, "band_hi": hi})
    t = Tables()
    t.add("main", FOURARM_COLUMNS, rows)
    t.add("checks", CHECK_COLUMNS, checks)
    t.add("slope", SLOPE_COLUMNS, slope_rows)
    return t


def bounded_checks(rows: list[dict], factor: float, z: float = 4.0) -> list[dict]:
    """size * estimate <= factor * (first value), allowing z combined sigmas."""
    if not rows:
        return []
    first = rows[0]
    out = []
    for r in rows[1:]:
        threshold = factor * first["scaled"]
        sigma_ = math.hypot(r["scaled_error"], factor * first["scaled_error"])
        out.append({
            "check": "scaled-bounded", "item": r["size"], "value": r["scaled"],
            "threshold": threshold, "holds": bool(r["scaled"] <= threshold + z * sigma_),
        })
    return out


# ---------------------------------------------------------------------------
# crossing clusters

CROSSINGS_DEFAULTS = {
    "m": [2, 4, 8],
    "q": 2,
    "p": None,
    "samples": 2000,
    "burn_in": 200,
    "thinning": 5,
    "chains": 4,
    "k_max": 4,
    "strip": "U",
    "restriction": "annulus",
    "spread": 0.5,
    "tail_m": 4,
    "seed": 1,
}
CROSSINGS_COLUMNS = ["m", "n", "p", "q", "observable", "samples", "mean", "std_error", "tau_int"]


def run_crossings(params: dict, threads: int | None = None) -> Tables:
    params = {**CROSSINGS_DEFAULTS, **params}
    q = float(params["q"])
    p = float(params["p"]) if params.get("p") is not None else p_c(q)
    rows = []
    second = {}
    tails = {}
    for k, m in enumerate(params["m"]):
        m = int(m)
        g = build_box(2, 5 * m)
        cfg = SamplerConfig(
            ModelSpec(g, p, q, "free"), item_seed(int(params["seed"]), k), int(params["samples"]),
            int(params["burn_in"]), int(params["thinning"]), int(params["chains"]),
        )
        res = estimate_moments_N(
            cfg, m, 5 * m, 2, strip=params["strip"], k_max=int(params["k_max"]),
            restriction=params["restriction"], threads=threads,
        )
        base = {"m": m, "n": 5 * m, "p": p, "q": q}
        for j, est in res.powers.items():
            rows.append({**base, "observable": "N" if j == 1 else f"N^{j}", "samples": est.n_samples,
                         "mean": est.mean, "std_error": est.std_error, "tau_int": est.tau_int})
        for kk, est in res.tail.items():
            rows.append({**base, "observable": f"P(N_{params['strip']}>={kk})", "samples": est.n_samples,
                         "mean": est.mean, "std_error": est.std_error, "tau_int": est.tau_int})
        second[m] = res.powers[2]
        tails[m] = res.tail
    checks = []
    if len(second) >= 2:
        checks.append(moment_spread_check(list(second.values()), float(params["spread"])))
    tm = int(params["tail_m"])
    if tm in tails and tails[tm]:
        checks.extend(tail_shape_checks(tails[tm]))
    t = Tables()
    t.add("main", CROSSINGS_COLUMNS, rows)
    t.add("checks", CHECK_COLUMNS, checks)
    return t


def moment_spread_check(ests, spread: float, z: float = 4.0) -> dict:
    """max over m is at most (1 + spread) x min over m, with z-sigma slack."""
    hi = max(ests, key=lambda e: e.mean)
    lo = min(ests, key=lambda e: e.mean)
    value = hi.mean / lo.mean if lo.mean > 0 else math.inf
    ok = hi.mean - z * hi.std_error <= (1 + spread) * (lo.mean + z * lo.std_error)
    return {"check": "second-moment-spread", "item": "", "value": value, "threshold": 1 + spread, "holds": bool(ok)}


def tail_shape_checks(tail: dict, z: float = 4.0) -> list[dict]:
    """P(N >= k) decreasing and log-convex in k, up to z sigmas."""
    ks = sorted(tail)
    P = {k: tail[k].mean for k in ks}
    S = {k: tail[k].std_error for k in ks}
    out = []
    for a, b in zip(ks, ks[1:]):
        diff = P[b] - P[a]
        out.append({"check": "tail-decreasing", "item": b, "value": diff, "threshold": 0.0,
                    "holds": bool(diff <= z * math.hypot(S[a], S[b]))})
    for a, b, c in zip(ks, ks[1:], ks[2:]):
        # log-convexity: P_b^2 <= P_a P_c
        gap = P[b] ** 2 - P[a] * P[c]
        sd = math.sqrt((2 * P[b] * S[b]) ** 2 + (P[c] * S[a]) ** 2 + (P[a] * S[c]) ** 2)
        out.append({"check": "tail-log-convex", "item": b, "value": gap, "threshold": 0.0, "holds": bool(gap <= z * sd)})
    return out
