"""Acceptance criteria, one test and one PASS/FAIL line each.

Run on its own with ``python3 -m pytest tests/test_acceptance.py -v`` or
``python3 tests/test_acceptance.py``; the summary lines are printed at the
end of the session.
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402
from percolab.chemdist import (INFINITY, chemical_distance, distance_field, geodesic,  # noqa: E402
                               modified_distance)
from percolab.clusters import label_clusters, nearest_giant_point  # noqa: E402
from percolab.errors import InsufficientDataError  # noqa: E402
from percolab.experiments import (ExperimentPlan, clear_caches, run_experiment, synthetic_laplace,  # noqa: E402
                                  synthetic_moments)
from percolab.lattice import LatticeBox, RenormScheme, deserialize, sample_configuration, serialize  # noqa: E402
from percolab.renorm import efron_stein_vminus, materialized_renorm_distance, renorm_distance  # noqa: E402
from percolab.subadd import estimate_mu  # noqa: E402

DATA = Path(__file__).parent / "data"
GOLDEN_DIGEST = "3596b16e3a3ad563604e8ba66210c2c606e60ae8150f1251f32be776e3e8fc14"

RESULTS: dict[int, str] = {}


def record(num: int, name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {num:2d} {name}: {detail}"
    RESULTS[num] = line
    print(line)
    assert ok, line


def summary() -> list[str]:
    return [RESULTS[k] for k in sorted(RESULTS)]


# ---------------------------------------------------------------- 1

def test_01_oracle_equivalence():
    sides = (5, 5)
    box = LatticeBox(sides)
    pts = oracles.box_points(sides, (0, 0))
    edges = oracles.box_edges(sides, (0, 0))
    rng = np.random.default_rng(101)
    mismatches, n_inf = 0, 0
    for i in range(200):
        config = sample_configuration(box, (0.3, 0.5, 0.7)[i % 3], int(rng.integers(2 ** 63)))
        D, idx = oracles.floyd_warshall(pts, edges, config.open.tolist())
        for a in pts:
            mismatches += int(not np.array_equal(distance_field(config, a).reshape(-1), D[idx[a]]))
        n_inf += int(np.isinf(D).any())
    worst = 0.0
    for _ in range(100):
        s = tuple(int(v) for v in rng.integers(3, 8, 2))
        o = tuple(int(v) for v in rng.integers(-3, 1, 2))
        b = LatticeBox(s, o)
        t = int(rng.integers(1, 4))
        K = float(rng.choice([4.5, 6.0, 17.0]))
        config = sample_configuration(b, float(rng.choice([0.3, 0.5, 0.7])), int(rng.integers(2 ** 63)))
        x, y = b.vertex(int(rng.integers(b.n_vertices))), b.vertex(int(rng.integers(b.n_vertices)))
        want = oracles.renorm_oracle(s, o, config.open.tolist(), t, K, x, y)
        scheme = RenormScheme(t, K, rho=1.0)
        worst = max(worst, abs(renorm_distance(config, scheme, x, y) - want),
                    abs(materialized_renorm_distance(config, scheme, x, y) - want))
    ok = mismatches == 0 and n_inf > 0 and worst <= 1e-9
    record(1, "oracle equivalence", ok,
           f"chemical mismatching fields={mismatches}/5000, configs with inf={n_inf}/200; "
           f"renorm max |diff|={worst:.1e} (tol 1e-9) on 100 instances")


# ---------------------------------------------------------------- 2

def test_02_p1_identities():
    clear_caches()
    box = LatticeBox((21, 21), (-10, -10))
    f = distance_field(sample_configuration(box, 1.0, 0), (0, 0)).reshape(-1)
    l1_ok = bool(np.array_equal(f, np.abs(box.coords).sum(axis=1)))
    var = run_experiment(ExperimentPlan("variance", p=1.0, ns=(4, 8, 16, 32), replicates=30))
    var_ok = all(c["variance"] == 0 for c in var.cells)
    mu = estimate_mu((1, 0), (4, 8, 12, 16), 1.0, 30, 0, margin=4)
    mu_ok = mu.mu == 1.0 and mu.ci == (1.0, 1.0)
    shape = run_experiment(ExperimentPlan("shape", p=1.0, side=121, ts=(20, 40, 50), seed=0))
    shape_ok = all(c["violations"] == 0 for c in shape.cells)
    skel_max = []
    for x in ((8, 0), (5, 3), (4, 4), (-7, 2)):
        rep = run_experiment(ExperimentPlan("skeleton", p=1.0, direction=x, ns=(1, 2, 4, 8), replicates=30))
        skel_max += [c["max_skeleton"] - c["bound"] for c in rep.cells]
    skel_ok = max(skel_max) <= 0
    record(2, "p=1 identities", l1_ok and var_ok and mu_ok and shape_ok and skel_ok,
           f"D=l1 on 21x21: {l1_ok}; Var D*=0: {var_ok}; mu(e1)={mu.mu} ci={mu.ci}; "
           f"shape violations={[c['violations'] for c in shape.cells]}; "
           f"max(skeleton - (2n+1))={max(skel_max)}")


# ---------------------------------------------------------------- 3

def test_03_pathwise_laws():
    rng = np.random.default_rng(303)
    failures = {}

    box = LatticeBox((15, 15), (-7, -7))
    n_tri = 0
    for _ in range(40):
        config = sample_configuration(box, 0.7, int(rng.integers(2 ** 63)))
        lab = label_clusters(config)
        if not lab.valid:
            continue
        for _ in range(50):
            x, y, z = (box.vertex(int(i)) for i in rng.integers(0, box.n_vertices, 3))
            if modified_distance(config, lab, x, z) > (modified_distance(config, lab, x, y)
                                                       + modified_distance(config, lab, y, z)):
                failures["subadditivity"] = failures.get("subadditivity", 0) + 1
            n_tri += 1

    mono = LatticeBox((12, 12))
    for _ in range(1000):
        config = sample_configuration(mono, 0.6, int(rng.integers(2 ** 63)))
        closed = np.flatnonzero(~config.open)
        e = int(closed[rng.integers(closed.size)])
        src = mono.vertex(int(rng.integers(mono.n_vertices)))
        if np.any(distance_field(config.with_edges([e], [True]), src) > distance_field(config, src)):
            failures["monotonicity"] = failures.get("monotonicity", 0) + 1

    dom = LatticeBox((40, 40), (-20, -20))
    n_dom = 0
    for _ in range(1000):
        config = sample_configuration(dom, 0.7, int(rng.integers(2 ** 63)))
        lab = label_clusters(config)
        if not lab.valid:
            continue
        xs, ys = nearest_giant_point(lab, (0, 0)), nearest_giant_point(lab, (12, 0))
        D = modified_distance(config, lab, (0, 0), (12, 0))
        t = int(rng.choice([2, 4, 8]))
        if renorm_distance(config, RenormScheme(t), xs, ys) > D + 1e-9:
            failures["domination"] = failures.get("domination", 0) + 1
        n_dom += 1

    es_box = LatticeBox((36, 36), (-18, -18))
    scheme = RenormScheme(4, 17)
    worst_cap = 0.0
    for r in range(1000):
        config = sample_configuration(es_box, 0.7, int(rng.integers(2 ** 63)))
        es = efron_stein_vminus(config, scheme, (0, 0), (8, 0), 1, r)
        worst_cap = max(worst_cap, es.v_minus / es.cap)
    if worst_cap > 1:
        failures["vminus_cap"] = 1

    skel = run_experiment(ExperimentPlan("skeleton", p=0.7, direction=(8, 0), ns=(2, 4), replicates=100,
                                         C=1.0, seed=7, h_replicates=100))
    n_skel = sum(c["count"] for c in skel.cells)

    geo = LatticeBox((20, 20))
    n_geo = 0
    for _ in range(1000):
        config = sample_configuration(geo, 0.65, int(rng.integers(2 ** 63)))
        a, b = geo.vertex(int(rng.integers(geo.n_vertices))), geo.vertex(int(rng.integers(geo.n_vertices)))
        d = chemical_distance(config, a, b)
        if d == INFINITY:
            continue
        path = geodesic(config, a, b)
        if not (path.length == d and path.is_simple() and path.is_open_in(config)):
            failures["geodesic"] = failures.get("geodesic", 0) + 1
        n_geo += 1

    record(3, "pathwise laws", not failures,
           f"violations={failures or 0}; triples={n_tri}, flips=1000, domination={n_dom}, "
           f"max V-/cap={worst_cap:.4f} over 1000, skeletons={n_skel}, geodesics={n_geo}")


# ---------------------------------------------------------------- 4

def test_04_efron_stein():
    plan = ExperimentPlan("efron-stein", p=0.7, n=20, t=4, K=17, replicates=300, resamples=10, seed=404)
    rep = run_experiment(plan)
    c = rep.cells[0]
    slack = 3 * math.hypot(c["var_stderr"], c["vminus_stderr"])
    ok = c["var"] <= c["mean_vminus"] + slack
    record(4, "Efron-Stein", ok,
           f"Var(D^t)={c['var']:.2f} <= E[V-]={c['mean_vminus']:.2f} + 3 se ({slack:.2f}); "
           f"300 x 10 resamples")


# ---------------------------------------------------------------- 5, 6

CELL_PLAN = dict(p=0.7, ns=(16, 32, 64, 128, 256), replicates=500, seed=505)


def test_05_variance_scaling():
    ns = CELL_PLAN["ns"]
    cal = run_experiment(ExperimentPlan("variance", ns=ns, replicates=500,
                                        hook=synthetic_moments(lambda n: n * math.log1p(n))))
    cal_ok = abs(cal.fits["exponent"] - 1.0) <= 0.1
    rep = run_experiment(ExperimentPlan("variance", **CELL_PLAN))
    v = rep.verdict("variance_exponent_below_2")
    ok = cal_ok and v.passed
    lo, hi = rep.fits["exponent_ci"]
    record(5, "variance scaling", ok,
           f"exponent {rep.fits['exponent']:.3f}, 95% CI [{lo:.3f}, {hi:.3f}] (< 2); raw log-log "
           f"{rep.fits['raw_exponent']:.3f}; calibration on n log(1+n): {cal.fits['exponent']:.3f} (1 +- 0.1)")


def test_06_mean_gap():
    rep = run_experiment(ExperimentPlan("gap", **CELL_PLAN))
    g = [c["gap"] for c in rep.cells]
    ci = [c["gap_ci"] for c in rep.cells]
    nonneg = all(gi >= -ci_i for gi, ci_i in zip(g, ci))
    bounded = rep.verdict("normalized_gap_bounded")
    ok = nonneg and bounded.passed
    record(6, "mean gap", ok,
           f"mu={rep.fits['mu']:.4f}; min(g + CI)={min(a + b for a, b in zip(g, ci)):.4f} (>= 0); "
           f"normalized gap trend CI low={bounded.value:.3f} (<= 0), max normalized gap "
           f"{rep.fits['normalized_gap_max']:.3f}")


# ---------------------------------------------------------------- 7

def test_07_tail_profile():
    cal = run_experiment(ExperimentPlan("tail", n=128, replicates=20000, window=(0.5, 3.0), seed=707,
                                        hook=synthetic_laplace(1.5)))
    cal_err = abs(cal.fits["slope"] + 1.5) / 1.5
    try:
        rep = run_experiment(ExperimentPlan("tail", p=0.7, n=128, replicates=2000, seed=707))
        v = rep.verdict("tail_exponential")
        ok, detail = v.passed and cal_err <= 0.1, (f"slope={rep.fits['slope']:.3f}, r2={rep.fits['r2']:.3f} "
                                                    f"on [1+log n, sqrt n]")
    except InsufficientDataError as err:
        ok, detail = False, f"window [1+log 128, sqrt 128] = [5.85, 11.31]: {err}"
    record(7, "tail profile", ok, f"{detail}; Laplace calibration error {cal_err:.1%} (<= 10%)")


# ---------------------------------------------------------------- 8

def test_08_shape_corridor():
    rep = run_experiment(ExperimentPlan("shape", p=0.7, side=1024, ts=(50, 100, 150), seed=808))
    fr = {c["t"]: c["fraction"] for c in rep.cells}
    ok = fr[100] <= 0.01 and fr[150] <= 0.01
    record(8, "shape corridor", ok,
           f"C={rep.fits['C']:.3f} fitted at t=50; violation fraction t=100: {fr[100]:.2e}, "
           f"t=150: {fr[150]:.2e} (<= 1%)")


# ---------------------------------------------------------------- 9

def test_09_renorm_agreement():
    rep = run_experiment(ExperimentPlan("renorm", p=0.7, n=64, ts=(2, 4, 8, 16), replicates=300, seed=909))
    v = rep.verdict("disagreement_nonincreasing")
    freqs = ", ".join(f"t={c['t']}: {c['frequency']:.3f}" for c in rep.cells)
    record(9, "renormalization agreement", v.passed and rep.verdict("domination").passed,
           f"P(D^t != D*) {freqs}; worst increase beyond 2 se {v.value:.3f} (<= 0); 300 replicates")


# ---------------------------------------------------------------- 10

def test_10_cluster_tails():
    rep = run_experiment(ExperimentPlan("cluster-tails", p=0.7, side=64, replicates=10000, seed=1010))
    parts, ok = [], True
    for v in rep.verdicts:
        ok &= v.passed
        counts = [r["exceed_count"] for r in rep.series[v.name.replace("_tail", "")]]
        parts.append(f"{v.name} rate={v.value['rate']} r2={v.value['r2']} exceed counts={counts}")
    record(10, "cluster tails", ok, "; ".join(parts) + " (need rate > 0, r2 >= 0.9)")


# ---------------------------------------------------------------- 11

def test_11_reproducibility():
    box = LatticeBox((64, 64), (-32, -32))
    digests_ok = all(sample_configuration(box, 0.7, s).digest() == sample_configuration(box, 0.7, s).digest()
                     for s in range(20))
    payloads = []
    for _ in range(2):
        clear_caches()
        payloads.append(run_experiment(ExperimentPlan("gap", p=0.7, ns=(8, 16, 32, 64), replicates=50,
                                                      seed=1111)).payload_json())
    data = (DATA / "golden_4x3.perc").read_bytes()
    cfg = deserialize(data)
    golden_ok = serialize(cfg) == data and cfg.digest() == GOLDEN_DIGEST and \
        serialize(sample_configuration(cfg.box, cfg.p, cfg.seed)) == data
    ok = digests_ok and payloads[0] == payloads[1] and golden_ok
    record(11, "reproducibility", ok,
           f"digests stable: {digests_ok}; payloads identical: {payloads[0] == payloads[1]}; "
           f"golden PERCCFG1 stable: {golden_ok}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
