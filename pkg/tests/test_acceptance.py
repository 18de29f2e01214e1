"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines and measurements. Two legs are expected to fail on this build
machine and are documented in the reviewer notes: the transparent-boundary
equivalence at K=25 (the pi/6 analyticity sector caps the contour accuracy
near 1e-4 at 25 nodes) and the 1->4 worker speedup (two cores whose
combined BLAS throughput is ~1.2x a single core).
"""

import time

import numpy as np

import fraccq
from fraccq import (
    CQConfig,
    direct_cq,
    fast_solve,
    radau_iia,
    transform_initial,
)
from fraccq import fastcq
from fraccq.caputo import EXAMPLE1_MATRIX
from fraccq.cli import selftest_checks
from fraccq.operators import ConstantInhomogeneity, Problem, dense_operator


def report(name, ok, detail):
    print(f"[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'} ({detail})")


# ---------------------------------------------------------------------------


def test_criterion_1_convergence_orders(example1):
    """Fitted error slopes 1.0 / 3.0 / 4.5 (+-0.3) at t = N h = 10; K=10
    saturates while K=25 reaches 1e-8. Budget 5 minutes."""
    t_start = time.time()
    targets = {1: 1.0, 2: 3.0, 3: 4.5}
    ladders = {1: (80, 160, 320, 640, 1280, 2560),
               2: (160, 320, 640, 1280, 2560),
               3: (20, 40, 80, 160, 320, 640)}
    slopes = {}
    min_err_25 = np.inf
    for s, ladder in ladders.items():
        errs, hs = [], []
        for n in ladder:
            h = 10.0 / n
            cfg = CQConfig(tableau=radau_iia(s), h=h, N=n, K=25)
            u, _ = fast_solve(example1, cfg)
            errs.append(float(np.max(np.abs(u - example1.u_exact(10.0)))))
            hs.append(h)
        errs, hs = np.array(errs), np.array(hs)
        min_err_25 = min(min_err_25, errs.min())
        mask = errs > 1e-7  # pre-saturation range
        slopes[s] = float(np.polyfit(np.log(hs[mask]), np.log(errs[mask]), 1)[0])

    floor_errs = []
    for n in ladders[3]:
        cfg = CQConfig(tableau=radau_iia(3), h=10.0 / n, N=n, K=10)
        u, _ = fast_solve(example1, cfg)
        floor_errs.append(float(np.max(np.abs(u - example1.u_exact(10.0)))))
    k10_floor = min(floor_errs)
    elapsed = time.time() - t_start

    detail = (f"slopes={{1: {slopes[1]:.2f}, 2: {slopes[2]:.2f}, 3: {slopes[3]:.2f}}}, "
              f"K=10 floor {k10_floor:.1e}, K=25 min err {min_err_25:.1e}, {elapsed:.0f}s")
    ok = (all(abs(slopes[s] - targets[s]) <= 0.3 for s in targets)
          and k10_floor > 1e-6 and min_err_25 <= 1e-8 and elapsed <= 300)
    report("convergence-orders", ok, detail)
    for s, target in targets.items():
        assert abs(slopes[s] - target) <= 0.3, f"s={s}: slope {slopes[s]:.3f}"
    assert k10_floor > 1e-6, "K=10 run shows no saturation floor"
    assert min_err_25 <= 1e-8, "K=25 run does not reach 1e-8"
    assert elapsed <= 300


def test_criterion_2_fast_direct_equivalence(example1, example2_small, tbc_problem_small):
    """|fast - direct| <= 1e-6 * max(1, |u|) at K=25 for all three backends
    and N in {50, 200, 500}. Budget 10 minutes.

    Note: the transparent-boundary legs cannot meet 1e-6 at K=25; the
    operator's sector is only pi/6 wide, which caps the 25-node contour
    accuracy near 1e-4 (see the reviewer notes). They are asserted as
    specified and fail honestly.
    """
    t_start = time.time()
    cases = [
        ("dense-2x2", example1, radau_iia(3), 1.0, True),
        ("subdiffusion-8^3", example2_small, radau_iia(3), 1.0, True),
        ("tbc-101", tbc_problem_small, radau_iia(3), 0.5, False),
    ]
    failures = []
    for name, prob, tab, t_end, real in cases:
        for n in (50, 200, 500):
            cfg = CQConfig(tableau=tab, h=t_end / n, N=n, K=25, real_input=real)
            u_fast, _ = fast_solve(prob, cfg)
            u_dir = direct_cq(prob, cfg)
            diff = float(np.max(np.abs(u_fast - u_dir)))
            bound = 1e-6 * max(1.0, float(np.max(np.abs(u_dir))))
            ok = diff <= bound
            print(f"  {name} N={n}: |fast-direct|={diff:.2e} bound={bound:.2e} "
                  f"{'ok' if ok else 'VIOLATION'}")
            if not ok:
                failures.append((name, n, diff, bound))
    elapsed = time.time() - t_start
    report("fast-direct-equivalence", not failures and elapsed <= 600,
           f"{len(failures)} violation(s), {elapsed:.0f}s")
    assert elapsed <= 600
    assert not failures, (
        f"equivalence violations {failures}; the TBC legs are a known spec "
        "calibration gap at K=25 in the pi/6 sector (reviewer notes)"
    )


def test_criterion_3_complexity_counters():
    """Exact counter identities for 10 random (N, kappa, Lambda) triples."""
    rng = np.random.default_rng(314159)
    zero_g = Problem(family=dense_operator(None, EXAMPLE1_MATRIX), alpha=0.5,
                     g=ConstantInhomogeneity(np.zeros(2)))
    checked = 0
    while checked < 10:
        n = int(rng.integers(25, 2500))
        kappa = int(rng.integers(5, 41))
        lam = int(rng.choice([2, 3, 5, 7]))
        k_nodes = int(rng.integers(8, 31))
        if n <= kappa + 1:
            continue
        cfg = CQConfig(tableau=radau_iia(2), h=1e-3, N=n, K=k_nodes,
                       Lambda=lam, kappa=kappa, J=4 * kappa, real_input=True)
        _, stats = fast_solve(zero_g, cfg)
        # L = ceil(log_Lambda(N / (kappa+1))), evaluated in exact integers
        levels = 0
        cap = kappa + 1
        while n > cap:
            cap *= lam
            levels += 1
        assert lam ** (levels - 1) * (kappa + 1) < n <= lam**levels * (kappa + 1)
        assert stats.resolvent_solves == levels * (k_nodes + 1), (
            f"N={n} kappa={kappa} Lambda={lam}: solves {stats.resolvent_solves}")
        assert stats.rk_steps == (k_nodes + 1) * (n - kappa - 1), (
            f"N={n} kappa={kappa} Lambda={lam}: steps {stats.rk_steps}")
        checked += 1
    report("complexity-counters", True, "10 random triples exact")


def test_criterion_4_scaling_shape():
    """March time linear in N (exponent 1.0 +- 0.2), resolvent time
    sublinear, first-block time flat (ratio <= 2) over N = 1e3..1e5 at
    grid 16^3; >= 2x march speedup from 1 to 4 workers.

    The speedup leg is hardware-bound: this machine has two cores whose
    combined BLAS throughput is ~1.2x one core (measured on independent
    zgemm streams), so the 2x target cannot be met; asserted as specified.
    """
    mp = fraccq.example2_problem(16)
    problem = mp.problem
    tab = radau_iia(3)
    t_end = 123.45

    def run(n, workers):
        cfg = CQConfig(tableau=tab, h=t_end / n, N=n, K=20, kappa=12, J=14,
                       workers=workers)
        _, stats = fast_solve(problem, cfg)
        return stats.wall_times

    run(1000, 2)  # warm caches before timing
    ladder = (1000, 10000, 100000)
    march, resolvent, first_block = [], [], []
    for n in ladder:
        reps = [run(n, 2) for _ in range(3)]
        march.append(float(np.median([r["rk_marches"] for r in reps])))
        resolvent.append(float(np.median([r["resolvent_solves"] for r in reps])))
        first_block.append(float(np.median([r["first_block"] for r in reps])))
    exponent = float(np.polyfit(np.log(ladder), np.log(march), 1)[0])
    fb_ratio = max(first_block) / min(first_block)
    res_growth = resolvent[-1] / resolvent[0]
    n_growth = ladder[-1] / ladder[0]

    speed_n = 20000
    t1 = float(np.median([run(speed_n, 1)["rk_marches"] for _ in range(3)]))
    t4 = float(np.median([run(speed_n, 4)["rk_marches"] for _ in range(3)]))
    speedup = t1 / t4

    detail = (f"march exponent {exponent:.2f}, first-block ratio {fb_ratio:.2f}, "
              f"resolvent growth {res_growth:.1f}x over {n_growth:.0f}x N, "
              f"march speedup 1->4 workers {speedup:.2f}x")
    ok = (abs(exponent - 1.0) <= 0.2 and fb_ratio <= 2.0
          and resolvent[-1] >= resolvent[0] and res_growth <= np.sqrt(n_growth)
          and speedup >= 2.0)
    report("scaling-shape", ok, detail)
    assert abs(exponent - 1.0) <= 0.2, f"march exponent {exponent:.3f}"
    assert fb_ratio <= 2.0, f"first-block ratio {fb_ratio:.2f}"
    assert resolvent[-1] >= resolvent[0] and res_growth <= np.sqrt(n_growth), (
        f"resolvent times {resolvent}")
    assert speedup >= 2.0, (
        f"march speedup 1->4 workers is {speedup:.2f}x; two-core machine with "
        "~1.2x combined BLAS throughput cannot reach 2x (reviewer notes)")


def test_criterion_5_weight_stability():
    """||W_n|| <= C (n h)^(alpha-1) e^(gamma n h) for n <= 1000, with C and
    gamma >= 0 fitted on n <= 100 (the source bound has gamma >= 0)."""
    tab = radau_iia(3)
    fam = dense_operator(None, EXAMPLE1_MATRIX)
    alpha, h = 0.5, 0.01
    ns = np.arange(1, 1001)
    w = fastcq.weight_matrices_direct(fam, tab, alpha, h, ns)
    norms = np.array([np.linalg.norm(w[i], 2) for i in range(len(ns))])
    nh = ns * h
    z = np.log(norms) - (alpha - 1) * np.log(nh)
    fit = ns <= 100
    gamma = max(0.0, float(np.polyfit(nh[fit], z[fit], 1)[0]))
    log_c = float(np.max(z[fit] - gamma * nh[fit]))
    margin = z - (log_c + gamma * nh)
    worst = float(np.max(margin))
    ok = worst <= np.log(1.05)
    report("weight-stability", ok,
           f"gamma={gamma:.3f} C={np.exp(log_c):.3f} worst margin e^{worst:.2f}")
    assert worst <= np.log(1.05), f"late-time growth beyond the fitted envelope: e^{worst:.3f}"


def test_criterion_6_contour_exponential_convergence():
    """Error vs K on the Schroedinger problem at t = 0.5 decays at least
    geometrically (trend ratio <= 0.7 per +5 nodes) until the kappa floor.

    Single steps wobble (quadrature error terms oscillate with K), so the
    decay rate is taken from the least-squares trend over the pre-floor
    range, which is the curve shape the criterion describes.
    """
    tab = radau_iia(3)
    problem, _ = transform_initial(fraccq.example3_problem(401, 2.0))
    h, n_steps = 0.00025, 2000  # t = 0.5
    cfg_ref = CQConfig(tableau=tab, h=h, N=n_steps, K=110, kappa=110, J=440,
                       real_input=False, workers=2)
    u_ref, _ = fast_solve(problem, cfg_ref)
    ks = np.arange(15, 55, 5)
    errs = []
    for k_nodes in ks:
        cfg = CQConfig(tableau=tab, h=h, N=n_steps, K=int(k_nodes), kappa=20,
                       J=80, real_input=False, workers=2)
        u, _ = fast_solve(problem, cfg)
        errs.append(float(np.max(np.abs(u - u_ref))))
    errs = np.array(errs)
    pre_floor = errs > 3.0 * errs.min()
    pre_floor[np.argmin(errs):] = False
    assert np.count_nonzero(pre_floor) >= 4, f"too few pre-floor points: {errs}"
    slope = float(np.polyfit(ks[pre_floor], np.log(errs[pre_floor]), 1)[0])
    ratio_per_5 = float(np.exp(5 * slope))
    # geometric-mean ratio per +5 nodes between the range endpoints
    count = int(np.count_nonzero(pre_floor))
    per5_endpoint = float((errs[pre_floor][-1] / errs[pre_floor][0]) ** (1.0 / (count - 1)))
    detail = (f"errors {errs[0]:.1e} -> {errs[-1]:.1e}, trend ratio/+5 "
              f"{ratio_per_5:.3f}, endpoint ratio/+5 {per5_endpoint:.3f}")
    ok = ratio_per_5 <= 0.7 and per5_endpoint <= 0.7
    report("contour-exponential-convergence", ok, detail)
    assert ratio_per_5 <= 0.7
    assert per5_endpoint <= 0.7


def test_criterion_7_tbc_reference_agreement():
    """[-2,2] n=801 K=50 vs [-8,8] n=1601 K=110 within 1e-4 in max norm on
    the aligned grid points, at every snapshot t = 0.05..1."""
    t_start = time.time()
    tab = radau_iia(3)
    run_problem, run_offset = transform_initial(fraccq.example3_problem(801, 2.0))
    ref_problem, ref_offset = transform_initial(fraccq.example3_problem(1601, 8.0))
    run_x = run_problem.family.x
    ref_x = ref_problem.family.x
    idx_run = np.arange(0, 801, 2)
    idx_ref = np.array([int(round((x + 8.0) / 0.01)) for x in run_x[idx_run]])
    assert float(np.max(np.abs(ref_x[idx_ref] - run_x[idx_run]))) < 1e-9

    h = 0.00025
    worst = 0.0
    for snap in range(1, 21):
        t = 0.05 * snap
        n = int(round(t / h))
        cfg = CQConfig(tableau=tab, h=h, N=n, K=50, kappa=20, J=80,
                       real_input=False, workers=2)
        u, _ = fast_solve(run_problem, cfg)
        cfg_ref = CQConfig(tableau=tab, h=h, N=n, K=110, kappa=60, J=240,
                           real_input=False, workers=2)
        u_ref, _ = fast_solve(ref_problem, cfg_ref)
        err = float(np.max(np.abs((u + run_offset)[idx_run]
                                  - (u_ref + ref_offset)[idx_ref])))
        worst = max(worst, err)
    elapsed = time.time() - t_start
    ok = worst <= 1e-4
    report("tbc-correctness", ok, f"worst snapshot error {worst:.2e}, {elapsed:.0f}s")
    assert worst <= 1e-4


def test_criterion_8_unit_property_suites():
    """The module invariant batteries (order conditions, Delta identity,
    eigendecomposition residuals, spectral-vs-dense, Vieta, Caputo power
    rule, DFT roundtrip) all pass; the full detail lives in the unit
    modules, this runs the condensed battery."""
    results = list(selftest_checks())
    for name, ok, detail in results:
        print(f"  {name}: {'ok' if ok else 'FAIL'} ({detail})")
    ok = all(r[1] for r in results)
    report("unit-property-suites", ok, f"{len(results)} batteries")
    assert ok
