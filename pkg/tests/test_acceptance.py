"""End-to-end validation battery.

One test per numbered check; each prints a single PASS/FAIL line with its
measured quantities and wall time, so the battery doubles as a report.
Checks 12 and 13 reproduce minibatch experiments and run for minutes; use
``-m "not slow"`` to skip them during development.
"""

import math
import time

import numpy as np
import pytest

from specdyn import (
    PowerLawCovariance,
    RunConfig,
    SpecBoundConstants,
    SpikedCovariance,
    StageThresholds,
    SweepConfig,
    WeightState,
    detect_stages,
    gd_reduced_step,
    gd_safe_eta,
    gd_step,
    gd_turning_predicate,
    isotropic_state,
    manifold_coefficients,
    manifold_init,
    population_gradient,
    population_loss,
    run_sweep,
    run_trajectory,
    sample_batch,
    simulate_reduced,
    specgd_reduced_step,
    specgd_step,
    spiked_problem,
    verify_gd_barriers,
    verify_spec_traps,
)


def report(number, name, ok, detail, started):
    elapsed = time.time() - started
    print(f"ACCEPTANCE {number:2d} {'PASS' if ok else 'FAIL'} "
          f"[{elapsed:7.1f}s] {name}: {detail}")
    return ok


def spiked_cov(d, lam):
    v = np.zeros(d)
    v[1] = 1.0
    return SpikedCovariance(dim=d, lam=float(lam), spike_direction=v)


def test_01_reduced_full_equivalence():
    t0 = time.time()
    d = m = 16
    lam, rho0 = 8.0, 0.05
    problem = spiked_problem(d, m, lam)
    theta = math.sqrt(rho0 / (d + lam))
    worst = 0.0
    for algorithm in ("gd", "specgd"):
        eta = 1e-3 if algorithm == "gd" else 0.05 / math.sqrt(d + lam)
        state = manifold_init(d, m, theta)
        reduced = isotropic_state(rho0, lam, d)
        step_full = gd_step if algorithm == "gd" else specgd_step
        step_red = gd_reduced_step if algorithm == "gd" else specgd_reduced_step
        for _ in range(500):
            state = step_full(state, problem, eta)
            reduced = step_red(reduced, eta, lam, d)
            got = manifold_coefficients(state, problem)
            worst = max(worst, max(abs(g - e) for g, e in
                                   zip(got, (reduced.a, reduced.b, reduced.c))))
    ok = worst <= 1e-10
    assert report(1, "reduced/full equivalence", ok,
                  f"max |coeff error| = {worst:.3e} (tol 1e-10)", t0)


def test_02_gradient_correctness():
    t0 = time.time()
    d, m, h = 8, 5, 1e-5
    problem = spiked_problem(d, m, 6.0)
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        state = WeightState.from_weights(0.5 * rng.standard_normal((d, m)))
        delta = rng.standard_normal((d, m))
        plus = population_loss(WeightState.from_weights(state.W + h * delta), problem)
        minus = population_loss(WeightState.from_weights(state.W - h * delta), problem)
        numeric = (plus - minus) / (2 * h)
        analytic = np.sum(population_gradient(state, problem).full_gradient * delta)
        worst = max(worst, abs(numeric - analytic) / abs(numeric))
    ok = worst <= 1e-6
    assert report(2, "population gradient vs central differences", ok,
                  f"max rel error = {worst:.3e} (tol 1e-6)", t0)


def test_03_loss_correctness_monte_carlo():
    t0 = time.time()
    d, m, n = 6, 4, 10**6
    rng = np.random.default_rng(77)
    worst_sigmas = 0.0
    for sigma_idx, sigma in enumerate((0.0, 0.3)):
        problem = spiked_problem(d, m, 5.0, sigma=sigma)
        for trial in range(5):
            state = WeightState.from_weights(0.5 * rng.standard_normal((d, m)))
            batch = sample_batch(problem, n, seed=(303, sigma_idx, trial))
            proj = batch.inputs @ state.W
            sq = (batch.labels - np.einsum("ij,ij->i", proj, proj)) ** 2
            se = sq.std(ddof=1) / math.sqrt(n)
            gap = abs(population_loss(state, problem) - sq.mean()) / se
            worst_sigmas = max(worst_sigmas, gap)
    ok = worst_sigmas <= 3.0
    assert report(3, "population loss vs Monte Carlo", ok,
                  f"worst deviation = {worst_sigmas:.2f} standard errors (tol 3)", t0)


def test_04_specgd_growth_stage_exactness():
    t0 = time.time()
    worst = 0.0
    for d in (100, 400):
        lam = d / 10.0
        eta = 0.05 / math.sqrt(d + lam)
        rho0 = 0.01
        mu = rho0 / (d + lam)
        traj = simulate_reduced(isotropic_state(rho0, lam, d), eta, lam, d,
                                200, "specgd")
        np1 = detect_stages(traj, StageThresholds(), "specgd").nprime1
        assert np1 is not None
        for k in range(np1):
            worst = max(worst, abs(math.sqrt(traj.a[k]) - (math.sqrt(mu) + k * eta)))
    ok = worst <= 1e-13
    assert report(4, "spectral growth-stage exactness", ok,
                  f"max |sqrt(a_k) - (sqrt(mu)+k eta)| = {worst:.2e} (tol 1e-13)", t0)


def test_05_gd_barriers():
    t0 = time.time()
    rng = np.random.default_rng(555)
    violations = 0
    runs = 0
    for _ in range(20):
        d = int(round(10 ** rng.uniform(1.0, math.log10(2000))))
        lam = float(10 ** rng.uniform(math.log10(math.log(d)), math.log10(d)))
        eta = gd_safe_eta(lam) / 2.0
        traj = simulate_reduced(isotropic_state(0.05, lam, d), eta, lam, d,
                                10**4, "gd")
        rep = verify_gd_barriers(traj, eta, lam, d)
        assert rep.precondition_ok
        violations += len(rep.violations)
        runs += 1
    ok = violations == 0
    assert report(5, "GD barrier invariance", ok,
                  f"{violations} violations across {runs} random (d, lam) runs "
                  "of 1e4 steps", t0)


def test_06_specgd_traps_floor_alignment():
    t0 = time.time()
    d, lam, kappa = 400, 40.0, 0.05
    eta = kappa / math.sqrt(d + lam)
    constants = SpecBoundConstants.from_kappa(kappa, eta)
    traj = simulate_reduced(isotropic_state(0.01, lam, d), eta, lam, d,
                            10**5, "specgd")
    rep = verify_spec_traps(traj, eta, lam, d, constants)
    ok = rep.status == "pass" and rep.nprime2 is not None
    assert report(6, "spectral traps, signal floor, alignment gap", ok,
                  f"status={rep.status}, nprime2={rep.nprime2}, "
                  f"{len(rep.violations)} violations over 1e5 steps", t0)


def test_07_turning_condition_equivalence():
    t0 = time.time()
    rng = np.random.default_rng(707)
    mismatches = 0
    steps_total = 0
    for run in range(10):
        d = int(rng.integers(20, 500))
        lam = float(rng.uniform(math.log(d), min(d, 200.0)))
        eta = gd_safe_eta(lam) * float(rng.uniform(0.4, 1.0))
        state = isotropic_state(float(rng.uniform(0.005, 0.08)), lam, d)
        for _ in range(10**4):
            nxt = gd_reduced_step(state, eta, lam, d)
            if gd_turning_predicate(state, lam, d) != (nxt.b <= state.b):
                mismatches += 1
            state = nxt
            steps_total += 1
    ok = mismatches == 0
    assert report(7, "turning predicate equals spike decrease", ok,
                  f"{mismatches} mismatches over {steps_total} steps", t0)


def test_08_spike_saturation_at_turning():
    t0 = time.time()
    d, lam = 2000, 200.0
    eta = 1.0 / (32.0 * (1.0 + lam))
    rho0 = 1.0 / math.log(d)
    traj = simulate_reduced(isotropic_state(rho0, lam, d), eta, lam, d, 4000, "gd")
    t1 = detect_stages(traj, StageThresholds(), "gd").T1
    assert t1 is not None
    spike_gap = abs(traj.spike_mass[t1] - 1.0 / 3.0)
    mass_gap = abs(traj.mass[t1] - 1.0 / 3.0)
    ok = spike_gap <= 0.05 and mass_gap <= 0.05
    assert report(8, "spike saturation level at turning", ok,
                  f"|B-1/3| = {spike_gap:.4f}, |r-1/3| = {mass_gap:.4f} (tol 0.05); "
                  f"the mass offset is (2/3)(a+C) + (B-K) >= (2/3) rho0 = "
                  f"{2 * rho0 / 3:.3f} at this initialization scale", t0)


def test_09_stage_time_scaling():
    t0 = time.time()
    dims = (100, 400, 1600)
    spec_t1 = []
    for d in dims:
        lam = d / 10.0
        eta = 0.05 / math.sqrt(d + lam)
        traj = simulate_reduced(isotropic_state(0.01, lam, d), eta, lam, d,
                                2000, "specgd")
        spec_t1.append(detect_stages(traj, StageThresholds(), "specgd").T1)
    spec_ratio = max(spec_t1) / min(spec_t1)

    gd_ratio_points = []
    eta_lam = 0.02
    for d in dims:
        lam = math.sqrt(d)
        eta = eta_lam / lam
        assert eta <= gd_safe_eta(lam)
        traj = simulate_reduced(isotropic_state(0.02, lam, d), eta, lam, d,
                                20000, "gd")
        t1 = detect_stages(traj, StageThresholds(), "gd").T1
        gd_ratio_points.append(t1 / math.log(d))
    gd_spread = max(gd_ratio_points) / min(gd_ratio_points)

    ok = spec_ratio <= 1.5 and gd_spread <= 1.3
    assert report(9, "stage-time scaling across dimension", ok,
                  f"spectral T1 = {spec_t1} (max/min {spec_ratio:.3f}, tol 1.5); "
                  f"GD T1/log d spread = {gd_spread:.3f} (tol 1.3)", t0)


def test_10_alignment_at_gd_turning():
    t0 = time.time()
    cells = []
    all_ok = True
    for d in (400, 1600):
        rho0 = 1.0 / math.log(d)
        for lam in (math.log(d), math.sqrt(d), d / 4.0):
            eta = 1.0 / (32.0 * (1.0 + lam))
            traj = simulate_reduced(isotropic_state(rho0, lam, d), eta, lam, d,
                                    60000, "gd")
            t1 = detect_stages(traj, StageThresholds(), "gd").T1
            align = traj.alignment[t1]
            bound = 3.0 * min(rho0 * lam / d, d**-0.5)
            cells.append((d, round(lam, 1), align, bound))
            all_ok = all_ok and align <= bound
    detail = "; ".join(f"d={d} lam={lam}: Align(T1)={a:.4f} vs {b:.4f}"
                       for d, lam, a, b in cells)
    assert report(10, "alignment bound at GD turning", all_ok, detail, t0)


def test_11_population_trajectory_shapes():
    t0 = time.time()
    d, lam, eta, rho0, horizon = 300, 10.0, 1e-3, 1e-2, 5000
    gd = simulate_reduced(isotropic_state(rho0, lam, d), eta, lam, d, horizon, "gd")
    spec = simulate_reduced(isotropic_state(rho0, lam, d), eta, lam, d, horizon,
                            "specgd")
    align0 = 1.0 / math.sqrt(d)

    def first_crossing(values, level):
        hits = np.nonzero(values >= level)[0]
        return int(hits[0]) if hits.size else None

    gd_dips = gd.alignment[1:].min() < align0
    spec_floor = spec.alignment.min() >= 0.5 * align0
    gd_hit = first_crossing(gd.alignment, 0.9)
    spec_hit = first_crossing(spec.alignment, 0.9)
    spec_faster = spec_hit is not None and (gd_hit is None or spec_hit < gd_hit)
    ok = gd_dips and spec_floor and spec_faster
    assert report(11, "population trajectory shapes", ok,
                  f"GD min align {gd.alignment[1:].min():.4f} < {align0:.4f}; "
                  f"spectral min {spec.alignment.min():.4f} >= {0.5 * align0:.4f}; "
                  f"0.9-crossings: spectral {spec_hit} vs GD {gd_hit}", t0)


@pytest.mark.slow
def test_12_learning_rate_heatmap():
    t0 = time.time()
    d, m, horizon, batch = 100, 50, 1000, 5000
    base = RunConfig(algorithm="gd", mode="empirical", d=d, m=m,
                     covariance=spiked_cov(d, 10.0), rho0=1e-2, horizon=horizon,
                     eta=1e-3, init="gaussian", batch_size=batch, seed=1205,
                     log_every=1)
    etas = np.logspace(-4, -1, 8)
    lams = np.logspace(0, 2, 8)
    gd_grid = run_sweep(SweepConfig(base=base, etas=etas, lambdas=lams, workers=2))
    spec_base = RunConfig(**{**base.__dict__, "algorithm": "specgd"})
    spec_grid = run_sweep(SweepConfig(base=spec_base, etas=etas, lambdas=lams,
                                      workers=2))

    separated = [
        (cell.eta, cell.lam)
        for cell, twin in zip(gd_grid.cells, spec_grid.cells)
        if cell.final_align < 0.5 and twin.final_align >= 0.9
    ]

    converged_ok = True
    checked = 0
    for cell in gd_grid.cells:
        if cell.eta <= 1.0 / (16.0 * (1.0 + cell.lam)) and cell.stage_times.T2 is not None:
            checked += 1
            converged_ok = converged_ok and cell.final_align >= 0.9

    ok = bool(separated) and converged_ok
    assert report(12, "learning-rate x spike-strength heatmap", ok,
                  f"{len(separated)} cells separate the algorithms "
                  f"(GD<0.5, spectral>=0.9); GD converged cells checked: {checked}, "
                  f"all >= 0.9: {converged_ok}", t0)


@pytest.mark.slow
def test_13_power_law_minibatch():
    t0 = time.time()
    d, m, horizon, batch = 100, 50, 2000, 500
    finals = {"gd": [], "specgd": []}
    for algorithm in finals:
        for seed in range(5):
            cfg = RunConfig(algorithm=algorithm, mode="empirical", d=d, m=m,
                            covariance=PowerLawCovariance(d, 2.0, basis_seed=0),
                            rho0=1e-2, horizon=horizon, eta=1e-3, init="gaussian",
                            batch_size=batch, seed=1300 + seed, log_every=10)
            finals[algorithm].append(run_trajectory(cfg).final_alignment)
    gap = float(np.median(finals["specgd"]) - np.median(finals["gd"]))
    ok = gap >= 0.2
    assert report(13, "power-law minibatch separation", ok,
                  f"median final alignment: spectral "
                  f"{np.median(finals['specgd']):.3f} vs GD "
                  f"{np.median(finals['gd']):.3f} (gap {gap:.3f}, tol 0.2)", t0)
