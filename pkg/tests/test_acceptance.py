"""Acceptance criteria 1-8.

Each test prints one ``PASS``/``FAIL`` line (shown even without ``-s``) and
then asserts the same condition.  Run alone with::

    pytest tests/test_acceptance.py -v
"""

import math
import time
import warnings
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from tempop.spectra import TemperatureMap, invert_mean_energy
from tempop.spin_epr import (
    SpinEnsemble,
    brute_force_distributions,
    composite_spectrum,
    ensemble_energy,
    microcanonical_temperature,
    no_signaling_report,
    post_measurement_distribution,
    pre_measurement_distribution,
)
from tempop.thermometer import (
    OscillatorThermometer,
    ReadoutModelWarning,
    calibrate_temperature,
    eigenfunction_sum_oracle,
    position_variance,
    sample_readouts,
    temperature_density,
    thermal_position_density,
    thermal_width_squared,
)

pytestmark = pytest.mark.acceptance

N_GRID = (10, 10**2, 10**3, 10**4)
OMEGA_THZ = (1.0, 10.0, 100.0)
T_S_KELVIN = (10.0, 100.0, 300.0)


@pytest.fixture
def report(capsys):
    def _report(label, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {label}: {detail}")
        assert ok, detail

    return _report


def test_criterion_1_no_signaling(report):
    start = time.perf_counter()
    failures = []
    cases = 0
    for two_n in range(2, 41, 2):
        for m in range(two_n + 1):
            system = SpinEnsemble(two_n, m)
            cases += 1
            if pre_measurement_distribution(system).probabilities() != post_measurement_distribution(system).probabilities():
                failures.append((two_n, m))
    elapsed = time.perf_counter() - start
    report("1", not failures and elapsed < 10, f"{cases} cases, {len(failures)} mismatches, {elapsed:.2f} s (limit 10 s)")


def test_criterion_2_brute_force_equals_closed_form(report):
    start = time.perf_counter()
    failures = []
    cases = 0
    for two_n in range(2, 17, 2):
        for m in range(two_n + 1):
            system = SpinEnsemble(two_n, m)
            pre, post = brute_force_distributions(system)
            cases += 1
            if pre.probabilities() != pre_measurement_distribution(system).probabilities():
                failures.append((two_n, m, "pre"))
            if post.probabilities() != post_measurement_distribution(system).probabilities():
                failures.append((two_n, m, "post"))
    elapsed = time.perf_counter() - start
    report("2", not failures and elapsed < 60, f"{cases} cases, {len(failures)} mismatches, {elapsed:.2f} s (limit 60 s)")


def test_criterion_3_swapped_weights_witness(report):
    r = no_signaling_report(SpinEnsemble(4, 1), swapped_weights=True)
    ok = (not r.holds) and r.post[0] == Fraction(5, 6) and r.pre[0] == Fraction(1, 2)
    report("3", ok, f"swapped weights at 2N=4, M=1: P_post(0)={r.post[0]} vs P_pre(0)={r.pre[0]}")


def test_criterion_4_two_level_cross_check(report):
    worst = 0.0
    cases = 0
    for two_n in range(4, 41, 2):
        system0 = SpinEnsemble(two_n, 0)
        tmap = TemperatureMap(composite_spectrum(system0))
        for m in range(1, two_n // 2):
            system = SpinEnsemble(two_n, m)
            t = invert_mean_energy(tmap, ensemble_energy(system))
            ref = microcanonical_temperature(two_n, m)
            worst = max(worst, abs(t - ref) / ref)
            cases += 1
    report("4", worst < 1e-10, f"{cases} cases, worst relative error {worst:.2e} (limit 1e-10)")


def test_criterion_5_calibration_round_trip(report):
    th = OscillatorThermometer(1.0, 1.0)
    worst = 0.0
    for theta in np.logspace(-6, 3, 200):
        t_s = th.temperature_for_theta(theta)
        back = calibrate_temperature(th, position_variance(th, t_s))
        worst = max(worst, abs(back - t_s) / t_s)
    report("5", worst < 1e-12, f"200 points over theta in [1e-6, 1e3], worst relative error {worst:.2e} (limit 1e-12)")


def test_criterion_6_eigenfunction_sum_oracle(report):
    start = time.perf_counter()
    th = OscillatorThermometer.from_lab_units(10.0, 6.0)
    worst = 0.0
    for lam in (0.5, 1.0, 4.0):
        t_s = th.hbar * th.omega / (th.k_b * lam)
        xi = math.sqrt(thermal_width_squared(th, t_s))
        x = np.linspace(-5 * xi, 5 * xi, 101)
        closed = thermal_position_density(th, t_s, x)
        oracle = eigenfunction_sum_oracle(th, t_s, x)
        # compare in units of 1/xi so the 1e-8 bound is scale free
        worst = max(worst, float(np.max(np.abs(closed - oracle))) * xi)
    elapsed = time.perf_counter() - start
    ok = worst < 1e-8 and elapsed < 5
    report("6", ok, f"max |rho - oracle| * xi = {worst:.2e} (limit 1e-8), {elapsed:.2f} s (limit 5 s)")


def _si_grid(exact):
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ReadoutModelWarning)
        for omega in OMEGA_THZ:
            for n in N_GRID:
                th = OscillatorThermometer.from_lab_units(omega, 6.0, n)
                for t_s in T_S_KELVIN:
                    out[omega, n, t_s] = (th.theta(t_s), temperature_density(th, t_s, exact))
    return out


@pytest.fixture(scope="module")
def si_grid():
    return {"clt": _si_grid(False), "exact": _si_grid(True)}


def test_criterion_7a_uncertainty_decreases_with_n(report, si_grid):
    bad = []
    for model, grid in si_grid.items():
        for omega in OMEGA_THZ:
            for t_s in T_S_KELVIN:
                u = [grid[omega, n, t_s][1].uncertainty for n in N_GRID]
                if not all(a > b for a, b in zip(u, u[1:])):
                    bad.append((model, omega, t_s))
    report("7a", not bad, f"{len(OMEGA_THZ) * len(T_S_KELVIN)} (omega, T_S) series per model, non-decreasing: {bad or 'none'}")


def test_criterion_7b_expectation_accurate_when_hot(report, si_grid):
    # natural-unit sweep across theta plus the SI grid points with theta <= 0.1
    th1 = OscillatorThermometer(1.0, 1.0)
    thetas = (0.1, 0.05, 0.01, 1e-3)
    worst = {"exact": 0.0, "clt": 0.0}
    clt_small_n = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ReadoutModelWarning)
        for n in N_GRID:
            th = th1.with_count(n)
            for theta in thetas:
                t_s = th.temperature_for_theta(theta)
                for model, exact in (("exact", True), ("clt", False)):
                    err = abs(temperature_density(th, t_s, exact).bias) / t_s
                    if model == "clt" and n < 30:
                        clt_small_n = max(clt_small_n, err)
                    else:
                        worst[model] = max(worst[model], err)
    for model, grid in si_grid.items():
        for (omega, n, t_s), (theta, r) in grid.items():
            if theta <= 0.1 and not (model == "clt" and n < 30):
                worst[model] = max(worst[model], abs(r.bias) / t_s)
    ok = worst["exact"] < 0.01 and worst["clt"] < 0.01
    detail = (
        f"worst |bias|/T_S: exact law {worst['exact']:.2e} (N in 10..1e4), "
        f"CLT law {worst['clt']:.2e} (N >= 30), limit 1e-2; "
        f"info: CLT law at N=10 (outside its validity range) reaches {clt_small_n:.2e}"
    )
    report("7b", ok, detail)


def test_criterion_7c_cold_high_frequency_biased(report, si_grid):
    grid = si_grid["clt"]
    worst_key = max(grid, key=lambda k: abs(grid[k][1].bias) / k[2])
    theta, r = grid[worst_key]
    dev = abs(r.bias) / worst_key[2]
    small_n = [k for k in grid if k[1] == 10 and abs(grid[k][1].bias) / k[2] > 0.05]
    ok = bool(small_n)
    detail = (
        f"{len(small_n)} grid points at N=10 deviate by > 5%; largest deviation {dev:.1%} "
        f"at omega={worst_key[0]} THz, N={worst_key[1]}, T_S={worst_key[2]} K (theta={theta:.3g})"
    )
    report("7c", ok, detail)


def _sampler_check(model, exact):
    th = OscillatorThermometer(1.0, 1.0, 100)
    t_s = th.temperature_for_theta(1.0)
    r = temperature_density(th, t_s, exact)
    s = sample_readouts(th, t_s, 10**5, seed=20240611, model=model)
    v = s.valid_readouts
    z = (v.mean() - r.expectation) / (v.std(ddof=1) / math.sqrt(len(v)))
    ks = stats.kstest(v, r.conditional_cdf).statistic
    return z, ks


def test_criterion_8_sampler_consistency(report):
    start = time.perf_counter()
    pos_z, pos_ks = _sampler_check("positions", exact=True)
    clt_z, clt_ks = _sampler_check("clt", exact=False)
    elapsed = time.perf_counter() - start
    ok = abs(pos_z) < 3 and pos_ks < 0.02 and abs(clt_z) < 3 and clt_ks < 0.02 and elapsed < 30
    detail = (
        f"positions sampler vs exact density: z={pos_z:+.2f}, KS={pos_ks:.4f}; "
        f"CLT sampler vs CLT density: z={clt_z:+.2f}, KS={clt_ks:.4f}; "
        f"limits |z|<3, KS<0.02; {elapsed:.2f} s (limit 30 s)"
    )
    report("8", ok, detail)
