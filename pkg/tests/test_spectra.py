import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tempop.errors import ConvergenceError, DomainError, NumericalError, SpectrumFormatError
from tempop.spectra import (
    OUT_OF_DOMAIN,
    EnergySpectrum,
    TemperatureMap,
    dump_spectrum,
    energy_variance,
    invert_mean_energy,
    log_partition_function,
    mean_energy,
    parse_spectrum,
    partition_function,
    temperature_eigensystem,
)

TWO_LEVEL = EnergySpectrum(((0.0, 1), (2.0, 1)))
SPIN = EnergySpectrum(((-1.0, 1), (1.0, 1)))


def brute_mean(levels, tau):
    """Direct Boltzmann average over explicitly repeated levels."""
    flat = [e for e, g in levels for _ in range(g)]
    w = [math.exp(-e / tau) for e in flat]
    return sum(e * wi for e, wi in zip(flat, w)) / sum(w)


# -- partition function -------------------------------------------------------------


def test_partition_function_infinite_temperature_counts_states():
    assert partition_function(TWO_LEVEL, math.inf) == 2.0
    assert partition_function(TWO_LEVEL, 1e12) == pytest.approx(2.0, rel=1e-11)


def test_partition_function_two_levels_unit_temperature():
    # 1 + e^-2, evaluated to 40 digits with mpmath
    assert partition_function(TWO_LEVEL, 1.0) == pytest.approx(1.135335283236612691893999, rel=1e-15)


@pytest.mark.parametrize("energy,g,tau", [(0.0, 3, 1.0), (1.5, 7, 0.4), (-2.0, 4, 3.0)])
def test_partition_function_single_degenerate_level(energy, g, tau):
    sp = EnergySpectrum(((energy, g),))
    assert partition_function(sp, tau) == pytest.approx(g * math.exp(-energy / tau), rel=1e-14)


def test_partition_function_overflow_guard():
    sp = EnergySpectrum(((-1000.0, 1), (0.0, 1)))
    with pytest.raises(NumericalError):
        partition_function(sp, 1.0)
    # the log form stays finite
    assert log_partition_function(sp, 1.0) == pytest.approx(1000.0)


def test_partition_function_rejects_nonpositive_tau():
    with pytest.raises(DomainError):
        partition_function(TWO_LEVEL, 0.0)
    with pytest.raises(DomainError):
        partition_function(TWO_LEVEL, -1.0)


def test_huge_degeneracies_are_carried_as_logs():
    sp = EnergySpectrum(((0.0, 1), (1.0, math.comb(4000, 2000))))
    assert math.isfinite(mean_energy(sp, 1.0))
    assert mean_energy(sp, 1.0) == pytest.approx(1.0, abs=1e-12)


# -- mean energy ----------------------------------------------------------------------


def test_mean_energy_limits():
    sp = EnergySpectrum(((0.0, 1), (1.0, 3), (4.0, 2)))
    assert mean_energy(sp, 1e-6) == 0.0
    assert mean_energy(sp, math.inf) == pytest.approx((0 + 3 + 8) / 6)
    assert mean_energy(sp, 1e9) == pytest.approx(11 / 6, rel=1e-8)


def test_mean_energy_spin_half():
    # tanh(ln(3)/2) = (3 - 1) / (3 + 1)
    assert mean_energy(SPIN, 2 / math.log(3)) == pytest.approx(-0.5, rel=1e-15)


@pytest.mark.parametrize("tau", [0.3, 1.0, 2.5, 17.0])
def test_mean_energy_matches_repeated_levels(tau):
    levels = ((0.0, 2), (0.7, 1), (1.1, 3))
    sp = EnergySpectrum(levels)
    assert mean_energy(sp, tau) == pytest.approx(brute_mean(levels, tau), rel=1e-14)


def test_energy_variance_is_derivative_of_mean():
    sp = EnergySpectrum(((0.0, 1), (0.5, 2), (2.0, 1)))
    tau, h = 0.8, 1e-5
    fd = (mean_energy(sp, tau + h) - mean_energy(sp, tau - h)) / (2 * h)
    assert energy_variance(sp, tau) / tau**2 == pytest.approx(fd, rel=1e-8)


def test_stability_wide_span_tiny_tau():
    sp = EnergySpectrum(((-5000.0, 1), (0.0, 10), (5000.0, 3)))
    for tau in (1e-12, 1e-6, 1.0, 1e3):
        assert math.isfinite(mean_energy(sp, tau))
        assert math.isfinite(log_partition_function(sp, tau))
    assert mean_energy(sp, 1e-12) == -5000.0


# -- inversion -----------------------------------------------------------------------------


def test_invert_spin_half():
    tmap = TemperatureMap(SPIN)
    # mpmath: 2 / ln 3
    assert invert_mean_energy(tmap, -0.5) == pytest.approx(1.820478453253674787, rel=1e-12)


def test_invert_rejects_boundaries():
    tmap = TemperatureMap(SPIN)
    with pytest.raises(DomainError, match="above infinite-temperature mean"):
        invert_mean_energy(tmap, 0.0)
    with pytest.raises(DomainError, match="ground state"):
        invert_mean_energy(tmap, -1.0)
    with pytest.raises(DomainError, match="ground state"):
        invert_mean_energy(tmap, -3.0)


def test_negative_branch_is_opt_in():
    tmap = TemperatureMap(SPIN, allow_negative=True)
    tau = invert_mean_energy(tmap, 0.5)
    assert tau == pytest.approx(-2 / math.log(3), rel=1e-12)
    assert mean_energy(SPIN, tau, allow_negative=True) == pytest.approx(0.5, rel=1e-14)
    with pytest.raises(DomainError):
        invert_mean_energy(tmap, 1.0)


def test_inversion_iteration_cap():
    tmap = TemperatureMap(SPIN, tolerance=1e-15, max_iter=3)
    with pytest.raises(ConvergenceError):
        invert_mean_energy(tmap, -0.5)


def test_map_needs_two_levels():
    with pytest.raises(DomainError):
        TemperatureMap(EnergySpectrum(((0.0, 5),)))


def test_round_trip_on_log_grid():
    sp = EnergySpectrum(((0.0, 1), (0.1, 3), (0.25, 2), (0.5, 1)))
    tmap = TemperatureMap(sp)
    for tau in np.logspace(-3, 3, 61):
        back = invert_mean_energy(tmap, mean_energy(sp, tau))
        assert abs(back - tau) / tau <= 10 * tmap.tolerance


@st.composite
def spectra_near_zero(draw):
    # ground at 0 and span <= 0.5 keeps exp(-span / 1e-3) inside double range
    n = draw(st.integers(2, 6))
    gaps = draw(st.lists(st.floats(0.02, 0.1), min_size=n - 1, max_size=n - 1))
    degs = draw(st.lists(st.integers(1, 50), min_size=n, max_size=n))
    energies = np.concatenate([[0.0], np.cumsum(gaps)])
    return EnergySpectrum(tuple(zip(energies.tolist(), degs)))


def _conditioning_floor(sp, tau):
    # a few ulps of E propagated through dE/dtau = Var / tau^2
    scale = max(abs(mean_energy(sp, tau)), sp.top_energy - sp.ground_energy)
    return 4 * np.finfo(float).eps * scale * tau**2 / energy_variance(sp, tau)


@given(spectra_near_zero(), st.floats(-3, 3))
@settings(max_examples=60, deadline=None)
def test_round_trip_property(sp, log_tau):
    tau = 10.0**log_tau
    tmap = TemperatureMap(sp)
    back = invert_mean_energy(tmap, mean_energy(sp, tau))
    assert abs(back - tau) <= 10 * tmap.tolerance * tau + _conditioning_floor(sp, tau)


@pytest.mark.xfail(
    strict=True,
    reason="near the infinite-temperature plateau tau is ill-conditioned in E: "
    "one rounding of E moves tau by about 1e-11 relative here",
)
def test_round_trip_flat_plateau():
    sp = EnergySpectrum(((0.0, 1), (0.03125, 4)))
    tmap = TemperatureMap(sp)
    back = invert_mean_energy(tmap, mean_energy(sp, 1000.0))
    assert abs(back - 1000.0) / 1000.0 <= 10 * tmap.tolerance


def test_round_trip_flat_plateau_within_conditioning():
    sp = EnergySpectrum(((0.0, 1), (0.03125, 4)))
    back = invert_mean_energy(TemperatureMap(sp), mean_energy(sp, 1000.0))
    floor = _conditioning_floor(sp, 1000.0)
    assert abs(back - 1000.0) <= 10 * 1e-12 * 1000.0 + floor
    assert floor / 1000.0 < 1e-9


@given(spectra_near_zero(), st.floats(-2, 2), st.floats(1.01, 10))
@settings(max_examples=60, deadline=None)
def test_monotonicity_property(sp, log_tau, factor):
    tau = 10.0**log_tau
    assert mean_energy(sp, tau * factor) > mean_energy(sp, tau)


# -- eigensystem ----------------------------------------------------------------------------


def test_eigensystem_two_level_boundaries():
    eig = temperature_eigensystem(TemperatureMap(SPIN))
    assert eig.temperatures == (OUT_OF_DOMAIN, OUT_OF_DOMAIN)
    assert eig.finite() == []


def test_eigensystem_three_levels():
    sp = EnergySpectrum(((0.0, 1), (1.0, 1), (2.0, 1)))
    tmap = TemperatureMap(sp)
    assert tmap.domain == (0.0, 1.0)
    eig = temperature_eigensystem(tmap)
    assert all(t is OUT_OF_DOMAIN for t in eig.temperatures)
    for e in (0.1, 0.5, 0.9):
        assert 0 < invert_mean_energy(tmap, e) < math.inf


def test_eigensystem_nondecreasing_inside_domain():
    sp = EnergySpectrum(((0.0, 1), (0.2, 4), (0.3, 20), (0.5, 200), (1.0, 500)))
    eig = temperature_eigensystem(TemperatureMap(sp))
    finite = eig.finite()
    assert len(finite) == 3
    temps = [t for _, t in finite]
    assert temps == sorted(temps)


def test_eigensystem_negative_branch():
    sp = EnergySpectrum(((0.0, 1), (1.0, 1), (2.0, 1), (3.0, 1)))
    eig = temperature_eigensystem(TemperatureMap(sp, allow_negative=True))
    assert eig.temperatures[0] is OUT_OF_DOMAIN and eig.temperatures[3] is OUT_OF_DOMAIN
    assert eig.temperatures[1] > 0 and eig.temperatures[2] < 0


# -- spectrum documents ----------------------------------------------------------------------


def test_spectrum_document_round_trip():
    sp = EnergySpectrum(((-1.0, 1), (0.5, 3)), "si")
    assert parse_spectrum(dump_spectrum(sp)) == sp


def test_spectrum_document_reports_offending_level():
    text = '{\n  "unit_system": "dimensionless",\n  "levels": [\n    {"energy": 0, "degeneracy": 1},\n    {"energy": 0, "degeneracy": 2}\n  ]\n}'
    with pytest.raises(SpectrumFormatError) as info:
        parse_spectrum(text)
    assert (info.value.line, info.value.column) == (5, 5)
    assert "line 5, column 5" in str(info.value)


@pytest.mark.parametrize(
    "text,line",
    [
        ('{"levels": [{"energy": 0, "degeneracy": 1},\n{"energy": 1, "degeneracy": 0}]}', 2),
        ('{"levels": [\n{"energy": "x", "degeneracy": 1}]}', 2),
        ('{"levels": []}', 1),
        ('{"unit_system": "cgs", "levels": [{"energy": 0, "degeneracy": 1}]}', 1),
        ('{"levels": [{"energy": 0, "degeneracy": 1},\n\n {"energy": 1}]}', 3),
        ('{"levels": [\n{"energy": 0, "degeneracy": 1,}]}', 2),
    ],
)
def test_spectrum_document_rejections(text, line):
    with pytest.raises(SpectrumFormatError) as info:
        parse_spectrum(text)
    assert info.value.line == line


def test_spectrum_invariants():
    with pytest.raises(DomainError):
        EnergySpectrum(((1.0, 1), (0.0, 1)))
    with pytest.raises(DomainError):
        EnergySpectrum(((0.0, 0),))
    with pytest.raises(DomainError):
        EnergySpectrum(())


def test_from_energies_merges_repeats():
    sp = EnergySpectrum.from_energies([1.0, 0.0, 1.0, 2.0, 1.0])
    assert sp.levels == ((0.0, 1), (1.0, 3), (2.0, 1))
    assert sp.state_count == 5
