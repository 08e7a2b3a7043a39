"""Discrete spectra, canonical averages and the energy <-> temperature map.

A temperature operator built on a Hamiltonian shares its eigenvectors and
replaces every energy eigenvalue ``E_n`` by ``f(E_n)``, where ``f`` inverts
the canonical mean energy

    E(tau) = sum_n g_n E_n exp(-E_n / k_B tau) / sum_n g_n exp(-E_n / k_B tau).

All Boltzmann sums are taken with energies shifted by a reference level (the
ground state for tau > 0, the top level for tau < 0) and with degeneracies
carried as logarithms, so binomial degeneracies far beyond float range are
fine.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .constants import DIMENSIONLESS, boltzmann, check_unit_system
from .errors import ConvergenceError, DomainError, NumericalError, SpectrumFormatError

# exp() of arguments outside this window over/underflows a double
_MAX_EXP = 709.0
_MIN_EXP = -745.0
_MAX_BRACKET_STEPS = 2100


class DomainMarker(enum.Enum):
    """Placeholder for a level whose energy has no finite temperature."""

    OUT_OF_DOMAIN = "out-of-domain"

    def __str__(self):
        return self.value


OUT_OF_DOMAIN = DomainMarker.OUT_OF_DOMAIN


@dataclass(frozen=True)
class EnergySpectrum:
    """Finite spectrum as ``(energy, degeneracy)`` pairs with increasing energy.

    In SI mode energies are joules and temperatures kelvin; in dimensionless
    mode ``k_B = 1``.
    """

    levels: tuple[tuple[float, int], ...]
    unit_system: str = DIMENSIONLESS
    _energies: np.ndarray = field(init=False, repr=False, compare=False)
    _log_deg: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        levels = tuple((float(e), int(g)) for e, g in self.levels)
        if not levels:
            raise DomainError("a spectrum needs at least one level")
        for i, (e, g) in enumerate(levels):
            if not math.isfinite(e):
                raise DomainError(f"level {i}: energy must be finite, got {e}")
            if g < 1:
                raise DomainError(f"level {i}: degeneracy must be >= 1, got {g}")
            if i and e <= levels[i - 1][0]:
                raise DomainError(f"level {i}: energies must be strictly increasing")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "unit_system", check_unit_system(self.unit_system))
        object.__setattr__(self, "_energies", np.array([e for e, _ in levels]))
        # math.log accepts arbitrarily large ints
        object.__setattr__(self, "_log_deg", np.array([math.log(g) for _, g in levels]))

    @classmethod
    def from_energies(cls, energies: Iterable[float], unit_system: str = DIMENSIONLESS):
        """Build a spectrum from a flat list of eigenvalues, merging exact repeats."""
        counts: dict[float, int] = {}
        for e in energies:
            counts[float(e)] = counts.get(float(e), 0) + 1
        return cls(tuple(sorted(counts.items())), unit_system)

    @property
    def energies(self) -> np.ndarray:
        return self._energies.copy()

    @property
    def degeneracies(self) -> tuple[int, ...]:
        return tuple(g for _, g in self.levels)

    @property
    def ground_energy(self) -> float:
        return self.levels[0][0]

    @property
    def top_energy(self) -> float:
        return self.levels[-1][0]

    @property
    def state_count(self) -> int:
        return sum(self.degeneracies)

    @property
    def k_b(self) -> float:
        return boltzmann(self.unit_system)

    def infinite_temperature_mean(self) -> float:
        """Degeneracy-weighted mean of all levels."""
        return _weighted_mean(self._energies, self._log_deg, self.ground_energy)

    def to_dict(self) -> dict:
        return {
            "unit_system": self.unit_system,
            "levels": [{"energy": e, "degeneracy": g} for e, g in self.levels],
        }


def _weighted_mean(energies, log_weights, reference):
    # mean as reference + weighted excess, so the excess keeps full precision
    w = np.exp(log_weights - log_weights.max())
    return reference + float(np.dot(energies - reference, w) / w.sum())


def _log_boltzmann_weights(spectrum: EnergySpectrum, tau: float):
    """Return ``(reference_energy, shifted log-weights)`` for temperature ``tau``."""
    energies = spectrum._energies
    if math.isinf(tau):
        return spectrum.ground_energy, spectrum._log_deg.copy()
    reference = spectrum.ground_energy if tau > 0 else spectrum.top_energy
    beta = 1.0 / (spectrum.k_b * tau)
    with np.errstate(over="ignore"):
        shifted = -(energies - reference) * beta
    # after the shift every argument is <= 0 unless tau has the wrong sign
    if np.any(shifted > _MAX_EXP):
        raise NumericalError(f"Boltzmann exponent overflow at tau={tau!r}")
    return reference, shifted + spectrum._log_deg


def _check_tau(tau: float, allow_negative: bool) -> float:
    tau = float(tau)
    if math.isnan(tau) or tau == 0.0:
        raise DomainError(f"temperature must be nonzero, got {tau}")
    if tau < 0 and not allow_negative:
        raise DomainError(
            f"negative temperature {tau} requires the negative-temperature branch to be enabled"
        )
    return tau


def log_partition_function(spectrum: EnergySpectrum, tau: float, allow_negative: bool = False) -> float:
    """Natural log of the partition function; never overflows."""
    tau = _check_tau(tau, allow_negative)
    reference, logw = _log_boltzmann_weights(spectrum, tau)
    top = logw.max()
    log_sum = top + math.log(float(np.exp(logw - top).sum()))
    if math.isinf(tau):
        return log_sum
    return log_sum - reference / (spectrum.k_b * tau)


def partition_function(spectrum: EnergySpectrum, tau: float, allow_negative: bool = False) -> float:
    """Canonical partition function ``Z = sum_n g_n exp(-E_n / k_B tau)``.

    Raises
    ------
    NumericalError
        If ``Z`` is not representable as a double (use
        :func:`log_partition_function` instead).
    """
    log_z = log_partition_function(spectrum, tau, allow_negative)
    if not _MIN_EXP < log_z < _MAX_EXP:
        raise NumericalError(f"partition function out of floating range (log Z = {log_z:.6g})")
    return math.exp(log_z)


def mean_energy(spectrum: EnergySpectrum, tau: float, allow_negative: bool = False) -> float:
    """Boltzmann-weighted mean energy at temperature ``tau``.

    ``tau = inf`` gives the degeneracy-weighted mean of the levels.
    """
    tau = _check_tau(tau, allow_negative)
    reference, logw = _log_boltzmann_weights(spectrum, tau)
    return _weighted_mean(spectrum._energies, logw, reference)


def energy_variance(spectrum: EnergySpectrum, tau: float, allow_negative: bool = False) -> float:
    """Canonical energy variance; ``d<E>/d tau = variance / (k_B tau^2)``."""
    tau = _check_tau(tau, allow_negative)
    reference, logw = _log_boltzmann_weights(spectrum, tau)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    excess = spectrum._energies - reference
    mu = float(np.dot(excess, w))
    return float(np.dot((excess - mu) ** 2, w))


def _solve_monotone(func, target, increasing, rtol, max_iter):
    """Find ``s > 0`` with ``func(s) = target`` for a monotone ``func``.

    Geometric bracket expansion from ``s = 1``, then bisection on the
    geometric midpoint until the bracket's relative width is below ``rtol``.
    """

    def below(s):
        v = func(s)
        return (v < target) if increasing else (v > target)

    lo = hi = 1.0
    steps = 0
    if below(1.0):
        hi = 2.0
        while below(hi):
            lo, hi = hi, hi * 2.0
            steps += 1
            if steps > _MAX_BRACKET_STEPS or math.isinf(hi):
                raise ConvergenceError("bracket expansion failed: target not reached at large temperature")
    else:
        lo = 0.5
        while not below(lo):
            hi, lo = lo, lo * 0.5
            steps += 1
            if steps > _MAX_BRACKET_STEPS or lo == 0.0:
                raise ConvergenceError("bracket expansion failed: target not reached at small temperature")

    for _ in range(max_iter):
        if hi / lo - 1.0 <= rtol:
            return math.sqrt(lo * hi)
        mid = math.sqrt(lo * hi)
        v = func(mid)
        if v == target:
            return mid
        if (v < target) == increasing:
            lo = mid
        else:
            hi = mid
    raise ConvergenceError(f"bisection did not converge in {max_iter} iterations (bracket [{lo!r}, {hi!r}])")


@dataclass(frozen=True)
class TemperatureMap:
    """Monotone bijection between canonical mean energy and temperature.

    ``allow_negative`` opens the ``tau < 0`` branch, which covers energies
    between the infinite-temperature mean and the top level.
    """

    spectrum: EnergySpectrum
    tolerance: float = 1e-12
    max_iter: int = 200
    allow_negative: bool = False

    def __post_init__(self):
        if len(self.spectrum.levels) < 2:
            raise DomainError("a temperature map needs at least two distinct levels")
        if not 0 < self.tolerance < 1:
            raise DomainError(f"tolerance must lie in (0, 1), got {self.tolerance}")
        if self.max_iter < 1:
            raise DomainError("max_iter must be positive")

    @property
    def domain(self) -> tuple[float, float]:
        """Open energy interval on which the positive-temperature inverse exists."""
        return self.spectrum.ground_energy, self.spectrum.infinite_temperature_mean()

    def mean_energy(self, tau: float) -> float:
        return mean_energy(self.spectrum, tau, self.allow_negative)

    def invert(self, energy: float) -> float:
        return invert_mean_energy(self, energy)


def invert_mean_energy(tmap: TemperatureMap, energy: float) -> float:
    """Return the temperature whose canonical mean energy equals ``energy``.

    Raises
    ------
    DomainError
        ``energy`` is at or below the ground state, or at or above the
        infinite-temperature mean while the negative branch is disabled.
    ConvergenceError
        The bisection exhausted ``tmap.max_iter`` iterations.
    """
    energy = float(energy)
    spectrum = tmap.spectrum
    e_ground, e_inf = tmap.domain
    if math.isnan(energy):
        raise DomainError("energy is NaN")
    if energy <= e_ground:
        raise DomainError(f"energy {energy!r} is at or below ground state {e_ground!r}")
    if energy >= e_inf:
        if not tmap.allow_negative:
            raise DomainError(
                f"energy {energy!r} is at or above infinite-temperature mean {e_inf!r}"
            )
        if energy == e_inf:
            raise DomainError(f"energy {energy!r} equals the infinite-temperature mean")
        if energy >= spectrum.top_energy:
            raise DomainError(f"energy {energy!r} is at or above the top level {spectrum.top_energy!r}")
        # tau = -s; the mean decreases from the top level toward e_inf as s grows
        s = _solve_monotone(
            lambda s: mean_energy(spectrum, -s, allow_negative=True),
            energy,
            increasing=False,
            rtol=tmap.tolerance,
            max_iter=tmap.max_iter,
        )
        return -s
    return _solve_monotone(
        lambda t: mean_energy(spectrum, t),
        energy,
        increasing=True,
        rtol=tmap.tolerance,
        max_iter=tmap.max_iter,
    )


@dataclass(frozen=True)
class TemperatureEigensystem:
    """Energy eigenvalues paired with their temperature eigenvalues."""

    energies: tuple[float, ...]
    degeneracies: tuple[int, ...]
    temperatures: tuple  # float or OUT_OF_DOMAIN

    def pairs(self):
        return list(zip(self.energies, self.temperatures))

    def finite(self):
        """Pairs whose temperature is a number, in energy order."""
        return [(e, t) for e, t in self.pairs() if t is not OUT_OF_DOMAIN]


def temperature_eigensystem(tmap: TemperatureMap) -> TemperatureEigensystem:
    """Map every level of ``tmap.spectrum`` through the inverse mean energy.

    Levels on or outside the map's domain (the ground state always, the
    infinite-temperature mean and anything above it unless negative
    temperatures are enabled) get :data:`OUT_OF_DOMAIN`.
    """
    temps = []
    for energy, _ in tmap.spectrum.levels:
        try:
            temps.append(invert_mean_energy(tmap, energy))
        except DomainError:
            temps.append(OUT_OF_DOMAIN)
    return TemperatureEigensystem(
        energies=tuple(e for e, _ in tmap.spectrum.levels),
        degeneracies=tmap.spectrum.degeneracies,
        temperatures=tuple(temps),
    )


# -- spectrum documents -------------------------------------------------------


def _line_col(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def _level_offsets(text: str) -> list[int]:
    """Character offsets of each element of the top-level ``levels`` array."""
    decoder = json.JSONDecoder()
    ws = " \t\r\n"
    # walk the top-level object key by key so a nested "levels" is not picked up
    pos = text.index("{") + 1
    while True:
        while text[pos] in ws + ",":
            pos += 1
        if text[pos] == "}":
            return []
        key, pos = decoder.raw_decode(text, pos)
        while text[pos] in ws + ":":
            pos += 1
        if key == "levels" and text[pos] == "[":
            break
        _, pos = decoder.raw_decode(text, pos)
    pos += 1
    offsets = []
    while True:
        while text[pos] in ws + ",":
            pos += 1
        if text[pos] == "]":
            return offsets
        offsets.append(pos)
        _, pos = decoder.raw_decode(text, pos)


def parse_spectrum(text: str) -> EnergySpectrum:
    """Parse a spectrum document.

    Expected shape::

        {"unit_system": "dimensionless" | "si",
         "levels": [{"energy": <number>, "degeneracy": <int>}, ...]}

    Raises
    ------
    SpectrumFormatError
        With the line and column of the offending token or level.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpectrumFormatError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise SpectrumFormatError("top level must be an object", 1, 1)
    top = _line_col(text, text.index("{"))
    unit = doc.get("unit_system", DIMENSIONLESS)
    if unit not in ("dimensionless", "si"):
        raise SpectrumFormatError(f"unit_system must be 'dimensionless' or 'si', got {unit!r}", *top)
    levels = doc.get("levels")
    if not isinstance(levels, list) or not levels:
        raise SpectrumFormatError("'levels' must be a non-empty array", *top)
    offsets = _level_offsets(text)
    parsed = []
    for i, item in enumerate(levels):
        where = _line_col(text, offsets[i])
        if not isinstance(item, dict) or set(item) != {"energy", "degeneracy"}:
            raise SpectrumFormatError(
                f"level {i} must be an object with exactly 'energy' and 'degeneracy'", *where
            )
        energy, deg = item["energy"], item["degeneracy"]
        if isinstance(energy, bool) or not isinstance(energy, (int, float)) or not math.isfinite(energy):
            raise SpectrumFormatError(f"level {i}: energy must be a finite number", *where)
        if isinstance(deg, bool) or not isinstance(deg, int) or deg < 1:
            raise SpectrumFormatError(f"level {i}: degeneracy must be a positive integer", *where)
        if parsed and energy <= parsed[-1][0]:
            raise SpectrumFormatError(
                f"level {i}: energy {energy!r} does not exceed previous level {parsed[-1][0]!r}", *where
            )
        parsed.append((float(energy), deg))
    return EnergySpectrum(tuple(parsed), unit)


def load_spectrum(path) -> EnergySpectrum:
    with open(path, encoding="utf-8") as fh:
        return parse_spectrum(fh.read())


def dump_spectrum(spectrum: EnergySpectrum) -> str:
    return json.dumps(spectrum.to_dict(), indent=2)

