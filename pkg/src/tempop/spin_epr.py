"""Exact measurement statistics for the split 2N-spin thermal EPR setup.

``2N`` spins of moment ``mu`` sit in a field ``B``; ``M`` of them are excited
and the system is in the equal-amplitude superposition of all ``C(2N, M)``
microstates.  The spins are split into two boxes of ``N``.  Spin 0 (in box
one) is measured, and we ask for the distribution of the temperature
eigenvalue ``T_{m,N}`` of box two, i.e. of the number ``m`` of excited spins
it holds, before (``P^I``) and after (``P^F``) that measurement.

All probabilities are :class:`fractions.Fraction`.  Python integers are
unbounded, so the closed forms and the no-signaling check are exact at any
size.

The random phases attached to each microstate never appear: every
probability here is the expectation of a projector that is diagonal in the
microstate basis, so only the squared moduli ``1/R`` survive.
"""

from __future__ import annotations

import enum
import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Union

from .constants import DIMENSIONLESS, boltzmann
from .errors import DomainError, EnumerationLimitError
from .spectra import EnergySpectrum

ENUMERATION_LIMIT = 10**7

PRE = "pre-measurement"
POST = "post-measurement"


class TemperatureMarker(enum.Enum):
    """Non-finite temperatures of a two-level ensemble.

    ``POS_INFINITY`` is the balanced population (half the spins excited).
    ``ZERO_GROUND`` / ``ZERO_INVERTED`` are the all-ground and all-excited
    states, approached from positive and negative temperature respectively.
    Markers compare with numbers (infinities above/below every finite value,
    the zeros adjacent to 0) but refuse conversion to ``float``.
    """

    POS_INFINITY = "+inf"
    NEG_INFINITY = "-inf"
    ZERO_GROUND = "+0"
    ZERO_INVERTED = "-0"

    def __str__(self):
        return self.value

    def __float__(self):
        raise TypeError(f"temperature marker {self.value} has no float value")

    @property
    def sort_key(self):
        return _MARKER_KEYS[self]

    def __lt__(self, other):
        return temperature_key(self) < temperature_key(other)

    def __le__(self, other):
        return temperature_key(self) <= temperature_key(other)

    def __gt__(self, other):
        return temperature_key(self) > temperature_key(other)

    def __ge__(self, other):
        return temperature_key(self) >= temperature_key(other)


_MARKER_KEYS = {
    TemperatureMarker.POS_INFINITY: (math.inf, 0),
    TemperatureMarker.NEG_INFINITY: (-math.inf, 0),
    TemperatureMarker.ZERO_GROUND: (0.0, 1),
    TemperatureMarker.ZERO_INVERTED: (0.0, -1),
}

Temperature = Union[float, TemperatureMarker]


def temperature_key(t: Temperature):
    """Total-order key for mixtures of floats and :class:`TemperatureMarker`."""
    if isinstance(t, TemperatureMarker):
        return _MARKER_KEYS[t]
    return (float(t), 0)


def format_temperature(t: Temperature) -> str:
    return str(t) if isinstance(t, TemperatureMarker) else repr(float(t))


def ensemble_temperature(spins: int, excited: int, alpha: float = 1.0) -> Temperature:
    """``alpha / ln(spins/excited - 1)`` with markers at the edges.

    Unlike :func:`microcanonical_temperature` this never raises for
    ``excited in {0, spins}``; it is what the outcome tables use.
    """
    if spins < 1 or not 0 <= excited <= spins:
        raise DomainError(f"need 0 <= excited <= spins with spins >= 1, got {excited}/{spins}")
    if excited == 0:
        return TemperatureMarker.ZERO_GROUND
    if excited == spins:
        return TemperatureMarker.ZERO_INVERTED
    if 2 * excited == spins:
        return TemperatureMarker.POS_INFINITY
    return alpha / math.log((spins - excited) / excited)


def microcanonical_temperature(spins: int, excited: int, alpha: float = 1.0) -> Temperature:
    """Temperature ``alpha / ln(spins/excited - 1)`` of ``excited`` excitations among ``spins``.

    ``alpha = 2 mu B / k_B`` sets the temperature unit.  Returns
    :data:`TemperatureMarker.POS_INFINITY` at half filling and a negative
    value for inverted populations.

    Raises
    ------
    DomainError
        For ``excited == 0`` or ``excited == spins``, where the logarithm
        diverges.
    """
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if excited in (0, spins):
        raise DomainError(f"temperature undefined for {excited} excitations among {spins} spins")
    return ensemble_temperature(spins, excited, alpha)


@dataclass(frozen=True)
class SpinEnsemble:
    """``two_n`` spins with ``excited`` excitations, split into two equal boxes."""

    two_n: int
    excited: int
    alpha: float = 1.0

    def __post_init__(self):
        if self.two_n < 2 or self.two_n % 2:
            raise DomainError(f"two_n must be a positive even integer, got {self.two_n}")
        if not 0 <= self.excited <= self.two_n:
            raise DomainError(f"excited must lie in [0, {self.two_n}], got {self.excited}")
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")

    @property
    def n(self) -> int:
        return self.two_n // 2

    @property
    def microstates(self) -> int:
        return math.comb(self.two_n, self.excited)

    @property
    def outcomes(self) -> range:
        """Possible excitation counts in box two."""
        return range(max(0, self.excited - self.n), min(self.excited, self.n) + 1)


class OutcomeEntry(NamedTuple):
    m: int
    temperature: Temperature
    probability: Fraction


@dataclass(frozen=True)
class SubsystemOutcomeDistribution:
    entries: tuple[OutcomeEntry, ...]
    label: str

    def probabilities(self) -> dict[int, Fraction]:
        return {e.m: e.probability for e in self.entries}

    def total(self) -> Fraction:
        return sum((e.probability for e in self.entries), Fraction(0))

    def __getitem__(self, m: int) -> Fraction:
        return self.probabilities()[m]


@dataclass(frozen=True)
class BranchWeights:
    p_ground: Fraction
    p_excited: Fraction


class TemperatureShifts(NamedTuple):
    exact_ground: float
    exact_excited: float
    asymptotic_ground: float
    asymptotic_excited: float


def _comb(n: int, k: int) -> int:
    # binomials with out-of-range arguments count nothing
    if n < 0 or k < 0 or k > n:
        return 0
    return math.comb(n, k)


def _distribution(system: SpinEnsemble, probs: dict[int, Fraction], label: str):
    entries = tuple(
        OutcomeEntry(m, ensemble_temperature(system.n, m, system.alpha), probs.get(m, Fraction(0)))
        for m in system.outcomes
    )
    return SubsystemOutcomeDistribution(entries, label)


def _check_split(system: SpinEnsemble, n_sub):
    if n_sub is not None and n_sub != system.n:
        raise DomainError(f"only the equal split N|N is supported (N={system.n}, got {n_sub})")


def temperature_shifts(spins: int, excited: int, alpha: float = 1.0) -> TemperatureShifts:
    """Temperature change of the unmeasured remainder after one spin is read.

    ``spins`` is the total ``2N``.  Reading the spin in its ground state
    leaves ``excited`` excitations among ``spins - 1``; reading it excited
    leaves ``excited - 1``.  Returns the exact differences next to the
    large-system asymptotics ``alpha / (N ln^2(2N/M))`` and
    ``-alpha / (M ln^2(2N/M))``.
    """
    n = spins // 2
    if spins % 2 or not 1 < excited < n:
        raise DomainError(f"temperature shifts need even 2N and 1 < M < N, got 2N={spins}, M={excited}")
    t0 = microcanonical_temperature(spins, excited, alpha)
    after_ground = microcanonical_temperature(spins - 1, excited, alpha)
    after_excited = microcanonical_temperature(spins - 1, excited - 1, alpha)
    log_sq = math.log(spins / excited) ** 2
    return TemperatureShifts(
        exact_ground=after_ground - t0,
        exact_excited=after_excited - t0,
        asymptotic_ground=alpha / (n * log_sq),
        asymptotic_excited=-alpha / (excited * log_sq),
    )


def pre_measurement_distribution(system: SpinEnsemble, n_sub: int | None = None) -> SubsystemOutcomeDistribution:
    """``P^I_m = C(N, m) C(N, M - m) / C(2N, M)``."""
    _check_split(system, n_sub)
    n, big_m = system.n, system.excited
    r = system.microstates
    probs = {m: Fraction(_comb(n, m) * _comb(n, big_m - m), r) for m in system.outcomes}
    return _distribution(system, probs, PRE)


def branch_weights(system: SpinEnsemble, swapped_weights: bool = False) -> BranchWeights:
    """Probabilities of reading spin 0 in its ground or excited state.

    Microstate counting gives ``p_ground = C(2N-1, M)/C(2N, M) = (2N-M)/2N``.
    ``swapped_weights=True`` swaps the two labels (``p_ground = M/2N``); it
    exists only to exhibit that the swap breaks no-signaling.
    """
    ground = Fraction(_comb(system.two_n - 1, system.excited), system.microstates)
    excited = Fraction(_comb(system.two_n - 1, system.excited - 1), system.microstates)
    if swapped_weights:
        ground, excited = excited, ground
    return BranchWeights(ground, excited)


def post_measurement_distribution(system: SpinEnsemble, swapped_weights: bool = False) -> SubsystemOutcomeDistribution:
    """Box-two distribution after spin 0 has been measured and the result discarded.

    ``P^F_m = p_g C(N,m) C(N-1,M-m) / C(2N-1,M) + p_e C(N,m) C(N-1,M-m-1) / C(2N-1,M-1)``.
    """
    n, big_m = system.n, system.excited
    w = branch_weights(system, swapped_weights)
    r_ground = _comb(2 * n - 1, big_m)
    r_excited = _comb(2 * n - 1, big_m - 1)
    if (w.p_ground and not r_ground) or (w.p_excited and not r_excited):
        raise DomainError("branch weight placed on a measurement outcome with no microstates")
    probs = {}
    for m in system.outcomes:
        p = Fraction(0)
        if w.p_ground:
            p += w.p_ground * Fraction(_comb(n, m) * _comb(n - 1, big_m - m), r_ground)
        if w.p_excited:
            p += w.p_excited * Fraction(_comb(n, m) * _comb(n - 1, big_m - m - 1), r_excited)
        probs[m] = p
    return _distribution(system, probs, POST)


def brute_force_distributions(system: SpinEnsemble, limit: int = ENUMERATION_LIMIT):
    """``(P^I, P^F)`` by enumerating every microstate; no binomial formulas.

    Spins ``0..N-1`` form box one, ``N..2N-1`` box two; spin 0 is measured.
    Each microstate carries Born weight ``1/R``.  ``P^F`` conditions on the
    outcome for spin 0 and reweights by that outcome's observed frequency.
    """
    if system.microstates > limit:
        raise EnumerationLimitError(
            f"C({system.two_n}, {system.excited}) = {system.microstates} microstates exceeds limit {limit}"
        )
    n = system.n
    total = 0
    by_m = Counter()
    by_branch = {0: Counter(), 1: Counter()}
    for excited_spins in itertools.combinations(range(system.two_n), system.excited):
        m = sum(1 for s in excited_spins if s >= n)
        branch = 1 if excited_spins and excited_spins[0] == 0 else 0
        total += 1
        by_m[m] += 1
        by_branch[branch][m] += 1

    pre = {m: Fraction(c, total) for m, c in by_m.items()}
    post = Counter()
    for counts in by_branch.values():
        branch_total = sum(counts.values())
        if not branch_total:
            continue
        p_branch = Fraction(branch_total, total)
        for m, c in counts.items():
            post[m] += p_branch * Fraction(c, branch_total)
    return _distribution(system, pre, PRE), _distribution(system, dict(post), POST)


@dataclass(frozen=True)
class NoSignalingReport:
    holds: bool
    max_deviation: Fraction
    pre: SubsystemOutcomeDistribution
    post: SubsystemOutcomeDistribution

    def __bool__(self):
        return self.holds


def no_signaling_report(system: SpinEnsemble, swapped_weights: bool = False) -> NoSignalingReport:
    """Compare the closed-form ``P^F`` with ``P^I`` exactly."""
    pre = pre_measurement_distribution(system)
    post = post_measurement_distribution(system, swapped_weights)
    before, after = pre.probabilities(), post.probabilities()
    deviation = max(abs(after[m] - before[m]) for m in before)
    return NoSignalingReport(deviation == 0, deviation, pre, post)


def composite_spectrum(system: SpinEnsemble, unit_system: str = DIMENSIONLESS) -> EnergySpectrum:
    """Many-body spectrum of ``2N`` independent spins.

    ``k`` excitations cost ``(2k - 2N) mu B`` with degeneracy ``C(2N, k)``;
    ``mu B = alpha k_B / 2``.
    """
    mu_b = system.alpha * boltzmann(unit_system) / 2.0
    levels = tuple(((2 * k - system.two_n) * mu_b, math.comb(system.two_n, k)) for k in range(system.two_n + 1))
    return EnergySpectrum(levels, unit_system)


def ensemble_energy(system: SpinEnsemble, unit_system: str = DIMENSIONLESS) -> float:
    """Total energy ``(2M - 2N) mu B`` of the ensemble."""
    return (2 * system.excited - system.two_n) * system.alpha * boltzmann(unit_system) / 2.0
