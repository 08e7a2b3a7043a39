"""Position thermometer: N thermalized oscillators read through their mean-square position.

Conventions
-----------
``g = hbar / (2 m omega)`` is the ground-state position variance and
``theta = hbar omega / (2 k_B T)`` the dimensionless group every formula
depends on.  The equilibrium variance is ``sigma^2 = g coth(theta_S)``.

A single-shot reading ``Y = (1/N) sum_i x_i^2`` is turned into a temperature
with the calibration curve ``T = (hbar omega / 2 k_B) / arcoth(Y / g)``,
which is only defined for ``Y > g``.

Two readout models are available:

``exact=False`` (default)
    ``Y`` is Gaussian with mean ``sigma^2`` and variance ``2 sigma^4 / N``
    (central limit theorem).  This Gaussian puts some mass at ``Y <= g``; it
    is reported as ``normalization_deficit`` and the moments are conditioned
    on ``Y > g``.
``exact=True``
    ``Y`` is gamma distributed with shape ``N/2`` and scale ``2 sigma^2 / N``,
    the exact law of a mean of ``N`` squared centred Gaussians.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy import integrate, stats

from .constants import ATOMIC_MASS_UNIT, DIMENSIONLESS, SI, TERAHERTZ, boltzmann, check_unit_system, reduced_planck
from .errors import ConvergenceError, DomainError, TruncationError

LN2 = math.log(2.0)
# beyond this 2*theta, expm1 overflows and coth - 1 == 2 exp(-2 theta) to double precision
_LARGE = 700.0
CLT_MIN_COUNT = 30
TAIL_MASS = 1e-12
SAMPLE_BLOCK = 1 << 22
ORACLE_TAIL = 1e-14


class ReadoutModelWarning(UserWarning):
    """The requested readout model is a poor approximation for these parameters."""


# -- stable hyperbolic helpers --------------------------------------------------


def coth_minus_one(theta):
    """``coth(theta) - 1 = 2 / expm1(2 theta)`` without overflow."""
    theta = np.asarray(theta, dtype=float)
    with np.errstate(over="ignore", divide="ignore"):
        out = np.where(2 * theta > _LARGE, 2 * np.exp(-2 * theta), 2 / np.expm1(np.minimum(2 * theta, _LARGE)))
    return out if out.ndim else float(out)


def log_coth_minus_one(theta):
    """``ln(coth(theta) - 1)``, finite for every positive finite ``theta``."""
    theta = np.asarray(theta, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(2 * theta > _LARGE, LN2 - 2 * theta, LN2 - np.log(np.expm1(np.minimum(2 * theta, _LARGE))))
    return out if out.ndim else float(out)


def coth(theta):
    return 1.0 + coth_minus_one(theta)


def csch_squared(theta):
    """``1 / sinh(theta)^2 = 4 e^{-2 theta} / expm1(-2 theta)^2``."""
    theta = np.asarray(theta, dtype=float)
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        e = np.exp(-2 * theta)
        out = np.where(theta == 0, np.inf, 4 * e / np.expm1(-2 * theta) ** 2)
    return out if out.ndim else float(out)


def arcoth_from_excess(d):
    """``arcoth(1 + d)`` for ``d > 0``."""
    d = np.asarray(d, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        big = 0.5 * np.log1p(2.0 / d)
        small = 0.5 * (LN2 + np.log1p(d / 2.0) - np.log(d))
    out = np.where(d >= 1.0, big, small)
    return out if out.ndim else float(out)


def arcoth_from_log_excess(log_d: float) -> float:
    """``arcoth(1 + exp(log_d))``; handles ``log_d`` far below the float range."""
    if log_d >= 0.0:
        return 0.5 * math.log1p(2.0 * math.exp(-log_d))
    # exp(log_d) may underflow to 0; the formula stays exact in that limit
    return 0.5 * (LN2 + math.log1p(0.5 * math.exp(log_d)) - log_d)


class MeanSquarePosition(float):
    """A mean-square position that also remembers ``ln(Y/g - 1)``.

    At low temperature ``Y`` exceeds the ground-state variance ``g`` by less
    than one ulp, so ``Y`` alone cannot be calibrated back to a temperature.
    The stored excess keeps the reading invertible; arithmetic on the value
    returns plain floats.
    """

    log_excess: float

    def __new__(cls, value, log_excess):
        obj = super().__new__(cls, value)
        obj.log_excess = float(log_excess)
        return obj

    def __repr__(self):
        return f"MeanSquarePosition({float(self)!r}, log_excess={self.log_excess!r})"


@dataclass(frozen=True)
class OscillatorThermometer:
    """``count`` identical oscillators of angular frequency ``omega`` and ``mass``.

    SI mode uses rad/s and kg; dimensionless mode sets ``hbar = k_B = 1``.
    """

    omega: float
    mass: float
    count: int = 1
    unit_system: str = DIMENSIONLESS

    def __post_init__(self):
        object.__setattr__(self, "unit_system", check_unit_system(self.unit_system))
        for name in ("omega", "mass"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be positive and finite, got {value}")
        if int(self.count) != self.count or self.count < 1:
            raise DomainError(f"count must be a positive integer, got {self.count}")
        object.__setattr__(self, "count", int(self.count))

    @classmethod
    def from_lab_units(cls, omega_thz: float, mass_amu: float, count: int = 1, ordinary_frequency: bool = False):
        """SI thermometer from a frequency in THz and a mass in atomic mass units.

        ``omega_thz`` is read as angular frequency (1e12 rad/s per unit)
        unless ``ordinary_frequency`` is set, in which case it is multiplied
        by 2 pi.
        """
        omega = omega_thz * TERAHERTZ
        if ordinary_frequency:
            omega *= 2 * math.pi
        return cls(omega, mass_amu * ATOMIC_MASS_UNIT, count, SI)

    def with_count(self, count: int) -> "OscillatorThermometer":
        return OscillatorThermometer(self.omega, self.mass, count, self.unit_system)

    @property
    def hbar(self) -> float:
        return reduced_planck(self.unit_system)

    @property
    def k_b(self) -> float:
        return boltzmann(self.unit_system)

    @property
    def ground_variance(self) -> float:
        """``hbar / (2 m omega)``: the calibration threshold."""
        return self.hbar / (2 * self.mass * self.omega)

    @property
    def temperature_scale(self) -> float:
        """``hbar omega / (2 k_B)``, so that ``theta = temperature_scale / T``."""
        return self.hbar * self.omega / (2 * self.k_b)

    def theta(self, t_s: float) -> float:
        return self.temperature_scale / _check_temperature(t_s)

    def temperature_for_theta(self, theta: float) -> float:
        return self.temperature_scale / theta


def _check_temperature(t_s):
    t_s = float(t_s)
    if not (math.isfinite(t_s) and t_s > 0):
        raise DomainError(f"system temperature must be positive and finite, got {t_s}")
    return t_s


# -- calibration ------------------------------------------------------------------


def position_variance(thermometer: OscillatorThermometer, t_s: float) -> MeanSquarePosition:
    """Equilibrium ``<x^2> = (hbar / 2 m omega) coth(hbar omega / 2 k_B T_S)``."""
    theta = thermometer.theta(t_s)
    g = thermometer.ground_variance
    return MeanSquarePosition(g * coth(theta), log_coth_minus_one(theta))


def calibrate_temperature(thermometer: OscillatorThermometer, y: float) -> float:
    """Temperature read off a mean-square position ``y``.

    Raises
    ------
    DomainError
        If ``y`` does not exceed the ground-state variance, where the
        calibration curve has no solution.
    """
    g = thermometer.ground_variance
    log_d = getattr(y, "log_excess", None)
    if log_d is None:
        y = float(y)
        if not y > g:
            raise DomainError(
                f"sub-ground-state reading: Y={y!r} does not exceed hbar/(2 m omega)={g!r}"
            )
        log_d = math.log((y - g) / g)
    return thermometer.temperature_scale / arcoth_from_log_excess(log_d)


def calibrate_excess(thermometer: OscillatorThermometer, d):
    """Vectorised calibration from the relative excess ``d = Y/g - 1``.

    Entries with ``d <= 0`` come back as NaN.
    """
    d = np.asarray(d, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = thermometer.temperature_scale / arcoth_from_excess(np.where(d > 0, d, np.nan))
    return t


# -- readout distributions ------------------------------------------------------------


@dataclass(frozen=True)
class SingleSquareDensity:
    """Density of ``y = x^2`` for one oscillator, ``x ~ Normal(0, sigma2)``."""

    sigma2: float

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.exp(-y / (2 * self.sigma2)) / np.sqrt(2 * np.pi * self.sigma2 * y)
        out = np.where(y > 0, p, 0.0)
        return out if out.ndim else float(out)

    @property
    def mean(self) -> float:
        return self.sigma2

    @property
    def variance(self) -> float:
        return 2 * self.sigma2**2

    def frozen(self):
        """Same law as a :mod:`scipy.stats` distribution (chi-square, one dof, scaled)."""
        return stats.gamma(0.5, scale=2 * self.sigma2)


def single_y_density(thermometer: OscillatorThermometer, t_s: float) -> SingleSquareDensity:
    return SingleSquareDensity(float(position_variance(thermometer, t_s)))


def many_body_y_density(thermometer: OscillatorThermometer, t_s: float, exact: bool = False):
    """Distribution of ``Y = (1/N) sum x_i^2`` as a frozen :mod:`scipy.stats` law.

    The default is the central-limit Gaussian; below ``CLT_MIN_COUNT``
    oscillators a :class:`ReadoutModelWarning` is issued.  ``exact=True``
    returns the gamma law instead.
    """
    sigma2 = float(position_variance(thermometer, t_s))
    n = thermometer.count
    if exact:
        return stats.gamma(n / 2.0, scale=2.0 * sigma2 / n)
    if n < CLT_MIN_COUNT:
        warnings.warn(
            f"central-limit readout model with only N={n} oscillators; consider exact=True",
            ReadoutModelWarning,
            stacklevel=2,
        )
    return stats.norm(loc=sigma2, scale=sigma2 * math.sqrt(2.0 / n))


def ks_distance(cdf_a: Callable, cdf_b: Callable, points) -> float:
    """Sup-distance between two CDFs evaluated on ``points``."""
    points = np.asarray(points, dtype=float)
    return float(np.max(np.abs(cdf_a(points) - cdf_b(points))))


def clt_ks_distance(thermometer: OscillatorThermometer, t_s: float) -> float:
    """Kolmogorov-Smirnov distance between the Gaussian and exact laws of ``Y``.

    Small ``N`` gives large values: the Gaussian is a poor model there.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ReadoutModelWarning)
        gauss = many_body_y_density(thermometer, t_s)
    exact = many_body_y_density(thermometer, t_s, exact=True)
    q = np.linspace(0.0, 1.0, 20001)[1:-1]
    points = np.concatenate([[0.0], exact.ppf(q), gauss.ppf(q)])
    points = np.sort(points[points >= 0])
    return ks_distance(gauss.cdf, exact.cdf, points)


@dataclass(frozen=True)
class ReadoutDistribution:
    """Single-shot temperature readout of a thermometer at system temperature ``t_s``.

    ``expectation`` and ``uncertainty`` are conditioned on a valid reading
    (``Y > g``); ``normalization_deficit`` is the mass of invalid readings
    and ``integral`` the quadrature mass of :meth:`density`.
    """

    thermometer: OscillatorThermometer
    t_s: float
    exact: bool
    normalization_deficit: float
    integral: float
    expectation: float
    uncertainty: float
    t_range: tuple[float, float]

    @property
    def bias(self) -> float:
        return self.expectation - self.t_s

    def y_distribution(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ReadoutModelWarning)
            return many_body_y_density(self.thermometer, self.t_s, self.exact)

    def density(self, t):
        """Unconditioned readout density over temperature ``t``."""
        return _temperature_pdf(self.thermometer, self.t_s, self.exact, np.asarray(t, dtype=float))

    def conditional_cdf(self, t):
        """CDF of the readout given a valid reading, from the law of ``Y``."""
        th = self.thermometer
        dist = self.y_distribution()
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            theta = th.temperature_scale / t
        g = th.ground_variance
        y = g * (1.0 + coth_minus_one(theta))
        valid = 1.0 - self.normalization_deficit
        return np.clip((dist.cdf(y) - dist.cdf(g)) / valid, 0.0, 1.0)


def _temperature_pdf(th: OscillatorThermometer, t_s: float, exact: bool, t: np.ndarray):
    g = th.ground_variance
    theta_s = th.theta(t_s)
    d_s = coth_minus_one(theta_s)
    sigma2 = g * (1.0 + d_s)
    n = th.count
    out = np.zeros_like(t)
    pos = t > 0
    theta = th.temperature_scale / t[pos]
    d = coth_minus_one(theta)
    dy_dt = th.hbar**2 / (4 * th.mass * th.k_b * t[pos] ** 2) * csch_squared(theta)
    if exact:
        p_y = stats.gamma.pdf(g * (1.0 + d), n / 2.0, scale=2.0 * sigma2 / n)
    else:
        # Gaussian of variance 2 sigma^4 / N; the coth difference is taken as a
        # difference of excesses so it survives theta >> 1
        gap = g * (d - d_s)
        p_y = math.sqrt(n / (4 * math.pi * sigma2**2)) * np.exp(-n * gap**2 / (4 * sigma2**2))
    with np.errstate(invalid="ignore"):
        out[pos] = np.nan_to_num(dy_dt * p_y, nan=0.0, posinf=0.0)
    return out


QUAD_ABS_TOL = 1e-10
QUAD_REL_TOL = 1e-10
# accepted error estimate; roundoff warnings below this are harmless
QUAD_ACCEPT = 1e-8


def _quad(func, a, b, points, label):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, err = integrate.quad(
            func, a, b, points=points, epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL, limit=1000
        )
    if not math.isfinite(value) or err > QUAD_ACCEPT * max(1.0, abs(value)):
        raise ConvergenceError(f"quadrature for {label} did not reach tolerance (error estimate {err:.3g})")
    return value


def temperature_density(thermometer: OscillatorThermometer, t_s: float, exact: bool = False) -> ReadoutDistribution:
    """Readout distribution over temperature and its conditioned moments.

    The density is ``(dY/dT) P(Y(T))`` with
    ``dY/dT = hbar^2 csch^2(hbar omega / 2 k_B T) / (4 m k_B T^2)``.  The
    moments are adaptive quadratures in ``T / t_s`` over the image of the
    ``Y`` interval that holds all but ``2 * TAIL_MASS`` of the law of ``Y``.

    Raises
    ------
    ConvergenceError
        If a quadrature misses its tolerance.
    """
    t_s = _check_temperature(t_s)
    th = thermometer
    g = th.ground_variance
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ReadoutModelWarning)
        dist = many_body_y_density(th, t_s, exact)
    deficit = float(dist.cdf(g))

    y_lo, y_hi = float(dist.ppf(TAIL_MASS)), float(dist.isf(TAIL_MASS))
    t_lo = calibrate_temperature(th, y_lo) if y_lo > g else 0.0
    t_hi = calibrate_temperature(th, y_hi)
    a, b = t_lo / t_s, t_hi / t_s
    points = [p for p in (calibrate_temperature(th, position_variance(th, t_s)) / t_s,) if a < p < b]
    # the sharp peak and the slowly varying shoulder need a few anchors
    if y_lo <= g:
        points.append(a + 1e-3 * (b - a))
    points = sorted(set(points)) or None

    def pdf_scaled(u):
        return t_s * float(_temperature_pdf(th, t_s, exact, np.array([u * t_s]))[0])

    mass = _quad(pdf_scaled, a, b, points, "normalization")
    if mass <= 0:
        raise ConvergenceError("readout density has no mass on the valid domain")
    mean = _quad(lambda u: u * pdf_scaled(u), a, b, points, "expectation") / mass
    var = _quad(lambda u: (u - mean) ** 2 * pdf_scaled(u), a, b, points, "variance") / mass
    return ReadoutDistribution(
        thermometer=th,
        t_s=t_s,
        exact=exact,
        normalization_deficit=deficit,
        integral=mass,
        expectation=mean * t_s,
        uncertainty=math.sqrt(max(var, 0.0)) * t_s,
        t_range=(t_lo, t_hi),
    )


def moments_by_y_quadrature(thermometer: OscillatorThermometer, t_s: float, exact: bool = False):
    """Conditioned readout mean and standard deviation, integrating over ``Y``.

    Independent of :func:`temperature_density`: no change of variables to
    ``T``, no Jacobian.
    """
    th = thermometer
    g = th.ground_variance
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ReadoutModelWarning)
        dist = many_body_y_density(th, t_s, exact)
    lo = max(float(dist.ppf(TAIL_MASS)), g)
    hi = float(dist.isf(TAIL_MASS))
    scale = dist.std()
    # integrate in units of the law's standard deviation above lo
    def readout(z):
        y = lo + z * scale
        return calibrate_excess(th, (y - g) / g) / t_s if y > g else 0.0

    def weight(z):
        return float(dist.pdf(lo + z * scale)) * scale

    zmax = (hi - lo) / scale
    peak = [(float(dist.mean()) - lo) / scale] if lo < dist.mean() < hi else None
    mass = _quad(weight, 0.0, zmax, peak, "Y mass")
    mean = _quad(lambda z: float(readout(z)) * weight(z), 0.0, zmax, peak, "Y mean") / mass
    var = _quad(lambda z: (float(readout(z)) - mean) ** 2 * weight(z), 0.0, zmax, peak, "Y variance") / mass
    return mean * t_s, math.sqrt(var) * t_s


# -- Monte Carlo single shots ---------------------------------------------------------------


@dataclass(frozen=True)
class SampleResult:
    """Outcome of ``shots`` single-shot readings, in shot order.

    ``temperatures`` holds NaN for readings at or below the calibration
    threshold; ``valid_readouts`` drops them.
    """

    mean_squares: np.ndarray
    temperatures: np.ndarray
    below_threshold: int
    seed: int
    model: str

    @property
    def shots(self) -> int:
        return len(self.temperatures)

    @property
    def valid_readouts(self) -> np.ndarray:
        return self.temperatures[~np.isnan(self.temperatures)]


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator seeded with a 64-bit integer."""
    if not 0 <= int(seed) < 2**64:
        raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


def sample_readouts(
    thermometer: OscillatorThermometer,
    t_s: float,
    shots: int,
    seed: int,
    model: str = "positions",
) -> SampleResult:
    """Draw single-shot temperature readings.

    ``model="positions"`` draws ``N`` positions per shot from the thermal
    Gaussian and averages their squares (exact).  ``model="clt"`` draws the
    average directly from the central-limit Gaussian.  Readings with
    ``Y <= hbar / (2 m omega)`` are counted in ``below_threshold``.
    """
    if int(shots) != shots or shots < 1:
        raise DomainError(f"shots must be a positive integer, got {shots}")
    if model not in ("positions", "clt"):
        raise DomainError(f"unknown sampling model {model!r}")
    theta = thermometer.theta(t_s)
    n = thermometer.count
    rng = make_rng(seed)
    d_s = coth_minus_one(theta)
    g = thermometer.ground_variance

    ratios = np.empty(shots)
    if model == "positions":
        rows = max(1, SAMPLE_BLOCK // n)
        for start in range(0, shots, rows):
            stop = min(shots, start + rows)
            z = rng.standard_normal((stop - start, n))
            ratios[start:stop] = np.mean(z * z, axis=1)
    else:
        ratios[:] = 1.0 + math.sqrt(2.0 / n) * rng.standard_normal(shots)
    # Y / g - 1 = (1 + d_s) * ratio - 1, kept exact when d_s is tiny
    excess = (ratios - 1.0) + d_s * ratios
    temps = calibrate_excess(thermometer, excess)
    return SampleResult(
        mean_squares=g * (1.0 + excess),
        temperatures=temps,
        below_threshold=int(np.count_nonzero(excess <= 0)),
        seed=int(seed),
        model=model,
    )


# -- thermal position density --------------------------------------------------------------


def thermal_position_density(thermometer: OscillatorThermometer, t_s: float, x):
    """``rho(x) = exp(-x^2 / xi^2) / (xi sqrt(pi))``, ``xi^2 = (hbar / m omega) coth(lambda / 2)``."""
    xi2 = thermal_width_squared(thermometer, t_s)
    x = np.asarray(x, dtype=float)
    out = np.exp(-(x * x) / xi2) / math.sqrt(math.pi * xi2)
    return out if out.ndim else float(out)


def thermal_width_squared(thermometer: OscillatorThermometer, t_s: float) -> float:
    """``xi^2``, twice the position variance."""
    return 2.0 * float(position_variance(thermometer, t_s))


def hermite_functions(q, count: int) -> np.ndarray:
    """Normalised oscillator eigenfunctions ``psi_0 .. psi_{count-1}`` at ``q``.

    Uses the three-term recurrence
    ``psi_{n+1} = sqrt(2/(n+1)) q psi_n - sqrt(n/(n+1)) psi_{n-1}``,
    which avoids the overflow of explicit Hermite polynomials.
    Returns an array of shape ``(count,) + q.shape``.
    """
    q = np.asarray(q, dtype=float)
    psi = np.empty((count,) + q.shape)
    psi[0] = math.pi**-0.25 * np.exp(-0.5 * q * q)
    if count > 1:
        psi[1] = math.sqrt(2.0) * q * psi[0]
    for n in range(1, count - 1):
        psi[n + 1] = math.sqrt(2.0 / (n + 1)) * q * psi[n] - math.sqrt(n / (n + 1)) * psi[n - 1]
    return psi


def oracle_truncation(lam: float, tail: float = ORACLE_TAIL) -> int:
    """Smallest number of terms whose first omitted Boltzmann factor is below ``tail``."""
    return max(1, math.floor(-math.log(tail) / lam) + 1)


def eigenfunction_sum_oracle(thermometer: OscillatorThermometer, t_s: float, x, truncation: int | None = None):
    """Thermal position density as a Boltzmann-weighted sum of ``|psi_n(x)|^2``.

    ``rho(x) = (1 - e^{-lambda}) sum_n e^{-lambda n} |psi_n(x)|^2`` with
    ``lambda = hbar omega / k_B T_S``.  Serves as an independent check of
    :func:`thermal_position_density`.

    Raises
    ------
    TruncationError
        If ``exp(-lambda * truncation)`` is not below ``1e-14``.
    """
    th = thermometer
    lam = 2.0 * th.theta(t_s)
    if truncation is None:
        truncation = oracle_truncation(lam)
    if truncation < 1 or -lam * truncation >= math.log(ORACLE_TAIL):
        raise TruncationError(
            f"truncation {truncation} leaves a tail weight exp(-{lam:.6g} * {truncation}) >= {ORACLE_TAIL}"
        )
    length = math.sqrt(th.hbar / (th.mass * th.omega))
    x = np.asarray(x, dtype=float)
    psi = hermite_functions(x / length, truncation)
    weights = np.exp(-lam * np.arange(truncation)) * -math.expm1(-lam)
    out = np.tensordot(weights, psi * psi, axes=1) / length
    return out if out.ndim else float(out)


# -- sweeps ------------------------------------------------------------------------------------


def readout_sweep(
    thermometers: Iterable[OscillatorThermometer],
    temperatures: Iterable[float],
    exact: bool = False,
):
    """Yield ``(thermometer, t_s, ReadoutDistribution)`` in declaration order."""
    temperatures = list(temperatures)
    for th in thermometers:
        for t_s in temperatures:
            yield th, t_s, temperature_density(th, t_s, exact)
