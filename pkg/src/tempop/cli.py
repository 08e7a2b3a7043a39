"""Command-line front end.

Every subcommand builds its whole document in memory before anything is
written, so an error never leaves partial output behind.  Exit status is 0
on success, 2 for invalid input and 3 for numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from fractions import Fraction

import numpy as np

from . import __version__
from . import spectra, spin_epr, thermometer
from .constants import CODATA_TABLE, DIMENSIONLESS, SI
from .errors import DomainError, NumericalError

OUTPUT_DIR_ENV = "TEMPOP_OUTPUT_DIR"


def _fraction(f: Fraction) -> str:
    return f"{f.numerator}/{f.denominator}"


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _ts_range(text: str) -> tuple[float, float, int]:
    try:
        lo, hi, steps = text.split(":")
        return float(lo), float(hi), int(steps)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI:STEPS, got {text!r}") from None


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


# -- subcommands ----------------------------------------------------------------------


def _run_epr(args):
    system = spin_epr.SpinEnsemble(args.two_n, args.excited, args.alpha)
    if args.brute_force and args.swapped_weights:
        # enumeration fixes the branch weights; the swap only exists in closed form
        raise DomainError("--swapped-weights cannot be combined with --brute-force")
    if args.brute_force:
        pre, post = spin_epr.brute_force_distributions(system)
    else:
        pre = spin_epr.pre_measurement_distribution(system)
        post = spin_epr.post_measurement_distribution(system, args.swapped_weights)
    after = post.probabilities()
    rows = []
    for entry in pre.entries:
        p_post = after[entry.m]
        diff = p_post - entry.probability
        rows.append(
            {
                "m": entry.m,
                "temperature": spin_epr.format_temperature(entry.temperature),
                "p_pre": _fraction(entry.probability),
                "p_pre_float": float(entry.probability),
                "p_post": _fraction(p_post),
                "p_post_float": float(p_post),
                "diff": _fraction(diff),
                "diff_float": float(diff),
            }
        )
    weights = spin_epr.branch_weights(system, args.swapped_weights)
    deviation = max(abs(Fraction(r["diff"])) for r in rows)
    summary = {
        "no_signaling": deviation == 0,
        "max_deviation": _fraction(deviation),
        "p_ground": _fraction(weights.p_ground),
        "p_excited": _fraction(weights.p_excited),
        "microstates": system.microstates,
    }
    return rows, summary


def _run_shifts(args):
    s = spin_epr.temperature_shifts(args.two_n, args.excited, args.alpha)
    row = {"two_n": args.two_n, "excited": args.excited, "alpha": args.alpha, **s._asdict()}
    return [row], {}


def _oscillator(args, count=1, omega=None):
    omega = args.omega if omega is None else omega
    if args.units == SI:
        return thermometer.OscillatorThermometer.from_lab_units(omega, args.mass_amu, count, args.ordinary_frequency)
    if args.ordinary_frequency:
        omega *= 2 * math.pi
    return thermometer.OscillatorThermometer(omega, args.mass, count, DIMENSIONLESS)


def _run_calibrate(args):
    if args.spectrum is not None:
        if args.energy is None:
            raise DomainError("--spectrum requires --energy")
        spectrum = spectra.load_spectrum(args.spectrum)
        args.spectrum_document = spectrum.to_dict()
        tmap = spectra.TemperatureMap(spectrum, tolerance=args.tolerance, allow_negative=args.allow_negative)
        t = spectra.invert_mean_energy(tmap, args.energy)
        lo, hi = tmap.domain
        return [{"energy": args.energy, "temperature": t}], {"domain": [lo, hi], "unit_system": spectrum.unit_system}
    if args.mean_square is None or args.omega is None:
        raise DomainError("calibrate needs either --spectrum/--energy or --omega/--mean-square")
    th = _oscillator(args)
    t = thermometer.calibrate_temperature(th, args.mean_square)
    return [{"mean_square": args.mean_square, "temperature": t}], {"ground_variance": th.ground_variance}


def _run_eigensystem(args):
    spectrum = spectra.load_spectrum(args.spectrum)
    args.spectrum_document = spectrum.to_dict()
    tmap = spectra.TemperatureMap(spectrum, tolerance=args.tolerance, allow_negative=args.allow_negative)
    eig = spectra.temperature_eigensystem(tmap)
    rows = [
        {"energy": e, "degeneracy": g, "temperature": str(t) if t is spectra.OUT_OF_DOMAIN else t}
        for e, g, t in zip(eig.energies, eig.degeneracies, eig.temperatures)
    ]
    lo, hi = tmap.domain
    return rows, {"domain": [lo, hi], "unit_system": spectrum.unit_system}


def _run_fig2(args):
    lo, hi, steps = args.ts_range
    if steps < 1 or not 0 < lo <= hi:
        raise DomainError(f"--ts-range needs 0 < LO <= HI and STEPS >= 1, got {lo}:{hi}:{steps}")
    temps = np.linspace(lo, hi, steps) if steps > 1 else np.array([lo])
    rows = []
    for omega in args.omega:
        for n in args.n:
            th = _oscillator(args, n, omega)
            for t_s in temps:
                r = thermometer.temperature_density(th, float(t_s), exact=args.exact)
                rows.append(
                    {
                        "t_s": float(t_s),
                        "omega": omega,
                        "n": n,
                        "expectation": r.expectation,
                        "uncertainty": r.uncertainty,
                        "normalization_deficit": r.normalization_deficit,
                    }
                )
    return rows, {"readout_model": "gamma" if args.exact else "clt"}


def _run_sample(args):
    th = _oscillator(args, args.n)
    result = thermometer.sample_readouts(th, args.ts, args.shots, args.seed, model=args.model)
    rows = [
        {
            "shot": i,
            "mean_square": float(y),
            "temperature": None if math.isnan(t) else float(t),
            "below_threshold": int(math.isnan(t)),
        }
        for i, (y, t) in enumerate(zip(result.mean_squares, result.temperatures))
    ]
    valid = result.valid_readouts
    summary = {
        "shots": result.shots,
        "below_threshold": result.below_threshold,
        "valid_mean": float(valid.mean()) if len(valid) else None,
        "valid_std": float(valid.std(ddof=1)) if len(valid) > 1 else None,
        "ground_variance": th.ground_variance,
    }
    return rows, summary


def _run_appendix_check(args):
    th = thermometer.OscillatorThermometer(1.0, 1.0)
    rows = []
    for lam in args.lam:
        if not lam > 0:
            raise DomainError(f"lambda must be positive, got {lam}")
        t_s = 1.0 / lam
        xi = math.sqrt(thermometer.thermal_width_squared(th, t_s))
        x = np.linspace(-args.width * xi, args.width * xi, args.points)
        trunc = args.truncation or thermometer.oracle_truncation(lam)
        closed = thermometer.thermal_position_density(th, t_s, x)
        oracle = thermometer.eigenfunction_sum_oracle(th, t_s, x, trunc)
        rows.append(
            {
                "lambda": lam,
                "truncation": trunc,
                "points": args.points,
                "max_abs_deviation": float(np.max(np.abs(closed - oracle))),
            }
        )
    return rows, {}


_RUNNERS = {
    "epr": _run_epr,
    "shifts": _run_shifts,
    "calibrate": _run_calibrate,
    "eigensystem": _run_eigensystem,
    "fig2": _run_fig2,
    "sample": _run_sample,
    "appendix-check": _run_appendix_check,
}


# -- parser -----------------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="output format (default: csv)")
    p.add_argument(
        "--output",
        metavar="PATH",
        help=f"write to PATH instead of stdout; relative paths resolve against ${OUTPUT_DIR_ENV} when set",
    )


def _add_oscillator(p, lists=False):
    if lists:
        p.add_argument(
            "--omega", type=_float_list, required=True,
            help="comma-separated frequencies: THz (angular, 1e12 rad/s) with --units si, hbar=k_B=1 units otherwise",
        )
    else:
        p.add_argument("--omega", type=float, help="frequency: THz (angular, 1e12 rad/s) with --units si")
    p.add_argument("--mass-amu", type=float, default=6.0, help="oscillator mass in atomic mass units (si; default 6)")
    p.add_argument("--mass", type=float, default=1.0, help="oscillator mass in natural units (default 1)")
    p.add_argument("--units", choices=("si", "natural"), default="si", help="si (K, rad/s, kg) or natural (hbar=k_B=1)")
    p.add_argument(
        "--ordinary-frequency", action="store_true",
        help="treat --omega as ordinary frequency f (omega = 2 pi f)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tempop", description="Temperature-operator simulations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("epr", help="box-two temperature statistics before/after a remote spin measurement")
    p.add_argument("--two-n", type=int, required=True, help="total number of spins 2N (even)")
    p.add_argument("--excited", type=int, required=True, help="number of excited spins M")
    p.add_argument("--alpha", type=float, default=1.0, help="temperature unit 2 mu B / k_B (default 1)")
    p.add_argument("--swapped-weights", action="store_true", help="swap the ground/excited branch weights")
    p.add_argument("--brute-force", action="store_true", help="enumerate microstates instead of closed forms")
    _add_common(p)

    p = sub.add_parser("shifts", help="exact and asymptotic temperature shifts after one spin is read")
    p.add_argument("--two-n", type=int, required=True, help="total number of spins 2N (even)")
    p.add_argument("--excited", type=int, required=True, help="number of excited spins M, 1 < M < N")
    p.add_argument("--alpha", type=float, default=1.0, help="temperature unit 2 mu B / k_B (default 1)")
    _add_common(p)

    p = sub.add_parser("calibrate", help="temperature from a mean energy (spectrum) or a mean-square position")
    p.add_argument("--spectrum", metavar="FILE", help="spectrum JSON document (energies in J for si, else k_B=1)")
    p.add_argument("--energy", type=float, help="mean energy to invert, same unit as the spectrum")
    p.add_argument("--allow-negative", action="store_true", help="enable the negative-temperature branch")
    p.add_argument("--tolerance", type=float, default=1e-12, help="relative tolerance of the inversion")
    p.add_argument("--mean-square", type=float, help="measured mean-square position Y (m^2 for si)")
    _add_oscillator(p)
    _add_common(p)

    p = sub.add_parser("eigensystem", help="temperature eigenvalue of every level of a spectrum")
    p.add_argument("--spectrum", metavar="FILE", required=True, help="spectrum JSON document")
    p.add_argument("--allow-negative", action="store_true", help="enable the negative-temperature branch")
    p.add_argument("--tolerance", type=float, default=1e-12, help="relative tolerance of the inversion")
    _add_common(p)

    p = sub.add_parser("fig2", help="readout expectation and uncertainty sweep")
    _add_oscillator(p, lists=True)
    p.add_argument("--n", type=_int_list, required=True, help="comma-separated oscillator counts")
    p.add_argument(
        "--ts-range", type=_ts_range, required=True,
        help="system temperatures LO:HI:STEPS, linearly spaced (K for si)",
    )
    p.add_argument("--exact", action="store_true", help="use the exact gamma law of Y instead of the CLT Gaussian")
    _add_common(p)

    p = sub.add_parser("sample", help="Monte Carlo single-shot readouts")
    p.add_argument("--shots", type=int, required=True, help="number of single-shot readings")
    p.add_argument("--seed", type=_seed, required=True, help="64-bit seed for the PCG64 generator")
    _add_oscillator(p)
    p.add_argument("--n", type=int, default=100, help="oscillator count N (default 100)")
    p.add_argument("--ts", type=float, required=True, help="system temperature (K for si)")
    p.add_argument("--model", choices=("positions", "clt"), default="positions", help="sampling model")
    _add_common(p)

    p = sub.add_parser("appendix-check", help="closed-form thermal density vs eigenfunction sum")
    p.add_argument("--lam", type=_float_list, default=[0.5, 1.0, 4.0], help="hbar omega / k_B T values")
    p.add_argument("--points", type=int, default=101, help="grid points (default 101)")
    p.add_argument("--width", type=float, default=5.0, help="grid half-width in units of xi (default 5)")
    p.add_argument("--truncation", type=int, help="number of eigenfunctions (default: from the tail bound)")
    _add_common(p)
    return parser


def _validate(args):
    if getattr(args, "shots", 1) < 1:
        raise DomainError("--shots must be >= 1")
    if getattr(args, "points", 2) < 2:
        raise DomainError("--points must be >= 2")
    if getattr(args, "alpha", 1.0) <= 0:
        raise DomainError("--alpha must be positive")
    for name in ("mass_amu", "mass"):
        if getattr(args, name, 1.0) <= 0:
            raise DomainError(f"--{name.replace('_', '-')} must be positive")
    omega = getattr(args, "omega", None)
    if omega is not None and any(w <= 0 for w in np.atleast_1d(omega)):
        raise DomainError("--omega must be positive")
    n = getattr(args, "n", None)
    if n is not None and any(k < 1 for k in np.atleast_1d(n)):
        raise DomainError("--n must be >= 1")
    if getattr(args, "ts", 1.0) <= 0:
        raise DomainError("--ts must be positive")


def _config_echo(args) -> dict:
    echo = {k: v for k, v in vars(args).items() if k not in ("output",)}
    if "ts_range" in echo:
        echo["ts_range"] = ":".join(str(v) for v in echo["ts_range"])
    return echo


def render(args, rows, summary) -> str:
    if args.format == "json":
        doc = {
            "tool_version": __version__,
            "config_echo": _config_echo(args),
            "constants": CODATA_TABLE,
            "results": {"rows": rows, **summary},
        }
        return json.dumps(doc, indent=2, allow_nan=False) + "\n"
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _emit(text: str, output: str | None):
    if output is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    path = output
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not os.path.isabs(path):
        path = os.path.join(base, path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tempop-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _validate(args)
        rows, summary = _RUNNERS[args.subcommand](args)
        text = render(args, rows, summary)
        _emit(text, args.output)
    except DomainError as exc:
        print(f"tempop {args.subcommand}: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"tempop {args.subcommand}: numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"tempop {args.subcommand}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
