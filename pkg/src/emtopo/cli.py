"""Batch command line: simulate, image, stats, validate.

Exit codes: 0 success, 1 a check failed, 2 bad configuration or inputs.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, ExperimentConfig, format_value, load_config
from .experiments import (
    herglotz_noise_covariance,
    measurement_noise_reports,
    snr_ratio_report,
    speckle_report,
)
from .forward import AsymptoticRegimeWarning, direction_waves, synthesize_far_field
from .geometry import build_product_quadrature
from .imaging import (
    compute_map,
    indicator_multi_points,
    indicator_single_points,
    peak_analysis,
    predictor_multi,
    predictor_single_eps,
    predictor_single_mu,
)
from .noise import MeasurementNoiseSpec, VoxelGrid, add_measurement_noise
from .validation import run_suite

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

# tolerance per stats check, matching the acceptance table
STATS_TOLERANCE = {
    "herglotz_cov": 0.05,
    "variance": 0.10,
    "snr": 0.15,
    "snr_ratio": 0.15,
    "mean": None,  # judged against its own confidence interval
    "speckle": 0.25,
}


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(noise__seed=args.seed, stats__seed=args.seed)
    return cfg


def _out(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _waves(cfg: ExperimentConfig):
    wp = cfg.wave_parameters
    if cfg["incident.mode"] == "single":
        return [cfg.single_wave()], None, None
    dirs = cfg.direction_set()
    waves, index = direction_waves(dirs, wp)
    return waves, index, dirs


def build_data(cfg: ExperimentConfig):
    waves, index, _ = _waves(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AsymptoticRegimeWarning)
        data = synthesize_far_field(cfg.inclusion(), waves, cfg.quadrature(), index)
    mode = cfg["noise.mode"]
    if mode != "none":
        spec = MeasurementNoiseSpec(
            cfg["noise.sigma"], cfg["noise.seed"], mode, cfg["noise.percent"] if mode == "relative" else None
        )
        data = add_measurement_noise(data, spec)
    return data


def cmd_simulate(args) -> int:
    cfg = _config(args)
    if not cfg.inclusion().is_asymptotic(cfg.wave_parameters):
        print(f"warning: rho*kappa = {cfg['inclusion.rho'] * cfg['medium.kappa']:.3g} >= 0.1", file=sys.stderr)
    data = build_data(cfg)
    path = _out(args) / f"{cfg['output.name']}.farfield.txt"
    io.write_far_field(path, data, cfg.fingerprint)
    status = "tangential" if data.is_tangential() else "NOT tangential"
    print(f"wrote {path} blocks={len(data)} nodes={len(data.quad)} {status}")
    return EXIT_OK if data.is_tangential() else EXIT_FAIL


def map_evaluator(cfg: ExperimentConfig, data=None):
    trial = cfg.trial()
    wp = cfg.wave_parameters
    if cfg["image.evaluator"] == "indicator":
        if cfg["incident.mode"] == "single":
            return lambda p: indicator_single_points(data, 0, trial, p)
        dirs = cfg.direction_set()
        norm = cfg["image.normalize"]
        return lambda p: indicator_multi_points(data, dirs, trial, p, norm)
    mode = cfg.contrast_mode()
    if mode is None:
        raise ConfigError("predictor maps need a pure permittivity or permeability contrast", "image.evaluator")
    inc = cfg.inclusion()
    if cfg["incident.mode"] == "single":
        fn = predictor_single_eps if mode == "eps" else predictor_single_mu
        wave = cfg.single_wave()
        return lambda p: fn(inc, trial, wave, p)
    return lambda p: predictor_multi(inc, trial, p, mode, wp)


def cmd_image(args) -> int:
    cfg = _config(args)
    data = None
    if cfg["image.evaluator"] == "indicator":
        if not args.data:
            raise ConfigError("--data is required for indicator maps")
        try:
            data, fingerprint = io.read_far_field(args.data)
        except (OSError, io.FormatError) as exc:
            raise ConfigError(f"cannot read data: {exc}") from None
        if fingerprint != cfg.fingerprint:
            raise ConfigError(
                f"data fingerprint {fingerprint} does not match config fingerprint {cfg.fingerprint}"
            )
    meta = {
        "fingerprint": cfg.fingerprint,
        "evaluator": cfg["image.evaluator"],
        "kappa": format(cfg["medium.kappa"], ".17g"),
        "incident_mode": cfg["incident.mode"],
        "noise_mode": cfg["noise.mode"],
        "noise_seed": cfg["noise.seed"],
    }
    if cfg["incident.mode"] == "set":
        meta["n"] = cfg.direction_set().n
        meta["normalize"] = format_value(cfg["image.normalize"])
    imap = compute_map(map_evaluator(cfg, data), cfg.grid(), meta, threads=args.threads)
    peak = peak_analysis(imap)
    out = _out(args)
    stem = cfg["output.name"]
    io.write_map_csv(out / f"{stem}.map.csv", imap, peak)
    if cfg["image.pgm"]:
        io.write_pgm(out / f"{stem}.pgm", imap)
    fwhm = "undefined" if peak.fwhm is None else ",".join(f"{w:.6g}" for w in peak.fwhm)
    print(f"peak_point={','.join(f'{c:.6g}' for c in peak.argmax)}")
    print(f"peak_value={peak.peak:.17g}")
    print(f"fwhm={fwhm}")
    return EXIT_OK


def _report_passed(name, rep):
    tol = STATS_TOLERANCE[name]
    if tol is None:
        return abs(rep.estimate - rep.analytic) <= rep.ci95_halfwidth
    return rep.rel_error <= tol


def run_stats(cfg: ExperimentConfig, threads: int = 1):
    checks = cfg["stats.checks"]
    trials = cfg["stats.trials"]
    if not checks:
        raise ConfigError("no checks requested", "stats.checks")
    if trials < 2:
        raise ConfigError("at least 2 trials are required", "stats.trials")
    unknown = set(checks) - set(STATS_TOLERANCE)
    if unknown:
        raise ConfigError(f"unknown checks {sorted(unknown)}", "stats.checks")
    mode = cfg.contrast_mode()
    needs_mode = set(checks) - {"herglotz_cov"}
    if needs_mode and mode is None:
        raise ConfigError("noise statistics need a pure permittivity or permeability contrast")
    wp = cfg.wave_parameters
    seed = cfg["stats.seed"]
    sigma = cfg["stats.sigma"]
    quad = build_product_quadrature(cfg["stats.polar_order"], cfg["stats.azimuthal_count"])
    results = []
    if "herglotz_cov" in checks:
        for rep in herglotz_noise_covariance(wp, cfg.quadrature(), sigma, trials, seed):
            results.append(("herglotz_cov", rep))
    inc, trial = cfg.inclusion(), cfg.trial()
    if {"variance", "mean", "snr"} & set(checks):
        dirs = cfg.direction_set()
        reps = measurement_noise_reports(inc, trial, wp, quad, dirs, sigma, trials, seed, mode, threads)
        for name in ("variance", "mean", "snr"):
            if name in checks:
                results.append((name, reps[name]))
    if "snr_ratio" in checks:
        results.append(("snr_ratio", snr_ratio_report(inc, trial, wp, quad, sigma, trials, seed, mode, threads=threads)))
    if "speckle" in checks:
        grid = VoxelGrid([-0.5, -0.5, -0.5], [1.0, 1.0, 1.0], (9, 9, 9))
        dirs = cfg.direction_set()
        z = np.asarray(cfg["inclusion.center"])
        for kind in ("eta", "phi"):
            rep = speckle_report(kind, trial, wp, dirs, mode, grid, 0.05, 0.25, z, trials, seed, threads)
            results.append(("speckle", rep))
    return results


def cmd_stats(args) -> int:
    cfg = _config(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AsymptoticRegimeWarning)
        results = run_stats(cfg, args.threads)
    payload = {"fingerprint": cfg.fingerprint, "reports": []}
    ok = True
    for name, rep in results:
        passed = _report_passed(name, rep)
        ok &= passed
        entry = rep.as_dict()
        entry.update(check=name, passed=passed)
        payload["reports"].append(entry)
        print(f"{'PASS' if passed else 'FAIL'} {rep.name} estimate={rep.estimate:.6g} "
              f"analytic={rep.analytic:.6g} rel_error={rep.rel_error:.3g}")
    io.write_json(_out(args) / f"{cfg['output.name']}.stats.json", payload)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_validate(args) -> int:
    kwargs = {}
    if args.config:
        cfg = _config(args)
        kwargs = dict(
            kappa=cfg["medium.kappa"],
            polar_order=cfg["quadrature.polar_order"],
            azimuthal_count=cfg["quadrature.azimuthal_count"],
        )
    checks = run_suite(**kwargs)
    for c in checks:
        print(c.line())
    if args.out:
        io.write_json(_out(args) / "validate.json", [c.as_dict() for c in checks])
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emtopo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment config file")
        p.add_argument("--out", help="output directory (default: current)")
        p.add_argument("--seed", type=int, help="override noise.seed and stats.seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads")

    common(sub.add_parser("simulate", help="synthesize far-field data"))
    p = sub.add_parser("image", help="indicator map, peak summary and PGM")
    common(p)
    p.add_argument("--data", help="far-field data file from 'simulate'")
    common(sub.add_parser("stats", help="Monte Carlo checks against closed forms"))
    common(sub.add_parser("validate", help="numerical self-checks"), config_required=False)
    return parser


COMMANDS = {"simulate": cmd_simulate, "image": cmd_image, "stats": cmd_stats, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
