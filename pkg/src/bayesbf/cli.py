"""Command-line experiment driver.

Every subcommand writes data files (CSV / JSON / plain text) plus a
``manifest.json`` into ``--out``.  Exit codes: 0 success, 1 partial or
infeasible, 2 usage or config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from bayesbf import __version__, detector, optimizer
from bayesbf.metrics import Beamformer, InvalidCovarianceError, beampattern, expected_pd
from bayesbf.scene import (
    ConfigError,
    SceneConfig,
    build_priors,
    config_from_dict,
    default_config,
    dump_config,
    gen_channels,
    load_config,
    steering_tx,
)

log = logging.getLogger("bayesbf")

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

SCHEMES = ("proposed",) + optimizer.BASELINES

DETECTOR_DEFAULTS = {"pf": 1e-2, "trials": 100_000, "block_len": 64, "mc_trials": 1000, "bins": 20, "crosscheck": 0}


class _Run:
    """Collects outputs and statuses for the manifest."""

    def __init__(self, args, cfg: SceneConfig, extras: dict):
        self.args = args
        self.cfg = cfg
        self.extras = extras
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.statuses: dict = {}
        self.start = time.time()

    def path(self, name: str) -> Path:
        p = self.out / name
        self.files.append(name)
        return p

    def write_manifest(self, exit_code: int) -> None:
        import scipy

        manifest = {
            "command": self.args.command,
            "argv": sys.argv[1:],
            "version": __version__,
            "seed": self.cfg.rng_seed,
            "config": self.cfg.to_dict(),
            "extras": self.extras,
            "start": self.start,
            "end": time.time(),
            "outputs": self.files,
            "statuses": self.statuses,
            "exit_code": exit_code,
            "platform": {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
        }
        with open(self.out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, default=str)


def write_beamformer(bf: Beamformer, path) -> None:
    """Plain-text complex matrix.

    Line 1 is a comment, line 2 holds ``rows cols n_users``; each following
    line is one antenna row as interleaved ``re im`` pairs.  The first
    ``n_users`` columns are the user beams, the rest the sensing streams.
    """
    w = bf.matrix
    with open(path, "w") as fh:
        fh.write("# bayesbf-beamformer v1\n")
        fh.write(f"{w.shape[0]} {w.shape[1]} {bf.n_users}\n")
        for row in w:
            fh.write(" ".join(f"{z.real:.17e} {z.imag:.17e}" for z in row) + "\n")


def read_beamformer(path) -> Beamformer:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows, cols, k = (int(v) for v in lines[0].split())
    vals = np.array([[float(v) for v in ln.split()] for ln in lines[1 : rows + 1]])
    w = vals[:, 0::2] + 1j * vals[:, 1::2]
    if w.shape != (rows, cols):
        raise ValueError("beamformer file has inconsistent dimensions")
    return Beamformer.from_matrix(w, k)


def _settings(extras: dict, max_iters: int | None) -> optimizer.OptimizerSettings:
    opts = dict(extras.get("optimizer", {}))
    if max_iters is not None:
        opts["max_iters"] = max_iters
    try:
        return optimizer.OptimizerSettings(**opts)
    except TypeError as exc:
        raise ConfigError(f"[optimizer]: {exc}") from exc


def _detector_opts(extras: dict, args) -> dict:
    opts = dict(DETECTOR_DEFAULTS)
    unknown = set(extras.get("detector", {})) - set(opts)
    if unknown:
        raise ConfigError(f"[detector]: unknown keys {sorted(unknown)}")
    opts.update(extras.get("detector", {}))
    for key in ("pf", "trials", "block_len"):
        if getattr(args, key, None) is not None:
            opts[key] = getattr(args, key)
    return opts


def design(scheme: str, cfg: SceneConfig, channels, priors, settings) -> tuple[Beamformer, str, optimizer.OptimizationTrace | None]:
    if scheme == "proposed":
        bf, trace = optimizer.sca_sdr(cfg, channels, priors, settings)
        return bf, trace.status, trace
    return optimizer.baseline(scheme, cfg, channels, priors), "optimal", None


def _design_or_status(scheme, cfg, channels, priors, settings):
    try:
        bf, status, _ = design(scheme, cfg, channels, priors, settings)
        return bf, status
    except optimizer.InfeasibleError:
        return None, "infeasible"
    except (optimizer.SolverFailure, optimizer.RecoveryError, optimizer.DegenerateUserError, InvalidCovarianceError) as exc:
        log.warning("%s failed: %s", scheme, exc)
        return None, "numerical_failure"


# ---------------------------------------------------------------------------
# subcommands


def cmd_optimize(args, run: _Run) -> int:
    cfg = run.cfg
    channels = gen_channels(cfg)
    priors = build_priors(cfg)
    settings = _settings(run.extras, args.max_iters)
    bf, trace = optimizer.sca_sdr(cfg, channels, priors, settings, dump_subproblem=args.dump_subproblem)
    if args.dump_subproblem:
        run.files.append(str(args.dump_subproblem))
    trace.write_csv(run.path("trace.csv"))
    write_beamformer(bf, run.path("beamformer.txt"))
    check = optimizer.verify_beamformer(bf, channels, cfg)
    run.statuses = {"optimizer": trace.status, "epd": trace.records[-1].epd if trace.records else None, "feasible": check["ok"]}
    print(f"status={trace.status} iterations={len(trace)} epd={run.statuses['epd']:.8f} residual={trace.final_residual:.3g}")
    if not check["ok"]:
        print("final beamformer failed the constraint check", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK if trace.status == optimizer.CONVERGED else EXIT_PARTIAL


def _sweep_point(cfg_dict: dict, settings: dict, axis: str, value: float) -> list[tuple]:
    cfg = config_from_dict(cfg_dict)
    cfg = cfg.replace(**{axis: value})
    channels = gen_channels(cfg)
    priors = build_priors(cfg)
    rows = []
    for scheme in SCHEMES:
        bf, status = _design_or_status(scheme, cfg, channels, priors, optimizer.OptimizerSettings(**settings))
        epd = expected_pd(bf.covariance, *priors, cfg) if bf is not None else float("nan")
        rows.append((value, scheme, epd, status))
    return rows


def cmd_sweep(args, run: _Run) -> int:
    if not args.values:
        raise ConfigError("sweep needs at least one value")
    field = {"gamma_db": "sinr_threshold_db", "power_dbm": "total_power_dbm"}[args.axis]
    settings = asdict(_settings(run.extras, args.max_iters))
    cfg_dict = run.cfg.to_dict()
    jobs = max(1, args.jobs or os.cpu_count() or 1)
    if jobs > 1 and len(args.values) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_sweep_point, cfg_dict, settings, field, v) for v in args.values]
            results = [f.result() for f in futures]
    else:
        results = [_sweep_point(cfg_dict, settings, field, v) for v in args.values]
    rows = [r for point in results for r in point]
    with open(run.path("sweep.csv"), "w") as fh:
        fh.write("# schema: bayesbf-sweep v1\n")
        fh.write("axis_value,scheme,epd,status\n")
        for value, scheme, epd, status in rows:
            fh.write(f"{float(value)!r},{scheme},{float(epd)!r},{status}\n")
    ok = [r for r in rows if not np.isnan(r[2])]
    run.statuses = {f"{r[1]}@{r[0]}": r[3] for r in rows}
    print(f"{len(ok)}/{len(rows)} design points solved")
    return EXIT_OK if ok else EXIT_PARTIAL


def cmd_beampattern(args, run: _Run) -> int:
    cfg = run.cfg
    channels = gen_channels(cfg)
    priors = build_priors(cfg)
    settings = _settings(run.extras, args.max_iters)
    angles = np.arange(-90.0, 90.0 + 0.25, 0.5)
    columns = {}
    for scheme in SCHEMES:
        bf, status = _design_or_status(scheme, cfg, channels, priors, settings)
        run.statuses[scheme] = status
        if bf is not None:
            columns[scheme] = beampattern(bf.covariance, np.deg2rad(angles))
    if not columns:
        return EXIT_PARTIAL
    names = list(columns)
    with open(run.path("beampattern.csv"), "w") as fh:
        fh.write("# schema: bayesbf-beampattern v1 (transmit power gain a^H R a)\n")
        fh.write("angle_deg," + ",".join(names) + "\n")
        for i, ang in enumerate(angles):
            fh.write(f"{ang:.1f}," + ",".join(repr(float(columns[n][i])) for n in names) + "\n")
    return EXIT_OK if len(columns) == len(SCHEMES) else EXIT_PARTIAL


def _mc_rng(seed: int) -> np.random.Generator:
    # separate stream from the channel draw, which uses the bare seed
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))


def cmd_montecarlo(args, run: _Run) -> int:
    cfg = run.cfg
    opts = _detector_opts(run.extras, args)
    trials = args.trials if args.trials is not None else opts["mc_trials"]
    channels = gen_channels(cfg)
    priors = build_priors(cfg)
    settings = _settings(run.extras, args.max_iters)
    sampler = detector.TargetSampler.from_config(cfg)
    report = {}
    for scheme in args.schemes:
        bf, status = _design_or_status(scheme, cfg, channels, priors, settings)
        run.statuses[scheme] = status
        if bf is None:
            continue
        res = detector.monte_carlo_pd(
            bf, sampler, trials, cfg, _mc_rng(cfg.rng_seed), bins=opts["bins"], crosscheck=opts["crosscheck"], block_len=opts["block_len"]
        )
        res.write_csv(run.path(f"histogram_{scheme}.csv"))
        report[scheme] = {"mean_pd": res.mean, "trials": trials, "crosscheck": res.crosscheck}
        print(f"{scheme}: mean P_d = {res.mean:.6f}")
    with open(run.path("montecarlo.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    return EXIT_OK if len(report) == len(args.schemes) else EXIT_PARTIAL


def cmd_validate_pd(args, run: _Run) -> int:
    cfg = run.cfg
    opts = _detector_opts(run.extras, args)
    channels = gen_channels(cfg)
    priors = build_priors(cfg)
    bf, status = _design_or_status(args.scheme, cfg, channels, priors, _settings(run.extras, args.max_iters))
    run.statuses[args.scheme] = status
    if bf is None:
        return EXIT_PARTIAL
    pf, block_len = opts["pf"], opts["block_len"]
    thetas = cfg.target_prior.theta_mean_deg + cfg.target_prior.theta_std_deg * np.array([-2.0, 0.0, 2.0])
    cells = []
    for th in np.deg2rad(thetas):
        a = steering_tx(th, cfg.n_tx)
        gain = cfg.n_rx * np.real(a.conj() @ bf.covariance @ a)
        unit = np.sqrt(cfg.sense_noise / (block_len * gain))
        # magnitudes that put the closed form near 0.2, 0.5 and 0.8
        c = detector.erfc_inv(2 * pf)
        cells += [(unit * (c + s), th) for s in (-0.6, 0.0, 0.6)]
    rows = detector.validate_pd(bf, cells, pf, opts["trials"], block_len, cfg, seed=cfg.rng_seed)
    pfa = detector.detection_rate(bf, 0.0, float(np.deg2rad(thetas[1])), pf, opts["trials"], block_len, cfg, seed=cfg.rng_seed + 1)
    worst = max(r["abs_error"] for r in rows)
    report = {"pf": pf, "block_len": block_len, "trials": opts["trials"], "cells": rows, "empirical_pf": pfa, "max_abs_error": worst}
    with open(run.path("validate_pd.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    print(f"max |analytic - empirical| = {worst:.4f}, empirical P_fa = {pfa:.4g} (target {pf})")
    run.statuses["validation"] = "pass" if worst <= 0.02 else "fail"
    return EXIT_OK if worst <= 0.02 else EXIT_PARTIAL


def cmd_dump_defaults(args) -> int:
    extras = {"optimizer": asdict(optimizer.OptimizerSettings()), "detector": dict(DETECTOR_DEFAULTS)}
    text = dump_config(default_config(), extras)
    if args.out and args.out != "-":
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bayesbf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default="out"):
        sp.add_argument("--config", help="TOML scene config (defaults when omitted)")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--seed", type=int, help="override rng_seed")
        sp.add_argument("--max-iters", type=int, help="SCA iteration cap")
        sp.add_argument("--jobs", type=int, default=None, help="worker processes (default: CPU count)")

    sp = sub.add_parser("optimize", help="run the SCA design and write its trace")
    common(sp)
    sp.add_argument("--dump-subproblem", help="write the first SDP subproblem to this file")
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("sweep", help="EP_d of every scheme over SINR threshold or power")
    common(sp)
    sp.add_argument("--axis", choices=("gamma_db", "power_dbm"), required=True)
    sp.add_argument("--values", type=float, nargs="+", required=True)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("beampattern", help="transmit beampatterns on a 0.5 degree grid")
    common(sp)
    sp.set_defaults(func=cmd_beampattern)

    sp = sub.add_parser("montecarlo", help="histogram of P_d over prior samples")
    common(sp)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--block-len", type=int)
    sp.add_argument("--schemes", nargs="+", choices=SCHEMES, default=["proposed", "max_sinr_0deg"])
    sp.set_defaults(func=cmd_montecarlo)

    sp = sub.add_parser("validate-pd", help="signal-level check of the closed-form P_d")
    common(sp)
    sp.add_argument("--pf", type=float)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--block-len", type=int)
    sp.add_argument("--scheme", choices=SCHEMES, default="max_sinr_0deg")
    sp.set_defaults(func=cmd_validate_pd)

    sp = sub.add_parser("dump-config-defaults", help="print the default config as TOML")
    sp.add_argument("--out", default="-", help="file to write (stdout by default)")
    sp.set_defaults(func=None)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.func is None:
        return cmd_dump_defaults(args)

    try:
        if args.config:
            cfg, extras = load_config(args.config)
        else:
            cfg, extras = default_config(), {}
        if args.seed is not None:
            cfg = cfg.replace(rng_seed=args.seed)
        if getattr(args, "max_iters", None) is not None and args.max_iters < 1:
            raise ConfigError("--max-iters must be >= 1")
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    run = _Run(args, cfg, extras)
    try:
        code = args.func(args, run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    except optimizer.InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        code = EXIT_PARTIAL
    except (optimizer.SolverFailure, optimizer.RecoveryError, optimizer.DegenerateUserError, InvalidCovarianceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERIC
    run.write_manifest(code)
    return code


if __name__ == "__main__":
    sys.exit(main())
