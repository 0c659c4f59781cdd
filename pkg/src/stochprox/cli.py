"""Command-line front end: ``run``, ``rates``, ``verify`` and ``sweep``.

Exit codes: 0 success, 1 verification violation, 2 invalid configuration,
3 model error (the scenario set has no verified zero with barycentric
selection).
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import verify as verify_mod
from .config import SCHEMA, ConfigError, ExperimentConfig
from .sppa import (
    STRICT,
    certificate_for,
    fast_bound,
    monte_carlo,
    remark_bound,
    rho,
    rho_prime,
    schedule_moduli,
)
from .stochastic import ModelError

log = logging.getLogger("stochprox")

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_MODEL = 0, 1, 2, 3


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _dump_json(obj, path: Path | None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _eps_label(e: float) -> str:
    return f"{e:g}"


def run_experiment(cfg: ExperimentConfig):
    """Simulate ``cfg`` and return ``(csv_text, sidecar_dict, stats)``."""
    schedule = cfg.schedule
    stats = monte_carlo(
        cfg.dist, schedule, cfg.x0, cfg.N, cfg.R, cfg.seed,
        eps=cfg.eps, log_at=cfg.log_at, measure_sigma=True,
    )
    # sigma only needs to dominate the measured moment, and must be positive
    sigma = float(stats.sigma) + STRICT
    cert = certificate_for(cfg.dist, schedule, cfg.x0, sigma=sigma)
    n = stats.n
    remark = remark_bound(cert, n) if schedule.kind == "harmonic" else [None] * n.size
    fast = fast_bound(cert, n)[0] if schedule.kind == "fast_harmonic" else [None] * n.size

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["n", "lambda_n", "mean_sq_dist", "stderr", "remark_bound", "fast_bound"]
    header += [f"tail_freq_eps_{_eps_label(e)}" for e in stats.eps]
    w.writerow(header)
    for i in range(n.size):
        row = [n[i], stats.lambda_n[i], stats.mean_sq_dist[i], stats.stderr[i], remark[i], fast[i]]
        row += list(stats.tail_freq[i])
        w.writerow([_fmt(v) for v in row])

    sidecar = {
        "schema": SCHEMA,
        "schedule": schedule.kind,
        "N": cfg.N,
        "R": cfg.R,
        "seed": cfg.seed,
        "x0": cfg.x0.to_json(),
        "scenarios": cfg.dist.to_json(),
        "certificate": cert.to_json(),
        "sigma_measured": float(stats.sigma),
        "L2_bound": cert.b + cert.c * cert.Lambda,
    }
    return buf.getvalue(), sidecar, stats


def _write_run(cfg: ExperimentConfig, out: Path | None):
    text, sidecar, stats = run_experiment(cfg)
    if out is None:
        sys.stdout.write(text)
        return sidecar, stats
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    _dump_json(sidecar, out.with_suffix(".json"))
    log.info("wrote %s and %s", out, out.with_suffix(".json"))
    return sidecar, stats


def _load(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("--config is required")
    cfg = ExperimentConfig.load(args.config)
    return cfg.with_overrides(seed=args.seed)


def _out_path(args, cfg: ExperimentConfig) -> Path | None:
    if args.out is not None:
        return Path(args.out)
    if cfg.out is not None:
        return Path(args.config).parent / cfg.out
    return None


def cmd_run(args) -> int:
    cfg = _load(args)
    _write_run(cfg, _out_path(args, cfg))
    return EXIT_OK


def cmd_rates(args) -> int:
    cfg = _load(args)
    schedule = cfg.schedule
    if schedule.kind != "harmonic":
        raise ConfigError("rates are certified for the harmonic schedule only")
    eps_list = tuple(args.eps) if args.eps else cfg.rates_eps
    if any(e <= 0 for e in eps_list):
        raise ConfigError("eps values must be positive")
    cert = certificate_for(cfg.dist, schedule, cfg.x0)
    chi = schedule_moduli(schedule).chi

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["eps", "chi", "log_rho", "rho", "rho_saturated"]
    for lc in cfg.lambda_conf:
        header += [f"log_rho_prime_{lc:g}", f"rho_prime_{lc:g}"]
    w.writerow(header)
    for e in eps_list:
        r = rho(cert, schedule, e)
        row = [_fmt(e), str(chi(e / (2.0 * cert.c))), _fmt(r.log_value), str(r.value), str(r.saturated).lower()]
        for lc in cfg.lambda_conf:
            rp = rho_prime(cert, schedule, lc, e)
            row += [_fmt(rp.log_value), str(rp.value)]
        w.writerow(row)
    out = Path(args.out) if args.out else None
    if out is None:
        sys.stdout.write(buf.getvalue())
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(buf.getvalue())
        _dump_json({"schema": SCHEMA, "certificate": cert.to_json()}, out.with_suffix(".json"))
    return EXIT_OK


def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    seed = 0 if args.seed is None else args.seed
    reports, spider = verify_mod.run_all(args.level, seed=seed, tol=args.tol)
    if args.config is not None:
        # also check the configured scenario set pathwise
        cfg = _load(args)
        reports += verify_mod.config_pathwise_suite(
            cfg.dist, cfg.schedule, cfg.x0, min(cfg.N, verify_mod.LEVELS[args.level]["path_N"]),
            verify_mod.LEVELS[args.level]["paths"], seed, args.tol,
        )
    failing = [r for r in reports if not r.passed]
    report = {
        "schema": SCHEMA,
        "level": args.level,
        "seed": seed,
        "passed": not failing,
        "checks": [r.to_json() for r in reports],
        "exploratory": [spider],
        "runtime": time.perf_counter() - t0,
    }
    _dump_json(report, Path(args.out) if args.out else None)
    for r in failing:
        print(f"FAIL {r.name}: {r.violations} violations, min slack {r.min_slack:.3e} (tol {r.tol:g})",
              file=sys.stderr)
    return EXIT_VIOLATION if failing else EXIT_OK


def _cell(v) -> str:
    return v if isinstance(v, str) else json.dumps(v, sort_keys=True)


def _warn_overlapping_seeds(cfgs):
    # replication r uses seed ^ r, so two seeds share replications when
    # they differ only below the bit length of R
    for a, b in itertools.combinations(cfgs, 2):
        R = max(a.R, b.R)
        if a.seed != b.seed and (a.seed ^ b.seed) < 1 << (R - 1).bit_length():
            log.warning("seeds %d and %d share replication streams at R=%d; "
                        "their runs are not independent", a.seed, b.seed, R)


SWEEPABLE = ("schedule", "N", "R", "seed", "x0", "eps", "log_at", "scenarios")


def cmd_sweep(args) -> int:
    if args.config is None:
        raise ConfigError("--config is required")
    path = Path(args.config)
    try:
        spec = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(spec, dict) or "base" not in spec or "grid" not in spec:
        raise ConfigError("sweep config needs 'base' and 'grid'")
    base = spec["base"]
    if isinstance(base, str):
        base_path = path.parent / base
        try:
            base = json.loads(base_path.read_text())
        except (FileNotFoundError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read base config {base_path}: {exc}") from None
        base_dir = base_path.parent
    else:
        base_dir = path.parent
    grid = spec["grid"]
    if not isinstance(grid, dict) or not grid:
        raise ConfigError("'grid' must be a nonempty object of lists")
    bad = sorted(set(grid) - set(SWEEPABLE))
    if bad:
        raise ConfigError(f"cannot sweep over {bad}")
    keys = sorted(grid)
    if any(not isinstance(grid[k], list) or not grid[k] for k in keys):
        raise ConfigError("every grid entry must be a nonempty list")

    out_dir = Path(args.out) if args.out else path.parent / spec.get("out", "sweep")
    # validate every combination before running any
    runs = []
    for values in itertools.product(*(grid[k] for k in keys)):
        obj = copy.deepcopy(base)
        obj.update(dict(zip(keys, values)))
        if args.seed is not None and "seed" not in grid:
            obj["seed"] = args.seed
        runs.append((dict(zip(keys, values)), ExperimentConfig.from_dict(obj, base_dir)))

    _warn_overlapping_seeds([cfg for _, cfg in runs])
    out_dir.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run"] + keys + ["final_n", "final_mean_sq_dist", "final_stderr", "sigma", "C", "D", "u"])
    for i, (params, cfg) in enumerate(runs):
        sidecar, stats = _write_run(cfg, out_dir / f"run_{i:03d}.csv")
        cert = sidecar["certificate"]
        w.writerow(
            [str(i)] + [_cell(params[k]) for k in keys]
            + [str(int(stats.n[-1])), _fmt(stats.mean_sq_dist[-1]), _fmt(stats.stderr[-1]),
               _fmt(cert["sigma"]), _fmt(cert["C"]), _fmt(cert["D"]), _fmt(cert["u"])]
        )
    (out_dir / "summary.csv").write_text(buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochprox", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="experiment config (JSON)")
        sp.add_argument("--seed", type=int, default=None, help="override the configured seed")
        sp.add_argument("--out", default=None, help="output path")

    sp = sub.add_parser("run", help="Monte Carlo run with RunStats CSV and certificate sidecar")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("rates", help="table of rate certificates in log space")
    common(sp)
    sp.add_argument("--eps", type=float, nargs="+", default=None)
    sp.set_defaults(func=cmd_rates)

    sp = sub.add_parser("verify", help="run the property suites")
    common(sp, config_required=False)
    sp.add_argument("--level", choices=sorted(verify_mod.LEVELS), default="quick")
    sp.add_argument("--tol", type=float, default=None, help="override every check tolerance")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("sweep", help="run a grid of experiment configs")
    common(sp)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
