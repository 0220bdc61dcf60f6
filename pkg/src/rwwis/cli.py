"""Command-line entry point: ``rwwis {validate,analyze,exact,simulate,report}``.

Runs are driven by a YAML config (``--config``) whose ``walk`` key names a
walk document (path relative to the config, or a builtin name such as
``ssrw1d``); command sections hold the parameters. Flags override the config.

Exit status: 0 success/PASS, 1 verdict FAIL, 2 input error, 3 budget error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .errors import AssumptionError, BudgetError, DimensionError, RWwISError, WalkFormatError

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_BUDGET = 0, 1, 2, 3

log = logging.getLogger("rwwis")


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


def _load_config(args) -> tuple[dict, Path]:
    if args.config is None:
        return {}, Path.cwd()
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config not found: {path}")
    cfg = yaml.safe_load(path.read_text()) or {}
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    return cfg, path.parent


def _walk(args, cfg, base: Path):
    from .model import BUILTIN_WALKS, builtin_walk, load_walk

    ref = args.walk or cfg.get("walk")
    if ref is None:
        raise ConfigError("no walk given (use --walk or a 'walk' key in the config)")
    ref = str(ref)
    p = Path(ref)
    if not p.is_absolute() and (base / p).exists():
        p = base / p
    if not p.exists() and Path(ref).name.removesuffix(".yaml") in BUILTIN_WALKS:
        return builtin_walk(Path(ref).name.removesuffix(".yaml"))
    return load_walk(p)


def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    return sec


def _positive_int(value, what: str) -> int:
    try:
        v = int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what} must be an integer, got {value!r}") from exc
    if v <= 0:
        raise ConfigError(f"{what} must be positive, got {v}")
    return v


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.get("out") or "rwwis-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _method(args, sec) -> str:
    m = args.method or sec.get("method", "auto")
    if m not in ("dp", "torus", "auto"):
        raise ConfigError(f"method must be dp, torus or auto, got {m!r}")
    return m


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    from .model import validate_walk

    cfg, base = _load_config(args)
    spec = _walk(args, cfg, base)
    rep = validate_walk(spec)
    print(f"walk: {spec!r}")
    for line in rep.lines():
        print(line)
    if rep.ok:
        print("PASS")
        return EXIT_OK
    print("FAIL: " + ", ".join(f"assumption ({k})" for k in rep.failures))
    return EXIT_FAIL


def cmd_analyze(args) -> int:
    from .model import require_valid
    from .spectral import eigen_expansion, llt_error_profile
    from .model import moment_set

    cfg, base = _load_config(args)
    spec = _walk(args, cfg, base)
    sec = _section(cfg, "analyze")
    require_valid(spec)
    ms = moment_set(spec)
    ex = eigen_expansion(spec, ms)
    lines = [
        f"walk: {spec!r}",
        "mu = " + np.array2string(ms.mu, precision=12),
        "sigma = " + np.array2string(ms.cov, precision=12),
        f"det sigma = {ms.det_cov:.12g}",
        "r1 (numeric) = " + np.array2string(np.atleast_1d(ex.r1), precision=3),
        "-r2 (numeric Hessian) = " + np.array2string(ex.cov_numeric, precision=10),
        "rho3 = " + (f"{ex.rho3:.10g}" if spec.dimension == 1 else np.array2string(ex.rho3, precision=8)),
        f"rho3 extrapolation error = {ex.rho3_error:.3g}",
        f"perturbative radius t_max = {ex.t_max:.6g}",
        f"cycle-lattice index (periodicity) = {ms.lattice.index}",
    ]
    out = _out_dir(args, cfg)
    grid = sec.get("llt_n_grid")
    if grid:
        prof = llt_error_profile(spec, ms, grid)
        (out / "llt_profile.csv").write_text(prof.to_csv())
        lines.append(f"LLT error profile written to {out / 'llt_profile.csv'}")
    (out / "analysis.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def cmd_exact(args) -> int:
    from .exact import first_return, renewal_solve, return_matrices
    from .model import require_valid, reversed_walk

    cfg, base = _load_config(args)
    spec = _walk(args, cfg, base)
    sec = _section(cfg, "exact")
    N = _positive_int(args.N or sec.get("N", 1024), "N")
    method = _method(args, sec)
    rep = require_valid(spec)
    out = _out_dir(args, cfg)
    cache = out / "cache"
    rev = reversed_walk(spec, rep.mu)
    U_rev = return_matrices(rev, N, method, cache_dir=cache)
    U_fwd = return_matrices(spec, N, method, cache_dir=cache)
    ledger = renewal_solve(spec, N, U=U_rev)
    ledger_rev = renewal_solve(rev, N, U=U_fwd)
    first = first_return(spec, N, U=U_fwd)
    (out / "ledger.csv").write_text(ledger.to_csv())
    (out / "ledger_reversed.csv").write_text(ledger_rev.to_csv())
    with open(out / "first_return.csv", "w") as fh:
        fh.write("n,f_nu,f_nu_times_n32\n")
        for n in range(1, N + 1):
            fh.write(f"{n},{first.f_nu[n]!r},{first.f_nu[n] * n**1.5!r}\n")
    print(f"walk: {spec!r}; N={N}")
    print(f"gamma(N) walk = {ledger.gamma[N]:.12g}; gamma(N) reversed walk = {ledger_rev.gamma[N]:.12g}")
    print(f"E(N) = {ledger.E[N]:.12g}; max renewal residual = {ledger.max_residual:.3g}")
    print(f"ledgers written to {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .model import require_valid
    from .montecarlo import SimPlan, simulate_range

    cfg, base = _load_config(args)
    spec = _walk(args, cfg, base)
    sec = _section(cfg, "simulate")
    seed = args.seed if args.seed is not None else sec.get("seed", cfg.get("seed"))
    if seed is None:
        raise ConfigError("simulation requires an explicit seed (--seed or 'seed' in the config)")
    cps = sec.get("checkpoints", [2, 64, 1024])
    trials = _positive_int(sec.get("trials", 10000), "trials")
    require_valid(spec)
    plan = SimPlan(spec, tuple(cps), trials, int(seed), sec.get("initial_law"),
                   interval_fast_path=bool(sec.get("interval_fast_path", False)))
    stats = simulate_range(plan, workers=args.workers)
    out = _out_dir(args, cfg)
    (out / "range_stats.csv").write_text(stats.to_csv())
    for n in sec.get("histograms", []):
        (out / f"histogram_n{int(n)}.csv").write_text(stats.histogram_csv(int(n)))
    print(stats.to_csv(), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    from .exact import first_return, renewal_solve, return_matrices
    from .model import moment_set, require_valid, reversed_walk
    from .montecarlo import variance_profile
    from .report import (check_asymptotics, emit_report, initial_law_insensitivity, llt_verdict,
                         variance_verdict, verdict_lines)
    from .spectral import llt_error_profile

    cfg, base = _load_config(args)
    spec = _walk(args, cfg, base)
    sec = _section(cfg, "report")
    targets = sec.get("targets")
    if targets is not None and len(targets) == 0:
        raise ConfigError("empty target list")
    n_grid = [int(n) for n in sec.get("n_grid", [])]
    if not n_grid:
        raise ConfigError("report.n_grid is required")
    N = _positive_int(sec.get("N", max(n_grid)), "N")
    method = _method(args, sec)
    rep = require_valid(spec)
    ms = moment_set(spec)
    out = _out_dir(args, cfg)
    cache = out / "cache"
    U_rev = return_matrices(reversed_walk(spec, rep.mu), N, method, cache_dir=cache)
    ledger = renewal_solve(spec, N, U=U_rev)
    first = None
    if targets and "first_return_n32" in targets:
        first = first_return(spec, N, U=return_matrices(spec, N, method, cache_dir=cache))
    verdicts = check_asymptotics(spec, ledger, ms, n_grid, targets=targets, first=first,
                                 constants=sec.get("constants"))
    laws = sec.get("laws")
    if laws:
        lg = sec.get("law_n_grid", list(range(2, 21)))
        verdicts.append(initial_law_insensitivity(spec, lg, laws, U=U_rev).verdict())
    llt_grid = sec.get("llt_n_grid")
    if llt_grid:
        prof = llt_error_profile(spec, ms, llt_grid)
        (out / "llt_profile.csv").write_text(prof.to_csv())
        verdicts.append(llt_verdict(prof, spec.dimension))
    var = sec.get("variance")
    if var:
        seed = args.seed if args.seed is not None else var.get("seed")
        if seed is None:
            raise ConfigError("variance profile requires an explicit seed")
        prof = variance_profile(spec, var["n_grid"], int(var.get("trials", 10000)), int(seed),
                                workers=args.workers)
        (out / "variance_profile.csv").write_text(prof.to_csv())
        verdicts.append(variance_verdict(prof))
    status = emit_report(verdicts, out)
    for line in verdict_lines(verdicts):
        print(line)
    for v in verdicts:
        if v.note:
            print(f"  note [{v.target}]: {v.note}")
    return status


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rwwis", description="Random walks with internal states on Z^d")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run configuration")
    common.add_argument("--walk", metavar="PATH", help="walk document (overrides the config)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed for simulation")
    common.add_argument("--workers", type=int, default=1, metavar="N", help="worker threads")
    common.add_argument("--method", choices=["dp", "torus", "auto"], help="return-matrix engine")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check the basic assumptions").set_defaults(func=cmd_validate)
    sub.add_parser("analyze", parents=[common], help="moments, covariance, rho3, LLT tables").set_defaults(func=cmd_analyze)
    ex = sub.add_parser("exact", parents=[common], help="renewal ledger and first returns")
    ex.add_argument("-N", type=int, help="horizon (overrides the config)")
    ex.set_defaults(func=cmd_exact)
    sub.add_parser("simulate", parents=[common], help="Monte Carlo range statistics").set_defaults(func=cmd_simulate)
    sub.add_parser("report", parents=[common], help="asymptotic verdicts").set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "N"):
        args.N = None
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except BudgetError as exc:
        print(f"budget error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except AssumptionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigError, WalkFormatError, DimensionError, KeyError, ValueError, RWwISError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
