"""Command-line front end: run experiments, plot them, inspect constants, verify.

Exit codes: 0 success, 1 usage or config error, 2 runtime failure, 3 verify
suite failure.  PRICING_LAB_SEED overrides the configured base seed.  Run
directories are append-only: every invocation creates a fresh timestamped
directory and never touches an existing one.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    ExperimentConfig,
    build_env,
    load_config,
    parse_config,
    serialize_config,
    snapshot_config,
)
from .harness import HarnessError, run_experiment, wald_band
from .link import LinkModel, derive_constants
from .ons import default_gamma_epsilon
from .presets import list_presets, preset_text
from .svgplot import CurveData, PlotError, write_regret_svg
from .verify import DEFAULT_SEED, run_verify

SEED_ENV_VAR = "PRICING_LAB_SEED"

_FLOAT_FMT = "%.12g"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; the contract here is exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt(v: float) -> str:
    return _FLOAT_FMT % float(v)


def _seed_override() -> int | None:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from None


def _resolve_config(value: str) -> ExperimentConfig:
    """`value` is a config file path or the name of a shipped preset."""
    p = Path(value)
    if p.exists():
        return load_config(p)
    if "/" not in value and not value.endswith(".json"):
        try:
            return parse_config(preset_text(value), f"preset:{value}")
        except KeyError:
            pass
    raise ConfigError(
        f"{value}: no such config file or preset (shipped presets: {', '.join(list_presets())})"
    )


def _constants_doc(sigma: float, c_beta: float, d: int, horizon: int) -> dict:
    link = LinkModel(sigma=sigma)
    c = derive_constants(link, c_beta, d, horizon)
    gamma, epsilon = default_gamma_epsilon(c)
    return {
        "J(0,1)": c.j01,
        "c1": c.c1,
        "c2": c.c2,
        "delta": c.delta,
        "C_l": c.c_l,
        "C_G": c.c_g,
        "C_e": c.c_e,
        "G": c.g_bound,
        "D": c.d_diam,
        "gamma": gamma,
        "epsilon": epsilon,
    }


def _new_run_dir(root: Path, name: str) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%d-%H%M%S")
    base = root / f"{name}-{stamp}"
    candidate = base
    for i in range(2, 1000):
        try:
            candidate.mkdir(parents=True, exist_ok=False)
            return candidate
        except FileExistsError:
            candidate = Path(f"{base}-{i}")
    raise HarnessError(f"could not allocate a run directory under {base}")


def _trials_csv(path: Path, results) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("trial,t,cum_regret\n")
        for i, tr in enumerate(results):
            for t, reg in zip(tr.checkpoints, tr.cum_regret):
                fh.write(f"{i},{int(t)},{_fmt(reg)}\n")


def _trace_csv(path: Path, results) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("trial,step_count,grad_norm,lambda_min,projection_residual\n")
        for i, tr in enumerate(results):
            for step, gnorm, lam, resid in tr.trace_rows or ():
                fh.write(f"{i},{int(step)},{_fmt(gnorm)},{_fmt(lam)},{_fmt(resid)}\n")


def _summary_csv(path: Path, config: ExperimentConfig, curves: dict) -> None:
    env_label = f"{config.context_kind}/{config.demand_kind}"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("policy,env,trials,T,slope,slope_stderr,final_mean,final_halfwidth\n")
        for kind in config.policies:
            if kind not in curves:
                continue
            cv = curves[kind]
            fh.write(
                f"{kind},{env_label},{cv.trials},{config.horizon},"
                f"{_fmt(cv.slope)},{_fmt(cv.slope_stderr)},{_fmt(cv.mean[-1])},{_fmt(cv.half_width[-1])}\n"
            )


def _manifest(path: Path, name: str, complete: bool, error: str | None, files) -> None:
    doc = {"name": name, "complete": complete, "error": error, "files": sorted(files)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def cmd_run(args) -> int:
    try:
        config = _resolve_config(args.config)
        override = _seed_override()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if override is not None:
        config = config.with_base_seed(override)
    out_root = Path(args.out) if args.out else Path(config.output_dir)

    try:
        env = build_env(config)
        run_dir = _new_run_dir(out_root, config.name)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    # Compute phase: one experiment per policy so a failure retains the
    # policies that already finished.  Writer phase happens once, below.
    curves: dict = {}
    trials: dict = {}
    error: str | None = None
    for kind in config.policies:
        try:
            res = run_experiment(
                env, [kind], config.horizon, config.trials, config.base_seed,
                jobs=args.jobs, trace=args.trace,
            )
        except Exception as exc:
            error = f"{kind}: {exc}"
            break
        curves[kind] = res[kind]
        trials[kind] = res.trials[kind]

    snapshot = snapshot_config(config, env)
    files = ["MANIFEST", "config.json", "constants.json", "summary.csv"]
    (run_dir / "config.json").write_text(serialize_config(snapshot))
    constants = _constants_doc(config.sigma, config.c_beta, config.d, config.horizon)
    (run_dir / "constants.json").write_text(json.dumps(constants, indent=2) + "\n")
    for kind, rs in trials.items():
        fname = f"trials_{kind}.csv"
        _trials_csv(run_dir / fname, rs)
        files.append(fname)
        if args.trace and any(tr.trace_rows for tr in rs):
            tname = f"trace_{kind}.csv"
            _trace_csv(run_dir / tname, rs)
            files.append(tname)
    _summary_csv(run_dir / "summary.csv", config, curves)
    _manifest(run_dir / "MANIFEST", config.name, error is None, error, files)

    if error is not None:
        print(f"error: trial failure, partial results in {run_dir}: {error}", file=sys.stderr)
        return 2
    print(run_dir)
    return 0


def _read_csv_rows(path: Path) -> list[dict]:
    text = path.read_text()
    lines = [ln for ln in text.splitlines() if ln]
    if len(lines) < 1:
        raise PlotError(f"{path}: empty CSV")
    header = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(header):
            raise PlotError(f"{path}: malformed row {ln!r}")
        rows.append(dict(zip(header, parts)))
    return rows


def cmd_plot(args) -> int:
    run_dir = Path(args.run_dir)
    try:
        summary = _read_csv_rows(run_dir / "summary.csv")
        if not summary:
            raise PlotError(f"{run_dir}: summary.csv has no policy rows")
        curves: dict[str, CurveData] = {}
        horizon = 0
        for row in summary:
            kind = row["policy"]
            horizon = int(row["T"])
            trows = _read_csv_rows(run_dir / f"trials_{kind}.csv")
            by_trial: dict[int, list[tuple[int, float]]] = {}
            for r in trows:
                by_trial.setdefault(int(r["trial"]), []).append((int(r["t"]), float(r["cum_regret"])))
            cps = np.array([t for t, _ in sorted(by_trial[0])], dtype=int)
            matrix = np.vstack(
                [[v for _, v in sorted(by_trial[i])] for i in sorted(by_trial)]
            )
            if matrix.shape[1] != cps.shape[0]:
                raise PlotError(f"{run_dir}: ragged checkpoint grid for {kind}")
            mean, half = wald_band(matrix)
            curves[kind] = CurveData(
                checkpoints=cps, mean=mean, half_width=half, slope=float(row["slope"])
            )
        name = json.loads((run_dir / "MANIFEST").read_text()).get("name", run_dir.name)
        out_dir = Path(args.out) if args.out else run_dir
        out_path = out_dir / "regret.svg"
        write_regret_svg(out_path, curves, horizon, name)
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out_path)
    return 0


def cmd_constants(args) -> int:
    try:
        doc = _constants_doc(args.sigma, args.c_beta, args.d, args.T)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(doc, indent=2))
    return 0


def cmd_verify(args) -> int:
    override = None
    if args.seed is not None:
        override = args.seed
    else:
        try:
            override = _seed_override()
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    seed = DEFAULT_SEED if override is None else override
    results = run_verify(seed=seed, corrupt_gradient=args.corrupt_gradient)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} - {r.detail}")
    passed = sum(r.passed for r in results)
    print(f"verify: {passed}/{len(results)} properties passed (seed {seed})")
    return 0 if passed == len(results) else 3


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pricing-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config or shipped preset")
    p_run.add_argument(
        "--config", required=True,
        help=f"config JSON path, or a preset name ({', '.join(list_presets())})",
    )
    p_run.add_argument("--out", help="output root (overrides the config's output_dir)")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel trial workers")
    p_run.add_argument("--trace", action="store_true", help="write per-round optimizer diagnostics")
    p_run.set_defaults(func=cmd_run)

    p_plot = sub.add_parser("plot", help="render regret.svg for a finished run directory")
    p_plot.add_argument("run_dir", help="run directory produced by `run`")
    p_plot.add_argument("--out", help="directory for the SVG (default: the run directory)")
    p_plot.set_defaults(func=cmd_plot)

    p_const = sub.add_parser("constants", help="print derived problem constants as JSON")
    p_const.add_argument("--sigma", type=float, default=0.5)
    p_const.add_argument("--c-beta", dest="c_beta", type=float, default=0.3)
    p_const.add_argument("--d", type=int, default=2)
    p_const.add_argument("--T", type=int, default=65536)
    p_const.set_defaults(func=cmd_constants)

    p_verify = sub.add_parser("verify", help="run the fast property suite")
    p_verify.add_argument("--seed", type=int, default=None)
    p_verify.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    p_verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
