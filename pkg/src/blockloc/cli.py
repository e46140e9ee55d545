"""Command-line experiment driver.

`blockloc run` sweeps anchor/malicious rates over secure and insecure runs
and writes a CSV summary, gnuplot-style curve data, and optionally a
rendered figure. Defaults match the reference scenario: 100 nodes in a
100x100 m area with a 30 m communication range, 10 runs per cell.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from blockloc.experiment import ExperimentPlan, run_experiment
from blockloc.geometry import PathLossParams
from blockloc.netsim import Mode, SimConfig
from blockloc.reporting import emit_csv, emit_plot_data, render_figure

_CONFIG_KEYS = {
    "n_nodes", "area", "range_r", "error_factor", "difficulty", "slack",
    "min_verifiable_neighbors", "max_hopcount", "max_rounds", "mode", "seed", "runs", "anchor_rates",
    "malicious_rates", "p_tr", "p_loss_d0", "tau", "d0", "sigma",
}


def _rates(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _area(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected WIDTH,HEIGHT, got {text!r}")
    return float(parts[0]), float(parts[1])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an anchor/malicious-rate sweep")
    run.add_argument("--config", type=Path, help="JSON config file; flags override its values")
    run.add_argument("--anchor-rates", type=_rates, help="comma-separated anchor rates")
    run.add_argument("--malicious-rates", type=_rates, help="comma-separated malicious rates")
    run.add_argument("--runs", type=int, help="runs per cell (default 10)")
    run.add_argument("--seed", type=int, help="base seed for derived per-run seeds")
    run.add_argument("--mode", choices=["secure", "insecure", "both"], help="protocol variant(s)")
    run.add_argument("--difficulty", type=int, help="proof-of-work leading zero bits")
    run.add_argument("--n-nodes", type=int, help="nodes per run")
    run.add_argument("--area", type=_area, help="deployment area as WIDTH,HEIGHT meters")
    run.add_argument("--range-r", type=float, help="communication range in meters")
    run.add_argument("--error-factor", type=float, help="malicious position scaling factor")
    run.add_argument("--slack", type=float, help="vicinity slack multiplier (>= 1)")
    run.add_argument("--min-verifiable-neighbors", type=int,
                     help="listed neighbors with ledger positions a claim must check against")
    run.add_argument("--max-hopcount", type=int, help="discovery ring limit")
    run.add_argument("--max-rounds", type=int, help="localization round limit")
    run.add_argument("--p-tr", type=float, help="transmit power, dBm")
    run.add_argument("--p-loss-d0", type=float, help="path loss at reference distance, dB")
    run.add_argument("--tau", type=float, help="path-loss exponent")
    run.add_argument("--d0", type=float, help="path-loss reference distance, m")
    run.add_argument("--sigma", type=float, help="RSSI shadowing stddev, dB")
    run.add_argument("--out", type=Path, default=Path("results.csv"), help="CSV output path")
    run.add_argument("--plot-out", type=Path, default=Path("curves.dat"),
                     help="gnuplot series output path")
    run.add_argument("--fig-out", type=Path,
                     help="rendered figure path (default: plot-out with .png suffix)")
    run.add_argument("--no-figure", action="store_true", help="skip figure rendering")
    run.add_argument("--workers", type=int, default=1,
                     help="worker processes for runs (output is identical at any count)")
    return parser


def _load_config_file(path: Path) -> dict:
    try:
        values = json.loads(path.read_text())
    except OSError as exc:
        raise SystemExit(f"blockloc: cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise SystemExit(f"blockloc: invalid JSON in {path}: {exc}")
    if not isinstance(values, dict):
        raise SystemExit(f"blockloc: config {path} must be a JSON object")
    unknown = set(values) - _CONFIG_KEYS
    if unknown:
        raise SystemExit(f"blockloc: unknown config keys in {path}: {', '.join(sorted(unknown))}")
    return values


def _setting(args: argparse.Namespace, file_values: dict, key: str, default):
    """Resolution order: CLI flag, then config file, then default."""
    flag_value = getattr(args, key, None)
    if flag_value is not None:
        return flag_value
    if key in file_values:
        return file_values[key]
    return default


def build_plan(args: argparse.Namespace) -> ExperimentPlan:
    file_values = _load_config_file(args.config) if args.config else {}
    get = lambda key, default: _setting(args, file_values, key, default)

    pathloss = PathLossParams(
        p_tr=get("p_tr", 0.0),
        p_loss_d0=get("p_loss_d0", 40.0),
        tau=get("tau", 3.0),
        d0=get("d0", 1.0),
        sigma=get("sigma", 2.0),
    )
    base = SimConfig(
        n_nodes=get("n_nodes", 100),
        area=tuple(get("area", (100.0, 100.0))),
        range_r=get("range_r", 30.0),
        error_factor=get("error_factor", 1.5),
        pathloss=pathloss,
        difficulty=get("difficulty", 12),
        slack=get("slack", 1.0),
        min_verifiable_neighbors=get("min_verifiable_neighbors", 4),
        max_hopcount=get("max_hopcount", 5),
        max_rounds=get("max_rounds", 10),
    )
    mode_name = get("mode", "both")
    modes = (Mode.SECURE, Mode.INSECURE) if mode_name == "both" else (Mode(mode_name),)
    return ExperimentPlan(
        base=base,
        anchor_rates=tuple(get("anchor_rates", (0.2, 0.5))),
        malicious_rates=tuple(get("malicious_rates", (0.1, 0.2, 0.3, 0.4, 0.5))),
        modes=modes,
        runs_per_cell=get("runs", 10),
        base_seed=get("seed", 1),
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        plan = build_plan(args)
        plan.validate()
        plan.base.validate()
    except ValueError as exc:
        print(f"blockloc: invalid configuration: {exc}", file=sys.stderr)
        return 1

    n_cells = len(plan.anchor_rates) * len(plan.malicious_rates) * len(plan.modes)
    print(
        f"running {n_cells} cells x {plan.runs_per_cell} runs "
        f"(n={plan.base.n_nodes}, R={plan.base.range_r} m, seed={plan.base_seed})"
    )
    results = run_experiment(plan, workers=max(1, args.workers))

    try:
        emit_csv(results, args.out)
        print(f"wrote {args.out}")
        emit_plot_data(results, args.plot_out)
        print(f"wrote {args.plot_out}")
        if not args.no_figure:
            fig_out = args.fig_out or args.plot_out.with_suffix(".png")
            render_figure(results, fig_out)
            print(f"wrote {fig_out}")
    except (OSError, ValueError) as exc:
        print(f"blockloc: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
