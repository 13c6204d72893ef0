"""repeater-rates: scenario rates, figure sweeps and Monte Carlo checks."""

from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple
import argparse
import io
import json
import logging
import sys

import pandas as pd
from pydantic import ValidationError
from tqdm import tqdm

from repeater.chain import Placement, scenario_rate
from repeater.config import (
    McSettings,
    RateSettings,
    SweepSettings,
    load_config_file,
    resolve_settings,
)
from repeater.errors import EXIT_OK, RepeaterError, create_error_response, exit_code_for
from repeater.mcsim import Protocol, PurifyVariant, analytic_mean, simulate, z_score
from repeater.presets import (
    CSV_COLUMNS,
    FIGURES,
    CsvRow,
    SweepSpec,
    CurveBase,
    figure_preset,
)
from repeater.waiting import EndPurifyMode

logger = logging.getLogger(__name__)


def _emit(text: str, output: Optional[str]) -> None:
    if output:
        with open(output, "w", newline="") as f:
            f.write(text)
        logger.info(f"Wrote {output}")
    else:
        sys.stdout.write(text)


def _dump_json(payload: Dict[str, Any]) -> str:
    return json.dumps(payload, indent=2) + "\n"


def _add_scenario_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--total-km", type=float, help="End-to-end distance L in km")
    parser.add_argument("--segment-km", type=float, help="Elementary segment length L0 in km")
    parser.add_argument("--fidelity", type=float, help="Target final fidelity")
    parser.add_argument("--purif-rounds", type=int, help="Purification rounds k")
    parser.add_argument("--purif-placement", choices=[p.value for p in Placement])
    parser.add_argument("--rows", type=int, help="Multiplexing rows r (1 = parallel)")
    parser.add_argument("--gate-loss", type=float, help="Local gate loss 1 - T")
    parser.add_argument("--attenuation-km", type=float, help="Fiber attenuation length")
    parser.add_argument("--signal-speed", type=float, help="Signal speed in m/s")
    parser.add_argument(
        "--end-purify-mode",
        choices=[m.value for m in EndPurifyMode],
        help="Pair count for purification after the last swap level",
    )


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--output", help="Write to this path instead of standard output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repeater-rates",
        description="Rates of hybrid quantum-repeater chains over lossy fiber",
    )
    parser.add_argument(
        "--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"]
    )
    sub = parser.add_subparsers(dest="command", required=True)

    rate = sub.add_parser("rate", help="Rate of a single scenario as JSON")
    _add_scenario_flags(rate)
    _add_common_flags(rate)
    rate.set_defaults(handler=cmd_rate)

    sweep = sub.add_parser("sweep", help="Rate-vs-fidelity curves as CSV")
    _add_scenario_flags(sweep)
    _add_common_flags(sweep)
    sweep.add_argument("--figure", type=int, choices=FIGURES, help="Use a figure preset")
    sweep.add_argument("--f-min", type=float)
    sweep.add_argument("--f-max", type=float)
    sweep.add_argument("--steps", type=int)
    sweep.add_argument("--workers", type=int)
    sweep.add_argument("--no-progress", action="store_true", default=None)
    sweep.set_defaults(handler=cmd_sweep)

    mc = sub.add_parser("mc", help="Monte Carlo estimate of a waiting time as JSON")
    _add_common_flags(mc)
    mc.add_argument("--protocol", choices=[p.value for p in Protocol])
    mc.add_argument("--n", type=int, help="Nesting levels")
    mc.add_argument("--rows", type=int)
    mc.add_argument("--p0", type=float)
    mc.add_argument("--p1", type=float, action="append", help="Repeat once per round")
    mc.add_argument("--trials", type=int)
    mc.add_argument("--seed", type=int)
    mc.add_argument("--variant", choices=[v.value for v in PurifyVariant])
    mc.add_argument("--workers", type=int)
    mc.add_argument("--block-size", type=int)
    mc.add_argument("--histogram", action="store_true", default=None)
    mc.set_defaults(handler=cmd_mc)
    return parser


def cmd_rate(args: argparse.Namespace) -> int:
    """Print one ScenarioResult as JSON."""
    settings = resolve_settings(RateSettings, load_config_file(args.config), vars(args))
    result = scenario_rate(settings.fidelity, settings.strategy(), settings.channel())
    _emit(_dump_json(result.model_dump(mode="json")), args.output)
    return EXIT_OK


def sweep_spec_from_settings(settings: SweepSettings) -> SweepSpec:
    if settings.figure is not None:
        preset = figure_preset(settings.figure, settings.gate_quality(), steps=settings.steps)
        return SweepSpec(
            f_final_min=settings.f_min,
            f_final_max=settings.f_max,
            steps=preset.steps,
            curves=preset.curves,
            figure=preset.figure,
        )
    return SweepSpec.from_strategies(
        [settings.strategy()], settings.channel(), settings.f_min, settings.f_max, settings.steps
    )


def run_sweep(spec: SweepSpec, workers: int = 1, progress: bool = False) -> List[CsvRow]:
    """Evaluate every (curve, fidelity) point; rows come back in curve-then-fidelity order."""
    tasks: List[Tuple[CurveBase, float]] = [
        (curve, f) for curve in spec.curves for f in spec.fidelities()
    ]
    logger.info(f"Sweeping {len(spec.curves)} curve(s) over {spec.steps} fidelities")

    def evaluate(task: Tuple[CurveBase, float]) -> CsvRow:
        curve, f = task
        return curve.evaluate(f)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(
            tqdm(pool.map(evaluate, tasks), total=len(tasks), desc="Sweeping", disable=not progress)
        )


def format_csv(spec: SweepSpec, rows: Sequence[CsvRow]) -> str:
    """Comment line with the sweep description, header, then one line per row."""
    buf = io.StringIO()
    buf.write("# " + json.dumps(spec.describe(), sort_keys=True, separators=(",", ":")) + "\n")
    frame = pd.DataFrame([row.model_dump(mode="json") for row in rows], columns=CSV_COLUMNS)
    frame.to_csv(buf, index=False, float_format="%.17g", lineterminator="\n")
    return buf.getvalue()


def cmd_sweep(args: argparse.Namespace) -> int:
    """Write the CSV for a preset or a custom single-strategy sweep."""
    settings = resolve_settings(SweepSettings, load_config_file(args.config), vars(args))
    spec = sweep_spec_from_settings(settings)
    rows = run_sweep(spec, workers=settings.workers, progress=not settings.no_progress)
    _emit(format_csv(spec, rows), args.output)
    return EXIT_OK


def cmd_mc(args: argparse.Namespace) -> int:
    """Print a SimEstimate plus the matching closed form and z-score."""
    settings = resolve_settings(McSettings, load_config_file(args.config), vars(args))
    config = settings.sim_config()
    estimate = simulate(config)
    reference = analytic_mean(config)
    payload = estimate.model_dump(mode="json")
    if not settings.histogram:
        payload.pop("histogram")
    payload["analytic_mean"] = reference
    payload["z_score"] = None if reference is None else z_score(estimate, reference)
    payload["seed"] = config.seed
    _emit(_dump_json(payload), args.output)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )
    try:
        return int(args.handler(args))
    except (RepeaterError, ValidationError) as e:
        sys.stdout.write(_dump_json(create_error_response(e)))
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
