#!/usr/bin/env python3
"""
homux - Higher-order O-information multiplex hypergraphs
Command-line front end for the staged pipeline and the synthetic generator.

Usage:
    homux run-all --config CONFIG [--jobs N] [--seed S] [--resume STAGE]
    homux network|candidates|validate|multiplex|metrics --config CONFIG
    homux synth --regime REGIME --out DIR [--n-samples N] [--seed S]

Exit codes: 0 success, 2 configuration, 3 data, 4 estimation.
"""

import argparse
import json
import logging
import os
import re
import sys
from typing import Any, Dict, List, Optional

# Try to import rich, fall back to plain output if not available
try:
    from rich import box
    from rich.console import Console
    from rich.table import Table
    RICH_AVAILABLE = True
except ImportError:
    RICH_AVAILABLE = False

from homux.config import APP_DESCRIPTION, APP_NAME, APP_VERSION, PIPELINE_STAGES, SYNTH_REGIMES, PipelineConfig
from homux.errors import ConfigError, HomuxError, StageFailure, as_homux_error
from homux.formats import write_dataset, write_ground_truth, write_scale_map
from homux.model import ScaleMap
from homux.pipeline import PipelineExecutor, StageResult, StageStatus
from homux.settings import config_hash, load_settings, save_settings
from homux.synth import calibrate_loadings, discretize_likert, regime_system, sample_system
from homux.utils import STAGE_NAMES, meta_block, setup_logging

logger = logging.getLogger(__name__)


class PlainConsole:
    """Fallback console when rich is not available."""

    def print(self, text="", **kwargs):
        clean = re.sub(r"\[/?[^\]]+\]", "", str(text))
        print(clean)


class HomuxApp:
    """Command dispatcher and console reporting."""

    def __init__(self):
        self.console = Console() if RICH_AVAILABLE else PlainConsole()

    # === Config ===

    def load_config(self, args: argparse.Namespace) -> PipelineConfig:
        settings = load_settings(args.config)
        if args.seed is not None:
            settings["seed"] = args.seed
        if args.jobs is not None:
            settings["jobs"] = args.jobs
        if args.output_dir is not None:
            settings["output_dir"] = args.output_dir
        base_dir = os.path.dirname(os.path.abspath(args.config)) if args.config else os.getcwd()
        if not os.path.isabs(settings["output_dir"]):
            settings["output_dir"] = os.path.join(base_dir, settings["output_dir"])
        return PipelineConfig.from_settings(settings, base_dir=base_dir)

    # === Pipeline commands ===

    def run_stages(self, args: argparse.Namespace, stages: Optional[List[str]] = None) -> int:
        cfg = self.load_config(args)
        executor = PipelineExecutor(cfg, on_output=lambda line: self.console.print(f"[dim]{line}[/]"))
        self.console.print(f"[bold cyan]{APP_NAME} {APP_VERSION}[/] [dim]config {executor.config_hash[:12]}[/]")
        manifest = executor.run(resume=getattr(args, "resume", None), stages=stages)
        self.show_stage_results(executor.results)
        self.show_summary(manifest)
        self.console.print(f"[green]✓ Artifacts in {cfg.output_dir}[/]")
        return 0

    def show_stage_results(self, results: List[StageResult]) -> None:
        """One line per executed (stage, scope)."""
        for result in results:
            mark = "[green]✓[/]" if result.status is StageStatus.COMPLETE else "[red]✗[/]"
            counts = json.dumps(result.counts, sort_keys=True) if result.counts else ""
            self.console.print(f"{mark} {result.stage} ({result.layer}) [dim]{counts}[/]")

    def show_summary(self, manifest: Dict[str, Any]) -> None:
        """Per-layer counts table."""
        rows = []
        for name, layer in manifest["layers"].items():
            edges = ", ".join(f"{m}:{v['edges']}" for m, v in layer.get("networks", {}).items()) or "-"
            cands = layer.get("candidates", {}).get("total", "-")
            val = layer.get("validation", {})
            rows.append([name, edges, str(cands), str(val.get("validated", "-")),
                         str(val.get("synergy", "-")), str(val.get("redundancy", "-"))])
        header = ["Layer", "Edges", "Candidates", "Validated", "Synergy", "Redundancy"]

        if RICH_AVAILABLE:
            table = Table(box=box.SIMPLE, title="Run summary")
            for col in header:
                table.add_column(col, justify="left" if col == "Layer" else "right")
            for row in rows:
                table.add_row(*row)
            self.console.print(table)
        else:
            self.console.print("  ".join(header))
            for row in rows:
                self.console.print("  ".join(row))

        for name, layer in manifest["layers"].items():
            recovery = layer.get("recovery")
            if recovery:
                parts = [f"{regime}: {c['sign_correct']}/{c['planted']}" for regime, c in recovery["per_regime"].items()]
                self.console.print(f"[cyan]Recovery[/] {name}: {'; '.join(parts)} "
                                   f"(unplanted {recovery['unplanted']}, cross-block {recovery['cross_block']})")

    # === Synthetic data ===

    def run_synth(self, args: argparse.Namespace) -> int:
        calibration = calibrate_loadings(args.floor)
        if RICH_AVAILABLE:
            table = Table(box=box.SIMPLE, title=f"Calibrated loadings {tuple(round(a, 4) for a in calibration.loadings)}")
            table.add_column("Regime")
            table.add_column("Omega (nats)", justify="right")
            for regime, omega in calibration.omegas.items():
                table.add_row(regime, f"{omega:+.4f}")
            self.console.print(table)
        else:
            for regime, omega in calibration.omegas.items():
                self.console.print(f"  {regime}: {omega:+.4f}")
        if args.calibrate_only:
            return 0

        if args.seed is None:
            raise ConfigError("synth needs --seed")
        loadings = tuple(args.loadings) if args.loadings else calibration.loadings
        spec = regime_system(args.regime, args.n_samples, args.seed, loadings=loadings,
                             n_triplets=args.n_triplets, floor=args.floor)
        sample = sample_system(spec, layer_id=args.regime, floor=args.floor)
        data = discretize_likert(sample.data, args.likert_levels) if args.likert_levels else sample.data

        out = args.out
        params = {"regime": args.regime, "seed": args.seed, "n_samples": args.n_samples,
                  "n_triplets": args.n_triplets, "loadings": list(loadings), "likert_levels": args.likert_levels}
        meta = meta_block(config_hash({"synth": params}), params)
        write_dataset(os.path.join(out, "data.csv"), data)
        write_ground_truth(os.path.join(out, "ground_truth.json"), sample.truth, meta)
        blocks = ScaleMap(
            scales={f"B{b + 1}": p.multiplet.items for b, p in enumerate(sample.truth.planted)},
            unassigned=frozenset(),
            n_items=spec.n_items,
        )
        write_scale_map(os.path.join(out, "scale_map.json"), blocks)
        save_settings({
            "seed": args.seed,
            "output_dir": "run",
            "layers": {args.regime: {"data": "data.csv", "ground_truth": "ground_truth.json"}},
            "scale_map": "scale_map.json",
            "candidates": {"inter_subscale": False},
            "validation": {"effect_floor": args.floor},
        }, os.path.join(out, "config.json"))
        self.console.print(f"[green]✓ {spec.n_items} items x {spec.n_samples} rows written to {out}[/]")
        return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=APP_NAME,
        description=f"{APP_NAME} - {APP_DESCRIPTION}",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", "-V", action="version", version=f"{APP_NAME} {APP_VERSION}")
    parser.add_argument("--log-level", default=None, help="Override HOMUX_LOG (DEBUG, INFO, WARNING, ERROR)")
    sub = parser.add_subparsers(dest="command", required=True)

    def pipeline_options(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", "-c", required=True, help="Pipeline config JSON")
        p.add_argument("--jobs", "-j", type=int, default=None, help="Worker cap (results do not depend on it)")
        p.add_argument("--seed", type=int, default=None, help="Master seed (overrides config)")
        p.add_argument("--output-dir", "-o", default=None, help="Output directory (overrides config)")

    run_all = sub.add_parser("run-all", help="Run every stage for every layer")
    pipeline_options(run_all)
    run_all.add_argument("--resume", choices=STAGE_NAMES, default=None,
                         help="Resume at a stage; earlier stages must be complete under the same config")

    for stage in PIPELINE_STAGES:
        p = sub.add_parser(stage.name, help=stage.description)
        pipeline_options(p)

    synth = sub.add_parser("synth", help="Generate a synthetic block system with planted triplets")
    synth.add_argument("--regime", choices=SYNTH_REGIMES, default="mixed")
    synth.add_argument("--n-samples", type=int, default=5000)
    synth.add_argument("--n-triplets", type=int, default=9)
    synth.add_argument("--seed", type=int, default=None)
    synth.add_argument("--floor", type=float, default=0.15, help="Effect floor in nats used for calibration")
    synth.add_argument("--loadings", type=float, nargs=3, default=None, metavar=("A1", "A2", "A3"),
                       help="Explicit loadings instead of calibrated ones")
    synth.add_argument("--likert-levels", type=int, default=None, help="Quantile-discretize into this many levels")
    synth.add_argument("--calibrate-only", action="store_true", help="Only report calibrated loadings")
    synth.add_argument("--out", default="synthetic", help="Output directory")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    app = HomuxApp()

    try:
        if args.command == "synth":
            return app.run_synth(args)
        if args.command == "run-all":
            return app.run_stages(args)
        return app.run_stages(args, stages=[args.command])
    except StageFailure as e:
        app.console.print(f"[red]error[/] layer={e.layer} stage={e.stage} exit={e.exit_code}: {e.cause}")
        return e.exit_code
    except HomuxError as e:
        app.console.print(f"[red]error[/] {type(e).__name__} exit={e.exit_code}: {e}")
        return e.exit_code
    except Exception as e:
        err = as_homux_error(e)
        logger.debug("Unhandled %s", type(e).__name__, exc_info=True)
        app.console.print(f"[red]error[/] {type(err).__name__} exit={err.exit_code}: {err}")
        return err.exit_code
    except KeyboardInterrupt:
        print("\n[Interrupted]")
        return 130


if __name__ == "__main__":
    sys.exit(main())
