"""
Command-line entry point.

    causal-cf gen-data | train | grid-search | evaluate | explain | loo-evaluate
"""
import argparse
import logging
import sys
from typing import List, Optional

from app.config.constants import COMPARISON_COLUMNS
from app.core.config import load_experiment_config, settings
from app.core.errors import EXIT_OK, ConfigError, exit_code_for
from app.services.experiment_service import ExperimentService

logger = logging.getLogger(__name__)


class CliParser(argparse.ArgumentParser):
    """argparse reports usage errors through ConfigError instead of exiting."""

    def error(self, message):
        raise ConfigError(message)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Experiment config JSON file")
    parser.add_argument("--seed", type=int, help="Root seed (overrides the config)")
    parser.add_argument("--out", help="Run directory (overrides the config)")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="Dotted config override, e.g. cf.epochs=20; repeatable",
    )
    parser.add_argument("--workers", type=int, help="Parallel workers for grid-search and loo-evaluate")


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog="causal-cf", description="Causally constrained counterfactual explanations")
    commands = parser.add_subparsers(dest="command", parser_class=CliParser)
    commands.required = True

    for name, help_text in (
        ("gen-data", "Generate or ingest the dataset"),
        ("train", "Train classifier, causal VAE and counterfactual engine"),
        ("grid-search", "Tune the counterfactual engine on the validation split"),
    ):
        _common(commands.add_parser(name, help=help_text))

    evaluate = commands.add_parser("evaluate", help="Compare all methods on the test split")
    _common(evaluate)
    evaluate.add_argument("--plot", action="store_true", help="Also render arrow plots as PNG")

    explain = commands.add_parser("explain", help="Explain a single record")
    _common(explain)
    explain.add_argument("--record", required=True, help="Comma-separated values or a CSV file")
    explain.add_argument("--target", type=int, choices=(0, 1), help="Target label (default: flipped prediction)")

    loo = commands.add_parser("loo-evaluate", help="Leave-one-out comparison")
    _common(loo)
    loo.add_argument("--full", action="store_true", help="Run every fold instead of the configured subsample")
    return parser


def _print_reports(reports) -> None:
    print(" | ".join(COMPARISON_COLUMNS))
    for report in reports:
        print(" | ".join(str(value) for value in report.table_row()))


def run(args: argparse.Namespace) -> int:
    overrides = list(args.overrides)
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    config = load_experiment_config(args.config, overrides, seed=args.seed, output_dir=args.out)
    service = ExperimentService(config)

    if args.command == "gen-data":
        data = service.gen_data()
        print(f"Wrote {data.num_samples} records to {service.layout.data_dir}")
    elif args.command == "train":
        classifier, vae, _ = service.train()
        print(f"Classifier metrics: {classifier.metrics}")
        print(f"VAE final h = {vae.final_h:.3e} (converged: {vae.converged})")
    elif args.command == "grid-search":
        best, _ = service.grid_search()
        print(
            f"Best cell: hidden={best.hidden_size}, lr={best.learning_rate_mod}, batch={best.batch_size}"
        )
    elif args.command == "evaluate":
        _print_reports(service.evaluate(plot=args.plot))
    elif args.command == "explain":
        _, text = service.explain(args.record, args.target)
        print(text)
    elif args.command == "loo-evaluate":
        _print_reports(service.loo_evaluate(full=args.full))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
        handlers=[logging.StreamHandler(sys.stderr)],
    )
    try:
        return run(build_parser().parse_args(argv))
    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
