import argparse
import sys
from typing import Dict, List, Optional

from app import create_pipeline
from app.eval.ablation import MCMC_VLB_NOTE
from app.utils.errors import DataError, HurricaneSviError, NumericalError, UsageError
from app.utils.logging_utils import setup_logging
from app.utils.run_config import RunConfig

logger = setup_logging(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

COMMANDS = ("simulate", "infer", "evaluate", "ablate")


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting."""

    def error(self, message: str) -> None:
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hurricane-svi", description="Label-free building damage inference from damage proxy maps.")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "simulate": "Write a synthetic scenario with known ground truth.",
        "infer": "Fit the damage model and write posterior maps.",
        "evaluate": "Score the inferred map and baselines against field labels.",
        "ablate": "Compare VI/MCMC, full/pruned graphs and batch sizes.",
    }
    for command in COMMANDS:
        sub = subparsers.add_parser(command, help=helps[command])
        sub.add_argument("--config", help="Flat key=value configuration file.")
        sub.add_argument("--seed", type=int, help="Root seed of every random stream.")
        sub.add_argument("--out", help="Output directory.")
        sub.add_argument("--method", choices=("vi", "mcmc"), help="Inference method.")
        sub.add_argument("--batch-size", type=int, dest="batch_size", help="Mini-batch size (default 256; --set batch_size=full for full batch).")
        sub.add_argument("--no-prune", action="store_true", help="Keep the full graph at every location.")
        sub.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="Override any configuration key; may be repeated.",
        )
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, object]:
    overrides: Dict[str, object] = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}.")
        overrides[key.strip()] = value
    for key in ("seed", "out", "method", "batch_size"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    if args.no_prune:
        overrides["prune"] = False
    return overrides


def run(args: argparse.Namespace) -> None:
    config = RunConfig.load(args.config, _overrides(args))
    service = create_pipeline(config.out_dir)
    logger.info(f"Running '{args.command}' with output directory {config.out_dir}.")

    if args.command == "simulate":
        service.simulate(config)
    elif args.command == "infer":
        service.infer(config, progress=sys.stdout)
    elif args.command == "evaluate":
        for summary in service.evaluate(config):
            sys.stdout.write(
                f"{summary.name}\tauc={summary.auc:.4f}\ttpr={summary.tpr:.4f}\ttnr={summary.tnr:.4f}"
                f"\tthreshold={summary.threshold:.6g}\n"
            )
    else:
        report = service.ablate(config)
        sys.stdout.write(report.to_string(index=False) + "\n")
        sys.stdout.write(MCMC_VLB_NOTE + "\n")
    service.verify()


def main(argv: Optional[List[str]] = None) -> int:
    """
    Command-line entry point.

    Returns:
        int: 0 on success, 1 for usage errors, 2 for data errors, 3 for numerical failures.
    """
    try:
        args = build_parser().parse_args(argv)
        run(args)
    except UsageError as e:
        logger.error(f"Usage error: {e}")
        sys.stderr.write(f"usage error: {e}\n")
        return EXIT_USAGE
    except DataError as e:
        logger.error(f"Data error: {e}")
        return EXIT_DATA
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}", exc_info=True)
        return EXIT_NUMERIC
    except HurricaneSviError as e:
        logger.error(f"Invalid arguments: {e}")
        return EXIT_USAGE
    return EXIT_OK
