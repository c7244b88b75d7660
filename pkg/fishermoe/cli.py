#!/usr/bin/env python
import argparse
import dataclasses
import logging
import sys

from fishermoe._version import __version__
from fishermoe.baseline_metrics import format_invariance_report
from fishermoe.campaign_handler import DegenerateCampaignError
from fishermoe.config import ConfigError, load_config
from fishermoe.experiment_manager import OutputDirectoryLockedError
from fishermoe.interface import FisherMoE
from fishermoe.report_handler import EmptyReportDirectoryError
from fishermoe.utils import parse_number_list

logger = logging.getLogger("fishermoe")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGENERATE = 3
EXIT_INTERNAL = 4

COMMANDS = {
    "simulate": "Train one model per seed and save its trajectory",
    "failure-study": "Predict run failures from FHS at 10%% of training",
    "threshold-sweep": "Precision, recall and F1 of the FHS rule per threshold",
    "intervention-study": "Branch flagged runs into intervention arms",
    "geodesic-validate": "Compare per-step geodesic deviation with its bound",
    "lambda-sweep": "Final FSI across load-balancing weights with matched seeds",
    "invariance-demo": "Contrast heuristic and Fisher-Rao metrics under reparametrization",
    "report": "Summarize the artifacts of an output directory",
}


def build_parser():
    """
    Argument parser with one subcommand per experiment.
    """
    shared = argparse.ArgumentParser(add_help=False)
    config_group = shared.add_argument_group("Configuration", "Experiment options")
    config_group.add_argument(
        "-c",
        "--config",
        dest="config",
        metavar="PATH",
        default=None,
        help="YAML experiment configuration; defaults are used when omitted",
    )
    config_group.add_argument(
        "-o",
        "--out",
        dest="out",
        metavar="DIR",
        default=None,
        help="Output directory, overrides output_dir of the configuration",
    )
    config_group.add_argument(
        "--seeds",
        dest="seeds",
        metavar="LIST",
        default=None,
        help="Comma separated seeds, overrides campaign.seeds",
    )
    config_group.add_argument(
        "--parallel",
        dest="parallel",
        metavar="N",
        type=int,
        default=None,
        help="Number of worker processes, overrides campaign.parallel",
    )
    logging_group = shared.add_argument_group("Logging")
    verbosity = logging_group.add_mutually_exclusive_group()
    verbosity.add_argument(
        "-v", "--verbose", action="store_true", help="Show debug messages"
    )
    verbosity.add_argument(
        "-q",
        "--quiet",
        action="store_true",
        help="Show warnings and errors only, without progress bars",
    )

    parser = argparse.ArgumentParser(
        prog="fishermoe",
        description="Information-geometric analysis of mixture-of-experts specialization",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="command", required=True)
    commands = {
        name: subparsers.add_parser(name, parents=[shared], help=help_text)
        for name, help_text in COMMANDS.items()
    }
    commands["threshold-sweep"].add_argument(
        "--thresholds",
        dest="thresholds",
        metavar="LIST",
        default=None,
        help="Comma separated FHS thresholds, default 0.8,0.9,1.0,1.1,1.2",
    )
    commands["report"].add_argument(
        "--plots",
        action="store_true",
        help="Also draw fsi_trajectories.png and fhs_scatter.png",
    )
    return parser


def _configure_logging(args):
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    logging.captureWarnings(True)


def _resolve_config(args):
    config = load_config(args.config)
    try:
        if args.seeds is not None:
            config = config.with_seeds(parse_number_list(args.seeds, cast=int))
        if args.parallel is not None:
            config = dataclasses.replace(
                config,
                campaign=dataclasses.replace(config.campaign, parallel=args.parallel),
            )
    except ValueError as ve:
        raise ConfigError(str(ve)) from ve
    return config


def _dispatch(analysis, args):
    if args.command == "simulate":
        analysis.simulate()
    elif args.command == "failure-study":
        analysis.failure_study()
    elif args.command == "threshold-sweep":
        thresholds = None
        if args.thresholds is not None:
            try:
                thresholds = parse_number_list(args.thresholds)
            except ValueError as ve:
                raise ConfigError(str(ve)) from ve
        analysis.threshold_sweep(thresholds)
    elif args.command == "intervention-study":
        analysis.intervention_study()
    elif args.command == "geodesic-validate":
        if analysis.config.model.top_k is not None:
            raise ConfigError("geodesic validation requires dense routing")
        analysis.geodesic_validate()
    elif args.command == "lambda-sweep":
        analysis.lambda_sweep()
    elif args.command == "invariance-demo":
        print(format_invariance_report(analysis.invariance_demo()), end="")
    elif args.command == "report":
        print(analysis.report(plots=args.plots), end="")


def main(argv=None):
    """
    Run one subcommand.

    Returns:
        int: 0 success, 2 usage or configuration error, 3 degenerate
        campaign, 4 internal error.
    """
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        config = _resolve_config(args)
        analysis = FisherMoE(config, output_dir=args.out, progress=not args.quiet)
        _dispatch(analysis, args)
    except ConfigError as ce:
        logger.error("Invalid configuration: %s", ce)
        return EXIT_USAGE
    except (EmptyReportDirectoryError, OutputDirectoryLockedError) as error:
        logger.error("%s", error)
        return EXIT_USAGE
    except DegenerateCampaignError as dce:
        logger.error("%s", dce)
        return EXIT_DEGENERATE
    except Exception as error:  # noqa: BLE001
        logger.error("Internal error: %s", error)
        logger.debug("Traceback", exc_info=True)
        return EXIT_INTERNAL
    return EXIT_OK


def cli():
    """
    Command line interface for fishermoe.
    """
    sys.exit(main())


if __name__ == "__main__":
    cli()
