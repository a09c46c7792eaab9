"""Command-line interface of magcal: run, simulate, obsv and report."""
import os
import sys
import json
import logging
import argparse
import yaml
from magcal.core.utils import get_logger, tolist
from magcal.core.errors import MagcalError, ConfigError, DatasetError, UnobservableError
from magcal.core.input import parse_input
from magcal.core.magcal import MAGCAL, load_stream, still_window
from magcal.core.report import load_report, compare_reports, comparison_table
from magcal.sensors.dataset import write_csv, still_average_bias

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_UNOBSERVABLE = 3


def _add_verbose(parser):
    parser.add_argument(
        "-v",
        dest="verbose",
        default=False,
        action="store_true",
        help="Raise verbosity level from INFO to DEBUG for the console.",
    )


def set_run_parser(parser=None):
    """Define parser options of a calibration run.

    Parameters:

        parser: python parser
            Typically, that will be a sub-parser passed from top executable.
    """
    if parser is None:
        parser = argparse.ArgumentParser(description="Calibrate a magnetometer.")
        subparser = False
    else:
        subparser = True
    _add_verbose(parser)
    parser.add_argument("config", type=str, help="Run configuration (JSON or YAML).")
    parser.add_argument(
        "-o",
        dest="outdir",
        type=str,
        default=None,
        action="store",
        help="Output directory; overrides 'outdir' of the configuration.",
    )
    if subparser:
        parser.set_defaults(func=main_run)
        return None
    return parser


def main_run(args):
    """Run the configured calibration and print the report."""
    runreport = MAGCAL(args.config, verbose=args.verbose, outdir=args.outdir)()
    print(runreport.table())
    return EXIT_OK


def set_simulate_parser(parser=None):
    """Define parser options for writing a simulated dataset."""
    if parser is None:
        parser = argparse.ArgumentParser(description="Write a simulated dataset.")
        subparser = False
    else:
        subparser = True
    _add_verbose(parser)
    parser.add_argument("config", type=str, help="Configuration with a 'simulation' section.")
    parser.add_argument(
        "-o",
        dest="output",
        type=str,
        default="simulated.csv",
        action="store",
        help="(dflt: simulated.csv) CSV file; the .dataset.json and "
        ".truth.json files are written next to it.",
    )
    if subparser:
        parser.set_defaults(func=main_simulate)
        return None
    return parser


def main_simulate(args):
    """Write <name>.csv, <name>.dataset.json and <name>.truth.json."""
    logger = get_logger("magcal", verbosity=logging.DEBUG if args.verbose else logging.INFO)
    setup = parse_input(args.config)
    if setup["simulation"] is None:
        raise ConfigError("{} has no 'simulation' section".format(args.config))
    stream, truth, _ = load_stream(setup, logger)
    outdir = os.path.dirname(os.path.abspath(args.output))
    os.makedirs(outdir, exist_ok=True)
    write_csv(stream, args.output)
    base, _ = os.path.splitext(args.output)
    truthfile = base + ".truth.json"
    with open(truthfile, "w") as fp:
        json.dump(tolist(truth.to_dict()), fp, indent=2)
    logger.info("Simulation truth written to %s", truthfile)
    return EXIT_OK


def set_obsv_parser(parser=None):
    """Define parser options for the observability check."""
    if parser is None:
        parser = argparse.ArgumentParser(description="Observability of a dataset.")
        subparser = False
    else:
        subparser = True
    _add_verbose(parser)
    parser.add_argument("config", type=str, help="Run configuration (JSON or YAML).")
    parser.add_argument(
        "-o",
        dest="output",
        type=str,
        default="eigen_ratio.csv",
        action="store",
        help="(dflt: eigen_ratio.csv) Eigenvalue-ratio series.",
    )
    if subparser:
        parser.set_defaults(func=main_obsv)
        return None
    return parser


def main_obsv(args):
    """Print the observability table; exit 3 if nothing is observable."""
    magcal = MAGCAL(args.config, verbose=args.verbose)
    stream, _, _ = load_stream(magcal.setup, magcal.logger)
    window = still_window(magcal.setup, stream)
    still_bias = None if window is None else still_average_bias(stream, window)
    obsv = magcal.observability(stream, still_bias)
    print(obsv.table())
    obsv.write_csv(args.output)
    return EXIT_OK if obsv.observable else EXIT_UNOBSERVABLE


def set_report_parser(parser=None):
    """Define parser options for comparing run reports."""
    if parser is None:
        parser = argparse.ArgumentParser(description="Compare two run reports.")
        subparser = False
    else:
        subparser = True
    _add_verbose(parser)
    parser.add_argument(
        "--compare",
        dest="compare",
        nargs=2,
        required=True,
        metavar=("RUN_A", "RUN_B"),
        help="Two report.json files or output directories.",
    )
    if subparser:
        parser.set_defaults(func=main_report)
        return None
    return parser


def main_report(args):
    first, second = (load_report(path) for path in args.compare)
    rows = compare_reports(first, second)
    names = tuple(os.path.basename(os.path.normpath(path)) for path in args.compare)
    print(comparison_table(rows, names=names))
    return EXIT_OK


def get_parser():
    parser = argparse.ArgumentParser(
        description="Magnetometer calibration and alignment to inertial sensors."
    )
    subparsers = parser.add_subparsers(title="sub-commands", dest="command")
    set_run_parser(subparsers.add_parser("run", help="Calibrate as configured."))
    set_simulate_parser(subparsers.add_parser("simulate", help="Write a simulated dataset."))
    set_obsv_parser(subparsers.add_parser("obsv", help="Observability verdicts of a dataset."))
    set_report_parser(subparsers.add_parser("report", help="Compare run reports."))
    return parser


def main(argv=None):
    """Entry point; returns the process exit code.

    Exit codes: 0 success, 2 invalid configuration or dataset, 3 data
    that does not excite the parameters, 1 any other calibration error.
    """
    parser = get_parser()
    args = parser.parse_args(argv)
    if getattr(args, "func", None) is None:
        parser.print_help()
        return EXIT_INVALID
    logger = get_logger("magcal")
    try:
        return args.func(args)
    except (ConfigError, DatasetError, yaml.YAMLError, json.JSONDecodeError) as exc:
        logger.critical("Invalid input: %s", exc)
        return EXIT_INVALID
    except UnobservableError as exc:
        logger.critical("%s", exc)
        return EXIT_UNOBSERVABLE
    except MagcalError as exc:
        logger.critical("Calibration failed: %s", exc)
        return EXIT_FAILURE
    except FileNotFoundError as exc:
        logger.critical("%s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
