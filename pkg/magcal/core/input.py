"""
Routines to handle the run configuration file of magcal
"""
import os
import json
import yaml
from magcal.core.utils import get_logger
from magcal.core.errors import ConfigError
from magcal.core.ekf import EkfConfig
from magcal.core.observability import TOL_DEFAULT
from magcal.sensors.dataset import DatasetSpec
from magcal.sensors.simulate import NoiseConfig, SimTruth, DEFAULT_SAMPLE_RATE

LOGGER = get_logger(__name__)

MODES = ("ekf", "ekf-noaccel", "ekf-twopass", "batch-thm21", "batch-thm22")

TOP_KEYS = {
    "mode",
    "seed",
    "outdir",
    "plots",
    "abort_unobservable",
    "dataset",
    "simulation",
    "ekf",
    "observability",
    "batch",
}

DEFAULT_PROFILE = [
    {"kind": "stationary", "duration": 10.0},
    {"kind": "tumbling", "duration": 120.0, "axes": "xyz", "peak_rate": 1.0},
]


def get_input(filename):
    """Read input; Exception for non-existent file."""
    _, intype = os.path.splitext(filename)
    with open(filename, "r") as infile:
        if intype == ".json":
            try:
                spec = json.load(infile)
            except ValueError as exc:
                LOGGER.critical("Input not a valid JSON")
                raise ConfigError("{}: {}".format(filename, exc)) from exc
        else:
            # YAML is a superset of JSON
            try:
                spec = yaml.safe_load(infile)
            except yaml.YAMLError as exc:
                LOGGER.critical("Input not a valid YAML")
                raise ConfigError("{}: {}".format(filename, exc)) from exc
    if not isinstance(spec, dict):
        raise ConfigError("{} does not hold a configuration mapping".format(filename))
    return spec


def parse_input(userinp, basedir=None, report=True):
    """Parse a run configuration and return the setup.

    Args:
        userinp (str or dict): configuration file name or its contents
        basedir (str): directory against which relative paths are
            resolved; the directory of the file by default

    Returns:
        dict: with keys 'config', 'dataset' (DatasetSpec or None),
            'simulation' (dict or None), 'ekf' (EkfConfig),
            'observability', 'batch' and 'userinp' (the raw input)
    """
    if isinstance(userinp, str):
        if basedir is None:
            basedir = os.path.dirname(os.path.abspath(userinp))
        userinp = get_input(userinp)
    userinp = dict(userinp)
    unknown = set(userinp) - TOP_KEYS
    if unknown:
        raise ConfigError("unknown configuration keys {}".format(sorted(unknown)))
    #
    # CONFIG
    config = get_config(userinp, basedir=basedir, report=report)
    #
    # DATA
    datainp = userinp.get("dataset", None)
    siminp = userinp.get("simulation", None)
    if (datainp is None) == (siminp is None):
        raise ConfigError("configuration needs exactly one of 'dataset' or 'simulation'")
    dataset = None
    simulation = None
    if datainp is not None:
        dataset = DatasetSpec.from_dict(datainp, basedir=basedir)
    else:
        simulation = get_simulation(siminp)
    #
    # ESTIMATION
    ekf = get_ekf(userinp.get("ekf", None), dataset)
    observability = get_observability(userinp.get("observability", None))
    batch = get_batch(userinp.get("batch", None))
    if report:
        LOGGER.info("Filter settings: %s", ekf)
        LOGGER.info("Observability settings: %s", observability)
    return {
        "config": config,
        "dataset": dataset,
        "simulation": simulation,
        "ekf": ekf,
        "observability": observability,
        "batch": batch,
        "userinp": userinp,
    }


def get_config(userinp, basedir=None, report=True):
    """Parse the run-level keys of the user input"""
    if userinp is None:
        userinp = {}
    config = {}
    mode = userinp.get("mode", "ekf")
    if mode not in MODES:
        raise ConfigError("unknown mode '{}'; use one of {}".format(mode, MODES))
    config["mode"] = mode
    try:
        config["seed"] = int(userinp.get("seed", 0))
    except (TypeError, ValueError):
        raise ConfigError("seed must be an integer, got {}".format(userinp.get("seed")))
    outdir = userinp.get("outdir", None)
    if outdir is not None:
        outdir = os.path.expanduser(outdir)
        if basedir is not None and not os.path.isabs(outdir):
            outdir = os.path.join(basedir, outdir)
        outdir = os.path.abspath(outdir)
    config["outdir"] = outdir
    config["plots"] = bool(userinp.get("plots", False))
    config["abort_unobservable"] = bool(userinp.get("abort_unobservable", False))
    if report:
        LOGGER.info("The following configuration was understood:")
        for key, val in config.items():
            LOGGER.info("%s: %s", key, val)
    return config


def get_simulation(userinp):
    """Parse the 'simulation' section.

    Truth noise defaults to that of a simulated low-cost unit; the
    profile defaults to 10 s still followed by 120 s of tumbling.
    """
    userinp = dict(userinp or {})
    unknown = set(userinp) - {"truth", "noise", "profile", "disturbance", "sample_rate"}
    if unknown:
        raise ConfigError("unknown simulation settings {}".format(sorted(unknown)))
    noise = NoiseConfig.from_dict(userinp.get("noise"), base=NoiseConfig.sensor_default())
    truthinp = dict(userinp.get("truth") or {})
    sample_rate = float(userinp.get("sample_rate", truthinp.get("sample_rate", DEFAULT_SAMPLE_RATE)))
    truthinp["sample_rate"] = sample_rate
    truth = SimTruth.from_dict(truthinp, noise=noise)
    profile = userinp.get("profile", DEFAULT_PROFILE)
    if not isinstance(profile, list) or not profile:
        raise ConfigError("simulation profile must be a non-empty list of segments")
    disturbance = userinp.get("disturbance", None)
    if disturbance is not None:
        disturbance = dict(disturbance)
        unknown = set(disturbance) - {"magnitude", "fraction", "length", "kind", "frequency"}
        if unknown:
            raise ConfigError("unknown disturbance settings {}".format(sorted(unknown)))
        disturbance.setdefault("magnitude", 1.0)
        disturbance.setdefault("fraction", 0.5)
    return {
        "truth": truth,
        "profile": profile,
        "disturbance": disturbance,
        "sample_rate": sample_rate,
    }


def get_ekf(userinp, dataset=None):
    """Filter configuration; the estimation window of a dataset is used
    unless the 'ekf' section sets start or stop."""
    userinp = dict(userinp or {})
    if dataset is not None and dataset.estimation is not None:
        try:
            start, stop = dataset.estimation
        except (TypeError, ValueError):
            raise ConfigError(
                "estimation window must be [start, stop], got {}".format(dataset.estimation)
            )
        userinp.setdefault("start", start)
        userinp.setdefault("stop", stop)
    start = userinp.get("start", None)
    if start is not None and start != "auto":
        try:
            userinp["start"] = float(start)
        except (TypeError, ValueError):
            raise ConfigError("ekf start must be a time or 'auto', got {}".format(start))
    return EkfConfig.from_dict(userinp)


def get_observability(userinp):
    userinp = dict(userinp or {})
    unknown = set(userinp) - {"tol", "record_every"}
    if unknown:
        raise ConfigError("unknown observability settings {}".format(sorted(unknown)))
    tol = float(userinp.get("tol", TOL_DEFAULT))
    if not 0 < tol < 1:
        raise ConfigError("observability tolerance must lie in (0, 1), got {}".format(tol))
    record_every = userinp.get("record_every", 1.0)
    if record_every is not None:
        record_every = float(record_every)
    return {"tol": tol, "record_every": record_every}


def get_batch(userinp):
    """Differencing and integration choices of the batch solvers."""
    userinp = dict(userinp or {})
    unknown = set(userinp) - {"stencil", "smooth", "integrator"}
    if unknown:
        raise ConfigError("unknown batch settings {}".format(sorted(unknown)))
    return {
        "stencil": userinp.get("stencil", "central"),
        "smooth": int(userinp.get("smooth", 0)),
        "integrator": userinp.get("integrator", "first-order"),
    }
