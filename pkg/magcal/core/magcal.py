"""Main environment of MAGCAL"""
import os
import logging
import numpy as np
from magcal.core.utils import get_logger
from magcal.core.errors import MagcalError, UnobservableError
from magcal.core.input import parse_input
from magcal.core.database import Database
from magcal.core.taskdict import MODES, COMPARISONS
from magcal.core.ekf import estimation_window
from magcal.core.oracles import fit_intrinsic
from magcal.core.observability import accumulate_stream, report as obsv_report, UNOBSERVABLE
from magcal.core.evaluate import recovery_errors
from magcal.core.report import RunReport, provenance, gyro_attitude, compare_attitude
from magcal.core.plot import plot_outputs
from magcal.sensors.dataset import ingest_csv, still_average_bias
from magcal.sensors.simulate import (
    gen_trajectory,
    simulate,
    disturbance_windows,
    inject_acceleration,
)

# verdicts that must not be unobservable for a mode to run
REQUIRED_PATHS = {
    "ekf": ("mag_gyro", "accel_aided"),
    "ekf-noaccel": ("mag_gyro",),
    "ekf-twopass": ("mag_gyro", "accel_aided"),
    "batch-thm21": ("mag_gyro",),
    "batch-thm22": ("accel_aided",),
}


def load_stream(setup, logger=None):
    """Sensor stream of a parsed setup.

    Returns:
        (SensorStream, SimTruth or None, reference attitudes or None)
    """
    logger = logger or get_logger(__name__)
    if setup["dataset"] is not None:
        return ingest_csv(setup["dataset"]), None, None
    sim = setup["simulation"]
    seed = setup["config"]["seed"]
    traj = gen_trajectory(sim["profile"], seed=seed, sample_rate=sim["sample_rate"])
    stream, attitudes = simulate(sim["truth"], traj, seed=seed)
    disturbance = sim["disturbance"]
    if disturbance is not None:
        windows = disturbance_windows(
            stream,
            disturbance["fraction"],
            length=disturbance.get("length", 2.0),
            seed=seed,
        )
        stream = inject_acceleration(
            stream,
            windows,
            disturbance["magnitude"],
            kind=disturbance.get("kind", "sinusoid"),
            frequency=disturbance.get("frequency", 1.0),
            seed=seed,
        )
        logger.info("Disturbed %d windows with %g m/s2", len(windows), disturbance["magnitude"])
    return stream, sim["truth"], attitudes


def still_window(setup, stream):
    """Annotated stationary window, or the leading stationary segment of
    a simulated stream; None if neither exists."""
    if setup["dataset"] is not None:
        return setup["dataset"].still
    stationary = np.flatnonzero(stream.labels != "stationary")
    nlead = stationary[0] if len(stationary) else len(stream)
    if nlead < 2:
        return None
    return (float(stream.t[0]), float(stream.t[nlead - 1]))


class MAGCAL:
    """The main executable object."""

    def __init__(self, infile="magcal_in.yaml", verbose=True, outdir=None):
        # setup logger
        # -------------------------------------------------------------------
        loglevel = logging.DEBUG if verbose else logging.INFO
        self.logger = get_logger(name="magcal", filename="magcal.log", verbosity=loglevel)
        # specific for printing/reporting from numpy objects
        np.set_printoptions(threshold=60, linewidth=79, suppress=True)

        # parse input file
        # -------------------------------------------------------------------
        if isinstance(infile, str):
            self.logger.info("Parsing input file {:s}".format(infile))
        self.setup = parse_input(infile)
        self.config = self.setup["config"]
        if outdir is not None:
            self.config["outdir"] = os.path.abspath(outdir)
        self.mode = self.config["mode"]
        self.database = Database()

    def observability(self, stream, still_bias=None):
        """Verdicts on the estimation window, before any estimation."""
        window = estimation_window(stream, self.setup["ekf"])
        try:
            intrinsic = fit_intrinsic(window.mag)
        except MagcalError as exc:
            self.logger.warning("No ellipsoid fit for the observability check: %s", exc)
            intrinsic = None
        eps = None if still_bias is None else np.radians(still_bias)
        g = accumulate_stream(
            window,
            intrinsic=intrinsic,
            eps=eps,
            record_every=self.setup["observability"]["record_every"],
        )
        return obsv_report(g, tol=self.setup["observability"]["tol"])

    def check_observable(self, obsv):
        blocked = [
            path for path in REQUIRED_PATHS[self.mode] if getattr(obsv, path) == UNOBSERVABLE
        ]
        if len(blocked) == len(REQUIRED_PATHS[self.mode]):
            msg = "mode {} is unobservable on this data ({})".format(self.mode, ", ".join(blocked))
            if self.config["abort_unobservable"]:
                self.logger.critical(msg)
                raise UnobservableError(msg)
            self.logger.warning(msg)

    def __call__(self):
        """Run the selected mode and write the report.

        Returns:
            RunReport
        """
        stream, truth, _ = load_stream(self.setup, self.logger)
        still_bias = None
        window = still_window(self.setup, stream)
        if window is not None:
            still_bias = still_average_bias(stream, window)
        obsv = self.observability(stream, still_bias)
        self.logger.info("\n%s", obsv.table())
        self.check_observable(obsv)

        env = {
            "stream": stream,
            "ekf": self.setup["ekf"],
            "batch": self.setup["batch"],
            "tol": self.setup["observability"]["tol"],
            "logger": self.logger,
        }
        self.logger.info("Running mode %s", self.mode)
        MODES[self.mode](env, self.database)
        for name in COMPARISONS[self.mode]:
            try:
                MODES[name](env, self.database)
            except MagcalError as exc:
                self.logger.warning("Comparison %s failed: %s", name, exc)

        selected = self.database.get(self.mode)
        result = selected["result"]
        comparisons = {
            name: self.database.get_item(name, "result")
            for name in COMPARISONS[self.mode]
            if self.database.get(name) is not None
        }
        recovery = {}
        if truth is not None:
            recovery[self.mode] = recovery_errors(result, truth)
            for name, res in comparisons.items():
                recovery[name] = recovery_errors(res, truth)
        discrepancy = None
        accel_norm = None
        if result.history is not None:
            win = selected["window"]
            t, attitudes = result.attitude_series
            discrepancy = (t, compare_attitude(t, attitudes, win.t, gyro_attitude(win.t, win.gyro, result.eps)))
            accel_norm = np.linalg.norm(win.accel, axis=1)
        runreport = RunReport(
            self.mode,
            result,
            obsv=obsv,
            still_bias=still_bias,
            comparisons=comparisons,
            recovery=recovery,
            provenance=provenance(self.setup["userinp"], self.config["seed"]),
            passes=selected.get("passes"),
            discrepancy=discrepancy,
            accel_norm=accel_norm,
        )
        self.logger.info("\n%s", runreport.table())
        outdir = self.config["outdir"]
        if outdir is not None:
            runreport.write(outdir)
            if self.config["plots"]:
                plot_outputs(outdir)
        self.logger.info("Done.")
        return runreport

    def __repr__(self):
        return "MAGCAL(mode={}, outdir={})".format(self.mode, self.config["outdir"])


def run_calibration(infile, outdir=None, verbose=False):
    """Parse `infile`, run its mode and write the report.

    Returns:
        RunReport
    """
    return MAGCAL(infile, verbose=verbose, outdir=outdir)()
