"""Dictionary of calibration modes and their underlying functions.

Every function has the signature f(env, database): `env` carries the
stream and settings of the run, and the function stores what it produces
in `database` under its mode name, with the CalibResult under 'result'.
"""
import numpy as np
from magcal.core.utils import get_logger
from magcal.core.ekf import CalibResult, estimation_window, run, two_pass
from magcal.core.oracles import calibrate_mag_gyro, calibrate_accel_aided

LOGGER = get_logger(__name__)

DEFAULT_BATCH = {"stencil": "central", "smooth": 0, "integrator": "first-order"}


def run_ekf(env, database, use_accel=None, name="ekf"):
    """Single filter pass over the estimation window.

    Args:
        env (dict): 'stream' (SensorStream) and 'ekf' (EkfConfig)
        database (Database): updated under `name`
        use_accel (bool): overrides the configured setting if given
    """
    logger = env.get("logger", LOGGER)
    config = env["ekf"]
    if use_accel is not None:
        config = config.copy(use_accel=use_accel)
    window = estimation_window(env["stream"], config)
    result = run(env["stream"], config)
    result.source = name
    logger.info("%s: %s", name, result)
    database.update(name, {"result": result, "window": window, "config": config})


def run_ekf_noaccel(env, database):
    """Filter without accelerometer updates."""
    run_ekf(env, database, use_accel=False, name="ekf-noaccel")


def run_ekf_twopass(env, database):
    """Second pass seeded with the first-pass magnetometer matrix and hard iron."""
    logger = env.get("logger", LOGGER)
    config = env["ekf"]
    window = estimation_window(env["stream"], config)
    first, second = two_pass(env["stream"], config)
    first.source = second.source = "ekf-twopass"
    if second.anis_mag > first.anis_mag:
        logger.warning(
            "Second pass did not improve ANIS: %.3f -> %.3f", first.anis_mag, second.anis_mag
        )
    database.update(
        "ekf-twopass",
        {"result": second, "passes": [first], "window": window, "config": config},
    )


def _batch_options(env):
    opts = dict(DEFAULT_BATCH)
    opts.update(env.get("batch") or {})
    return opts


def run_batch_mag_gyro(env, database):
    """Ellipsoid fit and alignment solve from magnetometer and gyro."""
    logger = env.get("logger", LOGGER)
    opts = _batch_options(env)
    window = estimation_window(env["stream"], env["ekf"])
    intrinsic, alignment = calibrate_mag_gyro(
        window, stencil=opts["stencil"], smooth=opts["smooth"], tol=env.get("tol", 1e-4)
    )
    S = np.linalg.solve(intrinsic.R, alignment.C_b_m)
    result = CalibResult.from_batch(
        S, intrinsic.h, alignment.eps, y_m=window.mag, source="batch-thm21"
    )
    logger.info("batch-thm21: %s", result)
    database.update(
        "batch-thm21",
        {"result": result, "window": window, "intrinsic": intrinsic, "alignment": alignment},
    )


def run_batch_accel_aided(env, database):
    """Accelerometer-aided solve of all parameters.

    Accelerometer samples are gated with the filter's T_md and g_local.
    """
    logger = env.get("logger", LOGGER)
    opts = _batch_options(env)
    config = env["ekf"]
    window = estimation_window(env["stream"], config)
    full = calibrate_accel_aided(
        window,
        stencil=opts["stencil"],
        smooth=opts["smooth"],
        integrator=opts["integrator"],
        tol=env.get("tol", 1e-4),
        T_md=config.T_md,
        g_local=config.g_local,
    )
    result = CalibResult.from_batch(
        full.S, full.h, full.eps, m_i=full.m_i, g_i=full.g_i, y_m=window.mag, source="batch-thm22"
    )
    logger.info("batch-thm22: %s", result)
    database.update("batch-thm22", {"result": result, "window": window, "full": full})


MODES = {
    "ekf": run_ekf,
    "ekf-noaccel": run_ekf_noaccel,
    "ekf-twopass": run_ekf_twopass,
    "batch-thm21": run_batch_mag_gyro,
    "batch-thm22": run_batch_accel_aided,
}

# paths run next to the selected mode for the comparison table
COMPARISONS = {
    "ekf": ["batch-thm21", "batch-thm22"],
    "ekf-noaccel": ["batch-thm21"],
    "ekf-twopass": ["batch-thm21"],
    "batch-thm21": ["batch-thm22"],
    "batch-thm22": ["batch-thm21"],
}
