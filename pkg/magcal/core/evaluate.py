"""Error metrics of calibration results against truth or each other."""
import numpy as np
from magcal.core.utils import get_logger
from magcal.core import so3

LOGGER = get_logger(__name__)

# recovery tolerances of a well-excited run
TOLERANCES = {
    "eps_deg": 0.03,  # deg/s
    "C_b_m_deg": 0.2,  # deg
    "R": 2e-3,
    "h": 5e-3,
}


def abserr(ref, model):
    """Return the per-element difference model and reference."""
    aref = np.asarray(ref, dtype=float)
    amod = np.asarray(model, dtype=float)
    assert aref.shape == amod.shape, (aref.shape, amod.shape)
    return amod - aref


def relerr(ref, model):
    """Return the per-element relative difference between model and reference.

    Where `ref` vanishes the model is taken as denominator (yielding 1);
    where both vanish the error is 0.
    """
    aref = np.asarray(ref, dtype=float)
    amod = np.asarray(model, dtype=float)
    err = abserr(aref, amod)
    denom = aref.copy()
    denom[aref == 0.0] = amod[aref == 0.0]
    rel_err = np.zeros(err.shape)
    rel_err[err != 0] = err[err != 0] / denom[err != 0]
    return rel_err


def rms(values, axis=None):
    """Root mean square, ignoring NaN."""
    return np.sqrt(np.nanmean(np.square(values), axis=axis))


def recovery_errors(result, truth):
    """Largest absolute error per quantity, in report units.

    Args:
        result (CalibResult): estimate
        truth (SimTruth): simulation truth

    Returns:
        dict: 'eps_deg' [deg/s], 'C_b_m_deg' (rotation angle between
            estimated and true misalignment) [deg], 'R', 'h', and
            'inclination_deg' when the result carries one
    """
    C_m_b, R = truth.intrinsic()
    errors = {
        "eps_deg": float(np.abs(abserr(np.degrees(truth.eps), result.eps_deg)).max()),
        "C_b_m_deg": float(np.degrees(so3.geodesic_angle(result.C_b_m, C_m_b.T))),
        "R": float(np.abs(abserr(R, result.R)).max()),
        "h": float(np.abs(abserr(truth.h, result.h)).max()),
    }
    if result.inclination is not None:
        errors["inclination_deg"] = float(abs(result.inclination - truth.inclination))
    return errors


def within_tolerance(errors, tolerances=None):
    """Per-quantity pass flags for the quantities that have a tolerance."""
    tolerances = TOLERANCES if tolerances is None else tolerances
    return {key: bool(errors[key] < tol) for key, tol in tolerances.items() if key in errors}


def bias_difference(result, reference_deg):
    """Estimated minus reference gyro bias [deg/s]."""
    return abserr(reference_deg, result.eps_deg)
