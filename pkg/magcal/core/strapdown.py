"""
Gyro-only attitude propagation.
"""
import numpy as np
from magcal.core.utils import get_logger
from magcal.core.errors import ConfigError
from magcal.core import so3

LOGGER = get_logger(__name__)

METHODS = ("first-order", "exponential")


def attitude_step(C, rate, dt, method="first-order"):
    """Advance C = C_b^i over one interval at constant body rate.

    'first-order': C (I + dt skew(rate)), re-orthonormalised;
    'exponential': C exp(dt skew(rate)).
    """
    if method == "first-order":
        return so3.orthonormalize(C @ (np.eye(3) + dt * so3.skew(rate)))
    if method == "exponential":
        return C @ so3.rotvec_to_dcm(dt * np.asarray(rate))
    raise ConfigError("unknown attitude integrator '{}'; use one of {}".format(method, METHODS))


def interval_rates(gyro, bias=None, averaging=True):
    """De-biased body rate for each interval [t_(k-1), t_k].

    With `averaging` the two end samples are averaged, otherwise the
    sample at the start of the interval is held.

    Returns:
        (N-1)x3 array
    """
    gyro = np.asarray(gyro, dtype=float)
    if bias is not None:
        gyro = gyro - np.asarray(bias, dtype=float)
    if averaging:
        return 0.5 * (gyro[1:] + gyro[:-1])
    return gyro[:-1].copy()


def integrate_attitude(t, gyro, bias=None, C0=None, method="first-order", averaging=True):
    """Relative attitude history from gyro samples.

    Args:
        t (N array): sample times [s]
        gyro (Nx3 array): body rate [rad/s]
        bias (3-vector): subtracted from the gyro [rad/s]
        C0 (3x3): initial attitude, identity by default
        method (str): 'first-order' or 'exponential'
        averaging (bool): use the mean of the interval end samples

    Returns:
        Nx3x3 array of C_b(t_k)^b(t_0) (times C0)
    """
    if method not in METHODS:
        raise ConfigError("unknown attitude integrator '{}'; use one of {}".format(method, METHODS))
    t = np.asarray(t, dtype=float)
    nsamples = len(t)
    attitudes = np.empty((nsamples, 3, 3))
    C = np.eye(3) if C0 is None else np.array(C0, dtype=float)
    if nsamples == 0:
        return attitudes
    attitudes[0] = C
    rates = interval_rates(gyro, bias, averaging)
    dts = np.diff(t)
    for kk in range(1, nsamples):
        C = attitude_step(C, rates[kk - 1], dts[kk - 1], method)
        attitudes[kk] = C
    return attitudes
