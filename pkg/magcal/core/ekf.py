"""
Error-state extended Kalman filter for joint magnetometer calibration,
cross-sensor alignment and gyro bias estimation.

The nominal state is (C, eps, S, h, m^i, g^i) with C = C_b^i the attitude
of the body in the inertial frame i = b(t0). The 24-dimensional error
state is ordered

    [psi(3), d_eps(3), vec(dS)(9, column-major), dh(3), dm^i(3), dg^i(3)]

with the attitude error defined by C_est = (I - psi x) C and all other
errors as estimate minus truth. Measurements:

    magnetometer   y_m = S C^T m^i + h
    accelerometer  y_a = -C^T g^i       (only when | |y_a| - g | < T_md)

The norm of m^i is left free in the filter; `finalize` resolves the
(alpha S, m^i/alpha) ambiguity by re-scaling to |m^i| = 1.
"""
import numpy as np
import scipy.linalg
from scipy.stats import chi2
from magcal.core.utils import get_logger, arr2s
from magcal.core.errors import (
    ConfigError,
    DegenerateError,
    MagcalError,
    NonFiniteError,
    SingularMatrixError,
)
from magcal.core import so3
from magcal.core.strapdown import attitude_step
from magcal.core.oracles import accel_valid, calibrate_mag_gyro, inclination, magnitude_discrepancy
from magcal.sensors.simulate import NoiseConfig

LOGGER = get_logger(__name__)

NSTATE = 24
PSI = slice(0, 3)
EPS = slice(3, 6)
SMAT = slice(6, 15)
HVEC = slice(15, 18)
MVEC = slice(18, 21)
GVEC = slice(21, 24)

DEFAULT_T_MD = 0.03  # m/s^2
DEFAULT_G_LOCAL = 9.8  # m/s^2
# initial standard deviations; bias in deg/s
DEFAULT_INIT_STD = {"eps_deg": 5.0, "S": 0.1, "h": 1.0, "m": 0.5, "g": 1.0}
MIN_M_NORM = 1e-6
# start values of S and h: batch mag/gyro solve, or S = I and h = 0
SEEDS = ("batch", "identity")
# Savitzky-Golay window of the batch start solve [samples]
SEED_SMOOTH = 25


class EkfConfig:
    """Filter settings.

    Args:
        noise (NoiseConfig): process and measurement noise, in radians;
            sigma_a defaults to 3 * T_md
        T_md (float): accelerometer gating threshold [m/s^2]
        init_std (dict): initial standard deviations, keys 'eps_deg'
            [deg/s], 'S', 'h', 'm', 'g' [m/s^2]
        g_local (float): local gravity magnitude for gating [m/s^2]
        start, stop: estimation window [s]; start may be 'auto'
        use_accel (bool): apply accelerometer updates
        S_init (3x3): initial magnetometer matrix; identity, or the batch
            start value, if None
        h_init (3-vector): initial hard iron; zero, or the batch start
            value, if None
        seed (str): 'batch' starts an unset S_init and h_init from the
            magnetometer/gyro batch solve of the filtered stream;
            'identity' starts from S = I and h = 0
        gyro_averaging (bool): propagate with the mean of consecutive
            gyro samples instead of holding the earlier one
    """

    def __init__(
        self,
        noise=None,
        T_md=DEFAULT_T_MD,
        init_std=None,
        g_local=DEFAULT_G_LOCAL,
        start=None,
        stop=None,
        use_accel=True,
        S_init=None,
        gyro_averaging=True,
        h_init=None,
        seed="batch",
    ):
        self.T_md = float(T_md)
        if not self.T_md > 0:
            raise ConfigError("T_md must be positive, got {}".format(T_md))
        self.noise = NoiseConfig(sigma_a=3 * self.T_md) if noise is None else noise
        self.init_std = dict(DEFAULT_INIT_STD)
        if init_std:
            unknown = set(init_std) - set(DEFAULT_INIT_STD)
            if unknown:
                raise ConfigError("unknown initial deviations {}".format(sorted(unknown)))
            self.init_std.update(init_std)
        for key, val in self.init_std.items():
            if not float(val) >= 0:
                raise ConfigError("initial deviation {} must be non-negative".format(key))
        self.g_local = float(g_local)
        if start is not None and start != "auto":
            start = float(start)
        self.start = start
        self.stop = None if stop is None else float(stop)
        self.use_accel = bool(use_accel)
        self.S_init = None if S_init is None else np.array(S_init, dtype=float)
        if self.S_init is not None and self.S_init.shape != (3, 3):
            raise ConfigError("S_init must be 3x3")
        self.h_init = None if h_init is None else np.array(h_init, dtype=float)
        if self.h_init is not None and self.h_init.shape != (3,):
            raise ConfigError("h_init must be a 3-vector")
        if seed not in SEEDS:
            raise ConfigError("unknown seed '{}'; use one of {}".format(seed, SEEDS))
        self.seed = seed
        self.gyro_averaging = bool(gyro_averaging)

    @classmethod
    def from_dict(cls, userinp):
        """Build from the 'ekf' section of a run configuration."""
        userinp = dict(userinp or {})
        known = {
            "noise",
            "T_md",
            "init_std",
            "g_local",
            "start",
            "stop",
            "use_accel",
            "S_init",
            "gyro_averaging",
            "h_init",
            "seed",
        }
        unknown = set(userinp) - known
        if unknown:
            raise ConfigError("unknown ekf settings {}".format(sorted(unknown)))
        T_md = float(userinp.get("T_md", DEFAULT_T_MD))
        noise_inp = dict(userinp.get("noise") or {})
        noise_inp.setdefault("sigma_a", 3 * T_md)
        return cls(
            noise=NoiseConfig.from_dict(noise_inp),
            T_md=T_md,
            init_std=userinp.get("init_std"),
            g_local=userinp.get("g_local", DEFAULT_G_LOCAL),
            start=userinp.get("start"),
            stop=userinp.get("stop"),
            use_accel=userinp.get("use_accel", True),
            S_init=userinp.get("S_init"),
            gyro_averaging=userinp.get("gyro_averaging", True),
            h_init=userinp.get("h_init"),
            seed=userinp.get("seed", "batch"),
        )

    def copy(self, **kwargs):
        """Copy with some settings replaced."""
        settings = {
            "noise": self.noise,
            "T_md": self.T_md,
            "init_std": self.init_std,
            "g_local": self.g_local,
            "start": self.start,
            "stop": self.stop,
            "use_accel": self.use_accel,
            "S_init": None if self.S_init is None else self.S_init.copy(),
            "gyro_averaging": self.gyro_averaging,
            "h_init": None if self.h_init is None else self.h_init.copy(),
            "seed": self.seed,
        }
        settings.update(kwargs)
        return EkfConfig(**settings)

    def to_dict(self):
        return {
            "noise": self.noise.to_dict(),
            "T_md": self.T_md,
            "init_std": dict(self.init_std),
            "g_local": self.g_local,
            "start": self.start,
            "stop": self.stop,
            "use_accel": self.use_accel,
            "S_init": self.S_init,
            "gyro_averaging": self.gyro_averaging,
            "h_init": self.h_init,
            "seed": self.seed,
        }

    def __repr__(self):
        return "EkfConfig(T_md={}, use_accel={}, {})".format(self.T_md, self.use_accel, self.noise)


class CalibState:
    """Nominal state and error covariance of the filter.

    Attributes:
        C (3x3): attitude C_b^i
        eps (3-vector): gyro bias [rad/s]
        S (3x3), h (3-vector): magnetometer parameters
        m_i (3-vector): magnetic vector in the i-frame
        g_i (3-vector): gravity in the i-frame [m/s^2]
        P (24x24): error covariance
        t (float): time [s]
    """

    def __init__(self, C, eps, S, h, m_i, g_i, P, t=0.0):
        self.C = np.array(C, dtype=float)
        self.eps = np.array(eps, dtype=float)
        self.S = np.array(S, dtype=float)
        self.h = np.array(h, dtype=float)
        self.m_i = np.array(m_i, dtype=float)
        self.g_i = np.array(g_i, dtype=float)
        self.P = np.array(P, dtype=float)
        self.t = float(t)

    def copy(self):
        return CalibState(self.C, self.eps, self.S, self.h, self.m_i, self.g_i, self.P, self.t)

    def predict_mag(self):
        return self.S @ self.C.T @ self.m_i + self.h

    def predict_accel(self):
        return -self.C.T @ self.g_i

    def __repr__(self):
        return "CalibState(t={:.2f}, eps={} deg/s, h={})".format(
            self.t, arr2s(np.degrees(self.eps)), arr2s(self.h)
        )


def _check_finite(*arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("non-finite filter input: {}".format(arr))


def initial_covariance(config):
    std = config.init_std
    diag = np.concatenate(
        [
            np.zeros(3),
            np.full(3, np.radians(std["eps_deg"])),
            np.full(9, std["S"]),
            np.full(3, std["h"]),
            np.full(3, std["m"]),
            np.full(3, std["g"]),
        ]
    )
    return np.diag(diag**2)


def init_state(config, first_mag, first_accel, t0=0.0):
    """Filter state at the first sample.

    The attitude starts at identity with zero covariance, S and h at
    S_init and h_init (I and 0 when unset), m^i at the first magnetometer
    reading mapped through S^-1 (y_m - h), which is the reading itself for
    the unset start, and g^i at minus the first accelerometer reading.

    Raises:
        DegenerateError: zero first magnetometer reading
        SingularMatrixError: singular S_init
    """
    first_mag = np.asarray(first_mag, dtype=float)
    first_accel = np.asarray(first_accel, dtype=float)
    _check_finite(first_mag, first_accel)
    if np.linalg.norm(first_mag) < 1e-12:
        raise DegenerateError("first magnetometer sample has zero norm")
    S = np.eye(3) if config.S_init is None else config.S_init
    h = np.zeros(3) if config.h_init is None else config.h_init
    try:
        m_i = np.linalg.solve(S, first_mag - h)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("initial magnetometer matrix is singular")
    state = CalibState(
        C=np.eye(3),
        eps=np.zeros(3),
        S=S,
        h=h,
        m_i=m_i,
        g_i=-first_accel,
        P=initial_covariance(config),
        t=t0,
    )
    LOGGER.debug("Initial state %s", state)
    return state


def transition(C, dt):
    """Phi = I + F dt; the only nonzero block of F is d(psi)/d(d_eps) = C."""
    Phi = np.eye(NSTATE)
    Phi[PSI, EPS] = C * dt
    return Phi


def process_noise(C, noise, dt):
    """Q_d = G diag(sg^2, se^2, smi^2, sgi^2) G^T dt."""
    G = np.zeros((NSTATE, 12))
    G[PSI, 0:3] = -C
    G[EPS, 3:6] = -np.eye(3)
    G[MVEC, 6:9] = np.eye(3)
    G[GVEC, 9:12] = np.eye(3)
    q = np.repeat(
        [noise.sigma_g**2, noise.sigma_eps**2, noise.sigma_mi**2, noise.sigma_gi**2], 3
    )
    return (G * q) @ G.T * dt


def propagate(state, gyro, dt, noise):
    """Advance the state by one interval; updated in place and returned.

    Args:
        state (CalibState)
        gyro (3-vector): measured rate over the interval [rad/s]
        dt (float): interval [s]
        noise (NoiseConfig)
    """
    gyro = np.asarray(gyro, dtype=float)
    _check_finite(gyro, [dt])
    if dt <= 0:
        raise ValueError("propagation step must be positive, got {}".format(dt))
    Phi = transition(state.C, dt)
    Qd = process_noise(state.C, noise, dt)
    state.C = attitude_step(state.C, gyro - state.eps, dt)
    P = Phi @ state.P @ Phi.T + Qd
    state.P = 0.5 * (P + P.T)
    state.t += dt
    return state


def mag_jacobian(state):
    """H_m = [-S C^T (m x), 0, (C^T m)^T kron I3, I3, S C^T, 0]."""
    CT = state.C.T
    H = np.zeros((3, NSTATE))
    H[:, PSI] = -state.S @ CT @ so3.skew(state.m_i)
    H[:, SMAT] = np.kron((CT @ state.m_i)[None, :], np.eye(3))
    H[:, HVEC] = np.eye(3)
    H[:, MVEC] = state.S @ CT
    return H


def accel_jacobian(state):
    """H_a = [C^T (g x), 0, 0, 0, 0, -C^T]."""
    CT = state.C.T
    H = np.zeros((3, NSTATE))
    H[:, PSI] = CT @ so3.skew(state.g_i)
    H[:, GVEC] = -CT
    return H


def nis(innovation, S_inn):
    """Normalized innovation squared nu^T S_inn^-1 nu."""
    innovation = np.asarray(innovation, dtype=float)
    return float(innovation @ np.linalg.solve(S_inn, innovation))


def anis_band(nupdates, dof=3, prob=0.99):
    """Two-sided `prob` interval of the mean NIS over `nupdates` updates."""
    if nupdates < 1:
        return (np.nan, np.nan)
    alpha = 0.5 * (1 - prob)
    ndof = dof * nupdates
    return (chi2.ppf(alpha, ndof) / nupdates, chi2.ppf(1 - alpha, ndof) / nupdates)


def correct(state, dx):
    """Fold an error-state correction into the nominal state."""
    state.C = so3.orthonormalize((np.eye(3) - so3.skew(dx[PSI])) @ state.C)
    state.eps = state.eps + dx[EPS]
    state.S = state.S + so3.unvec(dx[SMAT])
    state.h = state.h + dx[HVEC]
    state.m_i = state.m_i + dx[MVEC]
    state.g_i = state.g_i + dx[GVEC]
    return state


def _update(state, innovation, H, variance):
    """Joseph-form update; returns the innovation covariance and NIS."""
    PHt = state.P @ H.T
    S_inn = H @ PHt + variance * np.eye(3)
    try:
        factor = scipy.linalg.cho_factor(S_inn)
    except np.linalg.LinAlgError:
        LOGGER.critical("Innovation covariance not positive definite:\n%s", S_inn)
        raise SingularMatrixError("innovation covariance is not positive definite")
    K = scipy.linalg.cho_solve(factor, PHt.T).T
    correct(state, K @ innovation)
    IKH = np.eye(NSTATE) - K @ H
    P = IKH @ state.P @ IKH.T + variance * K @ K.T
    state.P = 0.5 * (P + P.T)
    return S_inn, float(innovation @ scipy.linalg.cho_solve(factor, innovation))


def update_mag(state, y_m, sigma_m):
    """Magnetometer update; state corrected in place.

    Returns:
        (state, innovation, S_inn)
    """
    y_m = np.asarray(y_m, dtype=float)
    _check_finite(y_m)
    innovation = y_m - state.predict_mag()
    S_inn, _ = _update(state, innovation, mag_jacobian(state), sigma_m**2)
    return state, innovation, S_inn


def update_accel(state, y_a, config):
    """Gated accelerometer update; state corrected in place.

    Returns:
        (state, accepted)
    """
    y_a = np.asarray(y_a, dtype=float)
    _check_finite(y_a)
    if not accel_valid(y_a, config.g_local, config.T_md):
        return state, False
    innovation = y_a - state.predict_accel()
    _update(state, innovation, accel_jacobian(state), config.noise.sigma_a**2)
    return state, True


class FilterHistory:
    """Per-sample record of a filter run.

    Arrays are built by `as_arrays`; lists grow during the run.
    """

    def __init__(self):
        self.t = []
        self.innovation = []
        self.sigma = []
        self.nis = []
        self.accepted = []
        self.attitude = []
        self.eps = []
        self.S = []
        self.h = []
        self.m_i = []
        self.g_i = []

    def record(self, state, innovation=None, S_inn=None, nis_value=None, accepted=None):
        self.t.append(state.t)
        self.innovation.append(np.full(3, np.nan) if innovation is None else innovation)
        self.sigma.append(np.full(3, np.nan) if S_inn is None else np.sqrt(np.diag(S_inn)))
        self.nis.append(np.nan if nis_value is None else nis_value)
        self.accepted.append(bool(accepted))
        self.attitude.append(state.C.copy())
        self.eps.append(state.eps.copy())
        self.S.append(state.S.copy())
        self.h.append(state.h.copy())
        self.m_i.append(state.m_i.copy())
        self.g_i.append(state.g_i.copy())

    def __len__(self):
        return len(self.t)

    def as_arrays(self):
        return {
            "t": np.asarray(self.t),
            "innovation": np.asarray(self.innovation).reshape(-1, 3),
            "sigma": np.asarray(self.sigma).reshape(-1, 3),
            "nis": np.asarray(self.nis),
            "accepted": np.asarray(self.accepted, dtype=bool),
            "attitude": np.asarray(self.attitude).reshape(-1, 3, 3),
            "eps": np.asarray(self.eps).reshape(-1, 3),
            "S": np.asarray(self.S).reshape(-1, 3, 3),
            "h": np.asarray(self.h).reshape(-1, 3),
            "m_i": np.asarray(self.m_i).reshape(-1, 3),
            "g_i": np.asarray(self.g_i).reshape(-1, 3),
        }


class CalibResult:
    """Decomposed calibration outputs.

    Attributes:
        S_rs (3x3): |m^i| S
        m_rs (3-vector): m^i / |m^i|
        R (3x3): intrinsic upper-triangular matrix, S_rs^-1 = C_m_b R
        h (3-vector): magnetometer bias
        C_m_b, C_b_m (3x3): cross-sensor misalignment
        euler_deg (3-vector): roll, pitch, yaw of C_b_m [deg]
        eps_deg (3-vector): gyro bias [deg/s]
        g_i (3-vector or None): gravity in the i-frame [m/s^2]
        inclination (float or None): magnetic dip [deg]
        anis_mag (float or None): mean magnetometer NIS
        anis_band (2-tuple or None): 99% chi-square band of anis_mag
        accel_accept_ratio (float or None): accepted accelerometer fraction
        magnitude_mean, magnitude_std (float or None): statistics of
            |S_rs^-1 (y_m - h)| - 1 over the processed samples
        history (dict of arrays or None): per-sample filter record
        source (str): 'ekf', 'batch-thm21' or 'batch-thm22'
        npass (int): pass number of a two-pass run
    """

    def __init__(
        self,
        S_rs,
        m_rs,
        h,
        eps,
        g_i=None,
        anis_mag=None,
        anis_band=None,
        accel_accept_ratio=None,
        magnitude=None,
        history=None,
        source="ekf",
        npass=1,
    ):
        self.S_rs = np.asarray(S_rs, dtype=float)
        self.m_rs = None if m_rs is None else np.asarray(m_rs, dtype=float)
        self.h = np.asarray(h, dtype=float)
        self.eps = np.asarray(eps, dtype=float)
        self.g_i = None if g_i is None else np.asarray(g_i, dtype=float)
        self.C_m_b, self.R = so3.qr_pos_diag(np.linalg.inv(self.S_rs))
        self.C_b_m = self.C_m_b.T
        self.euler_deg = np.asarray(so3.dcm_to_euler(self.C_b_m))
        self.eps_deg = np.degrees(self.eps)
        if self.m_rs is not None and self.g_i is not None:
            self.inclination = inclination(self.m_rs, self.g_i)
        else:
            self.inclination = None
        self.anis_mag = anis_mag
        self.anis_band = anis_band
        self.accel_accept_ratio = accel_accept_ratio
        if magnitude is not None and len(magnitude):
            self.magnitude_mean = float(np.mean(magnitude))
            self.magnitude_std = float(np.std(magnitude))
        else:
            self.magnitude_mean = self.magnitude_std = None
        self.history = history
        self.source = source
        self.npass = npass

    @classmethod
    def from_batch(cls, S, h, eps, m_i=None, g_i=None, y_m=None, source="batch"):
        """Result of a batch solve, re-scaled like the filter output."""
        S = np.asarray(S, dtype=float)
        if m_i is not None:
            mnorm = np.linalg.norm(m_i)
            S, m_rs = mnorm * S, np.asarray(m_i) / mnorm
        else:
            m_rs = None
        magnitude = None if y_m is None else magnitude_discrepancy(y_m, S, h)
        return cls(S, m_rs, h, eps, g_i=g_i, magnitude=magnitude, source=source)

    @property
    def attitude_series(self):
        """(t, Nx3x3 C_b^i) of the run, or None."""
        if self.history is None:
            return None
        return self.history["t"], self.history["attitude"]

    def to_dict(self):
        return {
            "source": self.source,
            "pass": self.npass,
            "S_rs": self.S_rs,
            "m_rs": self.m_rs,
            "R": self.R,
            "h": self.h,
            "C_b_m": self.C_b_m,
            "C_b_m_euler_deg": self.euler_deg,
            "eps_deg": self.eps_deg,
            "g_i": self.g_i,
            "inclination_deg": self.inclination,
            "anis_mag": self.anis_mag,
            "anis_band": self.anis_band,
            "accel_accept_ratio": self.accel_accept_ratio,
            "magnitude_mean": self.magnitude_mean,
            "magnitude_std": self.magnitude_std,
        }

    def __repr__(self):
        return "CalibResult({}, euler={} deg, eps={} deg/s, anis={})".format(
            self.source, arr2s(self.euler_deg), arr2s(self.eps_deg), self.anis_mag
        )


def finalize(state, nis_values=(), accepted=None, y_m=None, history=None, npass=1):
    """Re-scale and decompose the final state.

    Args:
        state (CalibState): state after the last update
        nis_values (sequence): magnetometer NIS of every update
        accepted (sequence of bool): accelerometer gating decisions
        y_m (Nx3): processed magnetometer samples, for the calibrated
            magnitude statistics
        history (dict of arrays): attached to the result

    Raises:
        DegenerateError: |m^i| below 1e-6
    """
    mnorm = np.linalg.norm(state.m_i)
    if mnorm < MIN_M_NORM:
        LOGGER.critical("Magnetic vector estimate collapsed: %s", state.m_i)
        raise DegenerateError("estimated magnetic vector has norm {:.3e}".format(mnorm))
    S_rs = mnorm * state.S
    m_rs = state.m_i / mnorm
    nis_values = np.asarray(nis_values, dtype=float)
    nis_values = nis_values[np.isfinite(nis_values)]
    anis = float(np.mean(nis_values)) if len(nis_values) else None
    ratio = None
    if accepted is not None and len(accepted):
        ratio = float(np.mean(accepted))
    magnitude = None if y_m is None else magnitude_discrepancy(y_m, S_rs, state.h)
    result = CalibResult(
        S_rs,
        m_rs,
        state.h,
        state.eps,
        g_i=state.g_i,
        anis_mag=anis,
        anis_band=anis_band(len(nis_values)),
        accel_accept_ratio=ratio,
        magnitude=magnitude,
        history=history,
        npass=npass,
    )
    LOGGER.info("Final estimate: %s", result)
    return result


def detect_motion_start(stream, sigma_g, window=1.0, factor=3 * np.sqrt(3)):
    """First time the 1 s mean gyro deviation exceeds `factor` noise levels.

    The deviation is taken from the mean of the first window, so a
    constant bias does not count as motion.

    Returns:
        float: start of the detecting window [s], or the first sample time
        if no motion is found
    """
    nwin = max(int(round(window / stream.dt)), 1)
    if len(stream) <= nwin:
        return float(stream.t[0])
    ref = stream.gyro[:nwin].mean(axis=0)
    dev = np.linalg.norm(stream.gyro - ref, axis=1)
    threshold = max(factor * sigma_g / np.sqrt(stream.dt), 1e-9)
    avg = np.convolve(dev, np.ones(nwin) / nwin, mode="valid")
    moving = np.flatnonzero(avg > threshold)
    if not len(moving):
        LOGGER.warning("No motion detected; estimation starts at the first sample")
        return float(stream.t[0])
    start = float(stream.t[moving[0]])
    LOGGER.info("Motion detected from %.2f s", start)
    return start


class MagCalFilter:
    """One filter instance processing one stream.

    Attributes:
        config (EkfConfig)
        state (CalibState): None before the first sample
        history (FilterHistory)
    """

    def __init__(self, config=None, record_history=True):
        self.config = EkfConfig() if config is None else config
        self.state = None
        self.history = FilterHistory() if record_history else None
        self.nis_values = []
        self.accepted = []
        self._last = None

    def process(self, sample):
        """Propagate to the sample time and apply its updates.

        Args:
            sample (SensorSample)

        Returns:
            CalibState
        """
        cfg = self.config
        if self.state is None:
            self.state = init_state(cfg, sample.mag, sample.accel, sample.t)
            self._last = sample
            if self.history is not None:
                self.history.record(self.state)
            return self.state
        dt = sample.t - self._last.t
        if cfg.gyro_averaging:
            rate = 0.5 * (np.asarray(self._last.gyro) + np.asarray(sample.gyro))
        else:
            rate = np.asarray(self._last.gyro)
        propagate(self.state, rate, dt, cfg.noise)
        self.state.t = float(sample.t)
        _, innovation, S_inn = update_mag(self.state, sample.mag, cfg.noise.sigma_m)
        nis_value = nis(innovation, S_inn)
        self.nis_values.append(nis_value)
        accepted = None
        if cfg.use_accel:
            _, accepted = update_accel(self.state, sample.accel, cfg)
            self.accepted.append(accepted)
        if self.history is not None:
            self.history.record(self.state, innovation, S_inn, nis_value, accepted)
        self._last = sample
        return self.state

    def run(self, stream, npass=1):
        """Process every sample of `stream` and return the CalibResult."""
        if len(stream) < 2:
            raise DegenerateError("need at least two samples to run the filter")
        cfg = self.config
        if self.state is None and cfg.seed == "batch" and cfg.S_init is None and cfg.h_init is None:
            self.config = batch_seed(stream, self.config)
        LOGGER.info("Filtering %s (accelerometer %s)", stream, "on" if self.config.use_accel else "off")
        for sample in stream:
            self.process(sample)
        return self.result(y_m=stream.mag, npass=npass)

    def result(self, y_m=None, npass=1):
        if self.state is None:
            raise DegenerateError("no samples processed")
        history = None if self.history is None else self.history.as_arrays()
        return finalize(
            self.state,
            self.nis_values,
            self.accepted if self.config.use_accel else None,
            y_m=y_m,
            history=history,
            npass=npass,
        )


def batch_seed(stream, config):
    """Start values of S and h from the magnetometer/gyro batch solve.

    Returns:
        EkfConfig: a copy of `config` with S_init and h_init set, or
        `config` itself when the batch solve fails on `stream`
    """
    try:
        intrinsic, alignment = calibrate_mag_gyro(stream, smooth=SEED_SMOOTH)
        S = np.linalg.solve(intrinsic.R, alignment.C_b_m)
    except (MagcalError, np.linalg.LinAlgError, ValueError) as exc:
        LOGGER.warning("No batch start values (%s); the filter starts from S = I, h = 0", exc)
        return config
    LOGGER.info("Filter starts from S=%s, h=%s", arr2s(S), arr2s(intrinsic.h))
    return config.copy(S_init=S, h_init=intrinsic.h)


def estimation_window(stream, config):
    """Sub-stream between the configured start and stop times."""
    start = config.start
    if start == "auto":
        start = detect_motion_start(stream, config.noise.sigma_g)
    window = stream.window(start, config.stop)
    if len(window) < 2:
        raise DegenerateError(
            "estimation window {}-{} s holds {} samples".format(start, config.stop, len(window))
        )
    LOGGER.info("Estimation window %.2f-%.2f s", window.t[0], window.t[-1])
    return window


def run(stream, config=None, npass=1):
    """Run the filter over the estimation window of `stream`."""
    config = EkfConfig() if config is None else config
    return MagCalFilter(config).run(estimation_window(stream, config), npass=npass)


def two_pass(stream, config=None):
    """Run twice; the second pass starts from the first pass's S_rs and h.

    Every other start value of the second pass is the configured one.

    Returns:
        (CalibResult, CalibResult)
    """
    config = EkfConfig() if config is None else config
    first = run(stream, config, npass=1)
    second = run(stream, config.copy(S_init=first.S_rs, h_init=first.h), npass=2)
    LOGGER.info("ANIS pass 1: %.3f, pass 2: %.3f", first.anis_mag, second.anis_mag)
    return first, second
