"""
Synthetic gyro, accelerometer and magnetometer streams with known truth.

The body attitude is propagated by 4th-order Runge-Kutta on the DCM with
re-orthonormalisation at each sample. Measurements follow

    gyro  = omega + eps + n_g
    mag   = S C^T m^i + h + n_m
    accel = -C^T g^i + n_a (+ injected disturbance)

with C = C_b^i the attitude relative to the initial body frame.
"""
import numpy as np
from magcal.core.utils import get_logger, arr2s
from magcal.core.errors import ConfigError, ProfileError, SingularMatrixError
from magcal.core import so3
from magcal.sensors.dataset import SensorStream

LOGGER = get_logger(__name__)

EARTH_RATE = 7.3e-5  # rad/s
DEFAULT_INCLINATION = 43.14  # deg
DEFAULT_LATITUDE = 28.247  # deg
DEFAULT_GRAVITY = 9.8  # m/s^2
DEFAULT_SAMPLE_RATE = 100.0  # Hz

# config keys holding degree-based noise densities
_DEG_KEYS = ("sigma_g", "sigma_eps")
NOISE_KEYS = ("sigma_g", "sigma_eps", "sigma_m", "sigma_a", "sigma_mi", "sigma_gi")


class NoiseConfig:
    """Noise levels; internally in radians.

    Attributes:
        sigma_g (float): gyro angle random walk [rad/sqrt(s)]
        sigma_eps (float): gyro bias random walk [rad/sqrt(s^3)]
        sigma_m (float): magnetometer white noise [unitless]
        sigma_a (float): accelerometer white noise [m/s^2]
        sigma_mi (float): magnetic vector random walk [1/sqrt(s)]
        sigma_gi (float): gravity vector random walk [m/sqrt(s^5)]
    """

    def __init__(
        self,
        sigma_g=np.radians(0.01),
        sigma_eps=np.radians(1e-4),
        sigma_m=0.005,
        sigma_a=0.09,
        sigma_mi=EARTH_RATE,
        sigma_gi=DEFAULT_GRAVITY * EARTH_RATE,
    ):
        self.sigma_g = float(sigma_g)
        self.sigma_eps = float(sigma_eps)
        self.sigma_m = float(sigma_m)
        self.sigma_a = float(sigma_a)
        self.sigma_mi = float(sigma_mi)
        self.sigma_gi = float(sigma_gi)
        for key in NOISE_KEYS:
            val = getattr(self, key)
            if not np.isfinite(val) or val < 0:
                raise ConfigError("{} must be finite and non-negative, got {}".format(key, val))

    @classmethod
    def sensor_default(cls):
        """Noise of a simulated low-cost unit: constant bias and vectors."""
        return cls(sigma_eps=0.0, sigma_a=0.005, sigma_mi=0.0, sigma_gi=0.0)

    @classmethod
    def zero(cls):
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_dict(cls, userinp, base=None):
        """Build from configuration values given in deg/sqrt(s), deg/sqrt(s^3)
        for the gyro terms and as-is for the rest; missing keys are taken
        from `base` (default: filter defaults)."""
        base = cls() if base is None else base
        userinp = dict(userinp or {})
        unknown = set(userinp) - set(NOISE_KEYS)
        if unknown:
            raise ConfigError("unknown noise settings {}".format(sorted(unknown)))
        kwargs = {}
        for key in NOISE_KEYS:
            if key in userinp:
                val = float(userinp[key])
                kwargs[key] = np.radians(val) if key in _DEG_KEYS else val
            else:
                kwargs[key] = getattr(base, key)
        return cls(**kwargs)

    def to_dict(self):
        """Inverse of from_dict: gyro terms in degrees."""
        return {
            key: float(np.degrees(getattr(self, key)))
            if key in _DEG_KEYS
            else getattr(self, key)
            for key in NOISE_KEYS
        }

    def __repr__(self):
        return "NoiseConfig({})".format(
            ", ".join("{}={:.4g}".format(k, v) for k, v in self.to_dict().items())
        )


def magnetic_vector(inclination=DEFAULT_INCLINATION, declination=0.0):
    """Unit magnetic vector in a north-east-down frame [deg inputs]."""
    inc, dec = np.radians(inclination), np.radians(declination)
    return np.array([np.cos(inc) * np.cos(dec), np.cos(inc) * np.sin(dec), np.sin(inc)])


class SimTruth:
    """Ground truth of a simulated unit.

    Args:
        S (3x3): magnetometer matrix, invertible
        h (3-vector): magnetometer bias [raw]
        eps (3-vector): gyro bias [rad/s]
        m_e (3-vector): magnetic vector in the Earth frame; normalised.
            Default from `inclination`.
        g_e (3-vector): gravity in the Earth frame [m/s^2], default (0,0,9.8)
        C0 (3x3): initial attitude C_b(0)^e
        noise (NoiseConfig): sensor noise, default NoiseConfig.sensor_default()
        sample_rate (float): [Hz]
        earth_rate (bool): include Earth rotation in gyro and vectors
        latitude (float): [deg], used with `earth_rate`
    """

    def __init__(
        self,
        S=None,
        h=None,
        eps=None,
        m_e=None,
        g_e=None,
        C0=None,
        noise=None,
        sample_rate=DEFAULT_SAMPLE_RATE,
        inclination=DEFAULT_INCLINATION,
        earth_rate=False,
        latitude=DEFAULT_LATITUDE,
    ):
        self.S = np.eye(3) if S is None else np.array(S, dtype=float)
        self.h = np.zeros(3) if h is None else np.array(h, dtype=float)
        self.eps = np.zeros(3) if eps is None else np.array(eps, dtype=float)
        if m_e is None:
            m_e = magnetic_vector(inclination)
        m_e = np.array(m_e, dtype=float)
        norm = np.linalg.norm(m_e)
        if norm == 0:
            raise ConfigError("magnetic vector must be nonzero")
        self.m_e = m_e / norm
        self.g_e = (
            np.array([0.0, 0.0, DEFAULT_GRAVITY]) if g_e is None else np.array(g_e, dtype=float)
        )
        self.C0 = np.eye(3) if C0 is None else so3.nearest_rotation(C0)
        self.noise = NoiseConfig.sensor_default() if noise is None else noise
        self.sample_rate = float(sample_rate)
        self.earth_rate = bool(earth_rate)
        self.latitude = float(latitude)
        if self.S.shape != (3, 3) or np.linalg.cond(self.S) > 1e12:
            raise SingularMatrixError("true magnetometer matrix must be invertible")
        if self.sample_rate <= 0:
            raise ConfigError("sample rate must be positive")

    @property
    def m_i(self):
        """Magnetic vector in the initial body frame."""
        return self.C0.T @ self.m_e

    @property
    def g_i(self):
        """Gravity vector in the initial body frame."""
        return self.C0.T @ self.g_e

    @property
    def omega_i(self):
        """Earth rate in the initial body frame [rad/s]."""
        lat = np.radians(self.latitude)
        omega_e = EARTH_RATE * np.array([np.cos(lat), 0.0, -np.sin(lat)])
        return self.C0.T @ omega_e

    @property
    def inclination(self):
        """Dip angle [deg] of m against gravity."""
        cosang = self.m_e @ self.g_e / np.linalg.norm(self.g_e)
        return 90.0 - np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))

    def intrinsic(self):
        """(C_m^b, R) from S^-1 = C_m^b R."""
        return so3.qr_pos_diag(np.linalg.inv(self.S))

    def C_b_m(self):
        """Cross-sensor misalignment C_b^m = (C_m^b)^T."""
        return self.intrinsic()[0].T

    @classmethod
    def from_dict(cls, userinp, noise=None):
        """Build from configuration: angles in degrees, rates in deg/s.

        Keys: S, h, eps_deg (gyro bias, deg/s), misalignment_deg
        (roll, pitch, yaw of C_b^m; then S = R^-1 C_b^m with R from 'R'),
        m_e, g, inclination, C0_euler_deg, sample_rate, earth_rate, latitude.
        """
        userinp = dict(userinp or {})
        known = {
            "S",
            "R",
            "h",
            "eps_deg",
            "misalignment_deg",
            "m_e",
            "g",
            "g_e",
            "inclination",
            "C0_euler_deg",
            "sample_rate",
            "earth_rate",
            "latitude",
        }
        unknown = set(userinp) - known
        if unknown:
            raise ConfigError("unknown truth settings {}".format(sorted(unknown)))
        S = userinp.get("S")
        if S is None and ("R" in userinp or "misalignment_deg" in userinp):
            R = np.array(userinp.get("R", np.eye(3)), dtype=float)
            C_b_m = so3.euler_to_dcm(userinp.get("misalignment_deg", (0, 0, 0)))
            S = np.linalg.inv(R) @ C_b_m
        eps = userinp.get("eps_deg")
        if eps is not None:
            eps = np.radians(eps)
        g_e = userinp.get("g_e")
        if g_e is None and "g" in userinp:
            g_e = (0.0, 0.0, float(userinp["g"]))
        C0 = userinp.get("C0_euler_deg")
        if C0 is not None:
            C0 = so3.euler_to_dcm(C0)
        return cls(
            S=S,
            h=userinp.get("h"),
            eps=eps,
            m_e=userinp.get("m_e"),
            g_e=g_e,
            C0=C0,
            noise=noise,
            sample_rate=userinp.get("sample_rate", DEFAULT_SAMPLE_RATE),
            inclination=userinp.get("inclination", DEFAULT_INCLINATION),
            earth_rate=userinp.get("earth_rate", False),
            latitude=userinp.get("latitude", DEFAULT_LATITUDE),
        )

    def to_dict(self):
        C_m_b, R = self.intrinsic()
        return {
            "S": self.S,
            "R": R,
            "h": self.h,
            "eps_deg": np.degrees(self.eps),
            "misalignment_deg": so3.dcm_to_euler(C_m_b.T),
            "m_e": self.m_e,
            "m_i": self.m_i,
            "g_i": self.g_i,
            "inclination": self.inclination,
            "sample_rate": self.sample_rate,
            "earth_rate": self.earth_rate,
            "latitude": self.latitude,
            "noise": self.noise.to_dict(),
        }

    def __repr__(self):
        return "SimTruth(S={}, h={}, eps={} deg/s)".format(
            arr2s(self.S), arr2s(self.h), arr2s(np.degrees(self.eps))
        )


_AXES = {"x": 0, "y": 1, "z": 2}


class Segment:
    """One piece of a motion profile.

    A tumbling segment excites each listed axis with
    peak * sin(2 pi f t + phi), faded in and out by a sin^2 ramp so that
    the rate is continuous at segment boundaries.
    """

    def __init__(self, kind, t0, t1, axes=(), peak_rate=0.0, freqs=None, phases=None, ramp=2.0):
        self.kind = kind
        self.t0 = float(t0)
        self.t1 = float(t1)
        self.axes = tuple(axes)
        self.peak_rate = float(peak_rate)
        self.freqs = np.zeros(3) if freqs is None else np.asarray(freqs, dtype=float)
        self.phases = np.zeros(3) if phases is None else np.asarray(phases, dtype=float)
        self.ramp = min(float(ramp), 0.25 * (self.t1 - self.t0))

    def window(self, tau):
        """Fade-in/out envelope over segment-local time `tau`."""
        duration = self.t1 - self.t0
        env = np.ones_like(tau)
        if self.ramp > 0:
            rise = tau < self.ramp
            env[rise] = np.sin(0.5 * np.pi * tau[rise] / self.ramp) ** 2
            fall = tau > duration - self.ramp
            env[fall] = np.sin(0.5 * np.pi * (duration - tau[fall]) / self.ramp) ** 2
        return np.clip(env, 0.0, 1.0)

    def rate(self, t):
        """Body rate [rad/s] at times `t` (array) inside the segment."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        omega = np.zeros((len(t), 3))
        if self.kind == "stationary" or not self.axes:
            return omega
        tau = t - self.t0
        env = self.window(tau)
        for ax in self.axes:
            omega[:, ax] = (
                self.peak_rate
                * env
                * np.sin(2 * np.pi * self.freqs[ax] * tau + self.phases[ax])
            )
        return omega

    def __repr__(self):
        return "Segment({}, {:.1f}-{:.1f} s, axes={}, peak={:.3g} rad/s)".format(
            self.kind, self.t0, self.t1, "".join("xyz"[a] for a in self.axes), self.peak_rate
        )


class Trajectory:
    """Angular-rate history sampled uniformly.

    Attributes:
        t (N array): sample times [s], spacing 1/sample_rate
        omega (Nx3 array): true body rate at the sample times [rad/s]
        labels (N array of str): segment kind per sample
        segments (list of Segment)
    """

    def __init__(self, segments, sample_rate=DEFAULT_SAMPLE_RATE):
        self.segments = list(segments)
        self.sample_rate = float(sample_rate)
        duration = self.segments[-1].t1
        nsamples = int(round(duration * self.sample_rate)) + 1
        self.t = np.arange(nsamples) / self.sample_rate
        self.omega = self.rate(self.t)
        self.labels = np.full(nsamples, "", dtype="<U16")
        for seg in self.segments:
            self.labels[(self.t >= seg.t0) & (self.t < seg.t1)] = seg.kind
        self.labels[-1] = self.segments[-1].kind

    @property
    def duration(self):
        return self.segments[-1].t1

    def rate(self, t):
        """Body rate at arbitrary times [s]; zero outside the profile."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        omega = np.zeros((len(t), 3))
        for seg in self.segments:
            inside = (t >= seg.t0) & (t <= seg.t1)
            if np.any(inside):
                omega[inside] = seg.rate(t[inside])
        return omega

    def windows(self, kind="tumbling"):
        """(t0, t1) of all segments of the given kind."""
        return [(seg.t0, seg.t1) for seg in self.segments if seg.kind == kind]

    def __len__(self):
        return len(self.t)

    def __repr__(self):
        return "Trajectory({:.1f} s, {} segments)".format(self.duration, len(self.segments))


def _parse_axes(axes):
    if isinstance(axes, str):
        axes = list(axes)
    try:
        return sorted({_AXES[str(ax).lower()] if not isinstance(ax, int) else ax for ax in axes})
    except KeyError as exc:
        raise ProfileError("unknown axis {}".format(exc))


def gen_trajectory(profile, seed=0, sample_rate=DEFAULT_SAMPLE_RATE, freq_range=(0.1, 0.3)):
    """Build a Trajectory from a list of segment descriptions.

    Args:
        profile (list of dict): each with 'kind' ('stationary' or
            'tumbling'), 'duration' [s]; tumbling also 'axes' (e.g. 'xz'),
            'peak_rate' [rad/s] and optionally 'frequencies' [Hz, per axis]
            and 'ramp' [s]
        seed (int): seeds frequencies and phases not given explicitly
        sample_rate (float): [Hz]
        freq_range (2-tuple): range of random tumbling frequencies [Hz]

    Raises:
        ProfileError: empty profile, non-positive duration, unknown kind
            or a tumbling segment without axes.
    """
    if not profile:
        raise ProfileError("empty motion profile")
    rng = np.random.default_rng(seed)
    segments = []
    t0 = 0.0
    for item in profile:
        item = dict(item)
        kind = item.get("kind", "tumbling")
        duration = float(item.get("duration", 0.0))
        if duration <= 0:
            raise ProfileError("segment duration must be positive: {}".format(item))
        if kind == "stationary":
            segments.append(Segment("stationary", t0, t0 + duration))
        elif kind == "tumbling":
            axes = _parse_axes(item.get("axes", ""))
            if not axes:
                raise ProfileError("tumbling segment excites no axis: {}".format(item))
            freqs = rng.uniform(freq_range[0], freq_range[1], 3)
            phases = rng.uniform(0.0, 2 * np.pi, 3)
            if "frequencies" in item:
                freqs = np.broadcast_to(np.asarray(item["frequencies"], dtype=float), (3,)).copy()
            segments.append(
                Segment(
                    "tumbling",
                    t0,
                    t0 + duration,
                    axes=axes,
                    peak_rate=item.get("peak_rate", 1.0),
                    freqs=freqs,
                    phases=phases,
                    ramp=item.get("ramp", 2.0),
                )
            )
        else:
            raise ProfileError("unknown segment kind '{}'".format(kind))
        t0 += duration
    traj = Trajectory(segments, sample_rate)
    LOGGER.debug("Generated %s: %s", traj, segments)
    return traj


def standard_profile(still=10.0, tumble=120.0, axes="xyz", peak_rate=1.0, sequential=False):
    """Still placement followed by hand-tumbling-like motion.

    With `sequential`, the tumble time is split evenly over the axes,
    one axis at a time.
    """
    profile = [{"kind": "stationary", "duration": still}] if still > 0 else []
    if sequential:
        for ax in axes:
            profile.append(
                {"kind": "tumbling", "duration": tumble / len(axes), "axes": ax, "peak_rate": peak_rate}
            )
    else:
        profile.append({"kind": "tumbling", "duration": tumble, "axes": axes, "peak_rate": peak_rate})
    return profile


def integrate_rk4(traj, C0=None, substeps=4):
    """Attitude history C_b(t) by RK4 on dC/dt = C (omega x).

    Args:
        traj (Trajectory): supplies rate(t)
        C0 (3x3): initial attitude, identity by default
        substeps (int): RK4 steps per sample interval

    Returns:
        Nx3x3 array, re-orthonormalised at each sample
    """
    nsamples = len(traj.t)
    C = np.eye(3) if C0 is None else np.array(C0, dtype=float)
    dt = 1.0 / traj.sample_rate
    hh = dt / substeps
    # rates on the half-step grid
    fine_t = traj.t[0] + 0.5 * hh * np.arange(2 * substeps * (nsamples - 1) + 1)
    fine_w = traj.rate(fine_t)
    attitudes = np.empty((nsamples, 3, 3))
    attitudes[0] = C

    def deriv(C, w):
        return C @ so3.skew(w)

    for kk in range(1, nsamples):
        base = 2 * substeps * (kk - 1)
        for jj in range(substeps):
            i0 = base + 2 * jj
            w0, wh, w1 = fine_w[i0], fine_w[i0 + 1], fine_w[i0 + 2]
            k1 = deriv(C, w0)
            k2 = deriv(C + 0.5 * hh * k1, wh)
            k3 = deriv(C + 0.5 * hh * k2, wh)
            k4 = deriv(C + hh * k3, w1)
            C = C + hh / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        C = so3.orthonormalize(C)
        attitudes[kk] = C
    return attitudes


def simulate(truth, traj, seed=0, substeps=4):
    """Generate a sensor stream from truth and trajectory.

    Args:
        truth (SimTruth): calibration parameters, vectors and noise
        traj (Trajectory): body rate history
        seed (int): noise seed
        substeps (int): RK4 steps per sample

    Returns:
        (SensorStream, Nx3x3 array): samples and the reference attitudes
        C_b(t)^i (relative to the initial body frame; inertial when
        Earth rotation is on)
    """
    if len(traj) == 0:
        raise ProfileError("empty trajectory")
    if abs(traj.sample_rate - truth.sample_rate) > 1e-9 * truth.sample_rate:
        LOGGER.warning(
            "Trajectory rate %g Hz differs from truth rate %g Hz; using trajectory rate",
            traj.sample_rate,
            truth.sample_rate,
        )
    rng = np.random.default_rng(seed)
    noise = truth.noise
    nsamples = len(traj)
    dt = 1.0 / traj.sample_rate
    # earth-fixed attitude relative to b(0)
    C_be = integrate_rk4(traj, substeps=substeps)
    m_i, g_i = truth.m_i, truth.g_i
    # body-frame vectors: C^T v for every sample
    mag_b = np.einsum("kji,j->ki", C_be, m_i)
    acc_b = -np.einsum("kji,j->ki", C_be, g_i)
    gyro = traj.omega.copy()
    if truth.earth_rate:
        omega_i = truth.omega_i
        gyro += np.einsum("kji,j->ki", C_be, omega_i)
        earth = np.array([so3.rotvec_to_dcm(omega_i * tk) for tk in traj.t])
        attitudes = np.einsum("kij,kjl->kil", earth, C_be)
    else:
        attitudes = C_be
    bias = np.tile(truth.eps, (nsamples, 1))
    if noise.sigma_eps > 0:
        steps = noise.sigma_eps * np.sqrt(dt) * rng.standard_normal((nsamples, 3))
        steps[0] = 0.0
        bias += np.cumsum(steps, axis=0)
    gyro += bias + noise.sigma_g / np.sqrt(dt) * rng.standard_normal((nsamples, 3))
    mag = mag_b @ truth.S.T + truth.h + noise.sigma_m * rng.standard_normal((nsamples, 3))
    accel = acc_b + noise.sigma_a * rng.standard_normal((nsamples, 3))
    stream = SensorStream(traj.t.copy(), gyro, accel, mag, labels=traj.labels.copy())
    LOGGER.info("Simulated %s for %s", stream, truth)
    return stream, attitudes


def inject_acceleration(stream, segments, magnitude, kind="sinusoid", frequency=1.0, seed=0):
    """Add linear-acceleration disturbances to accelerometer samples.

    Args:
        stream (SensorStream): input; not modified
        segments (list of 2-tuples): (t0, t1) windows [s]
        magnitude (float): sinusoid amplitude or random RMS [m/s^2]
        kind (str): 'sinusoid' (random fixed direction per segment) or
            'random' (white Gaussian)
        frequency (float): sinusoid frequency [Hz]
        seed (int): direction, phase and noise seed

    Returns:
        SensorStream: disturbed copy; gyro and mag untouched
    """
    out = stream.copy()
    if magnitude == 0:
        return out
    rng = np.random.default_rng(seed)
    for t0, t1 in segments:
        if t1 <= t0 or t0 < stream.t[0] - 1e-9 or t1 > stream.t[-1] + 1e-9:
            raise ProfileError(
                "disturbance segment ({}, {}) outside stream {:.3f}-{:.3f} s".format(
                    t0, t1, stream.t[0], stream.t[-1]
                )
            )
        mask = stream.mask(t0, t1)
        tau = stream.t[mask] - t0
        if kind == "sinusoid":
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            phase = rng.uniform(0, 2 * np.pi)
            amp = magnitude * np.sin(2 * np.pi * frequency * tau + phase)
            out.accel[mask] += amp[:, None] * direction
        elif kind == "random":
            out.accel[mask] += magnitude / np.sqrt(3) * rng.standard_normal((len(tau), 3))
        else:
            raise ProfileError("unknown disturbance kind '{}'".format(kind))
    LOGGER.debug("Injected %s disturbance of %g m/s2 on %d segments", kind, magnitude, len(segments))
    return out


def disturbance_windows(stream, fraction, length=2.0, kind="tumbling", seed=0):
    """Pick windows of `length` s covering `fraction` of the labelled samples.

    Windows are laid out within each contiguous run of samples labelled
    `kind`, so none spans a differently labelled stretch.

    Returns:
        list of (t0, t1)
    """
    if not 0 <= fraction <= 1:
        raise ProfileError("disturbance fraction must lie in [0, 1], got {}".format(fraction))
    inside = stream.labels == kind if kind else np.ones(len(stream), dtype=bool)
    if not inside.any() or fraction == 0:
        return []
    # start and end index of each run of labelled samples
    change = np.diff(np.concatenate([[0], inside.astype(int), [0]]))
    starts, ends = np.flatnonzero(change == 1), np.flatnonzero(change == -1) - 1
    windows = []
    for i0, i1 in zip(starts, ends):
        t_first, t_last = stream.t[i0], stream.t[i1]
        for a in np.arange(t_first, t_last, length):
            windows.append((float(a), float(min(a + length, t_last))))
    windows = [w for w in windows if w[1] > w[0]]
    if not windows:
        return []
    rng = np.random.default_rng(seed)
    count = int(round(fraction * len(windows)))
    chosen = sorted(rng.choice(len(windows), size=count, replace=False))
    return [windows[i] for i in chosen]
