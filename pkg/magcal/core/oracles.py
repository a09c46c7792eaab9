"""
Closed-form batch solvers for magnetometer calibration and alignment.

Two routes recover the parameters from a finished stream:

    * magnetometer + gyro: fit the ellipsoid ||R (y_m - h)|| = 1 from the
      null vector of G_Y, then solve the alignment C_b^m and gyro bias from
      the rotation of the calibrated field, dy*/dt = (y* x) C_b^m (omega - eps);
    * accelerometer aided: gyro bias from dy_a/dt = -(omega - eps) x y_a,
      then attitude by integrating the de-biased gyro and (S, h, m^i) from the
      null vector of G_M.

They serve as standalone calibrators and as cross-checks of the filter.
"""
import numpy as np
import scipy.linalg
import scipy.ndimage
from scipy.signal import savgol_filter
from magcal.core.utils import get_logger, arr2s
from magcal.core.errors import (
    SingularMatrixError,
    RankDeficiencyError,
    IndefiniteError,
    DegenerateError,
)
from magcal.core import so3
from magcal.core.strapdown import integrate_attitude
from magcal.core.observability import (
    rows_Y,
    _blocks_W,
    _blocks_M,
    sample_intervals,
    symmetric_eigvals,
    TOL_DEFAULT,
)

LOGGER = get_logger(__name__)

STENCILS = ("central", "five-point")


def accel_valid(y_a, g_local, T_md):
    """Gating predicate | |y_a| - g | < T_md, for one sample or an Nx3 array."""
    return np.abs(np.linalg.norm(np.asarray(y_a, dtype=float), axis=-1) - g_local) < T_md


def stencil_halfwidth(stencil="central", smooth=0):
    """Samples on either side that enter one `derivative` value."""
    if smooth:
        return (int(smooth) | 1) // 2
    return 2 if stencil == "five-point" else 1


def derivative(x, dt, stencil="central", smooth=0):
    """Time derivative of uniformly sampled data along axis 0.

    Args:
        x (array): samples, first axis is time
        dt (float): sample interval [s]
        stencil (str): 'central' (3-point, second order) or 'five-point'
            (fourth order); end samples use one-sided second order
        smooth (int): if > 0, odd window length of a quadratic
            Savitzky-Golay differentiator used instead of the stencil

    Returns:
        array like x
    """
    x = np.asarray(x, dtype=float)
    if smooth:
        window = int(smooth) | 1
        return savgol_filter(x, window, polyorder=2, deriv=1, delta=dt, axis=0, mode="interp")
    if len(x) < 3:
        raise DegenerateError("need at least 3 samples to differentiate")
    dx = np.gradient(x, dt, axis=0, edge_order=2)
    if stencil == "central":
        return dx
    if stencil == "five-point":
        if len(x) >= 5:
            dx[2:-2] = (-x[4:] + 8 * x[3:-1] - 8 * x[1:-3] + x[:-4]) / (12 * dt)
        return dx
    raise ValueError("unknown stencil '{}'; use one of {}".format(stencil, STENCILS))


def inclination(m, g):
    """Magnetic dip angle [deg]: 90 - angle between m and g."""
    m = np.asarray(m, dtype=float)
    g = np.asarray(g, dtype=float)
    cosang = m @ g / (np.linalg.norm(m) * np.linalg.norm(g))
    return float(90.0 - np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))


def magnitude_discrepancy(y_m, S, h):
    """Per-sample ||S^-1 (y_m - h)|| - 1 of calibrated field magnitudes."""
    ycal = np.linalg.solve(np.asarray(S, dtype=float), (np.asarray(y_m) - h).T).T
    return np.linalg.norm(ycal, axis=1) - 1.0


class IntrinsicParams:
    """Ellipsoid parameters with ||R (y_m - h)|| = 1.

    Attributes:
        R (3x3): upper triangular, positive diagonal
        h (3-vector): centre [raw units]
        eigvals (array): ascending eigenvalues of the normalised G_Y
    """

    def __init__(self, R, h, eigvals=None):
        self.R = np.asarray(R, dtype=float)
        self.h = np.asarray(h, dtype=float)
        self.eigvals = eigvals

    def calibrate(self, y_m):
        """y* = R (y_m - h) for one or many samples."""
        return (np.asarray(y_m, dtype=float) - self.h) @ self.R.T

    def residuals(self, y_m):
        return np.linalg.norm(np.atleast_2d(self.calibrate(y_m)), axis=1) - 1.0

    def to_dict(self):
        return {"R": self.R, "h": self.h}

    def __repr__(self):
        return "IntrinsicParams(R={}, h={})".format(arr2s(self.R), arr2s(self.h))


class AlignmentParams:
    """Cross-sensor misalignment and gyro bias.

    Attributes:
        C_b_m (3x3): rotation from the body to the magnetometer frame
        eps (3-vector): gyro bias from the unprojected solution [rad/s]
        eps_projected (3-vector): gyro bias using the projected C_b_m [rad/s]
        C_raw (3x3): unconstrained least-squares estimate of C_b_m
    """

    def __init__(self, C_b_m, eps, eps_projected=None, C_raw=None):
        self.C_b_m = np.asarray(C_b_m, dtype=float)
        self.eps = np.asarray(eps, dtype=float)
        self.eps_projected = self.eps if eps_projected is None else np.asarray(eps_projected)
        self.C_raw = self.C_b_m if C_raw is None else np.asarray(C_raw)

    def to_dict(self):
        return {
            "C_b_m": self.C_b_m,
            "C_b_m_euler_deg": so3.dcm_to_euler(self.C_b_m),
            "eps_deg": np.degrees(self.eps),
            "eps_projected_deg": np.degrees(self.eps_projected),
        }

    def __repr__(self):
        return "AlignmentParams(euler={} deg, eps={} deg/s)".format(
            arr2s(so3.dcm_to_euler(self.C_b_m)), arr2s(np.degrees(self.eps))
        )


def _count_null(lam, tol):
    return int(np.sum(lam < tol * lam[-1])) if lam[-1] > 0 else len(lam)


def fit_intrinsic(y_m, weights=None, tol=TOL_DEFAULT):
    """Attitude-independent ellipsoid fit.

    The samples are centred and scaled before building G_Y; the null
    vector z* = [A', b', c'] gives h = A'^-1 b' and the scale
    alpha = b'^T A'^-1 b' - c', A = A'/alpha, R = chol(A) (upper).

    Args:
        y_m (Nx3 array): magnetometer samples
        weights (N array): integration weights, uniform if None
        tol (float): relative eigenvalue threshold for a null direction

    Raises:
        RankDeficiencyError: more than one vanishing eigenvalue
        IndefiniteError: the recovered A is not positive definite
    """
    y_m = np.asarray(y_m, dtype=float)
    if len(y_m) < 9:
        raise RankDeficiencyError("ellipsoid fit needs at least 9 samples, got {}".format(len(y_m)))
    centre = y_m.mean(axis=0)
    scale = np.sqrt(np.mean(np.sum((y_m - centre) ** 2, axis=1)))
    if scale == 0:
        raise RankDeficiencyError("magnetometer samples do not vary")
    yn = (y_m - centre) / scale
    rows = rows_Y(yn)
    w = np.ones(len(yn)) if weights is None else np.asarray(weights, dtype=float)
    G = rows.T @ (rows * w[:, None])
    lam, vecs = scipy.linalg.eigh(0.5 * (G + G.T))
    nzero = _count_null(lam, tol)
    LOGGER.debug("G_Y eigenvalues (normalised data): %s", lam)
    if nzero > 1:
        LOGGER.critical("Ellipsoid fit: %d vanishing eigenvalues of G_Y", nzero)
        raise RankDeficiencyError(
            "G_Y has {} eigenvalues below {:.1e} of the largest; "
            "the motion does not excite all ellipsoid parameters".format(nzero, tol)
        )
    z = vecs[:, 0]
    for attempt in range(2):
        Ap = np.array([[z[0], z[1], z[2]], [z[1], z[3], z[4]], [z[2], z[4], z[5]]])
        bp, cp = z[6:9], z[9]
        try:
            hn = np.linalg.solve(Ap, bp)
        except np.linalg.LinAlgError:
            raise IndefiniteError("ellipsoid matrix of the null vector is singular")
        alpha = bp @ hn - cp
        if alpha > 0:
            break
        # eigenvector sign is arbitrary
        z = -z
    if not alpha > 0:
        raise IndefiniteError("ellipsoid scale is not positive: {}".format(alpha))
    A = Ap / alpha
    if np.any(symmetric_eigvals(A) <= 0):
        LOGGER.critical("Ellipsoid fit: A not positive definite:\n%s", A)
        raise IndefiniteError(
            "recovered ellipsoid matrix is not positive definite; "
            "insufficient excitation or the data is not an ellipsoid"
        )
    Rn = scipy.linalg.cholesky(A, lower=False)
    params = IntrinsicParams(Rn / scale, centre + scale * hn, eigvals=lam)
    LOGGER.info("Ellipsoid fit: %s", params)
    return params


def _solve_normal(G, rhs, name, tol):
    lam = symmetric_eigvals(G)
    nzero = _count_null(lam, tol)
    if nzero:
        LOGGER.critical("%s is singular: %d vanishing eigenvalues", name, nzero)
        raise SingularMatrixError(
            "{} has {} eigenvalues below {:.1e} of the largest".format(name, nzero, tol)
        )
    return scipy.linalg.solve(0.5 * (G + G.T), rhs, assume_a="pos")


def solve_alignment(t, y_star, gyro, stencil="central", smooth=0, tol=TOL_DEFAULT):
    """Misalignment and gyro bias from calibrated magnetometer and gyro.

    Solves eta = (int W^T W dt)^-1 int W^T dy*/dt dt with
    eta = [vec(C_b^m); C_b^m eps]. The 3x3 block is projected on SO(3);
    the bias uses the unprojected block, the projected one is kept too.

    Args:
        t (N array): sample times [s], uniform
        y_star (Nx3): calibrated field R (y_m - h)
        gyro (Nx3): measured body rate [rad/s]
        stencil, smooth: see `derivative`
        tol (float): relative singularity threshold for G_W

    Raises:
        SingularMatrixError: G_W singular (insufficient rotation)
        DegenerateError: the unconstrained C_b^m cannot be projected
    """
    t = np.asarray(t, dtype=float)
    y_star = np.asarray(y_star, dtype=float)
    gyro = np.asarray(gyro, dtype=float)
    dt = float(np.median(np.diff(t)))
    ydot = derivative(y_star, dt, stencil, smooth)
    blocks = _blocks_W(y_star, gyro)
    w = sample_intervals(t)
    G = np.einsum("kij,kil->jl", blocks * w[:, None, None], blocks)
    rhs = np.einsum("kij,ki->j", blocks * w[:, None, None], ydot)
    eta = _solve_normal(G, rhs, "G_W", tol)
    C_raw = so3.unvec(eta[:9])
    C_b_m = so3.nearest_rotation(C_raw)
    try:
        eps = np.linalg.solve(C_raw, eta[9:])
    except np.linalg.LinAlgError:
        raise DegenerateError("unconstrained misalignment estimate is singular")
    params = AlignmentParams(C_b_m, eps, eps_projected=C_b_m.T @ eta[9:], C_raw=C_raw)
    LOGGER.info("Alignment: %s", params)
    return params


def solve_bias_from_accel(t, y_a, gyro, stencil="central", smooth=0, tol=TOL_DEFAULT, valid=None):
    """Gyro bias from accelerometer and gyro on gravity-only samples.

    Least squares on dy_a/dt + omega x y_a = -(y_a x) eps, whose normal
    matrix is int (|y_a|^2 I - y_a y_a^T) dt. The accelerometer Gramian
    int y_a y_a^T dt must be nonsingular.

    Args:
        valid (N bool array): gravity-only samples (see `accel_valid`);
            a sample enters the sums only if every sample of its
            derivative stencil is valid. All samples if None.

    Returns:
        3-vector [rad/s]

    Raises:
        SingularMatrixError: insufficient attitude diversity
    """
    t = np.asarray(t, dtype=float)
    y_a = np.asarray(y_a, dtype=float)
    gyro = np.asarray(gyro, dtype=float)
    dt = float(np.median(np.diff(t)))
    w = sample_intervals(t)
    if valid is not None:
        half = stencil_halfwidth(stencil, smooth)
        keep = scipy.ndimage.binary_erosion(
            np.asarray(valid, dtype=bool), structure=np.ones(2 * half + 1, dtype=bool), border_value=1
        )
        LOGGER.info("Accelerometer gate keeps %d of %d samples", int(keep.sum()), len(keep))
        w = w * keep
    G_A = y_a.T @ (y_a * w[:, None])
    lam = symmetric_eigvals(G_A)
    if _count_null(lam, tol):
        LOGGER.critical("Accelerometer Gramian is singular: %s", lam)
        raise SingularMatrixError(
            "accelerometer Gramian is singular; eigenvalues {}".format(lam)
        )
    ydot = derivative(y_a, dt, stencil, smooth)
    resid = ydot + np.cross(gyro, y_a)
    sq = np.sum(y_a**2, axis=1)
    N = np.eye(3) * np.sum(sq * w) - G_A
    # skew(y)^T r = -y x r = r x y
    rhs = -np.sum(np.cross(resid, y_a) * w[:, None], axis=0)
    eps = scipy.linalg.solve(N, rhs, assume_a="pos")
    LOGGER.info("Gyro bias from accelerometer: %s deg/s", arr2s(np.degrees(eps)))
    return eps


class FullCalibration:
    """Output of the accelerometer-aided batch solve.

    Attributes:
        S (3x3), h (3-vector), m_i (unit 3-vector), eps (rad/s),
        g_i (m/s^2), attitudes (Nx3x3): gyro-integrated C_b(t)^i
    """

    def __init__(self, S, h, m_i, eps, g_i, attitudes=None):
        self.S = S
        self.h = h
        self.m_i = m_i
        self.eps = eps
        self.g_i = g_i
        self.attitudes = attitudes

    @property
    def inclination(self):
        return inclination(self.m_i, self.g_i)

    def decompose(self):
        """(C_m^b, R) with S^-1 = C_m^b R."""
        return so3.qr_pos_diag(np.linalg.inv(self.S))

    def to_dict(self):
        C_m_b, R = self.decompose()
        return {
            "S": self.S,
            "h": self.h,
            "m_i": self.m_i,
            "eps_deg": np.degrees(self.eps),
            "g_i": self.g_i,
            "R": R,
            "C_b_m_euler_deg": so3.dcm_to_euler(C_m_b.T),
            "inclination_deg": self.inclination,
        }

    def __repr__(self):
        return "FullCalibration(S={}, h={}, m_i={}, eps={} deg/s)".format(
            arr2s(self.S), arr2s(self.h), arr2s(self.m_i), arr2s(np.degrees(self.eps))
        )


def solve_full(
    t, y_m, y_a, gyro, stencil="central", smooth=0, integrator="first-order", tol=TOL_DEFAULT, valid=None
):
    """All parameters from magnetometer, accelerometer and gyro.

    The bias comes from `solve_bias_from_accel`; the attitude C_b(t)^i is
    integrated from the de-biased gyro starting at identity; kappa =
    [vec(S^-1); S^-1 h; m^i] is the null vector of G_M, normalised to
    ||m^i|| = 1 with det(S^-1) > 0; g^i is the mean of -C y_a.

    Args:
        integrator (str): 'first-order' (as the filter) or 'exponential'
        valid (N bool array): gravity-only accelerometer samples for the
            bias solve and g^i; all samples if None

    Raises:
        SingularMatrixError: accelerometer Gramian singular
        RankDeficiencyError: G_M has more than one vanishing eigenvalue
    """
    t = np.asarray(t, dtype=float)
    y_m = np.asarray(y_m, dtype=float)
    y_a = np.asarray(y_a, dtype=float)
    eps = solve_bias_from_accel(t, y_a, gyro, stencil, smooth, tol, valid=valid)
    attitudes = integrate_attitude(t, gyro, bias=eps, method=integrator)
    blocks = _blocks_M(y_m, attitudes)
    w = sample_intervals(t)
    G = np.einsum("kij,kil->jl", blocks * w[:, None, None], blocks)
    lam, vecs = scipy.linalg.eigh(0.5 * (G + G.T))
    nzero = _count_null(lam, tol)
    if nzero > 1:
        LOGGER.critical("G_M has %d vanishing eigenvalues", nzero)
        raise RankDeficiencyError(
            "G_M has {} eigenvalues below {:.1e} of the largest".format(nzero, tol)
        )
    kap = vecs[:, 0]
    mnorm = np.linalg.norm(kap[12:])
    if mnorm == 0:
        raise DegenerateError("null vector of G_M has zero magnetic vector")
    kap = kap / mnorm
    Sinv = so3.unvec(kap[:9])
    if np.linalg.det(Sinv) < 0:
        kap = -kap
        Sinv = -Sinv
    S = np.linalg.inv(Sinv)
    h = S @ kap[9:12]
    m_i = kap[12:15]
    gravity = np.ones(len(y_a), dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    g_i = -np.einsum("kij,kj->i", attitudes[gravity], y_a[gravity]) / max(int(gravity.sum()), 1)
    result = FullCalibration(S, h, m_i, eps, g_i, attitudes=attitudes)
    LOGGER.info("Accelerometer-aided batch solution: %s", result)
    return result


def calibrate_mag_gyro(stream, stencil="central", smooth=0, tol=TOL_DEFAULT):
    """Ellipsoid fit followed by the alignment solve on one stream.

    Returns:
        (IntrinsicParams, AlignmentParams)
    """
    intrinsic = fit_intrinsic(stream.mag, weights=sample_intervals(stream.t), tol=tol)
    alignment = solve_alignment(
        stream.t, intrinsic.calibrate(stream.mag), stream.gyro, stencil, smooth, tol
    )
    return intrinsic, alignment


def calibrate_accel_aided(
    stream, stencil="central", smooth=0, integrator="first-order", tol=TOL_DEFAULT, T_md=None, g_local=9.8
):
    """`solve_full` on a SensorStream.

    With `T_md` set, only samples passing the accelerometer gate
    | |y_a| - g_local | < T_md enter the bias and gravity estimates.
    """
    valid = None if T_md is None else accel_valid(stream.accel, g_local, T_md)
    return solve_full(
        stream.t, stream.mag, stream.accel, stream.gyro, stencil, smooth, integrator, tol, valid=valid
    )
