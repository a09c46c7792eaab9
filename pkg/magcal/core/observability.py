"""
Observability Gramians of the calibration problem.

Four time-integrated normal matrices predict whether the calibration
parameters are recoverable from a stream:

    G_Y = int Y*^T Y* dt    (10x10)  ellipsoid fit, attitude-free
    G_W = int W^T W dt      (12x12)  misalignment and gyro bias from mag + gyro
    G_A = int y_a y_a^T dt  (3x3)    gyro bias from accelerometer
    G_M = int M^T M dt      (15x15)  full parameter set with gyro attitude

The mag/gyro path is solvable when G_W is nonsingular and G_Y has exactly
one vanishing eigenvalue; the accelerometer-aided path when G_A is
nonsingular and G_M has exactly one vanishing eigenvalue.
A vanishing eigenvalue is one below tol times the largest.
"""
import numpy as np
import scipy.linalg
from magcal.core.utils import get_logger
from magcal.core import so3
from magcal.core.strapdown import integrate_attitude

LOGGER = get_logger(__name__)

TOL_NOISELESS = 1e-8
TOL_DEFAULT = 1e-4

# number of expected null directions per Gramian
EXPECTED_NULL = {"G_Y": 1, "G_W": 0, "G_A": 0, "G_M": 1}
SIZES = {"G_Y": 10, "G_W": 12, "G_A": 3, "G_M": 15}

OBSERVABLE = "observable"
UNOBSERVABLE = "unobservable"
MARGINAL = "marginal"


def row_Y(y_m):
    """Ellipsoid constraint row for one magnetometer sample.

    row . z* = y^T A y - 2 y^T A h + h^T A h - 1 with
    z* = [A11, A12, A13, A22, A23, A33, A h, h^T A h - 1], A = R^T R;
    off-diagonal entries of A carry a factor 2.
    """
    y1, y2, y3 = np.asarray(y_m, dtype=float)
    return np.array(
        [
            y1 * y1,
            2 * y1 * y2,
            2 * y1 * y3,
            y2 * y2,
            2 * y2 * y3,
            y3 * y3,
            -2 * y1,
            -2 * y2,
            -2 * y3,
            1.0,
        ]
    )


def rows_Y(y_m):
    """row_Y for an Nx3 array of samples."""
    y = np.asarray(y_m, dtype=float)
    y1, y2, y3 = y[:, 0], y[:, 1], y[:, 2]
    return np.column_stack(
        [
            y1 * y1,
            2 * y1 * y2,
            2 * y1 * y3,
            y2 * y2,
            2 * y2 * y3,
            y3 * y3,
            -2 * y1,
            -2 * y2,
            -2 * y3,
            np.ones(len(y)),
        ]
    )


def z_star(A, h):
    """Null vector of G_Y for ellipsoid matrix A = R^T R and centre h."""
    A = np.asarray(A, dtype=float)
    h = np.asarray(h, dtype=float)
    unique = [A[0, 0], A[0, 1], A[0, 2], A[1, 1], A[1, 2], A[2, 2]]
    return np.concatenate([unique, A @ h, [h @ A @ h - 1.0]])


def row_W(y_m_star, omega):
    """3x12 block [omega^T kron (y*x), -(y*x)].

    block . eta = (y*x) C_b^m (omega - eps) for eta = [vec(C_b^m); C_b^m eps].
    """
    Y = so3.skew(y_m_star)
    return np.hstack([np.kron(np.asarray(omega, dtype=float)[None, :], Y), -Y])


def eta(C_b_m, eps):
    """Parameter vector of row_W."""
    C_b_m = np.asarray(C_b_m, dtype=float)
    return np.concatenate([so3.vec(C_b_m), C_b_m @ np.asarray(eps, dtype=float)])


def row_M(y_m, C_b_i):
    """3x15 block [y_m^T kron C, -C, -I3].

    block . kappa = C S^-1 y_m - C S^-1 h - m^i for
    kappa = [vec(S^-1); S^-1 h; m^i].
    """
    C = np.asarray(C_b_i, dtype=float)
    return np.hstack([np.kron(np.asarray(y_m, dtype=float)[None, :], C), -C, -np.eye(3)])


def kappa(S, h, m_i):
    """Parameter vector of row_M."""
    Sinv = np.linalg.inv(np.asarray(S, dtype=float))
    return np.concatenate([so3.vec(Sinv), Sinv @ np.asarray(h, dtype=float), np.asarray(m_i, dtype=float)])


def _blocks_W(ystar, omega):
    """Stacked row_W blocks, Nx3x12."""
    nn = len(ystar)
    Y = np.zeros((nn, 3, 3))
    Y[:, 0, 1], Y[:, 0, 2] = -ystar[:, 2], ystar[:, 1]
    Y[:, 1, 0], Y[:, 1, 2] = ystar[:, 2], -ystar[:, 0]
    Y[:, 2, 0], Y[:, 2, 1] = -ystar[:, 1], ystar[:, 0]
    left = np.concatenate([omega[:, jj, None, None] * Y for jj in range(3)], axis=2)
    return np.concatenate([left, -Y], axis=2)


def _blocks_M(y_m, attitudes):
    """Stacked row_M blocks, Nx3x15."""
    nn = len(y_m)
    left = np.concatenate([y_m[:, jj, None, None] * attitudes for jj in range(3)], axis=2)
    eye = np.broadcast_to(-np.eye(3), (nn, 3, 3))
    return np.concatenate([left, -attitudes, eye], axis=2)


def symmetric_eigvals(G):
    """Ascending eigenvalues of the explicitly symmetrised matrix."""
    G = np.asarray(G, dtype=float)
    return scipy.linalg.eigvalsh(0.5 * (G + G.T))


def eigen_ratio(G):
    """Smallest over second-smallest eigenvalue, in (0, 1].

    Eigenvalues are floored at machine precision times the largest one,
    so the ratio has a finite logarithm.
    """
    lam = symmetric_eigvals(G)
    lam = np.clip(lam, np.finfo(float).eps * max(lam[-1], 0.0), None)
    if lam[1] <= 0:
        return 1.0
    return float(min(lam[0] / lam[1], 1.0))


def mag_normalization(y_m):
    """Centre and rms radius of a magnetometer record.

    The Gramians are built from (y_m - centre) / scale, which leaves their
    null directions unchanged and makes the verdicts independent of the
    magnetometer units.

    Returns:
        tuple: (centre 3-vector, scale)
    """
    y = np.asarray(y_m, dtype=float)
    if len(y) == 0:
        return np.zeros(3), 1.0
    centre = y.mean(axis=0)
    scale = float(np.sqrt(np.mean(np.sum((y - centre) ** 2, axis=1))))
    if not np.isfinite(scale) or scale <= 0:
        # a single field direction: fall back to the field magnitude
        scale = float(np.linalg.norm(centre)) or 1.0
    return centre, scale


def _common_norm(first, second):
    if first is None:
        return second
    if second is None:
        return first
    if not (
        np.allclose(first[0], second[0], rtol=1e-12, atol=0)
        and np.isclose(first[1], second[1], rtol=1e-12, atol=0)
    ):
        raise ValueError("cannot merge Gramians with different magnetometer normalizations")
    return first


class GramianSet:
    """Running sums of the four observability Gramians.

    Attributes:
        G_Y, G_W, G_A, G_M (arrays): the Gramians
        t_span (float): accumulated time [s]
        history_t, history_log_ratio (lists): log10 eigen-ratio of G_Y
            recorded during `accumulate_stream`
        mag_norm (tuple): (centre, scale) applied to the magnetometer
            samples by `accumulate_stream`; None for hand-fed rows
    """

    def __init__(self):
        self.G_Y = np.zeros((10, 10))
        self.G_W = np.zeros((12, 12))
        self.G_A = np.zeros((3, 3))
        self.G_M = np.zeros((15, 15))
        self.t_span = 0.0
        self.nsamples = 0
        self.history_t = []
        self.history_log_ratio = []
        self.mag_norm = None

    def gramians(self):
        return {"G_Y": self.G_Y, "G_W": self.G_W, "G_A": self.G_A, "G_M": self.G_M}

    def accumulate(self, dt, y_row=None, w_block=None, y_a=None, m_block=None):
        """Add row^T row dt for each of the given rows; returns self."""
        if dt <= 0:
            raise ValueError("accumulation step must be positive, got {}".format(dt))
        if y_row is not None:
            y_row = np.asarray(y_row, dtype=float)
            self.G_Y += np.outer(y_row, y_row) * dt
        if w_block is not None:
            self.G_W += w_block.T @ w_block * dt
        if y_a is not None:
            y_a = np.asarray(y_a, dtype=float)
            self.G_A += np.outer(y_a, y_a) * dt
        if m_block is not None:
            self.G_M += m_block.T @ m_block * dt
        self.t_span += dt
        self.nsamples += 1
        self.symmetrize()
        return self

    def symmetrize(self):
        for name in SIZES:
            G = getattr(self, name)
            setattr(self, name, 0.5 * (G + G.T))

    def record(self, t):
        """Append the current log10 eigen-ratio of G_Y at time t."""
        ratio = eigen_ratio(self.G_Y)
        self.history_t.append(float(t))
        self.history_log_ratio.append(float(np.log10(ratio)))

    def merge(self, other):
        """Sum of two GramianSets over disjoint data.

        Raises:
            ValueError: the sets were built with different magnetometer
                normalizations
        """
        out = GramianSet()
        out.mag_norm = _common_norm(self.mag_norm, other.mag_norm)
        for name in SIZES:
            setattr(out, name, getattr(self, name) + getattr(other, name))
        out.t_span = self.t_span + other.t_span
        out.nsamples = self.nsamples + other.nsamples
        out.history_t = list(self.history_t) + list(other.history_t)
        out.history_log_ratio = list(self.history_log_ratio) + list(other.history_log_ratio)
        return out

    __add__ = merge

    def copy(self):
        return self.merge(GramianSet())

    def __repr__(self):
        return "GramianSet({:.2f} s, {} samples)".format(self.t_span, self.nsamples)


def accumulate(g, rows, dt):
    """Add one sample's rows to a GramianSet.

    Args:
        g (GramianSet): accumulator, updated in place
        rows (dict): any of 'Y' (row_Y), 'W' (row_W), 'A' (y_a), 'M' (row_M)
        dt (float): sample interval [s]

    Returns:
        GramianSet: `g`
    """
    return g.accumulate(
        dt,
        y_row=rows.get("Y"),
        w_block=rows.get("W"),
        y_a=rows.get("A"),
        m_block=rows.get("M"),
    )


def sample_intervals(t):
    """Integration weight per sample: the preceding interval, and the
    following one for the first sample."""
    t = np.asarray(t, dtype=float)
    if len(t) < 2:
        return np.ones(len(t)) * 0.01
    dt = np.diff(t)
    return np.concatenate([[dt[0]], dt])


def accumulate_stream(
    stream,
    intrinsic=None,
    eps=None,
    attitude=None,
    record_every=1.0,
    gramians=None,
    normalization=None,
):
    """Build the Gramians for a whole stream.

    The magnetometer samples enter G_Y and G_M centred and scaled by
    `normalization`, so the verdicts do not depend on the magnetometer
    units.

    Args:
        stream (SensorStream): samples
        intrinsic (IntrinsicParams): for y* = R (y_m - h); raw y_m if None
        eps (3-vector): gyro bias removed before integrating attitude [rad/s]
        attitude (Nx3x3 array): C_b(t)^i for G_M; integrated from the
            de-biased gyro if None
        record_every (float): G_Y eigen-ratio recording interval [s];
            no recording if None
        gramians (GramianSet): accumulate on top of this set
        normalization (tuple): (centre, scale) of the magnetometer samples;
            taken from `gramians` when it has one, else from this stream

    Returns:
        GramianSet
    """
    g = GramianSet() if gramians is None else gramians.copy()
    if len(stream) == 0:
        return g
    t = stream.t
    weights = sample_intervals(t)
    if normalization is None:
        normalization = g.mag_norm if g.mag_norm is not None else mag_normalization(stream.mag)
    centre, scale = normalization
    g.mag_norm = _common_norm(g.mag_norm, (np.asarray(centre, dtype=float), float(scale)))
    y_m = (stream.mag - g.mag_norm[0]) / g.mag_norm[1]
    if intrinsic is not None:
        ystar = (stream.mag - intrinsic.h) @ intrinsic.R.T
    else:
        ystar = y_m
    if attitude is None:
        attitude = integrate_attitude(t, stream.gyro, bias=eps)
    ry = rows_Y(y_m)
    bw = _blocks_W(ystar, stream.gyro)
    bm = _blocks_M(y_m, np.asarray(attitude))
    ya = stream.accel
    if record_every is None:
        edges = [0, len(t)]
    else:
        marks = np.arange(t[0] + record_every, t[-1] + record_every, record_every)
        edges = [0] + list(np.searchsorted(t, marks, side="right")) + [len(t)]
        edges = sorted(set(edges))
    for i0, i1 in zip(edges[:-1], edges[1:]):
        if i1 <= i0:
            continue
        w = weights[i0:i1]
        g.G_Y += ry[i0:i1].T @ (ry[i0:i1] * w[:, None])
        g.G_A += ya[i0:i1].T @ (ya[i0:i1] * w[:, None])
        g.G_W += np.einsum("kij,kil->jl", bw[i0:i1] * w[:, None, None], bw[i0:i1])
        g.G_M += np.einsum("kij,kil->jl", bm[i0:i1] * w[:, None, None], bm[i0:i1])
        g.t_span += float(w.sum())
        g.nsamples += i1 - i0
        g.symmetrize()
        if record_every is not None:
            g.record(t[i1 - 1])
    LOGGER.debug("Accumulated %s", g)
    return g


class GramianVerdict:
    """Eigen-diagnostics of one Gramian.

    Attributes:
        name (str), eigvals (array, ascending), smallest (float),
        ratio (float): smallest over second-smallest, in [0, 1],
        rank (int): eigenvalues at or above tol * largest,
        nzero (int): eigenvalues below tol * largest,
        verdict (str): observable, unobservable or marginal
    """

    def __init__(self, name, G, tol):
        self.name = name
        self.expected_null = EXPECTED_NULL[name]
        self.eigvals = symmetric_eigvals(G)
        self.smallest = float(self.eigvals[0])
        self.ratio = eigen_ratio(G)
        lmax = self.eigvals[-1]
        if lmax <= 0:
            self.nzero = len(self.eigvals)
        else:
            self.nzero = int(np.sum(self.eigvals < tol * lmax))
        self.rank = len(self.eigvals) - self.nzero
        if self.nzero > self.expected_null:
            self.verdict = UNOBSERVABLE
        elif self.nzero < self.expected_null:
            # no null direction left: model mismatch or noise-dominated
            self.verdict = MARGINAL
        elif self.eigvals[self.expected_null] < 10 * tol * lmax:
            self.verdict = MARGINAL
        else:
            self.verdict = OBSERVABLE

    def to_dict(self):
        return {
            "eigvals": self.eigvals,
            "smallest": self.smallest,
            "ratio": self.ratio,
            "rank": self.rank,
            "nzero": self.nzero,
            "verdict": self.verdict,
        }


def _combine(*verdicts):
    if any(v.verdict == UNOBSERVABLE for v in verdicts):
        return UNOBSERVABLE
    if all(v.verdict == OBSERVABLE for v in verdicts):
        return OBSERVABLE
    return MARGINAL


class ObsvReport:
    """Observability verdicts of a GramianSet.

    Attributes:
        gramians (dict): name -> GramianVerdict
        mag_gyro (str): verdict for calibration from magnetometer and gyro
            (G_W nonsingular and G_Y exactly one null direction)
        accel_aided (str): verdict for the accelerometer-aided path
            (G_A nonsingular and G_M exactly one null direction)
        t, log_ratio (arrays): G_Y eigen-ratio history
        tol (float)
    """

    def __init__(self, g, tol=TOL_DEFAULT):
        self.tol = tol
        self.t_span = g.t_span
        self.gramians = {name: GramianVerdict(name, G, tol) for name, G in g.gramians().items()}
        self.mag_gyro = _combine(self.gramians["G_W"], self.gramians["G_Y"])
        self.accel_aided = _combine(self.gramians["G_A"], self.gramians["G_M"])
        self.t = np.asarray(g.history_t)
        self.log_ratio = np.asarray(g.history_log_ratio)

    @property
    def observable(self):
        """True if either calibration path is observable."""
        return OBSERVABLE in (self.mag_gyro, self.accel_aided)

    def table(self):
        """Plain-text summary."""
        lines = [
            "Observability over {:.2f} s (tol {:.1e})".format(self.t_span, self.tol),
            "{:6s} {:>4s} {:>12s} {:>12s} {:>5s} {:>5s}  {:s}".format(
                "Gramian", "n", "min eig", "ratio", "rank", "null", "verdict"
            ),
        ]
        for name, gv in self.gramians.items():
            lines.append(
                "{:6s} {:>4d} {:>12.4e} {:>12.4e} {:>5d} {:>5d}  {:s}".format(
                    name, SIZES[name], gv.smallest, gv.ratio, gv.rank, gv.nzero, gv.verdict
                )
            )
        lines.append("magnetometer + gyro:           {}".format(self.mag_gyro))
        lines.append("magnetometer + gyro + accel:   {}".format(self.accel_aided))
        return "\n".join(lines)

    def write_csv(self, path):
        """Write the (t, log10 ratio) series of G_Y."""
        data = np.column_stack([self.t, self.log_ratio]) if len(self.t) else np.zeros((0, 2))
        np.savetxt(path, data, fmt="%.10g", delimiter=",", header="t,log10_ratio", comments="")

    def to_dict(self):
        return {
            "tol": self.tol,
            "t_span": self.t_span,
            "mag_gyro": self.mag_gyro,
            "accel_aided": self.accel_aided,
            "gramians": {name: gv.to_dict() for name, gv in self.gramians.items()},
        }

    def __repr__(self):
        return "ObsvReport(mag_gyro={}, accel_aided={})".format(self.mag_gyro, self.accel_aided)


def report(g, tol=TOL_DEFAULT):
    """Verdicts and eigen-diagnostics for a GramianSet."""
    rep = ObsvReport(g, tol)
    LOGGER.info(
        "Observability: mag+gyro %s, accel-aided %s", rep.mag_gyro, rep.accel_aided
    )
    for name, gv in rep.gramians.items():
        LOGGER.debug("%s: nzero %d, ratio %.3e, verdict %s", name, gv.nzero, gv.ratio, gv.verdict)
    if not rep.observable:
        LOGGER.warning("Neither calibration path is observable on this data")
    return rep
