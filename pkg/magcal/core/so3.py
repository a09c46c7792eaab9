"""
Small fixed-size linear algebra and rotation utilities.

Conventions used throughout magcal:

    * A DCM `C_a^b` maps vectors resolved in frame a into frame b, v^b = C v^a.
    * Euler angles are aerospace Z-Y-X (yaw, pitch, roll) intrinsic, so that
      D = Rz(yaw) Ry(pitch) Rx(roll). They are reported as (roll, pitch, yaw).
    * vec(M) stacks the columns of M (column-major), so that
      vec(A X B) = (B^T kron A) vec(X).
    * Angles are radians internally; degrees only at I/O boundaries.
"""
import numpy as np
import scipy.linalg
from scipy.spatial.transform import Rotation
from magcal.core.utils import get_logger
from magcal.core.errors import SingularMatrixError, DegenerateError

LOGGER = get_logger(__name__)

# relative threshold on singular values for qr_pos_diag
SINGULAR_RTOL = 1e-12
GIMBAL_TOL = 1e-9


def skew(v):
    """Return the cross-product matrix (v x) of a 3-vector.

    skew(v) @ w == np.cross(v, w)
    """
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(M):
    """Inverse of skew, applied to the antisymmetric part of `M`."""
    M = np.asarray(M, dtype=float)
    A = 0.5 * (M - M.T)
    return np.array([A[2, 1], A[0, 2], A[1, 0]])


def vec(M):
    """Column-major vectorisation of a matrix."""
    return np.asarray(M, dtype=float).reshape(-1, order="F")


def unvec(v, shape=(3, 3)):
    """Inverse of vec."""
    return np.asarray(v, dtype=float).reshape(shape, order="F")


def qr_pos_diag(A):
    """Orthogonal-triangular decomposition A = Q R with positive diag(R).

    Args:
        A (3x3 array): invertible matrix

    Returns:
        Q (3x3 array): orthogonal; a rotation if det(A) > 0
        R (3x3 array): upper triangular with strictly positive diagonal

    Raises:
        SingularMatrixError: if the smallest singular value of A is below
            1e-12 times the largest.
    """
    A = np.asarray(A, dtype=float)
    sv = scipy.linalg.svdvals(A)
    if not np.all(np.isfinite(sv)) or sv[0] == 0 or sv[-1] <= SINGULAR_RTOL * sv[0]:
        LOGGER.critical("Cannot QR-decompose a singular matrix:\n%s", A)
        raise SingularMatrixError(
            "singular input to qr_pos_diag; singular values {}".format(sv)
        )
    Q, R = scipy.linalg.qr(A)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    D = np.diag(signs)
    return Q @ D, D @ R


def nearest_rotation(A):
    """Return the rotation matrix closest to `A` in the Frobenius norm.

    The orthogonal Procrustes solution U diag(1, 1, det(U V^T)) V^T
    from the SVD A = U S V^T.

    Raises:
        DegenerateError: if two singular values of A vanish, in which case
            the projection is not unique.
    """
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise DegenerateError("non-finite matrix cannot be projected on SO(3)")
    U, s, Vt = scipy.linalg.svd(A)
    if s[0] == 0 or s[1] <= SINGULAR_RTOL * s[0]:
        LOGGER.critical("Degenerate matrix, singular values %s", s)
        raise DegenerateError(
            "rotation projection is not unique; singular values {}".format(s)
        )
    d = np.sign(np.linalg.det(U @ Vt))
    if d == 0:
        d = 1.0
    return U @ np.diag([1.0, 1.0, d]) @ Vt


# re-orthonormalisation after propagation is the same projection
orthonormalize = nearest_rotation


def is_rotation(D, tol=1e-9):
    """True if D is orthonormal with det +1 within `tol`."""
    D = np.asarray(D, dtype=float)
    return bool(
        np.linalg.norm(D.T @ D - np.eye(3)) < tol
        and abs(np.linalg.det(D) - 1.0) < tol
    )


def rotvec_to_dcm(phi):
    """Rotation matrix exp(skew(phi)) for a rotation vector phi [rad]."""
    return Rotation.from_rotvec(np.asarray(phi, dtype=float)).as_matrix()


def dcm_to_rotvec(D):
    """Rotation vector of a DCM (inverse of rotvec_to_dcm)."""
    return Rotation.from_matrix(np.asarray(D, dtype=float)).as_rotvec()


def geodesic_angle(A, B):
    """Angle [rad] of the relative rotation A^T B."""
    return float(np.linalg.norm(dcm_to_rotvec(np.asarray(A).T @ np.asarray(B))))


def gimbal_lock(D):
    """True if the Z-Y-X pitch of D is within the gimbal-lock band."""
    return bool(abs(np.asarray(D)[2, 0]) > 1.0 - GIMBAL_TOL)


def dcm_to_euler(D, degrees=True):
    """Z-Y-X Euler angles of a DCM.

    Args:
        D (3x3 array): rotation matrix, D = Rz(yaw) Ry(pitch) Rx(roll)
        degrees (bool): return degrees (default) or radians

    Returns:
        array: (roll, pitch, yaw)

    At gimbal lock only yaw +/- roll is defined; a warning is logged and
    the roll = 0 solution is returned.
    """
    D = np.asarray(D, dtype=float)
    pitch = -np.arcsin(np.clip(D[2, 0], -1.0, 1.0))
    if gimbal_lock(D):
        LOGGER.warning("Gimbal lock: pitch %.6f deg; roll set to 0", np.degrees(pitch))
        roll = 0.0
        yaw = np.arctan2(-D[0, 1], D[1, 1])
    else:
        roll = np.arctan2(D[2, 1], D[2, 2])
        yaw = np.arctan2(D[1, 0], D[0, 0])
    angles = np.array([roll, pitch, yaw])
    if degrees:
        angles = np.degrees(angles)
    return angles


def euler_to_dcm(angles, degrees=True):
    """DCM from Z-Y-X Euler angles given as (roll, pitch, yaw)."""
    roll, pitch, yaw = np.asarray(angles, dtype=float)
    return Rotation.from_euler("ZYX", [yaw, pitch, roll], degrees=degrees).as_matrix()
