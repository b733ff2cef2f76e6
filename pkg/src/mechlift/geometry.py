"""Chart-coordinate state types and the matrix primitives used everywhere else.

Positions and velocities live in local chart coordinates on an
n-dimensional configuration manifold.  Double-tangent elements carry the
four n-vectors (x, y, xdot, ydot) that second-order schemes shuffle
around.  Rotations are 3x3 orthogonal matrices with unit determinant;
the hat/vee pair, the exponential and the logarithm connect them to
axis-angle 3-vectors.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AngleAtPi, DimensionMismatch, NonFinite, NotSkew

# central-difference defaults: eps**(1/3) and eps**(1/4) ballparks
FIRST_ORDER_STEP = 1e-6
SECOND_ORDER_STEP = 1e-4


def float_array(a):
    """View as a floating array, keeping extended precision if present.

    Plain float64 otherwise; integer and object inputs are promoted.
    The distinction matters on the precision-critical stepping path,
    where residuals may be evaluated in longdouble.
    """
    arr = np.asarray(a)
    if arr.dtype == np.longdouble:
        return arr
    return arr.astype(float, copy=False)


def solve_dense(a, b):
    """Dense linear solve that honors longdouble operands.

    LAPACK only handles float64, so extended-precision systems go
    through partial-pivot Gaussian elimination; everything else takes
    the fast path.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.dtype != np.longdouble and b.dtype != np.longdouble:
        return np.linalg.solve(a, b)
    a = a.astype(np.longdouble, copy=True)
    x = b.astype(np.longdouble, copy=True)
    n = a.shape[0]
    for i in range(n):
        p = int(np.argmax(np.abs(a[i:, i]))) + i
        if a[p, i] == 0:
            raise np.linalg.LinAlgError("singular matrix")
        if p != i:
            a[[i, p]] = a[[p, i]]
            x[[i, p]] = x[[p, i]]
        factors = a[i + 1:, i] / a[i, i]
        a[i + 1:] -= factors[:, None] * a[i]
        if x.ndim > 1:
            x[i + 1:] -= factors[:, None] * x[i]
        else:
            x[i + 1:] -= factors * x[i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - a[i, i + 1:] @ x[i + 1:]) / a[i, i]
    return x


def _vec(a, name):
    v = np.asarray(a, dtype=float)
    if v.ndim != 1:
        raise DimensionMismatch(f"{name} must be a 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFinite(f"{name} contains NaN/Inf")
    return v


@dataclass
class CoordState:
    """Point of the tangent bundle in chart coordinates: position x, velocity y."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = _vec(self.x, "x")
        self.y = _vec(self.y, "y")
        if self.x.shape != self.y.shape or self.x.size < 1:
            raise DimensionMismatch("x and y must share length n >= 1")

    @property
    def n(self):
        return self.x.size

    def stacked(self):
        """Concatenate to the 2n-vector (x, y)."""
        return np.concatenate([self.x, self.y])

    @classmethod
    def from_stacked(cls, s):
        s = _vec(s, "state")
        n = s.size // 2
        return cls(s[:n], s[n:])


@dataclass
class DoubleTangent:
    """Element (x, y, xdot, ydot) of the double tangent bundle in chart coordinates."""

    x: np.ndarray
    y: np.ndarray
    xdot: np.ndarray
    ydot: np.ndarray

    def __post_init__(self):
        self.x = _vec(self.x, "x")
        self.y = _vec(self.y, "y")
        self.xdot = _vec(self.xdot, "xdot")
        self.ydot = _vec(self.ydot, "ydot")
        if not (self.x.shape == self.y.shape == self.xdot.shape == self.ydot.shape):
            raise DimensionMismatch("all four component vectors must share length n")

    @property
    def n(self):
        return self.x.size


def kappa(w: DoubleTangent) -> DoubleTangent:
    """Canonical involution (x, y, xdot, ydot) -> (x, xdot, y, ydot).

    Swaps the two vector-bundle structures of the double tangent bundle.
    A pure permutation, hence bit-exact and its own inverse.
    """
    return DoubleTangent(w.x, w.xdot, w.y, w.ydot)


@dataclass
class Rotation:
    """Orthogonal 3x3 matrix with determinant +1.

    Construction re-orthonormalizes by polar projection when the
    orthogonality defect lies in (1e-12, 1e-9] and rejects anything
    beyond, so accumulated drift cannot hide behind silent clean-up.
    """

    r: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.shape != (3, 3):
            raise DimensionMismatch(f"rotation must be 3x3, got {r.shape}")
        if not np.all(np.isfinite(r)):
            raise NonFinite("rotation contains NaN/Inf")
        defect = np.abs(r.T @ r - np.eye(3)).max()
        if defect > 1e-9:
            raise ValueError(f"orthogonality defect {defect:.3e} exceeds 1e-9")
        det = np.linalg.det(r)
        if abs(det - 1.0) > 1e-9 and defect <= 1e-12:
            raise ValueError(f"determinant {det:.12f} is not +1")
        if defect > 1e-12:
            u, _, vt = np.linalg.svd(r)
            r = u @ vt
            if np.linalg.det(r) < 0:
                raise ValueError("nearest orthogonal matrix is a reflection")
        self.r = r

    @property
    def matrix(self):
        return self.r


@dataclass
class AngularVelocity:
    """Body angular velocity, rad/s."""

    w: np.ndarray

    def __post_init__(self):
        self.w = _vec(self.w, "w")
        if self.w.size != 3:
            raise DimensionMismatch("angular velocity must be a 3-vector")


def hat(w) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector, so that hat(w) @ v == cross(w, v)."""
    w = _vec(w, "w")
    if w.size != 3:
        raise DimensionMismatch("hat expects a 3-vector")
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


def vee(s) -> np.ndarray:
    """Inverse of :func:`hat`.

    Raises
    ------
    NotSkew
        If ``s + s.T`` is not zero within 1e-9.
    """
    s = np.asarray(s, dtype=float)
    if s.shape != (3, 3):
        raise DimensionMismatch("vee expects a 3x3 matrix")
    if np.abs(s + s.T).max() >= 1e-9:
        raise NotSkew("matrix is not skew-symmetric")
    return np.array([s[2, 1], s[0, 2], s[1, 0]])


def so3_exp(w) -> Rotation:
    """Rotation about axis w/|w| by angle |w| (Rodrigues formula).

    Series expansions of sin(t)/t and (1-cos(t))/t^2 take over below
    t = 1e-4 to avoid cancellation.
    """
    w = _vec(w, "w")
    if w.size != 3:
        raise DimensionMismatch("so3_exp expects a 3-vector")
    th = np.linalg.norm(w)
    k = hat(w)
    if th < 1e-4:
        a = 1.0 - th**2 / 6.0 + th**4 / 120.0
        b = 0.5 - th**2 / 24.0 + th**4 / 720.0
    else:
        a = np.sin(th) / th
        b = (1.0 - np.cos(th)) / th**2
    return Rotation(np.eye(3) + a * k + b * (k @ k))


def _rotation_matrix(r):
    return r.r if isinstance(r, Rotation) else np.asarray(r, dtype=float)


def so3_log(r) -> np.ndarray:
    """Axis-angle 3-vector of a rotation, principal branch (angle < pi).

    Raises
    ------
    AngleAtPi
        When trace(r) <= -1 + 1e-9: the angle is within the branch cut's
        guard band and the axis sign is ambiguous.
    """
    m = _rotation_matrix(r)
    tr = np.trace(m)
    if tr <= -1.0 + 1e-9:
        raise AngleAtPi(f"trace {tr:.12f}: rotation angle too close to pi")
    th = np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))
    axis = np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    if th < 1e-4:
        factor = 0.5 + th**2 / 12.0 + 7.0 * th**4 / 720.0
    else:
        factor = th / (2.0 * np.sin(th))
    return factor * axis


def vectorize(m) -> np.ndarray:
    """Row-major flattening of a 3x3 matrix to a 9-vector."""
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise DimensionMismatch("vectorize expects a 3x3 matrix")
    return m.reshape(9).copy()


def devectorize(v) -> np.ndarray:
    """Inverse of :func:`vectorize`."""
    v = _vec(v, "v")
    if v.size != 9:
        raise DimensionMismatch("devectorize expects a 9-vector")
    return v.reshape(3, 3).copy()


def numeric_jacobian(f, x0, step=FIRST_ORDER_STEP) -> np.ndarray:
    """Central-difference Jacobian of ``f`` at ``x0``.

    Parameters
    ----------
    f : callable
        Maps an n-vector to an m-vector.
    x0 : array, shape (n,)
        Expansion point.
    step : float
        Absolute difference step; entrywise error is O(step**2) for
        smooth ``f``.

    Raises
    ------
    NonFinite
        If any probe evaluation returns NaN/Inf.
    """
    x0 = _vec(x0, "x0")
    cols = []
    for j in range(x0.size):
        e = np.zeros_like(x0)
        e[j] = step
        fp = np.asarray(f(x0 + e), dtype=float)
        fm = np.asarray(f(x0 - e), dtype=float)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise NonFinite("function evaluation returned NaN/Inf")
        cols.append((fp - fm) / (2.0 * step))
    return np.column_stack(cols)


def directional_derivative(f, x, v, step=FIRST_ORDER_STEP, richardson=False):
    """Central-difference derivative of ``f`` at ``x`` along ``v``.

    With ``richardson=True`` one level of Richardson extrapolation is
    applied (recovers roughly half the digits lost to nesting).
    """
    x = _vec(x, "x")
    v = np.asarray(v, dtype=float)

    def central(s):
        fp = np.asarray(f(x + s * v), dtype=float)
        fm = np.asarray(f(x - s * v), dtype=float)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise NonFinite("function evaluation returned NaN/Inf")
        return (fp - fm) / (2.0 * s)

    d = central(step)
    if richardson:
        d = (4.0 * central(step / 2.0) - d) / 3.0
    return d
