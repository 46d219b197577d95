"""Models of real hyperbolic space H^k with numerical coordinates.

Points and Busemann calculus live in the Poincare ball (closed forms are
best conditioned there); isometries are stored as Lorentz matrices acting
on the hyperboloid (composition is numerically stable there).  Conversions
between the two charts are explicit and exact.

Conventions
-----------
* Ball model: open unit ball in R^k with metric 4|dx|^2/(1-|x|^2)^2.
* Hyperboloid: upper sheet of <X,X> = -1 in R^(k,1), Lorentz form
  diag(-1, 1, ..., 1), time coordinate first.
* Busemann functions are normalized at the origin O of the ball.
* Tangent vectors are stored in ball-chart components.  The "frame"
  components of a tangent vector are its coefficients in the conformal
  orthonormal frame E_i = ((1-|x|^2)/2) d/dx_i; frame components of the
  Busemann gradient are unit Euclidean vectors.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import expm

LORENTZ_FORM_TOL = 1e-10
BOUNDARY_NORM_TOL = 1e-12
# eigenvalue-modulus gap below which an isometry is not called loxodromic
LOXODROMIC_TOL = 1e-8


class DimensionMismatchError(ValueError):
    """Operands live in hyperbolic spaces of different dimension."""


def minkowski(n: int) -> np.ndarray:
    """Matrix of the Lorentz form diag(-1, 1, ..., 1) on R^(n-1,1)."""
    J = np.eye(n)
    J[0, 0] = -1.0
    return J


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HPoint:
    """Point of H^k in the open unit ball model."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        object.__setattr__(self, "coords", c)
        if c.ndim != 1 or c.size < 2:
            raise ValueError("ball point needs a vector of dimension >= 2")
        if np.dot(c, c) >= 1.0:
            raise ValueError("ball point must have Euclidean norm < 1")

    @property
    def dimension(self) -> int:
        return self.coords.size

    @staticmethod
    def origin(k: int) -> "HPoint":
        return HPoint(np.zeros(k))


@dataclass(frozen=True)
class BoundaryPoint:
    """Ideal point: unit vector on the sphere at infinity of H^k."""

    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-6:
            raise ValueError("boundary point must be a unit vector")
        if abs(n - 1.0) > BOUNDARY_NORM_TOL:
            d = d / n
        object.__setattr__(self, "direction", d)

    @property
    def dimension(self) -> int:
        return self.direction.size


@dataclass(frozen=True)
class TangentVector:
    """Tangent vector at ``base``, stored in ball-chart components."""

    base: HPoint
    vec: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vec, dtype=float)
        object.__setattr__(self, "vec", v)
        if v.shape != self.base.coords.shape:
            raise DimensionMismatchError("tangent vector does not match base point")

    @property
    def riemannian_norm(self) -> float:
        lam = conformal_factor(self.base.coords)
        return lam * float(np.linalg.norm(self.vec))

    def frame_components(self) -> np.ndarray:
        """Coefficients in the conformal orthonormal frame at the base."""
        return conformal_factor(self.base.coords) * self.vec


def conformal_factor(x: np.ndarray) -> float:
    """lambda(x) = 2/(1-|x|^2), the ball-metric scale at x."""
    return 2.0 / (1.0 - float(np.dot(x, x)))


def riemannian_inner(u: TangentVector, v: TangentVector) -> float:
    if u.base != v.base and not np.array_equal(u.base.coords, v.base.coords):
        raise DimensionMismatchError("tangent vectors based at different points")
    lam = conformal_factor(u.base.coords)
    return lam * lam * float(np.dot(u.vec, v.vec))


# ---------------------------------------------------------------------------
# ball <-> hyperboloid conversions (array level)
# ---------------------------------------------------------------------------

def ball_to_hyperboloid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    s = np.dot(x, x)
    f = 2.0 / (1.0 - s)
    X = np.empty(x.size + 1)
    X[0] = f - 1.0
    X[1:] = f * x
    return X

def hyperboloid_to_ball(X: np.ndarray) -> np.ndarray:
    return X[1:] / (1.0 + X[0])

def tangent_to_hyperboloid(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Pushforward of a chart vector u at ball point x."""
    s = np.dot(x, x)
    f = 2.0 / (1.0 - s)
    xu = np.dot(x, u)
    U = np.empty(x.size + 1)
    U[0] = f * f * xu
    U[1:] = f * f * xu * x + f * u
    return U

def tangent_to_ball(X: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Pull a hyperboloid tangent back to chart components at the ball image."""
    x = hyperboloid_to_ball(X)
    s = np.dot(x, x)
    return (U[1:] - U[0] * x) * (1.0 - s) / 2.0


# ---------------------------------------------------------------------------
# distance and Busemann calculus
# ---------------------------------------------------------------------------

def _check_same_dim(x: HPoint, y) -> None:
    if x.dimension != y.dimension:
        raise DimensionMismatchError(
            f"dimension {x.dimension} vs {y.dimension}")


def distance(x: HPoint, y: HPoint) -> float:
    """Hyperbolic distance in the ball model.

    Uses d = 2 asinh sqrt(|x-y|^2 / ((1-|x|^2)(1-|y|^2))), which stays
    accurate for nearby points where the acosh form loses digits.
    """
    _check_same_dim(x, y)
    a, b = x.coords, y.coords
    q = np.dot(a - b, a - b) / ((1.0 - np.dot(a, a)) * (1.0 - np.dot(b, b)))
    return 2.0 * float(np.arcsinh(np.sqrt(q)))


def busemann(x: HPoint, theta: BoundaryPoint) -> float:
    """Busemann function B(x, theta) normalized so that B(O, theta) = 0."""
    _check_same_dim(x, theta)
    c = x.coords
    t = theta.direction
    d = c - t
    return float(np.log(np.dot(d, d) / (1.0 - np.dot(c, c))))


def busemann_many(x: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """B(x, theta_i) for an (N, k) array of unit directions."""
    diff = x[None, :] - directions
    return np.log(np.einsum("ij,ij->i", diff, diff) / (1.0 - np.dot(x, x)))


def busemann_gradients_frame(x: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Frame components of grad_x B(x, theta_i), one unit row per direction.

    The closed form b = x + (1-|x|^2)(x-theta)/|x-theta|^2 has exactly unit
    Euclidean norm, which the operator assembly downstream relies on.
    """
    diff = x[None, :] - directions
    r2 = np.einsum("ij,ij->i", diff, diff)
    return x[None, :] + (1.0 - np.dot(x, x)) * diff / r2[:, None]


def busemann_gradient(x: HPoint, theta: BoundaryPoint) -> TangentVector:
    """Riemannian gradient of B(., theta); unit vector pointing away from theta."""
    _check_same_dim(x, theta)
    b = busemann_gradients_frame(x.coords, theta.direction[None, :])[0]
    s = np.dot(x.coords, x.coords)
    return TangentVector(x, (1.0 - s) / 2.0 * b)


def busemann_hessian(x: HPoint, theta: BoundaryPoint) -> np.ndarray:
    """Hessian of B(., theta) in the conformal orthonormal frame at x.

    In curvature -1 this is g - dB (x) dB, so the returned matrix is
    I - b b^T with b the unit frame gradient.
    """
    _check_same_dim(x, theta)
    b = busemann_gradients_frame(x.coords, theta.direction[None, :])[0]
    return np.eye(x.dimension) - np.outer(b, b)


# ---------------------------------------------------------------------------
# exponential / logarithm / parallel transport
# ---------------------------------------------------------------------------

def _exp_chart(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    X = ball_to_hyperboloid(x)
    U = tangent_to_hyperboloid(x, v)
    t = np.sqrt(max(np.dot(U[1:], U[1:]) - U[0] * U[0], 0.0))
    if t < 1e-300:
        return x.copy()
    Y = np.cosh(t) * X + np.sinh(t) / t * U
    return hyperboloid_to_ball(Y)

def _log_chart(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    X = ball_to_hyperboloid(x)
    Y = ball_to_hyperboloid(y)
    c = X[0] * Y[0] - np.dot(X[1:], Y[1:])   # cosh of the distance
    c = max(c, 1.0)
    d = np.arccosh(c)
    if d < 1e-300:
        return np.zeros_like(x)
    W = Y - c * X
    sinh_d = np.sqrt(c * c - 1.0)
    return tangent_to_ball(X, d / sinh_d * W)

def _transport_chart(x: np.ndarray, y: np.ndarray, v: np.ndarray) -> np.ndarray:
    X = ball_to_hyperboloid(x)
    Y = ball_to_hyperboloid(y)
    V = tangent_to_hyperboloid(x, v)
    c = X[0] * Y[0] - np.dot(X[1:], Y[1:])
    yv = -Y[0] * V[0] + np.dot(Y[1:], V[1:])
    W = V + yv / (1.0 + c) * (X + Y)
    return tangent_to_ball(Y, W)


def exp_map(x: HPoint, v: TangentVector) -> HPoint:
    if v.base.dimension != x.dimension:
        raise DimensionMismatchError("tangent vector based in another dimension")
    return HPoint(_exp_chart(x.coords, v.vec))


def log_map(x: HPoint, y: HPoint) -> TangentVector:
    _check_same_dim(x, y)
    return TangentVector(x, _log_chart(x.coords, y.coords))


def parallel_transport(x: HPoint, y: HPoint, v: TangentVector) -> TangentVector:
    _check_same_dim(x, y)
    return TangentVector(y, _transport_chart(x.coords, y.coords, v.vec))


def geodesic_point(x: HPoint, y: HPoint, t: float) -> HPoint:
    """Point at parameter t on the unit-speed-free geodesic [x, y] (t in [0,1])."""
    v = log_map(x, y)
    return exp_map(x, TangentVector(x, t * v.vec))


# ---------------------------------------------------------------------------
# isometries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Isometry:
    """Element of Isom(H^k) stored as a Lorentz matrix in O(k,1).

    For k = 3 an optional unit-determinant 2x2 complex spin matrix may be
    attached; translation lengths and fixed points are then computed from
    it, which is far more accurate for parabolic elements than the
    eigenvalues of a defective 4x4 matrix.
    """

    lorentz: np.ndarray
    spin: Optional[np.ndarray] = None

    def __post_init__(self):
        g = np.asarray(self.lorentz, dtype=float)
        object.__setattr__(self, "lorentz", g)
        n = g.shape[0]
        if g.shape != (n, n) or n < 3:
            raise ValueError("Lorentz matrix must be square of size k+1 >= 3")
        J = minkowski(n)
        # relative tolerance: rounding in g^T J g scales with |g|^2
        scale = max(1.0, float(np.max(np.abs(g))) ** 2)
        if np.max(np.abs(g.T @ J @ g - J)) > LORENTZ_FORM_TOL * scale:
            raise ValueError("matrix does not preserve the Lorentz form")
        if g[0, 0] <= 0:
            raise ValueError("matrix swaps the hyperboloid sheets")
        if self.spin is not None:
            object.__setattr__(self, "spin", np.asarray(self.spin, dtype=complex))

    @property
    def dimension(self) -> int:
        return self.lorentz.shape[0] - 1

    @property
    def orientation(self) -> int:
        return 1 if np.linalg.det(self.lorentz) > 0 else -1

    @staticmethod
    def identity(k: int) -> "Isometry":
        return Isometry(np.eye(k + 1), np.eye(2, dtype=complex) if k == 3 else None)

    @staticmethod
    def _raw(lorentz: np.ndarray, spin) -> "Isometry":
        # group operations of validated isometries stay in the group
        # mathematically; skipping re-validation avoids spurious failures
        # from rounding in long products with large intermediate entries
        obj = object.__new__(Isometry)
        object.__setattr__(obj, "lorentz", lorentz)
        object.__setattr__(obj, "spin", spin)
        return obj

    def compose(self, other: "Isometry") -> "Isometry":
        if self.dimension != other.dimension:
            raise DimensionMismatchError("isometries of different dimension")
        spin = None
        if self.spin is not None and other.spin is not None:
            spin = self.spin @ other.spin
        return Isometry._raw(self.lorentz @ other.lorentz, spin)

    def __matmul__(self, other: "Isometry") -> "Isometry":
        return self.compose(other)

    def inverse(self) -> "Isometry":
        # J g^T J is the exact Lorentz inverse; cheaper and better
        # conditioned than a generic matrix inverse.
        J = minkowski(self.dimension + 1)
        spin = None
        if self.spin is not None:
            a, b, c, d = self.spin.ravel()
            spin = np.array([[d, -b], [-c, a]])  # unit determinant assumed
        return Isometry._raw(J @ self.lorentz.T @ J, spin)

    def apply(self, x: HPoint) -> HPoint:
        if x.dimension != self.dimension:
            raise DimensionMismatchError("point of wrong dimension")
        return HPoint(hyperboloid_to_ball(self.lorentz @ ball_to_hyperboloid(x.coords)))

    def apply_tangent(self, v: TangentVector) -> TangentVector:
        x = v.base.coords
        U = self.lorentz @ tangent_to_hyperboloid(x, v.vec)
        Y = self.lorentz @ ball_to_hyperboloid(x)
        return TangentVector(HPoint(hyperboloid_to_ball(Y)), tangent_to_ball(Y, U))

    def apply_boundary(self, theta: BoundaryPoint) -> BoundaryPoint:
        return boundary_action(self, theta)

    def apply_boundary_many(self, directions: np.ndarray) -> np.ndarray:
        """Boundary action on an (N, k) array of unit directions."""
        n = directions.shape[0]
        lifts = np.concatenate([np.ones((n, 1)), directions], axis=1)
        out = lifts @ self.lorentz.T
        return out[:, 1:] / out[:, :1]


def boundary_action(g: Isometry, theta: BoundaryPoint) -> BoundaryPoint:
    """Continuous extension of the ball action to the ideal sphere."""
    if theta.dimension != g.dimension:
        raise DimensionMismatchError("boundary point of wrong dimension")
    lift = np.concatenate([[1.0], theta.direction])
    image = g.lorentz @ lift
    return BoundaryPoint(image[1:] / image[0])


def random_isometry(rng: np.random.Generator, k: int,
                    translation_scale: float = 1.0,
                    rotation_scale: float = 1.0) -> Isometry:
    """Random element of Isom+(H^k) via the exponential of a so(k,1) element."""
    a = translation_scale * rng.standard_normal(k)
    omega = rotation_scale * rng.standard_normal((k, k))
    omega = (omega - omega.T) / 2.0
    A = np.zeros((k + 1, k + 1))
    A[0, 1:] = a
    A[1:, 0] = a
    A[1:, 1:] = omega
    return Isometry(expm(A))


def hyperbolic_translation(k: int, length: float, axis: int = 0) -> Isometry:
    """Translation by the given length along a coordinate axis through O."""
    g = np.eye(k + 1)
    i = axis + 1
    g[0, 0] = g[i, i] = np.cosh(length)
    g[0, i] = g[i, 0] = np.sinh(length)
    return Isometry(g)


# ---------------------------------------------------------------------------
# translation length and classification
# ---------------------------------------------------------------------------

def _fixed_boundary_candidates(g: Isometry) -> list[np.ndarray]:
    """Unit directions of likely ideal fixed points of g.

    Null vectors inside the numerical kernel of g - I are recovered from an
    SVD, which stays accurate for parabolic matrices where plain
    eigenvectors of the defective matrix do not.
    """
    n = g.dimension + 1
    out = []
    _, svals, Vt = np.linalg.svd(g.lorentz - np.eye(n))
    small = [j for j in range(n) if svals[j] < 1e-5]
    if small:
        V = Vt[small].T
        J = minkowski(n)
        gram = V.T @ J @ V
        gram = (gram + gram.T) / 2.0
        mu, W = np.linalg.eigh(gram)
        basis = V @ W
        if mu.size == 1:
            if abs(mu[0]) < 1e-8:
                out.append(basis[:, 0])
        else:
            lo, hi = mu[0], mu[-1]
            if lo <= 1e-12 and hi >= -1e-12:
                a, b = np.sqrt(max(hi, 0.0)), np.sqrt(max(-lo, 0.0))
                out.append(b * basis[:, -1] + a * basis[:, 0])
                out.append(b * basis[:, -1] - a * basis[:, 0])
    # eigenvector candidates cover the cleanly loxodromic case
    vals, vecs = np.linalg.eig(g.lorentz)
    for j in range(vals.size):
        out.append(np.real(vecs[:, j]))
    dirs = []
    for v in out:
        if np.linalg.norm(v) < 1e-12 or abs(v[0]) < 1e-12 * np.linalg.norm(v):
            continue
        d = v[1:] / v[0]
        nd = np.linalg.norm(d)
        if nd > 1e-12:
            dirs.append(d / nd)
    return dirs


def _displacement_infimum(g: Isometry, t_max: float = 20.0) -> float:
    """Approximate inf_y d(gy, y) by descending toward candidate fixed ends.

    Depth is capped near t = 20: beyond that the ball-chart rounding noise
    2 eps / (1 - |p|^2) exceeds the parabolic displacement decay and the
    computed distances are meaningless.
    """
    k = g.dimension
    best = distance(HPoint.origin(k), g.apply(HPoint.origin(k)))
    for d in _fixed_boundary_candidates(g):
        for t in np.linspace(0.5, t_max, 80):
            r = min(np.tanh(t / 2.0), 1.0 - 1e-14)
            p = HPoint(r * d)
            best = min(best, distance(p, g.apply(p)))
    return best


def translation_length(g: Isometry) -> float:
    """inf_y d(gy, y); zero for elliptic and parabolic isometries.

    With a spin matrix attached (k = 3) the exact trace formula is used.
    Otherwise the dominant Lorentz eigenvalue gives the length, with a
    displacement-descent refinement in the near-parabolic regime where
    eigenvalues of a defective matrix are unreliable.
    """
    if g.spin is not None:
        tr = complex(np.trace(g.spin)) / cmath.sqrt(complex(np.linalg.det(g.spin)))
        ell = 2.0 * abs(cmath.acosh(tr / 2.0).real)
        return ell if ell > 1e-12 else 0.0
    vals = np.linalg.eigvals(g.lorentz)
    ell = float(np.max(np.log(np.abs(vals))))
    if ell >= 1e-4:
        return ell
    # below 1e-4 the eigenvalues of a (near-)defective matrix carry
    # perturbations of order eps^(1/3); fall back to displacement descent,
    # accurate to roughly 1e-6 absolute
    refined = _displacement_infimum(g)
    return 0.0 if refined < 1e-6 else refined


def classify(g: Isometry) -> str:
    """One of 'identity', 'elliptic', 'parabolic', 'loxodromic'."""
    n = g.dimension + 1
    if np.max(np.abs(g.lorentz - np.eye(n))) < 1e-10:
        return "identity"
    if g.spin is not None:
        tr = complex(np.trace(g.spin)) / cmath.sqrt(complex(np.linalg.det(g.spin)))
        if abs(tr.imag) > 1e-10 or abs(tr.real) > 2.0 + 1e-10:
            return "loxodromic"
        return "parabolic" if abs(abs(tr.real) - 2.0) < 1e-10 else "elliptic"
    if translation_length(g) > LOXODROMIC_TOL:
        return "loxodromic"
    # eigenvalue-1 eigenspace: timelike vector inside <=> interior fixed point
    vals, vecs = np.linalg.eig(g.lorentz)
    cols = [j for j in range(n) if abs(vals[j] - 1.0) < 1e-6]
    if not cols:
        return "elliptic"
    V = np.real(vecs[:, cols])
    gram = V.T @ minkowski(n) @ V
    gram = (gram + gram.T) / 2.0
    if np.min(np.linalg.eigvalsh(gram)) < -1e-8:
        return "elliptic"
    return "parabolic"


def loxodromic_fixed_points(g: Isometry) -> tuple[BoundaryPoint, BoundaryPoint]:
    """(attracting, repelling) ideal fixed points of a loxodromic isometry."""
    if g.spin is not None:
        att, rep = _spin_fixed_points(g.spin)
        return sphere_from_complex(att), sphere_from_complex(rep)
    vals, vecs = np.linalg.eig(g.lorentz)
    order = np.argsort(np.abs(vals))
    out = []
    for j in (order[-1], order[0]):
        v = np.real(vecs[:, j])
        v = v / v[0]
        d = v[1:]
        out.append(BoundaryPoint(d / np.linalg.norm(d)))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# spin (2x2 complex) utilities for k = 3
# ---------------------------------------------------------------------------

_PAULI = [
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
]


def psl2_to_lorentz(A: np.ndarray) -> Isometry:
    """Orientation-preserving isometry of H^3 from a 2x2 complex matrix.

    The matrix acts on Hermitian forms X -> A X A*; in the Pauli basis this
    is a Lorentz matrix on R^(3,1).  A is normalized to unit determinant.
    """
    A = np.asarray(A, dtype=complex)
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    A = A / cmath.sqrt(det)
    L = np.empty((4, 4))
    for mu in range(4):
        for nu in range(4):
            L[mu, nu] = 0.5 * np.real(
                np.trace(_PAULI[mu] @ A @ _PAULI[nu] @ A.conj().T))
    return Isometry(L, A)


def sphere_from_complex(z: complex) -> BoundaryPoint:
    """Ideal point of H^3 from the Riemann-sphere coordinate (inf allowed)."""
    if z == cmath.inf or (isinstance(z, complex) and not cmath.isfinite(z)):
        return BoundaryPoint(np.array([0.0, 0.0, 1.0]))
    r2 = z.real * z.real + z.imag * z.imag
    return BoundaryPoint(np.array([
        2.0 * z.real / (r2 + 1.0),
        -2.0 * z.imag / (r2 + 1.0),
        (r2 - 1.0) / (r2 + 1.0),
    ]))


def complex_from_sphere(theta: BoundaryPoint) -> complex:
    d = theta.direction
    if abs(1.0 - d[2]) < 1e-15:
        return cmath.inf
    return complex(d[0], -d[1]) / (1.0 - d[2])


def mobius_apply(A: np.ndarray, z: complex) -> complex:
    """Apply a 2x2 complex matrix as a Mobius map of C u {inf}."""
    a, b, c, d = A.ravel()
    if z == cmath.inf or not cmath.isfinite(z):
        return a / c if c != 0 else cmath.inf
    num = a * z + b
    den = c * z + d
    if den == 0:
        return cmath.inf
    return num / den


def _spin_fixed_points(A: np.ndarray) -> tuple[complex, complex]:
    """(attracting, repelling) fixed points on C u {inf} of a loxodromic."""
    A = np.asarray(A, dtype=complex)
    A = A / cmath.sqrt(complex(np.linalg.det(A)))
    vals, vecs = np.linalg.eig(A)
    order = np.argsort(np.abs(vals))
    pts = []
    for j in (order[-1], order[0]):
        v = vecs[:, j]
        pts.append(v[0] / v[1] if abs(v[1]) > 1e-14 * abs(v[0]) else cmath.inf)
    return pts[0], pts[1]
