"""Barycenters of boundary measures.

The functional phi(y) = integral of B(y, .) is strictly convex on H^k for
measures that are not two equal Dirac masses, grows to infinity toward the
ideal boundary when no atom carries mass >= 1/2, and its unique minimizer
is the barycenter.  A measure with a dominant atom (mass >= 1/2) instead
has barycenter at that atom on the ideal sphere.

The solver is a Riemannian Newton iteration with Armijo backtracking in the
conformal orthonormal frame, falling back to plain gradient steps when the
Hessian I - H(y) is nearly singular (collinear support).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    BoundaryPoint,
    HPoint,
    TangentVector,
    _exp_chart,
    busemann_gradients_frame,
    busemann_many,
)
from .measures import BoundaryMeasure, max_atom_mass

HALF_ATOM_TOL = 1e-12


class TwoEqualAtomsError(ValueError):
    """The measure is two Dirac masses of weight 1/2: no barycenter exists."""


class NoConvergenceError(RuntimeError):
    """Solver hit the iteration cap; carries the best iterate found."""

    def __init__(self, message, best: HPoint, gradient_norm: float, iterations: int):
        super().__init__(message)
        self.best = best
        self.gradient_norm = gradient_norm
        self.iterations = iterations


@dataclass(frozen=True)
class SolverConfig:
    gradient_tol: float = 1e-10
    max_iterations: int = 200
    armijo_contraction: float = 0.5
    armijo_slope: float = 1e-4
    hessian_floor: float = 1e-8


@dataclass(frozen=True)
class BarycenterResult:
    location: HPoint | BoundaryPoint
    kind: str                      # 'interior' or 'boundary-atom'
    gradient_norm: float
    iterations: int
    degenerate_support: bool = False

    @property
    def point(self) -> HPoint:
        if self.kind != "interior":
            raise ValueError("boundary-atom result has no interior point")
        return self.location


# ---------------------------------------------------------------------------
# the convex functional and its derivatives
# ---------------------------------------------------------------------------

def phi(beta: BoundaryMeasure, y: HPoint) -> float:
    """phi(y): weighted Busemann average, convex along geodesics."""
    return float(np.dot(beta.weights, busemann_many(y.coords, beta.points)))


def _phi_chart(beta: BoundaryMeasure, y: np.ndarray) -> float:
    return float(np.dot(beta.weights, busemann_many(y, beta.points)))


def _grad_frame(beta: BoundaryMeasure, y: np.ndarray) -> np.ndarray:
    b = busemann_gradients_frame(y, beta.points)
    return beta.weights @ b


def _hess_frame(beta: BoundaryMeasure, y: np.ndarray) -> np.ndarray:
    b = busemann_gradients_frame(y, beta.points)
    H = np.einsum("i,ij,il->jl", beta.weights, b, b)
    return np.eye(y.size) - H


def phi_gradient(beta: BoundaryMeasure, y: HPoint) -> TangentVector:
    """Riemannian gradient of phi at y (integral of the Busemann gradients)."""
    g = _grad_frame(beta, y.coords)
    s = float(np.dot(y.coords, y.coords))
    return TangentVector(y, (1.0 - s) / 2.0 * g)


def phi_hessian(beta: BoundaryMeasure, y: HPoint) -> np.ndarray:
    """Hessian of phi at y in the conformal orthonormal frame: I - H(y)."""
    return _hess_frame(beta, y.coords)


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

def _initial_guess(beta: BoundaryMeasure) -> np.ndarray:
    # Euclidean centroid of the support directions, pulled to half radius;
    # by convexity the starting point only affects the iteration count.
    c = beta.weights @ beta.points
    return 0.5 * c


def barycenter(beta: BoundaryMeasure,
               cfg: SolverConfig | None = None,
               initial: HPoint | None = None) -> BarycenterResult:
    """Barycenter of a boundary probability measure.

    Raises TwoEqualAtomsError for the excluded two-equal-Diracs case and
    NoConvergenceError if the iteration cap is reached.  A dominant atom
    (mass >= 1/2 after clustering) short-circuits to a boundary result.
    """
    cfg = cfg or SolverConfig()
    mass, loc = max_atom_mass(beta)
    if mass >= 0.5 - HALF_ATOM_TOL:
        if abs(mass - 0.5) <= HALF_ATOM_TOL and _is_two_equal_clusters(beta):
            raise TwoEqualAtomsError(
                "measure is two Dirac masses of equal weight 1/2")
        return BarycenterResult(loc, "boundary-atom", float("inf"), 0)

    y = initial.coords.copy() if initial is not None else _initial_guess(beta)
    degenerate = False
    val = _phi_chart(beta, y)
    for it in range(1, cfg.max_iterations + 1):
        g = _grad_frame(beta, y)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= cfg.gradient_tol:
            return BarycenterResult(HPoint(y), "interior", gnorm, it - 1,
                                    degenerate_support=degenerate)
        Hf = _hess_frame(beta, y)
        eigmin = float(np.linalg.eigvalsh(Hf)[0])
        newton_ok = eigmin >= cfg.hessian_floor
        if newton_ok:
            step_frame = -np.linalg.solve(Hf, g)
        else:
            step_frame = -g           # gradient fallback near collinear support
            degenerate = True
        s = float(np.dot(y, y))
        chart_step = (1.0 - s) / 2.0 * step_frame
        if newton_ok and gnorm < 1e-6:
            # quadratic-convergence regime: phi decreases by less than float
            # resolution, so backtracking is blind; take the full step
            y = _exp_chart(y, chart_step)
            val = _phi_chart(beta, y)
            continue
        # Armijo backtracking along the geodesic through the step
        slope = float(np.dot(g, step_frame))
        if slope >= 0.0:              # numerical safeguard
            step_frame = -g
            slope = -float(np.dot(g, g))
            chart_step = (1.0 - s) / 2.0 * step_frame
        t = 1.0
        while t > 1e-16:
            cand = _exp_chart(y, t * chart_step)
            cand_val = _phi_chart(beta, cand)
            if cand_val <= val + cfg.armijo_slope * t * slope:
                break
            t *= cfg.armijo_contraction
        y = _exp_chart(y, t * chart_step)
        val = _phi_chart(beta, y)

    g = _grad_frame(beta, y)
    raise NoConvergenceError(
        f"no convergence in {cfg.max_iterations} iterations "
        f"(gradient norm {np.linalg.norm(g):.3e})",
        HPoint(y), float(np.linalg.norm(g)), cfg.max_iterations)


def _is_two_equal_clusters(beta: BoundaryMeasure) -> bool:
    mass1, loc1 = max_atom_mass(beta)
    if loc1 is None or abs(mass1 - 0.5) > HALF_ATOM_TOL:
        return False
    # remove the top cluster and look at what is left
    keep = (beta.points @ loc1.direction) < np.cos(1e-9) - 0.0
    w = beta.weights[keep]
    if w.size == 0:
        return False
    rest = BoundaryMeasure(w / w.sum(), beta.points[keep],
                           np.empty(0), np.empty((0, beta.dimension)))
    mass2, _ = max_atom_mass(rest)
    return mass2 >= 1.0 - 1e-9      # the remainder is a single Dirac cluster


# ---------------------------------------------------------------------------
# independent coarse-to-fine grid minimizer (reference method)
# ---------------------------------------------------------------------------

def _coercivity_radius(beta: BoundaryMeasure, floor: float = 3.0) -> float:
    """A-priori bound on the distance of the minimizer from the origin.

    Uses B(y, theta) >= max(-r, r - 2 log 2 + 2 log sin(angle)) at radius r
    toward a fixed direction: phi(minimizer) <= phi(O) = 0, so the largest
    radius where the resulting lower bound of phi can still be nonpositive
    in some direction bounds the minimizer.  Solver independent.
    """
    dirs = beta.points.copy()
    rng_dirs = np.random.default_rng(12345).standard_normal((256, beta.dimension))
    dirs = np.concatenate([dirs, rng_dirs / np.linalg.norm(rng_dirs, axis=1,
                                                           keepdims=True)])
    cosang = np.clip(dirs @ beta.points.T, -1.0, 1.0)
    log_sin = np.log(np.maximum(np.sqrt(1.0 - cosang ** 2), 1e-300))
    w = beta.weights
    r = floor
    while r < 60.0:
        lower = w @ np.maximum(-r, r - 2.0 * np.log(2.0) + 2.0 * log_sin).T
        if np.min(lower) > 0.0:
            return r + 0.5
        r += 0.5
    return r


def grid_minimize_phi(beta: BoundaryMeasure,
                      radius: float | None = None,
                      final_step: float = 1e-4,
                      initial_step: float = 0.25) -> HPoint:
    """Minimize phi by multiscale grid search inside a hyperbolic ball.

    Independent of the Newton path: only evaluates phi on ball-chart grids,
    halving the spacing around the incumbent.  Convexity of phi guarantees
    the coarse-to-fine refinement cannot be trapped away from the minimum.
    The default ball radius is 3 enlarged by an a-priori coercivity bound
    when the measure is lopsided enough to push the minimizer deeper.
    """
    k = beta.dimension
    if radius is None:
        radius = _coercivity_radius(beta)
    r_ball = np.tanh(radius / 2.0)          # chart radius of the search ball
    step = initial_step * r_ball
    offsets = np.array(np.meshgrid(*([[-1.0, 0.0, 1.0]] * k))).reshape(k, -1).T
    offsets = offsets[np.any(offsets != 0.0, axis=1)]
    best = np.zeros(k)
    best_val = _phi_chart(beta, best)
    # pattern search: walk the grid at each scale until no neighbor improves,
    # then halve the spacing; chart step h corresponds to hyperbolic scale
    # 2h/(1-r^2) at radius r, hence the stopping rescale
    while step > final_step * (1.0 - r_ball * r_ball) / 2.0:
        moved = True
        while moved:
            moved = False
            grid = offsets * step + best
            grid = grid[np.linalg.norm(grid, axis=1) < r_ball]
            for cand in grid:
                v = _phi_chart(beta, cand)
                if v < best_val:
                    best_val, best, moved = v, cand, True
        step *= 0.5
    return HPoint(best)


# ---------------------------------------------------------------------------
# weak-* continuity diagnostic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeakStarReport:
    deviations: list
    max_tail_deviation: float
    limit_kind: str


def _result_deviation(a: BarycenterResult, b: BarycenterResult) -> float:
    if a.kind != b.kind:
        return float("inf")
    if a.kind == "interior":
        from .geometry import distance
        return distance(a.location, b.location)
    u = a.location.direction
    v = b.location.direction
    return float(np.arccos(np.clip(np.dot(u, v), -1.0, 1.0)))


def weak_star_continuity_check(measures: list,
                               limit: BoundaryMeasure | None = None,
                               cfg: SolverConfig | None = None,
                               tail_fraction: float = 0.25) -> WeakStarReport:
    """Deviation of barycenter(beta_n) from the limit barycenter.

    With no limit measure (or a limit in the excluded two-equal-atoms
    class) deviations are taken against the final iterate, which checks
    convergence of the sequence itself.  The reported maximum runs over the
    trailing ``tail_fraction`` of the sequence.
    """
    results = [barycenter(b, cfg) for b in measures]
    if limit is not None:
        try:
            target = barycenter(limit, cfg)
        except TwoEqualAtomsError:
            target = results[-1]
    else:
        target = results[-1]
    devs = [_result_deviation(r, target) for r in results]
    tail = max(1, int(np.ceil(tail_fraction * len(devs))))
    return WeakStarReport(devs, float(max(devs[-tail:])), target.kind)
