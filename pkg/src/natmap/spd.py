"""Trace-one symmetric positive definite matrices and the ratio
psi(H) = det(H) / det(I - H)^2.

psi is conjugation invariant, so it factors through the (sorted) eigenvalue
simplex, where it reads Psi(a) = prod a_i / (1 - a_i)^2.  On k x k matrices
with k >= 3 it is bounded by (k/(k-1)^2)^k, attained exactly at H = I/k;
for k = 2 it is unbounded.  This module certifies those facts numerically:
random-sample bounds, scans of the simplex boundary collar, and a
quantitative converse locating the high-level sets of psi near I/k.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

SYM_TOL = 1e-12
TRACE_TOL = 1e-12


@dataclass(frozen=True)
class TraceOneSPD:
    """Symmetric positive definite matrix with unit trace."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("need a square matrix")
        if np.max(np.abs(m - m.T)) > SYM_TOL:
            raise ValueError("matrix is not symmetric")
        if abs(np.trace(m) - 1.0) > TRACE_TOL:
            raise ValueError("trace must equal 1")
        if np.min(np.linalg.eigvalsh(m)) <= 0.0:
            raise ValueError("matrix must be positive definite")

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @staticmethod
    def isotropic(k: int) -> "TraceOneSPD":
        return TraceOneSPD(np.eye(k) / k)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


@dataclass(frozen=True)
class SimplexPoint:
    """Interior point of the standard simplex: positive coordinates, sum 1."""

    coordinates: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coordinates, dtype=float)
        object.__setattr__(self, "coordinates", c)
        if np.min(c) <= 0.0:
            raise ValueError("simplex coordinates must be positive")
        if abs(c.sum() - 1.0) > TRACE_TOL:
            raise ValueError("simplex coordinates must sum to 1")


def psi_max(k: int) -> float:
    """Supremum (k/(k-1)^2)^k of psi on trace-one SPD matrices, k >= 3."""
    return (k / (k - 1) ** 2) ** k


def psi(H) -> float | np.ndarray:
    """det(H) / det(I - H)^2 for a TraceOneSPD or a (..., k, k) array."""
    m = H.matrix if isinstance(H, TraceOneSPD) else np.asarray(H, dtype=float)
    k = m.shape[-1]
    val = np.linalg.det(m) / np.linalg.det(np.eye(k) - m) ** 2
    return float(val) if np.ndim(val) == 0 else val


def psi_simplex(a) -> float | np.ndarray:
    """psi read on the eigenvalue simplex: prod a_i / (1 - a_i)^2."""
    c = a.coordinates if isinstance(a, SimplexPoint) else np.asarray(a, dtype=float)
    val = np.prod(c / (1.0 - c) ** 2, axis=-1)
    return float(val) if np.ndim(val) == 0 else val


def random_trace_one_spd(rng: np.random.Generator, k: int, size: int,
                         concentration: float = 1.0) -> np.ndarray:
    """(size, k, k) random trace-one SPD matrices.

    Eigenvalues from a symmetric Dirichlet (covers the whole simplex,
    boundary included for small concentration), conjugated by Q from the QR
    factorization of a Gaussian matrix.
    """
    eigs = rng.dirichlet(np.full(k, concentration), size=size)
    g = rng.standard_normal((size, k, k))
    q, r = np.linalg.qr(g)
    # fix the sign convention so Q is Haar distributed
    q = q * np.sign(np.einsum("...ii->...i", r))[:, None, :]
    return np.einsum("sij,sj,skj->sik", q, eigs, q)


# ---------------------------------------------------------------------------
# boundary collar scan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScanReport:
    k: int
    margin: float
    samples: int
    max_value: float
    argmax: list
    threshold: float
    passed: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def collar_supremum(margin: float) -> float:
    """Exact supremum of Psi over the k = 3 collar {min a_i < margin}.

    Attained at (y, y, 1-2y) with y -> margin, where
    Psi = (1-2y) / (4 (1-y)^4) = 1/4 + y/2 + O(y^2).
    """
    y = margin
    return (1.0 - 2.0 * y) / (4.0 * (1.0 - y) ** 4)


def _collar_samples_k3(rng: np.random.Generator, margin: float, n: int) -> np.ndarray:
    """Points of the margin collar of the 2-simplex, corners included.

    Mix of uniform simplex points rejected into the collar, edge strips and
    deterministic near-vertex probes (y, y, 1-2y), so the scan genuinely
    sees the supremum region.
    """
    out = []
    # rejection from the uniform measure
    target = n // 2
    while sum(len(b) for b in out) < target:
        cand = rng.dirichlet(np.ones(3), size=4 * n)
        keep = (cand.min(axis=1) < margin) | (1.0 - cand.max(axis=1) < margin)
        out.append(cand[keep])
    # edge strips: one coordinate pushed below margin
    m = n // 4
    t = margin * rng.random(m)
    split = rng.random(m)
    strips = np.column_stack([t, (1 - t) * split, (1 - t) * (1 - split)])
    out.append(strips[np.arange(m)[:, None], rng.permuted(np.tile(np.arange(3), (m, 1)), axis=1)])
    # deterministic corner probes along the worst-case family
    y = margin * (1.0 - np.geomspace(1e-6, 1.0, n - target - m, endpoint=False))
    out.append(np.column_stack([y, y, 1.0 - 2.0 * y]))
    pts = np.concatenate(out)[:n]
    return pts


def boundary_bound_scan(k: int, margin: float, samples: int,
                        seed: int = 0) -> ScanReport:
    """Scan psi on the collar of the simplex boundary.

    k = 3: asserts the max against the exact collar supremum (1/4 up to an
    O(margin) correction).  k >= 4: samples near the zero vertex with
    coordinate sum s below k * margin and asserts the vanishing envelope
    s^(k-3) / (k-1)^(k-1) within the factor (1 - s)^(3 - 2k) that bounds
    the neglected (1 - a_i) denominators.
    """
    if k < 3:
        raise ValueError("boundary scan needs k >= 3")
    rng = np.random.default_rng(seed)
    if k == 3:
        pts = _collar_samples_k3(rng, margin, samples)
        vals = psi_simplex(pts)
        top = int(np.argmax(vals))
        threshold = collar_supremum(margin) + 1e-12
        return ScanReport(3, margin, samples, float(vals[top]),
                          [float(c) for c in pts[top]], threshold,
                          bool(vals[top] <= threshold))
    # near-vertex samples: first k-1 coordinates tiny, last carries the rest
    s = k * margin * rng.random(samples)
    frac = rng.dirichlet(np.ones(k - 1), size=samples)
    small = s[:, None] * frac
    pts = np.column_stack([small, 1.0 - s])
    vals = psi_simplex(pts)
    envelope = s ** (k - 3) / (k - 1) ** (k - 1)
    ratio = vals / envelope
    top = int(np.argmax(ratio))
    threshold = (1.0 - k * margin) ** (3 - 2 * k) + 1e-12
    return ScanReport(k, margin, samples, float(ratio[top]),
                      [float(c) for c in pts[top]], threshold,
                      bool(ratio[top] <= threshold))


def edge_limit_values(alpha: float, k: int = 3,
                      distances=(1e-4, 1e-5, 1e-6, 1e-7, 1e-8)) -> tuple[np.ndarray, float]:
    """Psi along an approach to the non-vertex boundary point (alpha, 0, 1-alpha).

    Returns the sampled values and the Richardson-extrapolated limit
    (Psi vanishes linearly in the approach distance).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must avoid the vertices")
    d = np.asarray(distances, dtype=float)
    pts = np.column_stack([np.full(d.size, alpha) - d / 2, d, 1.0 - alpha - d / 2])
    vals = psi_simplex(pts)
    # linear model vals = L + c d  ->  extrapolated limit
    limit = vals[-1] - d[-1] * (vals[-2] - vals[-1]) / (d[-2] - d[-1])
    return vals, float(limit)


# ---------------------------------------------------------------------------
# quantitative converse of the maximum
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConverseReport:
    k: int
    eps: float
    trials: int
    delta_max_sampled: float
    delta_max_grid: float
    grid_step: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


# absolute slack for the float evaluation of psi at its maximum
_PSI_FLOAT_SLOP = 5e-16


def quantitative_converse(k: int, eps: float, trials: int,
                          seed: int = 0, grid_step: float = 1e-3) -> ConverseReport:
    """Largest distance from I/k on the level set psi >= max (1 - eps).

    Rejection-samples near I/k (heavy-tailed local perturbations) plus a
    global Dirichlet scatter pass, and certifies with an exhaustive
    eigenvalue-simplex grid: psi and the Frobenius distance to I/k only
    depend on eigenvalues, so the grid bounds the level set for all
    matrices, not just the sampled ones.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    rng = np.random.default_rng(seed)
    level = psi_max(k) * (1.0 - eps) - _PSI_FLOAT_SLOP
    delta = 0.0
    batch = min(trials, 200_000)
    done = 0
    while done < trials:
        m = min(batch, trials - done)
        half = m // 2
        # local heavy-tailed perturbations of the uniform eigenvalue vector
        scale = 10.0 ** rng.uniform(-8, 0, size=half)
        raw = np.full((half, k), 1.0 / k) + scale[:, None] * rng.standard_normal((half, k))
        raw = np.abs(raw)
        local = raw / raw.sum(axis=1, keepdims=True)
        # global scatter probing regions far from I/k
        scatter = rng.dirichlet(np.ones(k), size=m - half)
        eigs = np.concatenate([local, scatter])
        vals = psi_simplex(eigs)
        ok = vals >= level
        if np.any(ok):
            dist = np.linalg.norm(eigs[ok] - 1.0 / k, axis=1)
            delta = max(delta, float(dist.max()))
        done += m
    grid_delta = _grid_levelset_radius(k, level, grid_step) if k == 3 else float("nan")
    return ConverseReport(k, eps, trials, delta, grid_delta, grid_step)


def _grid_levelset_radius(k: int, level: float, step: float) -> float:
    """Exhaustive eigenvalue-grid bound on {psi >= level} for k = 3."""
    n = int(round(1.0 / step))
    i = np.arange(1, n)
    a, b = np.meshgrid(i, i, indexing="ij")
    keep = (a + b) < n
    a = a[keep] * step
    b = b[keep] * step
    c = 1.0 - a - b
    vals = (a * b * c) / ((1.0 - a) * (1.0 - b) * (1.0 - c)) ** 2
    ok = vals >= level
    if not np.any(ok):
        return 0.0
    pts = np.column_stack([a[ok], b[ok], c[ok]])
    return float(np.linalg.norm(pts - 1.0 / 3.0, axis=1).max())
