"""Independent reference computations used to freeze expected test values.

Everything here deliberately avoids the code paths it checks: series with
explicit tail bounds, brute-force quadrature, finite differences, closed
gamma-function formulas.
"""

import numpy as np
from math import gamma


def lobachevsky(theta: float, n_terms: int = 200000) -> float:
    """Sum of sin(2 n theta) / (2 n^2) with a summed-by-parts tail.

    Abel summation with the closed form of the sine partial sums; the tail
    window runs to 2e6 terms, leaving a remainder below
    1/(2 (2e6)^2 sin theta), under 2e-13 away from multiples of pi.
    """
    n = np.arange(1, n_terms + 1)
    head = float(np.sum(np.sin(2 * n * theta) / (2.0 * n ** 2)))

    def b(m):
        return 1.0 / (2.0 * m ** 2)

    def partial_sine(m):
        # sum_{j=N+1}^{m} sin(2 j theta)
        return ((np.cos((2 * n_terms + 1) * theta)
                 - np.cos((2 * m + 1) * theta)) / (2.0 * np.sin(theta)))

    m = np.arange(n_terms + 1, 2_000_001)
    tail = float(np.sum((b(m) - b(m + 1)) * partial_sine(m)))
    return head + tail


def radial_length_numeric(r: float, n: int = 4000) -> float:
    """Ball-metric length of the straight segment from the origin to radius r."""
    # Gauss-Legendre on [0, r] of the conformal factor 2/(1-t^2)
    x, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * r * (x + 1.0)
    return float(np.sum(w * 0.5 * r * 2.0 / (1.0 - t * t)))


def busemann_limit_value(x: np.ndarray, direction: np.ndarray, t: float) -> float:
    """d(x, c(t)) - t for the unit-speed ray c toward the ideal point."""
    c = np.tanh(t / 2.0) * direction
    q = np.dot(x - c, x - c) / ((1.0 - np.dot(x, x)) * (1.0 - np.dot(c, c)))
    return 2.0 * float(np.arcsinh(np.sqrt(q))) - t


def sphere_monomial_expectation(k: int, exponents) -> float:
    """E[prod x_i^(2 a_i)] over the normalized round measure on S^(k-1)."""
    a = list(exponents)
    total = sum(a)
    val = gamma(k / 2.0) / gamma(k / 2.0 + total)
    for ai in a:
        val *= gamma(ai + 0.5) / gamma(0.5)
    return val


def monte_carlo_density_mass(x: np.ndarray, n: int, seed: int = 0) -> float:
    """Monte Carlo estimate of the visual-density normalization at x."""
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n, x.size))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    diff = x[None, :] - pts
    b = np.log(np.einsum("ij,ij->i", diff, diff) / (1.0 - np.dot(x, x)))
    return float(np.mean(np.exp(-(x.size - 1) * b)))


def ring_measure(weights, directions, cap: float, n_ring: int = 16):
    """Atomic mollification: each atom spread over a symmetric ring of
    angular radius ``cap``.  Deterministic, so the mean shift is pure
    curvature of order cap^2."""
    from natmap.measures import atomic_measure
    all_w, all_p = [], []
    for w, d in zip(weights, directions):
        d = np.asarray(d, dtype=float)
        d = d / np.linalg.norm(d)
        helper = np.eye(3)[int(np.argmin(np.abs(d)))]
        u = np.cross(d, helper)
        u /= np.linalg.norm(u)
        v = np.cross(d, u)
        ang = 2.0 * np.pi * np.arange(n_ring) / n_ring
        pts = (np.cos(cap) * d[None, :]
               + np.sin(cap) * (np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * v))
        all_p.append(pts)
        all_w.append(np.full(n_ring, w / n_ring))
    return atomic_measure(np.concatenate(all_w), np.concatenate(all_p))
