"""Ideal triangulations, gluing equations, dilogarithm volume, holonomy.

Shapes live on tetrahedra with ideal vertices; the edge parameter at edge
(v0, v1) is the cross ratio z of the developed vertex quadruple, and the
remaining edge pairs carry 1/(1-z) and 1-1/z.  Edge classes of the
triangulation impose product-of-slots = 1 (log sum = 2 pi i) and a cusp
row measures the similarity derivative of a peripheral curve.

The figure-eight knot complement (two tetrahedra, one cusp) ships as the
built-in instance; its face pairings are validated by the test suite
(edge-class structure, complete solution, holonomy relator, volume).
"""

from __future__ import annotations

import cmath
import json
from dataclasses import dataclass

import numpy as np

from .geometry import psl2_to_lorentz
from .natural_map import Representation

TWO_PI_I = 2j * np.pi


class DevelopingFailureError(RuntimeError):
    """Shapes are too degenerate to develop the triangulation."""


class ContinuationStallError(RuntimeError):
    """The path-following corrector failed even after step halving."""


# ---------------------------------------------------------------------------
# Bloch-Wigner dilogarithm
# ---------------------------------------------------------------------------

# Bernoulli numbers B_0 .. B_34 (odd ones beyond B_1 vanish)
_BERNOULLI = np.zeros(35)
_BERNOULLI[[0, 1]] = [1.0, -0.5]
_BERNOULLI[2:35:2] = [
    1.0 / 6, -1.0 / 30, 1.0 / 42, -1.0 / 30, 5.0 / 66, -691.0 / 2730,
    7.0 / 6, -3617.0 / 510, 43867.0 / 798, -174611.0 / 330, 854513.0 / 138,
    -236364091.0 / 2730, 8553103.0 / 6, -23749461029.0 / 870,
    8615841276005.0 / 14322, -7709321041217.0 / 510, 2577687858367.0 / 6,
]


def _li2_bernoulli(z: np.ndarray) -> np.ndarray:
    """Li2 via the Debye series in u = -log(1-z).

    Converges like (|u| / 2 pi)^n; after the standard reductions |u| stays
    below 1.9, so 34 terms reach full double precision, including on the
    unit circle where the raw power series is useless.
    """
    u = -np.log(1.0 - z)
    out = np.zeros_like(z)
    term = np.ones_like(z)           # u^k / k! running term, k = 0
    for k in range(0, 35):
        term_next = term * u / (k + 1)
        if _BERNOULLI[k] != 0.0:
            out = out + _BERNOULLI[k] * term_next
        term = term_next
    return out


def dilog(z) -> complex | np.ndarray:
    """Complex dilogarithm Li2 with principal branches."""
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z).copy()

    # inversion |z| > 1: Li2(z) = -Li2(1/z) - pi^2/6 - log(-z)^2 / 2
    inv = np.abs(z) > 1.0
    pref = np.zeros_like(z)
    sign = np.ones(z.shape)
    w = z.copy()
    if np.any(inv):
        pref[inv] = -np.pi ** 2 / 6.0 - 0.5 * np.log(-z[inv]) ** 2
        sign[inv] = -1.0
        w[inv] = 1.0 / z[inv]
    # reflection Re w > 1/2: Li2(w) = pi^2/6 - log(w) log(1-w) - Li2(1-w)
    refl = np.real(w) > 0.5
    if np.any(refl):
        lw = np.log(w[refl]) * np.log(1.0 - w[refl])
        pref[refl] = pref[refl] + sign[refl] * (np.pi ** 2 / 6.0 - lw)
        sign[refl] = -sign[refl]
        w[refl] = 1.0 - w[refl]
    out = pref + sign * _li2_bernoulli(w)
    return complex(out[0]) if scalar else out


def bloch_wigner(z) -> float | np.ndarray:
    """D(z) = Im Li2(z) + arg(1-z) log|z}: volume of the ideal tetrahedron
    with cross ratio z.  Real z (flat tetrahedra) return exactly 0."""
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    if np.any((z == 0) | (z == 1)):
        raise ValueError("dilogarithm pole at z in {0, 1}")
    val = np.imag(dilog(z)) + np.angle(1.0 - z) * np.log(np.abs(z))
    val[np.imag(z) == 0.0] = 0.0
    return float(val[0]) if scalar else val


# ---------------------------------------------------------------------------
# triangulation combinatorics
# ---------------------------------------------------------------------------

# edge pair -> which cyclic variant of the tetrahedron parameter it carries;
# derived from the cross-ratio convention cr(a,b,c,d) = (d-a)(c-b)/((c-a)(d-b))
# on the normalized tetrahedron (0, inf, 1, z)
_SLOT_OF_PAIR = {
    frozenset({0, 1}): 0, frozenset({2, 3}): 0,   # z
    frozenset({0, 3}): 1, frozenset({1, 2}): 1,   # 1/(1-z)
    frozenset({0, 2}): 2, frozenset({1, 3}): 2,   # 1 - 1/z
}


def slot_values(z: complex) -> tuple[complex, complex, complex]:
    return z, 1.0 / (1.0 - z), 1.0 - 1.0 / z


def slot_logs(z: complex) -> tuple[complex, complex, complex]:
    a, b, c = slot_values(z)
    return cmath.log(a), cmath.log(b), cmath.log(c)


@dataclass(frozen=True)
class IdealTriangulation:
    """Tetrahedra glued along faces.

    ``gluings`` maps (tet, face) to (tet', face', perm) where face indices
    name the opposite vertex and perm is the full vertex correspondence
    (perm[i] = image vertex).  Cusp rows are integer slot-log exponent
    vectors (one triple per tetrahedron) whose combination vanishes exactly
    at complete solutions.
    """

    num_tetrahedra: int
    gluings: dict
    cusp_rows: tuple = ()
    name: str = ""

    def __post_init__(self):
        for (t, f), (t2, f2, perm) in self.gluings.items():
            back = self.gluings.get((t2, f2))
            if back is None or back[0] != t or back[1] != f:
                raise ValueError("gluings are not involutive")
            inv = tuple(perm.index(i) for i in range(4))
            if tuple(back[2]) != inv:
                raise ValueError("gluing permutations are not inverse to each other")
            if perm[f] != f2:
                raise ValueError("gluing must send the face vertex to the far vertex")

    @property
    def edge_classes(self) -> list[list[tuple[int, int, int]]]:
        """Edge orbits as lists of (tet, vertex_i, vertex_j) incidences."""
        return _edge_classes(self)

    def edge_exponents(self) -> np.ndarray:
        """(n_edges, n_tets, 3) slot exponent array of the edge equations."""
        classes = self.edge_classes
        out = np.zeros((len(classes), self.num_tetrahedra, 3), dtype=int)
        for e, cls in enumerate(classes):
            for (t, i, j) in cls:
                out[e, t, _SLOT_OF_PAIR[frozenset({i, j})]] += 1
        return out

    def validate(self) -> None:
        """Euler-count sanity for a one-cusped triangulation: edges = tets."""
        if len(self.edge_classes) != self.num_tetrahedra:
            raise ValueError("edge count does not match a one-cusped triangulation")

    def to_json(self) -> str:
        return json.dumps({
            "num_tetrahedra": self.num_tetrahedra,
            "gluings": [[list(k), [v[0], v[1], list(v[2])]]
                        for k, v in sorted(self.gluings.items())],
            "cusp_rows": [[list(map(int, row.ravel()))] for row in
                          (np.asarray(r) for r in self.cusp_rows)],
            "name": self.name,
        })

    @staticmethod
    def from_json(text: str) -> "IdealTriangulation":
        data = json.loads(text)
        gl = {tuple(k): (v[0], v[1], tuple(v[2])) for k, v in data["gluings"]}
        rows = tuple(np.asarray(r, dtype=int).reshape(-1, 3) for (r,) in data["cusp_rows"])
        return IdealTriangulation(data["num_tetrahedra"], gl, rows, data.get("name", ""))


def _edge_classes(tri: IdealTriangulation) -> list[list[tuple[int, int, int]]]:
    edges = [(t, i, j) for t in range(tri.num_tetrahedra)
             for i in range(4) for j in range(i + 1, 4)]
    index = {e: n for n, e in enumerate(edges)}
    parent = list(range(len(edges)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    for (t, f), (t2, _, perm) in tri.gluings.items():
        verts = [v for v in range(4) if v != f]
        for a in range(3):
            for b in range(a + 1, 3):
                i, j = verts[a], verts[b]
                p, q = sorted((perm[i], perm[j]))
                union(index[(t, min(i, j), max(i, j))], index[(t2, p, q)])
    groups: dict[int, list] = {}
    for e in edges:
        groups.setdefault(find(index[e]), []).append(e)
    return sorted(groups.values(), key=lambda g: (len(g), g))


# ---------------------------------------------------------------------------
# gluing and cusp residuals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShapeVector:
    """Tetrahedron shape parameters; geometric solutions have Im z > 0."""

    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=complex)
        object.__setattr__(self, "z", z)
        if np.any(z == 0) or np.any(z == 1):
            raise ValueError("shape parameter at a pole")

    @property
    def is_geometric(self) -> bool:
        return bool(np.all(np.imag(self.z) > 0.0))


def _shape_array(shapes) -> np.ndarray:
    if isinstance(shapes, ShapeVector):
        return shapes.z
    return np.asarray(shapes, dtype=complex)


@dataclass(frozen=True)
class ResidualReport:
    edge: np.ndarray          # log-sum minus 2 pi i, per edge class
    cusp: np.ndarray          # cusp-row log combinations (0 when complete)
    branch_flags: np.ndarray  # slot log close to the principal branch cut

    def max_edge(self) -> float:
        return float(np.max(np.abs(self.edge)))

    def max_cusp(self) -> float:
        return float(np.max(np.abs(self.cusp))) if self.cusp.size else 0.0


def gluing_residual(tri: IdealTriangulation, shapes) -> ResidualReport:
    """Edge equation residuals (and cusp residuals) at the given shapes."""
    z = _shape_array(shapes)
    if np.any((z == 0) | (z == 1)):
        raise ValueError("shape parameter at a pole")
    logs = np.array([slot_logs(zi) for zi in z])          # (T, 3)
    expo = tri.edge_exponents()                           # (E, T, 3)
    edge = np.einsum("etc,tc->e", expo, logs) - TWO_PI_I
    cusp = np.array([np.sum(np.asarray(row) * logs) for row in tri.cusp_rows])
    flags = np.abs(np.abs(logs.imag) - np.pi) < 1e-6
    return ResidualReport(edge, cusp, flags)


@dataclass(frozen=True)
class VolumeValue:
    value: float
    error_estimate: float


def volume_of_shapes(tri: IdealTriangulation, shapes) -> VolumeValue:
    """Signed dilogarithm volume of a shape assignment."""
    z = _shape_array(shapes)
    vals = bloch_wigner(z)
    total = float(np.sum(vals))
    return VolumeValue(total, 5e-15 * z.size)


# ---------------------------------------------------------------------------
# developing in the Riemann sphere
# ---------------------------------------------------------------------------

def _mobius_to_zero_inf_one(a: complex, b: complex, c: complex) -> np.ndarray:
    """Matrix of the Mobius map sending (a, b, c) to (0, inf, 1)."""
    INF = cmath.inf
    if a == INF:
        return np.array([[0.0, c - b], [1.0, -b]], dtype=complex)
    if b == INF:
        return np.array([[1.0, -a], [0.0, c - a]], dtype=complex)
    if c == INF:
        return np.array([[1.0, -a], [1.0, -b]], dtype=complex)
    return np.array([[c - b, -a * (c - b)], [c - a, -b * (c - a)]], dtype=complex)


def _mobius_inverse(M: np.ndarray) -> np.ndarray:
    a, b, c, d = M.ravel()
    return np.array([[d, -b], [-c, a]], dtype=complex)


def _apply(M: np.ndarray, z: complex) -> complex:
    a, b, c, d = M.ravel()
    if z == cmath.inf:
        return a / c if c != 0 else cmath.inf
    den = c * z + d
    if den == 0:
        return cmath.inf
    return (a * z + b) / den


def _normalize_det(M: np.ndarray) -> np.ndarray:
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if det == 0:
        raise DevelopingFailureError("degenerate Mobius transformation")
    return M / cmath.sqrt(det)


def cross_ratio(p0: complex, p1: complex, p2: complex, p3: complex) -> complex:
    """cr with cr(0, inf, 1, z) = z; the developed edge (p0, p1) parameter."""
    M = _mobius_to_zero_inf_one(p0, p1, p2)
    return _apply(M, p3)


_NORMALIZED = (0.0 + 0.0j, cmath.inf, 1.0 + 0.0j)


def _normalized_positions(z: complex):
    return (*_NORMALIZED, z)


def _place_through_face(positions, face: int, perm, z_new: complex):
    """Positions of the neighbor tet copy sharing the face opposite ``face``.

    ``positions`` are the current tet's developed vertices; the neighbor's
    vertex perm[i] lands on positions[i] for i != face, and its remaining
    vertex is found from its own shape parameter.
    """
    known = {perm[i]: positions[i] for i in range(4) if i != face}
    missing = next(v for v in range(4) if v not in known)
    norm = _normalized_positions(z_new)
    idx = sorted(known.keys())
    M_norm = _mobius_to_zero_inf_one(*(norm[v] for v in idx))
    M_img = _mobius_to_zero_inf_one(*(known[v] for v in idx))
    A = _mobius_inverse(M_img) @ M_norm
    out = [None] * 4
    for v in range(4):
        out[v] = known[v] if v in known else _apply(A, norm[v])
    return tuple(out), A


@dataclass(frozen=True)
class Developed:
    """Fundamental-set placements and face-pairing deck transformations."""

    placements: tuple            # per tet: developed vertex positions
    placement_maps: tuple        # per tet: Mobius from normalized positions
    generators: dict             # non-tree gluing key -> unit-det 2x2 matrix
    tree_gluing: tuple


def develop(tri: IdealTriangulation, shapes, base_tet: int = 0) -> Developed:
    """Develop one fundamental set and the face-pairing transformations.

    A spanning tree of the face-pairing graph places every tetrahedron
    once; each remaining gluing G contributes the deck transformation
    identifying the far copy with its fundamental placement.
    """
    z = _shape_array(shapes)
    if np.any(np.abs(z) < 1e-10) or np.any(np.abs(1.0 - z) < 1e-10):
        raise DevelopingFailureError("shapes too close to a degenerate tetrahedron")
    placements = {base_tet: _normalized_positions(z[base_tet])}
    maps = {base_tet: np.eye(2, dtype=complex)}
    tree = []
    frontier = [base_tet]
    while frontier:
        # expand through the canonically smallest gluing to an unplaced tet,
        # so the spanning tree (hence the generator set) is base independent
        options = []
        for t in frontier:
            for f in range(4):
                t2, f2, perm = tri.gluings[(t, f)]
                if t2 not in placements:
                    options.append((tuple(sorted(((t, f), (t2, f2)))), t, f))
        if not options:
            break
        _, t, f = min(options)
        t2, f2, perm = tri.gluings[(t, f)]
        pos, A = _place_through_face(placements[t], f, perm, z[t2])
        placements[t2] = pos
        maps[t2] = A
        tree.append(((t, f), (t2, f2)))
        frontier.append(t2)
    generators = {}
    seen = set()
    tree_keys = {k for pair in tree for k in pair}
    for (t, f), (t2, f2, perm) in tri.gluings.items():
        if (t, f) in tree_keys or (t, f) in seen or (t2, f2) in seen:
            continue
        seen.add((t, f))
        seen.add((t2, f2))
        _, A = _place_through_face(placements[t], f, perm, z[t2])
        # deck transformation: far copy of t2 = gamma . fundamental copy
        gamma = A @ _mobius_inverse(maps[t2])
        generators[(t, f)] = _normalize_det(gamma)
    return Developed(tuple(placements[t] for t in range(tri.num_tetrahedra)),
                     tuple(maps[t] for t in range(tri.num_tetrahedra)),
                     generators,
                     tuple(tree))


def developed_shape(positions) -> complex:
    """Cross ratio of a developed vertex quadruple (guards the developing)."""
    return cross_ratio(*positions)


def edge_cycle_word(tri: IdealTriangulation, developed: Developed,
                    start: tuple[int, int, int]):
    """Walk around an edge class and express the cycle as a deck word.

    Returns a list of (gluing_key, sign) pairs; tree crossings contribute
    nothing.  The product of the corresponding generator matrices is a
    relator of the fundamental group.
    """
    gen_of = developed.generators
    t, i, j = start
    entered = next(v for v in range(4) if v not in (i, j))
    word = []
    state = (t, i, j, entered)
    first = True
    while first or state != (t, i, j, entered):
        first = False
        ct, ci, cj, centered = state
        cross = next(v for v in range(4) if v not in (ci, cj, centered))
        t2, f2, perm = tri.gluings[(ct, cross)]
        if (ct, cross) in gen_of:
            word.append(((ct, cross), +1))
        elif (t2, f2) in gen_of:
            word.append(((t2, f2), -1))
        state = (t2, perm[ci], perm[cj], f2)
        if len(word) > 100:
            raise RuntimeError("edge cycle failed to close")
    return word


# ---------------------------------------------------------------------------
# the figure-eight knot complement
# ---------------------------------------------------------------------------

# Face pairings of the two-tetrahedron layered triangulation of the
# once-punctured-torus bundle with monodromy R L; derived from the Farey
# flip sequence (0 -> 2 in the square with sides of slope inf and 1, then
# inf -> 3/2 in the square with sides of slope 1 and 2).
_FIG8_GLUINGS = {
    (0, 2): (1, 2, (0, 3, 2, 1)),
    (1, 2): (0, 2, (0, 3, 2, 1)),
    (0, 1): (1, 1, (2, 1, 0, 3)),
    (1, 1): (0, 1, (2, 1, 0, 3)),
    (0, 0): (1, 3, (3, 2, 0, 1)),
    (1, 3): (0, 0, (2, 3, 1, 0)),
    (0, 3): (1, 0, (2, 3, 1, 0)),
    (1, 0): (0, 3, (3, 2, 0, 1)),
}

# Slot-log exponent rows of the peripheral basis (meridian, longitude),
# in the squared-derivative convention: row . slot_logs equals the log of
# the squared similarity derivative of the curve, hence vanishes exactly at
# the complete structure.  Fitted from the developed peripheral holonomy
# along variety paths and verified by the test suite.
_FIG8_CUSP_ROWS = (
    np.array([[0, -1, 0], [0, 1, 0]]),
    np.array([[4, 2, 0], [-4, -2, 0]]),
)

# Peripheral words of the two-generator reduction (a = deck transformation
# of gluing (0,1), b = of gluing (0,2); both parabolic at the complete
# structure).  The relator is the classical two-bridge one up to inversion.
FIG8_RELATOR = "bABabAbaBA"
FIG8_MERIDIAN = "a"
FIG8_LONGITUDE = "BabAAbaB"

FIG8_COMPLETE_SHAPE = complex(0.5, np.sqrt(3.0) / 2.0)   # exp(i pi / 3)
FIG8_VOLUME = 2.029883212819307


def figure_eight() -> IdealTriangulation:
    """The two-tetrahedron ideal triangulation of the figure-eight knot
    complement, with cusp data for the peripheral basis."""
    return IdealTriangulation(2, dict(_FIG8_GLUINGS), _FIG8_CUSP_ROWS,
                              name="figure-eight")


# ---------------------------------------------------------------------------
# holonomy representation
# ---------------------------------------------------------------------------

def _free_reduce(word):
    out = []
    for item in word:
        if out and out[-1][0] == item[0] and out[-1][1] == -item[1]:
            out.pop()
        else:
            out.append(item)
    return out


def _eliminate_generators(gen_keys, relators):
    """Tietze-reduce: drop generators occurring exactly once in a relator.

    Returns the surviving keys (sorted) and the reduced relators as
    (key, sign) lists.
    """
    keys = list(gen_keys)
    rels = [_free_reduce(list(r)) for r in relators]
    changed = True
    while changed:
        changed = False
        for r in rels:
            counts = {}
            for kk, _ in r:
                counts[kk] = counts.get(kk, 0) + 1
            single = [kk for kk, c in counts.items() if c == 1]
            if not single:
                continue
            kk = single[0]
            pos = next(i for i, (k2, _) in enumerate(r) if k2 == kk)
            sign = r[pos][1]
            # r = u k^sign v = 1  =>  k^sign = u^-1 v^-1
            u, v = r[:pos], r[pos + 1:]
            repl = [(k2, -s) for (k2, s) in reversed(u)] + \
                   [(k2, -s) for (k2, s) in reversed(v)]
            if sign < 0:
                repl = [(k2, -s) for (k2, s) in reversed(repl)]
            rels = [_free_reduce(_substitute(r2, kk, repl))
                    for r2 in rels if r2 is not r]
            keys.remove(kk)
            changed = True
            break
    return sorted(keys), [r for r in rels if r]


def _substitute(word, key, replacement):
    out = []
    for (kk, s) in word:
        if kk != key:
            out.append((kk, s))
        elif s > 0:
            out.extend(replacement)
        else:
            out.extend((k2, -s2) for (k2, s2) in reversed(replacement))
    return out


def holonomy_from_shapes(tri: IdealTriangulation, shapes,
                         base_tet: int = 0,
                         residual_tol: float = 1e-8) -> Representation:
    """Holonomy representation developed from an edge-equation solution.

    The deck transformations of the non-tree face pairings generate the
    fundamental group with the edge-cycle words as relators; generators
    occurring once in a relator are eliminated, which lands on the
    two-generator one-relator presentation for the figure-eight.
    """
    z = _shape_array(shapes)
    res = gluing_residual(tri, z)
    if res.max_edge() > residual_tol:
        raise ValueError(f"edge residual {res.max_edge():.2e} exceeds {residual_tol}")
    dev = develop(tri, z, base_tet)
    relator_words = []
    for cls in tri.edge_classes:
        w = _free_reduce(edge_cycle_word(tri, dev, cls[0]))
        if w:
            relator_words.append(w)
    keys, rels = _eliminate_generators(sorted(dev.generators.keys()), relator_words)
    if len(keys) > len(_LETTER_POOL):
        raise DevelopingFailureError("too many surviving generators")
    letter_of = {kk: _LETTER_POOL[i] for i, kk in enumerate(keys)}
    gens = tuple(psl2_to_lorentz(dev.generators[kk]) for kk in keys)
    words = tuple("".join(letter_of[kk] if s > 0 else letter_of[kk].upper()
                          for (kk, s) in r) for r in rels)
    return Representation(gens, words, 3)


_LETTER_POOL = "abcdefgh"


def peripheral_eigenvalue_sq(rep: Representation, word: str) -> complex:
    """Squared dominant eigenvalue of a peripheral word (1 when parabolic)."""
    g = rep.evaluate(word)
    if g.spin is None:
        raise ValueError("needs a spin representative")
    A = g.spin / cmath.sqrt(complex(np.linalg.det(g.spin)))
    tr_half = complex(np.trace(A)) / 2.0
    lam = tr_half + cmath.sqrt(tr_half * tr_half - 1.0)
    return lam * lam


# ---------------------------------------------------------------------------
# the gluing variety of the figure-eight: sampling and paths
# ---------------------------------------------------------------------------

def _fig8_partner(z: complex, branch: int = 0) -> complex:
    """w with z^2 w^2 = (1-z)(1-w): the rectangular edge equation."""
    # z^2 w^2 + (1-z) w - (1-z) = 0
    a, b, c = z * z, (1.0 - z), -(1.0 - z)
    disc = cmath.sqrt(b * b - 4.0 * a * c)
    roots = ((-b + disc) / (2 * a), (-b - disc) / (2 * a))
    return roots[branch]


def solve_edge_equations(tri: IdealTriangulation, start, pinned: int = 0,
                         tol: float = 1e-12, max_iter: int = 80):
    """Newton-solve the log edge equations with one shape pinned.

    The edge rows are redundant (their sum is a multiple of the constant
    rows), so one shape coordinate stays fixed and the remaining ones are
    corrected by a least-squares Newton step.
    """
    z = np.asarray(start, dtype=complex).copy()
    free = [i for i in range(z.size) if i != pinned]
    expo = tri.edge_exponents()
    for _ in range(max_iter):
        logs = np.array([slot_logs(zi) for zi in z])
        F = np.einsum("etc,tc->e", expo, logs) - TWO_PI_I
        if np.max(np.abs(F)) < tol:
            return z, float(np.max(np.abs(F)))
        # d slot_logs / dz = (1/z, 1/(1-z), 1/(z(z-1)))
        J = np.zeros((expo.shape[0], len(free)), dtype=complex)
        for col, t in enumerate(free):
            d = np.array([1.0 / z[t], 1.0 / (1.0 - z[t]),
                          1.0 / (z[t] * (z[t] - 1.0))])
            J[:, col] = expo[:, t, :] @ d
        step, *_ = np.linalg.lstsq(J, -F, rcond=None)
        limit = 0.5 * np.max(np.abs(z[free]))
        if np.max(np.abs(step)) > limit:
            step = step * (limit / np.max(np.abs(step)))
        z[free] = z[free] + step
    raise ContinuationStallError("Newton failed to reach the edge equations")


@dataclass(frozen=True)
class PathStep:
    t: float
    shapes: np.ndarray
    volume: VolumeValue
    representation: Representation
    edge_residual: float
    cusp_residual: float
    min_pole_distance: float


def deformation_path(tri: IdealTriangulation, direction: complex = None,
                     steps: int = 50, t_end: float = 0.9905,
                     t_start: float = 0.02,
                     include_complete: bool = True) -> list[PathStep]:
    """Continuation along the gluing variety toward a shape degeneration.

    The first shape moves on the straight segment from the complete value
    toward ``direction`` (default: the pole at 1); the remaining shapes are
    corrected by Newton at every step, with step halving on stalls.  Along
    the default path the partner shape runs to 0, so the end of the path
    approaches an ideal point of the variety.
    """
    if tri.name != "figure-eight":
        raise ValueError("built-in paths exist for the figure-eight only")
    target = 1.0 + 0.0j if direction is None else complex(direction)
    z0 = FIG8_COMPLETE_SHAPE
    out = []
    if include_complete:
        shapes0 = np.array([z0, z0])
        out.append(_path_step(tri, 0.0, shapes0))
    current = np.array([z0, z0])
    ts = np.linspace(t_start, t_end, steps)
    prev_t = 0.0
    for t in ts:
        got = None
        sub_from, sub_to, pieces = prev_t, t, 1
        while pieces <= 64:
            try:
                trial = current.copy()
                for j in range(1, pieces + 1):
                    tt = sub_from + (sub_to - sub_from) * j / pieces
                    trial[0] = z0 + tt * (target - z0)
                    trial, _ = solve_edge_equations(tri, trial, pinned=0)
                got = trial
                break
            except ContinuationStallError:
                pieces *= 2
        if got is None:
            raise ContinuationStallError(f"continuation stalled at t = {t}")
        current = got
        out.append(_path_step(tri, float(t), current.copy()))
        prev_t = t
    return out


def _path_step(tri: IdealTriangulation, t: float, shapes: np.ndarray) -> PathStep:
    res = gluing_residual(tri, shapes)
    rep = holonomy_from_shapes(tri, shapes)
    poles = np.concatenate([np.abs(shapes), np.abs(1.0 - shapes),
                            1.0 / np.maximum(np.abs(shapes), 1e-30)])
    return PathStep(t, shapes, volume_of_shapes(tri, shapes), rep,
                    res.max_edge(), res.max_cusp(), float(poles.min()))


def sample_gluing_variety(rng: np.random.Generator, n: int,
                          box: float = 6.0) -> np.ndarray:
    """(n, 2) random solutions of the figure-eight edge equations.

    The first shape is uniform over a box around the interesting region and
    the partner solves the rectangular equation (both quadratic branches).
    """
    zs = (rng.uniform(-box, box + 1.0, size=2 * n)
          + 1j * rng.uniform(-box, box, size=2 * n))
    out = []
    for i, z in enumerate(zs):
        if min(abs(z), abs(1 - z)) < 1e-3:
            continue
        w = _fig8_partner(z, branch=i % 2)
        if min(abs(w), abs(1 - w)) < 1e-3:
            continue
        out.append((z, w))
        if len(out) == n:
            break
    return np.asarray(out)


def solve_complete(tri: IdealTriangulation, guess=None) -> np.ndarray:
    """Newton solve for the complete structure: edge plus cusp equations."""
    z = np.asarray(guess if guess is not None else [0.3 + 0.8j, 0.4 + 1.1j],
                   dtype=complex).copy()
    expo = np.concatenate([tri.edge_exponents(),
                           np.asarray(tri.cusp_rows, dtype=float)])
    target = np.concatenate([np.full(tri.edge_exponents().shape[0], TWO_PI_I),
                             np.zeros(len(tri.cusp_rows), dtype=complex)])
    for _ in range(100):
        logs = np.array([slot_logs(zi) for zi in z])
        F = np.einsum("etc,tc->e", expo, logs) - target
        if np.max(np.abs(F)) < 1e-12:
            return z
        J = np.zeros((expo.shape[0], z.size), dtype=complex)
        for t in range(z.size):
            d = np.array([1.0 / z[t], 1.0 / (1.0 - z[t]),
                          1.0 / (z[t] * (z[t] - 1.0))])
            J[:, t] = expo[:, t, :] @ d
        step, *_ = np.linalg.lstsq(J, -F, rcond=None)
        if np.max(np.abs(step)) > 0.5:
            step = step * (0.5 / np.max(np.abs(step)))
        z = z + step
    raise ContinuationStallError("complete-structure Newton did not converge")
