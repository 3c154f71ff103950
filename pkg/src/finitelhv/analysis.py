"""Resource/visibility trade-offs: the two-bit LHS bound, the Platonic visibility table and figure data."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import InvalidInputError, ResourceError
from .geometry import Polyhedron, iterate_family, make_platonic, unit
from .protocols import avg_comm_large_d, protocol1_visibility, protocol2_visibility, protocol4_avg_comm, \
    protocol4_visibility
from .quantum import is_entangled_npt, werner_state

TABLE1_SOLIDS = ("octahedron", "cube", "dodecahedron", "icosahedron")
SEPARABLE_BITS = 2.0
SEPARABLE_ALPHA = 1 / 3
FIG1_ASYMPTOTE = 0.5


def fmt(x) -> str:
    """Frozen float format for CSV output (17 significant digits)."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


# ---------------------------------------------------------------------------
# Sphere search

@lru_cache(maxsize=8)
def icosphere(level: int) -> np.ndarray:
    """Vertices of the icosahedron subdivided ``level`` times, projected to the sphere."""
    V = [tuple(v) for v in make_platonic("icosahedron").vertices]
    pts = np.array(V)
    # faces of the icosahedron: triples of mutually nearest vertices
    edge = np.min(np.linalg.norm(pts[:, None] - pts[None], axis=-1) + 10 * np.eye(12))
    near = np.linalg.norm(pts[:, None] - pts[None], axis=-1) < edge + 1e-9
    faces = [(i, j, k) for i in range(12) for j in range(i + 1, 12) for k in range(j + 1, 12)
             if near[i, j] and near[j, k] and near[i, k]]
    verts = [np.array(v) for v in V]
    for _ in range(level):
        cache: dict = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                verts.append(unit(verts[i] + verts[j]))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for i, j, k in faces:
            a, b, c = mid(i, j), mid(j, k), mid(k, i)
            new += [(i, a, c), (j, b, a), (k, c, b), (a, b, c)]
        faces = new
    out = np.array(verts)
    out.setflags(write=False)
    return out


def _golden(f: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    inv = (math.sqrt(5) - 1) / 2
    c, d = hi - inv * (hi - lo), lo + inv * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - inv * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + inv * (hi - lo)
            fd = f(d)
    return (lo + hi) / 2


def _tangent_basis(a: np.ndarray):
    helper = np.eye(3)[int(np.argmin(np.abs(a)))]
    e1 = unit(np.cross(a, helper))
    return e1, np.cross(a, e1)


def sphere_minimize(f_batch: Callable[[np.ndarray], np.ndarray], level: int = 6, tol: float = 1e-6,
                    starts: int = 3) -> tuple[float, np.ndarray]:
    """Minimize a function on the unit sphere: icosphere grid seeding, then
    alternating golden-section line searches along great circles.

    ``f_batch`` maps an ``(N, 3)`` array of unit vectors to ``N`` values.
    """
    grid = icosphere(level)
    values = f_batch(grid)
    f = lambda a: float(f_batch(a[None, :])[0])  # noqa: E731
    spacing = 2.0 / 2 ** level
    best_val, best_pt = math.inf, grid[0]
    for idx in np.argsort(values)[:starts]:
        a, val = grid[idx], values[idx]
        h = spacing
        while h > tol:
            improved = False
            for e in _tangent_basis(a):
                line = lambda t, a=a, e=e: f(math.cos(t) * a + math.sin(t) * e)  # noqa: E731
                t = _golden(line, -h, h, tol / 10)
                cand = line(t)
                if cand < val - 1e-15:
                    a, val, improved = unit(math.cos(t) * a + math.sin(t) * e), cand, True
            if not improved:
                h /= 2
        if val < best_val:
            best_val, best_pt = val, a
    return best_val, best_pt


# ---------------------------------------------------------------------------
# Two-bit LHS bound

def _barycentric(V: np.ndarray):
    """``(p, M^-1)`` with ``[V^T; 1] p = [0; 1]``, or ``None`` if the origin is not strictly inside."""
    M = np.vstack([V.T, np.ones(len(V))])
    if abs(np.linalg.det(M)) < 1e-12:
        return None
    Minv = np.linalg.inv(M)
    p = Minv[:, 3]
    if p.min() <= 1e-12:
        return None
    return p, Minv


def two_bit_visibility(V: np.ndarray, a):
    """Largest ``alpha`` reachable for Alice's setting ``a`` (or each row of ``a``)
    with four hidden states.

    Bob's zero marginal fixes the weights ``p`` (the barycentric coordinates of
    the origin); Alice's responses ``A_lam`` in ``[-1, 1]`` must satisfy
    ``sum p A v = -alpha a`` and ``sum p A = 0``.
    """
    a = np.asarray(a, float)
    single = a.ndim == 1
    A = np.atleast_2d(a)
    A = A / np.linalg.norm(A, axis=1, keepdims=True)
    bary = _barycentric(np.asarray(V, float))
    if bary is None:
        out = np.zeros(len(A))
    else:
        p, Minv = bary
        worst = np.max(np.abs(-A @ Minv[:, :3].T) / p, axis=1)
        with np.errstate(divide="ignore"):
            out = 1 / worst
    return float(out[0]) if single else out


def lhs_two_bit_bound(P: Polyhedron | np.ndarray, level: int = 6, tol: float = 1e-6) -> float:
    """Maximal Werner visibility of a two-bit (four hidden states) LHS model
    built on the vertex set ``P``: the minimum over Alice's settings of
    :func:`two_bit_visibility`."""
    V = np.asarray(P.vertices if isinstance(P, Polyhedron) else P, dtype=float)
    if V.shape != (4, 3):
        raise InvalidInputError("the two-bit bound needs exactly four vertices")
    V = V / np.linalg.norm(V, axis=1, keepdims=True)
    if _barycentric(V) is None:
        return 0.0
    val, _ = sphere_minimize(lambda a: two_bit_visibility(V, a), level=level, tol=tol)
    return float(val)


def lhs_two_bit_bound_closed_form(V) -> float:
    """``1 / max_lam |g_lam| / p_lam`` where ``g_lam`` are the rows of the barycentric inverse."""
    V = np.asarray(V, float)
    V = V / np.linalg.norm(V, axis=1, keepdims=True)
    bary = _barycentric(V)
    if bary is None:
        return 0.0
    p, Minv = bary
    return float(1 / np.max(np.linalg.norm(Minv[:, :3], axis=1) / p))


def max_overlap_minmax(V, level: int = 6, tol: float = 1e-6) -> float:
    """``min_a max_lam |v_lam . a|`` (a looser quantity than :func:`lhs_two_bit_bound`)."""
    V = np.asarray(V, float)
    V = V / np.linalg.norm(V, axis=1, keepdims=True)
    val, _ = sphere_minimize(lambda A: np.abs(A @ V.T).max(axis=1), level=level, tol=tol)
    return val


# ---------------------------------------------------------------------------
# Platonic visibility table and figures

@dataclass(frozen=True)
class Table1Row:
    solid: str
    D: int
    bits: float
    alpha: float
    entangled: bool

    @property
    def verdict(self) -> str:
        return "Ent" if self.entangled else "Sep"


def table1() -> list[Table1Row]:
    rows = []
    for name in TABLE1_SOLIDS:
        P = make_platonic(name)
        alpha = protocol1_visibility(P)
        rows.append(Table1Row(name, P.D, math.log2(P.D), alpha, is_entangled_npt(werner_state(alpha)).entangled))
    return rows


@dataclass(frozen=True)
class CurvePoint:
    x: float
    y: float
    D: Optional[int]
    poly_id: str
    protocol: str
    n: Optional[int] = None

    def __post_init__(self):
        if not 0 <= self.y <= 1:
            raise InvalidInputError(f"visibility {self.y} outside [0, 1]")


def fig1_curve(max_iterations: int = 4, cap: Optional[int] = None) -> list[CurvePoint]:
    """``(log2 D, 2 ell gamma_min / D)`` along the iterated polyhedron family."""
    points = []
    for k in range(max_iterations + 1):
        try:
            P = iterate_family(k) if cap is None else iterate_family(k, cap)
        except ResourceError as exc:
            warnings.warn(f"family truncated at k={k - 1}: {exc}")
            break
        points.append(CurvePoint(math.log2(P.D), protocol2_visibility(P), P.D, P.name, "protocol2"))
    return points


def fig1_anchor() -> CurvePoint:
    """The separable boundary reached with two bits (tetrahedron bound 1/3)."""
    return CurvePoint(SEPARABLE_BITS, SEPARABLE_ALPHA, 4, "tetrahedron", "two-bit-bound")


def fig2_curve(P: Polyhedron, n_range: Iterable[int]) -> list[CurvePoint]:
    """``(<c>, alpha)`` for Protocol 4 on ``P`` for each number of shared labels ``n``."""
    points = []
    for n in n_range:
        if not 1 <= n <= 32:
            raise InvalidInputError(f"n must lie in 1..32, got {n}")
        points.append(CurvePoint(protocol4_avg_comm(P, n), protocol4_visibility(P, n), P.D, P.name,
                                 "protocol4", n))
    return points


def fig2_limit_curve(n_range: Iterable[int]) -> list[CurvePoint]:
    """Large-``D`` limit: ``<c> = 2 - (1+n)/2^n`` and ``alpha = 1 - 2^-n``."""
    return [CurvePoint(avg_comm_large_d(n), 1 - 2.0 ** -n, None, "limit", "protocol4", n) for n in n_range]


def protocol4_family_extrapolation(n: int, max_iterations: int = 4) -> list[float]:
    """``(g_min/g_max)(1 - x^n) ell^2`` along the iterated family."""
    return [protocol4_visibility(iterate_family(k), n) for k in range(max_iterations + 1)]


# ---------------------------------------------------------------------------
# Output

def _write(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if v is not None else "" for v in row])
    return buf.getvalue()


def table1_csv(rows: Sequence[Table1Row]) -> str:
    return _write(("solid", "bits", "alpha", "verdict"), ((r.solid, r.bits, r.alpha, r.verdict) for r in rows))


def fig1_csv(points: Sequence[CurvePoint]) -> str:
    return _write(("bits", "alpha", "D", "poly_id"), ((p.x, p.y, p.D, p.poly_id) for p in points))


def fig2_csv(points: Sequence[CurvePoint]) -> str:
    return _write(("avg_comm", "alpha", "n", "D", "poly_id"), ((p.x, p.y, p.n, p.D, p.poly_id) for p in points))


def gnuplot_script(fig1_path: str = "fig1.csv", fig2_path: str = "fig2.csv") -> str:
    return f"""set datafile separator ','
set key autotitle columnhead
set terminal pngcairo size 800,500
set output 'fig1.png'
set xlabel 'shared randomness (bits)'
set ylabel 'visibility'
set yrange [0:0.55]
plot '{fig1_path}' using 1:2 with linespoints title 'LHS model', \\
     {FIG1_ASYMPTOTE} with lines dashtype 2 title 'infinite shared randomness', \\
     {SEPARABLE_ALPHA} with lines dashtype 3 title 'separable boundary'
set output 'fig2.png'
set xlabel 'average communication'
set yrange [0:1]
plot '{fig2_path}' using 1:2 with linespoints title 'protocol 4'
"""


__all__ = [
    "icosphere", "sphere_minimize", "two_bit_visibility", "lhs_two_bit_bound",
    "lhs_two_bit_bound_closed_form", "max_overlap_minmax", "Table1Row", "table1", "CurvePoint",
    "fig1_curve", "fig1_anchor", "fig2_curve", "fig2_limit_curve", "protocol4_family_extrapolation",
    "table1_csv", "fig1_csv", "fig2_csv", "gnuplot_script", "fmt",
]
