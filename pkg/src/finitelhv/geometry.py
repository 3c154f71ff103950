"""Vertex sets on the unit sphere: Platonic solids, duals, gamma profiles.

All protocols consume a :class:`Polyhedron` (a finite set of unit vectors).
The derived quantities are

* the half-space sums ``sum_{j: v_j.v_l >= 0} v_j = gamma_l m_l`` (the gamma
  profile, with its normalized directions ``m_l``),
* the inscribed radius ``ell`` of the convex hull of a vertex set,
* convex decompositions of vectors inside the hull.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .errors import (DecompositionError, DegeneratePolyhedronError, GeometryError,
                     InvalidInputError, ResourceError)
from .simplex import Simplex

PHI = (1 + 5 ** 0.5) / 2

TIE_TOL = 1e-12      # |v.w| below this counts as orthogonal
DEDUP_TOL = 1e-9     # angular distance under which two vertices coincide
MERGE_TOL = 1e-7     # facet normals closer than this (radians) are one face
DEFAULT_CAP = 10_000


def unit(v) -> np.ndarray:
    """Return ``v`` normalized to length one."""
    v = np.asarray(v, dtype=float).reshape(3)
    n = np.linalg.norm(v)
    if not np.isfinite(n) or n < 1e-300:
        raise InvalidInputError(f"cannot normalize {v!r}")
    return v / n


def sgn(x, tol: float = TIE_TOL):
    """Sign with a dead zone: values within ``tol`` of zero map to 0."""
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= tol, 0.0, np.sign(x))


@dataclass(frozen=True)
class UnitVector:
    """A point on the Bloch sphere; the constructor normalizes."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        u = unit((self.x, self.y, self.z))
        object.__setattr__(self, "x", float(u[0]))
        object.__setattr__(self, "y", float(u[1]))
        object.__setattr__(self, "z", float(u[2]))

    @classmethod
    def of(cls, v) -> "UnitVector":
        v = np.asarray(v, dtype=float).reshape(3)
        return cls(*v)

    def __array__(self, dtype=None, copy=None):
        return np.array([self.x, self.y, self.z], dtype=dtype or float)


def _normalize_rows(V) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[1] != 3:
        raise InvalidInputError(f"expected an (n, 3) array, got shape {V.shape}")
    norms = np.linalg.norm(V, axis=1)
    if np.any(norms < 1e-300):
        raise InvalidInputError("zero vector in vertex list")
    return V / norms[:, None]


def _chord(angle: float) -> float:
    return 2 * np.sin(angle / 2)


def dedup_vertices(V, tol: float = DEDUP_TOL) -> np.ndarray:
    """Drop later rows that lie within angular distance ``tol`` of an earlier row."""
    V = _normalize_rows(V)
    tree = cKDTree(V)
    drop = set()
    for i, j in sorted(tree.query_pairs(_chord(tol) * (1 + 1e-6) + 1e-15)):
        if i not in drop:
            drop.add(max(i, j))
    keep = [i for i in range(len(V)) if i not in drop]
    return V[keep]


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """An ordered set of ``D >= 4`` distinct unit vectors."""

    vertices: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        V = _normalize_rows(self.vertices)
        if len(V) < 4:
            raise DegeneratePolyhedronError(f"a polyhedron needs at least 4 vertices, got {len(V)}")
        if len(dedup_vertices(V)) != len(V):
            raise DegeneratePolyhedronError("two vertices coincide within the dedup tolerance")
        V = V.copy()
        V.setflags(write=False)
        object.__setattr__(self, "vertices", V)

    @property
    def D(self) -> int:
        return len(self.vertices)

    def __len__(self):
        return self.D

    def __repr__(self):
        return f"Polyhedron(name={self.name!r}, D={self.D})"

    @cached_property
    def key(self) -> tuple:
        return (self.name, self.D, hash(self.vertices.tobytes()))

    @cached_property
    def antipode_index(self) -> np.ndarray:
        """Index of ``-v`` for every vertex, or -1 where it is missing."""
        tree = cKDTree(self.vertices)
        dist, idx = tree.query(-self.vertices)
        return np.where(dist <= _chord(DEDUP_TOL) * (1 + 1e-6) + 1e-15, idx, -1)

    @property
    def antipodal_closed(self) -> bool:
        return bool(np.all(self.antipode_index >= 0))

    def to_json(self) -> dict:
        return {"name": self.name, "vertices": self.vertices.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "Polyhedron":
        try:
            return cls(np.asarray(data["vertices"], dtype=float), str(data.get("name", "custom")))
        except KeyError as exc:
            raise InvalidInputError(f"polyhedron file lacks field {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "Polyhedron":
        return cls.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Platonic solids

def _tetrahedron():
    return np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)


def _octahedron():
    return np.vstack([np.eye(3), -np.eye(3)])


def _cube():
    return np.array([[x, y, z] for x in (1, -1) for y in (1, -1) for z in (1, -1)], dtype=float)


def _cyclic(points):
    return [np.roll(p, k) for p in points for k in range(3)]


def _icosahedron():
    # cyclic permutations of (0, +-1, +-phi)
    return np.array(_cyclic([(0, s1, s2 * PHI) for s1 in (1, -1) for s2 in (1, -1)]))


def _dodecahedron():
    # oriented as the dual of the icosahedron above
    inner = [(0, s1 * PHI, s2 / PHI) for s1 in (1, -1) for s2 in (1, -1)]
    return np.vstack([_cube(), np.array(_cyclic(inner))])


PLATONIC = {
    "tetrahedron": _tetrahedron,
    "octahedron": _octahedron,
    "cube": _cube,
    "icosahedron": _icosahedron,
    "dodecahedron": _dodecahedron,
}


def make_platonic(name: str) -> Polyhedron:
    """Vertex set of a Platonic solid in its canonical orientation.

    The icosahedron uses the cyclic permutations of ``(0, +-1, +-phi)``; the
    cube and dodecahedron contain the vertices ``(+-1, +-1, +-1)``; the
    octahedron sits on the coordinate axes.
    """
    try:
        return Polyhedron(PLATONIC[name](), name)
    except KeyError:
        raise InvalidInputError(f"unknown Platonic solid {name!r}; expected one of {sorted(PLATONIC)}") from None


def closure_vertices(V) -> np.ndarray:
    V = _normalize_rows(V)
    return dedup_vertices(np.vstack([V, -V]))


def antipodal_closure(P: Polyhedron) -> Polyhedron:
    """Union of ``P`` and ``-P``; unchanged when ``P`` is already closed."""
    if P.antipodal_closed:
        return P
    return Polyhedron(closure_vertices(P.vertices), f"{P.name}+antipodes")


# ---------------------------------------------------------------------------
# Gamma profile

@dataclass(frozen=True, eq=False)
class GammaProfile:
    gammas: np.ndarray
    m_vectors: np.ndarray
    gamma_min: float
    gamma_max: float
    is_regular: bool


def halfspace_sums(V, chunk: int = 2048) -> np.ndarray:
    """``sum_{j: v_j.v_l >= 0} v_j`` for every row ``l`` (ties included)."""
    V = np.asarray(V, dtype=float)
    out = np.empty_like(V)
    for s in range(0, len(V), chunk):
        G = V[s:s + chunk] @ V.T
        out[s:s + chunk] = (G >= -TIE_TOL).astype(float) @ V
    return out


def gamma_profile(P: Polyhedron) -> GammaProfile:
    """Per-vertex half-space sums, split into norm ``gamma`` and direction ``m``."""
    if not P.antipodal_closed:
        raise GeometryError(f"{P.name} is not closed under v -> -v")
    S = halfspace_sums(P.vertices)
    gammas = np.linalg.norm(S, axis=1)
    if gammas.min() < 1e-9:
        raise DegeneratePolyhedronError(f"{P.name}: vanishing half-space sum")
    M = S / gammas[:, None]
    regular = bool(np.abs(M - P.vertices).max() <= 1e-9 and gammas.max() - gammas.min() <= 1e-9)
    gammas.setflags(write=False)
    M.setflags(write=False)
    return GammaProfile(gammas, M, float(gammas.min()), float(gammas.max()), regular)


# ---------------------------------------------------------------------------
# Hull geometry

def _points(P) -> np.ndarray:
    return P.vertices if isinstance(P, Polyhedron) else np.asarray(P, dtype=float)


def _hull(V) -> ConvexHull:
    try:
        return ConvexHull(V)
    except (QhullError, ValueError) as exc:
        raise GeometryError(f"degenerate convex hull: {exc}") from None


def inscribed_radius(P) -> float:
    """Radius of the largest origin-centred ball inside the hull of ``P``."""
    hull = _hull(_points(P))
    dist = -hull.equations[:, 3]
    k = int(np.argmin(dist))
    if dist[k] <= 1e-12:
        raise GeometryError("origin is not interior to the hull", direction=hull.equations[k, :3].copy())
    return float(dist[k])


def merged_faces(V) -> list[np.ndarray]:
    """Vertex indices of every hull face, with coplanar triangles merged."""
    V = np.asarray(V, dtype=float)
    hull = _hull(V)
    normals = hull.equations[:, :3]
    parent = list(range(len(normals)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in cKDTree(normals).query_pairs(_chord(MERGE_TOL)):
        parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for f in range(len(normals)):
        groups.setdefault(find(f), []).append(f)
    return [np.unique(hull.simplices[fs].ravel()) for _, fs in sorted(groups.items(), key=lambda kv: min(kv[1]))]


def normalized_dual(P: Polyhedron) -> Polyhedron:
    """One vertex per hull face, at the normalized vertex centroid of the face."""
    V = _points(P)
    cents = np.array([V[idx].mean(axis=0) for idx in merged_faces(V)])
    return Polyhedron(cents, f"dual({getattr(P, 'name', 'custom')})")


@lru_cache(maxsize=16)
def iterate_family(k: int, cap: int = DEFAULT_CAP) -> Polyhedron:
    """Icosahedron-seeded family: ``F(k+1) = F(k) U normalized_dual(F(k))``."""
    if k < 0:
        raise InvalidInputError("iteration count must be >= 0")
    P = make_platonic("icosahedron")
    for step in range(k):
        faces = len(merged_faces(P.vertices))
        if P.D + faces > cap:
            raise ResourceError(f"iterate_family({k}) needs more than {cap} vertices (step {step + 1})")
        union = dedup_vertices(np.vstack([P.vertices, normalized_dual(P).vertices]))
        P = Polyhedron(union, f"family{step + 1}")
    return antipodal_closure(P) if not P.antipodal_closed else P


def family_size(k: int) -> int:
    return iterate_family(k).D


# ---------------------------------------------------------------------------
# Convex decomposition

@dataclass(frozen=True, eq=False)
class ConvexWeights:
    weights: np.ndarray
    target: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    def residual(self, U) -> float:
        return float(np.linalg.norm(self.weights @ _points(U) - self.target))


def _outside_margin(U, target) -> tuple[float, np.ndarray]:
    hull = _hull(U)
    slack = hull.equations[:, :3] @ target + hull.equations[:, 3]
    k = int(np.argmax(slack))
    return float(slack[k]), hull.equations[k, :3].copy()


def convex_decompose(target, U, *, exact: bool = False) -> ConvexWeights:
    """Weights ``w >= 0`` with ``sum w = 1`` and ``sum_i w_i u_i = target``.

    Solved as a feasibility LP; the simplex returns a basic solution, so at
    most four weights are nonzero.  ``exact=True`` runs the solver on exact
    rationals (the float inputs are converted without rounding).
    """
    V = _points(U)
    t = np.asarray(target, dtype=float).reshape(3)
    lp = Simplex(np.concatenate([t, [1.0]]), exact=exact)
    lp.add_columns(np.vstack([V.T, np.ones(len(V))]))
    res = lp.solve()
    if res.status != "optimal":
        margin, direction = _outside_margin(V, t)
        raise DecompositionError(f"target {t.tolist()} lies outside the hull (margin {margin:.3e})",
                                 margin=margin, direction=direction)
    w = np.array([float(x) for x in res.x])
    w[w < 0] = 0.0
    w /= w.sum()
    return ConvexWeights(w, t)
