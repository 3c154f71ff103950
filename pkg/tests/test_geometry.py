import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from finitelhv.errors import (DecompositionError, DegeneratePolyhedronError, GeometryError,
                              InvalidInputError, ResourceError)
from finitelhv.geometry import (PHI, Polyhedron, UnitVector, antipodal_closure, convex_decompose, dedup_vertices,
                                gamma_profile, halfspace_sums, inscribed_radius, iterate_family, make_platonic,
                                merged_faces, normalized_dual, sgn, unit)

SQRT5 = math.sqrt(5)
ELL_ICO = math.sqrt((5 + 2 * SQRT5) / 15)


def brute_inradius(V):
    """Smallest distance to a supporting plane through three vertices (no hull library)."""
    V = np.asarray(V, float)
    best = math.inf
    for i, j, k in itertools.combinations(range(len(V)), 3):
        n = np.cross(V[j] - V[i], V[k] - V[i])
        if np.linalg.norm(n) < 1e-12:
            continue
        n /= np.linalg.norm(n)
        d = n @ V[i]
        if d < 0:
            n, d = -n, -d
        if np.all(V @ n <= d + 1e-9):
            best = min(best, d)
    return best


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    return q if np.linalg.det(q) > 0 else -q


unit_vectors = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 1e-3).map(unit)


class TestPlatonic:
    @pytest.mark.parametrize("name,D", [("tetrahedron", 4), ("octahedron", 6), ("cube", 8),
                                        ("dodecahedron", 20), ("icosahedron", 12)])
    def test_vertex_counts_and_unit_norm(self, name, D):
        P = make_platonic(name)
        assert P.D == D
        assert np.allclose(np.linalg.norm(P.vertices, axis=1), 1, atol=1e-15)

    def test_icosahedron_vertices_are_cyclic_golden_triples(self):
        P = make_platonic("icosahedron")
        raw = P.vertices * math.sqrt(1 + PHI ** 2)
        assert np.allclose(np.sort(np.abs(raw), axis=1), [0, 1, PHI])

    def test_unknown_solid(self):
        with pytest.raises(InvalidInputError):
            make_platonic("rhombicuboctahedron")

    def test_antipodal_closure_flags(self):
        assert not make_platonic("tetrahedron").antipodal_closed
        for name in ("octahedron", "cube", "dodecahedron", "icosahedron"):
            assert make_platonic(name).antipodal_closed

    def test_tetrahedron_closure_is_cube(self):
        closed = antipodal_closure(make_platonic("tetrahedron"))
        cube = make_platonic("cube")
        assert closed.D == 8
        d = np.abs(closed.vertices @ cube.vertices.T).max(axis=1)
        assert np.allclose(d, 1)

    def test_closure_is_identity_on_closed_sets(self):
        P = make_platonic("icosahedron")
        assert antipodal_closure(P) is P


class TestGammaProfile:
    @pytest.mark.parametrize("name,gamma", [("octahedron", 1.0), ("cube", 2.0), ("icosahedron", 1 + SQRT5),
                                            ("dodecahedron", 3 + SQRT5)])
    def test_platonic_gammas(self, name, gamma):
        prof = gamma_profile(make_platonic(name))
        assert prof.is_regular
        assert prof.gamma_min == pytest.approx(gamma, abs=1e-12)
        assert prof.gamma_max == pytest.approx(gamma, abs=1e-12)

    def test_octahedron_ties_are_included(self):
        # the four equatorial neighbours are orthogonal and cancel, leaving v itself
        S = halfspace_sums(make_platonic("octahedron").vertices)
        assert np.allclose(S, make_platonic("octahedron").vertices)

    def test_not_closed_raises(self):
        with pytest.raises(GeometryError):
            gamma_profile(make_platonic("tetrahedron"))

    def test_family1_two_gamma_values(self):
        prof = gamma_profile(iterate_family(1))
        assert not prof.is_regular
        assert np.allclose(prof.m_vectors, iterate_family(1).vertices, atol=1e-9)
        assert len(np.unique(np.round(prof.gammas, 9))) == 2

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_rotation_covariance(self, seed):
        rng = np.random.default_rng(seed)
        R = random_rotation(rng)
        P = make_platonic("icosahedron")
        Q = Polyhedron(P.vertices @ R.T)
        a, b = gamma_profile(P), gamma_profile(Q)
        assert np.allclose(a.gammas, b.gammas, atol=1e-9)
        assert np.allclose(a.m_vectors @ R.T, b.m_vectors, atol=1e-9)


class TestInscribedRadius:
    def test_icosahedron_symbolic(self):
        assert inscribed_radius(make_platonic("icosahedron")) == pytest.approx(ELL_ICO, abs=1e-12)

    @pytest.mark.parametrize("name,ell", [("tetrahedron", 1 / 3), ("octahedron", 1 / math.sqrt(3)),
                                          ("cube", 1 / math.sqrt(3)), ("dodecahedron", ELL_ICO)])
    def test_other_solids(self, name, ell):
        assert inscribed_radius(make_platonic(name)) == pytest.approx(ell, abs=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.integers(6, 12))
    def test_matches_facet_enumeration(self, seed, n):
        rng = np.random.default_rng(seed)
        V = rng.normal(size=(n, 3))
        V = np.vstack([V, -V])
        P = Polyhedron(V)
        assert inscribed_radius(P) == pytest.approx(brute_inradius(P.vertices), abs=1e-9)

    def test_origin_outside_reports_direction(self):
        V = np.array([[1, 0.1, 0.1], [1, -0.1, 0.1], [1, 0, -0.1], [0.9, 0.3, 0.3]])
        with pytest.raises(GeometryError) as info:
            inscribed_radius(V)
        assert info.value.direction is not None

    def test_radius_below_one(self):
        for k in range(3):
            assert 0 < inscribed_radius(iterate_family(k)) < 1


class TestDual:
    @pytest.mark.parametrize("name,dual_D", [("octahedron", 8), ("cube", 6), ("icosahedron", 20),
                                             ("dodecahedron", 12)])
    def test_counts(self, name, dual_D):
        assert normalized_dual(make_platonic(name)).D == dual_D

    def test_icosahedron_dual_is_dodecahedron(self):
        dual = normalized_dual(make_platonic("icosahedron"))
        dodeca = make_platonic("dodecahedron")
        assert np.allclose(np.abs(dual.vertices @ dodeca.vertices.T).max(axis=1), 1, atol=1e-12)

    def test_cube_faces_merge_to_squares(self):
        faces = merged_faces(make_platonic("cube").vertices)
        assert sorted(len(f) for f in faces) == [4] * 6

    def test_family_sizes(self):
        assert [iterate_family(k).D for k in range(4)] == [12, 32, 92, 272]

    def test_family1_is_icosahedron_plus_dodecahedron(self):
        F = iterate_family(1).vertices
        both = np.vstack([make_platonic("icosahedron").vertices, make_platonic("dodecahedron").vertices])
        assert np.allclose(np.abs(F @ both.T).max(axis=1), 1, atol=1e-12)

    def test_family_is_closed_and_ell_grows(self):
        ells = [inscribed_radius(iterate_family(k)) for k in range(4)]
        assert all(iterate_family(k).antipodal_closed for k in range(4))
        assert all(x < y for x, y in zip(ells, ells[1:]))

    def test_cap(self):
        with pytest.raises(ResourceError):
            iterate_family(3, cap=100)

    def test_negative_k(self):
        with pytest.raises(InvalidInputError):
            iterate_family(-1)


class TestDecomposition:
    ico = make_platonic("icosahedron")

    @settings(max_examples=50, deadline=None)
    @given(unit_vectors, st.floats(0, 1))
    def test_shrunk_vectors_decompose(self, a, s):
        target = s * ELL_ICO * a
        w = convex_decompose(target, self.ico)
        assert w.weights.min() >= 0
        assert w.weights.sum() == pytest.approx(1, abs=1e-12)
        assert w.residual(self.ico) <= 1e-9
        assert len(w.support) <= 4

    def test_exact_mode(self):
        a = unit([0.3, -0.2, 0.9])
        w = convex_decompose(0.7 * a, self.ico, exact=True)
        assert w.residual(self.ico) <= 1e-12

    def test_face_center_is_tight(self):
        face = unit(self.ico.vertices[merged_faces(self.ico.vertices)[0]].mean(axis=0))
        w = convex_decompose(ELL_ICO * face, self.ico)
        assert w.residual(self.ico) <= 1e-9
        assert len(w.support) == 3

    def test_outside_raises_with_margin(self):
        face = unit(self.ico.vertices[merged_faces(self.ico.vertices)[0]].mean(axis=0))
        with pytest.raises(DecompositionError) as info:
            convex_decompose(1.05 * ELL_ICO * face, self.ico)
        assert info.value.margin == pytest.approx(0.05 * ELL_ICO, abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_feasibility_agrees_with_scipy(self, seed):
        rng = np.random.default_rng(seed)
        target = rng.uniform(-1, 1, size=3)
        A = np.vstack([self.ico.vertices.T, np.ones(12)])
        ref = linprog(np.zeros(12), A_eq=A, b_eq=np.append(target, 1), bounds=(0, None), method="highs")
        try:
            convex_decompose(target, self.ico)
            ours = True
        except DecompositionError:
            ours = False
        assert ours == (ref.status == 0)


class TestPolyhedronType:
    def test_rejects_duplicates(self):
        with pytest.raises(DegeneratePolyhedronError):
            Polyhedron(np.vstack([np.eye(3), np.eye(3)[:1]]))

    def test_rejects_fewer_than_four(self):
        with pytest.raises(DegeneratePolyhedronError):
            Polyhedron(np.eye(3))

    def test_vertices_are_read_only(self):
        P = make_platonic("cube")
        with pytest.raises(ValueError):
            P.vertices[0, 0] = 2.0

    def test_json_roundtrip(self, tmp_path):
        P = iterate_family(1)
        path = tmp_path / "p.json"
        P.save(path)
        data = json.loads(path.read_text())
        assert set(data) == {"name", "vertices"}
        Q = Polyhedron.load(path)
        assert np.array_equal(P.vertices, Q.vertices) and Q.name == P.name

    def test_missing_field(self):
        with pytest.raises(InvalidInputError):
            Polyhedron.from_json({"name": "x"})

    def test_dedup(self):
        V = np.vstack([np.eye(3), np.eye(3) + 1e-12])
        assert len(dedup_vertices(V)) == 3

    def test_unit_vector_normalizes(self):
        u = UnitVector(3, 0, 4)
        assert np.allclose(np.asarray(u), [0.6, 0, 0.8])
        with pytest.raises(InvalidInputError):
            unit([0, 0, 0])

    def test_sgn_dead_zone(self):
        assert list(sgn([1e-13, -1e-13, 0.5, -2])) == [0, 0, 1, -1]
