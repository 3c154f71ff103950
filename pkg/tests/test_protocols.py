import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from finitelhv.errors import InvalidInputError, ProtocolError, VisibilityTooHighError
from finitelhv.geometry import gamma_profile, inscribed_radius, iterate_family, make_platonic, sgn
from finitelhv.protocols import (EquatorialProtocol, FilteredLHSProtocol, FullRankCommProtocol, HalfSpaceProtocol,
                                 Protocol1, Protocol4, ProtocolSpec, avg_comm_large_d, build_protocol,
                                 equatorial_round, filter_operator, filtered_lhs_round, fullrank_comm_round,
                                 protocol1_round, protocol1_visibility, protocol2_round, protocol2_visibility,
                                 protocol4_avg_comm, protocol4_full, protocol4_round, protocol4_visibility)
from finitelhv.quantum import I2, born_statistics, filtered_state, werner_state

ICO = make_platonic("icosahedron")
SQRT5 = math.sqrt(5)


def random_pairs(seed, count, equatorial=False):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        v = rng.normal(size=(2, 3))
        if equatorial:
            v[:, 2] = 0
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        out.append((v[0], v[1]))
    return out


def assert_triple(got, want, tol):
    assert max(abs(x - y) for x, y in zip(got, want)) <= tol


def brute_force_vertex(p: Protocol4, l, k):
    """Enumerate every tuple of shared labels and Alice's selection tree."""
    D, n = p.D, p.n
    s, d = p.select[l], p.move_on[l]
    A = sgn(p.M[l] @ p.V.T)
    Bb = p.bob_keep[k] * -sgn(p.V[k] @ p.V.T)
    ma = mb = mab = comm = 0.0
    for lams in itertools.product(range(D), repeat=n):
        reach = 1.0
        for t, lam in enumerate(lams, start=1):
            q = reach * s[lam]
            ma += q * A[lam]
            mb += q * Bb[lam]
            mab += q * A[lam] * Bb[lam]
            comm += q * t
            reach *= d[lam]
        selected = sum(np.prod([d[x] for x in lams[:t]]) * s[lams[t]] for t in range(n))
        rej = 1 - selected
        mb += rej * Bb[lams[0]]
        comm += rej
    w = D ** -n
    return ma * w, mb * w, mab * w, comm * w


class TestHalfSpaceProtocols:
    @pytest.mark.parametrize("name", ["octahedron", "cube", "dodecahedron", "icosahedron"])
    def test_protocol1_exact_statistics(self, name):
        p = Protocol1(make_platonic(name))
        for a, b in random_pairs(1, 25):
            assert_triple(p.exact_statistics(a, b), p.target(a, b), 1e-12)

    @pytest.mark.parametrize("k", [1, 2])
    def test_protocol2_exact_statistics(self, k):
        p = HalfSpaceProtocol(iterate_family(k))
        for a, b in random_pairs(2, 15):
            assert_triple(p.exact_statistics(a, b), p.target(a, b), 1e-10)

    def test_icosahedron_visibility(self):
        gamma, ell = 1 + SQRT5, math.sqrt((5 + 2 * SQRT5) / 15)
        assert protocol1_visibility(ICO) == pytest.approx(ell * gamma / 6, abs=1e-12)
        assert protocol2_visibility(ICO) == pytest.approx(protocol1_visibility(ICO), abs=1e-12)

    def test_family_visibilities_stay_below_half(self):
        vis = [protocol2_visibility(iterate_family(k)) for k in range(4)]
        assert all(x < y for x, y in zip(vis, vis[1:])) and vis[-1] < 0.5

    def test_protocol1_needs_regular_polyhedron(self):
        with pytest.raises(ProtocolError):
            Protocol1(iterate_family(1))
        with pytest.raises(ProtocolError):
            protocol1_visibility(iterate_family(1))

    def test_needs_antipodal_closure(self):
        with pytest.raises(ProtocolError):
            HalfSpaceProtocol(make_platonic("tetrahedron"))

    def test_round_outputs(self):
        rng = np.random.default_rng(0)
        a, b = random_pairs(3, 1)[0]
        for lam in range(ICO.D):
            out = protocol1_round(lam, a, b, ICO, rng)
            assert out.a in (1, -1) and out.b in (1, -1)
            out = protocol2_round(lam, a, b, iterate_family(1), rng)
            assert out.a in (1, -1) and out.b in (1, -1)
        with pytest.raises(InvalidInputError):
            protocol1_round(12, a, b, ICO, rng)

    def test_ties_contribute_zero(self):
        # each octahedron vertex is orthogonal to four others; those ties are fair coins
        p = Protocol1(make_platonic("octahedron"))
        assert (np.count_nonzero(p.signs == 0, axis=1) == 4).all()
        rng = np.random.default_rng(4)
        outs = [p.alice_output(1, [1, 0, 0], rng) for _ in range(4000)]
        assert set(outs) == {1, -1}

    def test_decomposition_is_cached(self):
        p = Protocol1(ICO)
        a = np.array([0.1, 0.2, 0.97])
        assert p.decomposition(a) is p.decomposition(a)

    def test_single_round_frequencies_match_expectations(self):
        p = Protocol1(ICO)
        a, b = random_pairs(5, 1)[0]
        rng = np.random.default_rng(11)
        lam = 3
        outs = np.array([p.round(lam, a, b, rng)[:2] for _ in range(20000)])
        assert outs[:, 0].mean() == pytest.approx(p.alice_expectation(a)[lam], abs=0.04)
        assert outs[:, 1].mean() == pytest.approx(-(ICO.vertices[lam] @ b), abs=0.04)

    def test_spec_json(self):
        spec = Protocol1(ICO).spec()
        assert isinstance(spec, ProtocolSpec)
        assert spec.to_json()["shared_bits"] == pytest.approx(math.log2(12))


class TestEquatorial:
    def test_exact_statistics(self):
        p = EquatorialProtocol()
        for a, b in random_pairs(4, 50, equatorial=True):
            assert_triple(p.exact_statistics(a, b), p.target(a, b), 1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
    def test_angles(self, ta, tb):
        st_ = EquatorialProtocol().exact_statistics(ta, tb)
        assert st_.corr_ab == pytest.approx(-0.5 * math.cos(ta - tb), abs=1e-12)
        assert st_.mean_a == pytest.approx(0, abs=1e-12)

    def test_rejects_off_equator(self):
        with pytest.raises(InvalidInputError):
            EquatorialProtocol().exact_statistics([0, 0.6, 0.8], [1, 0, 0])

    def test_round(self):
        rng = np.random.default_rng(0)
        out = equatorial_round(1, 0, 0.3, 1.2, rng)
        assert out.a in (1, -1) and out.b in (1, -1)
        with pytest.raises(InvalidInputError):
            equatorial_round(2, 0, 0.3, 1.2, rng)


class TestFullRank:
    @pytest.mark.parametrize("alpha", [0.3, 0.6, 0.75])
    def test_exact_statistics_match_born(self, alpha):
        p = FullRankCommProtocol(werner_state(alpha), ICO)
        for a, b in random_pairs(5, 20):
            assert_triple(p.exact_statistics(a, b), born_statistics(werner_state(alpha), a, b), 1e-12)

    def test_filtered_state_codebook(self):
        rho = filtered_state(0.5, 0.5)
        p = FullRankCommProtocol(rho, iterate_family(1))
        for a, b in random_pairs(6, 10):
            assert_triple(p.exact_statistics(a, b), born_statistics(rho, a, b), 1e-10)

    def test_conditional_state_outside_codebook(self):
        p = FullRankCommProtocol(werner_state(0.9), ICO)
        with pytest.raises(VisibilityTooHighError):
            p.exact_statistics([0, 0, 1], [1, 0, 0])

    def test_round_message_is_vertex_label(self):
        rng = np.random.default_rng(1)
        out = fullrank_comm_round(werner_state(0.7), [0, 0, 1], [1, 0, 0], ICO, rng)
        assert 0 <= out.message < 12
        assert FullRankCommProtocol(werner_state(0.7), ICO).spec().comm_bits == pytest.approx(math.log2(12))


class TestFiltered:
    @pytest.mark.parametrize("theta", [0.2, 0.5, math.pi / 4])
    def test_filter_maps_werner_to_filtered_state(self, theta):
        G = np.kron(I2, filter_operator(theta))
        out = G @ werner_state(0.4).matrix @ G.conj().T
        assert np.abs(out - filtered_state(0.4, theta).matrix).max() <= 1e-14

    @pytest.mark.parametrize("name,theta", [("icosahedron", 0.3), ("icosahedron", 0.7), ("family1", 0.45)])
    def test_exact_statistics_match_born(self, name, theta):
        P = ICO if name == "icosahedron" else iterate_family(1)
        p = FilteredLHSProtocol(P, theta)
        assert p.weights.sum() == pytest.approx(1, abs=1e-12)
        for a, b in random_pairs(7, 20):
            assert_triple(p.exact_statistics(a, b), born_statistics(p.reference_state(), a, b), 1e-12)

    def test_alice_marginal_is_not_zero(self):
        theta = 0.3
        p = FilteredLHSProtocol(ICO, theta)
        st_ = p.exact_statistics([0, 0, 1], [1, 0, 0])
        assert st_.mean_a == pytest.approx(p.visibility * math.cos(2 * theta), abs=1e-12)

    def test_quarter_pi_is_rotated_unfiltered_protocol(self):
        p = FilteredLHSProtocol(ICO, math.pi / 4)
        base = Protocol1(ICO)
        flip = np.array([-1.0, 1.0, -1.0])
        assert np.allclose(p.weights, 1 / 12)
        for a, b in random_pairs(8, 10):
            assert_triple(p.exact_statistics(a, b), base.exact_statistics(a, flip * b), 1e-12)

    def test_round_and_range(self):
        out = filtered_lhs_round(0, [0, 0, 1], [1, 0, 0], 0.4, ICO, np.random.default_rng(0))
        assert out.a in (1, -1)
        with pytest.raises(InvalidInputError):
            FilteredLHSProtocol(ICO, 0.0)


class TestProtocol4:
    @pytest.mark.parametrize("n", [1, 2])
    @pytest.mark.parametrize("l,k", [(0, 0), (0, 3), (5, 9)])
    def test_vertex_statistics_match_brute_force(self, n, l, k):
        p = Protocol4(ICO, n)
        st_, comm = p.vertex_statistics(l, k)
        want = brute_force_vertex(p, l, k)
        assert_triple(st_, want[:3], 1e-12)
        assert comm == pytest.approx(want[3], abs=1e-12)

    def test_brute_force_irregular(self):
        p = Protocol4(iterate_family(1), 2)
        st_, comm = p.vertex_statistics(1, 20)
        want = brute_force_vertex(p, 1, 20)
        assert_triple(st_, want[:3], 1e-12)
        assert comm == pytest.approx(want[3], abs=1e-12)

    @pytest.mark.parametrize("P", [ICO, iterate_family(1)], ids=["ico", "family1"])
    @pytest.mark.parametrize("n", [1, 2, 4])
    def test_vertex_correlator(self, P, n):
        p = Protocol4(P, n)
        for l, k in [(0, 1), (2, 7), (3, 3)]:
            st_, _ = p.vertex_statistics(l, k)
            assert st_.corr_ab == pytest.approx(-p.vertex_visibility * p.M[l] @ p.M[k], abs=1e-12)
            assert st_.mean_a == pytest.approx(0, abs=1e-12) and st_.mean_b == pytest.approx(0, abs=1e-12)

    def test_full_visibility_icosahedron(self):
        p = Protocol4(ICO, 2)
        x = 1 - 2 * (1 + SQRT5) / 12
        ell = math.sqrt((5 + 2 * SQRT5) / 15)
        assert p.x == pytest.approx(x, abs=1e-15)
        assert p.visibility == pytest.approx((1 - x ** 2) * ell ** 2, abs=1e-12)
        assert p.visibility == pytest.approx(0.497474, abs=1e-6)
        for a, b in random_pairs(9, 10):
            assert_triple(p.exact_statistics(a, b), p.target(a, b), 1e-12)

    def test_avg_comm_closed_form(self):
        x = 1 - 2 * (1 + SQRT5) / 12
        assert protocol4_avg_comm(ICO, 2) == pytest.approx(1 + x * (1 - x), abs=1e-15)
        assert protocol4_avg_comm(ICO, 1) == 1
        assert avg_comm_large_d(2) == 1.25
        for n in range(1, 8):
            assert protocol4_avg_comm(ICO, n) == pytest.approx(Protocol4(ICO, n).vertex_statistics(0, 0)[1])

    def test_irregular_avg_comm_per_vertex(self):
        P = iterate_family(1)
        prof = gamma_profile(P)
        p = Protocol4(P, 3)
        x = p.x
        gp = 1 + 2 * x  # derivative of 1 + x + x^2
        for l in (0, 12, 31):
            s_bar = 2 * prof.gamma_min * prof.gammas[l] / (prof.gamma_max * P.D)
            assert p.vertex_statistics(l, 0)[1] == pytest.approx(1 + s_bar * x * gp, abs=1e-12)

    def test_large_d_limit_along_family(self):
        vals = [protocol4_visibility(iterate_family(k), 2) for k in range(4)]
        assert all(x < y for x, y in zip(vals, vals[1:])) and vals[-1] < 0.75

    def test_round_functions(self):
        rng = np.random.default_rng(2)
        out = protocol4_round([0, 5], 0, 3, ICO, 2, rng)
        assert out.message in (1, 2) and out.selection in (0, 1, 2)
        if out.selection:
            assert out.message == out.selection
        out = protocol4_full([0, 0, 1], [1, 0, 0], [4, 7], ICO, 2, rng)
        assert out.a in (1, -1)
        with pytest.raises(InvalidInputError):
            protocol4_round([0], 0, 3, ICO, 2, rng)

    def test_invalid_n(self):
        with pytest.raises(InvalidInputError):
            Protocol4(ICO, 0)


class TestSamplers:
    """Vectorized samplers against exact enumeration (5 sigma, 2e5 rounds)."""

    @pytest.mark.parametrize("name", ["protocol1", "protocol2", "equatorial", "fullrank", "protocol4", "filtered"])
    def test_sampler(self, name):
        p = build_protocol(name, ICO, alpha=0.7, theta=0.5)
        N = 200_000
        for i, (a, b) in enumerate(random_pairs(10, 3, equatorial=name == "equatorial")):
            r = p.sample(a, b, N, np.random.default_rng(100 + i), np.random.default_rng(200 + i))
            emp = (r.a.mean(), r.b.mean(), (r.a.astype(int) * r.b).mean())
            want = p.exact_statistics(a, b)
            for e, w in zip(emp, want):
                se = math.sqrt(max(1 - w * w, 1e-12) / N)
                assert abs(e - w) < 5 * se
            if name == "protocol4":
                c = r.c.astype(float)
                assert abs(c.mean() - p.expected_comm(a, b)) < 5 * c.std() / math.sqrt(N)
                assert r.c.max() <= 2

    def test_unknown_protocol(self):
        with pytest.raises(InvalidInputError):
            build_protocol("protocol9")
