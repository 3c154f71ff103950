"""Response functions of the finite-shared-randomness simulation protocols.

Every protocol object offers two modes:

* ``exact_statistics(a, b)`` sums over the finite shared-randomness support
  (local coins enter through their expectations) and returns
  ``(<a>, <b>, <ab>)``;
* ``sample(a, b, n, shared, local)`` draws ``n`` independent rounds, taking
  shared randomness only from ``shared`` and local coins only from ``local``.

Shared-randomness indices (``lam``) and vertex indices are 0-based.  The
Protocol 4 message ``c`` takes values ``1..n`` and the full-rank model sends a
0-based vertex label.  ``sgn`` of an exact tie (``|v.w| <= 1e-12``) is
resolved by a fair coin, which contributes zero to every expectation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np

from .errors import DecompositionError, InvalidInputError, ProtocolError, VisibilityTooHighError
from .geometry import (Polyhedron, convex_decompose, gamma_profile, inscribed_radius,
                       make_platonic, sgn, unit)
from .quantum import (I2, CorrelationTriple, DensityState, bloch_vector, born_statistics,
                      conditional_state, filtered_state, state_from_bloch, werner_state)

PROTOCOL_IDS = ("protocol1", "protocol2", "equatorial", "fullrank", "protocol4", "filtered")


class RoundOutcome(NamedTuple):
    a: int
    b: int
    message: Optional[int] = None
    selection: Optional[int] = None


@dataclass
class Rounds:
    """A batch of sampled rounds (outputs are int8 arrays of +-1)."""

    a: np.ndarray
    b: np.ndarray
    c: Optional[np.ndarray] = None
    T: Optional[np.ndarray] = None


@dataclass(frozen=True)
class ProtocolSpec:
    protocol: str
    polyhedron: Optional[str]
    D: Optional[int]
    n: Optional[int]
    alpha: Optional[float]
    shared_bits: float
    comm_bits: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _coin(rng: np.random.Generator, size=None):
    return np.where(rng.random(size) < 0.5, 1, -1).astype(np.int8)


def _sample_index(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw from a cumulative weight vector."""
    return np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)


def _pm1(p_plus, u) -> np.ndarray:
    return np.where(u < p_plus, 1, -1).astype(np.int8)


class Protocol:
    """Common surface used by the harness."""

    id = "base"
    communicates = False

    def spec(self) -> ProtocolSpec:
        raise NotImplementedError

    def exact_statistics(self, a, b) -> CorrelationTriple:
        raise NotImplementedError

    def target(self, a, b) -> CorrelationTriple:
        """Closed-form statistics the protocol is built to reproduce."""
        raise NotImplementedError

    def reference_state(self) -> DensityState:
        raise NotImplementedError

    def sample(self, a, b, n: int, shared: np.random.Generator, local: np.random.Generator) -> Rounds:
        raise NotImplementedError

    def expected_comm(self, a, b) -> Optional[float]:
        return None

    def normalize_settings(self, a, b):
        return unit(a), unit(b)


def _werner_target(alpha, a, b) -> CorrelationTriple:
    return CorrelationTriple(0.0, 0.0, -alpha * float(unit(a) @ unit(b)))


# ---------------------------------------------------------------------------
# Protocols 1 and 2

class HalfSpaceProtocol(Protocol):
    """Protocol 2 on an antipodal polyhedron (Protocol 1 when it is regular).

    Alice decomposes ``ell * a`` over the directions ``m_i``, picks ``i`` with
    weight ``w_i`` and, with probability ``gamma_min / gamma_i``, outputs
    ``sgn(v_i . v_lam)`` (a fair coin otherwise).  Bob outputs ``+-1`` with
    probability ``(1 -+ b . v_lam) / 2``.
    """

    id = "protocol2"

    def __init__(self, P: Polyhedron, exact_lp: bool = False):
        if not P.antipodal_closed:
            raise ProtocolError(f"{P.name} is not antipodally closed; apply antipodal_closure first")
        self.P = P
        self.V = P.vertices
        self.D = P.D
        self.profile = gamma_profile(P)
        self.M = self.profile.m_vectors
        self.ell = inscribed_radius(self.M)
        self.keep = self.profile.gamma_min / self.profile.gammas
        self.signs = sgn(self.V @ self.V.T)
        self.exact_lp = exact_lp
        self._cache: dict = {}

    @property
    def visibility(self) -> float:
        return 2 * self.ell * self.profile.gamma_min / self.D

    def spec(self) -> ProtocolSpec:
        return ProtocolSpec(self.id, self.P.name, self.D, None, self.visibility, math.log2(self.D), 0.0)

    def decomposition(self, a) -> np.ndarray:
        a = unit(a)
        key = tuple(np.round(a, 12))
        if key not in self._cache:
            self._cache[key] = convex_decompose(self.ell * a, self.M, exact=self.exact_lp).weights
        return self._cache[key]

    def alice_expectation(self, a) -> np.ndarray:
        """``E[a | lam]`` for every ``lam``."""
        w = self.decomposition(a) * self.keep
        return w @ self.signs

    def bob_expectation(self, b) -> np.ndarray:
        return -(self.V @ unit(b))

    def exact_statistics(self, a, b) -> CorrelationTriple:
        ea, eb = self.alice_expectation(a), self.bob_expectation(b)
        return CorrelationTriple(float(ea.mean()), float(eb.mean()), float((ea * eb).mean()))

    def target(self, a, b):
        return _werner_target(self.visibility, a, b)

    def reference_state(self):
        return werner_state(self.visibility)

    def alice_output(self, lam: int, a, rng: np.random.Generator) -> int:
        w = self.decomposition(a)
        i = int(_sample_index(np.cumsum(w), rng.random()))
        if rng.random() >= self.keep[i]:
            return int(_coin(rng))
        s = self.signs[i, lam]
        return int(s) if s != 0 else int(_coin(rng))

    def bob_output(self, lam: int, b, rng: np.random.Generator) -> int:
        return int(_pm1((1 - self.V[lam] @ unit(b)) / 2, rng.random()))

    def round(self, lam: int, a, b, rng: np.random.Generator) -> RoundOutcome:
        if not 0 <= lam < self.D:
            raise InvalidInputError(f"lambda {lam} outside 0..{self.D - 1}")
        return RoundOutcome(self.alice_output(lam, a, rng), self.bob_output(lam, b, rng))

    def _sample_alice(self, lam, a, local):
        n = len(lam)
        cum = np.cumsum(self.decomposition(a))
        i = _sample_index(cum, local.random(n))
        keep = local.random(n) < self.keep[i]
        s = self.signs[i, lam].astype(np.int8)
        coin = _coin(local, n)
        return np.where(keep & (s != 0), s, coin).astype(np.int8)

    def sample(self, a, b, n, shared, local) -> Rounds:
        lam = shared.integers(self.D, size=n)
        alice = self._sample_alice(lam, a, local)
        bob = _pm1((1 - self.V[lam] @ unit(b)) / 2, local.random(n))
        return Rounds(alice, bob)


class Protocol1(HalfSpaceProtocol):
    """Protocol 1: requires ``sum_{v_j . v_l >= 0} v_j = gamma v_l`` for all ``l``."""

    id = "protocol1"

    def __init__(self, P: Polyhedron, exact_lp: bool = False):
        super().__init__(P, exact_lp)
        if not self.profile.is_regular:
            raise ProtocolError(f"{P.name} does not satisfy the regular half-space condition; use protocol 2")
        self.ell = inscribed_radius(self.V)

    @property
    def visibility(self) -> float:
        return 2 * self.profile.gamma_min * self.ell / self.D


def protocol1_visibility(P: Polyhedron) -> float:
    """``2 gamma ell / D`` for a regular antipodal polyhedron."""
    prof = gamma_profile(P)
    if not prof.is_regular:
        raise ProtocolError(f"{P.name} is not regular")
    return 2 * prof.gamma_min * inscribed_radius(P) / P.D


def protocol2_visibility(P: Polyhedron) -> float:
    prof = gamma_profile(P)
    return 2 * inscribed_radius(prof.m_vectors) * prof.gamma_min / P.D


@lru_cache(maxsize=32)
def _half_space(P: Polyhedron, regular: bool) -> HalfSpaceProtocol:
    return Protocol1(P) if regular else HalfSpaceProtocol(P)


def protocol1_round(lam: int, a, b, P: Polyhedron, rng: np.random.Generator) -> RoundOutcome:
    return _half_space(P, True).round(lam, a, b, rng)


def protocol2_round(lam: int, a, b, P: Polyhedron, rng: np.random.Generator) -> RoundOutcome:
    return _half_space(P, False).round(lam, a, b, rng)


# ---------------------------------------------------------------------------
# Equatorial two-bit model

def _equator_angle(v) -> float:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size == 1:
        return float(v[0])
    if abs(v[2]) > 1e-12:
        raise InvalidInputError(f"setting {v.tolist()} is not on the Bloch equator")
    return math.atan2(v[1], v[0])


class EquatorialProtocol(Protocol):
    """Two shared bits ``(lam, mu)``; simulates rho_W(1/2) on x-y plane settings.

    Settings may be given as angles or as equatorial Bloch vectors.
    """

    id = "equatorial"
    visibility = 0.5
    D = 4

    def spec(self):
        return ProtocolSpec(self.id, None, 4, None, 0.5, 2.0, 0.0)

    def normalize_settings(self, a, b):
        ta, tb = _equator_angle(a), _equator_angle(b)
        return np.array([math.cos(ta), math.sin(ta), 0.0]), np.array([math.cos(tb), math.sin(tb), 0.0])

    @staticmethod
    def _projections(theta):
        return np.array([math.cos(theta), math.sin(theta)])

    def exact_statistics(self, a, b):
        ca, cb = self._projections(_equator_angle(a)), self._projections(_equator_angle(b))
        ma = mb = mab = 0.0
        for lam in (0, 1):
            for mu in (0, 1):
                s = (-1) ** mu
                ea, eb = s * ca[lam], -s * cb[lam]
                ma += ea / 4
                mb += eb / 4
                mab += ea * eb / 4
        return CorrelationTriple(ma, mb, mab)

    def target(self, a, b):
        a, b = self.normalize_settings(a, b)
        return _werner_target(0.5, a, b)

    def reference_state(self):
        return werner_state(0.5)

    def round(self, lam: int, mu: int, theta_a, theta_b, rng) -> RoundOutcome:
        if lam not in (0, 1) or mu not in (0, 1):
            raise InvalidInputError("lam and mu are bits")
        ca, cb = self._projections(_equator_angle(theta_a)), self._projections(_equator_angle(theta_b))
        s = (-1) ** mu
        return RoundOutcome(int(_pm1((1 + s * ca[lam]) / 2, rng.random())),
                            int(_pm1((1 - s * cb[lam]) / 2, rng.random())))

    def sample(self, a, b, n, shared, local):
        ca, cb = self._projections(_equator_angle(a)), self._projections(_equator_angle(b))
        lam = shared.integers(2, size=n)
        s = 1 - 2 * shared.integers(2, size=n)
        alice = _pm1((1 + s * ca[lam]) / 2, local.random(n))
        bob = _pm1((1 - s * cb[lam]) / 2, local.random(n))
        return Rounds(alice, bob)


def equatorial_round(lam: int, mu: int, theta_a, theta_b, rng: np.random.Generator) -> RoundOutcome:
    return EquatorialProtocol().round(lam, mu, theta_a, theta_b, rng)


# ---------------------------------------------------------------------------
# Full-rank states with one-way communication (no shared randomness)

class FullRankCommProtocol(Protocol):
    """Alice samples her Born outcome, decomposes Bob's conditional Bloch vector
    over the codebook ``S`` of pure states and sends the drawn vertex label."""

    id = "fullrank"
    communicates = True

    def __init__(self, rho: DensityState, S: Polyhedron, exact_lp: bool = False):
        if rho.dims != (2, 2):
            raise InvalidInputError("full-rank model implemented for two qubits")
        self.rho = rho
        self.S = S
        self.V = S.vertices
        self.D = S.D
        self.exact_lp = exact_lp
        self._cache: dict = {}

    def spec(self):
        return ProtocolSpec(self.id, self.S.name, self.D, None, None, 0.0, math.log2(self.D))

    def alice_model(self, a):
        """``(p(+1), weights for outcome +1, weights for outcome -1)``."""
        a = unit(a)
        key = tuple(np.round(a, 12))
        if key not in self._cache:
            parts = []
            for outcome in (1, -1):
                p, cond = conditional_state(self.rho, a, outcome)
                r = bloch_vector(cond.matrix)
                try:
                    w = convex_decompose(r, self.S, exact=self.exact_lp).weights
                except DecompositionError as exc:
                    raise VisibilityTooHighError(
                        f"conditional Bloch vector {r.round(6).tolist()} (norm {np.linalg.norm(r):.6f}) for "
                        f"setting {a.round(6).tolist()}, outcome {outcome:+d} is outside the hull of {self.S.name}"
                    ) from exc
                parts.append((p, w))
            self._cache[key] = (parts[0][0], parts[0][1], parts[1][1])
        return self._cache[key]

    def exact_statistics(self, a, b):
        p_plus, w_plus, w_minus = self.alice_model(a)
        proj = self.V @ unit(b)
        eb_plus, eb_minus = w_plus @ proj, w_minus @ proj
        return CorrelationTriple(p_plus - (1 - p_plus),
                                 p_plus * eb_plus + (1 - p_plus) * eb_minus,
                                 p_plus * eb_plus - (1 - p_plus) * eb_minus)

    def target(self, a, b):
        return born_statistics(self.rho, a, b)

    def reference_state(self):
        return self.rho

    def expected_comm(self, a, b):
        return None

    def round(self, a, b, rng) -> RoundOutcome:
        p_plus, w_plus, w_minus = self.alice_model(a)
        out = 1 if rng.random() < p_plus else -1
        w = w_plus if out == 1 else w_minus
        label = int(_sample_index(np.cumsum(w), rng.random()))
        bob = int(_pm1((1 + self.V[label] @ unit(b)) / 2, rng.random()))
        return RoundOutcome(out, bob, message=label)

    def sample(self, a, b, n, shared, local):
        p_plus, w_plus, w_minus = self.alice_model(a)
        alice = _pm1(p_plus, local.random(n))
        u = local.random(n)
        label = np.where(alice == 1, _sample_index(np.cumsum(w_plus), u), _sample_index(np.cumsum(w_minus), u))
        bob = _pm1((1 + self.V[label] @ unit(b)) / 2, local.random(n))
        return Rounds(alice, bob, c=label)


def fullrank_comm_round(rho: DensityState, a, b, S: Polyhedron, rng: np.random.Generator) -> RoundOutcome:
    return FullRankCommProtocol(rho, S).round(a, b, rng)


# ---------------------------------------------------------------------------
# Filtered states: LHS reweighting of Protocols 1/2

# U maps |phi+> to the singlet: (I (x) U)|phi+> = |psi->.
_U = np.array([[0, -1], [1, 0]], dtype=complex)


def filter_operator(theta: float) -> np.ndarray:
    """Bob's local filter ``G`` with ``(I (x) G) rho_W(alpha) (I (x) G)^dag = rho_{alpha,theta}``."""
    F = math.sqrt(2) * np.diag([math.cos(theta), math.sin(theta)]).astype(complex)
    return F @ _U.conj().T


class FilteredLHSProtocol(Protocol):
    """The half-space LHS model pushed through Bob's filter.

    Bob's hidden state ``sigma_lam`` (Bloch vector ``-v_lam``) becomes
    ``G sigma G^dag / w_lam`` and ``lam`` is drawn with probability ``w_lam / D``;
    Alice's response is unchanged.
    """

    id = "filtered"

    def __init__(self, P: Polyhedron, theta: float, base: Optional[HalfSpaceProtocol] = None):
        if not 0 < theta <= math.pi / 4 + 1e-15:
            raise InvalidInputError(f"theta must lie in (0, pi/4], got {theta}")
        self.base = base or (Protocol1(P) if gamma_profile(P).is_regular else HalfSpaceProtocol(P))
        self.theta = theta
        self.D = self.base.D
        G = filter_operator(theta)
        weights, blochs = [], []
        for v in self.base.V:
            sigma = G @ state_from_bloch(-v) @ G.conj().T
            w = np.trace(sigma).real
            if w < 1e-12:
                raise ProtocolError(f"filter annihilates hidden state {v.tolist()}")
            weights.append(w)
            blochs.append(bloch_vector(sigma / w))
        self.weights = np.array(weights) / self.D
        self.hidden_bloch = np.array(blochs)
        self._cum = np.cumsum(self.weights)

    @property
    def visibility(self):
        return self.base.visibility

    def spec(self):
        s = self.base.spec()
        return ProtocolSpec(self.id, s.polyhedron, s.D, None, s.alpha, s.shared_bits, 0.0)

    def exact_statistics(self, a, b):
        ea = self.base.alice_expectation(a)
        eb = self.hidden_bloch @ unit(b)
        w = self.weights
        return CorrelationTriple(float(w @ ea), float(w @ eb), float(w @ (ea * eb)))

    def target(self, a, b):
        return born_statistics(self.reference_state(), a, b)

    def reference_state(self):
        return filtered_state(self.visibility, self.theta)

    def round(self, lam: int, a, b, rng) -> RoundOutcome:
        return RoundOutcome(self.base.alice_output(lam, a, rng),
                            int(_pm1((1 + self.hidden_bloch[lam] @ unit(b)) / 2, rng.random())))

    def sample(self, a, b, n, shared, local):
        lam = _sample_index(self._cum, shared.random(n) * self._cum[-1])
        alice = self.base._sample_alice(lam, a, local)
        bob = _pm1((1 + self.hidden_bloch[lam] @ unit(b)) / 2, local.random(n))
        return Rounds(alice, bob)


def filtered_lhs_round(lam: int, a, b, theta: float, P: Polyhedron, rng) -> RoundOutcome:
    return FilteredLHSProtocol(P, theta).round(lam, a, b, rng)


# ---------------------------------------------------------------------------
# Protocol 4: finite shared randomness plus a selection message

def _g_prime(x: float, n: int) -> float:
    return sum(t * x ** (t - 1) for t in range(1, n))


def protocol4_avg_comm(P: Polyhedron, n: int) -> float:
    """``1 + (1 - x) x g_n'(x)`` with ``x = 1 - 2 gamma_min / D``."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    prof = gamma_profile(P)
    x = 1 - 2 * prof.gamma_min / P.D
    return 1 + (1 - x) * x * _g_prime(x, n)


def avg_comm_large_d(n: int) -> float:
    return 2 - (1 + n) / 2 ** n


class Protocol4(Protocol):
    """Alice scans ``lam_1..lam_n``: at step ``t`` she selects with probability
    ``(g_min/g_max)|m_l.v|``, moves on with probability ``1 - (g_min/g_l)|m_l.v|``
    and rejects otherwise (running past step ``n`` also rejects).  She sends
    ``c = T`` (``c = 1`` on rejection); Bob answers ``-sgn(v_k . v_{lam_c})``
    with probability ``g_min/g_k`` and a fair coin otherwise.

    ``vertex_*`` methods take Alice's/Bob's settings as indices ``l, k`` of
    the directions ``m``; ``exact_statistics``/``sample`` take arbitrary Bloch
    vectors, which both parties first decompose over ``M`` at radius ``ell``.
    """

    id = "protocol4"
    communicates = True

    def __init__(self, P: Polyhedron, n: int, exact_lp: bool = False):
        if n < 1:
            raise InvalidInputError("n must be >= 1")
        if not P.antipodal_closed:
            raise ProtocolError(f"{P.name} is not antipodally closed")
        self.P, self.n, self.D = P, int(n), P.D
        self.V = P.vertices
        self.profile = prof = gamma_profile(P)
        self.M = prof.m_vectors
        self.ell = inscribed_radius(self.M)
        overlaps = np.abs(self.M @ self.V.T)  # [l, lam]
        self.select = prof.gamma_min / prof.gamma_max * overlaps
        self.move_on = 1 - (prof.gamma_min / prof.gammas)[:, None] * overlaps
        self.reject = np.clip(1 - self.select - self.move_on, 0.0, None)
        self.alice_sign = sgn(self.M @ self.V.T)
        self.bob_sign = -sgn(self.V @ self.V.T)  # [k, lam]
        self.bob_keep = prof.gamma_min / prof.gammas
        self.x = 1 - 2 * prof.gamma_min / self.D
        self.exact_lp = exact_lp
        self._cache: dict = {}

    @property
    def vertex_visibility(self) -> float:
        p = self.profile
        return p.gamma_min / p.gamma_max * (1 - self.x ** self.n)

    @property
    def visibility(self) -> float:
        return self.vertex_visibility * self.ell ** 2

    def spec(self):
        return ProtocolSpec(self.id, self.P.name, self.D, self.n, self.visibility,
                            self.n * math.log2(self.D), math.log2(self.n))

    def avg_comm(self) -> float:
        return protocol4_avg_comm(self.P, self.n)

    # exact vertex-level statistics, factorized over the i.i.d. lam_t
    def vertex_statistics(self, l: int, k: int) -> tuple[CorrelationTriple, float]:
        s, d, rej = self.select[l], self.move_on[l], self.reject[l]
        A = self.alice_sign[l]
        Bb = self.bob_keep[k] * self.bob_sign[k]
        r, s_bar = d.mean(), s.mean()
        reach = np.array([r ** (t - 1) for t in range(1, self.n + 1)])
        mean_a = reach.sum() * (s * A).mean()
        corr = reach.sum() * (s * A * Bb).mean()
        rest = 1 - s_bar * reach[:-1].sum()  # rejection probability over n-1 fresh steps
        mean_b = reach.sum() * (s * Bb).mean() + (Bb * (rej + d * rest)).mean()
        p_sel = reach * s_bar
        comm = float((np.arange(1, self.n + 1) * p_sel).sum() + (1 - p_sel.sum()))
        return CorrelationTriple(float(mean_a), float(mean_b), float(corr)), comm

    def vertex_round(self, lams, l: int, k: int, rng) -> RoundOutcome:
        lams = list(lams)
        if len(lams) != self.n:
            raise InvalidInputError(f"expected {self.n} shared indices")
        T = 0
        for t, lam in enumerate(lams, start=1):
            u = rng.random()
            if u < self.select[l, lam]:
                T = t
                break
            if u < self.select[l, lam] + self.move_on[l, lam]:
                continue
            break
        if T:
            s = self.alice_sign[l, lams[T - 1]]
            a = int(s) if s != 0 else int(_coin(rng))
            c = T
        else:
            a, c = int(_coin(rng)), 1
        if rng.random() < self.bob_keep[k]:
            s = self.bob_sign[k, lams[c - 1]]
            b = int(s) if s != 0 else int(_coin(rng))
        else:
            b = int(_coin(rng))
        return RoundOutcome(a, b, message=c, selection=T)

    def decomposition(self, v) -> np.ndarray:
        v = unit(v)
        key = tuple(np.round(v, 12))
        if key not in self._cache:
            self._cache[key] = convex_decompose(self.ell * v, self.M, exact=self.exact_lp).weights
        return self._cache[key]

    def exact_statistics(self, a, b):
        return self._full_exact(a, b)[0]

    def expected_comm(self, a, b):
        return self._full_exact(a, b)[1]

    def _full_exact(self, a, b):
        wa, wb = self.decomposition(a), self.decomposition(b)
        acc = np.zeros(4)
        for l in np.flatnonzero(wa):
            for k in np.flatnonzero(wb):
                st, comm = self.vertex_statistics(l, k)
                acc += wa[l] * wb[k] * np.array([*st, comm])
        return CorrelationTriple(*acc[:3]), float(acc[3])

    def target(self, a, b):
        return _werner_target(self.visibility, a, b)

    def reference_state(self):
        return werner_state(self.visibility)

    def round(self, lams, a, b, rng) -> RoundOutcome:
        l = int(_sample_index(np.cumsum(self.decomposition(a)), rng.random()))
        k = int(_sample_index(np.cumsum(self.decomposition(b)), rng.random()))
        return self.vertex_round(lams, l, k, rng)

    def sample(self, a, b, n, shared, local):
        lams = shared.integers(self.D, size=(n, self.n))
        l = _sample_index(np.cumsum(self.decomposition(a)), local.random(n))
        k = _sample_index(np.cumsum(self.decomposition(b)), local.random(n))
        T = np.zeros(n, dtype=np.int64)
        active = np.ones(n, dtype=bool)
        for t in range(self.n):
            lam = lams[:, t]
            u = local.random(n)
            sel = self.select[l, lam]
            chosen = active & (u < sel)
            T[chosen] = t + 1
            active &= ~chosen & (u < sel + self.move_on[l, lam])
        c = np.where(T > 0, T, 1)
        lam_c = lams[np.arange(n), c - 1]
        s_a = self.alice_sign[l, lam_c].astype(np.int8)
        coin_a = _coin(local, n)
        alice = np.where((T > 0) & (s_a != 0), s_a, coin_a).astype(np.int8)
        s_b = self.bob_sign[k, lam_c].astype(np.int8)
        keep_b = local.random(n) < self.bob_keep[k]
        coin_b = _coin(local, n)
        bob = np.where(keep_b & (s_b != 0), s_b, coin_b).astype(np.int8)
        return Rounds(alice, bob, c=c, T=T)


def protocol4_round(lams, l: int, k: int, P: Polyhedron, n: int, rng) -> RoundOutcome:
    return Protocol4(P, n).vertex_round(lams, l, k, rng)


def protocol4_full(a, b, lams, P: Polyhedron, n: int, rng) -> RoundOutcome:
    return Protocol4(P, n).round(lams, a, b, rng)


def protocol4_visibility(P: Polyhedron, n: int) -> float:
    prof = gamma_profile(P)
    x = 1 - 2 * prof.gamma_min / P.D
    return prof.gamma_min / prof.gamma_max * (1 - x ** n) * inscribed_radius(prof.m_vectors) ** 2


# ---------------------------------------------------------------------------

def build_protocol(protocol: str, P: Optional[Polyhedron] = None, *, n: int = 2, alpha: float = 0.6,
                   theta: float = math.pi / 6, exact_lp: bool = False) -> Protocol:
    """Factory used by the harness and CLI."""
    P = P if P is not None else make_platonic("icosahedron")
    if protocol == "protocol1":
        return Protocol1(P, exact_lp)
    if protocol == "protocol2":
        return HalfSpaceProtocol(P, exact_lp)
    if protocol == "equatorial":
        return EquatorialProtocol()
    if protocol == "fullrank":
        return FullRankCommProtocol(werner_state(alpha), P, exact_lp)
    if protocol == "protocol4":
        return Protocol4(P, n, exact_lp)
    if protocol == "filtered":
        return FilteredLHSProtocol(P, theta)
    raise InvalidInputError(f"unknown protocol {protocol!r}; expected one of {PROTOCOL_IDS}")
