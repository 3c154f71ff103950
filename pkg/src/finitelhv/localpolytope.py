"""Local-polytope membership for finite two-outcome Bell scenarios.

A behavior with ``m_A`` and ``m_B`` binary settings is stored in correlator
form ``t = (1, <a_x>, <b_y>, <a_x b_y>)``; a deterministic strategy
``(alpha, beta) in {+-1}^m_A x {+-1}^m_B`` has the column
``(1, alpha, beta, alpha (x) beta)``.  Membership is decided by the
white-noise robustness LP

    maximize v   s.t.   sum_s w_s A_s - v (t - t0) = t0,   w >= 0,   0 <= v <= 1

with ``t0`` the uniformly random (local) behavior.  The behavior is local iff
``v* = 1``; otherwise the optimal duals give a Bell functional that every
deterministic strategy satisfies and the behavior violates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DecompositionError, InvalidInputError, NumericalError, VisibilityTooHighError
from .geometry import Polyhedron, convex_decompose, inscribed_radius, unit
from .quantum import CorrelationTriple, DensityState, born_statistics, joint_probabilities, noisy_state
from .simplex import Simplex, to_fraction

MAX_SETTINGS = 10
EXPLICIT_LIMIT = 2 ** 14


def _signs(m: int) -> np.ndarray:
    """All ``2^m`` sign vectors; row ``k`` has entry ``x`` equal to -1 iff bit ``x`` of ``k`` is set."""
    k = np.arange(2 ** m)[:, None]
    return (1 - 2 * ((k >> np.arange(m)) & 1)).astype(np.int64)


@dataclass
class BehaviorTable:
    """``probs[x, y, i, j] = p(a, b | x, y)`` with ``i, j = 0`` for outcome +1."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 4 or p.shape[2:] != (2, 2):
            raise InvalidInputError("probabilities must have shape (m_A, m_B, 2, 2)")
        if p.min() < -1e-12 or np.abs(p.sum(axis=(2, 3)) - 1).max() > 1e-12:
            raise InvalidInputError("each (x, y) slice must be a probability distribution")
        pa = p.sum(axis=3)
        pb = p.sum(axis=2)
        if np.abs(pa - pa[:, :1]).max() > 1e-10 or np.abs(pb - pb[:1]).max() > 1e-10:
            raise InvalidInputError("behavior is signaling")
        self.probs = p

    @property
    def m_A(self) -> int:
        return self.probs.shape[0]

    @property
    def m_B(self) -> int:
        return self.probs.shape[1]

    def correlators(self):
        """``(<a_x>, <b_y>, <a_x b_y>)`` arrays."""
        p = self.probs
        ma = (p[:, 0, 0, :].sum(-1) - p[:, 0, 1, :].sum(-1))
        mb = (p[0, :, :, 0].sum(-1) - p[0, :, :, 1].sum(-1))
        corr = p[..., 0, 0] + p[..., 1, 1] - p[..., 0, 1] - p[..., 1, 0]
        return ma, mb, corr

    def vector(self) -> np.ndarray:
        ma, mb, corr = self.correlators()
        return np.concatenate([[1.0], ma, mb, corr.ravel()])

    @classmethod
    def from_correlators(cls, ma, mb, corr) -> "BehaviorTable":
        ma, mb, corr = np.asarray(ma, float), np.asarray(mb, float), np.asarray(corr, float)
        s = np.array([1, -1])
        p = (1 + ma[:, None, None, None] * s[:, None] + mb[None, :, None, None] * s[None, :]
             + corr[:, :, None, None] * np.outer(s, s)) / 4
        return cls(p)


@dataclass(frozen=True)
class DeterministicStrategy:
    alice: tuple
    bob: tuple

    def column(self) -> np.ndarray:
        a, b = np.array(self.alice), np.array(self.bob)
        return np.concatenate([[1], a, b, np.outer(a, b).ravel()])


@dataclass
class LocalModel:
    """Finite mixture of deterministic strategies."""

    strategies: list
    weights: list
    m_A: int
    m_B: int
    exact: bool = False

    feasible = True

    @property
    def support_size(self) -> int:
        return len(self.strategies)

    @property
    def bits(self) -> float:
        return math.log2(self.support_size)

    def correlators(self):
        w = np.array([float(x) for x in self.weights])
        A = np.array([s.alice for s in self.strategies], dtype=float)
        B = np.array([s.bob for s in self.strategies], dtype=float)
        return w @ A, w @ B, np.einsum("s,sx,sy->xy", w, A, B)

    def exact_vector(self) -> np.ndarray:
        total = np.array([Fraction(0)] * (1 + self.m_A + self.m_B + self.m_A * self.m_B), dtype=object)
        for s, w in zip(self.strategies, self.weights):
            total = total + to_fraction(w) * s.column().astype(object)
        return total

    def behavior(self) -> BehaviorTable:
        return BehaviorTable.from_correlators(*self.correlators())

    def sample_strategy(self, rng: np.random.Generator) -> DeterministicStrategy:
        w = np.array([float(x) for x in self.weights])
        return self.strategies[int(min(np.searchsorted(np.cumsum(w), rng.random() * w.sum()), len(w) - 1))]

    def to_json(self) -> dict:
        return {
            "m_A": self.m_A, "m_B": self.m_B, "bits": self.bits, "exact": self.exact,
            "strategies": [{"alice": list(s.alice), "bob": list(s.bob), "weight": float(w),
                            "weight_exact": str(to_fraction(w)) if self.exact else None}
                           for s, w in zip(self.strategies, self.weights)],
        }

    @classmethod
    def from_json(cls, data: dict) -> "LocalModel":
        exact = bool(data.get("exact"))
        strategies, weights = [], []
        for item in data["strategies"]:
            strategies.append(DeterministicStrategy(tuple(item["alice"]), tuple(item["bob"])))
            weights.append(Fraction(item["weight_exact"]) if exact and item.get("weight_exact")
                           else float(item["weight"]))
        return cls(strategies, weights, int(data["m_A"]), int(data["m_B"]), exact)


@dataclass
class BellCertificate:
    """``sum_x A_x <a_x> + sum_y B_y <b_y> + sum_xy C_xy <a_x b_y> <= local_bound``,
    violated by the behavior (``value > local_bound``)."""

    alice: np.ndarray
    bob: np.ndarray
    corr: np.ndarray
    local_bound: float
    value: float
    visibility: float

    feasible = False

    @property
    def margin(self) -> float:
        return self.value - self.local_bound

    def evaluate(self, table: BehaviorTable) -> float:
        ma, mb, corr = table.correlators()
        return float(self.alice @ ma + self.bob @ mb + (self.corr * corr).sum())

    def to_json(self) -> dict:
        return {"alice": self.alice.tolist(), "bob": self.bob.tolist(), "corr": self.corr.tolist(),
                "local_bound": self.local_bound, "value": self.value, "margin": self.margin,
                "critical_visibility": self.visibility}


def brute_force_local_bound(alice, bob, corr) -> float:
    """Maximum of the functional over every deterministic strategy."""
    alice, bob, corr = np.asarray(alice, float), np.asarray(bob, float), np.asarray(corr, float)
    SA, SB = _signs(len(alice)), _signs(len(bob))
    best = -np.inf
    for start in range(0, len(SA), 256):
        a = SA[start:start + 256]
        vals = (a @ alice)[:, None] + (SB @ bob)[None, :] + a @ corr @ SB.T
        best = max(best, float(vals.max()))
    return best


# ---------------------------------------------------------------------------

def behavior_from_state(rho: DensityState, settings_A: Sequence, settings_B: Sequence) -> BehaviorTable:
    """Born-rule behavior of a two-qubit state on finite projective settings."""
    mA, mB = len(settings_A), len(settings_B)
    if not (1 <= mA <= MAX_SETTINGS and 1 <= mB <= MAX_SETTINGS):
        raise InvalidInputError(f"setting counts must lie in 1..{MAX_SETTINGS} (got {mA}, {mB})")
    probs = np.array([[joint_probabilities(rho, a, b) for b in settings_B] for a in settings_A])
    return BehaviorTable(probs)


class _Pricer:
    """Best-response oracle: the strategy maximizing ``y . A_s``."""

    def __init__(self, mA: int, mB: int, exact: bool):
        self.mA, self.mB, self.exact = mA, mB, exact
        self.SA = _signs(mA)

    def best(self, y):
        mA, mB = self.mA, self.mB
        y = y[: 1 + mA + mB + mA * mB]
        if self.exact:
            den = math.lcm(*(Fraction(v).denominator for v in y))
            y = np.array([int(Fraction(v) * den) for v in y], dtype=object)
        ya, yb = y[1:1 + mA], y[1 + mA:1 + mA + mB]
        Y = y[1 + mA + mB:].reshape(mA, mB)
        SA = self.SA.astype(object) if self.exact else self.SA
        field_b = yb[None, :] + SA @ Y  # (2^mA, mB)
        vals = y[0] + SA @ ya + np.abs(field_b).sum(axis=1)
        k = int(np.argmax(vals))
        alice = self.SA[k]
        bob = np.where(np.array([v >= 0 for v in field_b[k]]), 1, -1)
        return vals[k], alice, bob

    def __call__(self, y):
        val, alice, bob = self.best(y)
        if val <= (0 if self.exact else 1e-12):
            return None
        s = DeterministicStrategy(tuple(int(v) for v in alice), tuple(int(v) for v in bob))
        return np.concatenate([s.column(), [0]]), 0, s


def _strategy_columns(mA: int, mB: int):
    SA, SB = _signs(mA), _signs(mB)
    strategies, cols = [], []
    for a in SA:
        for b in SB:
            strategies.append(DeterministicStrategy(tuple(int(v) for v in a), tuple(int(v) for v in b)))
            cols.append(np.concatenate([[1], a, b, np.outer(a, b).ravel(), [0]]))
    return strategies, np.array(cols, dtype=float).T


def _build_lp(t, mA, mB, exact: bool, explicit: bool):
    rows = len(t)
    t0 = np.zeros(rows, dtype=object if exact else float)
    t0[:] = Fraction(0) if exact else 0.0
    t0[0] = Fraction(1) if exact else 1.0
    lp = Simplex(np.concatenate([t0, [Fraction(1) if exact else 1.0]]), exact=exact)
    lp.add_column(np.concatenate([-(t - t0), [1]]), cost=-1, key="v")
    lp.add_column(np.concatenate([np.zeros(rows), [1]]), cost=0, key="z")
    if explicit:
        strategies, cols = _strategy_columns(mA, mB)
        lp.add_columns(cols, keys=strategies)
    return lp


def local_membership(table: BehaviorTable, exact: bool = False,
                     explicit: Optional[bool] = None) -> Union[LocalModel, BellCertificate]:
    """Decide whether ``table`` lies in the local polytope.

    ``exact=True`` certifies the floating-point answer with a rational simplex
    warm-started from the floating basis.  Returns a :class:`LocalModel` or a
    validated :class:`BellCertificate`.
    """
    mA, mB = table.m_A, table.m_B
    t = table.vector()
    n_strat = 2 ** (mA + mB)
    if explicit is None:
        explicit = n_strat <= EXPLICIT_LIMIT
    pricer = _Pricer(mA, mB, exact=False)
    lp = _build_lp(t, mA, mB, exact=False, explicit=explicit)
    res = lp.solve(pricer=None if explicit else pricer)
    if res.status != "optimal":
        raise NumericalError(f"robustness LP ended with status {res.status} after {res.iterations} pivots")
    if exact:
        keys = [res.keys[j] if j >= 0 else j for j in res.basis]
        t_exact = np.array([to_fraction(v) for v in t], dtype=object)
        xlp = _build_lp(t_exact, mA, mB, exact=True, explicit=False)
        basis = []
        for key in keys:
            if isinstance(key, DeterministicStrategy):
                basis.append(xlp.add_column(np.concatenate([key.column(), [0]]), 0, key))
            elif key in ("v", "z"):
                basis.append(xlp._index[key])
            else:
                basis.append(key)
        res = xlp.solve(pricer=_Pricer(mA, mB, exact=True), basis=basis)
        if res.status != "optimal":
            raise NumericalError(f"exact robustness LP ended with status {res.status}")
    values = dict(zip(res.keys, res.x))
    v_star = values.get("v", 0)
    one = 1 if exact else 1 - 1e-9
    if v_star >= one:
        strategies, weights = [], []
        for key, w in zip(res.keys, res.x):
            if isinstance(key, DeterministicStrategy) and w > (0 if exact else 1e-12):
                strategies.append(key)
                weights.append(w)
        if not exact:
            total = float(sum(weights))
            weights = [float(w) / total for w in weights]
        model = LocalModel(strategies, weights, mA, mB, exact)
        _check_model(model, table)
        return model
    return _certificate(res.duals, t, mA, mB, float(v_star))


def _check_model(model: LocalModel, table: BehaviorTable):
    if model.exact:
        gap = max(abs(float(a - to_fraction(b))) for a, b in zip(model.exact_vector(), table.vector()))
        if gap != 0:
            raise NumericalError(f"exact model misses the behavior by {gap:.3g}")
        return
    ma, mb, corr = model.correlators()
    ta, tb, tc = table.correlators()
    gap = max(np.abs(ma - ta).max(), np.abs(mb - tb).max(), np.abs(corr - tc).max())
    if gap > 1e-9:
        raise NumericalError(f"local model reproduces the behavior only to {gap:.3g}")


def _certificate(duals, t, mA, mB, v_star) -> BellCertificate:
    y = np.array([float(v) for v in duals[: 1 + mA + mB + mA * mB]])
    coeff = y[1:]
    scale = np.abs(coeff[mA + mB:]).max() if mA * mB else 0.0
    if scale <= 1e-14:
        scale = np.abs(coeff).max()
    if scale <= 1e-14:
        raise NumericalError("robustness LP returned a vanishing dual functional")
    coeff = coeff / scale
    alice, bob = coeff[:mA], coeff[mA:mA + mB]
    corr = coeff[mA + mB:].reshape(mA, mB)
    bound = brute_force_local_bound(alice, bob, corr)
    value = float(coeff @ t[1:])
    if value <= bound + 1e-9:
        raise NumericalError(f"dual functional does not separate (value {value:.6g}, local bound {bound:.6g})")
    return BellCertificate(alice, bob, corr, bound, value, v_star)


# ---------------------------------------------------------------------------
# Noisy states: finite model from a decomposition over polyhedron directions

def direction_representatives(P: Polyhedron):
    """One vertex per antipodal pair: ``(directions, index, sign)`` with
    ``V[i] = sign[i] * directions[index[i]]``."""
    V = P.vertices
    reps, index, sign = [], np.empty(P.D, dtype=int), np.empty(P.D, dtype=int)
    for i, v in enumerate(V):
        for j, u in enumerate(reps):
            if np.abs(v - u).max() < 1e-9:
                index[i], sign[i] = j, 1
                break
            if np.abs(v + u).max() < 1e-9:
                index[i], sign[i] = j, -1
                break
        else:
            reps.append(v)
            index[i], sign[i] = len(reps) - 1, 1
    return np.array(reps), index, sign


@dataclass
class CompositeModel:
    """Each party spreads ``eta * setting`` over the vertices of ``P`` (local
    randomness); the vertex is measured through the shared finite LocalModel on
    one direction per antipodal pair, flipping the outcome for the antipode."""

    P: Polyhedron
    eta: float
    model: LocalModel
    directions: np.ndarray
    index: np.ndarray
    sign: np.ndarray
    exact_lp: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def bits(self) -> float:
        return self.model.bits

    def _direction_weights(self, a) -> np.ndarray:
        a = unit(a)
        key = tuple(np.round(a, 12))
        if key not in self._cache:
            try:
                w = convex_decompose(self.eta * a, self.P, exact=self.exact_lp).weights
            except DecompositionError as exc:
                raise VisibilityTooHighError(f"eta={self.eta} exceeds what {self.P.name} can shrink into") from exc
            out = np.zeros(len(self.directions))
            np.add.at(out, self.index, w * self.sign)
            self._cache[key] = out
        return self._cache[key]

    def statistics(self, a, b) -> CorrelationTriple:
        ma, mb, corr = self.model.correlators()
        wa, wb = self._direction_weights(a), self._direction_weights(b)
        return CorrelationTriple(float(wa @ ma), float(wb @ mb), float(wa @ corr @ wb))

    def round(self, a, b, shared: np.random.Generator, local: np.random.Generator):
        s = self.model.sample_strategy(shared)
        out = []
        for setting, table in ((a, s.alice), (b, s.bob)):
            w = convex_decompose(self.eta * unit(setting), self.P).weights
            i = int(min(np.searchsorted(np.cumsum(w), local.random()), len(w) - 1))
            out.append(int(self.sign[i] * table[self.index[i]]))
        return tuple(out)


def finite_model_for_noisy_state(rho: DensityState, eta: float, P: Polyhedron,
                                 exact: bool = True) -> CompositeModel:
    """Finite-shared-randomness model for ``noisy_state(rho, eta)``.

    Requires ``eta <= inscribed_radius(P)`` and a local behavior of ``rho`` on
    the directions of ``P``; otherwise the decomposition error or the Bell
    certificate is raised.
    """
    if not 0 <= eta < 1:
        raise InvalidInputError(f"eta must lie in [0, 1), got {eta}")
    ell = inscribed_radius(P)
    if eta > ell + 1e-12:
        raise VisibilityTooHighError(f"eta={eta} exceeds the inscribed radius {ell:.9f} of {P.name}")
    directions, index, sign = direction_representatives(P)
    table = behavior_from_state(rho, list(directions), list(directions))
    result = local_membership(table, exact=exact)
    if isinstance(result, BellCertificate):
        raise NonlocalBehaviorError(result)
    return CompositeModel(P, eta, result, directions, index, sign, exact)


class NonlocalBehaviorError(NumericalError):
    def __init__(self, certificate: BellCertificate):
        super().__init__(f"behavior on the polyhedron directions is nonlocal (margin {certificate.margin:.6g})")
        self.certificate = certificate


def composite_deviation(model: CompositeModel, rho: DensityState, pairs) -> float:
    """Largest gap between the composite model and Born statistics of the noisy state."""
    target_state = noisy_state(rho, model.eta)
    worst = 0.0
    for a, b in pairs:
        got, want = model.statistics(a, b), born_statistics(target_state, a, b)
        worst = max(worst, max(abs(x - y) for x, y in zip(got, want)))
    return worst
