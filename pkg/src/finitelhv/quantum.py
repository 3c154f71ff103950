"""Exact quantum reference values from small density matrices.

States are dense complex matrices on ``C^dA (x) C^dB`` with ``dA, dB <= 3``.
Qubit measurements are ``+-1`` observables ``a.sigma`` with projectors
``(I +- a.sigma)/2``; outcome index 0 is ``+1`` and index 1 is ``-1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConditioningError, InvalidInputError
from .geometry import unit

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SIGMA_X, SIGMA_Y, SIGMA_Z)
I2 = np.eye(2, dtype=complex)
OUTCOMES = (1, -1)


@dataclass(frozen=True, eq=False)
class DensityState:
    matrix: np.ndarray
    dims: tuple

    def __post_init__(self):
        rho = np.array(self.matrix, dtype=complex)
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 2 or rho.shape != (dims[0] * dims[1],) * 2:
            raise InvalidInputError(f"matrix shape {rho.shape} does not match dims {dims}")
        if np.abs(rho - rho.conj().T).max() > 1e-12:
            raise InvalidInputError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > 1e-12:
            raise InvalidInputError(f"trace {np.trace(rho).real} != 1")
        if np.linalg.eigvalsh(rho).min() < -1e-10:
            raise InvalidInputError("density matrix is not positive semidefinite")
        rho.setflags(write=False)
        object.__setattr__(self, "matrix", rho)
        object.__setattr__(self, "dims", dims)

    @property
    def rho_a(self) -> np.ndarray:
        return partial_trace(self.matrix, self.dims, keep=0)

    @property
    def rho_b(self) -> np.ndarray:
        return partial_trace(self.matrix, self.dims, keep=1)

    def to_json(self) -> dict:
        return {"dims": list(self.dims), "re": self.matrix.real.tolist(), "im": self.matrix.imag.tolist()}

    @classmethod
    def from_json(cls, data) -> "DensityState":
        if isinstance(data, str):
            data = json.loads(data)
        return cls(np.asarray(data["re"]) + 1j * np.asarray(data["im"]), tuple(data["dims"]))


class CorrelationTriple(NamedTuple):
    mean_a: float
    mean_b: float
    corr_ab: float


class NPTVerdict(NamedTuple):
    entangled: bool
    min_eigenvalue: float
    exact: bool  # True when PPT <=> separable for these dimensions

    def __bool__(self):
        return self.entangled


def partial_trace(rho: np.ndarray, dims, keep: int) -> np.ndarray:
    dA, dB = dims
    r = np.asarray(rho).reshape(dA, dB, dA, dB)
    return np.einsum("ijkj->ik", r) if keep == 0 else np.einsum("ijil->jl", r)


def partial_transpose(rho: np.ndarray, dims) -> np.ndarray:
    """Transpose on the second subsystem."""
    dA, dB = dims
    r = np.asarray(rho).reshape(dA, dB, dA, dB)
    return r.transpose(0, 3, 2, 1).reshape(dA * dB, dA * dB)


def observable(a) -> np.ndarray:
    a = unit(a)
    return a[0] * SIGMA_X + a[1] * SIGMA_Y + a[2] * SIGMA_Z


def projector(a, outcome: int) -> np.ndarray:
    return (I2 + outcome * observable(a)) / 2


def bloch_vector(rho2: np.ndarray) -> np.ndarray:
    return np.array([np.trace(rho2 @ s).real for s in PAULI])


def state_from_bloch(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return (I2 + r[0] * SIGMA_X + r[1] * SIGMA_Y + r[2] * SIGMA_Z) / 2


def pure_state(psi, dims) -> DensityState:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return DensityState(np.outer(psi, psi.conj()), dims)


def product_state(rho_a: np.ndarray, rho_b: np.ndarray) -> DensityState:
    return DensityState(np.kron(rho_a, rho_b), (len(rho_a), len(rho_b)))


SINGLET = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)


def werner_state(alpha: float) -> DensityState:
    """``alpha |psi-><psi-| + (1 - alpha) I/4``."""
    if not 0 <= alpha <= 1:
        raise InvalidInputError(f"alpha must lie in [0, 1], got {alpha}")
    return DensityState(alpha * np.outer(SINGLET, SINGLET.conj()) + (1 - alpha) * np.eye(4) / 4, (2, 2))


def _require_qubits(rho: DensityState):
    if rho.dims != (2, 2):
        raise InvalidInputError(f"two-qubit state required, got dims {rho.dims}")


def joint_probabilities(rho: DensityState, a, b) -> np.ndarray:
    """``p[i, j] = Tr(Pi_a^i (x) Pi_b^j rho)`` with outcome order (+1, -1)."""
    _require_qubits(rho)
    p = np.empty((2, 2))
    for i, sa in enumerate(OUTCOMES):
        for j, sb in enumerate(OUTCOMES):
            p[i, j] = np.trace(np.kron(projector(a, sa), projector(b, sb)) @ rho.matrix).real
    return p


def born_statistics(rho: DensityState, a, b) -> CorrelationTriple:
    _require_qubits(rho)
    A, B = observable(a), observable(b)
    m = rho.matrix
    return CorrelationTriple(
        float(np.trace(np.kron(A, I2) @ m).real),
        float(np.trace(np.kron(I2, B) @ m).real),
        float(np.trace(np.kron(A, B) @ m).real),
    )


def filtered_state(alpha: float, theta: float) -> DensityState:
    """``alpha |psi_t><psi_t| + (1 - alpha) I/2 (x) rho_B`` with
    ``|psi_t> = cos t |00> + sin t |11>``."""
    if not 0 <= alpha <= 1:
        raise InvalidInputError(f"alpha must lie in [0, 1], got {alpha}")
    if not 0 < theta <= np.pi / 4 + 1e-15:
        raise InvalidInputError(f"theta must lie in (0, pi/4], got {theta}")
    psi = np.array([np.cos(theta), 0, 0, np.sin(theta)], dtype=complex)
    proj = np.outer(psi, psi.conj())
    rho_b = partial_trace(proj, (2, 2), keep=1)
    return DensityState(alpha * proj + (1 - alpha) * np.kron(I2 / 2, rho_b), (2, 2))


def noisy_state(rho: DensityState, eta: float) -> DensityState:
    """The state whose projective statistics equal those of ``eta``-noisy
    measurements on ``rho``."""
    dA, dB = rho.dims
    if dA != dB:
        raise InvalidInputError("noisy_state needs equal local dimensions")
    if not 0 <= eta <= 1:
        raise InvalidInputError(f"eta must lie in [0, 1], got {eta}")
    if eta == 1:
        return rho
    d = dA
    Id = np.eye(d)
    m = (eta ** 2 * rho.matrix
         + eta * (1 - eta) * (np.kron(Id / d, rho.rho_b) + np.kron(rho.rho_a, Id / d))
         + (1 - eta) ** 2 * np.eye(d * d) / d ** 2)
    return DensityState(m, rho.dims)


def noisy_projector(P: np.ndarray, eta: float) -> np.ndarray:
    d = len(P)
    return eta * P + (1 - eta) * np.eye(d) / d


def noisy_povm_element(E: np.ndarray, eta: float) -> np.ndarray:
    """``eta E + (1 - eta) Tr(E) I/d``; no finite decomposition is claimed."""
    d = len(E)
    return eta * E + (1 - eta) * np.trace(E) * np.eye(d) / d


def noisy_meas_residual(rho: DensityState, eta: float, a, b) -> float:
    """Largest gap between ``tr[Pa (x) Pb rho(eta)]`` and ``tr[Pa(eta) (x) Pb(eta) rho]``."""
    _require_qubits(rho)
    noisy = noisy_state(rho, eta).matrix
    worst = 0.0
    for sa in OUTCOMES:
        for sb in OUTCOMES:
            Pa, Pb = projector(a, sa), projector(b, sb)
            lhs = np.trace(np.kron(Pa, Pb) @ noisy).real
            rhs = np.trace(np.kron(noisy_projector(Pa, eta), noisy_projector(Pb, eta)) @ rho.matrix).real
            worst = max(worst, abs(lhs - rhs))
    return worst


def _embed(op: np.ndarray, d_new: int) -> np.ndarray:
    out = np.zeros((d_new, d_new), dtype=complex)
    out[:len(op), :len(op)] = op
    return out


def _embed_bipartite(rho: np.ndarray, dims, new_dims) -> np.ndarray:
    dA, dB = dims
    nA, nB = new_dims
    out = np.zeros((nA, nB, nA, nB), dtype=complex)
    out[:dA, :dB, :dA, :dB] = np.asarray(rho).reshape(dA, dB, dA, dB)
    return out.reshape(nA * nB, nA * nB)


def povm_extension_state(rho: DensityState) -> DensityState:
    """``(rho + d(rho_A (x) F + F (x) rho_B) + d^2 F (x) F) / (d+1)^2`` with ``F``
    the projector on an appended level orthogonal to the support of ``rho``."""
    d = rho.dims[0]
    if rho.dims[1] != d:
        raise InvalidInputError("povm_extension_state needs equal local dimensions")
    n = d + 1
    F = np.zeros((n, n), dtype=complex)
    F[d, d] = 1
    m = (_embed_bipartite(rho.matrix, rho.dims, (n, n))
         + d * (np.kron(_embed(rho.rho_a, n), F) + np.kron(F, _embed(rho.rho_b, n)))
         + d ** 2 * np.kron(F, F)) / n ** 2
    return DensityState(m, (n, n))


def result2_example_state(alpha: float = 0.43) -> DensityState:
    """``(rho_W(alpha) + 2 |2><2| (x) I/2) / 3`` on a qutrit-qubit system."""
    w = _embed_bipartite(werner_state(alpha).matrix, (2, 2), (3, 2))
    ket2 = np.zeros((3, 3), dtype=complex)
    ket2[2, 2] = 1
    return DensityState((w + 2 * np.kron(ket2, I2 / 2)) / 3, (3, 2))


def is_entangled_npt(rho: DensityState) -> NPTVerdict:
    """Peres test; exact for 2x2 and 2x3, a one-sided certificate otherwise."""
    dA, dB = rho.dims
    if dA * dB > 9:
        raise InvalidInputError("NPT test limited to dA*dB <= 9")
    lam = float(np.linalg.eigvalsh(partial_transpose(rho.matrix, rho.dims)).min())
    return NPTVerdict(lam < -1e-10, lam, dA * dB <= 6)


def conditional_state(rho: DensityState, a, outcome: int) -> tuple[float, DensityState]:
    """Probability of Alice's ``outcome`` on setting ``a`` and Bob's normalized
    post-measurement state."""
    _require_qubits(rho)
    Pa = projector(a, outcome)
    unnorm = partial_trace(np.kron(Pa, I2) @ rho.matrix, (2, 2), keep=1)
    p = float(np.trace(unnorm).real)
    if p <= 1e-12:
        raise ConditioningError(f"outcome {outcome} has probability {p:.3g}")
    cond = (unnorm + unnorm.conj().T) / (2 * p)
    return p, DensityState(cond, (1, 2))


def chsh_value(rho: DensityState, a1, a2, b1, b2) -> float:
    E = lambda a, b: born_statistics(rho, a, b).corr_ab  # noqa: E731
    return E(a1, b1) + E(a1, b2) + E(a2, b1) - E(a2, b2)


def chsh_optimal_settings():
    """Settings maximizing CHSH on the singlet family: S = 2 sqrt(2) alpha."""
    z, x = np.array([0.0, 0, 1]), np.array([1.0, 0, 0])
    return z, x, -(z + x) / np.sqrt(2), -(z - x) / np.sqrt(2)


def correlation_matrix(rho: DensityState) -> np.ndarray:
    _require_qubits(rho)
    return np.array([[np.trace(np.kron(s, t) @ rho.matrix).real for t in PAULI] for s in PAULI])
