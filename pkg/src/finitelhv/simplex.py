"""Dense revised simplex over floats or exact rationals.

Solves ``min c.x  s.t.  A x = b,  x >= 0``.  Columns can be given up front or
produced lazily by a pricing callback (column generation).  The same code
path runs in floating point (tolerance based) or on :class:`fractions.Fraction`
entries with exact comparisons, so a floating solve can be certified exactly
by warm-starting the rational solver from its final basis.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Hashable, Optional, Sequence

import numpy as np

from .errors import NumericalError

Pricer = Callable[[np.ndarray], Optional[tuple]]


def to_fraction(x) -> Fraction:
    """Exact rational value of a float/int/Fraction (floats convert without rounding)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return Fraction(float(x))


def _exact_inverse(B: np.ndarray) -> np.ndarray:
    n = B.shape[0]
    M = np.empty((n, 2 * n), dtype=object)
    M[:, :n] = B
    M[:, n:] = 0
    for i in range(n):
        M[i, n + i] = Fraction(1)
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r, col] != 0), None)
        if piv is None:
            raise np.linalg.LinAlgError("singular basis")
        if piv != col:
            M[[col, piv]] = M[[piv, col]]
        M[col] = M[col] / M[col, col]
        for r in range(n):
            if r != col and M[r, col] != 0:
                M[r] = M[r] - M[r, col] * M[col]
    return M[:, n:]


@dataclass
class LPResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: np.ndarray  # structural column values, insertion order
    objective: object
    duals: np.ndarray  # row multipliers; the phase-1 Farkas vector when infeasible
    basis: list
    keys: list
    iterations: int
    exact: bool

    @property
    def support(self) -> list:
        zero = 0 if self.exact else 1e-12
        return [j for j, v in enumerate(self.x) if v > zero]


class Simplex:
    """Revised simplex on a growing column set.

    Artificial variables are encoded in the basis as negative integers
    ``-(i + 1)`` for row ``i``; structural columns are ``0, 1, ...``.
    """

    refactor_every = 40
    stall_limit = 50

    def __init__(self, b: Sequence, *, exact: bool = False, tol: float = 1e-10):
        self.exact = exact
        self.tol = 0 if exact else tol
        self.pivot_tol = 0 if exact else 1e-9
        b = self._vec(b)
        self.m = len(b)
        self._sign = np.array([-1 if v < 0 else 1 for v in b], dtype=object if exact else float)
        self.b = b * self._sign
        self._A = np.zeros((self.m, 0), dtype=object if exact else float)
        self._c = np.zeros(0, dtype=object if exact else float)
        self.keys: list = []
        self._index: dict = {}

    # -- data ------------------------------------------------------------
    def _vec(self, v) -> np.ndarray:
        if self.exact:
            return np.array([to_fraction(x) for x in v], dtype=object)
        return np.asarray(v, dtype=float).copy()

    def _zero(self):
        return Fraction(0) if self.exact else 0.0

    @property
    def n(self) -> int:
        return self._A.shape[1]

    def add_column(self, column: Sequence, cost=0, key: Hashable = None) -> int:
        if key is not None and key in self._index:
            return self._index[key]
        return self.add_columns(np.asarray(column).reshape(-1, 1), [cost], [key])[0]

    def add_columns(self, columns, costs=None, keys=None) -> list[int]:
        columns = np.asarray(columns)
        k = columns.shape[1]
        if costs is None:
            costs = [0] * k
        if keys is None:
            keys = [None] * k
        if self.exact:
            block = np.array([[to_fraction(x) for x in row] for row in columns], dtype=object).reshape(self.m, k)
            cvec = np.array([to_fraction(c) for c in costs], dtype=object)
        else:
            block = np.asarray(columns, dtype=float).reshape(self.m, k)
            cvec = np.asarray(costs, dtype=float)
        block = block * self._sign[:, None]
        start = self.n
        self._A = np.concatenate([self._A, block], axis=1)
        self._c = np.concatenate([self._c, cvec])
        out = []
        for j, key in enumerate(keys):
            self.keys.append(key)
            if key is not None:
                self._index[key] = start + j
            out.append(start + j)
        return out

    def _column(self, j: int) -> np.ndarray:
        if j >= 0:
            return self._A[:, j]
        e = np.zeros(self.m, dtype=object if self.exact else float)
        if self.exact:
            e[:] = Fraction(0)
            e[-j - 1] = Fraction(1)
        else:
            e[-j - 1] = 1.0
        return e

    # -- basis handling ----------------------------------------------------
    def _set_basis(self, basis: list) -> bool:
        B = np.column_stack([self._column(j) for j in basis])
        try:
            Binv = _exact_inverse(B) if self.exact else np.linalg.inv(B)
        except np.linalg.LinAlgError:
            return False
        xB = Binv.dot(self.b)
        if any(v < -self.tol for v in xB):
            return False
        if not self.exact and np.abs(B @ xB - self.b).max() > 1e-8:
            return False
        self.basis, self.Binv, self.xB = list(basis), Binv, xB
        return True

    def _cold_start(self):
        self.basis = [-(i + 1) for i in range(self.m)]
        if self.exact:
            self.Binv = np.array([[Fraction(int(i == j)) for j in range(self.m)] for i in range(self.m)], dtype=object)
        else:
            self.Binv = np.eye(self.m)
        self.xB = self.b.copy()

    def _refactor(self):
        B = np.column_stack([self._column(j) for j in self.basis])
        self.Binv = _exact_inverse(B) if self.exact else np.linalg.inv(B)
        self.xB = self.Binv.dot(self.b)

    def _cost(self, j: int, phase: int):
        if phase == 1:
            if j < 0:
                return Fraction(1) if self.exact else 1.0
            return self._zero()
        return self._c[j] if j >= 0 else self._zero()

    def _pivot(self, r: int, enter: int, u: np.ndarray):
        theta = self.xB[r] / u[r]
        self.xB = self.xB - theta * u
        self.xB[r] = theta
        row = self.Binv[r] / u[r]
        self.Binv = self.Binv - np.outer(u, row)
        self.Binv[r] = row
        self.basis[r] = enter

    def _duals(self, phase: int) -> np.ndarray:
        cB = np.array([self._cost(j, phase) for j in self.basis], dtype=object if self.exact else float)
        return cB.dot(self.Binv)

    def _entering(self, d: np.ndarray, bland: bool) -> Optional[int]:
        if self.exact:
            neg = np.array([v < 0 for v in d], dtype=bool)
        else:
            neg = d < -self.tol
        basic = [j for j in self.basis if j >= 0]
        neg[basic] = False
        candidates = np.flatnonzero(neg)
        if not len(candidates):
            return None
        if bland:
            return int(candidates[0])
        return int(candidates[np.argmin(d[candidates])])

    def _run(self, phase: int, pricer: Optional[Pricer], max_iter: int) -> str:
        # Dantzig pricing; Bland's rule while pivots stall, which rules out cycling.
        since_refactor = 0
        stalled = 0
        while True:
            if self.iterations >= max_iter:
                raise NumericalError(f"simplex did not converge in {max_iter} iterations")
            y = self._duals(phase)
            enter = None
            if self.n:
                d = -y.dot(self._A)
                if phase == 2:
                    d = d + self._c
                enter = self._entering(d, bland=stalled >= self.stall_limit)
            if enter is None and pricer is not None:
                proposal = pricer(y * self._sign)
                if proposal is not None:
                    column, cost, key = proposal
                    if key is None or key not in self._index:
                        j = self.add_column(column, cost, key)
                        dj = (self._c[j] if phase == 2 else self._zero()) - y.dot(self._A[:, j])
                        if dj < -self.tol:
                            enter = j
            if enter is None:
                return "optimal"
            u = self.Binv.dot(self._A[:, enter])
            best, r = None, None
            for i, ui in enumerate(u):
                j = self.basis[i]
                eligible = ui > self.pivot_tol or (phase == 2 and j < 0 and abs(ui) > self.pivot_tol)
                if not eligible:
                    continue
                ratio = self.xB[i] / ui if ui > 0 else self._zero()
                if ratio < 0:
                    ratio = self._zero()
                if best is None or ratio < best - self.tol or (abs(ratio - best) <= self.tol and j < self.basis[r]):
                    best, r = ratio, i
            if r is None:
                return "unbounded"
            stalled = stalled + 1 if best <= self.tol else 0
            self._pivot(r, enter, u)
            self.iterations += 1
            since_refactor += 1
            if not self.exact and since_refactor >= self.refactor_every:
                self._refactor()
                since_refactor = 0

    def _drive_out_artificials(self):
        for r, j in enumerate(list(self.basis)):
            if j >= 0:
                continue
            row = self.Binv[r].dot(self._A) if self.n else []
            in_basis = set(self.basis)
            for k, v in enumerate(row):
                if k not in in_basis and abs(v) > self.pivot_tol:
                    self._pivot(r, k, self.Binv.dot(self._A[:, k]))
                    break

    # -- driver --------------------------------------------------------------
    def solve(self, pricer: Optional[Pricer] = None, basis: Optional[list] = None,
              max_iter: int = 100_000) -> LPResult:
        """Run phase 1 (if needed) then phase 2.

        ``basis`` optionally warm-starts from a list of column indices (artificials
        as ``-(i+1)``); it is ignored if singular or primal infeasible.
        ``pricer(y)`` receives the duals in the original row orientation and
        returns ``(column, cost, key)`` for a column to add, or ``None``.
        """
        self.iterations = 0
        if basis is None or not self._set_basis(basis):
            self._cold_start()
        if any(j < 0 and v > self.tol for j, v in zip(self.basis, self.xB)):
            self._run(1, pricer, max_iter)
            if not self.exact:
                self._refactor()
            infeas = sum((v for j, v in zip(self.basis, self.xB) if j < 0), self._zero())
            if infeas > (0 if self.exact else 1e-9):
                return self._result("infeasible", self._duals(1) * self._sign, infeas)
        self._drive_out_artificials()
        status = self._run(2, pricer, max_iter)
        if not self.exact:
            self._refactor()
            self.xB = np.where(np.abs(self.xB) < 1e-14, 0.0, self.xB)
        objective = sum((self._c[j] * v for j, v in zip(self.basis, self.xB) if j >= 0), self._zero())
        return self._result(status, self._duals(2) * self._sign, objective)

    def _result(self, status, duals, objective) -> LPResult:
        x = np.array([self._zero()] * self.n, dtype=object if self.exact else float)
        for j, v in zip(self.basis, self.xB):
            if j >= 0:
                x[j] = v
        return LPResult(status, x, objective, duals, list(self.basis), list(self.keys),
                        self.iterations, self.exact)
