"""Seeded Monte Carlo estimation and comparison against analytic or Born targets.

Rounds are split into fixed blocks.  Each block draws from its own
counter-based Philox stream keyed by (master seed, purpose, setting pair) with
the block index in the counter, so a block's rounds do not depend on which
worker runs it.  Workers return integer sums, which merge exactly; the final
estimate is therefore identical for any worker count.
"""

from __future__ import annotations

import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidInputError
from .geometry import PLATONIC, Polyhedron, iterate_family, make_platonic
from .protocols import PROTOCOL_IDS, Protocol, Protocol4, build_protocol
from .quantum import DensityState, born_statistics, chsh_optimal_settings

BLOCK_SIZE = 1 << 16
DEFAULT_ROUNDS = 10 ** 6
DEFAULT_SIGMA = 5.0
WORKERS_ENV = "FINITELHV_WORKERS"
_TAGS = {"shared": 1, "local": 2, "settings": 3}


def stream(seed: int, purpose: str, index: int = 0, block: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, purpose, index)``, positioned at ``block``."""
    key = np.random.SeedSequence([seed, _TAGS[purpose], index]).generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, block, 0]))


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise InvalidInputError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if value < 1:
        raise InvalidInputError(f"{WORKERS_ENV} must be >= 1")
    return value


def load_polyhedron(source: str) -> Polyhedron:
    """A Platonic solid name, ``familyK`` / ``family-K``, or a polyhedron JSON file."""
    if source in PLATONIC:
        return make_platonic(source)
    m = re.fullmatch(r"family-?(\d+)", source)
    if m:
        return iterate_family(int(m.group(1)))
    path = Path(source)
    if not path.exists():
        raise InvalidInputError(f"unknown polyhedron {source!r} (not a solid name, family member or file)")
    return Polyhedron.load(path)


@dataclass
class ExperimentConfig:
    protocol: str
    polyhedron: str = "icosahedron"
    alpha: float = 0.6
    theta: float = math.pi / 6
    eta: Optional[float] = None
    n: int = 2
    settings: object = 10
    rounds: int = DEFAULT_ROUNDS
    seed: int = 0
    workers: Optional[int] = None
    sigma: float = DEFAULT_SIGMA
    state: Optional[str] = None
    exact_lp: bool = False
    output: Optional[str] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.protocol not in PROTOCOL_IDS:
            raise InvalidInputError(f"unknown protocol {self.protocol!r}; expected one of {PROTOCOL_IDS}")
        if int(self.rounds) != self.rounds or self.rounds < 1:
            raise InvalidInputError(f"rounds must be a positive integer, got {self.rounds}")
        if self.workers is not None and self.workers < 1:
            raise InvalidInputError("workers must be >= 1")
        if self.sigma <= 0:
            raise InvalidInputError("sigma must be positive")
        if self.state is not None and not Path(self.state).exists():
            raise InvalidInputError(f"state file {self.state} does not exist")
        s = self.settings
        if isinstance(s, str):
            if s != "chsh":
                raise InvalidInputError(f"settings must be 'chsh', a count or a list of pairs, got {s!r}")
        elif isinstance(s, (int, np.integer)):
            if s < 1:
                raise InvalidInputError("random setting count must be >= 1")
        else:
            try:
                arr = np.asarray(s, dtype=float)
            except (TypeError, ValueError) as exc:
                raise InvalidInputError("settings list must hold numeric pairs") from exc
            if arr.ndim != 3 or arr.shape[1] != 2 or arr.shape[2] not in (3,):
                raise InvalidInputError("settings list must have shape (pairs, 2, 3)")

    def to_json(self) -> dict:
        d = asdict(self)
        if isinstance(self.settings, np.ndarray):
            d["settings"] = self.settings.tolist()
        return d

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidInputError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(json.loads(Path(path).read_text()))


def build_from_config(config: ExperimentConfig) -> Protocol:
    P = load_polyhedron(config.polyhedron) if config.protocol != "equatorial" else None
    if config.protocol == "fullrank" and config.state is not None:
        from .protocols import FullRankCommProtocol
        rho = DensityState.from_json(json.loads(Path(config.state).read_text()))
        return FullRankCommProtocol(rho, P, config.exact_lp)
    return build_protocol(config.protocol, P, n=config.n, alpha=config.alpha, theta=config.theta,
                          exact_lp=config.exact_lp)


def setting_pairs(config: ExperimentConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    s = config.settings
    if isinstance(s, str):
        a1, a2, b1, b2 = chsh_optimal_settings()
        if config.protocol == "equatorial":
            # the CHSH settings live in the x-z plane; map (x, y, z) -> (z, x, y)
            a1, a2, b1, b2 = (np.roll(v, 1) for v in (a1, a2, b1, b2))
        return [(a1, b1), (a1, b2), (a2, b1), (a2, b2)]
    if isinstance(s, (int, np.integer)):
        rng = stream(config.seed, "settings")
        pairs = []
        for _ in range(int(s)):
            v = rng.normal(size=(2, 3))
            if config.protocol == "equatorial":
                v[:, 2] = 0
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            pairs.append((v[0], v[1]))
        return pairs
    arr = np.asarray(s, dtype=float)
    return [(arr[i, 0], arr[i, 1]) for i in range(len(arr))]


# ---------------------------------------------------------------------------
# Estimation

@dataclass
class Sums:
    """Integer sufficient statistics of a batch of rounds."""

    N: int = 0
    a: int = 0
    b: int = 0
    ab: int = 0
    c: int = 0
    cc: int = 0
    c_max: int = 0

    def __add__(self, other: "Sums") -> "Sums":
        return Sums(self.N + other.N, self.a + other.a, self.b + other.b, self.ab + other.ab,
                    self.c + other.c, self.cc + other.cc, max(self.c_max, other.c_max))


@lru_cache(maxsize=4)
def _protocol_for(config_json: str) -> Protocol:
    return build_from_config(ExperimentConfig.from_json(json.loads(config_json)))


def _block_job(args) -> tuple[int, Sums]:
    config_json, pair, a, b, block, count, seed = args
    protocol = _protocol_for(config_json)
    shared = stream(seed, "shared", pair, block)
    local = stream(seed, "local", pair, block)
    r = protocol.sample(np.asarray(a), np.asarray(b), count, shared, local)
    a_, b_ = r.a.astype(np.int64), r.b.astype(np.int64)
    s = Sums(count, int(a_.sum()), int(b_.sum()), int((a_ * b_).sum()))
    if protocol.communicates and isinstance(protocol, Protocol4):
        c = r.c.astype(np.int64)
        s.c, s.cc, s.c_max = int(c.sum()), int((c * c).sum()), int(c.max())
    return pair, s


def _mean_se(total: int, sq_total: int, N: int) -> tuple[float, Optional[float]]:
    mean = total / N
    if N < 2:
        return mean, None
    var = max(sq_total - N * mean * mean, 0.0) / (N - 1)
    return mean, math.sqrt(var / N)


def _z(emp: float, target: float, se: Optional[float]) -> Optional[float]:
    if se is None:
        return None
    diff = emp - target
    if se == 0:
        return 0.0 if abs(diff) <= 1e-12 else math.inf
    return diff / se


@dataclass
class PairEstimate:
    a: list
    b: list
    N: int
    empirical: tuple
    se: tuple
    target: tuple
    z: tuple
    passed: Optional[bool]
    avg_comm: Optional[float] = None
    se_comm: Optional[float] = None
    target_comm: Optional[float] = None
    z_comm: Optional[float] = None
    max_comm: Optional[int] = None


@dataclass
class EstimateReport:
    config: dict
    protocol: dict
    reference: str
    pairs: list = field(default_factory=list)

    @property
    def passed(self) -> Optional[bool]:
        verdicts = [p.passed for p in self.pairs]
        if any(v is None for v in verdicts):
            return None
        return all(verdicts)

    @property
    def max_abs_z(self) -> Optional[float]:
        zs = [abs(z) for p in self.pairs for z in (*p.z, p.z_comm) if z is not None]
        return max(zs) if zs else None

    def chsh(self) -> tuple[float, float]:
        """CHSH combination of the first four pairs (CHSH-ordered settings) and its standard error."""
        if len(self.pairs) < 4:
            raise InvalidInputError("CHSH needs the four CHSH setting pairs")
        signs = (1, 1, 1, -1)
        S = sum(s * p.empirical[2] for s, p in zip(signs, self.pairs))
        se = math.sqrt(sum(p.se[2] ** 2 for p in self.pairs[:4]))
        return S, se

    def to_json(self) -> dict:
        return {"config": self.config, "protocol": self.protocol, "reference": self.reference,
                "passed": self.passed, "max_abs_z": self.max_abs_z,
                "pairs": [asdict(p) for p in self.pairs]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True, default=_jsonable)

    def to_csv(self) -> str:
        from .analysis import fmt
        head = ["pair", "N", "mean_a", "mean_b", "corr_ab", "se_a", "se_b", "se_ab", "target_a", "target_b",
                "target_ab", "z_a", "z_b", "z_ab", "avg_comm", "z_comm", "passed"]
        lines = [",".join(head)]
        for i, p in enumerate(self.pairs):
            row = [i, p.N, *p.empirical, *p.se, *p.target, *p.z, p.avg_comm, p.z_comm, p.passed]
            lines.append(",".join("" if v is None else fmt(v) if not isinstance(v, bool) else str(v).lower()
                                  for v in row))
        return "\n".join(lines) + "\n"


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x)}")


def _blocks(N: int, block_size: int):
    out, start, k = [], 0, 0
    while start < N:
        out.append((k, min(block_size, N - start)))
        start += block_size
        k += 1
    return out


def _estimate(config: ExperimentConfig, reference: str, block_size: int = BLOCK_SIZE) -> EstimateReport:
    protocol = build_from_config(config)
    pairs = [protocol.normalize_settings(a, b) for a, b in setting_pairs(config)]
    config_json = json.dumps(config.to_json(), sort_keys=True, default=_jsonable)
    jobs = [(config_json, i, a.tolist(), b.tolist(), blk, count, config.seed)
            for i, (a, b) in enumerate(pairs) for blk, count in _blocks(int(config.rounds), block_size)]
    workers = config.workers or default_workers()
    totals = [Sums() for _ in pairs]
    if workers == 1 or len(jobs) == 1:
        results = map(_block_job, jobs)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(_block_job, jobs, chunksize=max(1, len(jobs) // (4 * workers)))
    for i, s in results:
        totals[i] = totals[i] + s
    if workers != 1 and len(jobs) != 1:
        pool.shutdown()

    ref_state = protocol.reference_state() if reference == "quantum" else None
    report = EstimateReport(config.to_json(), protocol.spec().to_json(), reference)
    for (a, b), s in zip(pairs, totals):
        N = s.N
        emp_se = [_mean_se(s.a, N, N), _mean_se(s.b, N, N), _mean_se(s.ab, N, N)]
        target = born_statistics(ref_state, a, b) if ref_state is not None else protocol.target(a, b)
        emp = tuple(m for m, _ in emp_se)
        se = tuple(e for _, e in emp_se)
        z = tuple(_z(m, t, e) for m, t, e in zip(emp, target, se))
        est = PairEstimate(a.tolist(), b.tolist(), N, emp, se, tuple(float(t) for t in target), z, None)
        if isinstance(protocol, Protocol4):
            est.avg_comm, est.se_comm = _mean_se(s.c, s.cc, N)
            est.target_comm = protocol.expected_comm(a, b)
            est.z_comm = _z(est.avg_comm, est.target_comm, est.se_comm)
            est.max_comm = s.c_max
        zs = [v for v in (*z, est.z_comm) if v is not None]
        if N >= 2:
            est.passed = all(abs(v) < config.sigma for v in zs)
        report.pairs.append(est)
    if config.output:
        Path(config.output).write_text(report.dumps())
    return report


def run_experiment(config: ExperimentConfig, block_size: int = BLOCK_SIZE) -> EstimateReport:
    """Sample ``config.rounds`` rounds per setting pair and compare with the
    protocol's closed-form statistics."""
    return _estimate(config, "closed-form", block_size)


def verify_against_quantum(config: ExperimentConfig, block_size: int = BLOCK_SIZE) -> EstimateReport:
    """As :func:`run_experiment`, with Born statistics of the protocol's reference state as targets."""
    return _estimate(config, "quantum", block_size)


def round_log(config: ExperimentConfig, pair: int = 0, rounds: int = 1000) -> str:
    """CSV ``round,a,b,c,T`` for the first rounds of one setting pair (block 0 stream)."""
    from .analysis import fmt
    protocol = build_from_config(config)
    a, b = protocol.normalize_settings(*setting_pairs(config)[pair])
    r = protocol.sample(a, b, min(rounds, BLOCK_SIZE), stream(config.seed, "shared", pair, 0),
                        stream(config.seed, "local", pair, 0))
    lines = ["round,a,b,c,T"]
    for i in range(len(r.a)):
        c = "" if r.c is None else fmt(int(r.c[i]))
        T = "" if r.T is None else fmt(int(r.T[i]))
        lines.append(f"{i},{int(r.a[i])},{int(r.b[i])},{c},{T}")
    return "\n".join(lines) + "\n"


def chsh_pairs() -> Sequence:
    a1, a2, b1, b2 = chsh_optimal_settings()
    return [(a1, b1), (a1, b2), (a2, b1), (a2, b2)]


__all__ = ["stream", "ExperimentConfig", "EstimateReport", "PairEstimate", "Sums", "run_experiment",
           "verify_against_quantum", "round_log", "load_polyhedron", "setting_pairs", "default_workers",
           "BLOCK_SIZE", "chsh_pairs"]
