"""The noisy objective boundary: sampling, aggregation, oracles, replay fixtures.

Every oracle maps (assignment, game budget) to a FitnessEstimate. Synthetic
and exact oracles score against a configurable hidden landscape; replay
oracles pin estimates from fixture files; the subprocess oracle delegates to
an external evaluator over a line-delimited JSON protocol.
"""

from __future__ import annotations

import hashlib
import json
import math
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConfigError,
    EmptyBatchError,
    OracleIOError,
    ReplayMissError,
)
from .perm import Assignment, as_assignment, format_assignment, parse_assignment, rank_of

REPLAY_HEADER = "# dca-replay v1"


@dataclass(frozen=True)
class FitnessEstimate:
    """Sample mean, standard error of the mean, and sample count.

    se == 0 is reserved for exact oracles and the single-sample convention
    (n_games == 1 defines se as 0).
    """

    mean: float
    se: float
    n_games: int


def format_mean(value: float) -> str:
    """Fixed trace formatting for goal-difference means (5 decimals)."""
    return f"{value:.5f}"


def format_se(value: float) -> str:
    """Fixed trace formatting for standard errors (6 decimals)."""
    return f"{value:.6f}"


def aggregate(samples: Sequence[float]) -> FitnessEstimate:
    """Mean and standard error (n-1 divisor, over sqrt(n)) of per-game scores."""
    n = len(samples)
    if n == 0:
        raise EmptyBatchError("cannot aggregate an empty sample batch")
    mean = math.fsum(samples) / n
    if n == 1:
        return FitnessEstimate(mean=mean, se=0.0, n_games=1)
    var = math.fsum((s - mean) ** 2 for s in samples) / (n - 1)
    return FitnessEstimate(mean=mean, se=math.sqrt(var / n), n_games=n)


def significant_difference(a: FitnessEstimate, b: FitnessEstimate, tau: float = 1.0) -> bool:
    """Noise gate: the means differ by more than tau times the larger SE."""
    if tau <= 0:
        raise ConfigError(f"threshold multiplier must be positive, got {tau}")
    return abs(a.mean - b.mean) > tau * max(a.se, b.se)


@dataclass(frozen=True)
class HiddenTargetLandscape:
    """Separable fitness over permutations: weighted displacement from a target.

    true_fitness(x) = -sum_e w_e * |rank_of(x, e) - rank_of(target, e)|, so the
    target permutation scores 0 and everything else scores below it.
    """

    target: Assignment
    weights: dict[int, float]
    sigma: float = 0.0

    def __post_init__(self):
        missing = set(self.target) - set(self.weights)
        if missing:
            raise ConfigError(f"missing weights for elements {sorted(missing)}")

    @property
    def elements(self) -> tuple[int, ...]:
        return tuple(sorted(self.target))

    def true_fitness(self, x: Assignment) -> float:
        target_rank = {e: i + 1 for i, e in enumerate(self.target)}
        return -sum(
            self.weights[e] * abs(rank_of(x, e) - target_rank[e]) for e in self.target
        )

    @classmethod
    def from_config(cls, doc: dict) -> "HiddenTargetLandscape":
        allowed = {"kind", "target", "weights", "sigma"}
        unknown = set(doc) - allowed
        if unknown:
            raise ConfigError(f"unknown landscape keys: {sorted(unknown)}")
        kind = doc.get("kind", "hidden-target")
        if kind != "hidden-target":
            raise ConfigError(f"unknown landscape kind {kind!r}")
        target = (
            parse_assignment(doc["target"])
            if isinstance(doc["target"], str)
            else as_assignment(doc["target"])
        )
        raw_w = doc.get("weights", 1.0)
        if isinstance(raw_w, (int, float)):
            weights = {e: float(raw_w) for e in target}
        elif isinstance(raw_w, dict):
            weights = {int(k): float(v) for k, v in raw_w.items()}
        else:
            weights = {e: float(w) for e, w in zip(target, raw_w)}
        return cls(target=target, weights=weights, sigma=float(doc.get("sigma", 0.0)))

    def to_config(self) -> dict:
        return {
            "kind": "hidden-target",
            "target": format_assignment(self.target),
            "weights": {str(e): w for e, w in self.weights.items()},
            "sigma": self.sigma,
        }


def _stream_seed(seed: int, x: Assignment, n_games: int) -> int:
    """Per-evaluation RNG seed, stable across call order."""
    digest = hashlib.sha256(f"{seed}|{format_assignment(x)}|{n_games}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class Oracle:
    """Evaluation boundary: estimate the fitness of an assignment."""

    name = "oracle"

    def evaluate(self, x: Assignment, n_games: int) -> FitnessEstimate:
        raise NotImplementedError

    def close(self) -> None:
        pass


class ExactOracle(Oracle):
    """Noise-free oracle over a landscape; se = 0, n_games = 1."""

    name = "exact"

    def __init__(self, landscape: HiddenTargetLandscape):
        self.landscape = landscape

    def evaluate(self, x: Assignment, n_games: int = 1) -> FitnessEstimate:
        return FitnessEstimate(mean=self.landscape.true_fitness(x), se=0.0, n_games=1)


class SyntheticOracle(Oracle):
    """Gaussian per-game noise around the landscape's true fitness.

    Estimates are reproducible per (seed, assignment, n_games) regardless of
    evaluation order, so concurrent callers agree with sequential runs.
    """

    name = "synthetic"

    def __init__(self, landscape: HiddenTargetLandscape, seed: int):
        self.landscape = landscape
        self.seed = seed

    def evaluate(self, x: Assignment, n_games: int) -> FitnessEstimate:
        if n_games < 1:
            raise ConfigError(f"n_games must be >= 1, got {n_games}")
        true = self.landscape.true_fitness(x)
        if self.landscape.sigma == 0.0:
            return FitnessEstimate(mean=true, se=0.0, n_games=n_games)
        rng = np.random.default_rng(_stream_seed(self.seed, x, n_games))
        samples = true + rng.normal(0.0, self.landscape.sigma, size=n_games)
        if n_games == 1:
            return FitnessEstimate(mean=float(samples[0]), se=0.0, n_games=1)
        mean = float(samples.mean())
        se = float(samples.std(ddof=1) / math.sqrt(n_games))
        return FitnessEstimate(mean=mean, se=se, n_games=n_games)


class PoolOracle(Oracle):
    """Weighted average across an opponent pool of sub-oracles."""

    name = "pool"

    def __init__(self, members: Sequence[tuple[Oracle, float]]):
        if not members:
            raise ConfigError("opponent pool cannot be empty")
        if any(w <= 0 for _, w in members):
            raise ConfigError("pool weights must be strictly positive")
        self.members = list(members)

    def evaluate(self, x: Assignment, n_games: int) -> FitnessEstimate:
        total_w = sum(w for _, w in self.members)
        estimates = [(oracle.evaluate(x, n_games), w) for oracle, w in self.members]
        mean = sum(w * est.mean for est, w in estimates) / total_w
        se = math.sqrt(sum((w / total_w) ** 2 * est.se**2 for est, w in estimates))
        games = sum(est.n_games for est, _ in estimates)
        return FitnessEstimate(mean=mean, se=se, n_games=games)

    def close(self) -> None:
        for oracle, _ in self.members:
            oracle.close()


@dataclass
class ReplayFixture:
    """Pinned assignment -> (mean, se, n) table loaded from a replay file."""

    records: dict[str, FitnessEstimate] = field(default_factory=dict)
    path: Optional[Path] = None

    @classmethod
    def load(cls, path: str | Path) -> "ReplayFixture":
        path = Path(path)
        lines = path.read_text().splitlines()
        if not lines or lines[0].strip() != REPLAY_HEADER:
            raise ConfigError(f"{path}: missing replay header {REPLAY_HEADER!r}")
        records: dict[str, FitnessEstimate] = {}
        for raw in lines[1:]:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                key, mean_s, se_s, n_s = (part.strip() for part in line.split("|"))
                est = FitnessEstimate(mean=float(mean_s), se=float(se_s), n_games=int(n_s))
            except ValueError as err:
                raise ConfigError(f"{path}: unparseable replay line {raw!r}") from err
            records[format_assignment(parse_assignment(key))] = est
        if not records:
            raise ConfigError(f"{path}: replay fixture holds no records")
        return cls(records=records, path=path)

    def save(self, path: str | Path) -> None:
        lines = [REPLAY_HEADER]
        for key, est in self.records.items():
            lines.append(f"{key} | {format_mean(est.mean)} | {format_se(est.se)} | {est.n_games}")
        Path(path).write_text("\n".join(lines) + "\n")


class ReplayOracle(Oracle):
    """Return fixture estimates verbatim; unknown assignments fail hard."""

    name = "replay"

    def __init__(self, fixture: ReplayFixture):
        self.fixture = fixture

    def evaluate(self, x: Assignment, n_games: int) -> FitnessEstimate:
        key = format_assignment(x)
        est = self.fixture.records.get(key)
        if est is None:
            raise ReplayMissError(f"assignment {key!r} absent from replay fixture {self.fixture.path}")
        return est


class SubprocessOracle(Oracle):
    """Delegate evaluation to a child process over line-delimited JSON.

    Request:  {"assignment":[...],"games":N,"seed":S}
    Response: {"mean":M,"se":E,"n":N}
    Unknown response fields are ignored; missing ones are errors. One request
    is in flight per child at a time.
    """

    name = "subprocess"

    def __init__(self, cmd: Sequence[str], timeout: float = 30.0, seed: int = 0):
        if not cmd:
            raise ConfigError("subprocess oracle needs a command")
        self.cmd = list(cmd)
        self.timeout = timeout
        self.seed = seed
        self._child: Optional[subprocess.Popen] = None
        self._lock = threading.Lock()

    def _ensure_child(self) -> subprocess.Popen:
        if self._child is None or self._child.poll() is not None:
            self._child = subprocess.Popen(
                self.cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._child

    def _read_line(self, child: subprocess.Popen) -> str:
        result: dict[str, str] = {}

        def reader():
            result["line"] = child.stdout.readline()

        t = threading.Thread(target=reader, daemon=True)
        t.start()
        t.join(self.timeout)
        if t.is_alive():
            child.kill()
            raise OracleIOError(f"evaluator timed out after {self.timeout}s")
        return result.get("line", "")

    def evaluate(self, x: Assignment, n_games: int) -> FitnessEstimate:
        request = encode_request(x, n_games, _stream_seed(self.seed, x, n_games) % (1 << 32))
        with self._lock:
            child = self._ensure_child()
            try:
                child.stdin.write(request + "\n")
                child.stdin.flush()
            except (BrokenPipeError, OSError) as err:
                raise OracleIOError(f"evaluator pipe failed: {err}") from err
            line = self._read_line(child)
        if not line:
            raise OracleIOError("evaluator closed its output without responding", payload=line)
        return decode_response(line)

    def close(self) -> None:
        if self._child is not None and self._child.poll() is None:
            self._child.stdin.close()
            self._child.wait(timeout=5)
        self._child = None


def encode_request(x: Assignment, n_games: int, seed: int) -> str:
    return json.dumps(
        {"assignment": list(x), "games": n_games, "seed": seed}, separators=(",", ":")
    )


def decode_response(line: str) -> FitnessEstimate:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as err:
        raise OracleIOError(f"malformed evaluator response: {err}", payload=line) from err
    if not isinstance(doc, dict):
        raise OracleIOError("evaluator response is not an object", payload=line)
    missing = {"mean", "se", "n"} - doc.keys()
    if missing:
        raise OracleIOError(f"evaluator response missing fields {sorted(missing)}", payload=line)
    try:
        return FitnessEstimate(mean=float(doc["mean"]), se=float(doc["se"]), n_games=int(doc["n"]))
    except (TypeError, ValueError) as err:
        raise OracleIOError(f"evaluator response fields unusable: {err}", payload=line) from err


class CachingEvaluator:
    """Per-run estimate cache keyed by (serialized assignment, game tier).

    Assignments already checked are never re-sampled within a run. The cache
    is lock-protected so sweep evaluations may run from worker threads.
    """

    def __init__(self, oracle: Oracle):
        self.oracle = oracle
        self._cache: dict[tuple[str, int], FitnessEstimate] = {}
        self._lock = threading.Lock()
        self.games_used = 0
        self.fresh_evaluations = 0

    def peek(self, x: Assignment, n_games: int) -> Optional[FitnessEstimate]:
        with self._lock:
            return self._cache.get((format_assignment(x), n_games))

    def seed_cache(self, x: Assignment, n_games: int, est: FitnessEstimate) -> None:
        with self._lock:
            self._cache[(format_assignment(x), n_games)] = est

    def estimate(self, x: Assignment, n_games: int) -> tuple[FitnessEstimate, bool]:
        """Return (estimate, fresh); fresh is False on a cache hit."""
        key = (format_assignment(x), n_games)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit, False
        est = self.oracle.evaluate(x, n_games)
        with self._lock:
            already = self._cache.get(key)
            if already is not None:
                return already, False
            self._cache[key] = est
            self.games_used += est.n_games
            self.fresh_evaluations += 1
        return est, True
