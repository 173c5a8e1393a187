"""Constraint satisfaction via annealing.

Starting from the climbing phase's incumbent, candidates are drawn from the
insertion neighbourhood, steered so the number of violated ranking
constraints never increases, and accepted by the Metropolis rule: better
candidates always, worse ones with probability exp(-delta / T) under a
linearly cooling temperature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .constraints import ConstraintGraph
from .errors import ConfigError, DcaError, InvalidTemperatureError
from .evaluation import CachingEvaluator, FitnessEstimate
from .perm import (
    Assignment,
    Move,
    enumerate_insertion_neighbors,
    move_between,
    parse_assignment,
)
from .trace import (
    DECISION_ACCEPTED_WORSE,
    DECISION_IMPROVED,
    DECISION_REJECTED_WORSE,
    MARKER_ACCEPTED_WORSE,
    MARKER_NONE,
    MARKER_REJECTED_WORSE,
    MARKER_STAR,
    RunContext,
    TraceRecord,
)


@dataclass(frozen=True)
class TemperatureSchedule:
    """Linear cooling: temperature t0 - k*dt at step k, kept positive throughout."""

    t0: float = 0.10
    dt: float = 0.01
    steps: int = 10

    def validate(self) -> None:
        if self.t0 <= 0:
            raise ConfigError(f"initial temperature must be positive, got {self.t0}")
        if self.dt < 0:
            raise ConfigError(f"temperature decrement must be >= 0, got {self.dt}")
        if self.steps < 1:
            raise ConfigError(f"step count must be >= 1, got {self.steps}")
        final = self.t0 - (self.steps - 1) * self.dt
        if final <= 0:
            raise ConfigError(
                f"schedule reaches non-positive temperature {final:.6g} at its last step"
            )

    def at(self, k: int) -> float:
        if not 0 <= k < self.steps:
            raise InvalidTemperatureError(f"step index {k} outside 0..{self.steps - 1}")
        return self.t0 - k * self.dt


def temperature_at(schedule: TemperatureSchedule, k: int) -> float:
    return schedule.at(k)


def acceptance_probability(f_current: float, f_candidate: float, temperature: float) -> float:
    """Metropolis acceptance for a maximised mean: 1 when not worse, else exp(-delta/T)."""
    if temperature <= 0:
        raise InvalidTemperatureError(f"temperature must be positive, got {temperature}")
    delta = f_current - f_candidate
    if delta <= 0:
        return 1.0
    return math.exp(-delta / temperature)


class Proposer:
    def propose(self, current: Assignment, graph: ConstraintGraph) -> tuple[Move, Assignment]:
        raise NotImplementedError


class InsertionProposer(Proposer):
    """Tournament over random insertion neighbours, filtered by violations.

    Draws `pool_size` neighbours uniformly (with replacement) from the
    distinct insertion neighbourhood, discards any that violate more
    constraints than the current assignment, and returns a minimal-violation
    survivor with ties broken uniformly. If a whole pool is discarded it
    redraws; after `max_retries` exhausted pools it scans the neighbourhood
    outright and returns a minimal-violation admissible neighbour, so random
    bad luck cannot push the walk out of the constrained region. Only when no
    neighbour at all stays within the current violation count (the region is
    a single point) does the least-violating draw come back, so a proposal is
    always produced.
    """

    def __init__(self, rng: np.random.Generator, pool_size: int = 8, max_retries: int = 8):
        if pool_size < 1:
            raise ConfigError(f"pool size must be >= 1, got {pool_size}")
        self.rng = rng
        self.pool_size = pool_size
        self.max_retries = max_retries

    def propose(self, current: Assignment, graph: ConstraintGraph) -> tuple[Move, Assignment]:
        neighbors = enumerate_insertion_neighbors(current)
        current_violations = graph.violations(current)
        fallback: Optional[tuple[int, Move, Assignment]] = None
        for _ in range(self.max_retries):
            draws = [
                neighbors[int(i)] for i in self.rng.integers(len(neighbors), size=self.pool_size)
            ]
            scored = [(graph.violations(x), move, x) for move, x in draws]
            for v, move, x in scored:
                if fallback is None or v < fallback[0]:
                    fallback = (v, move, x)
            survivors = [(v, move, x) for v, move, x in scored if v <= current_violations]
            if survivors:
                best_v = min(v for v, _, _ in survivors)
                finalists = [(move, x) for v, move, x in survivors if v == best_v]
                pick = int(self.rng.integers(len(finalists)))
                return finalists[pick]
        scored_all = [(graph.violations(x), move, x) for move, x in neighbors]
        admissible = [(v, move, x) for v, move, x in scored_all if v <= current_violations]
        if admissible:
            best_v = min(v for v, _, _ in admissible)
            finalists = [(move, x) for v, move, x in admissible if v == best_v]
            pick = int(self.rng.integers(len(finalists)))
            return finalists[pick]
        assert fallback is not None
        return fallback[1], fallback[2]


class ScriptedProposer(Proposer):
    """Replay an explicit move list: one serialized assignment per line.

    Each scripted assignment must be exactly one insertion move away from the
    current state, so scripts stay within the neighbourhood the sampling
    proposer explores.
    """

    def __init__(self, assignments: Sequence[Assignment]):
        self.assignments = list(assignments)
        self._cursor = 0

    def propose(self, current: Assignment, graph: ConstraintGraph) -> tuple[Move, Assignment]:
        if self._cursor >= len(self.assignments):
            raise ConfigError("scripted move list exhausted")
        candidate = self.assignments[self._cursor]
        self._cursor += 1
        move = move_between(current, candidate)
        return move, candidate


@dataclass
class Phase2Config:
    n_games_hi: int = 16000
    pool_size: int = 8

    def validate(self) -> None:
        if self.n_games_hi < 1:
            raise ConfigError("high-precision game budget must be >= 1")
        if self.pool_size < 1:
            raise ConfigError("pool size must be >= 1")


@dataclass
class Phase2Result:
    best: Assignment
    best_estimate: FitnessEstimate
    current: Assignment
    current_estimate: FitnessEstimate
    trace: list[TraceRecord]
    steps_run: int
    accepted_worse: int = 0
    rejected_worse: int = 0
    improved: int = 0

    def step_records(self) -> list[TraceRecord]:
        return [r for r in self.trace if r.phase == 2 and not r.reeval]


def run_phase2(
    start: Assignment,
    evaluator: CachingEvaluator,
    graph: ConstraintGraph,
    schedule: TemperatureSchedule,
    config: Optional[Phase2Config] = None,
    proposer: Optional[Proposer] = None,
    acceptance_rng: Optional[np.random.Generator] = None,
    run: Optional[RunContext] = None,
) -> Phase2Result:
    """Anneal from `start` after re-estimating it at the high-precision budget.

    One uniform acceptance draw is consumed per worse candidate, in step
    order, from a stream independent of the proposer's, so a scripted replay
    leaves the acceptance draws unchanged. Worse-but-accepted candidates
    replace the current state but never the best.
    """
    config = config or Phase2Config()
    config.validate()
    schedule.validate()
    if proposer is None:
        proposer = InsertionProposer(np.random.default_rng(0), config.pool_size)
    if acceptance_rng is None:
        acceptance_rng = np.random.default_rng(1)
    run = run if run is not None else RunContext()

    phase2_records: list[TraceRecord] = []

    def emit(record: TraceRecord) -> TraceRecord:
        phase2_records.append(record)
        return run.add(record)

    # Mandatory high-precision re-evaluation of the incumbent at phase entry.
    # When the start was already traced (a continued run), the re-test keeps
    # its original test id, matching the printed tables.
    try:
        current_est, fresh = evaluator.estimate(start, config.n_games_hi)
    except DcaError as err:
        err.partial_trace = list(run.records)  # type: ignore[attr-defined]
        raise
    prior_id = run.id_of(start)
    reeval_id = prior_id if prior_id is not None else run.fresh_id()
    emit(
        TraceRecord(
            test_id=reeval_id,
            phase=2,
            assignment=start,
            mean=current_est.mean,
            se=current_est.se,
            n_games=current_est.n_games,
            marker=MARKER_STAR,
            reeval=True,
        )
    )
    run.checkpoint()

    current = start
    best, best_est = current, current_est
    accepted_worse = rejected_worse = improved = 0

    for k in range(schedule.steps):
        temperature = schedule.at(k)
        _, candidate = proposer.propose(current, graph)
        try:
            cand_est, fresh = evaluator.estimate(candidate, config.n_games_hi)
        except DcaError as err:
            err.partial_trace = list(run.records)  # type: ignore[attr-defined]
            raise
        delta = current_est.mean - cand_est.mean
        if delta <= 0:
            probability = 1.0
            decision = DECISION_IMPROVED
            accept = True
            improved += 1
        else:
            probability = acceptance_probability(current_est.mean, cand_est.mean, temperature)
            draw = float(acceptance_rng.random())
            accept = draw < probability
            decision = DECISION_ACCEPTED_WORSE if accept else DECISION_REJECTED_WORSE
            if accept:
                accepted_worse += 1
            else:
                rejected_worse += 1

        if cand_est.mean > best_est.mean:
            marker = MARKER_STAR
            best, best_est = candidate, cand_est
        elif decision == DECISION_ACCEPTED_WORSE:
            marker = MARKER_ACCEPTED_WORSE
        elif decision == DECISION_REJECTED_WORSE:
            marker = MARKER_REJECTED_WORSE
        else:
            marker = MARKER_NONE

        emit(
            TraceRecord(
                test_id=run.fresh_id(),
                phase=2,
                assignment=candidate,
                mean=cand_est.mean,
                se=cand_est.se,
                n_games=cand_est.n_games,
                marker=marker,
                temperature=temperature,
                delta=delta,
                probability=probability,
                decision=decision,
                cached=not fresh,
            )
        )
        run.checkpoint()

        if accept:
            current, current_est = candidate, cand_est

    return Phase2Result(
        best=best,
        best_estimate=best_est,
        current=current,
        current_estimate=current_est,
        trace=phase2_records,
        steps_run=schedule.steps,
        accepted_worse=accepted_worse,
        rejected_worse=rejected_worse,
        improved=improved,
    )


def load_scripted_moves(path: str | Path) -> list[Assignment]:
    lines = Path(path).read_text().splitlines()
    moves = [parse_assignment(line) for line in lines if line.strip()]
    if not moves:
        raise ConfigError(f"{path}: scripted move file holds no assignments")
    return moves
