"""Experiment runner: configuration, seeding, persistence, and verification.

A run is fully determined by its RunConfig (the master seed is mandatory;
there is no wall-clock seeding). Per-component RNG streams are derived from
the master seed by hashing "<seed>:<label>" with SHA-256 and taking the
first 8 bytes big-endian, for labels "oracle", "proposer" and "acceptance".
"""

from __future__ import annotations

import hashlib
import importlib.resources
import json
import math
import time
from dataclasses import dataclass, field
from itertools import permutations
from pathlib import Path
from typing import Optional

import numpy as np

from .annealer import (
    InsertionProposer,
    Phase2Config,
    Phase2Result,
    Proposer,
    ScriptedProposer,
    TemperatureSchedule,
    load_scripted_moves,
    run_phase2,
)
from .climber import Phase1Config, Phase1Result, run_phase1
from .constraints import ConstraintGraph, to_dot, to_edge_list_text
from .errors import ConfigError
from .evaluation import (
    CachingEvaluator,
    ExactOracle,
    HiddenTargetLandscape,
    Oracle,
    PoolOracle,
    ReplayFixture,
    ReplayOracle,
    SubprocessOracle,
    SyntheticOracle,
    format_mean,
    format_se,
)
from .perm import Assignment, as_assignment, format_assignment, parse_assignment
from .trace import RunContext, TraceRecord, TraceSink, dump_trace, trace_to_csv

BRUTE_FORCE_MAX_N = 9

# Master seed pinned for the shipped table replays; chosen so the acceptance
# draws reproduce the printed accept/reject pattern (see tests).
REPLAY_MASTER_SEED = 5

FIXTURE_TABLE1_2 = "table1_2.replay"
FIXTURE_TABLE3 = "table3.replay"
FIXTURE_MOVES = "table3.moves"

# The printed trace this implementation reproduces: starting assignment,
# the twelve induced rank preferences, the four below-gate pairs, and the
# winners of both phases.
TABLE_X0 = "11 2 3 10 9 6 4 5 7 8"
TABLE_CONSTRAINTS: tuple[tuple[int, int], ...] = (
    (10, 11), (11, 9), (2, 3), (3, 10), (3, 6), (6, 10),
    (4, 10), (5, 4), (4, 7), (7, 10), (4, 8), (8, 10),
)
TABLE_BRACKETS: tuple[frozenset[int], ...] = (
    frozenset({2, 10}), frozenset({6, 9}), frozenset({3, 4}), frozenset({3, 5}),
)
TABLE_PHASE1_BEST = "2 3 5 4 8 10 11 9 6 7"
TABLE_PHASE1_MEAN = "-3.12261"
TABLE_PHASE1_TESTS = 36
TABLE_PHASE2_BEST = "5 4 2 3 7 6 8 10 11 9"
TABLE_PHASE2_MEAN = "-2.95471"
TABLE_P39 = 0.90833
TABLE_P45 = 0.36825
TABLE_P41 = 0.31854
PROBABILITY_TOL = 5e-6


def derive_seed(master: int, label: str) -> int:
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def packaged_fixtures_dir() -> Path:
    return Path(str(importlib.resources.files("dca") / "fixtures"))


def _check_keys(doc: dict, allowed: set[str], where: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def build_oracle(spec: dict, seed: int) -> Oracle:
    kind = spec.get("kind")
    if kind == "exact":
        _check_keys(spec, {"kind", "target", "weights", "sigma"}, "exact oracle spec")
        return ExactOracle(HiddenTargetLandscape.from_config({**spec, "kind": "hidden-target"}))
    if kind == "synthetic":
        _check_keys(spec, {"kind", "target", "weights", "sigma"}, "synthetic oracle spec")
        return SyntheticOracle(
            HiddenTargetLandscape.from_config({**spec, "kind": "hidden-target"}), seed=seed
        )
    if kind == "replay":
        _check_keys(spec, {"kind", "path"}, "replay oracle spec")
        return ReplayOracle(ReplayFixture.load(spec["path"]))
    if kind == "pool":
        _check_keys(spec, {"kind", "members"}, "pool oracle spec")
        members = []
        for i, member in enumerate(spec.get("members", [])):
            _check_keys(member, {"weight", "oracle"}, f"pool member {i}")
            members.append(
                (build_oracle(member["oracle"], derive_seed(seed, f"pool-{i}")), float(member["weight"]))
            )
        return PoolOracle(members)
    if kind == "subprocess":
        _check_keys(spec, {"kind", "cmd", "timeout"}, "subprocess oracle spec")
        return SubprocessOracle(spec["cmd"], timeout=float(spec.get("timeout", 30.0)), seed=seed)
    raise ConfigError(f"unknown oracle kind {kind!r}")


@dataclass
class RunConfig:
    initial: Assignment
    seed: int
    oracle: dict
    oracle_phase2: Optional[dict] = None
    phase1: Phase1Config = field(default_factory=Phase1Config)
    schedule: TemperatureSchedule = field(default_factory=TemperatureSchedule)
    phase2: Phase2Config = field(default_factory=Phase2Config)
    script_moves: Optional[Path] = None

    def validate(self) -> None:
        if self.seed is None:
            raise ConfigError("a master seed is mandatory")
        self.phase1.validate()
        self.phase2.validate()
        self.schedule.validate()

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        _check_keys(
            doc,
            {"initial", "seed", "oracle", "oracle_phase2", "phase1", "phase2"},
            "run config",
        )
        for section in ("initial", "seed", "oracle"):
            if section not in doc:
                raise ConfigError(f"run config missing required key {section!r}")
        p1 = dict(doc.get("phase1", {}))
        _check_keys(
            p1,
            {"games", "baseline_games", "tau", "element_order", "induction_scope"},
            "phase1 section",
        )
        phase1 = Phase1Config(
            n_games=int(p1.get("games", 1000)),
            n_games_baseline=int(p1.get("baseline_games", 2000)),
            tau=float(p1.get("tau", 1.0)),
            element_order=p1.get("element_order"),
            induction_scope=p1.get("induction_scope", "flanking"),
        )
        p2 = dict(doc.get("phase2", {}))
        _check_keys(
            p2, {"games", "t0", "dt", "steps", "pool_size", "script_moves"}, "phase2 section"
        )
        schedule = TemperatureSchedule(
            t0=float(p2.get("t0", 0.10)),
            dt=float(p2.get("dt", 0.01)),
            steps=int(p2.get("steps", 10)),
        )
        phase2 = Phase2Config(
            n_games_hi=int(p2.get("games", 16000)),
            pool_size=int(p2.get("pool_size", 8)),
        )
        initial = doc["initial"]
        return cls(
            initial=parse_assignment(initial) if isinstance(initial, str) else as_assignment(initial),
            seed=int(doc["seed"]),
            oracle=doc["oracle"],
            oracle_phase2=doc.get("oracle_phase2"),
            phase1=phase1,
            schedule=schedule,
            phase2=phase2,
            script_moves=Path(p2["script_moves"]) if p2.get("script_moves") else None,
        )

    @classmethod
    def from_json_file(cls, path: str | Path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON: {err}") from err
        return cls.from_dict(doc)


@dataclass
class ExperimentSummary:
    phase1: Phase1Result
    phase2: Phase2Result
    trace: list[TraceRecord]
    phase1_tests: int
    phase1_games: int
    phase2_tests: int
    phase2_games: int
    wall_time_s: float

    @property
    def best(self) -> Assignment:
        return self.phase2.best

    @property
    def best_mean(self) -> float:
        return self.phase2.best_estimate.mean

    def to_dict(self) -> dict:
        return {
            "phase1": {
                "best": format_assignment(self.phase1.best),
                "mean": self.phase1.best_estimate.mean,
                "constraints": [list(p) for p in (d.constraint.pair() for d in self.phase1.decisions if d.induced)],
                "tests": self.phase1_tests,
                "games": self.phase1_games,
            },
            "phase2": {
                "best": format_assignment(self.phase2.best),
                "mean": self.phase2.best_estimate.mean,
                "improved": self.phase2.improved,
                "accepted_worse": self.phase2.accepted_worse,
                "rejected_worse": self.phase2.rejected_worse,
                "tests": self.phase2_tests,
                "games": self.phase2_games,
            },
            "evaluations": {
                "tests": self.phase1_tests + self.phase2_tests,
                "games": self.phase1_games + self.phase2_games,
            },
            "wall_time_s": self.wall_time_s,
        }


def run_experiment(cfg: RunConfig, out_dir: Optional[str | Path] = None) -> ExperimentSummary:
    """Phase 1 then phase 2 on the induced graph, with trace persistence."""
    cfg.validate()
    oracle1 = build_oracle(cfg.oracle, derive_seed(cfg.seed, "oracle"))
    oracle2 = (
        build_oracle(cfg.oracle_phase2, derive_seed(cfg.seed, "oracle"))
        if cfg.oracle_phase2 is not None
        else None
    )
    scripted = load_scripted_moves(cfg.script_moves) if cfg.script_moves else None

    started = time.perf_counter()
    run = RunContext()
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        run.sink = TraceSink(out / "trace.jsonl")
    evaluator1 = CachingEvaluator(oracle1)
    try:
        p1 = run_phase1(cfg.initial, evaluator1, cfg.phase1, run=run)
        evaluator2 = CachingEvaluator(oracle2) if oracle2 is not None else evaluator1
        proposer: Proposer
        if scripted is not None:
            proposer = ScriptedProposer(scripted)
        else:
            proposer = InsertionProposer(
                np.random.default_rng(derive_seed(cfg.seed, "proposer")), cfg.phase2.pool_size
            )
        p2 = run_phase2(
            p1.best,
            evaluator2,
            p1.graph,
            cfg.schedule,
            cfg.phase2,
            proposer=proposer,
            acceptance_rng=np.random.default_rng(derive_seed(cfg.seed, "acceptance")),
            run=run,
        )
    finally:
        oracle1.close()
        if oracle2 is not None:
            oracle2.close()
        if run.sink is not None:
            run.checkpoint()
            run.sink.close()

    # Game accounting: when the phases share one evaluator, phase 2's share
    # is whatever accrued after phase 1 finished.
    if evaluator2 is evaluator1:
        phase1_games = sum(r.n_games for r in run.records if r.phase == 1)
        phase2_games = evaluator1.games_used - phase1_games
        phase2_tests = evaluator1.fresh_evaluations - p1.evaluations_used
    else:
        phase1_games = evaluator1.games_used
        phase2_games = evaluator2.games_used
        phase2_tests = evaluator2.fresh_evaluations

    summary = ExperimentSummary(
        phase1=p1,
        phase2=p2,
        trace=list(run.records),
        phase1_tests=p1.evaluations_used,
        phase1_games=phase1_games,
        phase2_tests=phase2_tests,
        phase2_games=phase2_games,
        wall_time_s=time.perf_counter() - started,
    )
    if out_dir is not None:
        persist_summary(summary, out_dir)
    return summary


def persist_summary(summary: ExperimentSummary, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.jsonl").write_text(dump_trace(summary.trace))
    (out / "trace.csv").write_text(trace_to_csv(summary.trace))
    (out / "constraints.txt").write_text(to_edge_list_text(summary.phase1.graph))
    (out / "ranking.dot").write_text(to_dot(summary.phase1.graph))
    (out / "summary.json").write_text(json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n")


def export_dag(graph: ConstraintGraph, path: str | Path, reduce: bool = False) -> Path:
    """Write the constraint DAG as DOT with stable ordering; returns the path."""
    path = Path(path)
    path.write_text(to_dot(graph, reduce=reduce))
    return path


def graph_from_trace(records: list[TraceRecord]) -> ConstraintGraph:
    """Rebuild the induced constraint set from trace annotations."""
    from .constraints import Evidence, RankConstraint

    g = ConstraintGraph()
    for record in records:
        for note in record.annotations:
            if note.induced:
                g.try_add(
                    RankConstraint(
                        note.before,
                        note.after,
                        Evidence(tests=note.tests, gap=note.gap, threshold=note.threshold),
                    )
                )
    return g


def brute_force_optimum(
    landscape: HiddenTargetLandscape,
    graph: Optional[ConstraintGraph] = None,
) -> tuple[Assignment, float]:
    """Exhaustively score every permutation (optionally only linear extensions).

    Refuses above 9 elements: beyond that the enumeration stops being a
    desk-scale oracle, which is the entire reason the two-phase search exists.
    Ties go to the lexicographically smallest assignment.
    """
    elements = landscape.elements
    n = len(elements)
    if n > BRUTE_FORCE_MAX_N:
        raise ConfigError(
            f"brute force refuses n={n} (> {BRUTE_FORCE_MAX_N}); run the two-phase optimiser instead"
        )
    best: Optional[Assignment] = None
    best_mean = -math.inf
    for perm in permutations(elements):
        if graph is not None and not graph.satisfies(perm):
            continue
        mean = landscape.true_fitness(perm)
        if mean > best_mean:
            best, best_mean = perm, mean
    if best is None:
        raise ConfigError("constraint graph admits no linear extension over these elements")
    return best, best_mean


def paper_replay_config(fixtures_dir: Optional[str | Path] = None) -> RunConfig:
    """The pinned two-phase configuration that replays the shipped tables."""
    fixtures = Path(fixtures_dir) if fixtures_dir is not None else packaged_fixtures_dir()
    table12 = fixtures / FIXTURE_TABLE1_2
    table3 = fixtures / FIXTURE_TABLE3
    moves = fixtures / FIXTURE_MOVES
    for path in (table12, table3, moves):
        if not path.exists():
            raise ConfigError(f"missing replay fixture {path}")
    return RunConfig(
        initial=parse_assignment(TABLE_X0),
        seed=REPLAY_MASTER_SEED,
        oracle={"kind": "replay", "path": str(table12)},
        oracle_phase2={"kind": "replay", "path": str(table3)},
        phase1=Phase1Config(),
        schedule=TemperatureSchedule(),
        phase2=Phase2Config(),
        script_moves=moves,
    )


@dataclass
class ReplayReport:
    constraints_match: bool
    values_match: bool
    discrepancies: list[str]
    details: dict

    def to_dict(self) -> dict:
        return {
            "constraints_match": self.constraints_match,
            "values_match": self.values_match,
            "discrepancies": self.discrepancies,
            "details": self.details,
        }

    @property
    def ok(self) -> bool:
        return self.constraints_match and self.values_match


def replay_verify(fixtures_dir: Optional[str | Path] = None) -> ReplayReport:
    """Run the full pipeline against the table fixtures and diff the outcome.

    Compares: the induced constraint set (the twelve), the below-gate set
    (the four), both phase winners, and the acceptance probabilities at the
    two printed worse-candidate rows. The row printed with probability 0.31854
    is reported as a standing discrepancy: its own temperature column gives
    exp(-0.06864/0.05) = 0.25340, while 0.31854 matches the previous row's
    temperature, so the recorded value looks off by one schedule step.
    """
    cfg = paper_replay_config(fixtures_dir)
    summary = run_experiment(cfg)

    discrepancies: list[str] = []
    details: dict = {}

    observed_constraints = [d.constraint.pair() for d in summary.phase1.decisions if d.induced]
    expected_constraints = set(TABLE_CONSTRAINTS)
    missing = expected_constraints - set(observed_constraints)
    extra = set(observed_constraints) - expected_constraints
    constraints_match = not missing and not extra
    for pair in sorted(missing):
        discrepancies.append(f"constraint {pair[0]}<{pair[1]} expected but not induced")
    for pair in sorted(extra):
        discrepancies.append(f"constraint {pair[0]}<{pair[1]} induced but not expected")

    observed_brackets = summary.phase1.bracketed_pairs()
    if observed_brackets != set(TABLE_BRACKETS):
        constraints_match = False
        for pair in observed_brackets ^ set(TABLE_BRACKETS):
            discrepancies.append(f"below-gate pair {sorted(pair)} differs from the printed set")

    values_match = True

    def check(condition: bool, message: str) -> None:
        nonlocal values_match
        if not condition:
            values_match = False
            discrepancies.append(message)

    check(
        format_assignment(summary.phase1.best) == TABLE_PHASE1_BEST,
        f"phase-1 best {format_assignment(summary.phase1.best)} != {TABLE_PHASE1_BEST}",
    )
    check(
        format_mean(summary.phase1.best_estimate.mean) == TABLE_PHASE1_MEAN,
        f"phase-1 mean {format_mean(summary.phase1.best_estimate.mean)} != {TABLE_PHASE1_MEAN}",
    )
    check(
        summary.phase1_tests == TABLE_PHASE1_TESTS,
        f"phase-1 distinct tests {summary.phase1_tests} != {TABLE_PHASE1_TESTS}",
    )
    check(
        format_assignment(summary.phase2.best) == TABLE_PHASE2_BEST,
        f"phase-2 best {format_assignment(summary.phase2.best)} != {TABLE_PHASE2_BEST}",
    )
    check(
        format_mean(summary.phase2.best_estimate.mean) == TABLE_PHASE2_MEAN,
        f"phase-2 mean {format_mean(summary.phase2.best_estimate.mean)} != {TABLE_PHASE2_MEAN}",
    )

    by_id = {r.test_id: r for r in summary.trace if r.phase == 2 and not r.reeval}
    decisions = {i: by_id[i].decision for i in sorted(by_id)}
    details["phase2_decisions"] = decisions
    check(by_id.get(39) is not None and by_id[39].decision == "accepted-worse", "test 39 not tagged accepted-worse")
    for rejected_id in (41, 45):
        check(
            by_id.get(rejected_id) is not None and by_id[rejected_id].decision == "rejected-worse",
            f"test {rejected_id} not tagged rejected-worse",
        )
    if 39 in by_id:
        check(
            abs(by_id[39].probability - TABLE_P39) <= PROBABILITY_TOL,
            f"test 39 probability {by_id[39].probability:.6f} != {TABLE_P39}",
        )
    if 45 in by_id:
        check(
            abs(by_id[45].probability - TABLE_P45) <= PROBABILITY_TOL,
            f"test 45 probability {by_id[45].probability:.6f} != {TABLE_P45}",
        )
    if 41 in by_id:
        row = by_id[41]
        row_consistent = math.exp(-row.delta / row.temperature)
        details["test41"] = {
            "printed": TABLE_P41,
            "row_consistent": row_consistent,
            "previous_row_temperature": row.temperature + 0.01,
        }
        discrepancies.append(
            "test 41: printed probability 0.31854 matches the previous row's temperature; "
            f"the row-consistent value is {row_consistent:.5f}"
        )
        check(
            abs(row.probability - row_consistent) <= PROBABILITY_TOL,
            f"test 41 probability {row.probability:.6f} not row-consistent",
        )

    # Every trace row must carry the packaged transcription bit-exactly.
    packaged_p1 = ReplayFixture.load(packaged_fixtures_dir() / FIXTURE_TABLE1_2).records
    packaged_p2 = ReplayFixture.load(packaged_fixtures_dir() / FIXTURE_TABLE3).records
    for record in summary.trace:
        key = format_assignment(record.assignment)
        expected = (packaged_p1 if record.phase == 1 else packaged_p2).get(key)
        if expected is None:
            check(False, f"test {record.test_id} evaluated unexpected assignment {key}")
            continue
        check(
            format_mean(record.mean) == format_mean(expected.mean)
            and format_se(record.se) == format_se(expected.se),
            f"test {record.test_id} value {format_mean(record.mean)}/{format_se(record.se)} "
            f"drifted from the transcription",
        )

    details["phase1_best"] = format_assignment(summary.phase1.best)
    details["phase2_best"] = format_assignment(summary.phase2.best)
    details["constraints"] = [f"{a}<{b}" for a, b in observed_constraints]
    details["bracketed"] = sorted(sorted(p) for p in observed_brackets)
    details["phase1_games"] = summary.phase1_games
    details["phase2_games"] = summary.phase2_games

    return ReplayReport(
        constraints_match=constraints_match,
        values_match=values_match,
        discrepancies=discrepancies,
        details=details,
    )
