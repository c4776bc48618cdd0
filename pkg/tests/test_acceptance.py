"""Acceptance gate: one test per shipping criterion, one verdict line each.

These tests lean on independent oracles computed inside this file rather
than on numbers copied from anywhere else. Each prints [PASS]/[FAIL] with
its criterion number on the real stdout so the verdict survives pytest's
capture.
"""

import contextlib
import functools
import random
import string
import sys
import time

import numpy as np
import pytest

import orsim.cli as cli
from orsim.backends import remote_configured
from orsim.copilot import LongMemory
from orsim.defaults import (
    ROUTE_COMBINED,
    ROUTE_EXPANDED,
    ROUTE_TRANSSPHENOIDAL,
    builtin_corpus,
)
from orsim.domain import D1, D2, PhaseId, PlanStep, RoleId, RouteLabel, SurgicalCase
from orsim.engine import (
    ExecutedSubtask,
    FiredEvent,
    SimulationConfig,
    SimulationReport,
)
from orsim.evaluation import (
    CaseResult,
    CheckpointScore,
    FailureKind,
    aggregate,
    classify_failure,
    render_ablation_table,
    score_plan,
    score_route,
    stage_checkpoints,
)
from orsim.knowledge import HashEmbedder, KnowledgeBank
from orsim.records import report_from_dict, report_to_dict
from orsim.runner import Runner, evaluate_corpus
from orsim.synthetic import generate_corpus
from orsim.domain import Utterance


@contextlib.contextmanager
def criterion(number: int, title: str):
    try:
        yield
    except BaseException:
        print(f"[FAIL] criterion {number}: {title}", file=sys.__stdout__)
        raise
    print(f"[PASS] criterion {number}: {title}", file=sys.__stdout__)


def _fresh_runner() -> Runner:
    return Runner.scripted(long_memory=LongMemory())


# --- 1: determinism end-to-end ---


def test_criterion_1_byte_identical_reruns(tmp_path, fixtures_dir):
    with criterion(1, "seeded rerun is byte-identical and fast"):
        started = time.monotonic()
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = cli.main(
                [
                    "run",
                    "--case",
                    str(fixtures_dir / "case01.json"),
                    "--seed",
                    "7",
                    "--out",
                    str(out),
                ]
            )
            assert code == 0
            outs.append(out)
        elapsed = time.monotonic() - started
        first_t = (outs[0] / "transcript.jsonl").read_bytes()
        second_t = (outs[1] / "transcript.jsonl").read_bytes()
        first_r = (outs[0] / "report.json").read_bytes()
        second_r = (outs[1] / "report.json").read_bytes()
        assert first_t == second_t
        assert first_r == second_r
        assert elapsed < 5.0, f"two runs took {elapsed:.2f}s"


# --- 2: closed-loop phase coverage ---


def test_criterion_2_all_phases_in_twenty_seeded_runs():
    with criterion(2, "20 seeded runs all touch the five phases"):
        runner = _fresh_runner()
        corpus = builtin_corpus()
        runs = 0
        for seed in range(4):
            for bundle in corpus.bundles:
                report = runner.simulate(
                    bundle, SimulationConfig(seed=seed)
                )
                phases = {u.phase for u in report.transcript}
                assert phases == set(PhaseId), (
                    f"{report.sim_id} missed {set(PhaseId) - phases}"
                )
                runs += 1
        assert runs == 20


# --- 3: metric oracles ---


def _lcs_oracle(a: tuple[str, ...], b: tuple[str, ...]) -> int:
    @functools.lru_cache(maxsize=None)
    def rec(i: int, j: int) -> int:
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + rec(i + 1, j + 1)
        return max(rec(i + 1, j), rec(i, j + 1))

    return rec(0, 0)


def _steps(ids) -> tuple[PlanStep, ...]:
    return tuple(PlanStep(i, i, PhaseId.SURGICAL_OPERATION) for i in ids)


# ten hand-labeled route calls: seven agree with gold, three do not
_ROUTE_FIXTURE = [
    (ROUTE_TRANSSPHENOIDAL, ROUTE_TRANSSPHENOIDAL, True),
    (ROUTE_TRANSSPHENOIDAL, ROUTE_TRANSSPHENOIDAL, True),
    (ROUTE_EXPANDED, ROUTE_EXPANDED, True),
    (ROUTE_EXPANDED, ROUTE_TRANSSPHENOIDAL, False),
    (ROUTE_COMBINED, ROUTE_COMBINED, True),
    (ROUTE_COMBINED, ROUTE_EXPANDED, False),
    (ROUTE_TRANSSPHENOIDAL, ROUTE_COMBINED, False),
    (ROUTE_EXPANDED, ROUTE_EXPANDED, True),
    (ROUTE_COMBINED, ROUTE_COMBINED, True),
    (ROUTE_TRANSSPHENOIDAL, ROUTE_TRANSSPHENOIDAL, True),
]


def test_criterion_3_metric_oracles():
    with criterion(3, "plan/route scores match independent oracles"):
        rng = random.Random(314159)
        ids = [f"s{i}" for i in range(8)]
        for _ in range(200):
            a = tuple(rng.choice(ids) for _ in range(rng.randint(0, 10)))
            b = tuple(rng.choice(ids) for _ in range(rng.randint(1, 10)))
            got = score_plan(_steps(a), _steps(b))
            assert got == _lcs_oracle(a, b) / len(b)

        hand_correct = sum(1 for _, _, ok in _ROUTE_FIXTURE if ok)
        scored = sum(
            score_route(RouteLabel(pred), RouteLabel(gold))
            for pred, gold, _ in _ROUTE_FIXTURE
        )
        assert scored == hand_correct == 7
        assert scored / len(_ROUTE_FIXTURE) == 0.7

        results = [
            CaseResult(
                case_id=f"c{i}",
                sim_id=f"c{i}-s0",
                route_score=1.0 if ok else 0.0,
                plan_score=1.0,
                checkpoints=(CheckpointScore(1.0, 100.0, 100.0),),
                failure=None,
                events_fired=0,
                warning_count=0,
            )
            for i, (_, _, ok) in enumerate(_ROUTE_FIXTURE)
        ]
        base = aggregate(results)
        assert base.route_accuracy == 70.0
        shuffle_rng = random.Random(271828)
        for _ in range(50):
            mixed = results[:]
            shuffle_rng.shuffle(mixed)
            assert aggregate(mixed) == base


# --- 4: stage checkpoints on the half-executed fixture ---


def test_criterion_4_checkpoint_fixture():
    with criterion(4, "half-executed fixture scores 100/100/66.7/50.0"):
        gold = {
            PhaseId.PATIENT_TRANSFER: ("t1", "t2"),
            PhaseId.ANESTHESIA: ("a1", "a2"),
            PhaseId.PREPARATION: ("p1", "p2"),
            PhaseId.SURGICAL_OPERATION: ("o1", "o2"),
            PhaseId.POSTOPERATIVE_CARE: (),
        }
        case = SurgicalCase(
            case_id="cp-accept",
            demographics={},
            history="h",
            mri_report=None,
            disease_label=D1,
            gold_route=RouteLabel(ROUTE_TRANSSPHENOIDAL),
            gold_plan=_steps(["o1", "o2"]),
            gold_subtasks=gold,
        )
        executed = tuple(
            ExecutedSubtask(sid, phase, seq, seq + 1)
            for seq, (sid, phase) in enumerate(
                [
                    ("t1", PhaseId.PATIENT_TRANSFER),
                    ("t2", PhaseId.PATIENT_TRANSFER),
                    ("a1", PhaseId.ANESTHESIA),
                    ("a2", PhaseId.ANESTHESIA),
                ]
            )
        )
        report = SimulationReport(
            sim_id="cp-accept-s0",
            case_id="cp-accept",
            config=SimulationConfig(),
            transcript=(),
            executed=executed,
            chosen_route=None,
            proposed_plan=(),
            executed_plan=(),
            events_fired=(),
            warnings=(),
            ticks=4,
        )
        cps = stage_checkpoints(report, case)
        wanted = [100.0, 100.0, 66.7, 50.0]
        for cp, want in zip(cps, wanted):
            assert abs(cp.completeness - want) <= 0.1, (
                f"at {cp.fraction}: {cp.completeness} != {want}"
            )


# --- 5: retrieval against a brute-force scan ---


def test_criterion_5_retrieval_oracle():
    with criterion(5, "top-k equals brute-force cosine over 500 chunks"):
        started = time.monotonic()
        rng = random.Random(8675309)
        words = ["".join(rng.choices(string.ascii_lowercase, k=5)) for _ in range(400)]

        def sentence(n: int) -> str:
            return " ".join(rng.choice(words) for _ in range(n))

        embedder = HashEmbedder()
        bank = KnowledgeBank(embedder)
        for i in range(500):
            bank.add_document(f"doc{i:03d}", sentence(30))
        bank.build()

        chunks = bank.chunks
        vectors = np.stack([embedder.embed(c.text) for c in chunks])
        for _ in range(100):
            query = sentence(8)
            k = rng.randint(1, 10)
            got = bank.search(query, k)
            qvec = embedder.embed(query)
            scores = vectors @ qvec
            order = sorted(
                range(len(chunks)),
                key=lambda i: (-scores[i], chunks[i].chunk_id),
            )[:k]
            assert [h.chunk.chunk_id for h in got] == [
                chunks[i].chunk_id for i in order
            ]
            for hit, idx in zip(got, order):
                assert abs(hit.score - float(scores[idx])) < 1e-9
        elapsed = time.monotonic() - started
        assert elapsed < 10.0, f"retrieval oracle took {elapsed:.2f}s"


# --- 6: memory lifecycle over 25 seeded sims ---


def test_criterion_6_memory_lifecycle():
    with criterion(6, "short memory clears, long memory grows by one per sim"):
        memory = LongMemory()
        runner = Runner.scripted(long_memory=memory)
        corpus = builtin_corpus()
        for seed in range(5):
            for bundle in corpus.bundles:
                before = len(memory)
                sim = runner.new_simulation(bundle, SimulationConfig(seed=seed))
                sim.run()
                copilot = sim.roster[RoleId.SURGERY_COPILOT]
                assert len(copilot.short) == 0
                assert len(memory) == before + 1
        assert len(memory) == 25
        record_ids = [r.record_id for r in memory.records]
        assert len(set(record_ids)) == 25

        by_disease = {r.record_id: r.disease for r in memory.records}
        for bundle in corpus.bundles:
            wanted = bundle.case.disease_label.name
            lessons = memory.retrieve(
                bundle.case.summary(), k=3, disease=wanted
            )
            assert lessons, f"nothing retrieved for {wanted}"
            for lesson in lessons:
                assert by_disease[lesson.record_id] == wanted, (
                    f"query for {wanted} pulled {by_disease[lesson.record_id]}"
                )


# --- 7: ablation plumbing ---


def test_criterion_7_ablation_plumbing():
    with criterion(7, "four ablation runs share cases, differ in fingerprint"):
        corpus = generate_corpus(20, seed=20)
        labels = ("full", "rag_off", "copilot_off", "memory_off")
        runs = [
            evaluate_corpus(
                _fresh_runner(), corpus, SimulationConfig(seed=20), label=label
            )
            for label in labels
        ]
        fingerprints = {run.fingerprint for run in runs}
        assert len(fingerprints) == 4
        case_lists = {run.case_ids for run in runs}
        assert len(case_lists) == 1
        assert len(runs[0].case_ids) == 20

        table = render_ablation_table(
            [(run.label, run.fingerprint, run.summary) for run in runs]
        )
        lines = table.splitlines()
        assert len(lines) == 2 + len(labels)
        assert lines[0].split() == [
            "config",
            "fingerprint",
            "n",
            "route%",
            "plan%",
            "complete%",
        ]
        for line, label in zip(lines[2:], labels):
            assert line.startswith(label)
            assert len(line.split()) == 6


# --- 8: failure taxonomy fixtures ---


def _taxonomy_case() -> SurgicalCase:
    return SurgicalCase(
        case_id="fail-fx",
        demographics={},
        history="h",
        mri_report=None,
        disease_label=D1,
        gold_route=RouteLabel(ROUTE_TRANSSPHENOIDAL),
        gold_plan=_steps(["o1", "o2"]),
        gold_subtasks={
            PhaseId.PATIENT_TRANSFER: ("t1",),
            PhaseId.SURGICAL_OPERATION: ("o1", "o2"),
        },
    )


def _taxonomy_report(**overrides) -> SimulationReport:
    full = tuple(
        ExecutedSubtask(sid, phase, seq, seq + 1)
        for seq, (sid, phase) in enumerate(
            [
                ("t1", PhaseId.PATIENT_TRANSFER),
                ("o1", PhaseId.SURGICAL_OPERATION),
                ("o2", PhaseId.SURGICAL_OPERATION),
            ]
        )
    )
    base = dict(
        sim_id="fail-fx-s0",
        case_id="fail-fx",
        config=SimulationConfig(),
        transcript=(),
        executed=full,
        chosen_route=RouteLabel(ROUTE_TRANSSPHENOIDAL),
        proposed_plan=(),
        executed_plan=_steps(["o1", "o2"]),
        events_fired=(),
        warnings=(),
        ticks=3,
    )
    base.update(overrides)
    return SimulationReport(**base)


def test_criterion_8_failure_taxonomy():
    with criterion(8, "constructed fixtures hit the three failure kinds"):
        case = _taxonomy_case()

        wrong_route = _taxonomy_report(chosen_route=RouteLabel(ROUTE_COMBINED))
        assert (
            classify_failure(wrong_route, case)
            is FailureKind.MISJUDGED_INITIAL_APPROACH
        )

        overloaded = _taxonomy_report(
            executed=(ExecutedSubtask("t1", PhaseId.PATIENT_TRANSFER, 0, 1),),
            executed_plan=_steps(["o1", "o2"]),
            events_fired=(
                FiredEvent("e1", "x", PhaseId.SURGICAL_OPERATION, 5, 1),
                FiredEvent("e2", "y", PhaseId.SURGICAL_OPERATION, 3, 2),
            ),
        )
        assert (
            classify_failure(overloaded, case)
            is FailureKind.MULTI_SITUATION_OVERLOAD
        )

        hallucinated = _taxonomy_report(
            transcript=(
                Utterance(
                    seq=0,
                    tick=1,
                    phase=PhaseId.SURGICAL_OPERATION,
                    speaker=RoleId.CHIEF_SURGEON,
                    text=f"I suspect {D2.name} instead",
                ),
            )
        )
        assert (
            classify_failure(hallucinated, case)
            is FailureKind.RARE_DISEASE_HALLUCINATION
        )


# --- 9: batch scale ---


def test_criterion_9_thousand_report_batch():
    with criterion(9, "1,000 seeded reports in under five minutes, all parse"):
        started = time.monotonic()
        corpus = generate_corpus(40, seed=9)
        runner = _fresh_runner()
        sim_ids = set()
        for seed in range(25):
            for bundle in corpus.bundles:
                config = SimulationConfig(
                    sim_id=f"batch-{bundle.case.case_id}-s{seed}", seed=seed
                )
                report = runner.simulate(bundle, config)
                back = report_from_dict(report_to_dict(report))
                assert back.sim_id == report.sim_id
                assert len(back.transcript) == len(report.transcript)
                sim_ids.add(report.sim_id)
        elapsed = time.monotonic() - started
        assert len(sim_ids) == 1000
        assert elapsed < 300.0, f"batch took {elapsed:.1f}s"


# --- 10: optional live smoke ---


@pytest.mark.skipif(
    not remote_configured(), reason="no remote credentials in the environment"
)
def test_criterion_10_live_smoke():
    with criterion(10, "live backend completes one sim and a 5-case eval"):
        runner = Runner.remote(long_memory=LongMemory())
        corpus = generate_corpus(5, seed=10)
        report = runner.simulate(corpus.bundles[0], SimulationConfig(seed=10))
        assert len(report.transcript) > 0
        run = evaluate_corpus(
            Runner.remote(long_memory=LongMemory()),
            corpus,
            SimulationConfig(seed=10),
        )
        assert run.summary.n_cases == 5
