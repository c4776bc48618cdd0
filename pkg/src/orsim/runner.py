"""Assembly and orchestration: rosters, single runs, evaluation batches."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

from .agents import PlanVocabulary, RoleAgent
from .backends import Backend, RemoteBackend, RemoteConfig, ScriptedBackend
from .copilot import CopilotAgent, LongMemory
from .defaults import (
    default_knowledge_docs,
    default_route_aliases,
    default_rules_payload,
    default_taxonomy,
    default_turn_policy,
)
from .domain import PhaseId, RoleId, SubtaskTaxonomy
from .engine import Simulation, SimulationConfig, SimulationReport
from .evaluation import (
    CaseResult,
    EvalSummary,
    aggregate,
    config_fingerprint,
    evaluate_report,
)
from .knowledge import HashEmbedder, KnowledgeDoc, build_role_banks
from .records import CaseFile, Corpus

ABLATIONS: dict[str, dict[str, bool]] = {
    "full": {},
    "copilot_off": {"copilot_on": False},
    "rag_off": {"rag_on": False},
    "memory_off": {"long_memory_on": False},
    "react_off": {"react_on": False},
}


class Runner:
    """Builds rosters and drives simulations against one backend.

    Knowledge banks are built once and shared; the copilot is constructed
    fresh per simulation because it carries per-episode state.
    """

    def __init__(
        self,
        backend: Backend,
        taxonomy: SubtaskTaxonomy | None = None,
        turn_policy: Mapping[PhaseId, Sequence[RoleId]] | None = None,
        route_aliases: Mapping[str, str] | None = None,
        docs: Sequence[KnowledgeDoc] | None = None,
        long_memory: LongMemory | None = None,
    ):
        self.backend = backend
        self.taxonomy = taxonomy or default_taxonomy()
        self.turn_policy = dict(turn_policy or default_turn_policy())
        self.route_aliases = dict(route_aliases or default_route_aliases())
        self.banks = build_role_banks(
            docs if docs is not None else default_knowledge_docs(),
            HashEmbedder(),
        )
        self.long_memory = long_memory

    @classmethod
    def scripted(
        cls,
        rules_path: str | Path | None = None,
        long_memory: LongMemory | None = None,
        docs: Sequence[KnowledgeDoc] | None = None,
    ) -> "Runner":
        if rules_path is not None:
            backend: Backend = ScriptedBackend.from_file(rules_path)
        else:
            backend = ScriptedBackend.from_dict(default_rules_payload())
        return cls(backend, docs=docs, long_memory=long_memory)

    @classmethod
    def remote(
        cls,
        config: RemoteConfig | None = None,
        long_memory: LongMemory | None = None,
        docs: Sequence[KnowledgeDoc] | None = None,
    ) -> "Runner":
        backend = RemoteBackend(config or RemoteConfig.from_env())
        return cls(backend, docs=docs, long_memory=long_memory)

    def make_roster(self, config: SimulationConfig) -> dict[RoleId, RoleAgent]:
        roster: dict[RoleId, RoleAgent] = {}
        for role in RoleId:
            if role is RoleId.SURGERY_COPILOT:
                continue
            roster[role] = RoleAgent(role, self.backend, self.banks.get(role))
        if config.copilot_on:
            roster[RoleId.SURGERY_COPILOT] = CopilotAgent(
                self.backend,
                self.banks.get(RoleId.SURGERY_COPILOT),
                long_memory=self.long_memory,
            )
        return roster

    def new_simulation(
        self, bundle: CaseFile, config: SimulationConfig
    ) -> Simulation:
        return Simulation(
            case=bundle.case,
            roster=self.make_roster(config),
            config=config,
            taxonomy=self.taxonomy,
            turn_policy=self.turn_policy,
            triggers=bundle.triggers,
            route_aliases=self.route_aliases,
            plan_vocab=PlanVocabulary(bundle.case.gold_plan),
        )

    def simulate(self, bundle: CaseFile, config: SimulationConfig) -> SimulationReport:
        return self.new_simulation(bundle, config).run()


# --- evaluation batches ---


@dataclass(frozen=True)
class EvalRun:
    run_id: str
    label: str
    fingerprint: str
    flags: Mapping[str, bool]
    case_ids: tuple[str, ...]
    results: tuple[CaseResult, ...]
    summary: EvalSummary

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "label": self.label,
            "fingerprint": self.fingerprint,
            "flags": dict(self.flags),
            "case_ids": list(self.case_ids),
            "results": [
                {
                    "case_id": r.case_id,
                    "sim_id": r.sim_id,
                    "route_score": r.route_score,
                    "plan_score": r.plan_score,
                    "failure": r.failure.value if r.failure else None,
                    "events_fired": r.events_fired,
                    "checkpoints": [
                        {
                            "fraction": c.fraction,
                            "completeness": round(c.completeness, 2),
                            "accuracy": round(c.accuracy, 2),
                        }
                        for c in r.checkpoints
                    ],
                }
                for r in self.results
            ],
            "summary": {
                "n_cases": self.summary.n_cases,
                "route_accuracy": self.summary.route_accuracy,
                "plan_accuracy": self.summary.plan_accuracy,
                "final_completeness": self.summary.final_completeness,
                "failure_counts": dict(self.summary.failure_counts),
            },
        }


def evaluate_corpus(
    runner: Runner,
    corpus: Corpus,
    base: SimulationConfig,
    label: str = "full",
    run_id: str | None = None,
) -> EvalRun:
    """Run every case in the corpus under one configuration and score it."""
    overrides = ABLATIONS.get(label, {})
    flags = {**base.flags(), **overrides}
    config = replace(
        base,
        copilot_on=flags["copilot_on"],
        rag_on=flags["rag_on"],
        long_memory_on=flags["long_memory_on"],
        react_on=flags["react_on"],
    )
    rid = run_id or f"{label}-s{base.seed}"
    results: list[CaseResult] = []
    case_ids: list[str] = []
    for bundle in sorted(corpus.bundles, key=lambda b: b.case.case_id):
        case_ids.append(bundle.case.case_id)
        sim_config = replace(config, sim_id=f"{rid}-{bundle.case.case_id}")
        report = runner.simulate(bundle, sim_config)
        results.append(evaluate_report(report, bundle.case))
    return EvalRun(
        run_id=rid,
        label=label,
        fingerprint=config_fingerprint(flags),
        flags=flags,
        case_ids=tuple(case_ids),
        results=tuple(results),
        summary=aggregate(results),
    )
