"""Deterministic operating-room sandbox with role agents and a surgery copilot."""

from .domain import (
    Action,
    ActionKind,
    DiseaseLabel,
    EventTrigger,
    MriReport,
    PhaseId,
    PlanStep,
    RoleId,
    RouteLabel,
    StageId,
    SubtaskTaxonomy,
    SurgicalCase,
    Utterance,
    canonicalize_route,
    stage_of,
    validate_case,
)
from .engine import Simulation, SimulationConfig, SimulationReport
from .errors import OrsimError
from .runner import Runner, evaluate_corpus

__all__ = [
    "Action",
    "ActionKind",
    "DiseaseLabel",
    "EventTrigger",
    "MriReport",
    "OrsimError",
    "PhaseId",
    "PlanStep",
    "RoleId",
    "RouteLabel",
    "Runner",
    "Simulation",
    "SimulationConfig",
    "SimulationReport",
    "StageId",
    "SubtaskTaxonomy",
    "SurgicalCase",
    "Utterance",
    "canonicalize_route",
    "evaluate_corpus",
    "stage_of",
    "validate_case",
]

__version__ = "0.1.0"
