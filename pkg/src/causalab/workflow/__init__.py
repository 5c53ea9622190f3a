"""Session orchestration: typed commands, journal with rollback, algorithm
recommendation, runtime estimation, report generation."""

from .commands import (
    Describe,
    Discover,
    EstimateEffect,
    Evaluate,
    GenerateReport,
    LoadData,
    Preprocess,
    Rollback,
    RunRca,
    SetGraph,
    SetKnowledge,
    Simulate,
    WorkflowCommand,
    command_from_dict,
    command_to_dict,
    parse_intent,
)
from .advisor import (
    Calibration,
    DatasetProfile,
    Recommendation,
    RuntimeEstimate,
    estimate_runtime,
    profile_dataset,
    recommend,
)
from .session import (
    Session,
    SessionStore,
    StepRecord,
    execute_step,
    replay,
    rollback,
)
from .report import generate_report

__all__ = [
    "Calibration",
    "DatasetProfile",
    "Describe",
    "Discover",
    "EstimateEffect",
    "Evaluate",
    "GenerateReport",
    "LoadData",
    "Preprocess",
    "Recommendation",
    "Rollback",
    "RunRca",
    "RuntimeEstimate",
    "Session",
    "SessionStore",
    "SetGraph",
    "SetKnowledge",
    "Simulate",
    "StepRecord",
    "WorkflowCommand",
    "command_from_dict",
    "command_to_dict",
    "estimate_runtime",
    "execute_step",
    "generate_report",
    "parse_intent",
    "profile_dataset",
    "recommend",
    "replay",
    "rollback",
]
