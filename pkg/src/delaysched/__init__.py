"""Scheduling unit jobs with communication delays on related machines."""

from .model import (
    ADDITIVE,
    JOB_MACHINE,
    UMPS,
    Instance,
    Job,
    Machine,
    ModelError,
    PrecedenceDag,
    Schedule,
    ValidationReport,
    Violation,
    critical_path,
    is_valid,
    validate_schedule,
)

__version__ = "0.1.0"

__all__ = [
    "ADDITIVE",
    "JOB_MACHINE",
    "UMPS",
    "Instance",
    "Job",
    "Machine",
    "ModelError",
    "PrecedenceDag",
    "Schedule",
    "ValidationReport",
    "Violation",
    "critical_path",
    "is_valid",
    "validate_schedule",
]
