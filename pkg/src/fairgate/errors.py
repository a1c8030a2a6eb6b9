"""Exception hierarchy shared by every fairgate module.

Each error carries a stable machine-readable ``code`` so the HTTP gateway and
CLI can map domain failures onto wire-level error payloads without guessing.
"""

from __future__ import annotations


class FairgateError(Exception):
    """Base class; ``code`` is the machine-readable identifier."""

    code = "internal"
    http_status = 500

    def __init__(self, message: str = ""):
        super().__init__(message or self.__doc__ or self.code)

    @property
    def message(self) -> str:
        return str(self)

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message}


# --- event store -----------------------------------------------------------

class ParseError(FairgateError):
    code = "parse_error"
    http_status = 400


class SchemaError(FairgateError):
    code = "schema_error"
    http_status = 400


class DuplicateEvent(FairgateError):
    code = "duplicate_event"
    http_status = 409


class UnknownEvent(FairgateError):
    code = "unknown_event"
    http_status = 404


class AlreadyJoined(FairgateError):
    code = "already_joined"
    http_status = 409


class ValidationError(FairgateError):
    code = "validation_error"
    http_status = 400


# --- metrics ---------------------------------------------------------------

class UnknownAttribute(FairgateError):
    code = "unknown_attribute"
    http_status = 400


class MissingOutcome(FairgateError):
    code = "missing_outcome"
    http_status = 400


class InsufficientData(FairgateError):
    code = "insufficient_data"
    http_status = 422


# --- drift -----------------------------------------------------------------

class DegenerateDistribution(FairgateError):
    code = "degenerate_distribution"
    http_status = 422


# --- rebalance -------------------------------------------------------------

class TooFewSamples(FairgateError):
    code = "too_few_samples"
    http_status = 400


class BadK(FairgateError):
    code = "bad_k"
    http_status = 400


# --- rollout ---------------------------------------------------------------

class InvalidPlan(FairgateError):
    code = "invalid_plan"
    http_status = 400


class RolloutNotRunning(FairgateError):
    code = "rollout_not_running"
    http_status = 409


class InvalidTransition(FairgateError):
    code = "invalid_transition"
    http_status = 409


class ExperimentNotActive(FairgateError):
    code = "experiment_not_active"
    http_status = 409


class UnknownRollout(FairgateError):
    code = "unknown_rollout"
    http_status = 404


class UnknownComparison(FairgateError):
    code = "unknown_comparison"
    http_status = 404


# --- human-in-the-loop -----------------------------------------------------

class UnknownMetric(FairgateError):
    code = "unknown_metric"
    http_status = 400


class UnknownItem(FairgateError):
    code = "unknown_item"
    http_status = 404


class AlreadyDecided(FairgateError):
    code = "already_decided"
    http_status = 409


class MissingCorrectedLabel(FairgateError):
    code = "missing_corrected_label"
    http_status = 400


# --- simulator -------------------------------------------------------------

class InvalidSpec(FairgateError):
    code = "invalid_spec"
    http_status = 400


class InvalidInjection(FairgateError):
    code = "invalid_injection"
    http_status = 400


class UnknownScenario(FairgateError):
    code = "unknown_scenario"
    http_status = 404


# --- gateway ---------------------------------------------------------------

class ConfigError(FairgateError):
    code = "config_error"
    http_status = 500


class BindError(FairgateError):
    code = "bind_error"
    http_status = 500


class CorruptLog(FairgateError):
    code = "corrupt_log"
    http_status = 500

    def __init__(self, message: str = "", path: str = "", line_number: int = 0):
        super().__init__(message)
        self.path = path
        self.line_number = line_number

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update({"path": self.path, "line_number": self.line_number})
        return d


class Overloaded(FairgateError):
    code = "overloaded"
    http_status = 429
