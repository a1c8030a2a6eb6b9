"""Deployment state machines gated on parity and per-subgroup performance.

Canary rollouts expose a challenger to strictly increasing population
fractions; a stage gate passes only when every monitored parity gap and
per-subgroup rate is inside its threshold and enough events over enough time
have been observed.  Rollback is automatic on gate failure and operators can
always abort, never force-promote past a failing gate.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from datetime import datetime
from typing import Mapping, Optional, Sequence

from .errors import (
    ExperimentNotActive,
    InvalidPlan,
    InvalidTransition,
    RolloutNotRunning,
)
from .events import JoinedRecord, format_instant, parse_instant
from .metrics import (
    DEFAULT_MIN_COUNT,
    GAP_FUNCTIONS,
    parity_report,
    stratified_rates,
)
from .nutrition import NutritionLabel

DEFAULT_STAGE_FRACTIONS = (0.05, 0.25, 0.5, 1.0)

STATUS_PENDING = "pending"
STATUS_RUNNING = "running"
STATUS_PROMOTED = "promoted"
STATUS_ROLLED_BACK = "rolled_back"
STATUS_COMPLETED = "completed"

GATE_PASS = "pass"
GATE_FAIL = "fail"
GATE_INSUFFICIENT = "insufficient"

ARM_CANARY = "canary"
ARM_STABLE = "stable"
ARM_TREATMENT = "treatment"
ARM_CONTROL = "control"

DECISION_KEEP_BLUE = "keep_blue"
DECISION_SWITCH_TO_GREEN = "switch_to_green"
DECISION_UNDECIDED = "undecided"


def _unit_hash(*parts: str) -> float:
    """Deterministic uniform draw in [0, 1) from the joined parts."""
    digest = hashlib.sha256("|".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


# --- canary ------------------------------------------------------------------

@dataclass(frozen=True)
class CanaryStage:
    fraction: float
    min_duration_seconds: float = 0.0
    min_events: int = 0

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "min_duration_seconds": self.min_duration_seconds,
            "min_events": self.min_events,
        }


@dataclass(frozen=True)
class CanaryPlan:
    rollout_id: str
    model_version: str
    stages: tuple[CanaryStage, ...]
    max_parity_gap: Mapping[str, float] = field(default_factory=dict)
    cohort_attributes: tuple[str, ...] = ()
    min_count: int = DEFAULT_MIN_COUNT

    def validate(self) -> "CanaryPlan":
        if not self.rollout_id:
            raise InvalidPlan("rollout_id must be non-empty")
        if not self.stages:
            raise InvalidPlan("plan needs at least one stage")
        fractions = [s.fraction for s in self.stages]
        if any(not (0.0 < f <= 1.0) for f in fractions):
            raise InvalidPlan(f"stage fractions must lie in (0, 1], got {fractions}")
        if any(b <= a for a, b in zip(fractions, fractions[1:])):
            raise InvalidPlan(f"stage fractions must be strictly increasing, got {fractions}")
        if fractions[-1] != 1.0:
            raise InvalidPlan(f"final stage fraction must be 1.0, got {fractions[-1]}")
        for name, threshold in self.max_parity_gap.items():
            if name not in GAP_FUNCTIONS:
                raise InvalidPlan(f"unknown parity metric {name!r} in gates")
            if not (0.0 <= threshold <= 1.0):
                raise InvalidPlan(f"gate threshold for {name!r} outside [0, 1]")
        return self

    def to_dict(self) -> dict:
        return {
            "rollout_id": self.rollout_id,
            "model_version": self.model_version,
            "stages": [s.to_dict() for s in self.stages],
            "max_parity_gap": dict(self.max_parity_gap),
            "cohort_attributes": list(self.cohort_attributes),
            "min_count": self.min_count,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "CanaryPlan":
        try:
            stages = tuple(
                CanaryStage(
                    fraction=float(s["fraction"]),
                    min_duration_seconds=float(s.get("min_duration_seconds", 0.0)),
                    min_events=int(s.get("min_events", 0)),
                )
                for s in (d.get("stages") or [])
            )
            plan = cls(
                rollout_id=str(d.get("rollout_id", "")),
                model_version=str(d.get("model_version", "")),
                stages=stages,
                max_parity_gap={
                    str(k): float(v) for k, v in dict(d.get("max_parity_gap") or {}).items()
                },
                cohort_attributes=tuple(str(a) for a in (d.get("cohort_attributes") or [])),
                min_count=int(d.get("min_count", DEFAULT_MIN_COUNT)),  # type: ignore[arg-type]
            )
        except InvalidPlan:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidPlan(f"malformed plan: {exc}") from None
        return plan.validate()


def plan_canary(config: Mapping[str, object]) -> CanaryPlan:
    """Validate a plan document; raises InvalidPlan naming the violation."""
    return CanaryPlan.from_dict(config)


@dataclass
class GateCheck:
    name: str
    value: Optional[float]
    bound: str
    ok: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "bound": self.bound, "ok": self.ok}


@dataclass
class GateResult:
    result: str  # pass | fail | insufficient
    stage_index: int
    evaluated_at: datetime
    events_seen: int = 0
    outcome_bearing: int = 0
    checks: list[GateCheck] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)
    reasons: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "result": self.result,
            "stage_index": self.stage_index,
            "evaluated_at": format_instant(self.evaluated_at),
            "events_seen": self.events_seen,
            "outcome_bearing": self.outcome_bearing,
            "checks": [c.to_dict() for c in self.checks],
            "violations": list(self.violations),
            "reasons": list(self.reasons),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "GateResult":
        return cls(
            result=str(d["result"]),
            stage_index=int(d["stage_index"]),  # type: ignore[arg-type]
            evaluated_at=parse_instant(d["evaluated_at"]),  # type: ignore[arg-type]
            events_seen=int(d.get("events_seen", 0)),  # type: ignore[arg-type]
            outcome_bearing=int(d.get("outcome_bearing", 0)),  # type: ignore[arg-type]
            checks=[
                GateCheck(
                    name=str(c["name"]),
                    value=None if c.get("value") is None else float(c["value"]),  # type: ignore[arg-type]
                    bound=str(c.get("bound", "")),
                    ok=bool(c.get("ok")),
                )
                for c in (d.get("checks") or [])
            ],
            violations=[str(v) for v in (d.get("violations") or [])],
            reasons=[str(r) for r in (d.get("reasons") or [])],
        )


@dataclass
class TransitionEntry:
    at: datetime
    kind: str  # created | started | gate_evaluated | promoted | completed | rolled_back
    stage_index: int
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "at": format_instant(self.at),
            "kind": self.kind,
            "stage_index": self.stage_index,
            "detail": dict(self.detail),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "TransitionEntry":
        return cls(
            at=parse_instant(d["at"]),  # type: ignore[arg-type]
            kind=str(d["kind"]),
            stage_index=int(d.get("stage_index", 0)),  # type: ignore[arg-type]
            detail=dict(d.get("detail") or {}),  # type: ignore[arg-type]
        )


@dataclass
class CanaryState:
    """Mutable run state; every mutation appends to the transition log."""

    plan: CanaryPlan
    status: str = STATUS_PENDING
    current_stage_index: int = 0
    stage_started_at: Optional[datetime] = None
    gate_results: dict[int, GateResult] = field(default_factory=dict)
    transitions: list[TransitionEntry] = field(default_factory=list)

    @classmethod
    def create(cls, plan: CanaryPlan, now: datetime) -> "CanaryState":
        state = cls(plan=plan)
        state._log(now, "created", 0)
        return state

    def _log(self, at: datetime, kind: str, stage_index: int, **detail) -> TransitionEntry:
        entry = TransitionEntry(at=at, kind=kind, stage_index=stage_index, detail=detail)
        self.transitions.append(entry)
        return entry

    @property
    def current_stage(self) -> CanaryStage:
        return self.plan.stages[self.current_stage_index]

    @property
    def current_fraction(self) -> float:
        if self.status in (STATUS_RUNNING, STATUS_PROMOTED, STATUS_COMPLETED):
            return self.plan.stages[self.current_stage_index].fraction
        return 0.0

    @property
    def terminal(self) -> bool:
        return self.status in (STATUS_ROLLED_BACK, STATUS_COMPLETED)

    def start(self, now: datetime) -> None:
        if self.status != STATUS_PENDING:
            raise InvalidTransition(f"cannot start a rollout in status {self.status!r}")
        self.status = STATUS_RUNNING
        self.stage_started_at = now
        self._log(now, "started", self.current_stage_index)

    def record_gate(self, result: GateResult) -> None:
        self.gate_results[result.stage_index] = result
        self._log(result.evaluated_at, "gate_evaluated", result.stage_index,
                  gate=result.to_dict())

    def advance(self, gate_result: GateResult, now: Optional[datetime] = None) -> "CanaryState":
        """Apply one gate outcome: promote, complete, roll back, or hold."""
        if self.status != STATUS_RUNNING:
            raise InvalidTransition(
                f"cannot advance a rollout in status {self.status!r}"
            )
        at = now or gate_result.evaluated_at
        self.record_gate(gate_result)
        if gate_result.result == GATE_INSUFFICIENT:
            return self
        if gate_result.result == GATE_FAIL:
            self.status = STATUS_ROLLED_BACK
            self._log(at, "rolled_back", self.current_stage_index,
                      violations=list(gate_result.violations))
            return self
        if gate_result.result != GATE_PASS:
            raise InvalidTransition(f"unknown gate result {gate_result.result!r}")
        if self.current_stage_index + 1 == len(self.plan.stages):
            self.status = STATUS_COMPLETED
            self._log(at, "completed", self.current_stage_index)
        else:
            self._log(at, "promoted", self.current_stage_index,
                      to_stage=self.current_stage_index + 1)
            self.current_stage_index += 1
            self.stage_started_at = at
        return self

    def abort(self, now: datetime, reason: str = "operator_abort") -> "CanaryState":
        if self.terminal:
            raise InvalidTransition(f"cannot abort a rollout in status {self.status!r}")
        self.status = STATUS_ROLLED_BACK
        self._log(now, "rolled_back", self.current_stage_index, reason=reason)
        return self

    def to_dict(self) -> dict:
        return {
            "plan": self.plan.to_dict(),
            "status": self.status,
            "current_stage_index": self.current_stage_index,
            "current_fraction": self.current_fraction,
            "stage_started_at": (
                format_instant(self.stage_started_at) if self.stage_started_at else None
            ),
            "gate_results": {
                str(i): r.to_dict() for i, r in sorted(self.gate_results.items())
            },
            "latest_gate": (
                self.gate_results[max(self.gate_results)].to_dict()
                if self.gate_results
                else None
            ),
            "transitions": [t.to_dict() for t in self.transitions],
        }

    @classmethod
    def replay(cls, plan: CanaryPlan, entries: Sequence[TransitionEntry]) -> "CanaryState":
        """Reconstruct state exactly from the plan and its transition log."""
        state = cls(plan=plan)
        for entry in entries:
            state.transitions.append(entry)
            if entry.kind == "created":
                continue
            if entry.kind == "started":
                state.status = STATUS_RUNNING
                state.stage_started_at = entry.at
            elif entry.kind == "gate_evaluated":
                result = GateResult.from_dict(entry.detail["gate"])
                state.gate_results[entry.stage_index] = result
            elif entry.kind == "promoted":
                state.current_stage_index = int(entry.detail.get("to_stage", entry.stage_index + 1))
                state.stage_started_at = entry.at
            elif entry.kind == "completed":
                state.status = STATUS_COMPLETED
            elif entry.kind == "rolled_back":
                state.status = STATUS_ROLLED_BACK
        return state


def assign_cohort(subject_id: str, state: CanaryState, salt: str) -> str:
    """Deterministic canary/stable split at the current stage fraction.

    Hash-threshold assignment: a subject admitted at fraction f stays in the
    canary for every fraction >= f, so exposure only grows until rollback.
    """
    if state.status != STATUS_RUNNING:
        raise RolloutNotRunning(
            f"rollout {state.plan.rollout_id!r} is {state.status}, not running"
        )
    u = _unit_hash(salt, state.plan.rollout_id, subject_id)
    return ARM_CANARY if u < state.current_fraction else ARM_STABLE


def evaluate_gate(
    state: CanaryState,
    stage_records: Sequence[JoinedRecord],
    label: NutritionLabel,
    now: datetime,
) -> GateResult:
    """Evaluate the running stage against parity gates and label bands.

    Pass requires: enough events over enough time, every monitored parity
    gap at or under its threshold, and every observed subgroup's rates inside
    the label's acceptable band.  Gaps or rates that cannot be computed at
    min_count support make the result insufficient, never a pass.
    """
    if state.status != STATUS_RUNNING:
        raise RolloutNotRunning(
            f"rollout {state.plan.rollout_id!r} is {state.status}, not running"
        )
    stage = state.current_stage
    result = GateResult(
        result=GATE_PASS,
        stage_index=state.current_stage_index,
        evaluated_at=now,
        events_seen=len(stage_records),
        outcome_bearing=sum(1 for r in stage_records if r.has_outcome),
    )

    too_early = False
    if result.events_seen < stage.min_events:
        too_early = True
        result.reasons.append(
            f"events {result.events_seen} below min_events {stage.min_events}"
        )
    if state.stage_started_at is not None:
        elapsed = (now - state.stage_started_at).total_seconds()
        if elapsed < stage.min_duration_seconds:
            too_early = True
            result.reasons.append(
                f"stage age {elapsed:.0f}s below min_duration {stage.min_duration_seconds:.0f}s"
            )
    insufficient = False

    for attribute in state.plan.cohort_attributes:
        report = parity_report(
            stage_records, attribute, label, min_count=state.plan.min_count
        )
        for pair in report.pairs:
            for gap_name, threshold in state.plan.max_parity_gap.items():
                value = pair.gaps.get(gap_name)
                check_name = f"{gap_name}:{attribute}:{report.reference_subgroup}|{pair.other}"
                if value is None:
                    insufficient = True
                    result.reasons.append(f"{check_name}: {pair.reason or 'insufficient data'}")
                    result.checks.append(GateCheck(check_name, None, f"<= {threshold}", False))
                    continue
                ok = value <= threshold
                result.checks.append(GateCheck(check_name, value, f"<= {threshold}", ok))
                if not ok:
                    result.violations.append(check_name)

        observed = stratified_rates(stage_records, attribute)
        for category, entry in label.entries_for(attribute).items():
            rates = observed.get(category)
            for metric, (low, high) in entry.acceptable_band.items():
                check_name = f"band:{attribute}={category}:{metric}"
                value = rates.rate(metric) if rates else None
                support = rates.support if rates else 0
                if value is None or support < state.plan.min_count:
                    insufficient = True
                    result.reasons.append(
                        f"{check_name}: support {support} below min_count {state.plan.min_count}"
                    )
                    result.checks.append(
                        GateCheck(check_name, value, f"[{low}, {high}]", False)
                    )
                    continue
                ok = low <= value <= high
                result.checks.append(GateCheck(check_name, value, f"[{low}, {high}]", ok))
                if not ok:
                    result.violations.append(check_name)

    # Volume/duration floors win: a violation seen on a trickle of events is
    # re-checked once the stage has real data, and can only hold or worsen.
    if too_early:
        result.result = GATE_INSUFFICIENT
    elif result.violations:
        result.result = GATE_FAIL
    elif insufficient:
        result.result = GATE_INSUFFICIENT
    return result


# --- blue/green ---------------------------------------------------------------

@dataclass
class ArmMetrics:
    """Per-arm parity and per-subgroup performance used as comparison KPIs."""

    arm: str
    worst_gap: dict[str, Optional[float]] = field(default_factory=dict)
    worst_subgroup_f1: Optional[float] = None
    worst_subgroup: Optional[str] = None
    supports: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "arm": self.arm,
            "worst_gap": dict(self.worst_gap),
            "worst_subgroup_f1": self.worst_subgroup_f1,
            "worst_subgroup": self.worst_subgroup,
            "supports": dict(self.supports),
        }


def arm_metrics(
    arm: str,
    records: Sequence[JoinedRecord],
    label: NutritionLabel,
    attributes: Sequence[str],
    min_count: int = DEFAULT_MIN_COUNT,
) -> ArmMetrics:
    """Worst-case parity gaps plus the mandatory worst-subgroup performance."""
    metrics = ArmMetrics(arm=arm)
    for gap_name in GAP_FUNCTIONS:
        metrics.worst_gap[gap_name] = None
    for attribute in attributes:
        report = parity_report(records, attribute, label, min_count=min_count)
        for pair in report.pairs:
            for gap_name, value in pair.gaps.items():
                if value is None:
                    continue
                current = metrics.worst_gap.get(gap_name)
                if current is None or value > current:
                    metrics.worst_gap[gap_name] = value
        for category, rates in stratified_rates(records, attribute).items():
            key = f"{attribute}={category}"
            metrics.supports[key] = rates.support
            if rates.f1 is not None and rates.support >= min_count:
                if metrics.worst_subgroup_f1 is None or rates.f1 < metrics.worst_subgroup_f1:
                    metrics.worst_subgroup_f1 = rates.f1
                    metrics.worst_subgroup = key
    return metrics


@dataclass
class BlueGreenComparison:
    comparison_id: str
    blue: str  # model_version or rule-baseline tag
    green: str
    kpi: tuple[str, ...] = ("equalized_odds",)
    attributes: tuple[str, ...] = ()
    margin: float = 0.05
    min_count: int = DEFAULT_MIN_COUNT
    decision: str = DECISION_UNDECIDED
    notes: list[str] = field(default_factory=list)
    blue_metrics: Optional[ArmMetrics] = None
    green_metrics: Optional[ArmMetrics] = None
    window: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "comparison_id": self.comparison_id,
            "blue": self.blue,
            "green": self.green,
            "kpi": list(self.kpi),
            "attributes": list(self.attributes),
            "margin": self.margin,
            "min_count": self.min_count,
            "decision": self.decision,
            "notes": list(self.notes),
            "blue_metrics": self.blue_metrics.to_dict() if self.blue_metrics else None,
            "green_metrics": self.green_metrics.to_dict() if self.green_metrics else None,
            "window": dict(self.window),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "BlueGreenComparison":
        comparison = cls(
            comparison_id=str(d.get("comparison_id", "")),
            blue=str(d.get("blue", "")),
            green=str(d.get("green", "")),
            kpi=tuple(str(k) for k in (d.get("kpi") or ("equalized_odds",))),
            attributes=tuple(str(a) for a in (d.get("attributes") or [])),
            margin=float(d.get("margin", 0.05)),  # type: ignore[arg-type]
            min_count=int(d.get("min_count", DEFAULT_MIN_COUNT)),  # type: ignore[arg-type]
        )
        for name in comparison.kpi:
            if name not in GAP_FUNCTIONS:
                raise InvalidPlan(f"unknown parity KPI {name!r}")
        if not comparison.comparison_id:
            raise InvalidPlan("comparison_id must be non-empty")
        return comparison


def _arm_sufficient(
    metrics: ArmMetrics, label: NutritionLabel, attributes: Sequence[str], min_count: int
) -> list[str]:
    missing = []
    for attribute in attributes:
        for category in label.entries_for(attribute):
            key = f"{attribute}={category}"
            if metrics.supports.get(key, 0) < min_count:
                missing.append(f"{metrics.arm}:{key}")
    return missing


def compare_arms(
    comparison: BlueGreenComparison,
    blue_records: Sequence[JoinedRecord],
    green_records: Sequence[JoinedRecord],
    label: NutritionLabel,
) -> BlueGreenComparison:
    """Decide between arms on the primary parity KPI, margin-gated.

    Stays undecided until both arms meet min_count in every monitored
    subgroup; the arm with the strictly smaller worst-case gap wins only when
    the difference exceeds the margin.
    """
    attributes = comparison.attributes or tuple(label.subgroup_schema)
    blue = arm_metrics(
        comparison.blue, blue_records, label, attributes, comparison.min_count
    )
    green = arm_metrics(
        comparison.green, green_records, label, attributes, comparison.min_count
    )
    comparison.blue_metrics = blue
    comparison.green_metrics = green
    comparison.window = {
        "blue_records": len(blue_records),
        "green_records": len(green_records),
    }
    comparison.notes = []

    missing = _arm_sufficient(blue, label, attributes, comparison.min_count)
    missing += _arm_sufficient(green, label, attributes, comparison.min_count)
    if missing:
        comparison.decision = DECISION_UNDECIDED
        comparison.notes.append("insufficient data: " + ", ".join(sorted(missing)))
        return comparison

    primary = comparison.kpi[0]
    blue_value = blue.worst_gap.get(primary)
    green_value = green.worst_gap.get(primary)
    if blue_value is None or green_value is None:
        comparison.decision = DECISION_UNDECIDED
        comparison.notes.append(f"primary KPI {primary!r} undefined for an arm")
        return comparison

    if abs(blue_value - green_value) <= comparison.margin:
        comparison.decision = DECISION_UNDECIDED
        comparison.notes.append(
            f"{primary} difference {abs(blue_value - green_value):.4f} within margin"
        )
    elif green_value < blue_value:
        comparison.decision = DECISION_SWITCH_TO_GREEN
    else:
        comparison.decision = DECISION_KEEP_BLUE
    return comparison


# --- experiments ----------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    split: float = 0.5  # treatment share
    attributes: tuple[str, ...] = ()
    salt: str = ""
    active: bool = True


@dataclass(frozen=True)
class ExperimentAssignment:
    subject_id: str
    arm: str  # treatment | control
    stratum: str
    salt: str

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "arm": self.arm,
            "stratum": self.stratum,
            "salt": self.salt,
        }


def stratum_key(subgroup: Mapping[str, str], attributes: Sequence[str]) -> str:
    """Canonical stratum id; unknown attribute values form their own stratum."""
    if not attributes:
        return "(all)"
    return ",".join(f"{a}={subgroup.get(a, '(unknown)')}" for a in attributes)


def assign_arm(
    subject_id: str,
    experiment: ExperimentConfig,
    subgroup: Mapping[str, str],
    salt: Optional[str] = None,
) -> ExperimentAssignment:
    """Deterministic, stratified treatment/control split (50/50 by default)."""
    if not experiment.active:
        raise ExperimentNotActive(f"experiment {experiment.experiment_id!r} not active")
    effective_salt = salt if salt is not None else experiment.salt
    u = _unit_hash(effective_salt, experiment.experiment_id, subject_id)
    return ExperimentAssignment(
        subject_id=subject_id,
        arm=ARM_TREATMENT if u < experiment.split else ARM_CONTROL,
        stratum=stratum_key(subgroup, experiment.attributes),
        salt=effective_salt,
    )
