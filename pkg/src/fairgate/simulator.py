"""Synthetic population engine with drift injection and scripted scenarios.

Generates schema-valid prediction/outcome streams from subgroup priors, a
per-subgroup base-rate, and per-subgroup model behaviour (TPR/FPR).  Four
uniform draws are consumed per event regardless of branch, so injecting new
parameters at an onset index leaves every pre-onset byte identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .distributions import SHARE_SUM_TOL
from .drift import DriftThresholds, detect_drift
from .errors import InvalidInjection, InvalidSpec, UnknownScenario
from .events import EventStore, OutcomeEvent, PredictionEvent
from .metrics import DEFAULT_WINDOW_SIZE, tumbling_windows
from .nutrition import NutritionLabel, SubgroupEntry
from .rollout import (
    ARM_CANARY,
    GATE_INSUFFICIENT,
    CanaryPlan,
    CanaryState,
    assign_cohort,
    evaluate_gate,
)

DEFAULT_OUTCOME_LAG = 100
DEFAULT_START = datetime(2025, 1, 1, tzinfo=timezone.utc)

INJECTION_KINDS = ("prior_shift", "concept_shift", "pipeline_corruption")


@dataclass(frozen=True)
class SubgroupBehavior:
    """P(Y=1), P(Yhat=1 | Y=1) and P(Yhat=1 | Y=0) for one subgroup."""

    label_prob: float
    tpr: float
    fpr: float

    def validate(self) -> "SubgroupBehavior":
        for name, p in (("label_prob", self.label_prob), ("tpr", self.tpr), ("fpr", self.fpr)):
            if not (0.0 <= p <= 1.0):
                raise InvalidSpec(f"{name} {p} outside [0, 1]")
        return self

    def to_dict(self) -> dict:
        return {"label_prob": self.label_prob, "tpr": self.tpr, "fpr": self.fpr}

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "SubgroupBehavior":
        return cls(
            label_prob=float(d["label_prob"]),  # type: ignore[arg-type]
            tpr=float(d["tpr"]),  # type: ignore[arg-type]
            fpr=float(d["fpr"]),  # type: ignore[arg-type]
        ).validate()

    def analytic_rates(self) -> dict[str, Optional[float]]:
        """Long-run rates implied by the behaviour (closed form)."""
        p, tpr, fpr = self.label_prob, self.tpr, self.fpr
        positive_rate = p * tpr + (1 - p) * fpr
        ppv = (p * tpr / positive_rate) if positive_rate > 0 else None
        f1 = (
            2 * ppv * tpr / (ppv + tpr)
            if ppv is not None and (ppv + tpr) > 0
            else None
        )
        return {"tpr": tpr, "fpr": fpr, "ppv": ppv, "f1": f1, "positive_rate": positive_rate}


@dataclass(frozen=True)
class PopulationSpec:
    priors: Mapping[str, float]
    behaviors: Mapping[str, SubgroupBehavior]
    volume: int
    seed: int = 0
    attribute: str = "group"
    model_version: str = "sim-model"
    environment: str = "stable"
    outcome_lag: int = DEFAULT_OUTCOME_LAG
    start_time: datetime = DEFAULT_START
    tick_seconds: float = 1.0
    event_id_prefix: str = "sim"

    def validate(self) -> "PopulationSpec":
        if self.volume < 0:
            raise InvalidSpec(f"volume {self.volume} negative")
        if not self.priors:
            raise InvalidSpec("priors must be non-empty")
        total = sum(self.priors.values())
        if abs(total - 1.0) > SHARE_SUM_TOL:
            raise InvalidSpec(f"priors sum to {total}, expected 1 ± {SHARE_SUM_TOL}")
        if any(p < 0 for p in self.priors.values()):
            raise InvalidSpec("negative prior")
        for category in self.priors:
            behavior = self.behaviors.get(category)
            if behavior is None:
                raise InvalidSpec(f"no behaviour for category {category!r}")
            behavior.validate()
        if self.outcome_lag < 0:
            raise InvalidSpec("outcome_lag must be >= 0")
        return self

    def to_dict(self) -> dict:
        return {
            "priors": dict(self.priors),
            "behaviors": {c: b.to_dict() for c, b in self.behaviors.items()},
            "volume": self.volume,
            "seed": self.seed,
            "attribute": self.attribute,
            "model_version": self.model_version,
            "environment": self.environment,
            "outcome_lag": self.outcome_lag,
            "tick_seconds": self.tick_seconds,
            "event_id_prefix": self.event_id_prefix,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "PopulationSpec":
        spec = cls(
            priors={str(k): float(v) for k, v in dict(d["priors"]).items()},  # type: ignore[index]
            behaviors={
                str(k): SubgroupBehavior.from_dict(v)  # type: ignore[arg-type]
                for k, v in dict(d["behaviors"]).items()  # type: ignore[index]
            },
            volume=int(d["volume"]),  # type: ignore[arg-type]
            seed=int(d.get("seed", 0)),  # type: ignore[arg-type]
            attribute=str(d.get("attribute", "group")),
            model_version=str(d.get("model_version", "sim-model")),
            environment=str(d.get("environment", "stable")),
            outcome_lag=int(d.get("outcome_lag", DEFAULT_OUTCOME_LAG)),  # type: ignore[arg-type]
            tick_seconds=float(d.get("tick_seconds", 1.0)),  # type: ignore[arg-type]
            event_id_prefix=str(d.get("event_id_prefix", "sim")),
        )
        return spec.validate()


@dataclass(frozen=True)
class DriftInjection:
    kind: str  # prior_shift | concept_shift | pipeline_corruption
    onset: int  # event index at which new parameters take over
    priors: Optional[Mapping[str, float]] = None
    behaviors: Optional[Mapping[str, SubgroupBehavior]] = None

    def validate(self, spec: PopulationSpec) -> "DriftInjection":
        if self.kind not in INJECTION_KINDS:
            raise InvalidInjection(f"unknown injection kind {self.kind!r}")
        if not (0 <= self.onset < spec.volume):
            raise InvalidInjection(
                f"onset {self.onset} outside stream [0, {spec.volume})"
            )
        if self.priors is not None:
            total = sum(self.priors.values())
            if abs(total - 1.0) > SHARE_SUM_TOL:
                raise InvalidInjection(f"injected priors sum to {total}")
        if self.behaviors is not None:
            for behavior in self.behaviors.values():
                try:
                    behavior.validate()
                except InvalidSpec as exc:
                    raise InvalidInjection(exc.message) from None
        if self.priors is None and self.behaviors is None:
            raise InvalidInjection("injection changes nothing")
        return self

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "onset": self.onset,
            "priors": dict(self.priors) if self.priors is not None else None,
            "behaviors": (
                {c: b.to_dict() for c, b in self.behaviors.items()}
                if self.behaviors is not None
                else None
            ),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "DriftInjection":
        return cls(
            kind=str(d["kind"]),
            onset=int(d["onset"]),  # type: ignore[arg-type]
            priors=(
                {str(k): float(v) for k, v in dict(d["priors"]).items()}  # type: ignore[index]
                if d.get("priors") is not None
                else None
            ),
            behaviors=(
                {
                    str(k): SubgroupBehavior.from_dict(v)  # type: ignore[arg-type]
                    for k, v in dict(d["behaviors"]).items()  # type: ignore[index]
                }
                if d.get("behaviors") is not None
                else None
            ),
        )


@dataclass
class SimulatedStream:
    """Generated predictions plus lagged outcomes, in emission order."""

    spec: PopulationSpec
    injections: list[DriftInjection]
    events: list[PredictionEvent]
    outcomes: list[OutcomeEvent]  # parallel to emit_positions
    emit_positions: list[int]

    def event_lines(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)

    def outcome_lines(self) -> str:
        return "".join(o.to_json() + "\n" for o in self.outcomes)

    def interleaved(self):
        """Yield ("event", e) / ("outcome", o) in arrival order at the gateway."""
        n = len(self.events)
        by_position: dict[int, list[OutcomeEvent]] = {}
        for pos, outcome in zip(self.emit_positions, self.outcomes):
            by_position.setdefault(min(pos, n), []).append(outcome)
        for i, event in enumerate(self.events):
            yield "event", event
            for outcome in by_position.get(i, ()):
                yield "outcome", outcome
        for outcome in by_position.get(n, ()):
            yield "outcome", outcome


def _parameter_arrays(
    spec: PopulationSpec, injections: Sequence[DriftInjection]
) -> tuple[list[str], np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-event parameter arrays after applying injections in onset order."""
    categories = sorted(spec.priors)
    volume = spec.volume
    priors = np.zeros((volume, len(categories)))
    label_p = np.zeros((volume, len(categories)))
    tpr = np.zeros((volume, len(categories)))
    fpr = np.zeros((volume, len(categories)))

    def fill(start: int, prior_map, behavior_map):
        for column, category in enumerate(categories):
            priors[start:, column] = prior_map.get(category, 0.0)
            behavior = behavior_map[category]
            label_p[start:, column] = behavior.label_prob
            tpr[start:, column] = behavior.tpr
            fpr[start:, column] = behavior.fpr

    current_priors = dict(spec.priors)
    current_behaviors = dict(spec.behaviors)
    fill(0, current_priors, current_behaviors)
    for injection in sorted(injections, key=lambda i: i.onset):
        injection.validate(spec)
        if injection.priors is not None:
            current_priors = dict(injection.priors)
            for category in current_priors:
                if category not in current_behaviors and (
                    injection.behaviors is None or category not in injection.behaviors
                ):
                    raise InvalidInjection(f"no behaviour for injected category {category!r}")
        if injection.behaviors is not None:
            current_behaviors = {**current_behaviors, **injection.behaviors}
        cats_now = sorted(set(categories) | set(current_priors))
        if cats_now != categories:
            raise InvalidInjection(
                "injections may not introduce categories absent from the base spec"
            )
        fill(injection.onset, current_priors, current_behaviors)
    return categories, priors, label_p, tpr, fpr


def generate_population(
    spec: PopulationSpec, injections: Sequence[DriftInjection] = ()
) -> SimulatedStream:
    """Deterministic stream for (spec, injections); see module docstring."""
    spec.validate()
    categories, priors, label_p, tpr, fpr = _parameter_arrays(spec, injections)
    volume = spec.volume
    rng = np.random.default_rng(spec.seed)
    draws = rng.random((volume, 4)) if volume else np.zeros((0, 4))

    cumulative = np.cumsum(priors, axis=1)
    group_idx = (draws[:, [0]] >= cumulative).sum(axis=1).clip(max=len(categories) - 1)
    rows = np.arange(volume)
    y = (draws[:, 1] < label_p[rows, group_idx]).astype(int)
    p_positive = np.where(y == 1, tpr[rows, group_idx], fpr[rows, group_idx])
    y_hat = (draws[:, 2] < p_positive).astype(int)
    score = np.where(y_hat == 1, 0.5 + 0.5 * draws[:, 3], 0.5 * draws[:, 3])

    width = max(6, len(str(max(volume - 1, 0))))
    events: list[PredictionEvent] = []
    outcomes: list[OutcomeEvent] = []
    emit_positions: list[int] = []
    for i in range(volume):
        category = categories[int(group_idx[i])]
        timestamp = spec.start_time + timedelta(seconds=i * spec.tick_seconds)
        event = PredictionEvent(
            event_id=f"{spec.event_id_prefix}-{spec.seed}-{i:0{width}d}",
            timestamp=timestamp,
            model_version=spec.model_version,
            environment=spec.environment,
            subgroup={spec.attribute: category},
            score=float(score[i]),
            predicted_label=int(y_hat[i]),
        )
        events.append(event)
        emit_at = i + spec.outcome_lag
        outcomes.append(
            OutcomeEvent(
                event_id=event.event_id,
                outcome_label=int(y[i]),
                observed_at=spec.start_time
                + timedelta(seconds=emit_at * spec.tick_seconds),
            )
        )
        emit_positions.append(emit_at)

    return SimulatedStream(
        spec=spec,
        injections=list(injections),
        events=events,
        outcomes=outcomes,
        emit_positions=emit_positions,
    )


def inject_drift(stream: SimulatedStream, injection: DriftInjection) -> SimulatedStream:
    """Regenerate the stream with one more injection; the prefix before the
    onset is byte-identical to the input stream."""
    injection.validate(stream.spec)
    return generate_population(stream.spec, [*stream.injections, injection])


# --- scenario scripts -----------------------------------------------------------


@dataclass
class ScenarioScript:
    name: str
    spec: PopulationSpec
    injections: list[DriftInjection] = field(default_factory=list)
    bands: Mapping[str, Mapping[str, tuple[float, float]]] = field(default_factory=dict)
    window_size: int = DEFAULT_WINDOW_SIZE
    thresholds: DriftThresholds = field(default_factory=DriftThresholds)
    canary: Optional[dict] = None  # CanaryPlan document
    expected: Mapping[str, object] = field(default_factory=dict)
    gate_stride: int = 200

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "ScenarioScript":
        population = d.get("population")
        if not isinstance(population, Mapping):
            raise InvalidSpec("scenario missing population spec")
        spec = PopulationSpec.from_dict(population)
        injections = [DriftInjection.from_dict(i) for i in (d.get("injections") or [])]
        for injection in injections:
            injection.validate(spec)
        monitor = dict(d.get("monitor") or {})
        bands = {
            str(category): {
                str(metric): (float(iv[0]), float(iv[1]))
                for metric, iv in dict(band_map).items()
            }
            for category, band_map in dict(monitor.get("bands") or {}).items()
        }
        thresholds_doc = dict(monitor.get("thresholds") or {})
        thresholds = DriftThresholds(**{**DriftThresholds().to_dict(), **thresholds_doc})
        return cls(
            name=str(d.get("name", "")),
            spec=spec,
            injections=injections,
            bands=bands,
            window_size=int(monitor.get("window_size", DEFAULT_WINDOW_SIZE)),
            thresholds=thresholds,
            canary=dict(d["canary"]) if d.get("canary") else None,
            expected=dict(d.get("expected") or {}),
            gate_stride=int(d.get("gate_stride", 200)),  # type: ignore[arg-type]
        )


def label_from_spec(
    spec: PopulationSpec,
    bands: Mapping[str, Mapping[str, tuple[float, float]]],
    label_version: str = "sim-baseline",
) -> NutritionLabel:
    """Nutrition label implied by the baseline population parameters."""
    entries = []
    for category in sorted(spec.priors):
        behavior = spec.behaviors[category]
        rates = behavior.analytic_rates()
        support = int(round(spec.priors[category] * max(spec.volume, 1)))
        entries.append(
            SubgroupEntry(
                attribute=spec.attribute,
                category=category,
                training_share=spec.priors[category],
                baseline_rates=_rates_obj(rates, support),
                acceptable_band=dict(bands.get(category, {})),
            )
        )
    return NutritionLabel(
        label_version=label_version,
        model_version=spec.model_version,
        subgroup_schema=(spec.attribute,),
        subgroups=tuple(entries),
    ).validate()


def _rates_obj(rates: Mapping[str, Optional[float]], support: int):
    from .metrics import GroupRates

    return GroupRates(
        tpr=rates.get("tpr"),
        fpr=rates.get("fpr"),
        ppv=rates.get("ppv"),
        f1=rates.get("f1"),
        positive_rate=rates.get("positive_rate"),
        support=support,
    )


def _scenario_dirs(extra: Optional[Path] = None) -> list[Path]:
    dirs = []
    if extra is not None:
        dirs.append(Path(extra))
    dirs.append(Path.cwd() / "scenarios")
    dirs.append(Path(__file__).resolve().parent.parent.parent / "scenarios")
    return dirs


def load_scenario(name: str, scenario_dir: Optional[Path] = None) -> ScenarioScript:
    """Resolve a registered scenario fixture by name."""
    for directory in _scenario_dirs(scenario_dir):
        path = directory / f"{name}.json"
        if path.exists():
            script = ScenarioScript.from_dict(json.loads(path.read_text(encoding="utf-8")))
            if not script.name:
                script.name = name
            return script
    raise UnknownScenario(f"no scenario named {name!r}")


def list_scenarios(scenario_dir: Optional[Path] = None) -> list[str]:
    names: set[str] = set()
    for directory in _scenario_dirs(scenario_dir):
        if directory.is_dir():
            names.update(p.stem for p in directory.glob("*.json"))
    return sorted(names)


@dataclass
class ScenarioReport:
    name: str
    seed: int
    volume: int
    windows: list[dict] = field(default_factory=list)
    data_status: str = "none"
    concept_status: str = "none"
    triage_hint: str = "indeterminate"
    share_psi_max: Optional[float] = None
    canary: Optional[dict] = None
    expectations: list[dict] = field(default_factory=list)
    all_held: bool = True
    canary_state: Optional[CanaryState] = None  # runtime registration; not serialized

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "volume": self.volume,
            "windows": list(self.windows),
            "data_status": self.data_status,
            "concept_status": self.concept_status,
            "triage_hint": self.triage_hint,
            "share_psi_max": self.share_psi_max,
            "canary": self.canary,
            "expectations": list(self.expectations),
            "all_held": self.all_held,
        }


def run_scenario(
    script,
    seed: Optional[int] = None,
    scenario_dir: Optional[Path] = None,
) -> ScenarioReport:
    """Generate, ingest, run detectors and gates, and check expectations.

    ``script`` may be a ScenarioScript or a registered scenario name.
    """
    if isinstance(script, str):
        script = load_scenario(script, scenario_dir)
    spec = script.spec if seed is None else replace(script.spec, seed=seed)
    stream = generate_population(spec, script.injections)
    label = label_from_spec(spec, script.bands)
    store = EventStore()

    canary_summary = None
    canary_state = None
    if script.canary is not None:
        canary_summary, canary_state = _drive_canary(script, spec, stream, label, store)
    else:
        for kind, payload in stream.interleaved():
            if kind == "event":
                store.add_event(payload)
            else:
                store.join_outcome(payload)

    report = ScenarioReport(
        name=script.name,
        seed=spec.seed,
        volume=spec.volume,
        canary=canary_summary,
        canary_state=canary_state,
    )
    _monitor_windows(script, label, store, report)
    report.expectations = _evaluate_expectations(script.expected, report)
    report.all_held = all(e["held"] for e in report.expectations)
    return report


def _drive_canary(script, spec, stream, label, store) -> tuple[dict, CanaryState]:
    plan = CanaryPlan.from_dict(script.canary)
    state = CanaryState.create(plan, spec.start_time)
    state.start(spec.start_time)
    salt = f"{script.name}:{spec.seed}"
    stage_event_ids: list[str] = []
    since_eval = 0
    max_fraction = state.current_fraction

    for kind, payload in stream.interleaved():
        if kind == "outcome":
            store.join_outcome(payload)
            continue
        event = payload
        if not state.terminal:
            arm = assign_cohort(event.event_id, state, salt)
            if arm == ARM_CANARY:
                event = replace(
                    event, environment=ARM_CANARY, rollout_id=plan.rollout_id
                )
                stage_event_ids.append(event.event_id)
        store.add_event(event)

        if state.terminal:
            continue
        stage = state.current_stage
        if len(stage_event_ids) >= stage.min_events and since_eval <= 0:
            records = [store.get(eid) for eid in stage_event_ids]
            gate = evaluate_gate(state, records, label, now=event.timestamp)
            previous_stage = state.current_stage_index
            state.advance(gate, now=event.timestamp)
            if state.status == "running" and state.current_stage_index != previous_stage:
                stage_event_ids = []
            max_fraction = max(max_fraction, state.current_fraction)
            since_eval = script.gate_stride if gate.result == GATE_INSUFFICIENT else 0
        else:
            since_eval -= 1

    summary = {
        "rollout_id": plan.rollout_id,
        "status": state.status,
        "stages_reached": state.current_stage_index,
        "max_fraction": max_fraction,
        "transitions": [t.to_dict() for t in state.transitions],
    }
    return summary, state


def _monitor_windows(script, label, store, report: ScenarioReport) -> None:
    records = store.records()
    severity = {"none": 0, "indeterminate": 0, "watch": 1, "alert": 2}
    share_values: list[float] = []
    worst_data = "none"
    worst_concept = "none"
    any_data_watch = False
    any_concept_alert = False

    for descriptor, window in tumbling_windows(records, script.window_size):
        if not window:
            continue
        drift_report = detect_drift(label, window, script.thresholds, descriptor)
        summary = {
            "index": descriptor.index,
            "size": len(window),
            "data_status": drift_report.data_status(),
            "concept_status": drift_report.concept_status(),
            "triage_hint": drift_report.triage_hint,
            "share_psi": {
                e.name: e.value for e in drift_report.data if e.name.startswith("subgroup_share:")
            },
        }
        report.windows.append(summary)
        for entry in drift_report.data:
            if entry.name.startswith("subgroup_share:") and entry.value is not None:
                share_values.append(entry.value)
            if entry.status in ("watch", "alert"):
                any_data_watch = True
        if severity[summary["data_status"]] > severity[worst_data]:
            worst_data = summary["data_status"]
        if severity[summary["concept_status"]] > severity[worst_concept]:
            worst_concept = summary["concept_status"]
        if summary["concept_status"] == "alert":
            any_concept_alert = True

    report.data_status = worst_data
    report.concept_status = worst_concept
    report.share_psi_max = max(share_values) if share_values else None
    if any_concept_alert and any_data_watch:
        report.triage_hint = "external_variable_capture_suspected"
    elif any_concept_alert:
        report.triage_hint = "internal_data_leakage_suspected"
    else:
        report.triage_hint = "indeterminate"


def _evaluate_expectations(expected: Mapping[str, object], report: ScenarioReport) -> list[dict]:
    checks: list[dict] = []

    def check(name: str, expected_value, observed, held: bool):
        checks.append(
            {"name": name, "expected": expected_value, "observed": observed, "held": bool(held)}
        )

    for key in ("data_status", "concept_status", "triage_hint"):
        if key in expected:
            observed = getattr(report, key)
            check(key, expected[key], observed, observed == expected[key])
    if "share_psi_min" in expected:
        value = report.share_psi_max
        bound = float(expected["share_psi_min"])  # type: ignore[arg-type]
        check("share_psi_min", bound, value, value is not None and value >= bound)
    if "share_psi_below" in expected:
        value = report.share_psi_max
        bound = float(expected["share_psi_below"])  # type: ignore[arg-type]
        check("share_psi_below", bound, value, value is not None and value < bound)
    if "canary_status" in expected:
        observed = (report.canary or {}).get("status")
        check("canary_status", expected["canary_status"], observed,
              observed == expected["canary_status"])
    if "max_fraction_below" in expected:
        observed = (report.canary or {}).get("max_fraction")
        bound = float(expected["max_fraction_below"])  # type: ignore[arg-type]
        check("max_fraction_below", bound, observed,
              observed is not None and observed < bound)
    if "max_fraction_at_least" in expected:
        observed = (report.canary or {}).get("max_fraction")
        bound = float(expected["max_fraction_at_least"])  # type: ignore[arg-type]
        check("max_fraction_at_least", bound, observed,
              observed is not None and observed >= bound)
    return checks
