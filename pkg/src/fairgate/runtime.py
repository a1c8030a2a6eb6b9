"""Application state shared by the HTTP service and the CLI.

Every query method returns a plain JSON-ready dict, so the CLI's --json
output and the HTTP body for the same inputs are the same object.  All state
is file-backed under the configured data directory and restored by replaying
the append-only logs.
"""

from __future__ import annotations

import json
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional, Sequence

from . import __version__
from .config import ServiceConfig
from .drift import detect_drift
from .errors import (
    CorruptLog,
    FairgateError,
    InvalidTransition,
    UnknownComparison,
    UnknownRollout,
    ValidationError,
)
from .events import EventStore, OutcomeEvent, PredictionEvent
from .hitl import ReviewQueue, flag
from .metrics import (
    WindowDescriptor,
    confusion_matrix,
    group_rates,
    parity_report,
    stratify,
)
from .nutrition import NutritionLabel
from .rebalance import DatasetRow, ResamplePlan, equalize_by_subgroup, rebalance_by_subgroup
from .rollout import (
    BlueGreenComparison,
    CanaryState,
    GateResult,
    TransitionEntry,
    compare_arms,
    evaluate_gate,
    plan_canary,
)
from .simulator import run_scenario
from .storage import append_jsonl, read_jsonl, rewrite_jsonl, write_json_atomic


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class Runtime:
    """Single-node, file-backed system of record for monitoring decisions."""

    def __init__(self, config: Optional[ServiceConfig] = None, ephemeral: bool = False):
        self.config = (config or ServiceConfig()).validate()
        self.root: Optional[Path] = None if ephemeral else Path(self.config.data_dir)
        self.store = EventStore(root=None)
        self.labels: dict[str, NutritionLabel] = {}
        self.rollouts: dict[str, CanaryState] = {}
        self.comparisons: dict[str, dict] = {}
        self.queue = ReviewQueue(root=None)
        self.restore_issues: list[CorruptLog] = []
        self._rollout_persisted: dict[str, int] = {}
        self._mv_order: dict[str, list[str]] = {}
        self._mv_index: dict[str, tuple[str, int]] = {}
        self._window_join_events: dict[tuple[str, int], int] = {}
        self._flagged: set[str] = set()
        self._lock = threading.RLock()
        self.ingest_slots = threading.BoundedSemaphore(self.config.max_pending_ingest)
        if self.root is not None:
            self._restore()
            self.store.root = self.root
            self.queue.root = self.root

    # ------------------------------------------------------------------ restore

    def _restore(self) -> None:
        root = self.root
        assert root is not None
        events_root = root / "events"
        if events_root.is_dir():
            for mv_dir in sorted(p for p in events_root.iterdir() if p.is_dir()):
                payloads, issues = read_jsonl(mv_dir / "events.jsonl")
                self.restore_issues.extend(issues)
                for payload in payloads:
                    event = PredictionEvent.from_dict(payload)
                    self.store.add_event(event)
                    self._track(event)
                payloads, issues = read_jsonl(mv_dir / "outcomes.jsonl")
                self.restore_issues.extend(issues)
                for payload in payloads:
                    self.store.join_outcome(OutcomeEvent.from_dict(payload))

        labels_root = root / "labels"
        if labels_root.is_dir():
            for path in sorted(labels_root.glob("*.json")):
                label = NutritionLabel.from_dict(
                    json.loads(path.read_text(encoding="utf-8"))
                )
                self.labels[label.model_version] = label

        rollouts_root = root / "rollouts"
        if rollouts_root.is_dir():
            for path in sorted(rollouts_root.glob("*.log")):
                payloads, issues = read_jsonl(path)
                self.restore_issues.extend(issues)
                if not payloads:
                    continue
                head = payloads[0]
                if head.get("kind") != "plan":
                    raise CorruptLog(
                        f"{path}:1: first line must be the plan", path=str(path), line_number=1
                    )
                plan = plan_canary(head["plan"])
                entries = [
                    TransitionEntry.from_dict(p["entry"])
                    for p in payloads[1:]
                    if p.get("kind") == "transition"
                ]
                state = CanaryState.replay(plan, entries)
                self.rollouts[plan.rollout_id] = state
                self._rollout_persisted[plan.rollout_id] = len(state.transitions)

        comparisons_root = root / "comparisons"
        if comparisons_root.is_dir():
            for path in sorted(comparisons_root.glob("*.json")):
                doc = json.loads(path.read_text(encoding="utf-8"))
                comparison = BlueGreenComparison.from_dict(doc)
                self.comparisons[comparison.comparison_id] = doc

        queue, issues = ReviewQueue.restore(root)
        self.queue = queue
        self.restore_issues.extend(issues)
        for item in self.queue.items():
            self._flagged.add(self._flag_key_from_item(item))

    # ------------------------------------------------------------------ events

    def _track(self, event: PredictionEvent) -> None:
        order = self._mv_order.setdefault(event.model_version, [])
        self._mv_index[event.event_id] = (event.model_version, len(order))
        order.append(event.event_id)

    def ingest_text(self, text: str) -> dict:
        """Ingest a JSON-lines batch; per-line failures never abort the batch."""
        stored = 0
        errors = []
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                event = PredictionEvent.from_json(line)
                self.store.add_event(event)
                with self._lock:
                    self._track(event)
                    self._on_event_stored(event)
                stored += 1
            except FairgateError as exc:
                errors.append({"line": number, "code": exc.code, "message": exc.message})
        return {"stored": stored, "errors": errors}

    def outcomes_text(self, text: str) -> dict:
        joined = 0
        errors = []
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                outcome = OutcomeEvent.from_json(line)
                self.store.join_outcome(outcome)
                with self._lock:
                    self._on_outcome_joined(outcome)
                joined += 1
            except FairgateError as exc:
                errors.append({"line": number, "code": exc.code, "message": exc.message})
        return {"joined": joined, "errors": errors}

    # ------------------------------------------------------------------ labels

    def put_label(self, model_version: str, doc: Mapping[str, object]) -> dict:
        label = NutritionLabel.from_dict(doc)
        if label.model_version != model_version:
            raise ValidationError(
                f"label names model_version {label.model_version!r}, "
                f"endpoint addressed {model_version!r}"
            )
        self.labels[model_version] = label
        if self.root is not None:
            write_json_atomic(self.root / "labels" / f"{model_version}.json", label.to_dict())
        return {"ok": True, "model_version": model_version, "label_version": label.label_version}

    def get_label(self, model_version: str) -> NutritionLabel:
        label = self.labels.get(model_version)
        if label is None:
            raise ValidationError(f"no nutrition label loaded for {model_version!r}")
        return label

    def _default_model_version(self) -> str:
        versions = self.store.model_versions() or list(self.labels)
        if len(set(versions)) == 1:
            return versions[0]
        raise ValidationError(
            "model_version is required when multiple models are present"
        )

    # ------------------------------------------------------------------ windows

    def _resolve_window(
        self,
        model_version: str,
        window: str = "latest",
        window_size: Optional[int] = None,
    ):
        records = self.store.records(model_version=model_version)
        size = window_size or self.config.window_size
        if window == "all":
            descriptor = WindowDescriptor(kind="all", size=len(records), index=0)
            return descriptor, records
        if window == "latest":
            index = max(0, (len(records) - 1) // size) if records else 0
        else:
            try:
                index = int(window)
            except ValueError:
                raise ValidationError(
                    f"window must be 'latest', 'all', or an index, got {window!r}"
                ) from None
        chunk = records[index * size : (index + 1) * size]
        descriptor = WindowDescriptor(
            kind="count",
            size=size,
            index=index,
            start=chunk[0].event.timestamp.isoformat() if chunk else None,
            end=chunk[-1].event.timestamp.isoformat() if chunk else None,
        )
        return descriptor, chunk

    # ------------------------------------------------------------------ metrics

    def stratified_metrics(
        self,
        model_version: Optional[str] = None,
        attribute: Optional[str] = None,
        window: str = "latest",
        window_size: Optional[int] = None,
    ) -> dict:
        mv = model_version or self._default_model_version()
        descriptor, records = self._resolve_window(mv, window, window_size)
        attributes: Sequence[str]
        if attribute is not None:
            attributes = [attribute]
        elif mv in self.labels:
            attributes = list(self.labels[mv].subgroup_schema)
        else:
            seen: dict[str, None] = {}
            for record in records:
                for name in record.event.subgroup:
                    seen.setdefault(name, None)
            attributes = list(seen)
        out: dict = {
            "model_version": mv,
            "window": descriptor.to_dict(),
            "attributes": {},
        }
        for name in attributes:
            strata = {}
            for category, recs in sorted(stratify(records, name).items()):
                outcome_bearing = [r for r in recs if r.has_outcome]
                cm = confusion_matrix(outcome_bearing)
                strata[category] = {
                    "events": len(recs),
                    "confusion": cm.to_dict(),
                    "rates": group_rates(cm).to_dict(),
                }
            out["attributes"][name] = strata
        return out

    def parity(
        self,
        model_version: Optional[str] = None,
        attribute: Optional[str] = None,
        window: str = "latest",
        window_size: Optional[int] = None,
    ) -> dict:
        mv = model_version or self._default_model_version()
        label = self.get_label(mv)
        descriptor, records = self._resolve_window(mv, window, window_size)
        attributes = [attribute] if attribute else list(label.subgroup_schema)
        reports = [
            parity_report(
                records, name, label,
                min_count=self.config.min_count,
                window_descriptor=descriptor,
            ).to_dict()
            for name in attributes
        ]
        return {"model_version": mv, "window": descriptor.to_dict(), "reports": reports}

    def drift(
        self,
        model_version: Optional[str] = None,
        window: str = "latest",
        window_size: Optional[int] = None,
    ) -> dict:
        mv = model_version or self._default_model_version()
        label = self.get_label(mv)
        descriptor, records = self._resolve_window(mv, window, window_size)
        report = detect_drift(label, records, self.config.thresholds, descriptor)
        return report.to_dict()

    # ------------------------------------------------------------------ flagging

    def _flag_key(self, model_version: str, window_index: int, trigger: Mapping, payload: Mapping) -> str:
        return json.dumps(
            {
                "model_version": model_version,
                "window_index": window_index,
                "rule": trigger.get("rule"),
                "attribute": trigger.get("attribute"),
                "category": trigger.get("category"),
                "event_ids": payload.get("event_ids") if payload.get("kind") == "observation" else None,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    def _flag_key_from_item(self, item) -> str:
        payload = item.payload
        window = payload.get("window") or {}
        return self._flag_key(
            payload.get("model_version", ""),
            int(window.get("index", -1)),
            item.trigger,
            payload,
        )

    def _on_event_stored(self, event: PredictionEvent) -> None:
        order = self._mv_order[event.model_version]
        size = self.config.window_size
        if len(order) % size == 0:
            self._evaluate_window_flags(event.model_version, len(order) // size - 1)

    def _on_outcome_joined(self, outcome: OutcomeEvent) -> None:
        located = self._mv_index.get(outcome.event_id)
        if located is None:
            return
        mv, position = located
        size = self.config.window_size
        window_index = position // size
        if len(self._mv_order[mv]) < (window_index + 1) * size:
            return  # window still open
        key = (mv, window_index)
        count = self._window_join_events.get(key, 0) + 1
        self._window_join_events[key] = count
        # Re-evaluate periodically and once the window is fully joined.
        if count % 50 == 0 or count == size:
            self._evaluate_window_flags(mv, window_index)

    def _evaluate_window_flags(self, model_version: str, window_index: int) -> None:
        label = self.labels.get(model_version)
        if label is None or not self.config.flag_rules:
            return
        size = self.config.window_size
        ids = self._mv_order[model_version][window_index * size : (window_index + 1) * size]
        records = [self.store.get(eid) for eid in ids]
        descriptor = WindowDescriptor(
            kind="count",
            size=size,
            index=window_index,
            start=records[0].event.timestamp.isoformat() if records else None,
            end=records[-1].event.timestamp.isoformat() if records else None,
        )
        items = flag(records, label, self.config.flag_rules, descriptor, now=_utcnow())
        for item in items:
            item.payload["model_version"] = model_version
            key = self._flag_key(model_version, window_index, item.trigger, item.payload)
            if key in self._flagged:
                continue
            self._flagged.add(key)
            self.queue.enqueue(item)

    # ------------------------------------------------------------------ review

    def review_queue(self, status: Optional[str] = None) -> dict:
        items = self.queue.items(status)
        counts: dict[str, int] = {}
        for item in self.queue.items():
            counts[item.status] = counts.get(item.status, 0) + 1
        return {
            "items": [i.to_dict(include_records=False) for i in items],
            "counts": counts,
        }

    def decide_review(
        self,
        item_id: str,
        action: str,
        reviewer: str,
        corrected_label: Optional[int] = None,
    ) -> dict:
        item, rows = self.queue.apply_decision(
            item_id, action, reviewer, corrected_label, now=_utcnow()
        )
        return {
            "item": item.to_dict(include_records=False),
            "rows_added": len(rows),
        }

    def export_retraining(self, tag: Optional[str] = None) -> str:
        return self.queue.export_retraining_set(tag)

    # ------------------------------------------------------------------ rollouts

    def _persist_rollout(self, state: CanaryState) -> None:
        if self.root is None:
            return
        rid = state.plan.rollout_id
        path = self.root / "rollouts" / f"{rid}.log"
        persisted = self._rollout_persisted.get(rid, 0)
        if persisted == 0:
            append_jsonl(path, {"kind": "plan", "plan": state.plan.to_dict()})
        for entry in state.transitions[persisted:]:
            append_jsonl(path, {"kind": "transition", "entry": entry.to_dict()})
        self._rollout_persisted[rid] = len(state.transitions)

    def _register_rollout(self, state: CanaryState, overwrite: bool = False) -> None:
        rid = state.plan.rollout_id
        with self._lock:
            if not overwrite and rid in self.rollouts:
                raise ValidationError(f"rollout {rid!r} already exists")
            self.rollouts[rid] = state
            if self.root is not None and overwrite:
                payloads = [{"kind": "plan", "plan": state.plan.to_dict()}]
                payloads += [
                    {"kind": "transition", "entry": t.to_dict()} for t in state.transitions
                ]
                rewrite_jsonl(self.root / "rollouts" / f"{rid}.log", payloads)
                self._rollout_persisted[rid] = len(state.transitions)
            else:
                self._rollout_persisted[rid] = 0
                self._persist_rollout(state)

    def create_rollout(self, doc: Mapping[str, object]) -> dict:
        plan = plan_canary(doc)
        state = CanaryState.create(plan, _utcnow())
        self._register_rollout(state)
        return state.to_dict()

    def get_rollout(self, rollout_id: str) -> CanaryState:
        state = self.rollouts.get(rollout_id)
        if state is None:
            raise UnknownRollout(f"no rollout {rollout_id!r}")
        return state

    def rollout_dict(self, rollout_id: str) -> dict:
        state = self.get_rollout(rollout_id)
        out = state.to_dict()
        out["gate_preview"] = self._gate_preview(state)
        return out

    def list_rollouts(self) -> dict:
        return {
            "rollouts": [
                self.rollouts[rid].to_dict() for rid in sorted(self.rollouts)
            ]
        }

    def _stage_records(self, state: CanaryState):
        records = self.store.records(
            environment="canary", rollout_id=state.plan.rollout_id
        )
        if state.stage_started_at is not None:
            records = [
                r for r in records if r.event.timestamp >= state.stage_started_at
            ]
        return records

    def _gate_preview(self, state: CanaryState) -> Optional[dict]:
        if state.status != "running":
            return None
        label = self.labels.get(state.plan.model_version)
        if label is None:
            return None
        records = self._stage_records(state)
        return evaluate_gate(state, records, label, now=_utcnow()).to_dict()

    def advance_rollout(self, rollout_id: str) -> dict:
        """Start a pending rollout, or gate-check and apply one transition."""
        with self._lock:
            state = self.get_rollout(rollout_id)
            now = _utcnow()
            if state.status == "pending":
                state.start(now)
                self._persist_rollout(state)
                return state.to_dict()
            if state.status != "running":
                raise InvalidTransition(
                    f"cannot advance a rollout in status {state.status!r}"
                )
            label = self.get_label(state.plan.model_version)
            records = self._stage_records(state)
            gate = evaluate_gate(state, records, label, now=now)
            state.advance(gate, now=now)
            self._persist_rollout(state)
            out = state.to_dict()
            out["gate"] = gate.to_dict()
            return out

    def abort_rollout(self, rollout_id: str, reason: str = "operator_abort") -> dict:
        with self._lock:
            state = self.get_rollout(rollout_id)
            state.abort(_utcnow(), reason=reason)
            self._persist_rollout(state)
            return state.to_dict()

    # ------------------------------------------------------------------ comparisons

    def create_comparison(self, doc: Mapping[str, object]) -> dict:
        comparison = BlueGreenComparison.from_dict(doc)
        with self._lock:
            if comparison.comparison_id in self.comparisons:
                raise ValidationError(
                    f"comparison {comparison.comparison_id!r} already exists"
                )
            self.comparisons[comparison.comparison_id] = dict(doc)
            if self.root is not None:
                write_json_atomic(
                    self.root / "comparisons" / f"{comparison.comparison_id}.json",
                    dict(doc),
                )
        return self.comparison_dict(comparison.comparison_id)

    def comparison_dict(self, comparison_id: str) -> dict:
        doc = self.comparisons.get(comparison_id)
        if doc is None:
            raise UnknownComparison(f"no comparison {comparison_id!r}")
        comparison = BlueGreenComparison.from_dict(doc)
        label_mv = str(doc.get("label_model_version") or "")
        if label_mv:
            label = self.get_label(label_mv)
        elif comparison.green in self.labels:
            label = self.labels[comparison.green]
        elif comparison.blue in self.labels:
            label = self.labels[comparison.blue]
        elif len(self.labels) == 1:
            label = next(iter(self.labels.values()))
        else:
            raise ValidationError(
                f"no nutrition label available for comparison {comparison_id!r}"
            )
        blue_records = self.store.records(environment="blue", model_version=comparison.blue)
        green_records = self.store.records(environment="green", model_version=comparison.green)
        compare_arms(comparison, blue_records, green_records, label)
        return comparison.to_dict()

    # ------------------------------------------------------------------ rebalance

    def rebalance(self, doc: Mapping[str, object]) -> dict:
        rows = [DatasetRow.from_dict(r) for r in (doc.get("rows") or [])]
        attribute = str(doc.get("attribute") or "")
        if not attribute:
            raise ValidationError("attribute is required")
        k = int(doc.get("k", 5))  # type: ignore[arg-type]
        seed = int(doc.get("seed", 0))  # type: ignore[arg-type]
        if doc.get("strategy"):
            plan = ResamplePlan(
                strategy=str(doc["strategy"]),
                target={str(t): int(c) for t, c in dict(doc.get("target") or {}).items()},
                k=k,
                seed=seed,
            )
            result = rebalance_by_subgroup(rows, attribute, plan)
        else:
            result = equalize_by_subgroup(
                rows,
                attribute,
                match_majority=bool(doc.get("match_majority", False)),
                k=k,
                seed=seed,
            )
        return result.to_dict()

    # ------------------------------------------------------------------ simulate

    def simulate(self, scenario: str, seed: Optional[int] = None) -> dict:
        report = run_scenario(scenario, seed=seed, scenario_dir=self.config.scenario_dir)
        if report.canary_state is not None:
            self._register_rollout(report.canary_state, overwrite=True)
        return report.to_dict()

    # ------------------------------------------------------------------ misc

    def health(self) -> dict:
        return {
            "status": "ok",
            "service": "fairgate",
            "version": __version__,
            "model_versions": self.store.model_versions(),
            "events": len(self.store),
            "restore_issues": [issue.to_dict() for issue in self.restore_issues],
        }
