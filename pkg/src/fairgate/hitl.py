"""Flag / prune / nudge review queue feeding an audited retraining set.

Observations scoring below the nutrition-label band are deferred to humans.
Decisions are immutable once made.  Pruning is logical, never physical: a
pruned record disappears from the trainable export but stays in the audit
trail, and nudging substitutes the human label while retaining the machine
label for audit.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import (
    AlreadyDecided,
    CorruptLog,
    MissingCorrectedLabel,
    UnknownItem,
    UnknownMetric,
    ValidationError,
)
from .events import JoinedRecord, OutcomeEvent, PredictionEvent, format_instant, parse_instant
from .metrics import RATE_NAMES, WindowDescriptor, stratified_rates
from .nutrition import NutritionLabel

SCOPE_WINDOW = "per_window_subgroup"
SCOPE_OBSERVATION = "per_observation"

STATUS_PENDING = "pending"
STATUS_APPROVED = "approved"
STATUS_PRUNED = "pruned"
STATUS_NUDGED = "nudged"

ACTIONS = {"approve": STATUS_APPROVED, "prune": STATUS_PRUNED, "nudge": STATUS_NUDGED}

TAG_ORIGINAL = "original"
TAG_PRUNED_OUT = "pruned_out"
TAG_NUDGED = "nudged"

# The 88% -> 84% band generalized: cutoff defaults to baseline minus 4 points.
DEFAULT_FLAG_DELTA = 0.04

EXPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class FlagRule:
    """One deferment rule; cutoff is inclusive (observed <= cutoff flags)."""

    metric: str = "f1"
    scope: str = SCOPE_WINDOW
    cutoff: Optional[float] = None  # absolute threshold
    delta: Optional[float] = None  # threshold = subgroup baseline - delta
    attribute: Optional[str] = None  # restrict to one attribute (default: all)
    per_category_cutoff: Mapping[str, float] = field(default_factory=dict)

    def validate(self, label: Optional[NutritionLabel] = None) -> "FlagRule":
        if self.scope not in (SCOPE_WINDOW, SCOPE_OBSERVATION):
            raise ValidationError(f"unknown flag scope {self.scope!r}")
        valid_metrics = RATE_NAMES + ("score",)
        if self.metric not in valid_metrics:
            raise UnknownMetric(f"flag metric {self.metric!r} not one of {valid_metrics}")
        if self.scope == SCOPE_OBSERVATION and self.metric != "score":
            raise ValidationError("per-observation rules flag on the model score")
        if self.scope == SCOPE_WINDOW and self.metric == "score":
            raise ValidationError("window rules flag on a subgroup rate, not the score")
        if (self.cutoff is None) == (self.delta is None):
            raise ValidationError("exactly one of cutoff or delta must be set")
        if self.delta is not None and self.delta < 0:
            raise ValidationError("delta must be >= 0")
        if label is not None and self.scope == SCOPE_WINDOW and self.cutoff is not None:
            for attribute in self._attributes(label):
                for category, entry in label.entries_for(attribute).items():
                    baseline = entry.baseline_rates.rate(self.metric)
                    if baseline is not None and self.cutoff > baseline:
                        raise ValidationError(
                            f"cutoff {self.cutoff} above baseline {baseline} for "
                            f"{attribute}={category}"
                        )
        return self

    def _attributes(self, label: NutritionLabel) -> tuple[str, ...]:
        return (self.attribute,) if self.attribute else tuple(label.subgroup_schema)

    def threshold_for(self, baseline: Optional[float], category: str) -> Optional[float]:
        if category in self.per_category_cutoff:
            return self.per_category_cutoff[category]
        if self.cutoff is not None:
            return self.cutoff
        if baseline is None:
            return None
        return baseline - (self.delta or 0.0)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "scope": self.scope,
            "cutoff": self.cutoff,
            "delta": self.delta,
            "attribute": self.attribute,
            "per_category_cutoff": dict(self.per_category_cutoff),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "FlagRule":
        return cls(
            metric=str(d.get("metric", "f1")),
            scope=str(d.get("scope", SCOPE_WINDOW)),
            cutoff=None if d.get("cutoff") is None else float(d["cutoff"]),  # type: ignore[arg-type]
            delta=None if d.get("delta") is None else float(d["delta"]),  # type: ignore[arg-type]
            attribute=None if d.get("attribute") is None else str(d["attribute"]),
            per_category_cutoff={
                str(k): float(v)
                for k, v in dict(d.get("per_category_cutoff") or {}).items()
            },
        )


@dataclass
class ReviewItem:
    item_id: str
    created_at: datetime
    trigger: dict  # rule dict + observed value + threshold + stratum context
    payload: dict  # window-subgroup descriptor or single-observation marker
    records: list[JoinedRecord] = field(default_factory=list)
    status: str = STATUS_PENDING
    decision: Optional[dict] = None  # reviewer, decided_at, action, corrected_label

    def to_dict(self, include_records: bool = True) -> dict:
        d = {
            "item_id": self.item_id,
            "created_at": format_instant(self.created_at),
            "trigger": dict(self.trigger),
            "payload": dict(self.payload),
            "status": self.status,
            "decision": dict(self.decision) if self.decision else None,
        }
        if include_records:
            d["records"] = [r.to_dict() for r in self.records]
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "ReviewItem":
        records = []
        for raw in d.get("records") or []:
            event = PredictionEvent.from_dict(raw)
            outcome_label = raw.get("outcome_label")
            observed_at = raw.get("observed_at")
            records.append(
                JoinedRecord(
                    event=event,
                    outcome_label=None if outcome_label is None else int(outcome_label),
                    observed_at=parse_instant(observed_at) if observed_at else None,
                )
            )
        return cls(
            item_id=str(d["item_id"]),
            created_at=parse_instant(d["created_at"]),  # type: ignore[arg-type]
            trigger=dict(d.get("trigger") or {}),
            payload=dict(d.get("payload") or {}),
            records=records,
            status=str(d.get("status", STATUS_PENDING)),
            decision=dict(d["decision"]) if d.get("decision") else None,
        )


@dataclass(frozen=True)
class RetrainingRow:
    """One audited row; only original/nudged rows are trainable."""

    item_id: str
    event_id: str
    tag: str  # original | pruned_out | nudged
    subgroup: Mapping[str, str]
    features: Optional[Mapping[str, object]]
    machine_label: int
    outcome_label: Optional[int]
    trainable_label: Optional[int]
    corrected_label: Optional[int] = None

    @property
    def trainable(self) -> bool:
        return self.tag in (TAG_ORIGINAL, TAG_NUDGED)

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "event_id": self.event_id,
            "tag": self.tag,
            "subgroup": dict(self.subgroup),
            "features": dict(self.features) if self.features else None,
            "machine_label": self.machine_label,
            "outcome_label": self.outcome_label,
            "trainable_label": self.trainable_label,
            "corrected_label": self.corrected_label,
        }


def flag(
    target: Union[Sequence[JoinedRecord], JoinedRecord],
    label: NutritionLabel,
    rules: Sequence[FlagRule],
    window_descriptor: Optional[WindowDescriptor] = None,
    now: Optional[datetime] = None,
) -> list[ReviewItem]:
    """Evaluate rules over a window (or one record) and emit pending items.

    Window rules flag a (attribute, category) stratum whose observed metric
    sits at or below the threshold; observation rules flag single records by
    score.  Item ids are assigned by the queue at enqueue time.
    """
    records: list[JoinedRecord]
    if isinstance(target, JoinedRecord):
        records = [target]
    else:
        records = list(target)
    created_at = now or datetime.now(timezone.utc)
    descriptor = window_descriptor or WindowDescriptor(size=len(records))
    items: list[ReviewItem] = []

    for rule in rules:
        rule.validate(label)
        if rule.scope == SCOPE_WINDOW:
            for attribute in rule._attributes(label):
                observed_rates = stratified_rates(records, attribute)
                entries = label.entries_for(attribute)
                for category, entry in entries.items():
                    rates = observed_rates.get(category)
                    if rates is None:
                        continue
                    observed = rates.rate(rule.metric)
                    baseline = entry.baseline_rates.rate(rule.metric)
                    threshold = rule.threshold_for(baseline, category)
                    if observed is None or threshold is None:
                        continue
                    if observed <= threshold:
                        stratum_records = [
                            r
                            for r in records
                            if r.event.subgroup.get(attribute, "(unknown)") == category
                        ]
                        items.append(
                            ReviewItem(
                                item_id="",
                                created_at=created_at,
                                trigger={
                                    "rule": rule.to_dict(),
                                    "observed": observed,
                                    "threshold": threshold,
                                    "baseline": baseline,
                                    "attribute": attribute,
                                    "category": category,
                                },
                                payload={
                                    "kind": "window_subgroup",
                                    "window": descriptor.to_dict(),
                                    "attribute": attribute,
                                    "category": category,
                                    "event_ids": [
                                        r.event.event_id for r in stratum_records
                                    ],
                                },
                                records=stratum_records,
                            )
                        )
        else:
            for record in records:
                attribute = rule.attribute or (
                    label.subgroup_schema[0] if label.subgroup_schema else None
                )
                category = (
                    record.event.subgroup.get(attribute, "(unknown)")
                    if attribute
                    else "(all)"
                )
                threshold = rule.threshold_for(None, category)
                if threshold is None:
                    continue
                if record.event.score <= threshold:
                    items.append(
                        ReviewItem(
                            item_id="",
                            created_at=created_at,
                            trigger={
                                "rule": rule.to_dict(),
                                "observed": record.event.score,
                                "threshold": threshold,
                                "baseline": None,
                                "attribute": attribute,
                                "category": category,
                            },
                            payload={
                                "kind": "observation",
                                "event_ids": [record.event.event_id],
                            },
                            records=[record],
                        )
                    )
    return items


class ReviewQueue:
    """Linearizable review queue with an append-only audit log.

    With ``root`` set, items and decisions are appended as JSON-lines under
    ``<root>/review/queue.jsonl`` and audit rows under
    ``<root>/review/audit.jsonl``.
    """

    def __init__(self, root: Optional[Path] = None):
        self.root = Path(root) if root is not None else None
        self._items: dict[str, ReviewItem] = {}
        self._order: list[str] = []
        self._rows: list[RetrainingRow] = []
        self._seq = 0
        self._lock = threading.Lock()

    # -- enqueue -------------------------------------------------------------

    def enqueue(self, item: ReviewItem) -> ReviewItem:
        with self._lock:
            if not item.item_id:
                self._seq += 1
                item.item_id = f"item-{self._seq:06d}"
            if item.item_id in self._items:
                raise ValidationError(f"duplicate review item {item.item_id!r}")
            self._items[item.item_id] = item
            self._order.append(item.item_id)
            self._append("queue", {"kind": "item", "item": item.to_dict()})
            self._append(
                "audit",
                {
                    "kind": "flagged",
                    "item_id": item.item_id,
                    "at": format_instant(item.created_at),
                    "trigger": item.trigger,
                },
            )
        return item

    def enqueue_all(self, items: Iterable[ReviewItem]) -> list[ReviewItem]:
        return [self.enqueue(item) for item in items]

    # -- reads ---------------------------------------------------------------

    def get(self, item_id: str) -> ReviewItem:
        item = self._items.get(item_id)
        if item is None:
            raise UnknownItem(f"no review item {item_id!r}")
        return item

    def items(self, status: Optional[str] = None) -> list[ReviewItem]:
        snapshot = [self._items[i] for i in list(self._order)]
        if status is None:
            return snapshot
        return [i for i in snapshot if i.status == status]

    def pending(self) -> list[ReviewItem]:
        return self.items(STATUS_PENDING)

    def rows(self, trainable_only: bool = False) -> list[RetrainingRow]:
        with self._lock:
            rows = list(self._rows)
        if trainable_only:
            rows = [r for r in rows if r.trainable]
        return rows

    # -- decisions -------------------------------------------------------------

    def apply_decision(
        self,
        item_id: str,
        action: str,
        reviewer: str,
        corrected_label: Optional[int] = None,
        now: Optional[datetime] = None,
    ) -> tuple[ReviewItem, list[RetrainingRow]]:
        """Apply approve/prune/nudge exactly once; decisions are immutable."""
        if action not in ACTIONS:
            raise ValidationError(f"unknown decision {action!r}")
        if action == "nudge" and corrected_label is None:
            raise MissingCorrectedLabel("nudge requires a corrected_label")
        if corrected_label is not None and corrected_label not in (0, 1):
            raise ValidationError(f"corrected_label {corrected_label!r} not binary")
        decided_at = now or datetime.now(timezone.utc)

        with self._lock:
            item = self._items.get(item_id)
            if item is None:
                raise UnknownItem(f"no review item {item_id!r}")
            if item.status != STATUS_PENDING:
                raise AlreadyDecided(
                    f"item {item_id!r} already decided: {item.status}"
                )
            item.status = ACTIONS[action]
            item.decision = {
                "action": action,
                "reviewer": reviewer,
                "decided_at": format_instant(decided_at),
                "corrected_label": corrected_label,
            }
            tag = {
                "approve": TAG_ORIGINAL,
                "prune": TAG_PRUNED_OUT,
                "nudge": TAG_NUDGED,
            }[action]
            delta: list[RetrainingRow] = []
            for record in item.records:
                machine = record.event.predicted_label
                trainable_label: Optional[int]
                if action == "nudge":
                    trainable_label = corrected_label
                elif action == "approve":
                    trainable_label = (
                        record.outcome_label
                        if record.outcome_label is not None
                        else machine
                    )
                else:
                    trainable_label = None
                delta.append(
                    RetrainingRow(
                        item_id=item.item_id,
                        event_id=record.event.event_id,
                        tag=tag,
                        subgroup=dict(record.event.subgroup),
                        features=dict(record.event.features) if record.event.features else None,
                        machine_label=machine,
                        outcome_label=record.outcome_label,
                        trainable_label=trainable_label,
                        corrected_label=corrected_label if action == "nudge" else None,
                    )
                )
            self._rows.extend(delta)
            self._append(
                "queue",
                {"kind": "decision", "item_id": item.item_id, "decision": item.decision},
            )
            self._append(
                "audit",
                {
                    "kind": "decided",
                    "item_id": item.item_id,
                    "decision": item.decision,
                    "rows": [r.to_dict() for r in delta],
                },
            )
        return item, delta

    # -- export ----------------------------------------------------------------

    def export_retraining_set(self, tag_filter: Optional[str] = None) -> str:
        """Trainable rows as JSON-lines, deterministic by (item, event) id.

        Non-empty exports begin with a schema-version header line; pruned
        rows never appear.
        """
        rows = [r for r in self.rows(trainable_only=True) if tag_filter in (None, r.tag)]
        if not rows:
            return ""
        rows.sort(key=lambda r: (r.item_id, r.event_id))
        header = json.dumps(
            {"kind": "header", "schema_version": EXPORT_SCHEMA_VERSION},
            sort_keys=True,
            separators=(",", ":"),
        )
        body = "".join(
            json.dumps(r.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"
            for r in rows
        )
        return header + "\n" + body

    # -- persistence -------------------------------------------------------------

    def _append(self, name: str, payload: dict) -> None:
        if self.root is None:
            return
        directory = self.root / "review"
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / f"{name}.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")
            fh.flush()

    @classmethod
    def restore(cls, root: Path) -> tuple["ReviewQueue", list[CorruptLog]]:
        """Rebuild a queue by replaying its log; tolerates a torn final line."""
        queue = cls(root=None)
        issues: list[CorruptLog] = []
        path = Path(root) / "review" / "queue.jsonl"
        if path.exists():
            lines = path.read_text(encoding="utf-8").split("\n")
            if lines and lines[-1] == "":
                lines.pop()
            for number, line in enumerate(lines, start=1):
                try:
                    payload = json.loads(line)
                    if payload.get("kind") == "item":
                        item = ReviewItem.from_dict(payload["item"])
                        queue._items[item.item_id] = item
                        queue._order.append(item.item_id)
                        queue._seq = max(queue._seq, len(queue._order))
                    elif payload.get("kind") == "decision":
                        item = queue._items[payload["item_id"]]
                        decision = dict(payload["decision"])
                        item.decision = decision
                        item.status = ACTIONS[decision["action"]]
                        queue._replay_rows(item, decision)
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    issue = CorruptLog(
                        f"{path}:{number}: {exc}", path=str(path), line_number=number
                    )
                    if number == len(lines):
                        issues.append(issue)  # torn final line: recover the rest
                    else:
                        raise issue from None
        queue.root = Path(root)
        return queue, issues

    def _replay_rows(self, item: ReviewItem, decision: Mapping[str, object]) -> None:
        action = str(decision["action"])
        corrected = decision.get("corrected_label")
        corrected_label = None if corrected is None else int(corrected)  # type: ignore[arg-type]
        tag = {"approve": TAG_ORIGINAL, "prune": TAG_PRUNED_OUT, "nudge": TAG_NUDGED}[action]
        for record in item.records:
            machine = record.event.predicted_label
            if action == "nudge":
                trainable: Optional[int] = corrected_label
            elif action == "approve":
                trainable = (
                    record.outcome_label if record.outcome_label is not None else machine
                )
            else:
                trainable = None
            self._rows.append(
                RetrainingRow(
                    item_id=item.item_id,
                    event_id=record.event.event_id,
                    tag=tag,
                    subgroup=dict(record.event.subgroup),
                    features=dict(record.event.features) if record.event.features else None,
                    machine_label=machine,
                    outcome_label=record.outcome_label,
                    trainable_label=trainable,
                    corrected_label=corrected_label if action == "nudge" else None,
                )
            )
