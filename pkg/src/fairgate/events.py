"""Canonical event schema and the append-only store every other module reads.

Wire format is one JSON object per line (UTF-8).  Predictions and their
ground-truth outcomes arrive asynchronously and are joined by ``event_id``;
a record is immutable once its outcome has been attached.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional

from .errors import AlreadyJoined, DuplicateEvent, ParseError, SchemaError, UnknownEvent

ENVIRONMENTS = ("stable", "canary", "blue", "green", "treatment", "control")


def parse_instant(value: str) -> datetime:
    """Parse an ISO-8601 instant; naive values are taken as UTC."""
    if not isinstance(value, str):
        raise ParseError(f"timestamp must be a string, got {type(value).__name__}")
    raw = value[:-1] + "+00:00" if value.endswith("Z") else value
    try:
        ts = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise ParseError(f"bad timestamp {value!r}: {exc}") from None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_instant(ts: datetime) -> str:
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).isoformat()


@dataclass(frozen=True)
class PredictionEvent:
    """One scored model decision observed in production."""

    event_id: str
    timestamp: datetime
    model_version: str
    environment: str
    subgroup: Mapping[str, str]
    score: float
    predicted_label: int
    features: Optional[Mapping[str, object]] = None
    rollout_id: Optional[str] = None

    def validate(self) -> "PredictionEvent":
        if not self.event_id:
            raise SchemaError("event_id must be non-empty")
        if self.environment not in ENVIRONMENTS:
            raise SchemaError(f"environment {self.environment!r} not one of {ENVIRONMENTS}")
        if not (isinstance(self.score, (int, float)) and 0.0 <= float(self.score) <= 1.0):
            raise SchemaError(f"score {self.score!r} outside [0, 1]")
        if self.predicted_label not in (0, 1):
            raise SchemaError(f"predicted_label {self.predicted_label!r} not binary")
        return self

    def to_dict(self) -> dict:
        d = {
            "event_id": self.event_id,
            "timestamp": format_instant(self.timestamp),
            "model_version": self.model_version,
            "environment": self.environment,
            "subgroup": dict(self.subgroup),
            "score": self.score,
            "predicted_label": self.predicted_label,
        }
        if self.features is not None:
            d["features"] = dict(self.features)
        if self.rollout_id is not None:
            d["rollout_id"] = self.rollout_id
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "PredictionEvent":
        try:
            event = cls(
                event_id=str(d["event_id"]),
                timestamp=parse_instant(d["timestamp"]),  # type: ignore[arg-type]
                model_version=str(d["model_version"]),
                environment=str(d["environment"]),
                subgroup={str(k): str(v) for k, v in dict(d.get("subgroup") or {}).items()},
                score=float(d["score"]),  # type: ignore[arg-type]
                predicted_label=int(d["predicted_label"]),  # type: ignore[arg-type]
                features=dict(d["features"]) if d.get("features") is not None else None,  # type: ignore[arg-type]
                rollout_id=str(d["rollout_id"]) if d.get("rollout_id") is not None else None,
            )
        except ParseError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad prediction event: {exc}") from None
        return event.validate()

    @classmethod
    def from_json(cls, line: str) -> "PredictionEvent":
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ParseError("event line must be a JSON object")
        return cls.from_dict(d)


@dataclass(frozen=True)
class OutcomeEvent:
    """Delayed ground truth for a previously stored prediction."""

    event_id: str
    outcome_label: int
    observed_at: datetime

    def validate(self) -> "OutcomeEvent":
        if not self.event_id:
            raise SchemaError("event_id must be non-empty")
        if self.outcome_label not in (0, 1):
            raise SchemaError(f"outcome_label {self.outcome_label!r} not binary")
        return self

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "outcome_label": self.outcome_label,
            "observed_at": format_instant(self.observed_at),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "OutcomeEvent":
        try:
            out = cls(
                event_id=str(d["event_id"]),
                outcome_label=int(d["outcome_label"]),  # type: ignore[arg-type]
                observed_at=parse_instant(d["observed_at"]),  # type: ignore[arg-type]
            )
        except ParseError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad outcome event: {exc}") from None
        return out.validate()

    @classmethod
    def from_json(cls, line: str) -> "OutcomeEvent":
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ParseError("outcome line must be a JSON object")
        return cls.from_dict(d)


@dataclass(frozen=True)
class JoinedRecord:
    """A prediction plus its resolved outcome, immutable once joined."""

    event: PredictionEvent
    outcome_label: Optional[int] = None
    observed_at: Optional[datetime] = None

    @property
    def has_outcome(self) -> bool:
        return self.outcome_label is not None

    def to_dict(self) -> dict:
        d = self.event.to_dict()
        d["outcome_label"] = self.outcome_label
        d["observed_at"] = format_instant(self.observed_at) if self.observed_at else None
        return d


@dataclass
class IngestResult:
    stored: int = 0
    errors: list = field(default_factory=list)  # (line_number, error code, message)

    def to_dict(self) -> dict:
        return {
            "stored": self.stored,
            "errors": [
                {"line": ln, "code": code, "message": msg} for ln, code, msg in self.errors
            ],
        }


class EventStore:
    """Append-only store of joined records, optionally file-backed.

    With ``root`` set, predictions and outcomes are appended line-by-line to
    ``<root>/events/<model_version>/events.jsonl`` and ``outcomes.jsonl``.
    Appends are serialized by a lock; reads return immutable snapshots.
    """

    def __init__(self, root: Optional[Path] = None):
        self.root = Path(root) if root is not None else None
        self._records: dict[str, JoinedRecord] = {}
        self._order: list[str] = []
        self._lock = threading.Lock()

    # -- ingestion ---------------------------------------------------------

    def ingest_event(self, raw_line: str) -> str:
        """Parse and append one prediction event; returns its event_id."""
        event = PredictionEvent.from_json(raw_line)
        return self.add_event(event)

    def add_event(self, event: PredictionEvent) -> str:
        event.validate()
        with self._lock:
            if event.event_id in self._records:
                raise DuplicateEvent(f"event_id {event.event_id!r} already stored")
            self._records[event.event_id] = JoinedRecord(event=event)
            self._order.append(event.event_id)
            self._append_line("events", event.model_version, event.to_json())
        return event.event_id

    def ingest_lines(self, lines: Iterable[str]) -> IngestResult:
        """Ingest a JSON-lines batch, collecting per-line errors."""
        result = IngestResult()
        for i, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                self.ingest_event(line)
                result.stored += 1
            except (ParseError, SchemaError, DuplicateEvent) as exc:
                result.errors.append((i, exc.code, exc.message))
        return result

    def join_outcome(self, outcome: OutcomeEvent) -> JoinedRecord:
        """Attach ground truth to a stored event; rejects retries."""
        outcome.validate()
        with self._lock:
            record = self._records.get(outcome.event_id)
            if record is None:
                raise UnknownEvent(f"no event with id {outcome.event_id!r}")
            if record.has_outcome:
                raise AlreadyJoined(f"event {outcome.event_id!r} already has an outcome")
            joined = JoinedRecord(
                event=record.event,
                outcome_label=outcome.outcome_label,
                observed_at=outcome.observed_at,
            )
            self._records[outcome.event_id] = joined
            self._append_line("outcomes", record.event.model_version, outcome.to_json())
        return joined

    def join_outcome_line(self, raw_line: str) -> JoinedRecord:
        return self.join_outcome(OutcomeEvent.from_json(raw_line))

    # -- reads -------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._order)

    def __contains__(self, event_id: str) -> bool:
        return event_id in self._records

    def get(self, event_id: str) -> JoinedRecord:
        record = self._records.get(event_id)
        if record is None:
            raise UnknownEvent(f"no event with id {event_id!r}")
        return record

    def records(
        self,
        model_version: Optional[str] = None,
        environment: Optional[str] = None,
        rollout_id: Optional[str] = None,
        outcome_bearing: Optional[bool] = None,
    ) -> list[JoinedRecord]:
        """Snapshot of stored records in ingestion order, optionally filtered."""
        with self._lock:
            snapshot = [self._records[eid] for eid in self._order]
        out = []
        for rec in snapshot:
            ev = rec.event
            if model_version is not None and ev.model_version != model_version:
                continue
            if environment is not None and ev.environment != environment:
                continue
            if rollout_id is not None and ev.rollout_id != rollout_id:
                continue
            if outcome_bearing is not None and rec.has_outcome != outcome_bearing:
                continue
            out.append(rec)
        return out

    def outcome_bearing_count(self) -> int:
        with self._lock:
            return sum(1 for eid in self._order if self._records[eid].has_outcome)

    def model_versions(self) -> list[str]:
        with self._lock:
            seen: dict[str, None] = {}
            for eid in self._order:
                seen.setdefault(self._records[eid].event.model_version, None)
            return list(seen)

    def snapshot_lines(self) -> str:
        """Deterministic serialization of the full store, for replay checks."""
        return "".join(rec.event.to_json() + "\n" for rec in self.records())

    def iter_outcomes(self) -> Iterator[OutcomeEvent]:
        for rec in self.records(outcome_bearing=True):
            yield OutcomeEvent(
                event_id=rec.event.event_id,
                outcome_label=rec.outcome_label,  # type: ignore[arg-type]
                observed_at=rec.observed_at,  # type: ignore[arg-type]
            )

    # -- persistence -------------------------------------------------------

    def _append_line(self, kind: str, model_version: str, line: str) -> None:
        if self.root is None:
            return
        directory = self.root / "events" / model_version
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{kind}.jsonl"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
