from __future__ import annotations

import json
from datetime import datetime, timedelta, timezone

import hypothesis
import pytest

from fairgate.events import JoinedRecord, PredictionEvent
from fairgate.metrics import GroupRates
from fairgate.nutrition import NutritionLabel, SubgroupEntry

hypothesis.settings.register_profile(
    "fast", max_examples=50, deadline=None, derandomize=True
)
hypothesis.settings.load_profile("fast")

BASE_TIME = datetime(2025, 1, 1, tzinfo=timezone.utc)


def make_record(
    event_id: str,
    predicted: int,
    outcome: int | None,
    category: str = "a",
    attribute: str = "group",
    model_version: str = "m1",
    score: float | None = None,
    index: int = 0,
    environment: str = "stable",
    rollout_id: str | None = None,
    features: dict | None = None,
) -> JoinedRecord:
    event = PredictionEvent(
        event_id=event_id,
        timestamp=BASE_TIME + timedelta(seconds=index),
        model_version=model_version,
        environment=environment,
        subgroup={attribute: category},
        score=score if score is not None else (0.9 if predicted == 1 else 0.1),
        predicted_label=predicted,
        rollout_id=rollout_id,
        features=features,
    )
    return JoinedRecord(
        event=event,
        outcome_label=outcome,
        observed_at=None if outcome is None else event.timestamp,
    )


def records_from_counts(
    counts: dict[str, tuple[int, int, int, int]],
    attribute: str = "group",
    model_version: str = "m1",
) -> list[JoinedRecord]:
    """Build outcome-bearing records realizing (tp, fp, fn, tn) per category."""
    records = []
    index = 0
    for category in sorted(counts):
        tp, fp, fn, tn = counts[category]
        cells = [(1, 1)] * tp + [(1, 0)] * fp + [(0, 1)] * fn + [(0, 0)] * tn
        for predicted, outcome in cells:
            records.append(
                make_record(
                    f"{category}-{index:05d}",
                    predicted,
                    outcome,
                    category=category,
                    attribute=attribute,
                    model_version=model_version,
                    index=index,
                )
            )
            index += 1
    return records


def rates(tp: int, fp: int, fn: int, tn: int) -> GroupRates:
    from fairgate.metrics import ConfusionMatrix, group_rates

    return group_rates(ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn))


def simple_label(
    shares: dict[str, float],
    attribute: str = "group",
    model_version: str = "m1",
    baselines: dict[str, dict] | None = None,
    bands: dict[str, dict] | None = None,
    feature_baselines: dict | None = None,
) -> NutritionLabel:
    entries = []
    for category, share in shares.items():
        baseline = (baselines or {}).get(category, {})
        band = (bands or {}).get(category, {})
        entries.append(
            SubgroupEntry(
                attribute=attribute,
                category=category,
                training_share=share,
                baseline_rates=GroupRates.from_dict({"support": 1000, **baseline}),
                acceptable_band={m: (iv[0], iv[1]) for m, iv in band.items()},
            )
        )
    doc = {
        "label_version": "v1",
        "model_version": model_version,
        "subgroup_schema": [attribute],
        "subgroups": [e.to_dict() for e in entries],
        "feature_baselines": feature_baselines or {},
    }
    return NutritionLabel.from_dict(doc)


def jsonl(dicts) -> str:
    return "".join(json.dumps(d, sort_keys=True) + "\n" for d in dicts)


@pytest.fixture
def metrics_fixture_records():
    """The two-subgroup fixture: a={40,5,10,45}, b={20,10,20,50}."""
    return records_from_counts({"a": (40, 5, 10, 45), "b": (20, 10, 20, 50)})


@pytest.fixture
def two_group_label():
    return simple_label({"a": 0.6, "b": 0.4})
