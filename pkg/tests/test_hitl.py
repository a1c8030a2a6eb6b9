from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from fairgate.errors import (
    AlreadyDecided,
    MissingCorrectedLabel,
    UnknownItem,
    UnknownMetric,
    ValidationError,
)
from fairgate.hitl import (
    EXPORT_SCHEMA_VERSION,
    FlagRule,
    ReviewQueue,
    flag,
)

from conftest import BASE_TIME, make_record, records_from_counts, simple_label


def f1_window(f1_times_100: int, category: str = "bw", n_scale: int = 1):
    """Records whose subgroup f1 equals f1_times_100 / 100 exactly."""
    tp = f1_times_100 * n_scale
    errors = (200 - 2 * f1_times_100) * n_scale  # fp+fn so that f1 = 2tp/(2tp+e)
    fp, fn = errors // 2, errors - errors // 2
    return records_from_counts({category: (tp, fp, fn, 10 * n_scale)})


def band_label():
    return simple_label(
        {"bw": 0.2, "rest": 0.8},
        baselines={"bw": {"f1": 0.88}, "rest": {"f1": 0.88}},
    )


def rule_abs_084():
    return FlagRule(metric="f1", scope="per_window_subgroup", cutoff=0.84)


def test_f1_window_helper_is_exact():
    from fairgate.metrics import rates_for

    for value in (83, 84, 85, 88):
        records = f1_window(value)
        assert rates_for(records).f1 == value / 100


def test_no_flag_at_baseline():
    items = flag(f1_window(88), band_label(), [rule_abs_084()])
    assert items == []


def test_flag_inclusive_at_cutoff():
    items = flag(f1_window(84), band_label(), [rule_abs_084()])
    assert len(items) == 1
    assert items[0].trigger["observed"] == pytest.approx(0.84)
    assert items[0].trigger["category"] == "bw"
    assert items[0].status == "pending"


def test_flag_below_cutoff():
    items = flag(f1_window(83), band_label(), [rule_abs_084()])
    assert len(items) == 1


def test_no_flag_just_above_cutoff():
    assert flag(f1_window(85), band_label(), [rule_abs_084()]) == []


def test_delta_rule_computes_threshold_from_baseline():
    rule = FlagRule(metric="f1", delta=0.04)
    items = flag(f1_window(84), band_label(), [rule])
    assert len(items) == 1
    assert items[0].trigger["threshold"] == pytest.approx(0.84)


def test_rule_validation():
    with pytest.raises(UnknownMetric):
        FlagRule(metric="nope", cutoff=0.5).validate()
    with pytest.raises(ValidationError):
        FlagRule(metric="f1").validate()  # neither cutoff nor delta
    with pytest.raises(ValidationError):
        FlagRule(metric="f1", cutoff=0.5, delta=0.1).validate()
    with pytest.raises(ValidationError):
        FlagRule(metric="f1", cutoff=0.95).validate(band_label())  # above baseline
    with pytest.raises(ValidationError):
        FlagRule(metric="score", scope="per_window_subgroup", cutoff=0.5).validate()


def test_per_observation_scope_flags_by_score():
    rule = FlagRule(metric="score", scope="per_observation", cutoff=0.3, attribute="group")
    records = [
        make_record("lo", 0, None, score=0.2),
        make_record("hi", 1, None, score=0.9),
        make_record("edge", 0, None, score=0.3),
    ]
    items = flag(records, simple_label({"a": 1.0}), [rule])
    flagged = {i.payload["event_ids"][0] for i in items}
    assert flagged == {"lo", "edge"}
    assert all(i.payload["kind"] == "observation" for i in items)


@given(observed=st.integers(0, 100))
def test_deferment_soundness(observed):
    rule = rule_abs_084()
    items = flag(f1_window(observed), band_label(), [rule])
    if observed <= 84:
        assert len(items) == 1
        assert items[0].trigger["observed"] == pytest.approx(observed / 100)
    else:
        assert items == []


# --- queue decisions -----------------------------------------------------------

def enqueue_one(queue: ReviewQueue, f1: int = 83):
    items = flag(f1_window(f1), band_label(), [rule_abs_084()], now=BASE_TIME)
    return queue.enqueue(items[0])


def test_approve_adds_original_rows():
    queue = ReviewQueue()
    item = enqueue_one(queue)
    updated, rows = queue.apply_decision(item.item_id, "approve", "rev1")
    assert updated.status == "approved"
    assert len(rows) == len(item.records)
    assert all(r.tag == "original" for r in rows)
    assert all(r.trainable for r in rows)


def test_prune_hides_from_training_keeps_audit():
    queue = ReviewQueue()
    item = enqueue_one(queue)
    total = len(item.records)
    trainable_before = len(queue.rows(trainable_only=True))
    queue.apply_decision(item.item_id, "prune", "rev1")
    assert len(queue.rows(trainable_only=True)) == trainable_before
    audit_rows = queue.rows()
    assert len(audit_rows) == total
    assert all(r.tag == "pruned_out" for r in audit_rows)


def test_nudge_requires_corrected_label():
    queue = ReviewQueue()
    item = enqueue_one(queue)
    with pytest.raises(MissingCorrectedLabel):
        queue.apply_decision(item.item_id, "nudge", "rev1")
    updated, rows = queue.apply_decision(item.item_id, "nudge", "rev1", corrected_label=0)
    assert updated.status == "nudged"
    assert all(r.trainable_label == 0 for r in rows)
    assert all(r.corrected_label == 0 for r in rows)
    # Machine label retained for audit.
    assert all(r.machine_label in (0, 1) for r in rows)


def test_second_decision_rejected():
    queue = ReviewQueue()
    item = enqueue_one(queue)
    queue.apply_decision(item.item_id, "approve", "rev1")
    with pytest.raises(AlreadyDecided):
        queue.apply_decision(item.item_id, "prune", "rev2")


def test_unknown_item():
    queue = ReviewQueue()
    with pytest.raises(UnknownItem):
        queue.apply_decision("nope", "approve", "rev1")


def test_conservation_with_audit():
    queue = ReviewQueue()
    first = enqueue_one(queue, f1=83)
    ingested = len(first.records)
    queue.apply_decision(first.item_id, "prune", "rev")
    trainable = len(queue.rows(trainable_only=True))
    pruned = len([r for r in queue.rows() if r.tag == "pruned_out"])
    assert ingested == trainable + pruned


# --- export -----------------------------------------------------------------------

def test_export_empty_set_is_empty_document():
    assert ReviewQueue().export_retraining_set() == ""


def test_export_counts_and_header():
    # Three items: approve 5 records, nudge 3, prune 2.
    queue2 = ReviewQueue()
    from fairgate.hitl import ReviewItem

    def item_with(n, item_id=""):
        records = [make_record(f"{item_id}-{i}", 1, 1) for i in range(n)]
        return ReviewItem(
            item_id="", created_at=BASE_TIME,
            trigger={"rule": rule_abs_084().to_dict()},
            payload={"kind": "window_subgroup", "event_ids": [r.event.event_id for r in records]},
            records=records,
        )

    i1 = queue2.enqueue(item_with(5, "approve"))
    i2 = queue2.enqueue(item_with(3, "nudge"))
    i3 = queue2.enqueue(item_with(2, "prune"))
    queue2.apply_decision(i1.item_id, "approve", "rev")
    queue2.apply_decision(i2.item_id, "nudge", "rev", corrected_label=1)
    queue2.apply_decision(i3.item_id, "prune", "rev")

    text = queue2.export_retraining_set()
    lines = text.strip().split("\n")
    header = json.loads(lines[0])
    assert header == {"kind": "header", "schema_version": EXPORT_SCHEMA_VERSION}
    rows = [json.loads(line) for line in lines[1:]]
    assert len(rows) == 8  # 5 original + 3 nudged, pruned excluded
    assert {r["tag"] for r in rows} == {"original", "nudged"}


def test_export_nudged_row_has_both_labels():
    queue = ReviewQueue()
    item = enqueue_one(queue)
    queue.apply_decision(item.item_id, "nudge", "rev", corrected_label=0)
    text = queue.export_retraining_set()
    rows = [json.loads(line) for line in text.strip().split("\n")[1:]]
    for row in rows:
        assert row["trainable_label"] == 0
        assert row["machine_label"] in (0, 1)


def test_export_deterministic_bytes():
    def build():
        queue = ReviewQueue()
        item = enqueue_one(queue)
        queue.apply_decision(item.item_id, "approve", "rev", now=BASE_TIME)
        return queue.export_retraining_set()

    assert build() == build()


def test_decision_immutability_no_sequence_mutates():
    queue = ReviewQueue()
    item = enqueue_one(queue)
    queue.apply_decision(item.item_id, "approve", "rev")
    decided = queue.get(item.item_id).decision.copy()
    for action in ("approve", "prune", "nudge"):
        with pytest.raises(AlreadyDecided):
            queue.apply_decision(item.item_id, action, "other",
                                 corrected_label=1 if action == "nudge" else None)
    assert queue.get(item.item_id).decision == decided


# --- persistence ------------------------------------------------------------------

def test_queue_replay_restores_items_and_rows(tmp_path):
    queue = ReviewQueue(root=tmp_path)
    item = enqueue_one(queue)
    queue.apply_decision(item.item_id, "nudge", "rev", corrected_label=1)
    restored, issues = ReviewQueue.restore(tmp_path)
    assert issues == []
    assert restored.get(item.item_id).status == "nudged"
    assert restored.export_retraining_set() == queue.export_retraining_set()


def test_queue_restore_tolerates_torn_final_line(tmp_path):
    queue = ReviewQueue(root=tmp_path)
    item = enqueue_one(queue)
    queue.apply_decision(item.item_id, "approve", "rev")
    path = tmp_path / "review" / "queue.jsonl"
    lines = path.read_text().split("\n")
    torn = "\n".join(lines[:-2]) + "\n" + lines[-2][: len(lines[-2]) // 2]
    path.write_text(torn)  # final (decision) line torn mid-write
    restored, issues = ReviewQueue.restore(tmp_path)
    assert len(issues) == 1
    assert item.item_id in {i.item_id for i in restored.items()}
    assert restored.get(item.item_id).status == "pending"  # decision line lost
