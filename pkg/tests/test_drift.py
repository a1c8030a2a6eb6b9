from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from fairgate.drift import (
    DriftThresholds,
    STATUS_ALERT,
    STATUS_INDETERMINATE,
    STATUS_NONE,
    STATUS_WATCH,
    TRIAGE_EXTERNAL,
    TRIAGE_INDETERMINATE,
    TRIAGE_INTERNAL,
    detect_concept_drift,
    detect_data_drift,
    detect_drift,
)
from fairgate.errors import InsufficientData
from fairgate.metrics import stratified_rates

from conftest import make_record, records_from_counts, simple_label


def make_window(share_a: float, n: int, counts_a=(8, 1, 1, 10), counts_b=(8, 1, 1, 10)):
    """n records split share_a/(1-share_a) with repeating confusion cells."""
    n_a = round(n * share_a)
    records = []

    def cells(counts):
        tp, fp, fn, tn = counts
        base = [(1, 1)] * tp + [(1, 0)] * fp + [(0, 1)] * fn + [(0, 0)] * tn
        return base

    for category, count, counts in (("a", n_a, counts_a), ("b", n - n_a, counts_b)):
        pattern = cells(counts)
        for i in range(count):
            predicted, outcome = pattern[i % len(pattern)]
            records.append(
                make_record(
                    f"{category}{i:06d}", predicted, outcome, category=category, index=i
                )
            )
    return records


def label_95_5(bands=None):
    return simple_label(
        {"a": 0.95, "b": 0.05},
        baselines={
            "a": {"tpr": 0.8, "fpr": 0.1, "f1": 0.88, "positive_rate": 0.45},
            "b": {"tpr": 0.8, "fpr": 0.1, "f1": 0.88, "positive_rate": 0.45},
        },
        bands=bands or {},
    )


def test_live_equal_to_training_shares_all_none():
    label = label_95_5()
    window = make_window(0.95, 2000)
    report = detect_data_drift(label, window)
    assert all(e.status == STATUS_NONE for e in report.data)
    share_entry = report.data[0]
    assert share_entry.name == "subgroup_share:group"
    assert share_entry.value == pytest.approx(0.0, abs=1e-6)


def test_paper_shift_lands_at_watch_not_alert():
    label = label_95_5()
    window = make_window(0.89, 10000)
    report = detect_data_drift(label, window)
    entry = report.data[0]
    assert entry.value == pytest.approx(0.0512, abs=1e-4)
    assert entry.status == STATUS_WATCH


def test_novel_category_alerts_via_smoothing():
    label = label_95_5()
    window = make_window(0.8, 1000)
    for i, record in enumerate(make_window(1.0, 250)):
        rec = make_record(f"novel{i}", 1, 1, category="zz", index=i)
        window.append(rec)
    report = detect_data_drift(label, window)
    entry = report.data[0]
    assert entry.status == STATUS_ALERT
    assert entry.value > 0.25


def test_feature_drift_categorical_and_continuous():
    label = simple_label(
        {"a": 1.0},
        feature_baselines={
            "region": {
                "kind": "categorical",
                "categories": {"n": 0.5, "s": 0.5},
                "support": 1000,
            },
            "age": {"kind": "continuous", "sample": list(range(200)), "support": 200},
        },
    )
    window = []
    for i in range(400):
        window.append(
            make_record(
                f"f{i}", 1, 1, category="a", index=i,
                features={"region": "n" if i % 10 else "s", "age": 500 + i},
            )
        )
    report = detect_data_drift(label, window)
    by_name = {e.name: e for e in report.data}
    assert by_name["region"].statistic == "psi"
    assert by_name["region"].status == STATUS_ALERT  # 50/50 -> 90/10
    assert by_name["age"].statistic == "ks"
    assert by_name["age"].value == 1.0  # disjoint supports
    assert by_name["age"].status == STATUS_ALERT


def test_missing_feature_values_indeterminate():
    label = simple_label(
        {"a": 1.0},
        feature_baselines={
            "age": {"kind": "continuous", "sample": [1, 2, 3], "support": 3}
        },
    )
    window = [make_record(f"x{i}", 1, 1, index=i) for i in range(50)]
    report = detect_data_drift(label, window)
    age = [e for e in report.data if e.name == "age"][0]
    assert age.status == STATUS_INDETERMINATE
    assert age.value is None


def test_ks_low_support_indeterminate():
    thresholds = DriftThresholds(ks_min_support=100)
    label = simple_label(
        {"a": 1.0},
        feature_baselines={
            "age": {"kind": "continuous", "sample": list(range(20)), "support": 20}
        },
    )
    window = [
        make_record(f"x{i}", 1, 1, index=i, features={"age": 1000 + i}) for i in range(50)
    ]
    report = detect_data_drift(label, window, thresholds)
    age = [e for e in report.data if e.name == "age"][0]
    assert age.value == 1.0
    assert age.status == STATUS_INDETERMINATE


# --- concept drift ---------------------------------------------------------------

def band_label():
    return simple_label(
        {"a": 0.95, "b": 0.05},
        baselines={
            "a": {"tpr": 0.8, "fpr": 0.1, "f1": 0.88},
            "b": {"tpr": 0.8, "fpr": 0.1, "f1": 0.88},
        },
        bands={
            "a": {"f1": [0.84, 1.0]},
            "b": {"f1": [0.84, 1.0]},
        },
    )


def rates_map(window):
    return {"group": stratified_rates(window, "group")}


def test_observed_at_baseline_no_concept_drift():
    label = band_label()
    window = make_window(0.95, 2000, counts_a=(22, 3, 3, 22), counts_b=(22, 3, 3, 22))
    data = detect_data_drift(label, window)
    report = detect_concept_drift(label, rates_map(window), data)
    assert all(e.status in (STATUS_NONE, STATUS_INDETERMINATE) for e in report.concept)
    assert report.triage_hint == TRIAGE_INDETERMINATE


def test_f1_drop_without_data_drift_triages_internal():
    label = band_label()
    # b's confusion mass drops f1 to ~0.70 while shares stay at training.
    window = make_window(0.95, 4000, counts_b=(7, 3, 3, 7))
    data = detect_data_drift(label, window)
    assert all(e.status == STATUS_NONE for e in data.data)
    report = detect_concept_drift(label, rates_map(window), data)
    statuses = {(e.category, e.metric): e.status for e in report.concept}
    assert statuses[("b", "f1")] == STATUS_ALERT
    assert report.triage_hint == TRIAGE_INTERNAL


def test_concept_plus_data_drift_triages_external():
    label = band_label()
    window = make_window(0.89, 4000, counts_b=(7, 3, 3, 7))
    data = detect_data_drift(label, window)
    report = detect_concept_drift(label, rates_map(window), data)
    assert report.data_status() == STATUS_WATCH
    assert report.concept_status() == STATUS_ALERT
    assert report.triage_hint == TRIAGE_EXTERNAL


def test_no_subgroup_meets_min_count_raises():
    label = band_label()
    window = make_window(0.5, 20)
    data = detect_data_drift(label, window)
    with pytest.raises(InsufficientData):
        detect_concept_drift(label, rates_map(window), data)


def test_detect_drift_without_outcomes_is_indeterminate_not_pass():
    label = band_label()
    window = [make_record(f"n{i}", 1, None, category="a", index=i) for i in range(100)]
    report = detect_drift(label, window)
    assert report.concept_status() in (STATUS_NONE, STATUS_INDETERMINATE)
    assert all(e.status == STATUS_INDETERMINATE for e in report.concept)
    assert report.triage_hint == TRIAGE_INDETERMINATE


@given(
    watch=st.floats(0.01, 0.3),
    scale=st.floats(1.0, 4.0),
    share=st.floats(0.6, 0.99),
)
def test_monotone_thresholds_never_escalate(watch, scale, share):
    """Raising thresholds never turns a lower status into a higher one."""
    label = label_95_5()
    window = make_window(share, 500)
    loose = DriftThresholds(psi_watch=watch, psi_alert=min(1.0, watch * scale))
    looser = DriftThresholds(
        psi_watch=watch * 1.5, psi_alert=min(1.5, watch * scale * 1.5)
    )
    severity = {"none": 0, "indeterminate": 0, "watch": 1, "alert": 2}
    before = detect_data_drift(label, window, loose).data[0].status
    after = detect_data_drift(label, window, looser).data[0].status
    assert severity[after] <= severity[before]


def test_triage_soundness_external_requires_both_signals():
    label = band_label()
    window = make_window(0.89, 4000, counts_b=(7, 3, 3, 7))
    data = detect_data_drift(label, window)
    report = detect_concept_drift(label, rates_map(window), data)
    if report.triage_hint == TRIAGE_EXTERNAL:
        assert any(e.status in (STATUS_WATCH, STATUS_ALERT) for e in report.data)
        assert any(e.status == STATUS_ALERT for e in report.concept)
