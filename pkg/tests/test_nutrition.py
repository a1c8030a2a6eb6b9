from __future__ import annotations

import json

import pytest

from fairgate.errors import UnknownAttribute, ValidationError
from fairgate.nutrition import NutritionLabel, load_nutrition_label

from conftest import simple_label


def label_doc(shares, bands=None, baselines=None) -> dict:
    return simple_label(shares, bands=bands or {}, baselines=baselines or {}).to_dict()


def test_paper_shares_accepted():
    label = NutritionLabel.from_dict(label_doc({"a": 0.95, "b": 0.05}))
    assert label.training_shares("group") == {"a": 0.95, "b": 0.05}
    assert label.reference_subgroup("group") == "a"


def test_share_sum_violation_rejected():
    doc = label_doc({"a": 0.95, "b": 0.05})
    doc["subgroups"][1]["training_share"] = 0.10
    with pytest.raises(ValidationError, match="sum"):
        NutritionLabel.from_dict(doc)


def test_f1_band_retrievable():
    doc = label_doc(
        {"black_women": 0.2, "rest": 0.8},
        bands={"black_women": {"f1": [0.84, 1.0]}},
        baselines={"black_women": {"f1": 0.88}},
    )
    label = NutritionLabel.from_dict(doc)
    assert label.band("group", "black_women", "f1") == (0.84, 1.0)
    entry = label.entries_for("group")["black_women"]
    assert entry.baseline_rates.f1 == 0.88


def test_band_low_above_high_rejected():
    doc = label_doc({"a": 1.0})
    doc["subgroups"][0]["acceptable_band"] = {"f1": [0.9, 0.5]}
    with pytest.raises(ValidationError, match="low"):
        NutritionLabel.from_dict(doc)


def test_unknown_band_metric_rejected():
    doc = label_doc({"a": 1.0})
    doc["subgroups"][0]["acceptable_band"] = {"not_a_metric": [0.0, 1.0]}
    with pytest.raises(ValidationError, match="unknown metric"):
        NutritionLabel.from_dict(doc)


def test_entry_attribute_must_be_in_schema():
    doc = label_doc({"a": 1.0})
    doc["subgroups"][0]["attribute"] = "other"
    with pytest.raises(ValidationError):
        NutritionLabel.from_dict(doc)


def test_duplicate_entries_rejected():
    doc = label_doc({"a": 1.0})
    doc["subgroups"].append(dict(doc["subgroups"][0]))
    with pytest.raises(ValidationError, match="duplicate"):
        NutritionLabel.from_dict(doc)


def test_missing_attribute_entries_rejected():
    doc = label_doc({"a": 1.0})
    doc["subgroup_schema"] = ["group", "region"]
    with pytest.raises(ValidationError, match="region"):
        NutritionLabel.from_dict(doc)


def test_reference_is_largest_training_share():
    label = NutritionLabel.from_dict(label_doc({"small": 0.2, "big": 0.8}))
    assert label.reference_subgroup("group") == "big"
    with pytest.raises(UnknownAttribute):
        label.reference_subgroup("nope")


def test_load_from_file_roundtrip(tmp_path):
    doc = label_doc({"a": 0.7, "b": 0.3})
    path = tmp_path / "m1.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    label = load_nutrition_label(path)
    assert label.to_dict() == NutritionLabel.from_dict(doc).to_dict()


def test_load_rejects_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{nope", encoding="utf-8")
    with pytest.raises(ValidationError):
        load_nutrition_label(path)


def test_atomic_rejection_leaves_nothing_loaded():
    # A label that fails one invariant is rejected wholesale.
    doc = label_doc({"a": 0.5, "b": 0.5})
    doc["subgroups"][1]["acceptable_band"] = {"f1": [0.9, 0.1]}
    with pytest.raises(ValidationError):
        NutritionLabel.from_dict(doc)
