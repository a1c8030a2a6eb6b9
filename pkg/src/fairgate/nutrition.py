"""Versioned training-time baseline manifest ("nutrition label").

The label records, per subgroup: its share of the training data, baseline
rates, and the closed band each monitored metric must stay inside once the
model is live.  Monitoring modules treat the label as read-only ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Union

from .distributions import SHARE_SUM_TOL, DistributionSnapshot, FeatureBaselines
from .errors import UnknownAttribute, ValidationError
from .metrics import RATE_NAMES, GroupRates


@dataclass(frozen=True)
class SubgroupEntry:
    attribute: str
    category: str
    training_share: float
    baseline_rates: GroupRates
    acceptable_band: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def validate(self) -> "SubgroupEntry":
        if not (0.0 <= self.training_share <= 1.0):
            raise ValidationError(
                f"training_share {self.training_share} for "
                f"{self.attribute}={self.category} outside [0, 1]"
            )
        for metric, (low, high) in self.acceptable_band.items():
            if metric not in RATE_NAMES:
                raise ValidationError(
                    f"acceptable_band references unknown metric {metric!r}"
                )
            if low > high:
                raise ValidationError(
                    f"acceptable_band for {metric!r} has low {low} > high {high}"
                )
        return self

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "category": self.category,
            "training_share": self.training_share,
            "baseline_rates": self.baseline_rates.to_dict(),
            "acceptable_band": {m: list(iv) for m, iv in self.acceptable_band.items()},
        }


@dataclass(frozen=True)
class NutritionLabel:
    label_version: str
    model_version: str
    subgroup_schema: tuple[str, ...]
    subgroups: tuple[SubgroupEntry, ...]
    feature_baselines: FeatureBaselines = field(default_factory=FeatureBaselines)

    def validate(self) -> "NutritionLabel":
        if not self.label_version or not self.model_version:
            raise ValidationError("label_version and model_version must be non-empty")
        by_attribute: dict[str, float] = {}
        seen: set[tuple[str, str]] = set()
        for entry in self.subgroups:
            entry.validate()
            if entry.attribute not in self.subgroup_schema:
                raise ValidationError(
                    f"subgroup attribute {entry.attribute!r} not in subgroup_schema"
                )
            key = (entry.attribute, entry.category)
            if key in seen:
                raise ValidationError(f"duplicate subgroup entry {key}")
            seen.add(key)
            by_attribute[entry.attribute] = (
                by_attribute.get(entry.attribute, 0.0) + entry.training_share
            )
        for attribute in self.subgroup_schema:
            total = by_attribute.get(attribute)
            if total is None:
                raise ValidationError(f"no subgroup entries for attribute {attribute!r}")
            if abs(total - 1.0) > SHARE_SUM_TOL:
                raise ValidationError(
                    f"training shares for {attribute!r} sum to {total}, "
                    f"expected 1 ± {SHARE_SUM_TOL}"
                )
        return self

    # -- lookups -------------------------------------------------------------

    def entries_for(self, attribute: str) -> dict[str, SubgroupEntry]:
        if attribute not in self.subgroup_schema:
            raise UnknownAttribute(f"attribute {attribute!r} not in label schema")
        return {e.category: e for e in self.subgroups if e.attribute == attribute}

    def reference_subgroup(self, attribute: str) -> str:
        """Category with the largest training share (the over-represented group)."""
        entries = self.entries_for(attribute)
        return max(entries.values(), key=lambda e: e.training_share).category

    def training_shares(self, attribute: str) -> dict[str, float]:
        return {c: e.training_share for c, e in self.entries_for(attribute).items()}

    def band(self, attribute: str, category: str, metric: str) -> Optional[tuple[float, float]]:
        entry = self.entries_for(attribute).get(category)
        if entry is None:
            return None
        return entry.acceptable_band.get(metric)

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "label_version": self.label_version,
            "model_version": self.model_version,
            "subgroup_schema": list(self.subgroup_schema),
            "subgroups": [e.to_dict() for e in self.subgroups],
            "feature_baselines": self.feature_baselines.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "NutritionLabel":
        try:
            subgroups = []
            for raw in d.get("subgroups") or []:
                band = {
                    str(metric): (float(iv[0]), float(iv[1]))
                    for metric, iv in dict(raw.get("acceptable_band") or {}).items()
                }
                subgroups.append(
                    SubgroupEntry(
                        attribute=str(raw["attribute"]),
                        category=str(raw["category"]),
                        training_share=float(raw["training_share"]),
                        baseline_rates=GroupRates.from_dict(raw.get("baseline_rates") or {}),
                        acceptable_band=band,
                    )
                )
            label = cls(
                label_version=str(d.get("label_version", "")),
                model_version=str(d.get("model_version", "")),
                subgroup_schema=tuple(str(a) for a in (d.get("subgroup_schema") or [])),
                subgroups=tuple(subgroups),
                feature_baselines=FeatureBaselines.from_dict(d.get("feature_baselines") or {}),  # type: ignore[arg-type]
            )
        except ValidationError:
            raise
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ValidationError(f"malformed nutrition label: {exc}") from None
        return label.validate()


def load_nutrition_label(document: Union[str, Path]) -> NutritionLabel:
    """Load and validate a label from a JSON document (path or raw text)."""
    if isinstance(document, Path) or (
        isinstance(document, str) and "\n" not in document and document.endswith(".json")
    ):
        text = Path(document).read_text(encoding="utf-8")
    else:
        text = str(document)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"label document is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ValidationError("label document must be a JSON object")
    return NutritionLabel.from_dict(raw)
