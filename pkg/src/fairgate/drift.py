"""Data-drift and concept-drift detectors with source-triage hints.

Data drift compares live subgroup shares and feature distributions against
the nutrition label's baselines (PSI for categorical, KS for continuous).
Concept drift compares observed per-subgroup rates against the label's
acceptable bands.  The detector always passes (expected=training,
actual=live) into PSI, in that order; PSI is not symmetric.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .distributions import SMOOTHING_EPS, DistributionSnapshot, ks_statistic, psi
from .errors import DegenerateDistribution, InsufficientData
from .events import JoinedRecord
from .metrics import DEFAULT_MIN_COUNT, GroupRates, WindowDescriptor, stratified_rates
from .nutrition import NutritionLabel

STATUS_NONE = "none"
STATUS_WATCH = "watch"
STATUS_ALERT = "alert"
STATUS_INDETERMINATE = "indeterminate"

TRIAGE_INTERNAL = "internal_data_leakage_suspected"
TRIAGE_EXTERNAL = "external_variable_capture_suspected"
TRIAGE_INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class DriftThresholds:
    """Detector thresholds; see the service config for overrides.

    The 95/5 -> 89/11 subgroup-share shift scores PSI ~= 0.0512 and must land
    at watch (visible, not yet actionable), which pins psi_watch below it.
    """

    psi_watch: float = 0.05
    psi_alert: float = 0.25
    ks_watch: float = 0.1
    ks_alert: float = 0.2
    ks_min_support: int = 100
    min_count: int = DEFAULT_MIN_COUNT
    smoothing_eps: float = SMOOTHING_EPS

    def to_dict(self) -> dict:
        return {
            "psi_watch": self.psi_watch,
            "psi_alert": self.psi_alert,
            "ks_watch": self.ks_watch,
            "ks_alert": self.ks_alert,
            "ks_min_support": self.ks_min_support,
            "min_count": self.min_count,
            "smoothing_eps": self.smoothing_eps,
        }


@dataclass
class DataDriftEntry:
    name: str  # feature name or "subgroup_share:<attribute>"
    statistic: str  # "psi" | "ks"
    value: Optional[float]
    status: str
    support: int = 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "value": self.value,
            "status": self.status,
            "support": self.support,
        }


@dataclass
class ConceptDriftEntry:
    attribute: str
    category: str
    metric: str
    baseline: Optional[float]
    observed: Optional[float]
    delta: Optional[float]
    status: str
    band: Optional[tuple[float, float]] = None
    support: int = 0

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "category": self.category,
            "metric": self.metric,
            "baseline": self.baseline,
            "observed": self.observed,
            "delta": self.delta,
            "status": self.status,
            "band": list(self.band) if self.band else None,
            "support": self.support,
        }


@dataclass
class DriftReport:
    model_version: str
    window: WindowDescriptor
    data: list[DataDriftEntry] = field(default_factory=list)
    concept: list[ConceptDriftEntry] = field(default_factory=list)
    triage_hint: str = TRIAGE_INDETERMINATE

    def data_status(self) -> str:
        return _worst(entry.status for entry in self.data)

    def concept_status(self) -> str:
        return _worst(entry.status for entry in self.concept)

    def to_dict(self) -> dict:
        return {
            "model_version": self.model_version,
            "window": self.window.to_dict(),
            "data": [e.to_dict() for e in self.data],
            "concept": [e.to_dict() for e in self.concept],
            "data_status": self.data_status(),
            "concept_status": self.concept_status(),
            "triage_hint": self.triage_hint,
        }


_SEVERITY = {STATUS_NONE: 0, STATUS_INDETERMINATE: 0, STATUS_WATCH: 1, STATUS_ALERT: 2}


def _worst(statuses) -> str:
    worst = STATUS_NONE
    for status in statuses:
        if _SEVERITY[status] > _SEVERITY[worst]:
            worst = status
    return worst


def _psi_status(value: float, thresholds: DriftThresholds) -> str:
    if value >= thresholds.psi_alert:
        return STATUS_ALERT
    if value >= thresholds.psi_watch:
        return STATUS_WATCH
    return STATUS_NONE


def _ks_status(value: float, support: int, thresholds: DriftThresholds) -> str:
    if support < thresholds.ks_min_support:
        return STATUS_INDETERMINATE
    if value >= thresholds.ks_alert:
        return STATUS_ALERT
    if value >= thresholds.ks_watch:
        return STATUS_WATCH
    return STATUS_NONE


def _live_feature_snapshot(
    records: Sequence[JoinedRecord], name: str, kind: str
) -> DistributionSnapshot:
    if kind == "categorical":
        counts = Counter(
            str(rec.event.features[name])
            for rec in records
            if rec.event.features and name in rec.event.features
        )
        return DistributionSnapshot.categorical_from_counts(counts)
    values = [
        float(rec.event.features[name])  # type: ignore[arg-type]
        for rec in records
        if rec.event.features and name in rec.event.features
    ]
    return DistributionSnapshot.continuous_from_values(values)


def detect_data_drift(
    label: NutritionLabel,
    window: Sequence[JoinedRecord],
    thresholds: DriftThresholds = DriftThresholds(),
    window_descriptor: Optional[WindowDescriptor] = None,
) -> DriftReport:
    """Input-distribution drift: subgroup shares always, features when logged."""
    report = DriftReport(
        model_version=label.model_version,
        window=window_descriptor or WindowDescriptor(size=len(window)),
    )

    for attribute in label.subgroup_schema:
        counts = Counter(rec.event.subgroup.get(attribute, "(unknown)") for rec in window)
        live = DistributionSnapshot.categorical_from_counts(counts)
        expected = DistributionSnapshot(
            kind="categorical",
            categories=label.training_shares(attribute),
            support=max(sum(counts.values()), 1),
        )
        entry = DataDriftEntry(
            name=f"subgroup_share:{attribute}",
            statistic="psi",
            value=None,
            status=STATUS_INDETERMINATE,
            support=live.support,
        )
        try:
            entry.value = psi(expected, live, eps=thresholds.smoothing_eps)
            entry.status = _psi_status(entry.value, thresholds)
        except DegenerateDistribution:
            pass
        report.data.append(entry)

    for name, baseline in sorted(label.feature_baselines.snapshots.items()):
        live = _live_feature_snapshot(window, name, baseline.kind)
        entry = DataDriftEntry(
            name=name,
            statistic="psi" if baseline.kind == "categorical" else "ks",
            value=None,
            status=STATUS_INDETERMINATE,
            support=live.support,
        )
        try:
            if baseline.kind == "categorical":
                entry.value = psi(baseline, live, eps=thresholds.smoothing_eps)
                entry.status = _psi_status(entry.value, thresholds)
            else:
                entry.value = ks_statistic(baseline.sample or (), live.sample or ())
                entry.status = _ks_status(
                    entry.value, min(baseline.support, live.support), thresholds
                )
        except DegenerateDistribution:
            pass
        report.data.append(entry)

    return report


def _concept_entries(
    label: NutritionLabel,
    subgroup_rates: Mapping[str, Mapping[str, GroupRates]],
    thresholds: DriftThresholds,
) -> tuple[list[ConceptDriftEntry], bool]:
    entries: list[ConceptDriftEntry] = []
    any_sufficient = False
    for attribute in label.subgroup_schema:
        observed_by_category = subgroup_rates.get(attribute, {})
        for category, entry in label.entries_for(attribute).items():
            observed_rates = observed_by_category.get(category)
            support = observed_rates.support if observed_rates else 0
            if support >= thresholds.min_count:
                any_sufficient = True
            for metric, band in entry.acceptable_band.items():
                baseline = entry.baseline_rates.rate(metric)
                observed = observed_rates.rate(metric) if observed_rates else None
                concept = ConceptDriftEntry(
                    attribute=attribute,
                    category=category,
                    metric=metric,
                    baseline=baseline,
                    observed=observed,
                    delta=None,
                    status=STATUS_INDETERMINATE,
                    band=band,
                    support=support,
                )
                if observed is not None and support >= thresholds.min_count:
                    concept.delta = observed - baseline if baseline is not None else None
                    low, high = band
                    concept.status = (
                        STATUS_NONE if low <= observed <= high else STATUS_ALERT
                    )
                entries.append(concept)
    return entries, any_sufficient


def detect_concept_drift(
    label: NutritionLabel,
    subgroup_rates: Mapping[str, Mapping[str, GroupRates]],
    data_drift: DriftReport,
    thresholds: DriftThresholds = DriftThresholds(),
) -> DriftReport:
    """Performance drift vs. the label's acceptable bands, plus triage.

    ``subgroup_rates`` maps attribute -> category -> observed window rates.
    Raises InsufficientData when no subgroup reaches min_count outcomes.
    """
    entries, any_sufficient = _concept_entries(label, subgroup_rates, thresholds)
    if not any_sufficient:
        raise InsufficientData(
            f"no subgroup has {thresholds.min_count} outcome-bearing records"
        )
    report = DriftReport(
        model_version=data_drift.model_version,
        window=data_drift.window,
        data=list(data_drift.data),
        concept=entries,
    )
    report.triage_hint = _triage(report)
    return report


def _triage(report: DriftReport) -> str:
    concept_alert = any(e.status == STATUS_ALERT for e in report.concept)
    data_watch_or_worse = any(
        e.status in (STATUS_WATCH, STATUS_ALERT) for e in report.data
    )
    if concept_alert and data_watch_or_worse:
        return TRIAGE_EXTERNAL
    if concept_alert:
        return TRIAGE_INTERNAL
    return TRIAGE_INDETERMINATE


def detect_drift(
    label: NutritionLabel,
    window: Sequence[JoinedRecord],
    thresholds: DriftThresholds = DriftThresholds(),
    window_descriptor: Optional[WindowDescriptor] = None,
) -> DriftReport:
    """Run both detectors over one window of joined records.

    Windows where no subgroup reaches min_count outcomes keep their concept
    entries at indeterminate instead of erroring; never a silent pass.
    """
    data_report = detect_data_drift(label, window, thresholds, window_descriptor)
    rates = {
        attribute: stratified_rates(window, attribute)
        for attribute in label.subgroup_schema
    }
    entries, any_sufficient = _concept_entries(label, rates, thresholds)
    data_report.concept = entries
    if any_sufficient:
        data_report.triage_hint = _triage(data_report)
    else:
        data_report.triage_hint = TRIAGE_INDETERMINATE
    return data_report
