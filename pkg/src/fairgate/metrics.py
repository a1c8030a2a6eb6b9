"""Stratified per-subgroup confusion matrices, rates, and parity gaps.

All functions are pure over immutable record windows.  Rates with a zero
denominator are ``None`` (undefined), never 0: a silent zero would read as
perfect parity.  Pairs with too little data are marked insufficient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Optional, Sequence

from .errors import InsufficientData, MissingOutcome, UnknownAttribute

if TYPE_CHECKING:
    from .events import JoinedRecord
    from .nutrition import NutritionLabel

DEFAULT_MIN_COUNT = 30
DEFAULT_WINDOW_SIZE = 1000

RATE_NAMES = ("tpr", "fpr", "ppv", "f1", "positive_rate")
GAP_NAMES = ("demographic_parity", "equal_opportunity", "equalized_odds")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass(frozen=True)
class GroupRates:
    """Derived rates for one stratum; each is None when its denominator is 0."""

    tpr: Optional[float]
    fpr: Optional[float]
    ppv: Optional[float]
    f1: Optional[float]
    positive_rate: Optional[float]
    support: int

    def to_dict(self) -> dict:
        return {
            "tpr": self.tpr,
            "fpr": self.fpr,
            "ppv": self.ppv,
            "f1": self.f1,
            "positive_rate": self.positive_rate,
            "support": self.support,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "GroupRates":
        def num(name: str) -> Optional[float]:
            v = d.get(name)
            return None if v is None else float(v)  # type: ignore[arg-type]

        return cls(
            tpr=num("tpr"),
            fpr=num("fpr"),
            ppv=num("ppv"),
            f1=num("f1"),
            positive_rate=num("positive_rate"),
            support=int(d.get("support", 0)),  # type: ignore[arg-type]
        )

    def rate(self, name: str) -> Optional[float]:
        if name not in RATE_NAMES:
            raise UnknownAttribute(f"unknown rate {name!r}")
        return getattr(self, name)


def stratify(
    records: Sequence["JoinedRecord"], attribute: str
) -> dict[str, list["JoinedRecord"]]:
    """Partition a window by one subgroup attribute.

    Records missing the attribute fall into their own "(unknown)" stratum
    rather than erroring; a novel live category is itself drift signal.
    """
    strata: dict[str, list["JoinedRecord"]] = {}
    for rec in records:
        category = rec.event.subgroup.get(attribute, "(unknown)")
        strata.setdefault(category, []).append(rec)
    return strata


def confusion_matrix(records: Sequence["JoinedRecord"]) -> ConfusionMatrix:
    """Tally (predicted, outcome) pairs; every record must be outcome-bearing."""
    tp = fp = fn = tn = 0
    for rec in records:
        if not rec.has_outcome:
            raise MissingOutcome(f"record {rec.event.event_id!r} has no outcome")
        predicted, actual = rec.event.predicted_label, rec.outcome_label
        if predicted == 1 and actual == 1:
            tp += 1
        elif predicted == 1 and actual == 0:
            fp += 1
        elif predicted == 0 and actual == 1:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)


def group_rates(cm: ConfusionMatrix) -> GroupRates:
    def ratio(num: int, den: int) -> Optional[float]:
        return num / den if den else None

    return GroupRates(
        tpr=ratio(cm.tp, cm.tp + cm.fn),
        fpr=ratio(cm.fp, cm.fp + cm.tn),
        ppv=ratio(cm.tp, cm.tp + cm.fp),
        f1=ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn),
        positive_rate=ratio(cm.tp + cm.fp, cm.total),
        support=cm.total,
    )


def rates_for(records: Sequence["JoinedRecord"]) -> GroupRates:
    """Rates over the outcome-bearing subset of a stratum."""
    return group_rates(confusion_matrix([r for r in records if r.has_outcome]))


def _gap(
    ref: Optional[float],
    other: Optional[float],
    name: str,
    support_ref: int,
    support_other: int,
    min_count: int,
) -> float:
    if ref is None or other is None:
        raise InsufficientData(f"{name} undefined for one side")
    if support_ref < min_count or support_other < min_count:
        raise InsufficientData(
            f"{name}: support {min(support_ref, support_other)} below min_count {min_count}"
        )
    return abs(ref - other)


def demographic_parity_gap(
    rates_ref: GroupRates, rates_other: GroupRates, min_count: int = 0
) -> float:
    """|positive_rate_ref - positive_rate_other|; 0 means parity holds."""
    return _gap(
        rates_ref.positive_rate,
        rates_other.positive_rate,
        "demographic_parity",
        rates_ref.support,
        rates_other.support,
        min_count,
    )


def equal_opportunity_gap(
    rates_ref: GroupRates, rates_other: GroupRates, min_count: int = 0
) -> float:
    """|tpr_ref - tpr_other|."""
    return _gap(
        rates_ref.tpr, rates_other.tpr, "equal_opportunity",
        rates_ref.support, rates_other.support, min_count,
    )


def equalized_odds_gap(
    rates_ref: GroupRates, rates_other: GroupRates, min_count: int = 0
) -> float:
    """max of the TPR gap and the FPR gap; 0 iff both equalities hold."""
    tpr_gap = _gap(
        rates_ref.tpr, rates_other.tpr, "equalized_odds",
        rates_ref.support, rates_other.support, min_count,
    )
    fpr_gap = _gap(
        rates_ref.fpr, rates_other.fpr, "equalized_odds",
        rates_ref.support, rates_other.support, min_count,
    )
    return max(tpr_gap, fpr_gap)


GAP_FUNCTIONS = {
    "demographic_parity": demographic_parity_gap,
    "equal_opportunity": equal_opportunity_gap,
    "equalized_odds": equalized_odds_gap,
}


@dataclass(frozen=True)
class WindowDescriptor:
    """Tumbling window over the event stream; count-based by default."""

    kind: str = "count"
    size: int = DEFAULT_WINDOW_SIZE
    index: int = 0
    start: Optional[str] = None
    end: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "size": self.size,
            "index": self.index,
            "start": self.start,
            "end": self.end,
        }


def tumbling_windows(
    records: Sequence["JoinedRecord"], size: int = DEFAULT_WINDOW_SIZE
) -> list[tuple[WindowDescriptor, list["JoinedRecord"]]]:
    """Split records into consecutive count-based windows (last may be short)."""
    windows = []
    for index in range(0, max(len(records), 1), size):
        chunk = list(records[index : index + size])
        if not chunk and index > 0:
            break
        desc = WindowDescriptor(
            kind="count",
            size=size,
            index=index // size,
            start=chunk[0].event.timestamp.isoformat() if chunk else None,
            end=chunk[-1].event.timestamp.isoformat() if chunk else None,
        )
        windows.append((desc, chunk))
    return windows


@dataclass
class PairGaps:
    """Gap triple for one (reference, other) subgroup pair."""

    other: str
    gaps: dict = field(default_factory=dict)  # gap name -> float | None
    insufficient: bool = False
    reason: Optional[str] = None
    support_ref: int = 0
    support_other: int = 0

    def to_dict(self) -> dict:
        return {
            "other": self.other,
            "gaps": dict(self.gaps),
            "insufficient": self.insufficient,
            "reason": self.reason,
            "support_ref": self.support_ref,
            "support_other": self.support_other,
        }


@dataclass
class ParityReport:
    attribute: str
    reference_subgroup: str
    pairs: list[PairGaps]
    window: WindowDescriptor
    min_count: int

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "reference_subgroup": self.reference_subgroup,
            "pairs": [p.to_dict() for p in self.pairs],
            "window": self.window.to_dict(),
            "min_count": self.min_count,
        }


def parity_report(
    window: Sequence["JoinedRecord"],
    attribute: str,
    label: "NutritionLabel",
    min_count: int = DEFAULT_MIN_COUNT,
    window_descriptor: Optional[WindowDescriptor] = None,
) -> ParityReport:
    """Pairwise gaps of every observed subgroup against the reference.

    The reference is the subgroup with the largest training share in the
    label.  Pairs whose outcome-bearing support falls below ``min_count`` on
    either side are marked insufficient instead of reporting noisy gaps.
    """
    if attribute not in label.subgroup_schema:
        raise UnknownAttribute(f"attribute {attribute!r} not in label schema")
    reference = label.reference_subgroup(attribute)
    strata = stratify(window, attribute)
    ref_rates = rates_for(strata.get(reference, []))

    pairs: list[PairGaps] = []
    for category in sorted(strata):
        if category == reference:
            continue
        other_rates = rates_for(strata[category])
        pair = PairGaps(
            other=category,
            support_ref=ref_rates.support,
            support_other=other_rates.support,
        )
        for name, fn in GAP_FUNCTIONS.items():
            try:
                pair.gaps[name] = fn(ref_rates, other_rates, min_count)
            except InsufficientData as exc:
                pair.gaps[name] = None
                pair.insufficient = True
                pair.reason = exc.message
        pairs.append(pair)

    descriptor = window_descriptor or WindowDescriptor(size=len(window))
    return ParityReport(
        attribute=attribute,
        reference_subgroup=reference,
        pairs=pairs,
        window=descriptor,
        min_count=min_count,
    )


def stratified_rates(
    window: Sequence["JoinedRecord"], attribute: str
) -> dict[str, GroupRates]:
    """Per-category rates for one attribute over a window."""
    return {cat: rates_for(recs) for cat, recs in stratify(window, attribute).items()}
