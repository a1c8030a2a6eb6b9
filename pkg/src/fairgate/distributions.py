"""Distribution snapshots and the two drift statistics built on them.

PSI handles categorical features and subgroup shares; the two-sample KS
statistic handles continuous features.  Categories missing from one side are
smoothed to a tiny floor so a novel live category yields a large, finite PSI
instead of infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .errors import DegenerateDistribution, ValidationError

SMOOTHING_EPS = 1e-6
SHARE_SUM_TOL = 1e-9


@dataclass(frozen=True)
class DistributionSnapshot:
    """Empirical distribution of one feature (or of subgroup shares)."""

    kind: str  # "categorical" | "continuous"
    categories: Optional[Mapping[str, float]] = None  # category -> share
    sample: Optional[tuple[float, ...]] = None  # sorted values
    support: int = 0

    def validate(self) -> "DistributionSnapshot":
        if self.kind not in ("categorical", "continuous"):
            raise ValidationError(f"snapshot kind {self.kind!r} unknown")
        if self.kind == "categorical":
            if self.categories is None:
                raise ValidationError("categorical snapshot missing categories")
            if self.support > 0:
                total = sum(self.categories.values())
                if abs(total - 1.0) > SHARE_SUM_TOL:
                    raise ValidationError(
                        f"categorical shares sum to {total}, expected 1 ± {SHARE_SUM_TOL}"
                    )
                if any(s < 0 for s in self.categories.values()):
                    raise ValidationError("categorical share below 0")
        else:
            if self.support > 0 and not self.sample:
                raise ValidationError("continuous snapshot with support > 0 but no sample")
        return self

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind, "support": self.support}
        if self.kind == "categorical":
            d["categories"] = dict(self.categories or {})
        else:
            d["sample"] = list(self.sample or ())
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "DistributionSnapshot":
        kind = str(d.get("kind", ""))
        if kind == "categorical":
            cats = {str(k): float(v) for k, v in dict(d.get("categories") or {}).items()}
            snap = cls(kind=kind, categories=cats, support=int(d.get("support", 0)))
        else:
            sample = tuple(sorted(float(v) for v in (d.get("sample") or [])))
            snap = cls(kind=kind, sample=sample, support=int(d.get("support") or len(sample)))
        return snap.validate()

    @classmethod
    def categorical_from_counts(cls, counts: Mapping[str, int]) -> "DistributionSnapshot":
        total = sum(counts.values())
        shares = {k: (v / total if total else 0.0) for k, v in counts.items()}
        return cls(kind="categorical", categories=shares, support=total).validate()

    @classmethod
    def continuous_from_values(cls, values: Iterable[float]) -> "DistributionSnapshot":
        sample = tuple(sorted(float(v) for v in values))
        return cls(kind="continuous", sample=sample, support=len(sample)).validate()


def _smoothed_shares(
    expected: Mapping[str, float], actual: Mapping[str, float], eps: float
) -> tuple[dict[str, float], dict[str, float]]:
    """Align both share maps on the category union, flooring absences at eps.

    Each side is renormalized after flooring so shares still sum to 1.
    """
    union = sorted(set(expected) | set(actual))
    e = {c: max(expected.get(c, 0.0), eps) for c in union}
    a = {c: max(actual.get(c, 0.0), eps) for c in union}
    e_total = sum(e.values())
    a_total = sum(a.values())
    return {c: v / e_total for c, v in e.items()}, {c: v / a_total for c, v in a.items()}


def psi(
    expected: DistributionSnapshot,
    actual: DistributionSnapshot,
    eps: float = SMOOTHING_EPS,
) -> float:
    """Population stability index of ``actual`` against ``expected`` shares.

    Sum over categories of (actual - expected) * ln(actual / expected);
    zero iff the smoothed distributions are identical.
    """
    if expected.kind != "categorical" or actual.kind != "categorical":
        raise ValidationError("psi requires categorical snapshots")
    if expected.support == 0 or actual.support == 0:
        raise DegenerateDistribution("psi undefined when either support is 0")
    e, a = _smoothed_shares(expected.categories or {}, actual.categories or {}, eps)
    return sum((a[c] - e[c]) * math.log(a[c] / e[c]) for c in e)


def psi_from_shares(
    expected: Mapping[str, float],
    actual: Mapping[str, float],
    eps: float = SMOOTHING_EPS,
) -> float:
    """PSI on already-normalized share maps (supports assumed positive)."""
    e, a = _smoothed_shares(expected, actual, eps)
    return sum((a[c] - e[c]) * math.log(a[c] / e[c]) for c in e)


def ks_statistic(baseline_sample: Sequence[float], live_sample: Sequence[float]) -> float:
    """Two-sample Kolmogorov-Smirnov statistic: max |ECDF_base - ECDF_live|."""
    if len(baseline_sample) == 0 or len(live_sample) == 0:
        raise DegenerateDistribution("ks undefined on an empty sample")
    xs = sorted(baseline_sample)
    ys = sorted(live_sample)
    nx, ny = len(xs), len(ys)
    i = j = 0
    d = 0.0
    while i < nx and j < ny:
        v = xs[i] if xs[i] <= ys[j] else ys[j]
        while i < nx and xs[i] <= v:
            i += 1
        while j < ny and ys[j] <= v:
            j += 1
        d = max(d, abs(i / nx - j / ny))
    # Tail where one sample is exhausted contributes |1 - k/n| <= current max.
    return d


@dataclass
class FeatureBaselines:
    """Named per-feature snapshots recorded at training time."""

    snapshots: dict[str, DistributionSnapshot] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {name: snap.to_dict() for name, snap in self.snapshots.items()}

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "FeatureBaselines":
        return cls(
            snapshots={
                str(name): DistributionSnapshot.from_dict(spec)  # type: ignore[arg-type]
                for name, spec in dict(d or {}).items()
            }
        )
