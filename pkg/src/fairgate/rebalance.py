"""Imbalanced-class resampling with a demographic attribute as the label.

SMOTE-style synthetic oversampling interpolates between a real point and one
of its k nearest same-class neighbours; Near-Miss (version 1) undersampling
retains the majority points with smallest mean distance to the minority.
Distances are Euclidean on the raw vectors; callers pre-scale features,
since silent scaling would change neighbour structure.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import BadK, TooFewSamples, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_K = 5


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    class_tag: str

    def to_dict(self) -> dict:
        return {"values": list(self.values), "class_tag": self.class_tag}


@dataclass(frozen=True)
class DatasetRow:
    """One JSON-lines dataset row; synthetic rows are provenance-flagged."""

    values: tuple[float, ...]
    subgroup: Mapping[str, str] = field(default_factory=dict)
    label: Optional[int] = None
    synthetic: bool = False

    def to_dict(self) -> dict:
        return {
            "values": list(self.values),
            "subgroup": dict(self.subgroup),
            "label": self.label,
            "synthetic": self.synthetic,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "DatasetRow":
        return cls(
            values=tuple(float(v) for v in (d.get("values") or [])),
            subgroup={str(k): str(v) for k, v in dict(d.get("subgroup") or {}).items()},
            label=int(d["label"]) if d.get("label") is not None else None,  # type: ignore[arg-type]
            synthetic=bool(d.get("synthetic", False)),
        )


@dataclass(frozen=True)
class ResamplePlan:
    strategy: str  # "smote" | "near_miss"
    target: Mapping[str, int]  # class tag -> target count
    k: int = DEFAULT_K
    seed: int = 0

    def validate(self, current: Mapping[str, int]) -> "ResamplePlan":
        if self.strategy not in ("smote", "near_miss"):
            raise ValidationError(f"unknown strategy {self.strategy!r}")
        if self.k < 1:
            raise BadK(f"k must be >= 1, got {self.k}")
        for tag, count in self.target.items():
            if count < 0:
                raise ValidationError(f"target for {tag!r} is negative")
            have = current.get(tag, 0)
            if self.strategy == "smote" and count < have:
                raise ValidationError(
                    f"smote target {count} for {tag!r} below current count {have}"
                )
            if self.strategy == "near_miss" and count > have:
                raise ValidationError(
                    f"near_miss target {count} for {tag!r} above current count {have}"
                )
        return self


def _as_matrix(vectors: Sequence[Sequence[float]]) -> np.ndarray:
    matrix = np.asarray(vectors, dtype=float)
    if matrix.ndim != 2:
        raise ValidationError("vectors must share dimensionality")
    if not np.all(np.isfinite(matrix)):
        raise ValidationError("vectors contain non-finite values")
    return matrix


def _knn_indices(points: np.ndarray, k: int) -> np.ndarray:
    """Index matrix of each point's k nearest same-set neighbours (self excluded).

    Ties resolve to the lower index (stable sort on distance).
    """
    deltas = points[:, None, :] - points[None, :, :]
    distances = np.sqrt((deltas**2).sum(axis=2))
    np.fill_diagonal(distances, np.inf)
    order = np.argsort(distances, axis=1, kind="stable")
    return order[:, :k]


def smote_synthetics(
    minority: np.ndarray, target_count: int, k: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Raw SMOTE: returns (synthetic matrix, source row index per synthetic).

    Each synthetic is x + u * (x_nn - x) with u ~ U[0, 1] from the seeded
    generator; base points cycle through the minority in input order.
    """
    n = len(minority)
    if n < 2:
        raise TooFewSamples(f"smote needs at least 2 minority points, got {n}")
    if k < 1 or k > n - 1:
        raise BadK(f"k must be in [1, {n - 1}], got {k}")
    needed = target_count - n
    if needed < 0:
        raise TooFewSamples(
            f"target_count {target_count} below current minority size {n}"
        )
    if needed == 0:
        return np.empty((0, minority.shape[1])), np.empty(0, dtype=int)

    neighbours = _knn_indices(minority, k)
    rng = np.random.default_rng(seed)
    source = np.arange(needed) % n
    picked = rng.integers(0, k, size=needed)
    u = rng.random(needed)
    base = minority[source]
    nn = minority[neighbours[source, picked]]
    return base + u[:, None] * (nn - base), source


def smote(
    minority: Sequence[FeatureVector], target_count: int, k: int = DEFAULT_K, seed: int = 0
) -> list[FeatureVector]:
    """Synthetic minority vectors; deterministic given (inputs, k, seed)."""
    if not minority:
        raise TooFewSamples("smote needs at least 2 minority points, got 0")
    tags = {v.class_tag for v in minority}
    if len(tags) > 1:
        raise ValidationError(f"minority set spans multiple classes: {sorted(tags)}")
    matrix = _as_matrix([v.values for v in minority])
    synth, _ = smote_synthetics(matrix, target_count, k, seed)
    tag = minority[0].class_tag
    return [
        FeatureVector(values=tuple(float(x) for x in row), class_tag=tag)
        for row in synth
    ]


def near_miss_indices(
    majority: np.ndarray, minority: np.ndarray, target_count: int, k: int
) -> np.ndarray:
    """Indices (input order) of retained majority points under Near-Miss v1."""
    n_major, n_minor = len(majority), len(minority)
    if target_count > n_major:
        raise TooFewSamples(
            f"target_count {target_count} exceeds majority size {n_major}"
        )
    if n_minor < 1:
        raise TooFewSamples("near_miss needs at least 1 minority point")
    if k < 1 or k > n_minor:
        raise BadK(f"k must be in [1, {n_minor}], got {k}")
    deltas = majority[:, None, :] - minority[None, :, :]
    distances = np.sqrt((deltas**2).sum(axis=2))
    distances.sort(axis=1)
    mean_nearest = distances[:, :k].mean(axis=1)
    # Stable argsort breaks ties by input order.
    order = np.argsort(mean_nearest, kind="stable")
    return np.sort(order[:target_count])


def near_miss(
    majority: Sequence[FeatureVector],
    minority: Sequence[FeatureVector],
    target_count: int,
    k: int = DEFAULT_K,
) -> list[FeatureVector]:
    """Retained majority subset, in input order; no vector is mutated."""
    major = _as_matrix([v.values for v in majority]) if majority else np.empty((0, 0))
    minor = _as_matrix([v.values for v in minority]) if minority else np.empty((0, 0))
    if len(majority) == 0:
        if target_count > 0:
            raise TooFewSamples("empty majority set")
        return []
    keep = near_miss_indices(major, minor, target_count, k)
    return [majority[i] for i in keep]


@dataclass
class RebalanceResult:
    """Rebalanced rows plus before/after class-share metadata for audit."""

    rows: list[DatasetRow]
    attribute: str
    before: dict[str, int]
    after: dict[str, int]
    synthetic_count: int

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "before": dict(self.before),
            "after": dict(self.after),
            "synthetic_count": self.synthetic_count,
            "rows": [r.to_dict() for r in self.rows],
        }


def _clamped_k(k: int, limit: int, context: str) -> int:
    if limit < 1:
        return k
    if k > limit:
        logger.warning("clamping k from %d to %d for %s", k, limit, context)
        return limit
    return k


def _class_counts(rows: Sequence[DatasetRow], attribute: str) -> dict[str, int]:
    counts: dict[str, int] = {}
    for row in rows:
        tag = row.subgroup.get(attribute, "(unknown)")
        counts[tag] = counts.get(tag, 0) + 1
    return counts


def _check_dataset(rows: Sequence[DatasetRow]) -> None:
    if not rows:
        return
    width = len(rows[0].values)
    for row in rows:
        if len(row.values) != width:
            raise ValidationError(
                f"vectors must share dimensionality: saw {width} and {len(row.values)}"
            )
    _as_matrix([r.values for r in rows])


def rebalance_by_subgroup(
    rows: Sequence[DatasetRow], attribute: str, plan: ResamplePlan
) -> RebalanceResult:
    """Apply one resample plan with the demographic attribute as class tag.

    Synthetic rows copy the source row's task label and subgroup map and are
    flagged synthetic.  Output is shuffled with plan.seed.
    """
    _check_dataset(rows)
    before = _class_counts(rows, attribute)
    plan.validate(before)
    by_class: dict[str, list[DatasetRow]] = {}
    for row in rows:
        by_class.setdefault(row.subgroup.get(attribute, "(unknown)"), []).append(row)

    out: list[DatasetRow] = []
    synthetic_count = 0
    for tag in sorted(by_class):
        members = by_class[tag]
        target = plan.target.get(tag, len(members))
        if plan.strategy == "smote" and target > len(members):
            matrix = _as_matrix([r.values for r in members])
            k = _clamped_k(plan.k, len(members) - 1, f"class {tag!r}")
            synth, source = smote_synthetics(matrix, target, k, plan.seed)
            out.extend(members)
            for values, src in zip(synth, source):
                origin = members[int(src)]
                out.append(
                    DatasetRow(
                        values=tuple(float(x) for x in values),
                        subgroup=dict(origin.subgroup),
                        label=origin.label,
                        synthetic=True,
                    )
                )
            synthetic_count += len(synth)
        elif plan.strategy == "near_miss" and target < len(members):
            others = [r for r in rows if r.subgroup.get(attribute, "(unknown)") != tag]
            if not others:
                raise TooFewSamples(f"no reference points outside class {tag!r}")
            major = _as_matrix([r.values for r in members])
            minor = _as_matrix([r.values for r in others])
            k = _clamped_k(plan.k, len(others), f"class {tag!r}")
            keep = near_miss_indices(major, minor, target, k)
            out.extend(members[i] for i in keep)
        else:
            out.extend(members)

    rng = np.random.default_rng(plan.seed)
    shuffled = [out[i] for i in rng.permutation(len(out))]
    return RebalanceResult(
        rows=shuffled,
        attribute=attribute,
        before=before,
        after=_class_counts(shuffled, attribute),
        synthetic_count=synthetic_count,
    )


def equalize_by_subgroup(
    rows: Sequence[DatasetRow],
    attribute: str,
    match_majority: bool = False,
    k: int = DEFAULT_K,
    seed: int = 0,
) -> RebalanceResult:
    """Equalize class counts across the attribute's categories.

    With ``match_majority`` every class is oversampled up to the largest
    class.  Without it, classes meet at total/n_classes: larger classes are
    undersampled via Near-Miss, smaller ones oversampled via SMOTE, so the
    row count is preserved when it divides evenly.
    """
    _check_dataset(rows)
    before = _class_counts(rows, attribute)
    if not before:
        return RebalanceResult(rows=list(rows), attribute=attribute, before={}, after={}, synthetic_count=0)
    if match_majority:
        peak = max(before.values())
        targets = {tag: peak for tag in before}
    else:
        base, remainder = divmod(len(rows), len(before))
        by_size = sorted(before, key=lambda t: (-before[t], t))
        targets = {tag: base + (1 if i < remainder else 0) for i, tag in enumerate(by_size)}

    down = {t: c for t, c in targets.items() if c < before[t]}
    up = {t: c for t, c in targets.items() if c > before[t]}
    current = list(rows)
    synthetic_count = 0
    if down:
        result = rebalance_by_subgroup(
            current, attribute, ResamplePlan("near_miss", down, k=k, seed=seed)
        )
        current = result.rows
    if up:
        result = rebalance_by_subgroup(
            current, attribute, ResamplePlan("smote", up, k=k, seed=seed)
        )
        current = result.rows
        synthetic_count = result.synthetic_count

    return RebalanceResult(
        rows=current,
        attribute=attribute,
        before=before,
        after=_class_counts(current, attribute),
        synthetic_count=synthetic_count,
    )
