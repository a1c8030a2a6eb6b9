from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from fairgate.distributions import (
    DistributionSnapshot,
    ks_statistic,
    psi,
    psi_from_shares,
)
from fairgate.errors import DegenerateDistribution, ValidationError


def snap(shares: dict, support: int = 1000) -> DistributionSnapshot:
    return DistributionSnapshot(kind="categorical", categories=shares, support=support)


def test_psi_identical_distributions_is_zero():
    assert psi(snap({"a": 0.5, "b": 0.5}), snap({"a": 0.5, "b": 0.5})) == pytest.approx(0.0, abs=1e-12)


def test_psi_paper_shift_value():
    # Direct evaluation of the formula on the 95/5 -> 89/11 shares.
    value = psi(snap({"a": 0.95, "b": 0.05}), snap({"a": 0.89, "b": 0.11}))
    expected = (0.89 - 0.95) * math.log(0.89 / 0.95) + (0.11 - 0.05) * math.log(0.11 / 0.05)
    assert value == pytest.approx(expected, abs=1e-12)
    assert value == pytest.approx(0.0512, abs=1e-4)


def test_psi_half_to_ninety_ten():
    value = psi(snap({"a": 0.5, "b": 0.5}), snap({"a": 0.9, "b": 0.1}))
    expected = 0.4 * math.log(1.8) + (-0.4) * math.log(0.2)
    assert value == pytest.approx(expected, abs=1e-12)
    assert value == pytest.approx(0.879, abs=1e-3)


def test_psi_degenerate_support():
    with pytest.raises(DegenerateDistribution):
        psi(snap({"a": 1.0}, support=0), snap({"a": 1.0}))


def test_psi_novel_category_is_finite_and_large():
    # A category present live but absent at training must exceed the alert bar.
    value = psi(snap({"a": 1.0}), snap({"a": 0.8, "new": 0.2}))
    assert math.isfinite(value)
    assert value > 0.25


def test_categorical_share_sum_validated():
    with pytest.raises(ValidationError):
        DistributionSnapshot(
            kind="categorical", categories={"a": 0.9, "b": 0.2}, support=10
        ).validate()


@st.composite
def share_maps(draw):
    n = draw(st.integers(min_value=1, max_value=6))
    weights = draw(
        st.lists(st.floats(0.01, 10.0, allow_nan=False), min_size=n, max_size=n)
    )
    total = sum(weights)
    return {f"c{i}": w / total for i, w in enumerate(weights)}


@given(p=share_maps(), q=share_maps())
def test_psi_nonnegative_zero_iff_equal(p, q):
    value = psi_from_shares(p, q)
    assert value >= -1e-12
    same = psi_from_shares(p, p)
    assert same == pytest.approx(0.0, abs=1e-12)
    if set(p) == set(q) and all(abs(p[k] - q[k]) < 1e-15 for k in p):
        assert value == pytest.approx(0.0, abs=1e-9)


@given(p=share_maps(), q=share_maps())
def test_psi_asymmetric_in_general_but_detector_order_fixed(p, q):
    # Only checks both directions are finite; equality is not required.
    assert math.isfinite(psi_from_shares(p, q))
    assert math.isfinite(psi_from_shares(q, p))


# --- KS ---------------------------------------------------------------------

def test_ks_identical_samples_zero():
    assert ks_statistic([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0


def test_ks_disjoint_supports_is_one():
    assert ks_statistic([1, 2, 3], [10, 11, 12]) == 1.0


def test_ks_worked_example():
    # ECDFs enumerated at all 8 points give a max gap of 0.5.
    assert ks_statistic([1, 2, 3, 4], [3, 4, 5, 6]) == pytest.approx(0.5, abs=1e-12)


def test_ks_empty_sample_degenerate():
    with pytest.raises(DegenerateDistribution):
        ks_statistic([], [1.0])


@given(
    xs=st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=60),
    ys=st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=60),
)
def test_ks_matches_scipy_and_bounds(xs, ys):
    from scipy import stats

    value = ks_statistic(xs, ys)
    assert 0.0 <= value <= 1.0
    reference = stats.ks_2samp(xs, ys, method="asymp").statistic
    assert value == pytest.approx(reference, abs=1e-9)


@given(
    xs=st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=40),
    ys=st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=40),
)
def test_ks_invariant_under_monotone_relabeling(xs, ys):
    def relabel(v: float) -> float:
        return 3.0 * v + math.tanh(v)  # strictly increasing

    base = ks_statistic(xs, ys)
    mapped = ks_statistic([relabel(v) for v in xs], [relabel(v) for v in ys])
    assert mapped == pytest.approx(base, abs=1e-12)
