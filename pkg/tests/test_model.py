import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from pollsys.model import (
    Distribution,
    PeriodId,
    S,
    V,
    make_model,
    next_period,
    period_sequence,
    periods,
    prev_period,
    validate,
)

E1 = Distribution.exponential(1.0)


def two_queue(rates=None):
    rates = rates if rates is not None else [[0.5] * 4, [0.5] * 4]
    return make_model(("exhaustive", "exhaustive"), (E1, E1), (E1, E1), rates)


DISTS = [
    Distribution.exponential(0.7),
    Distribution.deterministic(1.3),
    Distribution.erlang(3, 2.0),
    Distribution.hyperexp2(0.3, 0.5, 2.5),
]


@pytest.mark.parametrize("d", DISTS, ids=lambda d: d.family)
def test_lst_at_zero_is_one(d):
    assert d.lst(0.0) == 1.0


@pytest.mark.parametrize("d", DISTS, ids=lambda d: d.family)
def test_lst_monotone_in_unit_interval(d):
    grid = np.linspace(0.0, 50.0, 400)
    vals = np.array([d.lst(w) for w in grid])
    assert np.all(vals > 0.0)
    assert np.all(vals <= 1.0)
    assert np.all(np.diff(vals) <= 1e-15)


@pytest.mark.parametrize("d", DISTS, ids=lambda d: d.family)
def test_lst_derivative_matches_mean(d):
    h = 1e-6
    approx = (d.lst(h) - d.lst(-h)) / (2.0 * h)
    assert abs(-approx - d.mean) <= 1e-6 * max(d.mean, 1.0)


@pytest.mark.parametrize("d", DISTS, ids=lambda d: d.family)
def test_variance_nonnegative(d):
    assert d.moment(2) >= d.moment(1) ** 2 - 1e-12


def test_point_mass_at_zero_allowed():
    z = Distribution.deterministic(0.0)
    assert z.mean == 0.0
    assert z.lst(3.7) == 1.0
    assert z.residual_mean == 0.0


def test_erlang_moments():
    d = Distribution.erlang(2, 2.0)  # two phases of mean 1
    assert d.moment(1) == pytest.approx(2.0)
    assert d.moment(2) == pytest.approx(6.0)  # k(k+1)/nu^2 with nu=1


def test_hyperexp_mean():
    d = Distribution.hyperexp2(0.25, 2.0, 1.0)
    assert d.mean == pytest.approx(0.25 * 2.0 + 0.75 * 1.0)


@given(hs.floats(min_value=0.05, max_value=20.0))
@settings(max_examples=30, deadline=None)
def test_exponential_lst_closed_form(mean):
    d = Distribution.exponential(mean)
    for w in (0.1, 1.0, 5.0):
        assert d.lst(w) == pytest.approx(1.0 / (1.0 + mean * w))


def test_validate_accepts_wellformed():
    assert validate(two_queue()) == []


def test_validate_rejects_zero_switchovers():
    z = Distribution.deterministic(0.0)
    m = make_model(("exhaustive",), (E1,), (z,), [[0.5, 0.5]])
    assert any("switch-over" in v for v in validate(m))


def test_validate_rejects_negative_rate():
    m = two_queue([[0.5, -0.1, 0.5, 0.5], [0.5] * 4])
    assert any("negative rate" in v for v in validate(m))


def test_period_sequence_examples():
    m = two_queue()
    assert [p.label for p in period_sequence(m, V(1))] == ["V1", "S1", "V2", "S2"]
    m3 = make_model(("gated",) * 3, (E1,) * 3, (E1,) * 3, [[0.1] * 6] * 3)
    assert [p.label for p in period_sequence(m3, S(2))] == \
        ["S2", "V3", "S3", "V1", "S1", "V2"]


def test_period_sequence_cyclic():
    m = two_queue()
    seq = period_sequence(m, S(2))
    again = period_sequence(m, seq[0])
    assert seq == again
    # walking 2N steps returns to start
    p = V(2)
    for _ in range(2 * m.n):
        p = next_period(m, p)
    assert p == V(2)


def test_next_prev_inverse():
    m = make_model(("gated",) * 3, (E1,) * 3, (E1,) * 3, [[0.1] * 6] * 3)
    for p in periods(3):
        assert prev_period(m, next_period(m, p)) == p


def test_period_label_roundtrip():
    for p in periods(4):
        assert PeriodId.parse(p.label) == p
