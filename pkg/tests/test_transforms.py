import math

import numpy as np
import pytest

from pollsys.model import Distribution, S, V, make_model
from pollsys.transforms import (
    Transform,
    busy_period_lst,
    marginal_boundary_pgf,
    period_beginning_pgf,
    psi_recursion,
    rotate_model,
    subtype_index,
    subtype_visit_pgf,
    theta_lst,
    transform_moment,
    visit_beginning_pgf,
    visit_subperiods,
)

E1 = Distribution.exponential(1.0)


def example_two_queue():
    # two exhaustive queues, exp(1) everywhere, queue 1 not joined during V_2
    rates = [[0.5, 0.5, 0.0, 0.5], [0.5, 0.5, 0.5, 0.5]]
    return make_model(("exhaustive",) * 2, (E1, E1), (E1, E1), rates)


def test_busy_period_quadratic_root():
    # exp(1) service at rate 1/2: pi solves pi = 1/(1 + w + (1-pi)/2)
    m = make_model(("exhaustive",), (E1,), (E1,), [[0.5, 0.5]])
    pi = busy_period_lst(m, 1, 1.0)
    assert pi == pytest.approx(2.5 - math.sqrt(4.25), abs=1e-13)
    # and it satisfies its own equation
    assert pi == pytest.approx(E1.lst(1.0 + 0.5 * (1.0 - pi)), abs=1e-13)


def test_busy_period_mean():
    # E[busy period] = E[B] / (1 - rho)
    for lam, bm in ((0.3, 1.0), (0.5, 1.5), (0.8, 0.9)):
        b = Distribution.exponential(bm)
        m = make_model(("exhaustive",), (b,), (E1,), [[lam, lam]])
        t = Transform(lambda w: busy_period_lst(m, 1, w), "lst")
        mean, _ = transform_moment(t, 1)
        assert mean == pytest.approx(bm / (1.0 - lam * bm), rel=1e-6)


def test_busy_period_zero_rate_is_service():
    m = make_model(("exhaustive",), (E1,), (E1,), [[0.0, 0.4]])
    for w in (0.0, 0.3, 2.0):
        assert busy_period_lst(m, 1, w) == E1.lst(w)


def test_busy_period_rejects_saturated_queue():
    m = make_model(("exhaustive",), (E1,), (E1,), [[1.5, 0.0]])
    with pytest.raises(ValueError):
        busy_period_lst(m, 1, 0.5)


def test_theta_gated_is_one_service():
    m = make_model(("gated",), (E1,), (E1,), [[0.5, 0.5]])
    assert theta_lst(m, 1, 0.7) == E1.lst(0.7)


def test_period_pgf_at_ones():
    m = example_two_queue()
    for p in (V(1), S(1), V(2), S(2)):
        assert period_beginning_pgf(m, p, [1.0, 1.0]) == pytest.approx(1.0)


def test_period_pgf_bounded_and_monotone():
    m = example_two_queue()
    zs = np.linspace(0.0, 1.0, 9)
    vals = [period_beginning_pgf(m, V(1), [z, 1.0]) for z in zs]
    assert all(0.0 < v <= 1.0 + 1e-12 for v in vals)
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_marginal_boundary_pgf_matches_joint():
    m = example_two_queue()
    for z in (0.3, 0.8):
        assert marginal_boundary_pgf(m, 2, S(1), z) == pytest.approx(
            period_beginning_pgf(m, S(1), [1.0, z]), abs=1e-12)


def test_exhaustive_visit_ends_empty():
    # at the end of an exhaustive visit the served queue is empty, so the
    # switch-over beginning PGF does not depend on that queue's argument
    m = example_two_queue()
    a = period_beginning_pgf(m, S(1), [0.2, 0.6])
    b = period_beginning_pgf(m, S(1), [0.9, 0.6])
    assert a == pytest.approx(b, abs=1e-12)


def test_subtype_pgf_collapses_to_base():
    # identifying all subtypes of a queue recovers the plain joint PGF
    for disc in ("exhaustive", "gated"):
        rates = [[0.4, 0.3, 0.1, 0.2], [0.2, 0.2, 0.3, 0.1]]
        m = make_model((disc,) * 2, (E1, E1), (E1, E1), rates)
        z = np.array([0.7, 0.4])
        full = np.empty(2 * 2 * 2)
        for j in (1, 2):
            for p in (V(1), S(1), V(2), S(2)):
                full[subtype_index(m, j, p)] = z[j - 1]
        anchor = visit_subperiods(m, 1)[0]
        got = subtype_visit_pgf(m, 1, anchor, full)
        want = visit_beginning_pgf(m, 1, z)
        assert got == pytest.approx(want, abs=1e-10)


def test_subperiod_order():
    m = example_two_queue()
    assert [p.label for p in visit_subperiods(m, 1)] == ["S1", "V2", "S2", "V1"]
    g = make_model(("gated",) * 2, (E1, E1), (E1, E1), [[0.3] * 4] * 2)
    assert [p.label for p in visit_subperiods(g, 2)] == ["V2", "S2", "V1", "S1"]


def test_rotation_invariance():
    rates = [[0.4, 0.1, 0.2, 0.3], [0.1, 0.3, 0.2, 0.1]]
    m = make_model(("exhaustive", "gated"), (E1, E1), (E1, E1), rates)
    r = rotate_model(m, 2)
    z = [0.6, 0.9]
    # queue 2 of m is queue 1 of r; argument components swap accordingly
    assert visit_beginning_pgf(m, 2, z) == pytest.approx(
        visit_beginning_pgf(r, 1, [z[1], z[0]]), abs=1e-12)
    assert rotate_model(r, 2).rates == m.rates


def test_psi_at_zero():
    m = example_two_queue()
    for start in (1, 2):
        assert psi_recursion(m, start, "visit", 0.0) == pytest.approx(0.0)
        assert psi_recursion(m, start, "switchover", 0.0) == pytest.approx(0.0)


def test_psi_last_index_is_identity():
    m = example_two_queue()
    for w in (0.2, 1.0):
        assert psi_recursion(m, 2, "visit", w) == w
        assert psi_recursion(m, 2, "switchover", w) == w


def test_transform_moment_known_lst():
    d = Distribution.erlang(2, 3.0)
    t = Transform(d.lst, "lst")
    m1, e1 = transform_moment(t, 1)
    m2, e2 = transform_moment(t, 2)
    assert m1 == pytest.approx(d.moment(1), rel=1e-8)
    assert m2 == pytest.approx(d.moment(2), rel=1e-6)
    assert e1 < 1e-6 and e2 < 1e-4


def test_transform_moment_known_pgf():
    # geometric-ish PGF of a Poisson(2) count: exp(2(z-1))
    t = Transform(lambda z: math.exp(2.0 * (z - 1.0)), "pgf")
    assert t.moment(1) == pytest.approx(2.0, rel=1e-8)
    assert t.moment(2) == pytest.approx(4.0, rel=1e-6)  # factorial moment
