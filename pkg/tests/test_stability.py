import numpy as np
import pytest

from pollsys.model import Distribution, StrategyProfile, make_model
from pollsys.stability import load_matrix, stability_report
from pollsys.strategy import apply_strategy

E1 = Distribution.exponential(1.0)
LAM = 3.0 / 5.0


def three_queue_template(b1_mean=1.0):
    b1 = Distribution.exponential(b1_mean) if b1_mean > 0 else \
        Distribution.deterministic(0.0)
    return make_model(("exhaustive",) * 3, (b1, E1, E1), (E1,) * 3,
                      [[0.0] * 6] * 3)


def test_constant_rates_reduce_to_load_sum():
    rates = [[0.2] * 4, [0.35] * 4]
    m = make_model(("exhaustive", "gated"), (E1, E1), (E1, E1), rates)
    rep = stability_report(m)
    assert rep.stable
    # classical condition: sum of loads < 1
    assert rep.margin == pytest.approx(0.2 + 0.35 - 1.0, abs=1e-9)


def test_switchover_rates_do_not_matter():
    base = [[0.3, 0.0, 0.3, 0.0], [0.3, 0.0, 0.3, 0.0]]
    loud = [[0.3, 9.0, 0.3, 9.0], [0.3, 9.0, 0.3, 9.0]]
    m1 = make_model(("exhaustive",) * 2, (E1, E1), (E1, E1), base)
    m2 = make_model(("exhaustive",) * 2, (E1, E1), (E1, E1), loud)
    assert stability_report(m1).margin == pytest.approx(
        stability_report(m2).margin, abs=1e-12)


def test_diagonal_strategy_margin():
    # routing everyone to the queue being visited gives a diagonal load
    # matrix with eigenvalues rate * E[B_i]
    for b1 in (0.5, 1.5, 1.8):
        m = apply_strategy(three_queue_template(b1),
                           StrategyProfile((1, 2, 2, 3, 3, 1)), LAM)
        rep = stability_report(m)
        expected = max(LAM * b1, LAM) - 1.0
        assert rep.margin == pytest.approx(expected, abs=1e-9)
        assert rep.stable == (b1 < 5.0 / 3.0)


def test_strategies_avoiding_queue1_always_stable():
    for targets in ((2, 2, 2, 3, 3, 1), (0, 2, 2, 3, 3, 2)):
        for b1 in (0.5, 3.0, 10.0):
            m = apply_strategy(three_queue_template(b1),
                               StrategyProfile(targets), LAM)
            rep = stability_report(m)
            assert rep.stable
            assert 1 not in rep.retained_queues or targets[0] == 2


def test_never_joined_queue_deleted():
    rates = [[0.4] * 4, [0.0] * 4]
    m = make_model(("exhaustive",) * 2, (E1, E1), (E1, E1), rates)
    rep = stability_report(m)
    assert rep.retained_queues == (1,)
    assert rep.stable


def test_all_rates_zero():
    m = make_model(("exhaustive",) * 2, (E1, E1), (E1, E1), [[0.0] * 4] * 2)
    rep = stability_report(m)
    assert rep.stable
    assert rep.retained_queues == ()
    assert rep.margin == -1.0


def test_load_matrix_entries():
    b = (Distribution.exponential(2.0), Distribution.exponential(0.5))
    rates = [[0.1, 9.0, 0.3, 9.0], [0.2, 9.0, 0.4, 9.0]]
    m = make_model(("exhaustive",) * 2, b, (E1, E1), rates)
    r = load_matrix(m)
    assert r == pytest.approx(np.array([[0.2, 0.6], [0.1, 0.2]]))


def test_margin_continuity():
    # small rate perturbations move the margin by a comparable amount
    base = [[0.3, 0.0, 0.2, 0.0], [0.1, 0.0, 0.4, 0.0]]
    m = make_model(("exhaustive",) * 2, (E1, E1), (E1, E1), base)
    m0 = stability_report(m).margin
    for eps in (1e-4, 1e-3):
        pert = [[0.3 + eps, 0.0, 0.2, 0.0], [0.1, 0.0, 0.4, 0.0]]
        mp = make_model(("exhaustive",) * 2, (E1, E1), (E1, E1), pert)
        assert abs(stability_report(mp).margin - m0) <= 10.0 * eps


def test_zero_visit_retained_queue_flagged():
    # queue 2 only receives arrivals during its own visit, whose length solves
    # to zero: retained, but the spectral condition assumes E[V] > 0
    rates = [[0.3, 0.3, 0.3, 0.3], [0.0, 0.0, 0.3, 0.0]]
    m = make_model(("exhaustive",) * 2, (E1, E1), (E1, E1), rates)
    rep = stability_report(m)
    assert 2 in rep.retained_queues
    assert 2 in rep.zero_visit_queues
    assert not rep.supported
