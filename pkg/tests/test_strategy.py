import numpy as np
import pytest

from pollsys.model import Distribution, StrategyProfile, make_model
from pollsys.strategy import (
    apply_strategy,
    canonicalize,
    enumerate_profiles,
    mean_sojourn,
    optimize,
    sweep,
    sweep_values,
)

E1 = Distribution.exponential(1.0)
LAM = 3.0 / 5.0


def template(b1_mean=1.0):
    b1 = Distribution.exponential(b1_mean) if b1_mean > 0 else \
        Distribution.deterministic(0.0)
    return make_model(("exhaustive",) * 3, (b1, E1, E1), (E1,) * 3,
                      [[0.0] * 6] * 3)


def test_apply_strategy_rate_placement():
    m = apply_strategy(template(), StrategyProfile((1, 2, 2, 3, 3, 1)), LAM)
    assert m.rate_matrix[0][0] == LAM      # queue 1 during V_1
    assert m.rate_matrix[1][1] == LAM      # queue 2 during S_1
    assert m.rate_matrix[0][5] == LAM      # queue 1 during S_3
    assert m.rate_matrix.sum() == pytest.approx(6 * LAM)


def test_apply_strategy_validation():
    with pytest.raises(ValueError):
        apply_strategy(template(), StrategyProfile((1, 2, 2, 3)), LAM)
    with pytest.raises(ValueError):
        apply_strategy(template(), StrategyProfile((4, 2, 2, 3, 3, 1)), LAM)


def test_canonicalize_drops_unjoined_visit_targets():
    # nobody joins queue 3, so V_3 has zero length and its target is moot;
    # dropping it may orphan further queues, to a fixed point
    t = template()
    c = canonicalize(t, StrategyProfile((1, 2, 1, 1, 2, 1)))
    # queue 3 is never joined, so the V_3 target is moot
    assert c.targets == (1, 2, 1, 1, 0, 1)
    # queue 2 only: V_1 and V_3 both collapse
    c2 = canonicalize(t, StrategyProfile((2, 2, 2, 2, 2, 2)))
    assert c2.targets == (0, 2, 2, 2, 0, 2)
    # a queue joined only during its own visit keeps its target (the visit
    # length is decided by the model, not by the relabeling)
    c3 = canonicalize(t, StrategyProfile((1, 2, 1, 1, 3, 1)))
    assert c3.targets == (1, 2, 1, 1, 3, 1)


def test_canonical_profile_count():
    assert len(enumerate_profiles(template())) == 633


def test_mean_sojourn_unstable_is_inf():
    m = apply_strategy(template(2.0), StrategyProfile((1, 1, 1, 1, 1, 1)), LAM)
    assert mean_sojourn(m) == float("inf")


def test_optimum_at_unit_service_mean():
    profile, value = optimize(template(1.0), LAM)
    assert profile.targets == (1, 2, 2, 3, 3, 1)
    assert value == pytest.approx(3.5, abs=1e-9)


def test_optimum_at_zero_service_mean():
    profile, value = optimize(template(0.0), LAM)
    assert profile.targets == (1, 1, 0, 1, 0, 1)


def test_worst_stable_profile():
    profile, value = optimize(template(2.0), LAM, objective="maximize")
    assert profile.targets == (3, 1, 0, 1, 1, 1)
    assert value == pytest.approx(22.5871338, abs=1e-6)


def test_optimize_rejects_bad_objective():
    with pytest.raises(ValueError):
        optimize(template(), LAM, objective="median")


def test_sweep_refines_threshold():
    res = sweep(template(), LAM, [0.3, 0.5], refine_tol=0.005)
    assert res.best_profile[0].targets == (1, 1, 0, 1, 0, 1)
    assert res.best_profile[1].targets == (1, 2, 1, 1, 0, 1)
    assert len(res.thresholds) == 1
    assert res.thresholds[0] == pytest.approx(0.411, abs=0.01)


def test_sweep_values_shape_and_consistency():
    profiles = [StrategyProfile((1, 2, 2, 3, 3, 1)),
                StrategyProfile((2, 2, 2, 3, 3, 1))]
    vals = sweep_values(template(), LAM, [0.5, 1.0], profiles)
    assert vals.shape == (2, 2)
    m = apply_strategy(template(1.0), profiles[0], LAM)
    assert vals[1, 0] == pytest.approx(mean_sojourn(m), abs=1e-12)
