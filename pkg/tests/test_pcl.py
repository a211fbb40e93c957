import numpy as np
import pytest

from pollsys.model import Distribution, make_model
from pollsys.mva import solve_mva
from pollsys.pcl import (
    CASE1,
    CASE2,
    NOT_APPLICABLE,
    ancestor_probabilities,
    pcl_case,
    pcl_verify,
    total_work,
)

E1 = Distribution.exponential(1.0)
EH = Distribution.exponential(0.5)


def classical_weighted_wait(model):
    """Weighted waiting-time sum for constant arrival rates, from first
    principles (M/G/1 decomposition with a compound switch-over vacation)."""
    n = model.n
    lam = np.array([model.rate_matrix[i][0] for i in range(n)])
    eb = np.array([d.mean for d in model.service])
    rb = np.array([d.residual_mean for d in model.service])
    rho_i = lam * eb
    rho = rho_i.sum()
    es = np.array([d.mean for d in model.switchover])
    es2 = np.array([d.moment(2) for d in model.switchover])
    s_tot = es.sum()
    # residual mean of the total per-cycle switch-over time
    var = (es2 - es**2).sum()
    r_s = (var + s_tot**2) / (2.0 * s_tot)
    out = rho * np.sum(rho_i * rb) / (1.0 - rho) + rho * r_s
    out += s_tot / (2.0 * (1.0 - rho)) * (rho**2 - np.sum(rho_i**2))
    for i in range(n):
        if model.disciplines[i] == "gated":
            out += rho_i[i] ** 2 * s_tot / (1.0 - rho)
    return out


def test_case_classification():
    const = [[0.2] * 4, [0.3] * 4]
    assert pcl_case(make_model(("exhaustive",) * 2, (E1, EH), (E1, E1),
                               const)) == CASE1
    # equal service, constant visit column totals, varying split
    r2 = [[0.3, 0.1, 0.2, 0.4], [0.2, 0.3, 0.3, 0.1]]
    assert pcl_case(make_model(("exhaustive",) * 2, (E1, E1), (E1, E1),
                               r2)) == CASE2
    # neither: unequal service and varying per-queue visit rates
    assert pcl_case(make_model(("exhaustive",) * 2, (E1, EH), (E1, E1),
                               r2)) == NOT_APPLICABLE


def test_not_applicable_refused():
    r = [[0.3, 0.1, 0.2, 0.4], [0.2, 0.3, 0.3, 0.1]]
    m = make_model(("exhaustive",) * 2, (E1, EH), (E1, E1), r)
    with pytest.raises(ValueError):
        pcl_verify(m)


@pytest.mark.parametrize("disc", ["exhaustive", "gated"])
def test_constant_rates_match_classical_formula(disc):
    m = make_model((disc,) * 2, (E1, E1), (E1, E1), [[0.3] * 4, [0.3] * 4])
    s = pcl_verify(m)
    assert s.case_tag == CASE1
    assert s.gap < 1e-12
    assert s.rhs == pytest.approx(classical_weighted_wait(m), abs=1e-10)


def test_case1_with_switchover_rate_variation():
    det = Distribution.deterministic(0.8)
    r = [[0.3, 0.1, 0.3, 0.4], [0.2, 0.5, 0.2, 0.05]]
    m = make_model(("exhaustive", "gated"), (E1, EH), (EH, det), r)
    s = pcl_verify(m)
    assert s.case_tag == CASE1
    assert s.gap < 1e-10
    assert s.simplified_rhs is None


def test_case2_gap_and_simplified_condition():
    # constant visit totals but switch totals differ from them: no short form
    r2 = [[0.3, 0.1, 0.2, 0.3], [0.2, 0.3, 0.3, 0.1]]
    m2 = make_model(("exhaustive",) * 2, (E1, E1), (E1, E1), r2)
    s2 = pcl_verify(m2)
    assert s2.gap < 1e-10 and s2.simplified_rhs is None
    # constant total rate over every period: short form agrees exactly
    r3 = [[0.3, 0.2, 0.1, 0.4], [0.2, 0.3, 0.4, 0.1]]
    det = Distribution.deterministic(0.7)
    for disc in (("exhaustive",) * 2, ("gated", "exhaustive"), ("gated",) * 2):
        m3 = make_model(disc, (E1, E1), (EH, det), r3)
        s3 = pcl_verify(m3)
        assert s3.case_tag == CASE2
        assert s3.gap < 1e-10
        assert s3.simplified_rhs == pytest.approx(s3.rhs, abs=1e-12)


def test_ancestor_probabilities_sum_to_one():
    r = [[0.2] * 4, [0.3] * 4]
    m = make_model(("exhaustive",) * 2, (E1, EH), (E1, E1), r)
    p = ancestor_probabilities(m)
    assert p.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(p > 0.0)


def test_total_work_balance():
    r = [[0.3, 0.1, 0.3, 0.4], [0.2, 0.5, 0.2, 0.05]]
    det = Distribution.deterministic(0.8)
    m = make_model(("exhaustive", "gated"), (E1, EH), (EH, det), r)
    via_mix, via_queues = total_work(m)
    assert via_mix == pytest.approx(via_queues, abs=1e-9)


def test_reuses_precomputed_mva():
    m = make_model(("exhaustive",) * 2, (E1, E1), (E1, E1),
                   [[0.3] * 4, [0.3] * 4])
    sol = solve_mva(m)
    s1 = pcl_verify(m, sol)
    s2 = pcl_verify(m)
    assert s1.lhs == pytest.approx(s2.lhs, abs=1e-14)
    assert s1.rhs == pytest.approx(s2.rhs, abs=1e-14)
