"""Pseudo-conservation law for the weighted mean waiting times.

A workload-decomposition argument yields a closed-form expression for
sum_i rho-bar_i E[W_i] whenever the work-arrival process has a fixed rate and
jump distribution during all visit periods.  Two sufficient cases are
recognised: per-queue visit rates constant across visits (case 1), or total
visit rate constant with identically distributed service times (case 2).
Because the law is an analytic identity, comparing it against the mean value
analysis output is a strong internal consistency check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GATED, PollingModel, S, V, validate
from .mva import MvaSolution, solve_mva

_RATE_TOL = 1e-12

CASE1 = "case1"
CASE2 = "case2"
NOT_APPLICABLE = "not-applicable"


@dataclass(frozen=True)
class WorkloadSummary:
    """Work levels, ancestor probabilities and both sides of the law."""

    y_switch: tuple[float, ...]   # E[work] at a random point of each S_i
    y_switch_mix: float           # length-weighted mixture over switch-overs
    y_visit: float                # E[work] at a random point of a visit
    ancestor_prob: tuple[float, ...]
    rho_v: float                  # work arrival rate during visit periods
    case_tag: str
    lhs: float                    # sum_i rho-bar_i E[W_i] from the MVA solve
    rhs: float                    # closed-form right-hand side
    simplified_rhs: float | None  # case-2 short form, when the total arrival
    #                               rate is constant over the whole cycle

    @property
    def gap(self) -> float:
        scale = max(abs(self.rhs), 1.0)
        return abs(self.lhs - self.rhs) / scale


def pcl_case(model: PollingModel) -> str:
    """Classify the model for applicability of the conservation law."""
    problems = validate(model)
    if problems:
        raise ValueError("invalid model: " + "; ".join(problems))
    n = model.n
    visit = model.rate_matrix[:, 0::2]
    if np.all(np.abs(visit - visit[:, [0]]) <= _RATE_TOL):
        return CASE1
    totals = visit.sum(axis=0)
    same_b = all(d == model.service[0] for d in model.service)
    if same_b and np.all(np.abs(totals - totals[0]) <= _RATE_TOL):
        return CASE2
    return NOT_APPLICABLE


def work_at_switchover(model: PollingModel, mva: MvaSolution, i: int) -> float:
    """Mean amount of work in the whole system at a random point of S_i.

    Residual build-up during the elapsed part of S_i, plus the work left
    behind at each visit ending, plus the work of each type accumulated
    between the end of its last visit and the start of S_i.
    """
    n = model.n
    eb = np.array([d.mean for d in model.service])
    es = np.array([d.mean for d in model.switchover])
    ev = np.asarray(mva.mean_visit)
    rs_i = model.switchover[i - 1].residual_mean
    total = 0.0
    for j in range(1, n + 1):
        total += model.rate(j, S(i)) * eb[j - 1] * rs_i
        if model.discipline(j) == GATED:
            total += model.rate(j, V(j)) * eb[j - 1] * ev[j - 1]
    for joff in range(i + 1, i + n):
        j = model.wrap(joff)
        for koff in range(joff, i + n):
            k = model.wrap(koff)
            k1 = model.wrap(koff + 1)
            total += model.rate(j, S(k)) * eb[j - 1] * es[k - 1]
            total += model.rate(j, V(k1)) * eb[j - 1] * ev[k1 - 1]
    return total


def ancestor_probabilities(model: PollingModel) -> np.ndarray:
    """Probability that the ancestor of a customer in service is of type i.

    Proportional to the rate at which type-i first customers arrive during
    switch-overs, weighted by their mean service time.
    """
    n = model.n
    es = np.array([d.mean for d in model.switchover])
    eb = np.array([d.mean for d in model.service])
    num = np.array([
        sum(model.rate(i, S(j)) * es[j - 1] for j in range(1, n + 1)) * eb[i - 1]
        for i in range(1, n + 1)
    ])
    denom = num.sum()
    if denom <= 0.0:
        raise ValueError("no work arrives during switch-overs: the "
                         "conservation-law framework degenerates")
    return num / denom


def _visit_work_rate(model: PollingModel):
    """(rho_v, E[R_B_v]): work arrival rate during visits and the residual
    mean of the generic visit-period service time (rate-weighted mixture)."""
    visit = model.rate_matrix[:, 0]  # case 1 / case 2 make any column valid
    lam_v = float(visit.sum())
    if lam_v == 0.0:
        return 0.0, 0.0
    m1 = sum(visit[i] * model.service[i].moment(1) for i in range(model.n))
    m2 = sum(visit[i] * model.service[i].moment(2) for i in range(model.n))
    return float(m1), m2 / (2.0 * m1) if m1 > 0.0 else 0.0


def pcl_verify(model: PollingModel, mva: MvaSolution | None = None) -> WorkloadSummary:
    """Evaluate both sides of the conservation law and report the gap."""
    tag = pcl_case(model)
    if tag == NOT_APPLICABLE:
        raise ValueError("model is outside both applicability cases; "
                         "refusing to evaluate the conservation law")
    if mva is None:
        mva = solve_mva(model)
    n = model.n
    eb = np.array([d.mean for d in model.service])
    es = np.array([d.mean for d in model.switchover])
    rb = np.array([d.residual_mean for d in model.service])
    es_total = float(es.sum())
    rho_bar = np.asarray(mva.eff_load)
    rho = float(rho_bar.sum())

    ys = np.array([work_at_switchover(model, mva, i) for i in range(1, n + 1)])
    ys_mix = float((es / es_total) @ ys)
    p = ancestor_probabilities(model)
    rho_v, r_bv = _visit_work_rate(model)
    if rho_v >= 1.0:
        raise ValueError("visit-period work arrival rate is >= 1")

    lhs = float(rho_bar @ np.asarray(mva.wait))
    rhs = (1.0 - rho) * ys_mix - float(rho_bar @ rb)
    y_visit = 0.0
    for i in range(1, n + 1):
        wsum = sum(model.rate(i, S(j)) * es[j - 1] for j in range(1, n + 1))
        if wsum <= 0.0:
            if p[i - 1] > 0.0:
                raise ValueError("inconsistent ancestor probabilities")
            continue
        y_ai = sum(model.rate(i, S(j)) * es[j - 1] * ys[j - 1]
                   for j in range(1, n + 1)) / wsum
        contrib = y_ai + rb[i - 1] + rho_v / (1.0 - rho_v) * r_bv
        y_visit += p[i - 1] * contrib
        rhs += rho * p[i - 1] * contrib

    simplified = None
    if tag == CASE2:
        # the short form needs the total arrival rate to be constant over the
        # whole cycle, switch-overs included, not just over the visits
        totals = model.rate_matrix.sum(axis=0)
        if np.all(np.abs(totals - totals[0]) <= _RATE_TOL):
            simplified = ys_mix + rho_v**2 / (1.0 - rho_v) * \
                model.service[0].residual_mean

    return WorkloadSummary(
        y_switch=tuple(float(v) for v in ys),
        y_switch_mix=ys_mix,
        y_visit=float(y_visit),
        ancestor_prob=tuple(float(v) for v in p),
        rho_v=rho_v,
        case_tag=tag,
        lhs=lhs,
        rhs=float(rhs),
        simplified_rhs=simplified,
    )


def total_work(model: PollingModel, mva: MvaSolution | None = None):
    """Both computations of E[work in system]: the visit/switch-over mixture
    and the per-queue sum E[LQ_i]E[B_i] + rho-bar_i E[R_B_i]."""
    tag = pcl_case(model)
    if tag == NOT_APPLICABLE:
        raise ValueError("model is outside both applicability cases")
    if mva is None:
        mva = solve_mva(model)
    summary = pcl_verify(model, mva)
    rho = float(np.sum(mva.eff_load))
    via_mixture = rho * summary.y_visit + (1.0 - rho) * summary.y_switch_mix
    eb = np.array([d.mean for d in model.service])
    rb = np.array([d.residual_mean for d in model.service])
    via_queues = float(np.asarray(mva.queue_len) @ eb +
                       np.asarray(mva.eff_load) @ rb)
    return via_mixture, via_queues
