"""Performance-measure transforms: queue lengths, waiting times, cycle times.

Marginal queue-length PGFs are assembled from period-boundary PGFs via the
standard up/down-crossing differences, with explicit limit branches at z = 1.
Waiting-time LSTs come from the generalized distributional form of Little's
law applied to the subtype departure transforms; when some arrival rate of the
target type is zero the model is augmented with a virtual zero-service queue
whose customers mark the otherwise unobservable periods.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import (
    EXHAUSTIVE,
    Distribution,
    PeriodId,
    PollingModel,
    S,
    V,
    next_period,
    periods,
)
from .transforms import (
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
)

_UNIT_EPS = 1e-7
_SERIES_STEP = 1e-4


@dataclass
class QueueLengthPgf:
    queue: int
    epoch: str  # "arbitrary" | "arrival" | "departure" | "during-<P>"
    transform: Transform


@dataclass
class WaitingTimeLst:
    queue: int
    transform: Transform
    used_virtual_queue: bool


# ---------------------------------------------------------------------------
# boundary PGFs and cached means


@lru_cache(maxsize=4096)
def _boundary_mean(model: PollingModel, i: int, label: str) -> float:
    p = PeriodId.parse(label)
    t = Transform(lambda z: marginal_boundary_pgf(model, i, p, z), "pgf")
    value, _ = transform_moment(t, 1)
    return value


def _limit_aware(fn, z):
    """Evaluate a PGF ratio with a two-term series branch near z = 1."""
    if abs(1.0 - z) < _UNIT_EPS:
        z0 = 1.0 - _SERIES_STEP
        slope = (1.0 - fn(z0)) / (1.0 - z0)
        return 1.0 + slope * (z - 1.0)
    return fn(z)


def ql_pgf_nonserving(model: PollingModel, i: int, p: PeriodId, z):
    """PGF of the type-i queue length at an arbitrary point of period p != V_i.

    Requires lambda_i^(p) > 0; the count grows linearly in elapsed time, so
    the PGF is the normalized difference of the boundary PGFs.
    """
    lam = model.rate(i, p)
    if lam <= 0.0:
        raise ValueError("rate is zero during this period; use the zero-rate form")
    if p == V(i):
        raise ValueError("use ql_pgf_during_own_visit for the serving period")
    q = next_period(model, p)
    start_mean = _boundary_mean(model, i, p.label)
    end_mean = _boundary_mean(model, i, q.label)
    denom = end_mean - start_mean
    if denom <= 0.0:
        raise ValueError(f"non-increasing type-{i} count over {p}: inconsistent model")

    def ratio(y):
        a = marginal_boundary_pgf(model, i, p, y)
        b = marginal_boundary_pgf(model, i, q, y)
        return (a - b) / ((1.0 - y) * denom)

    return _limit_aware(ratio, z)


def ql_pgf_nonserving_zero_rate(model: PollingModel, i: int, p: PeriodId, z):
    """Queue-length PGF during a period in which no type-i customers arrive.

    During a switch-over the count is frozen at its period-start value.  During
    a visit V_j the observation is length-biased, handled by differentiating
    the joint transform of the start count and the visit length.
    """
    if model.rate(i, p) != 0.0:
        raise ValueError("rate is not zero during this period")
    if p.kind == "S":
        return marginal_boundary_pgf(model, i, p, z)
    j = p.index
    if j == i:
        raise ValueError("use ql_pgf_during_own_visit for the serving period")
    from .mva import mean_visit_times

    evj = float(mean_visit_times(model)[j - 1])
    if evj <= 0.0:
        raise ValueError(f"visit period V{j} has zero mean length")

    def joint(w):
        vec = np.ones(model.n, dtype=complex if isinstance(z, complex) else float)
        vec[i - 1] = z
        vec[j - 1] = theta_lst(model, j, w)
        return period_beginning_pgf(model, V(j), vec)

    h = 1e-4
    d1 = (joint(h) - joint(-h)) / (2.0 * h)
    d2 = (joint(h / 2) - joint(-h / 2)) / h
    deriv = (4.0 * d2 - d1) / 3.0
    return -deriv / evj


def ql_pgf_during_own_visit(model: PollingModel, i: int, z):
    """Type-i queue-length PGF at an arbitrary point of its own visit.

    Fuhrmann-Cooper style decomposition: the M/G/1 queue-length-during-busy-
    period factor times the normalized boundary difference between the end and
    the beginning of the visit.  When lambda_i^(V_i) = 0 the first factor
    degenerates to z (only the customer in service remains unaccounted).
    """
    lam = model.rate(i, V(i))
    beta = model.service[i - 1].lst
    rho = lam * model.service[i - 1].mean
    if rho >= 1.0:
        raise ValueError(f"own-visit load of queue {i} is >= 1")
    start_mean = _boundary_mean(model, i, S(i).label)  # count at visit end
    end_mean = _boundary_mean(model, i, V(i).label)    # count at visit start
    denom = end_mean - start_mean
    if denom <= 0.0:
        raise ValueError(f"visit to queue {i} serves no customers on average")

    def full(y):
        if lam == 0.0:
            factor = y
        else:
            b = beta(lam * (1.0 - y))
            if abs(b - y) < 1e-12:
                # removable singularity of the M/G/1 factor; only hit at the
                # unit root under stability, which the limit branch covers
                yy = y - 1e-7
                b = beta(lam * (1.0 - yy))
                factor = ((1.0 - rho) / rho) * yy * (1.0 - b) / (b - yy)
            else:
                factor = ((1.0 - rho) / rho) * y * (1.0 - b) / (b - y)
        a = marginal_boundary_pgf(model, i, S(i), y)
        bb = marginal_boundary_pgf(model, i, V(i), y)
        return factor * (a - bb) / ((1.0 - y) * denom)

    return _limit_aware(full, z)


def marginal_ql_pgf(model: PollingModel, i: int, epoch: str, z):
    """Marginal type-i queue-length PGF at arbitrary or arrival epochs.

    Arbitrary: conditional PASTA mixture with period-occupancy weights
    E[P]/E[C].  Arrival: weights lambda_i^(P) E[P] / (lambda-bar_i E[C]); by
    the up/down-crossing argument this also equals the departure-epoch PGF.
    """
    if epoch not in ("arbitrary", "arrival"):
        raise ValueError("epoch must be 'arbitrary' or 'arrival'")
    from .mva import mean_visit_times

    ev = mean_visit_times(model)
    es = np.array([d.mean for d in model.switchover])
    ec = float(ev.sum() + es.sum())
    total = 0.0
    value = 0.0
    for p in periods(model.n):
        length = ev[p.index - 1] if p.kind == "V" else es[p.index - 1]
        lam = model.rate(i, p)
        weight = length if epoch == "arbitrary" else lam * length
        if weight <= 0.0:
            continue
        if p == V(i):
            term = ql_pgf_during_own_visit(model, i, z)
        elif lam > 0.0:
            term = ql_pgf_nonserving(model, i, p, z)
        else:
            term = ql_pgf_nonserving_zero_rate(model, i, p, z)
        value += weight * term
        total += weight
    if total <= 0.0:
        raise ValueError(f"queue {i} is never joined")
    return value / total


def queue_length_transform(model: PollingModel, i: int, epoch: str) -> QueueLengthPgf:
    if epoch == "departure":
        inner = "arrival"  # equal by the crossing argument
    else:
        inner = epoch
    fn = lambda z: marginal_ql_pgf(model, i, inner, z)
    return QueueLengthPgf(queue=i, epoch=epoch, transform=Transform(fn, "pgf"))


# ---------------------------------------------------------------------------
# departure transforms and waiting times


def _departure_term(model: PollingModel, i: int, p: PeriodId, z: np.ndarray):
    """beta_i(s) (VB_i^(p)(z) - VC_i^(p)(z)) / (z_i^(p) - beta_i(s)).

    This is M_i^(p) without the 1/(lambda-bar E[C]) departure normalization.
    """
    n = model.n
    rates_vi = model.rate_matrix[:, 2 * (i - 1)]
    s = 0.0
    for j in range(1, n + 1):
        s = s + rates_vi[j - 1] * (1.0 - z[subtype_index(model, j, V(i))])
    b = model.service[i - 1].lst(s)
    zp = z[subtype_index(model, i, p)]
    den = zp - b

    def evaluate(vec):
        vb = subtype_visit_pgf(model, i, p, vec, end=False)
        vc = subtype_visit_pgf(model, i, p, vec, end=True)
        return vb - vc

    if abs(den) < 1e-9:
        # removable singularity in z_i^(p): average two nearby evaluations
        out = 0.0
        for eps in (1e-6, -1e-6):
            zz = z.copy()
            zz[subtype_index(model, i, p)] = zp + eps
            out += model.service[i - 1].lst(s) * evaluate(zz) / (zp + eps - b)
        return out / 2.0
    return b * evaluate(z) / den


def departure_joint_pgf(model: PollingModel, i: int, z) -> float:
    """Joint PGF of the per-subtype counts left behind by a type-i departure.

    ``z`` has 2N^2 components; coordinates of queues other than i should be 1
    unless the caller is applying the distributional-law substitutions.
    """
    from .mva import effective_rates, mean_visit_times

    n = model.n
    z = np.asarray(z, dtype=float if not np.iscomplexobj(z) else complex)
    if np.all(z == 1.0):
        return 1.0
    ev = mean_visit_times(model)
    es = np.array([d.mean for d in model.switchover])
    ec = float(ev.sum() + es.sum())
    lam_i = float(effective_rates(model)[i - 1])
    if lam_i <= 0.0:
        raise ValueError(f"queue {i} is never joined")
    acc = 0.0
    for p in periods(n):
        if model.rate(i, p) > 0.0:
            acc += _departure_term(model, i, p, z)
    return acc / (lam_i * ec)


def _waiting_span(model: PollingModel, i: int, p: PeriodId) -> list[PeriodId]:
    """Periods a type-i customer arriving during p waits through before V_i.

    Exhaustive arrivals during V_i are served in the same visit (empty span);
    every other arrival waits until the next visit beginning of queue i.
    """
    if p == V(i) and model.discipline(i) == EXHAUSTIVE:
        return []
    span = []
    cur = next_period(model, p)
    while cur != V(i):
        span.append(cur)
        cur = next_period(model, cur)
    return span


def insert_virtual_queue(model: PollingModel, i: int,
                         offending: list[PeriodId], rate: float = 1.0):
    """Insert a zero-service marker queue directly after queue i.

    The original switch-over S_i becomes the switch from Q_i to the marker
    queue; the marker's own switch-over is a point mass at 0.  The marker
    receives arrivals at ``rate`` during each offending period (any positive
    value; results must be invariant to it).  Returns (augmented model, the
    marker's queue index, a map from original to augmented period ids).
    """
    n = model.n
    x = i + 1  # marker index in the augmented model

    def remap_queue(j):
        return j if j <= i else j + 1

    def remap(p: PeriodId) -> PeriodId:
        return PeriodId(p.kind, remap_queue(p.index))

    zero = Distribution.deterministic(0.0)
    disciplines, service, switchover = [], [], []
    for j in range(1, n + 2):
        if j == x:
            disciplines.append(EXHAUSTIVE)
            service.append(zero)
            switchover.append(zero)
        else:
            orig = j if j <= i else j - 1
            disciplines.append(model.discipline(orig))
            service.append(model.service[orig - 1])
            switchover.append(model.switchover[orig - 1])
    m = n + 1
    rates = np.zeros((m, 2 * m))
    pmap = {p: remap(p) for p in periods(n)}
    for j in range(1, n + 1):
        for p in periods(n):
            pn = pmap[p]
            col = 2 * (pn.index - 1) + (0 if pn.kind == "V" else 1)
            rates[remap_queue(j) - 1, col] = model.rate(j, p)
    for p in offending:
        pn = pmap[p]
        col = 2 * (pn.index - 1) + (0 if pn.kind == "V" else 1)
        rates[x - 1, col] = rate
    aug = PollingModel(tuple(disciplines), tuple(service), tuple(switchover),
                       tuple(tuple(float(v) for v in row) for row in rates))
    return aug, x, pmap


def waiting_time_lst(model: PollingModel, i: int, w, virtual_rate: float = 1.0):
    """E[e^{-w W_i}] via the generalized distributional form of Little's law.

    Substitutes z_i^(P) = 1 - w/lambda_i^(P) into the subtype departure
    transforms and divides by beta_i(w).  Periods with lambda_i^(P) = 0 are
    handled by augmenting the model with a marker queue after Q_i whose
    customers count the elapsed length of those periods.
    """
    if w == 0.0:
        return 1.0
    n = model.n
    offending = [p for p in periods(n) if model.rate(i, p) == 0.0]
    if not offending:
        work, iq, pmap, x = model, i, {p: p for p in periods(n)}, None
    else:
        if model.discipline(i) != EXHAUSTIVE and S(i) in offending:
            raise ValueError(
                "gated queue with zero rate during its own switch-over: the "
                "marker-queue construction cannot observe that period")
        work, x, pmap = insert_virtual_queue(model, i, offending, virtual_rate)
        iq = i
    from .mva import effective_rates, mean_visit_times

    ev = mean_visit_times(work)
    es = np.array([d.mean for d in work.switchover])
    ec = float(ev.sum() + es.sum())
    lam_i = float(effective_rates(work)[iq - 1])
    if lam_i <= 0.0:
        raise ValueError(f"queue {i} is never joined")
    m = work.n
    own_zero = V(i) in offending
    acc = 0.0
    for p_orig in periods(n):
        lam_p = model.rate(i, p_orig)
        if lam_p <= 0.0:
            continue
        pa = pmap[p_orig]
        z = np.ones(2 * m * m)
        for p2 in periods(n):
            lam2 = model.rate(i, p2)
            if lam2 > 0.0:
                z[subtype_index(work, iq, pmap[p2])] = 1.0 - w / lam2
        if x is not None:
            span = set(_waiting_span(work, iq, pa))
            if own_zero:
                span.add(V(iq))
            for p2 in offending:
                if pmap[p2] in span:
                    xr = work.rate(x, pmap[p2])
                    z[subtype_index(work, x, pmap[p2])] = 1.0 - w / xr
        acc += _departure_term(work, iq, pa, z)
    beta = model.service[i - 1].lst(w)
    return acc / (lam_i * ec * beta)


def waiting_time_transform(model: PollingModel, i: int) -> WaitingTimeLst:
    used = any(model.rate(i, p) == 0.0 for p in periods(model.n))
    fn = lambda w: waiting_time_lst(model, i, w)
    return WaitingTimeLst(queue=i, transform=Transform(fn, "lst"),
                          used_virtual_queue=used)


# ---------------------------------------------------------------------------
# cycle, intervisit and visit time transforms


def _psi_product(model: PollingModel, w):
    """Product of sigma_k(psi^(S_k)(w)) over all switch-overs (queue-1 anchor)."""
    out = 1.0
    for k in range(1, model.n + 1):
        out *= model.switchover[k - 1].lst(psi_recursion(model, k, "switchover", w))
    return out


def _general_cycle_lst(model: PollingModel, w):
    """Visit-beginning cycle LST anchored at queue 1, via the psi recursion."""
    th = np.array([theta_lst(model, k, psi_recursion(model, k, "visit", w))
                   for k in range(1, model.n + 1)])
    return period_beginning_pgf(model, V(1), th) * _psi_product(model, w)


def _general_intervisit_lst(model: PollingModel, w):
    th = np.ones(model.n, dtype=complex if isinstance(w, complex) else float)
    for k in range(2, model.n + 1):
        th[k - 1] = theta_lst(model, k, psi_recursion(model, k, "visit", w))
    return period_beginning_pgf(model, S(1), th) * _psi_product(model, w)


def _general_cycle_ending_lst(model: PollingModel, w):
    """Visit-ending cycle LST anchored at exhaustive queue 1.

    C*_1 = I_1 plus the busy periods of the type-1 arrivals during I_1, so
    every period P inside the intervisit carries the extra exponent
    lambda_1^(P) (1 - pi_1(w)) on top of w.  This reuses the psi recursion
    with per-period coefficients instead of the plain w.
    """
    n = model.n
    if model.discipline(1) != EXHAUSTIVE:
        raise ValueError("visit-ending cycle transform needs an exhaustive anchor")
    pi1 = busy_period_lst(model, 1, w)

    def coeff(p: PeriodId):
        return w + model.rate(1, p) * (1.0 - pi1)

    psi_v = [None] * (n + 1)
    theta = {}
    psi_v[n] = coeff(V(n)) if n > 1 else None
    if n > 1:
        theta[n] = theta_lst(model, n, psi_v[n])
    for idx in range(n - 1, 1, -1):
        acc = coeff(V(idx))
        for k in range(idx + 1, n + 1):
            acc = acc + model.rate(k, V(idx)) * (1.0 - theta[k])
        psi_v[idx] = acc
        theta[idx] = theta_lst(model, idx, acc)
    th = np.ones(n, dtype=complex if isinstance(w, complex) else float)
    for k in range(2, n + 1):
        th[k - 1] = theta[k]
    out = period_beginning_pgf(model, S(1), th)
    for k in range(1, n + 1):
        acc = coeff(S(k))
        for j in range(k + 1, n + 1):
            acc = acc + model.rate(j, S(k)) * (1.0 - theta[j])
        out *= model.switchover[k - 1].lst(acc)
    return out


def _compact_subtype_lst(model: PollingModel, i: int, w, shift, gate_one: bool,
                         virtual_rate: float = 1.0):
    """Common core of the compact cycle/intervisit transforms.

    Substitutes z_i^(P) = shift - w/lambda_i^(P) into VB_i at the first
    subperiod of V_i.  Zero rates are patched with a marker queue whose
    components take 1 - w/lambda_X^(P) (its zero-length busy period has LST 1).
    """
    n = model.n
    offending = [p for p in periods(n) if model.rate(i, p) == 0.0]
    if offending:
        work, x, pmap = insert_virtual_queue(model, i, offending, virtual_rate)
    else:
        work, x, pmap = model, None, {p: p for p in periods(n)}
    m = work.n
    z = np.ones(2 * m * m, dtype=complex if isinstance(w, complex) else float)
    for p in periods(n):
        lam = model.rate(i, p)
        if lam > 0.0:
            z[subtype_index(work, i, pmap[p])] = shift - w / lam
        elif x is not None:
            xr = work.rate(x, pmap[p])
            z[subtype_index(work, x, pmap[p])] = 1.0 - w / xr
    if gate_one:
        z[subtype_index(work, i, V(i))] = 1.0
    anchor = S(i) if work.discipline(i) == EXHAUSTIVE else V(i)
    return subtype_visit_pgf(work, i, anchor, z)


def cycle_time_lst(model: PollingModel, anchor: int, variant: str, w):
    """LST of the cycle time at queue ``anchor``.

    ``variant`` is "visit-beginning" (general branching form, any discipline)
    or "visit-ending" (exhaustive anchors only).
    """
    if w == 0.0:
        return 1.0
    if variant == "visit-beginning":
        return _general_cycle_lst(rotate_model(model, anchor), w)
    if variant == "visit-ending":
        return _general_cycle_ending_lst(rotate_model(model, anchor), w)
    raise ValueError("variant must be 'visit-beginning' or 'visit-ending'")


def compact_cycle_time_lst(model: PollingModel, anchor: int, w,
                           virtual_rate: float = 1.0):
    """Subtype-based compact cycle LST (exhaustive: visit-ending C*_i;
    gated: visit-beginning C_i)."""
    if w == 0.0:
        return 1.0
    if model.discipline(anchor) == EXHAUSTIVE:
        shift = busy_period_lst(model, anchor, w)
        return _compact_subtype_lst(model, anchor, w, shift, False, virtual_rate)
    return _compact_subtype_lst(model, anchor, w, 1.0, False, virtual_rate)


def intervisit_lst(model: PollingModel, i: int, w):
    if w == 0.0:
        return 1.0
    return _general_intervisit_lst(rotate_model(model, i), w)


def compact_intervisit_lst(model: PollingModel, i: int, w,
                           virtual_rate: float = 1.0):
    if w == 0.0:
        return 1.0
    gated = model.discipline(i) != EXHAUSTIVE
    return _compact_subtype_lst(model, i, w, 1.0, gated, virtual_rate)


def visit_time_lst(model: PollingModel, i: int, w):
    if w == 0.0:
        return 1.0
    z = np.ones(model.n, dtype=complex if isinstance(w, complex) else float)
    z[i - 1] = theta_lst(model, i, w)
    return period_beginning_pgf(model, V(i), z)
