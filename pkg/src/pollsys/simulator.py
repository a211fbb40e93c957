"""Discrete-event simulation oracle for cyclic polling with smart customers.

One replication runs a period-sequential event loop: arrival processes are
re-drawn at every period boundary (exact for Poisson switching, by the
memoryless property) and the server follows the cyclic visit/switch-over
schedule with exhaustive or gated service.  Randomness comes from splitmix64,
a counter-free 64-bit generator that is reproducible across platforms; each
replication owns its own stream seeded from (seed, replication index).

The hot loop is compiled with numba when available and falls back to the same
pure-Python code otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EXHAUSTIVE, PollingModel, validate

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*a, **k):
        if a and callable(a[0]):
            return a[0]
        return lambda f: f


_U64 = np.uint64
_QUEUE_CAPACITY = 1 << 16

# two-sided 95% Student-t quantiles by degrees of freedom
_T95 = {1: 12.706, 2: 4.303, 3: 3.182, 4: 2.776, 5: 2.571, 6: 2.447,
        7: 2.365, 8: 2.306, 9: 2.262, 10: 2.228, 11: 2.201, 12: 2.179,
        13: 2.160, 14: 2.145, 15: 2.131, 16: 2.120, 17: 2.110, 18: 2.101,
        19: 2.093, 20: 2.086, 25: 2.060, 30: 2.042, 40: 2.021, 60: 2.000}


def _t_quantile(df: int) -> float:
    if df in _T95:
        return _T95[df]
    keys = sorted(_T95)
    for k in keys:
        if df < k:
            return _T95[k]
    return 1.96


@dataclass(frozen=True)
class SimConfig:
    replications: int = 5
    events_per_replication: int = 1_000_000
    warmup_fraction: float = 0.2
    seed: int = 2024

    def __post_init__(self):
        if self.replications < 2:
            raise ValueError("need at least 2 replications for an interval")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class SimEstimate:
    metric: str
    mean: float
    half_width: float
    replications: int
    diverging: bool = False


_FAMILY_CODE = {"exponential": 0, "deterministic": 1, "erlang": 2,
                "hyperexponential-2": 3}


def _dist_params(dists) -> np.ndarray:
    out = np.zeros((len(dists), 4))
    for k, d in enumerate(dists):
        out[k, 0] = _FAMILY_CODE[d.family]
        for j, p in enumerate(d.params):
            out[k, 1 + j] = p
    return out


@njit(cache=True)
def _sm64(state):
    state = state + _U64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
    z = z ^ (z >> _U64(31))
    return state, z


@njit(cache=True)
def _uniform(state):
    state, z = _sm64(state)
    return state, (z >> _U64(11)) * (1.0 / 9007199254740992.0) + 1e-18


@njit(cache=True)
def _draw(state, params):
    code = int(params[0])
    if code == 1:
        return state, params[1]
    if code == 0:
        state, u = _uniform(state)
        return state, -params[1] * np.log(u)
    if code == 2:
        shape = int(params[1])
        mean_each = params[2] / params[1]
        total = 0.0
        for _ in range(shape):
            state, u = _uniform(state)
            total += -mean_each * np.log(u)
        return state, total
    state, u = _uniform(state)
    state, u2 = _uniform(state)
    if u < params[1]:
        return state, -params[2] * np.log(u2)
    return state, -params[3] * np.log(u2)


@njit(cache=True)
def _run_replication(disc, service, switch, rates, state, target, warmup):
    n = rates.shape[0]
    cap = _QUEUE_CAPACITY
    arr_t = np.zeros((n, cap))
    arr_w = np.zeros((n, cap))
    head = np.zeros(n, dtype=np.int64)
    count = np.zeros(n, dtype=np.int64)
    next_arr = np.full(n, np.inf)

    wait_sum = np.zeros(n)
    wait_cnt = np.zeros(n)
    qlarr_sum = np.zeros(n)
    qlarr_cnt = np.zeros(n)
    qldep_sum = np.zeros(n)
    qldep_cnt = np.zeros(n)
    qltime = np.zeros(n)
    visit_sum = np.zeros(n)
    visit_cnt = np.zeros(n)
    inter_sum = np.zeros(n)
    inter_cnt = np.zeros(n)
    cycle_sum = 0.0
    cycle_cnt = 0.0
    work_int = 0.0
    overflow = 0.0
    last_visit_end = np.full(n, -1.0)
    last_poll1 = -1.0

    t = 0.0
    y = 0.0  # unfinished work in the whole system
    events = 0
    measuring = False
    t_meas = 0.0
    half = warmup + (target - warmup) // 2
    snap_ql = 0.0
    snap_t = -1.0
    in_service = 0.0  # remaining work of customer in service

    # period loop: queue q visit, then its switch-over, cyclically
    q = 0
    while events < target:
        # ---- visit period of queue q ----
        col = 2 * q
        for j in range(n):
            lam = rates[j, col]
            if lam > 0.0:
                state, u = _uniform(state)
                next_arr[j] = t + (-np.log(u) / lam)
            else:
                next_arr[j] = np.inf
        poll_t = t
        if q == 0:
            if measuring and last_poll1 >= 0.0:
                cycle_sum += t - last_poll1
                cycle_cnt += 1.0
            last_poll1 = t
        if measuring and last_visit_end[q] >= 0.0:
            inter_sum[q] += t - last_visit_end[q]
            inter_cnt[q] += 1.0
        gate = count[q]
        served = 0
        while True:
            if disc[q] == 0:
                if count[q] == 0:
                    break
            else:
                if served >= gate or count[q] == 0:
                    break
            # start service of the head customer of queue q
            idx = head[q] % cap
            ta = arr_t[q, idx]
            b = arr_w[q, idx]
            head[q] += 1
            count[q] -= 1
            if measuring:
                wait_sum[q] += t - ta
                wait_cnt[q] += 1.0
            in_service = b
            t_end = t + b
            # arrivals during the service (rates of the current visit period)
            while True:
                jmin = 0
                tmin = next_arr[0]
                for j in range(1, n):
                    if next_arr[j] < tmin:
                        tmin = next_arr[j]
                        jmin = j
                t2 = t_end if t_end < tmin else tmin
                dt = t2 - t
                if measuring:
                    for j in range(n):
                        c = count[j]
                        if j == q:
                            c += 1  # customer in service
                        qltime[j] += c * dt
                    work_int += (y + (y - dt)) * 0.5 * dt
                y -= dt
                in_service -= dt
                t = t2
                if tmin > t_end:
                    break
                # arrival at queue jmin
                events += 1
                if measuring:
                    c = count[jmin]
                    if jmin == q:
                        c += 1
                    qlarr_sum[jmin] += c
                    qlarr_cnt[jmin] += 1.0
                state, bnew = _draw(state, service[jmin])
                if count[jmin] >= cap:
                    overflow = 1.0
                else:
                    idx2 = (head[jmin] + count[jmin]) % cap
                    arr_t[jmin, idx2] = t
                    arr_w[jmin, idx2] = bnew
                    count[jmin] += 1
                y += bnew
                lam = rates[jmin, col]
                state, u = _uniform(state)
                next_arr[jmin] = t + (-np.log(u) / lam)
                if not measuring and events >= warmup:
                    measuring = True
                    t_meas = t
                if measuring and snap_t < 0.0 and events >= half:
                    snap_t = t
                    total = 0.0
                    for j in range(n):
                        total += qltime[j]
                    snap_ql = total
                if events >= target and t >= t_end:
                    break
            # service completion
            served += 1
            if measuring:
                qldep_sum[q] += count[q]
                qldep_cnt[q] += 1.0
        if measuring:
            visit_sum[q] += t - poll_t
            visit_cnt[q] += 1.0
        last_visit_end[q] = t
        # ---- switch-over out of queue q ----
        col = 2 * q + 1
        for j in range(n):
            lam = rates[j, col]
            if lam > 0.0:
                state, u = _uniform(state)
                next_arr[j] = t + (-np.log(u) / lam)
            else:
                next_arr[j] = np.inf
        state, s = _draw(state, switch[q])
        t_end = t + s
        while True:
            jmin = 0
            tmin = next_arr[0]
            for j in range(1, n):
                if next_arr[j] < tmin:
                    tmin = next_arr[j]
                    jmin = j
            t2 = t_end if t_end < tmin else tmin
            dt = t2 - t
            if measuring:
                for j in range(n):
                    qltime[j] += count[j] * dt
                work_int += y * dt
            t = t2
            if tmin > t_end:
                break
            events += 1
            if measuring:
                qlarr_sum[jmin] += count[jmin]
                qlarr_cnt[jmin] += 1.0
            state, bnew = _draw(state, service[jmin])
            if count[jmin] >= cap:
                overflow = 1.0
            else:
                idx2 = (head[jmin] + count[jmin]) % cap
                arr_t[jmin, idx2] = t
                arr_w[jmin, idx2] = bnew
                count[jmin] += 1
            y += bnew
            lam = rates[jmin, col]
            state, u = _uniform(state)
            next_arr[jmin] = t + (-np.log(u) / lam)
            if not measuring and events >= warmup:
                measuring = True
                t_meas = t
            if measuring and snap_t < 0.0 and events >= half:
                snap_t = t
                total = 0.0
                for j in range(n):
                    total += qltime[j]
                snap_ql = total
        q = (q + 1) % n

    out = np.zeros(10 * n + 8)
    for j in range(n):
        out[j] = wait_sum[j]
        out[n + j] = wait_cnt[j]
        out[2 * n + j] = qlarr_sum[j]
        out[3 * n + j] = qlarr_cnt[j]
        out[4 * n + j] = qldep_sum[j]
        out[5 * n + j] = qldep_cnt[j]
        out[6 * n + j] = qltime[j]
        out[7 * n + j] = visit_sum[j] / max(visit_cnt[j], 1.0)
        out[8 * n + j] = inter_sum[j] / max(inter_cnt[j], 1.0)
        out[9 * n + j] = visit_cnt[j]
    base = 10 * n
    out[base] = cycle_sum / max(cycle_cnt, 1.0)
    out[base + 1] = work_int
    out[base + 2] = t - t_meas
    out[base + 3] = overflow
    out[base + 4] = snap_ql
    out[base + 5] = snap_t - t_meas if snap_t >= 0.0 else -1.0
    out[base + 6] = cycle_cnt
    out[base + 7] = 0.0
    return out


def _seed_stream(seed: int, rep: int) -> np.uint64:
    state = _U64(seed & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        state, _ = _sm64(state + _U64(rep) * _U64(0x9E3779B97F4A7C15))
        state, z = _sm64(_U64(state))
    return _U64(z)


def simulate(model: PollingModel, config: SimConfig) -> list[SimEstimate]:
    """Run independent replications and return estimates with 95% intervals."""
    problems = validate(model)
    if problems:
        raise ValueError("invalid model: " + "; ".join(problems))
    n = model.n
    disc = np.array([0 if d == EXHAUSTIVE else 1 for d in model.disciplines],
                    dtype=np.int8)
    service = _dist_params(model.service)
    switch = _dist_params(model.switchover)
    rates = model.rate_matrix
    target = config.events_per_replication
    warmup = int(target * config.warmup_fraction)

    reps = []
    diverging = False
    with np.errstate(over="ignore"):
        for r in range(config.replications):
            raw = _run_replication(disc, service, switch, rates,
                                   _seed_stream(config.seed, r), target, warmup)
            reps.append(raw)
            base = 10 * n
            if raw[base + 3] > 0.0:
                diverging = True
            meas_t, snap_ql, snap_t = raw[base + 2], raw[base + 4], raw[base + 5]
            if snap_t > 0.0 and meas_t > snap_t:
                first = snap_ql / snap_t
                second = (raw[6 * n:7 * n].sum() - snap_ql) / (meas_t - snap_t)
                if second > 2.0 * first + 1.0:
                    diverging = True

    def estimate(metric: str, values: np.ndarray) -> SimEstimate:
        values = values[np.isfinite(values)]
        if len(values) < 2:
            return SimEstimate(metric, float("nan"), float("nan"),
                               len(values), diverging)
        mean = float(values.mean())
        hw = _t_quantile(len(values) - 1) * float(values.std(ddof=1)) / \
            np.sqrt(len(values))
        return SimEstimate(metric, mean, hw, len(values), diverging)

    out = []
    raws = np.array(reps)
    base = 10 * n
    for j in range(n):
        i = j + 1
        with np.errstate(invalid="ignore", divide="ignore"):
            out.append(estimate(f"wait[{i}]", raws[:, j] / raws[:, n + j]))
            out.append(estimate(f"ql_arrival[{i}]",
                                raws[:, 2 * n + j] / raws[:, 3 * n + j]))
            out.append(estimate(f"ql_departure[{i}]",
                                raws[:, 4 * n + j] / raws[:, 5 * n + j]))
            out.append(estimate(f"ql_timeavg[{i}]",
                                raws[:, 6 * n + j] / raws[:, base + 2]))
        out.append(estimate(f"visit[{i}]", raws[:, 7 * n + j]))
        out.append(estimate(f"intervisit[{i}]", raws[:, 8 * n + j]))
    out.append(estimate("cycle", raws[:, base]))
    out.append(estimate("workload", raws[:, base + 1] / raws[:, base + 2]))
    return out


def estimates_by_metric(estimates: list[SimEstimate]) -> dict[str, SimEstimate]:
    return {e.metric: e for e in estimates}
