"""Mean value analysis: mean visit/cycle times and the full linear system.

The unknown vector stacks, in canonical order: mean waiting times E[W_i], mean
queue lengths E[LQ_i], conditional queue lengths E[LQ_i^(P)], forward
conditional durations (V_i|V_j) and (V_i|S_j), and backward conditional
durations (V_i|V_j) off-diagonal, (V_i|S_j), (S_i|V_j).  Backward durations
between switch-overs and forward (S_i|V_j) durations are known constants.

The equation set is: the three-line waiting-time decomposition, Little's law,
unconditioning, the conditional queue-length build-up equations, the forward
visit-duration equations, and closure equations obtained by equating the
forward and backward expressions of every residual interval duration.  The
closure set is overdetermined but consistent (it needs every pair to reach
full rank), so the system is solved by least squares and the solution is
required to satisfy all equations to machine precision;
``residual_interval_gap`` re-evaluates the closure identities independently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import EXHAUSTIVE, PeriodId, PollingModel, S, V, periods, validate

_SOLVE_TOL = 1e-7
_COND_WARN = 1e10


class MvaError(ValueError):
    pass


def mean_visit_times(model: PollingModel) -> np.ndarray:
    """Solve the N x N linear system for the mean visit times E[V_i].

    Exhaustive: every type-i customer arriving while the server is away
    contributes one busy period to V_i.  Gated: the visit serves exactly the
    customers present at the polling instant, one plain service time each,
    which adds the arrivals during the previous V_i itself to the build-up.
    """
    problems = validate(model)
    if problems:
        raise MvaError("invalid model: " + "; ".join(problems))
    n = model.n
    rv = model.rate_matrix[:, 0::2]  # lambda_i^(V_j)
    rs = model.rate_matrix[:, 1::2]  # lambda_i^(S_j)
    eb = np.array([d.mean for d in model.service])
    es = np.array([d.mean for d in model.switchover])
    a = np.eye(n)
    b = np.zeros(n)
    for i in range(n):
        if model.disciplines[i] == EXHAUSTIVE:
            rho_ii = rv[i, i] * eb[i]
            if rho_ii >= 1.0:
                raise MvaError(f"queue {i + 1} own-visit load >= 1")
            bp = eb[i] / (1.0 - rho_ii)
            for j in range(n):
                if j != i:
                    a[i, j] -= bp * rv[i, j]
            b[i] = bp * float(rs[i] @ es)
        else:
            for j in range(n):
                a[i, j] -= eb[i] * rv[i, j]
            b[i] = eb[i] * float(rs[i] @ es)
    try:
        v = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise MvaError("singular mean-visit-time system (unstable model?)") from exc
    if np.any(v < -1e-12):
        raise MvaError("negative mean visit time: model is unstable")
    return np.maximum(v, 0.0)


def mean_cycle_time(model: PollingModel) -> float:
    es = sum(d.mean for d in model.switchover)
    return float(np.sum(mean_visit_times(model)) + es)


@dataclass(frozen=True)
class MvaSolution:
    """Solved first-moment quantities of the polling system."""

    mean_visit: np.ndarray          # E[V_i]
    mean_cycle: float               # E[C]
    q: dict                         # {PeriodId: occupancy fraction}
    eff_rate: np.ndarray            # lambda-bar_i
    eff_load: np.ndarray            # rho-bar_i
    rho_bar: float
    wait: np.ndarray                # E[W_i]
    queue_len: np.ndarray           # E[LQ_i]
    cond_queue_len: np.ndarray      # E[LQ_i^(P)], shape N x 2N canonical columns
    dur_forward: dict = field(repr=False)   # {(P1.label, P2.label): mean duration}
    dur_backward: dict = field(repr=False)
    condition_number: float = 0.0


def _period_means(model: PollingModel):
    ev = mean_visit_times(model)
    es = np.array([d.mean for d in model.switchover])
    ec = float(ev.sum() + es.sum())
    if ec <= 0.0:
        raise MvaError("zero mean cycle time")
    return ev, es, ec


def effective_rates(model: PollingModel) -> np.ndarray:
    """Time-average arrival rate lambda-bar_i over a cycle."""
    ev, es, ec = _period_means(model)
    rv = model.rate_matrix[:, 0::2]
    rs = model.rate_matrix[:, 1::2]
    return (rv @ ev + rs @ es) / ec


def _assemble(model: PollingModel):
    """Build the coefficient rows of the full MVA system.

    Returns (rows, rhs, index helpers).  Rows are dicts {var: coef} for the
    equation sum(coef * x[var]) = rhs.
    """
    n = model.n
    ev, es, ec = _period_means(model)
    eb = np.array([d.mean for d in model.service])
    rb = np.array([d.residual_mean for d in model.service])
    rsd = np.array([d.residual_mean for d in model.switchover])
    rv = model.rate_matrix[:, 0::2]
    rs = model.rate_matrix[:, 1::2]
    qv = ev / ec
    qs = es / ec
    lam_bar = (rv @ ev + rs @ es) / ec
    exhaustive = [d == EXHAUSTIVE for d in model.disciplines]
    rho_ii = np.array([rv[i, i] * eb[i] for i in range(n)])
    ebp = np.array([eb[i] / (1.0 - rho_ii[i]) if exhaustive[i] else eb[i]
                    for i in range(n)])
    if any(exhaustive[i] and rho_ii[i] >= 1.0 for i in range(n)):
        raise MvaError("own-visit load >= 1 at an exhaustive queue")

    def w(k):
        return k % n

    # --- variable indexing -------------------------------------------------
    o_lq = n
    o_lqp = 2 * n
    o_fvv = o_lqp + 2 * n * n
    o_fvs = o_fvv + n * n
    o_bvs = o_fvs + n * n
    o_bsv = o_bvs + n * n
    o_bvv = o_bsv + n * n
    bvv_off = {}
    pos = o_bvv
    for i in range(n):
        for j in range(n):
            if i != j:
                bvv_off[(i, j)] = pos
                pos += 1
    nvar = pos  # 7 n^2 + n

    def Wv(i):
        return i

    def LQ(i):
        return o_lq + i

    def LQPV(i, j):
        return o_lqp + i * 2 * n + 2 * j

    def LQPS(i, j):
        return o_lqp + i * 2 * n + 2 * j + 1

    def FVV(i, j):
        return o_fvv + i * n + j

    def FVS(i, j):
        return o_fvs + i * n + j

    def BVS(i, j):
        return o_bvs + i * n + j

    def BSV(i, j):
        return o_bsv + i * n + j

    def BVV(i, j):
        return FVV(i, i) if i == j else bvv_off[(i, j)]

    def BSS(i, j):
        # switch-overs are independent of everything before them
        return rsd[i] if i == j else es[i]

    rows, rhs = [], []

    def add(row, r):
        rows.append(row)
        rhs.append(r)

    def bump(row, var, coef):
        if coef != 0.0:
            row[var] = row.get(var, 0.0) + coef

    # --- waiting time, Little, unconditioning ------------------------------
    for i in range(n):
        if lam_bar[i] <= 0.0:
            add({Wv(i): 1.0}, 0.0)
        else:
            row = {Wv(i): 1.0}
            r = 0.0
            a1 = qv[i] * rv[i, i] / lam_bar[i]
            if a1 > 0.0:
                if exhaustive[i]:
                    bump(row, LQPV(i, i), -a1 * eb[i])
                    r += a1 * rb[i]
                else:
                    # gated: wait out the rest of this visit, a full tour of
                    # switch-overs and other visits, and the services of the
                    # same-visit arrivals ahead (rate x age of V_i)
                    bump(row, FVV(i, i), -a1 * eb[i] * rv[i, i])
                    for m in range(n):
                        k = w(i + m)
                        r += a1 * es[k]
                        bump(row, FVV(k, i), -a1)
            for off in range(1, n):
                j = w(i + off)
                a2 = qv[j] * rv[i, j] / lam_bar[i]
                if a2 > 0.0:
                    bump(row, LQPV(i, j), -a2 * eb[i])
                    for m in range(off, n):
                        k = w(i + m)
                        r += a2 * es[k]
                        bump(row, FVV(k, j), -a2)
            for off in range(n):
                j = w(i + off)
                a3 = qs[j] * rs[i, j] / lam_bar[i]
                if a3 > 0.0:
                    bump(row, LQPS(i, j), -a3 * eb[i])
                    r += a3 * rsd[j]
                    for m in range(off + 1, n):
                        k = w(i + m)
                        r += a3 * es[k]
                        bump(row, FVS(k, j), -a3)
            add(row, r)
        add({LQ(i): 1.0, Wv(i): -lam_bar[i]}, 0.0)
        row = {LQ(i): 1.0}
        for off in range(1, n + 1):
            j = w(i + off)
            bump(row, LQPV(i, j), -qv[j])
            bump(row, LQPS(i, j), -qs[j])
        add(row, 0.0)

    # --- conditional queue lengths -----------------------------------------
    for i in range(n):
        for off in range(1, n):
            j = w(i + off)
            row = {LQPV(i, j): 1.0}
            for m in range(1, off + 1):
                k = w(i + m)
                bump(row, BVV(k, j), -rv[i, k])
            for m in range(off):
                k = w(i + m)
                bump(row, BSV(k, j), -rs[i, k])
            if not exhaustive[i]:
                bump(row, BVV(i, j), -rv[i, i])
            add(row, 0.0)
        for off in range(n):
            j = w(i + off)
            row = {LQPS(i, j): 1.0}
            r = 0.0
            for m in range(1, off + 1):
                k = w(i + m)
                bump(row, BVS(k, j), -rv[i, k])
            for m in range(off + 1):
                k = w(i + m)
                r += rs[i, k] * BSS(k, j)
            if not exhaustive[i]:
                bump(row, BVS(i, j), -rv[i, i])
            add(row, r)

    # --- forward visit durations -------------------------------------------
    for i in range(n):
        if exhaustive[i]:
            add({FVV(i, i): 1.0, LQPV(i, i): -ebp[i]}, rb[i] / (1.0 - rho_ii[i]))
        else:
            # gated residual: remaining gate services plus the residual of the
            # one in progress; same-visit arrivals (rate x age) are excluded
            add({FVV(i, i): 1.0 + rho_ii[i], LQPV(i, i): -eb[i]}, rb[i])
        for off in range(1, n):
            j = w(i + off)
            row = {FVV(i, j): 1.0, LQPV(i, j): -ebp[i]}
            r = 0.0
            for m in range(off, n):
                k = w(i + m)
                bump(row, FVV(k, j), -ebp[i] * rv[i, k])
                r += ebp[i] * rs[i, k] * es[k]
            add(row, r)
        for off in range(n):
            j = w(i + off)
            row = {FVS(i, j): 1.0, LQPS(i, j): -ebp[i]}
            r = ebp[i] * rs[i, j] * rsd[j]
            for m in range(off + 1, n):
                k = w(i + m)
                bump(row, FVS(k, j), -ebp[i] * rv[i, k])
                r += ebp[i] * rs[i, k] * es[k]
            add(row, r)

    # --- closure: forward and backward residual-interval forms -------------
    # Each builder returns (row, rhs) for FWD - BWD = 0, with the interval
    # length multiplied out.  Constants move to the right-hand side.

    def closure_sv(i, off):
        # interval (S_i : V_{i+off}), off = 1..N
        row, r = {}, 0.0
        jq = w(i + off)
        for m in range(off):
            k = w(i + m)
            wk = es[k]
            if wk == 0.0:
                continue
            r -= wk * rsd[k]
            bump(row, FVS(jq, k), wk)
            for l in range(m + 1, off):
                lq = w(i + l)
                r -= wk * es[lq]
                bump(row, FVS(lq, k), wk)
            r += wk * BSS(i, k)
            for l in range(1, m + 1):
                lq = w(i + l)
                r += wk * BSS(lq, k)
                bump(row, BVS(lq, k), -wk)
        for m in range(1, off + 1):
            k = w(i + m)
            wk = ev[k]
            if wk == 0.0:
                continue
            bump(row, FVV(jq, k), wk)
            for l in range(m, off):
                lq = w(i + l)
                r -= wk * es[lq]
                bump(row, FVV(lq, k), wk)
            bump(row, BSV(i, k), -wk)
            bump(row, FVV(k, k), -wk)
            for l in range(1, m):
                lq = w(i + l)
                bump(row, BSV(lq, k), -wk)
                bump(row, BVV(lq, k), -wk)
        return row, r

    def closure_ss(i, off):
        # interval (S_i : S_{i+off}), off = 1..N-1
        row, r = {}, 0.0
        for m in range(off + 1):
            k = w(i + m)
            wk = es[k]
            if wk == 0.0:
                continue
            r -= wk * rsd[k]
            for l in range(m + 1, off + 1):
                lq = w(i + l)
                r -= wk * es[lq]
                bump(row, FVS(lq, k), wk)
            r += wk * BSS(i, k)
            for l in range(1, m + 1):
                lq = w(i + l)
                r += wk * BSS(lq, k)
                bump(row, BVS(lq, k), -wk)
        for m in range(1, off + 1):
            k = w(i + m)
            wk = ev[k]
            if wk == 0.0:
                continue
            for l in range(m, off + 1):
                lq = w(i + l)
                r -= wk * es[lq]
                bump(row, FVV(lq, k), wk)
            bump(row, BSV(i, k), -wk)
            bump(row, FVV(k, k), -wk)
            for l in range(1, m):
                lq = w(i + l)
                bump(row, BSV(lq, k), -wk)
                bump(row, BVV(lq, k), -wk)
        return row, r

    def closure_vv(i, off):
        # interval (V_i : V_{i+off}), off = 1..N-1
        row, r = {}, 0.0
        jq = w(i + off)
        for m in range(off):
            k = w(i + m)
            wk = es[k]
            if wk == 0.0:
                continue
            r -= wk * rsd[k]
            bump(row, FVS(jq, k), wk)
            for l in range(m + 1, off):
                lq = w(i + l)
                r -= wk * es[lq]
                bump(row, FVS(lq, k), wk)
            for l in range(m + 1):
                lq = w(i + l)
                r += wk * BSS(lq, k)
                bump(row, BVS(lq, k), -wk)
        for m in range(off + 1):
            k = w(i + m)
            wk = ev[k]
            if wk == 0.0:
                continue
            bump(row, FVV(jq, k), wk)
            for l in range(m, off):
                lq = w(i + l)
                r -= wk * es[lq]
                bump(row, FVV(lq, k), wk)
            bump(row, FVV(k, k), -wk)
            for l in range(m):
                lq = w(i + l)
                bump(row, BSV(lq, k), -wk)
                bump(row, BVV(lq, k), -wk)
        return row, r

    def closure_vs(i, off):
        # interval (V_i : S_{i+off}), off = 0..N-1
        row, r = {}, 0.0
        for m in range(off + 1):
            k = w(i + m)
            wk = es[k]
            if wk == 0.0:
                continue
            r -= wk * rsd[k]
            for l in range(m + 1, off + 1):
                lq = w(i + l)
                r -= wk * es[lq]
                bump(row, FVS(lq, k), wk)
            for l in range(m + 1):
                lq = w(i + l)
                r += wk * BSS(lq, k)
                bump(row, BVS(lq, k), -wk)
        for m in range(off + 1):
            k = w(i + m)
            wk = ev[k]
            if wk == 0.0:
                continue
            for l in range(m, off + 1):
                lq = w(i + l)
                r -= wk * es[lq]
                bump(row, FVV(lq, k), wk)
            bump(row, FVV(k, k), -wk)
            for l in range(m):
                lq = w(i + l)
                bump(row, BSV(lq, k), -wk)
                bump(row, BVV(lq, k), -wk)
        return row, r

    closure = []  # forward = backward identities for every residual interval
    for i in range(n):
        for off in range(1, n + 1):
            closure.append(closure_sv(i, off))
        for off in range(1, n):
            closure.append(closure_ss(i, off))
            closure.append(closure_vv(i, off))
            closure.append(closure_vs(i, off))
        closure.append(closure_vs(i, 0))
        # the diagonal (V_i : S_i) pair reduces to E[S_i] (B_VS[i][i] - E[V_i]) = 0;
        # pin the independence identity directly so it survives E[S_i] = 0
        closure.append(({BVS(i, i): 1.0}, ev[i]))

    pins = []  # quarantine pins for zero-length periods (lstsq fallback only)
    for k in range(n):
        if np.all(model.rate_matrix[k] == 0.0):
            # never-joined queue: zero-length visits, quarantined viewpoints
            for j in range(n):
                if j != k:
                    pins.append(({BVV(k, j): 1.0}, 0.0))
                    pins.append(({BVS(k, j): 1.0}, 0.0))
                pins.append(({BSV(j, k): 1.0}, es[j]))

    helpers = dict(Wv=Wv, LQ=LQ, LQPV=LQPV, LQPS=LQPS, FVV=FVV, FVS=FVS,
                   BVS=BVS, BSV=BSV, BVV=BVV, BSS=BSS)
    stats = dict(ev=ev, es=es, ec=ec, qv=qv, qs=qs, lam_bar=lam_bar, eb=eb,
                 rb=rb, rsd=rsd, rho_ii=rho_ii)
    return rows, rhs, closure, pins, nvar, helpers, stats


def _rows_to_matrix(rows, rhs, nvar):
    a = np.zeros((len(rows), nvar))
    for r, row in enumerate(rows):
        for var, coef in row.items():
            a[r, var] = coef
    return a, np.array(rhs)


def solve_mva(model: PollingModel, check_stability: bool = True) -> MvaSolution:
    """Solve the full MVA linear system and package all first moments.

    ``check_stability=False`` skips the ergodicity precheck for callers that
    have already established it (the strategy enumerator filters profiles by
    the stability margin before solving).
    """
    if check_stability:
        from .stability import stability_report

        report = stability_report(model)
        if not report.stable:
            raise MvaError(f"model is unstable (margin {report.margin:.4g})")
    n = model.n
    rows, rhs, closure, pins, nvar, h, st = _assemble(model)
    # The paper's closure set is genuinely overdetermined: no obvious square
    # subset has full rank (dropping the redundant (V_i:S_j) pairs already
    # loses rank at N=2).  The full set is consistent, so solve it by least
    # squares and insist on a machine-precision residual afterwards.
    all_rows = list(rows) + [row for row, _ in pins]
    all_rhs = list(rhs) + [r for _, r in pins]
    for row, r in closure:
        all_rows.append(row)
        all_rhs.append(r)
    a, b = _rows_to_matrix(all_rows, all_rhs, nvar)
    x, _, rank, sv = np.linalg.lstsq(a, b, rcond=None)
    cond = float(sv[0] / sv[min(rank, len(sv)) - 1]) if len(sv) else np.inf
    if cond > _COND_WARN:
        warnings.warn(f"MVA system condition number {cond:.3g}", RuntimeWarning)
    resid = a @ x - b
    scale = max(1.0, float(np.max(np.abs(b))))
    if not np.all(np.isfinite(x)) or np.max(np.abs(resid)) > _SOLVE_TOL * scale:
        raise MvaError("MVA solution does not satisfy the assembled equations")

    ev, es, ec = st["ev"], st["es"], st["ec"]
    q = {}
    for i in range(n):
        q[V(i + 1)] = float(st["qv"][i])
        q[S(i + 1)] = float(st["qs"][i])
    lam_bar = st["lam_bar"]
    eff_load = lam_bar * st["eb"]
    wait = np.array([x[h["Wv"](i)] for i in range(n)])
    queue_len = np.array([x[h["LQ"](i)] for i in range(n)])
    cond_ql = np.zeros((n, 2 * n))
    for i in range(n):
        for j in range(n):
            cond_ql[i, 2 * j] = x[h["LQPV"](i, j)]
            cond_ql[i, 2 * j + 1] = x[h["LQPS"](i, j)]
    fwd, bwd = {}, {}
    for i in range(n):
        for j in range(n):
            fwd[(f"V{i + 1}", f"V{j + 1}")] = float(x[h["FVV"](i, j)])
            fwd[(f"V{i + 1}", f"S{j + 1}")] = float(x[h["FVS"](i, j)])
            fwd[(f"S{i + 1}", f"V{j + 1}")] = float(es[i])
            fwd[(f"S{i + 1}", f"S{j + 1}")] = float(h["BSS"](i, j))
            bwd[(f"V{i + 1}", f"V{j + 1}")] = float(x[h["BVV"](i, j)])
            bwd[(f"V{i + 1}", f"S{j + 1}")] = float(x[h["BVS"](i, j)])
            bwd[(f"S{i + 1}", f"V{j + 1}")] = float(x[h["BSV"](i, j)])
            bwd[(f"S{i + 1}", f"S{j + 1}")] = float(h["BSS"](i, j))
    return MvaSolution(
        mean_visit=ev,
        mean_cycle=ec,
        q=q,
        eff_rate=lam_bar,
        eff_load=eff_load,
        rho_bar=float(np.sum(eff_load)),
        wait=wait,
        queue_len=queue_len,
        cond_queue_len=cond_ql,
        dur_forward=fwd,
        dur_backward=bwd,
        condition_number=cond if np.isfinite(cond) else float("nan"),
    )


def residual_interval_gap(model: PollingModel, sol: MvaSolution) -> float:
    """Largest forward-vs-backward mismatch over every residual interval.

    Evaluates both expressions for E[R_{S_i:V_j}], E[R_{S_i:S_j}],
    E[R_{V_i:V_j}] and E[R_{V_i:S_j}] at the solved vector, interval lengths
    multiplied out, and returns the maximum absolute gap.  Intervals
    containing only zero-length periods are skipped.
    """
    n = model.n
    rows, rhs, closure, pins, nvar, h, st = _assemble(model)
    x = np.zeros(nvar)
    for i in range(n):
        x[h["Wv"](i)] = sol.wait[i]
        x[h["LQ"](i)] = sol.queue_len[i]
        for j in range(n):
            x[h["LQPV"](i, j)] = sol.cond_queue_len[i, 2 * j]
            x[h["LQPS"](i, j)] = sol.cond_queue_len[i, 2 * j + 1]
            x[h["FVV"](i, j)] = sol.dur_forward[(f"V{i + 1}", f"V{j + 1}")]
            x[h["FVS"](i, j)] = sol.dur_forward[(f"V{i + 1}", f"S{j + 1}")]
            x[h["BVS"](i, j)] = sol.dur_backward[(f"V{i + 1}", f"S{j + 1}")]
            x[h["BSV"](i, j)] = sol.dur_backward[(f"S{i + 1}", f"V{j + 1}")]
            if i != j:
                x[h["BVV"](i, j)] = sol.dur_backward[(f"V{i + 1}", f"V{j + 1}")]
    gap = 0.0
    for row, r in closure:
        if not row:
            continue
        lhs = sum(c * x[v] for v, c in row.items())
        gap = max(gap, abs(lhs - r))
    return gap
