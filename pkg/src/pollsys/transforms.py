"""Generating-function machinery: busy periods, branching maps, laws of motion.

Everything here evaluates probability generating functions (PGFs) or
Laplace-Stieltjes transforms (LSTs) pointwise.  Joint queue-length PGFs at
period beginnings are computed by walking the laws of motion backwards through
whole cycles until the argument vector has contracted to the all-ones point,
accumulating the scalar switch-over factors on the way.  Under stability this
iteration is a contraction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import (
    EXHAUSTIVE,
    PeriodId,
    PollingModel,
    S,
    V,
    period_column,
    periods,
)

FIXED_POINT_TOL = 1e-12
MAX_CYCLES = 100_000


class ConvergenceError(RuntimeError):
    """Raised when a fixed-point iteration fails to converge (near-critical load)."""


@dataclass
class Transform:
    """An evaluable PGF section or LST with moment extraction.

    ``kind`` is "pgf" (base point 1) or "lst" (base point 0).
    """

    fn: Callable
    kind: str
    dimension: int = 1

    def __call__(self, arg):
        return self.fn(arg)

    @property
    def base_point(self) -> float:
        return 1.0 if self.kind == "pgf" else 0.0

    def moment(self, k: int) -> float:
        value, _ = transform_moment(self, k)
        return value

    def moment_with_error(self, k: int) -> tuple[float, float]:
        return transform_moment(self, k)


def transform_moment(t: Transform, k: int) -> tuple[float, float]:
    """k-th moment of a 1-dim transform by Richardson-extrapolated differences.

    For a PGF this is the k-th factorial moment at z=1; for an LST the k-th raw
    moment, i.e. (-1)^k times the k-th derivative at 0.  Returns (value, error
    estimate from the extrapolation tableau).
    """
    if k not in (1, 2):
        raise ValueError("only moments 1 and 2 are supported")
    x0 = t.base_point
    hs = (1e-3, 5e-4, 2.5e-4)
    f0 = t.fn(x0) if k == 2 else None
    estimates = []
    for h in hs:
        fp, fm = t.fn(x0 + h), t.fn(x0 - h)
        if k == 1:
            estimates.append((fp - fm) / (2.0 * h))
        else:
            estimates.append((fp - 2.0 * f0 + fm) / (h * h))
    # two-level Richardson for the O(h^2) central-difference error
    r1 = [(4.0 * estimates[i + 1] - estimates[i]) / 3.0 for i in range(2)]
    r2 = (16.0 * r1[1] - r1[0]) / 15.0
    err = abs(r2 - r1[0])
    value = float(np.real(r2))
    if not np.isfinite(value):
        raise ConvergenceError("finite differencing failed near the base point")
    if t.kind == "pgf":
        return value, err
    sign = -1.0 if k == 1 else 1.0
    return sign * value, err


# ---------------------------------------------------------------------------
# busy periods and branching functions


def busy_period_lst(model: PollingModel, i: int, w, tol: float = 1e-15):
    """LST of the M/G/1 busy period of queue i fed at its own-visit rate.

    Fixed point pi = beta_i(w + lambda_i^(V_i) (1 - pi)), the root in (0, 1]
    for real w >= 0.  Solved to machine precision so that the outer
    law-of-motion walks can contract below their own tolerance.
    """
    lam = model.rate(i, V(i))
    dist = model.service[i - 1]
    if lam == 0.0:
        return dist.lst(w)
    rho = lam * dist.mean
    if rho >= 1.0:
        raise ValueError(f"queue {i} own-visit load {rho:.4f} >= 1: no proper busy period")
    pi = 0.0
    for _ in range(500_000):
        nxt = dist.lst(w + lam * (1.0 - pi))
        if abs(nxt - pi) < tol or nxt == pi:
            return nxt
        pi = nxt
    raise ConvergenceError(f"busy-period fixed point for queue {i} did not converge")


def theta_lst(model: PollingModel, j: int, w):
    """LST of the server time generated by one queue-j customer.

    Gated: one service time.  Exhaustive: one busy period.
    """
    if model.discipline(j) == EXHAUSTIVE:
        return busy_period_lst(model, j, w)
    return model.service[j - 1].lst(w)


def branching_pgf(model: PollingModel, i: int, z):
    """Offspring PGF h_i(z) of one queue-i customer served during V_i."""
    z = np.asarray(z)
    rates = model.rate_matrix[:, 2 * (i - 1)]  # arrival rates during V_i
    if model.discipline(i) == EXHAUSTIVE:
        mask = np.ones(model.n, dtype=bool)
        mask[i - 1] = False
        w = np.sum(rates[mask] * (1.0 - z[mask]))
        return busy_period_lst(model, i, w)
    w = np.sum(rates * (1.0 - z))
    return model.service[i - 1].lst(w)


# ---------------------------------------------------------------------------
# laws of motion (base types, N-dimensional argument)


def period_beginning_pgf(model: PollingModel, p: PeriodId, z,
                         tol: float = FIXED_POINT_TOL, max_cycles: int = MAX_CYCLES):
    """Joint queue-length PGF at beginnings of period p, evaluated at z (N-vector)."""
    n = model.n
    z = np.array(z, dtype=complex if np.iscomplexobj(z) else float)
    if z.shape != (n,):
        raise ValueError(f"argument must have {n} components")
    rates = model.rate_matrix
    factor = 1.0
    kind, idx = p.kind, p.index
    for _ in range(max_cycles * 2 * n):
        if np.max(np.abs(z - 1.0)) < tol:
            return factor
        if kind == "V":
            # LB^(V_idx) = LB^(S_{idx-1}) * sigma_{idx-1}(sum_j lambda_j^(S_{idx-1}) (1-z_j))
            k = model.wrap(idx - 1)
            w = np.sum(rates[:, 2 * (k - 1) + 1] * (1.0 - z))
            factor *= model.switchover[k - 1].lst(w)
            kind, idx = "S", k
        else:
            # LB^(S_idx) = LB^(V_idx) with z_idx <- h_idx(z)
            z = z.copy()
            z[idx - 1] = branching_pgf(model, idx, z)
            kind = "V"
    raise ConvergenceError("law-of-motion iteration did not contract (near-critical load)")


def visit_beginning_pgf(model: PollingModel, i: int, z, tol: float = FIXED_POINT_TOL):
    """PGF of the joint queue length at visit beginnings of queue i."""
    return period_beginning_pgf(model, V(i), z, tol)


def marginal_boundary_pgf(model: PollingModel, i: int, p: PeriodId, z,
                          tol: float = FIXED_POINT_TOL):
    """PGF of the number of type-i customers at beginnings of period p."""
    vec = np.ones(model.n, dtype=complex if isinstance(z, complex) else float)
    vec[i - 1] = z
    return period_beginning_pgf(model, p, vec, tol)


# ---------------------------------------------------------------------------
# subtype laws of motion (2N^2-dimensional argument)


def subtype_index(model: PollingModel, queue: int, p: PeriodId) -> int:
    """Position of component z_queue^(p) in the flattened subtype vector."""
    return (queue - 1) * 2 * model.n + period_column(p, model.n)


def visit_subperiods(model: PollingModel, q: int) -> list[PeriodId]:
    """Order in which the subtypes of queue q are served during visit V_q.

    Exhaustive: S_q, V_{q+1}, S_{q+1}, ..., S_{q+N-1}, V_q (own-visit arrivals
    last).  Gated: V_q, S_q, V_{q+1}, ..., S_{q+N-1} (gate closes at polling).
    """
    n = model.n
    tail = []
    for off in range(n):
        k = model.wrap(q + off)
        if off > 0:
            tail.append(V(k))
        tail.append(S(k))
    if model.discipline(q) == EXHAUSTIVE:
        return tail + [V(q)]
    return [V(q)] + tail


def _subperiod_substitution(model: PollingModel, q: int, m: int, z: np.ndarray,
                            subperiods: list[PeriodId]) -> np.ndarray:
    """Argument map for serving the m-th (0-based) subtype batch of visit V_q.

    Replaces component (q, P_m) by the offspring transform of one such
    customer and blanks the components of already-served subtypes.
    """
    n = model.n
    rates_vq = model.rate_matrix[:, 2 * (q - 1)]
    zvq = np.array([z[subtype_index(model, j, V(q))] for j in range(1, n + 1)])
    exhaustive = model.discipline(q) == EXHAUSTIVE
    last = m == len(subperiods) - 1
    if exhaustive and last:
        mask = np.ones(n, dtype=bool)
        mask[q - 1] = False
        g = busy_period_lst(model, q, np.sum(rates_vq[mask] * (1.0 - zvq[mask])))
    else:
        g = model.service[q - 1].lst(np.sum(rates_vq * (1.0 - zvq)))
    out = z.copy()
    for p_prev in subperiods[:m]:
        # For gated service the V_q component stays live after its batch is
        # served: fresh arrivals during the visit keep feeding that subtype.
        if not exhaustive and p_prev == V(q):
            continue
        out[subtype_index(model, q, p_prev)] = 1.0
    out[subtype_index(model, q, subperiods[m])] = g
    return out


def subtype_visit_pgf(model: PollingModel, i: int, anchor: PeriodId, z,
                      end: bool = False, tol: float = FIXED_POINT_TOL,
                      max_cycles: int = MAX_CYCLES):
    """Joint subtype queue-length PGF VB_i^(anchor) (or VC if ``end``).

    ``anchor`` names the subperiod of visit V_i at which type i^(anchor)
    customers start (resp. finish) being served.  ``z`` has 2N^2 components in
    the order (z_1^(V_1), ..., z_1^(S_N), ..., z_N^(V_1), ..., z_N^(S_N)).
    """
    n = model.n
    z = np.array(z, dtype=complex if np.iscomplexobj(z) else float)
    if z.shape != (2 * n * n,):
        raise ValueError(f"argument must have {2 * n * n} components")
    rates = model.rate_matrix
    subs = {q: visit_subperiods(model, q) for q in range(1, n + 1)}
    q, m = i, subs[i].index(anchor)
    if end:
        z = _subperiod_substitution(model, q, m, z, subs[q])
    factor = 1.0
    for _ in range(max_cycles * 2 * n * n):
        if np.max(np.abs(z - 1.0)) < tol:
            return factor
        if m > 0:
            z = _subperiod_substitution(model, q, m - 1, z, subs[q])
            m -= 1
        else:
            # beginning of visit V_q: step back over switch-over S_{q-1}
            k = model.wrap(q - 1)
            w = 0.0
            for j in range(1, n + 1):
                w = w + rates[j - 1, 2 * (k - 1) + 1] * (1.0 - z[subtype_index(model, j, S(k))])
            factor *= model.switchover[k - 1].lst(w)
            q = k
            m = len(subs[q]) - 1
            z = _subperiod_substitution(model, q, m, z, subs[q])
    raise ConvergenceError("subtype law-of-motion iteration did not contract")


def subtype_visit_beginning_pgf(model: PollingModel, i: int, anchor: PeriodId, z,
                                tol: float = FIXED_POINT_TOL):
    return subtype_visit_pgf(model, i, anchor, z, end=False, tol=tol)


# ---------------------------------------------------------------------------
# psi recursion (cycle anchored at queue 1)


def psi_recursion(model: PollingModel, start: int, kind: str, w):
    """psi^(V_start)(w) or psi^(S_start)(w) for the cycle anchored at queue 1.

    Backward recursion from index N: psi^(V_N) = psi^(S_N) = w and
    psi^(P_i) = w + sum_{k>i} lambda_k^(P_i) (1 - theta_k(psi^(V_k)(w))).
    """
    if kind not in ("visit", "switchover"):
        raise ValueError("kind must be 'visit' or 'switchover'")
    n = model.n
    if not 1 <= start <= n:
        raise IndexError(f"index {start} out of range 1..{n}")
    psi_v = [None] * (n + 1)
    psi_v[n] = w
    theta = {n: theta_lst(model, n, psi_v[n])} if n >= 1 else {}
    for idx in range(n - 1, 0, -1):
        acc = w
        for k in range(idx + 1, n + 1):
            acc = acc + model.rate(k, V(idx)) * (1.0 - theta[k])
        psi_v[idx] = acc
        theta[idx] = theta_lst(model, idx, acc)
    if kind == "visit":
        return psi_v[start]
    if start == n:
        return w
    acc = w
    for k in range(start + 1, n + 1):
        acc = acc + model.rate(k, S(start)) * (1.0 - theta[k])
    return acc


def rotate_model(model: PollingModel, anchor: int) -> PollingModel:
    """Relabel queues cyclically so that ``anchor`` becomes queue 1."""
    n = model.n
    order = [model.wrap(anchor + off) for off in range(n)]
    rates = np.empty((n, 2 * n))
    old = model.rate_matrix
    for new_i, old_i in enumerate(order):
        for new_j, old_j in enumerate(order):
            rates[new_i, 2 * new_j] = old[old_i - 1, 2 * (old_j - 1)]
            rates[new_i, 2 * new_j + 1] = old[old_i - 1, 2 * (old_j - 1) + 1]
    return PollingModel(
        tuple(model.disciplines[o - 1] for o in order),
        tuple(model.service[o - 1] for o in order),
        tuple(model.switchover[o - 1] for o in order),
        tuple(tuple(float(x) for x in row) for row in rates),
    )
