"""Ergodicity check via the spectral radius of the visit-rate load matrix.

The system is stable iff the dominant eigenvalue of R - I is negative, where
R[i][j] = lambda_i^(V_j) * E[B_i].  Rows and columns of queues that are never
joined (all rates zero) are deleted first; their visit times are identically
zero and must not enter the condition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import PollingModel, validate


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    margin: float
    retained_queues: tuple[int, ...]
    zero_visit_queues: tuple[int, ...] = field(default=())

    @property
    def supported(self) -> bool:
        """False when a retained queue has zero mean visit time (undefined case)."""
        return not self.zero_visit_queues


def _spectral_radius(m: np.ndarray, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Perron-Frobenius root of a non-negative matrix by power iteration.

    Iterates on m + I, whose Perron root is the same plus one: the shift
    breaks the eigenvalue ties of periodic (cyclic) matrices that would make
    plain power iteration oscillate.  Matrices with a defective or
    near-degenerate dominant eigenvalue (e.g. nilpotent routing patterns)
    converge only linearly, so after a short iteration budget the exact dense
    eigensolver takes over.
    """
    k = m.shape[0]
    shifted = m + np.eye(k)
    v = np.full(k, 1.0 / np.sqrt(k))
    lam = 0.0
    for _ in range(max_iter):
        w = shifted @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        w /= nw
        lam_new = float(w @ (shifted @ w))
        if abs(lam_new - lam) < tol:
            return lam_new - 1.0
        v, lam = w, lam_new
    # slow or defective dominant eigenspace: dense eigensolver
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def load_matrix(model: PollingModel) -> np.ndarray:
    """R[i][j] = lambda_i^(V_j) E[B_i] over all N queues (no deletion)."""
    n = model.n
    rates = model.rate_matrix
    means = np.array([d.mean for d in model.service])
    return rates[:, 0::2] * means[:, None]


def stability_report(model: PollingModel) -> StabilityReport:
    problems = validate(model)
    if problems:
        raise ValueError("invalid model: " + "; ".join(problems))
    rates = model.rate_matrix
    joined = [i for i in range(1, model.n + 1) if rates[i - 1].sum() > 0.0]
    if not joined:
        return StabilityReport(stable=True, margin=-1.0, retained_queues=())
    idx = np.array([i - 1 for i in joined])
    r = load_matrix(model)[np.ix_(idx, idx)]
    margin = _spectral_radius(r) - 1.0

    # Retained queues whose visit-period rates vanish everywhere still have
    # E[V_i] = 0; the spectral condition assumes E[V_i] > 0, so flag them.
    zero_visit = []
    if margin < 0.0:
        from .mva import mean_visit_times

        try:
            ev = mean_visit_times(model)
            zero_visit = [i for i in joined if ev[i - 1] == 0.0]
        except (ValueError, np.linalg.LinAlgError):
            zero_visit = []
    return StabilityReport(
        stable=margin < 0.0,
        margin=float(margin),
        retained_queues=tuple(joined),
        zero_visit_queues=tuple(zero_visit),
    )
