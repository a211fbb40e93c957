"""Routing strategies for smart customers.

A strategy assigns to every period of the cycle the queue that arriving
customers join while the server is in that period: exactly one arrival rate
per period equals the total rate and the rest are zero.  This module builds
models from strategy profiles, scores them by the mean sojourn time of an
arbitrary customer, enumerates all profiles to find optimal (or worst stable)
ones, and sweeps a service-time parameter to map out optimality regions.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .model import Distribution, PollingModel, StrategyProfile, periods
from .mva import MvaError, solve_mva

_MAX_ENUM_QUEUES = 4
_TIE_TOL = 1e-9


def apply_strategy(template: PollingModel, profile: StrategyProfile,
                   total_rate: float) -> PollingModel:
    """Model with rate ``total_rate`` to profile's target during each period.

    Wildcard targets (0) leave their period's column empty; they are only
    meaningful for periods of zero length.
    """
    n = template.n
    if len(profile.targets) != 2 * n:
        raise ValueError(f"profile needs {2 * n} targets")
    rates = np.zeros((n, 2 * n))
    for col, target in enumerate(profile.targets):
        if target == 0:
            continue
        if not 1 <= target <= n:
            raise ValueError(f"target {target} out of range 1..{n}")
        rates[target - 1, col] = total_rate
    return template.replace_rates(rates)


def canonicalize(template: PollingModel, profile: StrategyProfile) -> StrategyProfile:
    """Replace targets of zero-length periods with the wildcard, to fixed point.

    A visit period has zero length when its queue is never joined; a
    switch-over has zero length when its distribution is a point mass at 0.
    Dropping a target can empty another queue, hence the iteration.
    """
    n = template.n
    targets = list(profile.targets)
    while True:
        joined = set(t for t in targets if t != 0)
        changed = False
        for col, p in enumerate(periods(n)):
            if targets[col] == 0:
                continue
            if p.kind == "V":
                zero = p.index not in joined
            else:
                zero = template.switchover[p.index - 1].mean == 0.0
            if zero:
                targets[col] = 0
                changed = True
        if not changed:
            return StrategyProfile(tuple(targets))


def _fast_margin(model: PollingModel) -> float:
    """Stability margin without validation or visit-time solves."""
    from .stability import _spectral_radius, load_matrix

    rates = model.rate_matrix
    joined = np.flatnonzero(rates.sum(axis=1) > 0.0)
    if len(joined) == 0:
        return -1.0
    r = load_matrix(model)[np.ix_(joined, joined)]
    return _spectral_radius(r) - 1.0


def mean_sojourn(model: PollingModel) -> float:
    """Mean sojourn time of an arbitrary customer; +inf when unstable."""
    if _fast_margin(model) >= 0.0:
        return float("inf")
    try:
        sol = solve_mva(model, check_stability=False)
    except MvaError:
        return float("inf")
    lam = np.asarray(sol.eff_rate)
    total = lam.sum()
    if total <= 0.0:
        raise ValueError("no customers ever arrive")
    eb = np.array([d.mean for d in model.service])
    return float(np.sum(lam / total * (np.asarray(sol.wait) + eb)))


_PROFILE_CACHE: dict = {}


def enumerate_profiles(template: PollingModel):
    """All canonical strategy profiles, deduplicated, in lexicographic order."""
    n = template.n
    if n > _MAX_ENUM_QUEUES:
        raise ValueError(f"enumeration is limited to {_MAX_ENUM_QUEUES} queues")
    # canonicalization only looks at n and which switch-overs are zero-length
    key = (n, tuple(d.mean == 0.0 for d in template.switchover))
    if key in _PROFILE_CACHE:
        return _PROFILE_CACHE[key]
    seen = {}
    for combo in product(range(1, n + 1), repeat=2 * n):
        canon = canonicalize(template, StrategyProfile(combo))
        if canon.targets not in seen:
            seen[canon.targets] = canon
    out = [seen[k] for k in sorted(seen)]
    _PROFILE_CACHE[key] = out
    return out


def optimize(template: PollingModel, total_rate: float,
             objective: str = "minimize"):
    """Best (or worst stable) profile by exhaustive enumeration.

    Returns (profile, value).  Ties break towards the lexicographically
    smallest canonical profile, which the sorted enumeration provides.
    """
    if objective not in ("minimize", "maximize"):
        raise ValueError("objective must be 'minimize' or 'maximize'")
    best = None
    best_value = None
    for profile in enumerate_profiles(template):
        if all(t == 0 for t in profile.targets):
            continue
        value = mean_sojourn(apply_strategy(template, profile, total_rate))
        if not np.isfinite(value):
            continue
        # ties within solver noise keep the lexicographically first profile
        if best is None or (value < best_value - _TIE_TOL
                            if objective == "minimize"
                            else value > best_value + _TIE_TOL):
            best, best_value = profile, value
    if best is None:
        raise ValueError("no stable strategy profile exists")
    return best, best_value


@dataclass(frozen=True)
class SweepResult:
    grid: tuple[float, ...]
    best_profile: tuple[StrategyProfile, ...]
    best_value: tuple[float, ...]
    thresholds: tuple[float, ...]


def _with_mean(dist: Distribution, mean: float) -> Distribution:
    """Same distribution family rescaled to the requested mean."""
    if mean < 0.0:
        raise ValueError("mean must be >= 0")
    if mean == 0.0:
        return Distribution.deterministic(0.0)
    if dist.family == "exponential":
        return Distribution.exponential(mean)
    if dist.family == "deterministic":
        return Distribution.deterministic(mean)
    if dist.family == "erlang":
        return Distribution.erlang(int(dist.params[0]), mean)
    p, m1, m2 = dist.params
    scale = mean / dist.mean
    return Distribution.hyperexp2(p, m1 * scale, m2 * scale)


def _template_at(template: PollingModel, queue: int, mean: float) -> PollingModel:
    service = list(template.service)
    service[queue - 1] = _with_mean(service[queue - 1], mean)
    return PollingModel(template.disciplines, tuple(service),
                        template.switchover, template.rates)


def sweep(template: PollingModel, total_rate: float, grid,
          queue: int = 1, refine_tol: float = 0.005) -> SweepResult:
    """Optimal profile along a grid of mean service times for one queue.

    Each boundary between adjacent grid points with different optima is
    refined by bisection on which of the two profiles wins, down to
    ``refine_tol`` on the parameter.
    """
    grid = [float(g) for g in grid]
    best_profiles = []
    best_values = []
    for g in grid:
        profile, value = optimize(_template_at(template, queue, g), total_rate)
        best_profiles.append(profile)
        best_values.append(value)

    thresholds = []
    for a, b, pa, pb in zip(grid, grid[1:], best_profiles, best_profiles[1:]):
        if pa.targets == pb.targets:
            continue
        lo, hi = a, b
        while hi - lo > refine_tol:
            mid = 0.5 * (lo + hi)
            t = _template_at(template, queue, mid)
            va = mean_sojourn(apply_strategy(t, pa, total_rate))
            vb = mean_sojourn(apply_strategy(t, pb, total_rate))
            if va <= vb:
                lo = mid
            else:
                hi = mid
        thresholds.append(0.5 * (lo + hi))

    return SweepResult(
        grid=tuple(grid),
        best_profile=tuple(best_profiles),
        best_value=tuple(best_values),
        thresholds=tuple(thresholds),
    )


def sweep_values(template: PollingModel, total_rate: float, grid,
                 profiles, queue: int = 1):
    """Mean sojourn of each given profile at each grid point (for plotting)."""
    rows = []
    for g in grid:
        t = _template_at(template, queue, float(g))
        rows.append([mean_sojourn(apply_strategy(t, p, total_rate))
                     for p in profiles])
    return np.array(rows)
