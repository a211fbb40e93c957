"""Core data model for cyclic polling systems with position-dependent arrivals.

A system has N queues served in cyclic order V_1, S_1, V_2, S_2, ..., V_N, S_N
(visit to queue i, then switch-over towards queue i+1).  Poisson arrival rates
may differ per period: ``rates[i][P]`` is the arrival rate at queue i while the
server is in period P.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

EXHAUSTIVE = "exhaustive"
GATED = "gated"

_FAMILIES = ("exponential", "deterministic", "erlang", "hyperexponential-2")


@dataclass(frozen=True)
class Distribution:
    """Nonnegative service/switch-over time distribution with closed-form LST.

    Supported families and parameter layout:

    * ``exponential``: (mean,)
    * ``deterministic``: (value,)  -- value 0 allowed (point mass at 0)
    * ``erlang``: (shape, mean)  -- shape integer >= 1, mean of the whole sum
    * ``hyperexponential-2``: (p, mean1, mean2) -- exp(mean1) w.p. p else exp(mean2)
    """

    family: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown distribution family {self.family!r}")
        if self.family == "exponential":
            (m,) = self.params
            if m <= 0:
                raise ValueError("exponential mean must be > 0")
        elif self.family == "deterministic":
            (d,) = self.params
            if d < 0:
                raise ValueError("deterministic value must be >= 0")
        elif self.family == "erlang":
            k, m = self.params
            if int(k) != k or k < 1 or m <= 0:
                raise ValueError("erlang needs integer shape >= 1 and mean > 0")
        else:
            p, m1, m2 = self.params
            if not (0 <= p <= 1) or m1 <= 0 or m2 <= 0:
                raise ValueError("hyperexponential-2 needs p in [0,1], means > 0")

    # -- constructors ------------------------------------------------------

    @classmethod
    def exponential(cls, mean: float) -> "Distribution":
        return cls("exponential", (float(mean),))

    @classmethod
    def deterministic(cls, value: float) -> "Distribution":
        return cls("deterministic", (float(value),))

    @classmethod
    def erlang(cls, shape: int, mean: float) -> "Distribution":
        return cls("erlang", (float(shape), float(mean)))

    @classmethod
    def hyperexp2(cls, p: float, mean1: float, mean2: float) -> "Distribution":
        return cls("hyperexponential-2", (float(p), float(mean1), float(mean2)))

    # -- transform and moments --------------------------------------------

    def lst(self, w):
        """Laplace-Stieltjes transform E[exp(-w X)]; accepts complex w."""
        if self.family == "exponential":
            (m,) = self.params
            return 1.0 / (1.0 + m * w)
        if self.family == "deterministic":
            (d,) = self.params
            if isinstance(w, complex):
                return np.exp(-w * d)
            return math.exp(-w * d) if w * d < 700 else 0.0
        if self.family == "erlang":
            k, m = self.params
            return (1.0 / (1.0 + (m / k) * w)) ** int(k)
        p, m1, m2 = self.params
        return p / (1.0 + m1 * w) + (1.0 - p) / (1.0 + m2 * w)

    def moment(self, k: int) -> float:
        """Raw moment E[X^k] for k in {1, 2, 3}."""
        if k not in (1, 2, 3):
            raise ValueError("only moments 1..3 are supported")
        if self.family == "exponential":
            (m,) = self.params
            return math.factorial(k) * m**k
        if self.family == "deterministic":
            (d,) = self.params
            return d**k
        if self.family == "erlang":
            sh, m = self.params
            nu = sh / m
            num = 1.0
            for j in range(k):
                num *= sh + j
            return num / nu**k
        p, m1, m2 = self.params
        return math.factorial(k) * (p * m1**k + (1.0 - p) * m2**k)

    @property
    def mean(self) -> float:
        return self.moment(1)

    @property
    def residual_mean(self) -> float:
        """Mean stationary excess E[X^2] / (2 E[X]); 0 for a point mass at 0."""
        m = self.mean
        if m == 0.0:
            return 0.0
        return self.moment(2) / (2.0 * m)


@dataclass(frozen=True, order=True)
class PeriodId:
    """One of the 2N periods in a cycle: visit V_i or switch-over S_i."""

    kind: str  # "V" or "S"
    index: int  # queue index, 1-based

    def __post_init__(self):
        if self.kind not in ("V", "S"):
            raise ValueError("kind must be 'V' or 'S'")

    @property
    def label(self) -> str:
        return f"{self.kind}{self.index}"

    @classmethod
    def parse(cls, label: str) -> "PeriodId":
        kind, idx = label[0].upper(), label[1:]
        return cls(kind, int(idx))

    def __str__(self) -> str:
        return self.label


def V(i: int) -> PeriodId:
    return PeriodId("V", i)


def S(i: int) -> PeriodId:
    return PeriodId("S", i)


def periods(n: int) -> list[PeriodId]:
    """Canonical period order V_1, S_1, ..., V_N, S_N."""
    out = []
    for i in range(1, n + 1):
        out.append(V(i))
        out.append(S(i))
    return out


def period_column(p: PeriodId, n: int) -> int:
    """Column of period p in the canonical N x 2N rate matrix."""
    if not 1 <= p.index <= n:
        raise IndexError(f"period index {p.index} out of range 1..{n}")
    return 2 * (p.index - 1) + (0 if p.kind == "V" else 1)


@dataclass(frozen=True)
class PollingModel:
    """Cyclic polling system with per-period Poisson arrival rates.

    ``rates`` has shape N x 2N in canonical period order (V1, S1, ..., VN, SN):
    row i-1 holds the arrival rates of type-i customers during each period.
    """

    disciplines: tuple[str, ...]
    service: tuple[Distribution, ...]
    switchover: tuple[Distribution, ...]
    rates: tuple[tuple[float, ...], ...]

    @property
    def n(self) -> int:
        return len(self.disciplines)

    @cached_property
    def rate_matrix(self) -> np.ndarray:
        return np.array(self.rates, dtype=float)

    def rate(self, i: int, p: PeriodId) -> float:
        return self.rates[i - 1][period_column(p, self.n)]

    def discipline(self, i: int) -> str:
        return self.disciplines[i - 1]

    def wrap(self, i: int) -> int:
        """Map an arbitrary integer onto the 1..N queue range."""
        return (i - 1) % self.n + 1

    def replace_rates(self, rates: np.ndarray) -> "PollingModel":
        return PollingModel(
            self.disciplines,
            self.service,
            self.switchover,
            tuple(tuple(float(x) for x in row) for row in rates),
        )


def make_model(disciplines, service, switchover, rates) -> PollingModel:
    """Build a PollingModel from sequences, normalising container types."""
    return PollingModel(
        tuple(disciplines),
        tuple(service),
        tuple(switchover),
        tuple(tuple(float(x) for x in row) for row in rates),
    )


def validate(model: PollingModel) -> list[str]:
    """Return human-readable descriptions of every violated model invariant."""
    problems = []
    n = model.n
    if n < 1:
        return ["model needs at least one queue"]
    if len(model.service) != n or len(model.switchover) != n:
        problems.append("service/switchover lists must have one entry per queue")
        return problems
    if len(model.rates) != n or any(len(row) != 2 * n for row in model.rates):
        problems.append(f"rate matrix must be {n} x {2 * n}")
        return problems
    for d in model.disciplines:
        if d not in (EXHAUSTIVE, GATED):
            problems.append(f"unsupported service discipline {d!r}")
    if all(d.mean == 0.0 for d in model.switchover):
        problems.append("no positive switch-over: at least one switch-over time "
                        "must have strictly positive mean")
    for i, row in enumerate(model.rates, start=1):
        for p, lam in zip(periods(n), row):
            if not math.isfinite(lam):
                problems.append(f"non-finite rate for queue {i} during {p}")
            elif lam < 0:
                problems.append(f"negative rate for queue {i} during {p}")
    return problems


def period_sequence(model: PollingModel, start: PeriodId) -> list[PeriodId]:
    """One full cycle of 2N periods beginning at ``start``, wrapping modulo N."""
    n = model.n
    if not 1 <= start.index <= n:
        raise IndexError(f"start index {start.index} out of range 1..{n}")
    cycle = periods(n)
    pos = cycle.index(start)
    return cycle[pos:] + cycle[:pos]


def next_period(model: PollingModel, p: PeriodId) -> PeriodId:
    if p.kind == "V":
        return S(p.index)
    return V(model.wrap(p.index + 1))


def prev_period(model: PollingModel, p: PeriodId) -> PeriodId:
    if p.kind == "S":
        return V(p.index)
    return S(model.wrap(p.index - 1))


@dataclass(frozen=True)
class StrategyProfile:
    """One target queue per period, encoding a routing rule for arrivals.

    ``targets`` follows the canonical period order (V1, S1, ..., VN, SN).
    A target of 0 is the wildcard: the period has zero length because its
    queue is never joined, so the choice there is irrelevant.
    """

    targets: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.targets) // 2

    def __str__(self) -> str:
        return "(" + ",".join("X" if t == 0 else str(t) for t in self.targets) + ")"
