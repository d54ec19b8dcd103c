"""Closed-form performance of renewal-type clearing policies under Poisson input.

Each policy's clearing instant ``tau`` is a stopping time of the arrival
process ``N(t)``.  Optional stopping for the martingales
``W(t) - (N(t)**2 - N(t)) / (2 lam)`` and ``N(t) - lam t`` gives

    E[W(tau)] = E[N(tau)**2 - N(tau)] / (2 lam),    E[tau] = E[N(tau)] / lam,

so every metric reduces to the first two moments of ``N(tau)``, which for the
hybrid policies are truncated Poisson moments with mean ``lam * T``.

Average order delay is ``AOD = E[W] / (lam E[C])`` by the renewal reward theorem.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum

from . import poisson as pt


class PolicyKind(str, Enum):
    QP = "QP"
    TP1 = "TP1"
    TP2 = "TP2"
    HP1 = "HP1"
    HP2 = "HP2"
    RTP1 = "RTP1"
    RHP1 = "RHP1"

    @classmethod
    def parse(cls, value: "str | PolicyKind") -> "PolicyKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown policy kind {value!r}; expected one of {names}") from None


NEEDS_Q = frozenset({PolicyKind.QP, PolicyKind.HP1, PolicyKind.HP2, PolicyKind.RHP1})
NEEDS_T = frozenset(set(PolicyKind) - {PolicyKind.QP})
# Policies that can clear with zero orders on board.
ALLOWS_EMPTY = frozenset({PolicyKind.TP1, PolicyKind.HP1})


class PolicyError(ValueError):
    """Invalid policy parameters."""


@dataclass(frozen=True)
class PolicySpec:
    """One clearing policy: its kind plus a quantity level ``q`` and/or a time ``T``."""

    kind: PolicyKind
    q: int | None = None
    T: float | None = None

    def __post_init__(self) -> None:
        kind = PolicyKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind in NEEDS_Q:
            if self.q is None:
                raise PolicyError(f"{kind.value} requires a quantity parameter q")
            if isinstance(self.q, bool) or int(self.q) != self.q:
                raise PolicyError(f"q must be an integer, got {self.q!r}")
            object.__setattr__(self, "q", int(self.q))
            min_q = 2 if kind is PolicyKind.HP2 else 1
            if self.q < min_q:
                raise PolicyError(f"{kind.value} requires q >= {min_q}, got {self.q}")
        elif self.q is not None:
            raise PolicyError(f"{kind.value} takes no quantity parameter")
        if kind in NEEDS_T:
            if self.T is None:
                raise PolicyError(f"{kind.value} requires a time parameter T")
            T = float(self.T)
            if not (math.isfinite(T) and T > 0):
                raise PolicyError(f"T must be positive and finite, got {self.T!r}")
            object.__setattr__(self, "T", T)
        elif self.T is not None:
            raise PolicyError(f"{kind.value} takes no time parameter")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "q": self.q, "T": self.T}

    def label(self) -> str:
        parts = [self.kind.value]
        if self.q is not None:
            parts.append(f"q={self.q}")
        if self.T is not None:
            parts.append(f"T={self.T:.12g}")
        return " ".join(parts)


@dataclass(frozen=True)
class CostParams:
    fixed_dispatch: float = 0.0
    unit_transport: float = 0.0
    waiting_rate: float = 0.0

    def __post_init__(self) -> None:
        for name in ("fixed_dispatch", "unit_transport", "waiting_rate"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be nonnegative and finite, got {value!r}")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class PolicyMetrics:
    expected_cycle: float
    expected_wait: float
    expected_orders: float
    aod: float
    avg_cost: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def check_rate(lam: float) -> float:
    lam = float(lam)
    if not (math.isfinite(lam) and lam > 0):
        raise ValueError(f"arrival rate must be positive and finite, got {lam!r}")
    return lam


def _load(p: PolicySpec, lam: float) -> float:
    mu = lam * p.T
    if mu > pt.MAX_MU:
        raise PolicyError(f"lambda*T = {mu:g} exceeds the supported maximum {pt.MAX_MU:g}")
    return mu


def _nonempty_prob(mu: float) -> float:
    """``P(N(T) >= 1) = 1 - exp(-lam T)``."""
    return -math.expm1(-mu)


def expected_cycle(p: PolicySpec, lam: float) -> float:
    """``E[C]``, the mean time between clearing epochs."""
    lam = check_rate(lam)
    k = p.kind
    if k is PolicyKind.QP:
        return p.q / lam
    if k is PolicyKind.TP1:
        return p.T
    if k is PolicyKind.TP2:
        return 1.0 / lam + p.T
    mu = _load(p, lam)
    if k is PolicyKind.HP1:
        return pt.truncated_mean(mu, p.q) / lam
    if k is PolicyKind.HP2:
        return (1.0 + pt.truncated_mean(mu, p.q - 1)) / lam
    if k is PolicyKind.RTP1:
        return p.T / _nonempty_prob(mu)
    return pt.truncated_mean(mu, p.q) / (lam * _nonempty_prob(mu))


def expected_wait(p: PolicySpec, lam: float) -> float:
    """``E[W]``, expected cumulative order-waiting within one cycle."""
    lam = check_rate(lam)
    k = p.kind
    if k is PolicyKind.QP:
        return p.q * (p.q - 1) / (2.0 * lam)
    if k is PolicyKind.TP1:
        return lam * p.T**2 / 2.0
    if k is PolicyKind.TP2:
        return lam * p.T**2 / 2.0 + p.T
    mu = _load(p, lam)
    if k is PolicyKind.RTP1:
        return lam * p.T**2 / (2.0 * _nonempty_prob(mu))
    if k is PolicyKind.HP2:
        tm = pt.truncated_moments(mu, p.q - 1)
        # E[Z(Z + 1)] with Z = Y_{q-1}
        return (tm.m2 + tm.m1) / (2.0 * lam)
    tm = pt.truncated_moments(mu, p.q)
    wait = (tm.m2 - tm.m1) / (2.0 * lam)
    if k is PolicyKind.RHP1:
        wait /= _nonempty_prob(mu)
    return wait


def aod(p: PolicySpec, lam: float) -> float:
    """Average order delay ``E[W] / (lam E[C])``."""
    lam = check_rate(lam)
    return expected_wait(p, lam) / (lam * expected_cycle(p, lam))


def aod_closed_form(p: PolicySpec, lam: float) -> float:
    """Average order delay from the simplified per-policy expressions.

    The nonempty-probability factor of the revised policies cancels, so RTP1
    shares TP1's formula and RHP1 shares HP1's.
    """
    lam = check_rate(lam)
    k = p.kind
    if k is PolicyKind.QP:
        return (p.q - 1) / (2.0 * lam)
    if k in (PolicyKind.TP1, PolicyKind.RTP1):
        return p.T / 2.0
    if k is PolicyKind.TP2:
        return (p.T + lam * p.T**2 / 2.0) / (1.0 + lam * p.T)
    mu = _load(p, lam)
    if k is PolicyKind.HP2:
        tm = pt.truncated_moments(mu, p.q - 1)
        return (tm.m2 + tm.m1) / (2.0 * lam) / (1.0 + tm.m1)
    tm = pt.truncated_moments(mu, p.q)
    return (tm.m2 - tm.m1) / (2.0 * lam) / tm.m1


def avg_cost(p: PolicySpec, lam: float, cost: CostParams) -> float:
    """Long-run cost rate ``(A_D + C_D E[N(tau)] + omega E[W]) / E[C]``."""
    lam = check_rate(lam)
    ec = expected_cycle(p, lam)
    ew = expected_wait(p, lam)
    return (cost.fixed_dispatch + cost.unit_transport * lam * ec + cost.waiting_rate * ew) / ec


def metrics(p: PolicySpec, lam: float, cost: CostParams | None = None) -> PolicyMetrics:
    lam = check_rate(lam)
    ec = expected_cycle(p, lam)
    ew = expected_wait(p, lam)
    return PolicyMetrics(
        expected_cycle=ec,
        expected_wait=ew,
        expected_orders=lam * ec,
        aod=ew / (lam * ec),
        avg_cost=None if cost is None else avg_cost(p, lam, cost),
    )
