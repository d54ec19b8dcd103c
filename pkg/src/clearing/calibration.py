"""Choose policy parameters that hit a prescribed expected cycle length."""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import poisson as pt
from .policies import NEEDS_Q, PolicyKind, PolicySpec, check_rate, expected_cycle

QP_INTEGRALITY_TOL = 1e-9
MAX_BISECTIONS = 200
ABS_WIDTH = 1e-12


class CalibrationError(ValueError):
    """The target cycle length cannot be reached by the requested policy family."""


class IntegralityError(CalibrationError):
    """QP needs ``lambda * target`` to be a positive integer."""


@dataclass(frozen=True)
class FeasibleRange:
    """Open interval of attainable E[C]; QP's attainable set is discrete instead."""

    lo: float
    hi: float
    discrete_step: float | None = None

    def contains(self, target: float) -> bool:
        return self.lo < target < self.hi

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": None if math.isinf(self.hi) else self.hi,
                "discrete_step": self.discrete_step}


def _check_target(target: float) -> float:
    target = float(target)
    if not (math.isfinite(target) and target > 0):
        raise ValueError(f"target cycle length must be positive and finite, got {target!r}")
    return target


def feasible_cycle_range(kind, q: int | None, lam: float) -> FeasibleRange:
    kind = PolicyKind.parse(kind)
    lam = check_rate(lam)
    if kind in NEEDS_Q and kind is not PolicyKind.QP and q is None:
        raise CalibrationError(f"{kind.value} needs q to determine its feasible range")
    if kind is PolicyKind.QP:
        return FeasibleRange(1.0 / lam, math.inf, discrete_step=1.0 / lam)
    if kind is PolicyKind.TP1:
        return FeasibleRange(0.0, math.inf)
    if kind in (PolicyKind.TP2, PolicyKind.RTP1):
        return FeasibleRange(1.0 / lam, math.inf)
    if kind is PolicyKind.HP1:
        return FeasibleRange(0.0, q / lam)
    # HP2, RHP1: at least one order per cycle, at most q.
    return FeasibleRange(1.0 / lam, q / lam)


def _bisect_T(make, lam: float, target: float) -> float:
    """Solve ``expected_cycle(make(T)) = target`` for ``T``; E[C] is increasing in ``T``."""

    def f(T: float) -> float:
        return expected_cycle(make(T), lam) - target

    hi = target
    while f(hi) < 0:
        hi *= 2.0
        if lam * hi > pt.MAX_MU:
            raise CalibrationError(
                f"target {target:g} needs lambda*T above {pt.MAX_MU:g}; too close to the upper limit"
            )
    lo = hi / 2.0
    while f(lo) > 0:
        lo /= 2.0
        if lo < 1e-300:
            raise CalibrationError(f"target {target:g} too close to the lower limit")
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi) or hi - lo <= ABS_WIDTH * min(1.0, hi):
            break
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return lo if abs(f(lo)) <= abs(f(hi)) else hi


def calibrate(kind, q: int | None, target: float, lam: float) -> PolicySpec:
    """The policy of ``kind`` (with quantity ``q`` where relevant) whose E[C] equals ``target``."""
    kind = PolicyKind.parse(kind)
    lam = check_rate(lam)
    target = _check_target(target)
    rng = feasible_cycle_range(kind, q, lam)
    if kind is PolicyKind.QP:
        load = lam * target
        n = round(load)
        if n < 1 or abs(load - n) > QP_INTEGRALITY_TOL:
            raise IntegralityError(
                f"QP attains only E[C] = k/lambda; lambda*target = {load:.12g} is not a positive integer"
            )
        return PolicySpec(kind, q=int(n))
    if not rng.contains(target):
        raise CalibrationError(
            f"{kind.value} cannot reach E[C] = {target:.12g}; feasible range is "
            f"({rng.lo:.12g}, {rng.hi:.12g})"
        )
    if kind is PolicyKind.TP1:
        return PolicySpec(kind, T=target)
    if kind is PolicyKind.TP2:
        return PolicySpec(kind, T=target - 1.0 / lam)
    qq = q if kind is not PolicyKind.RTP1 else None
    T = _bisect_T(lambda t: PolicySpec(kind, q=qq, T=t), lam, target)
    return PolicySpec(kind, q=qq, T=T)
