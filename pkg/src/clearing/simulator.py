"""Regenerative Monte Carlo simulation of clearing policies.

Cycles are i.i.d., so each one starts with an empty system at time 0 and
stops at the policy's clearing instant.  Arrivals are built from exponential
interarrival times drawn by inverse transform, ``-log(u) / lam`` with ``u``
strictly inside (0, 1).

Random streams: cycle index ``i`` belongs to block ``i // block_size``, and
block ``b`` draws from ``Philox(SeedSequence(seed, spawn_key=(b,)))``.  The
block layout depends only on the inputs, so a run is bitwise reproducible
whatever the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .policies import PolicyKind, PolicySpec, check_rate

BLOCK_SIZE = 8192
# Upper bound on arrival-matrix cells held per block (8 bytes each).
MAX_BLOCK_CELLS = 1 << 22
_U53 = 2.0**-53


@dataclass(frozen=True)
class CycleRecord:
    length: float
    orders: int
    cum_wait: float


@dataclass(frozen=True)
class CycleBatch:
    """Per-cycle outcomes in cycle-index order."""

    length: np.ndarray
    orders: np.ndarray
    cum_wait: np.ndarray
    # Start of the window in which the load was cleared; zero except for the
    # revised policies, which may skip empty windows first.
    window_start: np.ndarray

    def __len__(self) -> int:
        return int(self.length.size)


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float

    def within(self, target: float, z: float = 3.0) -> bool:
        """Whether ``target`` lies within ``z`` standard errors.

        A floor of 1e-12 relative covers cycle statistics that are constant
        (zero standard error) up to floating-point summation.
        """
        return abs(self.value - target) <= z * self.se + 1e-12 * max(1.0, abs(target))

    def to_dict(self) -> dict:
        return {"value": self.value, "se": self.se}


@dataclass(frozen=True)
class SimEstimate:
    policy: PolicySpec
    lam: float
    n_cycles: int
    seed: int
    mean_cycle: Estimate
    mean_orders: Estimate
    mean_wait: Estimate
    aod_hat: Estimate
    martingale_residual_w: Estimate
    martingale_residual_n: Estimate

    def to_dict(self) -> dict:
        out = {"policy": self.policy.to_dict(), "lambda": self.lam,
               "n_cycles": self.n_cycles, "seed": self.seed}
        for name in ("mean_cycle", "mean_orders", "mean_wait", "aod_hat",
                     "martingale_residual_w", "martingale_residual_n"):
            out[name] = getattr(self, name).to_dict()
        return out


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _exponentials(rng: np.random.Generator, shape: tuple[int, int], lam: float) -> np.ndarray:
    # Odd multiples of 2**-54, so u never hits 0 or 1.
    u = (rng.integers(0, 1 << 53, size=shape, dtype=np.int64) + 0.5) * _U53
    return -np.log(u) / lam


def _arrivals(rng, m: int, k: int, lam: float) -> np.ndarray:
    return np.cumsum(_exponentials(rng, (m, k), lam), axis=1)


def _extend_past(rng, arrivals: np.ndarray, horizon: np.ndarray, lam: float, step: int) -> np.ndarray:
    """Append arrival columns until every row has an arrival after its horizon."""
    while np.any(arrivals[:, -1] <= horizon):
        more = _arrivals(rng, arrivals.shape[0], step, lam) + arrivals[:, -1:]
        arrivals = np.concatenate([arrivals, more], axis=1)
    return arrivals


def _columns_hint(p: PolicySpec, lam: float) -> int:
    if p.kind is PolicyKind.QP or p.q is not None:
        return p.q
    mu = lam * p.T
    return int(math.ceil(mu + 6.0 * math.sqrt(mu))) + 8


def _block_size(p: PolicySpec, lam: float) -> int:
    return max(1, min(BLOCK_SIZE, MAX_BLOCK_CELLS // _columns_hint(p, lam)))


def _sample_block(p: PolicySpec, lam: float, rng: np.random.Generator, m: int) -> CycleBatch:
    kind = p.kind
    k = _columns_hint(p, lam)
    arrivals = _arrivals(rng, m, k, lam)
    first = arrivals[:, 0]
    start = np.zeros(m)
    if kind is PolicyKind.QP:
        tau = arrivals[:, -1].copy()
    elif kind is PolicyKind.HP1:
        tau = np.minimum(arrivals[:, -1], p.T)
    elif kind is PolicyKind.HP2:
        tau = np.minimum(arrivals[:, -1], first + p.T)
    elif kind is PolicyKind.RHP1:
        # Empty windows are skipped; the clock and quantity target restart at
        # each boundary, so the load leaves at the q-th arrival or at the end
        # of the first window that saw an arrival.
        end = np.maximum(np.ceil(first / p.T), 1.0) * p.T
        start = end - p.T
        tau = np.minimum(arrivals[:, -1], end)
    else:
        if kind is PolicyKind.TP1:
            tau = np.full(m, p.T)
        elif kind is PolicyKind.TP2:
            tau = first + p.T
        else:  # RTP1
            tau = np.maximum(np.ceil(first / p.T), 1.0) * p.T
            start = tau - p.T
        arrivals = _extend_past(rng, arrivals, tau, lam, k)
    on_board = arrivals <= tau[:, None]
    orders = on_board.sum(axis=1)
    wait = np.where(on_board, tau[:, None] - arrivals, 0.0).sum(axis=1)
    return CycleBatch(length=tau, orders=orders, cum_wait=wait, window_start=start)


def sample_cycle(p: PolicySpec, lam: float, rng: np.random.Generator) -> CycleRecord:
    """Draw a single cycle; the same kernel as :func:`simulate_cycles` with one row."""
    lam = check_rate(lam)
    b = _sample_block(p, lam, rng, 1)
    return CycleRecord(length=float(b.length[0]), orders=int(b.orders[0]), cum_wait=float(b.cum_wait[0]))


def _check_run(n_cycles: int, seed: int) -> None:
    if isinstance(n_cycles, bool) or int(n_cycles) != n_cycles or n_cycles < 1:
        raise ValueError(f"n_cycles must be a positive integer, got {n_cycles!r}")
    if isinstance(seed, bool) or int(seed) != seed or not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed!r}")


def simulate_cycles(p: PolicySpec, lam: float, n_cycles: int, seed: int, workers: int = 1) -> CycleBatch:
    lam = check_rate(lam)
    _check_run(n_cycles, seed)
    size = _block_size(p, lam)
    counts = [min(size, n_cycles - lo) for lo in range(0, n_cycles, size)]

    def run(block: int) -> CycleBatch:
        return _sample_block(p, lam, block_rng(int(seed), block), counts[block])

    if workers > 1 and len(counts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(counts))))
    else:
        parts = [run(b) for b in range(len(counts))]
    return CycleBatch(
        length=np.concatenate([b.length for b in parts]),
        orders=np.concatenate([b.orders for b in parts]),
        cum_wait=np.concatenate([b.cum_wait for b in parts]),
        window_start=np.concatenate([b.window_start for b in parts]),
    )


def _mean(x: np.ndarray) -> Estimate:
    n = x.size
    se = math.sqrt(x.var(ddof=1) / n) if n > 1 else math.inf
    return Estimate(float(x.mean()), se)


def ratio_estimate(num: np.ndarray, den: np.ndarray) -> Estimate:
    """``mean(num) / mean(den)`` with a delta-method standard error."""
    n = num.size
    mn, md = num.mean(), den.mean()
    r = mn / md
    if n < 2:
        return Estimate(float(r), math.inf)
    cov = np.cov(np.vstack([num, den]), ddof=1)
    var = (cov[0, 0] - 2.0 * r * cov[0, 1] + r * r * cov[1, 1]) / (n * md * md)
    return Estimate(float(r), math.sqrt(max(var, 0.0)))


def estimate(batch: CycleBatch, p: PolicySpec, lam: float, seed: int) -> SimEstimate:
    orders = batch.orders.astype(float)
    # Revised policies: residuals use the final window only, which is not a
    # stopping time of the whole cycle, so they are reported but carry no
    # zero-mean guarantee.
    resid_w = batch.cum_wait - (orders * orders - orders) / (2.0 * lam)
    resid_n = orders - lam * (batch.length - batch.window_start)
    return SimEstimate(
        policy=p,
        lam=lam,
        n_cycles=len(batch),
        seed=int(seed),
        mean_cycle=_mean(batch.length),
        mean_orders=_mean(orders),
        mean_wait=_mean(batch.cum_wait),
        aod_hat=ratio_estimate(batch.cum_wait, orders),
        martingale_residual_w=_mean(resid_w),
        martingale_residual_n=_mean(resid_n),
    )


def simulate(p: PolicySpec, lam: float, n_cycles: int, seed: int, workers: int = 1) -> SimEstimate:
    """Estimate E[C], E[N], E[W] and AOD from ``n_cycles`` regeneration cycles."""
    lam = check_rate(lam)
    batch = simulate_cycles(p, lam, n_cycles, seed, workers=workers)
    return estimate(batch, p, lam, seed)


def martingale_check(p: PolicySpec, lam: float, n_cycles: int, seed: int) -> tuple[Estimate, Estimate]:
    """Cycle means of ``W - (N**2 - N) / (2 lam)`` and ``N - lam tau``."""
    est = simulate(p, lam, n_cycles, seed)
    return est.martingale_residual_w, est.martingale_residual_n
