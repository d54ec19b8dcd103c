"""Grid studies that check the AOD comparison results and truncated-moment lemmas.

Every claim becomes a :class:`Verdict` carrying a signed margin (positive when
the claim holds) and the slack it must clear:

* comparisons of calibrated policies are differences of separately computed
  AODs and must clear ``CLAIM_SLACK`` (1e-9);
* fixed-parameter comparisons and the lemma checks use margins written as
  sums of same-sign terms (no difference of nearly equal numbers), so their
  sign is exact up to relative rounding and they must only be positive;
* equality claims must agree to ``EQUALITY_RTOL`` relative.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import poisson as pt
from .calibration import CalibrationError, calibrate
from .policies import CostParams, PolicyKind, PolicyMetrics, PolicySpec, check_rate, metrics
from .simulator import SimEstimate, simulate

CLAIM_SLACK = 1e-9
EQUALITY_RTOL = 1e-14
NONSTRICT_SLACK = -pt.STRICT_SLACK
SIM_Z = 3.0

DEFAULT_RATES = (0.5, 1.0, 2.0, 5.0)
DEFAULT_CYCLE_LOADS = (2, 3, 5)  # targets are load / lambda
DEFAULT_Q = tuple(range(2, 11))
DEFAULT_T = (0.5, 1.0, 2.0, 5.0)
SIM_GRID = ((2.0, 5, 1.5), (0.5, 3, 4.0))
SIM_CYCLES = 100_000
BASE_POLICIES = (PolicyKind.QP, PolicyKind.TP1, PolicyKind.TP2, PolicyKind.HP1, PolicyKind.HP2)

CSV_COLUMNS = ("scenario", "lambda", "target", "kind", "q", "T", "E_C", "E_W", "AOD", "avg_cost")


@dataclass(frozen=True)
class Verdict:
    claim: str
    holds: bool
    margin: float
    slack: float
    mode: str = "strict"  # strict | nonstrict | equality
    context: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"claim": self.claim, "holds": self.holds, "margin": self.margin,
                "slack": self.slack, "mode": self.mode, "context": self.context}


def strict(claim: str, margin: float, slack: float = CLAIM_SLACK, **context) -> Verdict:
    return Verdict(claim, bool(margin > slack), float(margin), slack, "strict", context)


def nonstrict(claim: str, margin: float, slack: float = NONSTRICT_SLACK, **context) -> Verdict:
    return Verdict(claim, bool(margin >= slack), float(margin), slack, "nonstrict", context)


def equality(claim: str, a: float, b: float, rtol: float = EQUALITY_RTOL, **context) -> Verdict:
    rel = abs(a - b) / max(abs(a), abs(b), 1e-300)
    return Verdict(claim, bool(rel <= rtol), float(rtol - rel), rtol, "equality", context)


@dataclass
class ComparisonReport:
    scenario: str
    inputs: dict
    rows: list[tuple[PolicySpec, PolicyMetrics]] = field(default_factory=list)
    verdicts: list[Verdict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def all_hold(self) -> bool:
        return all(v.holds for v in self.verdicts)

    def failures(self) -> list[Verdict]:
        return [v for v in self.verdicts if not v.holds]

    def extend(self, other: "ComparisonReport") -> None:
        self.rows.extend(other.rows)
        self.verdicts.extend(other.verdicts)
        self.notes.extend(other.notes)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "inputs": self.inputs,
            "rows": [{"policy": p.to_dict(), "metrics": m.to_dict()} for p, m in self.rows],
            "verdicts": [v.to_dict() for v in self.verdicts],
            "notes": list(self.notes),
            "all_hold": self.all_hold,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_json_default)

    def csv_rows(self) -> list[dict]:
        out = []
        for p, m in self.rows:
            out.append({
                "scenario": self.scenario,
                "lambda": _fmt(self.inputs.get("lambda")),
                "target": _fmt(self.inputs.get("target")),
                "kind": p.kind.value,
                "q": "" if p.q is None else p.q,
                "T": _fmt(p.T),
                "E_C": _fmt(m.expected_cycle),
                "E_W": _fmt(m.expected_wait),
                "AOD": _fmt(m.aod),
                "avg_cost": _fmt(m.avg_cost),
            })
        return out


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_csv(reports: Iterable[ComparisonReport], stream=None) -> str:
    buf = stream if stream is not None else io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for report in reports:
        for row in report.csv_rows():
            writer.writerow(row)
    return buf.getvalue() if stream is None else ""


# -- fixed expected cycle length ---------------------------------------------


def _try_calibrate(report: ComparisonReport, kind: PolicyKind, q, target, lam, cost):
    try:
        spec = calibrate(kind, q, target, lam)
    except CalibrationError as exc:
        report.notes.append(f"{kind.value}{'' if q is None else f' q={q}'}: {exc}")
        return None
    m = metrics(spec, lam, cost)
    report.rows.append((spec, m))
    return spec, m


def _increasing_in_q(claim: str, series: list[tuple[int, float]], target: float) -> list[Verdict]:
    out = []
    for (qa, a), (qb, b) in zip(series, series[1:]):
        out.append(strict(claim, b - a, q_from=qa, q_to=qb, target=target))
    return out


def compare_fixed_cycle(lam: float, target: float, q_list: Sequence[int],
                        cost: CostParams | None = None) -> ComparisonReport:
    """Calibrate every family to ``E[C] = target`` and compare their AODs."""
    lam = check_rate(lam)
    target = float(target)
    q_list = sorted(set(int(q) for q in q_list))
    report = ComparisonReport("fixed-cycle", {"lambda": lam, "target": target, "q_list": q_list})

    qp = _try_calibrate(report, PolicyKind.QP, None, target, lam, cost)
    if qp is None:
        load = lam * target
        lo, hi = math.floor(load), math.ceil(load)
        advisory = [f"QP q={k}: AOD={(k - 1) / (2 * lam):.12g} at E[C]={k / lam:.12g}"
                    for k in (lo, hi) if k >= 1]
        report.notes.append("advisory (not compared): " + "; ".join(advisory))
    tp1 = _try_calibrate(report, PolicyKind.TP1, None, target, lam, cost)
    tp2 = _try_calibrate(report, PolicyKind.TP2, None, target, lam, cost)
    rtp1 = _try_calibrate(report, PolicyKind.RTP1, None, target, lam, cost)
    hybrids: dict[PolicyKind, list[tuple[int, float]]] = {
        PolicyKind.HP1: [], PolicyKind.HP2: [], PolicyKind.RHP1: []}
    for q in q_list:
        for kind in hybrids:
            if kind is PolicyKind.HP2 and q < 2:
                continue
            got = _try_calibrate(report, kind, q, target, lam, cost)
            if got is not None:
                hybrids[kind].append((q, got[1].aod))

    v = report.verdicts
    if qp is not None:
        base = qp[1].aod
        for spec, m in report.rows:
            if spec.kind is PolicyKind.QP:
                continue
            v.append(strict("qp-best:QP<" + spec.kind.value, m.aod - base, policy=spec.label(), target=target))
    for kind, ref, name in ((PolicyKind.HP1, tp1, "hybrid-beats-time:HP1<TP1"), (PolicyKind.HP2, tp2, "hybrid-beats-time:HP2<TP2"),
                            (PolicyKind.RHP1, rtp1, "hybrid-beats-time:RHP1<RTP1")):
        if ref is None:
            continue
        for q, a in hybrids[kind]:
            v.append(strict(name, ref[1].aod - a, q=q, target=target))
    v += _increasing_in_q("q-monotone:HP1 increasing in q", hybrids[PolicyKind.HP1], target)
    v += _increasing_in_q("q-monotone:HP2 increasing in q", hybrids[PolicyKind.HP2], target)
    v += _increasing_in_q("q-monotone:RHP1 increasing in q", hybrids[PolicyKind.RHP1], target)
    return report


# -- fixed parameters ----------------------------------------------------------


def _k(p: np.ndarray, start: int = 0) -> np.ndarray:
    return np.arange(start, start + p.size, dtype=float)


def fixed_param_margins(lam: float, q: int, T: float) -> dict[str, float]:
    """AOD gaps at shared ``(q, T)``, each positive when the comparison holds.

    Writing each gap over the part of the Poisson support where the two
    policies differ avoids subtracting nearly equal AODs, which matters when
    truncation is almost inactive (gaps below 1e-12).
    """
    mu = lam * T
    m1 = pt.truncated_mean(mu, q)
    m2 = pt.truncated_second_moment(mu, q)
    low = pt.lower_masses(mu, q)
    k = _k(low)
    tail = pt.tail_masses(mu, q + 1)
    kt = _k(tail, q + 1)
    out = {
        # E[Y_q (q - Y_q)]
        "HP1<QP": math.fsum(k * (q - k) * low) / (2 * lam * m1),
        # mu E[Y_q] - E[Y_q^2] + E[Y_q], which vanishes without truncation
        "HP1<TP1": math.fsum((kt - q) * (kt + q - mu - 1.0) * tail) / (2 * lam * m1),
    }
    if q >= 2:
        r = q - 1
        a = pt.truncated_mean(mu, r)
        low_r = low[: min(r, low.size)]
        kr = _k(low_r)
        tail_r = pt.tail_masses(mu, r + 1)
        ktr = _k(tail_r, r + 1)
        out["HP2<QP"] = math.fsum((r - kr) * (1.0 + kr) * low_r) / (2 * lam * (1.0 + a))
        out["HP2<TP2"] = math.fsum(
            (ktr - r) * ((1.0 + mu) * (ktr + r + 1.0) - mu * (2.0 + mu)) * tail_r
        ) / (2 * lam * (1.0 + mu) * (1.0 + a))
        # E[(Z+1)^2] E[Y_q] - E[Y_q^2] E[Z+1] with Z = Y_{q-1}; the two agree on Y >= q
        out["HP1<HP2"] = math.fsum(((2.0 * k + 1.0) * m1 - m2) * low) / (2 * lam * m1 * (1.0 + a))
    return out


def compare_fixed_params(lam: float, q: int, T: float,
                         cost: CostParams | None = None) -> ComparisonReport:
    """Evaluate all seven policies at shared ``(q, T)``."""
    lam = check_rate(lam)
    if q < 2:
        raise ValueError("fixed-parameter comparison needs q >= 2 so that HP2 is defined")
    specs = {
        PolicyKind.QP: PolicySpec(PolicyKind.QP, q=q),
        PolicyKind.TP1: PolicySpec(PolicyKind.TP1, T=T),
        PolicyKind.TP2: PolicySpec(PolicyKind.TP2, T=T),
        PolicyKind.HP1: PolicySpec(PolicyKind.HP1, q=q, T=T),
        PolicyKind.HP2: PolicySpec(PolicyKind.HP2, q=q, T=T),
        PolicyKind.RTP1: PolicySpec(PolicyKind.RTP1, T=T),
        PolicyKind.RHP1: PolicySpec(PolicyKind.RHP1, q=q, T=T),
    }
    report = ComparisonReport("fixed-params", {"lambda": lam, "q": q, "T": float(T)})
    mets = {kind: metrics(spec, lam, cost) for kind, spec in specs.items()}
    report.rows = [(specs[k], mets[k]) for k in specs]
    margins = fixed_param_margins(lam, q, float(T))
    for name, margin in margins.items():
        report.verdicts.append(strict(f"shared-qT:{name}", margin, slack=0.0, q=q, T=float(T)))
    report.verdicts.append(equality("revised-equals-base:AOD_RHP1=AOD_HP1", mets[PolicyKind.RHP1].aod,
                                    mets[PolicyKind.HP1].aod, q=q, T=float(T)))
    report.verdicts.append(equality("revised-equals-base:AOD_RTP1=AOD_TP1", mets[PolicyKind.RTP1].aod,
                                    mets[PolicyKind.TP1].aod, q=q, T=float(T)))
    return report


# -- truncated-moment lemmas ---------------------------------------------------


@dataclass(frozen=True)
class LemmaGrid:
    mu: tuple[float, ...] = (0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0)
    levels: tuple[int, ...] = tuple(range(1, 51))
    pair_q: tuple[int, ...] = tuple(range(1, 21))
    monotone_mu: tuple[float, ...] = tuple(round(0.1 * i, 10) for i in range(1, 101))
    ratio_levels: tuple[int, ...] = tuple(range(1, 31))
    survival_levels: tuple[int, ...] = tuple(range(1, 21))


def _ratio_increment(mu_a: float, mu_b: float, N: int) -> float:
    """``ratio(mu_b) - ratio(mu_a)``, through the deficit ``N - ratio`` when that is small."""
    da = pt.moment_ratio_deficit(mu_a, N)
    if da < 0.5:
        return da - pt.moment_ratio_deficit(mu_b, N)
    return pt.moment_ratio(mu_b, N) - pt.moment_ratio(mu_a, N)


def _zt_survival_increment(mu_a: float, mu_b: float, n: int) -> float:
    sa = pt.zero_truncated_survival(mu_a, n)
    if sa > 0.5:
        return pt.zero_truncated_cdf(mu_a, n) - pt.zero_truncated_cdf(mu_b, n)
    return pt.zero_truncated_survival(mu_b, n) - sa


def lemma_suite(grid: LemmaGrid | None = None) -> ComparisonReport:
    grid = grid or LemmaGrid()
    report = ComparisonReport("lemmas", {"grid": {k: list(v) for k, v in grid.__dict__.items()}})
    v = report.verdicts
    for mu in grid.mu:
        for M in grid.levels:
            direct, decomposed = pt.var_var_gap_routes(mu, M)
            v.append(equality("var-gap:two routes agree", direct, decomposed, rtol=1e-10, mu=mu, M=M))
            v.append(strict("var-gap:VAR[Y_M]<VAR[Y]", decomposed, slack=0.0, mu=mu, M=M))
            v.append(strict("var-below-mean:VAR[Y_N]<E[Y_N]", pt.mean_minus_variance(mu, M), slack=0.0, mu=mu, N=M))
    for i, mu1 in enumerate(grid.mu):
        for mu2 in grid.mu[:i]:
            for q in grid.pair_q:
                for label, m1f, m2f in (("", pt.truncated_mean, pt.truncated_second_moment),
                                        (" (zero-truncated)", pt.zero_truncated_mean,
                                         pt.zero_truncated_second_moment)):
                    if m1f(mu1, q) <= m1f(mu2, q + 1):
                        v.append(nonstrict("second-moment:E[X_q^2]<=E[Y_{q+1}^2]" + label,
                                           m2f(mu2, q + 1) - m2f(mu1, q), mu1=mu1, mu2=mu2, q=q))
    mus = sorted(grid.monotone_mu)
    for N in grid.ratio_levels:
        if N == 1:
            # Y_1 is an indicator, so the ratio is identically one.
            for mu in mus:
                v.append(equality("moment-ratio:ratio(N=1)=1", pt.moment_ratio(mu, 1), 1.0, mu=mu))
            continue
        for a, b in zip(mus, mus[1:]):
            v.append(strict("moment-ratio:increasing in mu", _ratio_increment(a, b, N),
                            slack=0.0, N=N, mu_from=a, mu_to=b))
    for n in grid.survival_levels:
        for a, b in zip(mus, mus[1:]):
            v.append(strict("zt-survival:P(Ytilde>n) increasing in mu", _zt_survival_increment(a, b, n),
                            slack=0.0, n=n, mu_from=a, mu_to=b))
    return report


# -- simulation cross-checks ---------------------------------------------------


def child_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint64)[0])


def sim_policies(q: int, T: float) -> list[PolicySpec]:
    return [
        PolicySpec(PolicyKind.QP, q=q),
        PolicySpec(PolicyKind.TP1, T=T),
        PolicySpec(PolicyKind.TP2, T=T),
        PolicySpec(PolicyKind.HP1, q=q, T=T),
        PolicySpec(PolicyKind.HP2, q=q, T=T),
        PolicySpec(PolicyKind.RTP1, T=T),
        PolicySpec(PolicyKind.RHP1, q=q, T=T),
    ]


def _within(claim: str, est, target: float, **context) -> Verdict:
    dev = abs(est.value - target)
    band = SIM_Z * est.se + 1e-12 * max(1.0, abs(target))
    return Verdict(claim, est.within(target, SIM_Z), float(band - dev), 0.0, "nonstrict",
                   {**context, "estimate": est.value, "se": est.se, "target": target})


def sim_crosscheck(seed: int, grid=SIM_GRID, n_cycles: int = SIM_CYCLES
                   ) -> tuple[ComparisonReport, list[SimEstimate]]:
    report = ComparisonReport("simulation", {"seed": seed, "n_cycles": n_cycles,
                                             "grid": [list(g) for g in grid]})
    estimates = []
    for gi, (lam, q, T) in enumerate(grid):
        for pi, spec in enumerate(sim_policies(q, T)):
            est = simulate(spec, lam, n_cycles, child_seed(seed, gi, pi))
            estimates.append(est)
            m = metrics(spec, lam)
            ctx = {"policy": spec.label(), "lambda": lam}
            report.rows.append((spec, m))
            report.verdicts += [
                _within("sim:E[C]", est.mean_cycle, m.expected_cycle, **ctx),
                _within("sim:E[N]", est.mean_orders, m.expected_orders, **ctx),
                _within("sim:E[W]", est.mean_wait, m.expected_wait, **ctx),
                _within("sim:AOD", est.aod_hat, m.aod, **ctx),
            ]
            if spec.kind in BASE_POLICIES:
                report.verdicts += [
                    _within("martingale:W-(N^2-N)/(2lam)", est.martingale_residual_w, 0.0, **ctx),
                    _within("martingale:N-lam*tau", est.martingale_residual_n, 0.0, **ctx),
                ]
    return report, estimates


# -- default grids -------------------------------------------------------------


def default_fixed_cycle(rates=DEFAULT_RATES, loads=DEFAULT_CYCLE_LOADS, q_list=DEFAULT_Q,
                        cost: CostParams | None = None) -> list[ComparisonReport]:
    out = []
    for lam in sorted(rates):
        for load in sorted(loads):
            out.append(compare_fixed_cycle(lam, load / lam, q_list, cost))
    return out


def default_fixed_params(rates=DEFAULT_RATES, q_list=DEFAULT_Q, T_list=DEFAULT_T,
                         cost: CostParams | None = None) -> list[ComparisonReport]:
    return [compare_fixed_params(lam, q, T, cost)
            for lam in sorted(rates) for q in sorted(q_list) for T in sorted(T_list)]


def verify(seed: int, rates=DEFAULT_RATES, loads=DEFAULT_CYCLE_LOADS, q_list=DEFAULT_Q,
           T_list=DEFAULT_T, lemma_grid: LemmaGrid | None = None, sim_grid=SIM_GRID,
           n_cycles: int = SIM_CYCLES) -> dict[str, list[ComparisonReport]]:
    """Run the moment checks, both comparison grids and the simulation cross-checks."""
    sim_report, _ = sim_crosscheck(seed, sim_grid, n_cycles)
    return {
        "lemmas": [lemma_suite(lemma_grid)],
        "fixed-cycle": default_fixed_cycle(rates, loads, q_list),
        "fixed-params": default_fixed_params(rates, q_list, T_list),
        "simulation": [sim_report],
    }
