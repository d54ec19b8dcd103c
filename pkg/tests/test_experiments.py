import csv
import io
import json
import math

import pytest

from clearing import experiments as ex
from clearing import poisson as pt
from clearing.policies import PolicyKind, PolicySpec, aod


def _aods(report):
    out = {}
    for p, m in report.rows:
        out[(p.kind.value, p.q)] = m.aod
    return out


def test_fixed_cycle_example():
    r = ex.compare_fixed_cycle(1.0, 3.0, [4, 5, 6])
    assert r.all_hold, r.failures()
    a = _aods(r)
    assert a[("QP", 3)] == pytest.approx(1.0, rel=1e-15)
    assert a[("TP1", None)] == pytest.approx(1.5, rel=1e-15)
    for q in (4, 5, 6):
        assert 1.0 < a[("HP1", q)] < 1.5


def test_fixed_cycle_tp2_bracket():
    r = ex.compare_fixed_cycle(1.0, 3.0, [4])
    a = _aods(r)
    assert a[("TP2", None)] == pytest.approx(4.0 / 3.0, rel=1e-14)
    assert a[("HP2", 4)] < a[("TP2", None)]


def test_fixed_cycle_qp_advisory():
    r = ex.compare_fixed_cycle(2.0, 0.4, [2, 3])
    assert not any(p.kind is PolicyKind.QP for p, _ in r.rows)
    assert any("integer" in n for n in r.notes)
    assert any(n.startswith("advisory") for n in r.notes)
    assert not any(v.claim.startswith("qp-best") for v in r.verdicts)


def test_fixed_cycle_records_infeasible_hybrids():
    # q = 2 cannot reach E[C] = 3 when lam = 1
    r = ex.compare_fixed_cycle(1.0, 3.0, [2, 4])
    assert any("HP1 q=2" in n for n in r.notes)
    assert r.all_hold


def test_fixed_params_example():
    r = ex.compare_fixed_params(1.0, 5, 2.0)
    assert r.all_hold
    assert {v.claim for v in r.verdicts} >= {"shared-qT:HP1<QP", "shared-qT:HP1<TP1", "shared-qT:HP2<QP",
                                             "shared-qT:HP2<TP2", "shared-qT:HP1<HP2"}


def test_fixed_params_small_example():
    r = ex.compare_fixed_params(1.0, 2, 1.0)
    a = _aods(r)
    assert a[("HP1", 2)] == pytest.approx(0.2947930, abs=1e-7)
    assert a[("QP", 2)] == 0.5 and a[("TP1", None)] == 0.5
    assert r.all_hold


def test_fixed_params_slow_arrivals():
    r = ex.compare_fixed_params(1e-3, 5, 2.0)
    assert r.all_hold
    m = ex.fixed_param_margins(1e-3, 5, 2.0)
    assert 0 < m["HP1<TP1"] < 1e-9


@pytest.mark.parametrize("lam,q,T", [(0.5, 10, 0.5), (5.0, 2, 5.0), (2.0, 7, 1.0), (1.0, 3, 3.0)])
def test_margins_equal_aod_differences(lam, q, T):
    m = ex.fixed_param_margins(lam, q, T)
    get = lambda kind, **kw: aod(PolicySpec(PolicyKind(kind), **kw), lam)
    hp1, hp2 = get("HP1", q=q, T=T), get("HP2", q=q, T=T)
    scale = max(hp1, hp2)
    assert m["HP1<QP"] == pytest.approx(get("QP", q=q) - hp1, abs=1e-14 * scale)
    assert m["HP1<TP1"] == pytest.approx(get("TP1", T=T) - hp1, abs=1e-14 * scale)
    assert m["HP2<QP"] == pytest.approx(get("QP", q=q) - hp2, abs=1e-14 * scale)
    assert m["HP2<TP2"] == pytest.approx(get("TP2", T=T) - hp2, abs=1e-14 * scale)
    assert m["HP1<HP2"] == pytest.approx(hp2 - hp1, abs=1e-14 * scale)


def test_fixed_params_needs_q_at_least_two():
    with pytest.raises(ValueError):
        ex.compare_fixed_params(1.0, 1, 1.0)


def test_lemma_single_points():
    tm = pt.truncated_moments(1.0, 1)
    assert tm.var - tm.m1 < 0
    grid = ex.LemmaGrid(mu=(1.0, 2.0), levels=(3,), pair_q=(3,), monotone_mu=(0.5, 1.0),
                        ratio_levels=(1, 2), survival_levels=(3,))
    r = ex.lemma_suite(grid)
    assert r.all_hold
    # second-moment verdicts are recorded only where the hypothesis holds
    hyp = pt.truncated_mean(2.0, 3) <= pt.truncated_mean(1.0, 4)
    n4 = sum(v.claim == "second-moment:E[X_q^2]<=E[Y_{q+1}^2]" for v in r.verdicts)
    assert n4 == int(hyp)


def test_default_lemma_suite_holds():
    r = ex.lemma_suite()
    assert r.all_hold, r.failures()[:3]


def test_verdict_helpers():
    assert ex.strict("c", 2e-9).holds and not ex.strict("c", 5e-10).holds
    assert ex.nonstrict("c", 0.0).holds
    assert ex.equality("c", 1.0, 1.0 + 1e-15).holds
    assert not ex.equality("c", 1.0, 1.0 + 1e-13).holds


def test_report_json_schema():
    r = ex.compare_fixed_params(2.0, 3, 1.0)
    d = json.loads(r.to_json())
    assert set(d) >= {"scenario", "inputs", "rows", "verdicts"}
    assert d["scenario"] == "fixed-params"
    assert set(d["rows"][0]) == {"policy", "metrics"}
    assert set(d["verdicts"][0]) >= {"claim", "holds", "margin"}


def test_csv_columns_and_precision():
    text = ex.write_csv([ex.compare_fixed_cycle(1.0, 3.0, [4]), ex.compare_fixed_params(1.0, 5, 2.0)])
    rows = list(csv.DictReader(io.StringIO(text)))
    assert tuple(rows[0]) == ex.CSV_COLUMNS
    assert len(rows) == 7 + 7
    hp1 = next(r for r in rows if r["scenario"] == "fixed-params" and r["kind"] == "HP1")
    assert float(hp1["AOD"]) == aod(PolicySpec(PolicyKind.HP1, q=5, T=2.0), 1.0)


def test_reports_deterministic():
    a = ex.default_fixed_params(rates=(1.0,), q_list=(3, 4), T_list=(1.0,))
    b = ex.default_fixed_params(rates=(1.0,), q_list=(3, 4), T_list=(1.0,))
    assert [x.to_json() for x in a] == [x.to_json() for x in b]


def test_simulation_crosscheck_small():
    report, estimates = ex.sim_crosscheck(5, grid=((1.0, 3, 1.0),), n_cycles=20_000)
    assert len(estimates) == 7
    assert report.all_hold, report.failures()


def test_child_seeds_distinct():
    seeds = {ex.child_seed(42, g, p) for g in range(3) for p in range(7)}
    assert len(seeds) == 21
