import json
import math
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from feederca.costmodel import Coordination, CostBreakdown, DesignGrid, cost_breakdown
from feederca.demand import aggregates
from feederca.experiments import (CHAIN, FULLY_UNIFORM, HETEROGENEOUS, UNIFORM_LINE_STOP, UNIFORM_STOP,
                                  Report, RunResult, ScenarioConfig, config_from_mapping, load_config,
                                  reports_csv, run_scenario, run_sweep, savings_chain, solve_class,
                                  sweep_point, uniform_headways, uniform_stop_spacing, write_reports)
from feederca.params import InvalidParameterError
from feederca.solver import local_rates

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
UNIFORM_DEMAND = {"mode": "trunc-normal", "total": 1200.0, "sigma_x": "uniform", "sigma_y": "uniform"}


def _run(label, gc):
    costs = CostBreakdown(C_s=0, C_vk=0, C_vh=0, V_h1=0, V_h2=0, V_h3=0, C_A=gc, C_Wp=0, C_Wd=0,
                          C_T1=0, C_T2=0, C_T3=0)
    return RunResult(label, label, "none", 10, True, costs, {}, None)


def test_savings_chain_against_next_more_uniform():
    runs = [_run("a", 90.0), _run("b", 95.0), _run("c", 100.0)]
    sav = savings_chain(runs)
    assert list(sav) == ["a vs b", "b vs c"]
    assert sav["a vs b"] == pytest.approx(5 / 95)
    assert sav["b vs c"] == pytest.approx(0.05)


def test_heterogeneity_gains_nothing_under_uniform_demand():
    rep = run_scenario(ScenarioConfig(demand=UNIFORM_DEMAND, design_class=CHAIN))
    assert rep.ok
    het, uni = rep.run(HETEROGENEOUS).GC, rep.run(FULLY_UNIFORM).GC
    assert het <= uni
    assert (uni - het) / uni < 0.005


def test_chain_is_ordered_by_design_freedom(params, agg):
    gcs = [solve_class(dc, params, agg, 10).GC
           for dc in (HETEROGENEOUS, UNIFORM_STOP, UNIFORM_LINE_STOP, FULLY_UNIFORM)]
    assert all(a <= b + 1e-9 for a, b in zip(gcs[:-1], gcs[1:]))


def test_uniform_stop_spacing_matches_numerical_minimum(solved, agg, params):
    d = solved.design
    rates = params.rates(d.K)
    b = uniform_stop_spacing(d.s, d.h_p, d.h_d, agg, params, rates)

    def gc(v):
        return cost_breakdown(d.replace(b=np.full_like(d.b, v)), agg, params, rates).GC
    res = minimize_scalar(gc, bounds=(0.01, params.W), method="bounded", options={"xatol": 1e-10})
    assert b == pytest.approx(res.x, abs=1e-6)


def test_uniform_headways_match_numerical_minimum(agg, params):
    rates = params.rates(40)
    s = np.full(params.n, 0.2)
    b = np.full((params.n, params.m), 0.3)
    loc = local_rates(b, agg, params, rates)
    hp, hd = uniform_headways(s, loc, agg, params, 40)
    base = DesignGrid(np.full(params.n, hp), np.full(params.n, hd), s, b, 40)
    # both optima interior: below capacity and above the lower bounds
    assert params.h_min < hp < 40 / (agg.lam_px.max() * 0.2)
    assert params.h_dist_min < hd < 40 / (agg.lam_dx.max() * 0.2)

    def gc_p(v):
        return cost_breakdown(base.replace(h_p=np.full(params.n, v)), agg, params, rates).GC

    def gc_d(v):
        return cost_breakdown(base.replace(h_d=np.full(params.n, v)), agg, params, rates).GC
    rp = minimize_scalar(gc_p, bounds=(params.h_min, params.h_max), method="bounded",
                         options={"xatol": 1e-10})
    rd = minimize_scalar(gc_d, bounds=(params.h_dist_min, params.h_max), method="bounded",
                         options={"xatol": 1e-10})
    assert hp == pytest.approx(rp.x, abs=1e-6)
    assert hd == pytest.approx(rd.x, abs=1e-6)


def test_scalar_classes_are_uniform(params, agg):
    rep = solve_class(FULLY_UNIFORM, params, agg, 10)
    d = rep.design
    for arr in (d.s, d.b, d.h_p, d.h_d):
        assert np.ptp(arr) == 0
    rep = solve_class(UNIFORM_LINE_STOP, params, agg, 10)
    assert np.ptp(rep.design.s) == 0 and np.ptp(rep.design.b) == 0
    rep = solve_class(UNIFORM_STOP, params, agg, 10)
    assert np.ptp(rep.design.b) == 0 and np.ptp(rep.design.s) > 0


@pytest.mark.parametrize("dc", [UNIFORM_LINE_STOP, FULLY_UNIFORM])
def test_strict_capacity_holds_for_scalar_classes(dc, params, agg):
    d = solve_class(dc, params, agg, 10).design
    assert np.all(agg.lam_px * d.s * d.h_p <= 10 * (1 + 1e-9))
    assert np.all(agg.lam_dx * d.s * d.h_d <= 10 * (1 + 1e-9))


def test_relaxed_capacity_reports_overload(params, agg):
    rep = solve_class(UNIFORM_LINE_STOP, params, agg, 10, strict_capacity=False)
    strict = solve_class(UNIFORM_LINE_STOP, params, agg, 10)
    assert rep.GC <= strict.GC
    d = rep.design
    if np.any(agg.lam_dx * d.s * d.h_d > 10 * (1 + 1e-9)):
        assert "capacity exceeded" in rep.message


def test_report_is_deterministic():
    cfg = ScenarioConfig(design_class=CHAIN, K=10)
    assert run_scenario(cfg).to_json() == run_scenario(cfg).to_json()


def test_single_point_sweep_equals_run_scenario():
    cfg = ScenarioConfig(K=10)
    direct = run_scenario(cfg)
    swept = run_sweep(cfg.replace(sweep_axis="K", sweep_values=[10.0]))
    assert len(swept) == 1
    a, b = direct.to_dict(), swept[0].to_dict()
    for k in ("axis", "value"):
        a.pop(k), b.pop(k)
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_parallel_sweep_equals_serial():
    cfg = ScenarioConfig(sweep_axis="K", sweep_values=[8.0, 10.0, 12.0])
    serial = run_sweep(cfg, workers=1)
    parallel = run_sweep(cfg, workers=3)
    assert [r.to_json() for r in serial] == [r.to_json() for r in parallel]
    assert [r.value for r in parallel] == [8.0, 10.0, 12.0]


def test_region_size_sweep_keeps_average_density():
    cfg = ScenarioConfig(K=10, sweep_axis="region-size", sweep_values=[1.5])
    rep = sweep_point(cfg, 1.5)
    assert rep.params["L"] == 1.5 and rep.params["W"] == pytest.approx(1.0)
    assert rep.demand["total_p"] == pytest.approx(300.0)
    assert rep.demand["total_p"] / (1.5 * 1.0) == pytest.approx(1200.0 / 6.0)
    assert rep.demand["sigma_xp"] == pytest.approx(0.375)


def test_demand_rate_sweep_sets_direction_totals():
    rep = sweep_point(ScenarioConfig(K=10, sweep_axis="demand-rate", sweep_values=[600.0]), 600.0)
    assert rep.demand["total_p"] == pytest.approx(600.0)
    assert rep.demand["total_d"] == pytest.approx(600.0)


def test_square_region_layouts_are_symmetric():
    rep = sweep_point(ScenarioConfig(K=10, sweep_axis="aspect-ratio", sweep_values=[1.0]), 1.0)
    assert [r.label for r in rep.runs] == ["stops-along-y", "stops-along-x"]
    assert abs(rep.savings["layout_gap"]) < 1e-9


def test_aspect_ratio_keeps_area():
    rep = sweep_point(ScenarioConfig(K=10, sweep_axis="aspect-ratio", sweep_values=[2.0]), 2.0)
    assert rep.params["L"] * rep.params["W"] == pytest.approx(6.0)
    assert rep.params["W"] / rep.params["L"] == pytest.approx(2.0)
    g_y, g_x = rep.runs[0].GC, rep.runs[1].GC
    assert rep.savings["shorter_side_saving"] == pytest.approx((g_y - g_x) / g_y)


def test_trunk_headway_sweep_solves_every_mode():
    rep = sweep_point(ScenarioConfig(K=10, sweep_axis="H_t", sweep_values=[5.0]), 5.0)
    assert [r.label for r in rep.runs] == ["none", "collect", "distribute", "both"]
    assert rep.params["h_trunk"] == pytest.approx(5 / 60)
    base = rep.run("none").GC
    for mode in ("collect", "distribute", "both"):
        assert rep.savings[mode] == pytest.approx((base - rep.run(mode).GC) / base)


def test_failed_sweep_point_is_recorded_and_sweep_continues():
    cfg = ScenarioConfig(K=10, sweep_axis="aspect-ratio", sweep_values=[-1.0, 1.0])
    reps = run_sweep(cfg)
    assert len(reps) == 2
    assert reps[0].failures and not reps[0].runs
    assert reps[1].ok


def test_nonconvergence_recorded_in_report(monkeypatch):
    import feederca.experiments as ex
    orig = ex.solve_design
    monkeypatch.setattr(ex, "solve_design", lambda *a, **k: orig(*a, **k, outer_cap=1))
    rep = run_scenario(ScenarioConfig(K=10))
    assert not rep.ok
    assert rep.runs and not rep.runs[0].converged
    assert "no convergence" in rep.failures[0]


@pytest.mark.parametrize("bad", [
    {"design_class": "mixed"},
    {"mode": "sometimes"},
    {"sweep": {"axis": "K"}},
    {"sweep": {"axis": "none", "values": [1]}},
    {"sweep": {"axis": "speed", "values": [1]}},
    {"K": 0},
    {"colour": "blue"},
])
def test_invalid_config_rejected(bad):
    with pytest.raises(InvalidParameterError):
        config_from_mapping(bad)


def test_shipped_configs_load():
    paths = sorted(CONFIGS.glob("*.yaml"))
    assert paths
    for path in paths:
        cfg = load_config(path)
        cfg.field()


def test_write_reports_outputs(tmp_path):
    reps = run_sweep(ScenarioConfig(name="k", sweep_axis="K", sweep_values=[9.0, 10.0]))
    paths = write_reports(reps, tmp_path)
    names = sorted(p.name for p in paths)
    assert names == ["k.csv", "k_K_10.json", "k_K_9.json", "timings.json"]
    rows = (tmp_path / "k.csv").read_text().strip().splitlines()
    assert len(rows) == 3 and rows[0].startswith("name,axis,value,label")
    data = json.loads((tmp_path / "k_K_9.json").read_text())
    assert "wall_time" not in json.dumps(data)
    assert data["runs"][0]["summary"]["S_l"]["mean"] > 0
    assert reports_csv(reps) == (tmp_path / "k.csv").read_text()


def test_report_lookup():
    rep = Report("x", "none", None, {}, {}, [_run("a", 1.0)])
    assert rep.run("a").GC == 1.0
    with pytest.raises(KeyError):
        rep.run("b")


def test_vehicle_size_search_records_curve():
    rep = run_scenario(ScenarioConfig())
    run = rep.run(HETEROGENEOUS)
    assert run.K in run.k_curve
    assert run.GC == pytest.approx(min(run.k_curve.values()))
    assert math.isfinite(run.summary["GC_per_patron"])


def test_discrete_check_attached_when_requested():
    rep = run_scenario(ScenarioConfig(K=10, discrete=True))
    disc = rep.run(HETEROGENEOUS).discrete
    assert disc["lines"] > 0 and disc["stops"] >= disc["lines"]
    assert abs(disc["relative_error"]["GC"]) < 0.02


def test_coordinated_scenario(params):
    rep = run_scenario(ScenarioConfig(K=10, mode="both"))
    d = rep.run(HETEROGENEOUS).design
    assert Coordination(d.mode) == Coordination.BOTH
    assert np.all(d.h_d == params.h_trunk)


def test_aggregates_of_config_field_match_fixture(agg):
    cfg = ScenarioConfig()
    a = aggregates(cfg.field(), cfg.params.n, cfg.params.m)
    assert a.total == pytest.approx(agg.total, rel=1e-12)
