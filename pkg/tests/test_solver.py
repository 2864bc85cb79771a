import logging

import numpy as np
import pytest

from feederca.costmodel import Coordination, cost_breakdown, feasibility_violations
from feederca.demand import TruncNormalDemand, aggregates
from feederca.params import ModelParams
from feederca.solver import (ContractError, InfeasibleError, SolveReport, local_rates,
                             optimize_vehicle_size, random_design, solve_design, update_headways,
                             update_line_spacing, update_stop_spacing)

from oracles import argmin_column, argmin_entry, column_cost, gc, random_feasible_design


def _instance(params, agg, rng):
    K = int(rng.integers(8, 81))
    d = random_feasible_design(params, agg, K, rng)
    return d, params.rates(K), local_rates(d.b, agg, params, params.rates(K))


def test_headway_update_matches_numerical_minimum(params, agg, rng):
    for _ in range(100):
        d, rates, loc = _instance(params, agg, rng)
        hp, hd, short = update_headways(d.s, loc, agg, params, d.K)
        i = int(rng.integers(params.n))
        if short[i]:
            continue
        hi_p = min(params.h_max, d.K / (agg.lam_px[i] * d.s[i]))
        hi_d = min(params.h_max, d.K / (agg.lam_dx[i] * d.s[i]))
        assert hp[i] == pytest.approx(argmin_column(d, agg, params, rates, i, "hp", params.h_min, hi_p),
                                      abs=1e-6)
        assert hd[i] == pytest.approx(argmin_column(d, agg, params, rates, i, "hd", params.h_dist_min, hi_d),
                                      abs=1e-6)
        # the full evaluator cannot find anything better either
        oracle = argmin_entry(d, "h_p", i, params.h_min, hi_p, agg, params, rates)
        h_arr = d.h_p.copy()
        h_arr[i] = hp[i]
        o_arr = d.h_p.copy()
        o_arr[i] = oracle
        assert gc(d.replace(h_p=h_arr), agg, params, rates) <= gc(d.replace(h_p=o_arr), agg, params, rates) + 1e-9


def test_line_spacing_update_matches_numerical_minimum(params, agg, rng):
    for _ in range(100):
        d, rates, loc = _instance(params, agg, rng)
        s = update_line_spacing(d.h_p, d.h_d, loc, agg, params, d.K)
        i = int(rng.integers(params.n))
        hi = min(params.L, d.K / (agg.lam_px[i] * d.h_p[i]), d.K / (agg.lam_dx[i] * d.h_d[i]))
        assert s[i] == pytest.approx(argmin_column(d, agg, params, rates, i, "s", 1e-4, hi), abs=1e-6)


def test_stop_spacing_update_matches_numerical_minimum(params, agg, rng):
    for _ in range(100):
        d, rates, _ = _instance(params, agg, rng)
        b = update_stop_spacing(d.s, d.h_p, d.h_d, agg, params, rates)
        i, j = int(rng.integers(params.n)), int(rng.integers(params.m))
        oracle = argmin_column(d, agg, params, rates, i, "b", 1e-6, params.W, j=j)
        assert b[i, j] == pytest.approx(oracle, abs=1e-6)


def test_column_oracle_agrees_with_evaluator(params, agg, rng):
    # shifting one column changes GC by dx times the change in column_cost
    d, rates, _ = _instance(params, agg, rng)
    i = 3
    s2 = d.s.copy()
    s2[i] *= 0.7
    delta = gc(d.replace(s=s2), agg, params, rates) - gc(d, agg, params, rates)
    col = (column_cost(d, agg, params, rates, i, s=s2[i]) - column_cost(d, agg, params, rates, i))
    assert delta == pytest.approx(col * agg.lattice.dx, rel=1e-8)


def test_converged_solution_is_locally_optimal(params, agg, solved):
    d = solved.design
    assert solved.converged
    base = gc(d, agg, params)
    for name in ("s", "h_p", "h_d"):
        for i in range(params.n):
            for f in (0.99, 1.01):
                arr = getattr(d, name).copy()
                arr[i] *= f
                trial = d.replace(**{name: arr})
                if feasibility_violations(trial, agg, params):
                    continue
                assert gc(trial, agg, params) >= base * (1 - 1e-9), (name, i, f)
    for i in range(params.n):
        for j in range(params.m):
            for f in (0.99, 1.01):
                b = d.b.copy()
                b[i, j] *= f
                trial = d.replace(b=b)
                if feasibility_violations(trial, agg, params):
                    continue
                assert gc(trial, agg, params) >= base * (1 - 1e-9), ("b", i, j, f)


def test_solution_is_feasible(params, agg, solved):
    d = solved.design
    assert feasibility_violations(d, agg, params) == []
    assert np.all(agg.lam_px * d.s * d.h_p <= d.K * (1 + 1e-9))
    assert np.all(agg.lam_dx * d.s * d.h_d <= d.K * (1 + 1e-9))


def test_reported_costs_match_evaluator(params, agg, solved):
    assert solved.costs == cost_breakdown(solved.design, agg, params)


def test_multistart_agreement(params, agg, solved):
    rng = np.random.default_rng(7)
    for _ in range(5):
        rep = solve_design(params, agg, 10, initial=random_design(params, 10, rng))
        assert rep.converged
        assert rep.GC == pytest.approx(solved.GC, rel=5e-3)


def test_lattice_refinement(params, field, solved):
    fine = params.replace(n=2 * params.n, m=2 * params.m)
    rep = solve_design(fine, aggregates(field, fine.n, fine.m), 10)
    assert rep.GC == pytest.approx(solved.GC, rel=5e-3)


@pytest.mark.parametrize("mode", ["collect", "distribute", "both"])
def test_coordination_constraints_hold(params, agg, mode):
    rep = solve_design(params, agg, 12, mode)
    d = rep.design
    m = Coordination(mode)
    assert rep.converged
    if m.collect:
        k = d.h_p / params.h_trunk
        assert np.all(k >= 1)
        np.testing.assert_allclose(k, np.round(k), atol=1e-12)
    if m.distribute:
        assert np.all(d.h_d == params.h_trunk)
    assert feasibility_violations(d, agg, params, mode) == []


def test_coordination_lowers_cost(params, agg, solved):
    for mode in ("collect", "distribute", "both"):
        assert solve_design(params, agg, 10, mode).GC < solved.GC


def test_deterministic(params, agg, solved):
    again = solve_design(params, agg, 10)
    assert again.costs == solved.costs
    np.testing.assert_array_equal(again.design.b, solved.design.b)


def test_nonconvergence_is_reported(params, agg, caplog):
    with caplog.at_level(logging.WARNING, logger="feederca.solver"):
        rep = solve_design(params, agg, 10, outer_cap=1)
    assert not rep.converged
    assert "no convergence" in rep.message
    assert "no convergence" in caplog.text


def test_lattice_contract(params, field):
    with pytest.raises(ContractError):
        solve_design(params, aggregates(field, 10, 10), 10)


def test_contract_rejects_nonpositive_spacing(params, agg):
    with pytest.raises(ContractError):
        local_rates(np.zeros((params.n, params.m)), agg, params, params.rates(10))


def test_vehicle_size_search_ties_go_to_smaller(params, agg, solved):
    def fake(K):
        return SolveReport(design=solved.design, costs=solved.costs, converged=True,
                           outer_iterations=1, inner_iterations=[1], residuals=[], wall_time=0.0)
    res = optimize_vehicle_size(params, agg, solve=fake, k_range=range(5, 9))
    assert res.K == 5
    assert sorted(res.curve) == [5, 6, 7, 8]


def test_vehicle_size_search_records_failures(params, agg, solved):
    def flaky(K):
        if K % 2:
            raise InfeasibleError("odd")
        return solve_design(params, agg, K)
    res = optimize_vehicle_size(params, agg, solve=flaky, k_range=range(9, 13))
    assert set(res.failures) == {9, 11}
    assert res.K in (10, 12)
    with pytest.raises(InfeasibleError):
        optimize_vehicle_size(params, agg, solve=flaky, k_range=[9])


def test_vehicle_size_search_is_exhaustive(params, agg):
    res = optimize_vehicle_size(params, agg, k_range=range(6, 16))
    assert res.report.GC == min(res.curve.values())
    assert res.curve[res.K] == res.report.GC


def test_zero_demand_direction(params):
    f = TruncNormalDemand(total_p=1200.0, total_d=0.0)
    agg = aggregates(f, params.n, params.m)
    rep = solve_design(params, agg, 10)
    assert rep.converged
    assert np.all(rep.design.h_d == params.h_max)
    assert rep.costs.C_Wd == 0.0
