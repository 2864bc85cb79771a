import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feederca.costmodel import (ConstraintViolation, Coordination, CostBreakdown, DesignGrid,
                                LatticeMismatchError, access_cost, b1_cost, cost_breakdown,
                                feasibility_violations, generalized_cost, invehicle_cost,
                                wait_transfer_cost)
from feederca.demand import UNIFORM, TruncNormalDemand, aggregates
from feederca.params import ModelParams

from oracles import random_feasible_design

L, W, LAM = 3.0, 2.0, 1200.0


@pytest.fixture(scope="module")
def flat():
    p = ModelParams(walk_radius=0.0)
    f = TruncNormalDemand.symmetric(L, W, LAM, sigma=(UNIFORM, UNIFORM), walk_radius=0.0)
    return p, aggregates(f, p.n, p.m)


def uniform_design(p, s=0.4, b=0.25, hp=0.1, hd=0.15, K=60, mode="none"):
    return DesignGrid.uniform(p.n, p.m, h_p=hp, h_d=hd, s=s, b=b, K=K, mode=mode)


def test_closed_forms_uniform_demand(flat):
    p, agg = flat
    s, b, hp, hd, K = 0.4, 0.25, 0.1, 0.15, 60
    d = uniform_design(p, s, b, hp, hd, K)
    cb = generalized_cost(d, agg, p)
    rates = p.rates(K)
    lam_x = LAM / L
    c = LAM / (L * W)
    freq = 1 / hp + 1 / hd
    assert cb.C_A == pytest.approx(2 * LAM * (s + b) / (4 * p.v_walk))
    assert cb.C_Wp == pytest.approx(LAM * (hp / 2 + p.tau_a / 2 * s * hp * lam_x + p.t_ft + p.h_trunk / 2))
    assert cb.C_Wd == pytest.approx(LAM * (p.t_tf + hd / 2 + p.tau_b / 2 * s * p.h_trunk * lam_x))
    assert cb.C_T1 == pytest.approx(2 * LAM * (L / 2 + W / 2) / p.v_bus)
    assert cb.C_T2 == pytest.approx(p.tau0 / b * 2 * c * L * W * W / 2)
    m_x = c * c * W * W / 2
    assert cb.C_T3 == pytest.approx((p.tau_b * s * hp + p.tau_a * s * hd) * m_x * L)
    line_km = (W * L + L * L / 2) / s
    assert cb.V_h1 == pytest.approx(line_km / p.v_bus * freq)
    assert cb.V_h2 == pytest.approx(p.tau0 * freq * L * W / (s * b))
    assert cb.V_h3 == pytest.approx((p.tau_a + p.tau_b) * 2 * LAM)
    assert cb.C_vk == pytest.approx(rates.pi_v / p.theta * line_km * freq)
    assert cb.C_vh == pytest.approx(rates.pi_m / p.theta * (cb.V_h1 + cb.V_h2 + cb.V_h3))
    assert cb.C_s == 0.0
    assert cb.GC == pytest.approx(cb.AC + cb.UC)


def test_stop_cost_counts_stops(flat):
    p, agg = flat
    p2 = p.replace(pi_s=5.0)
    d = uniform_design(p2, s=0.5, b=0.25)
    c_s = cost_breakdown(d, agg, p2).C_s
    assert c_s == pytest.approx(5.0 / p.theta * L * W / (0.5 * 0.25))


def test_rearranged_form_matches_components(params, agg, rng):
    for _ in range(100):
        K = int(rng.integers(4, 81))
        d = random_feasible_design(params, agg, K, rng)
        assert feasibility_violations(d, agg, params) == []
        total = cost_breakdown(d, agg, params).GC
        assert b1_cost(d, agg, params) == pytest.approx(total, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(s=st.floats(0.05, 1.0), b=st.floats(0.05, 1.0), ds=st.floats(1e-3, 0.5))
def test_access_cost_increases_with_spacing(flat, s, b, ds):
    p, agg = flat
    a = access_cost(uniform_design(p, s, b), agg, p)
    assert access_cost(uniform_design(p, s + ds, b), agg, p) > a
    assert access_cost(uniform_design(p, s, b + ds), agg, p) > a


@settings(max_examples=40, deadline=None)
@given(hp=st.floats(0.05, 0.5), t=st.floats(0.0, 1.0))
def test_wait_cost_convex_in_headway(flat, hp, t):
    p, agg = flat

    def w(h):
        return sum(wait_transfer_cost(uniform_design(p, hp=h), agg, p))
    lo, hi = 0.05, hp
    mid = (1 - t) * lo + t * hi
    assert w(mid) <= (1 - t) * w(lo) + t * w(hi) + 1e-9


def test_onboard_delay_scales_with_square_of_demand(params):
    f1 = TruncNormalDemand.symmetric(L, W, 600.0)
    f2 = TruncNormalDemand.symmetric(L, W, 1200.0)
    a1, a2 = aggregates(f1, params.n, params.m), aggregates(f2, params.n, params.m)
    d = uniform_design(params, K=200)
    t1 = invehicle_cost(d, a1, params)
    t2 = invehicle_cost(d, a2, params)
    assert t2[2] == pytest.approx(4 * t1[2], rel=1e-12)
    assert t2[0] == pytest.approx(2 * t1[0], rel=1e-12)


def test_coordination_drops_matching_waits(flat):
    p, agg = flat
    ht = p.h_trunk
    d = uniform_design(p, hp=2 * ht, hd=ht, mode="both")
    base = wait_transfer_cost(d, agg, p, Coordination.NONE)
    coord = wait_transfer_cost(d, agg, p, Coordination.BOTH)
    lam_x = LAM / L
    s = d.s[0]
    # collect: -H_t/2 per patron, alighting doubled; distribute: -H_ld/2, boarding doubled
    assert coord[0] - base[0] == pytest.approx(LAM * (-ht / 2 + p.tau_a / 2 * s * 2 * ht * lam_x))
    assert coord[1] - base[1] == pytest.approx(LAM * (-ht / 2 + p.tau_b / 2 * s * ht * lam_x))


def test_violations_are_reported(params, agg):
    d = uniform_design(params, s=0.3, hp=0.01, hd=0.6, K=10)
    with pytest.raises(ConstraintViolation) as exc:
        generalized_cost(d, agg, params)
    text = " ".join(exc.value.violations)
    assert "H_lp[0]" in text and "H_ld[0]" in text


def test_capacity_violation_detected(params, agg):
    d = uniform_design(params, s=1.0, hp=0.5, hd=0.5, K=10)
    bad = feasibility_violations(d, agg, params)
    assert any("capacity" in v for v in bad)


def test_coordination_requires_integer_multiples(params, agg):
    d = uniform_design(params, s=0.05, hp=0.13, hd=params.h_trunk, K=80, mode="both")
    bad = feasibility_violations(d, agg, params)
    assert any("integer multiple" in v for v in bad)
    ok = uniform_design(params, s=0.05, hp=2 * params.h_trunk, hd=params.h_trunk, K=80, mode="both")
    assert feasibility_violations(ok, agg, params) == []


def test_lattice_mismatch(params, agg):
    d = DesignGrid.uniform(10, 30, h_p=0.1, h_d=0.1, s=0.3, b=0.3, K=10)
    with pytest.raises(LatticeMismatchError):
        access_cost(d, agg, params)


def test_serialization_roundtrip(params, agg):
    d = uniform_design(params, K=60)
    assert DesignGrid.from_dict(d.to_dict()).to_dict() == d.to_dict()
    cb = cost_breakdown(d, agg, params)
    assert CostBreakdown(**{k: cb.to_dict()[k] for k in (
        "C_s", "C_vk", "C_vh", "V_h1", "V_h2", "V_h3", "C_A", "C_Wp", "C_Wd", "C_T1", "C_T2", "C_T3")}) == cb
    rows = d.to_csv(agg.lattice.x, agg.lattice.y).strip().splitlines()
    assert len(rows) == 1 + params.n * params.m


def test_summary_means():
    s = np.array([0.2, 0.4])
    b = np.array([[0.1, 0.3], [0.2, 0.2]])
    d = DesignGrid(np.full(2, 0.1), np.full(2, 0.2), s, b, 10)
    summ = d.summary()
    assert summ["S_l"]["mean"] == pytest.approx(2 / (1 / 0.2 + 1 / 0.4))
    w = 1 / (s[:, None] * b)
    assert summ["B"]["mean"] == pytest.approx((b * w).sum() / w.sum())
    assert summ["H_lp_min"]["mean"] == pytest.approx(6.0)
