"""Scenario runner: design classes, savings chains and parameter sweeps.

Design classes, from most to least flexible:

heterogeneous            S(x), B(x, y), H(x) all free
uniform-stop-spacing     B a single scalar; S(x), H(x) free
uniform-line-and-stop    S and B scalars; H(x) free
fully-uniform            S, B, H_lp, H_ld all scalars

Every class is costed by the same generalized-cost evaluator and every class
optimizes the vehicle size by exhaustive search unless ``K`` is fixed.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.optimize import minimize_scalar

from .costmodel import COST_FIELDS, Coordination, CostBreakdown, DesignGrid, cost_breakdown
from .demand import AggregateTables, DemandField, TruncNormalDemand, aggregates, demand_from_mapping
from .params import AgencyRates, InvalidParameterError, ModelParams, load_mapping, params_from_mapping
from .solver import (B_FLOOR, OUTER_CAP, SolveReport, _slice, local_rates, optimize_vehicle_size,
                     random_design, solve_design, update_headways)

log = logging.getLogger(__name__)

HETEROGENEOUS = "heterogeneous"
UNIFORM_STOP = "uniform-stop-spacing"
UNIFORM_LINE_STOP = "uniform-line-and-stop"
FULLY_UNIFORM = "fully-uniform"
DESIGN_CLASSES = (HETEROGENEOUS, UNIFORM_STOP, UNIFORM_LINE_STOP, FULLY_UNIFORM)
CHAIN = "chain"

SWEEP_AXES = ("none", "K", "H_t", "aspect-ratio", "demand-rate", "region-size")
MODES = tuple(m.value for m in Coordination)
S_FLOOR = 1e-3


# ---------------------------------------------------------------------------
# restricted design classes

def uniform_stop_spacing(s: np.ndarray, h_p: np.ndarray, h_d: np.ndarray, agg: AggregateTables,
                         params: ModelParams, rates: AgencyRates) -> float:
    """Best single stop spacing for given line spacings and headways.

    The cost terms in B are ``b * sum(lam)/(4 v_w) + sum(per_stop + tau0*onboard)/b``.
    """
    p = params
    per_stop = (p.pi_s + rates.pi_m * p.tau0 * (1 / h_p + 1 / h_d)) / (p.theta * s)
    num = 4 * p.v_walk * (per_stop[:, None] + p.tau0 * (agg.lam_pxy + agg.lam_dxy)).sum()
    den = agg.lam.sum()
    if den <= 0:
        return p.W
    return float(np.clip(math.sqrt(num / den), B_FLOOR, p.W))


def _best_multiple(f, interior: float, ht: float, k_lo: int, k_hi: int) -> float:
    if k_hi < k_lo:
        return k_lo * ht
    if math.isfinite(interior):
        k0 = interior / ht
        cands = {min(max(math.floor(k0), k_lo), k_hi), min(max(math.ceil(k0), k_lo), k_hi)}
    else:
        cands = {k_hi}
    return min(sorted(cands), key=lambda k: f(k * ht)) * ht


def uniform_headways(s: np.ndarray, loc, agg: AggregateTables, params: ModelParams, K: float,
                     mode: Coordination | str = Coordination.NONE) -> tuple[float, float]:
    """Best single pair of headways for given spacings.

    In H_p the objective is ``sum(alpha/s)/H_p + H_p*sum(w_p + s*c_p)``, convex,
    so the clamped stationary point is optimal; likewise for H_d.
    """
    mode = Coordination(mode)
    p = params
    sl = _slice(loc, agg, p, mode)
    a = float((sl.alpha / s).sum())

    def cap(lam):
        load = (lam * s).max()
        return K / load if load > 0 else math.inf

    def interior(w, c):
        d = float((w + s * c).sum())
        return math.sqrt(a / d) if d > 0 else math.inf

    hi_p = min(p.h_max, cap(agg.lam_px))
    int_p = interior(sl.w_p, sl.c_p)
    if mode.collect:
        ht = p.h_trunk
        k_lo = max(1, math.ceil(p.h_min / ht - 1e-9))
        k_hi = math.floor(hi_p / ht + 1e-9)
        d_p = float((sl.w_p + s * sl.c_p).sum())
        h_p = _best_multiple(lambda h: a / h + h * d_p, int_p, ht, k_lo, k_hi)
    else:
        h_p = max(p.h_min, min(hi_p, int_p))
    if mode.distribute:
        h_d = p.h_trunk
    else:
        h_d = max(p.h_dist_min, min(p.h_max, cap(agg.lam_dx), interior(sl.w_d, sl.c_d)))
    return float(h_p), float(h_d)


def _max_uniform_line_spacing(params: ModelParams, agg: AggregateTables, K: float,
                              mode: Coordination) -> float:
    p = params
    hp_lo = max(1, math.ceil(p.h_min / p.h_trunk - 1e-9)) * p.h_trunk if mode.collect else p.h_min
    hd_lo = p.h_trunk if mode.distribute else p.h_dist_min
    out = p.L
    if agg.lam_px.max() > 0:
        out = min(out, K / (agg.lam_px.max() * hp_lo))
    if agg.lam_dx.max() > 0:
        out = min(out, K / (agg.lam_dx.max() * hd_lo))
    return out


def solve_scalar_spacing(params: ModelParams, agg: AggregateTables, K: int,
                         mode: Coordination | str = Coordination.NONE,
                         rates: AgencyRates | None = None, *, uniform_h: bool = False,
                         strict_capacity: bool = True) -> SolveReport:
    """Scalar S and B by coordinate descent.

    Each round minimizes over S by bounded 1-D search, with headways
    re-optimized inside (per x, or as scalars when ``uniform_h``), then
    sets B to its closed-form optimum.

    Headways are clamped to their bounds before capacity. With
    ``strict_capacity`` the search over S is also capped so that capacity
    holds at the lower headway bounds everywhere; otherwise a column whose
    capacity cap falls below the lower bound runs at the bound and the
    overload is reported in the message.
    """
    t0 = time.perf_counter()
    mode = Coordination(mode)
    p = params
    rates = rates or p.rates(K)
    n, m = p.n, p.m
    s_hi = _max_uniform_line_spacing(p, agg, K, mode) if strict_capacity else p.L
    s_lo = min(S_FLOOR, s_hi / 2)

    def design(s_, b_):
        loc = local_rates(np.full((n, m), b_), agg, p, rates)
        sv = np.full(n, s_)
        if uniform_h:
            hp, hd = uniform_headways(sv, loc, agg, p, K, mode)
            hp, hd = np.full(n, hp), np.full(n, hd)
        else:
            hp, hd, _ = update_headways(sv, loc, agg, p, K, mode)
        return DesignGrid(hp, hd, sv, np.full((n, m), b_), K, mode)

    def gc(s_, b_):
        return cost_breakdown(design(s_, b_), agg, p, rates, mode).GC

    s, b = min(0.5, s_hi), min(0.4, p.W)
    history, evals = [], []
    converged = False
    k = 0
    for k in range(1, OUTER_CAP + 1):
        res = minimize_scalar(lambda v: gc(v, b), bounds=(s_lo, s_hi), method="bounded",
                              options={"xatol": 1e-8})
        s_new = float(res.x)
        # the bounded search never evaluates the end point itself
        if gc(s_hi, b) < res.fun:
            s_new = s_hi
        d = design(s_new, b)
        b_new = uniform_stop_spacing(d.s, d.h_p, d.h_d, agg, p, rates)
        evals.append(int(res.nfev))
        history.append({"S": abs(s_new - s), "B": abs(b_new - b)})
        done = abs(s_new - s) <= p.eps and abs(b_new - b) <= p.eps
        s, b = s_new, b_new
        if done:
            converged = True
            break
    final = design(s, b)
    message = "" if converged else f"no convergence after {k} rounds"
    if not converged:
        log.warning("K=%s mode=%s: %s", K, mode.value, message)
    over = int(np.count_nonzero(agg.lam_px * final.s * final.h_p > K * (1 + 1e-9))
               + np.count_nonzero(agg.lam_dx * final.s * final.h_d > K * (1 + 1e-9)))
    if over:
        message = "; ".join(filter(None, [message, f"capacity exceeded at {over} lattice columns"]))
    return SolveReport(design=final, costs=cost_breakdown(final, agg, p, rates, mode),
                       converged=converged, outer_iterations=k, inner_iterations=evals,
                       residuals=history, wall_time=time.perf_counter() - t0, message=message)


def solve_class(design_class: str, params: ModelParams, agg: AggregateTables, K: int,
                mode: Coordination | str = Coordination.NONE, rates: AgencyRates | None = None,
                *, seed: int | None = None, starts: int = 1,
                strict_capacity: bool = True) -> SolveReport:
    """Solve one design class at a fixed vehicle size.

    ``strict_capacity`` applies to the scalar line-spacing classes only; see
    ``solve_scalar_spacing``.
    """
    mode = Coordination(mode)
    rates = rates or params.rates(K)
    if design_class == HETEROGENEOUS:
        best = solve_design(params, agg, K, mode, rates=rates)
        if seed is not None and starts > 1:
            rng = np.random.default_rng(seed)
            for _ in range(starts - 1):
                rep = solve_design(params, agg, K, mode, initial=random_design(params, K, rng, mode),
                                   rates=rates)
                if rep.GC < best.GC:
                    best = rep
        return best
    if design_class == UNIFORM_STOP:
        def stop_spacing(s, hp, hd):
            return np.full((params.n, params.m), uniform_stop_spacing(s, hp, hd, agg, params, rates))
        return solve_design(params, agg, K, mode, rates=rates, stop_spacing=stop_spacing)
    if design_class == UNIFORM_LINE_STOP:
        return solve_scalar_spacing(params, agg, K, mode, rates, strict_capacity=strict_capacity)
    if design_class == FULLY_UNIFORM:
        return solve_scalar_spacing(params, agg, K, mode, rates, uniform_h=True,
                                    strict_capacity=strict_capacity)
    raise InvalidParameterError([f"unknown design class {design_class!r}"])


# ---------------------------------------------------------------------------
# configuration and reports

@dataclass
class ScenarioConfig:
    name: str = "scenario"
    params: ModelParams = field(default_factory=ModelParams)
    demand: dict[str, Any] = field(default_factory=lambda: {"mode": "trunc-normal", "total": 1200.0})
    design_class: str = HETEROGENEOUS
    mode: str = "none"
    K: int | None = None
    sweep_axis: str = "none"
    sweep_values: list[float] = field(default_factory=list)
    seed: int | None = None
    starts: int = 1
    discrete: bool = False
    strict_capacity: bool = True
    workers: int = 1
    base_dir: str | None = None
    reference: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        bad = []
        if self.design_class not in DESIGN_CLASSES + (CHAIN,):
            bad.append(f"design_class must be one of {DESIGN_CLASSES + (CHAIN,)}")
        if self.mode not in MODES:
            bad.append(f"mode must be one of {MODES}")
        if self.sweep_axis not in SWEEP_AXES:
            bad.append(f"sweep axis must be one of {SWEEP_AXES}")
        if self.sweep_axis != "none" and not self.sweep_values:
            bad.append("sweep axis set but no values given")
        if self.sweep_axis == "none" and self.sweep_values:
            bad.append("sweep values given without a sweep axis")
        if self.K is not None and self.K < 1:
            bad.append("K >= 1")
        if self.starts < 1:
            bad.append("starts >= 1")
        if bad:
            raise InvalidParameterError(bad)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def field(self) -> DemandField:
        base = Path(self.base_dir) if self.base_dir else None
        return demand_from_mapping(self.demand, L=self.params.L, W=self.params.W,
                                   walk_radius=self.params.walk_radius, base_dir=base)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "params": self.params.to_dict(), "demand": dict(self.demand),
                "design_class": self.design_class, "mode": self.mode, "K": self.K,
                "sweep": {"axis": self.sweep_axis, "values": list(self.sweep_values)},
                "seed": self.seed, "starts": self.starts, "discrete": self.discrete,
                "strict_capacity": self.strict_capacity}


def config_from_mapping(data: dict[str, Any], *, base_dir: str | Path | None = None) -> ScenarioConfig:
    data = dict(data or {})
    known = {"name", "params", "demand", "design_class", "mode", "K", "sweep", "seed", "starts",
             "discrete", "strict_capacity", "workers", "reference"}
    unknown = set(data) - known
    if unknown:
        raise InvalidParameterError([f"unknown config key {k!r}" for k in sorted(unknown)])
    sweep = data.get("sweep") or {}
    return ScenarioConfig(
        name=str(data.get("name", "scenario")),
        params=params_from_mapping(data.get("params")),
        demand=dict(data.get("demand") or {"mode": "trunc-normal", "total": 1200.0}),
        design_class=data.get("design_class", HETEROGENEOUS),
        mode=str(data.get("mode", "none")),
        K=None if data.get("K") is None else int(data["K"]),
        sweep_axis=str(sweep.get("axis", "none")),
        sweep_values=[float(v) for v in sweep.get("values", [])],
        seed=data.get("seed"),
        starts=int(data.get("starts", 1)),
        discrete=bool(data.get("discrete", False)),
        strict_capacity=bool(data.get("strict_capacity", True)),
        workers=int(data.get("workers", 1)),
        base_dir=str(base_dir) if base_dir is not None else None,
        reference=dict(data.get("reference") or {}),
    )


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    return config_from_mapping(load_mapping(path), base_dir=path.parent)


@dataclass
class RunResult:
    label: str
    design_class: str
    mode: str
    K: int
    converged: bool
    costs: CostBreakdown
    summary: dict[str, Any]
    design: DesignGrid
    k_curve: dict[int, float] = field(default_factory=dict)
    message: str = ""
    wall_time: float = 0.0
    discrete: dict[str, Any] | None = None

    @property
    def GC(self) -> float:
        return self.costs.GC

    def to_dict(self, *, include_design: bool = True) -> dict[str, Any]:
        out = {"label": self.label, "design_class": self.design_class, "mode": self.mode,
               "K": self.K, "converged": self.converged, "message": self.message,
               "costs": self.costs.to_dict(), "summary": self.summary,
               "K_curve": {str(k): v for k, v in self.k_curve.items()}}
        if self.discrete is not None:
            out["discrete"] = self.discrete
        if include_design:
            out["design"] = self.design.to_dict()
        return out


@dataclass
class Report:
    name: str
    axis: str
    value: float | None
    params: dict[str, Any]
    demand: dict[str, Any]
    runs: list[RunResult]
    savings: dict[str, float] = field(default_factory=dict)
    baseline: str = ""
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures and all(r.converged for r in self.runs)

    def run(self, label: str) -> RunResult:
        for r in self.runs:
            if r.label == label:
                return r
        raise KeyError(label)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "axis": self.axis, "value": self.value, "params": self.params,
                "demand": self.demand, "savings": self.savings, "baseline": self.baseline,
                "failures": list(self.failures), "runs": [r.to_dict() for r in self.runs]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def timings(self) -> dict[str, float]:
        return {r.label: r.wall_time for r in self.runs}


def _solve_run(label: str, design_class: str, params: ModelParams, agg: AggregateTables,
               mode: Coordination, K: int | None, *, seed=None, starts=1,
               strict_capacity=True) -> RunResult:
    t0 = time.perf_counter()

    def solve(k):
        return solve_class(design_class, params, agg, k, mode, seed=seed, starts=starts,
                           strict_capacity=strict_capacity)
    if K is None:
        res = optimize_vehicle_size(params, agg, mode, solve=solve)
        rep, k_opt, curve = res.report, res.K, res.curve
    else:
        rep = solve(K)
        k_opt, curve = K, {K: rep.GC}
    summary = rep.design.summary()
    summary["GC_per_patron"] = rep.GC / agg.total if agg.total > 0 else math.nan
    return RunResult(label=label, design_class=design_class, mode=mode.value, K=int(k_opt),
                     converged=rep.converged, costs=rep.costs, summary=summary, design=rep.design,
                     k_curve=curve, message=rep.message, wall_time=time.perf_counter() - t0)


def savings_chain(runs: list[RunResult]) -> dict[str, float]:
    """Saving of each class over the next more uniform one, (GC_next - GC)/GC_next."""
    out = {}
    for a, b in zip(runs[:-1], runs[1:]):
        out[f"{a.label} vs {b.label}"] = (b.GC - a.GC) / b.GC
    return out


def _discrete_check(run: RunResult, field_: DemandField, params: ModelParams,
                    agg: AggregateTables) -> dict[str, Any]:
    from .netgen import evaluate_discrete, generate_plan, relative_errors

    plan = generate_plan(run.design, agg.lattice, active=agg.lam > 0)
    costs = evaluate_discrete(plan, field_, params, mode=run.design.mode)
    return {"lines": len(plan.lines), "stops": plan.n_stops, "flags": plan.flags,
            "costs": costs.to_dict(),
            "relative_error": {k: float(v) for k, v in relative_errors(costs, run.costs).items()}}


def run_scenario(config: ScenarioConfig, *, axis: str = "none", value: float | None = None) -> Report:
    """Solve the configured design class (or the full chain) for one parameter set."""
    p = config.params
    field_ = config.field()
    agg = aggregates(field_, p.n, p.m)
    mode = Coordination(config.mode)
    classes = DESIGN_CLASSES if config.design_class == CHAIN else (config.design_class,)
    runs, failures = [], []
    for dc in classes:
        try:
            run = _solve_run(dc, dc, p, agg, mode, config.K, seed=config.seed, starts=config.starts,
                             strict_capacity=config.strict_capacity)
        except Exception as exc:  # noqa: BLE001 - recorded and reported, run continues
            failures.append(f"{dc}: {exc}")
            continue
        if not run.converged:
            failures.append(f"{dc}: {run.message}")
        if config.discrete and dc == HETEROGENEOUS:
            run.discrete = _discrete_check(run, field_, p, agg)
        runs.append(run)
    savings, baseline = {}, ""
    if config.design_class == CHAIN and len(runs) == len(DESIGN_CLASSES):
        savings = savings_chain(runs)
        baseline = "next more uniform design class"
    return Report(name=config.name, axis=axis, value=value, params=p.to_dict(),
                  demand=field_.to_dict(), runs=runs, savings=savings, baseline=baseline,
                  failures=failures)


# ---------------------------------------------------------------------------
# sweeps

def _scaled_demand(config: ScenarioConfig, L: float, W: float, total_scale: float) -> dict[str, Any]:
    """Demand block for a rescaled region: location and spread follow the geometry."""
    base = config.field()
    if not isinstance(base, TruncNormalDemand):
        raise InvalidParameterError(["geometric sweeps need a trunc-normal demand field"])
    fx, fy = L / base.L, W / base.W

    def sig(v, f):
        return "uniform" if not isinstance(v, float) else v * f
    return {
        "mode": "trunc-normal",
        "total_p": base.total_p * total_scale, "total_d": base.total_d * total_scale,
        "mu_xp": base.mu_xp * fx, "sigma_xp": sig(base.sigma_xp, fx),
        "mu_yp": base.mu_yp * fy, "sigma_yp": sig(base.sigma_yp, fy),
        "mu_xd": base.mu_xd * fx, "sigma_xd": sig(base.sigma_xd, fx),
        "mu_yd": base.mu_yd * fy, "sigma_yd": sig(base.sigma_yd, fy),
    }


def _transposed(config: ScenarioConfig) -> ScenarioConfig:
    field_ = config.field()
    if not isinstance(field_, TruncNormalDemand):
        raise InvalidParameterError(["layout comparison needs a trunc-normal demand field"])
    t = field_.transposed().to_dict()
    for k in ("L", "W", "walk_radius"):
        t.pop(k)
    p = config.params
    return config.replace(params=p.replace(L=p.W, W=p.L), demand=t)


def sweep_point(config: ScenarioConfig, value: float) -> Report:
    """One point of the configured sweep."""
    axis = config.sweep_axis
    p = config.params
    single = config.replace(sweep_axis="none", sweep_values=[])
    if axis == "none":
        return run_scenario(single)
    if axis == "K":
        return run_scenario(single.replace(K=int(value)), axis=axis, value=value)
    if axis == "demand-rate":
        # value: patrons/h per direction; both directions scale together
        base = config.field()
        if not isinstance(base, TruncNormalDemand) or base.total_p <= 0:
            raise InvalidParameterError(["demand-rate sweeps need a trunc-normal field with demand"])
        demand = _scaled_demand(config, p.L, p.W, value / base.total_p)
        return run_scenario(single.replace(demand=demand), axis=axis, value=value)
    if axis == "region-size":
        f = value / p.L
        demand = _scaled_demand(config, value, p.W * f, f * f)
        return run_scenario(single.replace(params=p.replace(L=value, W=p.W * f), demand=demand),
                            axis=axis, value=value)
    if axis == "aspect-ratio":
        area = p.L * p.W
        L, W = math.sqrt(area / value), math.sqrt(area * value)
        primary = single.replace(params=p.replace(L=L, W=W), demand=_scaled_demand(config, L, W, 1.0),
                                 design_class=HETEROGENEOUS)
        a = run_scenario(primary, axis=axis, value=value)
        b = run_scenario(_transposed(primary), axis=axis, value=value)
        runs = [dataclasses.replace(a.runs[0], label="stops-along-y"),
                dataclasses.replace(b.runs[0], label="stops-along-x")] if a.runs and b.runs else []
        savings = {}
        if len(runs) == 2:
            g_y, g_x = runs[0].GC, runs[1].GC
            savings["layout_gap"] = (g_x - g_y) / g_x
            short, long_ = (g_y, g_x) if W <= L else (g_x, g_y)
            savings["shorter_side_saving"] = (long_ - short) / long_
        return Report(name=config.name, axis=axis, value=value, params=a.params, demand=a.demand,
                      runs=runs, savings=savings,
                      baseline="layout stopping along the longer side",
                      failures=a.failures + b.failures)
    if axis == "H_t":
        cfg = single.replace(params=p.replace(h_trunk=value / 60), design_class=single.design_class
                             if single.design_class != CHAIN else HETEROGENEOUS)
        runs, failures = [], []
        demand = None
        for mode in MODES:
            r = run_scenario(cfg.replace(mode=mode), axis=axis, value=value)
            failures += r.failures
            demand = r.demand
            if r.runs:
                runs.append(dataclasses.replace(r.runs[0], label=mode))
        savings = {}
        base = next((r for r in runs if r.mode == "none"), None)
        if base is not None:
            savings = {r.mode: (base.GC - r.GC) / base.GC for r in runs if r.mode != "none"}
        return Report(name=config.name, axis=axis, value=value, params=cfg.params.to_dict(),
                      demand=demand or {}, runs=runs, savings=savings,
                      baseline="uncoordinated design", failures=failures)
    raise InvalidParameterError([f"unknown sweep axis {axis!r}"])


def _point_safe(args) -> Report:
    config, value = args
    try:
        return sweep_point(config, value)
    except Exception as exc:  # noqa: BLE001 - a failed point must not stop the sweep
        return Report(name=config.name, axis=config.sweep_axis, value=value,
                      params=config.params.to_dict(), demand=dict(config.demand), runs=[],
                      failures=[f"{type(exc).__name__}: {exc}"])


def run_sweep(config: ScenarioConfig, *, workers: int | None = None) -> list[Report]:
    """One report per sweep value, in the configured order."""
    values = config.sweep_values if config.sweep_axis != "none" else [None]
    jobs = [(config, v) for v in values]
    workers = config.workers if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_point_safe, jobs))
    return [_point_safe(j) for j in jobs]


# ---------------------------------------------------------------------------
# output

def reports_csv(reports: list[Report]) -> str:
    """Flat table: one row per (sweep point, run)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    saving_keys = sorted({k for r in reports for k in r.savings})
    w.writerow(["name", "axis", "value", "label", "design_class", "mode", "K", "converged",
                *COST_FIELDS, "S_l_mean", "B_mean", "H_lp_mean_min", "H_ld_mean_min",
                "GC_per_patron", *[f"saving:{k}" for k in saving_keys]])
    for rep in reports:
        for run in rep.runs:
            s = run.summary
            w.writerow([rep.name, rep.axis, "" if rep.value is None else f"{rep.value:.10g}",
                        run.label, run.design_class, run.mode, run.K, int(run.converged),
                        *run.costs.csv_row(), f"{s['S_l']['mean']:.10g}", f"{s['B']['mean']:.10g}",
                        f"{s['H_lp_min']['mean']:.10g}", f"{s['H_ld_min']['mean']:.10g}",
                        f"{s['GC_per_patron']:.10g}",
                        *[f"{rep.savings[k]:.10g}" if k in rep.savings else "" for k in saving_keys]])
    return buf.getvalue()


def write_reports(reports: list[Report], out_dir: str | Path) -> list[Path]:
    """JSON per sweep point, a flat CSV and a separate timing file.

    Wall times are kept out of the JSON and CSV so identical configs give
    identical report bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for rep in reports:
        tag = "" if rep.value is None else f"_{rep.axis}_{rep.value:g}"
        path = out / f"{rep.name}{tag}.json"
        path.write_text(rep.to_json() + "\n")
        paths.append(path)
    csv_path = out / f"{reports[0].name if reports else 'report'}.csv"
    csv_path.write_text(reports_csv(reports))
    paths.append(csv_path)
    timing = out / "timings.json"
    timing.write_text(json.dumps([{"value": r.value, "wall_time": r.timings()} for r in reports],
                                 indent=2) + "\n")
    paths.append(timing)
    return paths


__all__ = [
    "CHAIN", "DESIGN_CLASSES", "FULLY_UNIFORM", "HETEROGENEOUS", "MODES", "Report", "RunResult",
    "SWEEP_AXES", "ScenarioConfig", "UNIFORM_LINE_STOP", "UNIFORM_STOP", "config_from_mapping",
    "load_config", "reports_csv", "run_scenario", "run_sweep", "savings_chain", "solve_class",
    "solve_scalar_spacing", "sweep_point", "uniform_headways", "uniform_stop_spacing",
    "write_reports",
]
