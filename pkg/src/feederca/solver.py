"""Closed-form coordinate optima and the two-stage fixed-point solver."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .costmodel import Coordination, CostBreakdown, DesignGrid, cost_breakdown
from .demand import AggregateTables
from .params import AgencyRates, ModelParams

log = logging.getLogger(__name__)

OUTER_CAP = 200
INNER_CAP = 500
# smallest admissible stop spacing; only reached when stops are free (tau0 = pi_s = 0)
B_FLOOR = 1e-6


class ContractError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LocalRates:
    """Per-x cost rates that enter the headway and line-spacing optima."""

    alpha: np.ndarray
    beta_p: np.ndarray
    beta_d: np.ndarray
    gamma: np.ndarray


def local_rates(design_b: np.ndarray, agg: AggregateTables, params: ModelParams,
                rates: AgencyRates) -> LocalRates:
    """``alpha``: agency cost per bus on the line at x; ``beta_*``: dwell exposure; ``gamma``: stop cost."""
    b = np.asarray(design_b, dtype=float)
    if np.any(~(b > 0)):
        raise ContractError("stop spacing must be strictly positive")
    p = params
    x = agg.lattice.x
    inv_b = (1.0 / b).sum(axis=1) * agg.lattice.dy
    alpha = (rates.pi_v * (p.W + x) + rates.pi_m * (p.W + x) / p.v_bus
             + rates.pi_m * p.tau0 * inv_b) / p.theta
    beta_p = p.tau_a * agg.lam_px ** 2 + 2 * p.tau_b * agg.m_px
    beta_d = 2 * p.tau_a * agg.m_dx
    gamma = p.pi_s * inv_b / p.theta
    return LocalRates(alpha, beta_p, beta_d, gamma)


@dataclass(frozen=True, eq=False)
class _Slice:
    """Per-x objective restricted to (S, H_p, H_d), up to constants:

    (alpha*(1/H_p + 1/H_d) + gamma)/S + S*(a_s + c0 + H_p*c_p + H_d*c_d)
      + H_p*w_p + H_d*w_d
    """

    alpha: np.ndarray
    gamma: np.ndarray
    a_s: np.ndarray
    c0: np.ndarray
    c_p: np.ndarray
    c_d: np.ndarray
    w_p: np.ndarray
    w_d: np.ndarray


def _slice(loc: LocalRates, agg: AggregateTables, params: ModelParams, mode: Coordination) -> _Slice:
    p = params
    lpx, ldx = agg.lam_px, agg.lam_dx
    # coordination doubles the terminal alighting / boarding loss and drops the matching wait
    c_p = loc.beta_p / 2 + (p.tau_a / 2 * lpx ** 2 if mode.collect else 0.0)
    c0 = p.tau_b * p.h_trunk * ldx ** 2 * (1.0 if mode.distribute else 0.5)
    w_d = np.zeros_like(ldx) if mode.distribute else ldx / 2
    return _Slice(alpha=loc.alpha, gamma=loc.gamma, a_s=(lpx + ldx) / (4 * p.v_walk),
                  c0=c0, c_p=c_p, c_d=loc.beta_d / 2, w_p=lpx / 2, w_d=w_d)


def _safe_div(a, b):
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    out = np.full(a.shape, np.inf)
    np.divide(a, b, out=out, where=b > 0)
    return out


def mid(a, b, c):
    """Median of three (elementwise)."""
    return np.median(np.stack(np.broadcast_arrays(a, b, c)), axis=0)


def _interior_headway(alpha, s, demand_x, coef):
    # argmin of alpha/(s*H) + H*(demand_x + coef*s)
    return np.sqrt(_safe_div(alpha / s, demand_x + coef * s))


def update_headways(s: np.ndarray, loc: LocalRates, agg: AggregateTables, params: ModelParams,
                    K: float, mode: Coordination | str = Coordination.NONE):
    """Headway optima for given line spacings.

    Returns ``(h_p, h_d, short)`` where ``short[i]`` flags columns whose
    lower headway bound already exceeds the capacity cap; the line-spacing
    update then tightens ``s`` through its capacity terms.
    """
    mode = Coordination(mode)
    p = params
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)):
        raise ContractError("line spacing must be strictly positive")
    sl = _slice(loc, agg, p, mode)
    lpx, ldx = agg.lam_px, agg.lam_dx
    cap_p = _safe_div(K, lpx * s)
    cap_d = _safe_div(K, ldx * s)
    lo_p, lo_d = p.h_min, p.h_dist_min

    int_p = _interior_headway(sl.alpha, s, sl.w_p, sl.c_p)
    h_p = np.maximum(lo_p, np.minimum(np.minimum(cap_p, p.h_max), int_p))
    if mode.collect:
        h_p = _coordinated_multiple(int_p, s, sl, cap_p, p)

    if mode.distribute:
        h_d = np.full_like(s, p.h_trunk)
    else:
        int_d = _interior_headway(sl.alpha, s, sl.w_d, sl.c_d)
        h_d = np.maximum(lo_d, np.minimum(np.minimum(cap_d, p.h_max), int_d))
    short = (lpx * s * h_p > K * (1 + 1e-12)) | (ldx * s * h_d > K * (1 + 1e-12))
    return h_p, h_d, short


def _coordinated_multiple(int_p, s, sl: _Slice, cap_p, p: ModelParams) -> np.ndarray:
    ht = p.h_trunk
    k_lo = max(1, math.ceil(p.h_min / ht - 1e-9))
    k_max_bound = math.floor(p.h_max / ht + 1e-9)
    out = np.empty_like(s)
    for i in range(s.shape[0]):
        hi = min(p.h_max, cap_p[i])
        k_hi = min(k_max_bound, math.floor(hi / ht + 1e-9)) if np.isfinite(hi) else k_max_bound
        if k_hi < k_lo:
            out[i] = k_lo * ht
            continue
        if np.isfinite(int_p[i]):
            k0 = int_p[i] / ht
            cands = {min(max(math.floor(k0), k_lo), k_hi), min(max(math.ceil(k0), k_lo), k_hi)}
        else:
            cands = {k_hi}

        def f(k):
            h = k * ht
            return sl.alpha[i] / (s[i] * h) + h * (sl.w_p[i] + s[i] * sl.c_p[i])
        out[i] = min(sorted(cands), key=f) * ht
    return out


def update_line_spacing(h_p: np.ndarray, h_d: np.ndarray, loc: LocalRates, agg: AggregateTables,
                        params: ModelParams, K: float,
                        mode: Coordination | str = Coordination.NONE) -> np.ndarray:
    """Line-spacing optimum: interior root, capped by both capacities and by L."""
    mode = Coordination(mode)
    sl = _slice(loc, agg, params, mode)
    num = sl.alpha * (1 / h_p + 1 / h_d) + sl.gamma
    den = sl.a_s + sl.c0 + h_p * sl.c_p + h_d * sl.c_d
    interior = np.sqrt(_safe_div(num, den))
    s = np.minimum.reduce([interior, _safe_div(K, agg.lam_px * h_p), _safe_div(K, agg.lam_dx * h_d),
                           np.full_like(interior, params.L)])
    return s


def update_stop_spacing(s: np.ndarray, h_p: np.ndarray, h_d: np.ndarray, agg: AggregateTables,
                        params: ModelParams, rates: AgencyRates) -> np.ndarray:
    """Stop-spacing optimum at every lattice point, clamped to (0, W]."""
    p = params
    s = np.asarray(s, dtype=float)
    per_stop = (p.pi_s + rates.pi_m * p.tau0 * (1 / h_p + 1 / h_d)) / (p.theta * s)
    num = 4 * p.v_walk * (per_stop[:, None] + p.tau0 * (agg.lam_pxy + agg.lam_dxy))
    b = np.sqrt(_safe_div(num, agg.lam))
    b = np.where(np.isnan(b), p.W, b)
    return np.clip(b, B_FLOOR, p.W)


@dataclass
class SolveReport:
    design: DesignGrid
    costs: CostBreakdown
    converged: bool
    outer_iterations: int
    inner_iterations: list[int]
    residuals: list[dict[str, float]]
    wall_time: float
    message: str = ""

    @property
    def GC(self) -> float:
        return self.costs.GC

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "message": self.message,
            "outer_iterations": self.outer_iterations,
            "inner_iterations": list(self.inner_iterations),
            "residuals": self.residuals,
            "wall_time": self.wall_time,
            "costs": self.costs.to_dict(),
            "summary": self.design.summary(),
            "design": self.design.to_dict(),
        }


def initial_design(params: ModelParams, K: int, mode: Coordination = Coordination.NONE) -> DesignGrid:
    p = params
    h0 = 0.25
    hp = min(max(h0, p.h_min), p.h_max)
    hd = p.h_trunk if mode.distribute else min(max(h0, p.h_dist_min), p.h_max)
    return DesignGrid.uniform(p.n, p.m, h_p=hp, h_d=hd, s=min(0.5, p.L), b=min(0.4, p.W),
                              K=K, mode=mode)


def random_design(params: ModelParams, K: int, rng: np.random.Generator,
                  mode: Coordination = Coordination.NONE) -> DesignGrid:
    """Random design within the headway and spacing bounds (capacity not enforced)."""
    p = params
    hp = rng.uniform(p.h_min, p.h_max, p.n)
    hd = rng.uniform(p.h_dist_min, p.h_max, p.n)
    if mode.distribute:
        hd = np.full(p.n, p.h_trunk)
    s = rng.uniform(0.05, p.L, p.n)
    b = rng.uniform(0.05, p.W, (p.n, p.m))
    return DesignGrid(hp, hd, s, b, K, mode)


def solve_design(params: ModelParams, agg: AggregateTables, K: int,
                 mode: Coordination | str = Coordination.NONE,
                 initial: DesignGrid | None = None, rates: AgencyRates | None = None,
                 *, outer_cap: int = OUTER_CAP, inner_cap: int = INNER_CAP,
                 stop_spacing: Callable[..., np.ndarray] | None = None,
                 fixed_s: np.ndarray | None = None) -> SolveReport:
    """Alternate the stop-spacing update with the headway/line-spacing fixed point.

    ``stop_spacing`` replaces the stage-one update (used for restricted
    design classes); it receives ``(s, h_p, h_d)`` and returns ``b``.
    ``fixed_s`` freezes the line spacings and optimizes the rest.
    """
    t0 = time.perf_counter()
    mode = Coordination(mode)
    p = params
    rates = rates or p.rates(K)
    lat = agg.lattice
    if (lat.n, lat.m) != (p.n, p.m):
        raise ContractError(f"aggregates lattice {(lat.n, lat.m)} != params lattice {(p.n, p.m)}")
    n, m, eps = p.n, p.m, p.eps
    d0 = initial if initial is not None else initial_design(p, K, mode)
    s, h_p, h_d, b = d0.s.copy(), d0.h_p.copy(), d0.h_d.copy(), d0.b.copy()
    if mode.distribute:
        h_d = np.full(n, p.h_trunk)
    if fixed_s is not None:
        s = np.asarray(fixed_s, dtype=float).copy()

    if stop_spacing is None:
        def stop_spacing(s_, hp_, hd_):
            return update_stop_spacing(s_, hp_, hd_, agg, p, rates)

    inner_counts: list[int] = []
    history: list[dict[str, float]] = []
    converged = False
    message = ""
    k = 0
    for k in range(1, outer_cap + 1):
        b_new = stop_spacing(s, h_p, h_d)
        loc = local_rates(b_new, agg, p, rates)
        s_t, hp_t, hd_t = s.copy(), h_p.copy(), h_d.copy()
        inner_ok = False
        kk = 0
        for kk in range(1, inner_cap + 1):
            hp_n, hd_n, _ = update_headways(s_t, loc, agg, p, K, mode)
            if fixed_s is None:
                s_n = update_line_spacing(hp_n, hd_n, loc, agg, p, K, mode)
            else:
                s_n = s_t
            r_s = np.abs(s_n - s_t).sum()
            r_h = np.abs(hp_n - hp_t).sum() + np.abs(hd_n - hd_t).sum()
            s_t, hp_t, hd_t = s_n, hp_n, hd_n
            if r_s <= n * eps and r_h <= 2 * n * eps:
                inner_ok = True
                break
        inner_counts.append(kk)
        res = {
            "S": float(np.abs(s_t - s).sum()),
            "H": float(np.abs(hp_t - h_p).sum() + np.abs(hd_t - h_d).sum()),
            "B": float(np.abs(b_new - b).sum()),
            "inner_converged": inner_ok,
        }
        history.append(res)
        s, h_p, h_d, b = s_t, hp_t, hd_t, b_new
        if inner_ok and res["S"] <= n * eps and res["H"] <= 2 * n * eps and res["B"] <= m * n * eps:
            converged = True
            break
    if not converged:
        message = f"no convergence after {k} outer iterations"
        log.warning("K=%s mode=%s: %s", K, mode.value, message)
    design = DesignGrid(h_p, h_d, s, b, K, mode)
    costs = cost_breakdown(design, agg, p, rates, mode)
    return SolveReport(design=design, costs=costs, converged=converged, outer_iterations=k,
                       inner_iterations=inner_counts, residuals=history,
                       wall_time=time.perf_counter() - t0, message=message)


class InfeasibleError(RuntimeError):
    pass


@dataclass
class VehicleSizeResult:
    K: int
    report: SolveReport
    curve: dict[int, float] = field(default_factory=dict)
    failures: dict[int, str] = field(default_factory=dict)


def optimize_vehicle_size(params: ModelParams, agg: AggregateTables,
                          mode: Coordination | str = Coordination.NONE,
                          solve: Callable[[int], SolveReport] | None = None,
                          k_range=None) -> VehicleSizeResult:
    """Exhaustive search over integer capacities; ties go to the smaller K."""
    mode = Coordination(mode)
    ks = list(k_range if k_range is not None else params.k_range)
    if not ks:
        raise ValueError("empty K range")
    if solve is None:
        def solve(K):
            return solve_design(params, agg, K, mode)
    best: SolveReport | None = None
    best_k = None
    curve: dict[int, float] = {}
    failures: dict[int, str] = {}
    for K in ks:
        try:
            rep = solve(K)
        except (InfeasibleError, ContractError) as exc:
            failures[K] = str(exc)
            continue
        if not rep.converged:
            failures[K] = rep.message
        curve[K] = rep.GC
        if best is None or rep.GC < best.GC:
            best, best_k = rep, K
    if best is None:
        raise InfeasibleError(f"no feasible vehicle size in {ks[0]}..{ks[-1]}: {failures}")
    return VehicleSizeResult(K=best_k, report=best, curve=curve, failures=failures)
