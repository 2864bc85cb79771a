"""Convert a continuous optimum into explicit lines and stops, and cost the result.

Lines are placed where the running count of lines, the integral of
``1/S(x)``, crosses ``k + 0.5``; stops along each line follow the same rule
on ``1/B(x_p, y)``. The discrete evaluation assigns every demand cell of a
fine lattice to its nearest line and nearest stop on that line.
"""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline, RegularGridInterpolator
from scipy.ndimage import distance_transform_edt

from .costmodel import Coordination, CostBreakdown, DesignGrid
from .demand import COLLECT, DISTRIBUTE, DemandField, Lattice
from .params import AgencyRates, ModelParams

SPACING_FLOOR = 1e-3
_QUAD_POINTS = 20001


class PlacementWarning(UserWarning):
    pass


@dataclass
class FeederLine:
    x: float
    stops: np.ndarray
    h_p: float
    h_d: float
    flags: list[str] = field(default_factory=list)


@dataclass
class DiscretePlan:
    lines: list[FeederLine]
    K: int
    L: float
    W: float
    mode: Coordination = Coordination.NONE
    flags: list[str] = field(default_factory=list)

    @property
    def line_x(self) -> np.ndarray:
        return np.array([ln.x for ln in self.lines])

    @property
    def n_stops(self) -> int:
        return int(sum(len(ln.stops) for ln in self.lines))

    def to_dict(self) -> dict:
        return {
            "K": int(self.K), "L": self.L, "W": self.W, "mode": Coordination(self.mode).value,
            "flags": list(self.flags),
            "lines": [{"x": ln.x, "H_lp": ln.h_p, "H_ld": ln.h_d, "stops": ln.stops.tolist(),
                       "flags": list(ln.flags)} for ln in self.lines],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "DiscretePlan":
        lines = [FeederLine(float(ln["x"]), np.asarray(ln["stops"], dtype=float), float(ln["H_lp"]),
                            float(ln["H_ld"]), list(ln.get("flags", []))) for ln in d["lines"]]
        return cls(lines, int(d["K"]), float(d["L"]), float(d["W"]),
                   Coordination(d.get("mode", "none")), list(d.get("flags", [])))

    def to_csv(self) -> str:
        """One row per stop."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["line", "x_p", "y_q", "H_lp", "H_ld"])
        for p, ln in enumerate(self.lines):
            for yq in ln.stops:
                w.writerow([p, f"{ln.x:.10g}", f"{yq:.10g}", f"{ln.h_p:.10g}", f"{ln.h_d:.10g}"])
        return buf.getvalue()

    def plot_data(self) -> dict:
        """Line polylines (terminal -> x_p along y=0, then up to W) and stop points."""
        segments = []
        points = []
        for p, ln in enumerate(self.lines):
            segments.append({"line": p, "path": [[0.0, 0.0], [ln.x, 0.0], [ln.x, self.W]]})
            points.extend({"line": p, "x": ln.x, "y": float(yq)} for yq in ln.stops)
        return {"L": self.L, "W": self.W, "segments": segments, "stops": points}


def _crossings(grid: np.ndarray, cum: np.ndarray, *, fine_tune: bool = False) -> tuple[np.ndarray, bool]:
    """Positions where ``cum`` crosses k + 0.5. Returns (positions, fallback_used)."""
    total = cum[-1]
    count = int(np.floor(total + 0.5))
    if count < 1:
        return np.array([np.interp(total / 2, cum, grid)]), True
    scale = total / count if fine_tune else 1.0
    targets = (np.arange(count) + 0.5) * scale
    targets = targets[targets < total]
    return np.interp(targets, cum, grid), False


def _positive(values: np.ndarray, what: str) -> np.ndarray:
    if np.any(values <= SPACING_FLOOR):
        warnings.warn(f"{what} interpolant not positive; floored at {SPACING_FLOOR} km",
                      PlacementWarning, stacklevel=3)
        values = np.maximum(values, SPACING_FLOOR)
    return values


def line_spacing_spline(x: np.ndarray, s: np.ndarray):
    """Natural cubic spline of S through the lattice; constant beyond the end points."""
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)):
        raise ValueError("line spacings must be positive")
    if len(x) < 2:
        return lambda z: np.full(np.shape(z), s[0])
    cs = CubicSpline(x, s, bc_type="natural")

    def f(z):
        z = np.asarray(z, dtype=float)
        return cs(np.clip(z, x[0], x[-1]))
    return f


def place_lines(x: np.ndarray, s: np.ndarray, L: float, *, fine_tune: bool = False) -> np.ndarray:
    """Line x-coordinates from lattice line spacings ``s`` sampled at ``x``."""
    spline = line_spacing_spline(x, s)
    grid = np.linspace(0.0, L, _QUAD_POINTS)
    vals = _positive(spline(grid), "line spacing")
    cum = cumulative_trapezoid(1.0 / vals, grid, initial=0.0)
    pos, fallback = _crossings(grid, cum, fine_tune=fine_tune)
    if fallback:
        warnings.warn("fewer than half a line implied; placed one line at the median",
                      PlacementWarning, stacklevel=2)
    return pos


class StopSpacingSurface:
    """Piecewise-cubic interpolant of the lattice stop spacings.

    Coordinates outside the lattice hull are clamped to it. Along a line where
    the cubic dips to non-positive values, bilinear interpolation is used.
    Cells outside ``active`` (no demand, spacing arbitrary) take the value of
    the nearest active cell so they do not distort the interpolant.
    """

    def __init__(self, x: np.ndarray, y: np.ndarray, b: np.ndarray, active: np.ndarray | None = None):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        b = np.asarray(b, dtype=float)
        if np.any(~(b > 0)):
            raise ValueError("stop spacings must be positive")
        if active is not None and np.any(active) and not np.all(active):
            _, (ii, jj) = distance_transform_edt(~np.asarray(active, bool), return_indices=True)
            b = b[ii, jj]
        self._linear = self._make(b, "linear")
        cubic_ok = len(self.x) >= 4 and len(self.y) >= 4
        self._cubic = self._make(b, "cubic") if cubic_ok else None

    def _make(self, b, method):
        if len(self.x) == 1 or len(self.y) == 1:
            xs = self.x if len(self.x) > 1 else np.array([self.x[0], self.x[0] + 1.0])
            ys = self.y if len(self.y) > 1 else np.array([self.y[0], self.y[0] + 1.0])
            bb = np.broadcast_to(b, (len(xs), len(ys))) if b.size == 1 else b
            if len(self.x) == 1:
                bb = np.vstack([b, b])
            if len(self.y) == 1:
                bb = np.hstack([bb, bb]) if bb.shape[1] == 1 else bb
            return RegularGridInterpolator((xs, ys), bb, method="linear")
        return RegularGridInterpolator((self.x, self.y), b, method=method)

    def along(self, xp: float, ys: np.ndarray) -> tuple[np.ndarray, str]:
        xc = np.full(ys.shape, np.clip(xp, self.x[0], self.x[-1]))
        yc = np.clip(ys, self.y[0], self.y[-1])
        pts = np.stack([xc, yc], axis=-1)
        if self._cubic is not None:
            vals = self._cubic(pts)
            if np.all(vals > 0):
                return vals, "cubic"
        return self._linear(pts), "linear"


def place_stops(surface: StopSpacingSurface, xp: float, W: float, *,
                fine_tune: bool = False) -> tuple[np.ndarray, list[str]]:
    """Stop y-coordinates along the line at ``xp``."""
    grid = np.linspace(0.0, W, _QUAD_POINTS)
    vals, method = surface.along(xp, grid)
    flags = [] if method == "cubic" else ["bilinear stop-spacing interpolation"]
    vals = _positive(vals, "stop spacing")
    cum = cumulative_trapezoid(1.0 / vals, grid, initial=0.0)
    pos, fallback = _crossings(grid, cum, fine_tune=fine_tune)
    if fallback:
        flags.append("single stop placed at the median of the stop count")
    return pos, flags


def generate_plan(design: DesignGrid, lattice: Lattice, *, active: np.ndarray | None = None,
                  fine_tune: bool = False) -> DiscretePlan:
    """Lines, stops and per-line headways from a lattice design.

    ``active`` marks lattice cells carrying demand (typically ``agg.lam > 0``).
    """
    mode = Coordination(design.mode)
    x, y = lattice.x, lattice.y
    xs = place_lines(x, design.s, lattice.L, fine_tune=fine_tune)
    surface = StopSpacingSurface(x, y, design.b, active)
    lines = []
    for xp in xs:
        stops, flags = place_stops(surface, xp, lattice.W, fine_tune=fine_tune)
        if mode.collect or mode.distribute:
            i = int(np.argmin(np.abs(x - xp)))
            hp, hd = float(design.h_p[i]), float(design.h_d[i])
        else:
            hp = float(np.interp(xp, x, design.h_p))
            hd = float(np.interp(xp, x, design.h_d))
        lines.append(FeederLine(float(xp), stops, hp, hd, flags))
    plan_flags = sorted({f for ln in lines for f in ln.flags})
    return DiscretePlan(lines, int(design.K), lattice.L, lattice.W, mode, plan_flags)


def catchment_widths(line_x: np.ndarray, L: float) -> np.ndarray:
    edges = np.concatenate([[0.0], (line_x[1:] + line_x[:-1]) / 2, [L]])
    return np.diff(edges)


def reoptimized_plan(design: DesignGrid, lattice: Lattice, params: ModelParams, agg, *,
                     rates: AgencyRates | None = None) -> tuple[DiscretePlan, object]:
    """Fine-tuned plan.

    Line spacings are rescaled so the implied line count is an integer (no
    fractional residual), then headways and stop spacings are re-solved with
    the rescaled spacings frozen, and the plan is placed from the result.
    """
    from .solver import solve_design

    spline = line_spacing_spline(lattice.x, design.s)
    grid = np.linspace(0.0, lattice.L, _QUAD_POINTS)
    total = cumulative_trapezoid(1.0 / _positive(spline(grid), "line spacing"), grid)[-1]
    count = max(1, int(np.floor(total + 0.5)))
    s_fixed = np.minimum(design.s * total / count, params.L)
    report = solve_design(params, agg, design.K, design.mode, initial=design, rates=rates,
                          fixed_s=s_fixed)
    return generate_plan(report.design, lattice, active=agg.lam > 0, fine_tune=True), report


def assign_cells(plan: DiscretePlan, X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest line by |x - x_p|, then nearest stop on that line by |y - y_q|."""
    if not plan.lines:
        raise ValueError("plan has no lines")
    lx = plan.line_x
    line_idx = np.searchsorted((lx[1:] + lx[:-1]) / 2, X, side="left")
    stop_idx = np.zeros(X.shape, dtype=int)
    for p, ln in enumerate(plan.lines):
        sel = line_idx == p
        if not sel.any():
            continue
        st = ln.stops
        if len(st) == 0:
            raise AssertionError(f"line {p} has no stops")
        stop_idx[sel] = np.searchsorted((st[1:] + st[:-1]) / 2, Y[sel], side="left")
    return line_idx, stop_idx


def _onboard_exposure(per_stop: np.ndarray) -> np.ndarray:
    # patrons beyond each stop plus half of the stop's own patrons
    beyond = np.concatenate([np.cumsum(per_stop[::-1])[::-1][1:], [0.0]])
    return beyond + per_stop / 2


def evaluate_discrete(plan: DiscretePlan, field_: DemandField, params: ModelParams,
                      rates: AgencyRates | None = None, mode: Coordination | str | None = None,
                      *, nx: int = 200, ny: int = 300) -> CostBreakdown:
    """Cost of an explicit plan by nearest-line / nearest-stop assignment."""
    if not plan.lines:
        raise ValueError("plan has no lines")
    mode = Coordination(mode if mode is not None else plan.mode)
    p = params
    rates = rates or p.rates(plan.K)
    lat = Lattice(field_.L, field_.W, nx, ny)
    X, Y = lat.mesh()
    dA = lat.cell_area
    dem_p = field_.cell_density(COLLECT, lat) * dA
    dem_d = field_.cell_density(DISTRIBUTE, lat) * dA
    dem = dem_p + dem_d
    line_idx, stop_idx = assign_cells(plan, X, Y)

    lx = plan.line_x
    xp = lx[line_idx]
    yq = np.empty_like(Y)
    for p_i, ln in enumerate(plan.lines):
        sel = line_idx == p_i
        yq[sel] = ln.stops[stop_idx[sel]]

    c_a = float((dem * (np.abs(X - xp) + np.abs(Y - yq))).sum() / p.v_walk)
    c_t1 = float((dem * (xp + yq)).sum() / p.v_bus)

    c_wp = c_wd = c_t2 = c_t3 = 0.0
    v1 = v2 = 0.0
    c_vk = 0.0
    n_stops = 0
    for p_i, ln in enumerate(plan.lines):
        sel = line_idx == p_i
        nq = len(ln.stops)
        n_stops += nq
        d_q = np.bincount(stop_idx[sel], weights=dem_p[sel], minlength=nq)
        a_q = np.bincount(stop_idx[sel], weights=dem_d[sel], minlength=nq)
        lp, ld = d_q.sum(), a_q.sum()
        hp, hd = ln.h_p, ln.h_d
        if mode.collect:
            c_wp += lp * (hp / 2 + p.tau_a * hp * lp + p.t_ft)
        else:
            c_wp += lp * (hp / 2 + p.tau_a / 2 * hp * lp + p.t_ft + p.h_trunk / 2)
        if mode.distribute:
            c_wd += ld * (p.t_tf + p.tau_b * p.h_trunk * ld)
        else:
            c_wd += ld * (p.t_tf + hd / 2 + p.tau_b / 2 * p.h_trunk * ld)
        c_t2 += p.tau0 * _onboard_exposure(d_q + a_q).sum()
        c_t3 += (p.tau_b * hp * (d_q * _onboard_exposure(d_q)).sum()
                 + p.tau_a * hd * (a_q * _onboard_exposure(a_q)).sum())
        freq = 1 / hp + 1 / hd
        length = p.W + ln.x
        c_vk += rates.pi_v / p.theta * length * freq
        v1 += length / p.v_bus * freq
        v2 += nq * p.tau0 * freq
    v3 = (p.tau_a + p.tau_b) * float(dem.sum())
    c_s = p.pi_s / p.theta * n_stops
    c_vh = rates.pi_m / p.theta * (v1 + v2 + v3)
    return CostBreakdown(C_s=c_s, C_vk=c_vk, C_vh=c_vh, V_h1=v1, V_h2=v2, V_h3=v3, C_A=c_a,
                         C_Wp=c_wp, C_Wd=c_wd, C_T1=c_t1, C_T2=c_t2, C_T3=c_t3)


def relative_errors(discrete: CostBreakdown, ca: CostBreakdown,
                    keys=("AC", "C_A", "C_W", "C_T", "UC", "GC")) -> dict[str, float]:
    return {k: (getattr(discrete, k) - getattr(ca, k)) / getattr(ca, k) for k in keys}
