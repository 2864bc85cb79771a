"""Generalized cost of a continuous feeder design on the solver lattice.

All costs are hours per hour of operation. Agency money is converted with
the value of time ``theta``.
"""
from __future__ import annotations

import csv
import dataclasses
import enum
import io
import json
from dataclasses import dataclass

import numpy as np

from .demand import AggregateTables
from .params import AgencyRates, ModelParams


class Coordination(str, enum.Enum):
    NONE = "none"
    COLLECT = "collect"
    DISTRIBUTE = "distribute"
    BOTH = "both"

    @property
    def collect(self) -> bool:
        return self in (Coordination.COLLECT, Coordination.BOTH)

    @property
    def distribute(self) -> bool:
        return self in (Coordination.DISTRIBUTE, Coordination.BOTH)


class LatticeMismatchError(ValueError):
    pass


class ConstraintViolation(ValueError):
    """A design violates bounds, capacity or coordination constraints."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        head = violations[:8]
        more = f" (+{len(violations) - 8} more)" if len(violations) > 8 else ""
        super().__init__("; ".join(head) + more)


@dataclass(frozen=True, eq=False)
class DesignGrid:
    """Lattice values of the decision functions.

    ``h_p``, ``h_d``, ``s`` have shape ``(n,)``; ``b`` has shape ``(n, m)``.
    """

    h_p: np.ndarray
    h_d: np.ndarray
    s: np.ndarray
    b: np.ndarray
    K: int
    mode: Coordination = Coordination.NONE

    def __post_init__(self):
        for name in ("h_p", "h_d", "s", "b"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "mode", Coordination(self.mode))

    @property
    def n(self) -> int:
        return self.s.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[1]

    def replace(self, **changes) -> "DesignGrid":
        return dataclasses.replace(self, **changes)

    @classmethod
    def uniform(cls, n: int, m: int, *, h_p: float, h_d: float, s: float, b: float,
                K: int, mode=Coordination.NONE) -> "DesignGrid":
        return cls(np.full(n, h_p), np.full(n, h_d), np.full(n, s), np.full((n, m), b), K, mode)

    def summary(self) -> dict:
        """[min, max] and mean of each decision function.

        Line spacing is averaged as ``L / (number of lines)`` and stop spacing
        as area per stop along the lines, i.e. both are weighted by the count
        of facilities they generate; headways are plain lattice means (min).
        """
        s, b = self.s, self.b
        w = 1.0 / (s[:, None] * b)
        return {
            "B": {"min": float(b.min()), "max": float(b.max()),
                  "mean": float((b * w).sum() / w.sum())},
            "S_l": {"min": float(s.min()), "max": float(s.max()),
                    "mean": float(len(s) / (1.0 / s).sum())},
            "H_lp_min": {"min": float(self.h_p.min() * 60), "max": float(self.h_p.max() * 60),
                         "mean": float(self.h_p.mean() * 60)},
            "H_ld_min": {"min": float(self.h_d.min() * 60), "max": float(self.h_d.max() * 60),
                         "mean": float(self.h_d.mean() * 60)},
            "K": int(self.K),
        }

    def to_csv(self, x: np.ndarray, y: np.ndarray) -> str:
        """One row per lattice point."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "x", "y", "H_lp", "H_ld", "S_l", "B"])
        for i in range(self.n):
            for j in range(self.m):
                w.writerow([i, j, f"{x[i]:.10g}", f"{y[j]:.10g}", f"{self.h_p[i]:.10g}",
                            f"{self.h_d[i]:.10g}", f"{self.s[i]:.10g}", f"{self.b[i, j]:.10g}"])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"K": int(self.K), "mode": self.mode.value, "H_lp": self.h_p.tolist(),
                "H_ld": self.h_d.tolist(), "S_l": self.s.tolist(), "B": self.b.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DesignGrid":
        return cls(np.array(d["H_lp"]), np.array(d["H_ld"]), np.array(d["S_l"]),
                   np.array(d["B"]), int(d["K"]), Coordination(d.get("mode", "none")))


COST_FIELDS = ("C_s", "C_vk", "C_vh", "V_h1", "V_h2", "V_h3", "C_A", "C_Wp", "C_Wd", "C_W",
               "C_T1", "C_T2", "C_T3", "C_T", "AC", "UC", "GC")


@dataclass(frozen=True)
class CostBreakdown:
    C_s: float
    C_vk: float
    C_vh: float
    V_h1: float
    V_h2: float
    V_h3: float
    C_A: float
    C_Wp: float
    C_Wd: float
    C_T1: float
    C_T2: float
    C_T3: float

    @property
    def C_W(self) -> float:
        return self.C_Wp + self.C_Wd

    @property
    def C_T(self) -> float:
        return self.C_T1 + self.C_T2 + self.C_T3

    @property
    def V_h(self) -> float:
        return self.V_h1 + self.V_h2 + self.V_h3

    @property
    def AC(self) -> float:
        return self.C_s + self.C_vk + self.C_vh

    @property
    def UC(self) -> float:
        return self.C_A + self.C_W + self.C_T

    @property
    def GC(self) -> float:
        return self.AC + self.UC

    def to_dict(self) -> dict[str, float]:
        return {k: float(getattr(self, k)) for k in COST_FIELDS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def csv_row(self) -> list[str]:
        return [f"{getattr(self, k):.10g}" for k in COST_FIELDS]


def _check_lattice(design: DesignGrid, agg: AggregateTables) -> None:
    lat = agg.lattice
    if design.s.shape != (lat.n,) or design.h_p.shape != (lat.n,) or design.h_d.shape != (lat.n,):
        raise LatticeMismatchError(f"x-lattice size {lat.n} does not match design {design.s.shape}")
    if design.b.shape != (lat.n, lat.m):
        raise LatticeMismatchError(f"lattice {(lat.n, lat.m)} does not match B {design.b.shape}")


def access_cost(design: DesignGrid, agg: AggregateTables, params: ModelParams) -> float:
    _check_lattice(design, agg)
    lat = agg.lattice
    walk = (design.s[:, None] + design.b) / (4 * params.v_walk)
    return float((walk * agg.lam).sum() * lat.cell_area)


def wait_transfer_cost(design: DesignGrid, agg: AggregateTables, params: ModelParams,
                       mode: Coordination | str | None = None) -> tuple[float, float]:
    """Waiting at stops plus terminal transfer delay, per direction."""
    _check_lattice(design, agg)
    mode = Coordination(mode if mode is not None else design.mode)
    p = params
    dx = agg.lattice.dx
    s, hp, hd = design.s, design.h_p, design.h_d
    lpx, ldx = agg.lam_px, agg.lam_dx
    if mode.collect:
        per_p = hp / 2 + p.tau_a * s * hp * lpx + p.t_ft
    else:
        per_p = hp / 2 + p.tau_a / 2 * s * hp * lpx + p.t_ft + p.h_trunk / 2
    if mode.distribute:
        per_d = p.t_tf + p.tau_b * s * p.h_trunk * ldx
    else:
        per_d = p.t_tf + hd / 2 + p.tau_b / 2 * s * p.h_trunk * ldx
    return float((per_p * lpx).sum() * dx), float((per_d * ldx).sum() * dx)


def invehicle_cost(design: DesignGrid, agg: AggregateTables,
                   params: ModelParams) -> tuple[float, float, float]:
    _check_lattice(design, agg)
    lat = agg.lattice
    p = params
    X, Y = lat.mesh()
    c1 = float((((X + Y) / p.v_bus) * agg.lam).sum() * lat.cell_area)
    c2 = float(p.tau0 * ((agg.lam_pxy + agg.lam_dxy) / design.b).sum() * lat.cell_area)
    sh_p = design.s * design.h_p
    sh_d = design.s * design.h_d
    c3 = float((p.tau_b * sh_p * agg.m_px + p.tau_a * sh_d * agg.m_dx).sum() * lat.dx)
    return c1, c2, c3


def fleet_size(design: DesignGrid, agg: AggregateTables,
               params: ModelParams) -> tuple[float, float, float]:
    lat = agg.lattice
    p = params
    x = lat.x
    freq = 1 / design.h_p + 1 / design.h_d
    v1 = float(((p.W + x) / (design.s * p.v_bus) * freq).sum() * lat.dx)
    v2 = float((p.tau0 / (design.s[:, None] * design.b) * freq[:, None]).sum() * lat.cell_area)
    v3 = float((p.tau_a + p.tau_b) * agg.total)
    return v1, v2, v3


def agency_cost(design: DesignGrid, agg: AggregateTables, params: ModelParams,
                rates: AgencyRates | None = None):
    """Return ``(C_s, C_vk, C_vh, V_h1, V_h2, V_h3)``."""
    _check_lattice(design, agg)
    rates = rates or params.rates(design.K)
    p = params
    lat = agg.lattice
    x = lat.x
    freq = 1 / design.h_p + 1 / design.h_d
    c_s = float(p.pi_s / p.theta * (1 / (design.s[:, None] * design.b)).sum() * lat.cell_area)
    c_vk = float(rates.pi_v / p.theta * ((p.W + x) / design.s * freq).sum() * lat.dx)
    v1, v2, v3 = fleet_size(design, agg, params)
    c_vh = rates.pi_m / p.theta * (v1 + v2 + v3)
    return c_s, c_vk, c_vh, v1, v2, v3


def feasibility_violations(design: DesignGrid, agg: AggregateTables, params: ModelParams,
                           mode: Coordination | str | None = None, *, rtol: float = 1e-9) -> list[str]:
    """Every lattice point at which a bound, capacity or coordination constraint fails."""
    _check_lattice(design, agg)
    mode = Coordination(mode if mode is not None else design.mode)
    p = params
    K = design.K
    out = []
    lo_d = p.h_dist_min
    tol = lambda v: rtol * max(1.0, abs(v))  # noqa: E731
    for i in range(design.n):
        hp, hd, s = design.h_p[i], design.h_d[i], design.s[i]
        if not (p.h_min - tol(p.h_min) <= hp <= p.h_max + tol(p.h_max)):
            out.append(f"H_lp[{i}]={hp:.6g} outside [{p.h_min:.6g}, {p.h_max:.6g}]")
        if not (lo_d - tol(lo_d) <= hd <= p.h_max + tol(p.h_max)):
            out.append(f"H_ld[{i}]={hd:.6g} outside [{lo_d:.6g}, {p.h_max:.6g}]")
        if not (0 < s <= p.L + tol(p.L)):
            out.append(f"S_l[{i}]={s:.6g} outside (0, L]")
        if agg.lam_px[i] * s * hp > K + tol(K):
            out.append(f"collection capacity at x[{i}]: {agg.lam_px[i] * s * hp:.6g} > K={K}")
        if agg.lam_dx[i] * s * hd > K + tol(K):
            out.append(f"distribution capacity at x[{i}]: {agg.lam_dx[i] * s * hd:.6g} > K={K}")
        if mode.collect:
            k = hp / p.h_trunk
            if abs(k - round(k)) > 1e-9 or round(k) < 1:
                out.append(f"H_lp[{i}] not an integer multiple of H_t")
        if mode.distribute and abs(hd - p.h_trunk) > 1e-12:
            out.append(f"H_ld[{i}] != H_t under distribution coordination")
    bad = np.argwhere(~((design.b > 0) & (design.b <= p.W * (1 + rtol))))
    for i, j in bad[:20]:
        out.append(f"B[{i},{j}]={design.b[i, j]:.6g} outside (0, W]")
    return out


def b1_cost(design: DesignGrid, agg: AggregateTables, params: ModelParams,
            rates: AgencyRates | None = None) -> float:
    """Uncoordinated generalized cost in the rearranged constant / x / (x,y) form."""
    _check_lattice(design, agg)
    rates = rates or params.rates(design.K)
    p = params
    lat = agg.lattice
    x, y = lat.x, lat.y
    s, hp, hd, b = design.s, design.h_p, design.h_d, design.b
    lpx, ldx = agg.lam_px, agg.lam_dx
    th = p.theta
    freq = 1 / hp + 1 / hd

    const = (rates.pi_m / th * (p.tau_a + p.tau_b) * agg.total
             + ((x / p.v_bus * (lpx + ldx) + (p.t_ft + p.h_trunk / 2) * lpx + p.t_tf * ldx).sum() * lat.dx)
             + (y / p.v_bus * (agg.lam_py + agg.lam_dy)).sum() * lat.dy)
    single = (rates.pi_v * (p.W + x) / (th * s) * freq
              + rates.pi_m * (p.W + x) / (th * s * p.v_bus) * freq
              + s / (4 * p.v_walk) * (lpx + ldx)
              + hp / 2 * lpx + hd / 2 * ldx
              + p.tau_a / 2 * s * hp * lpx ** 2
              + p.tau_b / 2 * s * p.h_trunk * ldx ** 2
              + p.tau_b * s * hp * agg.m_px + p.tau_a * s * hd * agg.m_dx).sum() * lat.dx
    S = s[:, None]
    double = (p.pi_s / th / (S * b)
              + rates.pi_m / th * p.tau0 / (S * b) * freq[:, None]
              + b / (4 * p.v_walk) * agg.lam
              + p.tau0 * (agg.lam_pxy + agg.lam_dxy) / b).sum() * lat.cell_area
    return float(const + single + double)


def cost_breakdown(design: DesignGrid, agg: AggregateTables, params: ModelParams,
                   rates: AgencyRates | None = None,
                   mode: Coordination | str | None = None) -> CostBreakdown:
    """Every component, without feasibility checks."""
    mode = Coordination(mode if mode is not None else design.mode)
    rates = rates or params.rates(design.K)
    c_s, c_vk, c_vh, v1, v2, v3 = agency_cost(design, agg, params, rates)
    c_wp, c_wd = wait_transfer_cost(design, agg, params, mode)
    t1, t2, t3 = invehicle_cost(design, agg, params)
    return CostBreakdown(C_s=c_s, C_vk=c_vk, C_vh=c_vh, V_h1=v1, V_h2=v2, V_h3=v3,
                         C_A=access_cost(design, agg, params), C_Wp=c_wp, C_Wd=c_wd,
                         C_T1=t1, C_T2=t2, C_T3=t3)


def generalized_cost(design: DesignGrid, agg: AggregateTables, params: ModelParams,
                     rates: AgencyRates | None = None, mode: Coordination | str | None = None,
                     *, check: bool = True, identity_rtol: float = 1e-9) -> CostBreakdown:
    """Full cost breakdown of a feasible design.

    Raises ``ConstraintViolation`` listing offending lattice points. For the
    uncoordinated objective the component sum is cross-checked against the
    rearranged form and a mismatch raises ``ArithmeticError``.
    """
    mode = Coordination(mode if mode is not None else design.mode)
    if check:
        bad = feasibility_violations(design, agg, params, mode)
        if bad:
            raise ConstraintViolation(bad)
    cb = cost_breakdown(design, agg, params, rates, mode)
    if mode is Coordination.NONE and identity_rtol is not None:
        alt = b1_cost(design, agg, params, rates)
        if abs(alt - cb.GC) > identity_rtol * max(1.0, abs(cb.GC)):
            raise ArithmeticError(f"component sum {cb.GC!r} != rearranged form {alt!r}")
    return cb
