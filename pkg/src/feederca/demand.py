"""Demand density fields over the quarter region and their lattice aggregates."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.stats import truncnorm

from .params import InvalidParameterError

COLLECT = "collection"
DISTRIBUTE = "distribution"
_DIRECTIONS = (COLLECT, DISTRIBUTE)


class _Uniform:
    """Marker for an infinite standard deviation (flat density on the support)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNIFORM"

    def __reduce__(self):
        return (_Uniform, ())


UNIFORM = _Uniform()


class OutOfDomainError(ValueError):
    pass


def _as_sigma(sigma):
    if sigma is UNIFORM or sigma is None:
        return UNIFORM
    if isinstance(sigma, str) and sigma.lower() in ("uniform", "inf", "infinity"):
        return UNIFORM
    sigma = float(sigma)
    if math.isinf(sigma):
        return UNIFORM
    return sigma


def trunc_normal_pdf(x, mu: float, sigma, a: float, b: float):
    """Density of a normal(mu, sigma) truncated to [a, b]; zero outside the support.

    ``sigma=UNIFORM`` (or ``inf``) gives the flat density ``1/(b-a)``.
    """
    if not a < b:
        raise InvalidParameterError(["a < b"])
    sigma = _as_sigma(sigma)
    x = np.asarray(x, dtype=float)
    inside = (x >= a) & (x <= b)
    if sigma is UNIFORM:
        out = np.where(inside, 1.0 / (b - a), 0.0)
    else:
        if not sigma > 0:
            raise InvalidParameterError(["sigma > 0"])
        pdf = truncnorm.pdf(x, (a - mu) / sigma, (b - mu) / sigma, loc=mu, scale=sigma)
        out = np.where(inside, pdf, 0.0)
    return out if out.ndim else float(out)


class DemandField:
    """Per-direction demand density over [0, L] x [0, W] with a walking zone.

    Subclasses implement ``_raw(direction, x, y)``; the public ``density``
    applies the Manhattan walking-zone exclusion ``x + y <= walk_radius``.
    """

    L: float
    W: float
    walk_radius: float

    def _raw(self, direction: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def density(self, direction: str, x, y, *, check: bool = True):
        if direction not in _DIRECTIONS:
            raise ValueError(f"direction must be one of {_DIRECTIONS}, got {direction!r}")
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if check:
            tol = 1e-12
            if np.any((x < -tol) | (x > self.L + tol) | (y < -tol) | (y > self.W + tol)):
                raise OutOfDomainError(f"point outside [0, {self.L}] x [0, {self.W}]")
        x, y = np.broadcast_arrays(x, y)
        val = self._raw(direction, x, y)
        val = np.where(x + y <= self.walk_radius, 0.0, val)
        return val if val.ndim else float(val)

    def cell_density(self, direction: str, lattice: "Lattice") -> np.ndarray:
        """Lattice-cell density: midpoint value times the cell's area fraction
        outside the walking zone (the zone boundary is integrated exactly)."""
        X, Y = lattice.mesh()
        raw = np.asarray(self._raw(direction, X, Y), dtype=float)
        return raw * outside_fraction(lattice, self.walk_radius)

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


def outside_fraction(lattice: "Lattice", radius: float) -> np.ndarray:
    """Area fraction of each lattice cell with x + y > radius."""
    if radius <= 0:
        return np.ones((lattice.n, lattice.m))
    xe = np.arange(lattice.n + 1) * lattice.dx
    ye = np.arange(lattice.m + 1) * lattice.dy

    def ramp(t):
        return np.maximum(t, 0.0) ** 2 / 2

    c = radius - xe[:, None] - ye[None, :]
    inside = ramp(c[:-1, :-1]) - ramp(c[1:, :-1]) - ramp(c[:-1, 1:]) + ramp(c[1:, 1:])
    return np.clip(1.0 - inside / lattice.cell_area, 0.0, 1.0)


def density(field: DemandField, direction: str, x, y):
    return field.density(direction, x, y)


@dataclass(frozen=True, eq=False)
class TruncNormalDemand(DemandField):
    """Product of truncated normals in x and y scaled by the direction total."""

    L: float = 3.0
    W: float = 2.0
    total_p: float = 1200.0
    total_d: float = 1200.0
    mu_xp: float = 0.0
    sigma_xp: Any = 0.75
    mu_yp: float = 0.0
    sigma_yp: Any = 0.5
    mu_xd: float = 0.0
    sigma_xd: Any = 0.75
    mu_yd: float = 0.0
    sigma_yd: Any = 0.5
    walk_radius: float = 0.3

    def __post_init__(self):
        for name in ("sigma_xp", "sigma_yp", "sigma_xd", "sigma_yd"):
            object.__setattr__(self, name, _as_sigma(getattr(self, name)))
        bad = []
        if self.total_p < 0 or self.total_d < 0:
            bad.append("demand totals >= 0")
        if not (self.L > 0 and self.W > 0):
            bad.append("L, W > 0")
        if bad:
            raise InvalidParameterError(bad)

    def _raw(self, direction, x, y):
        if direction == COLLECT:
            tot, mx, sx, my, sy = self.total_p, self.mu_xp, self.sigma_xp, self.mu_yp, self.sigma_yp
        else:
            tot, mx, sx, my, sy = self.total_d, self.mu_xd, self.sigma_xd, self.mu_yd, self.sigma_yd
        if tot == 0:
            return np.zeros(np.shape(x))
        fx = np.asarray(trunc_normal_pdf(x, mx, sx, 0.0, self.L))
        fy = np.asarray(trunc_normal_pdf(y, my, sy, 0.0, self.W))
        return tot * fx * fy

    @classmethod
    def symmetric(cls, L: float, W: float, total: float, *, mu=(0.0, 0.0), sigma=None,
                  walk_radius: float = 0.3) -> "TruncNormalDemand":
        """Same pattern in both directions; ``sigma`` defaults to (L/4, W/4)."""
        sx, sy = sigma if sigma is not None else (L / 4, W / 4)
        return cls(L=L, W=W, total_p=total, total_d=total,
                   mu_xp=mu[0], sigma_xp=sx, mu_yp=mu[1], sigma_yp=sy,
                   mu_xd=mu[0], sigma_xd=sx, mu_yd=mu[1], sigma_yd=sy,
                   walk_radius=walk_radius)

    def transposed(self) -> "TruncNormalDemand":
        """Swap the roles of x and y (alternative line layout)."""
        return TruncNormalDemand(
            L=self.W, W=self.L, total_p=self.total_p, total_d=self.total_d,
            mu_xp=self.mu_yp, sigma_xp=self.sigma_yp, mu_yp=self.mu_xp, sigma_yp=self.sigma_xp,
            mu_xd=self.mu_yd, sigma_xd=self.sigma_yd, mu_yd=self.mu_xd, sigma_yd=self.sigma_xd,
            walk_radius=self.walk_radius)

    def to_dict(self) -> dict[str, Any]:
        def s(v):
            return "uniform" if v is UNIFORM else v
        return {
            "mode": "trunc-normal", "L": self.L, "W": self.W,
            "total_p": self.total_p, "total_d": self.total_d,
            "mu_xp": self.mu_xp, "sigma_xp": s(self.sigma_xp),
            "mu_yp": self.mu_yp, "sigma_yp": s(self.sigma_yp),
            "mu_xd": self.mu_xd, "sigma_xd": s(self.sigma_xd),
            "mu_yd": self.mu_yd, "sigma_yd": s(self.sigma_yd),
            "walk_radius": self.walk_radius,
        }


class GridDemand(DemandField):
    """Tabulated densities on a rectilinear grid, bilinear in between.

    Points outside the sampled grid but inside the region take the value of
    the nearest grid edge.
    """

    def __init__(self, xs, ys, values_p, values_d, *, L: float, W: float,
                 walk_radius: float = 0.3):
        self.xs = np.asarray(xs, dtype=float)
        self.ys = np.asarray(ys, dtype=float)
        self.values_p = np.asarray(values_p, dtype=float)
        self.values_d = np.asarray(values_d, dtype=float)
        self.L, self.W, self.walk_radius = float(L), float(W), float(walk_radius)
        shape = (len(self.xs), len(self.ys))
        if self.values_p.shape != shape or self.values_d.shape != shape:
            raise InvalidParameterError([f"grid values must have shape {shape}"])
        if np.any(self.values_p < 0) or np.any(self.values_d < 0):
            raise InvalidParameterError(["grid densities >= 0"])
        self._interp = {
            COLLECT: RegularGridInterpolator((self.xs, self.ys), self.values_p, method="linear"),
            DISTRIBUTE: RegularGridInterpolator((self.xs, self.ys), self.values_d, method="linear"),
        }

    def _raw(self, direction, x, y):
        xc = np.clip(x, self.xs[0], self.xs[-1])
        yc = np.clip(y, self.ys[0], self.ys[-1])
        pts = np.stack([xc.ravel(), yc.ravel()], axis=-1)
        return self._interp[direction](pts).reshape(x.shape)

    @staticmethod
    def read_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Read a density table: header ``y, x_1, ..., x_k``; then ``y_j, v_1j, ..., v_kj``.

        Returns ``(xs, ys, values)`` with ``values[i, j]`` at ``(xs[i], ys[j])``.
        """
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
        xs = np.array([float(c) for c in rows[0][1:]])
        ys = np.array([float(r[0]) for r in rows[1:]])
        vals = np.array([[float(c) for c in r[1:]] for r in rows[1:]])
        return xs, ys, vals.T

    @classmethod
    def from_csv(cls, path_p, path_d=None, *, L: float, W: float, walk_radius: float = 0.3):
        xs, ys, vp = cls.read_csv(path_p)
        if path_d is None:
            vd = vp
        else:
            xs_d, ys_d, vd = cls.read_csv(path_d)
            if not (np.array_equal(xs, xs_d) and np.array_equal(ys, ys_d)):
                raise InvalidParameterError(["collection and distribution grids must share coordinates"])
        return cls(xs, ys, vp, vd, L=L, W=W, walk_radius=walk_radius)

    def to_dict(self) -> dict[str, Any]:
        return {"mode": "grid", "L": self.L, "W": self.W, "walk_radius": self.walk_radius,
                "nx": len(self.xs), "ny": len(self.ys)}


def demand_from_mapping(data: dict[str, Any], *, L: float, W: float, walk_radius: float,
                        base_dir: Path | None = None) -> DemandField:
    """Build a demand field from a config block (``mode: trunc-normal`` or ``mode: grid``)."""
    data = dict(data or {})
    mode = data.pop("mode", "trunc-normal")
    if mode == "grid":
        def resolve(p):
            if p is None:
                return None
            p = Path(p)
            return p if p.is_absolute() or base_dir is None else base_dir / p
        path_p = resolve(data.get("path_p", data.get("path")))
        path_d = resolve(data.get("path_d"))
        if path_p is None:
            raise InvalidParameterError(["grid demand needs 'path' or 'path_p'"])
        return GridDemand.from_csv(path_p, path_d, L=L, W=W, walk_radius=walk_radius)
    if mode != "trunc-normal":
        raise InvalidParameterError([f"unknown demand mode {mode!r}"])
    total = data.pop("total", None)
    if total is not None:
        data.setdefault("total_p", total)
        data.setdefault("total_d", total)
    sx = data.pop("sigma_x", L / 4)
    sy = data.pop("sigma_y", W / 4)
    mx = data.pop("mu_x", 0.0)
    my = data.pop("mu_y", 0.0)
    for d in ("p", "d"):
        data.setdefault(f"sigma_x{d}", sx)
        data.setdefault(f"sigma_y{d}", sy)
        data.setdefault(f"mu_x{d}", mx)
        data.setdefault(f"mu_y{d}", my)
    return TruncNormalDemand(L=L, W=W, walk_radius=walk_radius, **data)


@dataclass(frozen=True)
class Lattice:
    """Midpoint lattice: ``n`` points along x, ``m`` along y."""

    L: float
    W: float
    n: int
    m: int

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def dy(self) -> float:
        return self.W / self.m

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.dx

    @property
    def y(self) -> np.ndarray:
        return (np.arange(self.m) + 0.5) * self.dy

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")


@dataclass(frozen=True, eq=False)
class AggregateTables:
    """Lattice-sampled densities and their integrals.

    Arrays indexed ``[i]`` live on the x-lattice, ``[i, j]`` on the full
    lattice, ``[j]`` on the y-lattice. ``lam_pxy[i, j]`` is the collection
    demand between ``y_j`` and the far edge ``W`` (the onboard flow passing
    ``y_j``); ``lam_pxy_edges[i, k]`` is the same quantity at cell edge
    ``k*dy``, so column 0 equals ``lam_px`` and column ``m`` is zero.
    """

    lattice: Lattice
    lam_p: np.ndarray
    lam_d: np.ndarray
    total_p: float
    total_d: float
    lam_px: np.ndarray
    lam_dx: np.ndarray
    lam_pxy: np.ndarray
    lam_dxy: np.ndarray
    lam_pxy_edges: np.ndarray
    lam_dxy_edges: np.ndarray
    m_px: np.ndarray
    m_dx: np.ndarray
    lam_py: np.ndarray
    lam_dy: np.ndarray

    @property
    def total(self) -> float:
        return self.total_p + self.total_d

    @property
    def lam(self) -> np.ndarray:
        return self.lam_p + self.lam_d


def _tail_integrals(lam: np.ndarray, dy: float) -> tuple[np.ndarray, np.ndarray]:
    # edges[:, k] = sum over cells j >= k; midpoint value subtracts half of the own cell
    rev = np.cumsum(lam[:, ::-1], axis=1)[:, ::-1] * dy
    edges = np.concatenate([rev, np.zeros((lam.shape[0], 1))], axis=1)
    mid = edges[:, 1:] + 0.5 * lam * dy
    return mid, edges


def aggregates_from_arrays(lattice: Lattice, lam_p: np.ndarray, lam_d: np.ndarray) -> AggregateTables:
    dx, dy = lattice.dx, lattice.dy
    lam_p = np.asarray(lam_p, dtype=float)
    lam_d = np.asarray(lam_d, dtype=float)
    pxy, pxy_e = _tail_integrals(lam_p, dy)
    dxy, dxy_e = _tail_integrals(lam_d, dy)
    return AggregateTables(
        lattice=lattice,
        lam_p=lam_p,
        lam_d=lam_d,
        total_p=float(lam_p.sum() * dx * dy),
        total_d=float(lam_d.sum() * dx * dy),
        lam_px=lam_p.sum(axis=1) * dy,
        lam_dx=lam_d.sum(axis=1) * dy,
        lam_pxy=pxy,
        lam_dxy=dxy,
        lam_pxy_edges=pxy_e,
        lam_dxy_edges=dxy_e,
        m_px=(lam_p * pxy).sum(axis=1) * dy,
        m_dx=(lam_d * dxy).sum(axis=1) * dy,
        lam_py=lam_p.sum(axis=0) * dx,
        lam_dy=lam_d.sum(axis=0) * dx,
    )


def aggregates(field: DemandField, n: int, m: int) -> AggregateTables:
    """Midpoint Riemann sums of every aggregate demand quantity on an n x m lattice.

    Cells cut by the walking-zone boundary are weighted by their area outside
    the zone.
    """
    if n < 1 or m < 1:
        raise InvalidParameterError(["lattice n, m >= 1"])
    lat = Lattice(field.L, field.W, int(n), int(m))
    return aggregates_from_arrays(lat, field.cell_density(COLLECT, lat),
                                  field.cell_density(DISTRIBUTE, lat))
