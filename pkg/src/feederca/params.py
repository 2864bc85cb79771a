"""Scalar model inputs, agency cost rates and configuration loading.

Units throughout the package: km, hours, patrons, dollars. Costs are
reported in hours (money is divided by the value of time).
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml


class InvalidParameterError(ValueError):
    """Raised when model inputs violate their documented ranges."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


# Affine cost-rate coefficients, $/veh-km and $/veh-h
A_V = 0.0314
B_V = 0.0039
A_M = 2.068
B_M = 0.108
C_M = 2.0


@dataclass(frozen=True)
class AgencyRates:
    pi_v: float
    pi_m: float
    a_v: float = A_V
    b_v: float = B_V
    a_m: float = A_M
    b_m: float = B_M
    c_m: float = C_M


def agency_rates(K: float, theta: float, *, a_v: float = A_V, b_v: float = B_V,
                 a_m: float = A_M, b_m: float = B_M, c_m: float = C_M) -> AgencyRates:
    """Bus-km and bus-hour unit costs for vehicle capacity ``K``.

    ``pi_v = a_v + b_v*K`` and ``pi_m = a_m + b_m*K + c_m*theta``.
    """
    bad = []
    if not K >= 1:
        bad.append("K >= 1")
    if not theta > 0:
        bad.append("theta > 0")
    if bad:
        raise InvalidParameterError(bad)
    return AgencyRates(pi_v=a_v + b_v * K, pi_m=a_m + b_m * K + c_m * theta,
                       a_v=a_v, b_v=b_v, a_m=a_m, b_m=b_m, c_m=c_m)


@dataclass(frozen=True)
class ModelParams:
    """All scalar inputs. Defaults are the baseline scenario."""

    L: float = 3.0                  # region length along x (km)
    W: float = 2.0                  # region width along y (km)
    theta: float = 20.0             # value of time ($/h)
    pi_s: float = 0.0               # stop infrastructure cost ($/stop/h)
    tau0: float = 12 / 3600         # fixed dwell loss per stop (h)
    tau_a: float = 2 / 3600         # alighting time per patron (h)
    tau_b: float = 4 / 3600         # boarding time per patron (h)
    v_walk: float = 2.0             # km/h
    v_bus: float = 25.0             # km/h
    t_ft: float = 3 / 60            # feeder -> trunk transfer delay (h)
    t_tf: float = 3 / 60            # trunk -> feeder transfer delay (h)
    h_min: float = 3 / 60           # h
    h_max: float = 30 / 60          # h
    h_trunk: float = 5 / 60         # h
    eps: float = 1e-4
    walk_radius: float = 0.3        # Manhattan radius around the terminal (km)
    k_min: int = 4
    k_max: int = 80
    n: int = 20                     # lattice points along x
    m: int = 30                     # lattice points along y

    @property
    def h_dist_min(self) -> float:
        """Lower bound on the distribution-direction headway."""
        return max(self.h_min, self.h_trunk)

    @property
    def k_range(self) -> range:
        return range(self.k_min, self.k_max + 1)

    def replace(self, **changes: Any) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def rates(self, K: float) -> AgencyRates:
        return agency_rates(K, self.theta)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def validate(params: ModelParams) -> list[str]:
    """Return every violated invariant (empty list when the inputs are consistent)."""
    p = params
    out = []
    for name in ("L", "W", "v_walk", "v_bus", "h_trunk", "eps", "theta"):
        if not getattr(p, name) > 0:
            out.append(f"{name} > 0")
    if not p.h_min > 0:
        out.append("H_min > 0")
    if not p.h_min <= p.h_max:
        out.append("H_min <= H_max")
    if not p.h_dist_min <= p.h_max:
        out.append("max(H_min, H_t) <= H_max")
    for name in ("tau0", "tau_a", "tau_b", "pi_s", "t_ft", "t_tf", "walk_radius"):
        if not getattr(p, name) >= 0:
            out.append(f"{name} >= 0")
    if not 1 <= p.k_min <= p.k_max:
        out.append("1 <= k_min <= k_max")
    if p.n < 1 or p.m < 1:
        out.append("lattice n, m >= 1")
    return out


def check(params: ModelParams) -> ModelParams:
    errors = validate(params)
    if errors:
        raise InvalidParameterError(errors)
    return params


_FIELDS = {f.name for f in dataclasses.fields(ModelParams)}


def params_from_mapping(data: dict[str, Any] | None) -> ModelParams:
    data = dict(data or {})
    unknown = set(data) - _FIELDS
    if unknown:
        raise InvalidParameterError([f"unknown parameter {k!r}" for k in sorted(unknown)])
    for key in ("k_min", "k_max", "n", "m"):
        if key in data:
            data[key] = int(data[key])
    return check(ModelParams(**data))


def load_mapping(path: str | Path) -> dict[str, Any]:
    """Read a YAML or JSON configuration file into a dict."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return json.loads(text)
    return yaml.safe_load(text) or {}
