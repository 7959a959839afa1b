"""Device-level battery model shared by stationary and mobile units."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .network import DT_HOURS

TRAJECTORY_TOL = 1e-6


class DegenerateDeviceError(ValueError):
    pass


@dataclass(frozen=True)
class BessRating:
    node: int
    e_rate: float  # kWh
    p_rate: float  # kW
    q_rate: float = 0.0  # kvar
    s_pcs: float | None = None  # kVA, defaults to max(p_rate, q_rate)
    soc_min: float = 0.1
    soc_max: float = 0.9
    soc0: float = 0.5
    self_discharge: float = 0.0
    eta_c: float = 0.976
    eta_d: float = 0.976
    eta_pcs: float = 0.95
    n_cess: int = 1
    kind: str = "SESS"
    colocated: bool = False
    name: str = ""

    def __post_init__(self):
        if not 0.0 <= self.soc_min < self.soc_max <= 1.0:
            raise ValueError(f"{self.label}: need 0 <= soc_min < soc_max <= 1")
        if not self.soc_min - 1e-12 <= self.soc0 <= self.soc_max + 1e-12:
            raise ValueError(f"{self.label}: soc0 outside [soc_min, soc_max]")
        if self.e_rate < 0 or self.p_rate < 0 or self.q_rate < 0:
            raise ValueError(f"{self.label}: ratings must be non-negative")
        for eta in (self.eta_c, self.eta_d, self.eta_pcs):
            if not 0.0 < eta <= 1.0:
                raise ValueError(f"{self.label}: efficiencies must lie in (0, 1]")
        if self.kind not in ("SESS", "MESS"):
            raise ValueError(f"{self.label}: kind must be SESS or MESS")
        if self.s_pcs is None:
            object.__setattr__(self, "s_pcs", max(self.p_rate, self.q_rate))
        if self.n_cess < 1:
            raise ValueError(f"{self.label}: at least one container")

    @property
    def label(self) -> str:
        return self.name or f"{self.kind}@{self.node}"

    @property
    def discharge_factor(self) -> float:
        """SOC drop per kWh delivered to the grid."""
        return 1.0 / (self.e_rate * self.eta_d * self.eta_pcs)

    @property
    def charge_factor(self) -> float:
        """SOC rise per kWh drawn from the grid."""
        return self.eta_c * self.eta_pcs / self.e_rate


@dataclass(frozen=True)
class BessSetpoint:
    """One hour of device operation; grid injection is positive."""

    p_dis: float = 0.0
    p_ch: float = 0.0
    q_dis: float = 0.0
    q_ch: float = 0.0
    mu_dis: int = 1
    mu_ch: int = 0

    @property
    def p(self) -> float:
        return self.p_dis + self.p_ch

    @property
    def q(self) -> float:
        return self.q_dis + self.q_ch

    def violations(self, r: BessRating, tol: float = 1e-9) -> list[str]:
        out = []
        if self.mu_dis + self.mu_ch != 1 or {self.mu_dis, self.mu_ch} - {0, 1}:
            out.append("charge/discharge indicators must be complementary binaries")
        if not -tol <= self.p_dis <= r.p_rate * self.mu_dis + tol:
            out.append("discharge power outside [0, P_rate*mu_dis]")
        if not -r.p_rate * self.mu_ch - tol <= self.p_ch <= tol:
            out.append("charge power outside [-P_rate*mu_ch, 0]")
        if r.colocated:
            if not -tol <= self.q_dis <= r.q_rate * self.mu_dis + tol:
                out.append("colocated q_dis outside [0, Q_rate*mu_dis]")
            if not -r.q_rate * self.mu_ch - tol <= self.q_ch <= tol:
                out.append("colocated q_ch outside [-Q_rate*mu_ch, 0]")
        elif abs(self.q) > r.q_rate + tol:
            out.append("reactive power outside [-Q_rate, Q_rate]")
        return out


def soc_step(soc_prev: float, sp: BessSetpoint, r: BessRating, dt: float = DT_HOURS) -> float:
    if r.e_rate <= 0:
        raise DegenerateDeviceError(f"{r.label}: zero energy rating")
    return (
        soc_prev * (1.0 - r.self_discharge)
        - sp.p_ch * r.eta_c * r.eta_pcs * dt / r.e_rate
        - sp.p_dis * dt / (r.e_rate * r.eta_d * r.eta_pcs)
    )


def simulate_soc(setpoints: Sequence[BessSetpoint], r: BessRating, soc0: float | None = None) -> np.ndarray:
    """SOC(0..T) for a setpoint series, no clamping."""
    soc = [r.soc0 if soc0 is None else soc0]
    for sp in setpoints:
        soc.append(soc_step(soc[-1], sp, r))
    return np.array(soc)


def pcs_feasible(sp: BessSetpoint, r: BessRating, dc: bool = False, tol: float = 1e-9) -> bool:
    if dc:
        return (
            abs(sp.q) <= tol
            and -tol <= sp.p_dis <= r.p_rate * sp.mu_dis + tol
            and -r.p_rate * sp.mu_ch - tol <= sp.p_ch <= tol
        )
    return math.hypot(sp.p, sp.q) <= r.s_pcs + tol


def mess_min_soc(
    t: int,
    load_p: Sequence[float],
    r: BessRating,
    important_ratio: float,
    horizon: int = 2,
    dt: float = DT_HOURS,
) -> float:
    """Reserve SOC needed to carry the important share of ``horizon`` hours of load from t."""
    if r.e_rate <= 0:
        raise DegenerateDeviceError(f"{r.label}: zero energy rating")
    n = len(load_p)
    energy = sum(load_p[(t + k) % n] for k in range(horizon)) * dt
    return important_ratio * energy / (r.e_rate * r.eta_d * r.eta_pcs)


def mess_floor_series(load_p: Sequence[float], r: BessRating, important_ratio: float, horizon: int = 2) -> np.ndarray:
    """Reserve floor for SOC(1..T); entry k covers load hours k and k+1 (0-based, wrapping)."""
    return np.array([mess_min_soc(k, load_p, r, important_ratio, horizon) for k in range(len(load_p))])


@dataclass
class Violation:
    kind: str
    t: int
    value: float
    bound: float


def check_trajectory(
    traj: Sequence[float],
    r: BessRating,
    floors: Sequence[float] | None = None,
    tol: float = TRAJECTORY_TOL,
) -> list[Violation]:
    """Audit SOC(0..T) against bounds, per-hour floors and daily periodicity.

    ``floors[t-1]`` applies to SOC(t); the effective lower bound is the larger
    of the floor and ``soc_min``.
    """
    traj = np.asarray(traj, dtype=float)
    n = len(traj) - 1
    if floors is None:
        floors = np.zeros(n)
    floors = np.asarray(floors, dtype=float)
    if floors.shape != (n,):
        raise ValueError(f"floors must have {n} entries")
    out = []
    for t in range(1, n + 1):
        lo = max(r.soc_min, floors[t - 1])
        s = traj[t]
        if s < lo - tol:
            out.append(Violation("below_floor" if floors[t - 1] > r.soc_min else "below_min", t, s, lo))
        if s > r.soc_max + tol:
            out.append(Violation("above_max", t, s, r.soc_max))
    if abs(traj[-1] - traj[0]) > tol:
        out.append(Violation("periodicity", n, traj[-1], traj[0]))
    return out
