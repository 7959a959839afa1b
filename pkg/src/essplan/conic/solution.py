"""Dispatch results pulled out of a solved program, and their audits."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..economics import DayCash, DeviceDay
from ..network import HybridNetwork
from .bnb import LIMIT, SOLVED, BnbOptions, MisocpResult, solve_misocp
from .model import DispatchModel

ACCEPT_TOL = 1e-6


@dataclass
class DeviceResult:
    label: str
    kind: str
    node: int
    p_dis: np.ndarray  # kW
    p_ch: np.ndarray  # kW, <= 0
    q: np.ndarray  # kvar
    mu_dis: np.ndarray
    mu_ch: np.ndarray
    soc: np.ndarray  # SOC(0..T)
    floors: np.ndarray  # reserve floor for SOC(1..T)
    i_abs: np.ndarray  # A per cell
    i2: np.ndarray  # relaxed I^2
    n_cess: int
    thermal: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class DispatchSolution:
    scenario: str
    status: str
    objective: float
    hours: int
    v2: dict[int, np.ndarray] = field(default_factory=dict)
    branch_p: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    branch_q: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    branch_i2: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    vsc: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    devices: list[DeviceResult] = field(default_factory=list)
    grid_p: dict[int, np.ndarray] = field(default_factory=dict)
    price: np.ndarray | None = None
    line_loss_kw: np.ndarray | None = None
    vsc_loss_kw: np.ndarray | None = None
    terms: dict[str, float] = field(default_factory=dict)
    penalty_slack: float = 0.0
    gap: float = np.nan
    mip: MisocpResult | None = None
    hint: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status in (SOLVED, LIMIT)

    @property
    def loss_kw(self) -> np.ndarray:
        return self.line_loss_kw + self.vsc_loss_kw

    @property
    def loss_cost(self) -> float:
        return float(self.loss_kw @ self.price)

    def voltage(self, bus: int) -> np.ndarray:
        return np.sqrt(np.maximum(self.v2[bus], 0.0))

    def device(self, label: str) -> DeviceResult:
        for d in self.devices:
            if d.label == label:
                return d
        raise KeyError(label)


def _val(expr, x):
    return expr.value(x)


def extract(model: DispatchModel, res: MisocpResult) -> DispatchSolution:
    scen = model.scen
    sol = DispatchSolution(scen.id, res.status, res.objective, model.hours, mip=res, hint=list(res.hint))
    sol.price = np.asarray(scen.price, dtype=float)
    if res.x is None:
        return sol
    x = res.x
    base = model.net.base_kva
    sol.v2 = {b: _val(e, x) for b, e in model.v2.items()}
    for bv in model.branches:
        key = (bv.branch.from_bus, bv.branch.to_bus)
        sol.branch_p[key] = _val(bv.p, x)
        sol.branch_q[key] = _val(bv.q, x) if bv.q is not None else np.zeros(model.hours)
        sol.branch_i2[key] = _val(bv.i2, x)
    for v in model.vscs:
        sol.vsc[v.name] = {
            "p_ac_kw": _val(v.p_ac, x) * base,
            "q_ac_kvar": _val(v.q_ac, x) * base,
            "p_abs_kw": _val(v.p_abs, x) * base,
            "loss_kw": _val(v.p_abs, x) * base * v.loss_coeff,
        }
    for b, (pg, _) in model.grid.items():
        sol.grid_p[b] = _val(pg, x) * base
    for dv in model.devices:
        d = dv.rating
        q = _val(dv.q, x) * base if dv.q is not None else np.zeros(model.hours)
        mu = _val(dv.mu, x)
        th = {k: _val(e, x) for k, e in dv.thermal.items()}
        sol.devices.append(
            DeviceResult(
                label=d.label,
                kind=d.kind,
                node=d.node,
                p_dis=_val(dv.p_dis, x) * base,
                p_ch=_val(dv.p_ch, x) * base,
                q=q,
                mu_dis=mu,
                mu_ch=1.0 - mu,
                soc=np.concatenate([[d.soc0], _val(dv.soc, x)]),
                floors=dv.floors.copy(),
                i_abs=_val(dv.i_abs, x),
                i2=_val(dv.i2, x),
                n_cess=d.n_cess,
                thermal=th,
            )
        )
    sol.line_loss_kw = _val(model.terms["line_loss_kw"], x)
    sol.vsc_loss_kw = _val(model.terms["vsc_loss_kw"], x)
    sol.terms = {k: float(_val(e, x)[0]) for k, e in model.terms.items() if e.m == 1}
    sol.penalty_slack = float(sum(_val(s, x).sum() for s in model.slacks))
    sol.gap = socr_gap(sol, model.net)
    return sol


def solve_dispatch(model: DispatchModel, opts: BnbOptions = BnbOptions()) -> DispatchSolution:
    return extract(model, solve_misocp(model.prog, opts))


def socr_gap(sol: DispatchSolution, net: HybridNetwork | None = None) -> float:
    """Largest |l - (P^2 + Q^2)/v_from| over branches and hours, per unit."""
    worst = 0.0
    for (f, t), l in sol.branch_i2.items():
        p = sol.branch_p[(f, t)]
        q = sol.branch_q.get((f, t), 0.0)
        v = sol.v2[f]
        dev = np.abs(l - (p * p + q * q) / np.maximum(v, 1e-12))
        worst = max(worst, float(np.max(dev)) if dev.size else 0.0)
    return worst


def cell_gap(sol: DispatchSolution) -> float:
    """Relaxation slack of the battery-current square surrogate, A^2."""
    vals = [np.max(np.abs(d.i2 - d.i_abs**2)) for d in sol.devices if d.i2.size]
    return float(max(vals)) if vals else 0.0


@dataclass
class ViolationCount:
    voltage: int = 0
    current: int = 0
    detail: list[tuple[str, int, int, float]] = field(default_factory=list)  # (kind, element, hour, value)

    @property
    def total(self) -> int:
        return self.voltage + self.current


def count_violations(sol: DispatchSolution, net: HybridNetwork, tol: float = ACCEPT_TOL) -> ViolationCount:
    """(bus, hour) voltage and (branch, hour) current limit breaches."""
    out = ViolationCount()
    for b in net.buses:
        v = sol.voltage(b.id)
        for t in np.flatnonzero((v > b.v_max + tol) | (v < b.v_min - tol)):
            out.voltage += 1
            out.detail.append(("voltage", b.id, int(t), float(v[t])))
    for br in net.branches:
        key = (br.from_bus, br.to_bus)
        lim = net.i_max_pu(br) ** 2
        l = sol.branch_i2[key]
        for t in np.flatnonzero(l > lim * (1 + tol) + tol):
            out.current += 1
            out.detail.append(("current", net.branches.index(br), int(t), float(np.sqrt(l[t]) * net.i_base(br.kind))))
    return out


def device_audit(sol: DispatchSolution, tol: float = ACCEPT_TOL) -> list[str]:
    """Check the device rules every accepted dispatch must satisfy."""
    problems = []
    for d in sol.devices:
        if np.any(np.abs(d.mu_dis + d.mu_ch - 1.0) > tol):
            problems.append(f"{d.label}: indicators not complementary")
        if np.any(np.minimum(np.abs(d.mu_dis), np.abs(d.mu_dis - 1.0)) > tol):
            problems.append(f"{d.label}: fractional indicator")
        scale = max(1.0, float(np.max(np.abs(d.p_dis), initial=0.0)), float(np.max(np.abs(d.p_ch), initial=0.0)))
        if np.any(np.minimum(d.p_dis, -d.p_ch) > tol * scale):
            problems.append(f"{d.label}: simultaneous charge and discharge")
        if abs(d.soc[-1] - d.soc[0]) > tol:
            problems.append(f"{d.label}: SOC not periodic")
        if np.any(d.soc[1:] < d.floors - tol):
            problems.append(f"{d.label}: SOC below reserve floor")
        if d.thermal and np.any(d.thermal["t_cess"] > d.thermal["t_bar"] + tol):
            problems.append(f"{d.label}: container air warmer than cells")
    return problems


def day_cash(sol: DispatchSolution, weight: float, r_int: float, n_bar: int) -> DayCash:
    """Cash-flow view of a solved day for the economics module."""
    devs = []
    zero = np.zeros(sol.hours)
    for d in sol.devices:
        devs.append(
            DeviceDay(
                label=d.label,
                kind=d.kind,
                p_dis=d.p_dis,
                p_ch=d.p_ch,
                p_hot=d.thermal.get("p_hot", zero),
                p_cool=d.thermal.get("p_cool", zero),
                i_bat=d.i_abs,
                n_cess=d.n_cess,
                r_int=r_int,
                n_bar=n_bar,
            )
        )
    return DayCash(sol.scenario, weight, sol.price, devs, sol.loss_kw)
