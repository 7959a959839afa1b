"""Day-ahead dispatch of an AC/DC hybrid feeder with storage as a MISOCP.

Network quantities are per unit on the network's base power; storage
ratings stay in kW/kWh and are scaled where they meet the network. Each
branch is oriented parent to child, and the relaxed branch-flow equations
are written per hour:

    v_j = v_i - 2 (r P + x Q) + (r^2 + x^2) l,      ||(2P, 2Q, l - v_i)|| <= l + v_i

Converters draw ``p_ac + eta |p_ac|`` from their DC terminal to deliver
``p_ac`` on the AC side, with ``|p_ac|`` an epigraph variable. The loss
therefore always leaves the system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..degradation import DEFAULT as DEFAULT_DEGRADATION
from ..degradation import DegradationParams
from ..economics import EconParams
from ..network import DT_HOURS, Branch, HybridNetwork, Scenario, validate_scenario
from ..storage import BessRating, mess_floor_series
from ..thermal import ThermalParams, add_container_thermal
from .program import Affine, ConicProgram, hstack, total

SQRT_HALF = math.sqrt(0.5)
MU, X_AIR, X_VENT = 0, 1, 2  # branching classes, in branching order


class BuildError(ValueError):
    """The requested program cannot be built (bad placement or empty bounds)."""


class InfeasibleBounds(BuildError):
    pass


@dataclass(frozen=True)
class ModelOptions:
    thermal: bool = True
    penalty: bool = False  # slack on voltage/current limits, for violation accounting only
    penalty_weight: float = 1e4  # $ per p.u. of limit slack
    slack_voltage: float = 1.0
    reserve_horizon: int = 2


@dataclass
class DeviceVars:
    rating: BessRating
    bus_kind: str
    p_dis: Affine
    p_ch: Affine
    q: Affine | None
    q_dis: Affine | None
    q_ch: Affine | None
    mu: Affine
    soc: Affine
    i_abs: Affine
    i2: Affine
    floors: np.ndarray
    thermal: dict = field(default_factory=dict)


@dataclass
class BranchVars:
    branch: Branch
    p: Affine
    q: Affine | None
    i2: Affine
    r: float
    x: float


@dataclass
class VscVars:
    name: str
    p_ac: Affine
    q_ac: Affine
    p_abs: Affine
    loss_coeff: float


@dataclass
class DispatchModel:
    prog: ConicProgram
    net: HybridNetwork
    scen: Scenario
    options: ModelOptions
    econ: EconParams
    thermal: ThermalParams
    v2: dict[int, Affine]
    branches: list[BranchVars]
    vscs: list[VscVars]
    devices: list[DeviceVars]
    grid: dict[int, tuple[Affine, Affine]]
    terms: dict[str, Affine]
    slacks: list[Affine] = field(default_factory=list)

    @property
    def hours(self) -> int:
        return self.scen.hours


def _as_const(v, n) -> Affine:
    return Affine.constant(np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy())


def build_dispatch(
    net: HybridNetwork,
    scen: Scenario,
    devices: Sequence[BessRating] = (),
    econ: EconParams = EconParams(),
    thermal: ThermalParams = ThermalParams(),
    degradation: DegradationParams = DEFAULT_DEGRADATION,
    options: ModelOptions = ModelOptions(),
) -> DispatchModel:
    """Assemble the one-day program for a fixed storage layout."""
    validate_scenario(scen, net)
    n = scen.hours
    base = net.base_kva
    price = np.asarray(scen.price, dtype=float)
    prog = ConicProgram(name=f"dispatch[{scen.id}]")
    slacks: list[Affine] = []

    # -- buses -----------------------------------------------------------------
    slack_bus = set(net.slack_buses().values())
    v2: dict[int, Affine] = {}
    for b in net.buses:
        if b.id in slack_bus:
            v = options.slack_voltage**2
            v2[b.id] = prog.var(f"v2[{b.id}]", n, lb=v, ub=v)
        elif options.penalty:
            v2[b.id] = prog.var(f"v2[{b.id}]", n, lb=0.0)
            s_hi = prog.var(f"v2_over[{b.id}]", n, lb=0.0)
            s_lo = prog.var(f"v2_under[{b.id}]", n, lb=0.0)
            prog.le(v2[b.id] - b.v_max**2 - s_hi, name=f"vmax[{b.id}]")
            prog.le(b.v_min**2 - v2[b.id] - s_lo, name=f"vmin[{b.id}]")
            slacks += [s_hi, s_lo]
        else:
            v2[b.id] = prog.var(f"v2[{b.id}]", n, lb=b.v_min**2, ub=b.v_max**2)

    inj_p: dict[int, list[Affine]] = {b.id: [] for b in net.buses}
    inj_q: dict[int, list[Affine]] = {b.id: [] for b in net.buses if b.kind == "ac"}
    for b in net.buses:
        load = scen.p_load(b.id) / base
        pv = scen.p_pv(b.id) / base
        inj_p[b.id].append(_as_const(pv - load, n))
        if b.kind == "ac":
            inj_q[b.id].append(_as_const(-scen.q_load(b.id) / base, n))

    grid: dict[int, tuple[Affine, Affine]] = {}
    for b in net.buses:
        if b.id in slack_bus and b.kind == "ac":
            pg = prog.var(f"grid_p[{b.id}]", n)
            qg = prog.var(f"grid_q[{b.id}]", n)
            grid[b.id] = (pg, qg)
            inj_p[b.id].append(pg)
            inj_q[b.id].append(qg)

    # -- branches ----------------------------------------------------------------
    branches: list[BranchVars] = []
    for k, br in enumerate(net.branches):
        tag = f"{br.from_bus}-{br.to_bus}"
        ac = br.kind == "ac"
        i_max2 = net.i_max_pu(br) ** 2
        p = prog.var(f"p[{tag}]", n)
        q = prog.var(f"q[{tag}]", n) if ac else None
        if options.penalty:
            i2 = prog.var(f"l[{tag}]", n, lb=0.0)
            s_i = prog.var(f"l_over[{tag}]", n, lb=0.0)
            prog.le(i2 - i_max2 - s_i, name=f"imax[{tag}]")
            slacks.append(s_i)
        else:
            i2 = prog.var(f"l[{tag}]", n, lb=0.0, ub=i_max2)
        r, x = net.r_pu(br), net.x_pu(br)
        drop = 2.0 * r * p if q is None else 2.0 * (r * p + x * q)
        prog.eq(v2[br.to_bus] - v2[br.from_bus] + drop - (r * r + x * x) * i2, name=f"vdrop[{tag}]")
        vi = v2[br.from_bus]
        flows = [2.0 * p] if q is None else [2.0 * p, 2.0 * q]
        prog.soc(i2 + vi, flows + [i2 - vi], name=f"branch_cone[{tag}]")
        branches.append(BranchVars(br, p, q, i2, r, x))

    # -- converters --------------------------------------------------------------
    vscs: list[VscVars] = []
    for h in net.vscs:
        pac = prog.var(f"vsc_p[{h.name}]", n, lb=-h.p_max_kw / base, ub=h.p_max_kw / base)
        qac = prog.var(f"vsc_q[{h.name}]", n, lb=-h.q_max_kvar / base, ub=h.q_max_kvar / base)
        pabs = prog.var(f"vsc_abs[{h.name}]", n, lb=0.0)
        prog.ge(pabs - pac, name=f"vsc_abs_pos[{h.name}]")
        prog.ge(pabs + pac, name=f"vsc_abs_neg[{h.name}]")
        half = _as_const(h.s_kva / base * SQRT_HALF, n)
        prog.rsoc(half, half, [pac, qac], name=f"vsc_cone[{h.name}]")
        inj_p[h.ac_bus].append(pac)
        inj_q[h.ac_bus].append(qac)
        inj_p[h.dc_bus].append(-(pac + h.loss_coeff * pabs))
        vscs.append(VscVars(h.name, pac, qac, pabs, h.loss_coeff))

    # -- storage -----------------------------------------------------------------
    dev_vars: list[DeviceVars] = []
    shared_mu: dict[int, Affine] = {}
    labels: set[str] = set()
    for d in devices:
        try:
            bus = net.bus(d.node)
        except KeyError:
            raise BuildError(f"{d.label}: node {d.node} is not in network {net.name}") from None
        if d.e_rate <= 0:
            continue
        tag = d.label
        if tag in labels:
            raise BuildError(f"duplicate device label {tag}")
        labels.add(tag)
        pr = d.p_rate / base
        p_dis = prog.var(f"p_dis[{tag}]", n, lb=0.0, ub=pr)
        p_ch = prog.var(f"p_ch[{tag}]", n, lb=-pr, ub=0.0)
        if d.colocated and d.node in shared_mu:
            mu = shared_mu[d.node]
        else:
            mu = prog.var(f"mu_dis[{tag}]", n, binary=True, branch_class=MU)
            if d.colocated:
                shared_mu[d.node] = mu
        prog.le(p_dis - pr * mu, name=f"dis_gate[{tag}]")
        prog.le(-p_ch - pr * (1 - mu), name=f"ch_gate[{tag}]")
        q = q_dis = q_ch = None
        if bus.kind == "ac":
            qr = d.q_rate / base
            if d.colocated:
                q_dis = prog.var(f"q_dis[{tag}]", n, lb=0.0, ub=qr)
                q_ch = prog.var(f"q_ch[{tag}]", n, lb=-qr, ub=0.0)
                prog.le(q_dis - qr * mu, name=f"qdis_gate[{tag}]")
                prog.le(-q_ch - qr * (1 - mu), name=f"qch_gate[{tag}]")
                q = q_dis + q_ch
            else:
                q = prog.var(f"q[{tag}]", n, lb=-qr, ub=qr)
            half = _as_const(d.s_pcs / base * SQRT_HALF, n)
            prog.rsoc(half, half, [p_dis + p_ch, q], name=f"pcs_cone[{tag}]")
            inj_q[d.node].append(q)
        inj_p[d.node].append(p_dis + p_ch)

        # state of charge, SOC(1..n); SOC(0) = SOC(n) = soc0
        floors = np.zeros(n)
        if d.kind == "MESS" and bus.important_ratio > 0:
            floors = mess_floor_series(scen.p_load(d.node), d, bus.important_ratio, options.reserve_horizon)
        lo = np.maximum(d.soc_min, floors)
        if np.any(lo > d.soc_max + 1e-12) or d.soc0 < lo[-1] - 1e-12:
            raise InfeasibleBounds(f"{tag}: reserve floor exceeds the usable SOC range")
        soc = prog.var(f"soc[{tag}]", n, lb=lo, ub=d.soc_max)
        prev = hstack([Affine.constant([d.soc0]), soc.take(np.arange(n - 1))]) if n > 1 else Affine.constant([d.soc0])
        prog.eq(
            soc
            - prev * (1.0 - d.self_discharge)
            + p_ch * (base * d.charge_factor * DT_HOURS)
            + p_dis * (base * d.discharge_factor * DT_HOURS),
            name=f"soc_step[{tag}]",
        )
        prog.eq(soc[n - 1] - d.soc0, name=f"soc_periodic[{tag}]")

        # cell current magnitude (exact: both terms are non-negative)
        den = thermal.n_par * thermal.u_bar * d.n_cess
        i_abs = (p_dis * (base / (d.eta_d * d.eta_pcs)) - p_ch * (base * d.eta_c * d.eta_pcs)) / den
        i2 = prog.var(f"i2_bat[{tag}]", n, lb=0.0)
        prog.rsoc(i2, _as_const(0.5, n), [i_abs], name=f"cell_cone[{tag}]")
        th = {}
        if options.thermal:
            th = add_container_thermal(
                prog, f"cess[{tag}]", i2, i_abs, scen.t_ext, scen.v_wind, thermal, branch_classes=(X_AIR, X_VENT)
            )
        dev_vars.append(DeviceVars(d, bus.kind, p_dis, p_ch, q, q_dis, q_ch, mu, soc, i_abs, i2, floors, th))

    # -- nodal balance -------------------------------------------------------------
    out_p: dict[int, list[Affine]] = {b.id: [] for b in net.buses}
    in_p: dict[int, list[Affine]] = {b.id: [] for b in net.buses}
    out_q: dict[int, list[Affine]] = {b.id: [] for b in net.buses}
    in_q: dict[int, list[Affine]] = {b.id: [] for b in net.buses}
    for bv in branches:
        f, t = bv.branch.from_bus, bv.branch.to_bus
        out_p[f].append(bv.p)
        in_p[t].append(bv.p - bv.r * bv.i2)
        if bv.q is not None:
            out_q[f].append(bv.q)
            in_q[t].append(bv.q - bv.x * bv.i2)
    for b in net.buses:
        zero = Affine.constant(np.zeros(n))
        prog.eq(total(in_p[b.id] + inj_p[b.id]) - total(out_p[b.id] or [zero]), name=f"balance_p[{b.id}]")
        if b.kind == "ac":
            prog.eq(total(in_q[b.id] + inj_q[b.id]) - total(out_q[b.id] or [zero]), name=f"balance_q[{b.id}]")

    # -- objective -----------------------------------------------------------------
    zero = Affine.constant(np.zeros(n))
    line_loss = total([bv.i2 * (bv.r * base) for bv in branches] or [zero])
    vsc_loss = total([v.p_abs * (v.loss_coeff * base) for v in vscs] or [zero])
    c_loss = (line_loss + vsc_loss).dot(price)
    c_var, c_com, b_arb = [], [], []
    for dv in dev_vars:
        d = dv.rating
        cells = dv.i2 * (thermal.r_int * thermal.n_bar / 1000.0)
        hvac = (dv.thermal["p_hot"] + dv.thermal["p_cool"]) if dv.thermal else zero
        c_var.append(((hvac + cells) * d.n_cess).dot(price))
        dod = dv.p_dis * (base * DT_HOURS * d.discharge_factor)
        zeta = (
            dv.soc.sum() * (degradation.idle_slope / n)
            + degradation.idle_intercept
            + 0.5 * (dod.sum() * degradation.cycle_slope + degradation.cycle_intercept)
        )
        c_com.append(zeta * (econ.c_e * d.e_rate / degradation.eol_fade))
        b_arb.append(((dv.p_dis + dv.p_ch) * base).dot(price))
    zero1 = Affine.constant(0.0)
    terms = {
        "c_loss": c_loss,
        "c_var": total(c_var) if c_var else zero1,
        "c_com": total(c_com) if c_com else zero1,
        "b_arb": total(b_arb) if b_arb else zero1,
        "line_loss_kw": line_loss,
        "vsc_loss_kw": vsc_loss,
    }
    obj = econ.lambda1 * c_loss + econ.lambda2 * (terms["c_var"] + terms["c_com"] - terms["b_arb"])
    if slacks:
        terms["penalty"] = total([s.sum() for s in slacks]) * options.penalty_weight
        obj = obj + terms["penalty"]
    prog.minimize(obj)

    model = DispatchModel(prog, net, scen, options, econ, thermal, v2, branches, vscs, dev_vars, grid, terms, slacks)
    prog.meta["rounder"] = lambda x: round_binaries(model, x)
    return model


def build_stage1(net, scen, designs: Sequence[BessRating], **kw) -> DispatchModel:
    if any(d.kind != "SESS" for d in designs):
        raise BuildError("stage-1 programs take stationary units only")
    return build_dispatch(net, scen, designs, **kw)


def build_stage2(net, scen, sess_fixed: Sequence[BessRating], mess: Sequence[BessRating], **kw) -> DispatchModel:
    if any(d.kind != "MESS" for d in mess):
        raise BuildError("stage-2 mobile designs must be MESS")
    return build_dispatch(net, scen, list(sess_fixed) + list(mess), **kw)


def round_binaries(model: DispatchModel, x: np.ndarray) -> np.ndarray:
    """Physically guided rounding of every binary, returned as a full-length vector."""
    out = np.round(np.clip(x, 0.0, 1.0))
    for dv in model.devices:
        idx = dv.mu.terms[0][0][:, 0]
        out[idx] = (dv.p_dis.value(x) >= -dv.p_ch.value(x)).astype(float)
        if dv.thermal:
            ia = dv.thermal["x_air"].terms[0][0][:, 0]
            out[ia] = (dv.thermal["p_hot"].value(x) >= dv.thermal["p_cool"].value(x)).astype(float)
    return out
