"""Independent reference computations used by the tests.

Nothing here imports the dispatch model; the toy feeder is restated in
physical form so the library's per-unit program can be checked against it.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import cvxpy as cp
import numpy as np
from scipy.optimize import fsolve

# three-bus DC toy: converter DC terminal 2 (held at 1 p.u.), loads at 3 and 4,
# battery at 4; 20 kV DC base, 1 MVA power base
BASE_KVA = 1000.0
Z_BASE = 20.0**2 * 1000.0 / BASE_KVA
R23 = 0.8 / Z_BASE
R34 = 1.0 / Z_BASE
L_MAX = (500.0 / (BASE_KVA / 20.0)) ** 2
V2_LO, V2_HI = 0.97**2, 1.03**2
ETA_VSC = 0.03


@dataclass(frozen=True)
class ToyBattery:
    e: float = 1000.0
    p: float = 400.0
    soc0: float = 0.5
    soc_min: float = 0.1
    soc_max: float = 0.9
    eta_c: float = 0.976
    eta_d: float = 0.976
    eta_pcs: float = 0.95
    # cell and ageing constants
    n_par: int = 12
    u_bar: float = 0.851
    r_int: float = 0.003
    n_bar: int = 2760
    c_e: float = 156.0
    idle_slope: float = 1.952e-5
    idle_intercept: float = 1.85e-5
    cycle_slope: float = 4.9e-5
    cycle_intercept: float = 1.012e-20
    fade: float = 0.2
    lam1: float = 0.67
    lam2: float = 0.33

    @property
    def out_eff(self) -> float:
        return self.eta_d * self.eta_pcs

    @property
    def in_eff(self) -> float:
        return self.eta_c * self.eta_pcs


def _day_cost(b: ToyBattery, price, p_dis, p_ch, soc, loss_kw, i2):
    """Weighted objective of one day in $, written over kW quantities."""
    n = len(price)
    c_loss = price @ loss_kw
    c_var = price @ (i2 * b.r_int * b.n_bar / 1000.0)
    dod = p_dis / (b.e * b.out_eff)
    zeta = b.idle_slope * sum(soc) / n + b.idle_intercept + 0.5 * (b.cycle_slope * sum(dod) + b.cycle_intercept)
    c_com = zeta * b.c_e * b.e / b.fade
    b_arb = price @ (p_dis + p_ch)
    return b.lam1 * c_loss + b.lam2 * (c_var + c_com - b_arb)


def pattern_optimum(b: ToyBattery, load3, load4, price, mu_dis, mu_ch):
    """Convex optimum of the toy with the hourly indicators fixed, or None."""
    n = len(price)
    if any(a + c != 1 for a, c in zip(mu_dis, mu_ch)):
        return None
    p_dis = cp.Variable(n, nonneg=True)
    p_ch = cp.Variable(n, nonpos=True)
    soc = cp.Variable(n)
    v3, v4 = cp.Variable(n), cp.Variable(n)
    f23, f34 = cp.Variable(n), cp.Variable(n)
    l23, l34 = cp.Variable(n, nonneg=True), cp.Variable(n, nonneg=True)
    pac, pabs = cp.Variable(n), cp.Variable(n)
    i2 = cp.Variable(n, nonneg=True)
    i_abs = (p_dis / b.out_eff - p_ch * b.in_eff) / (b.n_par * b.u_bar)
    cons = [
        p_dis <= b.p * np.asarray(mu_dis, float),
        -p_ch <= b.p * np.asarray(mu_ch, float),
        soc >= b.soc_min, soc <= b.soc_max,
        soc[n - 1] == b.soc0,
        v3 >= V2_LO, v3 <= V2_HI, v4 >= V2_LO, v4 <= V2_HI,
        l23 <= L_MAX, l34 <= L_MAX,
        pabs >= pac, pabs >= -pac,
        cp.abs(pac) <= 3000.0 / BASE_KVA,
        i2 >= cp.square(i_abs),
    ]
    prev = b.soc0
    for t in range(n):
        cons.append(soc[t] == prev - p_ch[t] * b.in_eff / b.e - p_dis[t] / (b.e * b.out_eff))
        prev = soc[t]
    # branch flow in p.u.: sending-end power f, squared current l
    cons += [
        v3 == 1.0 - 2 * R23 * f23 + R23**2 * l23,
        v4 == v3 - 2 * R34 * f34 + R34**2 * l34,
        cp.square(f23) <= l23,  # v2 = 1
    ]
    for t in range(n):
        cons.append(cp.quad_over_lin(f34[t], v3[t]) <= l34[t])
    cons += [
        -(pac + ETA_VSC * pabs) == f23,
        f23 - R23 * l23 - load3 / BASE_KVA == f34,
        f34 - R34 * l34 - load4 / BASE_KVA + (p_dis + p_ch) / BASE_KVA == 0,
    ]
    loss_kw = (R23 * l23 + R34 * l34 + ETA_VSC * pabs) * BASE_KVA
    n_cost = _day_cost(b, price, p_dis, p_ch, soc, loss_kw, i2)
    prob = cp.Problem(cp.Minimize(n_cost), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        return None
    return float(prob.value)


def enumerate_patterns(b: ToyBattery, load3, load4, price):
    """Best objective over every (mu_dis, mu_ch) pair in every hour: 4^n patterns."""
    n = len(price)
    pairs = [(0, 0), (0, 1), (1, 0), (1, 1)]
    best, tried = math.inf, 0
    for combo in itertools.product(pairs, repeat=n):
        tried += 1
        val = pattern_optimum(b, load3, load4, price, [c[0] for c in combo], [c[1] for c in combo])
        if val is not None and val < best:
            best = val
    return best, tried


def dc_power_flow(load3_kw: float, net4_kw: float):
    """Exact DC flow with bus 2 at 1 p.u.; returns (v3, v4, i23, i34) in p.u."""

    def eqs(v):
        v3, v4 = v
        i23 = (1.0 - v3) / R23
        i34 = (v3 - v4) / R34
        return [v3 * (i23 - i34) - load3_kw / BASE_KVA, v4 * i34 - net4_kw / BASE_KVA]

    sol, info, ier, _ = fsolve(eqs, [0.99, 0.98], full_output=True, xtol=1e-13)
    if ier != 1:
        return None
    v3, v4 = sol
    return v3, v4, (1.0 - v3) / R23, (v3 - v4) / R34


def grid_search(b: ToyBattery, load3, load4, price, levels: int = 11):
    """Best objective over battery powers on an even grid, the last hour closing the SOC.

    Every grid point is a feasible operating point of the original
    (non-relaxed) problem, so this bounds the true optimum from above.
    """
    n = len(price)
    grid = np.linspace(-b.p, b.p, levels)
    best = math.inf
    for head in itertools.product(grid, repeat=n - 1):
        soc, trace = b.soc0, []
        for p in head:
            soc -= (p / b.out_eff if p > 0 else p * b.in_eff) / b.e
            trace.append(soc)
        # last hour returns to soc0
        need = b.soc0 - soc
        last = -need * b.e / b.in_eff if need > 0 else -need * b.e * b.out_eff
        if abs(last) > b.p + 1e-9:
            continue
        powers = np.array(list(head) + [last])
        trace.append(b.soc0)
        if min(trace) < b.soc_min - 1e-12 or max(trace) > b.soc_max + 1e-12:
            continue
        loss = np.zeros(n)
        ok = True
        for t in range(n):
            pf = dc_power_flow(load3[t], load4[t] - powers[t])
            if pf is None:
                ok = False
                break
            v3, v4, i23, i34 = pf
            if not (0.97 <= v3 <= 1.03 and 0.97 <= v4 <= 1.03):
                ok = False
                break
            p_dc = i23  # drawn from the converter's DC terminal, bus 2 at 1 p.u.
            pac = -p_dc / (1 - ETA_VSC) if p_dc >= 0 else -p_dc / (1 + ETA_VSC)
            loss[t] = (R23 * i23**2 + R34 * i34**2 + ETA_VSC * abs(pac)) * BASE_KVA
        if not ok:
            continue
        p_dis = np.maximum(powers, 0.0)
        p_ch = np.minimum(powers, 0.0)
        i_abs = (p_dis / b.out_eff - p_ch * b.in_eff) / (b.n_par * b.u_bar)
        val = _day_cost(b, price, p_dis, p_ch, np.array(trace), loss, i_abs**2)
        best = min(best, val)
    return best
