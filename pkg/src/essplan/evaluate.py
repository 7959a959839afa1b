"""Scenario solves, life estimates and cost assembly for a fixed storage layout.

This is the bridge between the dispatch model and the outer search: given a
list of ratings it solves every scenario day, turns SOC traces into life
estimates and returns a priced CostReport.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .conic.bnb import BnbOptions, INFEASIBLE_STATUS
from .conic.model import BuildError, ModelOptions, build_dispatch
from .conic.solution import DispatchSolution, count_violations, day_cash, solve_dispatch
from .degradation import DEFAULT as DEFAULT_DEGRADATION
from .degradation import DegradationDomainError, DegradationParams, annual_damage, daily_degradation, lifetime_years
from .degradation import linear_daily_damage, rainflow
from .economics import CostReport, EconParams, operating_cash, stage1_report, stage2_report
from .network import HybridNetwork, Scenario
from .storage import BessRating
from .thermal import ThermalParams

log = logging.getLogger(__name__)

# fitness of a layout whose dispatch needs constraint slack, plus a price per
# unit of slack so the search can still tell bad from worse
INFEASIBLE_FITNESS = 1e8
SLACK_PRICE = 1e6
SLACK_TOL = 1e-6
RELAXED = "relaxed"  # hard limits infeasible, soft-limit solve kept for accounting


@dataclass
class EvalContext:
    net: HybridNetwork
    scenarios: list[Scenario]
    econ: EconParams = EconParams()
    thermal: ThermalParams = ThermalParams()
    degradation: DegradationParams = DEFAULT_DEGRADATION
    bnb: BnbOptions = BnbOptions(node_limit=200)
    use_thermal: bool = True
    penalty_weight: float = 1e4
    baseline: dict[str, DispatchSolution] = field(default_factory=dict)

    def model_options(self, relaxed: bool = False) -> ModelOptions:
        return ModelOptions(thermal=self.use_thermal, penalty=relaxed, penalty_weight=self.penalty_weight)

    def baseline_loss_cost(self) -> dict[str, float]:
        """Daily loss cost with no storage; a day that breaks limits uses its relaxed solve."""
        for s in self.scenarios:
            if s.id not in self.baseline:
                self.baseline[s.id] = solve_accounted(self, s, ())
        return {k: v.loss_cost for k, v in self.baseline.items() if has_values(v)}


def solve_day(
    ctx: EvalContext, scen: Scenario, devices: Sequence[BessRating], relaxed: bool = False
) -> DispatchSolution:
    """One scenario day; device bounds that cannot hold come back as an infeasible solution."""
    try:
        model = build_dispatch(
            ctx.net, scen, devices, ctx.econ, ctx.thermal, ctx.degradation, ctx.model_options(relaxed)
        )
    except BuildError as exc:
        sol = DispatchSolution(scen.id, INFEASIBLE_STATUS, math.inf, scen.hours, hint=[str(exc)])
        sol.price = np.asarray(scen.price, dtype=float)
        return sol
    return solve_dispatch(model, ctx.bnb)


def solve_accounted(ctx: EvalContext, scen: Scenario, devices: Sequence[BessRating]) -> DispatchSolution:
    """Hard-limit solve; if the limits cannot hold, the soft-limit solve that measures by how much.

    The soft-limit result keeps the status of the hard-limit solve so it is
    never mistaken for an accepted dispatch.
    """
    sol = solve_day(ctx, scen, devices)
    if sol.status != INFEASIBLE_STATUS:
        return sol
    soft = solve_day(ctx, scen, devices, relaxed=True)
    if not soft.ok:
        return sol
    soft.status = RELAXED
    soft.hint = sol.hint
    return soft


def has_values(sol: DispatchSolution) -> bool:
    return sol.ok or sol.status == RELAXED


def strict(sol: DispatchSolution) -> bool:
    """An accepted dispatch: solved with hard voltage and current limits."""
    return sol.ok and sol.penalty_slack <= SLACK_TOL


def cycle_temps(sol: DispatchSolution, label: str, hours: int) -> np.ndarray:
    """Cell temperature per SOC sample (start of day repeats the end)."""
    d = sol.device(label)
    t = d.thermal.get("t_bar")
    if t is None:
        return np.full(hours + 1, 298.0)
    return np.concatenate([[t[-1]], t])


def day_damage(sol: DispatchSolution, label: str, p: DegradationParams) -> tuple[float, float]:
    """(fade from the full temperature model, linear fade) for one day."""
    d = sol.device(label)
    soc = d.soc
    temps = np.clip(cycle_temps(sol, label, sol.hours), 273.0, 333.0)
    cycles = rainflow(soc, temps)
    soc_avg = float(np.mean(soc[1:]))
    try:
        xi = daily_degradation(soc_avg, cycles, p)
    except DegradationDomainError:
        xi = math.inf
    zeta = linear_daily_damage(soc_avg, [c.dod * c.weight for c in cycles], p)
    return xi, zeta


@dataclass
class LayoutResult:
    devices: list[BessRating]
    solutions: list[DispatchSolution]
    report: CostReport | None
    lives: dict[str, float]
    damages: dict[str, float]  # linear daily fade, day-weighted mean over scenarios
    feasible: bool
    slack: float
    gap: float
    fitness: float
    violations: dict[str, int] = field(default_factory=dict)


def _solve_all(ctx: EvalContext, scenarios: Sequence[Scenario], devices: Sequence[BessRating]):
    sols = [solve_accounted(ctx, s, devices) for s in scenarios]
    feasible = all(strict(s) for s in sols)
    slack = sum(s.penalty_slack if s.status == RELAXED else (0.0 if s.ok else 1.0) for s in sols)
    gap = max((s.gap for s in sols if s.ok), default=math.inf)
    viol = {s.scenario: count_violations(s, ctx.net).voltage if has_values(s) else -1 for s in sols}
    return sols, feasible, slack, gap, viol


def _infeasible_fitness(slack: float) -> float:
    return INFEASIBLE_FITNESS + SLACK_PRICE * slack


def _cash(ctx, scenarios, sols, devices):
    base = ctx.baseline_loss_cost()
    days = [day_cash(sol, s.days, ctx.thermal.r_int, ctx.thermal.n_bar) for s, sol in zip(scenarios, sols)]
    return operating_cash(days, base)


def evaluate_stage1(ctx: EvalContext, devices: Sequence[BessRating]) -> LayoutResult:
    scen = [s for s in ctx.scenarios if s.stage == "stage1"]
    sols, feasible, slack, gap, viol = _solve_all(ctx, scen, devices)
    if not feasible:
        return LayoutResult(list(devices), sols, None, {}, {}, False, slack, gap, _infeasible_fitness(slack), viol)
    lives, zetas = {}, {}
    for d in devices:
        if d.e_rate <= 0:
            continue
        daily, lin = [], 0.0
        for s, sol in zip(scen, sols):
            xi, z = day_damage(sol, d.label, ctx.degradation)
            daily.append((xi, s.days))
            lin += z * s.days
        annual = annual_damage([x for x, _ in daily], [w for _, w in daily])
        lives[d.label] = lifetime_years(annual, ctx.degradation, horizon=ctx.econ.years)
        zetas[d.label] = lin / sum(s.days for s in scen)
    cash = _cash(ctx, scen, sols, devices)
    built = [d for d in devices if d.e_rate > 0]
    c_com = sum(sol.terms.get("c_com", 0.0) * s.days for s, sol in zip(scen, sols))
    rep = stage1_report(built, [lives[d.label] for d in built], cash, gap, ctx.econ, c_com=c_com)
    return LayoutResult(list(devices), sols, rep, lives, zetas, True, 0.0, gap, rep.net, viol)


def evaluate_stage2(
    ctx: EvalContext,
    sess: Sequence[BessRating],
    mess: Sequence[BessRating],
    module_kwh: float = 1000.0,
    module_kw: float = 1000.0,
) -> LayoutResult:
    scen = [s for s in ctx.scenarios if s.stage == "stage2"]
    devices = list(sess) + list(mess)
    sols, feasible, slack, gap, viol = _solve_all(ctx, scen, devices)
    if not feasible:
        return LayoutResult(devices, sols, None, {}, {}, False, slack, gap, _infeasible_fitness(slack), viol)
    zetas = {}
    weight = sum(s.days for s in scen)
    for d in mess:
        if d.e_rate <= 0:
            continue
        z = sum(day_damage(sol, d.label, ctx.degradation)[1] * s.days for s, sol in zip(scen, sols))
        zetas[d.label] = z / weight
    cash = _cash(ctx, scen, sols, devices)
    sites = {d.node: d.n_cess for d in mess if d.e_rate > 0}
    module_damages = [zetas[d.label] for d in mess if d.e_rate > 0 for _ in range(d.n_cess)]
    econ = replace(ctx.econ, t_rent=float(weight))
    rep = stage2_report(sess, sites, module_damages, cash, gap, econ, e_module=module_kwh, p_module=module_kw)
    return LayoutResult(devices, sols, rep, {}, zetas, True, 0.0, gap, rep.net, viol)
