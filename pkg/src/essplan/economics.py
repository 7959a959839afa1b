"""Life-cycle cost, rent and benefit accounting for storage plans.

Stage 1 (stationary units) is reported per year, with operating terms
summed over representative days weighted by how many days each represents.
Stage 2 (rented mobile modules) is reported over the event period, with the
scenario day weights covering the rent window.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .storage import BessRating

PCS_LIFE_YEARS = 10.0
DAYS_PER_YEAR = 365.0


@dataclass(frozen=True)
class EconParams:
    c_e: float = 156.0  # $/kWh
    c_p: float = 10.0  # $/kW
    c_b: float = 0.0  # $/kWh balance of system
    c_f: float = 23.8  # $/kW/yr
    c_d: float = 243.4  # $/kW disposal
    c_rent: float = 102.6  # $/module/day
    t_rent: float = 60.0  # days
    tau: float = 0.10
    years: int = 20
    alpha: float = 0.0  # annual cost decline
    pcs_life: float = PCS_LIFE_YEARS
    budget: float = math.inf  # up-front stationary investment cap, $
    event_budget: float = math.inf  # cap on rent plus variable cost of the event, $
    lambda1: float = 0.67
    lambda2: float = 0.33
    gap_max: float = 1e-4
    c_pun: float = 1e6

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("discount rate must be non-negative")
        if self.years < 1:
            raise ValueError("project horizon must be at least one year")
        if abs(self.lambda1 + self.lambda2 - 1.0) > 1e-9:
            raise ValueError("objective weights must sum to 1")
        if self.budget < 0 or self.event_budget < 0:
            raise ValueError("budgets must be non-negative")
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name not in ("budget", "event_budget") and (not math.isfinite(v) or v < 0):
                raise ValueError(f"{f.name} must be finite and non-negative")

    def with_overrides(self, **kw) -> "EconParams":
        return replace(self, **kw)


def crf(tau: float, years: float) -> float:
    """Capital recovery factor; tends to 1/Y as the rate goes to zero."""
    if years < 1:
        raise ValueError("years must be >= 1")
    if tau < 0:
        raise ValueError("rate must be non-negative")
    if tau == 0.0:
        return 1.0 / years
    # g - 1 via expm1 so tiny rates do not cancel
    gm1 = math.expm1(years * math.log1p(tau))
    return tau * (gm1 + 1.0) / gm1


def replacement_count(life: float, years: float) -> int:
    """Replacements that happen strictly inside the horizon."""
    if life <= 0:
        raise ValueError("lifetime must be positive")
    if math.isinf(life):
        return 0
    return max(0, math.ceil(years / life - 1e-9) - 1)


def annualized_capital(r: BessRating, p: EconParams) -> float:
    if r.kind != "SESS":
        raise ValueError("capital cost applies to stationary units only")
    return (p.c_e * r.e_rate + p.c_p * r.p_rate + p.c_b * r.e_rate) * crf(p.tau, p.years)


def _present_factor(year: float, p: EconParams) -> float:
    return ((1.0 - p.alpha) / (1.0 + p.tau)) ** year


def replacement_and_disposal(r: BessRating, life: float, p: EconParams) -> tuple[float, float]:
    """(annualised replacement, annualised disposal) for a stationary unit.

    Batteries are replaced at multiples of ``life`` before the horizon ends;
    the PCS once at ``pcs_life`` if that falls inside the horizon. Disposal
    is charged for every retired battery on the unit's own rated power.
    """
    k = replacement_count(life, p.years)
    a = crf(p.tau, p.years)
    batt = sum(_present_factor(e * life, p) for e in range(1, k + 1))
    rep = p.c_e * r.e_rate * batt * a
    if p.years > p.pcs_life:
        rep += p.c_p * r.p_rate * _present_factor(p.pcs_life, p) * a
    dis = p.c_d * r.p_rate * batt * a
    return rep, dis


def fixed_om(r: BessRating, p: EconParams, days: float | None = None) -> float:
    """Fixed O&M; per year, or pro rata over ``days``."""
    yearly = p.c_f * r.p_rate
    return yearly if days is None else yearly * days / DAYS_PER_YEAR


def module_damage_cost(zeta: float, e_module: float, p: EconParams, fade: float = 0.2) -> float:
    """Per-day compensation for the life one module loses."""
    return zeta / fade * p.c_e * e_module


def mess_rent(
    modules_per_site: Mapping[int, int] | Sequence[int],
    damages: Sequence[float],
    p: EconParams,
    e_module: float = 1000.0,
    fade: float = 0.2,
) -> float:
    """Rent for the event: capacity charge plus daily damage compensation per module."""
    counts = list(modules_per_site.values()) if isinstance(modules_per_site, Mapping) else list(modules_per_site)
    if any(n < 0 for n in counts):
        raise ValueError("module counts must be non-negative")
    capacity = p.c_rent * sum(counts) * p.t_rent
    damage = p.t_rent * sum(module_damage_cost(z, e_module, p, fade) for z in damages)
    return capacity + damage


# ---------------------------------------------------------------------------
# operating cash flows


@dataclass
class DeviceDay:
    """One device over one representative day (hourly arrays, grid-side kW)."""

    label: str
    kind: str
    p_dis: np.ndarray
    p_ch: np.ndarray  # <= 0
    p_hot: np.ndarray  # per container
    p_cool: np.ndarray  # per container
    i_bat: np.ndarray  # per cell, A
    n_cess: int = 1
    r_int: float = 0.003
    n_bar: int = 2760
    zeta: float = 0.0


@dataclass
class DayCash:
    scenario: str
    weight: float
    price: np.ndarray
    devices: list[DeviceDay]
    loss_kw: np.ndarray  # lines plus converters, hourly


def arbitrage(dev: DeviceDay, price) -> float:
    return float(np.dot(np.asarray(dev.p_dis) + np.asarray(dev.p_ch), price))


def variable_om(dev: DeviceDay, price) -> float:
    """HVAC energy plus cell ohmic losses, all containers, in $ for the day."""
    price = np.asarray(price, dtype=float)
    hvac = (np.asarray(dev.p_hot) + np.asarray(dev.p_cool)) @ price
    cells = (np.asarray(dev.i_bat) ** 2 * dev.r_int * dev.n_bar / 1000.0) @ price
    return float((hvac + cells) * dev.n_cess)


def loss_cost(loss_kw, price) -> float:
    return float(np.dot(loss_kw, price))


@dataclass
class OperatingCash:
    c_var: float
    b_arb: float
    b_loss: float
    c_loss: float
    c_loss0: float
    per_device: dict[str, dict[str, float]] = field(default_factory=dict)


def operating_cash(days: Iterable[DayCash], baseline_loss_cost: Mapping[str, float]) -> OperatingCash:
    """Weighted variable cost, arbitrage and loss-reduction benefit.

    ``baseline_loss_cost`` maps scenario id to the daily loss cost of the same
    day solved with no storage connected.
    """
    c_var = b_arb = c_loss = c_loss0 = 0.0
    per: dict[str, dict[str, float]] = {}
    for d in days:
        if d.scenario not in baseline_loss_cost:
            raise KeyError(f"no storage-free reference solve for scenario {d.scenario!r}")
        w = d.weight
        c_loss += w * loss_cost(d.loss_kw, d.price)
        c_loss0 += w * baseline_loss_cost[d.scenario]
        for dev in d.devices:
            a, v = w * arbitrage(dev, d.price), w * variable_om(dev, d.price)
            b_arb += a
            c_var += v
            slot = per.setdefault(dev.label, {"b_arb": 0.0, "c_var": 0.0})
            slot["b_arb"] += a
            slot["c_var"] += v
    return OperatingCash(c_var, b_arb, c_loss0 - c_loss, c_loss, c_loss0, per)


# ---------------------------------------------------------------------------
# reports


@dataclass
class CostReport:
    stage: int
    c_cap: float = 0.0
    c_rep: float = 0.0
    c_fix: float = 0.0
    c_var: float = 0.0
    c_dis: float = 0.0
    c_rent: float = 0.0
    b_arb: float = 0.0
    b_loss: float = 0.0
    c_com: float = 0.0  # informational: already inside c_rent for stage 2
    penalty: float = 0.0
    gap: float = 0.0
    per_device: dict[str, dict[str, float]] = field(default_factory=dict)

    COST_FIELDS = ("c_cap", "c_rep", "c_fix", "c_var", "c_dis", "c_rent")
    BENEFIT_FIELDS = ("b_arb", "b_loss")

    @property
    def costs(self) -> float:
        return sum(getattr(self, f) for f in self.COST_FIELDS)

    @property
    def benefits(self) -> float:
        return sum(getattr(self, f) for f in self.BENEFIT_FIELDS)

    @property
    def net(self) -> float:
        return self.costs - self.benefits + self.penalty

    def as_row(self) -> dict[str, float]:
        row = {f: getattr(self, f) for f in self.COST_FIELDS + self.BENEFIT_FIELDS}
        row.update(c_com=self.c_com, penalty=self.penalty, gap=self.gap, net=self.net)
        return row

    def check(self) -> None:
        for k, v in self.as_row().items():
            if not math.isfinite(v):
                raise ValueError(f"cost component {k} is not finite")


def gap_penalty(gap: float, p: EconParams) -> float:
    return p.c_pun if gap >= p.gap_max else 0.0


def stage1_report(
    ratings: Sequence[BessRating],
    lives: Sequence[float],
    cash: OperatingCash,
    gap: float,
    p: EconParams,
    c_com: float = 0.0,
) -> CostReport:
    rep = CostReport(stage=1, c_var=cash.c_var, b_arb=cash.b_arb, b_loss=cash.b_loss, c_com=c_com, gap=gap)
    for r, n in zip(ratings, lives, strict=True):
        cap = annualized_capital(r, p)
        c_rep, c_dis = replacement_and_disposal(r, n, p)
        fix = fixed_om(r, p)
        rep.c_cap += cap
        rep.c_rep += c_rep
        rep.c_dis += c_dis
        rep.c_fix += fix
        rep.per_device[r.label] = {"c_cap": cap, "c_rep": c_rep, "c_dis": c_dis, "c_fix": fix, "life": n}
    for k, v in cash.per_device.items():
        rep.per_device.setdefault(k, {}).update(v)
    rep.penalty = gap_penalty(gap, p)
    rep.check()
    return rep


def stage2_report(
    sess: Sequence[BessRating],
    modules_per_site: Mapping[int, int],
    module_damages: Sequence[float],
    cash: OperatingCash,
    gap: float,
    p: EconParams,
    e_module: float = 1000.0,
    p_module: float = 1000.0,
) -> CostReport:
    rent = mess_rent(modules_per_site, module_damages, p, e_module)
    damage = p.t_rent * sum(module_damage_cost(z, e_module, p) for z in module_damages)
    n_mod = sum(modules_per_site.values())
    fix = sum(fixed_om(r, p, p.t_rent) for r in sess) + p.c_f * p_module * n_mod * p.t_rent / DAYS_PER_YEAR
    rep = CostReport(
        stage=2, c_fix=fix, c_var=cash.c_var, c_rent=rent, b_arb=cash.b_arb, b_loss=cash.b_loss, c_com=damage, gap=gap
    )
    for node, n in modules_per_site.items():
        rep.per_device[f"MESS@{node}"] = {"modules": n, "rent": p.c_rent * n * p.t_rent}
    for k, v in cash.per_device.items():
        rep.per_device.setdefault(k, {}).update(v)
    rep.penalty = gap_penalty(gap, p)
    rep.check()
    return rep
