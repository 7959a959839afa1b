"""Container (CESS) thermal model.

The hourly heat balance is written once, in :func:`balance_residual`, over
operands that only need ``+``, ``-`` and scaling by constants. The simulator
feeds it floats, the optimisation model feeds it :class:`~essplan.conic.program.Affine`
rows, so the two cannot drift apart.

Per-container coefficients (all for one hour, so kW and kWh are interchangeable):

* ``c_air``  air heat capacity, kWh/K
* ``k_rel``  battery-surface to air convection, kW/K
* ``k_abs``  battery heat capacity, kWh/K
* ``k_wall`` wall conduction, kW/K
* ``k_vent`` natural ventilation when the vent is open, kWh/K
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .network import DT_HOURS
from .storage import BessRating

J_PER_KWH = 3.6e6
SECONDS_PER_STEP = DT_HOURS * 3600.0
BALANCE_TOL_KWH = 1e-9


@dataclass(frozen=True)
class ThermalParams:
    r_int: float = 0.003  # ohm per cell
    n_bar: int = 2760  # cells per container
    n_par: int = 12  # parallel strings per container
    u_bar: float = 0.851  # kV string voltage
    a_bar: float = 0.0418  # m2 per cell
    h_trans: float = 5.0  # W/m2K
    c_bat: float = 956.0  # J/kgK
    m_bat: float = 1.7  # kg per cell
    c_air: float = 1.003  # kJ/kgK
    m_air: float = 107.4  # kg
    cop: float = 3.25
    eer: float = 3.34
    rho_air: float = 1.248  # kg/m3
    k_wall: float = 0.6  # W/m2K
    a_wall: float = 114.46  # m2
    a_vent: float = 0.5  # m2
    c_flo_sqrt_c_wind: float = 0.29
    entropic: float = 0.0116  # T * dU/dT, V
    t_min: float = 283.15  # K
    t_max: float = 308.15  # K
    p_air_max: float = 10.0  # kW
    container_kwh: float = 1000.0  # energy per container, sets N_CESS of stationary units

    def __post_init__(self):
        positive = [f.name for f in fields(self) if f.name not in ("t_min", "t_max")]
        for name in positive:
            if getattr(self, name) < 0:
                raise ValueError(f"thermal parameter {name} must be non-negative")
        if self.cop <= 1 or self.eer <= 1:
            raise ValueError("COP and EER must exceed 1")
        if not 0 < self.t_min < self.t_max:
            raise ValueError("need 0 < t_min < t_max")

    def with_overrides(self, **kw) -> "ThermalParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class ThermalCoefficients:
    c_air: float
    k_rel: float
    k_abs: float
    k_wall: float
    k_vent: np.ndarray  # per hour
    cop: float
    eer: float

    @property
    def k_surface(self) -> float:
        return self.k_rel + self.k_abs


def vent_flow_rate(v_wind, tp: ThermalParams):
    """Wind-driven volume flow through the open vent, m3/s."""
    v = np.asarray(v_wind, dtype=float)
    return tp.a_vent / 2.0 * tp.c_flo_sqrt_c_wind * np.abs(v)


def coefficients(tp: ThermalParams, v_wind) -> ThermalCoefficients:
    alpha = np.atleast_1d(vent_flow_rate(v_wind, tp))
    c_air_j = tp.c_air * 1000.0
    return ThermalCoefficients(
        c_air=c_air_j * tp.m_air / J_PER_KWH,
        k_rel=tp.a_bar * tp.h_trans * tp.n_bar / 1000.0,
        k_abs=tp.c_bat * tp.m_bat * tp.n_bar / J_PER_KWH,
        k_wall=tp.k_wall * tp.a_wall / 1000.0,
        k_vent=SECONDS_PER_STEP * alpha * c_air_j * tp.rho_air / J_PER_KWH,
        cop=tp.cop,
        eer=tp.eer,
    )


def cell_current(p_ch: float, p_dis: float, r: BessRating, tp: ThermalParams) -> float:
    """Per-cell current in A from grid-side powers in kW.

    With the sign convention P_ch <= 0 <= P_dis the result is never positive;
    heat and ohmic loss only use its magnitude.
    """
    den = tp.n_par * tp.u_bar * r.n_cess
    if den == 0:
        raise ZeroDivisionError("string count, string voltage and container count must be non-zero")
    return (p_ch * r.eta_c * r.eta_pcs - p_dis / (r.eta_d * r.eta_pcs)) / den


def heat_generation(i_bat, t_cess=None, tp: ThermalParams = ThermalParams()):
    """Heat released by one container, kW. Even in the current."""
    i = np.asarray(i_bat, dtype=float)
    q = (i * i * tp.r_int + np.abs(i) * tp.entropic) * tp.n_bar / 1000.0
    return float(q) if q.ndim == 0 else q


def heat_from_surrogates(i_sq, i_abs, tp: ThermalParams):
    """Heat generation written over (I^2, |I|) so it stays linear in the optimiser."""
    return i_sq * (tp.r_int * tp.n_bar / 1000.0) + i_abs * (tp.entropic * tp.n_bar / 1000.0)


@dataclass(frozen=True)
class ThermalState:
    t_cess: float
    t_bar: float


@dataclass(frozen=True)
class HvacAction:
    p_hot: float = 0.0
    p_cool: float = 0.0
    x_air: int = 1
    x_vent: int = 0

    def violations(self, tp: ThermalParams, tol: float = 1e-9) -> list[str]:
        out = []
        if not -tol <= self.p_hot <= tp.p_air_max * self.x_air + tol:
            out.append("heating power outside [0, P_max * X_air]")
        if not -tol <= self.p_cool <= tp.p_air_max * (1 - self.x_air) + tol:
            out.append("cooling power outside [0, P_max * (1 - X_air)]")
        return out


def heat_split(q_gen, co: ThermalCoefficients):
    """(released to air, absorbed by battery) shares of generated heat."""
    share = co.k_rel / co.k_surface
    return q_gen * share, q_gen * (1.0 - share)


def balance_residual(t_cess, t_prev, t_bar_prev, t_x, x_vent, p_hot, p_cool, q_gen, t_ext, k_vent, co: ThermalCoefficients):
    """Air-volume energy balance, LHS - RHS in kWh.

    ``t_x`` stands for the product T_CESS * X_vent; the simulator passes the
    product itself, the optimiser its linearisation.
    """
    q_rel, _ = heat_split(q_gen, co)
    q_vent = k_vent * (t_ext * x_vent) - k_vent * t_x
    q_wall = co.k_wall * t_ext - co.k_wall * t_cess
    q_abstem = co.k_abs * t_cess - co.k_abs * t_bar_prev
    lhs = co.c_air * t_cess - co.c_air * t_prev
    rhs = co.cop * p_hot - co.eer * p_cool + q_rel + q_vent + q_wall - q_abstem
    return lhs - rhs


def surface_residual(t_cess, t_bar, q_gen, co: ThermalCoefficients):
    """Generated heat equals what convects away plus what the cells absorb."""
    return co.k_surface * t_bar - co.k_surface * t_cess - q_gen


@dataclass(frozen=True)
class StepReport:
    state: ThermalState
    q_rel: float
    q_abs: float
    q_vent: float
    q_wall: float
    q_abstem: float
    residual: float
    out_of_bounds: bool


def balance_step(
    state_prev: ThermalState,
    hvac: HvacAction,
    q_gen: float,
    t_ext: float,
    v_wind: float,
    tp: ThermalParams,
    report: bool = False,
):
    """Advance one hour. Bounds are flagged in the report, never clamped."""
    co = coefficients(tp, v_wind)
    kv = float(co.k_vent[0])
    q_rel, q_abs = heat_split(q_gen, co)
    g = co.k_wall + kv * hvac.x_vent
    t_new = (
        co.c_air * state_prev.t_cess
        + co.cop * hvac.p_hot
        - co.eer * hvac.p_cool
        + q_rel
        + g * t_ext
        + co.k_abs * state_prev.t_bar
    ) / (co.c_air + g + co.k_abs)
    t_bar = t_new + (q_gen / co.k_surface if co.k_surface > 0 else 0.0)
    state = ThermalState(t_new, t_bar)
    if not report:
        return state
    res = balance_residual(
        t_new, state_prev.t_cess, state_prev.t_bar, t_new * hvac.x_vent, hvac.x_vent,
        hvac.p_hot, hvac.p_cool, q_gen, t_ext, kv, co,
    )
    return StepReport(
        state=state,
        q_rel=q_rel,
        q_abs=q_abs,
        q_vent=kv * hvac.x_vent * (t_ext - t_new),
        q_wall=co.k_wall * (t_ext - t_new),
        q_abstem=co.k_abs * (t_new - state_prev.t_bar),
        residual=float(res),
        out_of_bounds=not (tp.t_min <= t_new <= tp.t_max),
    )


def simulate(
    initial: ThermalState,
    hvac: list[HvacAction],
    q_gen,
    t_ext,
    v_wind,
    tp: ThermalParams,
) -> list[StepReport]:
    """Roll the balance forward over a day."""
    out = []
    state = initial
    for t, act in enumerate(hvac):
        rep = balance_step(state, act, float(q_gen[t]), float(t_ext[t]), float(v_wind[t]), tp, report=True)
        out.append(rep)
        state = rep.state
    return out


# ---------------------------------------------------------------------------
# optimisation rows


def linearized_vent_constraints(prog, t_cess, x_vent, tp: ThermalParams, name: str = "vent"):
    """Exact linearisation of T_CESS * X_vent for binary X_vent.

    Returns the product variable. Rows are the four McCormick inequalities
    over T_CESS in [t_min, t_max], which collapse to T^X = T_CESS when the
    vent is open and T^X = 0 when it is closed.
    """
    m = t_cess.m
    t_x = prog.var(f"{name}.tx", m, lb=0.0, ub=tp.t_max)
    prog.le(t_x - t_cess + tp.t_min * (1 - x_vent), name=f"{name}.mc_upper_t")
    prog.ge(t_x - t_cess + tp.t_max * (1 - x_vent), name=f"{name}.mc_lower_t")
    prog.le(t_x - tp.t_max * x_vent, name=f"{name}.mc_upper_x")
    prog.ge(t_x - tp.t_min * x_vent, name=f"{name}.mc_lower_x")
    return t_x


def vent_product_feasible(t_cess: float, x_vent: float, t_x: float, tp: ThermalParams, tol: float = 1e-9) -> bool:
    """Whether (T, X, T^X) satisfies the linearisation rows."""
    return (
        t_x <= t_cess - tp.t_min * (1 - x_vent) + tol
        and t_x >= t_cess - tp.t_max * (1 - x_vent) - tol
        and t_x <= tp.t_max * x_vent + tol
        and t_x >= tp.t_min * x_vent - tol
        and -tol <= t_x <= tp.t_max + tol
    )


def add_container_thermal(prog, name: str, i_sq, i_abs, t_ext, v_wind, tp: ThermalParams, branch_classes=(1, 2)):
    """Declare the thermal state and HVAC of one container and its balance rows.

    ``i_sq``/``i_abs`` are hourly expressions of the per-cell I^2 surrogate and
    |I|. Returns a dict of the created expressions.
    """
    n = len(t_ext)
    co = coefficients(tp, v_wind)
    t_cess = prog.var(f"{name}.t_cess", n, lb=tp.t_min, ub=tp.t_max)
    t_bar = prog.var(f"{name}.t_bar", n, lb=tp.t_min)
    p_hot = prog.var(f"{name}.p_hot", n, lb=0.0, ub=tp.p_air_max)
    p_cool = prog.var(f"{name}.p_cool", n, lb=0.0, ub=tp.p_air_max)
    x_air = prog.var(f"{name}.x_air", n, binary=True, branch_class=branch_classes[0])
    x_vent = prog.var(f"{name}.x_vent", n, binary=True, branch_class=branch_classes[1])

    prog.le(p_hot - tp.p_air_max * x_air, name=f"{name}.hvac_heat")
    prog.le(p_cool - tp.p_air_max * (1 - x_air), name=f"{name}.hvac_cool")
    t_x = linearized_vent_constraints(prog, t_cess, x_vent, tp, name=f"{name}.vent")

    q_gen = heat_from_surrogates(i_sq, i_abs, tp)
    # state at t-1; the day is periodic so hour 1 follows hour T
    t_prev, t_bar_prev = t_cess.roll(1), t_bar.roll(1)
    prog.eq(
        balance_residual(t_cess, t_prev, t_bar_prev, t_x, x_vent, p_hot, p_cool, q_gen, np.asarray(t_ext, float), co.k_vent, co),
        name=f"{name}.balance",
    )
    prog.eq(surface_residual(t_cess, t_bar, q_gen, co), name=f"{name}.surface")
    prog.le(t_cess - t_bar, name=f"{name}.surface_order")
    return {
        "t_cess": t_cess,
        "t_bar": t_bar,
        "p_hot": p_hot,
        "p_cool": p_cool,
        "x_air": x_air,
        "x_vent": x_vent,
        "t_x": t_x,
        "q_gen": q_gen,
    }
