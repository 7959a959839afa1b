import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from essplan.storage import (
    BessRating,
    BessSetpoint,
    DegenerateDeviceError,
    check_trajectory,
    mess_floor_series,
    mess_min_soc,
    pcs_feasible,
    simulate_soc,
    soc_step,
)

R = BessRating(node=1, e_rate=1000.0, p_rate=200.0, q_rate=150.0, s_pcs=500.0)


def test_idle_hour_keeps_soc():
    assert soc_step(0.5, BessSetpoint(), R) == 0.5


def test_discharge_step():
    # 0.5 - 100 / (1000 * 0.976 * 0.95)
    assert soc_step(0.5, BessSetpoint(p_dis=100.0), R) == pytest.approx(0.5 - 100 / 927.2, abs=1e-12)
    assert soc_step(0.5, BessSetpoint(p_dis=100.0), R) == pytest.approx(0.39215, abs=5e-6)


def test_charge_step():
    sp = BessSetpoint(p_ch=-100.0, mu_dis=0, mu_ch=1)
    assert soc_step(0.5, sp, R) == pytest.approx(0.5 + 100 * 0.976 * 0.95 / 1000, abs=1e-12)
    assert soc_step(0.5, sp, R) == pytest.approx(0.59272, abs=5e-6)


def test_self_discharge():
    r = BessRating(1, 1000.0, 100.0, self_discharge=0.01)
    assert soc_step(0.5, BessSetpoint(), r) == pytest.approx(0.495)


def test_zero_energy_is_degenerate():
    r = BessRating(1, 0.0, 0.0)
    with pytest.raises(DegenerateDeviceError):
        soc_step(0.5, BessSetpoint(), r)
    with pytest.raises(DegenerateDeviceError):
        mess_min_soc(0, [1.0, 1.0], r, 0.5)


def test_rating_validation():
    with pytest.raises(ValueError):
        BessRating(1, 100.0, 10.0, soc_min=0.9, soc_max=0.1)
    with pytest.raises(ValueError):
        BessRating(1, 100.0, 10.0, soc0=0.95)
    with pytest.raises(ValueError):
        BessRating(1, -1.0, 10.0)
    with pytest.raises(ValueError):
        BessRating(1, 100.0, 10.0, eta_c=0.0)
    with pytest.raises(ValueError):
        BessRating(1, 100.0, 10.0, kind="XESS")
    assert BessRating(1, 100.0, 10.0, 30.0).s_pcs == 30.0


def test_pcs_envelope():
    r = BessRating(1, 1000.0, 500.0, 500.0, s_pcs=500.0)
    assert pcs_feasible(BessSetpoint(), BessRating(1, 1000.0, 0.0, s_pcs=0.0))
    assert pcs_feasible(BessSetpoint(p_dis=400.0, q_dis=300.0), r)
    assert not pcs_feasible(BessSetpoint(p_dis=400.0, q_dis=301.0), r)


def test_pcs_dc_forbids_q():
    r = BessRating(1, 1000.0, 500.0)
    assert pcs_feasible(BessSetpoint(p_dis=500.0), r, dc=True)
    assert not pcs_feasible(BessSetpoint(p_dis=10.0, q_dis=1.0), r, dc=True)
    assert not pcs_feasible(BessSetpoint(p_dis=501.0), r, dc=True)


@given(st.floats(-600, 600), st.floats(-600, 600), st.floats(0, 800))
def test_pcs_matches_norm(p, q, s):
    r = BessRating(1, 1000.0, 600.0, 600.0, s_pcs=s)
    sp = BessSetpoint(p_dis=max(p, 0.0), p_ch=min(p, 0.0), q_dis=q)
    assert pcs_feasible(sp, r) == (math.hypot(p, q) <= s + 1e-9)


def test_setpoint_violations():
    assert BessSetpoint(p_dis=100.0).violations(R) == []
    assert BessSetpoint(p_dis=10.0, p_ch=-10.0, mu_dis=1, mu_ch=1).violations(R)
    assert BessSetpoint(p_dis=300.0).violations(R)
    assert BessSetpoint(q_dis=200.0).violations(R)


def test_mess_floor_zero_ratio():
    r = BessRating(6, 3000.0, 1000.0, kind="MESS")
    assert mess_min_soc(0, [500.0] * 24, r, 0.0) == 0.0


def test_mess_floor_value():
    r = BessRating(6, 3000.0, 1000.0, kind="MESS")
    # 0.6 * 400 kWh / (3000 * 0.976 * 0.95)
    assert mess_min_soc(0, [200.0, 200.0], r, 0.6) == pytest.approx(0.6 * 400 / (3000 * 0.976 * 0.95), rel=1e-12)
    assert mess_min_soc(0, [200.0, 200.0], r, 0.6) == pytest.approx(0.08628, abs=5e-6)


def test_mess_floor_linear_in_ratio():
    r = BessRating(4, 2000.0, 1000.0, kind="MESS")
    load = np.linspace(100, 600, 24)
    f = {mu: mess_floor_series(load, r, mu) for mu in (1.0, 0.4, 0.6)}
    assert np.allclose(f[0.4], 0.4 * f[1.0])
    assert np.allclose(f[0.6], 0.6 * f[1.0])
    assert np.all(f[1.0] > 0)


def test_floor_wraps_the_day():
    r = BessRating(4, 1000.0, 100.0, kind="MESS")
    load = np.zeros(24)
    load[0] = 100.0
    f = mess_floor_series(load, r, 1.0)
    assert f[23] > 0 and f[0] > 0 and f[1] == 0


def test_constant_trajectory_is_clean():
    assert check_trajectory(np.full(25, 0.5), R) == []


def test_periodicity_violation():
    traj = np.full(25, 0.5)
    traj[-1] = 0.51
    kinds = [v.kind for v in check_trajectory(traj, R)]
    assert kinds == ["periodicity"]


def test_single_floor_breach():
    r = BessRating(6, 1000.0, 500.0, kind="MESS")
    floors = np.full(24, 0.3)
    traj = np.full(25, 0.5)
    traj[7] = 0.25
    out = check_trajectory(traj, r, floors)
    assert len(out) == 1
    assert out[0].kind == "below_floor" and out[0].t == 7


def test_bounds_breach():
    traj = np.full(25, 0.5)
    traj[3], traj[4] = 0.95, 0.05
    kinds = sorted(v.kind for v in check_trajectory(traj, R))
    assert kinds == ["above_max", "below_min"]


@given(st.lists(st.floats(-200, 200), min_size=1, max_size=24))
def test_simulated_soc_is_affine_in_power(powers):
    """Delivered energy lowers SOC by 1/(E eta_d eta_pcs) per kWh, drawn energy raises it by eta_c eta_pcs/E."""
    sps = [BessSetpoint(p_dis=max(p, 0), p_ch=min(p, 0), mu_dis=int(p >= 0), mu_ch=int(p < 0)) for p in powers]
    soc = simulate_soc(sps, R)
    out = sum(max(p, 0) for p in powers)
    inn = -sum(min(p, 0) for p in powers)
    expect = R.soc0 - out / (R.e_rate * R.eta_d * R.eta_pcs) + inn * R.eta_c * R.eta_pcs / R.e_rate
    assert soc[-1] == pytest.approx(expect, abs=1e-9)
    assert len(soc) == len(powers) + 1
