import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from essplan.economics import (
    DayCash,
    DeviceDay,
    EconParams,
    OperatingCash,
    annualized_capital,
    arbitrage,
    crf,
    fixed_om,
    gap_penalty,
    mess_rent,
    module_damage_cost,
    operating_cash,
    replacement_and_disposal,
    replacement_count,
    stage1_report,
    stage2_report,
    variable_om,
)
from essplan.storage import BessRating

P = EconParams()


def annuity(tau, years):
    """Textbook annuity factor: payment that repays 1 over ``years``."""
    return 1.0 / sum((1.0 + tau) ** -k for k in range(1, years + 1))


def test_crf_value():
    assert crf(0.10, 20) == pytest.approx(annuity(0.10, 20), rel=1e-12)
    assert crf(0.10, 20) == pytest.approx(0.117460, abs=1e-6)


@given(st.floats(0.0, 0.5))
def test_crf_one_year(tau):
    assert crf(tau, 1) == pytest.approx(1.0 + tau, rel=1e-12)


def test_crf_zero_rate_limit():
    assert crf(1e-9, 20) == pytest.approx(1 / 20, abs=1e-6)
    assert crf(0.0, 20) == 1 / 20


@given(st.floats(0.001, 0.3), st.integers(1, 40))
def test_crf_matches_annuity(tau, years):
    assert crf(tau, years) == pytest.approx(annuity(tau, years), rel=1e-9)


def test_crf_domain():
    with pytest.raises(ValueError):
        crf(-0.1, 20)
    with pytest.raises(ValueError):
        crf(0.1, 0)


def test_annualized_capital():
    r = BessRating(1, 3500.0, 500.0)
    assert annualized_capital(r, P) == pytest.approx(551000.0 * annuity(0.10, 20), rel=1e-12)
    assert annualized_capital(BessRating(1, 0.0, 0.0), P) == 0.0
    with pytest.raises(ValueError):
        annualized_capital(BessRating(1, 1000.0, 100.0, kind="MESS"), P)


def test_replacement_count():
    assert replacement_count(10, 20) == 1
    assert replacement_count(20, 20) == 0
    assert replacement_count(25, 20) == 0
    assert replacement_count(6, 20) == 3
    assert replacement_count(math.inf, 20) == 0
    with pytest.raises(ValueError):
        replacement_count(0, 20)


def test_no_battery_replacement_when_life_covers_horizon():
    r = BessRating(1, 1000.0, 200.0)
    rep, dis = replacement_and_disposal(r, 25.0, P)
    # only the PCS swap at year 10 remains
    assert rep == pytest.approx(10.0 * 200.0 * (1.1**-10) * crf(0.1, 20), rel=1e-12)
    assert dis == 0.0


def test_degenerate_rates_single_replacement():
    p = P.with_overrides(tau=0.0, alpha=0.0, pcs_life=30.0)
    r = BessRating(1, 1000.0, 200.0)
    rep, dis = replacement_and_disposal(r, 10.0, p)
    assert rep == pytest.approx(156.0 * 1000.0 / 20)
    assert dis == pytest.approx(243.4 * 200.0 / 20)


def test_fixed_om():
    r = BessRating(1, 2000.0, 500.0)
    assert fixed_om(r, P) == pytest.approx(11900.0)
    assert fixed_om(r, P, days=73) == pytest.approx(11900.0 / 5)


def _device(p_dis, p_ch, p_hot=None, p_cool=None, i_bat=None):
    n = len(p_dis)
    z = np.zeros(n)
    return DeviceDay(
        "SESS@1", "SESS", np.asarray(p_dis, float), np.asarray(p_ch, float),
        z if p_hot is None else np.asarray(p_hot, float),
        z if p_cool is None else np.asarray(p_cool, float),
        z if i_bat is None else np.asarray(i_bat, float),
    )


def test_two_hour_arbitrage():
    dev = _device([0.0, 90.0], [-100.0, 0.0])
    assert arbitrage(dev, [0.044, 0.196]) == pytest.approx(13.24, abs=1e-12)


def test_zero_dispatch_costs_only_hvac():
    dev = _device([0, 0], [0, 0], p_hot=[2.0, 1.0])
    price = [0.1, 0.2]
    assert arbitrage(dev, price) == 0.0
    assert variable_om(dev, price) == pytest.approx(0.4)


def test_variable_om_cells():
    dev = _device([0.0], [0.0], i_bat=[10.0])
    dev.n_cess = 2
    assert variable_om(dev, [0.1]) == pytest.approx(100 * 0.003 * 2760 / 1000 * 0.1 * 2)


def test_operating_cash_weights_and_baseline():
    day = DayCash("w", 180, np.array([0.044, 0.196]), [_device([0.0, 90.0], [-100.0, 0.0])], np.array([10.0, 20.0]))
    cash = operating_cash([day], {"w": 5.0})
    assert cash.b_arb == pytest.approx(180 * 13.24)
    assert cash.c_loss == pytest.approx(180 * (0.44 + 3.92))
    assert cash.b_loss == pytest.approx(180 * (5.0 - 4.36))
    with pytest.raises(KeyError, match="no storage-free"):
        operating_cash([day], {})


def test_rent():
    assert mess_rent({4: 0, 13: 0}, [], P) == 0.0
    assert mess_rent({4: 1}, [0.0], P) == pytest.approx(6156.0)
    damage = 60 * (4.786e-5 / 0.2) * 156000
    assert damage == pytest.approx(2240.0, abs=0.5)
    assert module_damage_cost(4.786e-5, 1000.0, P) * 60 == pytest.approx(damage)
    assert mess_rent({4: 1}, [4.786e-5], P) == pytest.approx(6156.0 + damage)
    with pytest.raises(ValueError):
        mess_rent({4: -1}, [], P)


@given(st.integers(0, 10), st.floats(0.0, 1e-4))
def test_rent_monotone_in_modules(n, z):
    assert mess_rent({1: n + 1}, [z] * (n + 1), P) >= mess_rent({1: n}, [z] * n, P)


@pytest.mark.parametrize("gap, fires", [(1e-4, True), (2e-4, True), (9.99e-5, False), (0.0, False)])
def test_gap_penalty_branch(gap, fires):
    assert gap_penalty(gap, P) == (P.c_pun if fires else 0.0)


def test_stage1_report_assembly():
    r = BessRating(1, 2000.0, 500.0)
    cash = OperatingCash(c_var=100.0, b_arb=5000.0, b_loss=300.0, c_loss=0.0, c_loss0=300.0)
    rep = stage1_report([r], [12.0], cash, 1e-6, P)
    c_rep, c_dis = replacement_and_disposal(r, 12.0, P)
    expect = annualized_capital(r, P) + c_rep + 11900.0 + 100.0 + c_dis - 5300.0
    assert rep.net == pytest.approx(expect)
    assert rep.penalty == 0.0
    rep2 = stage1_report([r], [12.0], cash, 1e-3, P)
    assert rep2.net - rep.net == pytest.approx(P.c_pun)


def test_stage2_report_assembly():
    sess = [BessRating(1, 2000.0, 500.0)]
    cash = OperatingCash(c_var=50.0, b_arb=1000.0, b_loss=200.0, c_loss=0.0, c_loss0=200.0)
    rep = stage2_report(sess, {6: 2}, [1e-5, 1e-5], cash, 0.0, P)
    rent = mess_rent({6: 2}, [1e-5, 1e-5], P)
    fix = 23.8 * 500 * 60 / 365 + 23.8 * 1000 * 2 * 60 / 365
    assert rep.c_rent == pytest.approx(rent)
    assert rep.c_fix == pytest.approx(fix)
    assert rep.net == pytest.approx(rent + fix + 50.0 - 1200.0)


def test_params_validation():
    with pytest.raises(ValueError):
        EconParams(tau=-0.1)
    with pytest.raises(ValueError):
        EconParams(lambda1=0.5, lambda2=0.6)
    with pytest.raises(ValueError):
        EconParams(budget=-1.0)
    with pytest.raises(ValueError):
        EconParams(c_e=math.nan)
    assert EconParams(budget=math.inf).budget == math.inf
