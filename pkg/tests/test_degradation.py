import math
from collections import Counter

import numpy as np
import pytest
import rainflow as reference
from hypothesis import given
from hypothesis import strategies as st

from essplan.degradation import (
    DEFAULT,
    CycleRecord,
    DegradationDomainError,
    annual_damage,
    daily_degradation,
    f_temperature,
    lifetime_years,
    linear_daily_damage,
    rainflow,
    turning_points,
)


def ours(series, closed=False):
    return Counter((round(c.dod, 12), c.weight) for c in rainflow(series, closed=closed))


def theirs(series):
    # the reference also reports zero-range cycles; they carry no damage
    return Counter((round(rng, 12), cnt) for rng, _, cnt, _, _ in reference.extract_cycles(series) if rng > 0)


def test_temperature_factor_ends():
    assert f_temperature(273.0) == pytest.approx(math.exp(6298 / 273) / 1.214e10, rel=1e-12)
    assert f_temperature(273.0) == pytest.approx(0.861, abs=1e-3)
    assert f_temperature(333.0) == pytest.approx(math.exp(-4665 / 333) / 1.675e-6, rel=1e-12)
    assert f_temperature(333.0) == pytest.approx(0.492, abs=1e-3)


def test_temperature_split_uses_low_branch():
    assert f_temperature(298.0) == pytest.approx(math.exp(6298 / 298) / 1.214e10)


@pytest.mark.parametrize("t", [272.9, 333.1, 200.0])
def test_temperature_domain(t):
    with pytest.raises(DegradationDomainError):
        f_temperature(t)


def test_single_excursion():
    cyc = rainflow([0.9, 0.1, 0.9])
    assert len(cyc) == 1
    assert cyc[0].dod == pytest.approx(0.8) and not cyc[0].half


def test_constant_series():
    assert rainflow([0.5] * 25) == []


def test_textbook_series_matches_reference():
    s = [0.5, 0.3, 0.4, 0.2, 0.5]
    assert ours(s) == theirs(s)


def test_closed_loop_has_no_half_cycles():
    cyc = rainflow([0.5, 0.3, 0.4, 0.2, 0.5])
    assert all(not c.half for c in cyc)
    assert sorted(round(c.dod, 12) for c in cyc) == [0.1, 0.3]


# the reference needs three samples to find a reversal
@given(st.lists(st.floats(0.1, 0.9), min_size=3, max_size=40))
def test_open_count_matches_reference(series):
    assert ours(series) == theirs(series)


@given(st.lists(st.floats(0.1, 0.9), min_size=2, max_size=30))
def test_closed_count_matches_rotated_reference(series):
    """A loop read from its peak back to its peak: paired halves make full cycles."""
    loop = series + [series[0]]
    k = int(np.argmax(series))
    rot = series[k:] + series[:k] + [series[k]]
    ref = Counter()
    for rng, _, cnt, _, _ in reference.extract_cycles(rot):
        if rng > 0:
            ref[round(rng, 12)] += cnt
    got = Counter()
    for c in rainflow(loop):
        got[round(c.dod, 12)] += c.weight
    assert got == ref
    assert all(v == int(v) for v in got.values())


@given(st.lists(st.floats(0.1, 0.9), min_size=3, max_size=30), st.integers(1, 4), st.integers(1, 4))
def test_padding_ends_is_harmless(series, a, b):
    padded = [series[0]] * a + series + [series[-1]] * b
    assert ours(padded) == ours(series)


def test_turning_points_plateaus():
    assert turning_points([1, 1, 2, 2, 1]) == [1, 2, 4]
    assert turning_points([3]) == [0]


def test_cycle_temperature_is_span_mean():
    # mean over the samples between the cycle's two turning points
    (c,) = rainflow([0.9, 0.1, 0.9], [280.0, 290.0, 280.0])
    assert c.t_avg == pytest.approx(285.0)
    (h, *_) = rainflow([0.2, 0.4, 0.6, 0.3], [280.0, 284.0, 288.0, 300.0], closed=False)
    assert h.half and h.dod == pytest.approx(0.4) and h.t_avg == pytest.approx(284.0)


def test_temperature_series_must_align():
    with pytest.raises(ValueError):
        rainflow([0.1, 0.2, 0.3], [290.0, 291.0])


def test_linear_damage_examples():
    assert linear_daily_damage(0.0, []) == pytest.approx(0.5 * 1.012e-20 + 1.85e-5, rel=1e-12)
    idle = 1.952e-5 * 0.5 + 1.85e-5
    assert idle == pytest.approx(2.826e-5)
    assert linear_daily_damage(0.5, [0.8]) == pytest.approx(idle + 0.5 * (4.9e-5 * 0.8 + 1.012e-20), rel=1e-12)
    assert linear_daily_damage(0.5, [0.8]) == pytest.approx(4.786e-5, rel=1e-9)


def test_no_cycles_no_calendar_fade_at_zero():
    assert daily_degradation(0.0, []) == 0.0


def test_daily_degradation_composition():
    c = CycleRecord(0.5, 290.0)
    h = CycleRecord(0.5, 290.0, half=True)
    f_dod = 3.01e-5 * 0.25 + 8.98e-6 * 0.5
    expect = 6.81e-5 * 0.25 + 4.02e-5 * 0.5 + f_dod * f_temperature(290.0)
    assert daily_degradation(0.5, [c]) == pytest.approx(expect, rel=1e-12)
    assert daily_degradation(0.5, [h, h]) == pytest.approx(expect, rel=1e-12)


@pytest.mark.parametrize("damage, years", [(0.02, 10.0), (0.01, 20.0)])
def test_lifetime(damage, years):
    assert lifetime_years(damage) == pytest.approx(years)


def test_lifetime_zero_damage():
    assert lifetime_years(0.0) == math.inf
    assert lifetime_years(0.0, horizon=20) == 20.0
    with pytest.raises(ValueError):
        lifetime_years(-1.0)


def test_two_season_weighting():
    w = daily_degradation(0.5, [CycleRecord(0.6, 280.0)])
    s = daily_degradation(0.4, [CycleRecord(0.7, 305.0)])
    total = annual_damage([w, s], [180, 180])
    assert total == pytest.approx(180 * (w + s))
    assert lifetime_years(total) == pytest.approx(DEFAULT.eol_fade / (180 * (w + s)))


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(273.0, 333.0))
def test_damage_monotone_in_depth(soc, dod, t):
    lo = daily_degradation(soc, [CycleRecord(dod * 0.5, t)])
    hi = daily_degradation(soc, [CycleRecord(dod, t)])
    assert hi >= lo >= 0
