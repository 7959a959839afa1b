"""Battery ageing: rainflow cycle extraction, daily fade and lifetime."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

T_LOW_K = 273.0
T_SPLIT_K = 298.0
T_HIGH_K = 333.0


class DegradationDomainError(ValueError):
    pass


@dataclass(frozen=True)
class DegradationParams:
    k1: float = 6.81e-5
    k2: float = 4.02e-5
    k3: float = 3.01e-5
    k4: float = 8.98e-6
    k5: float = 6.298e3
    k6: float = 1.214e10
    k7: float = -4.665e3
    k8: float = 1.675e-6
    # linear surrogate used inside the dispatch model
    idle_slope: float = 1.952e-5
    idle_intercept: float = 1.85e-5
    cycle_slope: float = 4.9e-5
    cycle_intercept: float = 1.012e-20
    eol_fade: float = 0.2

    def __post_init__(self):
        if self.k6 <= 0 or self.k8 <= 0:
            raise ValueError("k6 and k8 must be positive")
        if not 0.0 < self.eol_fade < 1.0:
            raise ValueError("end-of-life fade must lie in (0, 1)")


DEFAULT = DegradationParams()


@dataclass(frozen=True)
class CycleRecord:
    dod: float
    t_avg: float
    half: bool = False
    start: int = 0
    end: int = 0  # sample indices; a loop-closing cycle may have end < start

    def __post_init__(self):
        if not -1e-12 <= self.dod <= 1.0 + 1e-12:
            raise ValueError(f"DOD {self.dod} outside [0, 1]")

    @property
    def weight(self) -> float:
        return 0.5 if self.half else 1.0


def turning_points(series: Sequence[float]) -> list[int]:
    """Indices of local extrema, endpoints included.

    A plateau is represented by its first sample, except a leading plateau
    which is represented by its last, so padding the series with copies of
    its end values leaves the result unchanged up to an index shift.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n == 0:
        return []
    first = 0
    while first + 1 < n and x[first + 1] == x[first]:
        first += 1
    distinct = [first] + [i for i in range(first + 1, n) if x[i] != x[i - 1]]
    if len(distinct) < 3:
        return distinct
    keep = [distinct[0]]
    for a, b, c in zip(distinct, distinct[1:], distinct[2:]):
        if (x[b] - x[a]) * (x[c] - x[b]) < 0:
            keep.append(b)
    keep.append(distinct[-1])
    return keep


def _extract(x: np.ndarray, closed: bool = False) -> list[tuple[int, int, bool]]:
    """Three-point rainflow on the turning points of x: (start, end, half).

    With ``closed`` every range that is enclosed counts as a full cycle,
    including one that touches the start; callers rotate a closed loop to
    its maximum first so nothing is left over.
    """
    stack: list[int] = []
    out = []
    for i in turning_points(x):
        stack.append(i)
        while len(stack) >= 3:
            rx = abs(x[stack[-1]] - x[stack[-2]])
            ry = abs(x[stack[-2]] - x[stack[-3]])
            if rx < ry:
                break
            if len(stack) == 3 and not closed:
                out.append((stack[0], stack[1], True))
                stack.pop(0)
            else:
                out.append((stack[-3], stack[-2], False))
                last = stack.pop()
                stack.pop()
                stack.pop()
                stack.append(last)
    for a, b in zip(stack, stack[1:]):
        out.append((a, b, True))
    return out


def rainflow(
    soc_series: Sequence[float],
    temp_series: Sequence[float] | None = None,
    closed: bool | None = None,
) -> list[CycleRecord]:
    """Cycles of an SOC trajectory with the mean temperature over each span.

    ``temp_series`` is sampled at the same instants as the SOC series; when
    omitted the cycles carry a placeholder temperature of ``T_SPLIT_K``.
    A series that ends where it starts (a periodic day) is counted as a
    loop, so every excursion closes into a full cycle; pass ``closed=False``
    to force the open-ended count with half cycles.
    """
    x = np.asarray(soc_series, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two SOC samples")
    if temp_series is None:
        temps = np.full(x.size, T_SPLIT_K)
    else:
        temps = np.asarray(temp_series, dtype=float)
        if temps.shape != x.shape:
            raise ValueError("temperature series must align with the SOC series")
    if closed is None:
        closed = bool(abs(x[-1] - x[0]) <= 1e-12)
    if closed:
        # drop the repeated end sample, start and finish the loop at the peak
        m = x.size - 1
        k0 = int(np.argmax(x[:m]))
        order = np.array([(k0 + j) % m for j in range(m + 1)])
    else:
        order = np.arange(x.size)
    xr = x[order]
    out = []
    for a, b, half in _extract(xr, closed):
        lo, hi = min(a, b), max(a, b)
        dod = abs(xr[b] - xr[a])
        if dod == 0.0:
            continue
        span = order[lo : hi + 1]
        out.append(CycleRecord(float(dod), float(np.mean(temps[span])), half, int(order[lo]), int(order[hi])))
    return out


def linear_daily_damage(soc_avg: float, dods: Iterable[float], p: DegradationParams = DEFAULT) -> float:
    """Linear fade surrogate: idle part plus half of the per-hour cycling part."""
    idle = p.idle_slope * soc_avg + p.idle_intercept
    cyc = p.cycle_slope * float(np.sum(np.asarray(list(dods), dtype=float))) + p.cycle_intercept
    return idle + 0.5 * cyc


def f_soc(soc_avg: float, p: DegradationParams = DEFAULT) -> float:
    return p.k1 * soc_avg**2 + p.k2 * soc_avg


def f_dod(dod: float, p: DegradationParams = DEFAULT) -> float:
    return p.k3 * dod**2 + p.k4 * dod


def f_temperature(t_avg: float, p: DegradationParams = DEFAULT) -> float:
    if not T_LOW_K <= t_avg <= T_HIGH_K:
        raise DegradationDomainError(f"cycle temperature {t_avg:.2f} K outside [{T_LOW_K}, {T_HIGH_K}] K")
    if t_avg <= T_SPLIT_K:
        return math.exp(p.k5 / t_avg) / p.k6
    return math.exp(p.k7 / t_avg) / p.k8


def daily_degradation(soc_avg: float, cycles: Sequence[CycleRecord], p: DegradationParams = DEFAULT) -> float:
    """Calendar plus temperature-weighted cycle fade for one day."""
    cyc = sum(c.weight * f_dod(c.dod, p) * f_temperature(c.t_avg, p) for c in cycles)
    return f_soc(soc_avg, p) + cyc


def annual_damage(daily: Sequence[float], days: Sequence[float]) -> float:
    """Scenario-weighted yearly fade."""
    if len(daily) != len(days):
        raise ValueError("one day-count per scenario")
    return float(np.dot(daily, days))


def lifetime_years(annual: float, p: DegradationParams = DEFAULT, horizon: float | None = None) -> float:
    """Years until the end-of-life fade; a no-damage device lives for the horizon (or forever)."""
    if annual < 0:
        raise ValueError("negative damage")
    if annual == 0:
        return float(horizon) if horizon is not None else math.inf
    return p.eol_fade / annual
