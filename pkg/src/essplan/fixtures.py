"""Synthetic networks and days used by the examples, tests and CLI demos.

All impedances and profiles here are invented (plausible 10 kV / +-10 kV
values); every network built here is flagged ``synthetic``.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from .network import (
    Branch,
    Bus,
    HybridNetwork,
    Placement,
    Scenario,
    Vsc,
    celsius_to_kelvin,
    default_tariff,
    save_network,
    save_scenario,
    validate_network,
)

HOURS = np.arange(24)


def _bell(peak_hour: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((HOURS - peak_hour) / width) ** 2)


def load_shape(kind: str = "venue") -> np.ndarray:
    """Normalised daily load shape, max 1."""
    if kind == "venue":
        s = 0.35 + 0.25 * _bell(11, 3) + 0.65 * _bell(19.5, 2.2)
    elif kind == "residential":
        s = 0.4 + 0.2 * _bell(8, 1.5) + 0.55 * _bell(20, 2.0)
    else:
        s = 0.55 + 0.35 * _bell(13, 4)
    return s / s.max()


def pv_shape(season: str = "summer") -> np.ndarray:
    span = 7.0 if season == "summer" else 5.0
    s = np.clip(np.cos((HOURS - 12.5) / span * np.pi / 2), 0, None) ** 1.5
    s[np.abs(HOURS - 12.5) >= span] = 0.0
    return s


def weather(season: str) -> tuple[np.ndarray, np.ndarray]:
    """(ambient K, wind m/s) for a typical day."""
    if season == "winter":
        temp_c = -11.0 + 6.0 * np.sin((HOURS - 9) / 24 * 2 * np.pi)
        wind = 4.0 + 1.5 * np.sin((HOURS - 14) / 24 * 2 * np.pi)
    else:
        temp_c = 24.0 + 7.0 * np.sin((HOURS - 9) / 24 * 2 * np.pi)
        wind = 2.5 + 1.0 * np.sin((HOURS - 15) / 24 * 2 * np.pi)
    return celsius_to_kelvin(temp_c), np.clip(wind, 0.0, None)


# ---------------------------------------------------------------------------
# the 21-node venue system


def venue_network(with_placements: bool = True) -> HybridNetwork:
    """Three subsystems: DC 1-5, AC1 6-14 (slack 6), AC2 15-21 (slack 15).

    VSC1 (Udc-Q) joins DC bus 1 to AC bus 14, VSC2 (PQ) joins DC bus 5 to
    AC bus 21. Important loads sit on buses 4, 13 and 20.
    """
    ratios = {4: 1.0, 13: 0.4, 20: 0.6}
    buses = [Bus(i, "dc", "DC", important_ratio=ratios.get(i, 0.0)) for i in range(1, 6)]
    buses += [Bus(i, "ac", "AC1", slack=(i == 6), important_ratio=ratios.get(i, 0.0)) for i in range(6, 15)]
    buses += [Bus(i, "ac", "AC2", slack=(i == 15), important_ratio=ratios.get(i, 0.0)) for i in range(15, 22)]
    dc = [(1, 2, 0.30), (2, 3, 0.25), (3, 4, 0.35), (2, 5, 0.30)]
    ac1 = [(6, 7, 0.30, 0.25), (7, 8, 0.35, 0.30), (8, 9, 0.40, 0.32), (9, 10, 0.30, 0.25),
           (7, 11, 0.35, 0.28), (11, 12, 0.30, 0.25), (12, 13, 0.40, 0.30), (12, 14, 0.25, 0.20)]
    ac2 = [(15, 16, 0.30, 0.25), (16, 17, 0.35, 0.28), (17, 18, 0.40, 0.32), (16, 19, 0.30, 0.25),
           (19, 20, 0.35, 0.30), (20, 21, 0.25, 0.20)]
    branches = [Branch(f, t, r, 0.0, kind="dc") for f, t, r in dc]
    branches += [Branch(f, t, r, x) for f, t, r, x in ac1 + ac2]
    vscs = [
        Vsc("VSC1", ac_bus=14, dc_bus=1, s_kva=2000, p_max_kw=2000, q_max_kvar=1500, mode="UdcQ"),
        Vsc("VSC2", ac_bus=21, dc_bus=5, s_kva=2500, p_max_kw=2500, q_max_kvar=2000, mode="PQ"),
    ]
    placements = []
    if with_placements:
        for node in (4, 10, 18):
            placements.append(Placement(node, "SESS", 0.0, 4000.0, 0.0, 1000.0))
        for node in (4, 13, 20):
            placements.append(Placement(node, "MESS", max_modules=4))
    return validate_network(
        HybridNetwork("venue-21node", tuple(buses), tuple(branches), tuple(vscs), tuple(placements), synthetic=True)
    )


FIG5_PEAKS = {  # kW at the daily peak
    2: 300, 3: 350, 4: 500, 5: 250,
    7: 400, 8: 450, 9: 350, 10: 500, 11: 300, 12: 350, 13: 600, 14: 200,
    16: 350, 17: 400, 18: 450, 19: 300, 20: 550, 21: 200,
}
FIG5_PV = {3: 600, 9: 500, 10: 700, 17: 500, 18: 600}


def venue_day(net: HybridNetwork, season: str = "winter", days: int = 180, scale: float = 1.0,
             stage: str = "stage1", scenario_id: str | None = None) -> Scenario:
    t_ext, wind = weather(season)
    shape = load_shape("venue")
    pv = pv_shape(season) * (0.6 if season == "winter" else 1.0)
    load_p, load_q, pvs = {}, {}, {}
    for node, peak in FIG5_PEAKS.items():
        load_p[node] = peak * scale * shape
        if net.bus(node).kind == "ac":
            load_q[node] = 0.3 * load_p[node]
    for node, cap in FIG5_PV.items():
        pvs[node] = cap * pv
    return Scenario(scenario_id or season, days, load_p, load_q, pvs, default_tariff().hourly(), t_ext, wind, stage)


# ---------------------------------------------------------------------------
# small radial fixtures


def ac5_network() -> HybridNetwork:
    buses = (Bus(1, "ac", "A", slack=True), Bus(2, "ac", "A"), Bus(3, "ac", "A"), Bus(4, "ac", "A"), Bus(5, "ac", "A"))
    branches = (Branch(1, 2, 0.40, 0.30), Branch(2, 3, 0.50, 0.40), Branch(3, 4, 0.45, 0.35), Branch(2, 5, 0.60, 0.45))
    return validate_network(HybridNetwork("ac5", buses, branches, (), synthetic=True))


def dc4_network() -> HybridNetwork:
    """A DC feeder fed by one Udc-Q converter from a stiff AC bus."""
    buses = (Bus(1, "ac", "A", slack=True), Bus(2, "dc", "D"), Bus(3, "dc", "D"), Bus(4, "dc", "D"), Bus(5, "dc", "D"))
    branches = (Branch(2, 3, 0.50, kind="dc"), Branch(3, 4, 0.60, kind="dc"), Branch(3, 5, 0.40, kind="dc"))
    vscs = (Vsc("VSC", 1, 2, 4000, 4000, 3000, "UdcQ"),)
    return validate_network(HybridNetwork("dc4", buses, branches, vscs, synthetic=True))


def hybrid9_network() -> HybridNetwork:
    buses = tuple(Bus(i, "ac", "A", slack=(i == 1)) for i in range(1, 6)) + tuple(Bus(i, "dc", "D") for i in range(6, 10))
    branches = (
        Branch(1, 2, 0.35, 0.30), Branch(2, 3, 0.40, 0.32), Branch(3, 4, 0.30, 0.25), Branch(2, 5, 0.45, 0.35),
        Branch(6, 7, 0.40, kind="dc"), Branch(7, 8, 0.35, kind="dc"), Branch(7, 9, 0.50, kind="dc"),
    )
    vscs = (Vsc("VSC", 4, 6, 3000, 3000, 2000, "UdcQ"),)
    return validate_network(HybridNetwork("hybrid9", buses, branches, vscs, synthetic=True))


def feeder_day(net: HybridNetwork, peak_kw: float = 600.0, pv_kw: float = 400.0, season: str = "summer",
               scenario_id: str = "day", days: int = 1) -> Scenario:
    """Every non-slack bus carries the same shaped load; every third hosts PV."""
    t_ext, wind = weather(season)
    shape = load_shape("venue")
    slack = set(net.slack_buses().values())
    load_p, load_q, pv = {}, {}, {}
    for k, b in enumerate(x for x in net.buses if x.id not in slack):
        load_p[b.id] = peak_kw * shape * (0.8 + 0.1 * (k % 3))
        if b.kind == "ac":
            load_q[b.id] = 0.3 * load_p[b.id]
        if k % 3 == 1:
            pv[b.id] = pv_kw * pv_shape(season)
    return Scenario(scenario_id, days, load_p, load_q, pv, default_tariff().hourly(), t_ext, wind)


# ---------------------------------------------------------------------------
# brute-force toys


def dc3_toy() -> tuple[HybridNetwork, Scenario]:
    """Three-bus DC feeder over four hours (off-peak, flat, peak, peak)."""
    buses = (Bus(1, "ac", "A", slack=True), Bus(2, "dc", "D"), Bus(3, "dc", "D"), Bus(4, "dc", "D"))
    branches = (Branch(2, 3, 0.8, kind="dc"), Branch(3, 4, 1.0, kind="dc"))
    vscs = (Vsc("VSC", 1, 2, 5000, 5000, 3000, "UdcQ", loss_coeff=0.03),)
    net = validate_network(HybridNetwork("dc3", buses, branches, vscs, synthetic=True))
    load = np.array([300.0, 500.0, 900.0, 700.0])
    scen = Scenario(
        "dc3-4h", 1,
        {3: 0.6 * load, 4: load}, {}, {},
        np.array([0.044, 0.116, 0.196, 0.196]),
        np.full(4, 293.15), np.zeros(4), hours=4,
    )
    return net, scen


def one_bus_toy() -> tuple[HybridNetwork, Scenario]:
    """One AC bus (the grid) and two hours at off-peak then peak prices."""
    net = validate_network(HybridNetwork("bus1", (Bus(1, "ac", "A", slack=True),), (), (), synthetic=True))
    scen = Scenario("bus1-2h", 1, {1: np.array([100.0, 100.0])}, {}, {}, np.array([0.044, 0.196]),
                    np.full(2, 293.15), np.zeros(2), hours=2)
    return net, scen


# ---------------------------------------------------------------------------
# heavy-load event


def overload_network() -> HybridNetwork:
    """A long AC feeder with a short DC lateral; bus 6 hosts an important load."""
    buses = (
        Bus(1, "ac", "A", slack=True), Bus(2, "ac", "A"), Bus(3, "ac", "A"), Bus(4, "ac", "A"),
        Bus(5, "ac", "A"), Bus(6, "ac", "A", important_ratio=0.6),
        Bus(7, "dc", "D"), Bus(8, "dc", "D"),
    )
    branches = (
        Branch(1, 2, 0.50, 0.40), Branch(2, 3, 0.60, 0.45), Branch(3, 4, 0.60, 0.45),
        Branch(4, 5, 0.70, 0.50), Branch(5, 6, 0.70, 0.50), Branch(7, 8, 0.60, kind="dc"),
    )
    vscs = (Vsc("VSC", 3, 7, 1500, 1500, 1000, "UdcQ"),)
    placements = (Placement(4, "SESS", 0.0, 3000.0, 0.0, 800.0), Placement(6, "MESS", max_modules=4))
    return validate_network(HybridNetwork("overload8", buses, branches, vscs, placements, synthetic=True))


OVERLOAD_PEAKS = {2: 350, 3: 300, 4: 400, 5: 450, 6: 500, 8: 300}


def overload_day(net: HybridNetwork, season: str, scale: float, days: int, stage: str, scenario_id: str) -> Scenario:
    t_ext, wind = weather(season)
    shape = load_shape("venue")
    load_p = {n: p * scale * shape for n, p in OVERLOAD_PEAKS.items()}
    load_q = {n: 0.3 * v for n, v in load_p.items() if net.bus(n).kind == "ac"}
    pv = {8: 300.0 * pv_shape(season), 4: 300.0 * pv_shape(season)}
    return Scenario(scenario_id, days, load_p, load_q, pv, default_tariff().hourly(), t_ext, wind, stage)


def overload_fixture() -> tuple[HybridNetwork, list[Scenario], Scenario]:
    """(network, stage-1 typical days, stage-2 event day)."""
    net = overload_network()
    typical = [
        overload_day(net, "winter", 1.0, 180, "stage1", "winter"),
        overload_day(net, "summer", 0.9, 185, "stage1", "summer"),
    ]
    event = overload_day(net, "winter", 1.45, 60, "stage2", "event")
    return net, typical, event


# ---------------------------------------------------------------------------
# bundled cases


def venue_case() -> tuple[HybridNetwork, list[Scenario]]:
    net = venue_network()
    days = [
        venue_day(net, "winter", 180, 1.0, "stage1", "winter"),
        venue_day(net, "summer", 185, 1.0, "stage1", "summer"),
        venue_day(net, "winter", 60, 1.3, "stage2", "event"),
    ]
    return net, days


def overload_case() -> tuple[HybridNetwork, list[Scenario]]:
    net, typical, event = overload_fixture()
    return net, typical + [event]


def write_case(net: HybridNetwork, days: list[Scenario], dest, search: dict | None = None) -> Path:
    """Write a network, its days, the tariff and a run config; returns the config path."""
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    save_network(net, dest / "network.toml")
    with open(dest / "tariff.csv", "w") as fh:
        fh.write("start_hour,end_hour,price\n")
        for start, end, price in default_tariff().bands:
            fh.write(f"{start},{end},{price}\n")
    for s in days:
        save_scenario(s, dest / f"{s.id}.csv")
    cfg = {
        "network": "network.toml",
        "tariff": "tariff.csv",
        "scenarios": [{"file": f"{s.id}.csv", "id": s.id, "days": s.days, "stage": s.stage} for s in days],
        "search": search or {},
        "solver": {"mip_gap": 1e-3, "node_limit": 200},
        "out": "out",
        "seed": 0,
    }
    path = dest / "config.yaml"
    path.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return path
