"""AC/DC hybrid network, scenario and tariff data model.

Network files are TOML with ``[network]``, ``[[buses]]``, ``[[branches]]``,
``[[vscs]]`` and ``[[placements]]`` tables in SI units. Everything is
converted to per-unit on the declared bases at load time and the resulting
objects are immutable.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import networkx as nx
import numpy as np
import tomli
import tomli_w

T_HOURS = 24
DT_HOURS = 1.0

DEFAULT_V_MIN = 0.97
DEFAULT_V_MAX = 1.03
DEFAULT_I_MAX_A = 500.0


class NetworkError(ValueError):
    """Base class for ingestion and validation failures."""


class SchemaError(NetworkError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class TopologyError(NetworkError):
    def __init__(self, message: str, cycle: Sequence | None = None):
        super().__init__(message)
        self.cycle = list(cycle) if cycle is not None else None


class ConfigurationError(NetworkError):
    pass


class ScenarioError(NetworkError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str  # "ac" or "dc"
    subsystem: str
    v_min: float = DEFAULT_V_MIN
    v_max: float = DEFAULT_V_MAX
    slack: bool = False
    important_ratio: float = 0.0


@dataclass(frozen=True)
class Branch:
    """A line oriented parent -> child away from its subsystem's slack."""

    from_bus: int
    to_bus: int
    r_ohm: float
    x_ohm: float = 0.0
    i_max_a: float = DEFAULT_I_MAX_A
    kind: str = "ac"


@dataclass(frozen=True)
class Vsc:
    name: str
    ac_bus: int
    dc_bus: int
    s_kva: float
    p_max_kw: float
    q_max_kvar: float
    mode: str  # "UdcQ" or "PQ"
    loss_coeff: float = 0.03


@dataclass(frozen=True)
class Placement:
    """Candidate storage site; sizing bounds for SESS, module cap for MESS."""

    node: int
    kind: str  # "SESS" or "MESS"
    e_min_kwh: float = 0.0
    e_max_kwh: float = 0.0
    p_min_kw: float = 0.0
    p_max_kw: float = 0.0
    max_modules: int = 0
    colocated: bool = False


@dataclass(frozen=True)
class HybridNetwork:
    name: str
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    vscs: tuple[Vsc, ...]
    placements: tuple[Placement, ...] = ()
    base_kva: float = 1000.0
    ac_base_kv: float = 10.0
    dc_base_kv: float = 20.0
    synthetic: bool = False

    # -- lookups -----------------------------------------------------------
    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def bus(self, bus_id: int) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(bus_id)

    @property
    def ac_buses(self) -> list[Bus]:
        return [b for b in self.buses if b.kind == "ac"]

    @property
    def dc_buses(self) -> list[Bus]:
        return [b for b in self.buses if b.kind == "dc"]

    @property
    def ac_branches(self) -> list[Branch]:
        return [br for br in self.branches if br.kind == "ac"]

    @property
    def dc_branches(self) -> list[Branch]:
        return [br for br in self.branches if br.kind == "dc"]

    @property
    def n_ac(self) -> int:
        return len(self.ac_buses)

    @property
    def n_dc(self) -> int:
        return len(self.dc_buses)

    @property
    def h(self) -> int:
        return len(self.vscs)

    def subsystems(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for b in self.buses:
            out.setdefault(b.subsystem, []).append(b.id)
        return out

    def slack_buses(self) -> dict[str, int]:
        """Slack (reference) bus of every subsystem.

        AC subsystems use the bus flagged ``slack``; the DC subsystem is
        referenced at the DC terminal of the Udc-Q converter.
        """
        out = {b.subsystem: b.id for b in self.buses if b.slack and b.kind == "ac"}
        for v in self.vscs:
            if v.mode == "UdcQ":
                out[self.bus(v.dc_bus).subsystem] = v.dc_bus
        return out

    def adjacency(self) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = {b.id: set() for b in self.buses}
        for br in self.branches:
            adj[br.from_bus].add(br.to_bus)
            adj[br.to_bus].add(br.from_bus)
        return adj

    # -- per-unit ----------------------------------------------------------
    def z_base(self, kind: str) -> float:
        kv = self.ac_base_kv if kind == "ac" else self.dc_base_kv
        return kv * kv * 1000.0 / self.base_kva

    def i_base(self, kind: str) -> float:
        if kind == "ac":
            return self.base_kva / (math.sqrt(3.0) * self.ac_base_kv)
        return self.base_kva / self.dc_base_kv

    def r_pu(self, br: Branch) -> float:
        return br.r_ohm / self.z_base(br.kind)

    def x_pu(self, br: Branch) -> float:
        return br.x_ohm / self.z_base(br.kind) if br.kind == "ac" else 0.0

    def i_max_pu(self, br: Branch) -> float:
        return br.i_max_a / self.i_base(br.kind)

    def without_placements(self) -> "HybridNetwork":
        return replace(self, placements=())


# ---------------------------------------------------------------------------
# validation


def _orient(buses: Sequence[Bus], branches: Sequence[Branch], slacks: dict[str, int]) -> tuple[Branch, ...]:
    """Check radiality per subsystem and orient branches away from the slack."""
    by_id = {b.id: b for b in buses}
    g = nx.MultiGraph()
    g.add_nodes_from(by_id)
    for br in branches:
        for end in (br.from_bus, br.to_bus):
            if end not in by_id:
                raise SchemaError("branches", f"unknown bus {end} in branch ({br.from_bus},{br.to_bus})")
        if by_id[br.from_bus].subsystem != by_id[br.to_bus].subsystem:
            raise TopologyError(
                f"branch ({br.from_bus},{br.to_bus}) joins subsystems "
                f"{by_id[br.from_bus].subsystem!r} and {by_id[br.to_bus].subsystem!r}; use a VSC"
            )
        g.add_edge(br.from_bus, br.to_bus)
    try:
        cyc = nx.find_cycle(g)
    except nx.NetworkXNoCycle:
        cyc = None
    if cyc:
        nodes = [e[0] for e in cyc]
        raise TopologyError(f"network is not radial; cycle through buses {nodes}", cycle=nodes)

    oriented = []
    lookup = {}
    for br in branches:
        lookup[frozenset((br.from_bus, br.to_bus))] = br
    for sub, members in _group(buses).items():
        root = slacks[sub]
        comp = nx.node_connected_component(g, root)
        missing = set(members) - comp
        if missing:
            raise TopologyError(f"subsystem {sub!r} is disconnected; unreachable buses {sorted(missing)}")
        for parent, child in nx.bfs_edges(g, root):
            br = lookup[frozenset((parent, child))]
            oriented.append(replace(br, from_bus=parent, to_bus=child))
    return tuple(oriented)


def _group(buses: Iterable[Bus]) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    for b in buses:
        out.setdefault(b.subsystem, []).append(b.id)
    return out


def validate_network(net: HybridNetwork) -> HybridNetwork:
    """Check every structural invariant; returns a copy with oriented branches."""
    ids = [b.id for b in net.buses]
    if len(set(ids)) != len(ids):
        raise SchemaError("buses", "duplicate bus id")
    for b in net.buses:
        if b.kind not in ("ac", "dc"):
            raise SchemaError("buses.kind", f"bus {b.id}: expected 'ac' or 'dc', got {b.kind!r}")
        if not 0.0 < b.v_min < b.v_max:
            raise SchemaError("buses.v_min", f"bus {b.id}: need 0 < v_min < v_max")
        if not 0.0 <= b.important_ratio <= 1.0:
            raise SchemaError("buses.important_ratio", f"bus {b.id}: ratio must lie in [0, 1]")
    groups = _group(net.buses)
    for sub, members in groups.items():
        kinds = {net.bus(m).kind for m in members}
        if len(kinds) > 1:
            raise SchemaError("buses.subsystem", f"subsystem {sub!r} mixes AC and DC buses")

    udcq = [v for v in net.vscs if v.mode == "UdcQ"]
    for v in net.vscs:
        if v.mode not in ("UdcQ", "PQ"):
            raise SchemaError("vscs.mode", f"{v.name}: expected 'UdcQ' or 'PQ'")
        try:
            ac, dc = net.bus(v.ac_bus), net.bus(v.dc_bus)
        except KeyError as exc:
            raise SchemaError("vscs", f"{v.name}: unknown bus {exc.args[0]}") from None
        if ac.kind != "ac" or dc.kind != "dc":
            raise ConfigurationError(f"{v.name} must bridge one AC bus and one DC bus")
    if net.dc_buses and len(udcq) != 1:
        raise ConfigurationError(f"exactly one Udc-Q converter is required, found {len(udcq)}")

    slacks = {b.subsystem: b.id for b in net.buses if b.slack and b.kind == "ac"}
    for sub, members in groups.items():
        kind = net.bus(members[0]).kind
        flagged = [m for m in members if net.bus(m).slack]
        if kind == "ac" and len(flagged) != 1:
            raise ConfigurationError(f"AC subsystem {sub!r} needs exactly one slack bus, found {len(flagged)}")
    for v in udcq:
        slacks[net.bus(v.dc_bus).subsystem] = v.dc_bus
    for sub in groups:
        if sub not in slacks:
            raise ConfigurationError(f"subsystem {sub!r} has no slack designation")

    for br in net.branches:
        if br.r_ohm < 0 or br.x_ohm < 0 or br.i_max_a <= 0:
            raise SchemaError("branches", f"({br.from_bus},{br.to_bus}) needs r, x >= 0 and i_max > 0")
    branches = tuple(
        replace(br, kind=net.bus(br.from_bus).kind) if br.from_bus in ids else br for br in net.branches
    )
    oriented = _orient(net.buses, branches, slacks)

    for p in net.placements:
        if p.node not in ids:
            raise SchemaError("placements.node", f"unknown node {p.node}")
        if p.kind not in ("SESS", "MESS"):
            raise SchemaError("placements.kind", f"node {p.node}: expected SESS or MESS")
        if p.e_min_kwh > p.e_max_kwh or p.p_min_kw > p.p_max_kw:
            raise SchemaError("placements", f"node {p.node}: min bound above max bound")
    return replace(net, branches=oriented)


# ---------------------------------------------------------------------------
# file I/O

_BUS_KEYS = {"id", "kind", "subsystem", "v_min", "v_max", "slack", "important_ratio"}
_BRANCH_KEYS = {"from", "to", "r_ohm", "x_ohm", "i_max_a"}
_VSC_KEYS = {"name", "ac_bus", "dc_bus", "s_kva", "p_max_kw", "q_max_kvar", "mode", "loss_coeff"}
_PLACEMENT_KEYS = {"node", "kind", "e_min_kwh", "e_max_kwh", "p_min_kw", "p_max_kw", "max_modules", "colocated"}


def _check_keys(section: str, rec: dict, allowed: set, required: set) -> None:
    if not isinstance(rec, dict):
        raise SchemaError(section, "expected a table")
    extra = set(rec) - allowed
    if extra:
        raise SchemaError(f"{section}.{sorted(extra)[0]}", "unknown field")
    for key in required:
        if key not in rec:
            raise SchemaError(f"{section}.{key}", "missing required field")


def network_from_dict(doc: dict) -> HybridNetwork:
    head = doc.get("network", {})
    v_min = float(head.get("default_v_min", DEFAULT_V_MIN))
    v_max = float(head.get("default_v_max", DEFAULT_V_MAX))
    i_max = float(head.get("default_i_max_a", DEFAULT_I_MAX_A))
    buses = []
    for rec in doc.get("buses", []):
        _check_keys("buses", rec, _BUS_KEYS, {"id", "kind", "subsystem"})
        buses.append(
            Bus(
                id=int(rec["id"]),
                kind=str(rec["kind"]).lower(),
                subsystem=str(rec["subsystem"]),
                v_min=float(rec.get("v_min", v_min)),
                v_max=float(rec.get("v_max", v_max)),
                slack=bool(rec.get("slack", False)),
                important_ratio=float(rec.get("important_ratio", 0.0)),
            )
        )
    if not buses:
        raise SchemaError("buses", "at least one bus is required")
    branches = []
    for rec in doc.get("branches", []):
        _check_keys("branches", rec, _BRANCH_KEYS, {"from", "to", "r_ohm"})
        branches.append(
            Branch(
                from_bus=int(rec["from"]),
                to_bus=int(rec["to"]),
                r_ohm=float(rec["r_ohm"]),
                x_ohm=float(rec.get("x_ohm", 0.0)),
                i_max_a=float(rec.get("i_max_a", i_max)),
            )
        )
    vscs = []
    for rec in doc.get("vscs", []):
        _check_keys("vscs", rec, _VSC_KEYS, {"name", "ac_bus", "dc_bus", "s_kva", "mode"})
        s = float(rec["s_kva"])
        vscs.append(
            Vsc(
                name=str(rec["name"]),
                ac_bus=int(rec["ac_bus"]),
                dc_bus=int(rec["dc_bus"]),
                s_kva=s,
                p_max_kw=float(rec.get("p_max_kw", s)),
                q_max_kvar=float(rec.get("q_max_kvar", s)),
                mode=str(rec["mode"]),
                loss_coeff=float(rec.get("loss_coeff", 0.03)),
            )
        )
    placements = []
    for rec in doc.get("placements", []):
        _check_keys("placements", rec, _PLACEMENT_KEYS, {"node", "kind"})
        placements.append(
            Placement(
                node=int(rec["node"]),
                kind=str(rec["kind"]).upper(),
                e_min_kwh=float(rec.get("e_min_kwh", 0.0)),
                e_max_kwh=float(rec.get("e_max_kwh", 0.0)),
                p_min_kw=float(rec.get("p_min_kw", 0.0)),
                p_max_kw=float(rec.get("p_max_kw", 0.0)),
                max_modules=int(rec.get("max_modules", 0)),
                colocated=bool(rec.get("colocated", False)),
            )
        )
    net = HybridNetwork(
        name=str(head.get("name", "network")),
        buses=tuple(buses),
        branches=tuple(branches),
        vscs=tuple(vscs),
        placements=tuple(placements),
        base_kva=float(head.get("base_kva", 1000.0)),
        ac_base_kv=float(head.get("ac_base_kv", 10.0)),
        dc_base_kv=float(head.get("dc_base_kv", 20.0)),
        synthetic=bool(head.get("synthetic", False)),
    )
    return validate_network(net)


def network_to_dict(net: HybridNetwork) -> dict:
    doc: dict = {
        "network": {
            "name": net.name,
            "base_kva": net.base_kva,
            "ac_base_kv": net.ac_base_kv,
            "dc_base_kv": net.dc_base_kv,
            "synthetic": net.synthetic,
        },
        "buses": [
            {
                "id": b.id,
                "kind": b.kind,
                "subsystem": b.subsystem,
                "v_min": b.v_min,
                "v_max": b.v_max,
                "slack": b.slack,
                "important_ratio": b.important_ratio,
            }
            for b in net.buses
        ],
        "branches": [
            {"from": br.from_bus, "to": br.to_bus, "r_ohm": br.r_ohm, "x_ohm": br.x_ohm, "i_max_a": br.i_max_a}
            for br in net.branches
        ],
        "vscs": [
            {
                "name": v.name,
                "ac_bus": v.ac_bus,
                "dc_bus": v.dc_bus,
                "s_kva": v.s_kva,
                "p_max_kw": v.p_max_kw,
                "q_max_kvar": v.q_max_kvar,
                "mode": v.mode,
                "loss_coeff": v.loss_coeff,
            }
            for v in net.vscs
        ],
        "placements": [
            {
                "node": p.node,
                "kind": p.kind,
                "e_min_kwh": p.e_min_kwh,
                "e_max_kwh": p.e_max_kwh,
                "p_min_kw": p.p_min_kw,
                "p_max_kw": p.p_max_kw,
                "max_modules": p.max_modules,
                "colocated": p.colocated,
            }
            for p in net.placements
        ],
    }
    return doc


def load_network(path: str | Path) -> HybridNetwork:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        doc = tomli.loads(path.read_text())
    except tomli.TOMLDecodeError as exc:
        raise SchemaError(str(path), f"not valid TOML ({exc})") from None
    return network_from_dict(doc)


def dump_network(net: HybridNetwork) -> str:
    return tomli_w.dumps(network_to_dict(net))


def save_network(net: HybridNetwork, path: str | Path) -> None:
    Path(path).write_text(dump_network(net))


# ---------------------------------------------------------------------------
# tariff


@dataclass(frozen=True)
class Tariff:
    bands: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        bands = sorted(self.bands)
        covered = np.zeros(T_HOURS, dtype=int)
        for start, end, price in bands:
            if not 0 <= start < end <= T_HOURS:
                raise ScenarioError(f"tariff band ({start},{end}) outside 0..24")
            if price <= 0:
                raise ScenarioError(f"tariff band ({start},{end}) has non-positive price")
            covered[start:end] += 1
        if not np.all(covered == 1):
            raise ScenarioError("tariff bands must cover every hour of 0..24 exactly once")

    def hourly(self) -> np.ndarray:
        return np.array([price_at(self, t) for t in range(T_HOURS)])


def price_at(tariff: Tariff, t: int) -> float:
    if not 0 <= t < T_HOURS:
        raise ValueError(f"hour {t} outside [0, 24)")
    for start, end, price in tariff.bands:
        if start <= t < end:
            return price
    raise AssertionError("unreachable: tariff bands partition the day")


def default_tariff() -> Tariff:
    """TOU schedule of the Winter Olympic case (peak 17-23, flat 7-17)."""
    return Tariff(((0, 7, 0.044), (7, 17, 0.116), (17, 23, 0.196), (23, 24, 0.044)))


def load_tariff(path: str | Path) -> Tariff:
    bands = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            if row[0].strip() == "start_hour":
                continue
            start, end, price = row
            bands.append((int(start), int(end), float(price)))
    return Tariff(tuple(bands))


# ---------------------------------------------------------------------------
# scenarios


def celsius_to_kelvin(c):
    return np.asarray(c, dtype=float) + 273.15


@dataclass(frozen=True)
class Scenario:
    id: str
    days: int
    load_p: dict[int, np.ndarray]
    load_q: dict[int, np.ndarray]
    pv: dict[int, np.ndarray]
    price: np.ndarray
    t_ext: np.ndarray  # K
    v_wind: np.ndarray
    stage: str = "stage1"
    meta: dict = field(default_factory=dict, compare=False)
    hours: int = T_HOURS  # shorter horizons are for hand-checkable test cases

    def __post_init__(self):
        if self.days < 1:
            raise ScenarioError(f"scenario {self.id}: day weight must be >= 1")
        if self.stage not in ("stage1", "stage2"):
            raise ScenarioError(f"scenario {self.id}: stage must be stage1 or stage2")
        arrays = {"price": self.price, "t_ext": self.t_ext, "v_wind": self.v_wind}
        for kind, table in (("load_p", self.load_p), ("load_q", self.load_q), ("pv", self.pv)):
            for node, arr in table.items():
                arrays[f"{kind}_{node}"] = arr
        for name, arr in arrays.items():
            arr = np.asarray(arr)
            if arr.shape != (self.hours,):
                raise ScenarioError(f"scenario {self.id}: {name} must have {self.hours} hourly values, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ScenarioError(f"scenario {self.id}: {name} contains non-finite values")
        for kind, table in (("load_p", self.load_p), ("pv", self.pv)):
            for node, arr in table.items():
                if np.any(np.asarray(arr) < 0):
                    raise ScenarioError(f"scenario {self.id}: negative {kind} at node {node}")
        if np.any(self.price <= 0):
            raise ScenarioError(f"scenario {self.id}: prices must be positive")
        if np.any(self.t_ext < 223.0) or np.any(self.t_ext > 333.0):
            raise ScenarioError(f"scenario {self.id}: ambient temperature outside [223, 333] K")
        if np.any(self.v_wind < 0):
            raise ScenarioError(f"scenario {self.id}: negative wind speed")

    def nodes(self) -> set[int]:
        return set(self.load_p) | set(self.load_q) | set(self.pv)

    def p_load(self, node: int) -> np.ndarray:
        return self.load_p.get(node, np.zeros(self.hours))

    def q_load(self, node: int) -> np.ndarray:
        return self.load_q.get(node, np.zeros(self.hours))

    def p_pv(self, node: int) -> np.ndarray:
        return self.pv.get(node, np.zeros(self.hours))


def validate_scenario(s: Scenario, net: HybridNetwork) -> Scenario:
    ids = set(net.bus_ids)
    unknown = sorted(s.nodes() - ids)
    if unknown:
        raise ScenarioError(f"scenario {s.id}: unknown node id(s) {unknown}")
    for node in s.load_q:
        if net.bus(node).kind == "dc" and np.any(np.asarray(s.load_q[node]) != 0):
            raise ScenarioError(f"scenario {s.id}: reactive load on DC node {node}")
    return s


def load_scenario(
    path: str | Path,
    scenario_id: str | None = None,
    days: int = 1,
    stage: str = "stage1",
    price: np.ndarray | None = None,
) -> Scenario:
    """Read an hourly CSV (one row per hour).

    ``price`` overrides the file's price column when a tariff is supplied
    separately.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != T_HOURS:
        raise ScenarioError(f"{path.name}: expected {T_HOURS} rows, got {len(rows)}")
    cols = rows[0].keys()

    def column(name):
        return np.array([float(r[name]) for r in rows])

    load_p, load_q, pv = {}, {}, {}
    for col in cols:
        if col.startswith("load_p_"):
            load_p[int(col[7:])] = column(col)
        elif col.startswith("load_q_"):
            load_q[int(col[7:])] = column(col)
        elif col.startswith("pv_"):
            pv[int(col[3:])] = column(col)
    for required in ("temp_c", "wind_ms"):
        if required not in cols:
            raise ScenarioError(f"{path.name}: missing column {required}")
    if price is None:
        if "price" not in cols:
            raise ScenarioError(f"{path.name}: missing column price")
        price = column("price")
    return Scenario(
        id=scenario_id or path.stem,
        days=int(days),
        load_p=load_p,
        load_q=load_q,
        pv=pv,
        price=np.asarray(price, dtype=float),
        t_ext=celsius_to_kelvin(column("temp_c")),
        v_wind=column("wind_ms"),
        stage=stage,
    )


def save_scenario(s: Scenario, path: str | Path) -> None:
    nodes = sorted(s.nodes())
    header = []
    for n in nodes:
        if n in s.load_p:
            header.append(f"load_p_{n}")
        if n in s.load_q:
            header.append(f"load_q_{n}")
        if n in s.pv:
            header.append(f"pv_{n}")
    header += ["price", "temp_c", "wind_ms"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t in range(s.hours):
            row = []
            for col in header[:-3]:
                kind, node = col.rsplit("_", 1)
                table = {"load_p": s.load_p, "load_q": s.load_q, "pv": s.pv}[kind]
                row.append(repr(float(table[int(node)][t])))
            row += [repr(float(s.price[t])), repr(float(s.t_ext[t] - 273.15)), repr(float(s.v_wind[t]))]
            w.writerow(row)
