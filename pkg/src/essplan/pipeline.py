"""Two-stage planning runs: configuration, orchestration, persistence and reports."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from .conic.bnb import NO_SOLUTION, BnbOptions
from .conic.solution import DispatchSolution, count_violations
from .economics import CostReport, EconParams
from .evaluate import INFEASIBLE_FITNESS, EvalContext, LayoutResult, evaluate_stage1, evaluate_stage2, has_values, solve_accounted
from .network import HybridNetwork, Scenario, load_network, load_scenario, load_tariff, validate_scenario
from .search import SearchConfig, SearchResult, Stage1Problem, Stage2Problem, ga_sa_search
from .storage import BessRating
from .thermal import ThermalParams

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class SequencingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    file: Path
    id: str
    days: int
    stage: str


@dataclass(frozen=True)
class SolverSettings:
    mip_gap: float = 1e-3
    node_limit: int = 200
    time_limit: float | None = None
    backend: str = "clarabel"
    thermal: bool = True

    def bnb(self) -> BnbOptions:
        return BnbOptions(mip_gap=self.mip_gap, node_limit=self.node_limit, time_limit=self.time_limit, backend=self.backend)


@dataclass
class RunConfig:
    network: Path
    scenarios: list[ScenarioSpec]
    tariff: Path | None = None
    econ: EconParams = EconParams()
    thermal: ThermalParams = ThermalParams()
    search: SearchConfig = SearchConfig()
    solver: SolverSettings = SolverSettings()
    out: Path = Path("out")
    seed: int = 0
    jobs: int = 1

    def context(self) -> EvalContext:
        net = load_network(self.network)
        price = load_tariff(self.tariff).hourly() if self.tariff else None
        scen = []
        for s in self.scenarios:
            sc = load_scenario(s.file, s.id, s.days, s.stage, price)
            scen.append(validate_scenario(sc, net))
        return EvalContext(net, scen, self.econ, self.thermal, bnb=self.solver.bnb(), use_thermal=self.solver.thermal)

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        solver_kw = {k: kw.pop(k) for k in ("mip_gap", "time_limit") if k in kw}
        cfg = dataclasses.replace(self, **kw)
        if solver_kw:
            cfg = dataclasses.replace(cfg, solver=dataclasses.replace(cfg.solver, **solver_kw))
        if "seed" in kw:
            cfg = dataclasses.replace(cfg, search=dataclasses.replace(cfg.search, seed=kw["seed"]))
        return cfg


def _dataclass_from(cls, doc: dict | None, where: str, base=None):
    doc = dict(doc or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    try:
        return dataclasses.replace(base, **doc) if base is not None else cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    allowed = {"network", "scenarios", "tariff", "econ", "thermal", "search", "solver", "out", "seed", "jobs"}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"config: unknown key(s) {unknown}")
    root = path.parent

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else root / p

    if "network" not in doc or not doc.get("scenarios"):
        raise ConfigError("config: 'network' and 'scenarios' are required")
    scen = []
    for i, s in enumerate(doc["scenarios"]):
        if "file" not in s:
            raise ConfigError(f"scenarios[{i}]: missing 'file'")
        f = resolve(s["file"])
        scen.append(ScenarioSpec(f, str(s.get("id", f.stem)), int(s.get("days", 1)), str(s.get("stage", "stage1"))))
    cfg = RunConfig(
        network=resolve(doc["network"]),
        scenarios=scen,
        tariff=resolve(doc["tariff"]) if doc.get("tariff") else None,
        econ=_dataclass_from(EconParams, doc.get("econ"), "econ"),
        thermal=_dataclass_from(ThermalParams, doc.get("thermal"), "thermal"),
        search=_dataclass_from(SearchConfig, doc.get("search"), "search"),
        solver=_dataclass_from(SolverSettings, doc.get("solver"), "solver"),
        out=resolve(doc.get("out", "out")),
        seed=int(doc.get("seed", 0)),
        jobs=int(doc.get("jobs", 1)),
    )
    if "seed" in doc:
        cfg = dataclasses.replace(cfg, search=dataclasses.replace(cfg.search, seed=cfg.seed))
    return cfg


def check_config(cfg: RunConfig) -> None:
    """Referenced files exist and the output directory is writable."""
    for p in [cfg.network, cfg.tariff] + [s.file for s in cfg.scenarios]:
        if p is not None and not Path(p).is_file():
            raise ConfigError(f"missing input file {p}")
    out = Path(cfg.out)
    probe = out if out.exists() else next((q for q in out.parents if q.exists()), Path("."))
    if not os.access(probe, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")


# ---------------------------------------------------------------------------
# results


def rating_to_dict(r: BessRating) -> dict:
    return dataclasses.asdict(r) | {"label": r.label}


def rating_from_dict(d: dict) -> BessRating:
    d = {k: v for k, v in d.items() if k != "label"}
    return BessRating(**d)


@dataclass
class DaySummary:
    """One solved scenario day for one storage layout, with its hourly traces."""

    scenario: str
    layout: str  # baseline, stage1 or joint
    status: str
    objective: float
    socr_gap: float
    mip_gap: float
    penalty_slack: float
    voltage_violations: int
    current_violations: int
    voltages: dict[str, list[float]] = field(default_factory=dict)
    devices: dict[str, dict[str, list[float]]] = field(default_factory=dict)


def summarize(sol: DispatchSolution, net: HybridNetwork, layout: str) -> DaySummary:
    if not has_values(sol):
        return DaySummary(sol.scenario, layout, sol.status, math.inf, math.inf, math.inf, math.inf, -1, -1)
    v = count_violations(sol, net)
    volts = {str(b): sol.voltage(b).tolist() for b in sorted(sol.v2)}
    devs = {}
    for d in sol.devices:
        rec = {
            "soc": d.soc.tolist(),
            "floor": d.floors.tolist(),
            "p_dis_kw": d.p_dis.tolist(),
            "p_ch_kw": d.p_ch.tolist(),
            "q_kvar": d.q.tolist(),
        }
        for k in ("p_hot", "p_cool", "x_vent", "t_cess", "t_bar"):
            if k in d.thermal:
                rec[k] = d.thermal[k].tolist()
        devs[d.label] = rec
    mip_gap = sol.mip.gap if sol.mip is not None else math.nan
    return DaySummary(
        sol.scenario, layout, sol.status, sol.objective, sol.gap, mip_gap, sol.penalty_slack, v.voltage, v.current, volts, devs
    )


@dataclass
class StageOutcome:
    designs: list[dict]
    fitness: float
    feasible: bool
    report: dict[str, float]
    per_device: dict[str, dict[str, float]]
    lives: dict[str, float]
    trace: list[dict[str, float]]
    evaluations: int
    days: list[DaySummary]


@dataclass
class PlanResult:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    network: str = ""
    stage1: StageOutcome | None = None
    stage2: StageOutcome | None = None
    baseline: list[DaySummary] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def sess(self) -> list[BessRating]:
        if self.stage1 is None:
            raise SequencingError("stage-1 result missing: run plan-stage1 first")
        return [rating_from_dict(d) for d in self.stage1.designs]

    def mess(self) -> list[BessRating]:
        return [] if self.stage2 is None else [rating_from_dict(d) for d in self.stage2.designs]

    def days(self, layout: str | None = None) -> list[DaySummary]:
        out = list(self.baseline)
        for st in (self.stage1, self.stage2):
            if st is not None:
                out += st.days
        return [d for d in out if layout is None or d.layout == layout]


def _finite(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)  # json has no inf/nan
    return x


def _encode(obj):
    if dataclasses.is_dataclass(obj):
        return {k: _encode(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return _finite(obj.item())
    return _finite(obj)


def _decode_num(x):
    if isinstance(x, str) and x in ("inf", "-inf", "nan"):
        return float(x)
    if isinstance(x, dict):
        return {k: _decode_num(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_decode_num(v) for v in x]
    return x


def _day(d: dict) -> DaySummary:
    return DaySummary(**d)


def _stage(d: dict | None) -> StageOutcome | None:
    if d is None:
        return None
    d = dict(d)
    d["days"] = [_day(x) for x in d["days"]]
    return StageOutcome(**d)


def save_result(res: PlanResult, path: str | Path) -> None:
    Path(path).write_text(json.dumps(_encode(res), indent=1, sort_keys=True))


def load_result(path: str | Path) -> PlanResult:
    doc = _decode_num(json.loads(Path(path).read_text()))
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{path}: unsupported result schema {doc.get('schema_version')}")
    return PlanResult(
        schema_version=doc["schema_version"],
        seed=doc["seed"],
        network=doc["network"],
        stage1=_stage(doc.get("stage1")),
        stage2=_stage(doc.get("stage2")),
        baseline=[_day(x) for x in doc.get("baseline", [])],
        notes=list(doc.get("notes", [])),
    )


# ---------------------------------------------------------------------------
# orchestration


def _trace(sr: SearchResult) -> list[dict[str, float]]:
    return [dataclasses.asdict(h) for h in sr.history]


def _outcome(layout: LayoutResult, sr: SearchResult | None, designs, net, tag) -> StageOutcome:
    rep: CostReport | None = layout.report
    return StageOutcome(
        designs=[rating_to_dict(r) for r in designs],
        fitness=layout.fitness,
        feasible=layout.feasible,
        report=rep.as_row() if rep else {},
        per_device=rep.per_device if rep else {},
        lives=dict(layout.lives),
        trace=_trace(sr) if sr else [],
        evaluations=sr.evaluations if sr else 0,
        days=[summarize(s, net, tag) for s in layout.solutions],
    )


def baseline_days(ctx: EvalContext) -> list[DaySummary]:
    ctx.baseline_loss_cost()
    return [summarize(ctx.baseline[s.id], ctx.net, "baseline") for s in ctx.scenarios]


def _stage1_seeds(p: Stage1Problem) -> list[np.ndarray]:
    sp = p.space
    mid = 0.5 * (sp.lower + sp.upper)
    mid[3::4] = 1
    top = sp.upper.copy()
    top[2::4] = 0.5 * (p.soc_min + p.soc_max)
    return [p.zero(), p.repair(mid), p.repair(top)]


def _stage2_seeds(p: Stage2Problem) -> list[np.ndarray]:
    sp = p.space
    top = sp.upper.copy()
    top[1::2] = 0.5 * (p.soc_min + p.soc_max)
    return [p.zero(), p.repair(top), p.repair(0.5 * (sp.lower + sp.upper))]


def run_stage1(cfg: RunConfig, ctx: EvalContext | None = None) -> PlanResult:
    ctx = ctx or cfg.context()
    if not any(s.stage == "stage1" for s in ctx.scenarios):
        raise ConfigError("no stage-1 scenarios in the configuration")
    prob = Stage1Problem(ctx)
    base = baseline_days(ctx)
    if prob.space.size:
        sr = ga_sa_search(prob.space, prob, cfg.search, init=_stage1_seeds(prob), repair=prob.repair, jobs=cfg.jobs)
        best = sr.best
    else:
        sr, best = None, np.zeros(0)
    designs = prob.ratings(best)
    layout = evaluate_stage1(ctx, designs)
    res = PlanResult(seed=cfg.search.seed, network=ctx.net.name, baseline=base)
    res.stage1 = _outcome(layout, sr, designs, ctx.net, "stage1")
    if not layout.feasible:
        res.notes.append("stage 1: no layout keeps every stage-1 day within limits")
    return res


def run_stage2(cfg: RunConfig, stage1: PlanResult | None, ctx: EvalContext | None = None) -> PlanResult:
    if stage1 is None or stage1.stage1 is None:
        raise SequencingError("stage-2 planning needs a stage-1 result")
    ctx = ctx or cfg.context()
    event = [s for s in ctx.scenarios if s.stage == "stage2"]
    if not event:
        raise ConfigError("no stage-2 (event) scenario in the configuration")
    sess = stage1.sess()
    prob = Stage2Problem(ctx, sess)
    base = baseline_days(ctx)
    sess_only = evaluate_stage2(ctx, sess, [])
    if prob.space.size:
        sr = ga_sa_search(prob.space, prob, cfg.search, init=_stage2_seeds(prob), repair=prob.repair, jobs=cfg.jobs)
        best = sr.best
    else:
        sr, best = None, np.zeros(0)
    mess = prob.ratings(best)
    layout = evaluate_stage2(ctx, sess, mess)
    res = dataclasses.replace(stage1, baseline=base, notes=list(stage1.notes))
    # stage-1 designs stay untouched; only the event-day views are added
    s1 = dataclasses.replace(stage1.stage1)
    s1.days = [d for d in stage1.stage1.days if d.scenario not in {e.id for e in event}]
    s1.days += [summarize(s, ctx.net, "stage1") for s in sess_only.solutions]
    res.stage1 = s1
    res.stage2 = _outcome(layout, sr, mess, ctx.net, "joint")
    if not layout.feasible:
        res.notes.append("stage 2: no module count keeps the event day within limits")
    return res


def run_plan(cfg: RunConfig) -> PlanResult:
    ctx = cfg.context()
    return run_stage2(cfg, run_stage1(cfg, ctx), ctx)


def revalidate(res: PlanResult, cfg: RunConfig, ctx: EvalContext | None = None, rtol: float = 1e-6) -> list[str]:
    """Re-solve the persisted layouts and compare against the stored objectives."""
    ctx = ctx or cfg.context()
    by_id = {s.id: s for s in ctx.scenarios}
    problems = []
    layouts = {"stage1": res.sess(), "joint": res.sess() + res.mess(), "baseline": []}
    for day in res.days():
        s = by_id.get(day.scenario)
        if s is None or not math.isfinite(day.objective):
            continue
        sol = solve_accounted(ctx, s, layouts[day.layout])
        if abs(sol.objective - day.objective) > rtol * max(1.0, abs(day.objective)):
            problems.append(f"{day.layout}/{day.scenario}: stored {day.objective:.9g}, re-solved {sol.objective:.9g}")
    return problems


def exit_status(res: PlanResult) -> int:
    """0 ok, 3 infeasible, 4 solver budget ran out before any incumbent."""
    stages = [s for s in (res.stage1, res.stage2) if s is not None]
    if any(d.status == NO_SOLUTION for s in stages for d in s.days):
        return 4
    if any(not s.feasible or s.fitness >= INFEASIBLE_FITNESS for s in stages):
        return 3
    return 0


# ---------------------------------------------------------------------------
# reports

DESIGN_COLUMNS = ["stage", "label", "kind", "node", "p_rate_kw", "q_rate_kvar", "e_rate_kwh", "soc0", "n_cess"]
LCC_COLUMNS = ["device", "c_cap", "c_rep", "c_fix", "c_var", "c_dis", "b_arb", "b_loss", "life_years", "net"]
EVENT_COLUMNS = ["device", "c_rent", "c_fix", "c_var", "b_arb", "b_loss", "net"]
VOLTAGE_COLUMNS = ["layout", "scenario", "bus", "hour", "v_pu"]
SOC_COLUMNS = ["layout", "scenario", "device", "hour", "soc", "floor"]
DEVICE_COLUMNS = ["layout", "scenario", "device", "hour", "p_dis_kw", "p_ch_kw", "q_kvar", "p_hot_kw", "p_cool_kw", "x_vent", "t_cess_k", "t_bar_k"]
VIOLATION_COLUMNS = ["layout", "scenario", "status", "voltage", "current", "socr_gap", "penalty_slack"]
TRACE_COLUMNS = ["generation", "best", "mean", "temperature"]


def _write(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _cost_rows(stage: StageOutcome | None, cols: Sequence[str]) -> list[list]:
    if stage is None or not stage.report:
        return []
    rows = []
    for label, part in sorted(stage.per_device.items()):
        row = [label]
        for c in cols[1:]:
            if c == "life_years":
                row.append(stage.lives.get(label, ""))
            elif c == "c_rent":
                row.append(part.get("rent", ""))
            elif c in ("b_loss", "net"):
                row.append("")
            else:
                row.append(part.get(c, ""))
        rows.append(row)
    total = ["total"] + [stage.report.get(c, "") if c != "life_years" else "" for c in cols[1:]]
    rows.append(total)
    return rows


def report(res: PlanResult, out: str | Path, plots: bool = False) -> list[Path]:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    files = []

    def emit(name, header, rows):
        p = out / name
        _write(p, header, rows)
        files.append(p)

    designs = []
    for tag, st in (("stage1", res.stage1), ("stage2", res.stage2)):
        for d in st.designs if st else []:
            designs.append([tag, d["label"], d["kind"], d["node"], d["p_rate"], d["q_rate"], d["e_rate"], d["soc0"], d["n_cess"]])
    emit("design.csv", DESIGN_COLUMNS, designs)
    emit("lcc.csv", LCC_COLUMNS, _cost_rows(res.stage1, LCC_COLUMNS))
    emit("event_cost.csv", EVENT_COLUMNS, _cost_rows(res.stage2, EVENT_COLUMNS))

    volts, socs, devs, viol = [], [], [], []
    for day in res.days():
        viol.append([day.layout, day.scenario, day.status, day.voltage_violations, day.current_violations, day.socr_gap, day.penalty_slack])
        for bus, series in day.voltages.items():
            volts += [[day.layout, day.scenario, bus, t, v] for t, v in enumerate(series)]
        for label, rec in day.devices.items():
            socs += [[day.layout, day.scenario, label, t, s, rec["floor"][t - 1] if t else ""] for t, s in enumerate(rec["soc"])]
            n = len(rec["p_dis_kw"])
            for t in range(n):
                row = [day.layout, day.scenario, label, t]
                for k in ("p_dis_kw", "p_ch_kw", "q_kvar", "p_hot", "p_cool", "x_vent", "t_cess", "t_bar"):
                    row.append(rec[k][t] if k in rec else "")
                devs.append(row)
    emit("voltages.csv", VOLTAGE_COLUMNS, volts)
    emit("soc.csv", SOC_COLUMNS, socs)
    emit("devices.csv", DEVICE_COLUMNS, devs)
    emit("violations.csv", VIOLATION_COLUMNS, viol)
    for tag, st in (("stage1", res.stage1), ("stage2", res.stage2)):
        if st is not None:
            emit(f"trace_{tag}.csv", TRACE_COLUMNS, [[h["generation"], h["best_ever"], h["mean"], h["temperature"]] for h in st.trace])
    if plots:
        files += _plots(res, out)
    return files


def _plots(res: PlanResult, out: Path) -> list[Path]:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib not installed; skipping plots")
        return []
    files = []
    for day in res.days():
        if not day.voltages:
            continue
        fig, ax = plt.subplots(figsize=(7, 4))
        for bus, v in day.voltages.items():
            ax.plot(range(1, len(v) + 1), v, lw=0.8)
        ax.set_xlabel("hour")
        ax.set_ylabel("voltage (p.u.)")
        ax.set_title(f"{day.layout} / {day.scenario}")
        p = out / f"voltage_{day.layout}_{day.scenario}.png"
        fig.savefig(p, dpi=100)
        plt.close(fig)
        files.append(p)
    return files
