"""Command line entry point.

Exit codes: 0 success, 2 invalid input, 3 infeasible plan or dispatch,
4 solver budget exhausted before any incumbent was found.
"""
from __future__ import annotations

import json
import logging
import shutil
import sys
from importlib import resources
from pathlib import Path

import click
import yaml

from .conic.bnb import INFEASIBLE_STATUS, NO_SOLUTION
from .network import NetworkError
from .pipeline import (
    ConfigError,
    SequencingError,
    check_config,
    exit_status,
    load_config,
    load_result,
    rating_from_dict,
    report,
    run_plan,
    run_stage1,
    run_stage2,
    save_result,
    summarize,
)
from .evaluate import solve_accounted, strict

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_BUDGET = 0, 2, 3, 4

log = logging.getLogger("essplan")


def _config(path, seed=None, out=None, jobs=None, mip_gap=None, time_limit=None):
    cfg = load_config(path)
    cfg = cfg.with_overrides(seed=seed, out=Path(out) if out else None, jobs=jobs, mip_gap=mip_gap, time_limit=time_limit)
    check_config(cfg)
    return cfg


def common(f):
    f = click.option("--config", "config", required=True, type=click.Path(dir_okay=False), help="run configuration (YAML)")(f)
    f = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="search seed")(f)
    f = click.option("--out", type=click.Path(file_okay=False), default=None, help="output directory")(f)
    f = click.option("--jobs", type=click.IntRange(1), default=None, help="parallel fitness workers")(f)
    f = click.option("--mip-gap", type=click.FloatRange(0, 1), default=None, help="relative MIP gap")(f)
    f = click.option("--time-limit", type=click.FloatRange(0), default=None, help="per-solve time limit, seconds")(f)
    return f


def _guard(fn):
    """Map library errors onto exit codes."""

    def run(*a, **kw):
        try:
            return fn(*a, **kw)
        except (ConfigError, NetworkError, SequencingError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INVALID)

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


@click.group()
@click.option("-v", "--verbose", count=True)
def main(verbose):
    """Two-stage planning of stationary and rented mobile storage."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")


@main.command()
@common
@_guard
def validate(config, seed, out, jobs, mip_gap, time_limit):
    """Check the configuration, network and scenario files."""
    cfg = _config(config, seed, out, jobs, mip_gap, time_limit)
    ctx = cfg.context()
    click.echo(f"network {ctx.net.name}: {len(ctx.net.buses)} buses, {len(ctx.net.branches)} branches, {len(ctx.net.vscs)} converters")
    for s in ctx.scenarios:
        click.echo(f"scenario {s.id}: {s.stage}, {s.days} days")
    click.echo("ok")


@main.command()
@common
@click.option("--scenario", required=True, help="scenario id")
@click.option("--design", type=click.Path(exists=True, dir_okay=False), default=None, help="YAML/JSON list of ratings or a plan result")
@_guard
def dispatch(config, seed, out, jobs, mip_gap, time_limit, scenario, design):
    """Solve one scenario day for a fixed storage layout."""
    cfg = _config(config, seed, out, jobs, mip_gap, time_limit)
    ctx = cfg.context()
    scen = {s.id: s for s in ctx.scenarios}
    if scenario not in scen:
        raise ConfigError(f"unknown scenario {scenario!r}")
    devices = []
    if design:
        doc = yaml.safe_load(Path(design).read_text())
        if isinstance(doc, dict) and "schema_version" in doc:
            res = load_result(design)
            devices = res.sess() + res.mess()
        else:
            devices = [rating_from_dict(d) for d in doc or []]
    sol = solve_accounted(ctx, scen[scenario], devices)
    day = summarize(sol, ctx.net, "dispatch")
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    path = Path(cfg.out) / f"dispatch_{scenario}.json"
    path.write_text(json.dumps({k: v for k, v in day.__dict__.items()}, indent=1, default=str))
    click.echo(
        f"{scenario}: {sol.status}, objective {sol.objective:.6g}, socr gap {sol.gap:.2e}, "
        f"voltage violations {day.voltage_violations}, slack {sol.penalty_slack:.3g}"
    )
    if sol.status == NO_SOLUTION:
        sys.exit(EXIT_BUDGET)
    if sol.status == INFEASIBLE_STATUS or not strict(sol):
        sys.exit(EXIT_INFEASIBLE)


def _finish(res, cfg, name):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_result(res, out / name)
    files = report(res, out)
    click.echo(f"wrote {out / name} and {len(files)} report files")
    for st_name, st in (("stage 1", res.stage1), ("stage 2", res.stage2)):
        if st is not None:
            click.echo(f"{st_name}: fitness {st.fitness:.6g}, designs {[d['label'] for d in st.designs]}")
    for note in res.notes:
        click.echo(f"note: {note}")
    sys.exit(exit_status(res))


@main.command("plan-stage1")
@common
@_guard
def plan_stage1(config, seed, out, jobs, mip_gap, time_limit):
    """Size the stationary units over the stage-1 days."""
    cfg = _config(config, seed, out, jobs, mip_gap, time_limit)
    _finish(run_stage1(cfg), cfg, "stage1.json")


@main.command("plan-stage2")
@common
@click.option("--stage1", "stage1_path", type=click.Path(dir_okay=False), default=None, help="stage-1 result (default <out>/stage1.json)")
@_guard
def plan_stage2(config, seed, out, jobs, mip_gap, time_limit, stage1_path):
    """Count rented modules for the event day with the stage-1 units fixed."""
    cfg = _config(config, seed, out, jobs, mip_gap, time_limit)
    path = Path(stage1_path) if stage1_path else Path(cfg.out) / "stage1.json"
    if not path.is_file():
        raise SequencingError(f"stage-1 result {path} not found: run plan-stage1 first")
    _finish(run_stage2(cfg, load_result(path)), cfg, "plan.json")


@main.command()
@common
@_guard
def plan(config, seed, out, jobs, mip_gap, time_limit):
    """Run both stages."""
    cfg = _config(config, seed, out, jobs, mip_gap, time_limit)
    _finish(run_plan(cfg), cfg, "plan.json")


@main.command("report")
@click.option("--result", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--plots", is_flag=True, help="also draw voltage plots (needs matplotlib)")
@_guard
def report_cmd(result, out, plots):
    """Write tables and hourly CSVs for a saved result."""
    files = report(load_result(result), out, plots=plots)
    click.echo(f"wrote {len(files)} files to {out}")


@main.command()
@click.argument("name", type=click.Choice(["venue", "overload"]))
@click.argument("dest", type=click.Path(file_okay=False))
def example(name, dest):
    """Copy a bundled synthetic case (network, days, config) to DEST."""
    src = resources.files("essplan") / "data" / name
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    for item in src.iterdir():
        with resources.as_file(item) as p:
            shutil.copy(p, dest / item.name)
    click.echo(f"copied {name} case to {dest}")


if __name__ == "__main__":  # pragma: no cover
    main()
