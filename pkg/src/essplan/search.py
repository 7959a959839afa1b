"""Genetic search with annealing acceptance over storage layouts.

Stage 1 genes per stationary site: energy, power, initial SOC and a bit that
switches the PCS reactive capability on. Stage 2 genes per mobile site: the
number of rented modules and their initial SOC.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .economics import EconParams
from .evaluate import EvalContext, LayoutResult, evaluate_stage1, evaluate_stage2
from .network import HybridNetwork, Placement
from .storage import BessRating

MODULE_KWH = 1000.0
MODULE_KW = 1000.0
MODULE_KVAR = 1000.0
CONTAINER_KWH = 1000.0


@dataclass(frozen=True)
class SearchConfig:
    population: int = 24
    generations: int = 60
    crossover: float = 0.8
    mutation: float = 0.1
    elitism: int = 2
    t0_fraction: float = 0.1  # initial temperature relative to the initial best fitness
    cooling: float = 0.95
    seed: int = 0
    sigma: float = 0.1  # Gaussian mutation step, fraction of the gene range
    tournament: int = 2

    def __post_init__(self):
        for name in ("crossover", "mutation"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} rate must lie in [0, 1]")
        if not 0.0 < self.cooling < 1.0:
            raise ValueError("cooling factor must lie in (0, 1)")
        if self.population < 2:
            raise ValueError("population must hold at least two individuals")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must be smaller than the population")
        if self.generations < 0 or self.t0_fraction < 0 or self.sigma <= 0 or self.tournament < 1:
            raise ValueError("generations, t0_fraction, sigma and tournament must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


@dataclass(eq=False)
class GeneSpace:
    names: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    step: np.ndarray  # grid spacing, 0 for continuous genes
    integer: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.step = np.asarray(self.step, dtype=float)
        self.integer = np.asarray(self.integer, dtype=bool)
        n = len(self.names)
        if not all(a.shape == (n,) for a in (self.lower, self.upper, self.step, self.integer)):
            raise ValueError("gene arrays must match the gene names")
        if np.any(self.lower > self.upper):
            raise ValueError("gene lower bound above upper bound")

    @property
    def size(self) -> int:
        return len(self.names)

    def snap(self, v: np.ndarray, down: bool = False) -> np.ndarray:
        v = np.clip(np.asarray(v, dtype=float), self.lower, self.upper)
        grid = self.step > 0
        k = (v[grid] - self.lower[grid]) / self.step[grid]
        k = np.floor(k + 1e-9) if down else np.round(k)
        # round off float noise so equal grid points hash equal in the cache
        v[grid] = np.round(self.lower[grid] + k * self.step[grid], 9)
        v[self.integer] = np.floor(v[self.integer] + 1e-9) if down else np.round(v[self.integer])
        return np.clip(v, self.lower, self.upper)

    def random(self, rng: np.random.Generator) -> np.ndarray:
        return self.snap(rng.uniform(self.lower, self.upper))


@dataclass
class GenerationStats:
    generation: int
    best: float  # best in the current population
    best_ever: float
    mean: float
    temperature: float


@dataclass
class SearchResult:
    best: np.ndarray
    best_fitness: float
    history: list[GenerationStats]
    evaluations: int
    cache_hits: int
    population: list[np.ndarray] = field(default_factory=list)

    @property
    def trace(self) -> list[float]:
        return [h.best_ever for h in self.history]

    def trace_table(self) -> str:
        lines = ["generation\tbest\tmean\ttemperature"]
        for h in self.history:
            lines.append(f"{h.generation}\t{h.best_ever:.10g}\t{h.mean:.10g}\t{h.temperature:.6g}")
        return "\n".join(lines) + "\n"


class FitnessCache:
    """Memoises fitness by gene vector; only the driving process writes to it."""

    def __init__(self, fitness: Callable[[np.ndarray], float], jobs: int = 1):
        self.fitness = fitness
        self.jobs = jobs
        self.table: dict[tuple, float] = {}
        self.hits = 0
        self.calls = 0

    @staticmethod
    def key(v: np.ndarray) -> tuple:
        return tuple(np.round(np.asarray(v, dtype=float), 9).tolist())

    def __call__(self, vecs: Sequence[np.ndarray]) -> np.ndarray:
        keys = [self.key(v) for v in vecs]
        todo: dict[tuple, np.ndarray] = {}
        for k, v in zip(keys, vecs):
            if k in self.table or k in todo:
                self.hits += 1
            else:
                todo[k] = v
        if todo:
            items = list(todo.items())
            if self.jobs > 1 and len(items) > 1:
                with ProcessPoolExecutor(max_workers=self.jobs) as pool:
                    vals = list(pool.map(self.fitness, [v for _, v in items]))
            else:
                vals = [self.fitness(v) for _, v in items]
            self.calls += len(items)
            for (k, _), f in zip(items, vals):
                self.table[k] = float(f)
        return np.array([self.table[k] for k in keys])


def _select(rng: np.random.Generator, fit: np.ndarray, size: int) -> int:
    pick = rng.integers(0, fit.size, size=size)
    return int(pick[np.argmin(fit[pick])])


def _crossover(rng, space: GeneSpace, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u = rng.random(space.size)
    c1 = u * a + (1.0 - u) * b
    c2 = (1.0 - u) * a + u * b
    # whole-value swap for integer genes so counts stay counts
    swap = rng.random(space.size) < 0.5
    c1[space.integer] = np.where(swap, b, a)[space.integer]
    c2[space.integer] = np.where(swap, a, b)[space.integer]
    return c1, c2


def _mutate(rng, space: GeneSpace, v: np.ndarray, rate: float, sigma: float) -> np.ndarray:
    v = v.copy()
    hit = rng.random(space.size) < rate
    noise = rng.normal(0.0, 1.0, space.size) * sigma * (space.upper - space.lower)
    sign = np.where(rng.random(space.size) < 0.5, -1.0, 1.0)
    real = hit & ~space.integer
    v[real] += noise[real]
    ints = hit & space.integer
    v[ints] += sign[ints]
    return v


def ga_sa_search(
    space: GeneSpace,
    fitness: Callable[[np.ndarray], float],
    cfg: SearchConfig = SearchConfig(),
    init: Sequence[np.ndarray] | None = None,
    repair: Callable[[np.ndarray], np.ndarray] | None = None,
    jobs: int = 1,
    cache: FitnessCache | None = None,
) -> SearchResult:
    """Generational GA whose worse offspring survive with probability exp(-delta/T)."""
    rng = np.random.default_rng(cfg.seed)
    fix = repair or space.snap
    evaluate = cache or FitnessCache(fitness, jobs)

    pop = [fix(np.asarray(v, dtype=float)) for v in (init or [])][: cfg.population]
    while len(pop) < cfg.population:
        pop.append(fix(space.random(rng)))
    fit = evaluate(pop)

    best_i = int(np.argmin(fit))
    best, best_fit = pop[best_i].copy(), float(fit[best_i])
    temp = cfg.t0_fraction * abs(best_fit)
    history = [GenerationStats(0, best_fit, best_fit, float(np.mean(fit)), temp)]

    for gen in range(1, cfg.generations + 1):
        order = np.argsort(fit, kind="stable")
        elites = [(pop[i].copy(), fit[i]) for i in order[: cfg.elitism]]
        children, slots = [], []
        while len(children) < cfg.population:
            a = _select(rng, fit, cfg.tournament)
            b = _select(rng, fit, cfg.tournament)
            if rng.random() < cfg.crossover:
                c1, c2 = _crossover(rng, space, pop[a], pop[b])
            else:
                c1, c2 = pop[a].copy(), pop[b].copy()
            children += [fix(_mutate(rng, space, c1, cfg.mutation, cfg.sigma)), fix(_mutate(rng, space, c2, cfg.mutation, cfg.sigma))]
            slots += [a, b]
        children, slots = children[: cfg.population], slots[: cfg.population]
        child_fit = evaluate(children)

        new_pop, new_fit = list(pop), fit.copy()
        for c, cf, s in zip(children, child_fit, slots):
            delta = cf - new_fit[s]
            u = rng.random()
            # u < exp(-delta/T), written so a cold T cannot overflow
            if delta <= 0 or (temp > 0 and (u == 0.0 or delta < -temp * math.log(u))):
                new_pop[s], new_fit[s] = c, cf
        for e, fe in elites:
            if not any(np.array_equal(e, p) for p in new_pop):
                w = int(np.argmax(new_fit))
                new_pop[w], new_fit[w] = e, fe
        pop, fit = new_pop, new_fit

        i = int(np.argmin(fit))
        if fit[i] < best_fit:
            best, best_fit = pop[i].copy(), float(fit[i])
        temp *= cfg.cooling
        history.append(GenerationStats(gen, float(fit[i]), best_fit, float(np.mean(fit)), temp))

    return SearchResult(best, best_fit, history, evaluate.calls, evaluate.hits, pop)


# ---------------------------------------------------------------------------
# stage 1: stationary units


@dataclass(frozen=True)
class SessGene:
    node: int
    e_kwh: float
    p_kw: float
    soc0: float
    q_enable: bool


@dataclass(frozen=True)
class Stage1Chromosome:
    sites: tuple[SessGene, ...]


def investment(e_kwh, p_kw, p: EconParams) -> float:
    return float(np.sum((p.c_e + p.c_b) * np.asarray(e_kwh) + p.c_p * np.asarray(p_kw)))


class Stage1Problem:
    """Gene layout, repair and fitness for sizing the stationary units."""

    def __init__(
        self,
        ctx: EvalContext,
        soc_min: float = 0.1,
        soc_max: float = 0.9,
        e_step: float = 10.0,
        p_step: float = 10.0,
        soc_step: float = 0.01,
    ):
        self.ctx = ctx
        self.sites: list[Placement] = [pl for pl in ctx.net.placements if pl.kind == "SESS"]
        self.soc_min, self.soc_max = soc_min, soc_max
        names, lo, hi, step, integer = [], [], [], [], []
        for pl in self.sites:
            names += [f"E@{pl.node}", f"P@{pl.node}", f"SOC0@{pl.node}", f"Q@{pl.node}"]
            lo += [pl.e_min_kwh, pl.p_min_kw, soc_min, 0]
            hi += [pl.e_max_kwh, pl.p_max_kw, soc_max, 1]
            step += [e_step, p_step, soc_step, 1]
            integer += [False, False, False, True]
        self.space = GeneSpace(tuple(names), lo, hi, step, integer)
        if investment(self.space.lower[0::4], self.space.lower[1::4], ctx.econ) > ctx.econ.budget:
            raise ValueError("the smallest allowed stationary layout already exceeds the budget")

    def decode(self, v: np.ndarray) -> Stage1Chromosome:
        v = np.asarray(v, dtype=float)
        genes = tuple(
            SessGene(pl.node, float(v[4 * k]), float(v[4 * k + 1]), float(v[4 * k + 2]), bool(round(v[4 * k + 3])))
            for k, pl in enumerate(self.sites)
        )
        return Stage1Chromosome(genes)

    def encode(self, c: Stage1Chromosome) -> np.ndarray:
        return np.array([x for g in c.sites for x in (g.e_kwh, g.p_kw, g.soc0, float(g.q_enable))], dtype=float)

    def zero(self) -> np.ndarray:
        return self.repair(np.zeros(self.space.size))

    def repair(self, v: np.ndarray) -> np.ndarray:
        sp = self.space
        v = sp.snap(v)
        e, p = v[0::4], v[1::4]
        p[(e <= 0) & (sp.lower[1::4] <= 0)] = 0.0
        v[1::4] = p
        econ = self.ctx.econ
        cost = investment(e, p, econ)
        if cost > econ.budget:
            scale = econ.budget / cost
            v[0::4] = e * scale
            v[1::4] = p * scale
            v = sp.snap(v, down=True)
        return v

    def feasible(self, v: np.ndarray, tol: float = 1e-6) -> bool:
        sp = self.space
        if np.any(v < sp.lower - tol) or np.any(v > sp.upper + tol):
            return False
        return investment(v[0::4], v[1::4], self.ctx.econ) <= self.ctx.econ.budget * (1 + 1e-12) + tol

    def ratings(self, v: np.ndarray) -> list[BessRating]:
        out = []
        for g, pl in zip(self.decode(v).sites, self.sites):
            if g.e_kwh <= 0:
                continue
            ac = self.ctx.net.bus(g.node).kind == "ac"
            out.append(
                BessRating(
                    node=g.node,
                    e_rate=g.e_kwh,
                    p_rate=g.p_kw,
                    q_rate=g.p_kw if (g.q_enable and ac) else 0.0,
                    s_pcs=g.p_kw,
                    soc_min=self.soc_min,
                    soc_max=self.soc_max,
                    soc0=g.soc0,
                    n_cess=max(1, math.ceil(g.e_kwh / CONTAINER_KWH - 1e-9)),
                    kind="SESS",
                    colocated=pl.colocated,
                )
            )
        return out

    def evaluate(self, v: np.ndarray) -> LayoutResult:
        assert self.feasible(v), "stage-1 chromosome outside its bounds or budget"
        return evaluate_stage1(self.ctx, self.ratings(v))

    def __call__(self, v: np.ndarray) -> float:
        return self.evaluate(v).fitness


# ---------------------------------------------------------------------------
# stage 2: rented modules


@dataclass(frozen=True)
class MessGene:
    node: int
    modules: int
    soc0: float


@dataclass(frozen=True)
class Stage2Chromosome:
    sites: tuple[MessGene, ...]


def mess_rating(node: int, modules: int, soc0: float, net: HybridNetwork, soc_min=0.1, soc_max=0.9) -> BessRating:
    ac = net.bus(node).kind == "ac"
    return BessRating(
        node=node,
        e_rate=MODULE_KWH * modules,
        p_rate=MODULE_KW * modules,
        q_rate=MODULE_KVAR * modules if ac else 0.0,
        s_pcs=MODULE_KW * modules,
        soc_min=soc_min,
        soc_max=soc_max,
        soc0=soc0,
        n_cess=max(1, modules),
        kind="MESS",
    )


class Stage2Problem:
    """Module counts and initial SOC of the rented units, stationary units frozen."""

    def __init__(
        self,
        ctx: EvalContext,
        sess: Sequence[BessRating],
        soc_min: float = 0.1,
        soc_max: float = 0.9,
        soc_step: float = 0.01,
    ):
        self.ctx = ctx
        self.sess = tuple(sess)
        self.sites: list[Placement] = [pl for pl in ctx.net.placements if pl.kind == "MESS"]
        self.soc_min, self.soc_max = soc_min, soc_max
        names, lo, hi, step, integer = [], [], [], [], []
        for pl in self.sites:
            names += [f"N@{pl.node}", f"SOC0@{pl.node}"]
            lo += [0, soc_min]
            hi += [pl.max_modules, soc_max]
            step += [1, soc_step]
            integer += [True, False]
        self.space = GeneSpace(tuple(names), lo, hi, step, integer)

    def decode(self, v: np.ndarray) -> Stage2Chromosome:
        return Stage2Chromosome(
            tuple(MessGene(pl.node, int(round(v[2 * k])), float(v[2 * k + 1])) for k, pl in enumerate(self.sites))
        )

    def encode(self, c: Stage2Chromosome) -> np.ndarray:
        return np.array([x for g in c.sites for x in (float(g.modules), g.soc0)], dtype=float)

    def zero(self) -> np.ndarray:
        return self.repair(np.tile([0.0, 0.5 * (self.soc_min + self.soc_max)], len(self.sites)))

    def rent_commitment(self, v: np.ndarray) -> float:
        """Capacity part of the rent, known before any dispatch is solved."""
        econ = self.ctx.econ
        return econ.c_rent * float(np.sum(v[0::2])) * econ.t_rent

    def repair(self, v: np.ndarray) -> np.ndarray:
        v = self.space.snap(v)
        while self.rent_commitment(v) > self.ctx.econ.event_budget:
            n = v[0::2]
            k = int(np.argmax(n))
            if n[k] <= 0:
                break
            v[2 * k] -= 1
        return v

    def feasible(self, v: np.ndarray, tol: float = 1e-9) -> bool:
        sp = self.space
        inside = np.all(v >= sp.lower - tol) and np.all(v <= sp.upper + tol)
        return bool(inside) and self.rent_commitment(v) <= self.ctx.econ.event_budget + tol

    def ratings(self, v: np.ndarray) -> list[BessRating]:
        return [
            mess_rating(g.node, g.modules, g.soc0, self.ctx.net, self.soc_min, self.soc_max)
            for g in self.decode(v).sites
            if g.modules > 0
        ]

    def evaluate(self, v: np.ndarray) -> LayoutResult:
        assert self.feasible(v), "stage-2 chromosome outside its bounds or budget"
        return evaluate_stage2(self.ctx, self.sess, self.ratings(v), MODULE_KWH, MODULE_KW)

    def __call__(self, v: np.ndarray) -> float:
        return self.evaluate(v).fitness
