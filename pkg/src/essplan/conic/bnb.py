"""Best-first branch and bound over continuous conic relaxations."""
from __future__ import annotations

import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .backends import INFEASIBLE, OPTIMAL, UNBOUNDED, ConicBackend, get_backend
from .program import ConicProgram, StandardForm

log = logging.getLogger(__name__)

# result statuses
SOLVED = "optimal"
LIMIT = "limit"  # budget hit, incumbent returned
NO_SOLUTION = "no_solution"  # budget hit, nothing feasible found
INFEASIBLE_STATUS = "infeasible"
UNBOUNDED_STATUS = "unbounded"


@dataclass(frozen=True)
class BnbOptions:
    mip_gap: float = 1e-3
    node_limit: int = 5000
    time_limit: float | None = None  # seconds
    int_tol: float = 1e-6
    backend: str = "clarabel"
    heuristic_every: int = 25  # re-run the rounding heuristic every k nodes
    gap_floor: float = 1.0  # denominator floor of the relative gap, objective units


@dataclass
class MisocpResult:
    status: str
    x: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes: int
    root_objective: float
    solve_time: float
    hint: list[str] = field(default_factory=list)
    incumbent_source: str = ""

    @property
    def has_solution(self) -> bool:
        return self.x is not None


def relative_gap(incumbent: float, bound: float, floor: float = 1.0) -> float:
    if not np.isfinite(incumbent):
        return np.inf
    return max(0.0, incumbent - bound) / max(abs(incumbent), floor)


def infeasibility_hint(sf: StandardForm, z: np.ndarray | None, top: int = 3) -> list[str]:
    """Constraint blocks carrying most of a Farkas certificate's weight."""
    if z is None or z.size != sf.b.size:
        return []
    weight: dict[str, float] = {}
    for name, s, e in sf.row_names:
        if e > s:
            weight[name] = weight.get(name, 0.0) + float(np.abs(z[s:e]).sum())
    ranked = sorted(weight.items(), key=lambda kv: -kv[1])
    tot = sum(weight.values()) or 1.0
    return [f"{name} ({w / tot:.0%})" for name, w in ranked[:top] if w > 0]


class _Solver:
    def __init__(self, prog: ConicProgram, backend: ConicBackend):
        self.prog = prog
        self.backend = backend
        self.solves = 0

    def __call__(self, lb: np.ndarray, ub: np.ndarray):
        sf = self.prog.standard_form(lb, ub)
        res = self.backend.solve(sf)
        self.solves += 1
        x = None
        if res.status == OPTIMAL:
            x = sf.fixed_value.copy()
            x[sf.free] = res.x
        return res, x, sf


def _fractional(x: np.ndarray, idx: np.ndarray, tol: float) -> np.ndarray:
    v = x[idx]
    return idx[np.abs(v - np.round(v)) > tol]


class _Repair:
    """Turn a relaxed point into an integral one without moving continuous values.

    Binaries carry no objective weight in these models, so when a rounded
    point still satisfies every row it has the relaxation's objective and the
    node is solved. Otherwise the binaries sitting in violated rows are the
    ones worth branching on.
    """

    def __init__(self, prog: ConicProgram, rounder, bins: np.ndarray, tol: float):
        A, b, n_zero, n_nonneg, _, _ = prog._structural()
        top = n_zero + n_nonneg
        self.A = A[:top].tocsr()
        self.b = b[:top]
        self.n_zero = n_zero
        self.rounder = rounder
        self.bins = bins
        self.tol = tol
        self.is_bin = np.zeros(prog.n, dtype=bool)
        self.is_bin[bins] = True

    def __call__(self, x: np.ndarray, lb: np.ndarray, ub: np.ndarray):
        """(integral point or None, {binary: violation it is tied to})."""
        xr = x.copy()
        if self.rounder is not None:
            xr[self.bins] = self.rounder(x)[self.bins]
        else:
            xr[self.bins] = np.round(x[self.bins])
        xr[self.bins] = np.clip(xr[self.bins], lb[self.bins], ub[self.bins])
        s = self.b - self.A @ xr
        scale = 1.0 + np.abs(self.b)
        bad = np.zeros(s.size, dtype=bool)
        bad[: self.n_zero] = np.abs(s[: self.n_zero]) > self.tol * scale[: self.n_zero]
        bad[self.n_zero :] = s[self.n_zero :] < -self.tol * scale[self.n_zero :]
        if not bad.any():
            return xr, {}
        viol = np.abs(s)
        viol[self.n_zero :] = np.maximum(-s[self.n_zero :], 0.0)
        viol[~bad] = 0.0
        # weight each binary by the violation of the rows it appears in
        score = np.abs(self.A).T @ viol
        cols = np.flatnonzero((score > 0) & self.is_bin)
        return None, dict(zip(cols.tolist(), score[cols].tolist()))


def _pick(x: np.ndarray, cand: np.ndarray, classes: np.ndarray, score: dict | None = None) -> int:
    """Lowest branching class first, then the variable behind the largest
    rounding violation (most fractional when there is no score)."""
    cls = classes[cand]
    cand = cand[cls == cls.min()]
    if score:
        w = np.array([score.get(int(j), 0.0) for j in cand])
        if w.max() > 0:
            return int(cand[np.argmax(w)])
    dist = np.abs(x[cand] - 0.5)
    return int(cand[np.argmin(dist)])


def solve_misocp(prog: ConicProgram, opts: BnbOptions = BnbOptions(), backend: ConicBackend | None = None) -> MisocpResult:
    t0 = time.perf_counter()
    backend = backend or get_backend(opts.backend)
    solve = _Solver(prog, backend)
    lb0 = np.asarray(prog.lb, dtype=float)
    ub0 = np.asarray(prog.ub, dtype=float)
    bins = prog.binary_idx
    classes = np.asarray(prog.branch_class, dtype=int)
    rounder = prog.meta.get("rounder")

    def elapsed():
        return time.perf_counter() - t0

    def out_of_time():
        return opts.time_limit is not None and elapsed() > opts.time_limit

    res, x, sf = solve(lb0, ub0)
    if res.status == INFEASIBLE:
        return MisocpResult(INFEASIBLE_STATUS, None, np.inf, np.inf, np.inf, 1, np.inf, elapsed(), infeasibility_hint(sf, res.z))
    if res.status == UNBOUNDED:
        return MisocpResult(UNBOUNDED_STATUS, None, -np.inf, -np.inf, np.inf, 1, -np.inf, elapsed())
    if x is None:
        return MisocpResult(NO_SOLUTION, None, np.nan, -np.inf, np.inf, 1, np.nan, elapsed(), ["root relaxation failed numerically"])

    root_obj = res.objective
    inc_x, inc_obj, source = None, np.inf, ""

    repair = _Repair(prog, rounder, bins, 1e-6)

    def objective(xv):
        return float(prog.c @ xv + prog.c0)

    def settle(xv, lb, ub):
        """Integral point reachable from xv at no cost, else branching candidates."""
        frac = _fractional(xv, bins, opts.int_tol)
        if frac.size == 0:
            xv = xv.copy()
            xv[bins] = np.round(xv[bins])
            return xv, (frac, {})
        xr, score = repair(xv, lb, ub)
        if xr is not None:
            return xr, (frac, {})
        cand = np.intersect1d(frac, np.fromiter(score, dtype=np.int64, count=len(score)))
        return None, (cand if cand.size else frac, score)

    def try_rounding(xv, lb, ub):
        nonlocal inc_x, inc_obj, source
        if rounder is None or bins.size == 0:
            return
        r = rounder(xv)
        lbr, ubr = lb.copy(), ub.copy()
        lbr[bins] = np.clip(r[bins], lb[bins], ub[bins])
        ubr[bins] = lbr[bins]
        rr, xr, _ = solve(lbr, ubr)
        if xr is not None and rr.objective < inc_obj:
            inc_x, inc_obj, source = xr, rr.objective, "rounding"

    xr, cand = settle(x, lb0, ub0)
    if xr is not None:
        # the relaxation optimum is attainable with integral indicators
        obj = objective(xr)
        return MisocpResult(SOLVED, xr, obj, root_obj, relative_gap(obj, root_obj, opts.gap_floor), 1, root_obj, elapsed(), incumbent_source="root")

    try_rounding(x, lb0, ub0)
    counter = itertools.count()
    heap = [(root_obj, next(counter), lb0, ub0, x, cand)]
    nodes = 1
    bound = root_obj
    while heap:
        bound = heap[0][0]
        if relative_gap(inc_obj, bound, opts.gap_floor) <= opts.mip_gap:
            break
        if nodes >= opts.node_limit or out_of_time():
            break
        node_obj, _, lb, ub, xn, cand = heapq.heappop(heap)
        if node_obj >= inc_obj:
            continue
        j = _pick(xn, cand[0], classes, cand[1])
        for val in (0.0, 1.0):
            lbc, ubc = lb.copy(), ub.copy()
            lbc[j] = ubc[j] = val
            rc, xc, _ = solve(lbc, ubc)
            nodes += 1
            if xc is None or rc.objective >= inc_obj:
                continue
            xr, cc = settle(xc, lbc, ubc)
            if xr is not None:
                obj = objective(xr)
                if obj < inc_obj:
                    inc_x, inc_obj, source = xr, obj, "branching"
            else:
                heapq.heappush(heap, (rc.objective, next(counter), lbc, ubc, xc, cc))
        if opts.heuristic_every and nodes % opts.heuristic_every < 2:
            try_rounding(xn, lb, ub)
    else:
        bound = inc_obj
    if heap:
        bound = min(bound, heap[0][0])
    bound = min(bound, inc_obj)
    gap = relative_gap(inc_obj, bound, opts.gap_floor)
    log.debug("bnb: %d nodes, %d solves, incumbent %.6g, bound %.6g", nodes, solve.solves, inc_obj, bound)
    if inc_x is None:
        status = INFEASIBLE_STATUS if not heap else NO_SOLUTION
        return MisocpResult(status, None, np.inf, bound, np.inf, nodes, root_obj, elapsed())
    status = SOLVED if gap <= opts.mip_gap else LIMIT
    return MisocpResult(status, inc_x, inc_obj, bound, gap, nodes, root_obj, elapsed(), incumbent_source=source)
