"""Continuous conic solvers behind a common interface.

Both backends are primal-dual interior-point methods. Clarabel is the
default; CVXOPT's ``conelp`` is kept as an independent second opinion.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
import scipy.sparse as sp

from .program import StandardForm

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
FAILED = "failed"


@dataclass
class ConicResult:
    status: str
    x: np.ndarray | None  # free-variable vector (StandardForm.free ordering)
    z: np.ndarray | None  # cone duals / infeasibility certificate
    objective: float
    iterations: int = 0
    solve_time: float = 0.0


class ConicBackend(Protocol):
    name: str

    def solve(self, sf: StandardForm) -> ConicResult: ...


class ClarabelBackend:
    name = "clarabel"

    def __init__(self, tol: float = 1e-8, max_iter: int = 200, **settings):
        self.tol = tol
        self.max_iter = max_iter
        self.settings = settings

    def solve(self, sf: StandardForm) -> ConicResult:
        import clarabel

        n = sf.c.size
        cones = []
        if sf.n_zero:
            cones.append(clarabel.ZeroConeT(sf.n_zero))
        if sf.n_nonneg:
            cones.append(clarabel.NonnegativeConeT(sf.n_nonneg))
        cones.extend(clarabel.SecondOrderConeT(d) for d in sf.soc_dims)
        st = clarabel.DefaultSettings()
        st.verbose = False
        st.max_iter = self.max_iter
        st.tol_gap_abs = self.tol
        st.tol_gap_rel = self.tol
        st.tol_feas = self.tol
        for k, v in self.settings.items():
            setattr(st, k, v)
        P = sp.csc_matrix((n, n))
        solver = clarabel.DefaultSolver(P, sf.c, sf.A, sf.b, cones, st)
        sol = solver.solve()
        status = str(sol.status)
        x = np.asarray(sol.x)
        z = np.asarray(sol.z)
        if status in ("Solved", "AlmostSolved"):
            return ConicResult(OPTIMAL, x, z, float(sf.c @ x) + sf.c0, sol.iterations, sol.solve_time)
        if "PrimalInfeasible" in status:
            return ConicResult(INFEASIBLE, None, z, np.inf, sol.iterations, sol.solve_time)
        if "DualInfeasible" in status:
            return ConicResult(UNBOUNDED, None, None, -np.inf, sol.iterations, sol.solve_time)
        # MaxIterations / NumericalError / InsufficientProgress: accept if the point is usable
        if x.size == n and np.all(np.isfinite(x)) and _primal_residual(sf, x) <= 1e-5:
            return ConicResult(OPTIMAL, x, z, float(sf.c @ x) + sf.c0, sol.iterations, sol.solve_time)
        return ConicResult(FAILED, None, None, np.nan, sol.iterations, sol.solve_time)


class CvxoptBackend:
    name = "cvxopt"

    def __init__(self, tol: float = 1e-8, max_iter: int = 200):
        self.tol = tol
        self.max_iter = max_iter

    def solve(self, sf: StandardForm) -> ConicResult:
        import time

        from cvxopt import matrix, solvers, spmatrix

        def to_cvx(M):
            M = M.tocoo()
            return spmatrix(M.data.tolist(), M.row.tolist(), M.col.tolist(), size=M.shape)

        nz = sf.n_zero
        A_eq, b_eq = sf.A[:nz], sf.b[:nz]
        G, h = sf.A[nz:], sf.b[nz:]
        dims = {"l": sf.n_nonneg, "q": list(sf.soc_dims), "s": []}
        opts = {
            "show_progress": False,
            "abstol": self.tol,
            "reltol": self.tol,
            "feastol": self.tol,
            "maxiters": self.max_iter,
        }
        t0 = time.perf_counter()
        kwargs = {}
        if nz:
            kwargs = {"A": to_cvx(A_eq), "b": matrix(b_eq)}
        sol = solvers.conelp(matrix(sf.c), to_cvx(G), matrix(h), dims, options=opts, **kwargs)
        dt = time.perf_counter() - t0
        status = sol["status"]
        if status == "optimal" or (status == "unknown" and sol["x"] is not None and _usable(sf, sol)):
            x = np.array(sol["x"]).ravel()
            return ConicResult(OPTIMAL, x, np.array(sol["z"]).ravel(), float(sf.c @ x) + sf.c0, sol["iterations"], dt)
        if status == "primal infeasible":
            return ConicResult(INFEASIBLE, None, np.array(sol["z"]).ravel(), np.inf, sol["iterations"], dt)
        if status == "dual infeasible":
            return ConicResult(UNBOUNDED, None, None, -np.inf, sol["iterations"], dt)
        return ConicResult(FAILED, None, None, np.nan, sol.get("iterations", 0), dt)


def _usable(sf: StandardForm, sol) -> bool:
    x = np.array(sol["x"]).ravel()
    return np.all(np.isfinite(x)) and _primal_residual(sf, x) <= 1e-5


def _primal_residual(sf: StandardForm, x: np.ndarray) -> float:
    s = sf.b - sf.A @ x
    worst = 0.0
    if sf.n_zero:
        worst = max(worst, float(np.max(np.abs(s[: sf.n_zero]))))
    top = sf.n_zero + sf.n_nonneg
    if sf.n_nonneg:
        worst = max(worst, float(max(0.0, -np.min(s[sf.n_zero : top]))))
    k = top
    for d in sf.soc_dims:
        cone = s[k : k + d]
        worst = max(worst, float(np.linalg.norm(cone[1:]) - cone[0]))
        k += d
    return worst


_REGISTRY = {"clarabel": ClarabelBackend, "cvxopt": CvxoptBackend}


def get_backend(name: str = "clarabel", **kwargs) -> ConicBackend:
    try:
        return _REGISTRY[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown conic backend {name!r}; choose from {sorted(_REGISTRY)}") from None


def register_backend(name: str, factory) -> None:
    _REGISTRY[name] = factory
