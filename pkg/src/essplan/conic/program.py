"""Vectorised conic program builder.

An :class:`Affine` is a column of ``m`` affine expressions in the program's
variables; constraints are added row-blockwise so a 24-hour model is built
with a few hundred numpy operations rather than tens of thousands of Python
objects. The compiled standard form is

    minimise  c'x + c0   s.t.  b - A x  in  K = {0}^z x R+^l x Q^{q1} x ...

which maps directly onto Clarabel and, after splitting the equality block,
onto CVXOPT's ``conelp``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class Affine:
    """``m`` affine rows; every term is a pair of (m, k) index/coefficient arrays."""

    __slots__ = ("m", "terms", "const")
    __array_ufunc__ = None  # make ndarray (op) Affine defer to the reflected operator

    def __init__(self, m: int, terms=None, const=None):
        self.m = int(m)
        self.terms: list[tuple[np.ndarray, np.ndarray]] = terms or []
        self.const = np.zeros(self.m) if const is None else np.asarray(const, dtype=float)

    # -- construction --------------------------------------------------------
    @classmethod
    def constant(cls, values, m: int | None = None) -> "Affine":
        values = np.asarray(values, dtype=float)
        if values.ndim == 0:
            values = np.full(1 if m is None else m, float(values))
        return cls(values.size, [], values.ravel().copy())

    @classmethod
    def variables(cls, idx: np.ndarray) -> "Affine":
        idx = np.asarray(idx, dtype=np.int64).reshape(-1, 1)
        return cls(idx.shape[0], [(idx, np.ones(idx.shape))])

    # -- algebra -------------------------------------------------------------
    def _lift(self, other) -> "Affine":
        if isinstance(other, Affine):
            return other
        return Affine.constant(other, self.m)

    def _broadcast(self, m: int) -> "Affine":
        if self.m == m:
            return self
        if self.m != 1:
            raise ValueError(f"cannot broadcast {self.m} rows to {m}")
        return self.take(np.zeros(m, dtype=np.int64))

    def __add__(self, other) -> "Affine":
        other = self._lift(other)
        m = max(self.m, other.m)
        a, b = self._broadcast(m), other._broadcast(m)
        return Affine(m, a.terms + b.terms, a.const + b.const)

    __radd__ = __add__

    def __neg__(self) -> "Affine":
        return Affine(self.m, [(i, -c) for i, c in self.terms], -self.const)

    def __sub__(self, other) -> "Affine":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "Affine":
        return self._lift(other) + (-self)

    def __mul__(self, k) -> "Affine":
        k = np.asarray(k, dtype=float)
        if k.ndim == 0:
            return Affine(self.m, [(i, c * k) for i, c in self.terms], self.const * k)
        k = k.ravel()
        if k.size != self.m:
            if self.m == 1:
                return self._broadcast(k.size) * k
            raise ValueError("row-wise scale has wrong length")
        return Affine(self.m, [(i, c * k[:, None]) for i, c in self.terms], self.const * k)

    __rmul__ = __mul__

    def __truediv__(self, k) -> "Affine":
        return self * (1.0 / np.asarray(k, dtype=float))

    def take(self, rows) -> "Affine":
        rows = np.asarray(rows, dtype=np.int64)
        return Affine(rows.size, [(i[rows], c[rows]) for i, c in self.terms], self.const[rows])

    def __getitem__(self, key) -> "Affine":
        return self.take(np.atleast_1d(np.arange(self.m)[key]))

    def roll(self, shift: int) -> "Affine":
        """Row t of the result is row (t - shift) mod m (numpy.roll semantics)."""
        return self.take(np.roll(np.arange(self.m), shift))

    def sum(self) -> "Affine":
        return Affine(1, [(i.reshape(1, -1), c.reshape(1, -1)) for i, c in self.terms], np.array([self.const.sum()]))

    def dot(self, w) -> "Affine":
        return (self * np.asarray(w, dtype=float)).sum()

    # -- evaluation ----------------------------------------------------------
    def coo(self):
        rows, cols, vals = [], [], []
        for i, c in self.terms:
            r = np.broadcast_to(np.arange(self.m)[:, None], i.shape)
            mask = (c != 0.0) & (i >= 0)
            rows.append(r[mask])
            cols.append(i[mask])
            vals.append(c[mask])
        if not rows:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0)
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)

    def value(self, x: np.ndarray) -> np.ndarray:
        out = self.const.copy()
        for i, c in self.terms:
            out += np.where(i >= 0, c * x[np.maximum(i, 0)], 0.0).sum(axis=1)
        return out

    def __len__(self) -> int:
        return self.m

    def __repr__(self) -> str:
        return f"Affine(m={self.m}, terms={len(self.terms)})"


def hstack(exprs: Sequence[Affine]) -> Affine:
    """Concatenate rows of several expressions."""
    exprs = list(exprs)
    m = sum(e.m for e in exprs)
    terms = []
    offset = 0
    for e in exprs:
        for i, c in e.terms:
            ii = np.full((m, i.shape[1]), -1, dtype=np.int64)
            cc = np.zeros((m, i.shape[1]))
            ii[offset : offset + e.m] = i
            cc[offset : offset + e.m] = c
            terms.append((ii, cc))
        offset += e.m
    const = np.concatenate([e.const for e in exprs]) if exprs else np.zeros(0)
    return Affine(m, terms, const)


def total(exprs: Iterable[Affine]) -> Affine:
    out = None
    for e in exprs:
        out = e if out is None else out + e
    return out if out is not None else Affine.constant(0.0)


@dataclass
class Block:
    name: str
    kind: str  # "zero", "nonneg", "soc"
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    rhs: np.ndarray  # b, so that s = b - A x
    m: int
    cone_dim: int = 0  # for soc blocks, dimension of every cone


@dataclass
class StandardForm:
    c: np.ndarray
    c0: float
    A: sp.csc_matrix
    b: np.ndarray
    n_zero: int
    n_nonneg: int
    soc_dims: list[int]
    row_names: list[tuple[str, int, int]]  # (block name, start, stop)
    free: np.ndarray  # indices of original variables kept as columns
    fixed_value: np.ndarray  # full-length x with fixed entries set


@dataclass
class ConicProgram:
    """Linear objective over linear, second-order-cone and rotated-cone rows."""

    name: str = "program"
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    binary: list = field(default_factory=list)
    branch_class: list = field(default_factory=list)
    var_names: dict = field(default_factory=dict)
    blocks: list = field(default_factory=list)
    c: np.ndarray | None = None
    c0: float = 0.0
    meta: dict = field(default_factory=dict)

    # -- variables -----------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.lb)

    def var(self, name: str, m: int, lb=-np.inf, ub=np.inf, binary: bool = False, branch_class: int = 0) -> Affine:
        if name in self.var_names:
            raise ValueError(f"variable block {name!r} already declared")
        start = self.n
        idx = np.arange(start, start + m, dtype=np.int64)
        self.lb.extend(np.broadcast_to(np.asarray(lb, dtype=float), (m,)).tolist())
        self.ub.extend(np.broadcast_to(np.asarray(ub, dtype=float), (m,)).tolist())
        if binary:
            self.lb[start:] = [max(0.0, v) for v in self.lb[start:]]
            self.ub[start:] = [min(1.0, v) for v in self.ub[start:]]
        self.binary.extend([binary] * m)
        self.branch_class.extend([branch_class] * m)
        self.var_names[name] = idx
        return Affine.variables(idx)

    def expr(self, name: str) -> Affine:
        return Affine.variables(self.var_names[name])

    def set_bounds(self, name: str, lb=None, ub=None) -> None:
        idx = self.var_names[name]
        for k, j in enumerate(idx):
            if lb is not None:
                self.lb[j] = float(np.broadcast_to(lb, idx.shape)[k])
            if ub is not None:
                self.ub[j] = float(np.broadcast_to(ub, idx.shape)[k])

    @property
    def binary_idx(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.binary, dtype=bool))

    # -- constraints ---------------------------------------------------------
    def _add(self, name: str, kind: str, expr: Affine, cone_dim: int = 0) -> None:
        """Register rows requiring ``expr`` to lie in the cone: s = b - A x = expr."""
        rows, cols, vals = expr.coo()
        self.blocks.append(Block(name, kind, rows, cols, -vals, expr.const.copy(), expr.m, cone_dim))

    def eq(self, expr: Affine, name: str = "eq") -> None:
        """expr == 0"""
        self._add(name, "zero", expr)

    def le(self, expr: Affine, name: str = "le") -> None:
        """expr <= 0"""
        self._add(name, "nonneg", -expr)

    def ge(self, expr: Affine, name: str = "ge") -> None:
        """expr >= 0"""
        self._add(name, "nonneg", expr)

    def soc(self, t: Affine, xs: Sequence[Affine], name: str = "soc") -> None:
        """||(x1_r, x2_r, ...)||_2 <= t_r for every row r."""
        m = max([t.m] + [x.m for x in xs])
        parts = [t._broadcast(m)] + [x._broadcast(m) for x in xs]
        k = len(parts)
        # cone r occupies rows r*k .. r*k+k-1 holding (t_r, x1_r, ...)
        order = np.arange(m * k).reshape(k, m).T.ravel()
        self._add(name, "soc", hstack(parts).take(order), cone_dim=k)

    def rsoc(self, u: Affine, w: Affine, xs: Sequence[Affine], name: str = "rsoc") -> None:
        """2 u_r w_r >= ||x_r||^2 with u, w >= 0."""
        root2 = np.sqrt(2.0)
        self.soc(u + w, [x * root2 for x in xs] + [u - w], name=name)

    def minimize(self, expr: Affine) -> None:
        if expr.m != 1:
            expr = expr.sum()
        c = np.zeros(self.n)
        for i, coef in expr.terms:
            mask = i >= 0
            np.add.at(c, i[mask], coef[mask])
        self.c = c
        self.c0 = float(expr.const[0])

    # -- compilation ---------------------------------------------------------
    def _structural(self):
        cache = self.meta.get("_structural")
        if cache is not None and cache[0] == (len(self.blocks), self.n):
            return cache[1]
        order = [b for b in self.blocks if b.kind == "zero"]
        order += [b for b in self.blocks if b.kind == "nonneg"]
        order += [b for b in self.blocks if b.kind == "soc"]
        rows, cols, vals, rhs, names = [], [], [], [], []
        offset = 0
        soc_dims: list[int] = []
        for b in order:
            rows.append(b.rows + offset)
            cols.append(b.cols)
            vals.append(b.vals)
            rhs.append(b.rhs)
            names.append((b.name, offset, offset + b.m))
            if b.kind == "soc":
                soc_dims.extend([b.cone_dim] * (b.m // b.cone_dim))
            offset += b.m
        A = sp.csc_matrix(
            (np.concatenate(vals) if vals else [], (np.concatenate(rows) if rows else [], np.concatenate(cols) if cols else [])),
            shape=(offset, self.n),
        )
        b = np.concatenate(rhs) if rhs else np.zeros(0)
        n_zero = sum(bl.m for bl in order if bl.kind == "zero")
        n_nonneg = sum(bl.m for bl in order if bl.kind == "nonneg")
        out = (A, b, n_zero, n_nonneg, soc_dims, names)
        self.meta["_structural"] = ((len(self.blocks), self.n), out)
        return out

    def standard_form(self, lb=None, ub=None, fix_tol: float = 1e-12) -> StandardForm:
        """Compile with (possibly overridden) bounds; fixed variables are substituted out."""
        if self.c is None:
            self.minimize(Affine.constant(0.0))
        lb = np.asarray(self.lb if lb is None else lb, dtype=float)
        ub = np.asarray(self.ub if ub is None else ub, dtype=float)
        if np.any(lb > ub + fix_tol):
            raise ValueError("inconsistent bounds")
        A, b, n_zero, n_nonneg, soc_dims, names = self._structural()
        fixed = np.abs(ub - lb) <= fix_tol
        free = np.flatnonzero(~fixed)
        xfix = np.zeros(self.n)
        xfix[fixed] = lb[fixed]
        b = b - A @ xfix
        A_free = A[:, free]
        c0 = self.c0 + float(self.c @ xfix)

        # bound rows for the remaining variables go into the nonneg block
        lbf, ubf = lb[free], ub[free]
        lo = np.flatnonzero(np.isfinite(lbf))
        hi = np.flatnonzero(np.isfinite(ubf))
        nb = lo.size + hi.size
        B = sp.csc_matrix(
            (
                np.concatenate([-np.ones(lo.size), np.ones(hi.size)]),
                (np.arange(nb), np.concatenate([lo, hi])),
            ),
            shape=(nb, free.size),
        )
        bb = np.concatenate([-lbf[lo], ubf[hi]])
        top = n_zero + n_nonneg
        A_out = sp.vstack([A_free[:top], B, A_free[top:]], format="csc")
        b_out = np.concatenate([b[:top], bb, b[top:]])
        row_names = []
        for name, s, e in names:
            if s >= top:
                s, e = s + nb, e + nb
            row_names.append((name, s, e))
        row_names.append(("bounds", top, top + nb))
        return StandardForm(
            c=self.c[free],
            c0=c0,
            A=A_out,
            b=b_out,
            n_zero=n_zero,
            n_nonneg=n_nonneg + nb,
            soc_dims=soc_dims,
            row_names=row_names,
            free=free,
            fixed_value=xfix,
        )

    # -- diagnostics ---------------------------------------------------------
    def residuals(self, x: np.ndarray) -> dict[str, float]:
        """Worst violation per constraint block at x (cone rows: t - ||x||)."""
        out: dict[str, float] = {}
        for b in self.blocks:
            Ax = np.zeros(b.m)
            np.add.at(Ax, b.rows, b.vals * x[b.cols])
            s = b.rhs - Ax
            if b.kind == "zero":
                v = float(np.max(np.abs(s))) if b.m else 0.0
            elif b.kind == "nonneg":
                v = float(max(0.0, -np.min(s))) if b.m else 0.0
            else:
                cones = s.reshape(-1, b.cone_dim)
                v = float(max(0.0, np.max(np.linalg.norm(cones[:, 1:], axis=1) - cones[:, 0]))) if b.m else 0.0
            out[b.name] = max(out.get(b.name, 0.0), v)
        lb, ub = np.asarray(self.lb), np.asarray(self.ub)
        out["bounds"] = float(max(0.0, np.max(np.concatenate([[0.0], lb - x, x - ub]))))
        return out

    def counts(self) -> dict[str, int]:
        soc = sum(b.m // b.cone_dim for b in self.blocks if b.kind == "soc")
        return {
            "variables": self.n,
            "binaries": int(np.sum(self.binary)),
            "equalities": sum(b.m for b in self.blocks if b.kind == "zero"),
            "inequalities": sum(b.m for b in self.blocks if b.kind == "nonneg"),
            "cones": soc,
        }


def write_cbf(prog: ConicProgram, path: str | Path) -> None:
    """Dump in Conic Benchmark Format (version 3) for cross-checking elsewhere.

    Variable bounds are written as linear rows; binaries are flagged INT with
    their [0, 1] rows, which is the CBF convention for 0-1 variables.
    """
    sf = prog.standard_form(lb=np.where(np.asarray(prog.binary), 0.0, prog.lb), ub=np.where(np.asarray(prog.binary), 1.0, prog.ub))
    n = sf.free.size
    A = sf.A.tocoo()
    lines = ["VER", "3", "", "OBJSENSE", "MIN", "", "VAR", f"{n} 1", f"F {n}", ""]
    ints = [k for k, j in enumerate(sf.free) if prog.binary[j]]
    if ints:
        lines += ["INT", str(len(ints))] + [str(k) for k in ints] + [""]
    cones = []
    if sf.n_zero:
        cones.append(f"L= {sf.n_zero}")
    if sf.n_nonneg:
        cones.append(f"L+ {sf.n_nonneg}")
    cones += [f"Q {d}" for d in sf.soc_dims]
    lines += ["CON", f"{sf.A.shape[0]} {len(cones)}"] + cones + [""]
    nz = np.flatnonzero(sf.c)
    if nz.size:
        lines += ["OBJACOORD", str(nz.size)] + [f"{k} {sf.c[k]!r}" for k in nz] + [""]
    if sf.c0:
        lines += ["OBJBCOORD", repr(sf.c0), ""]
    # CBF rows are g + F x in K; ours are b - A x in K
    lines += ["ACOORD", str(A.nnz)] + [f"{i} {j} {-v!r}" for i, j, v in zip(A.row, A.col, A.data)] + [""]
    bnz = np.flatnonzero(sf.b)
    lines += ["BCOORD", str(bnz.size)] + [f"{i} {sf.b[i]!r}" for i in bnz] + [""]
    Path(path).write_text("\n".join(lines))
