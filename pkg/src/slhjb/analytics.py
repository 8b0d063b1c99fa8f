"""Closed-form references, interval error norms and refinement studies."""

from __future__ import annotations

import ast
import math
import operator
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr

from .errors import ConfigurationError, InvalidIntervalError, SLHJBError
from .interpolation import Grid
from .problem import TimeMesh
from .quadrature import rule_for
from .solver import ValueSurface, backward_solve

PCHIP_MIN_INTERVALS = 8


def bs_call(s, K, r, sigma, T):
    """Black-Scholes call price; vectorized over ``s``."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    sp = s[pos]
    vol = sigma * math.sqrt(T)
    d1 = (np.log(sp / K) + (r + 0.5 * sigma * sigma) * T) / vol
    d2 = d1 - vol
    out[pos] = sp * ndtr(d1) - K * math.exp(-r * T) * ndtr(d2)
    return float(out) if out.ndim == 0 else out


def sup_error(surface: ValueSurface, reference, s_interval, n=0):
    """Max of ``|V(t_n, x_m) - reference|`` over nodes with ``exp(x_m)`` in ``s_interval``.

    ``reference`` is either a vectorized function of price ``s`` or another
    surface, which is then interpolated at this surface's nodes.
    """
    lo, hi = s_interval
    if not lo <= hi:
        raise InvalidIntervalError(f"interval [{lo}, {hi}] is not ordered")
    if surface.grid.dim != 1:
        raise InvalidIntervalError("price intervals are defined for one-dimensional log-price grids")
    x = surface.grid.axis(0)
    s = np.exp(x)
    sel = (s >= lo) & (s <= hi)
    if not np.any(sel):
        raise InvalidIntervalError(f"no grid node has price in [{lo}, {hi}]")
    V = surface.values[n].reshape(-1)[sel]
    if isinstance(reference, ValueSurface):
        level = _matching_level(surface, reference, n)
        stride = _nested_stride(surface.grid, reference.grid)
        if stride is not None and reference.values[level] is not None:
            ref = reference.values[level].reshape(-1)[::stride][sel]
        else:
            ref = reference.value_at(x[sel], n=level)
    else:
        ref = np.asarray(reference(s[sel]), dtype=float)
    return float(np.max(np.abs(V - ref)))


def _nested_stride(coarse, fine):
    """Index stride when every node of ``coarse`` is a node of ``fine``, else ``None``."""
    if coarse.dim != 1 or coarse.lower != fine.lower or coarse.upper != fine.upper:
        return None
    q, r = divmod(fine.intervals[0], coarse.intervals[0])
    return q if r == 0 else None


def _matching_level(surface, other, n):
    if n == 0:
        return 0
    t = surface.mesh.t(n)
    k = int(round(t / other.mesh.h))
    if not math.isclose(other.mesh.t(k), t, rel_tol=1e-12, abs_tol=1e-14):
        raise ValueError(f"time {t} is not a level of the reference surface")
    return k


def convergence_order(e_prev, e_cur):
    """``log2(e_prev / e_cur)``; ``None`` when either error is missing or not positive."""
    if e_prev is None or e_cur is None or not (e_prev > 0 and e_cur > 0):
        return None
    return math.log2(e_prev / e_cur)


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}


class RefinementRule:
    """Integer-valued formula in ``k`` (and ``N``) built from + - * / ^ and parentheses."""

    def __init__(self, text, names=("k", "N")):
        self.text = text.strip()
        self.names = tuple(names)
        try:
            tree = ast.parse(self.text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ConfigurationError(f"malformed formula {text!r}: {exc.msg}") from None
        self._check(tree.body)
        self.tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            self._check(node.operand)
        elif isinstance(node, ast.Constant) and isinstance(node.value, int) and not isinstance(node.value, bool):
            pass
        elif isinstance(node, ast.Name) and node.id in self.names:
            pass
        else:
            raise ConfigurationError(f"malformed formula {self.text!r}: unsupported element {ast.dump(node)[:40]}")

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            a, b = self._eval(node.left, env), self._eval(node.right, env)
            if isinstance(node.op, ast.Pow):
                if b.denominator != 1 or b < 0:
                    raise ConfigurationError(f"formula {self.text!r}: exponents must be nonnegative integers")
                return a ** int(b)
            if isinstance(node.op, ast.Div) and b == 0:
                raise ConfigurationError(f"formula {self.text!r}: division by zero")
            return _BINOPS[type(node.op)](a, b)
        if isinstance(node, ast.UnaryOp):
            return -self._eval(node.operand, env)
        if isinstance(node, ast.Constant):
            return Fraction(node.value)
        if node.id not in env:
            raise ConfigurationError(f"formula {self.text!r} uses {node.id!r}, which is not defined here")
        return Fraction(env[node.id])

    def __call__(self, **env):
        value = self._eval(self.tree, env)
        if value.denominator != 1:
            raise ConfigurationError(f"formula {self.text!r} gives non-integer value {value} at {env}")
        return int(value)

    def __repr__(self):
        return f"RefinementRule({self.text!r})"


@dataclass
class ConvergenceRow:
    k: int
    N: int
    J: int
    errors: list
    orders: list
    cpu_s: Optional[float]
    note: str = ""


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    intervals: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    finest: Optional[ValueSurface] = None  # surface of the last level that solved

    def errors(self, j=0):
        return [r.errors[j] for r in self.rows]

    def orders(self, j=0):
        return [r.orders[j] for r in self.rows]

    def row(self, k):
        for r in self.rows:
            if r.k == k:
                return r
        raise KeyError(k)

    def header(self):
        if len(self.intervals) <= 1:
            pairs = ["error", "order"]
        else:
            pairs = [f"{name}_{j + 1}" for j in range(len(self.intervals)) for name in ("error", "order")]
        return ["k", "N", "J"] + pairs + ["cpu_s"]

    def table(self):
        """Rows as strings: errors in scientific notation, missing orders as ``-``."""
        out = []
        for r in self.rows:
            cells = [str(r.k), str(r.N), str(r.J)]
            for e, o in zip(r.errors, r.orders):
                cells.append("nan" if e is None else f"{e:.3e}")
                cells.append("-" if o is None else f"{o:.2f}")
            cells.append("-" if r.cpu_s is None else f"{r.cpu_s:.2f}")
            out.append(cells)
        return out


def fill_orders(rows):
    """Recompute ``orders`` from consecutive errors (the first row has none)."""
    for i, r in enumerate(rows):
        prev = rows[i - 1] if i > 0 else None
        r.orders = [
            None if prev is None or prev.k != r.k - 1 else convergence_order(prev.errors[j], r.errors[j])
            for j in range(len(r.errors))
        ]
    return rows


@dataclass
class StudyPlan:
    """Everything a refinement study needs besides the model."""

    problem: object
    M: int
    interp: str = "linear"
    stepper: str = "euler"
    domain: tuple = (0.0, math.log(1200.0))
    extrapolation: str = "payoff_asymptotic"
    N_rule: str = "2^4*2^k"
    J_rule: str = "N^2/4"
    k_range: tuple = (1, 6)
    intervals: list = field(default_factory=lambda: [(70.0, 90.0)])
    reference: str = "exact"
    exact: Optional[Callable] = None


def run_convergence_study(plan: StudyPlan, progress=None):
    """Solve at each refinement level and tabulate interval errors and orders.

    With ``reference="exact"`` errors are taken against ``plan.exact`` (a
    function of price). With ``"self-difference"`` row ``k`` compares level
    ``k-1`` with level ``k`` on the nodes of the coarser grid, so one extra
    solve at ``k_min - 1`` is made. Failing or skipped levels are recorded in
    the row note and the study carries on.
    """
    if plan.reference not in ("exact", "self-difference"):
        raise ConfigurationError(f"unknown reference kind {plan.reference!r}")
    if plan.reference == "exact" and plan.exact is None:
        raise ConfigurationError("exact reference requested but the model has no closed-form solution")
    n_rule = RefinementRule(plan.N_rule, names=("k",))
    j_rule = RefinementRule(plan.J_rule, names=("k", "N"))
    rule = rule_for(plan.M)
    k_lo, k_hi = plan.k_range
    levels = range(k_lo - 1 if plan.reference == "self-difference" else k_lo, k_hi + 1)
    rows = []
    previous = finest = None
    for k in levels:
        errors = [None] * len(plan.intervals)
        note, surface, elapsed = "", None, None
        try:
            N = n_rule(k=k)
            J = j_rule(k=k, N=N)
        except ConfigurationError as exc:
            N = J = 0
            note = f"skipped: {exc}"
        if note:
            pass
        elif plan.interp == "pchip" and J < PCHIP_MIN_INTERVALS:
            note = f"skipped: J={J} below {PCHIP_MIN_INTERVALS} intervals"
        elif N < 1 or J < 1:
            note = f"skipped: N={N}, J={J}"
        else:
            try:
                grid = Grid.uniform(plan.domain[0], plan.domain[1], J, plan.extrapolation)
                start = time.perf_counter()
                surface = backward_solve(plan.problem, grid, TimeMesh(N, plan.problem.horizon), rule,
                                         interp=plan.interp, stepper=plan.stepper, keep="initial")
                elapsed = time.perf_counter() - start
                notes = []
                for j, iv in enumerate(plan.intervals):
                    try:
                        if plan.reference == "exact":
                            errors[j] = sup_error(surface, plan.exact, iv)
                        elif previous is not None:
                            errors[j] = sup_error(previous, surface, iv)
                    except InvalidIntervalError as exc:
                        notes.append(f"interval {j + 1}: {exc}")
                note = "; ".join(notes)
            except (SLHJBError, MemoryError, ValueError) as exc:
                note = f"failed: {getattr(exc, 'kind', type(exc).__name__)}: {exc}"
                surface = None
        if k >= k_lo:
            rows.append(ConvergenceRow(k, N, J, errors, [None] * len(errors), elapsed, note))
            fill_orders(rows)
            if progress is not None:
                progress(rows[-1])
        previous = surface
        finest = surface if surface is not None else finest
    meta = {
        "M": plan.M,
        "interp": plan.interp,
        "stepper": plan.stepper,
        "reference": plan.reference,
        "N_rule": plan.N_rule,
        "J_rule": plan.J_rule,
        "domain": list(plan.domain),
        "model": plan.problem.params,
    }
    return ConvergenceReport(rows=rows, intervals=list(plan.intervals), metadata=meta, finest=finest)
