"""Backward recursion of the semi-Lagrangian Markov chain scheme.

On every time level the value at grid node ``x_m`` is

    V_n(x_m) = max_a exp(-rho h) * (sum_i lam_i * I[V_{n+1}](X_i) + h * g)

where ``X_i`` is one step of a discretized SDE driven by the quadrature node
``xi_i`` and ``I`` is the grid interpolant. The maximizing control (first one
in declaration order on ties) is recorded as the policy.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import ConfigurationError, NumericalBlowupError, UnsupportedError
from .interpolation import INTERPOLANTS, Grid, evaluate, locate, pchip_slopes
from .problem import ControlProblem, TimeMesh
from .quadrature import QuadratureRule

STEPPERS = ("euler", "weak2")
FD_REL_STEP = 1e-5


@dataclass(frozen=True)
class Stepper:
    """One-step map ``x -> x + ...`` driven by a standard normal node ``xi``.

    ``euler`` is the Euler-Maruyama step. ``weak2`` is the second-order weak
    Taylor step, available for scalar problems with time-independent
    coefficients; missing analytic derivatives are replaced by centered
    differences with step ``fd_rel_step * (1 + |x|)``.
    """

    tag: str = "euler"
    fd_rel_step: float = FD_REL_STEP

    def __post_init__(self):
        if self.tag not in STEPPERS:
            raise ValueError(f"unknown stepper {self.tag!r}; expected one of {STEPPERS}")

    def check(self, problem):
        if self.tag == "weak2":
            if problem.dim != 1 or problem.noise_dim != 1:
                raise UnsupportedError("weak2 stepper is implemented for one state and one noise dimension")
            if not problem.time_homogeneous:
                raise UnsupportedError("weak2 stepper needs time-independent drift and diffusion")

    def coefficients(self, problem, t, x, a, h):
        """Scalar-problem step as ``base + c1 * xi + c2 * xi**2`` (arrays over ``x``)."""
        self.check(problem)
        mu = problem.mu(t, x, a)
        sig = problem.sigma(t, x, a)
        sqh = math.sqrt(h)
        if self.tag == "euler":
            return x + mu * h, sig * sqh, np.zeros_like(x)
        d = _derivatives(problem, t, x, a, self.fd_rel_step)
        base = x + mu * h + (0.5 * mu * d["mu_x"] + 0.25 * d["mu_xx"] * sig**2) * h * h - 0.5 * sig * d["sigma_x"] * h
        c1 = sig * sqh + (0.5 * d["mu_x"] * sig + 0.5 * mu * d["sigma_x"] + 0.25 * d["sigma_xx"] * sig**2) * h * sqh
        c2 = 0.5 * sig * d["sigma_x"] * h
        return base, c1, c2


def _as_stepper(stepper):
    return stepper if isinstance(stepper, Stepper) else Stepper(stepper)


def _derivatives(problem, t, x, a, rel):
    out = {}
    given = problem.derivatives or {}
    delta = rel * (1.0 + np.abs(x))
    for name, fn in (("mu", problem.mu), ("sigma", problem.sigma)):
        if f"{name}_x" in given and f"{name}_xx" in given:
            out[f"{name}_x"] = np.broadcast_to(np.asarray(given[f"{name}_x"](x, a), dtype=float), x.shape)
            out[f"{name}_xx"] = np.broadcast_to(np.asarray(given[f"{name}_xx"](x, a), dtype=float), x.shape)
            continue
        up, mid, dn = fn(t, x + delta, a), fn(t, x, a), fn(t, x - delta, a)
        out[f"{name}_x"] = (up - dn) / (2 * delta)
        out[f"{name}_xx"] = (up - 2 * mid + dn) / (delta * delta)
    return out


def step_point(stepper, problem, t, x, a, xi, h):
    """Destination of a single state ``x`` under noise value ``xi`` (vector if ``noise_dim > 1``)."""
    stepper = _as_stepper(stepper)
    if problem.dim == 1 and problem.noise_dim == 1:
        xs = np.array([float(np.ravel(x)[0])])
        base, c1, c2 = stepper.coefficients(problem, t, xs, a, h)
        xi = float(np.ravel(xi)[0])
        return float(base[0] + c1[0] * xi + c2[0] * xi * xi)
    stepper.check(problem)
    xs = np.asarray(x, dtype=float).reshape(1, problem.dim)
    mu = problem.mu(t, xs, a).reshape(problem.dim)
    sig = problem.sigma(t, xs, a).reshape(problem.dim, problem.noise_dim)
    return xs[0] + mu * h + math.sqrt(h) * sig @ np.asarray(xi, dtype=float).reshape(problem.noise_dim)


@dataclass
class ValueSurface:
    """Value and policy arrays on the space-time mesh.

    ``values[n]`` has the grid shape (``None`` where dropped by ``keep``);
    ``policy[n]`` holds indices into ``controls``.
    """

    grid: Grid
    mesh: TimeMesh
    values: list
    policy: list
    controls: tuple
    interp: str = "linear"
    stepper: str = "euler"
    gh_order: Optional[int] = None
    model_hash: str = ""
    asymptote: Optional[object] = field(default=None, repr=False, compare=False)
    cpu_seconds: float = 0.0

    def value_at(self, x, n=0):
        """Interpolated value at state(s) ``x`` on time level ``n``."""
        V = self.values[n]
        if V is None:
            raise ValueError(f"time level {n} was not kept")
        far = None
        if self.asymptote is not None:
            t = self.mesh.t(n)
            far = lambda q: self.asymptote(t, q)
        out = evaluate(self.grid, V, x, self.interp, far)
        return float(out[0]) if np.ndim(x) == 0 or (self.grid.dim > 1 and np.ndim(x) == 1) else out

    def control_at(self, x, n=0):
        """Control of the nearest grid node at level ``n``."""
        P = self.policy[n]
        if P is None:
            raise ValueError(f"policy at level {n} was not kept")
        pts = np.asarray(x, dtype=float).reshape(-1, self.grid.dim)
        idx = np.rint((pts - np.array(self.grid.lower)) / self.grid.spacing).astype(np.intp)
        idx = np.clip(idx, 0, np.array(self.grid.intervals))
        a = P.reshape(self.grid.shape)[tuple(idx.T)]
        return np.asarray(self.controls)[a]


def _finite_or_raise(cand, n, a):
    if not np.all(np.isfinite(cand)):
        m = int(np.flatnonzero(~np.isfinite(cand))[0])
        raise NumericalBlowupError(f"non-finite value at level {n}, node {m}, control {a!r}", n=n, m=m, a=a)


class _Sweep:
    """Per-control expectation operator for one problem, grid and rule."""

    def __init__(self, problem, grid, mesh, rule, interp, stepper, backend):
        self.problem = problem
        self.grid = grid
        self.mesh = mesh
        self.rule = rule
        self.interp = interp
        self.stepper = stepper
        self.h = mesh.h
        self.fast = grid.dim == 1 and problem.dim == 1 and problem.noise_dim == 1
        self.K = kernels.get(backend)
        self.mode = kernels.MODE_CODES[grid.extrapolation]
        self.threads = kernels.num_threads()
        if self.fast:
            self.x = grid.axis(0)
            self.xi = np.ascontiguousarray(rule.nodes[:, 0])
        else:
            self.x = grid.nodes()
            self.xi = rule.nodes
        self.lam = np.ascontiguousarray(rule.weights)
        self._cache = {}

    def coefficients(self, n, ai):
        """Step coefficients, discount factor and running reward at level ``n`` for control ``ai``."""
        key = ai if self.problem.time_homogeneous else (n, ai)
        if key in self._cache:
            return self._cache[key]
        p, a, t, h = self.problem, self.problem.controls[ai], self.mesh.t(n), self.h
        xs = self.x
        if self.fast:
            step = tuple(np.ascontiguousarray(c, dtype=float) for c in self.stepper.coefficients(p, t, xs, a, h))
        else:
            mu = p.mu(t, xs, a)
            sig = p.sigma(t, xs, a)
            dest = (xs + mu * h)[:, None, :] + math.sqrt(h) * np.einsum("ndp,qp->nqd", sig, self.xi)
            step = (dest,)
        disc = np.exp(-p.rho(t, xs, a) * h)
        reward = h * p.g(t, xs, a)
        out = (step, disc, reward)
        if self.problem.time_homogeneous:
            self._cache[key] = out
        return out

    def expectation(self, V, n, step, slopes):
        """``E[I[V](X_{n+1}) | X_n = x_m]`` for all nodes."""
        grid = self.grid
        t_next = self.mesh.t(n + 1)
        asym = None
        if self.problem.asymptote is not None:
            asym = lambda q: self.problem.asymptote(t_next, q)
        if not self.fast:
            (dest,) = step
            vals = evaluate(grid, V, dest.reshape(-1, grid.dim), self.interp, asym)
            return vals.reshape(dest.shape[0], -1) @ self.lam
        base, c1, c2 = step
        out = np.empty(base.shape[0])
        flags = np.empty(base.shape[0], dtype=np.uint8)
        lo, hi, dx = grid.lower[0], grid.upper[0], float(grid.spacing[0])
        if self.interp == "linear":
            self.K.expect_linear_1d(V, lo, hi, dx, base, c1, c2, self.xi, self.lam, self.mode, out, flags, self.threads)
        else:
            self.K.expect_pchip_1d(V, slopes, lo, hi, dx, base, c1, c2, self.xi, self.lam, self.mode, out, flags, self.threads)
        if self.mode == kernels.MODE_CODES["payoff_asymptotic"]:
            hit = np.flatnonzero(flags)
            if hit.size:
                y = base[hit, None] + c1[hit, None] * self.xi + c2[hit, None] * self.xi * self.xi
                vals = evaluate(grid, V, y.ravel(), self.interp, asym)
                out[hit] = vals.reshape(hit.size, -1) @ self.lam
        return out


def backward_solve(problem: ControlProblem, grid: Grid, mesh: TimeMesh, rule: QuadratureRule,
                   interp="linear", stepper="euler", keep="all", backend=None):
    """Run the recursion from ``psi`` at ``t_N`` back to ``t_0``.

    ``keep="all"`` stores every level; ``keep="initial"`` stores only levels
    0 and N (and the level-0 policy), which bounds memory on fine meshes.
    ``backend`` picks the kernel implementation (default: the active one).
    """
    if interp not in INTERPOLANTS:
        raise ValueError(f"unknown interpolant {interp!r}; expected one of {INTERPOLANTS}")
    if keep not in ("all", "initial"):
        raise ValueError("keep must be 'all' or 'initial'")
    if grid.dim != problem.dim:
        raise ValueError(f"grid has {grid.dim} axes but the problem has {problem.dim} state dimensions")
    if rule.dim != problem.noise_dim:
        raise ValueError(f"rule has dimension {rule.dim} but the problem has {problem.noise_dim} noise dimensions")
    if mesh.T != problem.horizon and not math.isclose(mesh.T, problem.horizon, rel_tol=1e-12):
        raise ValueError("time mesh horizon differs from the problem horizon")
    stepper = _as_stepper(stepper)
    stepper.check(problem)
    if grid.extrapolation == "payoff_asymptotic" and problem.asymptote is None:
        raise ConfigurationError("payoff_asymptotic extrapolation needs a problem with an asymptote")

    start = time.process_time()
    sweep = _Sweep(problem, grid, mesh, rule, interp, stepper, backend)
    N = mesh.N
    nc = len(problem.controls)
    pdtype = np.int8 if nc < 128 else np.int32
    V = np.ascontiguousarray(problem.psi(sweep.x), dtype=float)
    _finite_or_raise(V, N, None)
    values = [None] * (N + 1)
    policy = [None] * N
    values[N] = V.reshape(grid.shape)
    dx = float(grid.spacing[0])
    for n in range(N - 1, -1, -1):
        slopes = pchip_slopes(V, dx) if (interp == "pchip" and sweep.fast) else None
        best = None
        arg = np.zeros(V.shape[0], dtype=pdtype)
        for ai, a in enumerate(problem.controls):
            step, disc, reward = sweep.coefficients(n, ai)
            cand = disc * (sweep.expectation(V, n, step, slopes) + reward)
            _finite_or_raise(cand, n, a)
            if best is None:
                best = cand
            else:
                better = cand > best
                best = np.where(better, cand, best)
                arg[better] = ai
        V = np.ascontiguousarray(best)
        if keep == "all" or n == 0:
            values[n] = V.reshape(grid.shape)
            policy[n] = arg.reshape(grid.shape)
    if keep == "initial":
        values = [values[0]] + [None] * (N - 1) + [values[N]]
    return ValueSurface(
        grid=grid,
        mesh=mesh,
        values=values,
        policy=policy,
        controls=problem.controls,
        interp=interp,
        stepper=stepper.tag,
        gh_order=rule.gh_order,
        model_hash=problem.digest(),
        asymptote=problem.asymptote,
        cpu_seconds=time.process_time() - start,
    )


def transition_row(problem, grid, rule, t, m, a, h, stepper="euler", interp="linear"):
    """Transition probabilities of the Markov chain from node ``m`` under control ``a``.

    Returned as ``{flat node index: probability}``. Only the multilinear
    interpolant defines a probability kernel; destinations outside the box are
    projected onto it (clamp) and otherwise dropped.
    """
    if interp != "linear":
        raise UnsupportedError(f"{interp} interpolation has signed weights and defines no transition kernel")
    if isinstance(m, (int, np.integer)):
        mi = np.unravel_index(int(m), grid.shape)
    else:
        mi = tuple(m)
    x = grid.node(mi)
    row = {}
    for xi, lam in zip(rule.nodes, rule.weights):
        y = np.atleast_1d(step_point(stepper, problem, t, x if grid.dim > 1 else x[0], a, xi, h))
        if grid.extrapolation != "clamp" and not grid.contains(y)[0]:
            continue
        for idx, q in locate(grid, y):
            k = grid.flat_index(idx)
            row[k] = row.get(k, 0.0) + lam * q
    return row


def lipschitz_estimate(surface, n=0):
    """Largest finite-difference slope of ``values[n]`` along any axis."""
    V = surface.values[n]
    if V is None:
        raise ValueError(f"time level {n} was not kept")
    best = 0.0
    for j in range(surface.grid.dim):
        if V.shape[j] > 1:
            best = max(best, float(np.max(np.abs(np.diff(V, axis=j))) / surface.grid.spacing[j]))
    return best
