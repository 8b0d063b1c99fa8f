"""Euler-Maruyama simulation under piecewise-constant controls.

Random numbers come in fixed-size blocks of paths. Block ``b`` draws from its
own stream seeded by ``SeedSequence(seed, spawn_key=(b,))``, so every path's
increments depend only on ``(seed, path index)`` and not on how the work is
split. Normals are produced by the inverse CDF of open-interval uniforms.
Antithetic partners are negated normals, an exact mirror image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import InsufficientDataError
from .solver import ValueSurface

BLOCK = 4096


@dataclass(frozen=True)
class SimConfig:
    n_paths: int
    seed: int
    N: int
    h: float = None
    antithetic: bool = False

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ValueError("n_paths must be a positive integer")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("antithetic sampling needs an even number of paths")
        if self.h is not None and not self.h > 0:
            raise ValueError("h must be positive")

    def step(self, T):
        h = T / self.N
        if self.h is not None and not math.isclose(self.h, h, rel_tol=1e-12):
            raise ValueError(f"h={self.h} is inconsistent with N={self.N} over horizon {T}")
        return h


@dataclass
class SimResult:
    terminal: np.ndarray
    discount: np.ndarray
    running: np.ndarray


def _uniforms(rng, shape):
    # midpoints of the 2^-53 lattice: strictly inside (0, 1)
    return rng.random(shape) + 2.0**-54


def gaussian_blocks(seed, n_paths, shape, antithetic=False, key=()):
    """Yield ``(start, stop, Z)`` with standard normals of shape ``(stop - start,) + shape``."""
    for b, start in enumerate(range(0, n_paths, BLOCK)):
        stop = min(start + BLOCK, n_paths)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(key) + (b,))))
        if antithetic:
            half = (stop - start) // 2
            u = _uniforms(rng, (half,) + shape)
            zu = ndtri(u)
            z = np.stack([zu, -zu], axis=1).reshape((2 * half,) + shape)
        else:
            z = ndtri(_uniforms(rng, (stop - start,) + shape))
        yield start, stop, z


def _control_schedule(problem, control, N):
    """Per-step control: a fixed sequence, a constant, or a feedback surface."""
    if isinstance(control, ValueSurface):
        return control
    if np.ndim(control) == 0:
        return [control] * N
    seq = list(control)
    if len(seq) != N:
        raise ValueError(f"control sequence has {len(seq)} entries, expected {N}")
    return seq


def _grouped(fn, t, x, a_idx, controls):
    """Evaluate a coefficient with per-path controls by grouping paths on the control index."""
    out = None
    for ai in np.unique(a_idx):
        sel = a_idx == ai
        val = fn(t, x[sel], controls[ai])
        if out is None:
            out = np.empty((x.shape[0],) + val.shape[1:])
        out[sel] = val
    return out


def simulate_em(problem, control, x0, config: SimConfig):
    """Terminal states, accumulated discount factors and discounted running rewards."""
    T = problem.horizon
    h = config.step(T)
    N = config.N
    d, p = problem.dim, problem.noise_dim
    sched = _control_schedule(problem, control, N)
    feedback = isinstance(sched, ValueSurface)
    x0 = np.asarray(x0, dtype=float)
    sqh = math.sqrt(h)
    n = config.n_paths
    term = np.empty((n,) if d == 1 else (n, d))
    disc_all = np.empty(n)
    run_all = np.empty(n)
    controls = tuple(sched.controls) if feedback else None
    for start, stop, Z in gaussian_blocks(config.seed, n, (N, p), config.antithetic):
        m = stop - start
        x = np.broadcast_to(x0, (m,) if d == 1 else (m, d)).astype(float)
        logdisc = np.zeros(m)
        running = np.zeros(m)
        for i in range(N):
            t = i * h
            if feedback:
                ns = min(int(round(t / sched.mesh.h)), sched.mesh.N - 1)
                a_idx = sched.policy[ns].reshape(-1)[_nearest(sched.grid, x)]
                mu = _grouped(problem.mu, t, x, a_idx, controls)
                sig = _grouped(problem.sigma, t, x, a_idx, controls)
                rho = _grouped(problem.rho, t, x, a_idx, controls)
                g = _grouped(problem.g, t, x, a_idx, controls)
            else:
                a = sched[i]
                mu, sig = problem.mu(t, x, a), problem.sigma(t, x, a)
                rho, g = problem.rho(t, x, a), problem.g(t, x, a)
            z = Z[:, i, :]
            if d == 1 and p == 1:
                noise = sig * z[:, 0]
            else:
                noise = np.einsum("ndp,np->nd", sig.reshape(m, d, p), z)
                if d == 1:
                    noise = noise[:, 0]
            logdisc -= rho * h
            running += np.exp(logdisc) * h * g
            x = x + mu * h + sqh * noise
        term[start:stop] = x
        disc_all[start:stop] = np.exp(logdisc)
        run_all[start:stop] = running
    return SimResult(term, disc_all, run_all)


def _nearest(grid, x):
    pts = np.asarray(x, dtype=float).reshape(-1, grid.dim)
    idx = np.rint((pts - np.array(grid.lower)) / grid.spacing).astype(np.intp)
    idx = np.clip(idx, 0, np.array(grid.intervals))
    return np.ravel_multi_index(tuple(idx.T), grid.shape)


def _mean_se(y, paired):
    if paired:
        y = 0.5 * (y[0::2] + y[1::2])
    n = y.shape[0]
    mean = float(np.sum(y) / n)
    if n < 2:
        return mean, float("nan")
    var = float(np.sum((y - mean) ** 2) / (n - 1))
    return mean, math.sqrt(var / n)


def mc_value(problem, policy, x0, config: SimConfig):
    """Sample mean and standard error of the discounted payoff plus running reward."""
    res = simulate_em(problem, policy, x0, config)
    y = res.discount * problem.psi(res.terminal) + res.running
    return _mean_se(y, config.antithetic)


def strong_rate_estimate(mu, sigma, x0, T, h_list, n_paths, seed):
    """Least-squares slope of ``log E|S_T - S~_T|`` against ``log h`` for geometric Brownian motion.

    ``S~`` is the Euler scheme in price coordinates; ``S_T`` is the exact
    solution driven by the same increments.
    """
    h_list = [float(h) for h in h_list]
    if len(h_list) < 3:
        raise InsufficientDataError("need at least three step sizes to fit a rate")
    errors = []
    for j, h in enumerate(h_list):
        N = int(round(T / h))
        if N < 1 or not math.isclose(N * h, T, rel_tol=1e-9):
            raise ValueError(f"step {h} does not divide the horizon {T}")
        total = 0.0
        for start, stop, Z in gaussian_blocks(seed, n_paths, (N,), key=(j,)):
            dB = math.sqrt(h) * Z
            approx = np.full(stop - start, float(x0))
            for i in range(N):
                approx = approx * (1.0 + mu * h + sigma * dB[:, i])
            exact = x0 * np.exp((mu - 0.5 * sigma * sigma) * T + sigma * dB.sum(axis=1))
            total += float(np.sum(np.abs(exact - approx)))
        errors.append(total / n_paths)
    slope = np.polyfit(np.log(h_list), np.log(errors), 1)[0]
    return float(slope)
