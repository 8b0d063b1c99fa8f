"""Interpolation on uniform rectangular grids.

Two operators are provided: multilinear interpolation, whose stencil weights
are nonnegative and sum to one (so it is monotone), and a monotonicity
preserving piecewise cubic Hermite interpolant with Fritsch-Carlson slope
limiting, applied axis by axis in more than one dimension.

Value arrays are laid out row-major over the grid multi-index, i.e. with shape
``grid.shape`` or flattened from it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, InvalidPointError

EXTRAPOLATION_MODES = ("clamp", "linear", "payoff_asymptotic")
INTERPOLANTS = ("linear", "pchip")


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``x_m = lower + m * dx`` with ``intervals[j] + 1`` nodes per axis."""

    lower: tuple
    upper: tuple
    intervals: tuple
    extrapolation: str = "clamp"
    spacing: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        intervals = tuple(int(v) for v in np.atleast_1d(self.intervals))
        if not (len(lower) == len(upper) == len(intervals)):
            raise ValueError("lower, upper and intervals must have one entry per axis")
        for lo, hi, J in zip(lower, upper, intervals):
            if not hi > lo:
                raise ValueError(f"grid axis needs upper > lower, got [{lo}, {hi}]")
            if J < 1:
                raise ValueError(f"grid axis needs at least one interval, got {J}")
        if self.extrapolation not in EXTRAPOLATION_MODES:
            raise ValueError(f"unknown extrapolation mode {self.extrapolation!r}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "intervals", intervals)
        spacing = np.array([(hi - lo) / J for lo, hi, J in zip(lower, upper, intervals)])
        spacing.setflags(write=False)
        object.__setattr__(self, "spacing", spacing)

    @classmethod
    def uniform(cls, lower, upper, intervals, extrapolation="clamp"):
        return cls(lower, upper, intervals, extrapolation)

    @property
    def dim(self):
        return len(self.intervals)

    @property
    def shape(self):
        return tuple(J + 1 for J in self.intervals)

    @property
    def size(self):
        return int(np.prod(self.shape))

    def axis(self, j):
        return self.lower[j] + np.arange(self.intervals[j] + 1) * self.spacing[j]

    def nodes(self):
        """All nodes as an ``(size, dim)`` array in row-major order."""
        mesh = np.meshgrid(*[self.axis(j) for j in range(self.dim)], indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def node(self, index):
        index = np.atleast_1d(index)
        return np.array([self.lower[j] + index[j] * self.spacing[j] for j in range(self.dim)])

    def flat_index(self, index):
        return int(np.ravel_multi_index(tuple(np.atleast_1d(index)), self.shape))

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return np.all((pts >= np.array(self.lower)) & (pts <= np.array(self.upper)), axis=1)

    def with_extrapolation(self, mode):
        return Grid(self.lower, self.upper, self.intervals, mode)

    @property
    def mesh_norm(self):
        """Euclidean norm of the spacing vector."""
        return float(np.linalg.norm(self.spacing))


@dataclass(frozen=True)
class StencilWeights:
    """Sparse interpolation weights ``[(multi_index, q_k), ...]``."""

    entries: tuple

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def as_dict(self):
        return {k: w for k, w in self.entries}

    def apply(self, values):
        values = np.asarray(values)
        return float(sum(w * values[k] for k, w in self.entries))


def _as_points(grid, x):
    pts = np.asarray(x, dtype=float)
    if grid.dim == 1:
        return pts.reshape(-1, 1)
    return pts.reshape(-1, grid.dim)


def _check_finite(pts):
    if not np.all(np.isfinite(pts)):
        raise InvalidPointError("interpolation point is not finite")


def locate(grid, x, snap=1e-12):
    """Multilinear stencil of a single point.

    Points outside the box are projected onto it when the grid clamps; other
    extrapolation modes are handled by the interpolation routines and raise
    here.
    """
    pt = _as_points(grid, x)[0]
    _check_finite(pt)
    lo = np.array(grid.lower)
    hi = np.array(grid.upper)
    if not grid.contains(pt)[0]:
        if grid.extrapolation != "clamp":
            raise InvalidPointError(f"point {pt} lies outside the grid and mode is {grid.extrapolation!r}")
        pt = np.clip(pt, lo, hi)
    u = (pt - lo) / grid.spacing
    per_axis = []
    for j in range(grid.dim):
        J = grid.intervals[j]
        r = np.rint(u[j])
        if abs(u[j] - r) <= snap * max(1.0, abs(u[j])):
            per_axis.append([(int(r), 1.0)])
            continue
        k = min(max(int(np.floor(u[j])), 0), J - 1)
        t = u[j] - k
        per_axis.append([(k, 1.0 - t), (k + 1, t)])
    entries = []
    for combo in itertools.product(*per_axis):
        w = float(np.prod([c[1] for c in combo]))
        if w > 0.0:
            entries.append((tuple(c[0] for c in combo), w))
    return StencilWeights(tuple(entries))


def _cell(grid, pts, inside=True):
    """Cell indices ``k`` (clipped to valid cells) and local coordinates ``t``.

    With ``inside`` the coordinates are clipped to [0, 1]; rounding in
    ``(x - lower) / dx`` would otherwise give slightly negative weights at the
    upper boundary.
    """
    u = (pts - np.array(grid.lower)) / grid.spacing
    J = np.array(grid.intervals)
    k = np.clip(np.floor(u), 0, J - 1).astype(np.intp)
    t = u - k
    if inside:
        t = np.clip(t, 0.0, 1.0)
    return k, t


def _fill_outside(grid, pts, out, asymptote):
    outside = ~grid.contains(pts)
    if np.any(outside):
        if asymptote is None:
            raise ConfigurationError("payoff_asymptotic extrapolation needs a registered asymptote")
        q = pts[outside]
        out[outside] = asymptote(q[:, 0] if grid.dim == 1 else q)
    return out


def multilinear(grid, values, x, asymptote=None):
    """Vectorized multilinear interpolation at points ``x`` (shape ``(n, d)`` or ``(n,)`` in 1-D)."""
    values = np.asarray(values, dtype=float).reshape(grid.shape)
    pts = _as_points(grid, x)
    _check_finite(pts)
    mode = grid.extrapolation
    q = np.clip(pts, grid.lower, grid.upper) if mode != "linear" else pts
    k, t = _cell(grid, q, inside=mode != "linear")
    out = np.zeros(len(pts))
    for corner in itertools.product((0, 1), repeat=grid.dim):
        c = np.array(corner)
        w = np.prod(np.where(c == 1, t, 1.0 - t), axis=1)
        out += w * values[tuple((k + c).T)]
    if mode == "payoff_asymptotic":
        _fill_outside(grid, pts, out, asymptote)
    return out


def _interior_slope(da, db):
    """Centered slope, zeroed at extrema and limited to three times the smaller secant."""
    m = 0.5 * (da + db)
    cap = 3.0 * np.minimum(np.abs(da), np.abs(db))
    m = np.sign(m) * np.minimum(np.abs(m), cap)
    return np.where(da * db > 0, m, 0.0)


def _end_slope(d0, d1):
    """One-sided three-point slope at a boundary node, kept within the monotone region."""
    m = 0.5 * (3.0 * d0 - d1)
    m = np.where(np.sign(m) != np.sign(d0), 0.0, m)
    return np.where(np.abs(m) > 3.0 * np.abs(d0), 3.0 * d0, m)


def pchip_slopes(values, dx):
    """Nodal slopes of the monotone cubic interpolant of 1-D data on a uniform grid."""
    v = np.asarray(values, dtype=float)
    d = np.diff(v) / dx
    if d.size == 1:
        return np.array([d[0], d[0]])
    m = np.empty_like(v)
    m[1:-1] = _interior_slope(d[:-1], d[1:])
    m[0] = _end_slope(d[0], d[1])
    m[-1] = _end_slope(d[-1], d[-2])
    return m


def _hermite(v0, v1, m0, m1, t, h):
    t2 = t * t
    t3 = t2 * t
    return (
        (2 * t3 - 3 * t2 + 1) * v0
        + (t3 - 2 * t2 + t) * h * m0
        + (-2 * t3 + 3 * t2) * v1
        + (t3 - t2) * h * m1
    )


def _pchip_local(block, k, t, J, h):
    """Cubic value inside cell ``k`` from the four values at nodes ``k-1 .. k+2``.

    ``block`` has the stencil on its last axis; out-of-range stencil entries
    are ignored through the boundary formulas.
    """
    vm, v0, v1, v2 = (block[..., i] for i in range(4))
    if J == 1:
        return v0 + t * (v1 - v0)
    dm, d0, d1 = (v0 - vm) / h, (v1 - v0) / h, (v2 - v1) / h
    m0 = np.where(k == 0, _end_slope(d0, d1), _interior_slope(dm, d0))
    m1 = np.where(k + 1 == J, _end_slope(d0, dm), _interior_slope(d0, d1))
    return _hermite(v0, v1, m0, m1, t, h)


def pchip(grid, values, x, asymptote=None):
    """Vectorized monotone cubic interpolation, tensorized over axes."""
    values = np.asarray(values, dtype=float).reshape(grid.shape)
    pts = _as_points(grid, x)
    _check_finite(pts)
    mode = grid.extrapolation
    q = np.clip(pts, grid.lower, grid.upper)
    k, t = _cell(grid, q)
    n, d = pts.shape
    offsets = np.arange(-1, 3)
    index = []
    for j in range(d):
        idx = np.clip(k[:, j][:, None] + offsets, 0, grid.intervals[j])
        shape = [n] + [1] * d
        shape[j + 1] = 4
        index.append(idx.reshape(shape))
    block = values[tuple(index)]
    for j in reversed(range(d)):
        extra = (1,) * j
        block = _pchip_local(
            block,
            k[:, j].reshape((n,) + extra),
            t[:, j].reshape((n,) + extra),
            grid.intervals[j],
            grid.spacing[j],
        )
    out = np.asarray(block, dtype=float).reshape(n)
    if mode == "linear":
        outside = ~grid.contains(pts)
        if np.any(outside):
            out[outside] = multilinear(grid, values, pts[outside])
    elif mode == "payoff_asymptotic":
        _fill_outside(grid, pts, out, asymptote)
    return out


def evaluate(grid, values, x, kind="linear", asymptote=None):
    """Interpolate with the named operator (``linear`` or ``pchip``)."""
    if kind == "linear":
        return multilinear(grid, values, x, asymptote)
    if kind == "pchip":
        return pchip(grid, values, x, asymptote)
    raise ValueError(f"unknown interpolant {kind!r}; expected one of {INTERPOLANTS}")


def interp_multilinear(grid, values, x, asymptote: Optional[Callable] = None):
    """Multilinear interpolant at a single point."""
    return float(multilinear(grid, values, x, asymptote)[0])


def interp_pchip(grid, values, x, asymptote: Optional[Callable] = None):
    """Monotone cubic interpolant at a single point of a 1-D grid."""
    if grid.dim != 1:
        raise ValueError("interp_pchip takes a one-dimensional grid; use pchip() for tensorized evaluation")
    if grid.intervals[0] < 1:
        raise ValueError("need at least two nodes")
    return float(pchip(grid, values, x, asymptote)[0])
