"""Gauss-Hermite rules for the standard Gaussian measure.

A rule of order ``M`` integrates every polynomial of degree ``<= 2M - 1``
exactly against N(0, I_p). One-dimensional rules are tensorized for
p-dimensional noise, and the tensor product can be thinned out by
Carathéodory elimination while keeping all weights nonnegative.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, InvalidOrderError, ReductionError

MIN_ORDER = 2
MAX_ORDER = 64
DEFAULT_NODE_CAP = 10**6


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes ``xi_i`` in R^p with weights ``lambda_i`` approximating N(0, I_p).

    ``nodes`` has shape ``(n, dim)``; ``weights`` has shape ``(n,)``. Both
    arrays are made read-only on construction so a rule can be shared freely.
    """

    nodes: np.ndarray
    weights: np.ndarray
    gh_order: int
    dim: int = field(init=False)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if nodes.shape[0] != weights.shape[0]:
            raise ValueError("nodes and weights disagree in length")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "dim", nodes.shape[1])

    def __len__(self):
        return self.weights.shape[0]

    @property
    def exactness_degree(self):
        return 2 * self.gh_order - 1


def _hermite_normalized(z, order):
    """Orthonormal Hermite values ``h_order(z)`` and ``h_{order-1}(z)``.

    ``h_k = H_k / sqrt(2^k k! sqrt(pi))``; the scaled recurrence keeps the
    values O(1) where the unscaled polynomials would overflow.
    """
    p_prev, p_cur = 0.0, math.pi ** -0.25
    for j in range(1, order + 1):
        p_prev, p_cur = p_cur, z * math.sqrt(2.0 / j) * p_cur - math.sqrt((j - 1) / j) * p_prev
    return p_cur, p_prev


def hermite_rule(M):
    """M-point Gauss-Hermite rule normalized to the standard Gaussian.

    Nodes are ``sqrt(2) z_i`` for the zeros ``z_i`` of the physicists' Hermite
    polynomial H_M, found by Newton iteration from asymptotic starting guesses.
    Weights come from the closed formula
    ``omega_i = 2^(M-1) M! sqrt(pi) / (M^2 H_{M-1}(z_i)^2)`` divided by
    ``sqrt(pi)``, which in orthonormal form is ``1 / (M h_{M-1}(z_i)^2 sqrt(pi))``.
    """
    if not isinstance(M, (int, np.integer)) or M < MIN_ORDER or M > MAX_ORDER:
        raise InvalidOrderError(f"Gauss-Hermite order must be an integer in [{MIN_ORDER}, {MAX_ORDER}], got {M!r}")
    M = int(M)
    half = (M + 1) // 2
    roots = np.zeros(half)
    omegas = np.zeros(half)
    z = 0.0
    for i in range(half):
        # starting guesses for the roots, largest first
        if i == 0:
            z = math.sqrt(2 * M + 1) - 1.85575 * (2 * M + 1) ** (-1.0 / 6.0)
        elif i == 1:
            z -= 1.14 * M**0.426 / z
        elif i == 2:
            z = 1.86 * z - 0.86 * roots[0]
        elif i == 3:
            z = 1.91 * z - 0.91 * roots[1]
        else:
            z = 2.0 * z - roots[i - 2]
        if M % 2 == 1 and i == half - 1:
            z = 0.0
        for _ in range(100):
            h_m, h_prev = _hermite_normalized(z, M)
            dz = h_m / (math.sqrt(2.0 * M) * h_prev)
            z -= dz
            if abs(dz) <= 1e-15 * max(1.0, abs(z)):
                break
        else:  # pragma: no cover - never observed for M <= 64
            raise RuntimeError(f"Newton iteration for Hermite root {i} of order {M} did not converge")
        _, h_prev = _hermite_normalized(z, M)
        roots[i] = z
        omegas[i] = 1.0 / (M * h_prev * h_prev)

    z_all = np.concatenate([-roots, roots[::-1][(M % 2):]])
    w_all = np.concatenate([omegas, omegas[::-1][(M % 2):]]) / math.sqrt(math.pi)
    return QuadratureRule(math.sqrt(2.0) * z_all, w_all, M)


def tensor_rule(base, p, node_cap=DEFAULT_NODE_CAP):
    """Tensor product of a one-dimensional rule with itself ``p`` times."""
    if base.dim != 1:
        raise ValueError("tensor_rule expects a one-dimensional base rule")
    if not isinstance(p, (int, np.integer)) or p < 1:
        raise ValueError(f"noise dimension must be a positive integer, got {p!r}")
    n = len(base) ** p
    if n > node_cap:
        raise CapacityError(f"tensor rule would have {n} nodes, above the cap of {node_cap}")
    x = base.nodes[:, 0]
    w = base.weights
    grids = np.meshgrid(*([x] * p), indexing="ij")
    nodes = np.stack([g.reshape(-1) for g in grids], axis=1)
    weights = w
    for _ in range(p - 1):
        weights = np.multiply.outer(weights, w)
    return QuadratureRule(nodes, weights.reshape(-1), base.gh_order)


def gaussian_moment(beta):
    """E[Z^beta] for Z ~ N(0, I): the product of ``(b - 1)!!`` over even entries, 0 if any is odd."""
    beta = np.atleast_1d(beta)
    out = 1
    for b in beta:
        b = int(b)
        if b < 0:
            raise ValueError("multi-index entries must be nonnegative")
        if b % 2:
            return 0.0
        out *= math.prod(range(b - 1, 0, -2))
    return float(out)


def monomial_exponents(p, degree):
    """All multi-indices of total degree ``<= degree`` in graded lexicographic order."""
    out = []
    for d in range(degree + 1):
        level = [b for b in itertools.product(range(d, -1, -1), repeat=p) if sum(b) == d]
        out.extend(sorted(level, reverse=True))
    return np.array(out, dtype=int).reshape(-1, p)


def moment_matrix(nodes, exponents):
    """Row r, column i holds ``nodes[i] ** exponents[r]`` (product over coordinates)."""
    nodes = np.atleast_2d(nodes)
    return np.prod(nodes[None, :, :] ** exponents[:, None, :], axis=2)


def tchakaloff_bound(M, p):
    """Number of monomials of degree <= 2M-1 in p variables."""
    return math.comb(2 * M - 1 + p, p)


def integrate(rule, f):
    """Quadrature sum ``sum_i lambda_i f(xi_i)``.

    ``f`` is called once per node, with a float for one-dimensional rules and a
    length-p array otherwise.
    """
    if rule.dim == 1:
        vals = np.array([f(float(x)) for x in rule.nodes[:, 0]], dtype=float)
    else:
        vals = np.array([f(x) for x in rule.nodes], dtype=float)
    return float(np.dot(rule.weights, vals))


def moment_errors(rule, degree=None):
    """Max abs deviation of the rule's monomial moments from the Gaussian ones."""
    degree = rule.exactness_degree if degree is None else degree
    exps = monomial_exponents(rule.dim, degree)
    got = moment_matrix(rule.nodes, exps) @ rule.weights
    want = np.array([gaussian_moment(b) for b in exps])
    return float(np.max(np.abs(got - want)))


# --- Carathéodory reduction -------------------------------------------------


def _orbit_size(abs_key):
    nonzero = sum(1 for v in abs_key if v != 0.0)
    counts = {}
    for v in abs_key:
        counts[v] = counts.get(v, 0) + 1
    perms = math.factorial(len(abs_key))
    for c in counts.values():
        perms //= math.factorial(c)
    return perms * 2**nonzero


def _symmetry_orbits(nodes, weights):
    """Group nodes into orbits of coordinate permutations and sign flips.

    Returns ``None`` unless the rule is invariant under that group with equal
    weights along each orbit.
    """
    keys = [tuple(sorted(np.round(np.abs(x), 12))) for x in nodes]
    groups = {}
    for i, key in enumerate(keys):
        groups.setdefault(key, []).append(i)
    orbits = []
    for key, members in groups.items():
        if len(members) != _orbit_size(key):
            return None
        w = weights[members]
        if np.max(np.abs(w - w[0])) > 1e-12 * max(abs(w[0]), 1e-300):
            return None
        orbits.append(np.array(members))
    return orbits


def _eliminate(A, w, sizes, tol):
    """Null-space elimination on the columns of ``A``.

    ``w`` are per-column weights; ``sizes`` the number of nodes a column stands
    for. Columns are dropped one at a time until the active submatrix has full
    column rank. Returns the boolean mask of surviving columns and the weights.
    """
    w = w.copy()
    active = w > 0
    while True:
        idx = np.flatnonzero(active)
        sub = A[:, idx]
        _, s, vt = np.linalg.svd(sub)
        rank = int(np.sum(s > tol * s[0]))
        if rank >= idx.size:
            return active, w
        v = vt[-1]
        best = None
        for sign in (1.0, -1.0):
            d = sign * v
            neg = d < -1e-14 * np.max(np.abs(d))
            if not np.any(neg):
                continue
            ratios = np.full(d.shape, np.inf)
            ratios[neg] = w[idx][neg] / -d[neg]
            j = int(np.argmin(ratios))
            # prefer the direction that zeroes the column carrying the most nodes
            if best is None or sizes[idx[j]] > sizes[idx[best[1]]]:
                best = (d, j, ratios[j])
        if best is None:
            raise ReductionError("null vector has no negative entries")
        d, j, step = best
        w[idx] += step * d
        w[idx[j]] = 0.0
        w[idx[w[idx] <= 1e-15]] = 0.0
        active = w > 0


def caratheodory_reduce(rule, M=None, tol=1e-11):
    """Thin a rule to a subset of its nodes, keeping moments up to degree 2M-1.

    Elimination runs first on symmetry orbits when the rule is invariant under
    signed coordinate permutations (as tensor Gauss-Hermite rules are), which
    steers it towards small symmetric supports, and then on individual nodes
    until the moment matrix restricted to the support has full column rank.
    Weights stay nonnegative throughout.
    """
    M = rule.gh_order if M is None else int(M)
    exps = monomial_exponents(rule.dim, 2 * M - 1)
    A_nodes = moment_matrix(rule.nodes, exps)
    target = A_nodes @ rule.weights
    scale = np.max(np.abs(A_nodes), axis=1)
    A_nodes = A_nodes / scale[:, None]

    weights = np.array(rule.weights, dtype=float)
    orbits = _symmetry_orbits(rule.nodes, weights) if rule.dim > 1 else None
    if orbits is not None:
        A_orb = np.stack([A_nodes[:, o].sum(axis=1) for o in orbits], axis=1)
        w_orb = np.array([weights[o[0]] for o in orbits])
        sizes = np.array([len(o) for o in orbits])
        try:
            _, w_orb = _eliminate(A_orb, w_orb, sizes, tol)
        except ReductionError as exc:
            raise ReductionError(str(exc), partial=rule) from exc
        weights = np.zeros_like(weights)
        for o, wo in zip(orbits, w_orb):
            weights[o] = wo

    try:
        active, weights = _eliminate(A_nodes, weights, np.ones(len(weights), dtype=int), tol)
    except ReductionError as exc:
        raise ReductionError(str(exc), partial=_subrule(rule, weights)) from exc

    # polish the surviving weights against the exact moments
    idx = np.flatnonzero(active)
    polished, *_ = np.linalg.lstsq(A_nodes[:, idx], target / scale, rcond=None)
    if np.all(polished > 0):
        weights[idx] = polished
    reduced = _subrule(rule, weights, M)
    mismatch = np.max(np.abs(moment_matrix(reduced.nodes, exps) @ reduced.weights - target))
    if mismatch > 1e-10 * max(1.0, np.max(np.abs(target))):
        raise ReductionError(f"moment mismatch {mismatch:.3e} after elimination", partial=reduced)
    return reduced


def _subrule(rule, weights, M=None):
    keep = weights > 0
    return QuadratureRule(rule.nodes[keep], weights[keep], rule.gh_order if M is None else M)


def rule_for(M, p=1, reduce=False):
    """Order-M rule in dimension p, optionally Carathéodory-reduced."""
    base = hermite_rule(M)
    if p == 1:
        return base
    rule = tensor_rule(base, p)
    return caratheodory_reduce(rule, M) if reduce else rule

