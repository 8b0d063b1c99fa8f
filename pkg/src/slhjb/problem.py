"""Controlled diffusion problems with a finite control set.

Coefficient callables are evaluated on batches of states. In one dimension
they receive ``x`` of shape ``(n,)``; in ``d`` dimensions, shape ``(n, d)``.
They may return anything that broadcasts to the documented result shape, so
``lambda t, x, a: 0.0`` is a valid drift.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidModelError


@dataclass(frozen=True)
class TimeMesh:
    N: int
    T: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"time mesh needs N >= 1 steps, got {self.N!r}")
        if not self.T > 0:
            raise ValueError("horizon must be positive")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "T", float(self.T))

    @property
    def h(self):
        return self.T / self.N

    def t(self, n):
        return n * self.h

    @property
    def times(self):
        return np.arange(self.N + 1) * self.h


@dataclass(frozen=True)
class ControlProblem:
    """Finite-horizon control of ``dX = mu(t,X,a) dt + sigma(t,X,a) dB``.

    The value is ``sup E[ disc * psi(X_T) + sum of discounted h * g ]`` over
    controls frozen on each time step and taking values in ``controls``.
    ``asymptote(t, x)``, when given, supplies values outside a truncated
    spatial domain. ``derivatives`` may hold analytic spatial derivatives
    ``mu_x, mu_xx, sigma_x, sigma_xx`` (1-D, time-independent coefficients)
    for the weak second-order stepper.
    """

    dim: int
    noise_dim: int
    horizon: float
    controls: tuple
    drift: Callable
    diffusion: Callable
    payoff: Callable
    discount: Optional[Callable] = None
    running_cost: Optional[Callable] = None
    asymptote: Optional[Callable] = None
    time_homogeneous: bool = False
    derivatives: dict = field(default_factory=dict)
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.controls) == 0:
            raise InvalidModelError("control set must be non-empty")
        if self.dim < 1 or self.noise_dim < 1:
            raise InvalidModelError("state and noise dimensions must be positive")
        if not self.horizon > 0:
            raise InvalidModelError("horizon must be positive")
        object.__setattr__(self, "controls", tuple(self.controls))

    def _n(self, x):
        return np.shape(x)[0]

    def mu(self, t, x, a):
        out = np.asarray(self.drift(t, x, a), dtype=float)
        if self.dim == 1:
            return np.broadcast_to(out, (self._n(x),))
        return np.broadcast_to(out, (self._n(x), self.dim))

    def sigma(self, t, x, a):
        out = np.asarray(self.diffusion(t, x, a), dtype=float)
        if self.dim == 1 and self.noise_dim == 1:
            return np.broadcast_to(out, (self._n(x),))
        return np.broadcast_to(out, (self._n(x), self.dim, self.noise_dim))

    def rho(self, t, x, a):
        if self.discount is None:
            return np.zeros(self._n(x))
        return np.broadcast_to(np.asarray(self.discount(t, x, a), dtype=float), (self._n(x),))

    def g(self, t, x, a):
        if self.running_cost is None:
            return np.zeros(self._n(x))
        return np.broadcast_to(np.asarray(self.running_cost(t, x, a), dtype=float), (self._n(x),))

    def psi(self, x):
        return np.broadcast_to(np.asarray(self.payoff(x), dtype=float), (self._n(x),))

    def digest(self):
        """Stable hash of the model name and parameters."""
        blob = json.dumps({"name": self.name, "params": self.params}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def payoff_call(s, K):
    return np.maximum(np.asarray(s, dtype=float) - K, 0.0)


def payoff_butterfly(s, K1, K2):
    s = np.asarray(s, dtype=float)
    mid = 0.5 * (K1 + K2)
    return 0.25 * (np.maximum(s - K1, 0.0) - 2.0 * np.maximum(s - mid, 0.0) + np.maximum(s - K2, 0.0))


@dataclass(frozen=True)
class Call:
    K: float

    def __post_init__(self):
        if not self.K > 0:
            raise InvalidModelError("strike must be positive")

    def __call__(self, s):
        return payoff_call(s, self.K)

    def asymptote(self, T, rate):
        """Far-field value in log-price: zero deep out of the money, forward intrinsic deep in it."""
        K = self.K

        def far(t, x):
            s = np.exp(x)
            return np.where(s > K, s - K * math.exp(-rate * (T - t)), 0.0)

        return far

    @property
    def reference_strike(self):
        return self.K

    def params(self):
        return {"type": "call", "K": self.K}


@dataclass(frozen=True)
class Butterfly:
    K1: float
    K2: float

    def __post_init__(self):
        if not (0 < self.K1 < self.K2):
            raise InvalidModelError("butterfly needs 0 < K1 < K2")

    def __call__(self, s):
        return payoff_butterfly(s, self.K1, self.K2)

    def asymptote(self, T, rate):
        return lambda t, x: np.zeros(np.shape(x)[0])

    @property
    def reference_strike(self):
        return self.K1

    @property
    def peak(self):
        return 0.25 * (self.K2 - self.K1) / 2

    def params(self):
        return {"type": "butterfly", "K1": self.K1, "K2": self.K2}


def bergman_problem(r_l=0.1, r_b=0.15, sigma=0.4, payoff=Call(100.0), T=1.0):
    """Option pricing with distinct lending and borrowing rates, in log-price ``x = log s``.

    The control is the funding rate ``q`` in ``{r_b, r_l}``; it sets both the
    drift ``q - sigma^2/2`` and the discount rate. ``r_b`` is listed first so
    that ties resolve to it. ``payoff`` is a function of price; ``Call`` and
    ``Butterfly`` also supply the far-field asymptote.
    """
    if not (0 < r_l <= r_b):
        raise InvalidModelError(f"need 0 < r_l <= r_b, got r_l={r_l}, r_b={r_b}")
    if sigma < 0:
        raise InvalidModelError("volatility must be nonnegative")
    if not T > 0:
        raise InvalidModelError("maturity must be positive")
    controls = (r_b,) if r_l == r_b else (r_b, r_l)
    half_var = 0.5 * sigma * sigma
    return ControlProblem(
        dim=1,
        noise_dim=1,
        horizon=float(T),
        controls=controls,
        drift=lambda t, x, q: q - half_var,
        diffusion=lambda t, x, q: sigma,
        payoff=lambda x: payoff(np.exp(x)),
        discount=lambda t, x, q: q,
        asymptote=payoff.asymptote(T, r_b) if hasattr(payoff, "asymptote") else None,
        time_homogeneous=True,
        derivatives={
            "mu_x": lambda x, q: 0.0,
            "mu_xx": lambda x, q: 0.0,
            "sigma_x": lambda x, q: 0.0,
            "sigma_xx": lambda x, q: 0.0,
        },
        name="bergman",
        params={"r_l": r_l, "r_b": r_b, "sigma": sigma, "T": T,
                "payoff": payoff.params() if hasattr(payoff, "params") else {"type": repr(payoff)}},
    )


def default_log_domain(payoff):
    """Log-price box ``[log(K/100), log(12 K)]`` around the reference strike."""
    K = payoff.reference_strike
    return math.log(K / 100.0), math.log(12.0 * K)
