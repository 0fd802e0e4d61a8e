"""Exact reference solutions for scalar linear SDEs with multiplicative noise.

For ``dX = (a X + F(t)) dt + c X dW`` the solution from ``(t0, xi)`` is

    X_t = K(t, t0) xi + int_{t0}^t K(t, s) F(s) ds,
    K(t, s) = exp((a - c^2/2)(t - s) + c (W_t - W_s)),

and the random periodic solution is the same integral taken from -infinity.
Integrals are evaluated with the trapezoid rule on the fine grid of the path.
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import noise
from .errors import DomainError
from .model import SdeProblem


@dataclass(frozen=True, eq=False)
class LinearScalarProblem:
    a: float
    c: float
    forcing: Callable
    tau: float
    forcing_bound: float = 1.0
    forcing_holder: float = 0.0
    name: str = "linear"

    def __post_init__(self):
        if not self.a + 0.5 * self.c ** 2 < 0:
            raise DomainError("need a + c^2/2 < 0")

    @property
    def exponent_rate(self):
        return self.a - 0.5 * self.c ** 2

    def to_problem(self):
        forcing, c = self.forcing, self.c
        return SdeProblem(
            m=1, d=1, tau=self.tau,
            f=lambda t, x: forcing(t) * np.ones_like(x),
            g=lambda t, x: c * np.asarray(x)[..., None],
            A=[[self.a]], beta1=0.0, beta2=abs(c), C0=self.forcing_holder,
            C1=self.forcing_bound, C2=0.0, milstein_ready=True, name=self.name,
            meta={"oracle": self})


def _kernel_integral(problem, s, w, t_index):
    # trapezoid of K(t, s) F(s) over the nodes s[0..t_index]
    expo = problem.exponent_rate * (s[t_index] - s) + problem.c * (w[t_index] - w)
    vals = np.exp(expo) * problem.forcing(s)
    if len(s) < 2:
        return 0.0, expo
    h = s[1] - s[0]
    return h * (vals.sum() - 0.5 * (vals[0] + vals[-1])), expo


def exact_flow(problem, path, t0, t, xi):
    """Exact solution at ``t`` started from ``xi`` at ``t0`` (trapezoid forcing integral)."""
    if t < t0:
        raise DomainError("need t0 <= t")
    s, w = noise.values_on_grid(path, t0, t)
    integral, expo = _kernel_integral(problem, s, w[:, 0], len(s) - 1)
    return float(math.exp(expo[0]) * xi + integral)


def tail_bound(problem, truncation_T):
    """Bound on E|tail| for the integral cut at ``t - truncation_T``.

    E K(t, s) = exp(a (t - s)), so the tail is at most
    ``sup|F| exp(a T) / |a|``.
    """
    return problem.forcing_bound * math.exp(problem.a * truncation_T) / abs(problem.a)


def exact_rps(problem, path, t, truncation_T):
    """Truncated random periodic solution at ``t``; returns ``(value, tail_bound)``."""
    value = exact_flow(problem, path, t - truncation_T, t, 0.0)
    return value, tail_bound(problem, truncation_T)


def exact_rps_ensemble(problem, paths, t, truncation_T):
    return np.array([exact_rps(problem, p, t, truncation_T)[0] for p in paths])
