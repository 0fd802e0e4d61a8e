"""Explicit one-step schemes and the fixed-step driver.

The linear part ``A x`` is treated explicitly in both schemes.  States are
batched along leading axes so one call can advance a whole ensemble of
paths; each path only ever sees its own increments.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import noise
from .errors import DivergenceError, DomainError, GridAlignmentError

EULER_MARUYAMA = "euler-maruyama"
MILSTEIN = "modified-milstein"
KINDS = (EULER_MARUYAMA, MILSTEIN)


@dataclass(frozen=True)
class SchemeConfig:
    kind: str
    dt: float
    coarse_factor: int
    # add A x (r - t_N') to the final partial step; off gives the plain f-and-g partial step
    include_linear_remainder: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown scheme kind {self.kind!r}; choose from {KINDS}")
        if self.dt <= 0 or self.coarse_factor < 1:
            raise DomainError("dt must be positive and coarse_factor >= 1")

    @classmethod
    def build(cls, kind, dt, dt_fine, tau=None, dt_max=None, **kw):
        """Check the grid rules and return a config with the coarse factor filled in."""
        m = noise.grid_steps(dt, dt_fine, "dt / dt_fine")
        if tau is not None:
            noise.grid_steps(tau, dt, "tau / dt")
        if dt_max is not None and dt > dt_max * (1 + 1e-12):
            raise DomainError(f"dt={dt} exceeds the stability bound dt_max=1/rho={dt_max}")
        return cls(kind, float(dt), m, **kw)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    scheme: SchemeConfig
    seed: int

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise DomainError("times and states differ in length")

    def to_csv(self, path):
        write_trajectory_csv(path, self.times, self.states)


def write_trajectory_csv(path, times, states):
    states = np.asarray(states).reshape(len(times), -1)
    header = "t," + ",".join(f"x_{i + 1}" for i in range(states.shape[1]))
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for t, row in zip(times, states):
            fh.write(",".join(f"{v:.17g}" for v in (t, *row)) + "\n")


def _drift_part(problem, t, x, dt):
    return x + (x @ problem.linear(t).T) * dt + problem.f(t, x) * dt


def _apply_noise(gx, dW):
    return np.matmul(gx, dW[..., None])[..., 0]


def em_step(problem, t, x, dW, dt):
    """One Euler-Maruyama step ``x + A x dt + f dt + g dW``."""
    x = np.asarray(x, dtype=float)
    return _drift_part(problem, t, x, dt) + _apply_noise(problem.g(t, x), np.asarray(dW, float))


def _stages(base, gx, dt):
    # column j of g drives stage pair j; result shape (..., d, m)
    step = math.sqrt(dt) * np.swapaxes(gx, -1, -2)
    return base[..., None, :] + step, base[..., None, :] - step


def milstein_stages(problem, t, x, dt):
    """Supporting values ``U+-``, shaped ``(..., d, m)`` (one pair per noise column)."""
    x = np.asarray(x, dtype=float)
    return _stages(_drift_part(problem, t, x, dt), problem.g(t, x), dt)


def milstein_step(problem, t, x, dW, dZ, dt):
    """Derivative-free modified Milstein step built on the ``U+-`` stages.

    For several noise columns the stage differences are applied column by
    column, which drops the cross iterated integrals.
    """
    x = np.asarray(x, dtype=float)
    dW = np.asarray(dW, dtype=float)
    dZ = np.asarray(dZ, dtype=float)
    base = _drift_part(problem, t, x, dt)
    gx = problem.g(t, x)
    out = base + _apply_noise(gx, dW)
    sq = math.sqrt(dt)
    if gx.shape[-1] == 1:
        col = gx[..., 0]
        u_plus, u_minus = base + sq * col, base - sq * col
        df = problem.f(t, u_plus) - problem.f(t, u_minus)
        dg = problem.g(t, u_plus)[..., 0] - problem.g(t, u_minus)[..., 0]
        out = out + (dZ / (2.0 * sq)) * df
        return out + ((dW * dW - dt) / (4.0 * sq)) * dg
    u_plus, u_minus = _stages(base, gx, dt)
    df = problem.f(t, u_plus) - problem.f(t, u_minus)
    dg = problem.g(t, u_plus) - problem.g(t, u_minus)
    dg = np.diagonal(dg, axis1=-3, axis2=-1)  # (..., m, d): column j of g at stage j
    out = out + np.einsum("...j,...jm->...m", dZ / (2.0 * sq), df)
    out = out + np.einsum("...j,...mj->...m", (dW * dW - dt) / (4.0 * sq), dg)
    return out


def _check_finite(x, step, seeds):
    if not np.all(np.isfinite(x)):
        bad = np.flatnonzero(~np.all(np.isfinite(x.reshape(x.shape[0], -1)), axis=1))
        seed = seeds[bad[0]] if seeds is not None and len(bad) else None
        raise DivergenceError("non-finite state", step=step, seed=seed)


def propagate(problem, scheme, paths, t_start, t_end, x0, record=False):
    """Run ``scheme`` on every path from ``t_start`` to ``t_end``.

    ``x0`` has shape ``(len(paths), m)``.  Returns the final states, or
    ``(times, states)`` with states shaped ``(n_times, len(paths), m)`` when
    ``record`` is set.  A ``t_end`` between coarse nodes is reached with the
    partial Euler step ``x + f h + g dW`` (the linear term is added only with
    ``include_linear_remainder``).
    """
    # overflow shows up as non-finite states, which _check_finite reports
    with np.errstate(over="ignore", invalid="ignore"):
        return _propagate(problem, scheme, paths, t_start, t_end, x0, record)


def _propagate(problem, scheme, paths, t_start, t_end, x0, record):
    ref = paths[0]
    if any(p.dt_fine != ref.dt_fine or p.anchor != ref.anchor or p.dim != ref.dim for p in paths):
        raise DomainError("paths in one batch must share dt_fine, anchor and dim")
    if ref.dim != problem.d:
        raise DomainError(f"path dimension {ref.dim} != noise dimension {problem.d}")
    mc = scheme.coarse_factor
    if abs(mc * ref.dt_fine - scheme.dt) > 1e-9 * scheme.dt:
        raise GridAlignmentError(f"dt={scheme.dt} is not {mc} * dt_fine={ref.dt_fine}")
    j0 = ref.node_index(t_start)
    j1 = ref.node_index(t_end)
    if j0 % mc:
        raise GridAlignmentError(f"t_start={t_start} is not on the dt-grid through the anchor")
    if j1 < j0:
        raise DomainError("t_end < t_start")
    n_full, rem = divmod(j1 - j0, mc)
    milstein = scheme.kind == MILSTEIN
    if milstein and problem.d > 1:
        warnings.warn("modified Milstein with d > 1 applies stage differences column-wise",
                      stacklevel=3)

    dW = np.stack([noise.coarse_increments(p, t_start, mc, n_full) for p in paths], axis=1)
    if milstein:
        dV = np.stack([noise.coarse_increments(p, t_start, mc, n_full, aux=True)
                       for p in paths], axis=1)
        dZ = noise.mixed_integrals(dW, dV, scheme.dt)
    seeds = [p.seed for p in paths]

    x = np.array(x0, dtype=float).reshape(len(paths), problem.m)
    dt = scheme.dt
    times = [ref.node_time(j0 + i * mc) for i in range(n_full + 1)]
    states = [x] if record else None
    for i in range(n_full):
        t = times[i]
        if milstein:
            x = milstein_step(problem, t, x, dW[i], dZ[i], dt)
        else:
            x = em_step(problem, t, x, dW[i], dt)
        _check_finite(x, i, seeds)
        if record:
            states.append(x)
    if rem:
        tn = times[-1]
        h = rem * ref.dt_fine
        tail = np.stack([noise.coarse_increments(p, tn, rem, 1)[0] for p in paths])
        step = x + problem.f(tn, x) * h
        if scheme.include_linear_remainder:
            step = step + (x @ problem.linear(tn).T) * h
        x = step + _apply_noise(problem.g(tn, x), tail)
        _check_finite(x, n_full, seeds)
        times.append(ref.node_time(j1))
        if record:
            states.append(x)
    if record:
        return np.array(times), np.stack(states)
    return x


def integrate(problem, scheme, path, t_start, t_end, xi):
    """Single-path trajectory from ``t_start`` to ``t_end`` started at ``xi``."""
    x0 = np.atleast_1d(np.asarray(xi, dtype=float)).reshape(1, problem.m)
    times, states = propagate(problem, scheme, [path], t_start, t_end, x0, record=True)
    return Trajectory(times, states[:, 0, :], scheme, path.seed)
