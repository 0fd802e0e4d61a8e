"""Pull-back approximation of random periodic solutions.

The scheme is started at ``-k tau`` from a fixed initial value and run to
the target time ``r``.  As ``k`` grows the values settle on the random
periodic solution of the discretised system.  Convergence is monitored
through the ensemble RMS of the difference between consecutive depths on the
same noise (the Cauchy gap).
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import noise, parallel
from .errors import DivergenceError, DomainError
from .model import as_initial, validate
from .schemes import Trajectory, integrate, propagate

DEFAULT_TOL = 1e-3


@dataclass
class PullbackResult:
    r: float
    dt: float
    k_used: int
    values: np.ndarray
    cauchy_gaps: list
    converged: bool
    seeds: list = field(default_factory=list)

    def to_dict(self):
        return {
            "r": self.r,
            "dt": self.dt,
            "k_used": self.k_used,
            "converged": self.converged,
            "cauchy_gaps": [float(g) for g in self.cauchy_gaps],
            "values": np.asarray(self.values).tolist(),
            "seeds": [int(s) for s in self.seeds],
        }

    def write_json(self, path, extra=None):
        payload = self.to_dict()
        if extra:
            payload.update(extra)
        with open(path, "w", newline="\n") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def rms(diff):
    diff = np.asarray(diff, dtype=float)
    return float(np.sqrt(np.mean(np.sum(diff.reshape(diff.shape[0], -1) ** 2, axis=1))))


def ensemble_flow(problem, scheme, paths, t_start, t_end, x0, threads=1):
    """Final states of ``propagate`` over an ensemble, chunked for the worker pool."""
    idx = parallel.chunks(range(len(paths)), parallel.MAX_CHUNK)

    def task(ix):
        return propagate(problem, scheme, [paths[i] for i in ix], t_start, t_end, x0[ix])

    return np.concatenate(parallel.map_ordered(task, idx, threads), axis=0)


def _check_setup(problem, scheme, r, check):
    if r < 0:
        raise DomainError("target time r must be nonnegative")
    noise.grid_steps(problem.tau, scheme.dt, "tau / dt")
    if check:
        report = validate(problem)
        if scheme.dt > report.dt_max * (1 + 1e-12):
            raise DomainError(f"dt={scheme.dt} exceeds dt_max={report.dt_max}")


def _depth_states(problem, scheme, paths, r, k, x0, threads):
    try:
        return ensemble_flow(problem, scheme, paths, -k * problem.tau, r, x0, threads)
    except DivergenceError as exc:
        raise DivergenceError("pull-back diverged", exc.step, exc.seed, k) from exc


def _sweep_states(problem, scheme, paths, r, k_max, x0):
    # all depths in one pass: depth k joins the batch at -k tau
    n = len(paths)
    batch_paths, x, depths = [], np.empty((0, problem.m)), []
    for k in range(k_max, 0, -1):
        batch_paths = batch_paths + list(paths)
        x = np.concatenate([x, x0], axis=0)
        depths.append(k)
        t1 = -(k - 1) * problem.tau
        x = propagate(problem, scheme, batch_paths, -k * problem.tau, t1, x)
    x = propagate(problem, scheme, batch_paths, 0.0, r, x)
    return {k: x[i * n:(i + 1) * n] for i, k in enumerate(depths)}


def pullback_rps(problem, scheme, paths, r, k_max, tol=DEFAULT_TOL, xi=0.5,
                 threads=1, warm_restart=False, check=True):
    """Deepen the start time one period at a time until the Cauchy gap drops below ``tol``.

    Gap ``k`` is the RMS over paths of ``X_r^{-k tau} - X_r^{-(k+1) tau}``.
    ``values`` holds the deepest computed depth ``k_used``.  Running out of
    depth is reported through ``converged=False``, not raised.
    """
    _check_setup(problem, scheme, r, check)
    if k_max < 1:
        raise DomainError("k_max must be >= 1")
    x0 = as_initial(xi).draw(paths, problem.m)
    gaps = []
    if warm_restart:
        try:
            states = _sweep_states(problem, scheme, paths, r, k_max, x0)
        except DivergenceError as exc:
            raise DivergenceError("pull-back diverged", exc.step, exc.seed) from exc
        get = states.__getitem__
    else:
        cache = {}

        def get(k):
            if k not in cache:
                cache[k] = _depth_states(problem, scheme, paths, r, k, x0, threads)
            return cache[k]

    prev = get(1)
    for k in range(2, k_max + 1):
        cur = get(k)
        gaps.append(rms(cur - prev))
        if gaps[-1] < tol:
            return PullbackResult(r, scheme.dt, k, cur, gaps, True, [p.seed for p in paths])
        prev = cur
    return PullbackResult(r, scheme.dt, k_max, prev, gaps, False, [p.seed for p in paths])


def contraction_ratio(gaps, skip=1):
    """Per-period decay ratio from a log-linear fit of the gaps after ``skip``."""
    g = np.asarray(gaps[skip:], dtype=float)
    if len(g) < 2 or np.any(g <= 0):
        raise DomainError("need at least two positive gaps after the transient")
    slope = np.polyfit(np.arange(len(g), dtype=float), np.log(g), 1)[0]
    return float(math.exp(slope))


def contraction_bound(problem, report=None):
    """Per-period L2 contraction bound ``exp((beta1 + beta2^2/2 - |lambda_1|) tau)``."""
    report = report or validate(problem)
    return math.exp(-report.margin * problem.tau)


@dataclass
class DiagnosticSeries:
    t_grid: np.ndarray
    values: np.ndarray  # (n_t, n_paths, m)
    seeds: list

    def periodicity_defect(self, tau):
        """Max over seeds and grid times of ``|series(t + tau) - series(t)|``."""
        lag = noise.grid_steps(tau, self.t_grid[1] - self.t_grid[0], "tau / t-grid step")
        if lag >= len(self.t_grid):
            raise DomainError("t_grid shorter than one period")
        d = self.values[lag:] - self.values[:-lag]
        return float(np.max(np.abs(d)))

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("t,value,seed\n")
            for i, t in enumerate(self.t_grid):
                for s, seed in enumerate(self.seeds):
                    for v in self.values[i, s]:
                        fh.write(f"{t:.17g},{v:.17g},{seed}\n")


def periodicity_diagnostic(problem, scheme, paths, t_grid, depth=3, xi=0.5, threads=1):
    """``t -> X*_t(theta_{-t} omega)``, pulled back from ``-depth tau`` on the shifted paths.

    For a random periodic solution this series is periodic in ``t``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    x0 = as_initial(xi).draw(paths, problem.m)

    def one(t):
        shifted = [noise.shift_by_time(p, -t) for p in paths]
        return propagate(problem, scheme, shifted, -depth * problem.tau, t, x0)

    values = np.stack(parallel.map_ordered(one, t_grid, threads))
    return DiagnosticSeries(t_grid, values, [p.seed for p in paths])


@dataclass
class ShiftedPair:
    base: Trajectory
    shifted: Trajectory
    compare_times: np.ndarray
    defect: np.ndarray

    @property
    def max_defect(self):
        return float(np.max(np.abs(self.defect))) if len(self.defect) else 0.0

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("trajectory,t,value\n")
            for name, tr in (("omega", self.base), ("theta_minus_tau", self.shifted)):
                for t, row in zip(tr.times, tr.states):
                    for v in row:
                        fh.write(f"{name},{t:.17g},{v:.17g}\n")


def _clip(traj, t0):
    keep = traj.times >= t0 - 1e-12
    return Trajectory(traj.times[keep], traj.states[keep], traj.scheme, traj.seed)


def shifted_pair(problem, scheme, path, window, start, xi=0.5, shift_periods=1):
    """Trajectories on ``omega`` over ``window`` and on ``theta_{-tau} omega`` over
    ``window`` extended by one period, both started at ``start`` from ``xi``.

    ``defect`` compares the shifted trajectory at ``t`` with the base
    trajectory at ``t - tau`` over the window shifted by ``tau``.
    """
    a, b = window
    span = shift_periods * problem.tau
    lag = noise.grid_steps(span, scheme.dt, "tau / dt")
    base = integrate(problem, scheme, path, start, b, xi)
    moved = noise.shift_by_time(path, -span)
    other = integrate(problem, scheme, moved, start, b + span, xi)
    # both trajectories share the start time, so index i + lag in `other` is time t_i + span
    n_base = len(base.times)
    t_cmp = other.times[lag:lag + n_base]
    d = other.states[lag:lag + n_base] - base.states[:len(t_cmp)]
    keep = t_cmp >= a + span - 1e-12
    return ShiftedPair(_clip(base, a), _clip(other, a), t_cmp[keep], d[keep])


def periodicity_identity_gap(problem, scheme, paths, r, depth, xi=0.5, threads=1):
    """RMS of ``X^{-k tau}_{r+tau}(omega) - X^{-k tau}_r(theta_tau omega)``."""
    x0 = as_initial(xi).draw(paths, problem.m)
    lhs = ensemble_flow(problem, scheme, paths, -depth * problem.tau, r + problem.tau, x0, threads)
    moved = [noise.shift_by_time(p, problem.tau) for p in paths]
    rhs = ensemble_flow(problem, scheme, moved, -depth * problem.tau, r, x0, threads)
    return rms(lhs - rhs)
