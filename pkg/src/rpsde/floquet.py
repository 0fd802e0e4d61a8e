"""Lyapunov-Floquet reduction of a periodic linear part.

For ``x' = A(t) x`` with period ``tau`` the fundamental matrix ``Phi`` (with
``Phi(0) = I``) gives the monodromy ``C = Phi(tau)``.  A real ``B`` with
``exp(2 B tau) = C^2`` always exists when ``C^2`` has no eigenvalue on the
closed negative real axis, and ``S(t) = Phi(t) exp(-B t)`` is then real and
``2 tau``-periodic.  Substituting ``X = S(t) Z`` turns the SDE into one with
the constant linear part ``B`` and period ``2 tau``.
"""

import json
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, interpolate, linalg

from . import noise
from .errors import (ConditionError, DomainError, GridAlignmentError,
                     LogarithmExistenceError, NumericalRankError)
from .model import SdeProblem, validate
from .schemes import Trajectory

PERIODICITY_TOL = 1e-10
SYMMETRY_TOL = 1e-10
ARG_TOL = 1e-6
# re-evaluate exp(-B t) exactly every this many nodes to stop recurrence drift
_REANCHOR = 1024


def _check_periodic(A_of_t, tau, n_probes=16):
    rng = np.random.default_rng(7)
    for t in rng.uniform(0.0, tau, n_probes):
        a = np.asarray(A_of_t(t), dtype=float)
        b = np.asarray(A_of_t(t + tau), dtype=float)
        if np.max(np.abs(a - b)) > PERIODICITY_TOL * max(1.0, np.max(np.abs(a))):
            raise ConditionError("A'", f"A(t) is not {tau}-periodic at t={t:.6g}")


def fundamental_matrix(A_of_t, tau, h):
    """Classical RK4 solution of ``Phi' = A(t) Phi``, ``Phi(0) = I`` on ``[0, 2 tau]``.

    Returns an array of shape ``(2 tau / h + 1, m, m)``.
    """
    n = noise.grid_steps(2.0 * tau, h, "2 tau / h")
    _check_periodic(A_of_t, tau)
    A0 = np.atleast_2d(np.asarray(A_of_t(0.0), dtype=float))
    m = A0.shape[0]
    nodes = [A0] + [np.atleast_2d(np.asarray(A_of_t(j * h), dtype=float)) for j in range(1, n + 1)]
    mids = [np.atleast_2d(np.asarray(A_of_t((j + 0.5) * h), dtype=float)) for j in range(n)]
    phi = np.empty((n + 1, m, m))
    P = np.eye(m)
    phi[0] = P
    half = 0.5 * h
    for j in range(n):
        k1 = nodes[j] @ P
        k2 = mids[j] @ (P + half * k1)
        k3 = mids[j] @ (P + half * k2)
        k4 = nodes[j + 1] @ (P + h * k3)
        P = P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        phi[j + 1] = P
    return phi


def monodromy(phi_grid, n_period):
    """``C = Phi(tau) Phi(0)^{-1}`` where node ``n_period`` sits at ``tau``."""
    if n_period >= len(phi_grid):
        raise DomainError("fundamental-matrix grid does not reach tau")
    P0, Pt = phi_grid[0], phi_grid[n_period]
    if np.linalg.cond(Pt) > 1e13 or np.linalg.cond(P0) > 1e13:
        raise NumericalRankError("fundamental matrix is numerically singular; integration failed")
    return Pt @ np.linalg.inv(P0)


def real_log_B(C, tau):
    """Real ``B`` with ``exp(2 B tau) = C @ C``.

    The principal logarithm of ``C^2`` is real whenever no eigenvalue of
    ``C^2`` lies on the closed negative real axis; otherwise
    LogarithmExistenceError names the offending eigenvalue.
    """
    C = np.asarray(C, dtype=float)
    C2 = C @ C
    scale = max(1.0, float(np.max(np.abs(C2))))
    for lam in np.linalg.eigvals(C2):
        # within ARG_TOL of the negative axis the log is too ill-conditioned to trust
        near_axis = lam.real < 0 and np.pi - abs(np.angle(lam)) <= ARG_TOL
        if abs(lam) <= 1e-14 * scale or near_axis:
            raise LogarithmExistenceError(
                f"C^2 has eigenvalue {lam:.6g} on the closed negative real axis; "
                "no real logarithm exists", eigenvalue=complex(lam))
    with warnings.catch_warnings():
        # logm's own error estimate is superseded by log_residual
        warnings.simplefilter("ignore", RuntimeWarning)
        L = linalg.logm(C2)
    if np.iscomplexobj(L):
        if np.max(np.abs(L.imag)) > 1e-8 * max(1.0, np.max(np.abs(L.real))):
            raise LogarithmExistenceError("principal logarithm of C^2 is not real")
        L = L.real
    return L / (2.0 * tau)


def log_residual(B, C, tau):
    C2 = C @ C
    return float(np.linalg.norm(linalg.expm(2.0 * tau * B) - C2) / np.linalg.norm(C2))


@dataclass(eq=False)
class FloquetData:
    tau: float
    h: float
    phi_grid: np.ndarray
    C: np.ndarray
    B: np.ndarray
    s_grid: np.ndarray
    s_inv_grid: np.ndarray
    gamma: float
    residual: float
    meta: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.C.shape[0]

    @property
    def n_nodes(self):
        return len(self.s_grid) - 1

    def node(self, t):
        """Index of ``t mod 2 tau`` on the grid, or None if ``t`` is off-node."""
        span = 2.0 * self.tau
        q = (t % span) / self.h
        j = round(q)
        if abs(q - j) > 1e-7:
            return None
        return j % self.n_nodes

    @cached_property
    def _splines(self):
        t = np.arange(self.n_nodes + 1) * self.h
        s = self.s_grid.copy()
        si = self.s_inv_grid.copy()
        s[-1], si[-1] = s[0], si[0]
        return (interpolate.CubicSpline(t, s, axis=0, bc_type="periodic"),
                interpolate.CubicSpline(t, si, axis=0, bc_type="periodic"))

    def S(self, t, interpolate_off_node=True):
        j = self.node(t)
        if j is not None:
            return self.s_grid[j]
        if not interpolate_off_node:
            raise GridAlignmentError(f"t={t} is not a Floquet grid node (h={self.h})")
        return self._splines[0](t % (2.0 * self.tau))

    def S_inv(self, t, interpolate_off_node=True):
        j = self.node(t)
        if j is not None:
            return self.s_inv_grid[j]
        if not interpolate_off_node:
            raise GridAlignmentError(f"t={t} is not a Floquet grid node (h={self.h})")
        return self._splines[1](t % (2.0 * self.tau))

    def to_dict(self, max_rows=2001):
        stride = max(1, -(-(self.n_nodes + 1) // max_rows))
        idx = np.arange(0, self.n_nodes + 1, stride)
        return {
            "tau": self.tau, "h": self.h, "m": self.m, "n_nodes": self.n_nodes + 1,
            "C": self.C.tolist(), "B": self.B.tolist(), "gamma": self.gamma,
            "log_residual": self.residual,
            "grid_stride": int(stride),
            "t": (idx * self.h).tolist(),
            "S": self.s_grid[idx].reshape(len(idx), -1).tolist(),
            "Phi": self.phi_grid[idx].reshape(len(idx), -1).tolist(),
        }

    def write_json(self, path):
        with open(path, "w", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def _exp_neg_B(B, h, n):
    out = np.empty((n + 1,) + B.shape)
    step = linalg.expm(-B * h)
    E = np.eye(B.shape[0])
    for j in range(n + 1):
        if j % _REANCHOR == 0:
            E = linalg.expm(-B * (j * h))
        out[j] = E
        E = E @ step
    return out


def floquet_data(A_of_t, tau, h):
    phi = fundamental_matrix(A_of_t, tau, h)
    n = len(phi) - 1
    C = monodromy(phi, n // 2)
    B = real_log_B(C, tau)
    S = phi @ _exp_neg_B(B, h, n)
    S_inv = np.linalg.inv(S)
    norms = np.linalg.norm(S, axis=(1, 2)) * np.linalg.norm(S_inv, axis=(1, 2))
    return FloquetData(tau, h, phi, C, B, S, S_inv, float(norms.max()), log_residual(B, C, tau))


@dataclass(eq=False)
class LfTransform:
    problem: SdeProblem
    floquet: FloquetData
    report: object

    def to_z(self, t, x):
        return np.asarray(x, dtype=float) @ self.floquet.S_inv(t).T

    def to_x(self, t, z):
        return np.asarray(z, dtype=float) @ self.floquet.S(t).T


def lf_transform(problem, floquet):
    """Rewrite a periodic-``A(t)`` problem in the variable ``Z = S(t)^{-1} X``.

    The result has linear part ``B``, period ``2 tau``, drift
    ``S^{-1} f(t, S z)`` and diffusion ``S^{-1} g(t, S z)``.  Its Lipschitz
    constants are the originals inflated by ``gamma``.  Raises
    ConditionError when ``B`` is not symmetric negative definite (A') or the
    inflated margin is not positive (1').
    """
    if not problem.periodic_linear:
        raise DomainError("lf_transform needs a problem with A_of_t")
    B = floquet.B
    asym = float(np.max(np.abs(B - B.T)))
    if asym > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(B)))):
        raise ConditionError("A'", f"B is not symmetric (max|B - B^T| = {asym:.3e})")
    eig = np.linalg.eigvalsh(0.5 * (B + B.T))
    if eig[-1] >= 0:
        raise ConditionError("A'", f"B has nonnegative eigenvalue {eig[-1]:.6g}")

    fl = floquet
    f_orig, g_orig = problem.f, problem.g

    def f(t, z):
        return f_orig(t, z @ fl.S(t).T) @ fl.S_inv(t).T

    def g(t, z):
        return np.matmul(fl.S_inv(t), g_orig(t, z @ fl.S(t).T))

    inv_max = float(np.max(np.linalg.norm(fl.s_inv_grid, axis=(1, 2))))
    z_problem = SdeProblem(
        m=problem.m, d=problem.d, tau=2.0 * problem.tau, f=f, g=g, A=0.5 * (B + B.T),
        beta1=problem.beta1 * fl.gamma, beta2=problem.beta2 * fl.gamma, C0=problem.C0,
        C1=problem.C1 * inv_max, C2=problem.C2 * inv_max,
        holder_exponent=problem.holder_exponent, milstein_ready=problem.milstein_ready,
        name=f"{problem.name}/floquet", meta={"floquet": fl, "original": problem})
    try:
        report = validate(z_problem)
    except ConditionError as exc:
        raise ConditionError("1'", str(exc), exc.report) from exc
    return LfTransform(z_problem, fl, report)


def forced_periodic_solution(floquet, forcing, t, tail_tol=1e-16):
    """Periodic solution of ``x' = A(t) x + F(t)`` at a grid time ``t``.

    Evaluates ``z*(t) = int_{-inf}^t exp(B (t - s)) S^{-1}(s) F(s) ds`` by
    Simpson's rule on the Floquet nodes, truncated once ``exp(lambda_max L)``
    drops below ``tail_tol``, and returns ``S(t) z*(t)``.  Needs ``B``
    to be stable.
    """
    j_t = floquet.node(t)
    if j_t is None:
        raise GridAlignmentError(f"t={t} is not a Floquet grid node (h={floquet.h})")
    lam = float(np.max(np.linalg.eigvals(floquet.B).real))
    if lam >= 0:
        raise DomainError("B is not stable; no bounded periodic solution")
    n_per = floquet.n_nodes
    n_back = n_per * int(np.ceil(-np.log(tail_tol) / (-lam * 2.0 * floquet.tau)))
    h = floquet.h
    # node t - u_k for u_k = k h, k = 0..n_back
    idx = (j_t - np.arange(n_back + 1)) % n_per
    s_vals = t - np.arange(n_back + 1) * h
    F = np.array([np.atleast_1d(np.asarray(forcing(s), dtype=float)) for s in s_vals])
    g = np.einsum("kij,kj->ki", floquet.s_inv_grid[idx], F)
    E = _exp_neg_B(-floquet.B, h, n_back)  # exp(B u_k)
    vals = np.einsum("kij,kj->ki", E, g)
    z = integrate.simpson(vals, dx=h, axis=0)
    return floquet.s_grid[j_t] @ z


def map_back(floquet, z_trajectory):
    """``X(t) = S(t) Z(t)`` at every node of a trajectory on the Floquet grid."""
    states = np.array([floquet.S(t, interpolate_off_node=False) @ z
                       for t, z in zip(z_trajectory.times, z_trajectory.states)])
    return Trajectory(z_trajectory.times.copy(), states, z_trajectory.scheme, z_trajectory.seed)


def map_forward(floquet, x_trajectory):
    states = np.array([floquet.S_inv(t, interpolate_off_node=False) @ x
                       for t, x in zip(x_trajectory.times, x_trajectory.states)])
    return Trajectory(x_trajectory.times.copy(), states, x_trajectory.scheme, x_trajectory.seed)
