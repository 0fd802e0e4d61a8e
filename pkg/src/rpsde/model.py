"""SDE problem definitions and checks of the standing conditions.

Problems have the form ``dX = (A X + f(t, X)) dt + g(t, X) dW`` with either a
constant symmetric ``A`` or a periodic matrix function ``A_of_t``.  The drift
and diffusion callables are batched: ``f(t, x)`` takes ``x`` of shape
``(..., m)`` and returns the same shape, ``g(t, x)`` returns ``(..., m, d)``.
They must be pure, since ensembles are evaluated concurrently.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConditionError, DomainError

SYMMETRY_TOL = 1e-12
PERIODICITY_TOL = 1e-10
N_PERIODICITY_PROBES = 16
_PROBE_SEED = 20160718


@dataclass(frozen=True, eq=False)
class SdeProblem:
    m: int
    d: int
    tau: float
    f: Callable
    g: Callable
    A: Optional[np.ndarray] = None
    A_of_t: Optional[Callable] = None
    beta1: float = 0.0
    beta2: float = 0.0
    C0: float = 0.0
    C1: float = 0.0
    C2: float = 0.0
    holder_exponent: float = 0.5
    milstein_ready: bool = False
    name: str = "custom"
    # per-function Hoelder constants; None falls back to C0
    C0_f: Optional[float] = None
    C0_g: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.A is None) == (self.A_of_t is None):
            raise DomainError("give exactly one of A and A_of_t")
        if self.tau <= 0:
            raise DomainError("tau must be positive")
        if self.A is not None:
            A = np.array(self.A, dtype=float).reshape(self.m, self.m)
            A.setflags(write=False)
            object.__setattr__(self, "A", A)

    @property
    def periodic_linear(self):
        return self.A_of_t is not None

    def linear(self, t):
        if self.A is not None:
            return self.A
        return np.asarray(self.A_of_t(t), dtype=float).reshape(self.m, self.m)


@dataclass
class ConditionReport:
    lambda1: float
    lambda_m: float
    rho: float
    dt_max: float
    margin: float
    alpha: float
    checks: list

    @property
    def passed(self):
        return all(ok for _, ok, _ in self.checks)

    def failed(self):
        return [(name, detail) for name, ok, detail in self.checks if not ok]


def _periodicity_defect(problem):
    rng = np.random.default_rng(_PROBE_SEED)
    worst = 0.0
    for _ in range(N_PERIODICITY_PROBES):
        t = rng.uniform(-problem.tau, problem.tau)
        x = rng.normal(0.0, 2.0, size=problem.m)
        for fn in (problem.f, problem.g):
            a = np.asarray(fn(t, x), dtype=float)
            b = np.asarray(fn(t + problem.tau, x), dtype=float)
            scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
            worst = max(worst, float(np.max(np.abs(a - b), initial=0.0)) / scale)
    return worst


def validate(problem, strict=True):
    """Check dissipativity of A and the growth margin, and derive the step-size bound.

    Returns a ConditionReport.  With ``strict`` a failing condition raises
    ConditionError carrying the report.
    """
    if problem.periodic_linear:
        raise ConditionError(
            "A", "linear part is time dependent; reduce it with floquet.lf_transform first")
    A = problem.A
    asym = float(np.max(np.abs(A - A.T)))
    checks = [("A:symmetric", asym <= SYMMETRY_TOL, f"max|A - A^T| = {asym:.3e}")]
    if strict and asym > SYMMETRY_TOL:
        raise ConditionError("A", f"A is not symmetric (max|A - A^T| = {asym:.3e})")

    eig = np.linalg.eigvalsh(0.5 * (A + A.T))
    lambda1, lambda_m = float(eig[-1]), float(eig[0])
    rho = abs(lambda_m)
    neg = lambda1 < 0
    checks.append(("A:negative-definite", neg, f"lambda_1 = {lambda1:.6g}"))

    bound = problem.beta1 + 0.5 * problem.beta2 ** 2
    margin = abs(lambda1) - bound
    alpha = 0.5 * (bound + abs(lambda1))
    periodic = _periodicity_defect(problem)
    constants = min(problem.beta1, problem.beta2, problem.C0, problem.C1, problem.C2)
    checks.append(("1:periodicity", periodic <= PERIODICITY_TOL,
                   f"max relative defect over {N_PERIODICITY_PROBES} probes = {periodic:.3e}"))
    checks.append(("1:margin", neg and margin > 0,
                   f"|lambda_1| - beta1 - beta2^2/2 = {margin:.6g}"))
    checks.append(("1:constants", constants >= 0, "declared constants nonnegative"))

    report = ConditionReport(lambda1, lambda_m, rho, 1.0 / rho if rho > 0 else np.inf,
                             margin, alpha, checks)
    if strict:
        if not neg:
            raise ConditionError(
                "A", f"eigenvalue {lambda1:.6g} of A is not strictly negative", report)
        for name, ok, detail in checks:
            if not ok:
                raise ConditionError(name.split(":")[0], detail, report)
    return report


@dataclass(frozen=True, eq=False)
class InitialCondition:
    """Deterministic vector or per-path sampled initial value."""

    kind: str
    value: Optional[np.ndarray] = None
    sampler: Optional[Callable] = None
    k_star_bound: float = np.inf

    @classmethod
    def fixed(cls, value, k_star=None):
        v = np.atleast_1d(np.asarray(value, dtype=float))
        bound = float(np.linalg.norm(v)) if k_star is None else k_star
        return cls("deterministic", v, None, bound)

    def draw(self, paths, m):
        if self.kind == "deterministic":
            return np.broadcast_to(self.value, (len(paths), m)).astype(float)
        return np.array([np.asarray(self.sampler(p), dtype=float).reshape(m) for p in paths])

    def l2_norm(self, paths, m):
        x = self.draw(paths, m)
        return float(np.sqrt(np.mean(np.sum(x ** 2, axis=-1))))

    def check(self, paths, m):
        """Monte Carlo check that the initial value obeys its L2 bound."""
        return self.l2_norm(paths, m) <= self.k_star_bound


def as_initial(xi):
    if isinstance(xi, InitialCondition):
        return xi
    return InitialCondition.fixed(xi)


@dataclass
class GrowthReport:
    passed: bool
    n_probes: int
    violations: list

    def __bool__(self):
        return self.passed


def growth_violations(problem, t, x):
    """Boolean masks of linear-growth violations at probe points ``(t_i, x_i)``."""
    fv = np.array([np.linalg.norm(np.asarray(problem.f(ti, xi), dtype=float))
                   for ti, xi in zip(t, x)])
    gv = np.array([np.linalg.norm(np.asarray(problem.g(ti, xi), dtype=float))
                   for ti, xi in zip(t, x)])
    nx = np.linalg.norm(x, axis=-1)
    slack = 1e-12 * (1.0 + nx)
    bad_f = fv > problem.beta1 * nx + problem.C1 + slack
    bad_g = gv > problem.beta2 * nx + problem.C2 + slack
    return bad_f, bad_g


def linear_growth_probe(problem, sample_box, n_probes=256, seed=0):
    """Falsification check of ``|f| <= beta1|x| + C1`` and ``|g| <= beta2|x| + C2``.

    ``sample_box`` is ``(low, high)`` for the state; times are drawn over one
    period.  Never raises: violations are listed in the report.
    """
    low, high = sample_box
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, problem.tau, size=n_probes)
    x = rng.uniform(np.broadcast_to(low, problem.m), np.broadcast_to(high, problem.m),
                    size=(n_probes, problem.m))
    bad_f, bad_g = growth_violations(problem, t, x)
    violations = [(float(t[i]), x[i].copy(), "f") for i in np.flatnonzero(bad_f)]
    violations += [(float(t[i]), x[i].copy(), "g") for i in np.flatnonzero(bad_g)]
    return GrowthReport(not violations, n_probes, violations)
