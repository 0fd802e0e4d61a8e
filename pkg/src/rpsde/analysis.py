"""Strong-error studies, order fits and empirical periodic measures.

Strong errors compare the pulled-back scheme value with the exact random
periodic solution evaluated on the same fine Wiener path.  Weak comparisons
use independent seed sets for the two measures and the order-1 Wasserstein
distance, capped at 2, as a computable upper bound of the bounded-Lipschitz
metric.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import noise, parallel
from .errors import DegenerateFitError, DomainError
from .model import as_initial, validate
from .oracle import LinearScalarProblem, exact_rps
from .schemes import SchemeConfig, propagate

PROXY_NOTE = ("weak distance is min(W1, 2) on empirical marginals, an upper bound of the "
              "bounded-Lipschitz metric (W1 proxy); for m > 1 the max over coordinates")


@dataclass
class ErrorRow:
    dt: float
    rmse: float
    n: int
    stderr: float


@dataclass
class ErrorTable:
    rows: list
    meta: dict = field(default_factory=dict)
    errors: np.ndarray = None  # per-seed absolute errors, (n_seeds, n_dt)

    def __post_init__(self):
        dts = [r.dt for r in self.rows]
        if len(set(dts)) != len(dts) or any(d <= 0 for d in dts):
            raise DomainError("dt values must be distinct and positive")

    @property
    def dts(self):
        return np.array([r.dt for r in self.rows])

    @property
    def rmse(self):
        return np.array([r.rmse for r in self.rows])

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("dt,rmse,n,stderr\n")
            for r in self.rows:
                fh.write(f"{r.dt:.17g},{r.rmse:.17g},{r.n},{r.stderr:.17g}\n")


def jackknife_rmse(sq_errors):
    """RMSE and its leave-one-out jackknife standard error."""
    e2 = np.asarray(sq_errors, dtype=float)
    n = len(e2)
    total = e2.sum()
    est = math.sqrt(total / n)
    if n < 2:
        return est, 0.0
    loo = np.sqrt((total - e2) / (n - 1))
    return est, float(math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


def _resolve_truth(problem, reference_dt, dt_list):
    if isinstance(problem, LinearScalarProblem):
        return problem.to_problem(), problem
    lp = problem.meta.get("oracle") if problem.meta else None
    if lp is not None:
        return problem, lp
    if reference_dt is None:
        raise DomainError(
            f"problem {problem.name!r} has no exact oracle; give a reference_dt for surrogate truth")
    if reference_dt > min(dt_list) / 8 * (1 + 1e-12):
        raise DomainError("reference_dt must be <= min(dt_list) / 8")
    return problem, None


def _schemes(problem, kind, dt_list, dt_fine, dt_max):
    return [SchemeConfig.build(kind, dt, dt_fine, tau=problem.tau, dt_max=dt_max)
            for dt in dt_list]


def _seed_list(n_seeds, base_seed, seeds):
    if seeds is not None:
        return [int(s) for s in seeds]
    return list(range(base_seed, base_seed + n_seeds))


@dataclass
class _Setup:
    problem: object
    oracle: object
    dt_fine: float
    t_min: float
    truncation_T: float
    reference: object


def _setup(problem, dt_list, r, pullback_depth, dt_fine, truncation_T, reference_dt,
           reference_kind):
    if r < 0:
        raise DomainError("r must be nonnegative")
    sde, lp = _resolve_truth(problem, reference_dt, dt_list)
    if dt_fine is None:
        dt_fine = min(dt_list) / 10 if lp is not None else reference_dt
    if truncation_T is None:
        truncation_T = pullback_depth * sde.tau + r
    start = -pullback_depth * sde.tau
    t_min = min(start, r - truncation_T) if lp is not None else start
    ref = None
    if lp is None:
        ref = SchemeConfig.build(reference_kind, reference_dt, dt_fine, tau=sde.tau)
    return _Setup(sde, lp, dt_fine, t_min, truncation_T, ref)


def _truth(setup, paths, r, pullback_depth, x0):
    if setup.oracle is not None:
        return np.array([[exact_rps(setup.oracle, p, r, setup.truncation_T)[0]] for p in paths])
    return propagate(setup.problem, setup.reference, paths, -pullback_depth * setup.problem.tau,
                     r, x0)


def _build(seeds, s, dim, r):
    return [noise.build_path(seed, dim, s.dt_fine, 0.0, s.t_min, r) for seed in seeds]


def strong_error_study(problem, scheme_kind, dt_list, n_seeds=1000, r=0.0, pullback_depth=3,
                       dt_fine=None, base_seed=0, seeds=None, xi=0.5, truncation_T=None,
                       reference_dt=None, reference_kind="modified-milstein", threads=1):
    """RMSE over seeds of the pulled-back scheme value against the truth at ``r``.

    The truth is the exact random periodic solution when the problem is
    linear scalar, otherwise the same pull-back run at ``reference_dt``.
    """
    if len(dt_list) < 1:
        raise DomainError("empty dt_list")
    s = _setup(problem, dt_list, r, pullback_depth, dt_fine, truncation_T, reference_dt,
               reference_kind)
    report = validate(s.problem)
    configs = _schemes(s.problem, scheme_kind, dt_list, s.dt_fine, report.dt_max)
    seeds = _seed_list(n_seeds, base_seed, seeds)
    init = as_initial(xi)
    n_nodes = (r - s.t_min) / s.dt_fine

    def task(chunk):
        paths = _build(chunk, s, s.problem.d, r)
        x0 = init.draw(paths, s.problem.m)
        truth = _truth(s, paths, r, pullback_depth, x0)
        cols = []
        for cfg in configs:
            est = propagate(s.problem, cfg, paths, -pullback_depth * s.problem.tau, r, x0)
            cols.append(np.linalg.norm(est - truth, axis=1))
        return np.stack(cols, axis=1)

    errs = np.concatenate(parallel.map_ordered(
        task, parallel.chunks(seeds, parallel.chunk_size(n_nodes)), threads), axis=0)
    rows = []
    for j, dt in enumerate(dt_list):
        est, se = jackknife_rmse(errs[:, j] ** 2)
        rows.append(ErrorRow(float(dt), est, len(seeds), se))
    meta = {
        "scheme": scheme_kind, "r": r, "pullback_depth": pullback_depth,
        "dt_fine": s.dt_fine, "seeds": [seeds[0], seeds[-1], len(seeds)],
        "truth": "exact" if s.oracle is not None else f"reference dt={reference_dt}",
        "truncation_T": s.truncation_T if s.oracle is not None else None,
    }
    return ErrorTable(rows, meta, errs)


@dataclass
class OrderFit:
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float
    ci_low: float
    ci_high: float

    def to_dict(self):
        return dict(self.__dict__)


def fit_order(table):
    """Least-squares line through ``(log dt, log rmse)``."""
    rows = table.rows if isinstance(table, ErrorTable) else table
    if len(rows) < 3:
        raise DegenerateFitError("need at least 3 rows to fit an order")
    dt = np.array([r.dt for r in rows], dtype=float)
    err = np.array([r.rmse for r in rows], dtype=float)
    if np.any(err <= 0):
        raise DegenerateFitError("rmse must be positive in every row")
    res = stats.linregress(np.log(dt), np.log(err))
    half = stats.t.ppf(0.975, len(rows) - 2) * res.stderr
    return OrderFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2),
                    float(res.stderr), float(res.slope - half), float(res.slope + half))


@dataclass
class EmpiricalMeasure:
    samples: np.ndarray
    sorted_marginals: np.ndarray  # (m, n)

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    @property
    def weights(self):
        return np.full(self.n, 1.0 / self.n)

    def cdf(self, x, coord=0):
        return np.searchsorted(self.sorted_marginals[coord], x, side="right") / self.n


def empirical_measure(samples):
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise DomainError("empirical measure needs at least one sample")
    if not np.all(np.isfinite(x)):
        raise DomainError("samples must be finite")
    return EmpiricalMeasure(x, np.sort(x, axis=0).T.copy())


def weak_distance(mu, nu):
    """``min(W1, 2)`` between empirical marginals; max over coordinates when m > 1."""
    if mu.dim != nu.dim:
        raise DomainError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    w = max(stats.wasserstein_distance(mu.sorted_marginals[i], nu.sorted_marginals[i])
            for i in range(mu.dim))
    return float(min(w, 2.0))


def bootstrap_distance(a, b, n_boot=500, seed=0):
    """Bootstrap standard error and 95% percentile interval of ``weak_distance``."""
    rng = np.random.default_rng(seed)
    a = np.asarray(a, dtype=float).reshape(len(a), -1)
    b = np.asarray(b, dtype=float).reshape(len(b), -1)
    out = np.empty(n_boot)
    for i in range(n_boot):
        ia = rng.integers(0, len(a), len(a))
        ib = rng.integers(0, len(b), len(b))
        out[i] = weak_distance(empirical_measure(a[ia]), empirical_measure(b[ib]))
    return float(out.std(ddof=1)), float(np.percentile(out, 2.5)), float(np.percentile(out, 97.5))


@dataclass
class MeasureRow:
    dt: float
    distance: float
    ci_low: float
    ci_high: float
    boot_se: float
    strong_rmse: float
    strong_se: float


@dataclass
class MeasureStudy:
    rows: list
    meta: dict = field(default_factory=dict)

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("dt,distance,ci_low,ci_high,boot_se,strong_rmse,strong_se\n")
            for r in self.rows:
                vals = (r.dt, r.distance, r.ci_low, r.ci_high, r.boot_se, r.strong_rmse,
                        r.strong_se)
                fh.write(",".join(f"{v:.17g}" for v in vals) + "\n")


def periodic_measure_convergence(problem, scheme_kind, r, dt_list, n_seeds=5000,
                                 pullback_depth=3, dt_fine=None, base_seed=0,
                                 truth_seed_offset=1_000_000, n_boot=500, boot_seed=12345,
                                 xi=0.5, truncation_T=None, reference_dt=None,
                                 reference_kind="modified-milstein", self_test=False,
                                 threads=1):
    """Weak distance between the scheme's periodic measure at ``r`` and the exact one.

    The two empirical measures come from disjoint seed sets.  Each row also
    reports the coupled strong RMSE on the scheme seeds, which bounds the
    weak distance up to sampling noise.  ``self_test`` compares the truth
    generator with itself on the same seeds.
    """
    s = _setup(problem, dt_list, r, pullback_depth, dt_fine, truncation_T, reference_dt,
               reference_kind)
    report = validate(s.problem)
    configs = _schemes(s.problem, scheme_kind, dt_list, s.dt_fine, report.dt_max)
    scheme_seeds = list(range(base_seed, base_seed + n_seeds))
    truth_seeds = scheme_seeds if self_test else [x + truth_seed_offset for x in scheme_seeds]
    init = as_initial(xi)
    size = parallel.chunk_size((r - s.t_min) / s.dt_fine)

    def truth_task(chunk):
        paths = _build(chunk, s, s.problem.d, r)
        return _truth(s, paths, r, pullback_depth, init.draw(paths, s.problem.m))

    def scheme_task(chunk):
        paths = _build(chunk, s, s.problem.d, r)
        x0 = init.draw(paths, s.problem.m)
        truth = _truth(s, paths, r, pullback_depth, x0)
        ests = [propagate(s.problem, cfg, paths, -pullback_depth * s.problem.tau, r, x0)
                for cfg in configs]
        return np.stack(ests), truth

    truth_samples = np.concatenate(parallel.map_ordered(
        truth_task, parallel.chunks(truth_seeds, size), threads), axis=0)
    parts = parallel.map_ordered(scheme_task, parallel.chunks(scheme_seeds, size), threads)
    ests = np.concatenate([p[0] for p in parts], axis=1)
    coupled = np.concatenate([p[1] for p in parts], axis=0)

    rho_truth = empirical_measure(truth_samples)
    rows = []
    for j, dt in enumerate(dt_list):
        sample = coupled if self_test else ests[j]
        dist = weak_distance(empirical_measure(sample), rho_truth)
        se, lo, hi = bootstrap_distance(sample, truth_samples, n_boot, boot_seed + j)
        strong, strong_se = jackknife_rmse(np.sum((ests[j] - coupled) ** 2, axis=1))
        rows.append(MeasureRow(float(dt), dist, lo, hi, se, strong, strong_se))
    meta = {"scheme": scheme_kind, "r": r, "pullback_depth": pullback_depth,
            "dt_fine": s.dt_fine, "n_samples": n_seeds, "n_boot": n_boot,
            "truth": "exact" if s.oracle is not None else f"reference dt={reference_dt}",
            "self_test": self_test, "proxy_metrics": PROXY_NOTE}
    return MeasureStudy(rows, meta)
