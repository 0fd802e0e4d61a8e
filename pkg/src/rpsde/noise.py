"""Two-sided Wiener paths on a fixed fine grid.

A path stores cumulative sums of Gaussian increments on both sides of an
``anchor`` time, where ``W(anchor) = 0``.  Increments below the anchor come
from a sub-seeded stream independent of the one above it, drawn outward from
the anchor so that widening the window never changes existing increments.

Every increment is rounded to a multiple of ``LATTICE`` (2**-45).  Partial
sums of lattice numbers with magnitude below 2**8 are exact in binary64, so
telescoping sums, coarse aggregation and shift composition hold bitwise no
matter how the additions are associated.  The rounding perturbs each
increment by at most 1.4e-14.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, ExtentError, GridAlignmentError

LATTICE = 2.0 ** -45
GRID_RTOL = 1e-9


def grid_steps(span, step, what="span"):
    """Return ``span / step`` as an int, or raise if it is not integral."""
    if step <= 0:
        raise DomainError(f"step must be positive, got {step}")
    q = span / step
    n = round(q)
    if abs(q - n) > GRID_RTOL * max(1.0, abs(q)):
        raise GridAlignmentError(
            f"{what} {span!r} is not an integer multiple of {step!r} (ratio {q!r})")
    return int(n)


def _draw(seed_seq, n, dim, dt):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    z = rng.standard_normal((n, dim))
    return np.rint(z * (math.sqrt(dt) / LATTICE)) * LATTICE


class _Streams:
    """Prefix sums shared by a path and all of its shifts."""

    def __init__(self, seed, dim, dt_fine, n_left, n_right):
        self.dim = dim
        self.dt_fine = dt_fine
        self.n_left = n_left
        self.n_right = n_right
        self.children = np.random.SeedSequence(seed).spawn(4)

    def _prefix(self, up, down):
        pos = _draw(self.children[up], self.n_right, self.dim, self.dt_fine)
        neg = _draw(self.children[down], self.n_left, self.dim, self.dt_fine)[::-1]
        inc = np.concatenate([neg, pos], axis=0)
        out = np.zeros((inc.shape[0] + 1, self.dim))
        np.cumsum(inc, axis=0, out=out[1:])
        out.setflags(write=False)
        return out

    @cached_property
    def w(self):
        return self._prefix(0, 1)

    @cached_property
    def v(self):
        # auxiliary stream for the mixed integral approximation
        return self._prefix(2, 3)


@dataclass(frozen=True, eq=False)
class WienerPath:
    seed: int
    dim: int
    dt_fine: float
    anchor: float
    n_left: int
    n_right: int
    shift_steps: int = 0
    _streams: _Streams = field(default=None, repr=False)

    @property
    def t_min(self):
        return self.anchor - self.n_left * self.dt_fine

    @property
    def t_max(self):
        return self.anchor + self.n_right * self.dt_fine

    @property
    def increments(self):
        return np.diff(self._streams.w, axis=0)

    @property
    def aux_increments(self):
        return np.diff(self._streams.v, axis=0)

    def node_time(self, j):
        return self.anchor + j * self.dt_fine

    def node_index(self, t):
        """Signed fine-grid index of ``t`` relative to the anchor."""
        j = grid_steps(t - self.anchor, self.dt_fine, what="time offset")
        if not -self.n_left <= j <= self.n_right:
            raise ExtentError(
                f"t={t!r} outside path extent [{self.t_min!r}, {self.t_max!r}]")
        return j

    def _w_nodes(self, j0, j1, stride=1, aux=False):
        prefix = self._streams.v if aux else self._streams.w
        base = prefix[self.n_left]
        return prefix[self.n_left + j0:self.n_left + j1 + 1:stride] - base


def build_path(seed, dim, dt_fine, anchor, t_min, t_max):
    """Build a path covering ``[t_min, t_max]`` with ``W(anchor) = 0``."""
    if dt_fine <= 0:
        raise DomainError(f"dt_fine must be positive, got {dt_fine}")
    if dim < 1:
        raise DomainError(f"dim must be a positive integer, got {dim}")
    if seed < 0:
        raise DomainError("seed must be a nonnegative integer")
    if not t_min <= anchor <= t_max:
        raise DomainError("need t_min <= anchor <= t_max")
    n_left = grid_steps(anchor - t_min, dt_fine, "anchor - t_min")
    n_right = grid_steps(t_max - anchor, dt_fine, "t_max - anchor")
    streams = _Streams(int(seed), int(dim), float(dt_fine), n_left, n_right)
    return WienerPath(int(seed), int(dim), float(dt_fine), float(anchor),
                      n_left, n_right, 0, streams)


def value_at(path, t):
    """W(t) - W(anchor) as a length-``dim`` vector."""
    j = path.node_index(t)
    return path._w_nodes(j, j)[0].copy()


def values_on_grid(path, t_start, t_end, stride=1):
    """Node times and W values on ``[t_start, t_end]`` every ``stride`` fine steps."""
    j0 = path.node_index(t_start)
    j1 = path.node_index(t_end)
    if j1 < j0:
        raise DomainError("t_end < t_start")
    grid_steps(j1 - j0, stride, "node count")
    idx = np.arange(j0, j1 + 1, stride)
    return path.anchor + idx * path.dt_fine, path._w_nodes(j0, j1, stride)


def coarse_increments(path, t_start, m, n_steps, aux=False):
    """Array ``(n_steps, dim)`` of consecutive m-fold aggregated increments."""
    if m < 1 or n_steps < 0:
        raise DomainError("need m >= 1 and n_steps >= 0")
    j0 = path.node_index(t_start)
    j1 = j0 + m * n_steps
    if j1 > path.n_right:
        raise ExtentError(
            f"window of {n_steps} steps from t={t_start!r} exceeds t_max={path.t_max!r}")
    return np.diff(path._w_nodes(j0, j1, m, aux=aux), axis=0)


def coarse_increment(path, t_start, m):
    """Exact sum of the ``m`` fine increments starting at ``t_start``."""
    return coarse_increments(path, t_start, m, 1)[0]


def mixed_integrals(dW, dV, dt):
    """Moment-matched approximation of the double integral of dW ds over a step.

    ``0.5 * dt * (dW + dV / sqrt(3))`` with ``dV`` independent of ``dW`` and
    of the same law has mean 0, variance dt**3/3 and covariance dt**2/2 with
    ``dW``, the exact second moments of the mixed integral.
    """
    return 0.5 * dt * (dW + dV / math.sqrt(3.0))


def delta_z(path, t_start, m):
    dt = m * path.dt_fine
    dW = coarse_increments(path, t_start, m, 1)[0]
    dV = coarse_increments(path, t_start, m, 1, aux=True)[0]
    return mixed_integrals(dW, dV, dt)


def shift(path, n_steps):
    """The Wiener shift by ``n_steps`` fine steps, sharing storage.

    The result satisfies ``value_at(shifted, s) == value_at(path, s + t) -
    value_at(path, anchor + t)`` with ``t = n_steps * dt_fine``.
    """
    n_steps = int(n_steps)
    n_left = path.n_left + n_steps
    n_right = path.n_right - n_steps
    if n_left < 0 or n_right < 0:
        raise ExtentError(
            f"shift by {n_steps} steps moves the anchor outside the stored path")
    return WienerPath(path.seed, path.dim, path.dt_fine, path.anchor,
                      n_left, n_right, path.shift_steps + n_steps, path._streams)


def shift_by_time(path, t):
    return shift(path, grid_steps(t, path.dt_fine, "shift"))
