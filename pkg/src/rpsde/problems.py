"""Named builtin problems used by the CLI and the tests."""

import math

import numpy as np

from .model import SdeProblem
from .oracle import LinearScalarProblem


def linear_family(a=-math.pi, c=1.0, amplitude=1.0, tau=2.0, name="linear"):
    """``dX = (a X + amplitude sin(2 pi t / tau)) dt + c X dW``."""
    w = 2.0 * math.pi / tau
    return LinearScalarProblem(
        a=a, c=c, forcing=lambda t: amplitude * np.sin(w * np.asarray(t)), tau=tau,
        forcing_bound=abs(amplitude), forcing_holder=abs(amplitude) * math.sqrt(2.0 * w),
        name=name)


def example1():
    """``dX = -pi X dt + sin(pi t) dt + X dW`` with period 2."""
    return linear_family(-math.pi, 1.0, 1.0, 2.0, name="example1")


def nonlinear(a=-math.pi, b=0.5, c=0.5, tau=2.0):
    """Bounded nonlinear drift ``sin(2 pi t/tau) + b sin(x)``; no closed-form solution."""
    w = 2.0 * math.pi / tau
    return SdeProblem(
        m=1, d=1, tau=tau,
        f=lambda t, x: math.sin(w * t) + b * np.sin(x),
        g=lambda t, x: c * np.asarray(x)[..., None],
        A=[[a]], beta1=abs(b), beta2=abs(c), C0=math.sqrt(2.0 * w), C1=1.0, C2=0.0,
        milstein_ready=True, name="nonlinear")


def mathieu(a0=-math.pi, c=0.1, amplitude=1.0, tau=1.0):
    """Scalar periodic linear part ``a(t) = a0 + cos(2 pi t / tau)``.

    The Floquet exponent is ``a0`` since the cosine averages out over a period.
    """
    w = 2.0 * math.pi / tau
    return SdeProblem(
        m=1, d=1, tau=tau,
        f=lambda t, x: amplitude * math.sin(w * t) * np.ones_like(x),
        g=lambda t, x: c * np.asarray(x)[..., None],
        A_of_t=lambda t: np.array([[a0 + math.cos(w * t)]]),
        beta1=0.0, beta2=abs(c), C0=abs(amplitude) * math.sqrt(2.0 * w),
        C1=abs(amplitude), C2=0.0, milstein_ready=True, name="mathieu",
        meta={"a0": a0})


def constant_matrix(matrix, tau=1.0, c=0.0):
    """Periodic-form problem whose ``A(t)`` is constant; used for Floquet checks."""
    M = np.array(matrix, dtype=float)
    m = M.shape[0]
    return SdeProblem(
        m=m, d=1, tau=tau,
        f=lambda t, x: np.zeros_like(x),
        g=lambda t, x: c * np.asarray(x)[..., None],
        A_of_t=lambda t: M, beta1=0.0, beta2=abs(c), name="constant_matrix")


BUILTINS = ("example1", "linear", "nonlinear", "mathieu", "constant_matrix")
