"""Baseband-equivalent relay loop and the canceler design plant.

Per I/Q pair the design plant realizes

    v   = W w                        (received baseband signal)
    y_c = F (v + alpha * A_L * d)    (receiver input, sampled at period h)
    u   = P (held u_d)               (transmitted, post-filtered signal)
    z   = v - u                      (cancelation error)
    e   = u,  d(t) = e(t - L)        (coupling path, L = k h)

with ``alpha = a1 * a2 * r`` and ``A_L`` the carrier-phase rotation over the
loop delay.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from .lifting import SampledDataPlant, lift_fsfh, regularize
from .lti import ContinuousStateSpace, static_gain
from .synthesis import Controller, hinf_synthesize

__all__ = [
    "RelayParams",
    "tf_to_ss",
    "rotation_matrix",
    "loop_gain",
    "build_design_plant",
    "design_canceler",
    "reference_params",
    "design_lifted_plant",
    "BasebandSignal",
]


@dataclass(frozen=True)
class BasebandSignal:
    """I/Q samples (``2 x n`` array, I on row 0) on a uniform grid."""

    samples: np.ndarray
    period: float

    def __post_init__(self):
        x = np.array(self.samples, dtype=float)
        if x.ndim != 2 or x.shape[0] != 2:
            raise ValueError("baseband samples must have shape (2, n)")
        if not np.all(np.isfinite(x)):
            raise ValueError("baseband samples must be finite")
        if not (np.isfinite(self.period) and self.period > 0):
            raise ValueError("grid period must be positive")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "period", float(self.period))

    def __len__(self):
        return self.samples.shape[1]

    @property
    def energy(self) -> float:
        """``sum |x|^2 * period`` over both channels."""
        return float(np.sum(self.samples ** 2) * self.period)


def tf_to_ss(num, den) -> ContinuousStateSpace:
    """Scalar transfer function (descending powers of s) to state space."""
    num = np.trim_zeros(np.atleast_1d(np.asarray(num, dtype=float)), "f")
    den = np.trim_zeros(np.atleast_1d(np.asarray(den, dtype=float)), "f")
    if den.size == 0:
        raise ValueError("denominator is zero")
    if num.size > den.size:
        raise ValueError("transfer function is improper")
    if den.size == 1:
        return static_gain([[num[0] / den[0] if num.size else 0.0]])
    A, B, C, D = signal.tf2ss(num if num.size else [0.0], den)
    return ContinuousStateSpace(A, B, C, D)


@dataclass(frozen=True)
class RelayParams:
    """Physical and design parameters of the relay station."""

    W: ContinuousStateSpace
    P: ContinuousStateSpace
    F: ContinuousStateSpace = field(default_factory=lambda: static_gain([[1.0]]))
    f: float = 10000.0
    h: float = 1.0
    L: float = 1.0
    r: float = 0.15
    a1: float = 1.0
    a2: float = 2000.0
    N: int = 16

    def __post_init__(self):
        for name in ("h", "r", "a1", "a2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")
        if not (np.isfinite(self.L) and self.L >= 0):
            raise ValueError(f"L must be nonnegative, got {self.L!r}")
        k = self.L / self.h
        if abs(k - round(k)) > 1e-9:
            raise ValueError("L must be an integer multiple of h")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be an integer >= 1")
        for name in ("W", "F", "P"):
            g = getattr(self, name)
            if g.ninputs != 1 or g.noutputs != 1:
                raise ValueError(f"{name} must be a scalar prototype")
            if not g.is_stable():
                raise ValueError(f"{name} must be stable")
        if not self.W.is_strictly_proper():
            raise ValueError("W must be strictly proper")

    @property
    def delay_steps(self) -> int:
        return int(round(self.L / self.h))

    def with_gain(self, a2: float) -> "RelayParams":
        return replace(self, a2=a2)


def reference_params(pulse: str = "squared", **overrides) -> RelayParams:
    """The simulation setting of the relay study (squared or RRC weight)."""
    if pulse == "squared":
        W = tf_to_ss([1.0], [2.0, 1.0])
    elif pulse == "rrc":
        W = tf_to_ss([1.0], np.poly1d([2.0, 1.0]) ** 4)
    else:
        raise ValueError(f"unknown pulse {pulse!r}")
    kw = dict(W=W, P=tf_to_ss([1.0], [0.001, 1.0]), F=static_gain([[1.0]]),
              f=10000.0, h=1.0, L=1.0, r=0.15, a1=1.0, a2=2000.0, N=16)
    kw.update(overrides)
    return RelayParams(**kw)


def rotation_matrix(f: float, L: float) -> np.ndarray:
    """Carrier-phase rotation ``[[cos θ, sin θ], [-sin θ, cos θ]]``, θ = 2πfL.

    The phase is reduced modulo one cycle before the trig calls so that
    e.g. ``f=10000, L=1`` is the identity to machine precision.
    """
    cycles = np.fmod(f * L, 1.0)
    th = 2.0 * np.pi * cycles
    c, s = np.cos(th), np.sin(th)
    return np.array([[c, s], [-s, c]])


def loop_gain(params) -> float:
    """``alpha = a1 * a2 * r``."""
    return float(params.a1 * params.a2 * params.r)


def _pair(g: ContinuousStateSpace) -> ContinuousStateSpace:
    """diag(G, G) over the I/Q channels."""
    I2 = np.eye(2)
    return ContinuousStateSpace(np.kron(I2, g.A), np.kron(I2, g.B),
                                np.kron(I2, g.C), np.kron(I2, g.D))


def build_design_plant(params: RelayParams, alpha: float | None = None) -> SampledDataPlant:
    """Continuous generalized plant with inputs ``[w; u; d]`` and outputs
    ``[z; y; e]`` (two channels each) plus the loop delay.

    State order is ``[x_W; x_F; x_P]``.
    """
    alpha = loop_gain(params) if alpha is None else float(alpha)
    W, F, P = _pair(params.W), _pair(params.F), _pair(params.P)
    AL = rotation_matrix(params.f, params.L)
    nW, nF, nP = W.nstates, F.nstates, P.nstates
    n = nW + nF + nP
    sW, sF, sP = slice(0, nW), slice(nW, nW + nF), slice(nW + nF, n)

    # receiver input r = v + alpha*A_L*d, with v = C_W x_W (W strictly proper)
    A = np.zeros((n, n))
    B = np.zeros((n, 6))
    C = np.zeros((6, n))
    D = np.zeros((6, 6))
    A[sW, sW] = W.A
    B[sW, 0:2] = W.B
    A[sF, sF] = F.A
    A[sF, sW] = F.B @ W.C
    B[sF, 4:6] = alpha * F.B @ AL
    A[sP, sP] = P.A
    B[sP, 2:4] = P.B
    # z = v - u
    C[0:2, sW] = W.C
    C[0:2, sP] = -P.C
    D[0:2, 2:4] = -P.D
    # y = F r
    C[2:4, sF] = F.C
    C[2:4, sW] = F.D @ W.C
    D[2:4, 4:6] = alpha * F.D @ AL
    # e = u
    C[4:6, sP] = P.C
    D[4:6, 2:4] = P.D
    dyn = ContinuousStateSpace(A, B, C, D)
    return SampledDataPlant(dyn, m_w=2, m_u=2, p_z=2, p_y=2, h=params.h,
                            delay_steps=params.delay_steps, m_d=2)


def design_lifted_plant(params: RelayParams, rho: float = 1e-4, eps: float = 1e-4,
                        alpha: float | None = None):
    """The regularized lifted plant that :func:`design_canceler` synthesizes on."""
    return regularize(lift_fsfh(build_design_plant(params, alpha), params.N), rho, eps)


def design_canceler(params: RelayParams, rho: float = 1e-4, eps: float = 1e-4,
                    gamma_lo: float = 1e-3, gamma_hi: float = 1e3,
                    tol: float = 1e-3, alpha: float | None = None) -> Controller:
    """Build the design plant, lift it with ``params.N`` and synthesize.

    ``alpha`` overrides ``a1*a2*r`` (e.g. ``0`` for an interference-free design).
    """
    lifted = design_lifted_plant(params, rho, eps, alpha)
    return hinf_synthesize(lifted, gamma_lo, gamma_hi, tol)

