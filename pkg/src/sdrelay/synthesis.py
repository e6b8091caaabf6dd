"""Discrete-time H-infinity synthesis by gamma-iteration and closed-loop
certification.

Construction of the central controller at a given ``gamma``:

1. Full information.  The X-Riccati equation of the plant with the
   indefinite weight ``[D11 D12]'[D11 D12] - diag(gamma^2 I, 0)`` gives the
   worst-case disturbance ``F1 x`` and the optimal control ``F2 x`` and a
   factorization ``||z||^2 - gamma^2 ||w||^2 = ||v||^2 - ||r||^2``.
2. Output estimation.  In the transformed variables the problem is to make
   ``r -> v`` contractive.  Its transpose is again a full-information
   problem; solving that one (the Z-Riccati equation, ``gamma = 1``) yields
   an a-posteriori H-infinity filter, which is the controller.

Existence is decided by the stabilizing X and Y solutions of the two standard
Riccati equations together with ``rho(XY) < gamma^2``; the Z solution is
cross-checked as well.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .lifting import DiscreteGeneralizedPlant
from .lti import (DiscreteStateSpace, NoStabilizingSolutionError,
                  NormUndefinedError, dare_solve, hinf_norm_discrete, lower_lft,
                  spectral_radius)

__all__ = [
    "Controller",
    "InfeasibleError",
    "StructuralError",
    "SynthesisFailure",
    "hinf_synthesize",
    "central_controller",
    "certify",
]

log = logging.getLogger(__name__)

STAB_MARGIN = 1e-8
COUPLING_MARGIN = 1e-8
CERT_SLACK = 1e-4


class InfeasibleError(RuntimeError):
    """No controller achieves the requested bound."""

    def __init__(self, msg, largest_gamma=None):
        super().__init__(msg)
        self.largest_gamma = largest_gamma


class StructuralError(ValueError):
    """Plant violates stabilizability/detectability or rank conditions."""


class SynthesisFailure(RuntimeError):
    """Riccati conditions hold at gamma but the controller fails certification."""


@dataclass(frozen=True)
class Controller:
    K: DiscreteStateSpace
    gamma: float
    N: int = 1
    history: tuple = field(default=())
    closed_loop_norm: float = float("nan")
    closed_loop_radius: float = float("nan")


@dataclass
class _FullInfo:
    X: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    S21: np.ndarray
    S22: np.ndarray
    nabla: np.ndarray


def _is_posdef(M, rtol=1e-12):
    if M.size == 0:
        return True
    M = 0.5 * (M + M.T)
    ev = np.linalg.eigvalsh(M)
    # relative to the matrix's own scale: after the gamma-normalized
    # transformation legitimate blocks can be ~1e-14 in absolute terms
    scale = np.abs(ev).max()
    return bool(scale > 0 and ev.min() > rtol * scale)


def _full_information(A, B1, B2, C1, D11, D12, gamma, x0=None):
    """X-Riccati step; raises NoStabilizingSolutionError when infeasible."""
    m1 = B1.shape[1]
    B = np.hstack([B1, B2])
    D1 = np.hstack([D11, D12])
    R = D1.T @ D1
    R[:m1, :m1] -= gamma**2 * np.eye(m1)
    sol = dare_solve(A, B, C1.T @ C1, R, C1.T @ D1, margin=STAB_MARGIN, residual_tol=1e-6,
                     x0=x0)
    X = sol.X
    n = A.shape[0]
    if n and np.linalg.eigvalsh(X).min() < -1e-8 * max(1.0, np.abs(X).max()):
        raise NoStabilizingSolutionError("X is not positive semidefinite")
    S = R + B.T @ X @ B
    S11, S12, S21, S22 = S[:m1, :m1], S[:m1, m1:], S[m1:, :m1], S[m1:, m1:]
    if not _is_posdef(S22):
        raise NoStabilizingSolutionError("D12'D12 + B2'XB2 is not positive definite")
    nabla = S12 @ la.solve(S22, S21, assume_a="pos") - S11
    nabla = 0.5 * (nabla + nabla.T)
    if not _is_posdef(nabla, 1e-10):
        raise NoStabilizingSolutionError("inertia condition fails (worst-case block not definite)")
    F = -sol.gain
    return _FullInfo(X, F[:m1], F[m1:], S21, S22, nabla)


def _riccati_pair(P: DiscreteGeneralizedPlant, gamma, warm):
    """X, Y and coupling tests of the standard existence conditions."""
    fi = _full_information(P.A, P.B1, P.B2, P.C1, P.D11, P.D12, gamma, warm.get("X"))
    # Y: dual data (A', [C1' C2'], B1', [D11' D21'])
    fy = _full_information(P.A.T, P.C1.T, P.C2.T, P.B1.T, P.D11.T, P.D21.T, gamma,
                           warm.get("Y"))
    rho = spectral_radius(fi.X @ fy.X) if P.nstates else 0.0
    if rho >= gamma**2 * (1.0 - COUPLING_MARGIN):
        raise NoStabilizingSolutionError(f"coupling condition fails: rho(XY)={rho:.4g}")
    return fi, fy, rho


def central_controller(P: DiscreteGeneralizedPlant, gamma: float,
                       warm: dict | None = None) -> DiscreteStateSpace:
    """Central gamma-suboptimal controller; raises NoStabilizingSolutionError
    when the existence conditions fail at ``gamma``.

    ``warm`` may hold Riccati solutions ``X``, ``Y``, ``Z`` of a nearby
    ``gamma``; they are only used as fallback starting points and the dict is
    updated in place on success.
    """
    if np.any(P.D22):
        raise StructuralError("D22 must be zero")
    warm = {} if warm is None else warm
    fi, fy, _ = _riccati_pair(P, gamma, warm)
    A, B1, B2, C2, D21 = P.A, P.B1, P.B2, P.C2, P.D21
    n, m2 = P.nstates, P.m2

    # r = Nr (w - F1 x),  v = V^{-T} S21 (w - F1 x) + V (u - F2 x)
    Nr = la.cholesky(fi.nabla)            # nabla = Nr' Nr
    V = la.cholesky(0.5 * (fi.S22 + fi.S22.T))  # S22 = V' V
    Nri = la.solve_triangular(Nr, np.eye(Nr.shape[0]))
    Vi = la.solve_triangular(V, np.eye(m2))
    At = A + B1 @ fi.F1
    Bt = B1 @ Nri
    C1t = -V @ fi.F2
    D11t = la.solve_triangular(V, fi.S21, trans="T") @ Nri
    C2t = C2 + D21 @ fi.F1
    D21t = D21 @ Nri

    # transpose of the a-posteriori filtering problem is full information
    fz = _full_information(At.T, C1t.T, C2t.T, Bt.T, D11t.T, D21t.T, 1.0, warm.get("Z"))
    warm.update(X=fi.X, Y=fy.X, Z=fz.X)
    Kw = la.solve(fz.S22, fz.S21, assume_a="pos")
    Kx = fz.F2 + Kw @ fz.F1
    M = -Kx.T            # observer gain on the innovation
    Ng = Kw.T            # direct innovation weight in the estimate

    AK = At - M @ C2t - B2 @ Vi @ (C1t - Ng @ C2t)
    BK = M - B2 @ Vi @ Ng
    CK = -Vi @ (C1t - Ng @ C2t)
    DK = -Vi @ Ng
    return DiscreteStateSpace(AK.reshape(n, n), BK.reshape(n, P.p2),
                              CK.reshape(m2, n), DK, P.period)


def _feasible(P, gamma, warm=None):
    try:
        return central_controller(P, gamma, warm), None
    except (NoStabilizingSolutionError, la.LinAlgError, np.linalg.LinAlgError) as exc:
        return None, str(exc)


def certify(plant: DiscreteGeneralizedPlant, K: DiscreteStateSpace, tol: float = 1e-6):
    """Close ``K`` around ``plant``; return ``(stable, lifted H-infinity norm)``.

    The norm is ``inf`` when the closed loop is unstable.
    """
    cl = lower_lft(plant.sys, K, plant.p2, plant.m2)
    radius = spectral_radius(cl.A)
    if radius >= 1.0:
        return False, float("inf")
    try:
        return True, hinf_norm_discrete(cl, tol=tol)
    except NormUndefinedError:
        return False, float("inf")


def _check_structure(P: DiscreteGeneralizedPlant):
    full12, full21 = P.rank_conditions()
    if not (full12 and full21):
        raise StructuralError("D12 must have full column rank and D21 full row rank "
                              "(regularize the plant first)")
    n = P.nstates
    if n == 0:
        return
    ev = np.linalg.eigvals(P.A)
    for lam in ev[np.abs(ev) >= 1.0 - 1e-12]:
        # PBH tests on the unstable modes
        M = np.hstack([P.A - lam * np.eye(n), P.B2])
        if np.linalg.matrix_rank(M, tol=1e-9 * max(1.0, np.abs(M).max())) < n:
            raise StructuralError("(A, B2) is not stabilizable")
        M = np.vstack([P.A - lam * np.eye(n), P.C2])
        if np.linalg.matrix_rank(M, tol=1e-9 * max(1.0, np.abs(M).max())) < n:
            raise StructuralError("(C2, A) is not detectable")


def hinf_synthesize(plant: DiscreteGeneralizedPlant, gamma_lo: float = 1e-3,
                    gamma_hi: float = 1e3, tol: float = 1e-3,
                    max_iter: int = 60) -> Controller:
    """Smallest feasible gamma within relative ``tol`` by bisection.

    The returned :class:`Controller` is certified: closed loop stable and
    lifted norm ``<= gamma * (1 + 1e-4)``.
    """
    if not (0 < gamma_lo < gamma_hi):
        raise ValueError("need 0 < gamma_lo < gamma_hi")
    _check_structure(plant)
    history = []
    warm = {}

    def test(g):
        K, why = _feasible(plant, g, warm)
        history.append((g, K is not None))
        log.debug("gamma=%.6g feasible=%s %s", g, K is not None, why or "")
        return K

    K_hi = test(gamma_hi)
    if K_hi is None:
        raise InfeasibleError(f"infeasible at gamma_hi={gamma_hi:g}", largest_gamma=gamma_hi)
    K_lo = test(gamma_lo)
    lo, hi = gamma_lo, gamma_hi
    if K_lo is not None:
        hi, K_hi = lo, K_lo
    else:
        for _ in range(max_iter):
            if hi <= lo * (1.0 + tol):
                break
            mid = np.sqrt(lo * hi)
            Km = test(mid)
            if Km is None:
                lo = mid
            else:
                hi, K_hi = mid, Km
    _check_bracket(history)

    # certify; back off slightly if the near-optimal controller is marginal
    gamma, K = hi, K_hi
    for _ in range(20):
        stable, norm = certify(plant, K)
        if stable and norm <= gamma * (1.0 + CERT_SLACK):
            rad = spectral_radius(lower_lft(plant.sys, K, plant.p2, plant.m2).A)
            return Controller(K, float(gamma), plant.N, tuple(history), float(norm), rad)
        log.info("certification failed at gamma=%.6g (stable=%s, norm=%.6g); backing off",
                 gamma, stable, norm)
        gamma *= 1.0 + tol
        K = test(gamma)
        while K is None:
            gamma *= 1.0 + tol
            K = test(gamma)
    raise SynthesisFailure("could not certify a controller near the optimal gamma")


def _check_bracket(history):
    feas = [g for g, ok in history if ok]
    infeas = [g for g, ok in history if not ok]
    if feas and infeas and min(feas) <= max(infeas):
        raise SynthesisFailure("feasibility is not monotone in gamma")
