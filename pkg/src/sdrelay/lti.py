"""State-space linear systems: construction, interconnection, discretization,
stability, H-infinity norms and discrete Riccati equations.

Systems are immutable.  Matrices are stored as read-only float arrays so a
system can be shared freely between threads or worker processes.
"""

from __future__ import annotations

import warnings

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

__all__ = [
    "StateSpace",
    "ContinuousStateSpace",
    "DiscreteStateSpace",
    "DareSolution",
    "DimensionError",
    "WellPosednessError",
    "NormUndefinedError",
    "NoStabilizingSolutionError",
    "c2d_zoh",
    "series",
    "parallel",
    "feedback",
    "lower_lft",
    "append",
    "static_gain",
    "spectral_radius",
    "freqresp",
    "sweep_peak",
    "hinf_norm_discrete",
    "dare_solve",
    "dare_residual",
]


WARM_RESIDUAL_TOL = 1e-12


class DimensionError(ValueError):
    """Incompatible matrix or system dimensions."""


class WellPosednessError(ValueError):
    """An interconnection has a singular algebraic loop."""


class NormUndefinedError(ValueError):
    """The H-infinity norm of an unstable system was requested."""


class NoStabilizingSolutionError(ValueError):
    """A Riccati equation has no stabilizing solution."""


def _as_matrix(M, rows=None, cols=None, name="matrix"):
    M = np.array(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1:
        M = M.reshape(1, -1) if M.size else M.reshape(rows or 0, cols or 0)
    if M.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional")
    if M.size and not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    M.setflags(write=False)
    return M


@dataclass(frozen=True)
class StateSpace:
    """Linear time-invariant system ``(A, B, C, D)``.

    Use :class:`ContinuousStateSpace` or :class:`DiscreteStateSpace`; this
    base class only carries the shared algebra.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        D = _as_matrix(self.D, name="D")
        A = np.array(self.A, dtype=float)
        n = 0 if A.size == 0 else A.shape[0]
        p, m = D.shape
        B = np.array(self.B, dtype=float)
        C = np.array(self.C, dtype=float)
        # empty blocks may come in any shape; non-empty 2-D ones must match exactly
        for name, M, shape in (("A", A, (n, n)), ("B", B, (n, m)), ("C", C, (p, n))):
            if M.size != shape[0] * shape[1] or (M.size and M.ndim == 2 and M.shape != shape):
                raise DimensionError(f"{name} has shape {M.shape}, expected {shape}")
        A = _as_matrix(A.reshape(n, n), name="A")
        B = _as_matrix(B.reshape(n, m), name="B")
        C = _as_matrix(C.reshape(p, n), name="C")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def nstates(self) -> int:
        return self.A.shape[0]

    @property
    def ninputs(self) -> int:
        return self.D.shape[1]

    @property
    def noutputs(self) -> int:
        return self.D.shape[0]

    @property
    def is_static(self) -> bool:
        return self.nstates == 0

    def is_strictly_proper(self) -> bool:
        return not np.any(self.D)

    def _like(self, A, B, C, D):
        raise NotImplementedError

    def subsystem(self, outputs, inputs):
        """Select output rows and input columns (index lists or slices)."""
        return self._like(self.A, self.B[:, inputs], self.C[outputs, :],
                          self.D[outputs][:, inputs])

    def __neg__(self):
        return self._like(self.A, self.B, -self.C, -self.D)

    def __mul__(self, k):
        k = float(k)
        return self._like(self.A, self.B, k * self.C, k * self.D)

    __rmul__ = __mul__


@dataclass(frozen=True)
class ContinuousStateSpace(StateSpace):
    """Continuous-time system; ``A`` has units of 1/s."""

    def _like(self, A, B, C, D):
        return ContinuousStateSpace(A, B, C, D)

    def is_stable(self) -> bool:
        if self.is_static:
            return True
        return bool(np.max(np.linalg.eigvals(self.A).real) < 0)

    def evalfr(self, s: complex) -> np.ndarray:
        n = self.nstates
        if n == 0:
            return self.D.astype(complex)
        return self.C @ np.linalg.solve(s * np.eye(n) - self.A, self.B) + self.D

    def dcgain(self) -> np.ndarray:
        return self.evalfr(0.0).real


@dataclass(frozen=True)
class DiscreteStateSpace(StateSpace):
    """Discrete-time system with sampling period ``period`` (seconds)."""

    period: float = field(default=1.0)

    def __post_init__(self):
        super().__post_init__()
        if not (np.isfinite(self.period) and self.period > 0):
            raise ValueError("period must be positive")
        object.__setattr__(self, "period", float(self.period))

    def _like(self, A, B, C, D):
        return DiscreteStateSpace(A, B, C, D, self.period)

    # aliases matching the usual discrete notation
    @property
    def Ad(self):
        return self.A

    @property
    def Bd(self):
        return self.B

    @property
    def Cd(self):
        return self.C

    @property
    def Dd(self):
        return self.D

    def is_stable(self) -> bool:
        return spectral_radius(self.A) < 1.0 if self.nstates else True

    def evalfr(self, z: complex) -> np.ndarray:
        n = self.nstates
        if n == 0:
            return self.D.astype(complex)
        return self.C @ np.linalg.solve(z * np.eye(n) - self.A, self.B) + self.D

    def dcgain(self) -> np.ndarray:
        return self.evalfr(1.0).real


def static_gain(D, period=None):
    """Static system ``y = D u``; discrete when ``period`` is given."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    p, m = D.shape
    empty = (np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0)), D)
    if period is None:
        return ContinuousStateSpace(*empty)
    return DiscreteStateSpace(*empty, period)


def _check_same_domain(g1, g2):
    if type(g1) is not type(g2):
        raise DimensionError("cannot interconnect continuous and discrete systems")
    if isinstance(g1, DiscreteStateSpace) and not np.isclose(g1.period, g2.period,
                                                             rtol=1e-12, atol=0):
        raise ValueError(f"period mismatch: {g1.period} vs {g2.period}")


def c2d_zoh(sys: ContinuousStateSpace, period: float) -> DiscreteStateSpace:
    """Step-invariant (zero-order hold) discretization.

    The pair ``(Ad, Bd)`` is read off ``expm([[A, B], [0, 0]] * period)``,
    which stays accurate for stiff poles (e.g. -1000 at period 1/16).
    """
    if not (np.isfinite(period) and period > 0):
        raise ValueError("period must be a positive finite number")
    n, m = sys.nstates, sys.ninputs
    if n == 0:
        return DiscreteStateSpace(sys.A, sys.B, sys.C, sys.D, period)
    M = np.zeros((n + m, n + m))
    M[:n, :n] = sys.A
    M[:n, n:] = sys.B
    E = la.expm(M * period)
    return DiscreteStateSpace(E[:n, :n], E[:n, n:], sys.C, sys.D, period)


def series(g1: StateSpace, g2: StateSpace) -> StateSpace:
    """Cascade ``g2 ∘ g1`` (``g1`` first).  State is ``[x1; x2]``."""
    _check_same_domain(g1, g2)
    if g1.noutputs != g2.ninputs:
        raise DimensionError(
            f"output dim of g1 ({g1.noutputs}) != input dim of g2 ({g2.ninputs})")
    n1, n2 = g1.nstates, g2.nstates
    A = np.block([[g1.A, np.zeros((n1, n2))],
                  [g2.B @ g1.C, g2.A]])
    B = np.vstack([g1.B, g2.B @ g1.D])
    C = np.hstack([g2.D @ g1.C, g2.C])
    D = g2.D @ g1.D
    return g1._like(A, B, C, D)


def parallel(g1: StateSpace, g2: StateSpace) -> StateSpace:
    """Sum ``g1 + g2`` of two systems with equal input/output dimensions."""
    _check_same_domain(g1, g2)
    if (g1.ninputs, g1.noutputs) != (g2.ninputs, g2.noutputs):
        raise DimensionError("parallel connection needs equal dimensions")
    A = la.block_diag(g1.A, g2.A)
    return g1._like(A, np.vstack([g1.B, g2.B]), np.hstack([g1.C, g2.C]),
                    g1.D + g2.D)


def append(*systems: StateSpace) -> StateSpace:
    """Block-diagonal stacking: inputs and outputs are concatenated."""
    first = systems[0]
    for g in systems[1:]:
        _check_same_domain(first, g)
    A = la.block_diag(*[g.A for g in systems])
    B = la.block_diag(*[g.B for g in systems])
    C = la.block_diag(*[g.C for g in systems])
    D = la.block_diag(*[g.D for g in systems])
    n = sum(g.nstates for g in systems)
    m = sum(g.ninputs for g in systems)
    p = sum(g.noutputs for g in systems)
    return first._like(A.reshape(n, n), B.reshape(n, m), C.reshape(p, n),
                       D.reshape(p, m))


def feedback(g: StateSpace, h: StateSpace | None = None, sign: int = -1) -> StateSpace:
    """Close ``g`` with ``h`` in the feedback path.

    Returns the map from the external input ``r`` to ``y`` where
    ``y = g(r + sign * h(y))``.  ``h=None`` or an all-zero ``h`` returns
    ``g`` itself.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if h is None:
        return g
    _check_same_domain(g, h)
    if h.ninputs != g.noutputs or h.noutputs != g.ninputs:
        raise DimensionError("feedback path dimensions do not match g")
    if not (np.any(h.C) or np.any(h.D)):
        return g
    m, p = g.ninputs, g.noutputs
    # e = r + s*(Ch xh + Dh y), y = Cg xg + Dg e
    E = np.eye(m) - sign * h.D @ g.D
    if np.linalg.cond(E) > 1e12:
        raise WellPosednessError("I - sign*Dh*Dg is singular; loop is ill-posed")
    Ei = np.linalg.inv(E)
    # e = Ei (r + s Ch xh + s Dh Cg xg)
    ng, nh = g.nstates, h.nstates
    e_x = Ei @ np.hstack([sign * h.D @ g.C, sign * h.C])
    e_r = Ei
    y_x = np.hstack([g.C, np.zeros((p, nh))]) + g.D @ e_x
    y_r = g.D @ e_r
    A = np.block([[g.A, np.zeros((ng, nh))],
                  [h.B @ g.C, h.A]])
    A = A + np.vstack([g.B @ e_x, h.B @ g.D @ e_x])
    B = np.vstack([g.B @ e_r, h.B @ g.D @ e_r])
    return g._like(A, B, y_x, y_r)


def lower_lft(P: StateSpace, K: StateSpace, ny: int, nu: int) -> StateSpace:
    """Lower linear fractional transformation ``F_l(P, K)``.

    The last ``ny`` outputs of ``P`` feed ``K``; the ``nu`` outputs of ``K``
    drive the last ``nu`` inputs of ``P``.  Closed-loop state is ``[xP; xK]``.
    """
    _check_same_domain(P, K)
    if K.ninputs != ny or K.noutputs != nu:
        raise DimensionError("controller dimensions do not match (ny, nu)")
    m1 = P.ninputs - nu
    p1 = P.noutputs - ny
    if m1 < 0 or p1 < 0:
        raise DimensionError("plant has fewer channels than the loop")
    A, B1, B2 = P.A, P.B[:, :m1], P.B[:, m1:]
    C1, C2 = P.C[:p1], P.C[p1:]
    D11, D12 = P.D[:p1, :m1], P.D[:p1, m1:]
    D21, D22 = P.D[p1:, :m1], P.D[p1:, m1:]
    E = np.eye(ny) - D22 @ K.D
    if np.linalg.cond(E) > 1e12:
        raise WellPosednessError("I - D22*DK is singular; interconnection is ill-posed")
    Ei = np.linalg.inv(E)
    # y = Ei (C2 x + D21 w + D22 CK xK);  u = CK xK + DK y
    y_x = Ei @ C2
    y_k = Ei @ D22 @ K.C
    y_w = Ei @ D21
    u_x = K.D @ y_x
    u_k = K.C + K.D @ y_k
    u_w = K.D @ y_w
    Acl = np.block([[A + B2 @ u_x, B2 @ u_k],
                    [K.B @ y_x, K.A + K.B @ y_k]])
    Bcl = np.vstack([B1 + B2 @ u_w, K.B @ y_w])
    Ccl = np.hstack([C1 + D12 @ u_x, D12 @ u_k])
    Dcl = D11 + D12 @ u_w
    return P._like(Acl, Bcl, Ccl, Dcl)


def spectral_radius(M) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError("spectral radius needs a square matrix")
    if M.size == 0:
        return 0.0
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def freqresp(sys: DiscreteStateSpace, omegas) -> np.ndarray:
    """Frequency response ``G(e^{jθ})`` for normalized angles ``θ`` (rad/sample).

    Returns an array of shape ``(len(omegas), p, m)``.  Uses a Hessenberg
    reduction so each frequency costs one triangular-ish solve.
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    n = sys.nstates
    out = np.empty((omegas.size, sys.noutputs, sys.ninputs), dtype=complex)
    if n == 0:
        out[:] = sys.D
        return out
    H, Q = la.hessenberg(sys.A, calc_q=True)
    Bh = Q.T @ sys.B
    Ch = sys.C @ Q
    eye = np.eye(n)
    for i, th in enumerate(omegas):
        out[i] = Ch @ la.solve(np.exp(1j * th) * eye - H, Bh) + sys.D
    return out


def _sigma_max(G) -> np.ndarray:
    if G.shape[1] == 0 or G.shape[2] == 0:
        return np.zeros(G.shape[0])
    return np.linalg.svd(G, compute_uv=False)[:, 0]


def sweep_peak(sys: DiscreteStateSpace, npoints: int = 512):
    """Largest singular value over an even grid of ``[0, π]``.

    Returns ``(peak, theta_at_peak)``; a lower bound on the H-infinity norm.
    """
    thetas = np.linspace(0.0, np.pi, npoints)
    s = _sigma_max(freqresp(sys, thetas))
    i = int(np.argmax(s))
    return float(s[i]), float(thetas[i])


def _unit_circle_angles(sys: DiscreteStateSpace, gamma: float, margin: float):
    """Angles where ``gamma`` is a singular value of ``G(e^{jθ})``.

    Generalized eigenvalues of the extended symplectic pencil

        [[A, 0, B], [0, I, 0], [D'C, B', D'D - γ²I]]  -  z [[I, 0, 0], [C'C, A', C'D], [0, 0, 0]]

    lying on the unit circle mark those frequencies.
    """
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    n, m = sys.nstates, sys.ninputs
    Z = np.zeros
    M = np.block([[A, Z((n, n)), B],
                  [Z((n, n)), np.eye(n), Z((n, m))],
                  [D.T @ C, B.T, D.T @ D - gamma**2 * np.eye(m)]])
    L = np.block([[np.eye(n), Z((n, n)), Z((n, m))],
                  [C.T @ C, A.T, C.T @ D],
                  [Z((m, n)), Z((m, n)), Z((m, m))]])
    alpha, beta = la.eig(M, L, right=False, homogeneous_eigvals=True)
    finite = np.abs(beta) > 1e-12 * np.maximum(1.0, np.abs(alpha))
    lam = alpha[finite] / beta[finite]
    on = np.abs(np.abs(lam) - 1.0) < margin
    return np.sort(np.abs(np.angle(lam[on])))


def hinf_norm_discrete(sys: DiscreteStateSpace, tol: float = 1e-6,
                       margin: float = 1e-8, max_iter: int = 200) -> float:
    """H-infinity norm of a stable discrete-time system.

    Bisection on γ, initialized by a 512-point frequency sweep.  At each
    trial γ the symplectic pencil is tested for unit-circle eigenvalues;
    any that are found are also used to raise the lower bound.  Result
    satisfies ``hi - lo <= tol * max(1, lo)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if sys.nstates and spectral_radius(sys.A) >= 1.0:
        raise NormUndefinedError("system is not stable; H-infinity norm undefined")
    dnorm = float(np.linalg.norm(sys.D, 2)) if sys.D.size else 0.0
    if sys.nstates == 0 or sys.ninputs == 0 or sys.noutputs == 0:
        return dnorm
    lo, _ = sweep_peak(sys, 512)
    lo = max(lo, dnorm)
    if lo == 0.0:
        # all-zero response on the grid; probe a tiny level
        lo = 1e-300
    hi = 2.0 * lo
    while _unit_circle_angles(sys, hi, margin).size:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise NormUndefinedError("norm bound diverged")

    def _raise_lo(angles, lo):
        if angles.size:
            mids = np.concatenate([angles, (angles[:-1] + angles[1:]) / 2])
            lo = max(lo, float(_sigma_max(freqresp(sys, mids)).max()))
        return lo

    for _ in range(max_iter):
        if hi - lo <= tol * max(1.0, lo):
            break
        mid = 0.5 * (lo + hi)
        angles = _unit_circle_angles(sys, mid, margin)
        if angles.size:
            lo = max(mid, _raise_lo(angles, lo))
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class DareSolution:
    """Stabilizing solution of a discrete algebraic Riccati equation.

    ``gain`` is ``K = (R + B'XB)^{-1} (B'XA + S')`` so that ``A - B K`` is the
    closed-loop matrix; ``residual`` is the relative Frobenius residual.
    """

    X: np.ndarray
    gain: np.ndarray
    residual: float
    closed_loop_radius: float


def _dare_map(X, A, B, Q, R, S):
    G = R + B.T @ X @ B
    L = B.T @ X @ A + S.T
    return A.T @ X @ A - L.T @ np.linalg.solve(G, L) + Q


def dare_residual(X, A, B, Q, R, S=None) -> float:
    """``||X - f(X)||_F / max(1, ||X||_F)`` for the DARE map ``f``."""
    S = np.zeros(B.shape) if S is None else S
    nx = np.linalg.norm(X, "fro")
    return float(np.linalg.norm(X - _dare_map(X, A, B, Q, R, S), "fro") / max(1.0, nx))


def _newton_refine(X, A, B, Q, R, S, steps=30):
    """Newton iterations on the Riccati operator; returns the best iterate.

    Each step solves the Stein equation of the current closed loop.  From a
    poor QZ starting point the residual may rise for a step or two before
    quadratic convergence sets in, so a few non-improving steps are allowed.
    """
    best_X, best = X, dare_residual(X, A, B, Q, R, S)
    stalls = 0
    for _ in range(steps):
        if best < 1e-14:
            break
        try:
            K = la.solve(R + B.T @ X @ B, B.T @ X @ A + S.T)
            Ak = A - B @ K
            if spectral_radius(Ak) >= 1.0:
                break
            Qk = Q - S @ K - K.T @ S.T + K.T @ R @ K
            # quality is judged by the Riccati residual below, not by scipy's
            # conditioning warning
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                X = la.solve_discrete_lyapunov(Ak.T, 0.5 * (Qk + Qk.T), method="bilinear")
        except (la.LinAlgError, ValueError):
            break
        X = 0.5 * (X + X.T)
        res = dare_residual(X, A, B, Q, R, S)
        if res < best:
            best_X, best, stalls = X, res, 0
        else:
            stalls += 1
            if stalls >= 3:
                break
    return best_X, best


def _stable_subspace(M, L, n, margin):
    """Orthonormal basis (first ``n`` columns) of the stable deflating
    subspace of ``M - λ L``.

    Real QZ reordering can fail when the pencil carries 0/∞ eigenvalue pairs
    (nilpotent modes); complex QZ with 1x1 blocks is tried next.
    """
    errors = []
    for output in ("real", "complex"):
        try:
            _, _, alpha, beta, _, Z = la.ordqz(M, L, sort="iuc", output=output)
        except (ValueError, la.LinAlgError) as exc:
            errors.append(str(exc))
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            mod = np.where(np.abs(beta) > 0, np.abs(alpha / beta), np.inf)
        if np.any(np.abs(mod - 1.0) < margin):
            raise NoStabilizingSolutionError("pencil has eigenvalues on the unit circle")
        if np.count_nonzero(mod < 1.0) != n:
            errors.append("stable deflating subspace has wrong dimension")
            continue
        return Z
    # last resort: eigenvectors of the n smallest-modulus eigenvalues
    w, vr = la.eig(M, L)
    with np.errstate(divide="ignore", invalid="ignore"):
        mod = np.where(np.isfinite(w), np.abs(w), np.inf)
    order = np.argsort(mod)
    if mod[order[n - 1]] < 1.0 - margin and mod[order[n]] > 1.0 + margin:
        basis, _ = la.qr(vr[:, order[:n]], mode="economic")
        if np.linalg.matrix_rank(basis, tol=1e-10) == n:
            return basis
    errors.append("eigenvector fallback failed")
    raise NoStabilizingSolutionError("; ".join(errors))


def _pencil_solution(M, L, n, m, margin, balance):
    M, L = M.copy(), L.copy()
    sca = None
    if balance:
        # diagonal scaling diag(D, D^-1, E) keeps the symplectic structure
        T = np.abs(M) + np.abs(L)
        np.fill_diagonal(T, 0.0)
        _, (sca, _) = la.matrix_balance(T, separate=True, permute=False)
        if np.allclose(sca, 1.0):
            sca = None
        else:
            sca = np.log2(sca)
            half = np.round((sca[n:2 * n] - sca[:n]) / 2)
            sca = 2.0 ** np.r_[half, -half, sca[2 * n:]]
            E = sca[:, None] / sca[None, :]
            M *= E
            L *= E
    Qf, _ = la.qr(M[:, 2 * n:])
    Qp = Qf[:, m:].T  # annihilates the last block column
    Z = _stable_subspace(Qp @ M[:, :2 * n], Qp @ L[:, :2 * n], n, margin)
    U1, U2 = Z[:n, :n], Z[n:, :n]
    if np.linalg.cond(U1) > 1e12:
        raise NoStabilizingSolutionError("stable subspace is not a graph (U1 singular)")
    X = la.solve(U1.T, U2.T).T.real
    if sca is not None:
        X = X * sca[:n, None] * sca[:n]
    return 0.5 * (X + X.T)


def dare_solve(A, B, Q, R, S=None, margin: float = 1e-8,
               residual_tol: float = 1e-8, x0=None) -> DareSolution:
    """Stabilizing solution of

        X = A'XA - (A'XB + S)(R + B'XB)^{-1}(B'XA + S') + Q

    via QZ on the extended symplectic pencil.  ``R`` may be indefinite
    (as in H-infinity problems) as long as ``R + B'XB`` is nonsingular.

    ``x0`` is an optional warm start (e.g. the solution of a nearby problem)
    used for Newton iterations when the pencil route is too ill-conditioned.

    Raises
    ------
    NoStabilizingSolutionError
        If the pencil has eigenvalues within ``margin`` of the unit circle,
        the stable deflating subspace has the wrong dimension or is not a
        graph, or the residual exceeds ``residual_tol``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0] if A.size else 0
    B = np.asarray(B, dtype=float).reshape(n, -1) if n else np.atleast_2d(B)
    m = B.shape[1]
    Q = np.asarray(Q, dtype=float).reshape(n, n)
    R = np.atleast_2d(np.asarray(R, dtype=float)).reshape(m, m)
    S = np.zeros((n, m)) if S is None else np.asarray(S, dtype=float).reshape(n, m)
    if not np.allclose(R, R.T, atol=1e-12 * max(1.0, np.abs(R).max(initial=0))):
        raise ValueError("R must be symmetric")
    if n == 0:
        if np.linalg.cond(R) > 1e14:
            raise NoStabilizingSolutionError("R is singular")
        return DareSolution(np.zeros((0, 0)), np.zeros((m, 0)), 0.0, 0.0)

    # extended pencil  M - λ L  (size 2n+m), compressed to 2n by a QR of [B; -S; R]
    M = np.zeros((2 * n + m, 2 * n + m))
    L = np.zeros_like(M)
    M[:n, :n] = A
    M[:n, 2 * n:] = B
    M[n:2 * n, :n] = -Q
    M[n:2 * n, n:2 * n] = np.eye(n)
    M[n:2 * n, 2 * n:] = -S
    M[2 * n:, :n] = S.T
    M[2 * n:, 2 * n:] = R
    L[:n, :n] = np.eye(n)
    L[n:2 * n, n:2 * n] = A.T
    L[2 * n:, n:2 * n] = -B.T

    candidates = []
    failures = []
    for balance in (True, False):
        try:
            X = _pencil_solution(M, L, n, m, margin, balance)
        except NoStabilizingSolutionError as exc:
            failures.append(str(exc))
            continue
        X, res = _newton_refine(X, A, B, Q, R, S)
        candidates.append((res, X))
        if res <= residual_tol:
            break
    if x0 is not None and (not candidates or min(c[0] for c in candidates) > residual_tol):
        # a stale x0 can have a small relative residual, so demand that
        # Newton actually moved and converged tightly
        x0 = np.asarray(x0, dtype=float).reshape(n, n)
        x0 = 0.5 * (x0 + x0.T)
        X, res = _newton_refine(x0, A, B, Q, R, S)
        if X is not x0 and res <= min(residual_tol, WARM_RESIDUAL_TOL):
            candidates.append((res, X))
    if not candidates:
        raise NoStabilizingSolutionError("; ".join(failures))
    res, X = min(candidates, key=lambda c: c[0])
    G = R + B.T @ X @ B
    if np.linalg.cond(G) > 1e14:
        raise NoStabilizingSolutionError("R + B'XB is singular")
    gain = la.solve(G, B.T @ X @ A + S.T)
    rad = spectral_radius(A - B @ gain)
    if res > residual_tol:
        raise NoStabilizingSolutionError(f"DARE residual {res:.2e} exceeds {residual_tol:.0e}")
    if rad >= 1.0 - margin:
        raise NoStabilizingSolutionError("closed-loop matrix is not stable")
    return DareSolution(X, gain, res, rad)
