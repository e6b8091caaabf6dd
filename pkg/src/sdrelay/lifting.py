"""Fast-sample/fast-hold (FSFH) lifting of sampled-data generalized plants.

A :class:`SampledDataPlant` is a continuous-time system with partitioned
inputs ``[w; u; d]`` and outputs ``[z; y; e]``:

* ``w``  exogenous input (approximated piecewise constant on the fine grid),
* ``u``  control, held constant over each period ``h``,
* ``z``  error, sampled on the fine grid,
* ``y``  measurement, sampled at period boundaries,
* ``e``  signal that returns as ``d(t) = e(t - k h)`` through the loop delay.

Lifting produces a :class:`DiscreteGeneralizedPlant` at period ``h`` whose
exogenous input stacks the ``N`` fine-grid values of ``w`` and whose error
output stacks the ``N`` fine-grid samples of ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lti import (ContinuousStateSpace, DimensionError, DiscreteStateSpace,
                  c2d_zoh, lower_lft, static_gain)

__all__ = [
    "CapacityError",
    "SampledDataPlant",
    "DiscreteGeneralizedPlant",
    "lift_fsfh",
    "regularize",
]

DEFAULT_STATE_CAP = 512


class CapacityError(RuntimeError):
    """Lifted state dimension exceeds the configured cap."""


@dataclass(frozen=True)
class SampledDataPlant:
    dynamics: ContinuousStateSpace
    m_w: int
    m_u: int
    p_z: int
    p_y: int
    h: float
    delay_steps: int = 0
    m_d: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValueError("sample period h must be positive")
        if self.delay_steps < 0 or int(self.delay_steps) != self.delay_steps:
            raise ValueError("delay must be a nonnegative integer number of periods")
        g = self.dynamics
        if g.ninputs != self.m_w + self.m_u + self.m_d:
            raise DimensionError("dynamics inputs must be [w; u; d]")
        if g.noutputs != self.p_z + self.p_y + self.m_d:
            raise DimensionError("dynamics outputs must be [z; y; e]")

    # input / output index helpers
    @property
    def iw(self):
        return slice(0, self.m_w)

    @property
    def iu(self):
        return slice(self.m_w, self.m_w + self.m_u)

    @property
    def id(self):
        return slice(self.m_w + self.m_u, self.m_w + self.m_u + self.m_d)

    @property
    def oz(self):
        return slice(0, self.p_z)

    @property
    def oy(self):
        return slice(self.p_z, self.p_z + self.p_y)

    @property
    def oe(self):
        return slice(self.p_z + self.p_y, self.p_z + self.p_y + self.m_d)

    def delay_on_boundary_only(self) -> bool:
        """True when the delayed signal only reaches the sampled measurement.

        Then storing one boundary sample of ``e`` per delay period is exact.
        """
        g = self.dynamics
        return not (np.any(g.B[:, self.id]) or np.any(g.D[self.oz, self.id])
                    or np.any(g.D[self.oe, self.id]))

    def undelayed(self) -> ContinuousStateSpace:
        """Dynamics with the delay loop closed as ``d = e`` (valid for k = 0)."""
        g = self.dynamics
        if self.m_d == 0:
            return g
        return lower_lft(g, static_gain(np.eye(self.m_d)), self.m_d, self.m_d)


@dataclass(frozen=True)
class DiscreteGeneralizedPlant:
    """Lifted plant ``[[A, B1, B2], [C1, D11, D12], [C2, D21, D22]]`` at period ``h``.

    ``sys`` has inputs ``[w_lift (m1); u (m2)]`` and outputs
    ``[z_lift (p1); y (p2)]``.
    """

    sys: DiscreteStateSpace
    m1: int
    m2: int
    p1: int
    p2: int
    N: int = 1

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.sys.ninputs != self.m1 + self.m2 or self.sys.noutputs != self.p1 + self.p2:
            raise DimensionError("plant partition does not match its dimensions")

    @property
    def period(self):
        return self.sys.period

    @property
    def nstates(self):
        return self.sys.nstates

    @property
    def A(self):
        return self.sys.A

    @property
    def B1(self):
        return self.sys.B[:, :self.m1]

    @property
    def B2(self):
        return self.sys.B[:, self.m1:]

    @property
    def C1(self):
        return self.sys.C[:self.p1]

    @property
    def C2(self):
        return self.sys.C[self.p1:]

    @property
    def D11(self):
        return self.sys.D[:self.p1, :self.m1]

    @property
    def D12(self):
        return self.sys.D[:self.p1, self.m1:]

    @property
    def D21(self):
        return self.sys.D[self.p1:, :self.m1]

    @property
    def D22(self):
        return self.sys.D[self.p1:, self.m1:]

    def rank_conditions(self, tol=1e-12):
        """``(D12 full column rank, D21 full row rank)``."""
        r12 = np.linalg.matrix_rank(self.D12, tol=tol) if self.D12.size else 0
        r21 = np.linalg.matrix_rank(self.D21, tol=tol) if self.D21.size else 0
        return r12 == self.m2, r21 == self.p2

    @classmethod
    def from_matrices(cls, A, B1, B2, C1, C2, D11, D12, D21, D22=None, period=1.0, N=1):
        A = np.atleast_2d(A)
        B1, B2, C1, C2 = map(np.atleast_2d, (B1, B2, C1, C2))
        D11, D12, D21 = map(np.atleast_2d, (D11, D12, D21))
        if D22 is None:
            D22 = np.zeros((D21.shape[0], D12.shape[1]))
        sys = DiscreteStateSpace(A, np.hstack([B1, B2]), np.vstack([C1, C2]),
                                 np.block([[D11, D12], [D21, np.atleast_2d(D22)]]), period)
        return cls(sys, D11.shape[1], D12.shape[1], D11.shape[0], D21.shape[0], N)


def lift_fsfh(plant: SampledDataPlant, N: int,
              state_cap: int = DEFAULT_STATE_CAP) -> DiscreteGeneralizedPlant:
    """FSFH discretization with ``N`` fine steps per period.

    The continuous dynamics are discretized by ZOH at ``h/N``.  The loop
    delay is kept exact on the fine grid as a shift register of ``k``
    period-blocks of ``e``: one boundary sample per block when ``d`` only
    reaches the sampled measurement, otherwise all ``N`` fine samples.
    """
    if int(N) != N or N < 1:
        raise ValueError("FSFH discretization number N must be an integer >= 1")
    N = int(N)
    k = int(plant.delay_steps)
    use_delay = k > 0 and plant.m_d > 0
    g = plant.dynamics if use_delay else plant.undelayed()
    fine = c2d_zoh(g, plant.h / N)
    n = g.nstates
    m_w, m_u, p_z, p_y = plant.m_w, plant.m_u, plant.p_z, plant.p_y
    m_d = plant.m_d if use_delay else 0

    Phi = fine.A
    Gw = fine.B[:, :m_w]
    Gu = fine.B[:, m_w:m_w + m_u]
    Gd = fine.B[:, m_w + m_u:]
    Cz, Cy = g.C[:p_z], g.C[p_z:p_z + p_y]
    Ce = g.C[p_z + p_y:]
    D = g.D
    Dzw, Dzu, Dzd = D[:p_z, :m_w], D[:p_z, m_w:m_w + m_u], D[:p_z, m_w + m_u:]
    Dyw, Dyu, Dyd = (D[p_z:p_z + p_y, :m_w], D[p_z:p_z + p_y, m_w:m_w + m_u],
                     D[p_z:p_z + p_y, m_w + m_u:])
    Dew, Deu, Ded = (D[p_z + p_y:, :m_w], D[p_z + p_y:, m_w:m_w + m_u],
                     D[p_z + p_y:, m_w + m_u:])
    if np.any(Dyu):
        raise ValueError("measurement must not feed through from the held control")

    boundary = use_delay and plant.delay_on_boundary_only()
    block = m_d if boundary else m_d * N
    nb = k * block if use_delay else 0
    nx = n + nb
    if nx > state_cap:
        raise CapacityError(f"lifted state dimension {nx} exceeds cap {state_cap}")

    mW = m_w * N
    # affine maps of (x0, buf, W, u) -> signal, column-partitioned
    ncol = nx + mW + m_u

    def cols_x():
        M = np.zeros((n, ncol))
        M[:, :n] = np.eye(n)
        return M

    def w_sel(j):
        M = np.zeros((m_w, ncol))
        M[:, nx + j * m_w: nx + (j + 1) * m_w] = np.eye(m_w)
        return M

    u_sel = np.zeros((m_u, ncol))
    u_sel[:, nx + mW:] = np.eye(m_u)
    oldest = n + (k - 1) * block  # start of the k-periods-old block

    def d_sel(j):
        M = np.zeros((m_d, ncol))
        if not use_delay:
            return M
        if boundary:
            if j == 0:
                M[:, oldest:oldest + m_d] = np.eye(m_d)
        else:
            c = oldest + j * m_d
            M[:, c:c + m_d] = np.eye(m_d)
        return M

    X = cols_x()
    z_rows, e_rows = [], []
    y_row = None
    for j in range(N):
        wj, dj = w_sel(j), d_sel(j)
        z_rows.append(Cz @ X + Dzw @ wj + Dzu @ u_sel + Dzd @ dj)
        if use_delay and (not boundary or j == 0):
            e_rows.append(Ce @ X + Dew @ wj + Deu @ u_sel + Ded @ dj)
        if j == 0:
            y_row = Cy @ X + Dyw @ wj + Dyd @ dj
        X = Phi @ X + Gw @ wj + Gu @ u_sel + Gd @ dj

    next_rows = [X]
    if use_delay:
        next_rows.extend(e_rows)
        if k > 1:
            shift = np.zeros(((k - 1) * block, ncol))
            shift[:, n:n + (k - 1) * block] = np.eye((k - 1) * block)
            next_rows.append(shift)
    Nxt = np.vstack(next_rows)
    Z = np.vstack(z_rows)
    out = np.vstack([Z, y_row])
    sys = DiscreteStateSpace(Nxt[:, :nx], Nxt[:, nx:], out[:, :nx], out[:, nx:], plant.h)
    return DiscreteGeneralizedPlant(sys, mW, m_u, p_z * N, p_y, N)


def regularize(plant: DiscreteGeneralizedPlant, rho: float = 1e-4,
               eps: float = 1e-4) -> DiscreteGeneralizedPlant:
    """Full-rank repair: append ``rho*u`` to the error and ``eps*v`` (fresh
    exogenous channel) to the measurement."""
    P = plant
    n, m1, m2, p1, p2 = P.nstates, P.m1, P.m2, P.p1, P.p2
    A = P.A
    B1 = np.hstack([P.B1, np.zeros((n, p2))])
    C1 = np.vstack([P.C1, np.zeros((m2, n))])
    D11 = np.block([[P.D11, np.zeros((p1, p2))], [np.zeros((m2, m1 + p2))]])
    D12 = np.vstack([P.D12, rho * np.eye(m2)])
    D21 = np.hstack([P.D21, eps * np.eye(p2)])
    return DiscreteGeneralizedPlant.from_matrices(
        A.reshape(n, n), B1.reshape(n, m1 + p2), P.B2.reshape(n, m2),
        C1.reshape(p1 + m2, n), P.C2.reshape(p2, n), D11, D12, D21, P.D22,
        period=P.period, N=P.N)
