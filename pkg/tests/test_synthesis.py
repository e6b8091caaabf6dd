import warnings

import numpy as np
import pytest
import scipy.linalg as la
from scipy.optimize import minimize_scalar

from sdrelay.lifting import DiscreteGeneralizedPlant, lift_fsfh
from sdrelay.lti import (DiscreteStateSpace, NoStabilizingSolutionError, hinf_norm_discrete,
                         lower_lft, static_gain)
from sdrelay.relay import (build_design_plant, design_canceler, design_lifted_plant,
                           reference_params, tf_to_ss)
from sdrelay.synthesis import (InfeasibleError, StructuralError, central_controller, certify,
                               hinf_synthesize)

cp = pytest.importorskip("cvxpy")

# golden values from the first certified builds
GAMMA_SQUARED = 0.2745356
GAMMA_RRC = 0.0467257


def lmi_gamma(P):
    """Optimal gamma from the projected bounded-real LMIs (independent of any
    Riccati machinery)."""
    A, B1, B2, C1, C2 = P.A, P.B1, P.B2, P.C1, P.C2
    D11, D12, D21 = P.D11, P.D12, P.D21
    n, m1, p1 = A.shape[0], B1.shape[1], C1.shape[0]
    NR = la.null_space(np.hstack([B2.T, D12.T]))
    NS = la.null_space(np.hstack([C2, D21]))
    R = cp.Variable((n, n), symmetric=True)
    S = cp.Variable((n, n), symmetric=True)
    g = cp.Variable()
    TR = la.block_diag(NR, np.eye(m1))
    TS = la.block_diag(NS, np.eye(p1))
    MR = cp.bmat([[A @ R @ A.T - R, A @ R @ C1.T, B1],
                  [C1 @ R @ A.T, -g * np.eye(p1) + C1 @ R @ C1.T, D11],
                  [B1.T, D11.T, -g * np.eye(m1)]])
    MS = cp.bmat([[A.T @ S @ A - S, A.T @ S @ B1, C1.T],
                  [B1.T @ S @ A, -g * np.eye(m1) + B1.T @ S @ B1, D11.T],
                  [C1, D11, -g * np.eye(p1)]])
    L1, L2 = TR.T @ MR @ TR, TS.T @ MS @ TS
    L3 = cp.bmat([[R, np.eye(n)], [np.eye(n), S]])
    e = 1e-7
    cons = [0.5 * (L1 + L1.T) << -e * np.eye(L1.shape[0]),
            0.5 * (L2 + L2.T) << -e * np.eye(L2.shape[0]),
            0.5 * (L3 + L3.T) >> 0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cp.Problem(cp.Minimize(g), cons).solve(solver="CLARABEL")
    return float(g.value)


def random_plant(rng):
    n = int(rng.integers(1, 4))
    m1 = int(rng.integers(1, 3))
    p1 = 1 + int(rng.integers(0, 2))
    A = rng.standard_normal((n, n))
    A *= rng.uniform(0.3, 1.3) / max(abs(np.linalg.eigvals(A)))  # some unstable
    D12 = np.zeros((p1, 1))
    D12[-1] = rng.uniform(0.2, 1)
    D21 = np.zeros((1, m1))
    D21[0, -1] = rng.uniform(0.2, 1)
    return DiscreteGeneralizedPlant.from_matrices(
        A, rng.standard_normal((n, m1)), rng.standard_normal((n, 1)),
        rng.standard_normal((p1, n)), rng.standard_normal((1, n)),
        0.3 * rng.standard_normal((p1, m1)), D12, D21)


@pytest.mark.parametrize("seed", range(20))
def test_gamma_matches_lmi_oracle(seed):
    P = random_plant(np.random.default_rng(1000 + seed))
    ref = lmi_gamma(P)
    lo = 1e-3
    ctrl = hinf_synthesize(P, lo, 1e3, 1e-4)
    if ref < lo:
        assert ctrl.gamma == lo
    else:
        # bisection tol 1e-4 plus interior-point accuracy
        assert ctrl.gamma == pytest.approx(ref, rel=1e-3)
    stable, norm = certify(P, ctrl.K)
    assert stable and norm <= ctrl.gamma * (1 + 1e-4)


def test_uncontrollable_error_gives_open_loop_norm():
    # z = [0.5 w1; rho u], y = eps w2: control cannot reduce the 0.5
    P = DiscreteGeneralizedPlant.from_matrices(
        [[0.5]], [[0.0, 0.0]], [[0.0]], [[0.0], [0.0]], [[0.0]],
        [[0.5, 0.0], [0.0, 0.0]], [[0.0], [1e-4]], [[0.0, 1e-4]])
    ctrl = hinf_synthesize(P, tol=1e-5)
    assert ctrl.gamma == pytest.approx(0.5, rel=2e-5)


def test_static_plant_matches_static_gain_search():
    # z = [w1 + u; rho u], y = w1 + eps w2
    rho = eps = 0.1
    P = DiscreteGeneralizedPlant.from_matrices(
        np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((0, 1)), np.zeros((2, 0)),
        np.zeros((1, 0)), [[1.0, 0.0], [0.0, 0.0]], [[1.0], [rho]], [[1.0, eps]])

    def cl_norm(k):
        return np.linalg.norm(np.array([[1 + k, k * eps], [rho * k, rho * k * eps]]), 2)

    grid = np.linspace(-2, 1, 30001)
    k0 = grid[np.argmin([cl_norm(k) for k in grid])]
    best = minimize_scalar(cl_norm, bracket=(k0 - 1e-3, k0, k0 + 1e-3)).fun
    ctrl = hinf_synthesize(P, tol=1e-5)
    assert ctrl.gamma == pytest.approx(best, rel=1e-4)
    # the synthesized controller is (close to) static near k = -1
    assert ctrl.K.dcgain()[0, 0] == pytest.approx(k0, abs=0.05)


def test_central_controller_around_optimum():
    P = random_plant(np.random.default_rng(5))
    g = hinf_synthesize(P, tol=1e-4).gamma
    with pytest.raises(NoStabilizingSolutionError):
        central_controller(P, g * 0.98)
    K = central_controller(P, g * 1.02)
    stable, norm = certify(P, K)
    assert stable and norm <= g * 1.02


def test_certify_zero_controller():
    rng = np.random.default_rng(9)
    P = random_plant(rng)
    while max(abs(np.linalg.eigvals(P.A))) >= 1:
        P = random_plant(rng)
    K0 = static_gain(np.zeros((1, 1)), period=1.0)
    stable, norm = certify(P, K0)
    open_loop = DiscreteStateSpace(P.A, P.B1, P.C1, P.D11, 1.0)
    assert stable
    assert norm == pytest.approx(hinf_norm_discrete(open_loop), rel=1e-6)


def test_structural_error_without_regularization():
    P = lift_fsfh(build_design_plant(reference_params()), 16)
    with pytest.raises(StructuralError):
        hinf_synthesize(P)


def test_infeasible_bracket():
    P = design_lifted_plant(reference_params())
    with pytest.raises(InfeasibleError):
        hinf_synthesize(P, 1e-3, 0.01)


def test_bad_bracket():
    P = design_lifted_plant(reference_params())
    with pytest.raises(ValueError):
        hinf_synthesize(P, 1.0, 0.5)


# --- relay designs ----------------------------------------------------------

def test_squared_design_certified(squared_ctrl, squared_params):
    c = squared_ctrl
    assert c.gamma == pytest.approx(GAMMA_SQUARED, rel=1e-3)
    assert c.closed_loop_radius < 1
    assert c.closed_loop_norm <= c.gamma * (1 + 1e-4)
    assert c.K.nstates == 6
    stable, norm = certify(design_lifted_plant(squared_params), c.K)
    assert stable and norm == pytest.approx(c.closed_loop_norm, rel=1e-5)


def test_rrc_design_certified(rrc_ctrl):
    c = rrc_ctrl
    assert c.gamma == pytest.approx(GAMMA_RRC, rel=1e-3)
    assert c.closed_loop_radius < 1
    assert c.closed_loop_norm <= c.gamma * (1 + 1e-4)
    assert c.K.nstates == 12


def test_interference_free_design(squared_params, squared_ctrl):
    c0 = design_canceler(squared_params, alpha=0.0)
    stable, norm = certify(design_lifted_plant(squared_params, alpha=0.0), c0.K)
    assert stable and 0 < norm <= c0.gamma * (1 + 1e-4)
    # the delayed coupling is fully cancelable, so alpha does not move gamma
    assert c0.gamma == pytest.approx(squared_ctrl.gamma, rel=1e-3)


def test_passthrough_destabilizes_relay(squared_params):
    P = design_lifted_plant(squared_params)
    stable, norm = certify(P, static_gain(np.eye(2), period=1.0))
    assert not stable and norm == np.inf


def test_fixed_controller_only_certifies_near_design_gain(squared_params, squared_ctrl):
    K = squared_ctrl.K
    for a2, ok in [(2000.0, True), (2004.0, True), (1900.0, False), (2500.0, False)]:
        stable, _ = certify(design_lifted_plant(squared_params.with_gain(a2)), K)
        assert stable == ok, a2


def test_unstable_weight_rejected():
    with pytest.raises(ValueError):
        reference_params(W=tf_to_ss([1.0], [1.0, -1.0]))


def test_closed_loop_contains_controller_states(squared_params, squared_ctrl):
    P = design_lifted_plant(squared_params)
    cl = lower_lft(P.sys, squared_ctrl.K, P.p2, P.m2)
    assert cl.nstates == P.nstates + squared_ctrl.K.nstates
