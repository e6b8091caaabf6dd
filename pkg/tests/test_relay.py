import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdrelay.lti import static_gain
from sdrelay.relay import (BasebandSignal, RelayParams, build_design_plant, loop_gain,
                           reference_params, rotation_matrix, tf_to_ss)


def test_rotation_quarter_and_half_turn():
    np.testing.assert_allclose(rotation_matrix(0.25, 1.0), [[0, 1], [-1, 0]], atol=1e-15)
    np.testing.assert_allclose(rotation_matrix(0.5, 1.0), -np.eye(2), atol=1e-15)


def test_rotation_integer_cycles_is_identity():
    np.testing.assert_allclose(rotation_matrix(10000.0, 1.0), np.eye(2), atol=1e-9)
    # fmod keeps large phases exact where a naive 2*pi*f*L would drift
    np.testing.assert_allclose(rotation_matrix(1e9, 1.0), np.eye(2), atol=1e-12)


@given(st.floats(-1e4, 1e4, allow_nan=False), st.floats(0, 10, allow_nan=False))
def test_rotation_is_orthogonal(f, L):
    R = rotation_matrix(f, L)
    np.testing.assert_allclose(R @ R.T, np.eye(2), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


def test_loop_gain():
    assert loop_gain(reference_params()) == pytest.approx(300.0)
    assert loop_gain(reference_params(a2=1.0, r=1.0)) == 1.0


def test_loop_gain_with_zero_factor():
    class P:
        a1, a2, r = 1.0, 0.0, 0.15
    assert loop_gain(P) == 0.0


@pytest.mark.parametrize("field, value", [("h", 0.0), ("r", -1.0), ("a2", 0.0),
                                          ("L", 0.5), ("N", 0), ("L", -1.0)])
def test_params_validation(field, value):
    with pytest.raises(ValueError):
        reference_params(**{field: value})


def test_params_reject_improper_weight():
    with pytest.raises(ValueError):
        reference_params(W=static_gain([[1.0]]))


def test_tf_to_ss():
    g = tf_to_ss([1.0], [2.0, 1.0])
    assert g.dcgain()[0, 0] == pytest.approx(1.0)
    assert g.A[0, 0] == pytest.approx(-0.5)
    g4 = tf_to_ss([1.0], np.poly1d([2.0, 1.0]) ** 4)
    assert g4.nstates == 4
    assert g4.dcgain()[0, 0] == pytest.approx(1.0)
    assert tf_to_ss([3.0], [1.5]).D[0, 0] == 2.0
    with pytest.raises(ValueError):
        tf_to_ss([1.0, 0.0, 0.0], [1.0, 1.0])


def test_design_plant_without_coupling_has_no_u_to_y_path():
    sd = build_design_plant(reference_params(), alpha=0.0)
    g = sd.dynamics
    assert not np.any(g.D[sd.oy, sd.id])
    assert not np.any(g.B[:, sd.id])
    assert not np.any(g.D[sd.oy, sd.iu])


@pytest.mark.parametrize("pulse, n_c", [("squared", 4), ("rrc", 10)])
def test_design_plant_state_count(pulse, n_c):
    sd = build_design_plant(reference_params(pulse))
    assert sd.dynamics.nstates == n_c
    assert (sd.m_w, sd.m_u, sd.p_z, sd.p_y, sd.m_d) == (2, 2, 2, 2, 2)
    assert sd.delay_steps == 1


def test_design_plant_coupling_matrix():
    sd = build_design_plant(reference_params(f=0.25))
    # F = I: y = v + alpha * A_L * d with a quarter-turn rotation
    np.testing.assert_allclose(sd.dynamics.D[sd.oy, sd.id], 300 * np.array([[0, 1], [-1, 0]]),
                               atol=1e-12)


def test_baseband_signal():
    s = BasebandSignal(np.ones((2, 4)), 0.5)
    assert len(s) == 4
    assert s.energy == pytest.approx(4.0)
    with pytest.raises(ValueError):
        BasebandSignal(np.ones((3, 4)), 1.0)
    with pytest.raises(ValueError):
        BasebandSignal(np.full((2, 2), np.nan), 1.0)
    with pytest.raises(ValueError):
        s.samples[0, 0] = 2.0


def test_with_gain_returns_new_params():
    p = reference_params()
    q = p.with_gain(500.0)
    assert isinstance(q, RelayParams) and q.a2 == 500.0 and p.a2 == 2000.0
