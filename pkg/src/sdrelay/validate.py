"""Self-check oracle suite behind ``sdrelay validate``.

Every check compares a library result against an independent closed form or
a brute-force computation.  ``strict`` tightens the deterministic tolerances
tenfold; Monte-Carlo checks keep their statistical bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lifting import SampledDataPlant, lift_fsfh
from .lti import (ContinuousStateSpace, DiscreteStateSpace, c2d_zoh, dare_solve,
                  hinf_norm_discrete)
from .ofdm import (OfdmConfig, RootRaisedCosine, SquaredPulse, ideal_ber_bpsk,
                   nominal_offset, ofdm_demodulate, ofdm_modulate, pulse_shape)
from .relay import rotation_matrix

__all__ = ["CheckResult", "run_suite", "dense_sweep_norm", "random_stable_discrete"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def dense_sweep_norm(sys: DiscreteStateSpace, npoints: int = 10_000) -> float:
    """Max singular value over ``npoints`` frequencies, by direct solves."""
    n = sys.nstates
    best = np.linalg.norm(sys.D, 2) if sys.D.size else 0.0
    for th in np.linspace(0.0, np.pi, npoints):
        if n:
            G = sys.C @ np.linalg.solve(np.exp(1j * th) * np.eye(n) - sys.A, sys.B) + sys.D
        else:
            G = sys.D
        best = max(best, np.linalg.norm(G, 2))
    return float(best)


def random_stable_discrete(rng, n, m, p, radius=0.9) -> DiscreteStateSpace:
    A = rng.standard_normal((n, n))
    A *= rng.uniform(0.1, radius) / max(np.abs(np.linalg.eigvals(A)).max(), 1e-12)
    return DiscreteStateSpace(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)),
                              rng.standard_normal((p, m)), 1.0)


def _dare_scalar(tol):
    worst = 0.0
    for a in (0.0, 1.0, 0.5, 0.9, 2.0):
        # q = r = b = 1, s = 0:  X^2 - a^2 X - 1 = 0
        exact = (a * a + np.sqrt(a ** 4 + 4)) / 2
        X = dare_solve([[a]], [[1.0]], [[1.0]], [[1.0]]).X[0, 0]
        worst = max(worst, abs(X - exact))
    return worst <= tol, f"max error {worst:.2e} (tol {tol:.0e})"


def _hinf_known(tol):
    cases = [(DiscreteStateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[3.0]]), 3.0),
             (DiscreteStateSpace([[0.5]], [[1.0]], [[1.0]], [[0.0]]), 2.0),
             (DiscreteStateSpace([[0.9]], [[1.0]], [[0.5]], [[0.0]]), 5.0)]
    worst = max(abs(hinf_norm_discrete(s, tol=1e-10) - v) / v for s, v in cases)
    return worst <= tol, f"max rel error {worst:.2e} (tol {tol:.0e})"


def _hinf_sweep(tol, count=20):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(1, 6))
        s = random_stable_discrete(rng, n, int(rng.integers(1, 3)), int(rng.integers(1, 3)))
        g = hinf_norm_discrete(s, tol=1e-9)
        worst = max(worst, abs(g - dense_sweep_norm(s)) / max(1.0, g))
    return worst <= tol, f"{count} systems, max rel gap {worst:.2e} (tol {tol:.0e})"


def _c2d(tol):
    d = c2d_zoh(ContinuousStateSpace([[0.0]], [[1.0]], [[1.0]], [[0.0]]), 1.0)
    e1 = abs(d.A[0, 0] - 1) + abs(d.B[0, 0] - 1)
    p = c2d_zoh(ContinuousStateSpace([[-1000.0]], [[1000.0]], [[1.0]], [[0.0]]), 1 / 16)
    e2 = abs(p.A[0, 0] - np.exp(-62.5)) + abs(p.B[0, 0] - (1 - np.exp(-62.5)))
    err = max(e1, e2)
    return err <= tol, f"max error {err:.2e} (tol {tol:.0e})"


def _lift_n1(tol):
    rng = np.random.default_rng(3)
    n = 4
    A = rng.standard_normal((n, n)) - 2 * np.eye(n)
    g = ContinuousStateSpace(A, rng.standard_normal((n, 3)), rng.standard_normal((3, n)),
                             np.hstack([rng.standard_normal((3, 2)), np.zeros((3, 1))]))
    sd = SampledDataPlant(g, m_w=2, m_u=1, p_z=2, p_y=1, h=0.7)
    lifted = lift_fsfh(sd, 1).sys
    direct = c2d_zoh(g, 0.7)
    err = max(np.abs(lifted.A - direct.A).max(), np.abs(lifted.B - direct.B).max(),
              np.abs(lifted.C - direct.C).max(), np.abs(lifted.D - direct.D).max())
    return err <= tol, f"max entry difference {err:.2e} (tol {tol:.0e})"


def _rotation(tol):
    err = np.abs(rotation_matrix(10000.0, 1.0) - np.eye(2)).max()
    return err <= tol, f"|A_L - I| = {err:.2e} (tol {tol:.0e})"


def _ofdm_roundtrip(blocks=300, seed=11):
    rng = np.random.default_rng(seed)
    bad = 0
    for pulse in (SquaredPulse(), RootRaisedCosine()):
        cfg = OfdmConfig(pulse=pulse)
        bits = rng.integers(0, 2, blocks * cfg.n_sub)
        w = pulse_shape(ofdm_modulate(bits, cfg), cfg)
        o = nominal_offset(cfg)
        for adv in range(cfg.cp_len + 1):
            bad += int(np.count_nonzero(ofdm_demodulate(w, cfg, o, advance=adv) != bits))
    return bad == 0, f"{blocks} blocks x 2 pulses x all window advances, {bad} bit errors"


def _ideal_ber(tol, trials=1_000_000):
    p = ideal_ber_bpsk(1.0)
    rng = np.random.default_rng(5)
    # BPSK +1 over AWGN at Eb/N0 = 1: noise std sqrt(1/2)
    err = np.count_nonzero(1.0 + rng.standard_normal(trials) * np.sqrt(0.5) < 0)
    mc = err / trials
    se = np.sqrt(p * (1 - p) / trials)
    ok = abs(p - 0.0786) <= tol and abs(mc - p) <= 3 * se
    return ok, f"Q(sqrt 2) = {p:.6f}, Monte-Carlo {mc:.6f} +- {se:.1e}"


def run_suite(strict: bool = False, extra=()) -> list:
    s = 0.1 if strict else 1.0
    checks = [
        ("dare scalar closed forms", lambda: _dare_scalar(1e-10 * s)),
        ("hinf norm known values", lambda: _hinf_known(1e-6 * s)),
        ("hinf norm vs 1e4-point sweep", lambda: _hinf_sweep(1e-5 * s)),
        ("c2d_zoh closed forms", lambda: _c2d(1e-12 * s)),
        ("lift_fsfh N=1 equals c2d_zoh", lambda: _lift_n1(1e-12 * s)),
        ("rotation f=10000 L=1 is identity", lambda: _rotation(1e-9 * s)),
        ("ofdm round trip", _ofdm_roundtrip),
        ("ideal BPSK BER at 0 dB", lambda: _ideal_ber(1e-4)),
    ]
    checks.extend(extra)
    out = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail))
    return out
