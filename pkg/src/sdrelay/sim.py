"""Fine-grid closed-loop simulation of the relay, AWGN calibration, BER
measurement and Eb/N0 / relay-gain sweeps.

Per sampling period ``h`` (``M`` fine steps of ``h/M``):

    r   = v + noise + alpha * A_L * u(t - L)    receiver input
    y_d = (F r)(n h)                            sampler
    u_d = K y_d                                 canceler, one step per period
    u   = P (held u_d)                          transmit path on the fine grid

``F`` and ``P`` are advanced exactly by ZOH stepping on the fine grid; both
are folded into per-period lifted maps so the loop costs a handful of small
matrix products per period.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .lti import DiscreteStateSpace, c2d_zoh
from .ofdm import (OfdmConfig, matched_sample,
                   nominal_offset, ofdm_demodulate, ofdm_modulate, pulse_shape)
from .relay import BasebandSignal, RelayParams, design_canceler, rotation_matrix

__all__ = [
    "SimConfig",
    "SimTrace",
    "BerCurve",
    "DivergedError",
    "calibrate_noise",
    "run_relay_sim",
    "measure_ber",
    "find_offset",
    "sweep_ebn0",
    "sweep_gain",
    "DIVERGENCE_CAP",
]

log = logging.getLogger(__name__)

DIVERGENCE_CAP = 1e6
NOISE_BANDS = ("chip", "white")
EB_REFERENCES = ("data", "total")


class DivergedError(RuntimeError):
    """BER requested from a diverged trace."""


@dataclass(frozen=True)
class SimConfig:
    """Simulation setup.

    ``noise_band`` selects how receiver noise is generated: ``"white"`` is
    i.i.d. on the fine grid at the calibrated std; ``"chip"`` projects that
    white noise onto the chip pulse space (chip-rate front end).
    ``eb_reference`` is ``"data"`` (Eb from the data chips, cyclic prefix
    excluded) or ``"total"`` (whole transmitted waveform).
    """

    params: RelayParams
    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    n_blocks: int = 150
    gain_blocks: int = 900
    ebn0_db: tuple = (0.0, 2.0, 4.0, 6.0, 8.0)
    a2_sweep: tuple = (0.0, 500.0, 1000.0, 1500.0, 2000.0, 2500.0, 3000.0)
    gain_ebn0_db: float = 2.0
    seed: int = 2014
    discard_blocks: int = 1
    noise_band: str = "chip"
    eb_reference: str = "data"
    divergence_cap: float = DIVERGENCE_CAP

    def __post_init__(self):
        object.__setattr__(self, "ebn0_db", tuple(float(x) for x in self.ebn0_db))
        object.__setattr__(self, "a2_sweep", tuple(float(x) for x in self.a2_sweep))
        for name in ("n_blocks", "gain_blocks"):
            if getattr(self, name) < self.discard_blocks + 1:
                raise ValueError(f"{name} must be at least discard_blocks + 1")
        if self.discard_blocks < 0:
            raise ValueError("discard_blocks must be nonnegative")
        if any(a < 0 for a in self.a2_sweep):
            raise ValueError("a2_sweep values must be nonnegative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.noise_band not in NOISE_BANDS:
            raise ValueError(f"noise_band must be one of {NOISE_BANDS}")
        if self.eb_reference not in EB_REFERENCES:
            raise ValueError(f"eb_reference must be one of {EB_REFERENCES}")
        if abs(self.ofdm.h - self.params.h) > 1e-12 * self.params.h:
            raise ValueError("OFDM grid and relay sampling period differ")


@dataclass(frozen=True)
class SimTrace:
    """Fine-grid record of one closed-loop run (I/Q rows)."""

    v: BasebandSignal
    u: BasebandSignal
    r: BasebandSignal
    bits: np.ndarray
    diverged: bool
    peak_u: float
    periods: int
    alpha: float
    noise_std: float

    @property
    def z(self) -> BasebandSignal:
        return BasebandSignal(self.v.samples - self.u.samples, self.v.period)


@dataclass(frozen=True)
class BerCurve:
    """BER per sweep point.  Diverged points carry ``bits = 0`` and NaN BER."""

    x: np.ndarray
    ber: np.ndarray
    bits: np.ndarray
    errors: np.ndarray
    diverged: np.ndarray

    @property
    def stderr(self) -> np.ndarray:
        p, n = self.ber, self.bits
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(n > 0, np.sqrt(p * (1 - p) / np.maximum(n, 1)), np.nan)

    def __len__(self):
        return len(self.x)

    @classmethod
    def from_points(cls, x, points):
        errors = np.array([p[1] for p in points], dtype=np.int64)
        bits = np.array([p[0] for p in points], dtype=np.int64)
        div = np.array([p[2] for p in points], dtype=bool)
        with np.errstate(invalid="ignore", divide="ignore"):
            ber = np.where(bits > 0, errors / np.maximum(bits, 1), np.nan)
        return cls(np.asarray(x, dtype=float), ber, bits, errors, div)


def calibrate_noise(ebn0_db: float, tx_waveform, n_bits: int, fine_step: float) -> float:
    """Per-sample, per-channel noise std for white noise on the fine grid.

    ``Eb = sum |x|^2 * fine_step / n_bits``, ``N0 = Eb / 10^(ebn0_db/10)``,
    ``std = sqrt(N0 / (2 fine_step))``.
    """
    if n_bits <= 0:
        raise ValueError("n_bits must be positive")
    x = tx_waveform.samples if isinstance(tx_waveform, BasebandSignal) else np.asarray(tx_waveform)
    eb = float(np.sum(np.asarray(x, dtype=float) ** 2)) * fine_step / n_bits
    if eb <= 0:
        raise ValueError("transmit waveform has zero energy")
    if np.isposinf(ebn0_db):
        return 0.0
    n0 = eb / 10.0 ** (ebn0_db / 10.0)
    return math.sqrt(n0 / (2.0 * fine_step))


# --------------------------------------------------------------------------
# per-period lifted maps


def _lifted_filter(g, dt, M):
    """Fine-step ZOH model of ``g`` as a per-period map.

    Returns ``(Phi_M, Gam)`` with ``x+ = Phi_M x + Gam @ r_period`` (``r``
    stacked time-major) and ``(C, D)`` for the boundary output.
    """
    d = c2d_zoh(g, dt)
    n, m = d.nstates, d.ninputs
    Phi_M = np.linalg.matrix_power(d.A, M) if n else np.zeros((0, 0))
    Gam = np.zeros((n, m * M))
    P = np.eye(n)
    for j in range(M - 1, -1, -1):
        Gam[:, j * m:(j + 1) * m] = P @ d.B
        P = P @ d.A
    return Phi_M, Gam, d.C, d.D


def _lifted_hold(g, dt, M):
    """Held input through ``g``: fine outputs over one period and next state."""
    d = c2d_zoh(g, dt)
    n, m, p = d.nstates, d.ninputs, d.noutputs
    Ox = np.zeros((p * M, n))
    Ou = np.zeros((p * M, m))
    Ak = np.eye(n)
    acc = np.zeros((n, m))
    for j in range(M):
        Ox[j * p:(j + 1) * p] = d.C @ Ak
        Ou[j * p:(j + 1) * p] = d.C @ acc + d.D
        acc = d.A @ acc + d.B
        Ak = d.A @ Ak
    return Ox, Ou, Ak, acc


def _pair(g):
    I2 = np.eye(2)
    return type(g)(np.kron(I2, g.A), np.kron(I2, g.B), np.kron(I2, g.C), np.kron(I2, g.D))


def _as_discrete(K, h):
    K = getattr(K, "K", K)
    if not isinstance(K, DiscreteStateSpace):
        raise TypeError("controller must be a DiscreteStateSpace or Controller")
    if abs(K.period - h) > 1e-12 * h:
        raise ValueError(f"controller period {K.period} does not match h={h}")
    if K.ninputs != 2 or K.noutputs != 2:
        raise ValueError("controller must map 2 measurements to 2 controls")
    return K


# --------------------------------------------------------------------------
# waveform and noise


def _bits_rng(seed):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0,)))


def _noise_rng(seed, point):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1, int(point))))


def _waveforms(cfg: SimConfig, n_blocks: int):
    """Sent bits, fine-grid transmit waveform (padded) and its data-only part."""
    oc = cfg.ofdm
    bits = _bits_rng(cfg.seed).integers(0, 2, n_blocks * oc.n_sub, dtype=np.uint8)
    chips = ofdm_modulate(bits, oc)
    v = pulse_shape(chips, oc).samples
    data = chips.samples.reshape(2, n_blocks, oc.block_chips).copy()
    data[:, :, :oc.cp_len] = 0.0
    v_data = pulse_shape(data.reshape(2, -1), oc).samples
    # trailing room for the loop lag and the offset search
    M = oc.M
    pad = 2 * oc.block_samples
    total = v.shape[1] + pad
    total += (-total) % M
    v = np.pad(v, ((0, 0), (0, total - v.shape[1])))
    return bits, v, v_data


def _project_noise(white, oc: OfdmConfig):
    """Orthogonal projection of white fine-grid noise onto the chip pulses."""
    S = oc.chip_samples
    n = white.shape[1]
    if not oc.is_rrc:
        k = n // S
        c = white[:, :k * S].reshape(2, k, S).mean(axis=2)
        out = np.zeros_like(white)
        out[:, :k * S] = np.repeat(c, S, axis=1)
        return out
    off = nominal_offset(oc)
    k = (n - 1) // S + 1
    # coefficients on every chip instant whose pulse overlaps the record
    c = matched_sample(white, oc, -off, k + 2 * oc.pulse.span_symbols)
    shaped = pulse_shape(c, oc).samples  # chip 0 (instant -off) lands at +off
    return shaped[:, 2 * off:2 * off + n]


# --------------------------------------------------------------------------
# closed loop


def run_relay_sim(cfg: SimConfig, K, ebn0_db: float | None = None,
                  a2_override: float | None = None, *, point: int = 0,
                  n_blocks: int | None = None) -> SimTrace:
    """Simulate the relay loop with canceler ``K`` (Controller or discrete system).

    ``ebn0_db=None`` disables noise.  ``a2_override`` replaces ``params.a2``
    in the simulated loop only (``0`` is allowed: no coupling).  ``point``
    selects the noise substream.
    """
    p, oc = cfg.params, cfg.ofdm
    h, M = p.h, oc.M
    dt = h / M
    Kd = _as_discrete(K, h)
    a2 = p.a2 if a2_override is None else float(a2_override)
    if a2 < 0:
        raise ValueError("a2 must be nonnegative")
    alpha = p.a1 * a2 * p.r
    k = p.delay_steps
    if k == 0 and alpha != 0:
        raise ValueError("the simulator needs a loop delay of at least one period")
    n_blocks = cfg.n_blocks if n_blocks is None else int(n_blocks)

    bits, v, v_data = _waveforms(cfg, n_blocks)
    n_fine = v.shape[1]
    std = 0.0
    noise = None
    if ebn0_db is not None and not np.isposinf(ebn0_db):
        ref = v_data if cfg.eb_reference == "data" else v
        std = calibrate_noise(ebn0_db, ref, bits.size, dt)
        noise = _noise_rng(cfg.seed, point).standard_normal((2, n_fine)) * std
        if cfg.noise_band == "chip":
            noise = _project_noise(noise, oc)
    ext = v if noise is None else v + noise

    # lifted per-period maps (signals stacked time-major, 2 channels each)
    PhiF, GamF, CF, DF = _lifted_filter(_pair(p.F), dt, M)
    Ox, Ou, PhiP, GamP = _lifted_hold(_pair(p.P), dt, M)
    AK, BK, CK, DK = Kd.A, Kd.B, Kd.C, Kd.D
    coup = alpha * rotation_matrix(p.f, p.L)

    n_per = n_fine // M
    ext_t = ext.T                       # (n_fine, 2)
    u_t = np.zeros((n_fine, 2))
    r_t = np.zeros((n_fine, 2))
    xF = np.zeros(PhiF.shape[0])
    xK = np.zeros(Kd.nstates)
    xP = np.zeros(PhiP.shape[0])
    cap = cfg.divergence_cap
    diverged = False
    periods = n_per
    for m in range(n_per):
        s = slice(m * M, (m + 1) * M)
        rb = ext_t[s]
        if alpha and m >= k:
            rb = rb + u_t[(m - k) * M:(m - k + 1) * M] @ coup.T
        r_t[s] = rb
        yd = CF @ xF + DF @ rb[0]
        xF = PhiF @ xF + GamF @ rb.ravel()
        ud = CK @ xK + DK @ yd
        xK = AK @ xK + BK @ yd
        ub = Ox @ xP + Ou @ ud
        xP = PhiP @ xP + GamP @ ud
        u_t[s] = ub.reshape(M, 2)
        if not np.all(np.abs(ub) <= cap):
            diverged = True
            periods = m + 1
            break
    end = periods * M
    peak = float(np.max(np.abs(u_t[:end]))) if end else 0.0
    if not np.isfinite(peak):
        peak = float("inf")
    u_keep = np.nan_to_num(u_t[:end].T, nan=0.0, posinf=cap, neginf=-cap)
    r_keep = np.nan_to_num(r_t[:end].T, nan=0.0, posinf=cap, neginf=-cap)
    return SimTrace(BasebandSignal(v[:, :end], dt), BasebandSignal(u_keep, dt),
                    BasebandSignal(r_keep, dt), bits, diverged, peak, periods, alpha, std)


# --------------------------------------------------------------------------
# BER


def find_offset(trace: SimTrace, cfg: SimConfig) -> int:
    """Fine-grid index of chip 0 in ``u``: nominal pulse offset plus the lag
    that maximizes the I+Q cross-correlation of ``u`` against ``v`` within
    +-2 OFDM blocks."""
    u, v = trace.u.samples, trace.v.samples
    n = v.shape[1]
    cc = (signal.correlate(u[0], v[0], mode="full", method="fft")
          + signal.correlate(u[1], v[1], mode="full", method="fft"))
    lags = np.arange(-(n - 1), n)
    w = 2 * cfg.ofdm.block_samples
    keep = np.abs(lags) <= w
    lag = int(lags[keep][np.argmax(cc[keep])])
    return nominal_offset(cfg.ofdm) + lag


def _count_errors(trace: SimTrace, sent_bits, cfg: SimConfig):
    if trace.diverged:
        raise DivergedError("BER is undefined for a diverged trace")
    oc = cfg.ofdm
    sent = np.asarray(sent_bits, dtype=np.uint8)
    total = sent.size // oc.n_sub
    offset = find_offset(trace, cfg)
    B = oc.block_samples
    first = max(cfg.discard_blocks, -(offset // B) if offset < 0 else 0)
    if first >= total:
        raise ValueError("no blocks left after the warm-up and offset")
    x = trace.u.samples
    start = offset + first * B
    S = oc.chip_samples
    instant = start + (0 if oc.is_rrc else S // 2)
    avail = max(0, (x.shape[1] - 1 - instant) // S + 1) // oc.block_chips
    nb = min(total - first, avail)
    if nb < 1:
        raise ValueError("trace is too short for one block after the offset")
    got = ofdm_demodulate(x, oc, start, n_blocks=nb)
    ref = sent[first * oc.n_sub:(first + nb) * oc.n_sub]
    return int(np.count_nonzero(got != ref)), int(ref.size), offset


def measure_ber(trace: SimTrace, sent_bits, cfg: SimConfig):
    """``(ber, offset)`` of ``trace.u`` against the sent bits, excluding the
    first ``cfg.discard_blocks`` blocks."""
    errors, bits, offset = _count_errors(trace, sent_bits, cfg)
    return errors / bits, offset


def _point(cfg, K, ebn0_db, a2, point, n_blocks, redesign):
    """One sweep point -> ``(bits, errors, diverged)``."""
    if redesign:
        p = cfg.params
        if a2 > 0:
            K = design_canceler(p.with_gain(a2))
        else:
            K = design_canceler(p, alpha=0.0)
    tr = run_relay_sim(cfg, K, ebn0_db, a2, point=point, n_blocks=n_blocks)
    if tr.diverged:
        log.warning("point %d (Eb/N0=%s, a2=%s) diverged after %d periods",
                    point, ebn0_db, a2, tr.periods)
        return 0, 0, True
    errors, bits, _ = _count_errors(tr, tr.bits, cfg)
    return bits, errors, False


def _run_points(jobs, workers):
    if workers is None or workers <= 1 or len(jobs) <= 1:
        return [_point(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(_point, *j) for j in jobs]
        return [f.result() for f in futures]


def sweep_ebn0(cfg: SimConfig, K, workers: int = 1) -> BerCurve:
    """BER versus Eb/N0 (dB) at the nominal gain over ``cfg.ebn0_db``, with
    ``cfg.n_blocks`` blocks per point and an independent noise stream each."""
    jobs = [(cfg, K, e, cfg.params.a2, i, cfg.n_blocks, False)
            for i, e in enumerate(cfg.ebn0_db)]
    return BerCurve.from_points(cfg.ebn0_db, _run_points(jobs, workers))


def sweep_gain(cfg: SimConfig, K=None, redesign: bool = True,
               workers: int = 1) -> BerCurve:
    """BER versus relay gain ``a2`` at ``cfg.gain_ebn0_db``.

    With ``redesign`` (default) the canceler is synthesized for each ``a2``
    (``a2 = 0`` gives the interference-free design); otherwise the given
    ``K`` is held fixed while only the simulated loop gain changes.
    """
    if not redesign and K is None:
        raise ValueError("a fixed-controller sweep needs K")
    jobs = [(cfg, K, cfg.gain_ebn0_db, a2, i, cfg.gain_blocks, redesign)
            for i, a2 in enumerate(cfg.a2_sweep)]
    return BerCurve.from_points(cfg.a2_sweep, _run_points(jobs, workers))
