"""OFDM/BPSK baseband modem with cyclic prefix and chip pulse shaping.

Chips are the OFDM time samples (one complex value per chip, I = real part,
Q = imaginary part).  Pulse shaping maps the chip train to the fine
simulation grid of ``M`` steps per sampling period ``h``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import signal
from scipy.special import erfc

from .relay import BasebandSignal

__all__ = [
    "SquaredPulse",
    "RootRaisedCosine",
    "OfdmConfig",
    "bpsk_map",
    "bpsk_demap",
    "ofdm_modulate",
    "ofdm_demodulate",
    "pulse_shape",
    "matched_sample",
    "rrc_taps",
    "nominal_offset",
    "ideal_ber_bpsk",
]


@dataclass(frozen=True)
class SquaredPulse:
    """Each chip held for ``symbol_period`` seconds."""

    symbol_period: float = 2.0


@dataclass(frozen=True)
class RootRaisedCosine:
    """Root-raised-cosine chips, truncated to ``span_symbols`` on each side."""

    symbol_period: float = 3.0
    rolloff: float = 0.2
    span_symbols: int = 8


Pulse = Union[SquaredPulse, RootRaisedCosine]


@dataclass(frozen=True)
class OfdmConfig:
    n_sub: int = 64
    cp_len: int = 16
    pulse: Pulse = field(default_factory=SquaredPulse)
    M: int = 16
    h: float = 1.0

    def __post_init__(self):
        if int(self.n_sub) != self.n_sub or self.n_sub < 1:
            raise ValueError("n_sub must be a positive integer")
        if int(self.cp_len) != self.cp_len or not 0 <= self.cp_len < self.n_sub:
            raise ValueError("need 0 <= cp_len < n_sub")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError("oversampling M must be an integer >= 1")
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValueError("h must be positive")
        ratio = self.pulse.symbol_period / self.h
        if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("symbol_period must be an integer multiple of h")
        if isinstance(self.pulse, RootRaisedCosine):
            if not 0 < self.pulse.rolloff < 1:
                raise ValueError("rolloff must lie in (0, 1)")
            if int(self.pulse.span_symbols) != self.pulse.span_symbols or self.pulse.span_symbols < 1:
                raise ValueError("span_symbols must be a positive integer")

    @property
    def block_chips(self) -> int:
        return self.n_sub + self.cp_len

    @property
    def fine_step(self) -> float:
        return self.h / self.M

    @property
    def chip_samples(self) -> int:
        """Fine-grid samples per chip."""
        return int(round(self.pulse.symbol_period / self.h)) * self.M

    @property
    def block_samples(self) -> int:
        return self.block_chips * self.chip_samples

    @property
    def is_rrc(self) -> bool:
        return isinstance(self.pulse, RootRaisedCosine)


def bpsk_map(bits) -> np.ndarray:
    """0 -> +1, 1 -> -1."""
    return 1.0 - 2.0 * np.asarray(bits, dtype=float)


def bpsk_demap(x) -> np.ndarray:
    """Hard decision on the sign of the real part."""
    return (np.real(x) < 0).astype(np.uint8)


def _check_bits(bits, n_sub):
    b = np.asarray(bits)
    if b.ndim != 1:
        raise ValueError("bits must be one-dimensional")
    if b.size % n_sub:
        raise ValueError(f"bit count {b.size} is not a multiple of n_sub={n_sub}")
    if not np.all((b == 0) | (b == 1)):
        raise ValueError("bits must be 0 or 1")
    return b.astype(np.uint8)


def ofdm_modulate(bits, cfg: OfdmConfig) -> BasebandSignal:
    """BPSK onto ``n_sub`` subcarriers, unitary IDFT, cyclic prefix.

    Returns the chip-rate I/Q sequence (``n_blocks * (n_sub + cp_len)`` chips).
    """
    b = _check_bits(bits, cfg.n_sub)
    X = bpsk_map(b).reshape(-1, cfg.n_sub)
    x = np.fft.ifft(X, axis=1, norm="ortho")
    if cfg.cp_len:
        x = np.hstack([x[:, -cfg.cp_len:], x])
    x = x.ravel()
    return BasebandSignal(np.vstack([x.real, x.imag]), cfg.pulse.symbol_period)


def rrc_taps(symbol_period: float, rolloff: float, span: int, step: float) -> np.ndarray:
    """Root-raised-cosine impulse response on ``[-span*T, span*T]`` with
    ``sum(g**2) * step == 1``."""
    T, b = symbol_period, rolloff
    S = int(round(T / step))
    t = np.arange(-span * S, span * S + 1) * step / T  # in symbol periods
    g = np.empty_like(t)
    at0 = np.isclose(t, 0.0, atol=1e-12)
    sing = np.isclose(np.abs(t), 1.0 / (4.0 * b), atol=1e-12)
    reg = ~(at0 | sing)
    tr = t[reg]
    g[reg] = ((np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b)))
              / (np.pi * tr * (1 - (4 * b * tr) ** 2)))
    g[at0] = 1.0 - b + 4.0 * b / np.pi
    g[sing] = (b / np.sqrt(2.0)) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * b))
                                   + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b)))
    return g / np.sqrt(np.sum(g ** 2) * step)


def _taps(cfg: OfdmConfig) -> np.ndarray:
    p = cfg.pulse
    return rrc_taps(p.symbol_period, p.rolloff, p.span_symbols, cfg.fine_step)


def nominal_offset(cfg: OfdmConfig) -> int:
    """Fine-grid index of chip 0 in the output of :func:`pulse_shape`.

    For RRC this is the pulse centre, i.e. the filter group delay.
    """
    return cfg.pulse.span_symbols * cfg.chip_samples if cfg.is_rrc else 0


def pulse_shape(chips: BasebandSignal, cfg: OfdmConfig) -> BasebandSignal:
    """Chip train to the fine grid ``h/M``.

    Squared pulse: each chip is held for ``symbol_period``.  RRC: impulses at
    the chip instants filtered by the unit-energy RRC response; the output
    is the full convolution, so it carries ``span_symbols`` chips of lead-in
    and tail.
    """
    x = np.asarray(chips.samples if isinstance(chips, BasebandSignal) else chips, dtype=float)
    S = cfg.chip_samples
    if not cfg.is_rrc:
        return BasebandSignal(np.repeat(x, S, axis=1), cfg.fine_step)
    up = np.zeros((2, x.shape[1] * S))
    up[:, ::S] = x
    y = signal.oaconvolve(up, _taps(cfg)[None, :], axes=1)
    return BasebandSignal(y, cfg.fine_step)


def matched_sample(waveform, cfg: OfdmConfig, offset: int, n_chips: int) -> np.ndarray:
    """Chip estimates (``2 x n_chips``) from a fine-grid waveform whose chip 0
    sits at ``offset``.

    Squared: the sample at mid-chip.  RRC: the matched-filter output at the
    chip instants (inner product with the shifted pulse).
    """
    x = np.asarray(waveform.samples if isinstance(waveform, BasebandSignal) else waveform,
                   dtype=float)
    S = cfg.chip_samples
    if not cfg.is_rrc:
        idx = offset + S // 2 + S * np.arange(n_chips)
        return x[:, idx]
    g = _taps(cfg)
    c = (g.size - 1) // 2
    first = offset - c
    last = offset + (n_chips - 1) * S + c + 1
    lo, hi = max(first, 0), min(last, x.shape[1])
    seg = np.zeros((2, last - first))
    seg[:, lo - first:hi - first] = x[:, lo:hi]
    # correlate with the (symmetric) pulse; keep only the chip instants
    full = signal.oaconvolve(seg, g[None, ::-1], axes=1, mode="valid")
    return full[:, ::S][:, :n_chips] * cfg.fine_step


def ofdm_demodulate(waveform, cfg: OfdmConfig, offset: int,
                    n_blocks: int | None = None, advance: int = 0) -> np.ndarray:
    """Bits from a fine-grid waveform whose first chip sits at ``offset``.

    ``n_blocks`` defaults to every complete block after ``offset``.  The DFT
    window starts ``advance`` chips before the end of each cyclic prefix;
    the resulting linear phase is removed, so any ``0 <= advance <= cp_len``
    decodes identically on a clean channel.
    """
    x = np.asarray(waveform.samples if isinstance(waveform, BasebandSignal) else waveform,
                   dtype=float)
    offset = int(offset)
    if offset < 0:
        raise ValueError("offset must be nonnegative")
    if not 0 <= advance <= cfg.cp_len:
        raise ValueError("advance must lie in [0, cp_len]")
    S, B = cfg.chip_samples, cfg.block_chips
    # chips whose sampling instant lies inside the waveform
    first_instant = offset + (0 if cfg.is_rrc else S // 2)
    avail = max(0, (x.shape[1] - 1 - first_instant) // S + 1)
    if n_blocks is None:
        n_blocks = avail // B
    if n_blocks < 1 or n_blocks * B > avail:
        raise ValueError("waveform is shorter than the requested blocks after the offset")
    chips = matched_sample(x, cfg, offset, n_blocks * B)
    start = cfg.cp_len - advance
    c = (chips[0] + 1j * chips[1]).reshape(n_blocks, B)[:, start:start + cfg.n_sub]
    X = np.fft.fft(c, axis=1, norm="ortho")
    if advance:
        k = np.arange(cfg.n_sub)
        X = X * np.exp(2j * np.pi * k * advance / cfg.n_sub)
    return bpsk_demap(X).ravel()


def ideal_ber_bpsk(ebn0_linear):
    """Coherent BPSK bit error probability ``Q(sqrt(2 Eb/N0))``."""
    e = np.asarray(ebn0_linear, dtype=float)
    if np.any(e < 0):
        raise ValueError("Eb/N0 must be nonnegative")
    out = 0.5 * erfc(np.sqrt(e))
    return float(out) if out.ndim == 0 else out
