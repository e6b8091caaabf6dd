"""Experiment configuration: flat ``key = value`` text with ``#`` comments.

Transfer functions are given as numerator/denominator polynomials in
descending powers of ``s``, either as a coefficient list (``2 1``) or as a
product of bracketed factors with optional powers (``(2 1)^4``).
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

import numpy as np

from .ofdm import OfdmConfig, RootRaisedCosine, SquaredPulse
from .relay import RelayParams, tf_to_ss
from .sim import EB_REFERENCES, NOISE_BANDS, SimConfig

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config",
           "parse_polynomial", "REFERENCE_DEFAULTS"]


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key, msg):
        super().__init__(f"{key}: {msg}" if key else msg)
        self.key = key


def parse_polynomial(text: str) -> np.ndarray:
    """``"2 1"`` -> [2, 1]; ``"(2 1)^2 * (1 3)"`` -> product of the factors."""
    s = text.strip()
    if not s:
        raise ValueError("empty polynomial")
    if "(" not in s:
        return np.array([float(t) for t in re.split(r"[,\s]+", s) if t])
    out = np.array([1.0])
    pos = 0
    pat = re.compile(r"\s*\(([^()]*)\)\s*(?:\^\s*(\d+))?\s*(\*)?")
    while pos < len(s):
        m = pat.match(s, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse polynomial near {s[pos:]!r}")
        factor = parse_polynomial(m.group(1))
        for _ in range(int(m.group(2) or 1)):
            out = np.polymul(out, factor)
        pos = m.end()
        if m.group(3) is None and pos < len(s):
            raise ValueError("factors must be separated by '*'")
    return out


def _float(key, v, positive=False, nonneg=False):
    try:
        x = float(v)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {v!r}") from None
    if not np.isfinite(x):
        raise ConfigError(key, "must be finite")
    if positive and x <= 0:
        raise ConfigError(key, f"must be positive, got {v}")
    if nonneg and x < 0:
        raise ConfigError(key, f"must be nonnegative, got {v}")
    return x


def _int(key, v, lo=None):
    try:
        x = int(v, 0) if isinstance(v, str) else int(v)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {v!r}") from None
    if lo is not None and x < lo:
        raise ConfigError(key, f"must be >= {lo}, got {v}")
    return x


def _list(key, v, nonneg=False):
    items = [t for t in re.split(r"[,\s]+", v.strip()) if t]
    return tuple(_float(key, t, nonneg=nonneg) for t in items)


def _bool(key, v):
    t = v.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {v!r}")


def _choice(options):
    def parse(key, v):
        if v not in options:
            raise ConfigError(key, f"must be one of {', '.join(options)}, got {v!r}")
        return v
    return parse


def _poly(key, v):
    try:
        return tuple(float(c) for c in parse_polynomial(v))
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


# key -> parser; every accepted key is listed here
_PARSERS = {
    "name": lambda k, v: v,
    "output_dir": lambda k, v: v,
    "pulse": _choice(("squared", "rrc")),
    "w_num": _poly, "w_den": _poly,
    "f_num": _poly, "f_den": _poly,
    "p_num": _poly, "p_den": _poly,
    "f": lambda k, v: _float(k, v, nonneg=True),
    "h": lambda k, v: _float(k, v, positive=True),
    "L": lambda k, v: _float(k, v, nonneg=True),
    "r": lambda k, v: _float(k, v, positive=True),
    "a1": lambda k, v: _float(k, v, positive=True),
    "a2": lambda k, v: _float(k, v, positive=True),
    "N": lambda k, v: _int(k, v, 1),
    "n_sub": lambda k, v: _int(k, v, 1),
    "cp_len": lambda k, v: _int(k, v, 0),
    "symbol_period": lambda k, v: _float(k, v, positive=True),
    "rolloff": lambda k, v: _float(k, v, positive=True),
    "span_symbols": lambda k, v: _int(k, v, 1),
    "M": lambda k, v: _int(k, v, 1),
    "n_blocks": lambda k, v: _int(k, v, 1),
    "gain_blocks": lambda k, v: _int(k, v, 1),
    "discard_blocks": lambda k, v: _int(k, v, 0),
    "ebn0_db": lambda k, v: _list(k, v),
    "a2_sweep": lambda k, v: _list(k, v, nonneg=True),
    "gain_ebn0_db": lambda k, v: _float(k, v),
    "seed": lambda k, v: _int(k, v, 0),
    "noise_band": _choice(NOISE_BANDS),
    "eb_reference": _choice(EB_REFERENCES),
    "redesign": _bool,
    "rho": lambda k, v: _float(k, v, positive=True),
    "eps": lambda k, v: _float(k, v, positive=True),
    "gamma_lo": lambda k, v: _float(k, v, positive=True),
    "gamma_hi": lambda k, v: _float(k, v, positive=True),
    "gamma_tol": lambda k, v: _float(k, v, positive=True),
}

REQUIRED = ("name", "pulse")

REFERENCE_DEFAULTS = {
    "output_dir": "out",
    "f_num": (1.0,), "f_den": (1.0,),
    "p_num": (1.0,), "p_den": (0.001, 1.0),
    "f": 10000.0, "h": 1.0, "L": 1.0, "r": 0.15, "a1": 1.0, "a2": 2000.0, "N": 16,
    "n_sub": 64, "cp_len": 16, "rolloff": 0.2, "span_symbols": 8,
    "n_blocks": 150, "gain_blocks": 900, "discard_blocks": 1,
    "ebn0_db": (0.0, 2.0, 4.0, 6.0, 8.0),
    "a2_sweep": (0.0, 500.0, 1000.0, 1500.0, 2000.0, 2500.0, 3000.0),
    "gain_ebn0_db": 2.0, "seed": 2014,
    "noise_band": "chip", "eb_reference": "data", "redesign": True,
    "rho": 1e-4, "eps": 1e-4, "gamma_lo": 1e-3, "gamma_hi": 1e3, "gamma_tol": 1e-3,
}

_PULSE_DEFAULTS = {
    "squared": {"w_num": (1.0,), "w_den": (2.0, 1.0), "symbol_period": 2.0},
    "rrc": {"w_num": (1.0,), "w_den": tuple(float(c) for c in np.poly1d([2.0, 1.0]) ** 4),
            "symbol_period": 3.0},
}

# keys that do not change any computed result
_NON_SEMANTIC = ("name", "output_dir")


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @property
    def name(self) -> str:
        return self.values["name"]

    def with_overrides(self, **kw) -> "ExperimentConfig":
        vals = dict(self.values)
        for k, v in kw.items():
            if v is not None:
                vals[k] = v
        explicit = self.values["_explicit_M"] or kw.get("M") is not None
        return _validated(vals, explicit)

    def canonical_text(self) -> str:
        """Sorted ``key = value`` lines of every semantic entry."""
        lines = []
        for k in sorted(self.values):
            if k in _NON_SEMANTIC or k.startswith("_"):
                continue
            v = self.values[k]
            if isinstance(v, tuple):
                v = " ".join(repr(float(x)) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()

    # builders
    def relay_params(self) -> RelayParams:
        v = self.values
        try:
            return RelayParams(
                W=tf_to_ss(v["w_num"], v["w_den"]), F=tf_to_ss(v["f_num"], v["f_den"]),
                P=tf_to_ss(v["p_num"], v["p_den"]), f=v["f"], h=v["h"], L=v["L"],
                r=v["r"], a1=v["a1"], a2=v["a2"], N=v["N"])
        except ValueError as exc:
            raise ConfigError(None, str(exc)) from None

    def ofdm_config(self) -> OfdmConfig:
        v = self.values
        if v["pulse"] == "squared":
            pulse = SquaredPulse(v["symbol_period"])
        else:
            pulse = RootRaisedCosine(v["symbol_period"], v["rolloff"], v["span_symbols"])
        try:
            return OfdmConfig(v["n_sub"], v["cp_len"], pulse, v["M"], v["h"])
        except ValueError as exc:
            raise ConfigError(None, str(exc)) from None

    def sim_config(self) -> SimConfig:
        v = self.values
        try:
            return SimConfig(self.relay_params(), self.ofdm_config(), v["n_blocks"],
                             v["gain_blocks"], v["ebn0_db"], v["a2_sweep"], v["gain_ebn0_db"],
                             v["seed"], v["discard_blocks"], v["noise_band"], v["eb_reference"])
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(None, str(exc)) from None

    def synthesis_kwargs(self) -> dict:
        v = self.values
        return dict(rho=v["rho"], eps=v["eps"], gamma_lo=v["gamma_lo"],
                    gamma_hi=v["gamma_hi"], tol=v["gamma_tol"])


def _validated(vals, explicit_M):
    if not explicit_M:
        vals["M"] = vals["N"]
    vals["_explicit_M"] = explicit_M
    cfg = ExperimentConfig(vals)
    if not 0 < vals["rolloff"] < 1:
        raise ConfigError("rolloff", "must lie in (0, 1)")
    if vals["cp_len"] >= vals["n_sub"]:
        raise ConfigError("cp_len", "must be smaller than n_sub")
    if vals["gamma_lo"] >= vals["gamma_hi"]:
        raise ConfigError("gamma_lo", "must be smaller than gamma_hi")
    if not vals["seed"] < 2**64:
        raise ConfigError("seed", "must fit in 64 bits")
    k = vals["L"] / vals["h"]
    if abs(k - round(k)) > 1e-9:
        raise ConfigError("L", "must be an integer multiple of h")
    if round(k) < 1:
        raise ConfigError("L", "the simulator needs a loop delay of at least h")
    for key in ("n_blocks", "gain_blocks"):
        if vals[key] < vals["discard_blocks"] + 1:
            raise ConfigError(key, "must be at least discard_blocks + 1")
    # full construction surfaces any remaining invariant violation
    cfg.sim_config()
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(None, f"line {lineno}: expected 'key = value'")
        key, val = (t.strip() for t in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(key, f"unknown key (line {lineno})")
        if key in raw:
            raise ConfigError(key, f"duplicate key (line {lineno})")
        raw[key] = _PARSERS[key](key, val)
    for key in REQUIRED:
        if key not in raw:
            raise ConfigError(key, "required key is missing")
    vals = dict(REFERENCE_DEFAULTS)
    vals.update(_PULSE_DEFAULTS[raw["pulse"]])
    vals.update(raw)
    return _validated(vals, explicit_M="M" in raw)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(None, f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
