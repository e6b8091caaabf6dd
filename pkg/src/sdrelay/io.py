"""Plain-text persistence: controllers, BER curves and run manifests."""

from __future__ import annotations

import re

import numpy as np

from .lti import DiscreteStateSpace
from .sim import BerCurve

__all__ = ["ControllerFormatError", "write_controller", "read_controller",
           "format_controller", "write_curve_csv", "write_manifest", "CSV_HEADER"]

CSV_HEADER = "x,ber,bits,errors,stderr,diverged"
_HEADER_RE = re.compile(r"#\s*period=(\S+)\s+gamma=(\S+)\s+n=(\d+)\s*$")
_SECTIONS = ("Ad", "Bd", "Cd", "Dd")


class ControllerFormatError(ValueError):
    """Malformed controller file."""


def _fmt(x: float) -> str:
    return "%.17g" % x


def format_controller(K: DiscreteStateSpace, gamma: float, extra: dict | None = None) -> str:
    """Header ``# period=<h> gamma=<g> n=<states>``, optional ``# key=value``
    comment lines, then one section per matrix: ``<name> <rows> <cols>``
    followed by the rows. A block with no columns has no row lines."""
    lines = [f"# period={_fmt(K.period)} gamma={_fmt(gamma)} n={K.nstates}"]
    for k, v in (extra or {}).items():
        lines.append(f"# {k}={v}")
    for name, M in zip(_SECTIONS, (K.A, K.B, K.C, K.D)):
        lines.append(f"{name} {M.shape[0]} {M.shape[1]}")
        if M.shape[1]:
            lines.extend(" ".join(_fmt(x) for x in row) for row in M)
    return "\n".join(lines) + "\n"


def write_controller(path, K: DiscreteStateSpace, gamma: float, extra: dict | None = None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_controller(K, gamma, extra))


def read_controller(path):
    """``(K, gamma)`` from a controller file; raises ControllerFormatError."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise ControllerFormatError(f"{path}: cannot read ({exc})") from None
    if not lines:
        raise ControllerFormatError(f"{path}: empty file")
    m = _HEADER_RE.match(lines[0])
    if not m:
        raise ControllerFormatError(f"{path}:1: expected '# period=<h> gamma=<g> n=<states>'")
    try:
        period, gamma, n = float(m.group(1)), float(m.group(2)), int(m.group(3))
    except ValueError:
        raise ControllerFormatError(f"{path}:1: bad header values") from None
    body = [(i + 1, ln.strip()) for i, ln in enumerate(lines) if i > 0
            and ln.strip() and not ln.lstrip().startswith("#")]
    mats = {}
    pos = 0
    for name in _SECTIONS:
        if pos >= len(body):
            raise ControllerFormatError(f"{path}: missing section {name}")
        lineno, head = body[pos]
        parts = head.split()
        if len(parts) != 3 or parts[0] != name:
            raise ControllerFormatError(f"{path}:{lineno}: expected '{name} <rows> <cols>'")
        try:
            r, c = int(parts[1]), int(parts[2])
        except ValueError:
            raise ControllerFormatError(f"{path}:{lineno}: bad dimensions") from None
        nrows = r if c else 0
        rows = body[pos + 1:pos + 1 + nrows]
        if len(rows) != nrows:
            raise ControllerFormatError(f"{path}: section {name} is truncated")
        M = np.zeros((r, c))
        for i, (ln, text) in enumerate(rows):
            try:
                vals = [float(t) for t in text.split()]
            except ValueError:
                raise ControllerFormatError(f"{path}:{ln}: non-numeric entry") from None
            if len(vals) != c:
                raise ControllerFormatError(f"{path}:{ln}: expected {c} columns, got {len(vals)}")
            M[i] = vals
        if not np.all(np.isfinite(M)):
            raise ControllerFormatError(f"{path}: section {name} has non-finite entries")
        mats[name] = M
        pos += 1 + nrows
    if pos != len(body):
        raise ControllerFormatError(f"{path}:{body[pos][0]}: trailing content")
    A, B, C, D = (mats[s] for s in _SECTIONS)
    if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n \
            or C.shape[0] != D.shape[0] or B.shape[1] != D.shape[1]:
        raise ControllerFormatError(f"{path}: inconsistent matrix dimensions")
    try:
        K = DiscreteStateSpace(A, B, C, D, period)
    except ValueError as exc:
        raise ControllerFormatError(f"{path}: {exc}") from None
    return K, gamma


def write_curve_csv(path, curve: BerCurve):
    rows = [CSV_HEADER]
    se = curve.stderr
    for i in range(len(curve)):
        rows.append(",".join([_fmt(curve.x[i]), _fmt(curve.ber[i]), str(int(curve.bits[i])),
                              str(int(curve.errors[i])), _fmt(se[i]),
                              str(int(curve.diverged[i]))]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")


def write_manifest(path, entries: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, v in entries.items():
            fh.write(f"{k} = {v}\n")
