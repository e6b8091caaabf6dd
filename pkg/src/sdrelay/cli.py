"""Command-line front end: ``design``, ``sweep`` and ``validate``.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 synthesis infeasible, 4 every sweep point diverged.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config, parse_config
from .io import (ControllerFormatError, format_controller, read_controller,
                 write_curve_csv, write_manifest)
from .lifting import CapacityError
from .ofdm import ideal_ber_bpsk
from .relay import design_canceler, design_lifted_plant
from .sim import sweep_ebn0, sweep_gain
from .synthesis import (InfeasibleError, StructuralError, SynthesisFailure, certify)
from .validate import run_suite

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_DIVERGED = 0, 1, 2, 3, 4

log = logging.getLogger("sdrelay")

REFERENCE_SQUARED = "name = reference-squared\npulse = squared\n"

PLOT_SCRIPT = '''"""Re-draw the BER figures from the CSV files next to this script."""
import csv
import os
import sys

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))


def load(name):
    path = os.path.join(here, name)
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return ([float(r["x"]) for r in rows], [float(r["ber"]) for r in rows],
            [float(r.get("stderr", "nan")) for r in rows])


ebn0 = load("ber_ebn0.csv")
ideal = load("ideal.csv")
if ebn0:
    fig, ax = plt.subplots()
    if ideal:
        ax.semilogy(ideal[0], ideal[1], "k-", label="ideal")
    ax.errorbar(ebn0[0], ebn0[1], yerr=ebn0[2], fmt="o", label="simulated")
    ax.set_xlabel("Eb/N0 [dB]")
    ax.set_ylabel("BER")
    ax.set_yscale("log")
    ax.grid(True, which="both")
    ax.legend()
    fig.savefig(os.path.join(here, "ber_ebn0.png"), dpi=150)
gain = load("ber_gain.csv")
if gain:
    fig, ax = plt.subplots()
    ax.errorbar(gain[0], gain[1], yerr=gain[2], fmt="o-", label="simulated")
    ax.axhline({ideal_gain!r}, color="k", label="ideal")
    ax.set_xlabel("a2")
    ax.set_ylabel("BER")
    ax.set_yscale("log")
    ax.grid(True, which="both")
    ax.legend()
    fig.savefig(os.path.join(here, "ber_gain.png"), dpi=150)
if "--show" in sys.argv:
    plt.show()
'''


def _now():
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _err(msg):
    print(f"sdrelay: {msg}", file=sys.stderr)


def _load(args):
    cfg = load_config(args.config) if args.config else parse_config(REFERENCE_SQUARED)
    return cfg.with_overrides(seed=getattr(args, "seed", None),
                              N=getattr(args, "n_fsfh", None))


def _out_dir(args, cfg) -> Path:
    out = Path(args.out if args.out else cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _design(cfg):
    params = cfg.relay_params()
    return params, design_canceler(params, **cfg.synthesis_kwargs())


def _report(cfg, params, ctrl) -> str:
    stable = ctrl.closed_loop_radius < 1.0
    return "\n".join([
        f"experiment: {cfg.name}",
        f"gamma: {ctrl.gamma:.9g}",
        f"certified lifted closed-loop norm: {ctrl.closed_loop_norm:.9g}",
        f"closed-loop spectral radius: {ctrl.closed_loop_radius:.9g}",
        f"stable: {'yes' if stable else 'no'}",
        f"FSFH N: {params.N}",
        f"controller states: {ctrl.K.nstates}",
        f"loop gain alpha: {params.a1 * params.a2 * params.r:g}",
        f"bisection steps: {len(ctrl.history)}",
    ]) + "\n"


def _write_design(out, cfg, params, ctrl):
    text = format_controller(ctrl.K, ctrl.gamma, {"N": params.N})
    (out / "controller.txt").write_text(text, encoding="utf-8")
    (out / "report.txt").write_text(_report(cfg, params, ctrl), encoding="utf-8")
    return ["controller.txt", "report.txt"]


def cmd_design(args) -> int:
    started = _now()
    cfg = _load(args)
    out = _out_dir(args, cfg)
    params, ctrl = _design(cfg)
    files = _write_design(out, cfg, params, ctrl)
    print(_report(cfg, params, ctrl), end="")
    _manifest(out, cfg, "design", started, files)
    return EXIT_OK


def _manifest(out, cfg, command, started, files):
    write_manifest(out / "manifest.txt", {
        "command": command,
        "experiment": cfg.name,
        "config_sha256": cfg.sha256(),
        "tool_version": __version__,
        "seed": cfg["seed"],
        "started": started,
        "finished": _now(),
        "outputs": ",".join(files),
    })


def cmd_sweep(args) -> int:
    started = _now()
    cfg = _load(args)
    out = _out_dir(args, cfg)
    sim = cfg.sim_config()
    files = []
    redesign = cfg["redesign"] and not args.fixed_k
    K = None
    if args.mode == "ebn0" or not redesign:
        if args.design:
            params, ctrl = _design(cfg)
            files += _write_design(out, cfg, params, ctrl)
            K = ctrl.K
        else:
            path = Path(args.controller) if args.controller else out / "controller.txt"
            if not path.exists():
                raise ConfigError(None, f"controller file {path} not found "
                                        "(run 'design' first or pass --design)")
            K, _ = read_controller(path)
    if args.mode == "ebn0":
        curve = sweep_ebn0(sim, K, workers=args.workers)
        write_curve_csv(out / "ber_ebn0.csv", curve)
        x = np.asarray(sim.ebn0_db, dtype=float)
        _write_ideal(out / "ideal.csv", x, ideal_ber_bpsk(10 ** (x / 10)))
        files += ["ber_ebn0.csv", "ideal.csv"]
    else:
        curve = sweep_gain(sim, K, redesign=redesign, workers=args.workers)
        write_curve_csv(out / "ber_gain.csv", curve)
        files.append("ber_gain.csv")
    (out / "plot_ber.py").write_text(
        PLOT_SCRIPT.replace("{ideal_gain!r}", repr(ideal_ber_bpsk(10 ** (sim.gain_ebn0_db / 10)))),
        encoding="utf-8")
    files.append("plot_ber.py")
    _manifest(out, cfg, f"sweep --mode {args.mode}", started, files)
    for i in range(len(curve)):
        flag = "  diverged" if curve.diverged[i] else ""
        print(f"x={curve.x[i]:g}  ber={curve.ber[i]:.6g}  bits={curve.bits[i]}{flag}")
    if len(curve) and curve.diverged.all():
        _err("every sweep point diverged")
        return EXIT_DIVERGED
    return EXIT_OK


def _write_ideal(path, x, ber):
    lines = ["x,ber"] + [f"{a:.17g},{b:.17g}" for a, b in zip(x, ber)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_validate(args) -> int:
    extra = []
    if args.controller:
        cfg = _load(args)

        def check_controller():
            K, gamma = read_controller(args.controller)
            plant = design_lifted_plant(cfg.relay_params(), cfg["rho"], cfg["eps"])
            stable, norm = certify(plant, K)
            ok = stable and norm <= gamma * (1 + 1e-4)
            return ok, f"stable={stable} norm={norm:.6g} gamma={gamma:.6g}"
        extra.append(("controller certificate", check_controller))
    results = run_suite(strict=args.strict, extra=extra)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdrelay", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="experiment config (default: reference squared-pulse setup)")
        sp.add_argument("--out", help="output directory (default: output_dir from config)")
        sp.add_argument("--seed", type=int, help="override the random seed")
        sp.add_argument("--n-fsfh", type=int, dest="n_fsfh", help="override the FSFH number N")

    d = sub.add_parser("design", help="synthesize the canceler and write controller.txt")
    common(d)
    d.set_defaults(func=cmd_design)

    s = sub.add_parser("sweep", help="BER sweep over Eb/N0 or relay gain")
    common(s)
    s.add_argument("--mode", choices=("ebn0", "gain"), required=True)
    s.add_argument("--design", action="store_true", help="design the controller first")
    s.add_argument("--controller", help="controller file (default: OUT/controller.txt)")
    s.add_argument("--fixed-k", action="store_true", dest="fixed_k",
                   help="gain mode: hold the nominal controller fixed instead of redesigning")
    s.add_argument("--workers", type=int, default=1, help="parallel sweep points")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="run the numerical oracle suite")
    v.add_argument("--strict", action="store_true", help="10x tighter deterministic tolerances")
    v.add_argument("--controller", help="also certify this controller file")
    v.add_argument("--config", help="plant for --controller (default: reference squared-pulse)")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except ControllerFormatError as exc:
        _err(f"controller file error: {exc}")
        return EXIT_VALIDATION if args.command == "validate" else EXIT_CONFIG
    except (InfeasibleError, SynthesisFailure, StructuralError, CapacityError) as exc:
        _err(f"synthesis failed: {exc}")
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
