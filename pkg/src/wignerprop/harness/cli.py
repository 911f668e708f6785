"""Command line: ``wignerprop <subcommand> [options]``.

Exit codes: 0 success, 2 validation error, 3 numerical-accuracy error.
Scenario options override values from ``--preset`` or ``--config``.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import __version__
from ..classical import airy_coefficients, classify_stability, stability_angle
from ..errors import AccuracyError, ValidationError, WignerPropError
from ..model import PhasePoint, PolynomialPotential, hamiltonian
from .config import (ExactParams, PathIntParams, ScenarioConfig, VanVleckParams, list_presets,
                     load_config, load_preset, parse_config, preset_text)
from .fileio import read_grid
from .metrics import compare_fields
from .runner import ModuleError, classical_trajectory, run_scenario

logger = logging.getLogger("wignerprop")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ACCURACY = 3

_DEFAULT_BLOCKS = {"vanvleck": VanVleckParams, "pathint": PathIntParams, "exact": ExactParams}


def _float_list(text):
    try:
        return tuple(float(x) for x in text.replace("[", "").replace("]", "").split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _scenario_options(p):
    g = p.add_argument_group("scenario")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--preset", help="built-in scenario name (see 'presets')")
    src.add_argument("--config", type=Path, help="scenario INI file or a run manifest.json")
    g.add_argument("--potential", type=_float_list, help="coefficients c0,c1,... of V(q)")
    g.add_argument("--mass", type=float)
    g.add_argument("--p", dest="p0", type=float, help="initial momentum p'")
    g.add_argument("--q", dest="q0", type=float, help="initial position q'")
    g.add_argument("--t", type=float, help="propagation time")
    g.add_argument("--times", type=_float_list, help="comma-separated list of times")
    g.add_argument("--hbar", type=float)
    g.add_argument("--dt", type=float, help="integration step")
    g.add_argument("--np", dest="n_p", type=int, help="grid cells along p")
    g.add_argument("--nq", dest="n_q", type=int, help="grid cells along q")
    g.add_argument("--half-p", type=float, help="grid half width along p (centred on r_cl)")
    g.add_argument("--half-q", type=float, help="grid half width along q (centred on r_cl)")
    v = p.add_argument_group("van Vleck pairs")
    v.add_argument("--n-radii", type=int)
    v.add_argument("--n-angles", type=int)
    v.add_argument("--rho-max", type=float)
    v.add_argument("--smoothing-radius", type=float)
    v.add_argument("--eps-caustic", type=float)
    a = p.add_argument_group("path integral")
    a.add_argument("--route", choices=("monodromy", "adiabatic"))
    a.add_argument("--window", choices=("sinc", "smooth"))
    a.add_argument("--n-alpha", type=int)
    a.add_argument("--n-beta", type=int)
    e = p.add_argument_group("exact")
    e.add_argument("--q-min", type=float, help="left wall of the spectral box")
    e.add_argument("--q-max", type=float, help="right wall of the spectral box")
    e.add_argument("--n-quanta", type=float, help="energy cutoff above H(r') in units of hbar omega")
    e.add_argument("--n-grid", type=int)
    e.add_argument("--supersample", type=int, help="return k x k cell averages")
    e.add_argument("--taper", type=float, help="fraction of the spectrum under the smooth cutoff")
    o = p.add_argument_group("output")
    o.add_argument("--out", type=Path, help="output directory")
    o.add_argument("--no-heatmap", action="store_true", help="skip the PPM images")
    o.add_argument("--dump-trajectory", action="store_true", help="write the classical trajectory")


def _base_config(args):
    if args.preset:
        return load_preset(args.preset)
    if args.config:
        if args.config.suffix == ".json":
            try:
                manifest = json.loads(args.config.read_text())
                return parse_config(manifest["config_ini"])
            except (OSError, KeyError, json.JSONDecodeError) as exc:
                raise ValidationError(f"cannot replay manifest {args.config}: {exc}") from exc
        return load_config(args.config)
    missing = [n for n, v in (("--potential", args.potential), ("--p", args.p0), ("--q", args.q0),
                              ("--hbar", args.hbar)) if v is None]
    if args.t is None and not args.times:
        missing.append("--t")
    if missing:
        raise ValidationError(f"without --preset/--config these are required: {', '.join(missing)}")
    t = args.t if args.t is not None else max(args.times)
    return ScenarioConfig(name="cli", potential=PolynomialPotential(args.potential, args.mass or 1.0),
                          r_prime=PhasePoint(args.p0, args.q0), t=t, hbar=args.hbar, method="pathint",
                          pathint=PathIntParams())


def build_config(args, method=None):
    cfg = _base_config(args)
    top = {}
    if args.potential is not None or args.mass is not None:
        top["potential"] = PolynomialPotential(
            args.potential if args.potential is not None else cfg.potential.coefficients,
            args.mass if args.mass is not None else cfg.potential.mass)
    if args.p0 is not None or args.q0 is not None:
        top["r_prime"] = PhasePoint(args.p0 if args.p0 is not None else cfg.r_prime.p,
                                    args.q0 if args.q0 is not None else cfg.r_prime.q)
    if args.t is not None:
        top["t"] = args.t
        top["times"] = args.times if args.times else ()
    elif args.times:
        top["times"] = args.times
        top["t"] = max(args.times)
    method = method or getattr(args, "method", None)
    if method:
        top["method"] = method
        for block in (("vanvleck", "pathint", "exact") if method == "all" else (method,)):
            if getattr(cfg, block) is None:
                top[block] = _DEFAULT_BLOCKS[block]()
    out = {}
    if args.out is not None:
        out["output.directory"] = str(args.out)
    if args.no_heatmap:
        out["output.heatmap"] = False
    if args.dump_trajectory:
        out["output.trajectory"] = True
    kw = {
        "hbar": args.hbar, "dt": args.dt,
        "grid.np": args.n_p, "grid.nq": args.n_q, "grid.half_p": args.half_p, "grid.half_q": args.half_q,
        "vanvleck.n_radii": args.n_radii, "vanvleck.n_angles": args.n_angles,
        "vanvleck.rho_max": args.rho_max, "vanvleck.smoothing_radius": args.smoothing_radius,
        "vanvleck.eps_caustic": args.eps_caustic,
        "pathint.route": args.route, "pathint.window": args.window,
        "pathint.n_alpha": args.n_alpha, "pathint.n_beta": args.n_beta,
        "exact.q_min": args.q_min, "exact.q_max": args.q_max,
        "exact.n_quanta": args.n_quanta, "exact.n_grid": args.n_grid,
        "exact.supersample": args.supersample, "exact.taper": args.taper,
        **out,
    }
    if any(k.startswith("grid.half") and v is not None for k, v in kw.items()):
        kw["grid.center"] = "classical"
    # nested overrides for blocks the scenario does not use are dropped
    used = {"grid", "output"} | {b for b in ("vanvleck", "pathint", "exact")
                                  if getattr(cfg, b) is not None or b in top}
    kw = {k: v for k, v in kw.items() if "." not in k or k.split(".")[0] in used}
    cfg = cfg.with_overrides(**top) if top else cfg
    return cfg.with_overrides(**kw)


def _summary(res):
    return {
        "scenario": res.config.name,
        "method": res.config.method,
        "diagnostics": {f"t={t:.6g}": d for t, d in res.diagnostics.items()},
        "metrics": {f"{k[0]}@t={k[1]:.6g}": m.as_dict() for k, m in res.metrics.items()},
        "files": [str(f) for f in res.files] + ([str(res.manifest_path)] if res.manifest_path else []),
        "timings_s": res.timings,
    }


def _print_json(obj):
    def default(x):
        if isinstance(x, (np.floating, np.integer)):
            return x.item()
        if isinstance(x, np.ndarray):
            return x.tolist()
        return str(x)
    print(json.dumps(obj, indent=2, sort_keys=True, default=default))


def cmd_presets(args):
    for name in list_presets():
        cfg = load_preset(name)
        print(f"{name:22s} {cfg.description}")
        if args.show:
            print(preset_text(name))
    return EXIT_OK


def cmd_trajectory(args):
    cfg = build_config(args)
    rows = []
    for t in cfg.all_times:
        traj = classical_trajectory(cfg, t)
        phi = stability_angle(traj, cfg.potential)
        info = {"t": t, "r_cl": list(traj.states[-1]), "phi": [phi.real, phi.imag],
                "stability_class": classify_stability(traj.curvature2),
                "det_M": float(np.linalg.det(traj.monodromy[-1])),
                "energy_drift": float(np.max(np.abs(hamiltonian(cfg.potential, traj.states) - traj.energy))
                                      / max(1.0, abs(traj.energy))),
                "M": traj.monodromy[-1].tolist()}
        if info["stability_class"] != "mixed" and np.all(np.abs(traj.curvature2) > 1e-9):
            c = airy_coefficients(traj, cfg.potential, cfg.hbar)
            info["mu"] = c.mu
        if args.dump:
            path = Path(args.dump)
            if len(cfg.all_times) > 1:
                path = path.with_name(f"{path.stem}_{len(rows)}{path.suffix}")
            path.parent.mkdir(parents=True, exist_ok=True)
            traj.dump(path)
            info["dump"] = str(path)
        rows.append(info)
    _print_json(rows if len(rows) > 1 else rows[0])
    return EXIT_OK


def _cmd_method(method):
    def run(args):
        cfg = build_config(args, method=method)
        res = run_scenario(cfg)
        _print_json(_summary(res))
        return EXIT_OK
    return run


def cmd_run(args):
    cfg = build_config(args)
    res = run_scenario(cfg)
    _print_json(_summary(res))
    return EXIT_OK


def cmd_compare(args):
    a = read_grid(args.a)
    b = read_grid(args.b)
    mask = read_grid(args.mask) if args.mask else None
    m = compare_fields(a, b, mask)
    _print_json(m.as_dict())
    if args.min_corr is not None and not (m.pearson_corr >= args.min_corr):
        print(f"pearson_corr {m.pearson_corr:.4f} below {args.min_corr}", file=sys.stderr)
        return EXIT_ACCURACY
    if args.max_rel_l2 is not None and not (m.rel_l2 <= args.max_rel_l2):
        print(f"rel_l2 {m.rel_l2:.4g} above {args.max_rel_l2}", file=sys.stderr)
        return EXIT_ACCURACY
    return EXIT_OK


def make_parser():
    parser = argparse.ArgumentParser(prog="wignerprop", description="Wigner-function propagators: "
                                     "trajectory pairs, Airy uniform spot and exact spectral reference.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("presets", help="list built-in scenarios")
    sp.add_argument("--show", action="store_true", help="print the INI text as well")
    sp.set_defaults(func=cmd_presets)

    sp = sub.add_parser("trajectory", help="classical trajectory, M(t) and phi(t)")
    _scenario_options(sp)
    sp.add_argument("--dump", help="write 's p q M11 M12 M21 M22' rows to this file")
    sp.set_defaults(func=cmd_trajectory)

    for name, text in (("vanvleck", "trajectory-pair propagator"), ("pathint", "uniform Airy propagator"),
                       ("exact", "spectral reference propagator")):
        sp = sub.add_parser(name, help=text)
        _scenario_options(sp)
        sp.set_defaults(func=_cmd_method(name))

    sp = sub.add_parser("run", help="full scenario, all requested levels plus metrics")
    _scenario_options(sp)
    sp.add_argument("--method", choices=("vanvleck", "pathint", "exact", "all"))
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="metrics between two grid files")
    sp.add_argument("a", type=Path)
    sp.add_argument("b", type=Path)
    sp.add_argument("--mask", type=Path, help="0/1 grid file, 1 = excluded")
    sp.add_argument("--min-corr", type=float, help="exit 3 if the correlation is lower")
    sp.add_argument("--max-rel-l2", type=float, help="exit 3 if the relative L2 error is larger")
    sp.set_defaults(func=cmd_compare)
    return parser


def _exit_code(exc):
    cause = exc.cause if isinstance(exc, ModuleError) else exc
    if isinstance(cause, ValidationError):
        return EXIT_VALIDATION
    if isinstance(cause, AccuracyError):
        return EXIT_ACCURACY
    return EXIT_VALIDATION


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except WignerPropError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
