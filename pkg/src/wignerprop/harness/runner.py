"""Scenario execution: fields for each requested level, metrics, files, manifest."""

import dataclasses
import json
import logging
import platform
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__, _kernels
from ..classical import integrate, stability_angle
from ..errors import ValidationError, WignerPropError
from ..exact import default_energy_cutoff, minimal_grid, solve_eigenbasis, wigner_propagator_exact
from ..fields import GridSpec, centered_grid
from ..pathint import _local_window_for, auto_fourier_grid, cubic_coefficients, pathint_propagator
from ..vanvleck import vanvleck_propagator
from .config import ScenarioConfig
from .fileio import emit_field
from .metrics import compare_fields

logger = logging.getLogger(__name__)

__all__ = [
    "RunResult",
    "ModuleError",
    "output_grid",
    "classical_trajectory",
    "compute_vanvleck",
    "compute_pathint",
    "build_basis",
    "compute_exact",
    "unstable_variance",
    "run_scenario",
]


class ModuleError(WignerPropError):
    """Wraps a module failure with the module name; ``cause`` keeps the original."""

    def __init__(self, module, cause, detail=""):
        super().__init__(f"[{module}] {cause}" + (f" ({detail})" if detail else ""))
        self.module = module
        self.cause = cause


@dataclass
class RunResult:
    config: ScenarioConfig
    fields: dict = field(default_factory=dict)        # (method, t) -> PhaseSpaceField
    masks: dict = field(default_factory=dict)         # t -> caustic mask
    ensembles: dict = field(default_factory=dict)     # t -> classified PairEnsemble
    metrics: dict = field(default_factory=dict)       # (pair, t) -> ComparisonMetrics
    files: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    manifest_path: Path = None


@contextmanager
def _guard(module, detail=""):
    """Re-raise package errors with the module name attached."""
    try:
        yield
    except ModuleError:
        raise
    except WignerPropError as exc:
        raise ModuleError(module, exc, detail) from exc


def classical_trajectory(cfg, t):
    return integrate(cfg.potential, cfg.r_prime, t, min(cfg.dt, t / 16))


def output_grid(cfg, t):
    g = cfg.grid
    if g.center == "explicit":
        return GridSpec(g.p_range, g.q_range, g.np, g.nq)
    if t == 0:
        center = (cfg.r_prime.p, cfg.r_prime.q)
    else:
        center = tuple(classical_trajectory(cfg, t).states[-1])
    return centered_grid(center, g.half_p, g.half_q, g.np, g.nq)


def compute_vanvleck(cfg, t, grid):
    v = cfg.vanvleck
    with _guard("vanvleck", f"n_radii={v.n_radii}, n_angles={v.n_angles}, rho_max={v.rho_max}"):
        return vanvleck_propagator(cfg.potential, cfg.r_prime, t, cfg.hbar, grid,
                                   n_radii=v.n_radii, n_angles=v.n_angles, rho_max=v.rho_max,
                                   dt=cfg.dt, smoothing_radius=v.smoothing_radius,
                                   eps_caustic=v.eps_caustic)


def compute_pathint(cfg, t, grid):
    pp = cfg.pathint
    with _guard("pathint", f"route={pp.route}, window={pp.window}"):
        fgrid = None
        if pp.n_alpha or pp.n_beta:
            traj = classical_trajectory(cfg, t)
            coeffs = cubic_coefficients(traj, cfg.potential, cfg.hbar, pp.route)
            local = _local_window_for(grid, traj, coeffs)
            auto = auto_fourier_grid(coeffs, local.p_range[1], min(local.dp, local.dq), window=pp.window)
            fgrid = dataclasses.replace(auto, n_alpha=pp.n_alpha or auto.n_alpha,
                                        n_beta=pp.n_beta or auto.n_beta)
        return pathint_propagator(cfg.potential, cfg.r_prime, t, cfg.hbar, grid, dt=min(cfg.dt, t / 16),
                                  window=pp.window, fgrid=fgrid, method=pp.resample, route=pp.route)


def build_basis(cfg):
    ex = cfg.exact
    with _guard("exact", f"domain=({ex.q_min}, {ex.q_max}), n_quanta={ex.n_quanta}"):
        e_cut = default_energy_cutoff(cfg.potential, cfg.r_prime, cfg.hbar, ex.n_quanta)
        n_grid = ex.n_grid
        if n_grid is None:
            x = np.linspace(ex.q_min, ex.q_max, 4001)
            v_min = float(np.min(cfg.potential(x)))
            n_grid = minimal_grid((ex.q_min, ex.q_max), cfg.hbar, cfg.potential.mass, e_cut, v_min) + 1
        return solve_eigenbasis(cfg.potential, (ex.q_min, ex.q_max), n_grid, cfg.hbar, e_cut)


def compute_exact(cfg, t, grid, basis=None):
    basis = build_basis(cfg) if basis is None else basis
    with _guard("exact", f"t={t}"):
        return wigner_propagator_exact(basis, cfg.r_prime, t, grid, supersample=cfg.exact.supersample,
                                       taper=cfg.exact.taper)


def unstable_variance(field, traj):
    """|W|-weighted variance along the expanding eigenvector of M(t) about r_cl(t)."""
    M = traj.monodromy[-1]
    lam, vec = np.linalg.eig(M)
    if np.max(np.abs(lam.imag)) > 1e-12:
        raise ValidationError("M(t) has complex eigenvalues: no unstable direction")
    u = np.real(vec[:, int(np.argmax(np.abs(lam.real)))])
    u = u / np.linalg.norm(u)
    P, Q = field.grid.mesh()
    c = traj.states[-1]
    x = (P - c[0]) * u[0] + (Q - c[1]) * u[1]
    w = np.abs(field.values)
    return float(np.sum(w * x * x) / np.sum(w))


def _versions():
    import numpy
    import scipy
    v = {"wignerprop": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__,
         "python": platform.python_version(), "kernel_backend": _kernels.BACKEND}
    try:
        import numba
        v["numba"] = numba.__version__
    except ImportError:  # pragma: no cover
        v["numba"] = None
    return v


def _tag(t, many):
    return f"_t{t:.4g}".replace(".", "p") if many else ""


def run_scenario(cfg, out_dir=None, emit=True):
    """Compute every requested level at every time; write fields and a manifest.

    Returns a :class:`RunResult`.  With ``method='all'`` the three pairwise
    metrics are computed over the van Vleck caustic mask.
    """
    out = Path(cfg.output.directory if out_dir is None else out_dir)
    methods = ("vanvleck", "pathint", "exact") if cfg.method == "all" else (cfg.method,)
    res = RunResult(cfg)
    many = len(cfg.all_times) > 1
    basis = None
    for t in cfg.all_times:
        grid = output_grid(cfg, t)
        traj = classical_trajectory(cfg, t) if t > 0 else None
        diag = {"r_cl": list(traj.states[-1]) if traj is not None else [cfg.r_prime.p, cfg.r_prime.q]}
        if traj is not None:
            phi = stability_angle(traj, cfg.potential)
            diag["phi"] = [phi.real, phi.imag]
            if emit and cfg.output.trajectory:
                out.mkdir(parents=True, exist_ok=True)
                path = out / f"trajectory{_tag(t, many)}.txt"
                traj.dump(path)
                res.files.append(path)
        for m in methods:
            t0 = time.perf_counter()
            if m == "vanvleck":
                f, mask, ens = compute_vanvleck(cfg, t, grid)
                res.masks[t] = mask
                res.ensembles[t] = ens
                diag["vanvleck"] = {"extremum": ens.count("extremum"), "saddle": ens.count("saddle"),
                                    "caustic": ens.count("caustic"), "invalid": ens.count("invalid"),
                                    "rho_max": f.meta["rho_max"], "illuminated": mask.meta["illuminated"]}
            elif m == "pathint":
                f = compute_pathint(cfg, t, grid)
                c = f.meta["coeffs"]
                diag["pathint"] = {"a_jk": [c.a30, c.a21, c.a12, c.a03], "route": c.route,
                                   "stability_class": c.stability_class}
                if traj is not None and c.stability_class == "hyperbolic":
                    diag["pathint"]["unstable_variance"] = unstable_variance(f, traj)
            else:
                if basis is None:
                    basis = build_basis(cfg)
                f = compute_exact(cfg, t, grid, basis)
                diag["exact"] = {"n_kept": basis.n_kept, "n_grid": basis.n_grid,
                                 "raw_trace": f.meta["raw_trace"], "wall_leakage": f.meta["wall_leakage"]}
            res.timings[f"{m}{_tag(t, many)}"] = time.perf_counter() - t0
            res.fields[(m, t)] = f
            if emit:
                res.files += emit_field(f, out / f"{m}{_tag(t, many)}", heatmap=cfg.output.heatmap)
        if cfg.method == "all":
            mask = res.masks.get(t)
            if res.fields[("vanvleck", t)].meta.get("delta_limit"):
                # collapsed cone: the mask covers everything, yet the delta
                # surrogate has no singular band to exclude
                mask = None
                diag["metrics_mask"] = "none (delta limit)"
            if emit and res.masks.get(t) is not None:
                res.files += emit_field(res.masks[t], out / f"caustic_mask{_tag(t, many)}", heatmap=False)
            for a, b in (("exact", "vanvleck"), ("exact", "pathint"), ("vanvleck", "pathint")):
                met = compare_fields(res.fields[(a, t)], res.fields[(b, t)], mask)
                if met.flagged:
                    logger.warning("%s vs %s: masked fraction %.2f is too large", a, b, met.masked_fraction)
                res.metrics[(f"{a}-{b}", t)] = met
        res.diagnostics[t] = diag
    if emit:
        res.manifest_path = _write_manifest(res, out)
    return res


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, Path):
        return str(x)
    return x


def _write_manifest(res, out):
    out.mkdir(parents=True, exist_ok=True)
    cfg = res.config
    manifest = {
        "scenario": cfg.name,
        "config_ini": cfg.to_ini(),
        "versions": _versions(),
        "seeds": None,      # every stage is deterministic
        "timings_s": res.timings,
        "diagnostics": {f"t={t:.6g}": d for t, d in res.diagnostics.items()},
        "metrics": {f"{k[0]}@t={k[1]:.6g}": m.as_dict() for k, m in res.metrics.items()},
        "files": sorted(str(Path(f).relative_to(out)) if Path(f).is_relative_to(out) else str(f)
                        for f in res.files),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return path
