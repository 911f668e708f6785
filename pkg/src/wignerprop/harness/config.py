"""Scenario configuration: one INI file per scenario.

Sections are ``[scenario]``, ``[potential]``, ``[initial]``, ``[grid]``,
``[classical]``, the per-method blocks ``[vanvleck]``, ``[pathint]``,
``[exact]``, and ``[output]``.  ``auto`` is accepted wherever a value can
be derived.  Built-in presets live next to this module.
"""

import configparser
import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from io import StringIO
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from ..model import PhasePoint, PolynomialPotential

__all__ = [
    "ScenarioConfig",
    "VanVleckParams",
    "PathIntParams",
    "ExactParams",
    "GridParams",
    "OutputParams",
    "METHODS",
    "load_config",
    "parse_config",
    "load_preset",
    "list_presets",
    "preset_text",
]

METHODS = ("vanvleck", "pathint", "exact", "all")
_METHOD_BLOCKS = {"vanvleck": ("vanvleck",), "pathint": ("pathint",), "exact": ("exact",),
                  "all": ("vanvleck", "pathint", "exact")}


def _auto(value, cast=float):
    if value is None:
        return None
    value = str(value).strip()
    if value.lower() in ("auto", "", "none"):
        return None
    return cast(value)


def _floats(text):
    return tuple(float(x) for x in str(text).replace("[", "").replace("]", "").split(",") if x.strip())


def _finite(name, *values):
    for v in values:
        if v is not None and not np.isfinite(v):
            raise ValidationError(f"{name} must be finite, got {v}")


@dataclass(frozen=True)
class GridParams:
    """Output grid: centred on r_cl(t) (``center='classical'``) or explicit ranges."""

    center: str = "classical"
    half_p: float = 0.2
    half_q: float = 0.2
    p_range: tuple = None
    q_range: tuple = None
    np: int = 128
    nq: int = 128


@dataclass(frozen=True)
class VanVleckParams:
    n_radii: int = 250
    n_angles: int = 256
    rho_max: float = None
    smoothing_radius: float = None
    eps_caustic: float = 1e-8


@dataclass(frozen=True)
class PathIntParams:
    route: str = "monodromy"
    window: str = "sinc"
    resample: str = "auto"
    n_alpha: int = None
    n_beta: int = None


@dataclass(frozen=True)
class ExactParams:
    q_min: float = -1.6
    q_max: float = 2.3
    n_quanta: float = 50
    n_grid: int = None
    supersample: int = 1
    taper: float = 0.3


@dataclass(frozen=True)
class OutputParams:
    directory: str = "out"
    text: bool = True
    heatmap: bool = True
    trajectory: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    potential: PolynomialPotential
    r_prime: PhasePoint
    t: float
    hbar: float
    method: str = "all"
    times: tuple = None
    description: str = ""
    dt: float = 1e-3
    grid: GridParams = field(default_factory=GridParams)
    vanvleck: VanVleckParams = None
    pathint: PathIntParams = None
    exact: ExactParams = None
    output: OutputParams = field(default_factory=OutputParams)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}, got {self.method!r}")
        _finite("t", self.t)
        _finite("hbar", self.hbar)
        _finite("dt", self.dt)
        if not self.hbar > 0:
            raise ValidationError("hbar must be positive")
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        for t in self.all_times:
            if not (np.isfinite(t) and t >= 0):
                raise ValidationError(f"times must be finite and non-negative, got {t}")
        g = self.grid
        if g.np < 1 or g.nq < 1:
            raise ValidationError("grid counts must be positive")
        if g.center == "classical":
            _finite("grid half width", g.half_p, g.half_q)
            if not (g.half_p > 0 and g.half_q > 0):
                raise ValidationError("grid half widths must be positive")
        elif g.center == "explicit":
            if g.p_range is None or g.q_range is None:
                raise ValidationError("explicit grid needs p_min, p_max, q_min, q_max")
            _finite("grid range", *g.p_range, *g.q_range)
        else:
            raise ValidationError(f"grid center must be 'classical' or 'explicit', got {g.center!r}")
        for block in _METHOD_BLOCKS[self.method]:
            if getattr(self, block) is None:
                raise ValidationError(f"method {self.method!r} needs a [{block}] section")
        ex = self.exact
        if ex is not None:
            if not ex.q_max > ex.q_min:
                raise ValidationError("exact domain needs q_min < q_max")
            if not 0.0 <= ex.taper < 1.0:
                raise ValidationError(f"exact taper must lie in [0, 1), got {ex.taper}")
            if ex.supersample < 1:
                raise ValidationError("exact supersample must be a positive integer")

    @property
    def all_times(self):
        return tuple(self.times) if self.times else (self.t,)

    def with_overrides(self, **kw):
        """Copy with top-level or dotted (``'vanvleck.n_radii'``) fields replaced."""
        top = {}
        nested = {}
        for key, value in kw.items():
            if value is None:
                continue
            if "." in key:
                block, name = key.split(".", 1)
                nested.setdefault(block, {})[name] = value
            else:
                top[key] = value
        for block, values in nested.items():
            current = top.get(block, getattr(self, block))
            if current is None:
                current = _BLOCK_TYPES[block]()
            top[block] = dataclasses.replace(current, **values)
        return dataclasses.replace(self, **top)

    def to_ini(self):
        """Serialize back to INI text; ``parse_config(cfg.to_ini())`` round-trips."""
        cp = configparser.ConfigParser(interpolation=None)
        fmt = repr
        cp["scenario"] = {"name": self.name, "description": self.description, "method": self.method,
                          "t": fmt(float(self.t)), "hbar": fmt(float(self.hbar))}
        if self.times:
            cp["scenario"]["times"] = ", ".join(fmt(float(x)) for x in self.times)
        cp["potential"] = {"coefficients": ", ".join(fmt(c) for c in self.potential.coefficients),
                           "mass": fmt(self.potential.mass)}
        cp["initial"] = {"p": fmt(self.r_prime.p), "q": fmt(self.r_prime.q)}
        g = self.grid
        grid = {"center": g.center, "np": str(g.np), "nq": str(g.nq)}
        if g.center == "classical":
            grid.update(half_p=fmt(g.half_p), half_q=fmt(g.half_q))
        else:
            grid.update(p_min=fmt(g.p_range[0]), p_max=fmt(g.p_range[1]),
                        q_min=fmt(g.q_range[0]), q_max=fmt(g.q_range[1]))
        cp["grid"] = grid
        cp["classical"] = {"dt": fmt(self.dt)}
        for block in ("vanvleck", "pathint", "exact"):
            params = getattr(self, block)
            if params is not None:
                cp[block] = {k: ("auto" if v is None else (fmt(v) if isinstance(v, float) else str(v)))
                             for k, v in dataclasses.asdict(params).items()}
        o = self.output
        cp["output"] = {"directory": o.directory, "text": _yes(o.text), "heatmap": _yes(o.heatmap),
                        "trajectory": _yes(o.trajectory)}
        buf = StringIO()
        cp.write(buf)
        return buf.getvalue()


_BLOCK_TYPES = {"grid": GridParams, "vanvleck": VanVleckParams, "pathint": PathIntParams,
                "exact": ExactParams, "output": OutputParams}


def _yes(flag):
    return "yes" if flag else "no"


def _section(cp, name):
    return cp[name] if cp.has_section(name) else None


def parse_config(text, name=None):
    """Build a :class:`ScenarioConfig` from INI text."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"malformed config: {exc}") from exc
    try:
        return _from_parser(cp, name)
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad config value: {exc}") from exc


def _from_parser(cp, name):
    for required in ("scenario", "potential", "initial"):
        if not cp.has_section(required):
            raise ValidationError(f"config lacks a [{required}] section")
    sc = cp["scenario"]
    pot = PolynomialPotential(_floats(cp["potential"]["coefficients"]),
                              float(cp["potential"].get("mass", "1")))
    r_prime = PhasePoint(float(cp["initial"]["p"]), float(cp["initial"]["q"]))
    times = _floats(sc["times"]) if "times" in sc else None
    t = float(sc["t"]) if "t" in sc else (max(times) if times else None)
    if t is None:
        raise ValidationError("config needs t (or times)")

    g = _section(cp, "grid")
    grid = GridParams()
    if g is not None:
        center = g.get("center", "classical").strip()
        if center == "explicit" or ("p_min" in g and center != "classical"):
            grid = GridParams(center="explicit",
                              p_range=(float(g["p_min"]), float(g["p_max"])),
                              q_range=(float(g["q_min"]), float(g["q_max"])),
                              np=int(g.get("np", 128)), nq=int(g.get("nq", g.get("np", 128))))
        else:
            grid = GridParams(center=center, half_p=float(g.get("half_p", 0.2)),
                              half_q=float(g.get("half_q", g.get("half_p", 0.2))),
                              np=int(g.get("np", 128)), nq=int(g.get("nq", g.get("np", 128))))

    vv = _section(cp, "vanvleck")
    vanvleck = None if vv is None else VanVleckParams(
        n_radii=int(vv.get("n_radii", 250)), n_angles=int(vv.get("n_angles", 256)),
        rho_max=_auto(vv.get("rho_max")), smoothing_radius=_auto(vv.get("smoothing_radius")),
        eps_caustic=float(vv.get("eps_caustic", 1e-8)))
    pi = _section(cp, "pathint")
    pathint = None if pi is None else PathIntParams(
        route=pi.get("route", "monodromy"), window=pi.get("window", "sinc"),
        resample=pi.get("resample", "auto"),
        n_alpha=_auto(pi.get("n_alpha"), int), n_beta=_auto(pi.get("n_beta"), int))
    ex = _section(cp, "exact")
    exact = None if ex is None else ExactParams(
        q_min=float(ex.get("q_min", -1.6)), q_max=float(ex.get("q_max", 2.3)),
        n_quanta=float(ex.get("n_quanta", 50)), n_grid=_auto(ex.get("n_grid"), int),
        supersample=int(ex.get("supersample", 1)), taper=float(ex.get("taper", 0.3)))
    out = _section(cp, "output")
    output = OutputParams() if out is None else OutputParams(
        directory=out.get("directory", "out"), text=out.getboolean("text", True),
        heatmap=out.getboolean("heatmap", True), trajectory=out.getboolean("trajectory", False))
    dt = float(cp["classical"].get("dt", 1e-3)) if cp.has_section("classical") else 1e-3

    return ScenarioConfig(
        name=sc.get("name", name or "scenario"), potential=pot, r_prime=r_prime, t=t,
        hbar=float(sc["hbar"]), method=sc.get("method", "all").strip(), times=times,
        description=sc.get("description", ""), dt=dt, grid=grid,
        vanvleck=vanvleck, pathint=pathint, exact=exact, output=output)


def load_config(path):
    """Read a scenario file; the file stem is the default scenario name."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, name=path.stem)


def _preset_dir():
    return resources.files(__package__).joinpath("presets")


def list_presets():
    """Names of the built-in presets, sorted."""
    return sorted(p.name[:-4] for p in _preset_dir().iterdir() if p.name.endswith(".ini"))


def preset_text(name):
    f = _preset_dir().joinpath(f"{name}.ini")
    if not f.is_file():
        raise ValidationError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    return f.read_text()


def load_preset(name):
    return parse_config(preset_text(name), name=name)
