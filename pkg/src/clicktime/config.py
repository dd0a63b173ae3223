"""
Run configuration (TOML).

Every entry is checked when the file is loaded; problems raise
:class:`ConfigError` carrying the dotted key, e.g. ``potential.kind``.
"""
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .delay import WavePacket
from .exceptions import ConfigError, DomainError
from .grid import make_grid
from .radial import KDR_LIMIT, KINDS, PotentialSpec
from .shell import ShellSpec

FORMATS = ("csv", "json")

SCHEMA = """\
configuration file (TOML); defaults in brackets

[grid]       e_min > 0, e_max > e_min, n_points >= 9, mass [1.0]
[potential]  kind = free | hard_sphere | square_barrier | exponential | tabulated
             ell [0]
             hard_sphere:    radius
             square_barrier: height, width
             exponential:    strength, range
             tabulated:      file (two columns r V, relative to the config file)
[radial]     r_max [40.0], dr [0.01], r_match [r_max - 5]
[detector]   R > 0, rho [0.0]
[packet]     k0 > 0, sigma_k > 0
[time]       t_min, t_max, n_t >= 3 (uniform grid)
[output]     directory ["out"], formats [["csv"]] (csv and/or json)
[povm]       seed [0], n_effects [3], rank [4]
"""

_PARAMS = {
    "free": (),
    "hard_sphere": ("radius",),
    "square_barrier": ("height", "width"),
    "exponential": ("strength", "range"),
    "tabulated": ("file",),
}


@dataclass(frozen=True)
class RunConfig:
    grid: object
    potential: object
    r_max: float
    dr: float
    r_match: float
    shell: object
    packet: object
    t_grid: tuple
    out_dir: Path
    formats: tuple
    seed: int = 0
    n_effects: int = 3
    rank: int = 4
    source: dict = field(default_factory=dict, repr=False)

    @property
    def times(self):
        t_min, t_max, n_t = self.t_grid
        return np.linspace(t_min, t_max, n_t)


def _section(raw, name, required=True):
    sec = raw.get(name)
    if sec is None:
        if required:
            raise ConfigError(name, "section is missing")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(name, "must be a table")
    return sec


def _number(sec, section, key, default=None, cond=None, what=""):
    full = f"{section}.{key}"
    if key not in sec:
        if default is None:
            raise ConfigError(full, "is required")
        return default
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(full, f"must be a finite number, got {v!r}")
    if cond is not None and not cond(v):
        raise ConfigError(full, f"must be {what}, got {v!r}")
    return float(v)


def _integer(sec, section, key, default=None, cond=None, what=""):
    full = f"{section}.{key}"
    if key not in sec:
        if default is None:
            raise ConfigError(full, "is required")
        return default
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(full, f"must be an integer, got {v!r}")
    if cond is not None and not cond(v):
        raise ConfigError(full, f"must be {what}, got {v!r}")
    return v


def _unknown(sec, section, allowed):
    for key in sec:
        if key not in allowed:
            raise ConfigError(f"{section}.{key}", "unknown key")


def _potential(sec, mass, base):
    kind = sec.get("kind")
    if kind not in KINDS:
        raise ConfigError("potential.kind", f"must be one of {', '.join(KINDS)}; got {kind!r}")
    _unknown(sec, "potential", ("kind", "ell") + _PARAMS[kind])
    ell = _integer(sec, "potential", "ell", 0, lambda v: v >= 0, "a nonnegative integer")
    pos = dict(cond=lambda v: v > 0, what="positive")
    try:
        if kind == "free":
            return PotentialSpec.free(ell, mass)
        if kind == "hard_sphere":
            return PotentialSpec.hard_sphere(_number(sec, "potential", "radius", **pos), ell, mass)
        if kind == "square_barrier":
            return PotentialSpec.square_barrier(
                _number(sec, "potential", "height"), _number(sec, "potential", "width", **pos), ell, mass)
        if kind == "exponential":
            return PotentialSpec.exponential(
                _number(sec, "potential", "strength"), _number(sec, "potential", "range", **pos), ell, mass)
        fname = sec.get("file")
        if not isinstance(fname, str):
            raise ConfigError("potential.file", "must be a path string")
        path = Path(fname) if Path(fname).is_absolute() else base / fname
        if not path.is_file():
            raise ConfigError("potential.file", f"file not found: {path}")
        try:
            return PotentialSpec.from_file(path, ell, mass)
        except ValueError as exc:
            raise ConfigError("potential.file", str(exc)) from exc
    except DomainError as exc:
        raise ConfigError("potential", str(exc)) from exc


def parse_config(raw, base=Path(".")):
    """Validate a decoded TOML mapping; returns :class:`RunConfig`."""
    _unknown(raw, "<root>", ("grid", "potential", "radial", "detector", "packet", "time", "output", "povm"))

    g = _section(raw, "grid")
    _unknown(g, "grid", ("e_min", "e_max", "n_points", "mass"))
    e_min = _number(g, "grid", "e_min", cond=lambda v: v > 0, what="positive")
    e_max = _number(g, "grid", "e_max", cond=lambda v: v > e_min, what=f"greater than e_min={e_min}")
    n_points = _integer(g, "grid", "n_points", cond=lambda v: v >= 9, what="at least 9")
    mass = _number(g, "grid", "mass", 1.0, lambda v: v > 0, "positive")
    grid = make_grid(e_min, e_max, n_points, mass)

    potential = _potential(_section(raw, "potential"), mass, base)

    rad = _section(raw, "radial", required=False)
    _unknown(rad, "radial", ("r_max", "dr", "r_match"))
    r_max = _number(rad, "radial", "r_max", 40.0, lambda v: v > 0, "positive")
    k_max = float(grid.momenta[-1])
    dr = _number(rad, "radial", "dr", 0.01, lambda v: 0 < v and k_max * v < KDR_LIMIT,
                 f"positive with k_max*dr < {KDR_LIMIT} (k_max = {k_max:.4g})")
    r_match = _number(rad, "radial", "r_match", r_max - 5.0,
                      lambda v: potential.range_radius() <= v < r_max - 1.0,
                      f"outside the potential range ({potential.range_radius():.4g}) and below r_max - 1")

    det = _section(raw, "detector")
    _unknown(det, "detector", ("R", "rho"))
    R = _number(det, "detector", "R", cond=lambda v: v > 0, what="positive")
    rho = _number(det, "detector", "rho", 0.0, lambda v: v >= 0, "nonnegative")
    if R - rho / 2 < potential.range_radius():
        raise ConfigError("detector.R", f"shell must lie outside the potential range "
                          f"({potential.range_radius():.4g})")
    if R + rho / 2 > r_max - 1.0:
        raise ConfigError("detector.R", f"shell must lie inside the radial grid (r_max={r_max})")
    try:
        shell = ShellSpec(R, rho, mass)
    except DomainError as exc:
        raise ConfigError("detector", str(exc)) from exc

    pk = _section(raw, "packet")
    _unknown(pk, "packet", ("k0", "sigma_k"))
    k0 = _number(pk, "packet", "k0", cond=lambda v: v > 0, what="positive")
    sigma_k = _number(pk, "packet", "sigma_k", cond=lambda v: v > 0, what="positive")
    packet = WavePacket(k0, sigma_k)
    lo, hi = packet.support
    k = grid.momenta
    if lo <= k[1] or hi >= k[-2]:
        raise ConfigError("packet.k0", f"packet support k in [{lo:.4g}, {hi:.4g}] must fit inside "
                          f"the grid momenta [{k[0]:.4g}, {k[-1]:.4g}]")

    tm = _section(raw, "time")
    _unknown(tm, "time", ("t_min", "t_max", "n_t"))
    tstar = grid.nyquist_time
    t_min = _number(tm, "time", "t_min", cond=lambda v: v >= -tstar, what=f">= -T* = {-tstar:.6g}")
    t_max = _number(tm, "time", "t_max", cond=lambda v: t_min < v <= tstar,
                    what=f"in (t_min, T* = {tstar:.6g}]")
    n_t = _integer(tm, "time", "n_t", cond=lambda v: v >= 3, what="at least 3")

    out = _section(raw, "output", required=False)
    _unknown(out, "output", ("directory", "formats"))
    directory = out.get("directory", "out")
    if not isinstance(directory, str) or not directory:
        raise ConfigError("output.directory", "must be a nonempty string")
    formats = out.get("formats", ["csv"])
    if isinstance(formats, str):
        formats = [formats]
    if not isinstance(formats, list) or not formats or any(f not in FORMATS for f in formats):
        raise ConfigError("output.formats", f"must be a list drawn from {FORMATS}, got {formats!r}")

    pv = _section(raw, "povm", required=False)
    _unknown(pv, "povm", ("seed", "n_effects", "rank"))
    seed = _integer(pv, "povm", "seed", 0, lambda v: v >= 0, "nonnegative")
    n_effects = _integer(pv, "povm", "n_effects", 3, lambda v: v >= 1, "at least 1")
    rank = _integer(pv, "povm", "rank", 4, lambda v: v >= 1, "at least 1")

    out_dir = Path(directory) if Path(directory).is_absolute() else base / directory
    return RunConfig(grid, potential, r_max, dr, r_match, shell, packet, (t_min, t_max, n_t),
                     out_dir, tuple(dict.fromkeys(formats)), seed, n_effects, rank, raw)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"not valid TOML: {exc}") from exc
    return parse_config(raw, path.parent)
