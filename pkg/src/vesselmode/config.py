"""Experiment configuration files.

INI-style text with sections [geometry], [fluid], [wall], [waveform], [scan]
and [output].  The first non-blank line must declare the unit system, e.g.

    # units: nondimensional

Every schema error is reported with the section, key and line number.
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, VesselModeError
from .flowsynth import PressureWaveform, default_pulse, read_waveform_csv
from .modal_stokes import FluidParams
from .spectral_analysis import StripScanConfig
from .wall_model import WallMaterial

_SCHEMA = {
    "geometry": {"shape", "radius", "a", "b", "a0", "cos", "sin", "n_nodes", "h"},
    "fluid": {"nu", "rho_b"},
    "wall": {"type", "table", "q11", "q12", "q13", "q22", "q23", "q33", "rho", "k", "h",
             "p1", "coupling"},
    "waveform": {"period", "coefficients", "csv", "k_max", "preset"},
    "scan": {"beta_max", "xi_max", "n_beta", "n_xi", "threshold", "h", "omega",
             "refine_tol", "min_xi"},
    "output": {"dir", "n_time", "seed"},
}
_REQUIRED = {"geometry": {"shape"}, "fluid": {"nu"}}
_UNITS = re.compile(r"^\s*#\s*units\s*:\s*(\S.*?)\s*$", re.IGNORECASE)


@dataclass
class ExperimentConfig:
    geometry: dict
    fluid: FluidParams
    wall: str  # "rigid" or "elastic"
    material: WallMaterial | None
    waveform: PressureWaveform
    mesh_h: float
    scan: StripScanConfig
    scan_h: float
    scan_omega: float | None
    p1: float = 0.0
    wall_coupling: str = "direct"
    n_nodes: int = 256
    n_time: int = 256
    out_dir: str = "out"
    seed: int = 0x5EED
    units: str = "nondimensional"
    source: str | None = None
    digest: str | None = None
    extras: dict = field(default_factory=dict)


def _key_lines(text):
    """Map (section, key) -> line number, and section -> header line."""
    out, sec = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"^\[([^\]]+)\]$", line)
        if m:
            sec = m.group(1).strip().lower()
            out[(sec, None)] = no
            continue
        m = re.match(r"^([^=:]+?)\s*[=:]", line)
        if m and sec is not None:
            out[(sec, m.group(1).strip().lower())] = no
    return out


class _Reader:
    def __init__(self, cp, lines):
        self.cp = cp
        self.lines = lines

    def err(self, msg, section, key=None):
        return ConfigError(msg, section, key, self.lines.get((section, key),
                                                             self.lines.get((section, None))))

    def has(self, sec, key):
        return self.cp.has_option(sec, key)

    def str(self, sec, key, default=None):
        if not self.has(sec, key):
            if default is None:
                raise self.err("missing required key", sec, key)
            return default
        return self.cp.get(sec, key).strip()

    def num(self, sec, key, default=None, cast=float, positive=False):
        if not self.has(sec, key):
            if default is None:
                raise self.err("missing required key", sec, key)
            return default
        raw = self.cp.get(sec, key).strip()
        try:
            v = int(raw, 0) if cast is int else cast(raw)
        except ValueError:
            raise self.err(f"expected a number, got {raw!r}", sec, key) from None
        if positive and not v > 0:
            raise self.err(f"must be positive, got {raw}", sec, key)
        return v

    def floats(self, sec, key):
        raw = self.cp.get(sec, key)
        try:
            return [float(x) for x in raw.replace(",", " ").split()]
        except ValueError:
            raise self.err(f"expected a list of numbers, got {raw!r}", sec, key) from None

    def complexes(self, sec, key):
        raw = self.cp.get(sec, key)
        try:
            return [complex(x.replace(" ", "")) for x in raw.split(",") if x.strip()]
        except ValueError:
            raise self.err(f"expected comma-separated complex numbers, got {raw!r}",
                           sec, key) from None


def parse_config(text: str, base_dir=".", source=None) -> ExperimentConfig:
    """Parse configuration text; relative file paths resolve against base_dir."""
    first = next((ln for ln in text.splitlines() if ln.strip()), "")
    m = _UNITS.match(first)
    if not m:
        raise ConfigError("first line must declare the unit system as '# units: <name>'",
                          line=1)
    units = m.group(1)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";",), interpolation=None)
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.ParsingError as exc:
        no = exc.errors[0][0] if getattr(exc, "errors", None) else None
        raise ConfigError(f"malformed line: {exc.errors[0][1].strip()}"
                          if no else str(exc), line=no) from None
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], line=getattr(exc, "lineno", None)) from None
    lines = _key_lines(text)
    R = _Reader(cp, lines)
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section (expected one of {sorted(_SCHEMA)})", sec,
                              line=lines.get((sec, None)))
        for key in cp.options(sec):
            if key not in _SCHEMA[sec]:
                raise R.err("unknown key", sec, key)
    for sec, keys in _REQUIRED.items():
        if not cp.has_section(sec):
            raise ConfigError("missing required section", sec)
        for key in keys:
            if not cp.has_option(sec, key):
                raise R.err("missing required key", sec, key)
    for sec in _SCHEMA:
        if not cp.has_section(sec):
            cp.add_section(sec)
    base = Path(base_dir)

    # geometry
    shape = R.str("geometry", "shape").lower()
    if shape == "circle":
        geom = {"shape": "circle", "radius": R.num("geometry", "radius", 1.0, positive=True)}
    elif shape == "ellipse":
        geom = {"shape": "ellipse", "a": R.num("geometry", "a", positive=True),
                "b": R.num("geometry", "b", positive=True)}
    elif shape == "star":
        geom = {"shape": "star", "a0": R.num("geometry", "a0", positive=True),
                "cos": R.floats("geometry", "cos") if R.has("geometry", "cos") else [],
                "sin": R.floats("geometry", "sin") if R.has("geometry", "sin") else []}
    else:
        raise R.err(f"unknown shape {shape!r} (circle, ellipse, star)", "geometry", "shape")
    n_nodes = R.num("geometry", "n_nodes", 256, int, positive=True)
    mesh_h = R.num("geometry", "h", 0.05, positive=True)

    # fluid
    try:
        fluid = FluidParams(R.num("fluid", "nu"), R.num("fluid", "rho_b", 1.0))
    except ConfigError:
        raise
    except VesselModeError as exc:
        raise R.err(str(exc), "fluid", "nu") from None

    # wall
    wall = R.str("wall", "type", "elastic").lower()
    if wall not in ("rigid", "elastic"):
        raise R.err("type must be 'rigid' or 'elastic'", "wall", "type")
    coupling = R.str("wall", "coupling", "direct").lower()
    if coupling not in ("direct", "sigma_scaled"):
        raise R.err("coupling must be 'direct' or 'sigma_scaled'", "wall", "coupling")
    material = None
    try:
        if R.has("wall", "table"):
            from .geometry import build_boundary

            L = build_boundary(geom, n_nodes).length
            material = WallMaterial.read_csv(base / R.str("wall", "table"), L, fluid.rho_b)
        else:
            Q = np.eye(3)
            for i, j in [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]:
                key = f"q{i + 1}{j + 1}"
                if R.has("wall", key):
                    Q[i, j] = Q[j, i] = R.num("wall", key)
            material = WallMaterial.constant(Q, R.num("wall", "rho", 1.0), R.num("wall", "k", 1.0),
                                             R.num("wall", "h", 1.0), fluid.rho_b)
    except OSError as exc:
        raise R.err(f"cannot read material table: {exc}", "wall", "table") from None
    except ConfigError:
        raise
    except VesselModeError as exc:
        raise R.err(str(exc), "wall", "table" if R.has("wall", "table") else "q11") from None
    p1 = R.num("wall", "p1", 0.0)

    # waveform
    period = R.num("waveform", "period", 1.0, positive=True)
    try:
        if R.has("waveform", "csv"):
            k_max = R.num("waveform", "k_max", 5, int)
            waveform = read_waveform_csv(base / R.str("waveform", "csv"), k_max,
                                         period if R.has("waveform", "period") else None)
        elif R.has("waveform", "coefficients"):
            waveform = PressureWaveform(period, np.array(R.complexes("waveform", "coefficients")),
                                        "coefficients from config")
        else:
            preset = R.str("waveform", "preset", "pulse5")
            if preset != "pulse5":
                raise R.err(f"unknown preset {preset!r}", "waveform", "preset")
            waveform = default_pulse(period)
    except OSError as exc:
        raise R.err(f"cannot read waveform: {exc}", "waveform", "csv") from None
    except ConfigError:
        raise
    except VesselModeError as exc:
        key = "csv" if R.has("waveform", "csv") else "coefficients"
        raise R.err(str(exc), "waveform", key) from None

    # scan
    try:
        scan = StripScanConfig(
            beta_max=R.num("scan", "beta_max", 1.0),
            xi_max=R.num("scan", "xi_max", 32.0),
            n_beta=R.num("scan", "n_beta", 1, int),
            n_xi=R.num("scan", "n_xi", 129, int),
            refine_tol=R.num("scan", "refine_tol", 1e-10),
            threshold=R.num("scan", "threshold", 1e-6),
        )
    except ConfigError:
        raise
    except VesselModeError as exc:
        raise R.err(str(exc), "scan", None) from None
    scan_h = R.num("scan", "h", 0.25, positive=True)
    scan_omega = R.num("scan", "omega") if R.has("scan", "omega") else None

    seed_raw = R.str("output", "seed", "0x5EED")
    try:
        seed = int(seed_raw, 0)
    except ValueError:
        raise R.err(f"seed must be an integer (hex allowed), got {seed_raw!r}", "output",
                    "seed") from None
    return ExperimentConfig(
        geometry=geom, fluid=fluid, wall=wall, material=material, waveform=waveform,
        mesh_h=mesh_h, scan=scan, scan_h=scan_h, scan_omega=scan_omega, p1=p1,
        wall_coupling=coupling, n_nodes=n_nodes,
        n_time=R.num("output", "n_time", 256, int, positive=True),
        out_dir=R.str("output", "dir", "out"), seed=seed, units=units, source=source,
        digest=hashlib.sha256(text.encode()).hexdigest(),
        extras={"min_xi": R.num("scan", "min_xi")} if R.has("scan", "min_xi") else {},
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    return parse_config(text, base_dir=path.parent, source=str(path))


def bundled_config_path(name: str = "disk-rigid-vs-elastic") -> Path:
    return Path(__file__).with_name("configs") / f"{name}.ini"
