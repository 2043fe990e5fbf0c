"""INI run configuration: schema, defaults, parsing and cross-section checks.

Every key has a default, so an empty file is a valid configuration.  Unknown
sections or keys, duplicate sections or keys, and values that fail their
type or range check raise :class:`ConfigError` naming the section and key.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .angle import AngleConfig, guard_pmax, p_axis
from .dsr import MuteConfig
from .recon import ReconWeights
from .ssr import TaperConfig
from .synthetics import SceneSpec, background, geometry_for, perturbation

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    pass


def _float(text):
    return float(text)


def _int(text):
    return int(text)


def _str(text):
    return text.strip()


def _floats(n):
    def parse(text):
        if text.strip().lower() == "none":
            return None
        vals = tuple(float(v) for v in text.replace(",", " ").split())
        if len(vals) != n:
            raise ValueError(f"expected {n} numbers")
        return vals

    return parse


def _points(text):
    if text.strip().lower() == "none":
        return ()
    out = []
    for item in text.split(";"):
        if item.strip():
            vals = tuple(float(v) for v in item.replace(",", " ").split())
            if len(vals) != 3:
                raise ValueError("each point is 'x z amplitude'")
            out.append(vals)
    return tuple(out)


def _optional_float(text):
    return None if text.strip().lower() == "none" else float(text)


def _float_list(text):
    if text.strip().lower() == "none":
        return None
    return tuple(float(v) for v in text.replace(",", " ").split())


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(" ".join(repr(float(v)) for v in p) for p in value) or "none"
        return " ".join(repr(float(v)) for v in value)
    return str(value)


# section -> key -> (parser, default)
SCHEMA = {
    "scene": {
        "model_kind": (_str, "constant"),
        "c": (_float, 2000.0),
        "a": (_float, 1500.0),
        "b": (_float, 0.5),
        "lens_x": (_float, 0.0),
        "lens_z": (_float, 500.0),
        "lens_radius": (_float, 200.0),
        "lens_amplitude": (_float, -0.1),
        "points": (_points, ((0.0, 1000.0, 1.0),)),
        "reflector": (_floats(3), None),
        "dipping": (_floats(4), None),
        "nx": (_int, 97),
        "dx": (_float, 20.0),
        "x0": (_float, -960.0),
        "nz": (_int, 71),
        "dz": (_float, 20.0),
        "clearance": (_float, 100.0),
        "taper_cells": (_int, 2),
    },
    "acquisition": {
        "nt": (_int, 500),
        "dt": (_float, 0.004),
        "z_max": (_optional_float, None),
    },
    "propagator": {
        "q_lo": (_float, 0.90),
        "q_hi": (_float, 1.10),
        "phi_max": (_float, 0.1),
        "evanescent_policy": (_str, "damp"),
        "pad_cells": (_int, 16),
    },
    "mute": {
        "f_min": (_float, 3.0),
        "f_max": (_float, 24.0),
        "f_taper": (_float, 9.0),
        "slowness_cut": (_float, 4.0e-4),
        "dip_taper": (_float, 0.5),
        "time_mute": (_floats(4), None),
        "time_taper": (_float, 0.02),
    },
    "angle": {
        "pmin": (_float, -2.2e-4),
        "pmax": (_float, 2.2e-4),
        "np": (_int, 23),
        "radius": (_float, 400.0),
        "flat_fraction": (_float, 0.5),
        "x_positions": (_float_list, None),
    },
    "recon": {
        "xi_mode": (_str, "on"),
        "q_inverse_mode": (_str, "on"),
        "dt_inverse_power": (_int, -2),
        "omega_floor": (_optional_float, None),
        "phi_mode": (_str, "vertical_only"),
        "phi_floor": (_float, 1e-3),
        "n_theta": (_int, 64),
        "mute_power": (_int, 2),
    },
    "annihilator": {
        "scan_lo": (_float, 0.90),
        "scan_hi": (_float, 1.10),
        "scan_step": (_float, 0.01),
    },
    "run": {
        "threads": (_int, 1),
        "seed": (_int, 0),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Resolved values, ``values[section][key]``, every key present."""

    values: dict

    def __getitem__(self, section):
        return self.values[section]

    # -- typed views -------------------------------------------------------

    def scene(self) -> SceneSpec:
        s = self["scene"]
        a = self["acquisition"]
        return SceneSpec(
            model_kind=s["model_kind"], c=s["c"], a=s["a"], b=s["b"],
            lens=(s["lens_x"], s["lens_z"], s["lens_radius"], s["lens_amplitude"]),
            points=s["points"], reflector=s["reflector"], dipping=s["dipping"],
            nx=s["nx"], dx=s["dx"], x0=s["x0"], nz=s["nz"], dz=s["dz"],
            nt=a["nt"], dt=a["dt"], clearance=s["clearance"], taper_cells=s["taper_cells"],
        )

    def geometry(self):
        return geometry_for(self.scene(), self["acquisition"]["z_max"])

    def taper(self) -> TaperConfig:
        return TaperConfig(**self["propagator"])

    def mute(self) -> MuteConfig:
        m = self["mute"]
        return MuteConfig(TWO_PI * m["f_min"], TWO_PI * m["f_max"], TWO_PI * m["f_taper"], m["slowness_cut"],
                          m["dip_taper"], m["time_mute"], m["time_taper"])

    def angle(self) -> AngleConfig:
        g = self["angle"]
        return AngleConfig(p_axis(g["pmin"], g["pmax"], g["np"]), g["radius"], g["flat_fraction"], g["x_positions"])

    def weights(self) -> ReconWeights:
        r = self["recon"]
        return ReconWeights(r["xi_mode"], r["q_inverse_mode"], r["dt_inverse_power"], r["omega_floor"])

    def scan_scales(self):
        a = self["annihilator"]
        return scan_values(a["scan_lo"], a["scan_hi"], a["scan_step"])

    def replace(self, section, **kw) -> "RunConfig":
        vals = {k: dict(v) for k, v in self.values.items()}
        vals[section].update(kw)
        return validate(vals)

    def to_ini(self) -> str:
        lines = []
        for sec, keys in self.values.items():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {_fmt(v)}" for k, v in keys.items())
            lines.append("")
        return "\n".join(lines)

    def to_dict(self):
        return {sec: {k: _fmt(v) for k, v in keys.items()} for sec, keys in self.values.items()}


def scan_values(lo: float, hi: float, step: float) -> np.ndarray:
    if not (step > 0 and 0 < lo <= hi):
        raise ConfigError("[annihilator] scan: need 0 < lo <= hi and step > 0")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), 12)


def defaults() -> dict:
    return {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}


def parse_text(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(strict=True, interpolation=None, comment_prefixes=("#",),
                                   inline_comment_prefixes=("#",), empty_lines_in_values=False)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc.message if hasattr(exc, 'message') else exc}") from exc
    vals = defaults()
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"[{sec}]: unknown section")
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"[{sec}] {key}: unknown key")
            parser = SCHEMA[sec][key][0]
            try:
                vals[sec][key] = parser(raw)
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key}: cannot parse {raw!r} ({exc})") from exc
    return validate(vals)


def parse_config(path) -> RunConfig:
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    return parse_text(text, str(p))


def _wrap(section, key, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc


def validate(vals: dict) -> RunConfig:
    """Build every typed view once and run the cross-section checks."""
    cfg = RunConfig(vals)
    spec = _wrap("scene", "model_kind", cfg.scene)
    acq = vals["acquisition"]
    z_max = acq["z_max"]
    if z_max is not None:
        if not z_max > 0:
            raise ConfigError("[acquisition] z_max: must be > 0")
        n = z_max / spec.dz
        if abs(n - round(n)) > 1e-9:
            raise ConfigError(f"[acquisition] z_max: dz = {spec.dz} must divide z_max = {z_max}")
        if round(n) > spec.nz - 1:
            raise ConfigError(f"[acquisition] z_max: deeper than the model ({(spec.nz - 1) * spec.dz} m)")
    _wrap("acquisition", "z_max", cfg.geometry)
    _wrap("propagator", "q_lo", cfg.taper)
    m = vals["mute"]
    nyquist = 0.5 / acq["dt"]
    if not m["f_max"] <= nyquist:
        raise ConfigError(f"[mute] f_max: {m['f_max']} Hz lies above the Nyquist frequency {nyquist:g} Hz")
    mute = _wrap("mute", "f_min", cfg.mute)
    model = _wrap("scene", "model_kind", lambda: background(spec))
    _wrap("scene", "points", lambda: perturbation(spec))
    _wrap("mute", "slowness_cut", lambda: mute.check_against(model))
    g = vals["angle"]
    if g["np"] < 1:
        raise ConfigError("[angle] np: must be >= 1")
    angle = _wrap("angle", "radius", cfg.angle)
    rep = guard_pmax(model, angle.p, angle.chi_radius)
    if not rep.passed:
        raise ConfigError(f"[angle] pmax: max|p| = {rep.max_p:.6g} s/m must be below "
                          f"1/(2 max c0) = {rep.bound:.6g} s/m (aperture guard)")
    if g["x_positions"] is not None:
        ax = model.axes[0]
        for x in g["x_positions"]:
            if not ax.origin - 1e-9 <= x <= ax.end + 1e-9:
                raise ConfigError(f"[angle] x_positions: {x} lies outside [{ax.origin}, {ax.end}]")
    r = vals["recon"]
    _wrap("recon", "xi_mode", cfg.weights)
    if r["phi_mode"] not in ("vertical_only", "local_dip"):
        raise ConfigError("[recon] phi_mode: must be 'vertical_only' or 'local_dip'")
    if not r["phi_floor"] > 0:
        raise ConfigError("[recon] phi_floor: must be > 0")
    if r["n_theta"] < 2:
        raise ConfigError("[recon] n_theta: must be >= 2")
    if r["mute_power"] not in (1, 2):
        raise ConfigError("[recon] mute_power: must be 1 or 2")
    cfg.scan_scales()
    if vals["run"]["threads"] < 1:
        raise ConfigError("[run] threads: must be >= 1")
    return cfg
