"""``wemig`` command line: scene building, modeling, migration, gathers, annihilation, rays and checks.

    wemig <subcommand> [--config FILE] [--out DIR] [flags]

Exit codes: 0 ok, 2 configuration error (including the p guard),
3 numerical-contract failure, 4 I/O error.  Every run writes a
``manifest_<subcommand>.json`` into the output directory.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__, adjoint, ssr
from .angle import AngleGuardError, MetricError, awe_gather, awe_tilde_transform, flatness_metric
from .annihilator import annihilation_report, semblance_scan
from .config import ConfigError, RunConfig, parse_config, parse_text, scan_values
from .core import (BandError, ContainerFormatError, ContainerLengthError, DataCube, DataError, Grid2D,
                   export_csv_lines, read_container, read_raw_container, write_container)
from .dsr import BornContractError, GeometryError, MuteConfigError, born_model, migrate_adjoint
from .rays import (EmptyPathError, GammaDomainError, GammaInversionError, RayContractError, RayState,
                   TurningPointError, predict_events, trace_ray_depth, trace_ray_time)
from .recon import ReconConfigError, normalize_by_phi, reconstruct
from .ssr import PropagatorConfigError
from .synthetics import SceneError, background, build_scene

EXIT_OK, EXIT_CONFIG, EXIT_CONTRACT, EXIT_IO = 0, 2, 3, 4

CONFIG_ERRORS = (ConfigError, MuteConfigError, GeometryError, SceneError, PropagatorConfigError, ReconConfigError,
                 AngleGuardError, BandError)
CONTRACT_ERRORS = (BornContractError, RayContractError, EmptyPathError, TurningPointError, GammaDomainError,
                   GammaInversionError, MetricError)
IO_ERRORS = (OSError, ContainerFormatError, ContainerLengthError, DataError)


class ContractFailure(RuntimeError):
    """A numerical check ran to completion and failed."""


class SliceError(ValueError):
    pass


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def export_csv(container_path, out_path, slice_spec=None) -> int:
    """Write a container (or a slice of it) as ``coord...,value`` lines; returns the row count.

    ``slice_spec`` maps axis labels to sample indices, e.g. ``{"x": 48}``.
    """
    axes, values = read_raw_container(container_path)
    labels = [a.label for a in axes]
    for label, idx in (slice_spec or {}).items():
        if label not in labels:
            raise SliceError(f"no axis {label!r} in {container_path} (axes {labels})")
        i = labels.index(label)
        if not 0 <= idx < axes[i].n:
            raise SliceError(f"index {idx} out of range for axis {label!r} with {axes[i].n} samples")
        values = np.take(values, idx, axis=i)
        axes = axes[:i] + axes[i + 1:]
        labels.pop(i)
    head = labels + (["re", "im"] if np.iscomplexobj(values) else ["value"])
    n = 0
    with open(out_path, "w", newline="\n") as fh:
        fh.write(",".join(head) + "\n")
        if not axes:
            fh.write(f"{np.asarray(values).item():.17g}\n")
            return 1
        for line in export_csv_lines(axes, values):
            fh.write(line + "\n")
            n += 1
    return n


def _parse_slices(items):
    out = {}
    for item in items or ():
        label, _, idx = item.partition("=")
        if not label or not idx:
            raise SliceError(f"slice must be AXIS=INDEX, got {item!r}")
        try:
            out[label.strip()] = int(idx)
        except ValueError as exc:
            raise SliceError(f"slice index must be an integer, got {idx!r}") from exc
    return out


class Run:
    """Collects inputs, outputs and a summary, then writes the manifest."""

    def __init__(self, name, config: RunConfig, out: Path, threads: int, argv):
        self.name, self.config, self.out, self.threads, self.argv = name, config, out, threads, argv
        self.inputs, self.outputs, self.summary = [], [], {}
        self.t0 = time.perf_counter()

    def path(self, name) -> Path:
        p = self.out / name
        if any(Path(i).resolve() == p.resolve() for i in self.inputs):
            raise OSError(f"refusing to overwrite input {p}")
        return p

    def read(self, path):
        value = read_container(path)
        self.inputs.append(str(path))
        return value

    def write(self, name, value):
        p = self.path(name)
        write_container(value, p)
        self.outputs.append(str(p))
        return p

    def write_text(self, name, text):
        p = self.path(name)
        p.write_text(text)
        self.outputs.append(str(p))
        return p

    def finish(self, status):
        flat = {k: v for k, v in self.summary.items() if isinstance(v, (int, float, str))}
        if flat:
            self.write_text(f"{self.name}_summary.csv",
                            "key,value\n" + "".join(f"{k},{_fmt(v)}\n" for k, v in flat.items()))
        manifest = {
            "subcommand": self.name,
            "argv": list(self.argv),
            "exit_code": status,
            "config": self.config.to_dict(),
            "config_ini": self.config.to_ini(),
            "versions": {"wemig": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "threads": self.threads,
            "wall_time_s": time.perf_counter() - self.t0,
            "inputs": {p: sha256(p) for p in self.inputs if Path(p).is_file()},
            "outputs": {p: sha256(p) for p in self.outputs if Path(p).is_file()},
            "summary": self.summary,
        }
        (self.out / f"manifest_{self.name}.json").write_text(json.dumps(manifest, indent=2, default=_json))


def _fmt(v):
    return f"{v:.17g}" if isinstance(v, float) else str(v)


def _json(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v))


# ---------------------------------------------------------------------------
# subcommands


def _model_and_dc(run: Run, args):
    spec = run.config.scene()
    if args.model:
        model = run.read(args.model)
    else:
        model = background(spec)
    if getattr(args, "dc", None):
        dc = run.read(args.dc)
    else:
        dc = build_scene(spec)[1]
    return model, dc


def _background(run: Run, args) -> Grid2D:
    if args.model:
        m = run.read(args.model)
        if not isinstance(m, Grid2D):
            raise ContainerFormatError(f"{args.model} is not a 2-D grid")
        return m
    return background(run.config.scene())


def _data(run: Run, args) -> DataCube:
    path = Path(args.data) if args.data else run.out / "data.wgrid"
    d = run.read(path)
    if not isinstance(d, DataCube):
        raise ContainerFormatError(f"{path} does not hold an (s, r, t) data cube")
    return d


def cmd_model(run: Run, args):
    model, dc, geometry = build_scene(run.config.scene())
    run.write("model.wgrid", model)
    run.write("dc.wgrid", dc)
    run.summary.update(c_min=float(model.values.min()), c_max=float(model.values.max()),
                       dc_max_abs=float(np.abs(dc.values).max()), nz_image=geometry.nz)
    return EXIT_OK


def cmd_born(run: Run, args):
    cfg = run.config
    model, dc = _model_and_dc(run, args)
    data = born_model(model, dc, cfg.geometry(), cfg.mute(), cfg.taper())
    run.write("data.wgrid", data)
    run.summary.update(data_max_abs=float(np.abs(data.values).max()))
    return EXIT_OK


def _peak_report(run: Run, image: Grid2D):
    ax, az = image.axes
    i, k = np.unravel_index(int(np.argmax(np.abs(image.values))), image.shape)
    run.summary.update(peak_x=float(ax.values[i]), peak_z=float(az.values[k]))
    pts = run.config["scene"]["points"]
    if pts:
        x, z, _ = pts[0]
        run.summary.update(peak_offset_x_cells=float((ax.values[i] - x) / ax.delta),
                           peak_offset_z_cells=float((az.values[k] - z) / az.delta))


def cmd_migrate(run: Run, args):
    cfg = run.config
    if args.phi_normalize and not args.true_amplitude:
        raise ConfigError("--phi-normalize needs --true-amplitude")
    model = _background(run, args)
    data = _data(run, args)
    geometry, mute, taper = cfg.geometry(), cfg.mute(), cfg.taper()
    if args.true_amplitude:
        image = reconstruct(data, model, geometry, mute, taper, cfg.weights())
        if args.phi_normalize:
            r = cfg["recon"]
            image = normalize_by_phi(image, model, geometry, mute, r["phi_mode"], r["phi_floor"],
                                     n_theta=r["n_theta"], mute_power=r["mute_power"])
    else:
        image = migrate_adjoint(data, model, geometry, mute, taper)
    run.write("image.wgrid", image)
    _peak_report(run, image)
    return EXIT_OK


def cmd_angle(run: Run, args):
    over = {k: v for k, v in (("pmin", args.pmin), ("pmax", args.pmax), ("np", args.np),
                              ("radius", args.radius)) if v is not None}
    if over:
        run.config = run.config.replace("angle", **over)
    cfg = run.config
    model = _background(run, args)
    data = _data(run, args)
    geometry, mute, taper, config = cfg.geometry(), cfg.mute(), cfg.taper(), cfg.angle()
    if args.tilde:
        gather = awe_tilde_transform(data, model, geometry, mute, taper, config, cfg.weights())
    else:
        gather = awe_gather(data, model, geometry, mute, config, taper)
    run.write("gather.wgrid", gather)
    metric, p, zp = flatness_metric(gather)
    dz = gather.axes[1].delta
    run.write_text("zpeak.csv", "p,z_peak\n" + "".join(f"{a:.17g},{b * dz:.17g}\n" for a, b in zip(p, zp)))
    run.summary.update(flatness_cells=metric)
    return EXIT_OK


def _parse_scan(text):
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"--scan must be lo:hi:step, got {text!r}") from exc
    return scan_values(lo, hi, step)


def cmd_annihilate(run: Run, args):
    cfg = run.config
    model = _background(run, args)
    data = _data(run, args)
    geometry, mute, taper, weights = cfg.geometry(), cfg.mute(), cfg.taper(), cfg.weights()
    scales = _parse_scan(args.scan) if args.scan else None
    if scales is not None:
        mute.check_against(model.with_values(model.values * scales.max()))
    if args.residual or scales is None:
        rep = annihilation_report(data, model, geometry, mute, taper, weights)
        run.summary.update(residual_ratio=rep.ratio)
        if args.residual:
            run.write("residual.wgrid", rep.residual)
    if scales is not None:
        res = semblance_scan(data, geometry, mute, taper, model, scales, weights)
        run.write_text("scan.csv", "scale,J\n" + "".join(f"{s:.17g},{j:.17g}\n" for s, j in zip(res.scales, res.j)))
        run.summary.update(argmin=res.argmin)
        print(f"argmin {res.argmin:g}")
    return EXIT_OK


def cmd_rays(run: Run, args):
    cfg = run.config
    model = _background(run, args)
    geometry = cfg.geometry()
    pts = cfg["scene"]["points"]
    if not pts:
        raise ConfigError("[scene] points: the rays subcommand needs at least one point scatterer")
    rows = ["point,ray,x,z,t,xi,zeta,drift"]
    event_rows = []
    worst = gap = 0.0
    for ip, (x, z, _) in enumerate(pts):
        for ir, angle in enumerate(np.linspace(-0.6, 0.6, args.n_rays)):
            start = RayState.from_direction(model, x, z, np.pi + angle)
            path = trace_ray_time(model, start, args.dt, t_max=10.0, z_stop=0.0)
            drift = path.drift(model)
            worst = max(worst, float(np.max(drift)))
            if path.status == "z_stop":
                other = trace_ray_depth(model, x, z, start.xi, start.tau, args.dz, 0.0)
                if other.status == "ok":
                    gap = max(gap, abs(float(other.x[-1] - path.x[-1])))
            for j in range(len(path)):
                rows.append(f"{ip},{ir},{path.x[j]:.17g},{path.z[j]:.17g},{path.t[j]:.17g},"
                            f"{path.xi[j]:.17g},{path.zeta[j]:.17g},{drift[j]:.17g}")
        table = predict_events(model, (x, z), geometry.s.values, dz=args.dz)
        for row in zip(table.x, table.z, table.s, table.r, table.t_total, table.sigma, table.rho):
            event_rows.append(f"{ip}," + ",".join(f"{val:.17g}" for val in row))
    run.write_text("rays.csv", "\n".join(rows) + "\n")
    run.write_text("events.csv", "point,x,z,s,r,t_total,sigma,rho\n" + "".join(r + "\n" for r in event_rows))
    run.summary.update(max_relative_drift=worst, max_tracer_gap_m=gap, n_events=len(event_rows))
    return EXIT_OK


def cmd_dottest(run: Run, args):
    cfg = run.config
    model = _background(run, args)
    results = adjoint.run_all(model, cfg.geometry(), cfg.mute(), cfg.taper(), cfg["run"]["seed"])
    bad = []
    for name, r in results:
        ok = r < adjoint.TOLERANCE
        print(f"{name} {r:.3e} {'ok' if ok else 'FAIL'}")
        run.summary[f"dot_{name}"] = r
        if not ok:
            bad.append(name)
    run.write_text("dottest.csv", "pair,relative_residual\n" + "".join(f"{n},{r:.17g}\n" for n, r in results))
    if bad:
        raise ContractFailure(f"dot test above {adjoint.TOLERANCE:g}: {', '.join(bad)}")
    return EXIT_OK


def cmd_export(run: Run, args):
    src = Path(args.input)
    out = Path(args.output)
    if out.resolve() == src.resolve():
        raise OSError("refusing to overwrite the input container")
    n = export_csv(src, out, _parse_slices(args.slice))
    run.inputs.append(str(src))
    run.outputs.append(str(out))
    run.summary.update(rows=n)
    return EXIT_OK


COMMANDS = {
    "model": cmd_model,
    "born": cmd_born,
    "migrate": cmd_migrate,
    "angle": cmd_angle,
    "annihilate": cmd_annihilate,
    "rays": cmd_rays,
    "dottest": cmd_dottest,
    "export": cmd_export,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wemig", description="Wave-equation migration experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, data=False, dc=False):
        p.add_argument("--config", help="INI configuration file (defaults for every missing key)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--model", help="background model container (default: built from [scene])")
        if dc:
            p.add_argument("--dc", help="perturbation container (default: built from [scene])")
        if data:
            p.add_argument("--data", help="data container (default: OUT/data.wgrid)")
        return p

    common(sub.add_parser("model", help="write the background and perturbation containers"))
    common(sub.add_parser("born", help="linearized modeling"), dc=True)
    p = common(sub.add_parser("migrate", help="adjoint or true-amplitude migration"), data=True)
    p.add_argument("--true-amplitude", action="store_true", help="weighted reconstruction chain")
    p.add_argument("--phi-normalize", action="store_true", help="divide by the illumination symbol")
    p = common(sub.add_parser("angle", help="common-image-point gathers in p"), data=True)
    p.add_argument("--pmin", type=float)
    p.add_argument("--pmax", type=float)
    p.add_argument("--np", type=int)
    p.add_argument("--radius", type=float)
    p.add_argument("--tilde", action="store_true", help="amplitude-corrected gather")
    p = common(sub.add_parser("annihilate", help="annihilator residual and velocity scan"), data=True)
    p.add_argument("--scan", help="lo:hi:step velocity scales")
    p.add_argument("--residual", action="store_true", help="write the residual W d")
    p = common(sub.add_parser("rays", help="ray paths and event tables for the point scatterers"))
    p.add_argument("--n-rays", type=int, default=9)
    p.add_argument("--dz", type=float, default=2.0, help="depth step of the depth tracer (m)")
    p.add_argument("--dt", type=float, default=1e-3, help="time step of the time tracer (s)")
    common(sub.add_parser("dottest", help="dot tests of all operator pairs"))
    p = sub.add_parser("export", help="container to CSV")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--slice", action="append", help="AXIS=INDEX, repeatable")
    p.add_argument("--config")
    p.add_argument("--out", default=".")
    return ap


def _threads(cfg: RunConfig) -> int:
    env = os.environ.get("WEMIG_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"WEMIG_THREADS must be an integer, got {env!r}") from exc
        if n < 1:
            raise ConfigError("WEMIG_THREADS must be >= 1")
        return n
    return cfg["run"]["threads"]


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    run = None
    try:
        cfg = parse_config(args.config) if args.config else parse_text("")
        threads = _threads(cfg)
        ssr.set_workers(threads)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        run = Run(args.command, cfg, out, threads, argv)
        status = COMMANDS[args.command](run, args)
    except CONFIG_ERRORS + (SliceError,) as exc:
        status = _fail(EXIT_CONFIG, "configuration error", exc)
    except CONTRACT_ERRORS + (ContractFailure,) as exc:
        status = _fail(EXIT_CONTRACT, "numerical contract failure", exc)
    except IO_ERRORS as exc:
        status = _fail(EXIT_IO, "I/O error", exc)
    if run is not None:
        try:
            run.finish(status)
        except IO_ERRORS as exc:
            status = _fail(EXIT_IO, "I/O error", exc)
    return status


def _fail(code, kind, exc):
    print(f"wemig: {kind}: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
