"""Deterministic test scenes: background models, perturbations and acquisition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Axis, Grid2D
from .dsr import AcquisitionGeometry


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class SceneSpec:
    """Scene description; lengths in m, velocities in m/s, times in s.

    ``lens`` is ``(x_center, z_center, radius, relative_amplitude)`` on top of
    the constant background ``c``.  ``points`` holds ``(x, z, amplitude)``;
    ``reflector`` is ``(z0, thickness, amplitude)``; ``dipping`` is
    ``(z0, slope, extent, amplitude)`` centred at x = 0.
    """

    model_kind: str = "constant"
    c: float = 2000.0
    a: float = 1500.0
    b: float = 0.5
    lens: tuple = (0.0, 500.0, 200.0, -0.1)
    points: tuple = ((0.0, 1000.0, 1.0),)
    reflector: tuple | None = None
    dipping: tuple | None = None
    nx: int = 97
    dx: float = 20.0
    x0: float = -960.0
    nz: int = 71
    dz: float = 20.0
    nt: int = 500
    dt: float = 0.004
    clearance: float = 100.0
    taper_cells: int = 2

    def __post_init__(self):
        if self.model_kind not in ("constant", "gradient", "lens"):
            raise SceneError(f"unknown model kind {self.model_kind!r}")
        if self.nx < 2 or self.nz < 2 or self.nt < 2:
            raise SceneError("grids need at least two samples per axis")
        if not (self.dx > 0 and self.dz > 0 and self.dt > 0):
            raise SceneError("sample spacings must be > 0")
        if not self.clearance > 0:
            raise SceneError("clearance must be > 0")


def _x_axis(spec):
    return Axis(spec.nx, spec.dx, spec.x0, "x")


def _z_axis(spec):
    return Axis(spec.nz, spec.dz, 0.0, "z")


def background(spec: SceneSpec) -> Grid2D:
    ax, az = _x_axis(spec), _z_axis(spec)
    X, Z = np.meshgrid(ax.values, az.values, indexing="ij")
    if spec.model_kind == "constant":
        c = np.full(X.shape, float(spec.c))
    elif spec.model_kind == "gradient":
        c = spec.a + spec.b * Z
    else:
        xc, zc, rad, amp = spec.lens
        if not rad > 0:
            raise SceneError("lens radius must be > 0")
        if not 1 + amp > 0:
            raise SceneError("lens would make the velocity non-positive")
        c = spec.c * (1 + amp * np.exp(-((X - xc) ** 2 + (Z - zc) ** 2) / rad**2))
    if np.any(c <= 0):
        raise SceneError("velocity must stay positive")
    return Grid2D((ax, az), c)


def _edge_profile(u, half_width, taper_cells):
    """1 for |u| <= half_width, cosine-squared down to 0 over ``taper_cells`` + 1 cells beyond (u in cells)."""
    d = np.abs(u) - half_width
    w = np.where(d <= 0, 1.0, 0.0)
    ramp = (d > 0) & (d < taper_cells + 1)
    return np.where(ramp, np.cos(0.5 * np.pi * d / (taper_cells + 1)) ** 2, w)


def perturbation(spec: SceneSpec) -> Grid2D:
    ax, az = _x_axis(spec), _z_axis(spec)
    X, Z = np.meshgrid(ax.values, az.values, indexing="ij")
    dc = np.zeros(X.shape)
    for x, z, amp in spec.points or ():
        u = (x - ax.origin) / ax.delta
        v = z / az.delta
        i, k = int(np.floor(u)), int(np.floor(v))
        fu, fv = u - i, v - k
        if not (0 <= i and i + (fu > 0) < ax.n and 0 <= k and k + (fv > 0) < az.n):
            raise SceneError(f"point ({x}, {z}) lies outside the grid")
        for di, wi in ((0, 1 - fu), (1, fu)):
            for dk, wk in ((0, 1 - fv), (1, fv)):
                if wi * wk > 0:
                    dc[i + di, k + dk] += amp * wi * wk
    if spec.reflector is not None:
        z0, thick, amp = spec.reflector
        prof = _edge_profile((Z - z0) / az.delta, 0.5 * thick / az.delta, spec.taper_cells)
        # lateral taper keeps the band off the side edges
        xc = 0.5 * (ax.origin + ax.end)
        half = 0.5 * (ax.n - 1) - spec.taper_cells - 1
        dc += amp * prof * _edge_profile((X - xc) / ax.delta, half, spec.taper_cells)
    if spec.dipping is not None:
        z0, slope, extent, amp = spec.dipping
        zl = z0 + slope * X
        vert = _edge_profile((Z - zl) / az.delta, 0.0, spec.taper_cells)
        lat = _edge_profile(X / ax.delta, 0.5 * extent / ax.delta, spec.taper_cells)
        dc += amp * vert * lat
    support = dc != 0
    if support.any():
        zs = Z[support]
        if zs.min() < spec.clearance:
            raise SceneError(f"perturbation reaches above the clearance depth {spec.clearance} m")
        if support[0].any() or support[-1].any() or support[:, -1].any():
            raise SceneError("perturbation must lie strictly inside the model")
    return Grid2D((ax, az), dc)


def geometry_for(spec: SceneSpec, z_max: float | None = None) -> AcquisitionGeometry:
    ax = _x_axis(spec)
    zm = (spec.nz - 1) * spec.dz if z_max is None else z_max
    return AcquisitionGeometry(
        Axis(ax.n, ax.delta, ax.origin, "s"),
        Axis(ax.n, ax.delta, ax.origin, "r"),
        Axis(spec.nt, spec.dt, 0.0, "t"),
        zm,
        spec.dz,
    )


def build_scene(spec: SceneSpec):
    """(model, dc, geometry) for a scene; identical specs give identical arrays."""
    return background(spec), perturbation(spec), geometry_for(spec)
