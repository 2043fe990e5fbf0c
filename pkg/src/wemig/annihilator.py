"""Data-domain annihilators and differential semblance.

``ktilde_star`` sinks the weighted data to every depth and keeps the whole
(s, r) plane at t = 0.  Multiplying by the offset r - s kills what focuses on
the diagonal, and ``k_forward`` (the exact adjoint of d -> R2 H* psi d) maps
the remainder back to data.  W = K M K~* is small on data consistent with the
background model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .angle import AngleGather
from .core import Axis, DataCube, Grid2D
from .dsr import AcquisitionGeometry, DsrEngine, MuteConfig
from .recon import ReconWeights, weighted_plane, weighted_surface
from .ssr import TaperConfig


@dataclass(frozen=True)
class SunkField:
    """Real field on (s, r, z): the t = 0 slice of the sunk survey."""

    axes: tuple
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != tuple(a.n for a in self.axes):
            raise ValueError("field shape does not match its axes")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite sunk field")
        object.__setattr__(self, "values", v)

    def with_values(self, values) -> "SunkField":
        return SunkField(self.axes, values)

    def diagonal(self) -> np.ndarray:
        """(x, z) trace on s = r."""
        return np.diagonal(self.values, axis1=0, axis2=1).T


@dataclass(frozen=True)
class ScanResult:
    scales: np.ndarray
    j: np.ndarray

    @property
    def argmin(self) -> float:
        return float(self.scales[int(np.argmin(self.j))])


def _axes(geometry: AcquisitionGeometry):
    return (geometry.s, geometry.r, Axis(geometry.nz, geometry.dz, 0.0, "z"))


def _midpoint_cube(c):
    """c((s + r)/2, z) by linear interpolation on the x grid; c is (n, nz)."""
    n = c.shape[0]
    i = np.arange(n)
    lo = (i[:, None] + i[None, :]) // 2
    hi = lo + (i[:, None] + i[None, :]) % 2
    return 0.5 * (c[lo] + c[hi])


def ktilde_star(data: DataCube, model: Grid2D, geometry: AcquisitionGeometry, mute: MuteConfig,
                taper: TaperConfig = TaperConfig(), weights: ReconWeights = ReconWeights(),
                engine: DsrEngine | None = None) -> SunkField:
    """Weighted sinking with t = 0 restriction on the full (s, r) plane, scaled by 2 c0(midpoint)^3."""
    e = engine or DsrEngine(model, geometry, mute, taper)
    D = weighted_surface(e, data, weights)
    out = np.zeros((geometry.s.n, geometry.r.n, geometry.nz))
    cm = _midpoint_cube(e.c)

    def sink(k, V, F):
        G = weighted_plane(e, F, k, weights)
        out[:, :, k] = 2.0 * cm[:, :, k] ** 3 * e.t0_sum(G)

    e.downward(D, sink)
    return SunkField(_axes(geometry), out)


def k_adjoint(data: DataCube, model: Grid2D, geometry: AcquisitionGeometry, mute: MuteConfig,
              taper: TaperConfig = TaperConfig(), engine: DsrEngine | None = None) -> SunkField:
    """K* d = R2 H(0, z)* psi d on every depth."""
    e = engine or DsrEngine(model, geometry, mute, taper)
    D = e.psi_spectrum(e.to_freq(data))
    out = np.zeros((geometry.s.n, geometry.r.n, geometry.nz))

    def sink(k, V, F):
        out[:, :, k] = e.t0_sum(V)

    e.downward(D, sink)
    return SunkField(_axes(geometry), out)


def k_forward(field: SunkField, model: Grid2D, geometry: AcquisitionGeometry, mute: MuteConfig,
              taper: TaperConfig = TaperConfig(), engine: DsrEngine | None = None) -> DataCube:
    """K u: inject u(., ., z) dz at every frequency, continue upward, apply psi; adjoint of :func:`k_adjoint`."""
    e = engine or DsrEngine(model, geometry, mute, taper)
    u = field.values
    nw = e.omega.size

    def source(k):
        if not np.any(u[:, :, k]):
            return None
        return np.broadcast_to(e.dz * u[:, :, k], (nw,) + u.shape[:2])

    W = e.upward(space_source=source)
    return e.to_time(e.psi_spectrum(W))


def apply_offset_mult(field: SunkField, normalize: bool = False) -> SunkField:
    """Multiply by r - s (meters), or by (r - s)/max|r - s| when ``normalize``."""
    s, r = field.axes[0].values, field.axes[1].values
    h = r[None, :] - s[:, None]
    if normalize:
        top = float(np.abs(h).max())
        h = h / top if top > 0 else h
    return field.with_values(field.values * h[:, :, None])


def _norm(d: DataCube) -> float:
    return float(np.sqrt(np.sum(d.values**2) * d.s.delta * d.r.delta * d.t.delta))


@dataclass(frozen=True)
class AnnihilationReport:
    residual: DataCube
    reference: DataCube

    @property
    def ratio(self) -> float:
        ref = _norm(self.reference)
        return _norm(self.residual) / ref if ref > 0 else 0.0


def annihilation_report(data: DataCube, model: Grid2D, geometry: AcquisitionGeometry, mute: MuteConfig,
                        taper: TaperConfig = TaperConfig(), weights: ReconWeights = ReconWeights(),
                        engine: DsrEngine | None = None) -> AnnihilationReport:
    """W d = K M K~* d together with K K~* d, sharing one sinking pass."""
    e = engine or DsrEngine(model, geometry, mute, taper)
    kt = ktilde_star(data, model, geometry, mute, taper, weights, engine=e)
    wd = k_forward(apply_offset_mult(kt, normalize=True), model, geometry, mute, taper, engine=e)
    ref = k_forward(kt, model, geometry, mute, taper, engine=e)
    return AnnihilationReport(wd, ref)


def annihilate(data: DataCube, model: Grid2D, geometry: AcquisitionGeometry, mute: MuteConfig,
               taper: TaperConfig = TaperConfig(), weights: ReconWeights = ReconWeights(),
               engine: DsrEngine | None = None) -> DataCube:
    """W d with the offset multiplier normalized to at most 1."""
    e = engine or DsrEngine(model, geometry, mute, taper)
    kt = ktilde_star(data, model, geometry, mute, taper, weights, engine=e)
    return k_forward(apply_offset_mult(kt, normalize=True), model, geometry, mute, taper, engine=e)


def semblance_scan(data: DataCube, geometry: AcquisitionGeometry, mute: MuteConfig,
                   taper: TaperConfig = TaperConfig(), model: Grid2D = None, scales=(1.0,),
                   weights: ReconWeights = ReconWeights()) -> ScanResult:
    """J(scale) = ||W[scale c0] d||^2 / ||d||^2 over the scaled background models."""
    if model is None:
        raise ValueError("a background model is required")
    scales = np.asarray(scales, dtype=float)
    if np.any(scales <= 0):
        raise ValueError("scales must be positive")
    dn = _norm(data)
    if dn == 0:
        raise ValueError("data are identically zero")
    j = np.empty(scales.size)
    for i, sc in enumerate(scales):
        m = model.with_values(model.values * sc)
        wd = annihilate(data, m, geometry, mute, taper, weights)
        j[i] = (_norm(wd) / dn) ** 2
    return ScanResult(scales, j)


def dp_annihilate(gather: AngleGather) -> AngleGather:
    """Centered difference along p (one-sided at the ends)."""
    ap = gather.axes[2]
    if ap.n < 3:
        raise ValueError("need at least 3 p samples")
    return AngleGather(gather.axes, np.gradient(gather.values, ap.delta, axis=2))


def dp_ratio(gather: AngleGather, x_window=None, p_limit: float | None = None) -> float:
    """Interior ||d/dp gather|| / ||gather|| over optional x and |p| windows."""
    d = dp_annihilate(gather).values[:, :, 1:-1]
    g = gather.values[:, :, 1:-1]
    if p_limit is not None:
        keep = np.abs(gather.p[1:-1]) <= p_limit + 1e-15
        d, g = d[:, :, keep], g[:, :, keep]
    if x_window is not None:
        xs = gather.axes[0].values
        sel = (xs >= x_window[0] - 1e-9) & (xs <= x_window[1] + 1e-9)
        d, g = d[sel], g[sel]
    gn = float(np.linalg.norm(g))
    if gn == 0:
        raise ValueError("gather is zero in the window")
    return float(np.linalg.norm(d)) / gn
