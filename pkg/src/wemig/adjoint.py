"""Dot-product tests for every forward/adjoint operator pair.

Each test draws random inputs x and y and returns
|<A x, y> - <x, A* y>| / max(|<A x, y>|, |<x, A* y>|).
"""

from __future__ import annotations

import numpy as np

from . import ssr
from .annihilator import SunkField, _axes, k_adjoint, k_forward
from .core import Axis, Grid2D
from .dsr import AcquisitionGeometry, DsrEngine, MuteConfig, SurveyField, born_model, dsr_step, inner_data, \
    inner_model, migrate_adjoint
from .ssr import FreqSlice, TaperConfig

TOLERANCE = 1e-8


def _rel(a, b) -> float:
    top = max(abs(a), abs(b))
    return float(abs(a - b) / top) if top > 0 else 0.0


def _crandn(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _omegas(e: DsrEngine, limit=6):
    w = e.omega
    return w[np.linspace(0, w.size - 1, min(limit, w.size)).astype(int)]


def dot_ssr_step(model: Grid2D, omega, taper=TaperConfig(), rng=None) -> float:
    rng = rng or np.random.default_rng(0)
    ax, az = model.axes
    z = az.values[-1]
    dz = az.delta
    x = FreqSlice(omega, z, _crandn(rng, (omega.size, ax.n)))
    y = FreqSlice(omega, z - dz, _crandn(rng, (omega.size, ax.n)))
    ax_ = ssr.ssr_step(x, dz, model, taper=taper, direction="forward")
    aty = ssr.ssr_step(FreqSlice(omega, z - dz, y.u), dz, model, taper=taper, direction="adjoint")
    return _rel(np.vdot(y.u, ax_.u), np.vdot(aty.u, x.u))


def dot_propagate_ssr(model: Grid2D, omega, taper=TaperConfig(), rng=None) -> float:
    rng = rng or np.random.default_rng(1)
    ax, az = model.axes
    z0 = az.values[-1]
    x = FreqSlice(omega, z0, _crandn(rng, (omega.size, ax.n)))
    y = FreqSlice(omega, 0.0, _crandn(rng, (omega.size, ax.n)))
    ax_ = ssr.propagate_ssr(x, z0, 0.0, model, taper, "forward")
    aty = ssr.propagate_ssr(y, z0, 0.0, model, taper, "adjoint")
    return _rel(np.vdot(y.u, ax_.u), np.vdot(aty.u, x.u))


def dot_dsr_step(model: Grid2D, omega, taper=TaperConfig(), rng=None) -> float:
    rng = rng or np.random.default_rng(2)
    ax, az = model.axes
    z = az.values[-1]
    dz = az.delta
    shape = (omega.size, ax.n, ax.n)
    x = SurveyField(omega, z, _crandn(rng, shape))
    y = _crandn(rng, shape)
    ax_ = dsr_step(x, dz, model, taper, "forward")
    aty = dsr_step(SurveyField(omega, z - dz, y), dz, model, taper, "adjoint")
    return _rel(np.vdot(y, ax_.u), np.vdot(aty.u, x.u))


def dot_continuation(e: DsrEngine, depth_index: int | None = None, rng=None) -> float:
    """H(0, z) (upward from one depth to the surface) against the downward continuation H*."""
    rng = rng or np.random.default_rng(3)
    k = e.nz - 1 if depth_index is None else depth_index
    shape = (e.omega.size, e.sl.n, e.sl.n)
    x = _crandn(rng, shape)
    y = _crandn(rng, shape)
    hx = e.upward(space_source=lambda j: x if j == k else None)
    out = {}

    def sink(j, V, F):
        if j == k:
            out["v"] = V.copy()

    e.downward(y, sink)
    return _rel(np.vdot(y, hx), np.vdot(out["v"], x))


def dot_k(e: DsrEngine, rng=None) -> float:
    """K (sunk field -> data) against K* (data -> sunk field)."""
    rng = rng or np.random.default_rng(4)
    g = e.geometry
    u = SunkField(_axes(g), rng.standard_normal((g.s.n, g.r.n, g.nz)))
    d = g.empty_data().with_values(rng.standard_normal((g.s.n, g.r.n, g.t.n)))
    kd = k_forward(u, e.model, g, e.mute, e.taper, engine=e)
    ksd = k_adjoint(d, e.model, g, e.mute, e.taper, engine=e)
    lhs = inner_data(kd, d)
    rhs = float(np.sum(u.values * ksd.values)) * g.s.delta * g.r.delta * g.dz
    return _rel(lhs, rhs)


def dot_born(e: DsrEngine, rng=None) -> float:
    """born_model against migrate_adjoint."""
    rng = rng or np.random.default_rng(5)
    g = e.geometry
    dc = rng.standard_normal(e.model.shape)
    dc[:, 0] = 0.0
    dc[:, g.nz:] = 0.0
    dcg = e.model.with_values(dc)
    d = g.empty_data().with_values(rng.standard_normal((g.s.n, g.r.n, g.t.n)))
    fd = born_model(e.model, dcg, g, e.mute, e.taper, engine=e)
    fsd = migrate_adjoint(d, e.model, g, e.mute, e.taper, engine=e)
    return _rel(inner_data(fd, d), inner_model(dcg, fsd))


def run_all(model: Grid2D, geometry: AcquisitionGeometry, mute: MuteConfig, taper=TaperConfig(), seed: int = 0):
    """Ordered list of (name, relative residual) for all pairs."""
    rng = np.random.default_rng(seed)
    e = DsrEngine(model, geometry, mute, taper)
    w = _omegas(e)
    sub = _crop(model, geometry.nz)
    return [
        ("ssr_step", dot_ssr_step(sub, w, taper, rng)),
        ("propagate_ssr", dot_propagate_ssr(sub, w, taper, rng)),
        ("dsr_step", dot_dsr_step(sub, w, taper, rng)),
        ("continuation", dot_continuation(e, rng=rng)),
        ("k_pair", dot_k(e, rng)),
        ("born_migrate", dot_born(e, rng)),
    ]


def _crop(model: Grid2D, nz: int) -> Grid2D:
    """Model rows down to the acquisition depth, so single-frequency steps see the same grid."""
    ax, az = model.axes
    if az.n == nz:
        return model
    return Grid2D((ax, Axis(nz, az.delta, az.origin, az.label)), model.values[:, :nz])
