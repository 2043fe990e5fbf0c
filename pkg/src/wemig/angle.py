"""Common-image-point gathers in the ray parameter p.

    A(x, z, p) = sum_h chi(h) U(x - h/2, x + h/2, t = p h; z)

with the time value taken spectrally, (dw/pi) sum_w Re[U_w e^{i w p h}].
Offsets are the multiples of the source spacing; odd multiples land on
half-grid points and are read by bilinear interpolation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import hilbert

from .core import Axis, DataCube, Grid2D, build_taper
from .dsr import AcquisitionGeometry, DsrEngine, MuteConfig, downward_continue
from .recon import ReconWeights, weighted_plane, weighted_surface
from .ssr import TaperConfig


class AngleGuardError(ValueError):
    """The p axis violates the aperture bound max|p| < 1/(2 max c0)."""


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class AngleConfig:
    p: Axis
    chi_radius: float
    chi_flat_fraction: float = 0.5
    x_positions: tuple | None = None

    def __post_init__(self):
        if not self.chi_radius >= 0:
            raise ValueError("chi_radius must be >= 0")
        if not 0 <= self.chi_flat_fraction <= 1:
            raise ValueError("chi_flat_fraction must lie in [0, 1]")

    @property
    def p_values(self):
        return self.p.values


@dataclass(frozen=True)
class GuardReport:
    passed: bool
    bound: float
    max_p: float
    c1: float
    r_proxy: float


@dataclass(frozen=True)
class AngleGather:
    """Gather values on (x, z, p)."""

    axes: tuple
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != tuple(a.n for a in self.axes):
            raise ValueError("gather shape does not match its axes")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite gather")
        object.__setattr__(self, "values", v)

    @property
    def p(self):
        return self.axes[2].values


def p_axis(p_min: float, p_max: float, n: int) -> Axis:
    if n < 1:
        raise ValueError("need at least one p sample")
    if n == 1:
        return Axis(1, 1.0, p_min, "p")
    return Axis(n, (p_max - p_min) / (n - 1), p_min, "p")


def guard_pmax(model: Grid2D, p, chi_radius: float = 0.0, warn_level: float = 0.1) -> GuardReport:
    """Check max|p| < 1/(2 C0) with C0 = max c0; report the R-bound proxy R C1 C0^2."""
    pv = p.values if isinstance(p, Axis) else np.asarray(p, dtype=float)
    c = model.values
    c0 = float(c.max())
    bound = 0.5 / c0
    max_p = float(np.max(np.abs(pv)))
    ax = model.axes[0]
    if ax.n > 1:
        c1 = float(np.max(np.abs(np.gradient(c**-2.0, ax.delta, axis=0))))
    else:
        c1 = 0.0
    proxy = chi_radius * c1 * c0**2
    if proxy > warn_level:
        warnings.warn(f"offset radius may be too large for the lateral velocity variation (R C1 C0^2 = {proxy:.3g})")
    return GuardReport(max_p < bound, bound, max_p, c1, proxy)


def _enforce_guard(model, config):
    rep = guard_pmax(model, config.p, config.chi_radius)
    if not rep.passed:
        raise AngleGuardError(f"max|p| = {rep.max_p:.6g} s/m must be below 1/(2 max c0) = {rep.bound:.6g} s/m")
    return rep


class _Accumulator:
    def __init__(self, x_axis: Axis, z_axis: Axis, config: AngleConfig, omega, dw):
        self.x_axis, self.z_axis, self.config = x_axis, z_axis, config
        n = x_axis.n
        ds = x_axis.delta
        if config.x_positions is None:
            self.ix = np.arange(n)
        else:
            self.ix = np.array([x_axis.index(x) for x in config.x_positions])
        mmax = int(np.floor(config.chi_radius / ds + 1e-9))
        self.m = np.arange(-mmax, mmax + 1)
        self.h = self.m * ds
        self.chi = build_taper(self.m.size, config.chi_flat_fraction)
        self.omega = np.asarray(omega, dtype=float)
        self.dw = dw
        p = config.p_values
        self.phase = np.exp(1j * self.omega[:, None, None] * self.h[None, :, None] * p[None, None, :])
        self.values = np.zeros((self.ix.size, z_axis.n, p.size))
        # index pairs and validity for bilinear reads at (x - h/2, x + h/2)
        i = self.ix[:, None]
        m = self.m[None, :]
        even = (m % 2) == 0
        s_lo = i - (m + (~even)) // 2
        r_lo = i + (m - (~even)) // 2
        self.even = np.broadcast_to(even, (self.ix.size, self.m.size))
        self.s_lo = np.broadcast_to(s_lo, self.even.shape)
        self.r_lo = np.broadcast_to(r_lo, self.even.shape)
        hi = np.where(self.even, 0, 1)
        self.valid = (self.s_lo >= 0) & (self.r_lo >= 0) & (self.s_lo + hi < n) & (self.r_lo + hi < n)

    def _read(self, U):
        n = U.shape[-1]
        sl = np.clip(self.s_lo, 0, n - 1)
        rl = np.clip(self.r_lo, 0, n - 1)
        sh = np.clip(self.s_lo + 1, 0, n - 1)
        rh = np.clip(self.r_lo + 1, 0, n - 1)
        a = U[:, sl, rl]
        odd = 0.25 * (a + U[:, sh, rl] + U[:, sl, rh] + U[:, sh, rh])
        A = np.where(self.even[None], a, odd)
        return A * (self.valid * self.chi[None, :])[None]

    def add(self, k: int, U, scale=None):
        A = self._read(U)
        if scale is not None:
            A = A * scale[None, :, None]
        if self.m.size == 1 and self.m[0] == 0:
            # only t = 0, h = 0 survives: p-independent by construction
            col = (self.dw / np.pi) * A[:, :, 0].real.sum(axis=0)
            self.values[:, k, :] = col[:, None]
            return
        G = np.einsum("wim,wmp->ip", A, self.phase, optimize=True)
        self.values[:, k, :] = (self.dw / np.pi) * G.real

    def gather(self):
        xa = self.x_axis
        if self.config.x_positions is None:
            gx = Axis(xa.n, xa.delta, xa.origin, "x")
        else:
            xs = xa.values[self.ix]
            d = float(np.diff(xs).min()) if xs.size > 1 else xa.delta
            if xs.size > 1 and not np.allclose(np.diff(xs), d):
                raise ValueError("x_positions must be evenly spaced")
            gx = Axis(xs.size, d if d > 0 else xa.delta, float(xs[0]), "x")
        return AngleGather((gx, self.z_axis, self.config.p), self.values)


def awe_transform(fields, config: AngleConfig, geometry: AcquisitionGeometry, model: Grid2D | None = None,
                  dw: float | None = None) -> AngleGather:
    """Gather from an iterable of per-depth :class:`SurveyField` (shallow to deep).

    When ``model`` is given the p guard is enforced against it.
    """
    if model is not None:
        _enforce_guard(model, config)
    x_axis = Axis(geometry.s.n, geometry.s.delta, geometry.s.origin, "x")
    z_axis = Axis(geometry.nz, geometry.dz, 0.0, "z")
    acc = None
    for f in fields:
        if acc is None:
            step = dw if dw is not None else (float(np.diff(f.omega)[0]) if f.omega.size > 1 else None)
            if step is None:
                raise ValueError("dw is required for single-frequency fields")
            acc = _Accumulator(x_axis, z_axis, config, f.omega, step)
        k = int(round(f.z / geometry.dz))
        acc.add(k, f.u)
    if acc is None:
        raise ValueError("no fields given")
    return acc.gather()


def awe_gather(data: DataCube, model: Grid2D, geometry: AcquisitionGeometry, mute: MuteConfig,
               config: AngleConfig, taper: TaperConfig = TaperConfig(), engine: DsrEngine | None = None) -> AngleGather:
    """Stream the downward continuation of ``data`` straight into :func:`awe_transform`."""
    _enforce_guard(model, config)
    e = engine or DsrEngine(model, geometry, mute, taper)
    x_axis = Axis(geometry.s.n, geometry.s.delta, geometry.s.origin, "x")
    acc = _Accumulator(x_axis, Axis(geometry.nz, geometry.dz, 0.0, "z"), config, e.omega, e.dw)
    downward_continue(data, model, geometry, mute, taper, engine=e,
                      sink=lambda f: acc.add(int(round(f.z / geometry.dz)), f.u))
    return acc.gather()


def awe_tilde_transform(data: DataCube, model: Grid2D, geometry: AcquisitionGeometry, mute: MuteConfig,
                        taper: TaperConfig = TaperConfig(), config: AngleConfig = None,
                        weights: ReconWeights = ReconWeights(), engine: DsrEngine | None = None) -> AngleGather:
    """Amplitude-corrected gather: the reconstruction weights inserted before the (h, p) evaluation."""
    if config is None:
        raise ValueError("an AngleConfig is required")
    _enforce_guard(model, config)
    e = engine or DsrEngine(model, geometry, mute, taper)
    x_axis = Axis(geometry.s.n, geometry.s.delta, geometry.s.origin, "x")
    acc = _Accumulator(x_axis, Axis(geometry.nz, geometry.dz, 0.0, "z"), config, e.omega, e.dw)
    D = weighted_surface(e, data, weights)

    def sink(k, V, F):
        G = weighted_plane(e, F, k, weights)
        acc.add(k, G, scale=2.0 * e.c[acc.ix, k] ** 3)

    e.downward(D, sink)
    return acc.gather()


def _peak(env):
    i = int(np.argmax(env))
    if 0 < i < env.size - 1:
        a, b, c = env[i - 1], env[i], env[i + 1]
        den = a - 2 * b + c
        if den != 0:
            return i + 0.5 * (a - c) / den
    return float(i)


def flatness_metric(gather: AngleGather, x_window=None, p_limit: float | None = None):
    """Max envelope-peak depth deviation from the p = 0 column, in depth cells.

    Returns ``(metric, p, z_peak)`` with ``z_peak`` in cells; the envelope is
    taken along z and averaged over the x window.
    """
    ax, az, ap = gather.axes
    v = gather.values
    xs = ax.values
    if x_window is None:
        sel = np.ones(ax.n, dtype=bool)
    else:
        sel = (xs >= x_window[0] - 1e-9) & (xs <= x_window[1] + 1e-9)
    p = ap.values
    use = np.ones(p.size, dtype=bool) if p_limit is None else np.abs(p) <= p_limit + 1e-15
    sub = v[sel][:, :, use]
    if not sel.any() or not use.any() or not np.any(sub):
        raise MetricError("gather is zero in the window")
    env = np.abs(hilbert(sub, axis=1)).mean(axis=0)
    zp = np.array([_peak(env[:, j]) for j in range(env.shape[1])])
    pp = p[use]
    j0 = int(np.argmin(np.abs(pp)))
    return float(np.max(np.abs(zp - zp[j0]))), pp, zp
