"""Survey sinking with the double-square-root equation.

The survey field U(s, r; z) for all retained frequencies is an array of shape
``(n_omega, n_s, n_r)``.  One depth step applies the split-step multipliers of
:mod:`wemig.ssr` in both the source and the receiver coordinate, in the
padded 2-D wavenumber domain.

Inner products used for every adjoint in this module:

* model space (x, z):       sum f g dx dz
* data space (s, r, t):     sum f g ds dr dt
* spectra (s, r, w > 0):    (dw/pi) Re sum F conj(G) ds dr
* sunk fields (s, r, z):    sum f g ds dr dz

``time_to_freq`` and ``freq_to_time`` are exact adjoints under these
products, so every operator pair below is an exact discrete adjoint pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp

from . import ssr
from .core import Axis, DataCube, Grid2D, SpectrumCube, freq_to_time, omega_axis, ramp, time_to_freq
from .ssr import Lateral, TaperConfig


class GeometryError(ValueError):
    pass


class MuteConfigError(ValueError):
    pass


class BornContractError(ValueError):
    pass


@dataclass(frozen=True)
class MuteConfig:
    """Smooth data cutoff: frequency band, dip (horizontal slowness) and optional time mutes.

    ``time_mute`` is ``(t0_min, slope_min, t0_max, slope_max)``: samples with
    ``t < t0_min + slope_min |r - s|`` or ``t > t0_max + slope_max |r - s|``
    are muted, with a cosine ramp of ``time_taper`` seconds.
    """

    omega_min: float
    omega_max: float
    omega_taper: float = 0.0
    slowness_cut: float = 4.0e-4
    dip_taper: float = 0.3
    time_mute: tuple | None = None
    time_taper: float = 0.02

    def __post_init__(self):
        if not 0 < self.omega_min < self.omega_max:
            raise MuteConfigError("need 0 < omega_min < omega_max")
        if self.omega_taper < 0 or 2 * self.omega_taper > self.omega_max - self.omega_min:
            raise MuteConfigError("omega_taper must fit twice inside the band")
        if not self.slowness_cut >= 0:
            raise MuteConfigError("slowness_cut must be >= 0")
        if not 0 <= self.dip_taper < 1:
            raise MuteConfigError("dip_taper must lie in [0, 1)")

    @property
    def band(self):
        return (self.omega_min, self.omega_max)

    @property
    def omega_center(self):
        return 0.5 * (self.omega_min + self.omega_max)

    def band_window(self, omega):
        w = np.asarray(omega, dtype=float)
        if self.omega_taper == 0:
            return ((w >= self.omega_min) & (w <= self.omega_max)).astype(float)
        lo = ramp(w, self.omega_min, self.omega_min + self.omega_taper)
        hi = 1 - ramp(w, self.omega_max - self.omega_taper, self.omega_max)
        return lo * hi

    def dip_window(self, slowness):
        """Window in |k|/w (s/m): 1 below slowness_cut (1 - dip_taper), 0 from slowness_cut on."""
        p = np.abs(np.asarray(slowness, dtype=float))
        return 1 - ramp(p, self.slowness_cut * (1 - self.dip_taper), self.slowness_cut)

    def time_window(self, offset, t):
        if self.time_mute is None:
            return np.ones(np.broadcast(offset, t).shape)
        t0a, sa, t0b, sb = self.time_mute
        h = np.abs(offset)
        w = ramp(t, t0a + sa * h, t0a + sa * h + self.time_taper)
        if t0b is not None:
            w = w * (1 - ramp(t, t0b + sb * h - self.time_taper, t0b + sb * h))
        return w

    def check_against(self, model: Grid2D):
        if not self.slowness_cut < 1.0 / float(model.values.min()):
            raise MuteConfigError("slowness_cut must be below the largest slowness of the model")


@dataclass(frozen=True)
class AcquisitionGeometry:
    s: Axis
    r: Axis
    t: Axis
    z_max: float
    dz: float

    def __post_init__(self):
        if not self.z_max > 0 or not self.dz > 0:
            raise GeometryError("z_max and dz must be > 0")
        n = self.z_max / self.dz
        if abs(n - round(n)) > 1e-9:
            raise GeometryError("dz must divide z_max")
        if self.s.label != "s" or self.r.label != "r" or self.t.label != "t":
            raise GeometryError("geometry axes must be labeled s, r, t")

    @property
    def nz(self) -> int:
        return int(round(self.z_max / self.dz)) + 1

    @property
    def depths(self) -> np.ndarray:
        return self.dz * np.arange(self.nz)

    def empty_data(self) -> DataCube:
        return DataCube((self.s, self.r, self.t), np.zeros((self.s.n, self.r.n, self.t.n)))


@dataclass(frozen=True)
class SurveyField:
    """U_w(s, r) at one depth for a set of frequencies; ``u`` is (n_omega, n_s, n_r)."""

    omega: np.ndarray
    z: float
    u: np.ndarray

    def __post_init__(self):
        om = np.atleast_1d(np.asarray(self.omega, dtype=float))
        u = np.asarray(self.u, dtype=np.complex128)
        if u.ndim == 2:
            u = u[None]
        if u.shape[0] != om.size:
            raise ValueError("one (s, r) plane per frequency required")
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "u", u)


class SurveyLateral:
    """Padded 2-D FFT machinery over (s, r) with diagonal helpers."""

    def __init__(self, n: int, delta: float, pad: int):
        self.lat = Lateral(n, delta, pad)
        self.n, self.N, self.lo, self.hi = n, self.lat.N, self.lat.lo, self.lat.hi
        self.k = self.lat.k
        a = np.arange(self.N)
        self.anti = (a[:, None] + a[None, :]) % self.N
        rows = self.anti.ravel()
        self._sum = sp.csr_matrix(
            (np.ones(rows.size), (rows, np.arange(rows.size))), shape=(self.N, self.N * self.N)
        )

    def fft2(self, u):
        big = np.zeros(u.shape[:-2] + (self.N, self.N), dtype=np.complex128)
        big[..., self.lo : self.hi, self.lo : self.hi] = u
        return sfft.fft2(big, axes=(-2, -1), workers=ssr._WORKERS, overwrite_x=True)

    def ifft2(self, U):
        u = sfft.ifft2(U, axes=(-2, -1), workers=ssr._WORKERS)
        return u[..., self.lo : self.hi, self.lo : self.hi]

    def diag_spectrum(self, g):
        """fft2 of the padded diagonal matrix diag(g); g is (..., n)."""
        big = np.zeros(g.shape[:-1] + (self.N,), dtype=np.complex128)
        big[..., self.lo : self.hi] = g
        gh = sfft.fft(big, axis=-1, workers=ssr._WORKERS)
        return gh[..., self.anti]

    def diag_of_ifft2(self, X):
        """Diagonal of crop(ifft2(X)) without forming the full plane."""
        lead = X.shape[:-2]
        flat = X.reshape(-1, self.N * self.N)
        y = (self._sum @ flat.T).T.reshape(lead + (self.N,))
        d = sfft.ifft(y, axis=-1, workers=ssr._WORKERS) / self.N
        return d[..., self.lo : self.hi]

    def apply(self, u, ms, mr):
        """crop(ifft2(ms[a] mr[b] fft2(pad u))) for per-axis multipliers (n_omega, N)."""
        U = self.fft2(u)
        U *= ms[:, :, None]
        U *= mr[:, None, :]
        return self.ifft2(U)


class DsrEngine:
    """Depth loop machinery shared by modeling, migration and the annihilator."""

    def __init__(self, model: Grid2D, geometry: AcquisitionGeometry, mute: MuteConfig,
                 taper: TaperConfig = TaperConfig()):
        ax, az = model.axes
        g = geometry
        for a in (g.s, g.r):
            if a.n != ax.n or not np.isclose(a.delta, ax.delta) or not np.isclose(a.origin, ax.origin):
                raise GeometryError("source and receiver axes must coincide with the model x axis")
        if not np.isclose(az.origin, 0.0) or not np.isclose(az.delta, g.dz):
            raise GeometryError("model z axis must start at 0 with spacing dz")
        if az.n < g.nz:
            raise GeometryError("model is shallower than z_max")
        if np.any(model.values <= 0):
            raise GeometryError("velocity must be positive")
        mute.check_against(model)
        self.model = model
        self.geometry = g
        self.mute = mute
        self.taper = taper
        self.w_axis = omega_axis(g.t, mute.band)
        self.omega = self.w_axis.values
        self.dw = self.w_axis.delta
        self.nz = g.nz
        self.dz = g.dz
        self.dx = ax.delta
        self.x = ax.values
        self.sl = SurveyLateral(ax.n, ax.delta, taper.pad_cells)
        self.c = np.asarray(model.values[:, : self.nz], dtype=float)
        slow = 1.0 / self.c
        # step k maps depth k+1 to depth k
        self._step_slow = 0.5 * (slow[:, :-1] + slow[:, 1:])
        self._step_cref = 1.0 / self._step_slow.max(axis=0)
        self.cref = self.c.min(axis=0)
        self._cache = {}
        w = self.omega
        k = self.k
        self.band = mute.band_window(w)
        self.dip = mute.dip_window(k[None, :] / w[:, None])

    @property
    def k(self):
        return self.sl.k

    # -- cached multipliers ------------------------------------------------

    def _cached(self, key, fn):
        v = self._cache.get(key)
        if v is None:
            v = self._cache[key] = fn()
        return v

    def phase(self, i):
        cr = float(self._step_cref[i])
        return self._cached(("ps", cr), lambda: ssr.phase_shift(cr, self.omega, self.k, self.dz, self.taper))

    def screen(self, i):
        s = self._step_slow[:, i]
        cr = float(self._step_cref[i])
        if np.ptp(s) == 0:
            return None
        return ssr.screen(self.omega, s, cr, self.dz)

    def qsym(self, k_depth, power=1):
        cr = float(self.cref[k_depth])
        return self._cached(("q", cr, power), lambda: ssr.q_symbol(cr, self.omega, self.k, power, self.taper))

    def xisym(self, k_depth):
        cr = float(self.cref[k_depth])
        return self._cached(("xi", cr), lambda: ssr.xi_symbol(cr, self.omega, self.k, self.taper))

    # -- single steps ------------------------------------------------------

    def step_forward(self, u, i):
        """Upward DSR step from depth i+1 to depth i."""
        sc = self.screen(i)
        if sc is not None:
            u = u * sc[:, :, None] * sc[:, None, :]
        ps = self.phase(i)
        return self.sl.apply(u, ps, ps)

    def step_adjoint(self, u, i):
        """Adjoint of :meth:`step_forward`: depth i to depth i+1."""
        ps = np.conj(self.phase(i))
        u = self.sl.apply(u, ps, ps)
        sc = self.screen(i)
        if sc is not None:
            u = u * np.conj(sc)[:, :, None] * np.conj(sc)[:, None, :]
        return u

    # -- surface cutoff psi -----------------------------------------------

    def psi_spectrum(self, D):
        """Band and dip windows on a (n_omega, n_s, n_r) spectrum (self-adjoint)."""
        D = self.sl.apply(D, self.dip, self.dip)
        return D * self.band[:, None, None]

    def to_time(self, D) -> DataCube:
        g = self.geometry
        spec = SpectrumCube((g.s, g.r, self.w_axis), np.moveaxis(D, 0, -1))
        d = freq_to_time(spec, g.t.n, g.t.delta).values
        return DataCube((g.s, g.r, g.t), self.time_mute(d))

    def to_freq(self, data: DataCube):
        g = self.geometry
        if data.values.shape != (g.s.n, g.r.n, g.t.n):
            raise GeometryError("data does not match the acquisition geometry")
        muted = data.with_values(self.time_mute(data.values))
        return np.ascontiguousarray(np.moveaxis(time_to_freq(muted, self.mute.band).values, -1, 0))

    def time_mute(self, d):
        if self.mute.time_mute is None:
            return d
        g = self.geometry
        h = g.r.values[None, :] - g.s.values[:, None]
        w = self.mute.time_window(h[:, :, None], g.t.values[None, None, :])
        return d * w

    # -- depth loops -------------------------------------------------------

    def upward(self, kspace_source: Callable | None = None, space_source: Callable | None = None):
        """Accumulate sources from z_max up to the surface; returns U at z = 0.

        ``kspace_source(k)`` returns a padded-spectrum contribution (or None)
        added inside the step ending at depth k; ``space_source(k)`` returns a
        space-domain contribution added after it.
        """
        W = None
        for k in range(self.nz - 1, -1, -1):
            F = None
            if W is not None:
                sc = self.screen(k)
                if sc is not None:
                    W = W * sc[:, :, None] * sc[:, None, :]
                F = self.sl.fft2(W)
                ps = self.phase(k)
                F *= ps[:, :, None]
                F *= ps[:, None, :]
            if kspace_source is not None:
                S = kspace_source(k)
                if S is not None:
                    F = S if F is None else F + S
            W = None if F is None else self.sl.ifft2(F)
            if space_source is not None:
                S = space_source(k)
                if S is not None:
                    W = S.astype(np.complex128) if W is None else W + S
        if W is None:
            W = np.zeros((self.omega.size, self.sl.n, self.sl.n), dtype=np.complex128)
        return W

    def downward(self, U0, sink: Callable):
        """Continue a surface field down to z_max, calling ``sink(k, U_k, F_k)``.

        ``F_k`` is the padded 2-D spectrum of ``U_k``; the sink must not
        modify either array.
        """
        V = U0
        for k in range(self.nz):
            F = self.sl.fft2(V)
            sink(k, V, F)
            if k < self.nz - 1:
                ps = np.conj(self.phase(k))
                G = F * ps[:, :, None]
                G *= ps[:, None, :]
                V = self.sl.ifft2(G)
                sc = self.screen(k)
                if sc is not None:
                    V = V * np.conj(sc)[:, :, None] * np.conj(sc)[:, None, :]

    def t0_sum(self, U):
        """Evaluate at t = 0: (dw/pi) sum_w Re U_w."""
        return (self.dw / np.pi) * np.tensordot(np.ones(self.omega.size), U.real, axes=(0, 0))


# ---------------------------------------------------------------------------
# public operations


def dsr_step(field: SurveyField, dz: float, model: Grid2D, taper: TaperConfig = TaperConfig(),
             direction: str = "forward") -> SurveyField:
    """One DSR step over ``dz`` (a whole number of model cells, usually one).

    forward maps ``field.z`` to ``field.z - dz``; adjoint maps ``field.z`` to
    ``field.z + dz``.
    """
    if dz == 0:
        return field
    ax, az = model.axes
    sl = SurveyLateral(ax.n, ax.delta, taper.pad_cells)
    z_deep = field.z if direction == "forward" else field.z + dz
    slow, cr = ssr.model_rows(model, z_deep, z_deep - dz)
    ps = ssr.phase_shift(cr, field.omega, sl.k, dz, taper)
    sc = ssr.screen(field.omega, slow, cr, dz)
    u = field.u
    if direction == "forward":
        u = sl.apply(u * sc[:, :, None] * sc[:, None, :], ps, ps)
        return SurveyField(field.omega, field.z - dz, u)
    if direction == "adjoint":
        u = sl.apply(u, np.conj(ps), np.conj(ps)) * np.conj(sc)[:, :, None] * np.conj(sc)[:, None, :]
        return SurveyField(field.omega, field.z + dz, u)
    raise ValueError("direction must be 'forward' or 'adjoint'")


def apply_mute_psi(spec: SpectrumCube, mute: MuteConfig, taper: TaperConfig = TaperConfig()) -> SpectrumCube:
    """Band and dip windows on a spectrum cube."""
    s, r, w = spec.axes
    if s.n != r.n or not np.isclose(s.delta, r.delta):
        raise GeometryError("dip windows need matching s and r sampling")
    sl = SurveyLateral(s.n, s.delta, taper.pad_cells)
    om = w.values
    dip = mute.dip_window(sl.k[None, :] / om[:, None])
    D = np.moveaxis(spec.values, -1, 0)
    D = sl.apply(D, dip, dip) * mute.band_window(om)[:, None, None]
    return spec.with_values(np.moveaxis(D, 0, -1))


def _check_perturbation(dc: Grid2D, model: Grid2D):
    if dc.shape != model.shape:
        raise BornContractError("perturbation and model grids differ")
    if np.any(dc.values[:, 0] != 0):
        raise BornContractError("perturbation must vanish near z = 0")


def born_model(model: Grid2D, dc: Grid2D, geometry: AcquisitionGeometry, mute: MuteConfig,
               taper: TaperConfig = TaperConfig(), engine: DsrEngine | None = None) -> DataCube:
    """Linearized data: surface solution of the inhomogeneous DSR equation.

    The source at depth z is (1/2) w^2 c0^-3 dc placed on the diagonal s = r
    with cell mass 1/ds, weighted by Q in s and r, and the depth integral is a
    sum with weight dz.  Surface Q factors, the cutoff psi and the inverse
    time transform follow.
    """
    _check_perturbation(dc, model)
    e = engine or DsrEngine(model, geometry, mute, taper)
    amp = 0.5 * e.omega**2
    g = dc.values[:, : e.nz] / e.c**3

    def source(k):
        if not np.any(g[:, k]):
            return None
        q = e.qsym(k)
        S = e.sl.diag_spectrum((amp * e.dz / e.dx)[:, None] * g[None, :, k])
        S *= q[:, :, None]
        S *= q[:, None, :]
        return S

    W = e.upward(kspace_source=source)
    q0 = e.qsym(0)
    D = e.sl.apply(W, q0, q0)
    D = e.psi_spectrum(D)
    return e.to_time(D)


def downward_continue(data: DataCube, model: Grid2D, geometry: AcquisitionGeometry, mute: MuteConfig,
                      taper: TaperConfig = TaperConfig(), sink: Callable | None = None,
                      engine: DsrEngine | None = None, surface_weight: Callable | None = None):
    """Apply psi, transform, and continue downward, calling ``sink(SurveyField)`` per depth.

    Without a sink the per-depth fields are returned as a list.
    """
    e = engine or DsrEngine(model, geometry, mute, taper)
    D = e.psi_spectrum(e.to_freq(data))
    if surface_weight is not None:
        D = surface_weight(e, D)
    out = []

    def _sink(k, V, F):
        f = SurveyField(e.omega, float(e.geometry.depths[k]), V)
        if sink is None:
            out.append(f)
        else:
            sink(f)

    e.downward(D, _sink)
    return None if sink is not None else out


def imaging_condition(field: SurveyField, dw: float) -> np.ndarray:
    """image(x) = (dw/pi) sum_w Re U_w(x, x): evaluation at t = 0 on the diagonal."""
    d = np.diagonal(field.u, axis1=1, axis2=2)
    return (dw / np.pi) * d.real.sum(axis=0)


def migrate_adjoint(data: DataCube, model: Grid2D, geometry: AcquisitionGeometry, mute: MuteConfig,
                    taper: TaperConfig = TaperConfig(), engine: DsrEngine | None = None) -> Grid2D:
    """Exact adjoint of :func:`born_model`."""
    e = engine or DsrEngine(model, geometry, mute, taper)
    D = e.psi_spectrum(e.to_freq(data))
    q0 = e.qsym(0)
    D = e.sl.apply(D, q0, q0)
    image = np.zeros(model.shape)
    amp = 0.5 * e.omega**2

    def sink(k, V, F):
        q = e.qsym(k)
        X = F * q[:, :, None]
        X *= q[:, None, :]
        d = e.sl.diag_of_ifft2(X)
        image[:, k] = (e.dw / np.pi) * (amp[:, None] * d.real).sum(axis=0) / e.c[:, k] ** 3

    e.downward(D, sink)
    image[:, 0] = 0.0
    return model.with_values(image)


def zero_pad_missing(data: DataCube, mask, taper_cells: int = 0) -> DataCube:
    """Zero traces outside ``mask`` (s, r); optional smooth ramp of ``taper_cells`` at its edges."""
    m = np.asarray(mask, dtype=float)
    if m.shape != data.values.shape[:2]:
        raise GeometryError("mask shape must be (n_s, n_r)")
    if taper_cells > 0 and 0 < m.sum() < m.size:
        from scipy.ndimage import distance_transform_edt

        dist = distance_transform_edt(m > 0)
        m = ramp(dist, 0.0, float(taper_cells + 1)) * (m > 0)
    return data.with_values(data.values * m[:, :, None])


def inner_model(a: Grid2D, b: Grid2D) -> float:
    ax, az = a.axes
    return float(np.sum(a.values * b.values) * ax.delta * az.delta)


def inner_data(a: DataCube, b: DataCube) -> float:
    return float(np.sum(a.values * b.values) * a.s.delta * a.r.delta * a.t.delta)
