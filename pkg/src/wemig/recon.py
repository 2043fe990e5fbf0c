"""True-amplitude reconstruction: weighted continuation, the Xi weight and the Phi symbol.

The weighted chain is

    2 c0^3 R1 R2 Xi(z) Q(z)^-1 Q(z)^-1 H(0, z)* Q(0)^-1 Q(0)^-1 D_t^-2 psi d

where R2 evaluates at t = 0 and R1 restricts to s = r.  Its output is the
image Phi(D) dc: the reflectivity seen through the illumination symbol
Phi(x, z, xi, zeta) = (1/2 pi) int Psi dtheta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import gaussian_filter

from . import ssr
from .core import DataCube, Grid2D
from .dsr import AcquisitionGeometry, DsrEngine, MuteConfig, SurveyField, SurveyLateral
from .rays import Velocity, invert_gamma_batch, trace_depth_batch
from .ssr import TaperConfig


class ReconConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ReconWeights:
    xi_mode: str = "on"
    q_inverse_mode: str = "on"
    dt_inverse_power: int = -2
    omega_floor: float | None = None

    def __post_init__(self):
        for name in ("xi_mode", "q_inverse_mode"):
            if getattr(self, name) not in ("on", "off"):
                raise ReconConfigError(f"{name} must be 'on' or 'off'")
        if self.omega_floor is not None and not self.omega_floor > 0:
            raise ReconConfigError("omega_floor must be > 0")


def xi_weight(field: SurveyField, model: Grid2D, z: float, taper: TaperConfig = TaperConfig()) -> SurveyField:
    """Multiply by Xi = |dGamma/dtau| in the (k_s, k_r) domain with c_ref(z)."""
    ax = model.axes[0]
    sl = SurveyLateral(ax.n, ax.delta, taper.pad_cells)
    cr = ssr.reference_velocity(model, z)
    xi = ssr.xi_symbol(cr, field.omega, sl.k, taper)
    U = sl.fft2(field.u)
    U = U * (xi[:, :, None] + xi[:, None, :])
    return SurveyField(field.omega, field.z, sl.ifft2(U))


# ---------------------------------------------------------------------------
# weighted continuation shared with the angle transform and the annihilator


def weighted_surface(e: DsrEngine, data: DataCube, weights: ReconWeights):
    """psi, D_t power and surface Q^-1 factors applied to the data; returns (n_omega, n_s, n_r)."""
    floor = e.mute.omega_min if weights.omega_floor is None else weights.omega_floor
    if e.omega.min() < floor * (1 - 1e-12):
        raise ReconConfigError(f"band reaches below omega_floor = {floor:g} rad/s")
    D = e.psi_spectrum(e.to_freq(data))
    if weights.dt_inverse_power:
        D = D * (e.omega ** weights.dt_inverse_power)[:, None, None]
    if weights.q_inverse_mode == "on":
        qi = e.qsym(0, -1)
        D = e.sl.apply(D, qi, qi)
    return D


def depth_multipliers(e: DsrEngine, k: int, weights: ReconWeights):
    """Per-axis multiplier pairs whose sum is the depth-k weight in (k_s, k_r)."""
    if weights.q_inverse_mode == "on":
        q = e.qsym(k, -1)
    else:
        q = np.ones((e.omega.size, e.sl.N))
    if weights.xi_mode == "off":
        return [(q, q)]
    qx = q * e.xisym(k)
    return [(qx, q), (q, qx)]


def weighted_plane(e: DsrEngine, F, k, weights):
    """Full (s, r) plane of the weighted field at depth k from its padded spectrum F."""
    X = None
    for ma, mb in depth_multipliers(e, k, weights):
        Y = F * ma[:, :, None]
        Y *= mb[:, None, :]
        X = Y if X is None else X + Y
    return e.sl.ifft2(X)


def reconstruct(data: DataCube, model: Grid2D, geometry: AcquisitionGeometry, mute: MuteConfig,
                taper: TaperConfig = TaperConfig(), weights: ReconWeights = ReconWeights(),
                engine: DsrEngine | None = None) -> Grid2D:
    """Weighted migration whose output is Phi(D) dc."""
    e = engine or DsrEngine(model, geometry, mute, taper)
    D = weighted_surface(e, data, weights)
    image = np.zeros(model.shape)

    def sink(k, V, F):
        d = 0.0
        for ma, mb in depth_multipliers(e, k, weights):
            X = F * ma[:, :, None]
            X *= mb[:, None, :]
            d = d + e.sl.diag_of_ifft2(X)
        image[:, k] = 2.0 * e.c[:, k] ** 3 * (e.dw / np.pi) * d.real.sum(axis=0)

    e.downward(D, sink)
    return model.with_values(image)


# ---------------------------------------------------------------------------
# the Phi symbol


def _phi_points(v: Velocity, xs, z, xis, zetas, geometry: AcquisitionGeometry, mute: MuteConfig,
                n_theta, mute_power, dz_ray):
    """Phi at points (xs[i], z) and directions (xis[i], zetas[i]) sharing one depth."""
    xs, xis, zetas = np.broadcast_arrays(*(np.atleast_1d(np.asarray(a, dtype=float)) for a in (xs, xis, zetas)))
    out = np.zeros(xs.shape)
    if mute.slowness_cut == 0:
        return out
    c = v(xs, np.full(xs.shape, z))[0]
    half = 0.5 * np.abs(xis) + mute.omega_max / c
    u = np.linspace(-1.0, 1.0, n_theta)
    theta = half[:, None] * u[None, :]
    h = half * (u[1] - u[0])
    sigma = 0.5 * xis[:, None] - theta
    rho = 0.5 * xis[:, None] + theta
    zeta = np.broadcast_to(zetas[:, None], theta.shape)
    cc = np.broadcast_to(c[:, None], theta.shape)
    tau = invert_gamma_batch(cc, cc, sigma, rho, zeta)
    live = np.isfinite(tau) & (np.abs(tau) <= mute.omega_max)
    w = np.zeros(theta.shape)
    if live.any():
        ta = np.abs(tau[live])
        x0 = np.broadcast_to(xs[:, None], theta.shape)[live]
        sg = np.sign(tau[live])
        legs_x = np.concatenate([x0, x0])
        # (k, tau) and (-k, -tau) trace the same path
        legs_k = np.concatenate([sigma[live] * sg, rho[live] * sg])
        legs_t = np.concatenate([ta, ta])
        if z > 0:
            xe, te, ke, st = trace_depth_batch(v, legs_x, z, legs_k, legs_t, dz_ray, 0.0)
        else:
            xe, te, ke, st = legs_x, np.zeros_like(legs_x), legs_k, np.zeros(legs_x.shape, int)
        n = ta.size
        s0, r0 = xe[:n], xe[n:]
        ks, kr = ke[:n], ke[n:]
        ok = (st[:n] == 0) & (st[n:] == 0)
        lo, hi = geometry.s.origin, geometry.s.end
        ok &= (s0 >= lo) & (s0 <= hi) & (r0 >= geometry.r.origin) & (r0 <= geometry.r.end)
        psi = mute.band_window(ta) * mute.dip_window(ks / ta) * mute.dip_window(kr / ta)
        if mute.time_mute is not None:
            psi = psi * mute.time_window(r0 - s0, te[:n] + te[n:])
        w[live] = np.where(ok, psi, 0.0) ** mute_power
    # trapezoid over theta
    w[:, 0] *= 0.5
    w[:, -1] *= 0.5
    out = w.sum(axis=1) * h / (2 * np.pi)
    return out


def phi_symbol(x, z, xi, zeta, model: Grid2D, geometry: AcquisitionGeometry, mute: MuteConfig,
               n_theta: int = 64, mute_power: int = 1, dz_ray: float = 5.0):
    """Phi(x, z, xi, zeta) by theta quadrature of the surface cutoff pulled back along DSR rays.

    ``xi`` and ``zeta`` may be arrays (same shape); ``mute_power`` = 2 accounts
    for data that already passed through the same cutoff once.
    """
    if n_theta < 2:
        raise ValueError("n_theta must be >= 2")
    xi_a = np.asarray(xi, dtype=float)
    ze_a = np.asarray(zeta, dtype=float)
    if np.any((xi_a == 0) & (ze_a == 0)):
        raise ValueError("(xi, zeta) must be nonzero")
    v = Velocity(model)
    shape = np.broadcast(xi_a, ze_a).shape
    res = _phi_points(v, np.full(shape, float(x)).ravel(), float(z), np.broadcast_to(xi_a, shape).ravel(),
                      np.broadcast_to(ze_a, shape).ravel(), geometry, mute, n_theta, mute_power, dz_ray)
    res = res.reshape(shape)
    return float(res) if res.ndim == 0 else res


def _local_dip_normals(image: np.ndarray, dx: float, dz: float, smooth: float = 2.0):
    """Unit normals (n_x, n_z) of the dominant local structure (structure tensor)."""
    gx, gz = np.gradient(image, dx, dz)
    jxx = gaussian_filter(gx * gx, smooth)
    jxz = gaussian_filter(gx * gz, smooth)
    jzz = gaussian_filter(gz * gz, smooth)
    angle = 0.5 * np.arctan2(2 * jxz, jxx - jzz)
    nx, nz = np.cos(angle), np.sin(angle)
    flip = nz < 0
    nx[flip], nz[flip] = -nx[flip], -nz[flip]
    flat = (jxx + jzz) <= 1e-30 * max(float((jxx + jzz).max()), 1e-300)
    nx[flat], nz[flat] = 0.0, 1.0
    return nx, nz


def phi_field(model: Grid2D, geometry: AcquisitionGeometry, mute: MuteConfig,
              direction_mode: str = "vertical_only", image: Grid2D | None = None,
              stride: int = 4, n_theta: int = 64, mute_power: int = 1, dz_ray: float = 5.0) -> Grid2D:
    """Phi on the model grid at the band-center scale, sampled every ``stride`` cells and interpolated."""
    if direction_mode not in ("vertical_only", "local_dip"):
        raise ValueError("direction_mode must be 'vertical_only' or 'local_dip'")
    ax, az = model.axes
    v = Velocity(model)
    nz = geometry.nz
    ix = np.unique(np.r_[np.arange(0, ax.n, stride), ax.n - 1])
    iz = np.unique(np.r_[np.arange(1, nz, stride), nz - 1])
    if direction_mode == "local_dip":
        if image is None:
            raise ValueError("local_dip needs the image")
        nxs, nzs = _local_dip_normals(image.values, ax.delta, az.delta)
    coarse = np.zeros((ix.size, iz.size))
    for j, k in enumerate(iz):
        z = az.values[k]
        xs = ax.values[ix]
        kappa = 2.0 * mute.omega_center / model.values[ix, k]
        if direction_mode == "vertical_only":
            xis, zetas = np.zeros_like(xs), kappa
        else:
            xis, zetas = kappa * nxs[ix, k], kappa * nzs[ix, k]
        coarse[:, j] = _phi_points(v, xs, z, xis, zetas, geometry, mute, n_theta, mute_power, dz_ray)
    full = np.zeros(model.shape)
    interp = RegularGridInterpolator((ax.values[ix], az.values[iz]), coarse)
    X, Z = np.meshgrid(ax.values, az.values[1:nz], indexing="ij")
    full[:, 1:nz] = interp(np.stack([X.ravel(), Z.ravel()], axis=-1)).reshape(X.shape)
    return model.with_values(full)


def normalize_by_phi(image: Grid2D, model: Grid2D, geometry: AcquisitionGeometry, mute: MuteConfig,
                     direction_mode: str = "vertical_only", floor: float = 1e-3, phi: Grid2D | None = None,
                     **phi_kwargs) -> Grid2D:
    """Divide the image by max(Phi, floor * max Phi) at the dominant direction per point."""
    if phi is None:
        phi = phi_field(model, geometry, mute, direction_mode, image=image, **phi_kwargs)
    p = phi.values
    top = float(p.max())
    if top <= 0:
        return image.with_values(np.zeros(image.shape))
    return image.with_values(image.values / np.maximum(p, floor * top))
