"""One-way (single-square-root) depth extrapolation by split-step Fourier.

A step from depth z to z - dz applies, for every frequency w > 0,

    u <- crop(IFFT[exp(-i b(c_ref, w, k) dz) FFT[pad(u)]])
    u <- u * exp(-i w (slowness(x) - 1/c_ref) dz)

where ``b = sgn(w) |w|/c sqrt(1 - q^2 - i phi(q))`` with ``q = |k| c / |w|`` is
the regularized vertical wavenumber.  The square root is taken on the branch
with ``Im b <= 0``, so the step never amplifies.  The adjoint applies the
conjugate multipliers in reverse order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .core import Grid2D

_WORKERS = None


def set_workers(n: int | None) -> None:
    global _WORKERS
    _WORKERS = n


class PropagatorConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TaperConfig:
    q_lo: float = 0.90
    q_hi: float = 1.10
    phi_max: float = 0.1
    evanescent_policy: str = "damp"
    pad_cells: int = 16

    def __post_init__(self):
        if not 0 < self.q_lo < 1 < self.q_hi:
            raise PropagatorConfigError("need 0 < q_lo < 1 < q_hi")
        if not self.phi_max > 0:
            raise PropagatorConfigError("phi_max must be > 0")
        if self.evanescent_policy not in ("damp", "zero"):
            raise PropagatorConfigError("evanescent_policy must be 'damp' or 'zero'")
        if self.pad_cells < 0:
            raise PropagatorConfigError("pad_cells must be >= 0")


@dataclass(frozen=True)
class FreqSlice:
    """Monochromatic (or frequency-batched) field over one horizontal axis."""

    omega: np.ndarray
    z: float
    u: np.ndarray

    def __post_init__(self):
        om = np.atleast_1d(np.asarray(self.omega, dtype=float))
        u = np.asarray(self.u, dtype=np.complex128)
        if u.ndim == 1:
            u = u[None, :]
        if u.shape[0] != om.size:
            raise ValueError("one field row per frequency required")
        if not np.all(np.isfinite(u)):
            raise ValueError("non-finite field")
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "u", u)


def regularization_bump(q, taper: TaperConfig):
    """Raised-cosine bump of height phi_max supported on [q_lo, q_hi]."""
    q = np.asarray(q, dtype=float)
    u = (q - taper.q_lo) / (taper.q_hi - taper.q_lo)
    inside = (u > 0) & (u < 1)
    return np.where(inside, taper.phi_max * 0.5 * (1 - np.cos(2 * np.pi * np.clip(u, 0, 1))), 0.0)


def vertical_slowness_symbol(c, omega, k, taper: TaperConfig = TaperConfig()):
    """Regularized vertical wavenumber b(c, w, k) (rad/m), damping branch."""
    c = np.asarray(c, dtype=float)
    omega = np.asarray(omega, dtype=float)
    k = np.asarray(k, dtype=float)
    aw = np.abs(omega)
    q = np.abs(k) * c / aw
    phi = regularization_bump(q, taper)
    core = np.sqrt((1 - q**2 - 1j * phi).astype(np.complex128))
    # a vanishing bump leaves a +0 imaginary part, which would select the growing root
    core = core.real - 1j * np.abs(core.imag)
    beyond = q >= taper.q_hi
    evan = -1j * np.maximum(np.sqrt(np.maximum(q**2 - 1, 0.0)), taper.phi_max)
    core = np.where(beyond, evan, core)
    core = np.where(q <= taper.q_lo, np.sqrt(np.maximum(1 - q**2, 0.0)) + 0j, core)
    b = aw / c * core
    # b(-w) = -conj(b(w)) keeps Im b <= 0 for both signs of w
    return np.where(omega >= 0, b, -np.conj(b))


def phase_shift(c_ref, omega, k, dz, taper: TaperConfig):
    """Wavenumber-domain multiplier exp(-i b dz), shape (n_omega, n_k)."""
    om = np.asarray(omega, dtype=float)[:, None]
    b = vertical_slowness_symbol(c_ref, om, np.asarray(k)[None, :], taper)
    m = np.exp(-1j * b * dz)
    if taper.evanescent_policy == "zero":
        q = np.abs(k)[None, :] * c_ref / np.abs(om)
        m = np.where(q >= taper.q_hi, 0.0, m)
    return m


def screen(omega, slowness, c_ref, dz):
    """Space-domain multiplier exp(-i w (slowness - 1/c_ref) dz), shape (n_omega, n_x)."""
    om = np.asarray(omega, dtype=float)[:, None]
    return np.exp(-1j * om * (np.asarray(slowness)[None, :] - 1.0 / c_ref) * dz)


def q_symbol(c_ref, omega, k, power: int, taper: TaperConfig):
    """[|w|^-1/2 (1/c^2 - k^2/w^2)^-1/4]^power, argument clamped at q = q_lo."""
    om = np.asarray(omega, dtype=float)[:, None]
    k = np.asarray(k, dtype=float)[None, :]
    q2 = (k * c_ref / om) ** 2
    arg = np.maximum(1 - q2, 1 - taper.q_lo**2) / c_ref**2
    m = np.abs(om) ** -0.5 * arg**-0.25
    return m**power


def xi_symbol(c_ref, omega, k, taper: TaperConfig):
    """c^-2 (c^-2 - k^2/w^2)^-1/2, argument clamped at q = q_lo."""
    om = np.asarray(omega, dtype=float)[:, None]
    k = np.asarray(k, dtype=float)[None, :]
    q2 = (k * c_ref / om) ** 2
    arg = np.maximum(1 - q2, 1 - taper.q_lo**2)
    return np.broadcast_to(1.0 / (c_ref * np.sqrt(arg)), np.broadcast(om, k).shape)


class Lateral:
    """Padded FFT geometry for one horizontal axis."""

    def __init__(self, n: int, delta: float, pad: int):
        self.n = n
        self.delta = delta
        self.pad = pad
        # no padding means a periodic axis, so the length must stay exact
        self.N = sfft.next_fast_len(n + 2 * pad) if pad else n
        self.k = 2 * np.pi * np.fft.fftfreq(self.N, delta)
        self.lo = pad
        self.hi = pad + n

    def fft(self, u, axis=-1):
        shape = list(u.shape)
        shape[axis] = self.N
        big = np.zeros(shape, dtype=np.complex128)
        sl = [slice(None)] * u.ndim
        sl[axis] = slice(self.lo, self.hi)
        big[tuple(sl)] = u
        return sfft.fft(big, axis=axis, workers=_WORKERS, overwrite_x=True)

    def ifft(self, U, axis=-1):
        u = sfft.ifft(U, axis=axis, workers=_WORKERS)
        sl = [slice(None)] * U.ndim
        sl[axis] = slice(self.lo, self.hi)
        return u[tuple(sl)]


def model_rows(model: Grid2D, z_from: float, z_to: float):
    """Mean slowness between two depth rows and the derived reference velocity."""
    ax, az = model.axes
    ia = _depth_index(az, z_from)
    ib = _depth_index(az, z_to)
    slow = 0.5 * (1.0 / model.values[:, ia] + 1.0 / model.values[:, ib])
    return slow, 1.0 / slow.max()


def reference_velocity(model: Grid2D, z: float) -> float:
    """Minimum of c0 over the lateral aperture at depth z."""
    return float(model.values[:, _depth_index(model.axes[1], z)].min())


def _depth_index(az, z):
    u = (z - az.origin) / az.delta
    i = int(round(u))
    if abs(u - i) > 1e-6 or not 0 <= i < az.n:
        raise PropagatorConfigError(f"depth {z} is not a sample of the model z axis")
    return i


def ssr_step(slice_: FreqSlice, dz: float, model: Grid2D, c_ref: float | None = None,
             taper: TaperConfig = TaperConfig(), direction: str = "forward") -> FreqSlice:
    """One split-step from ``slice_.z`` to ``slice_.z - dz`` (forward) or its adjoint.

    The adjoint maps a field at ``z - dz`` back to ``z``; pass the slice whose
    ``z`` is the deeper depth in both cases and read ``z`` of the result.
    """
    if dz < 0:
        raise PropagatorConfigError("dz must be >= 0")
    if dz == 0:
        return slice_
    ax = model.axes[0]
    z_deep = slice_.z if direction == "forward" else slice_.z + dz
    slow, cr = model_rows(model, z_deep, z_deep - dz)
    if c_ref is not None:
        cr = c_ref
    if cr <= 0:
        raise PropagatorConfigError("reference velocity must be > 0")
    lat = Lateral(ax.n, ax.delta, taper.pad_cells)
    ps = phase_shift(cr, slice_.omega, lat.k, dz, taper)
    sc = screen(slice_.omega, slow, cr, dz)
    u = slice_.u
    if direction == "forward":
        u = lat.ifft(ps * lat.fft(u)) * sc
        return FreqSlice(slice_.omega, slice_.z - dz, u)
    if direction == "adjoint":
        u = lat.ifft(np.conj(ps) * lat.fft(u * np.conj(sc)))
        return FreqSlice(slice_.omega, slice_.z + dz, u)
    raise ValueError("direction must be 'forward' or 'adjoint'")


def q_weight(slice_: FreqSlice, model: Grid2D, z: float, power: int = 1,
             taper: TaperConfig = TaperConfig(), c_ref: float | None = None) -> FreqSlice:
    if power not in (-1, 1):
        raise ValueError("power must be +1 or -1")
    ax = model.axes[0]
    cr = reference_velocity(model, z) if c_ref is None else c_ref
    lat = Lateral(ax.n, ax.delta, taper.pad_cells)
    m = q_symbol(cr, slice_.omega, lat.k, power, taper)
    return FreqSlice(slice_.omega, slice_.z, lat.ifft(m * lat.fft(slice_.u)))


def propagate_ssr(slice_: FreqSlice, z_from: float, z_to: float, model: Grid2D,
                  taper: TaperConfig = TaperConfig(), direction: str = "forward") -> FreqSlice:
    """Compose split steps on the model depth grid.

    forward: upward continuation from ``z_from`` to ``z_to`` < ``z_from``.
    adjoint: the exact adjoint, mapping a field at ``z_to`` back to ``z_from``.
    """
    dz = model.axes[1].delta
    nsteps = (z_from - z_to) / dz
    n = int(round(nsteps))
    if abs(nsteps - n) > 1e-9 or n < 0:
        raise PropagatorConfigError("depth interval is not a whole number of model steps")
    s = slice_
    if direction == "forward":
        for i in range(n):
            s = ssr_step(s, dz, model, None, taper, "forward")
    else:
        s = FreqSlice(s.omega, z_to, s.u)
        for i in range(n):
            s = ssr_step(s, dz, model, None, taper, "adjoint")
    return s
