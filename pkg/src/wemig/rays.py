"""Hamiltonian ray tracing in time and depth parameterization.

The Hamiltonian is ``P = -c^-2 tau^2 + xi^2 + zeta^2``.  Written with the time
as evolution parameter the ray equations are

    dx/dt  = -xi c^2 / tau        dxi/dt   = tau c_x / c
    dz/dt  = -zeta c^2 / tau      dzeta/dt = tau c_z / c

so the take-off direction ``a`` relates to the covector by
``(xi, zeta) = -tau a / c``.  With depth as evolution parameter (upward,
decreasing z) ``zeta = sgn(tau) sqrt(tau^2/c^2 - xi^2)`` and

    dx/dz = xi / zeta,  dt/dz = -tau / (zeta c^2),  dxi/dz = -tau^2 c_x / (zeta c^3).

The velocity is interpolated bilinearly; its gradient is the exact gradient of
the bilinear patch.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .core import Grid2D


class RayContractError(ValueError):
    pass


class EmptyPathError(ValueError):
    pass


class TurningPointError(ValueError):
    def __init__(self, z, message=None):
        self.z = z
        super().__init__(message or f"ray turns (|xi| >= |tau|/c) near z = {z:.6g} m")


class GammaDomainError(ValueError):
    pass


class GammaInversionError(ValueError):
    pass


class Velocity:
    """Bilinear interpolant of c0(x, z) with its analytic gradient."""

    def __init__(self, model: Grid2D):
        ax, az = model.axes
        self.c = np.asarray(model.values, dtype=float)
        self.x0, self.dx, self.nx = ax.origin, ax.delta, ax.n
        self.z0, self.dz, self.nz = az.origin, az.delta, az.n
        self.x1 = ax.end
        self.z1 = az.end

    def inside(self, x, z):
        eps = 1e-9
        return (
            (x >= self.x0 - eps)
            & (x <= self.x1 + eps)
            & (z >= self.z0 - eps)
            & (z <= self.z1 + eps)
        )

    def _cell(self, u, n):
        i = np.clip(np.floor(u), 0, max(n - 2, 0)).astype(int)
        return i, u - i

    def cell_of(self, x, z):
        """Indices of the bilinear patch containing (x, z)."""
        i = self._cell((x - self.x0) / self.dx, self.nx)[0] if self.nx > 1 else 0
        j = self._cell((z - self.z0) / self.dz, self.nz)[0] if self.nz > 1 else 0
        return int(i), int(j)

    def face_cell(self, x, z, dxdt):
        """Blended cell ``(i, j, True)`` when x sits on an interior vertical face and
        the motion is along it, else None; ``z`` should be a probe just ahead."""
        if self.nx < 3 or abs(dxdt) > 1e-12:
            return None
        u = (x - self.x0) / self.dx
        i = int(round(u))
        if not 0 < i < self.nx - 1 or abs(u - i) > 1e-12:
            return None
        return (i, self.cell_of(x, z)[1], True)

    def cell_bounds(self, i, j, *blend):
        """Faces ``(xlo, xhi, zlo, zhi)`` of a patch; faces on the model edge are open."""
        if blend:
            lo = self.cell_bounds(i - 1, j)
            return lo[0], self.cell_bounds(i, j)[1], lo[2], lo[3]
        xlo = self.x0 + i * self.dx if i > 0 else -np.inf
        xhi = self.x0 + (i + 1) * self.dx if i < self.nx - 2 else np.inf
        zlo = self.z0 + j * self.dz if j > 0 else -np.inf
        zhi = self.z0 + (j + 1) * self.dz if j < self.nz - 2 else np.inf
        return xlo, xhi, zlo, zhi

    def __call__(self, x, z, cell=None):
        """Return ``(c, dc/dx, dc/dz)`` at the given points.

        With ``cell=(i, j)`` the polynomial of that patch is used everywhere, so
        the result is smooth in (x, z).
        """
        if cell is not None and len(cell) == 3:
            # on the vertical face left of column i: mean of the two patches
            i, j, _ = cell
            a, b = self(x, z, (i - 1, j)), self(x, z, (i, j))
            return tuple(0.5 * (p + q) for p, q in zip(a, b))
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        if self.nx == 1 and self.nz == 1:
            c = np.full(np.broadcast(x, z).shape, self.c[0, 0])
            return c, np.zeros_like(c), np.zeros_like(c)
        u = (x - self.x0) / self.dx
        w = (z - self.z0) / self.dz
        if cell is None:
            i, fx = self._cell(u, self.nx)
            j, fz = self._cell(w, self.nz)
        else:
            i, j = cell
            fx, fz = u - i, w - j
        i1 = np.minimum(i + 1, self.nx - 1)
        j1 = np.minimum(j + 1, self.nz - 1)
        c00 = self.c[i, j]
        c10 = self.c[i1, j]
        c01 = self.c[i, j1]
        c11 = self.c[i1, j1]
        c = (c00 * (1 - fx) + c10 * fx) * (1 - fz) + (c01 * (1 - fx) + c11 * fx) * fz
        cx = ((c10 - c00) * (1 - fz) + (c11 - c01) * fz) / self.dx if self.nx > 1 else 0 * c
        cz = ((c01 - c00) * (1 - fx) + (c11 - c10) * fx) / self.dz if self.nz > 1 else 0 * c
        return c, cx, cz


@dataclass(frozen=True)
class RayState:
    x: float
    z: float
    t: float
    xi: float
    zeta: float
    tau: float

    @classmethod
    def from_direction(cls, model, x, z, angle, tau=1.0, t=0.0):
        """State leaving (x, z) in direction (sin angle, cos angle); angle 0 points down."""
        c = float(Velocity(model)(x, z)[0])
        ax, az = np.sin(angle), np.cos(angle)
        return cls(x, z, t, -tau * ax / c, -tau * az / c, tau)


def hamiltonian(model_or_velocity, state) -> float:
    v = model_or_velocity if isinstance(model_or_velocity, Velocity) else Velocity(model_or_velocity)
    c = v(state.x, state.z)[0]
    return float(-(state.tau**2) / c**2 + state.xi**2 + state.zeta**2)


def relative_drift(v: Velocity, x, z, xi, zeta, tau):
    c = v(x, z)[0]
    return np.abs(-(tau**2) / c**2 + xi**2 + zeta**2) / (tau / c) ** 2


@dataclass
class RayPath:
    """A sampled bicharacteristic.  Indexing yields :class:`RayState`."""

    x: np.ndarray
    z: np.ndarray
    t: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray
    tau: float
    status: str = "ok"

    def __len__(self):
        return len(self.x)

    def __getitem__(self, i):
        return RayState(
            float(self.x[i]), float(self.z[i]), float(self.t[i]),
            float(self.xi[i]), float(self.zeta[i]), float(self.tau),
        )

    @property
    def end(self) -> RayState:
        return self[-1]

    def drift(self, model) -> np.ndarray:
        return relative_drift(Velocity(model), self.x, self.z, self.xi, self.zeta, self.tau)

    def rows(self):
        for i in range(len(self)):
            yield (self.x[i], self.z[i], self.t[i], self.xi[i], self.zeta[i], self.tau)


# ---------------------------------------------------------------------------
# time parameterization


def _rhs_time(v, y, tau, cell=None):
    x, z, _, xi, zeta = y
    c, cx, cz = v(x, z, cell)
    return np.array([-xi * c * c / tau, -zeta * c * c / tau, np.ones_like(x), tau * cx / c, tau * cz / c])


def _rk4(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _advance(v, y, h, tau):
    """RK4 over ``h`` split at patch faces so each piece sees one smooth polynomial.

    The bilinear field is only continuous across faces; a step straddling a face
    loses its order and shows up as a jump in the Hamiltonian.
    """
    left = h
    for _ in range(64):
        if left <= 0:
            break
        d = _rhs_time(v, y, tau)[:2]
        probe = y[:2] + 1e-9 * np.sign(h) * d / max(np.hypot(*d), 1e-300)
        cell = v.face_cell(y[0], probe[1], d[0] / max(np.hypot(*d), 1e-300)) or v.cell_of(probe[0], probe[1])
        lo_x, hi_x, lo_z, hi_z = v.cell_bounds(*cell)
        f = lambda yy: _rhs_time(v, yy, tau, cell)  # noqa: E731
        trial = _rk4(f, y, left)
        faces = [(0, lo_x, -1.0), (0, hi_x, 1.0), (1, lo_z, -1.0), (1, hi_z, 1.0)]
        best = None
        for k, b, sgn in faces:
            if sgn * (trial[k] - b) <= 0 or sgn * (y[k] - b) >= 0:
                continue
            a = brentq(lambda s: sgn * (_rk4(f, y, s * left)[k] - b), 0.0, 1.0, xtol=1e-14, rtol=1e-15)
            if best is None or a < best[0]:
                best = (a, k, b)
        if best is None:
            return trial
        a, k, b = best
        y = _rk4(f, y, a * left)
        y[k] = b
        left = left - a * left
    return y


def trace_ray_time(model: Grid2D, start: RayState, dt: float = 1e-3, t_max: float = 1.0,
                   z_stop: float | None = None, tol: float = 1e-6) -> RayPath:
    """Integrate the Hamilton system in time with fixed-step RK4.

    Stops at ``t_max``, at lateral/vertical domain exit, or (when ``z_stop`` is
    given) exactly at the crossing of the depth ``z_stop``.
    """
    v = Velocity(model)
    if start.tau == 0:
        raise RayContractError("tau must be nonzero")
    if not v.inside(start.x, start.z):
        raise EmptyPathError("start outside the model")
    if relative_drift(v, start.x, start.z, start.xi, start.zeta, start.tau) > tol:
        raise RayContractError("start state is off the characteristic set P = 0")
    tau = start.tau
    y = np.array([start.x, start.z, start.t, start.xi, start.zeta], dtype=float)
    out = [y]
    status = "t_max"
    nsteps = int(np.ceil(t_max / dt - 1e-9))
    for k in range(nsteps):
        h = min(dt, t_max - k * dt)
        y_new = _advance(v, y, h, tau)
        if z_stop is not None and (y_new[1] - z_stop) * (y[1] - z_stop) <= 0 and y_new[1] != y[1]:
            frac = brentq(lambda a: _advance(v, y, a * h, tau)[1] - z_stop, 0.0, 1.0, xtol=1e-15, rtol=1e-15)
            y_new = _advance(v, y, frac * h, tau)
            y_new[1] = z_stop
            out.append(y_new)
            status = "z_stop"
            break
        if not v.inside(y_new[0], y_new[1]):
            status = "exit"
            break
        out.append(y_new)
        y = y_new
    if len(out) == 1 and status == "exit":
        raise EmptyPathError("ray leaves the model on the first step")
    a = np.array(out)
    return RayPath(a[:, 0], a[:, 1], a[:, 2], a[:, 3], a[:, 4], float(tau), status)


# ---------------------------------------------------------------------------
# depth parameterization


def _rhs_depth(v, x, z, xi, tau, cell=None):
    c, cx, _ = v(x, z, cell)
    arg = (tau / c) ** 2 - xi**2
    bad = arg <= 0
    b = np.sqrt(np.where(bad, 1.0, arg))
    zeta = np.sign(tau) * b
    return (xi / zeta, -tau / (zeta * c * c), -(tau**2) * cx / (zeta * c**3)), bad


def _depth_step(v, z, h, x, t, xi, tau, cell=None):
    """One RK4 step in z of size ``h`` (negative: upward).  Returns state and turn mask."""
    (a1, b1, c1), bad1 = _rhs_depth(v, x, z, xi, tau, cell)
    (a2, b2, c2), bad2 = _rhs_depth(v, x + 0.5 * h * a1, z + 0.5 * h, xi + 0.5 * h * c1, tau, cell)
    (a3, b3, c3), bad3 = _rhs_depth(v, x + 0.5 * h * a2, z + 0.5 * h, xi + 0.5 * h * c2, tau, cell)
    (a4, b4, c4), bad4 = _rhs_depth(v, x + h * a3, z + h, xi + h * c3, tau, cell)
    x = x + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
    t = t + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
    xi = xi + h / 6 * (c1 + 2 * c2 + 2 * c3 + c4)
    return x, t, xi, bad1 | bad2 | bad3 | bad4


def _depth_advance(v, z, h, x, t, xi, tau):
    """Scalar RK4 over ``h`` in z, split at patch faces like :func:`_advance`."""
    left = h
    bad = False
    for _ in range(64):
        if left == 0 or bad:
            break
        sgn = np.sign(left)
        (slope, _, _), bad = _rhs_depth(v, x, z, xi, tau)
        if bad:
            break
        cell = v.face_cell(x, z + 1e-9 * sgn, slope) or v.cell_of(x + 1e-9 * sgn * slope, z + 1e-9 * sgn)
        lo_x, hi_x, lo_z, hi_z = v.cell_bounds(*cell)
        span = left
        if z + span < lo_z:
            span = lo_z - z
        elif z + span > hi_z:
            span = hi_z - z
        xn, tn, xin, bad = _depth_step(v, z, span, x, t, xi, tau, cell)
        face = lo_x if xn < lo_x < x else hi_x if x < hi_x < xn else None
        if face is not None and not bad:
            def g(a):
                return _depth_step(v, z, a * span, x, t, xi, tau, cell)[0] - face

            span *= brentq(g, 0.0, 1.0, xtol=1e-14, rtol=1e-15)
            xn, tn, xin, bad = _depth_step(v, z, span, x, t, xi, tau, cell)
            xn = face
        x, t, xi = xn, tn, xin
        z = z + span
        left = left - span
    return x, t, xi, bad


def _depth_levels(z0, z_end, dz):
    n = int(np.ceil((z0 - z_end) / dz - 1e-9))
    zs = z0 - dz * np.arange(n + 1)
    zs[-1] = z_end
    return zs


def vertical_wavenumber(v, x, z, xi, tau):
    c = v(x, z)[0]
    return np.sign(tau) * np.sqrt(np.maximum((tau / c) ** 2 - xi**2, 0.0))


def trace_ray_depth(model: Grid2D, x0: float, z0: float, xi0: float, tau: float,
                    dz: float = 2.0, z_end: float = 0.0, t0: float = 0.0) -> RayPath:
    """Trace the upgoing ray from (x0, z0) to depth ``z_end`` < ``z0``."""
    v = Velocity(model)
    if not z_end < z0:
        raise RayContractError("z_end must be above z0")
    if tau == 0:
        raise RayContractError("tau must be nonzero")
    c0 = float(v(x0, z0)[0])
    if (tau / c0) ** 2 - xi0**2 <= 0:
        raise TurningPointError(z0, f"start is not propagating (|xi0| >= |tau|/c at z = {z0})")
    zs = _depth_levels(z0, z_end, dz)
    xs, ts, xis = [x0], [t0], [xi0]
    x, t, xi = np.float64(x0), np.float64(t0), np.float64(xi0)
    status = "ok"
    for k in range(1, len(zs)):
        x_new, t_new, xi_new, bad = _depth_advance(v, zs[k - 1], zs[k] - zs[k - 1], x, t, xi, tau)
        if bad or (tau / v(x_new, zs[k])[0]) ** 2 - xi_new**2 <= 0:
            raise TurningPointError(float(zs[k]))
        if not v.inside(x_new, zs[k]):
            status = "exit"
            break
        x, t, xi = x_new, t_new, xi_new
        xs.append(x)
        ts.append(t)
        xis.append(xi)
    n = len(xs)
    xs = np.array(xs, dtype=float)
    xis = np.array(xis, dtype=float)
    z = zs[:n].astype(float)
    zeta = vertical_wavenumber(v, xs, z, xis, tau)
    return RayPath(xs, z, np.array(ts, dtype=float), xis, zeta, float(tau), status)


def trace_depth_batch(model_or_velocity, x0, z0, xi0, tau, dz=2.0, z_end=0.0):
    """Vectorized upgoing depth tracing; returns end states and a status code.

    status: 0 reached ``z_end``, 1 turned, 2 left the lateral domain.
    """
    v = model_or_velocity if isinstance(model_or_velocity, Velocity) else Velocity(model_or_velocity)
    x = np.array(x0, dtype=float)
    xi = np.array(xi0, dtype=float)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), x.shape).copy()
    x, xi = np.broadcast_arrays(x, xi)
    x = x.copy()
    xi = xi.copy()
    t = np.zeros_like(x)
    status = np.zeros(x.shape, dtype=int)
    c = v(x, z0)[0]
    status[(tau / c) ** 2 - xi**2 <= 0] = 1
    zs = _depth_levels(z0, z_end, dz)
    for k in range(1, len(zs)):
        live = status == 0
        if not live.any():
            break
        xn, tn, xin, bad = _depth_step(v, zs[k - 1], zs[k] - zs[k - 1], x[live], t[live], xi[live], tau[live])
        cn = v(xn, zs[k])[0]
        turned = bad | ((tau[live] / cn) ** 2 - xin**2 <= 0)
        out = ~v.inside(xn, zs[k])
        idx = np.flatnonzero(live)
        status[idx[turned]] = 1
        status[idx[out & ~turned]] = 2
        ok = ~(turned | out)
        x[idx[ok]], t[idx[ok]], xi[idx[ok]] = xn[ok], tn[ok], xin[ok]
    return x, t, xi, status


# ---------------------------------------------------------------------------
# DSR rays and the vertical-wavenumber symbol


def gamma_symbol(s, r, sigma, rho, tau, z, model) -> float:
    """sgn(tau) [sqrt(tau^2/c(s,z)^2 - sigma^2) + sqrt(tau^2/c(r,z)^2 - rho^2)]."""
    v = model if isinstance(model, Velocity) else Velocity(model)
    cs = v(s, z)[0]
    cr = v(r, z)[0]
    a = (tau / cs) ** 2 - np.asarray(sigma) ** 2
    b = (tau / cr) ** 2 - np.asarray(rho) ** 2
    if np.any(a < 0) or np.any(b < 0):
        raise GammaDomainError("evanescent argument in gamma_symbol")
    out = np.sign(tau) * (np.sqrt(a) + np.sqrt(b))
    return float(out) if np.ndim(out) == 0 else out


def invert_gamma(s, r, sigma, rho, zeta, z, model, rtol=1e-13) -> float:
    """Solve gamma_symbol(s, r, sigma, rho, tau, z) = zeta for tau on the monotone branch."""
    v = model if isinstance(model, Velocity) else Velocity(model)
    cs = float(v(s, z)[0])
    cr = float(v(r, z)[0])
    sgn = 1.0 if zeta > 0 else -1.0
    target = abs(zeta)
    tau_lo = max(abs(sigma) * cs, abs(rho) * cr)

    def g(tau):
        return np.sqrt(max((tau / cs) ** 2 - sigma**2, 0.0)) + np.sqrt(max((tau / cr) ** 2 - rho**2, 0.0))

    if target <= g(tau_lo) or zeta == 0:
        raise GammaInversionError("zeta is not above the branch minimum")
    hi = max(tau_lo, target * max(cs, cr)) * 2.0 + 1e-300
    while g(hi) < target:
        hi *= 2.0
    tau = brentq(lambda x: g(x) - target, tau_lo, hi, xtol=1e-300, rtol=max(rtol, 4 * np.finfo(float).eps), maxiter=500)
    return sgn * tau


def invert_gamma_batch(cs, cr, sigma, rho, zeta, iters=200):
    """Vectorized bisection inverse of the constant-coefficient gamma; NaN where no root."""
    sigma, rho, zeta = np.broadcast_arrays(np.asarray(sigma, float), np.asarray(rho, float), np.asarray(zeta, float))
    cs = np.broadcast_to(cs, sigma.shape)
    cr = np.broadcast_to(cr, sigma.shape)
    target = np.abs(zeta)
    lo = np.maximum(np.abs(sigma) * cs, np.abs(rho) * cr)

    def g(tau):
        return np.sqrt(np.maximum((tau / cs) ** 2 - sigma**2, 0)) + np.sqrt(np.maximum((tau / cr) ** 2 - rho**2, 0))

    ok = (target > g(lo)) & (zeta != 0)
    hi = 2.0 * np.maximum(lo, target * np.maximum(cs, cr)) + 1e-300
    for _ in range(200):
        need = ok & (g(hi) < target)
        if not need.any():
            break
        hi = np.where(need, 2 * hi, hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        up = g(mid) < target
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    tau = 0.5 * (lo + hi) * np.sign(zeta)
    return np.where(ok, tau, np.nan)


@dataclass(frozen=True)
class DsrRayState:
    source_leg: RayState
    receiver_leg: RayState

    def __post_init__(self):
        if self.source_leg.z != self.receiver_leg.z or self.source_leg.tau != self.receiver_leg.tau:
            raise RayContractError("DSR legs must share depth and tau")


@dataclass
class DsrPath:
    source: RayPath
    receiver: RayPath
    gamma: np.ndarray

    @property
    def z(self):
        return self.source.z

    @property
    def t_total(self):
        return self.source.t + self.receiver.t


def trace_dsr_ray(model, state: DsrRayState, dz=2.0, z_end=0.0, check_tol=1e-10) -> DsrPath:
    s, r = state.source_leg, state.receiver_leg
    ps = trace_ray_depth(model, s.x, s.z, s.xi, s.tau, dz, z_end, t0=s.t)
    pr = trace_ray_depth(model, r.x, r.z, r.xi, r.tau, dz, z_end, t0=r.t)
    n = min(len(ps), len(pr))
    if n < len(ps) or n < len(pr):
        ps = RayPath(*(a[:n] for a in (ps.x, ps.z, ps.t, ps.xi, ps.zeta)), ps.tau, "exit")
        pr = RayPath(*(a[:n] for a in (pr.x, pr.z, pr.t, pr.xi, pr.zeta)), pr.tau, "exit")
    v = Velocity(model)
    gamma = np.array([gamma_symbol(ps.x[i], pr.x[i], ps.xi[i], pr.xi[i], ps.tau, ps.z[i], v) for i in range(n)])
    pair = ps.zeta + pr.zeta
    if np.any(np.abs(pair - gamma) > check_tol * np.abs(gamma)):
        raise RayContractError("DSR vertical wavenumber differs from gamma")
    return DsrPath(ps, pr, gamma)


def check_dsr_assumption(path, epsilon: float):
    """Return ``(passed, worst_slope)``; the slope is min over steps of -dz/dt."""
    paths = [path.source, path.receiver] if isinstance(path, DsrPath) else [path]
    worst = np.inf
    for p in paths:
        if len(p) < 2:
            continue
        dz = np.diff(p.z)
        dt = np.diff(p.t)
        worst = min(worst, float(np.min(-dz / np.abs(dt))))
    if not np.isfinite(worst):
        raise ValueError("path has fewer than two samples")
    return worst > epsilon, worst


# ---------------------------------------------------------------------------
# event prediction


@dataclass
class EventTable:
    x: np.ndarray
    z: np.ndarray
    s: np.ndarray
    r: np.ndarray
    t_total: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray
    tau: float = 1.0
    columns: tuple = field(default=("x", "z", "s", "r", "t_total", "sigma", "rho"), repr=False)

    def __len__(self):
        return len(self.s)

    def lookup(self, s, r):
        hit = np.flatnonzero(np.isclose(self.s, s) & np.isclose(self.r, r))
        return int(hit[0]) if hit.size else None

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in zip(self.x, self.z, self.s, self.r, self.t_total, self.sigma, self.rho):
                w.writerow([f"{v:.17g}" for v in row])


def shoot_to_surface(model, x, z, targets, tau=1.0, dz=2.0, n_fan=201, xtol=1e-7, max_iter=40):
    """Find the upgoing leg from (x, z) landing at each target surface position.

    Returns ``(t, xi_surface, ok)`` arrays aligned with ``targets``.
    """
    v = Velocity(model)
    targets = np.asarray(targets, dtype=float)
    c = float(v(x, z)[0])
    kmax = abs(tau) / c
    xi_fan = kmax * np.sin(np.linspace(-0.5 * np.pi, 0.5 * np.pi, n_fan + 2)[1:-1])
    xl, _, _, st = trace_depth_batch(v, np.full(n_fan, x), z, xi_fan, tau, dz, 0.0)
    good = st == 0
    t_out = np.full(targets.shape, np.nan)
    xi_out = np.full(targets.shape, np.nan)
    ok = np.zeros(targets.shape, dtype=bool)
    if good.sum() < 2:
        return t_out, xi_out, ok
    xg, kg = xl[good], xi_fan[good]
    # landing position decreases with xi (dx/dz = xi/zeta, z decreasing)
    order = np.argsort(xg)
    xg, kg = xg[order], kg[order]
    if np.any(np.diff(xg) <= 0):
        keep = np.concatenate([[True], np.diff(xg) > 0])
        xg, kg = xg[keep], kg[keep]
    inside = (targets >= xg[0]) & (targets <= xg[-1])
    if not inside.any():
        return t_out, xi_out, ok
    tg = targets[inside]
    lo_i = np.clip(np.searchsorted(xg, tg) - 1, 0, len(xg) - 2)
    a_lo, a_hi = kg[lo_i], kg[lo_i + 1]
    f_lo, f_hi = xg[lo_i] - tg, xg[lo_i + 1] - tg
    # safeguarded secant (Illinois) on the bracket
    k = np.where(f_hi != f_lo, a_lo - f_lo * (a_hi - a_lo) / (f_hi - f_lo), a_lo)
    side = np.zeros(tg.shape, dtype=int)
    for _ in range(max_iter):
        xk, tk, xik, sk = trace_depth_batch(v, np.full(tg.shape, x), z, k, tau, dz, 0.0)
        fk = xk - tg
        done = (sk == 0) & (np.abs(fk) < xtol)
        if done.all():
            break
        same_lo = np.sign(fk) == np.sign(f_lo)
        a_lo = np.where(same_lo, k, a_lo)
        f_new_lo = np.where(same_lo, fk, f_lo)
        f_new_hi = np.where(~same_lo, fk, f_hi)
        a_hi = np.where(~same_lo, k, a_hi)
        f_new_hi = np.where(same_lo & (side == 1), 0.5 * f_new_hi, f_new_hi)
        f_new_lo = np.where(~same_lo & (side == -1), 0.5 * f_new_lo, f_new_lo)
        side = np.where(same_lo, 1, -1)
        f_lo, f_hi = f_new_lo, f_new_hi
        k_new = np.where(f_hi != f_lo, a_lo - f_lo * (a_hi - a_lo) / (f_hi - f_lo), 0.5 * (a_lo + a_hi))
        k = np.where(done, k, k_new)
    xk, tk, xik, sk = trace_depth_batch(v, np.full(tg.shape, x), z, k, tau, dz, 0.0)
    good_t = (sk == 0) & (np.abs(xk - tg) < 1e3 * xtol)
    idx = np.flatnonzero(inside)
    t_out[idx[good_t]] = tk[good_t]
    xi_out[idx[good_t]] = xik[good_t]
    ok[idx[good_t]] = True
    return t_out, xi_out, ok


def predict_events(model, scatterer, s_positions, r_positions=None, tau=1.0, dz=2.0) -> EventTable:
    """Sample the canonical relation for a point scatterer.

    Each leg is found by shooting from the scatterer to the surface; all (s, r)
    pairs whose legs both reach the surface are tabulated.
    """
    x, z = scatterer
    if not z > 0:
        raise RayContractError("scatterer must lie below the surface")
    s_positions = np.asarray(s_positions, dtype=float)
    r_positions = s_positions if r_positions is None else np.asarray(r_positions, dtype=float)
    all_pos = np.unique(np.concatenate([s_positions, r_positions]))
    t, xi, ok = shoot_to_surface(model, x, z, all_pos, tau, dz)
    lut = {p: (ti, ki) for p, ti, ki, o in zip(all_pos, t, xi, ok) if o}
    rows = []
    for s in s_positions:
        if s not in lut:
            continue
        for r in r_positions:
            if r not in lut:
                continue
            rows.append((x, z, s, r, lut[s][0] + lut[r][0], lut[s][1], lut[r][1]))
    a = np.array(rows, dtype=float).reshape(-1, 7)
    return EventTable(*(a[:, i] for i in range(7)), tau=float(tau))
