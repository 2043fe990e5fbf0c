"""Sampled grids, the WEGRID01 container, spectral conventions and tapers.

Time/frequency convention used everywhere in the package::

    f_hat(w) = sum_t f(t) exp(-i w t) dt
    f(t)     = (1/pi) sum_{w > 0} Re[f_hat(w) exp(+i w t)] dw

With this pair ``-i d/dt`` acts as multiplication by ``w`` on spectra, and the
same holds for ``-i d/dx`` and the horizontal wavenumber.  Only positive
frequencies are stored; real signals are recovered by Hermitian symmetry.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"WEGRID01"
DTYPE_REAL = 0
DTYPE_COMPLEX = 1
AXIS_LABELS = ("x", "z", "t", "s", "r", "p", "omega", "h")

# Sign of the exponent in the inverse time transform.
INVERSE_KERNEL_SIGN = +1


class ContainerFormatError(ValueError):
    pass


class ContainerLengthError(ValueError):
    pass


class DataError(ValueError):
    pass


class BandError(ValueError):
    pass


@dataclass(frozen=True)
class Axis:
    n: int
    delta: float
    origin: float = 0.0
    label: str = "x"

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError(f"axis {self.label!r}: n must be >= 1, got {self.n}")
        if not self.delta > 0:
            raise ValueError(f"axis {self.label!r}: delta must be > 0, got {self.delta}")
        if not self.label or len(self.label) > 8 or not self.label.isascii():
            raise ValueError(f"bad axis label {self.label!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "origin", float(self.origin))

    @property
    def values(self) -> np.ndarray:
        return self.origin + self.delta * np.arange(self.n)

    @property
    def end(self) -> float:
        return self.origin + self.delta * (self.n - 1)

    def index(self, coord: float) -> int:
        """Nearest sample index of ``coord`` (clipped to the axis)."""
        i = int(round((coord - self.origin) / self.delta))
        return min(max(i, 0), self.n - 1)


def _check_values(axes, values, real_only=False):
    shape = tuple(a.n for a in axes)
    values = np.asarray(values)
    if values.shape != shape:
        raise ValueError(f"values shape {values.shape} does not match axes {shape}")
    if real_only and np.iscomplexobj(values):
        raise DataError("real samples required")
    if not np.all(np.isfinite(values)):
        raise DataError("non-finite samples")
    dtype = np.complex128 if np.iscomplexobj(values) else np.float64
    values = np.array(values, dtype=dtype, order="C")
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class Grid2D:
    """Regular 2-D field, e.g. c0(x, z), an image, or a (s, r) slice."""

    axes: tuple[Axis, Axis]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.axes) != 2:
            raise ValueError("Grid2D needs two axes")
        object.__setattr__(self, "axes", tuple(self.axes))
        object.__setattr__(self, "values", _check_values(self.axes, self.values))

    @property
    def shape(self):
        return self.values.shape

    def with_values(self, values) -> "Grid2D":
        return Grid2D(self.axes, values)


@dataclass(frozen=True)
class DataCube:
    """Reflection data d(s, r, t)."""

    axes: tuple[Axis, Axis, Axis]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        axes = tuple(self.axes)
        if len(axes) != 3 or tuple(a.label for a in axes) != ("s", "r", "t"):
            raise ValueError("DataCube axes must be labeled (s, r, t)")
        if axes[2].origin != 0.0:
            raise ValueError("DataCube time axis must start at t = 0")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", _check_values(axes, self.values, real_only=True))

    @property
    def s(self) -> Axis:
        return self.axes[0]

    @property
    def r(self) -> Axis:
        return self.axes[1]

    @property
    def t(self) -> Axis:
        return self.axes[2]

    def with_values(self, values) -> "DataCube":
        return DataCube(self.axes, values)


@dataclass(frozen=True)
class SpectrumCube:
    """Positive-frequency spectrum D(s, r, w) on exact DFT bins of a time axis."""

    axes: tuple[Axis, Axis, Axis]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        axes = tuple(self.axes)
        if len(axes) != 3 or tuple(a.label for a in axes) != ("s", "r", "omega"):
            raise ValueError("SpectrumCube axes must be labeled (s, r, omega)")
        if axes[2].origin <= 0:
            raise ValueError("SpectrumCube frequencies must be > 0")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", _check_values(axes, self.values))

    @property
    def omega(self) -> np.ndarray:
        return self.axes[2].values

    def with_values(self, values) -> "SpectrumCube":
        return SpectrumCube(self.axes, values)


# ---------------------------------------------------------------------------
# container

_AXIS_STRUCT = struct.Struct("<Qdd8s")


def write_container(value, path) -> None:
    axes = value.axes
    values = np.asarray(value.values)
    if not np.all(np.isfinite(values)):
        raise DataError("refusing to write non-finite samples")
    if not 1 <= len(axes) <= 4:
        raise ValueError("container holds 1 to 4 dimensions")
    is_complex = np.iscomplexobj(values)
    parts = [MAGIC, struct.pack("<I", len(axes))]
    for a in axes:
        parts.append(_AXIS_STRUCT.pack(a.n, a.delta, a.origin, a.label.encode("ascii").ljust(8)))
    parts.append(struct.pack("<I", DTYPE_COMPLEX if is_complex else DTYPE_REAL))
    if is_complex:
        payload = np.ascontiguousarray(values, dtype="<c16").tobytes()
    else:
        payload = np.ascontiguousarray(values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))
        fh.write(payload)


def read_raw_container(path):
    """Return ``(axes, values)`` exactly as stored."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:8] != MAGIC:
        raise ContainerFormatError(f"{path}: bad magic {data[:8]!r}")
    (ndim,) = struct.unpack_from("<I", data, 8)
    if not 1 <= ndim <= 4:
        raise ContainerFormatError(f"{path}: bad ndim {ndim}")
    off = 12
    axes = []
    for _ in range(ndim):
        if len(data) < off + _AXIS_STRUCT.size:
            raise ContainerLengthError(f"{path}: truncated header")
        n, delta, origin, label = _AXIS_STRUCT.unpack_from(data, off)
        off += _AXIS_STRUCT.size
        axes.append(Axis(n, delta, origin, label.decode("ascii").rstrip(" ")))
    if len(data) < off + 4:
        raise ContainerLengthError(f"{path}: truncated header")
    (dtype,) = struct.unpack_from("<I", data, off)
    off += 4
    if dtype not in (DTYPE_REAL, DTYPE_COMPLEX):
        raise ContainerFormatError(f"{path}: unknown dtype code {dtype}")
    count = int(np.prod([a.n for a in axes]))
    itemsize = 16 if dtype == DTYPE_COMPLEX else 8
    if len(data) - off != count * itemsize:
        raise ContainerLengthError(
            f"{path}: payload has {len(data) - off} bytes, expected {count * itemsize}"
        )
    np_dtype = "<c16" if dtype == DTYPE_COMPLEX else "<f8"
    values = np.frombuffer(data, dtype=np_dtype, offset=off).reshape([a.n for a in axes])
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: non-finite samples")
    return tuple(axes), values.astype(values.dtype.newbyteorder("="))


def read_container(path):
    axes, values = read_raw_container(path)
    labels = tuple(a.label for a in axes)
    if labels == ("s", "r", "t"):
        return DataCube(axes, values)
    if labels == ("s", "r", "omega"):
        return SpectrumCube(axes, values)
    if len(axes) == 2:
        return Grid2D(axes, values)
    if len(axes) == 3:
        # gathers and sunk fields: return plain (axes, values)
        return axes, values
    raise ContainerFormatError(f"{path}: no typed value for axes {labels}")


# ---------------------------------------------------------------------------
# spectral transforms


def frequency_bins(t_axis: Axis, band) -> np.ndarray:
    """Indices of the DFT bins of ``t_axis`` falling inside ``band`` (rad/s)."""
    w_min, w_max = band
    nyquist = np.pi / t_axis.delta
    if not (0 < w_min < w_max <= nyquist * (1 + 1e-12)):
        raise BandError(f"band ({w_min}, {w_max}) outside (0, Nyquist={nyquist:.6g}]")
    dw = 2 * np.pi / (t_axis.n * t_axis.delta)
    j = np.arange(int(np.ceil(w_min / dw - 1e-9)), int(np.floor(w_max / dw + 1e-9)) + 1)
    j = j[(j > 0) & (j <= t_axis.n // 2)]
    if j.size == 0:
        raise BandError(f"band ({w_min}, {w_max}) contains no frequency bin (dw={dw:.6g})")
    return j


def omega_axis(t_axis: Axis, band) -> Axis:
    j = frequency_bins(t_axis, band)
    dw = 2 * np.pi / (t_axis.n * t_axis.delta)
    return Axis(j.size, dw, j[0] * dw, "omega")


def time_to_freq(d: DataCube, band) -> SpectrumCube:
    t = d.t
    j = frequency_bins(t, band)
    spec = np.fft.rfft(d.values, axis=2)[:, :, j] * t.delta
    dw = 2 * np.pi / (t.n * t.delta)
    return SpectrumCube((d.s, d.r, Axis(j.size, dw, j[0] * dw, "omega")), spec)


def freq_to_time(s: SpectrumCube, nt: int, dt: float) -> DataCube:
    w = s.axes[2]
    dw = 2 * np.pi / (nt * dt)
    if not np.isclose(w.delta, dw, rtol=1e-9):
        raise BandError(f"spectrum spacing {w.delta} is not the bin spacing {dw} of nt={nt}, dt={dt}")
    j0 = int(round(w.origin / dw))
    if j0 < 1 or j0 + w.n - 1 > nt // 2:
        raise BandError("spectrum bins outside the positive half of the time DFT")
    full = np.zeros(s.values.shape[:2] + (nt // 2 + 1,), dtype=np.complex128)
    full[:, :, j0 : j0 + w.n] = s.values
    if nt % 2 == 0 and j0 + w.n - 1 == nt // 2:
        # irfft keeps only the real part of the Nyquist bin and does not double it
        full[:, :, nt // 2] *= 2
    d = np.fft.irfft(full, n=nt, axis=2) / dt
    return DataCube((s.axes[0], s.axes[1], Axis(nt, dt, 0.0, "t")), d)


# ---------------------------------------------------------------------------
# tapers


def build_taper(n: int, flat_fraction: float) -> np.ndarray:
    """Symmetric cosine-squared taper, flat over the central ``flat_fraction``."""
    if not 0.0 <= flat_fraction <= 1.0:
        raise ValueError("flat_fraction must lie in [0, 1]")
    if n <= 0:
        return np.zeros(0)
    u = np.abs(2 * np.arange(n) - (n - 1)) / n
    w = np.ones(n)
    if flat_fraction < 1.0:
        edge = u > flat_fraction
        w[edge] = np.cos(0.5 * np.pi * (u[edge] - flat_fraction) / (1 - flat_fraction)) ** 2
    return w


def ramp(x, lo, hi):
    """Smooth step: 0 for x <= lo, 1 for x >= hi, cosine-squared in between."""
    x, lo, hi = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, lo, hi)))
    width = hi - lo
    flat = width <= 0
    u = np.clip((x - lo) / np.where(flat, 1.0, width), 0.0, 1.0)
    out = np.sin(0.5 * np.pi * u) ** 2
    out = np.where(flat, (x >= hi).astype(float), out)
    return out if out.ndim else float(out)


def export_csv_lines(axes, values, fmt="{:.17g}"):
    """Yield ``coord1,...,value`` lines, last axis fastest."""
    coords = [a.values for a in axes]
    flat = np.asarray(values).reshape(-1)
    grids = np.meshgrid(*coords, indexing="ij")
    cols = [g.reshape(-1) for g in grids]
    complex_ = np.iscomplexobj(flat)
    for i in range(flat.size):
        c = ",".join(fmt.format(col[i]) for col in cols)
        if complex_:
            yield f"{c},{fmt.format(flat[i].real)},{fmt.format(flat[i].imag)}"
        else:
            yield f"{c},{fmt.format(flat[i])}"
