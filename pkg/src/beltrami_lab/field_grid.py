"""Uniform periodic grids carrying complex scalar fields.

Samples are stored as ``values[ix, iy]`` at the lattice points
``origin - side/2 * (1 + 1j) + h * (ix + 1j * iy)``, so axis 0 runs along
``x`` and axis 1 along ``y``. Derivatives are spectral and assume the
sampled field is periodic on the cell.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, DomainError

CSV_HEADER = ("ix", "iy", "x", "y", "re", "im")

# Sub-cells per axis used to weight lattice cells cut by a disk boundary.
DISK_SUBSAMPLES = 16


@dataclass(frozen=True)
class GridSpec:
    n: int = 128
    side: float = 2 * math.pi
    origin: complex = 0j

    def __post_init__(self):
        n = self.n
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
            raise ConfigurationError(f"n must be an integer, got {n!r}")
        if n < 16 or n & (n - 1):
            raise ConfigurationError(f"n must be a power of two >= 16, got {n}")
        if not (math.isfinite(self.side) and self.side > 0):
            raise ConfigurationError(f"side must be positive, got {self.side}")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "side", float(self.side))
        object.__setattr__(self, "origin", complex(self.origin))

    @property
    def h(self) -> float:
        """Lattice spacing."""
        return self.side / self.n

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @property
    def corner(self) -> complex:
        return self.origin - 0.5 * self.side * (1 + 1j)

    def axes(self):
        ticks = np.arange(self.n) * self.h
        return self.corner.real + ticks, self.corner.imag + ticks

    def contains_disk(self, center: complex, r: float) -> bool:
        """True if the closed disk lies in the closed cell."""
        half = 0.5 * self.side
        off = complex(center) - self.origin
        return abs(off.real) + r <= half and abs(off.imag) + r <= half


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Samples of a (possibly real-valued) function on a :class:`GridSpec`."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, copy=True)
        if not np.iscomplexobj(arr):
            arr = arr.astype(float)
        n = self.spec.n
        if arr.shape != (n, n):
            raise ConfigurationError(f"expected {(n, n)} samples, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field contains non-finite samples")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def real(self) -> "ComplexField":
        return ComplexField(self.spec, self.values.real)

    @property
    def imag(self) -> "ComplexField":
        return ComplexField(self.spec, self.values.imag)

    def conj(self) -> "ComplexField":
        return ComplexField(self.spec, np.conj(self.values))

    def mean(self) -> complex:
        return complex(self.values.mean())

    def _coerce(self, other):
        if isinstance(other, ComplexField):
            check_same_grid(self, other)
            return other.values
        return other

    def __add__(self, other):
        return ComplexField(self.spec, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ComplexField(self.spec, self.values - self._coerce(other))

    def __rsub__(self, other):
        return ComplexField(self.spec, self._coerce(other) - self.values)

    def __mul__(self, other):
        return ComplexField(self.spec, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ComplexField(self.spec, -self.values)


def check_same_grid(*fields) -> GridSpec:
    specs = {f.spec for f in fields}
    if len(specs) != 1:
        raise ConfigurationError("fields live on different grids")
    return specs.pop()


def as_array(obj) -> np.ndarray:
    return obj.values if isinstance(obj, ComplexField) else np.asarray(obj)


def coordinate_field(spec: GridSpec) -> ComplexField:
    """The identity map ``z`` sampled on the lattice."""
    x, y = spec.axes()
    return ComplexField(spec, x[:, None] + 1j * y[None, :])


def constant_field(spec: GridSpec, value) -> ComplexField:
    return ComplexField(spec, np.full((spec.n, spec.n), value))


@lru_cache(maxsize=32)
def wavenumbers(spec: GridSpec):
    """Angular wavenumbers ``(kx, ky)`` broadcast to the ``(n, n)`` layout."""
    k = 2 * np.pi / spec.side * sfft.fftfreq(spec.n, d=1.0 / spec.n)
    kx = k[:, None] * np.ones((1, spec.n))
    ky = np.ones((spec.n, 1)) * k[None, :]
    kx.setflags(write=False)
    ky.setflags(write=False)
    return kx, ky


@lru_cache(maxsize=32)
def wirtinger_symbols(spec: GridSpec):
    """Fourier multipliers of d/dz and d/dzbar.

    The Nyquist rows keep their (signed) wavenumber so that d/dzbar is
    invertible on every non-zero mode.
    """
    kx, ky = wavenumbers(spec)
    dz = 0.5 * (1j * kx + ky)
    dzbar = 0.5 * (1j * kx - ky)
    dz.setflags(write=False)
    dzbar.setflags(write=False)
    return dz, dzbar


def apply_multiplier(values: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    return sfft.ifft2(sfft.fft2(values) * symbol)


def _spectral(field: ComplexField, symbol, keep_real=False) -> ComplexField:
    out = apply_multiplier(field.values, symbol)
    if keep_real and not np.iscomplexobj(field.values):
        # drops the odd Nyquist component, which has no real derivative
        out = out.real
    return ComplexField(field.spec, out)


def d_z(field: ComplexField) -> ComplexField:
    """Spectral Wirtinger derivative (d/dx - i d/dy) / 2."""
    return _spectral(field, wirtinger_symbols(field.spec)[0])


def d_zbar(field: ComplexField) -> ComplexField:
    """Spectral Wirtinger derivative (d/dx + i d/dy) / 2."""
    return _spectral(field, wirtinger_symbols(field.spec)[1])


def d_x(field: ComplexField) -> ComplexField:
    kx, _ = wavenumbers(field.spec)
    return _spectral(field, 1j * kx, keep_real=True)


def d_y(field: ComplexField) -> ComplexField:
    _, ky = wavenumbers(field.spec)
    return _spectral(field, 1j * ky, keep_real=True)


def l2_norm(field) -> float:
    """Cell-area weighted L2 norm over the whole cell."""
    spec = field.spec
    return float(np.sqrt(np.sum(np.abs(field.values) ** 2) * spec.cell_area))


def sup_norm(field) -> float:
    return float(np.max(np.abs(as_array(field))))


def relative_l2(a, b) -> float:
    """||a - b|| / ||b|| on sample arrays (uniform weights cancel)."""
    a, b = as_array(a), as_array(b)
    den = np.linalg.norm(b)
    num = np.linalg.norm(a - b)
    if den == 0:
        return float(num)
    return float(num / den)


def disk_weights(spec: GridSpec, center: complex, r: float) -> np.ndarray:
    """Fraction of each lattice cell covered by the disk D(center, r).

    Interior and exterior cells get exact 0/1 weights; cells cut by the
    circle are resolved on a DISK_SUBSAMPLES^2 sub-lattice.
    """
    if not r > 0:
        raise DomainError(f"disk radius must be positive, got {r}")
    if not spec.contains_disk(center, 2 * r):
        raise DomainError(f"disk D({center}, 2*{r}) leaves the cell")
    h = spec.h
    z = coordinate_field(spec).values
    dist = np.abs(z - center)
    half_diag = h / math.sqrt(2)
    w = (dist <= r - half_diag).astype(float)
    cut = np.nonzero((dist > r - half_diag) & (dist < r + half_diag))
    if cut[0].size:
        m = DISK_SUBSAMPLES
        offs = (np.arange(m) + 0.5) / m - 0.5
        sub = (offs[:, None] + 1j * offs[None, :]).ravel() * h
        pts = z[cut][:, None] + sub[None, :]
        w[cut] = np.mean(np.abs(pts - center) < r, axis=1)
    return w


def disk_integral(field, center: complex, r: float, power: int = 1) -> complex:
    spec = field.spec
    w = disk_weights(spec, center, r)
    vals = field.values if power == 1 else np.abs(field.values) ** power
    return complex(np.sum(w * vals) * spec.cell_area)


def disk_mean(field, center: complex, r: float) -> complex:
    """(1/r^2) times the integral over D(center, r)."""
    return disk_integral(field, center, r) / r**2


def disk_l2(field, center: complex, r: float) -> float:
    """[(1/r^2) times the integral of |w|^2 over D(center, r)]^(1/2)."""
    return math.sqrt(disk_integral(field, center, r, power=2).real / r**2)


def dump_csv(field: ComplexField, path) -> Path:
    path = Path(path)
    spec = field.spec
    x, y = spec.axes()
    vals = np.asarray(field.values, dtype=complex)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for ix in range(spec.n):
            for iy in range(spec.n):
                v = vals[ix, iy]
                writer.writerow(
                    (ix, iy, f"{x[ix]:.17g}", f"{y[iy]:.17g}",
                     f"{v.real:.17g}", f"{v.imag:.17g}")
                )
    return path


def load_csv(path, spec: GridSpec | None = None) -> ComplexField:
    """Read a field written by :func:`dump_csv`.

    Without ``spec`` the grid is inferred from the coordinate columns.
    """
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ConfigurationError(f"unexpected CSV header {header}")
        rows = [r for r in reader if r]
    count = len(rows)
    n = math.isqrt(count)
    if n * n != count:
        raise ConfigurationError(f"{count} rows is not a square grid")
    data = np.array([[float(c) for c in r] for r in rows])
    ix = data[:, 0].astype(int)
    iy = data[:, 1].astype(int)
    if spec is None:
        xs, ys = data[:, 2], data[:, 3]
        h = (xs.max() - xs.min()) / (n - 1)
        side = h * n
        origin = complex(xs.min() + side / 2, ys.min() + side / 2)
        spec = GridSpec(n, side, origin)
    elif spec.n != n:
        raise ConfigurationError(f"CSV has n={n}, spec has n={spec.n}")
    values = np.zeros((n, n), dtype=complex)
    values[ix, iy] = data[:, 4] + 1j * data[:, 5]
    if not np.any(values.imag):
        values = values.real
    return ComplexField(spec, values)
