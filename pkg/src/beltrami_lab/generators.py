"""Built-in coefficient fields and their closed-form oracles."""
from __future__ import annotations

import numpy as np

from .beltrami_solver import BeltramiCoefficients, ReducedCoefficient
from .errors import ConfigurationError
from .field_grid import ComplexField, GridSpec, coordinate_field


def smooth_cutoff(s: np.ndarray) -> np.ndarray:
    """exp(1 - 1/(1 - s)) for s < 1, else 0. Equals 1 at s = 0, C-infinity."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    return out


def bump_profile(spec: GridSpec, center: complex = 0j, radius: float = 1.5) -> np.ndarray:
    z = coordinate_field(spec).values
    return smooth_cutoff(np.abs(z - center) ** 2 / radius**2)


def radial_stretch_mu(spec: GridSpec, k: float = 1 / 3, radius: float = 1.0) -> np.ndarray:
    """k (z / zbar) on the closed disk |z| <= radius, 0 outside (and at z = 0)."""
    z = coordinate_field(spec).values - spec.origin
    mu = np.zeros_like(z)
    inside = (np.abs(z) <= radius) & (z != 0)
    mu[inside] = k * z[inside] / np.conj(z[inside])
    return mu


def radial_stretch_displacement(spec: GridSpec, k: float = 1 / 3,
                                radius: float = 1.0) -> np.ndarray:
    """Exact ``f - z`` for the radial stretch coefficient.

    ``f(z) = z (|z|/R)^a`` inside the disk with ``a = 2k/(1-k)``, identity
    outside; the displacement is compactly supported and mean-zero.
    """
    z = coordinate_field(spec).values - spec.origin
    a = 2 * k / (1 - k)
    rho = np.abs(z) / radius
    g = np.zeros_like(z)
    inside = rho <= 1
    g[inside] = z[inside] * (rho[inside] ** a - 1)
    return g


def random_smooth_field(spec: GridSpec, rng: np.random.Generator, modes: int = 4,
                        amplitude: float = 0.5) -> np.ndarray:
    """Random complex trigonometric polynomial with sup modulus ``amplitude``."""
    x, y = spec.axes()
    X, Y = np.meshgrid(x, y, indexing="ij")
    base = 2 * np.pi / spec.side
    out = np.zeros((spec.n, spec.n), dtype=complex)
    for p in range(-modes, modes + 1):
        for q in range(-modes, modes + 1):
            c = complex(*rng.normal(size=2)) / (1 + p * p + q * q)
            out += c * np.exp(1j * base * (p * X + q * Y))
    return amplitude * out / np.max(np.abs(out))


def reduced_coefficient(spec: GridSpec, kind: str, **params) -> ReducedCoefficient:
    """lambda generator by name: ``constant``, ``smooth_bump`` or ``random``."""
    if kind == "constant":
        value = complex(params.get("value", 0.0))
        return ReducedCoefficient.constant(spec, value)
    if kind == "smooth_bump":
        amp = float(params.get("amplitude", 0.5))
        phase = float(params.get("phase", 0.0))
        twist = float(params.get("twist", 0.0))
        center = complex(params.get("center", 0.0))
        radius = float(params.get("radius", 1.5))
        z = coordinate_field(spec).values
        prof = bump_profile(spec, center, radius)
        lam = amp * prof * np.exp(1j * (phase + twist * (z - center).real))
        return ReducedCoefficient(ComplexField(spec, lam))
    if kind == "random":
        rng = np.random.default_rng(int(params.get("seed", 0)))
        amp = float(params.get("amplitude", 0.5))
        modes = int(params.get("modes", 4))
        return ReducedCoefficient(ComplexField(spec, random_smooth_field(spec, rng, modes, amp)))
    raise ConfigurationError(f"unknown reduced coefficient generator {kind!r}")


def general_coefficients(spec: GridSpec, kind: str, **params) -> BeltramiCoefficients:
    """(mu, nu) generator by name: ``constant``, ``radial_stretch`` or ``smooth_bump``."""
    if kind == "constant":
        return BeltramiCoefficients.constant(
            spec, complex(params.get("mu", 0.0)), complex(params.get("nu", 0.0)))
    if kind == "radial_stretch":
        k = float(params.get("k", 1 / 3))
        radius = float(params.get("radius", 1.0))
        mu = radial_stretch_mu(spec, k, radius)
        return BeltramiCoefficients(ComplexField(spec, mu),
                                    ComplexField(spec, np.zeros_like(mu)), k=k)
    if kind == "smooth_bump":
        mu0 = complex(params.get("mu", 0.3))
        nu0 = complex(params.get("nu", 0.2))
        center = complex(params.get("center", 0.0))
        radius = float(params.get("radius", 1.5))
        prof = bump_profile(spec, center, radius)
        return BeltramiCoefficients(ComplexField(spec, mu0 * prof),
                                    ComplexField(spec, nu0 * prof))
    raise ConfigurationError(f"unknown coefficient generator {kind!r}")
