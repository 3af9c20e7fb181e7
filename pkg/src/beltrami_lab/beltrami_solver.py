"""Fixed-point solver for the general Beltrami equation on a periodic cell.

Solutions have the form ``f(z) = a z + b conj(z) + g(z)`` with ``g``
periodic and mean-zero. The linear coefficient ``a`` is the
normalization chosen by the caller; ``b`` is the mean of ``f_zbar``,
which the periodic displacement cannot carry.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, ConvergenceError, EllipticityError
from .field_grid import (
    ComplexField,
    GridSpec,
    check_same_grid,
    coordinate_field,
    d_z,
    d_zbar,
    wavenumbers,
)
from .singular_transforms import beurling_array, cauchy_array, get_plan

log = logging.getLogger(__name__)

# Slack for the pointwise ellipticity check (round-off in generated fields).
ELLIPTICITY_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class BeltramiCoefficients:
    """The pair (mu, nu) of ``f_zbar = mu f_z + nu conj(f_z)``."""

    mu: ComplexField
    nu: ComplexField
    k: float = None

    def __post_init__(self):
        check_same_grid(self.mu, self.nu)
        bound = float(np.max(np.abs(self.mu.values) + np.abs(self.nu.values)))
        k = bound if self.k is None else float(self.k)
        if bound > k + ELLIPTICITY_SLACK:
            raise EllipticityError(f"sup |mu|+|nu| = {bound:.6g} exceeds k = {k:.6g}")
        if not k < 1:
            raise EllipticityError(f"ellipticity bound k = {k:.6g} is not < 1")
        object.__setattr__(self, "k", k)

    @property
    def spec(self) -> GridSpec:
        return self.mu.spec

    @property
    def K(self) -> float:
        """Distortion constant (1 + k) / (1 - k)."""
        return (1 + self.k) / (1 - self.k)

    @classmethod
    def constant(cls, spec: GridSpec, mu: complex = 0, nu: complex = 0):
        shape = (spec.n, spec.n)
        return cls(ComplexField(spec, np.full(shape, complex(mu))),
                   ComplexField(spec, np.full(shape, complex(nu))))


@dataclass(frozen=True, eq=False)
class ReducedCoefficient:
    """lambda of ``f_zbar = lambda Im(f_z)``, split as alpha + i beta."""

    lam: ComplexField
    k_prime: float = None

    def __post_init__(self):
        lam = ComplexField(self.lam.spec, np.asarray(self.lam.values, dtype=complex))
        object.__setattr__(self, "lam", lam)
        sup = float(np.max(np.abs(lam.values)))
        kp = sup if self.k_prime is None else float(self.k_prime)
        if sup > kp + ELLIPTICITY_SLACK:
            raise EllipticityError(f"sup |lambda| = {sup:.6g} exceeds k' = {kp:.6g}")
        if not kp < 1:
            raise EllipticityError(f"sup |lambda| = {kp:.6g} is not < 1")
        object.__setattr__(self, "k_prime", kp)

    @property
    def spec(self) -> GridSpec:
        return self.lam.spec

    @property
    def alpha(self) -> ComplexField:
        return self.lam.real

    @property
    def beta(self) -> ComplexField:
        return self.lam.imag

    @classmethod
    def constant(cls, spec: GridSpec, value: complex):
        return cls(ComplexField(spec, np.full((spec.n, spec.n), complex(value))))


@dataclass(frozen=True, eq=False)
class QCSolution:
    """A mapping ``f = a z + b conj(z) + g`` with cached derivatives.

    ``displacement`` is ``g``. For solver output ``g`` is periodic and
    mean-zero; explicitly constructed maps (polynomials) may carry a
    non-periodic ``g`` whose derivatives were supplied analytically.
    """

    spec: GridSpec
    linear: complex
    antilinear: complex
    displacement: ComplexField
    fz: ComplexField
    fzbar: ComplexField
    iterations: int = 0
    residual: float = 0.0
    history: tuple = field(default=(), repr=False)

    @classmethod
    def from_parts(cls, spec: GridSpec, linear=1.0, antilinear=0.0,
                   displacement: ComplexField | None = None, **meta):
        """Build from a periodic displacement; derivatives are spectral."""
        if displacement is None:
            displacement = ComplexField(spec, np.zeros((spec.n, spec.n), complex))
        check_same_grid(displacement)
        if displacement.spec != spec:
            raise ConfigurationError("displacement lives on a different grid")
        g = ComplexField(spec, np.asarray(displacement.values, dtype=complex))
        fz = d_z(g) + complex(linear)
        fzbar = d_zbar(g) + complex(antilinear)
        return cls(spec, complex(linear), complex(antilinear), g, fz, fzbar, **meta)

    @classmethod
    def affine(cls, spec: GridSpec, linear=1.0, antilinear=0.0):
        return cls.from_parts(spec, linear, antilinear)

    @classmethod
    def from_polynomial(cls, spec: GridSpec, coeffs):
        """Holomorphic polynomial ``sum coeffs[j] z^j`` with exact derivatives."""
        z = coordinate_field(spec).values
        poly = np.polynomial.Polynomial(np.asarray(coeffs, dtype=complex))
        values = poly(z)
        fz = poly.deriv()(z) if len(coeffs) > 1 else np.zeros_like(z)
        g = values - z
        return cls(spec, 1.0 + 0j, 0j, ComplexField(spec, g),
                   ComplexField(spec, np.asarray(fz, dtype=complex)),
                   ComplexField(spec, np.zeros_like(z)))

    @property
    def values(self) -> np.ndarray:
        z = coordinate_field(self.spec).values
        return self.linear * z + self.antilinear * np.conj(z) + self.displacement.values

    @property
    def jacobian(self) -> np.ndarray:
        """J(z, f) = |f_z|^2 - |f_zbar|^2."""
        return np.abs(self.fz.values) ** 2 - np.abs(self.fzbar.values) ** 2

    # real components f = u + i v and their first derivatives
    @property
    def u(self) -> np.ndarray:
        return self.values.real

    @property
    def v(self) -> np.ndarray:
        return self.values.imag

    @property
    def u_x(self) -> np.ndarray:
        return (self.fz.values + self.fzbar.values).real

    @property
    def v_x(self) -> np.ndarray:
        return (self.fz.values + self.fzbar.values).imag

    @property
    def u_y(self) -> np.ndarray:
        return (self.fzbar.values - self.fz.values).imag

    @property
    def v_y(self) -> np.ndarray:
        return (self.fz.values - self.fzbar.values).real

    def nonpositive_jacobian_fraction(self) -> float:
        return float(np.mean(self.jacobian <= 0))

    def combine(self, a: float, other: "QCSolution", b: float) -> "QCSolution":
        """Real linear combination ``a * self + b * other``."""
        check_same_grid(self.displacement, other.displacement)
        return QCSolution(
            self.spec,
            a * self.linear + b * other.linear,
            a * self.antilinear + b * other.antilinear,
            a * self.displacement + b * other.displacement,
            a * self.fz + b * other.fz,
            a * self.fzbar + b * other.fzbar,
        )


def reduced_to_general(lam: ReducedCoefficient) -> BeltramiCoefficients:
    """mu = -i lambda / 2, nu = i lambda / 2, so |mu| + |nu| = |lambda|."""
    sup = float(np.max(np.abs(lam.lam.values)))
    if not sup < 1:
        raise EllipticityError(f"sup |lambda| = {sup:.6g} is not < 1")
    mu = -0.5j * lam.lam
    nu = 0.5j * lam.lam
    return BeltramiCoefficients(mu, nu, k=sup)


def _truncate_23(values: np.ndarray, spec: GridSpec) -> np.ndarray:
    kx, ky = wavenumbers(spec)
    kmax = (2 * np.pi / spec.side) * spec.n / 3
    mask = (np.abs(kx) < kmax) & (np.abs(ky) < kmax)
    return sfft.ifft2(sfft.fft2(values) * mask)


def solve_principal(coeffs: BeltramiCoefficients, tol: float = 1e-10,
                    max_iter: int = 500, linear: complex = 1.0,
                    dealias: bool = False) -> QCSolution:
    """Solve ``f_zbar = mu f_z + nu conj(f_z)`` with ``f - linear*z`` of linear growth
    at most through ``conj(z)``.

    Iterates ``omega <- mu (linear + S omega) + nu conj(linear + S omega)``
    on ``omega = f_zbar``. The map is a contraction with constant ``k``
    since S is an L2 isometry on mean-zero fields and kills the mean.
    Stops when the equation residual, relative to ``||f_z||``, is below
    ``tol``; raises :class:`ConvergenceError` after ``max_iter`` steps.
    """
    if not tol > 0:
        raise ConfigurationError(f"tol must be positive, got {tol}")
    if not coeffs.k < 1:
        raise EllipticityError(f"k = {coeffs.k} is not < 1")
    spec = coeffs.spec
    plan = get_plan(spec)
    mu = coeffs.mu.values
    nu = coeffs.nu.values
    a = complex(linear)
    if a == 0:
        raise ConfigurationError("linear normalization must be non-zero")

    def step(omega):
        fz = a + beurling_array(plan, omega)
        out = mu * fz + nu * np.conj(fz)
        if dealias:
            out = _truncate_23(out, spec)
        return out, fz

    omega = np.zeros((spec.n, spec.n), dtype=complex)
    history = []
    residual = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        new, fz = step(omega)
        # residual of the current iterate: omega - T(omega)
        residual = float(np.linalg.norm(omega - new) / np.linalg.norm(fz))
        history.append(residual)
        omega = new
        if residual * coeffs.k <= tol or residual == 0:
            break
    else:
        raise ConvergenceError(
            f"no convergence in {max_iter} iterations (residual {residual:.3e})",
            residual=residual, iterations=max_iter)

    b = complex(omega.mean())
    g = ComplexField(spec, cauchy_array(plan, omega))
    sol = QCSolution.from_parts(spec, a, b, g, iterations=it, history=tuple(history))
    res = residual_general(sol, coeffs)
    if res > tol:
        raise ConvergenceError(
            f"final residual {res:.3e} above tol {tol:.3e}", residual=res, iterations=it)
    log.debug("solve_principal: %d iterations, residual %.3e", it, res)
    return QCSolution(sol.spec, sol.linear, sol.antilinear, sol.displacement,
                      sol.fz, sol.fzbar, iterations=it, residual=res,
                      history=tuple(history))


def solve_reduced(lam: ReducedCoefficient, tol: float = 1e-10, max_iter: int = 500,
                  linear: complex = 1.0, dealias: bool = False) -> QCSolution:
    """Solve ``f_zbar = lambda Im(f_z)``; the default normalization gives f = z."""
    sol = solve_principal(reduced_to_general(lam), tol, max_iter, linear, dealias)
    res = residual_reduced(sol, lam)
    if res > tol:
        raise ConvergenceError(
            f"reduced residual {res:.3e} above tol {tol:.3e}",
            residual=res, iterations=sol.iterations)
    return sol


def _check_grid(f: QCSolution, spec: GridSpec):
    if f.spec != spec:
        raise ConfigurationError("solution and coefficients live on different grids")


def _relative(num: np.ndarray, den: np.ndarray) -> float:
    dn = np.linalg.norm(den)
    return float(np.linalg.norm(num) / dn) if dn else float(np.linalg.norm(num))


def residual_general(f: QCSolution, coeffs: BeltramiCoefficients) -> float:
    """||f_zbar - mu f_z - nu conj(f_z)||_2 / ||f_z||_2."""
    _check_grid(f, coeffs.spec)
    fz = f.fz.values
    r = f.fzbar.values - coeffs.mu.values * fz - coeffs.nu.values * np.conj(fz)
    return _relative(r, fz)


def residual_reduced(f: QCSolution, lam: ReducedCoefficient) -> float:
    """||f_zbar - lambda Im(f_z)||_2 / ||f_z||_2."""
    _check_grid(f, lam.spec)
    fz = f.fz.values
    return _relative(f.fzbar.values - lam.lam.values * fz.imag, fz)


@dataclass
class ComponentReport:
    """Residuals of 2 Im f_z = 2 v_x / (beta + 1) = 2 u_y / (beta - 1)."""

    vx_residual: float
    uy_residual: float
    uy_positive_fraction: float
    uy_negative_fraction: float
    uy_zero_fraction: float

    def as_dict(self):
        return dict(self.__dict__)


def component_relations(f: QCSolution, lam: ReducedCoefficient,
                        zero_tol: float = 1e-12) -> ComponentReport:
    """Check the Im(f_z) relations for a solution of the reduced equation."""
    _check_grid(f, lam.spec)
    return component_relations_from_derivatives(
        f.fz.values, f.fzbar.values, lam.beta.values, zero_tol=zero_tol)


def component_relations_from_derivatives(fz, fzbar, beta, mask=None,
                                         zero_tol: float = 1e-12) -> ComponentReport:
    """Array form of :func:`component_relations`; ``mask`` selects samples."""
    fz, fzbar, beta = (np.asarray(a) for a in (fz, fzbar, beta))
    if mask is not None:
        fz, fzbar, beta = fz[mask], fzbar[mask], beta[mask]
    lhs = 2 * fz.imag
    v_x = (fz + fzbar).imag
    u_y = (fzbar - fz).imag
    via_vx = 2 * v_x / (beta + 1)
    via_uy = 2 * u_y / (beta - 1)
    scale = zero_tol * max(float(np.max(np.abs(u_y))), 1e-300)
    return ComponentReport(
        vx_residual=_relative(via_vx - lhs, lhs),
        uy_residual=_relative(via_uy - lhs, lhs),
        uy_positive_fraction=float(np.mean(u_y > scale)),
        uy_negative_fraction=float(np.mean(u_y < -scale)),
        uy_zero_fraction=float(np.mean(np.abs(u_y) <= scale)),
    )
