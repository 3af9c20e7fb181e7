"""Divergence-form and adjoint non-divergence equations for reduced solutions.

For ``f = u + i v`` solving ``f_wbar = lambda Im(f_w)`` with
``lambda = alpha + i beta``, the real part satisfies

    div(A grad u) = 0,   A = [[1, a12], [0, a22]],
    a12 = 2 alpha / (1 - beta),   a22 = (1 + beta) / (1 - beta),

and ``u_y`` solves ``L* w = 0`` for ``L = dxx + a12 dxy + a22 dyy``.
Integrals are taken with a :class:`Quadrature`: either the plain lattice
(w-plane = z-plane) or the lattice pushed forward by ``Phi``, which lets
w-plane integrals be computed on the z-grid without inverting ``Phi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .beltrami_solver import QCSolution, ReducedCoefficient
from .errors import DegenerateInputError, DomainError, EllipticityError, HypothesisError
from .field_grid import ComplexField, GridSpec, coordinate_field, disk_weights

N_DIRECTIONS = 16


@dataclass(frozen=True, eq=False)
class Quadrature:
    """Nodes in the w-plane with area weights, laid out on an (n, n) grid."""

    spec: GridSpec
    nodes: np.ndarray
    weights: np.ndarray
    identity: bool = True

    @classmethod
    def grid(cls, spec: GridSpec) -> "Quadrature":
        nodes = coordinate_field(spec).values
        return cls(spec, nodes, np.full(nodes.shape, spec.cell_area), True)

    @classmethod
    def pullback(cls, phi: QCSolution, mask: np.ndarray | None = None) -> "Quadrature":
        """Change of variables w = Phi(z): dA(w) = J(z, Phi) dA(z)."""
        jac = phi.jacobian
        weights = jac * phi.spec.cell_area
        if mask is not None:
            weights = np.where(mask, weights, 0.0)
        return cls(phi.spec, phi.values, weights, False)

    def frame(self, width: int = 2) -> np.ndarray:
        """Boolean mask of the outer ``width`` rows and columns."""
        m = np.zeros(self.nodes.shape, dtype=bool)
        m[:width, :] = m[-width:, :] = True
        m[:, :width] = m[:, -width:] = True
        return m

    def check_support(self, center: complex, radius: float):
        """Raise DomainError unless D(center, radius) stays inside the cell."""
        if self.identity:
            if not self.spec.contains_disk(center, radius):
                raise DomainError(f"D({center}, {radius}) leaves the cell")
            return
        touching = np.abs(self.nodes[self.frame()] - center) < radius
        if touching.any():
            raise DomainError(f"preimage of D({center}, {radius}) reaches the cell edge")

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * values))

    def norm(self, values: np.ndarray, where=None) -> float:
        sq = np.abs(values) ** 2
        if where is not None:
            sq = np.where(where, sq, 0.0)
        return math.sqrt(max(self.integrate(sq), 0.0))


@dataclass(frozen=True, eq=False)
class EllipticCoefficients:
    """a12, a22 and the symmetric matrix sigma = [[1, a12/2], [a12/2, a22]]."""

    a12: np.ndarray
    a22: np.ndarray
    K_ell: float

    @property
    def sigma(self):
        return np.ones_like(self.a12), 0.5 * self.a12, self.a22

    def eigenvalues(self):
        s11, s12, s22 = self.sigma
        mean = 0.5 * (s11 + s22)
        rad = np.sqrt((0.5 * (s11 - s22)) ** 2 + s12**2)
        return mean - rad, mean + rad

    def quadratic_form(self, theta: float) -> np.ndarray:
        """<sigma xi, xi> for the unit vector xi = (cos theta, sin theta)."""
        c, s = math.cos(theta), math.sin(theta)
        s11, s12, s22 = self.sigma
        return s11 * c * c + 2 * s12 * c * s + s22 * s * s

    def apply_L(self, d: dict) -> np.ndarray:
        return d["xx"] + self.a12 * d["xy"] + self.a22 * d["yy"]


def _lambda_values(lam) -> np.ndarray:
    if isinstance(lam, ReducedCoefficient):
        return lam.lam.values
    if isinstance(lam, ComplexField):
        return np.asarray(lam.values, dtype=complex)
    return np.asarray(lam, dtype=complex)


def coefficients_from_lambda(lam) -> EllipticCoefficients:
    """a12 = 2 alpha / (1 - beta), a22 = (1 + beta) / (1 - beta)."""
    vals = _lambda_values(lam)
    alpha, beta = vals.real, vals.imag
    if np.any(np.abs(vals) >= 1) or np.any(beta >= 1):
        raise EllipticityError("reduced coefficient reaches |lambda| >= 1")
    a12 = 2 * alpha / (1 - beta)
    a22 = (1 + beta) / (1 - beta)
    lo, hi = EllipticCoefficients(a12, a22, 1.0).eigenvalues()
    if np.any(lo <= 0):
        raise EllipticityError("sigma is not positive definite")
    K = float(max(np.max(hi), np.max(1.0 / lo)))
    return EllipticCoefficients(a12, a22, K)


@dataclass(frozen=True)
class TestBump:
    """phi = P(X, Y) * c(X^2 + Y^2), X = (x - cx)/R, Y = (y - cy)/R.

    ``P = p0 + p1 X + p2 Y + p3 X Y + p4 X^2 + p5 Y^2`` and
    ``c(s) = exp(1 - 1/(1 - s))`` on s < 1. All derivatives up to second
    order are closed-form.
    """

    __test__ = False  # not a pytest class

    center: complex
    radius: float
    poly: tuple = (1.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    def evaluate(self, points: np.ndarray) -> dict:
        R = self.radius
        X = (points.real - self.center.real) / R
        Y = (points.imag - self.center.imag) / R
        s = X * X + Y * Y
        inside = s < 1
        t = np.zeros_like(s)
        t[inside] = 1.0 / (1.0 - s[inside])
        cut = np.zeros_like(s)
        cut[inside] = np.exp(1.0 - t[inside])
        # derivatives of c with respect to s
        c1 = -t * t * cut
        c2 = (t**4 - 2 * t**3) * cut
        sx, sy = 2 * X / R, 2 * Y / R
        sxx = syy = 2 / R**2
        cx, cy = c1 * sx, c1 * sy
        cxx = c2 * sx * sx + c1 * sxx
        cyy = c2 * sy * sy + c1 * syy
        cxy = c2 * sx * sy

        p0, p1, p2, p3, p4, p5 = self.poly
        P = p0 + p1 * X + p2 * Y + p3 * X * Y + p4 * X * X + p5 * Y * Y
        Px = (p1 + p3 * Y + 2 * p4 * X) / R
        Py = (p2 + p3 * X + 2 * p5 * Y) / R
        Pxx, Pyy, Pxy = 2 * p4 / R**2, 2 * p5 / R**2, p3 / R**2
        return {
            "phi": P * cut,
            "x": Px * cut + P * cx,
            "y": Py * cut + P * cy,
            "xx": Pxx * cut + 2 * Px * cx + P * cxx,
            "yy": Pyy * cut + 2 * Py * cy + P * cyy,
            "xy": Pxy * cut + Px * cy + Py * cx + P * cxy,
            "support": inside,
        }


def bump_battery(quad: Quadrature, count: int = 20, seed: int = 0,
                 canonical: bool = True, radius_range=(0.15, 0.25)) -> list:
    """Seeded random bumps plus five fixed canonical ones.

    Radii are fractions of the cell side. For a pulled-back quadrature the
    centers are images of z-plane points, redrawn until the bump's
    preimage clears the cell edge.
    """
    spec = quad.spec
    L = spec.side
    half = 0.5 * L
    bumps = []
    if canonical:
        r = 0.18 * L
        d = 0.22 * L
        specs = [
            (0j, 0.25 * L, (1, 0, 0, 0, 0, 0)),
            (complex(d, d), r, (1, 0.5, 0, 0, 0, 0)),
            (complex(-d, d), r, (0.5, 0, -1, 0.3, 0, 0)),
            (complex(-d, -d), r, (1, 0, 0, 0, 0.7, -0.4)),
            (complex(d, -d), r, (0, 1, 1, 1, 1, 1)),
        ]
        for off, rad, poly in specs:
            z0 = spec.origin + off
            center = z0 if quad.identity else _push(quad, z0)
            bumps.append(TestBump(complex(center), rad, tuple(float(p) for p in poly)))
    rng = np.random.default_rng(seed)
    attempts = 0
    while len(bumps) < count + (5 if canonical else 0):
        attempts += 1
        if attempts > 100 * (count + 1):
            raise DomainError("could not place test bumps inside the cell")
        rad = rng.uniform(*radius_range) * L
        lim = half - rad
        z0 = spec.origin + complex(rng.uniform(-lim, lim), rng.uniform(-lim, lim))
        poly = tuple(float(p) for p in rng.uniform(-1, 1, size=6))
        center = z0 if quad.identity else _push(quad, z0)
        bump = TestBump(complex(center), float(rad), poly)
        try:
            quad.check_support(bump.center, bump.radius)
        except DomainError:
            continue
        bumps.append(bump)
    for b in bumps:
        quad.check_support(b.center, b.radius)
    return bumps


def _push(quad: Quadrature, z0: complex) -> complex:
    """Image of z0 under the quadrature map (nearest lattice node)."""
    spec = quad.spec
    ix = int(round((z0.real - spec.corner.real) / spec.h)) % spec.n
    iy = int(round((z0.imag - spec.corner.imag) / spec.h)) % spec.n
    return complex(quad.nodes[ix, iy])


def _grad_u(u) -> tuple:
    if isinstance(u, QCSolution):
        return u.u_x, u.u_y
    ux, uy = u
    return np.asarray(ux, dtype=float), np.asarray(uy, dtype=float)


def weak_divergence_residual(u, coeffs: EllipticCoefficients, bumps, quad: Quadrature) -> float:
    """max over bumps of |int grad(phi) . A grad(u)| / (||grad phi|| ||grad u||).

    ``u`` is a QCSolution or a gradient pair ``(u_x, u_y)`` at the nodes;
    ``||grad u||`` is taken over the bump's support.
    """
    ux, uy = _grad_u(u)
    worst = 0.0
    for b in bumps:
        quad.check_support(b.center, b.radius)
        d = b.evaluate(quad.nodes)
        integrand = d["x"] * (ux + coeffs.a12 * uy) + d["y"] * coeffs.a22 * uy
        val = abs(quad.integrate(integrand))
        den = (quad.norm(np.hypot(d["x"], d["y"]))
               * quad.norm(np.hypot(ux, uy), where=d["support"]))
        if den == 0:
            continue
        worst = max(worst, val / den)
    return worst


def adjoint_residual(w, coeffs: EllipticCoefficients, bumps, quad: Quadrature) -> float:
    """max over bumps of |int w L(phi)| / (||w|| ||L phi||), ||w|| on the support."""
    w = np.asarray(w, dtype=float)
    worst = 0.0
    for b in bumps:
        quad.check_support(b.center, b.radius)
        d = b.evaluate(quad.nodes)
        lphi = coeffs.apply_L(d)
        val = abs(quad.integrate(w * lphi))
        den = quad.norm(lphi) * quad.norm(w, where=d["support"])
        if den == 0:
            continue
        worst = max(worst, val / den)
    return worst


def bridging_residual(u, coeffs: EllipticCoefficients, bumps, quad: Quadrature) -> float:
    """Gap between the weak form tested with phi_y and int u_y L(phi).

    The two integrals differ by int (phi_xy u_x - phi_xx u_y), which
    vanishes for any gradient field; normalized like the weak residual
    with phi_y in place of phi.
    """
    ux, uy = _grad_u(u)
    worst = 0.0
    for b in bumps:
        quad.check_support(b.center, b.radius)
        d = b.evaluate(quad.nodes)
        weak = quad.integrate(d["xy"] * (ux + coeffs.a12 * uy) + d["yy"] * coeffs.a22 * uy)
        adj = quad.integrate(uy * coeffs.apply_L(d))
        den = (quad.norm(np.hypot(d["xy"], d["yy"]))
               * quad.norm(np.hypot(ux, uy), where=d["support"]))
        if den == 0:
            continue
        worst = max(worst, abs(weak - adj) / den)
    return worst


@dataclass
class ReverseHolderReport:
    disks: list
    ratios: list
    skipped: list = field(default_factory=list)
    clipped_negative_fraction: float = 0.0

    @property
    def c0_empirical(self) -> float:
        return max(self.ratios)

    def by_radius(self) -> dict:
        out = {}
        for (z0, r), ratio in zip(self.disks, self.ratios):
            out.setdefault(r, []).append(ratio)
        return out

    def histogram(self, bins: int = 10):
        counts, edges = np.histogram(self.ratios, bins=bins)
        return {"counts": counts.tolist(), "edges": edges.tolist()}


def disk_battery(spec: GridSpec, radii_h=(8, 16, 32), centers: int = 50,
                 seed: int = 0, quad: Quadrature | None = None) -> list:
    """Seeded disk centers for each radius r = m * h, with D(z0, 2r) in the cell.

    With a pulled-back ``quad`` the centers are pushed through the map and
    disks whose doubled preimage reaches the cell edge are dropped.
    """
    rng = np.random.default_rng(seed)
    out = []
    for m in radii_h:
        r = m * spec.h
        lim = 0.5 * spec.side - 2 * r
        if lim < 0:
            raise DomainError(f"radius {m}h is too large for the cell")
        for _ in range(centers):
            z0 = spec.origin + complex(rng.uniform(-lim, lim), rng.uniform(-lim, lim))
            if quad is not None and not quad.identity:
                z0 = _push(quad, z0)
                try:
                    quad.check_support(z0, 2 * r)
                except DomainError:
                    continue
            out.append((z0, r))
    return out


def _disk_weights(quad: Quadrature, z0: complex, r: float) -> np.ndarray:
    if quad.identity:
        return disk_weights(quad.spec, z0, r) * quad.spec.cell_area
    quad.check_support(z0, 2 * r)
    return np.where(np.abs(quad.nodes - z0) < r, quad.weights, 0.0)


def clip_negative(w: np.ndarray, tau_neg: float = 1e-10):
    """Clip tiny negative excursions of ``w``; larger ones violate w >= 0."""
    w = np.asarray(w, dtype=float)
    sup = float(np.max(np.abs(w))) if w.size else 0.0
    neg = w < 0
    if np.any(w < -tau_neg * sup):
        raise HypothesisError(
            f"w has negative values down to {w.min():.3e} (allowed {-tau_neg * sup:.3e})")
    return np.where(neg, 0.0, w), float(np.mean(neg))


def reverse_holder_scan(w, disks, quad: Quadrature | GridSpec | None = None,
                        tau_neg: float = 1e-10, floor: float = 1e-12) -> ReverseHolderReport:
    """Ratios [(1/r^2) int w^2]^(1/2) / ((1/r^2) int w) over the given disks.

    Disks whose mean falls below ``floor * sup(w)`` are skipped.
    """
    if isinstance(w, ComplexField):
        spec = w.spec
        w = w.values.real
    else:
        spec = None
    if quad is None:
        quad = Quadrature.grid(spec)
    elif isinstance(quad, GridSpec):
        quad = Quadrature.grid(quad)
    w, clipped = clip_negative(w, tau_neg)
    sup = float(np.max(w)) if w.size else 0.0
    report = ReverseHolderReport([], [], clipped_negative_fraction=clipped)
    for z0, r in disks:
        wt = _disk_weights(quad, z0, r)
        mean = float(np.sum(wt * w)) / r**2
        if mean <= floor * sup or mean <= 0:
            report.skipped.append((z0, r))
            continue
        l2 = math.sqrt(float(np.sum(wt * w * w)) / r**2)
        report.disks.append((z0, r))
        report.ratios.append(l2 / mean)
    if not report.ratios:
        raise DegenerateInputError("every disk was skipped")
    return report


def zero_measure_estimate(values, thresholds) -> list:
    """Fraction of samples with |value| < tau for each tau."""
    vals = np.abs(values.values if isinstance(values, ComplexField) else np.asarray(values))
    return [float(np.mean(vals < t)) for t in thresholds]


def ellipticity_directions_ok(coeffs: EllipticCoefficients, slack: float = 1e-12) -> bool:
    """Check 1/K <= <sigma xi, xi> <= K on N_DIRECTIONS unit vectors everywhere."""
    K = coeffs.K_ell
    for j in range(N_DIRECTIONS):
        q = coeffs.quadratic_form(np.pi * j / N_DIRECTIONS)
        if np.any(q < 1 / K - slack) or np.any(q > K + slack):
            return False
    return True


@dataclass
class AdjointReport:
    K_ell: float
    weak_residual: float
    adjoint_residual: float
    bridging_residual: float
    c0_empirical: float | None
    c0_by_radius: dict
    ratios_histogram: dict | None
    zero_fractions: dict
    clipped_negative_fraction: float | None
    orientation: int
    skipped: str | None = None

    def as_dict(self):
        d = dict(self.__dict__)
        if d["skipped"] is None:
            d.pop("skipped")
        return d


def reduced_fields(phi: QCSolution, psi: QCSolution, fact):
    """Gradient of u = Re(f) and lambda at the nodes of the matching quadrature."""
    if is_identity(phi):
        quad = Quadrature.grid(phi.spec)
        return quad, psi.u_x, psi.u_y, fact.lam
    quad = Quadrature.pullback(phi, fact.mask)
    f_w = np.where(fact.mask, fact.f_w, 0.0)
    f_wbar = np.where(fact.mask, fact.f_wbar, 0.0)
    return quad, (f_w + f_wbar).real, (f_wbar - f_w).imag, fact.lam


def is_identity(phi: QCSolution) -> bool:
    return (phi.linear == 1 and phi.antilinear == 0
            and not np.any(phi.displacement.values) and not np.any(phi.fzbar.values))


def adjoint_report(phi: QCSolution, psi: QCSolution, fact, *, bump_count: int = 20,
                   bump_seed: int = 0, radii_h=(8, 16, 32), disk_centers: int = 50,
                   disk_seed: int = 0, taus=(1e-2, 1e-4, 1e-6, 1e-8)) -> AdjointReport:
    """Weak, adjoint and reverse Hoelder checks for ``f = Psi o Phi^-1``."""
    quad, ux, uy, lam = reduced_fields(phi, psi, fact)
    coeffs = coefficients_from_lambda(lam)
    bumps = bump_battery(quad, bump_count, bump_seed)
    weak = weak_divergence_residual((ux, uy), coeffs, bumps, quad)
    adj = adjoint_residual(uy, coeffs, bumps, quad)
    bridge = bridging_residual((ux, uy), coeffs, bumps, quad)
    sup = float(np.max(np.abs(uy)))
    zf = {f"{t:.0e}": f for t, f in zip(taus, zero_measure_estimate(uy, [t * sup for t in taus]))}
    orientation = 1 if np.median(uy) >= 0 else -1
    w = orientation * uy
    base = dict(K_ell=coeffs.K_ell, weak_residual=weak, adjoint_residual=adj,
                bridging_residual=bridge, zero_fractions=zf, orientation=orientation)
    try:
        disks = disk_battery(phi.spec, radii_h, disk_centers, disk_seed, quad)
        rh = reverse_holder_scan(w, disks, quad)
    except (HypothesisError, DegenerateInputError, DomainError) as exc:
        return AdjointReport(c0_empirical=None, c0_by_radius={}, ratios_histogram=None,
                             clipped_negative_fraction=None, skipped=str(exc), **base)
    by_r = {f"{r / phi.spec.h:.0f}h": max(v) for r, v in rh.by_radius().items()}
    return AdjointReport(c0_empirical=rh.c0_empirical, c0_by_radius=by_r,
                         ratios_histogram=rh.histogram(),
                         clipped_negative_fraction=rh.clipped_negative_fraction, **base)
