"""Pairs of solutions generating a linear family of quasiconformal maps.

Everything is evaluated on the z-grid. The factorization ``Psi = f o Phi``
is never resampled onto the w-plane: ``f_w o Phi`` and ``f_wbar o Phi``
come from the pointwise 2x2 chain-rule system, whose determinant is
``J(z, Phi)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .beltrami_solver import BeltramiCoefficients, QCSolution, residual_general
from .errors import ConfigurationError, DegeneracyError, SamplingError

DEFAULT_TAUS = (1e-2, 1e-4, 1e-6, 1e-8)
EPS_DEP = 1e-9
J_FLOOR = 1e-12
# fraction of masked Jacobian samples tolerated by factorize
EPS_J = 1e-3


def _check_pair(phi: QCSolution, psi: QCSolution):
    if phi.spec != psi.spec:
        raise ConfigurationError("phi and psi live on different grids")


def _values(m) -> np.ndarray:
    return np.asarray(m.values if hasattr(m, "values") else m, dtype=complex)


def jacobian_pairing(phi: QCSolution, psi: QCSolution) -> np.ndarray:
    """Im(Phi_z conj(Psi_z)) as a real array.

    Written out in real arithmetic so that antisymmetry and
    ``J(Phi, Phi) = 0`` hold exactly in floating point.
    """
    _check_pair(phi, psi)
    p, q = phi.fz.values, psi.fz.values
    return p.imag * q.real - p.real * q.imag


@dataclass(frozen=True, eq=False)
class LinearFamilyPair:
    phi: QCSolution
    psi: QCSolution
    coeffs: BeltramiCoefficients
    pairing: np.ndarray = field(default=None, repr=False)
    tol: float = 1e-8

    def __post_init__(self):
        _check_pair(self.phi, self.psi)
        for name, m in (("phi", self.phi), ("psi", self.psi)):
            res = residual_general(m, self.coeffs)
            if res > self.tol:
                raise ConfigurationError(
                    f"{name} does not solve the common equation (residual {res:.3e})")
        object.__setattr__(self, "pairing", jacobian_pairing(self.phi, self.psi))

    @property
    def spec(self):
        return self.phi.spec


@dataclass
class LambdaSignReport:
    minimum: float
    maximum: float
    verdict: str
    samples: int
    zero_fraction: float

    def as_dict(self):
        return dict(self.__dict__)


def lambda_sign_field(phi, psi, samples: int = 100_000, seed: int = 0,
                      zero_tol: float = 1e-10, max_resample: int = 10) -> LambdaSignReport:
    """Sample Im((Phi(z) - Phi(w)) / (Psi(z) - Psi(w))) on random pairs z != w.

    Verdict is ``all-negative``, ``all-positive``, ``mixed`` or, when
    every sample vanishes relative to the typical quotient size,
    ``degenerate``.
    """
    pv = _values(phi).ravel()
    qv = _values(psi).ravel()
    if pv.shape != qv.shape:
        raise ConfigurationError("phi and psi live on different grids")
    rng = np.random.default_rng(seed)
    npts = pv.size
    i = rng.integers(npts, size=samples)
    j = rng.integers(npts, size=samples)
    for _ in range(max_resample + 1):
        bad = (i == j) | (qv[i] == qv[j])
        if not bad.any():
            break
        j[bad] = rng.integers(npts, size=int(bad.sum()))
    else:
        raise SamplingError("could not draw pairs with distinct Psi values")
    quot = (pv[i] - pv[j]) / (qv[i] - qv[j])
    lam = quot.imag
    scale = float(np.median(np.abs(quot)))
    thresh = zero_tol * scale
    zero = np.abs(lam) <= thresh
    neg = bool(np.any(lam < -thresh))
    pos = bool(np.any(lam > thresh))
    if zero.all():
        verdict = "degenerate"
    elif neg and pos:
        verdict = "mixed"
    elif neg:
        verdict = "all-negative"
    else:
        verdict = "all-positive"
    return LambdaSignReport(float(lam.min()), float(lam.max()), verdict, samples,
                            float(zero.mean()))


def degenerate_pair_detect(phi, psi, eps_dep: float = EPS_DEP):
    """Real unit (a, b) minimizing ||a Phi + b Psi||_2 if that minimum is tiny.

    Returns ``None`` when the minimum exceeds ``eps_dep * (||Phi|| + ||Psi||)``.
    Signs are fixed so that the first non-zero entry is positive.
    """
    pv = _values(phi).ravel()
    qv = _values(psi).ravel()
    mat = np.column_stack([np.concatenate([pv.real, pv.imag]),
                           np.concatenate([qv.real, qv.imag])])
    _, svals, vt = np.linalg.svd(mat, full_matrices=False)
    smallest = svals[-1]
    bound = eps_dep * (np.linalg.norm(pv) + np.linalg.norm(qv))
    if smallest >= bound:
        return None
    a, b = vt[-1]
    if a < 0 or (a == 0 and b < 0):
        a, b = -a, -b
    return float(a), float(b)


@dataclass(frozen=True, eq=False)
class Factorization:
    """Derivatives of ``f = Psi o Phi^-1`` pulled back to the z-grid."""

    f_w: np.ndarray
    f_wbar: np.ndarray
    lam: np.ndarray
    jacobian: np.ndarray
    mask: np.ndarray
    k_prime_bound: float

    @property
    def masked_fraction(self) -> float:
        return float(np.mean(~self.mask))

    @property
    def lambda_sup(self) -> float:
        return float(np.max(np.abs(self.lam)))

    def reduced_residual(self) -> float:
        """||f_wbar - lambda Im(f_w)|| / ||f_w|| over unmasked samples."""
        m = self.mask
        r = self.f_wbar[m] - self.lam[m] * self.f_w[m].imag
        return float(np.linalg.norm(r) / np.linalg.norm(self.f_w[m]))


def k_prime(k: float) -> float:
    """Ellipticity bound 2k / (1 + k^2) of the reduced coefficient."""
    return 2 * k / (1 + k * k)


def factorize(pair: LinearFamilyPair, j_floor: float = J_FLOOR,
              eps_j: float = EPS_J, slack: float = 1e-10) -> Factorization:
    """Solve the chain rule for ``(f_w o Phi, f_wbar o Phi)`` at each sample.

    Psi_z    = f_w Phi_z    + f_wbar conj(Phi_zbar)
    Psi_zbar = f_w Phi_zbar + f_wbar conj(Phi_z)

    Samples with J(z, Phi) below ``j_floor * median(J)`` are masked (set
    to NaN) and counted; more than ``eps_j`` of them raises
    :class:`DegeneracyError`.
    """
    phi, psi = pair.phi, pair.psi
    pz, pzb = phi.fz.values, phi.fzbar.values
    qz, qzb = psi.fz.values, psi.fzbar.values
    jac = np.abs(pz) ** 2 - np.abs(pzb) ** 2
    med = float(np.median(jac))
    if not med > 0:
        raise DegeneracyError("Phi is not orientation preserving (median J <= 0)")
    mask = jac > j_floor * med
    if np.mean(~mask) > eps_j:
        raise DegeneracyError(
            f"J(z, Phi) below floor on {np.mean(~mask):.2%} of samples")
    safe = np.where(mask, jac, np.nan)
    # Cramer's rule on [[pz, conj(pzb)], [pzb, conj(pz)]]
    with np.errstate(invalid="ignore"):
        f_w = (qz * np.conj(pz) - np.conj(pzb) * qzb) / safe
        f_wbar = (pz * qzb - pzb * qz) / safe
    mu, nu = pair.coeffs.mu.values, pair.coeffs.nu.values
    lam = -2j * nu / (1 + np.abs(nu) ** 2 - np.abs(mu) ** 2)
    bound = k_prime(pair.coeffs.k)
    sup = float(np.max(np.abs(lam)))
    if sup > bound + slack:
        raise DegeneracyError(f"sup |lambda| = {sup:.6g} exceeds 2k/(1+k^2) = {bound:.6g}")
    return Factorization(f_w, f_wbar, lam, jac, mask, bound)


@dataclass
class ChainRuleReport:
    residual: float
    im_fw_min: float
    im_fw_negative_fraction: float

    def as_dict(self):
        return dict(self.__dict__)


def chain_rule_identity_residual(pair: LinearFamilyPair,
                                 fact: Factorization | None = None,
                                 tau: float = 1e-8) -> ChainRuleReport:
    """Residual of J(z,Phi) Im(f_w o Phi) = (-1 + |mu|^2 - |nu|^2) Im(Phi_z conj(Psi_z)).

    Relative L2 over unmasked samples; the sign statistics count samples
    with Im(f_w) < -tau * sup|Im(f_w)|.
    """
    if fact is None:
        fact = factorize(pair)
    m = fact.mask
    mu, nu = pair.coeffs.mu.values, pair.coeffs.nu.values
    lhs = fact.jacobian * fact.f_w.imag
    rhs = (-1 + np.abs(mu) ** 2 - np.abs(nu) ** 2) * pair.pairing
    diff = (lhs - rhs)[m]
    scale = max(np.linalg.norm(lhs[m]), np.linalg.norm(rhs[m]))
    residual = float(np.linalg.norm(diff) / scale) if scale else float(np.linalg.norm(diff))
    im = fact.f_w.imag[m]
    cut = tau * max(float(np.max(np.abs(im))), 1e-300)
    return ChainRuleReport(residual, float(im.min()), float(np.mean(im < -cut)))


def zero_fractions(pairing: np.ndarray, taus=DEFAULT_TAUS, scale: float | None = None):
    """Fraction of samples with |pairing| < tau * scale for each relative tau.

    ``scale`` defaults to sup|pairing|; when that vanishes (degenerate
    pairs) the caller should pass a mapping-size scale instead.
    """
    if scale is None:
        scale = float(np.max(np.abs(pairing)))
    return {float(t): float(np.mean(np.abs(pairing) < t * scale)) for t in taus}


def pairing_scale(phi: QCSolution, psi: QCSolution) -> float:
    """RMS(|Phi_z|) * RMS(|Psi_z|), a size for the pairing that survives degeneracy."""
    a = math.sqrt(float(np.mean(np.abs(phi.fz.values) ** 2)))
    b = math.sqrt(float(np.mean(np.abs(psi.fz.values) ** 2)))
    return a * b


def sign_consistency(pairing: np.ndarray, verdict: str, tau: float = 1e-8) -> float:
    """Fraction of samples whose pairing sign contradicts the Lambda verdict."""
    cut = tau * max(float(np.max(np.abs(pairing))), 1e-300)
    if verdict == "all-negative":
        return float(np.mean(pairing > cut))
    if verdict == "all-positive":
        return float(np.mean(pairing < -cut))
    return float("nan")


@dataclass
class FamilyReport:
    """Structured report fragment for one pair."""

    pairing_min: float
    pairing_max: float
    zero_fractions: dict
    lambda_sign_verdict: str
    degenerate: tuple | None
    lambda_sign_min: float | None = None
    lambda_sign_max: float | None = None
    chain_rule_residual: float | None = None
    lambda_sup: float | None = None
    k_prime_bound: float | None = None
    sign_violation_fraction: float | None = None
    reduced_residual: float | None = None
    im_fw_negative_fraction: float | None = None

    def as_dict(self):
        d = dict(self.__dict__)
        d["zero_fractions"] = {f"{k:.0e}": v for k, v in self.zero_fractions.items()}
        if self.degenerate is not None:
            d["degenerate"] = list(self.degenerate)
        return d


def family_report(pair: LinearFamilyPair, taus=DEFAULT_TAUS, samples: int = 100_000,
                  seed: int = 0) -> tuple[FamilyReport, Factorization | None]:
    """Run every linear-family check; factorization is skipped for degenerate pairs."""
    pairing = pair.pairing
    sup = float(np.max(np.abs(pairing)))
    scale = pairing_scale(pair.phi, pair.psi)
    zscale = sup if sup > 1e-12 * scale else scale
    signs = lambda_sign_field(pair.phi, pair.psi, samples, seed)
    dep = degenerate_pair_detect(pair.phi, pair.psi)
    rep = FamilyReport(
        pairing_min=float(pairing.min()),
        pairing_max=float(pairing.max()),
        zero_fractions=zero_fractions(pairing, taus, zscale),
        lambda_sign_verdict=signs.verdict,
        degenerate=dep,
        lambda_sign_min=signs.minimum,
        lambda_sign_max=signs.maximum,
    )
    if signs.verdict in ("all-negative", "all-positive"):
        rep.sign_violation_fraction = sign_consistency(pairing, signs.verdict)
    if dep is not None:
        return rep, None
    fact = factorize(pair)
    chain = chain_rule_identity_residual(pair, fact)
    rep.chain_rule_residual = chain.residual
    rep.im_fw_negative_fraction = chain.im_fw_negative_fraction
    rep.lambda_sup = fact.lambda_sup
    rep.k_prime_bound = fact.k_prime_bound
    rep.reduced_residual = fact.reduced_residual()
    return rep, fact
