"""Periodic Cauchy and Beurling transforms as Fourier multipliers.

Both operators annihilate the mean of their input: on the torus the
Cauchy transform inverts d/dzbar only on mean-zero fields, and the
Beurling transform ``S = d/dz o C`` inherits that convention.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .field_grid import ComplexField, GridSpec, wirtinger_symbols


@dataclass(frozen=True, eq=False)
class TransformPlan:
    spec: GridSpec
    dz: np.ndarray
    dzbar: np.ndarray
    cauchy: np.ndarray
    beurling: np.ndarray

    @classmethod
    def build(cls, spec: GridSpec) -> "TransformPlan":
        dz, dzbar = wirtinger_symbols(spec)
        nonzero = dzbar != 0
        cauchy = np.zeros_like(dzbar)
        cauchy[nonzero] = 1.0 / dzbar[nonzero]
        beurling = dz * cauchy
        for arr in (cauchy, beurling):
            arr.setflags(write=False)
        return cls(spec, dz, dzbar, cauchy, beurling)

    def _apply(self, omega, symbol) -> np.ndarray:
        values = omega.values if isinstance(omega, ComplexField) else omega
        return sfft.ifft2(sfft.fft2(values) * symbol)

    def cauchy_transform(self, omega):
        return cauchy_transform(self, omega)

    def beurling_transform(self, omega):
        return beurling_transform(self, omega)


@lru_cache(maxsize=32)
def get_plan(spec: GridSpec) -> TransformPlan:
    """Cached plan for ``spec``; plans are immutable and shareable."""
    return TransformPlan.build(spec)


def cauchy_transform(plan: TransformPlan, omega: ComplexField) -> ComplexField:
    """Mean-zero ``g`` with ``d_zbar(g) = omega - mean(omega)``."""
    return ComplexField(plan.spec, plan._apply(omega, plan.cauchy))


def beurling_transform(plan: TransformPlan, omega: ComplexField) -> ComplexField:
    """``S omega = d_z(cauchy_transform(omega))``; unit-modulus symbol conj(xi)/xi."""
    return ComplexField(plan.spec, plan._apply(omega, plan.beurling))


def beurling_array(plan: TransformPlan, values: np.ndarray) -> np.ndarray:
    """Array-level Beurling transform for inner solver loops."""
    return plan._apply(values, plan.beurling)


def cauchy_array(plan: TransformPlan, values: np.ndarray) -> np.ndarray:
    return plan._apply(values, plan.cauchy)
