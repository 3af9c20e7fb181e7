"""Numerical laboratory for Beltrami equations and linear families of
quasiconformal mappings on a periodic cell."""

from .beltrami_solver import (
    BeltramiCoefficients,
    QCSolution,
    ReducedCoefficient,
    component_relations,
    reduced_to_general,
    residual_general,
    residual_reduced,
    solve_principal,
    solve_reduced,
)
from .field_grid import ComplexField, GridSpec, coordinate_field, d_z, d_zbar
from .linear_family import (
    LinearFamilyPair,
    chain_rule_identity_residual,
    degenerate_pair_detect,
    factorize,
    jacobian_pairing,
    lambda_sign_field,
)
from .singular_transforms import beurling_transform, cauchy_transform, get_plan

__version__ = "0.1.0"

__all__ = [
    "BeltramiCoefficients", "ComplexField", "GridSpec", "LinearFamilyPair", "QCSolution",
    "ReducedCoefficient", "beurling_transform", "cauchy_transform",
    "chain_rule_identity_residual", "component_relations", "coordinate_field", "d_z",
    "d_zbar", "degenerate_pair_detect", "factorize", "get_plan", "jacobian_pairing",
    "lambda_sign_field", "reduced_to_general", "residual_general", "residual_reduced",
    "solve_principal", "solve_reduced",
]
