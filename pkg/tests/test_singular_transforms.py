import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beltrami_lab.field_grid import (
    ComplexField,
    GridSpec,
    constant_field,
    coordinate_field,
    d_z,
    d_zbar,
    l2_norm,
    relative_l2,
)
from beltrami_lab.singular_transforms import (
    TransformPlan,
    beurling_array,
    beurling_transform,
    cauchy_array,
    cauchy_transform,
    get_plan,
)


def white_noise(spec, seed):
    rng = np.random.default_rng(seed)
    return ComplexField(spec, rng.normal(size=(spec.n, spec.n))
                        + 1j * rng.normal(size=(spec.n, spec.n)))


@pytest.fixture
def plan():
    return get_plan(GridSpec(32))


def test_zero_input(plan):
    zero = constant_field(plan.spec, 0.0)
    assert np.all(cauchy_transform(plan, zero).values == 0)
    assert np.all(beurling_transform(plan, zero).values == 0)


def test_cauchy_single_mode(plan):
    x = coordinate_field(plan.spec).values.real
    omega = ComplexField(plan.spec, np.exp(1j * x))
    g = cauchy_transform(plan, omega)
    assert np.allclose(g.values, np.exp(1j * x) * 2 / 1j, atol=1e-13)
    assert relative_l2(d_zbar(g), omega) < 1e-13


@pytest.mark.parametrize("c", [1.0, -2 + 0.5j])
def test_cauchy_kills_constants(plan, c):
    g = cauchy_transform(plan, constant_field(plan.spec, c))
    assert np.max(np.abs(g.values)) < 1e-14


def test_beurling_single_mode(plan):
    x = coordinate_field(plan.spec).values.real
    omega = ComplexField(plan.spec, np.exp(1j * x))
    s = beurling_transform(plan, omega)
    assert np.allclose(s.values, omega.values, atol=1e-13)
    assert np.allclose(np.abs(s.values), 1.0)


def test_beurling_isometry_mean_zero(plan):
    omega = white_noise(plan.spec, 1)
    omega = omega - omega.mean()
    assert abs(l2_norm(beurling_transform(plan, omega)) / l2_norm(omega) - 1) < 1e-12


def test_symbols_have_unit_modulus(plan):
    mod = np.abs(plan.beurling)
    assert mod[0, 0] == 0
    mod[0, 0] = 1
    assert np.allclose(mod, 1.0, atol=1e-15)


def test_intertwining():
    spec = GridSpec(64)
    z = coordinate_field(spec).values
    x, y = z.real, z.imag
    h = ComplexField(spec, np.exp(np.cos(x) * np.sin(2 * y)) + 1j * np.sin(x - y))
    plan = get_plan(spec)
    assert relative_l2(beurling_transform(plan, d_zbar(h)), d_z(h)) < 1e-10


def test_beurling_is_dz_of_cauchy():
    spec = GridSpec(32)
    plan = get_plan(spec)
    omega = white_noise(spec, 5)
    assert relative_l2(beurling_transform(plan, omega),
                       d_z(cauchy_transform(plan, omega))) < 1e-12


def test_cauchy_inverts_dzbar_on_white_noise():
    # includes the Nyquist rows, where a symmetrized derivative would vanish
    spec = GridSpec(32)
    plan = get_plan(spec)
    omega = white_noise(spec, 11)
    target = omega - omega.mean()
    assert relative_l2(d_zbar(cauchy_transform(plan, omega)), target) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.complex_numbers(max_magnitude=10, allow_nan=False),
       st.complex_numbers(max_magnitude=10, allow_nan=False))
def test_linearity(seed, a, b):
    spec = GridSpec(16)
    plan = get_plan(spec)
    w1, w2 = white_noise(spec, seed), white_noise(spec, seed + 1)
    lhs = beurling_transform(plan, a * w1 + b * w2).values
    rhs = a * beurling_transform(plan, w1).values + b * beurling_transform(plan, w2).values
    scale = 1 + abs(a) + abs(b)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale * np.max(np.abs(w1.values) + np.abs(w2.values))


def test_plan_cache_and_immutability():
    spec = GridSpec(32)
    assert get_plan(spec) is get_plan(GridSpec(32))
    plan = get_plan(spec)
    with pytest.raises(ValueError):
        plan.cauchy[0, 0] = 1.0
    fresh = TransformPlan.build(spec)
    assert np.array_equal(fresh.beurling, plan.beurling)


def test_array_helpers_match(plan):
    omega = white_noise(plan.spec, 2)
    assert np.array_equal(beurling_array(plan, omega.values),
                          beurling_transform(plan, omega).values)
    assert np.array_equal(cauchy_array(plan, omega.values),
                          plan.cauchy_transform(omega).values)


def test_inputs_unmodified(plan):
    omega = white_noise(plan.spec, 3)
    before = omega.values.copy()
    beurling_transform(plan, omega)
    cauchy_transform(plan, omega)
    assert np.array_equal(before, omega.values)
