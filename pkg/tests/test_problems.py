import numpy as np
import pytest

from src.constraints import DIFFUSION_TRIAL, HEAT_SQUARE_TRIAL
from src.errors import ConfigurationError
from src.problems import (
    RandomFieldSpec,
    build_problem,
    conductivity,
    conductivity_gradient,
    default_probes,
    diffusion_initial_condition,
    heat_forcing,
    nonsmooth_diffusion_coeff,
    smooth_diffusion_coeff,
)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def test_smooth_coefficient_base_value():
    """Test a = 0.26 and a_x = 0 when every mode is off."""
    x = np.linspace(0.0, 1.0, 7)
    a, a_x = smooth_diffusion_coeff(x, np.zeros(10))
    np.testing.assert_allclose(a, 0.26)
    np.testing.assert_allclose(a_x, 0.0)


def test_smooth_coefficient_single_mode():
    """Test a = 0.31 at x = 0 with d = 1 and p = 1."""
    a, _ = smooth_diffusion_coeff(0.0, np.array([1.0]))
    assert a == pytest.approx(0.31)


def test_nonsmooth_coefficient_values():
    """Test the nonsmooth field's base and single-mode values."""
    a, _ = nonsmooth_diffusion_coeff(0.4, np.zeros(5))
    assert a == pytest.approx(0.2)
    a, _ = nonsmooth_diffusion_coeff(0.0, np.array([1.0]))
    assert a == pytest.approx(0.3)


def test_nonsmooth_coefficient_is_cos_squared_series(rng):
    """Test a = 0.2 + sum_j (0.1 / j) cos^2(pi j x / 2) p_j and that it is linear in p."""
    x = rng.uniform(size=15)
    p, q = rng.uniform(size=6), rng.uniform(size=6)
    j = np.arange(1, 7)
    expected = 0.2 + np.sum(0.1 / j * np.cos(0.5 * np.pi * np.outer(x, j)) ** 2 * p, axis=1)
    np.testing.assert_allclose(nonsmooth_diffusion_coeff(x, p)[0], expected, rtol=1e-13)
    combined = nonsmooth_diffusion_coeff(x, 2.0 * p + q)[0] - 0.2
    parts = 2.0 * (nonsmooth_diffusion_coeff(x, p)[0] - 0.2) + (nonsmooth_diffusion_coeff(x, q)[0] - 0.2)
    np.testing.assert_allclose(combined, parts, rtol=1e-12)


@pytest.mark.parametrize("evaluator,d", [(smooth_diffusion_coeff, 100), (nonsmooth_diffusion_coeff, 50)])
def test_diffusion_derivative_matches_differences(evaluator, d, rng):
    """Test a_x against central differences."""
    p = rng.uniform(size=d)
    x = rng.uniform(0.05, 0.95, size=20)
    h = 1e-6
    _, a_x = evaluator(x, p)
    fd = (evaluator(x + h, p)[0] - evaluator(x - h, p)[0]) / (2 * h)
    np.testing.assert_allclose(a_x, fd, rtol=1e-6, atol=1e-8)


def test_conductivity_values():
    """Test k at p = 0, on the axes and at a closed-form point."""
    assert conductivity(0.3, -0.7, np.zeros(4)) == pytest.approx(1.0)
    p = np.array([0.5, 1.0, 0.25])
    assert conductivity(0.0, 0.8, p) == pytest.approx(1.0 + 0.5 + 0.5 + 0.25 / 3)
    expected = 1.0 + np.cos(np.pi / 4) ** 2 + 0.5 * np.cos(np.pi * 2**1.5 / 4) ** 2
    assert conductivity(1.0, 1.0, np.array([1.0, 1.0])) == pytest.approx(expected)


def test_conductivity_gradient_matches_differences(rng):
    """Test (k_x, k_y) against central differences."""
    p = rng.uniform(size=30)
    x, y = rng.uniform(-1, 1, size=(2, 15))
    h = 1e-6
    k_x, k_y = conductivity_gradient(x, y, p)
    np.testing.assert_allclose(k_x, (conductivity(x + h, y, p) - conductivity(x - h, y, p)) / (2 * h), rtol=1e-6, atol=1e-7)
    np.testing.assert_allclose(k_y, (conductivity(x, y + h, p) - conductivity(x, y - h, p)) / (2 * h), rtol=1e-6, atol=1e-7)


def test_heat_forcing():
    """Test the square and hole forcing terms."""
    assert heat_forcing(0.5, -0.5, "heat-square") == pytest.approx(25.0)
    assert heat_forcing(0.0, 0.9, "heat-square") == 0.0
    np.testing.assert_array_equal(heat_forcing(np.zeros(3), np.ones(3), "heat-hole"), [2.0, 2.0, 2.0])
    with pytest.raises(ConfigurationError):
        heat_forcing(0.0, 0.0, "diffusion-smooth")


def test_initial_condition_matches_walls():
    """Test the initial profile vanishes at both walls."""
    np.testing.assert_array_equal(diffusion_initial_condition([0.0, 1.0]), [0.0, 0.0])
    assert diffusion_initial_condition(0.5) == pytest.approx(2.5)


@pytest.mark.parametrize(
    "kind,base,d",
    [("smooth-diffusion", 0.26, 100), ("nonsmooth-diffusion", 0.2, 50), ("conductivity", 1.0, 50)],
)
def test_fields_are_positive(kind, base, d, rng):
    """Test the analytic bound and a large empirical sample both stay positive."""
    field = RandomFieldSpec(kind, base, d)
    bound = field.positivity_bound()
    assert bound > 0
    assert field.empirical_minimum(100_000, rng) > max(bound, 0.01) - 1e-12


def test_field_evaluate_uses_spatial_coordinate():
    """Test diffusion fields read x from the second column of (t, x)."""
    field = RandomFieldSpec("smooth-diffusion", 0.26, 3)
    p = np.array([[0.2, 0.4, 0.6]])
    value, gradient = field.evaluate(np.array([[0.9, 0.3]]), p)
    a, a_x = smooth_diffusion_coeff(np.array([0.3]), p)
    np.testing.assert_array_equal(value, a)
    np.testing.assert_array_equal(gradient[:, 0], a_x)


def test_build_heat_hole_defaults():
    """Test heat-hole is soft and variational with a heavy boundary weight."""
    problem = build_problem("heat-hole")
    assert problem.soft
    assert problem.loss_mode == "variational"
    assert problem.weights.lambda_bc == 1000.0
    assert problem.d == 30
    assert problem.domain.hole_radius == 0.3
    assert problem.trial is None


def test_build_diffusion_smooth_defaults():
    """Test diffusion-smooth uses the hard trial, c = 3 and d = 100."""
    problem = build_problem("diffusion-smooth")
    assert problem.trial is DIFFUSION_TRIAL
    assert problem.source == 3.0
    assert problem.d == 100
    assert problem.input_dim == 102
    np.testing.assert_array_equal(problem.forcing(np.zeros((4, 2))), np.full(4, 3.0))
    assert problem.initial_condition(0.5) == pytest.approx(2.5)


def test_build_override_dimension():
    """Test overriding d keeps the structure with fewer modes."""
    problem = build_problem("heat-square", {"d": 5, "constraint": None})
    assert problem.d == 5
    assert problem.field.d == 5
    assert problem.trial is HEAT_SQUARE_TRIAL
    assert len(problem.field.amplitudes) == 5


def test_build_soft_drops_trial():
    """Test soft mode carries no trial form and no initial weight on steady problems."""
    problem = build_problem("heat-square", {"constraint": "soft", "lambda_ic": 5.0})
    assert problem.trial is None
    assert problem.weights.lambda_ic == 0.0


@pytest.mark.parametrize(
    "tag,overrides",
    [
        ("diffusion-smooth", {"loss": "variational"}),
        ("heat-hole", {"constraint": "hard"}),
        ("heat-square", {"width": 3}),
        ("heat-square", {"loss": "weak"}),
        ("wave", None),
    ],
)
def test_build_rejects_inconsistent_settings(tag, overrides):
    """Test invalid tags and overrides raise configuration errors."""
    with pytest.raises(ConfigurationError):
        build_problem(tag, overrides)


def test_default_probes_inside_domains():
    """Test every default probe lies in its problem's domain."""
    for tag in ("diffusion-smooth", "heat-square", "heat-hole"):
        problem = build_problem(tag)
        probes = default_probes(problem)
        assert probes.shape[1] == 2
        assert np.all(problem.domain.contains(probes))
