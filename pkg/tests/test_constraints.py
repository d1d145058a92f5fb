import numpy as np
import pytest

from src import autodiff
from src.autodiff import Jet2, Tape
from src.constraints import (
    DIFFUSION_TRIAL,
    HEAT_SQUARE_TRIAL,
    coordinate_jets,
    hard_wrap,
    soft_penalty,
    wrap_values,
)
from src.errors import ConfigurationError
from src.models import PenaltyWeights
from src.problems import build_problem
from src.resnet import NetworkConfig, SurrogateOutput, init_params
from src.surrogate import Surrogate


@pytest.fixture
def net_values():
    return np.random.default_rng(0).normal(size=11)


def test_diffusion_trial_matches_initial_condition(net_values):
    """Test the diffusion trial equals 10(x - x^2) at t = 0 for any network."""
    x = np.linspace(0.0, 1.0, 11)
    points = np.column_stack([np.zeros(11), x])
    np.testing.assert_array_equal(wrap_values(DIFFUSION_TRIAL, net_values, points), 10.0 * (x - x * x))


def test_diffusion_trial_vanishes_at_walls(net_values):
    """Test the diffusion trial is exactly zero at x = 0 and x = 1."""
    t = np.linspace(0.0, 1.0, 11)
    for wall in (0.0, 1.0):
        points = np.column_stack([t, np.full(11, wall)])
        assert not wrap_values(DIFFUSION_TRIAL, net_values, points).any()


def test_heat_square_trial_vanishes_on_edges(net_values):
    """Test (1 - x^2)(1 - y^2) u_DNN is zero on the square boundary."""
    s = np.linspace(-1.0, 1.0, 11)
    for edge in (-1.0, 1.0):
        assert not wrap_values(HEAT_SQUARE_TRIAL, net_values, np.column_stack([np.full(11, edge), s])).any()
        assert not wrap_values(HEAT_SQUARE_TRIAL, net_values, np.column_stack([s, np.full(11, edge)])).any()


def test_coordinate_jets_seed_one_direction():
    """Test only the seeded coordinate carries a unit first derivative."""
    points = np.array([[0.2, 0.4], [0.6, 0.8]])
    t, x = coordinate_jets(points, direction=1)
    np.testing.assert_array_equal(t.v, [0.2, 0.6])
    assert t.d1 == 0.0
    assert x.d1 == 1.0
    assert x.d2 == 0.0


def test_hard_wrap_chain_rule():
    """Test hard_wrap applies the product rule to a known network jet."""
    points = np.array([[0.5, 0.25]])
    net_value = np.array([2.0])
    net_jet = Jet2(net_value, np.array([3.0]), np.array([4.0]))
    out = hard_wrap(HEAT_SQUARE_TRIAL, SurrogateOutput(net_value, {0: net_jet}), points)
    # u = (1 - x^2)(1 - y^2) n, differentiated along x
    g, g1, g2 = 0.75 * 0.9375, -2 * 0.5 * 0.9375, -2 * 0.9375
    jet = out.jets[0]
    assert float(jet.v[0]) == pytest.approx(g * 2.0)
    assert float(jet.d1[0]) == pytest.approx(g1 * 2.0 + g * 3.0)
    assert float(jet.d2[0]) == pytest.approx(g2 * 2.0 + 2 * g1 * 3.0 + g * 4.0)
    np.testing.assert_allclose(out.value, jet.v)


def test_soft_penalty_zero_residuals():
    """Test satisfied constraints carry no penalty."""
    assert soft_penalty(0.0, 0.0, PenaltyWeights(1.0, 1000.0)) == 0.0


def test_soft_penalty_weights():
    """Test lambda_ic r_ic^2 + lambda_bc r_bc^2 with r = (1, 2)."""
    assert soft_penalty(1.0, 2.0, PenaltyWeights(1.0, 1000.0)) == pytest.approx(4001.0)


def test_soft_penalty_hole_boundary_value():
    """Test u = 0.05 on the hole with lambda_bc = 1000 costs 2.5."""
    assert soft_penalty(0.0, 0.05, PenaltyWeights(0.0, 1000.0)) == pytest.approx(2.5)


def test_soft_penalty_on_tape():
    """Test the penalty gradient w.r.t. the boundary residual is 2 lambda r."""
    tape = Tape()
    r = tape.parameter(np.array([0.1, -0.2]))
    penalty = autodiff.total(soft_penalty(0.0, r, PenaltyWeights(0.0, 10.0)))
    grad = autodiff.backward(tape, penalty.id)
    np.testing.assert_allclose(grad.values, [2.0, -4.0])


def test_negative_weights_rejected():
    """Test penalty weights must be nonnegative."""
    with pytest.raises(ConfigurationError):
        PenaltyWeights(-1.0, 1.0)


def _manifold_points(tag, rng, n):
    """Points on the constrained part of the boundary with the values u must take there."""
    s = rng.uniform(size=n)
    side = rng.integers(0, 4 if tag == "heat-square" else 3, size=n)
    if tag == "heat-square":
        s = 2.0 * s - 1.0
        edge = np.where(side % 2 == 0, -1.0, 1.0)
        points = np.where((side < 2)[:, None], np.column_stack([edge, s]), np.column_stack([s, edge]))
        return points, np.zeros(n)
    points = np.column_stack([s, np.where(side == 1, 0.0, 1.0)])
    points[side == 0] = np.column_stack([np.zeros(np.sum(side == 0)), s[side == 0]])
    expected = np.where(side == 0, 10.0 * (points[:, 1] - points[:, 1] ** 2), 0.0)
    return points, expected


@pytest.mark.parametrize("tag", ["diffusion-smooth", "heat-square"])
def test_hard_constraints_hold_for_random_parameters(tag):
    """Test a hard-constrained surrogate meets its initial and boundary data for many draws."""
    problem = build_problem(tag, {"d": 3})
    network = NetworkConfig(input_dim=problem.input_dim, hidden_width=16, num_layers=3)
    surrogate = Surrogate(problem, network)
    params = init_params(network, seed=4)
    rng = np.random.default_rng(21)
    points, expected = _manifold_points(tag, rng, 10_000)
    for _ in range(10):
        p = np.tile(rng.uniform(size=3), (len(points), 1))
        assert np.max(np.abs(surrogate.predict(params, points, p) - expected)) < 1e-12
