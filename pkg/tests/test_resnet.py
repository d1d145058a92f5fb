import numpy as np
import pytest

from src import autodiff
from src.autodiff import gradient_check
from src.errors import ConfigurationError, UsageError
from src.resnet import (
    NetworkConfig,
    NetworkParams,
    build_layout,
    forward,
    forward_jet,
    forward_jets,
    init_params,
    parameter_count,
)


@pytest.fixture
def small_config():
    """Five hidden layers of width 16 with blocks of two."""
    return NetworkConfig(input_dim=4, hidden_width=16, num_layers=5, block_size=2)


@pytest.fixture
def small_params(small_config):
    return init_params(small_config, seed=3)


def test_shortcut_schedule():
    """Test residual connections link layers 1 -> 3 -> 5 for blocks of two."""
    config = NetworkConfig(input_dim=2, num_layers=6, block_size=2)
    assert [config.shortcut_source(i) for i in range(1, 7)] == [None, None, 1, None, 3, None]


def test_projection_only_when_widths_differ():
    """Test a projection slot exists only where the shortcut changes width."""
    config = NetworkConfig(input_dim=2, num_layers=3, block_size=2, layer_widths=(8, 8, 12))
    names = [slot.name for slot in build_layout(config)]
    assert "hidden3.projection" in names
    same = NetworkConfig(input_dim=2, num_layers=3, block_size=2, layer_widths=(8, 8, 8))
    assert "hidden3.projection" not in [slot.name for slot in build_layout(same)]


@pytest.mark.parametrize(
    "config",
    [
        NetworkConfig(input_dim=3, hidden_width=5, num_layers=1),
        NetworkConfig(input_dim=12, hidden_width=64, num_layers=6, block_size=2),
        NetworkConfig(input_dim=2, num_layers=4, block_size=3, layer_widths=(4, 6, 6, 9)),
    ],
)
def test_parameter_count_matches_layout(config):
    """Test the closed-form count equals the flat layout size."""
    assert parameter_count(config) == sum(slot.size for slot in build_layout(config))
    assert len(init_params(config, 0).flat) == parameter_count(config)


def test_relu_rejected():
    """Test activations without a useful second derivative are refused."""
    with pytest.raises(ConfigurationError):
        NetworkConfig(input_dim=2, activation="relu")


def test_init_is_deterministic(small_config):
    """Test initialization depends on the seed alone."""
    a = init_params(small_config, 7)
    b = init_params(small_config, 7)
    c = init_params(small_config, 8)
    np.testing.assert_array_equal(a.flat, b.flat)
    assert not np.array_equal(a.flat, c.flat)
    for name, array in a.structured().items():
        if name.endswith(".bias"):
            assert not array.any()


def test_structured_round_trip(small_params):
    """Test flat and structured views describe the same parameters."""
    rebuilt = NetworkParams.from_structured(small_params.config, small_params.structured())
    np.testing.assert_array_equal(rebuilt.flat, small_params.flat)


def test_forward_single_and_batch(small_params):
    """Test a single input gives a float and a batch gives one value per row."""
    rng = np.random.default_rng(1)
    batch = rng.uniform(size=(5, 4))
    values = forward(small_params, batch)
    assert values.shape == (5,)
    assert isinstance(forward(small_params, batch[2]), float)
    assert forward(small_params, batch[2]) == values[2]


def test_forward_rejects_wrong_width(small_params):
    """Test inputs with the wrong number of columns are refused."""
    with pytest.raises(UsageError):
        forward(small_params, np.zeros((2, 3)))


def test_jet_value_path_equals_forward(small_params):
    """Test taped jets reproduce the plain forward values bitwise."""
    batch = np.random.default_rng(2).uniform(size=(6, 4))
    out = forward_jets(small_params, batch, [0, 1])
    np.testing.assert_array_equal(autodiff.value_of(out.value), forward(small_params, batch))
    assert out.tape is not None


@pytest.mark.parametrize("activation", ["tanh", "sin"])
def test_jets_match_five_point_differences(activation):
    """Test first and second directional derivatives against 5-point stencils."""
    config = NetworkConfig(input_dim=3, hidden_width=16, num_layers=4, activation=activation)
    params = init_params(config, seed=11)
    rng = np.random.default_rng(5)
    points = rng.uniform(-1, 1, size=(20, 3))
    h = 1e-3
    for direction in range(3):
        out = forward_jets(params, points, [direction], weights=params.structured())
        jet = out.jets[direction]
        shift = np.zeros(3)
        shift[direction] = h
        f = [forward(params, points + k * shift) for k in (-2, -1, 0, 1, 2)]
        d1 = (f[0] - 8 * f[1] + 8 * f[3] - f[4]) / (12 * h)
        d2 = (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12 * h * h)
        np.testing.assert_allclose(jet.d1, d1, rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(jet.d2, d2, rtol=1e-6, atol=1e-6)


def test_forward_jet_single_direction(small_params):
    """Test forward_jet is the one-direction case of forward_jets."""
    point = np.array([0.1, 0.2, 0.3, 0.4])
    single = forward_jet(small_params, point, 1)
    both = forward_jets(small_params, point, [0, 1])
    np.testing.assert_array_equal(autodiff.value_of(single.jets[1].d2), autodiff.value_of(both.jets[1].d2))


def test_forward_jets_rejects_bad_direction(small_params):
    """Test directions must index the input."""
    with pytest.raises(UsageError):
        forward_jets(small_params, np.zeros(4), [4])


def test_second_derivative_parameter_gradient(small_config):
    """Test gradients of summed second derivatives w.r.t. theta."""
    params = init_params(small_config, seed=5)
    points = np.random.default_rng(9).uniform(size=(3, 4))

    def f(tape, theta):
        weights = params.views(theta)
        out = forward_jets(params, points, [1], tape=tape, weights=weights)
        return autodiff.total(out.jets[1].d2)

    coordinates = range(0, len(params.flat), 37)
    assert gradient_check(f, params.flat, 1e-5, coordinates) < 1e-5


def _zeroed(config, **arrays):
    structured = {slot.name: np.zeros(slot.shape) for slot in build_layout(config)}
    structured.update({name: np.asarray(value, dtype=np.float64) for name, value in arrays.items()})
    return NetworkParams.from_structured(config, structured)


def test_zero_weights_give_output_bias(small_config):
    """Test a network with every weight zero returns its output bias with flat jets."""
    params = _zeroed(small_config, **{"output.bias": [2.5]})
    points = np.random.default_rng(4).uniform(-3, 3, size=(7, 4))
    np.testing.assert_array_equal(forward(params, points), np.full(7, 2.5))
    out = forward_jets(params, points, [0, 3], weights=params.structured())
    for direction in (0, 3):
        jet = out.jets[direction]
        np.testing.assert_array_equal(jet.v, np.full(7, 2.5))
        assert not np.any(jet.d1)
        assert not np.any(jet.d2)


def test_single_hidden_layer_by_hand():
    """Test a 2x3x1 network against the written-out matrix arithmetic."""
    config = NetworkConfig(input_dim=2, hidden_width=3, num_layers=1)
    w1 = [[0.5, -1.0, 0.25], [2.0, 0.0, -0.75]]
    b1 = [0.1, -0.2, 0.3]
    w2 = [1.5, -0.5, 2.0]
    params = _zeroed(
        config,
        **{"hidden1.weight": w1, "hidden1.bias": b1, "output.weight": w2, "output.bias": [-0.4]},
    )
    x = [0.3, -0.6]
    hidden = [np.tanh(x[0] * w1[0][j] + x[1] * w1[1][j] + b1[j]) for j in range(3)]
    expected = hidden[0] * w2[0] + hidden[1] * w2[1] + hidden[2] * w2[2] - 0.4
    assert forward(params, np.array(x)) == pytest.approx(expected, rel=1e-14)


def test_zero_residual_block_is_activated_shortcut():
    """Test a block whose own weights vanish outputs the activation of its shortcut."""
    config = NetworkConfig(input_dim=2, hidden_width=4, num_layers=3, block_size=2)
    params = init_params(config, seed=2)
    params["hidden3.weight"][:] = 0.0
    params["hidden3.bias"][:] = 0.0
    weights = params.structured()
    x = np.array([[0.4, -0.8], [1.2, 0.1]])
    shortcut = np.tanh(x @ weights["hidden1.weight"] + weights["hidden1.bias"])
    expected = np.tanh(shortcut) @ weights["output.weight"] + weights["output.bias"]
    np.testing.assert_allclose(forward(params, x), expected, rtol=1e-14)


def test_dead_input_has_zero_jet():
    """Test seeding a coordinate the first layer ignores gives vanishing derivatives."""
    config = NetworkConfig(input_dim=3, hidden_width=8, num_layers=4)
    params = init_params(config, seed=9)
    params["hidden1.weight"][2, :] = 0.0
    points = np.random.default_rng(3).uniform(size=(5, 3))
    jet = forward_jets(params, points, [2], weights=params.structured()).jets[2]
    assert not np.any(jet.d1)
    assert not np.any(jet.d2)


def test_glorot_variance_of_wide_layer():
    """Test a 256x256 weight matrix has variance close to 2 / (256 + 256)."""
    config = NetworkConfig(input_dim=256, hidden_width=256, num_layers=1)
    weights = init_params(config, seed=0)["hidden1.weight"]
    assert weights.shape == (256, 256)
    assert np.var(weights) == pytest.approx(2.0 / 512, rel=0.1)


def test_parameter_count_of_deep_wide_network():
    """Test 20 hidden layers of width 256 on 52 inputs need no projections."""
    config = NetworkConfig(input_dim=52, hidden_width=256, num_layers=20, block_size=2)
    layout = build_layout(config)
    assert not any(slot.name.endswith(".projection") for slot in layout)
    expected = 53 * 256 + 19 * 257 * 256 + 257
    assert parameter_count(config) == expected == 1263873
    assert sum(slot.size for slot in layout) == expected
