"""Tests for the dense network, domain stitching, and checkpoint round-trips."""

import numpy as np
import pytest

from shockpinn.autodiff import Tape
from shockpinn.errors import ConfigurationError, DomainError
from shockpinn.network import (
    CHANNELS,
    FieldEval,
    Network,
    load_checkpoint,
    save_checkpoint,
    stitched_forward,
    xavier_init,
)


def test_channel_order():
    assert CHANNELS == ("rho", "u", "v", "p")


# ---------------------------------------------------------------------------
# Construction and parameter bookkeeping
# ---------------------------------------------------------------------------


def test_constructor_validation():
    with pytest.raises(ConfigurationError):
        Network([2, 4])  # no hidden layer
    with pytest.raises(ConfigurationError):
        Network([2, 0, 4])
    with pytest.raises(ConfigurationError):
        Network([2, 4, 4], alpha_clamp=0.0)
    with pytest.raises(ConfigurationError):
        Network([2, 4, 4], alpha_clamp=1.5)
    with pytest.raises(ConfigurationError):
        Network([2, 4, 4], scale_n=-1.0)


def test_parameter_order_interleaves_slopes():
    net = Network([2, 8, 6, 4])
    names = [p.name for p in net.parameters()]
    assert names == ["W1", "b1", "a1", "W2", "b2", "a2", "W3", "b3"]
    assert net.n_hidden == 2
    assert net.n_inputs == 2
    assert net.n_outputs == 4


def test_parameter_count():
    net = Network([2, 8, 4])
    dense = 2 * 8 + 8 + 8 * 4 + 4
    assert net.parameter_count(include_slopes=False) == dense
    assert net.parameter_count() == dense + 1
    assert len(net.state_vector()) == net.parameter_count()


def test_frozen_slopes_excluded_from_training():
    net = Network([2, 8, 4], adaptive=False)
    trainable = net.trainable_parameters()
    assert all(p.name != "a1" for p in trainable)
    assert len(trainable) == len(net.parameters()) - 1
    live = Network([2, 8, 4], adaptive=True)
    assert len(live.trainable_parameters()) == len(live.parameters())


def test_slopes_start_at_unit_effective_gain():
    net = Network([2, 8, 4], scale_n=20.0)
    assert float(net.slopes[0].value) == pytest.approx(1.0 / 20.0)


def test_xavier_init_deterministic():
    a = xavier_init([2, 10, 10, 4], seed=5)
    b = xavier_init([2, 10, 10, 4], seed=5)
    c = xavier_init([2, 10, 10, 4], seed=6)
    assert a.state_vector() == pytest.approx(b.state_vector())
    assert not np.allclose(a.state_vector(), c.state_vector())
    for bias in a.biases:
        assert np.all(bias.value == 0.0)


def test_state_vector_round_trip():
    net = xavier_init([2, 6, 4], seed=1)
    vec = net.state_vector()
    other = Network([2, 6, 4])
    other.load_state_vector(vec)
    assert other.state_vector() == pytest.approx(vec)
    with pytest.raises(ConfigurationError):
        other.load_state_vector(vec[:-1])


def test_copy_is_independent():
    net = xavier_init([2, 6, 4], seed=2)
    twin = net.copy()
    assert twin.state_vector() == pytest.approx(net.state_vector())
    net.weights[0].value = net.weights[0].value + 1.0
    assert not np.allclose(twin.state_vector(), net.state_vector())
    assert twin.scale_n == net.scale_n and twin.adaptive == net.adaptive


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def test_forward_values_shapes_and_gradient_accessor():
    net = xavier_init([2, 8, 4], seed=3)
    pts = np.random.default_rng(0).normal(size=(7, 2))
    ev = net.forward_values(pts)
    assert isinstance(ev, FieldEval)
    assert ev.values.shape == (7, 4)
    assert ev.tangents.shape == (7, 2, 4)
    assert ev.rho == pytest.approx(ev.values[:, 0])
    assert ev.p == pytest.approx(ev.values[:, 3])
    assert ev.gradient("u") == pytest.approx(ev.tangents[:, :, 1])


def test_forward_values_accepts_single_point():
    net = xavier_init([2, 8, 4], seed=3)
    ev = net.forward_values([0.25, -0.5])
    assert ev.values.shape == (1, 4)


def test_forward_rejects_wrong_coordinate_count():
    net = xavier_init([3, 8, 4], seed=3)
    tape = Tape()
    with pytest.raises(ConfigurationError):
        net.forward(tape, tape.input(np.zeros((2, 2))))


def test_density_and_pressure_floored():
    net = Network([2, 4, 4], alpha_clamp=1e-6)
    # zero weights and a strongly negative output bias force the raw
    # density/pressure channels below the floor
    net.biases[-1].value = np.array([-3.0, -3.0, -3.0, -3.0])
    ev = net.forward_values(np.zeros((5, 2)))
    assert ev.rho == pytest.approx(np.full(5, 1e-6))
    assert ev.p == pytest.approx(np.full(5, 1e-6))
    assert ev.u == pytest.approx(np.full(5, -3.0))  # velocities unclamped
    assert ev.v == pytest.approx(np.full(5, -3.0))


def test_forward_tangents_match_finite_differences():
    net = xavier_init([2, 10, 10, 4], seed=9)
    pts = np.random.default_rng(1).normal(size=(4, 2))
    ev = net.forward_values(pts)
    h = 1e-6
    for k in range(2):
        dp = np.zeros(2)
        dp[k] = h
        up = net.forward_values(pts + dp).values
        dn = net.forward_values(pts - dp).values
        fd = (up - dn) / (2 * h)
        assert ev.tangents[:, k, :] == pytest.approx(fd, abs=1e-7)


def test_activation_slope_influences_output():
    net = xavier_init([2, 8, 4], seed=4)
    pts = np.array([[0.3, 0.7]])
    before = net.forward_values(pts).values.copy()
    net.slopes[0].value = np.float64(0.2)
    after = net.forward_values(pts).values
    assert not np.allclose(before, after)


# ---------------------------------------------------------------------------
# Stitching
# ---------------------------------------------------------------------------


def _left(pts):
    return pts[:, 0] <= 0.5


def _right(pts):
    return pts[:, 0] >= 0.5


def test_stitched_single_member_matches_forward():
    net = xavier_init([2, 8, 4], seed=5)
    pts = np.random.default_rng(2).uniform(size=(9, 2))
    direct = net.forward_values(pts)
    stitched = stitched_forward([(net, lambda p: np.ones(len(p), dtype=bool))], pts)
    assert stitched.values == pytest.approx(direct.values)
    assert stitched.tangents == pytest.approx(direct.tangents)


def test_stitched_interface_points_are_averaged():
    a = xavier_init([2, 6, 4], seed=6)
    b = xavier_init([2, 6, 4], seed=7)
    pts = np.array([[0.2, 0.5], [0.5, 0.5], [0.8, 0.5]])
    out = stitched_forward([(a, _left), (b, _right)], pts)
    assert out.values[0] == pytest.approx(a.forward_values(pts[:1]).values[0])
    assert out.values[2] == pytest.approx(b.forward_values(pts[2:]).values[0])
    mean = 0.5 * (
        a.forward_values(pts[1:2]).values[0] + b.forward_values(pts[1:2]).values[0]
    )
    assert out.values[1] == pytest.approx(mean)


def test_stitched_orphan_point_raises():
    net = xavier_init([2, 6, 4], seed=8)
    with pytest.raises(DomainError, match="outside every subdomain"):
        stitched_forward([(net, _left)], np.array([[0.9, 0.5]]))


def test_stitched_validates_members():
    net = xavier_init([2, 6, 4], seed=8)
    with pytest.raises(ConfigurationError):
        stitched_forward([], np.zeros((2, 2)))
    with pytest.raises(ConfigurationError):
        stitched_forward([(net, lambda p: np.ones(3, dtype=bool))], np.zeros((2, 2)))
    net3 = xavier_init([3, 6, 4], seed=8)
    with pytest.raises(ConfigurationError):
        stitched_forward([(net3, _left)], np.zeros((2, 2)))


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_round_trip_bit_exact(tmp_path):
    net = xavier_init([2, 12, 12, 4], seed=10, scale_n=5.0, alpha_clamp=1e-5)
    net.slopes[0].value = np.float64(0.123456789012345)
    path = tmp_path / "net.ckpt"
    save_checkpoint(net, path)
    back = load_checkpoint(path)
    assert np.array_equal(back.state_vector(), net.state_vector())
    assert back.sizes == net.sizes
    assert back.scale_n == net.scale_n
    assert back.alpha_clamp == net.alpha_clamp
    assert back.adaptive == net.adaptive
    assert back.seed == net.seed


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_text("not json\n")
    with pytest.raises(ConfigurationError, match="header"):
        load_checkpoint(path)
    path.write_text('{"format": "something-else"}\n')
    with pytest.raises(ConfigurationError, match="format"):
        load_checkpoint(path)


def test_checkpoint_rejects_bad_values(tmp_path):
    net = xavier_init([2, 4, 4], seed=11)
    path = tmp_path / "net.ckpt"
    save_checkpoint(net, path)
    lines = path.read_text().splitlines()
    lines[3] = "bogus"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ConfigurationError, match="not a number"):
        load_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path):
    net = xavier_init([2, 4, 4], seed=12)
    path = tmp_path / "net.ckpt"
    save_checkpoint(net, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-2]) + "\n")
    with pytest.raises(ConfigurationError, match="count"):
        load_checkpoint(path)
