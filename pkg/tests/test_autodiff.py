"""Tests for the dual-number/tape autodiff engine.

Covers the forward-only Dual algebra against closed-form derivatives, the
taped reverse sweep against central finite differences (including the
second-derivative path where a loss consumes coordinate tangents), the
reduction nodes, and the error contracts.
"""

import numpy as np
import pytest

from shockpinn.autodiff import (
    AutodiffError,
    Dual,
    Node,
    Param,
    Tape,
    evaluate_with_input_derivatives,
    finite_difference_check,
    seed_input_duals,
)


# ---------------------------------------------------------------------------
# Dual: forward-mode algebra
# ---------------------------------------------------------------------------


def test_dual_add_mul_against_closed_form():
    x = Dual(2.0, np.array([1.0, 0.0]))
    y = Dual(3.0, np.array([0.0, 1.0]))
    z = x * y + x  # z = xy + x, dz/dx = y + 1, dz/dy = x
    assert z.value == pytest.approx(8.0)
    assert z.tan == pytest.approx([4.0, 2.0])


def test_dual_div_and_pow():
    x = Dual(2.0, np.array([1.0]))
    q = 1.0 / x  # d(1/x)/dx = -1/x^2
    assert q.value == pytest.approx(0.5)
    assert q.tan == pytest.approx([-0.25])
    c = x**3
    assert c.value == pytest.approx(8.0)
    assert c.tan == pytest.approx([12.0])
    r = x**-0.5
    assert r.value == pytest.approx(2.0**-0.5)
    assert r.tan == pytest.approx([-0.5 * 2.0**-1.5])


def test_dual_transcendentals():
    x = Dual(0.7, np.array([1.0]))
    assert x.tanh().value == pytest.approx(np.tanh(0.7))
    assert x.tanh().tan == pytest.approx([1.0 - np.tanh(0.7) ** 2])
    assert x.exp().tan == pytest.approx([np.exp(0.7)])
    assert x.log().tan == pytest.approx([1.0 / 0.7])
    assert x.sin().tan == pytest.approx([np.cos(0.7)])
    assert x.cos().tan == pytest.approx([-np.sin(0.7)])


def test_dual_scalar_mixing_and_sub():
    x = Dual(1.5, np.array([1.0]))
    z = 2.0 - 3.0 * x  # dz/dx = -3
    assert z.value == pytest.approx(-2.5)
    assert z.tan == pytest.approx([-3.0])
    w = 6.0 / x
    assert w.value == pytest.approx(4.0)
    assert w.tan == pytest.approx([-6.0 / 1.5**2])


def test_dual_broadcasting_aligns_tangents():
    # batch of 3 values against a scalar dual
    xs = Dual(np.array([1.0, 2.0, 3.0]), np.ones((1, 3)))
    s = Dual(2.0, np.array([0.5]))
    z = xs * s
    assert z.value == pytest.approx([2.0, 4.0, 6.0])
    # d(x*s) = s*dx + x*ds = 2*1 + x*0.5
    assert z.tan == pytest.approx(np.array([[2.5, 3.0, 3.5]]))


def test_dual_mixed_direction_counts_rejected():
    x = Dual(1.0, np.array([1.0]))
    y = Dual(1.0, np.array([1.0, 0.0]))
    with pytest.raises(AutodiffError):
        _ = x + y


def test_dual_clamp_min_picks_variable_branch_at_tie():
    below = Dual(-1.0, np.array([1.0])).clamp_min(0.0)
    assert below.value == pytest.approx(0.0)
    assert below.tan == pytest.approx([0.0])
    at_tie = Dual(0.0, np.array([1.0])).clamp_min(0.0)
    assert at_tie.tan == pytest.approx([1.0])
    above = Dual(2.0, np.array([1.0])).clamp_min(0.0)
    assert above.tan == pytest.approx([1.0])


def test_dual_tangent_extraction_is_coordinate_constant():
    x, y = seed_input_duals([1.2, -0.3])
    f = x * x * y
    fx = f.tangent(0)
    assert fx.value == pytest.approx(2.0 * 1.2 * -0.3)
    assert fx.tan == pytest.approx([0.0, 0.0])


def test_dual_tangent_requires_seeded_directions():
    c = Dual.constant(1.0, 0)
    with pytest.raises(AutodiffError):
        c.tangent(0)


def test_dual_rank_contract():
    with pytest.raises(AutodiffError):
        Dual(np.zeros(3), np.zeros(3))  # tangent must add one rank


def test_seed_input_duals_batched():
    pts = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    x, y = seed_input_duals(pts)
    assert x.value == pytest.approx([1.0, 3.0, 5.0])
    assert y.value == pytest.approx([2.0, 4.0, 6.0])
    assert x.tan.shape == (2, 3)
    assert x.tan[0] == pytest.approx([1.0, 1.0, 1.0])
    assert x.tan[1] == pytest.approx([0.0, 0.0, 0.0])
    assert y.tan[1] == pytest.approx([1.0, 1.0, 1.0])


def test_evaluate_with_input_derivatives():
    def f(x, y):
        return x * x * y + x.sin()

    value, grad = evaluate_with_input_derivatives(f, [0.8, 1.7])
    assert value == pytest.approx(0.8**2 * 1.7 + np.sin(0.8))
    assert grad == pytest.approx([2 * 0.8 * 1.7 + np.cos(0.8), 0.8**2])


def test_finite_difference_check_on_smooth_function():
    def f(x, y):
        return (x * y).tanh() + (y * y + 1.0).log()

    disc = finite_difference_check(f, [0.4, -0.9])
    assert np.all(disc < 1e-8)


# ---------------------------------------------------------------------------
# Param bookkeeping
# ---------------------------------------------------------------------------


def test_param_accumulate_and_zero():
    p = Param(np.zeros((2, 2)), name="w")
    assert p.grad is None
    assert p.grad_or_zeros() == pytest.approx(np.zeros((2, 2)))
    p.accumulate(np.ones((2, 2)))
    p.accumulate(np.ones((2, 2)))
    assert p.grad == pytest.approx(2 * np.ones((2, 2)))
    p.zero_grad()
    assert p.grad is None


# ---------------------------------------------------------------------------
# Tape: forward values and tangents
# ---------------------------------------------------------------------------


def test_tape_input_seeds_unit_tangents():
    pts = np.array([[0.1, 0.2], [0.3, 0.4]])
    tape = Tape()
    z = tape.input(pts)
    assert z.val == pytest.approx(pts)
    assert z.tan.shape == (2, 2, 2)
    assert z.tan[0] == pytest.approx(np.eye(2))
    assert z.n_points == 2 and z.n_directions == 2 and z.n_features == 2


def test_tape_input_values_only_has_no_directions():
    tape = Tape()
    z = tape.input_values_only(np.zeros((3, 2)))
    assert z.n_directions == 0
    with pytest.raises(AutodiffError):
        z.tangent(0)


def test_tape_input_rejects_wrong_rank():
    tape = Tape()
    with pytest.raises(AutodiffError):
        tape.input(np.zeros(4))


def test_tape_forward_matches_dual_composition():
    """The same expression built on a Tape and with Duals must agree."""
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(5, 2))

    def build_dual(x, y):
        return ((x * y).tanh() + (x * x + 2.0).log()).sin() / (y * y + 1.5)

    tape = Tape()
    z = tape.input(pts)
    x, y = z.col(0), z.col(1)
    expr = ((x * y).tanh() + (x * x + 2.0).log()).sin() / (y * y + 1.5)

    xd, yd = seed_input_duals(pts)
    ref = build_dual(xd, yd)
    assert expr.val[:, 0] == pytest.approx(ref.value, abs=1e-14)
    # tape tangents are (N, K, F); dual tangents are (K, N)
    assert expr.tan[:, :, 0] == pytest.approx(ref.tan.T, abs=1e-14)


def test_tape_tangent_node_value_and_shape():
    pts = np.array([[0.5, 1.5]])
    tape = Tape()
    z = tape.input(pts)
    f = z.col(0) * z.col(1)  # f = x*y, df/dx = y
    fx = f.tangent(0)
    assert fx.val == pytest.approx(np.array([[1.5]]))
    assert fx.tan.shape == (1, 2, 1)
    assert np.all(fx.tan == 0.0)


def test_tape_linear_values_and_tangents():
    w = Param(np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]))
    b = Param(np.array([0.1, 0.2, 0.3]))
    pts = np.array([[1.0, -1.0], [2.0, 0.5]])
    tape = Tape()
    h = tape.linear(tape.input(pts), w, b)
    assert h.val == pytest.approx(pts @ w.value.T + b.value)
    # tangent along x is the first column of W, along y the second
    for i in range(2):
        assert h.tan[i, 0, :] == pytest.approx(w.value[:, 0])
        assert h.tan[i, 1, :] == pytest.approx(w.value[:, 1])


def test_tape_mean_and_wsum_values():
    tape = Tape()
    z = tape.input(np.array([[1.0, 2.0], [3.0, 4.0]]))
    m = tape.mean(z)
    assert m.item() == pytest.approx(2.5)
    assert m.tan.shape == (1, 0, 1)
    s = tape.wsum(z.col(0), np.array([[2.0], [3.0]]))
    assert s.item() == pytest.approx(2.0 * 1.0 + 3.0 * 3.0)


# ---------------------------------------------------------------------------
# Tape: reverse sweep against finite differences
# ---------------------------------------------------------------------------


def _loss_from_params(params, pts, build):
    """Rebuild the tape at the current parameter values and return the loss."""
    tape = Tape()
    loss = build(tape, pts, params)
    return loss.item()


def _fd_gradients(params, pts, build, h=1e-5):
    grads = []
    for p in params:
        flat = np.ravel(np.atleast_1d(p.value))
        g = np.zeros_like(flat)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            p.value = flat.reshape(np.shape(p.value)) if np.ndim(p.value) else flat[0]
            up = _loss_from_params(params, pts, build)
            flat[i] = keep - h
            p.value = flat.reshape(np.shape(p.value)) if np.ndim(p.value) else flat[0]
            down = _loss_from_params(params, pts, build)
            flat[i] = keep
            p.value = flat.reshape(np.shape(p.value)) if np.ndim(p.value) else flat[0]
            g[i] = (up - down) / (2.0 * h)
        grads.append(g.reshape(np.shape(p.grad_or_zeros())))
    return grads


def _assert_grads_match_fd(params, pts, build, tol=1e-6):
    tape = Tape()
    loss = build(tape, pts, params)
    tape.backward(loss)
    ad = [p.grad_or_zeros().copy() for p in params]
    fd = _fd_gradients(params, pts, build)
    for name, a, f in zip([p.name for p in params], ad, fd):
        rel = np.abs(a - f) / (np.abs(a) + np.abs(f) + 1e-8)
        assert np.max(rel) < tol, f"param {name}: max rel {np.max(rel):.3e}"


def _small_net_params(rng):
    w1 = Param(rng.normal(0, 0.6, size=(3, 2)), name="W1")
    b1 = Param(rng.normal(0, 0.1, size=3), name="b1")
    a1 = Param(np.float64(0.11), name="a1")
    w2 = Param(rng.normal(0, 0.6, size=(4, 3)), name="W2")
    b2 = Param(rng.normal(0, 0.1, size=4), name="b2")
    return [w1, b1, a1, w2, b2]


def _net_outputs(tape, pts, params):
    w1, b1, a1, w2, b2 = params
    h = tape.linear(tape.input(pts), w1, b1)
    t = tape.tanh(tape.scale_slope(h, a1, 10.0))
    return tape.linear(t, w2, b2)


def test_backward_matches_fd_value_only_loss():
    rng = np.random.default_rng(7)
    params = _small_net_params(rng)
    pts = rng.normal(size=(6, 2))

    def build(tape, pts, params):
        y = _net_outputs(tape, pts, params)
        return tape.mean(y * y)

    _assert_grads_match_fd(params, pts, build)


def test_backward_matches_fd_with_coordinate_derivative_terms():
    """Losses on extracted tangents need the second-derivative backward path."""
    rng = np.random.default_rng(11)
    params = _small_net_params(rng)
    pts = rng.normal(size=(5, 2))

    def build(tape, pts, params):
        y = _net_outputs(tape, pts, params)
        r, u = y.col(0), y.col(1)
        rx = r.tangent(0)
        uy = u.tangent(1)
        residual = rx + u * uy
        return tape.mean(residual * residual)

    _assert_grads_match_fd(params, pts, build)


def test_backward_matches_fd_through_every_primitive():
    rng = np.random.default_rng(13)
    params = _small_net_params(rng)
    pts = rng.normal(size=(4, 2))

    def build(tape, pts, params):
        y = _net_outputs(tape, pts, params)
        r, u, v, q = (y.col(j) for j in range(4))
        # div, exp, log, sin, powi, clamp_min, and tangents of each operand
        safe = r * r + 2.0
        quotient = u.tangent(0) / safe
        waves = (v * 0.3).sin() * (q * q + 1.0).log()
        lifted = (r + 5.0).clamp_min(0.1)  # far from the kink: pure pass-through
        decay = (-(u * u)).exp()
        bent = (r * r + 1.0) ** -1.5
        total = tape.mean(quotient * quotient) + tape.mean(waves) * 0.5
        total = total + tape.mean(lifted) + tape.mean(decay) - tape.mean(bent)
        return total + tape.wsum(q, np.full((pts.shape[0], 1), 1.0 / pts.shape[0]))

    _assert_grads_match_fd(params, pts, build)


def test_backward_matches_fd_with_division_of_tangents():
    rng = np.random.default_rng(17)
    params = _small_net_params(rng)
    pts = rng.normal(size=(4, 2))

    def build(tape, pts, params):
        y = _net_outputs(tape, pts, params)
        r, u = y.col(0), y.col(1)
        # exercise div's tangent-adjoint path: quotient feeds a tangent extraction
        q = (u + 3.0) / (r * r + 2.0)
        qx = q.tangent(0)
        return tape.mean(qx * qx)

    _assert_grads_match_fd(params, pts, build)


def test_backward_requires_scalar_seed():
    tape = Tape()
    z = tape.input(np.zeros((2, 2)))
    with pytest.raises(AutodiffError):
        tape.backward(z)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_backward_rejects_nonfinite_forward():
    tape = Tape()
    z = tape.input(np.array([[-1.0, 0.0]]))
    bad = tape.log(z.col(0))  # log of a negative value -> nan
    loss = tape.mean(bad)
    with pytest.raises(AutodiffError, match="non-finite"):
        tape.backward(loss)
    culprit = tape.first_nonfinite()
    assert culprit is not None
    assert culprit[1] == "log"


def test_backward_zero_params_flag_controls_accumulation():
    p = Param(np.array([2.0]), name="s")
    pts = np.ones((1, 1))

    def run(zero):
        tape = Tape()
        z = tape.input_values_only(pts)
        y = tape.linear(z, Param(np.ones((1, 1))), p)
        tape.backward(tape.mean(y), zero_params=zero)

    run(True)
    first = p.grad.copy()
    run(False)
    assert p.grad == pytest.approx(2 * first)
    run(True)
    assert p.grad == pytest.approx(first)


def test_mean_backward_distributes_evenly():
    w = Param(np.array([[1.0], [2.0]]))
    b = Param(np.zeros(2))
    tape = Tape()
    z = tape.input_values_only(np.array([[1.0], [2.0], [3.0]]))
    m = tape.mean(tape.linear(z, w, b))  # mean over 6 entries of z_i * w_j + b_j
    tape.backward(m)
    assert w.grad == pytest.approx(np.full((2, 1), (1 + 2 + 3) / 6.0))
    assert b.grad == pytest.approx(np.full(2, 3 / 6.0))


def test_operator_sugar_with_constants():
    tape = Tape()
    z = tape.input(np.array([[2.0, 4.0]]))
    x = z.col(0)
    expr = (3.0 * x + 1.0 - x) / 2.0 - (1.0 - x)
    # (3x + 1 - x)/2 - 1 + x = x + 0.5 - 1 + x = 2x - 0.5
    assert expr.item() == pytest.approx(3.5)
    assert expr.tan[0, 0, 0] == pytest.approx(2.0)
    rec = 8.0 / z.col(1)
    assert rec.item() == pytest.approx(2.0)
    assert rec.tan[0, 1, 0] == pytest.approx(-8.0 / 16.0)


def test_shape_mismatch_rejected():
    tape = Tape()
    a = tape.input(np.zeros((2, 2)))
    b = tape.input(np.zeros((3, 2)))
    with pytest.raises(AutodiffError):
        tape.add(a, b)


def test_constant_broadcast_validation():
    tape = Tape()
    a = tape.input(np.zeros((2, 2)))
    with pytest.raises(AutodiffError):
        tape.add_const(a, np.zeros((5, 7)))
