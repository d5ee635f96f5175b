"""Reverse-over-forward automatic differentiation on batched point clouds.

Every quantity in a recorded computation is a batch of dual numbers: a value
array of shape ``(N, F)`` (N points, F features) plus a tangent array of shape
``(N, K, F)`` holding directional derivatives along K seed directions — the
coordinates of the points.  Recording operations on a :class:`Tape` makes the
same computation reverse-differentiable with respect to :class:`Param` leaves,
so a scalar loss that mixes plain values *and* coordinate derivatives (a PDE
residual, say) gets exact parameter gradients from one backward sweep.

The backward rule treats each node's local partial derivative as a dual
number.  If node ``c = f(a, ...)`` has dual-valued partial ``p = (p_v, p_t)``
with respect to operand ``a``, then ``a``'s adjoint receives the transposed
dual product

    value-adjoint(a)   += p_v * vbar(c) + sum_k p_t[k] * tbar(c)[k]
    tangent-adjoint(a) += p_v * tbar(c)

where ``vbar``/``tbar`` are the loss sensitivities to ``c``'s value and
tangents.  The ``p_t`` term is what carries second-derivative information
(parameter gradients of coordinate derivatives) without ever materializing a
Hessian.

:class:`Dual` is the forward-only carrier for the same algebra — convenient
for oracle checks and closed-form derivative plumbing where no parameter
gradient is needed.  Reduction nodes (``mean``, ``wsum``) produce scalars with
an empty tangent slot: reduced scalars are treated as coordinate-constant,
which is exactly how they are consumed (losses never need coordinate
derivatives of a batch mean).

Supported primitives: +, -, *, / (node-node and node-constant), neg, tanh,
exp, log, sin, integer/real powers, max-with-constant (positivity clamps and
rectifiers), affine layers, trainable scalar scaling, column slicing, tangent
extraction and batch reductions.  Everything is float64.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "AutodiffError",
    "Dual",
    "Param",
    "Node",
    "Tape",
    "seed_input_duals",
    "evaluate_with_input_derivatives",
    "finite_difference_check",
]


from .errors import ShockPinnError


class AutodiffError(ShockPinnError, RuntimeError):
    """Contract violation inside the AD engine (shape, tangent, or NaN)."""


def _as_value(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


# ---------------------------------------------------------------------------
# Forward-only dual numbers
# ---------------------------------------------------------------------------


class Dual:
    """Value plus K coordinate tangents; forward mode only.

    ``value`` has any shape S; ``tan`` has shape (K,) + S with the tangent
    direction leading.  Arithmetic with plain floats/arrays treats them as
    coordinate-constants.
    """

    __slots__ = ("value", "tan")

    def __init__(self, value, tan):
        self.value = _as_value(value)
        self.tan = _as_value(tan)
        if self.tan.ndim != self.value.ndim + 1:
            raise AutodiffError(
                f"tangent rank {self.tan.ndim} does not extend value rank "
                f"{self.value.ndim} by one"
            )

    @property
    def n_directions(self) -> int:
        return self.tan.shape[0]

    # -- construction helpers ------------------------------------------------

    @classmethod
    def constant(cls, value, n_directions: int) -> "Dual":
        v = _as_value(value)
        return cls(v, np.zeros((n_directions,) + v.shape))

    def _coerce(self, other) -> "Dual":
        if isinstance(other, Dual):
            return other
        return Dual.constant(other, self.n_directions)

    def _align(self, other):
        """Broadcast two duals to a common value shape (tangents follow)."""
        o = self._coerce(other)
        if o.n_directions != self.n_directions:
            raise AutodiffError(
                f"mixed tangent direction counts: {self.n_directions} vs {o.n_directions}"
            )
        shape = np.broadcast_shapes(self.value.shape, o.value.shape)
        if self.value.shape == shape and o.value.shape == shape:
            return self.value, self.tan, o.value, o.tan
        k = self.n_directions

        def expand(v, t):
            pad = (1,) * (len(shape) - v.ndim)
            vv = np.broadcast_to(v, shape)
            tt = np.broadcast_to(t.reshape((k,) + pad + v.shape), (k,) + shape)
            return vv, tt

        va, ta = expand(self.value, self.tan)
        vb, tb = expand(o.value, o.tan)
        return va, ta, vb, tb

    # -- algebra ---------------------------------------------------------------

    def __add__(self, other):
        va, ta, vb, tb = self._align(other)
        return Dual(va + vb, ta + tb)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.value, -self.tan)

    def __sub__(self, other):
        va, ta, vb, tb = self._align(other)
        return Dual(va - vb, ta - tb)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        va, ta, vb, tb = self._align(other)
        return Dual(va * vb, ta * vb + tb * va)

    __rmul__ = __mul__

    def __truediv__(self, other):
        va, ta, vb, tb = self._align(other)
        q = va / vb
        return Dual(q, (ta - tb * q) / vb)

    def __rtruediv__(self, other):
        return self._coerce(other).__truediv__(self)

    def __pow__(self, n):
        if not isinstance(n, (int, float)):
            raise AutodiffError("only constant exponents are supported")
        p = self.value ** n
        return Dual(p, n * self.value ** (n - 1) * self.tan)

    def tanh(self):
        y = np.tanh(self.value)
        return Dual(y, (1.0 - y * y) * self.tan)

    def exp(self):
        y = np.exp(self.value)
        return Dual(y, y * self.tan)

    def log(self):
        return Dual(np.log(self.value), self.tan / self.value)

    def sin(self):
        return Dual(np.sin(self.value), np.cos(self.value) * self.tan)

    def cos(self):
        return Dual(np.cos(self.value), -np.sin(self.value) * self.tan)

    def clamp_min(self, floor: float):
        """max(floor, x); at the tie the variable branch is active."""
        mask = (self.value >= floor).astype(np.float64)
        return Dual(np.maximum(floor, self.value), mask * self.tan)

    def tangent(self, k: int) -> "Dual":
        """Directional derivative k, reinterpreted as a coordinate-constant."""
        if self.n_directions == 0:
            raise AutodiffError(
                "tangent() on a carrier with no seeded directions; evaluate "
                "with coordinate tangents to take field derivatives"
            )
        return Dual.constant(self.tan[k], self.n_directions)


def seed_input_duals(point) -> list[Dual]:
    """One Dual per coordinate of ``point``, seeded with unit tangents."""
    p = np.atleast_1d(_as_value(point))
    k = p.shape[-1] if p.ndim > 1 else p.shape[0]
    if p.ndim == 1:
        return [Dual(p[i], np.eye(k)[i]) for i in range(k)]
    # batched points (N, K): coordinate i -> value (N,), tan (K, N)
    n = p.shape[0]
    out = []
    for i in range(k):
        tan = np.zeros((k, n))
        tan[i, :] = 1.0
        out.append(Dual(p[:, i], tan))
    return out


def evaluate_with_input_derivatives(f, point):
    """Evaluate scalar-valued ``f`` at ``point`` returning (value, gradient).

    ``f`` receives one Dual per coordinate and must combine them with the
    overloaded algebra.
    """
    duals = seed_input_duals(point)
    out = f(*duals)
    if not isinstance(out, Dual):
        out = Dual.constant(out, len(duals))
    return float(np.asarray(out.value)), np.asarray(out.tan, dtype=np.float64).copy()


def finite_difference_check(f, point, h: float = 1e-6):
    """Relative discrepancy |AD - central FD| / (|AD| + h) per coordinate."""
    point = _as_value(point).astype(np.float64)
    _, grad = evaluate_with_input_derivatives(f, point)
    disc = np.empty_like(grad)
    for i in range(point.size):
        dp = np.zeros_like(point)
        dp[i] = h

        def plain(q):
            duals = [Dual.constant(q[j], 0) for j in range(q.size)]
            out = f(*duals)
            return float(np.asarray(out.value if isinstance(out, Dual) else out))

        fd = (plain(point + dp) - plain(point - dp)) / (2.0 * h)
        disc[i] = abs(grad[i] - fd) / (abs(grad[i]) + h)
    return disc


# ---------------------------------------------------------------------------
# Trainable leaves
# ---------------------------------------------------------------------------


class Param:
    """Trainable leaf: a float64 array plus a gradient accumulator."""

    __slots__ = ("value", "grad", "name")

    def __init__(self, value, name: str = ""):
        self.value = _as_value(value)
        self.grad = None
        self.name = name

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def grad_or_zeros(self) -> np.ndarray:
        return self.grad if self.grad is not None else np.zeros_like(self.value)

    def __repr__(self):  # pragma: no cover - debugging aid
        return f"Param({self.name or 'unnamed'}, shape={self.value.shape})"


# ---------------------------------------------------------------------------
# Taped batched duals
# ---------------------------------------------------------------------------


class Node:
    """One recorded quantity: values (N, F), tangents (N, K, F)."""

    __slots__ = ("tape", "val", "tan", "op", "idx", "vbar", "tbar", "_back")

    def __init__(self, tape, val, tan, op, back):
        self.tape = tape
        self.val = val
        self.tan = tan
        self.op = op
        self.idx = len(tape.nodes)
        self.vbar = None
        self.tbar = None
        self._back = back
        tape.nodes.append(self)

    # -- adjoint accumulation -------------------------------------------------

    def _accum_v(self, g):
        if self.vbar is None:
            self.vbar = np.zeros_like(self.val)
        self.vbar += g

    def _accum_t(self, g):
        if self.tbar is None:
            self.tbar = np.zeros_like(self.tan)
        self.tbar += g

    @property
    def n_points(self) -> int:
        return self.val.shape[0]

    @property
    def n_directions(self) -> int:
        return self.tan.shape[1]

    @property
    def n_features(self) -> int:
        return self.val.shape[1]

    # -- operator sugar ---------------------------------------------------------

    def __add__(self, other):
        t = self.tape
        return t.add(self, other) if isinstance(other, Node) else t.add_const(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        t = self.tape
        return t.sub(self, other) if isinstance(other, Node) else t.add_const(self, -np.asarray(other, dtype=np.float64))

    def __rsub__(self, other):
        return self.tape.add_const(self.tape.neg(self), other)

    def __mul__(self, other):
        t = self.tape
        return t.mul(self, other) if isinstance(other, Node) else t.mul_const(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        t = self.tape
        if isinstance(other, Node):
            return t.div(self, other)
        return t.mul_const(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __rtruediv__(self, other):
        return self.tape.mul_const(self.tape.powi(self, -1.0), other)

    def __neg__(self):
        return self.tape.neg(self)

    def __pow__(self, n):
        return self.tape.powi(self, n)

    def tanh(self):
        return self.tape.tanh(self)

    def exp(self):
        return self.tape.exp(self)

    def log(self):
        return self.tape.log(self)

    def sin(self):
        return self.tape.sin(self)

    def clamp_min(self, floor: float):
        return self.tape.clamp_min(self, floor)

    def tangent(self, k: int):
        return self.tape.tangent(self, k)

    def col(self, j: int):
        return self.tape.col(self, j)

    def item(self) -> float:
        return float(self.val.reshape(-1)[0])


def _bcast_const(c, like: np.ndarray) -> np.ndarray:
    """Validate a constant against a value array; returns a broadcastable array."""
    a = np.asarray(c, dtype=np.float64)
    if a.ndim == 0:
        return a
    try:
        np.broadcast_shapes(a.shape, like.shape)
    except ValueError as e:
        raise AutodiffError(f"constant shape {a.shape} does not broadcast to {like.shape}") from e
    return a


class Tape:
    """Records batched dual arithmetic; replays it backward for parameter grads."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.params: set[Param] = set()

    # -- leaves -----------------------------------------------------------------

    def input(self, points) -> Node:
        """Coordinate block (N, D) with unit tangents along every coordinate."""
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2:
            raise AutodiffError(f"input points must be (N, D), got shape {pts.shape}")
        n, d = pts.shape
        tan = np.broadcast_to(np.eye(d), (n, d, d)).copy()
        return Node(self, pts, tan, "input", None)

    def input_values_only(self, points) -> Node:
        """Coordinate block (N, D) with no seeded tangents (values only)."""
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2:
            raise AutodiffError(f"input points must be (N, D), got shape {pts.shape}")
        n, d = pts.shape
        return Node(self, pts, np.zeros((n, 0, d)), "input", None)

    # -- parameterized ops --------------------------------------------------------

    def linear(self, x: Node, weight: Param, bias: Param) -> Node:
        """Affine layer: val @ W.T + b, tangents mapped through W."""
        self.params.add(weight)
        self.params.add(bias)
        w = weight.value
        val = x.val @ w.T + bias.value
        n, k, fi = x.tan.shape
        tan = (x.tan.reshape(n * k, fi) @ w.T).reshape(n, k, w.shape[0])

        def back(node):
            vb, tb = node.vbar, node.tbar
            if vb is not None:
                x._accum_v(vb @ w)
                weight.accumulate(vb.T @ x.val)
                bias.accumulate(vb.sum(axis=0))
            if tb is not None:
                fo = w.shape[0]
                x._accum_t((tb.reshape(n * k, fo) @ w).reshape(n, k, fi))
                weight.accumulate(tb.reshape(n * k, fo).T @ x.tan.reshape(n * k, fi))

        return Node(self, val, tan, "linear", back)

    def scale_slope(self, x: Node, slope: Param, gain: float) -> Node:
        """Multiply by the trainable scalar ``slope`` times a fixed gain."""
        self.params.add(slope)
        s = gain * float(slope.value)
        val = s * x.val
        tan = s * x.tan

        def back(node):
            vb, tb = node.vbar, node.tbar
            g = 0.0
            if vb is not None:
                x._accum_v(s * vb)
                g += float(np.sum(vb * x.val))
            if tb is not None:
                x._accum_t(s * tb)
                g += float(np.sum(tb * x.tan))
            slope.accumulate(np.asarray(gain * g))

        return Node(self, val, tan, "scale_slope", back)

    # -- elementwise binary ---------------------------------------------------------

    def _check_pair(self, a: Node, b: Node):
        if a.val.shape != b.val.shape or a.tan.shape != b.tan.shape:
            raise AutodiffError(
                f"operand shapes differ: {a.val.shape}/{a.tan.shape} vs "
                f"{b.val.shape}/{b.tan.shape}"
            )

    def add(self, a: Node, b: Node) -> Node:
        self._check_pair(a, b)

        def back(node):
            vb, tb = node.vbar, node.tbar
            if vb is not None:
                a._accum_v(vb)
                b._accum_v(vb)
            if tb is not None:
                a._accum_t(tb)
                b._accum_t(tb)

        return Node(self, a.val + b.val, a.tan + b.tan, "add", back)

    def sub(self, a: Node, b: Node) -> Node:
        self._check_pair(a, b)

        def back(node):
            vb, tb = node.vbar, node.tbar
            if vb is not None:
                a._accum_v(vb)
                b._accum_v(-vb)
            if tb is not None:
                a._accum_t(tb)
                b._accum_t(-tb)

        return Node(self, a.val - b.val, a.tan - b.tan, "sub", back)

    def mul(self, a: Node, b: Node) -> Node:
        self._check_pair(a, b)
        val = a.val * b.val
        tan = a.tan * b.val[:, None, :] + b.tan * a.val[:, None, :]

        def back(node):
            vb, tb = node.vbar, node.tbar
            # partial wrt a is the dual (b.val, b.tan); transposed dual product
            if vb is not None:
                a._accum_v(b.val * vb)
                b._accum_v(a.val * vb)
            if tb is not None:
                a._accum_v((b.tan * tb).sum(axis=1))
                b._accum_v((a.tan * tb).sum(axis=1))
                a._accum_t(b.val[:, None, :] * tb)
                b._accum_t(a.val[:, None, :] * tb)

        return Node(self, val, tan, "mul", back)

    def div(self, a: Node, b: Node) -> Node:
        self._check_pair(a, b)
        inv = 1.0 / b.val
        q = a.val * inv
        qtan = (a.tan - b.tan * q[:, None, :]) * inv[:, None, :]
        inv2 = (inv * inv)[:, None, :]
        # dual partials: wrt a -> (1/b, d(1/b)); wrt b -> (-a/b^2, d(-a/b^2))
        pa_t = -b.tan * inv2
        pb_v = -q * inv
        pb_t = inv2 * (2.0 * q[:, None, :] * b.tan - a.tan)

        def back(node):
            vb, tb = node.vbar, node.tbar
            if vb is not None:
                a._accum_v(inv * vb)
                b._accum_v(pb_v * vb)
            if tb is not None:
                a._accum_v((pa_t * tb).sum(axis=1))
                b._accum_v((pb_t * tb).sum(axis=1))
                a._accum_t(inv[:, None, :] * tb)
                b._accum_t(pb_v[:, None, :] * tb)

        return Node(self, q, qtan, "div", back)

    # -- elementwise with constants ----------------------------------------------------

    def add_const(self, a: Node, c) -> Node:
        cc = _bcast_const(c, a.val)

        def back(node):
            vb, tb = node.vbar, node.tbar
            if vb is not None:
                a._accum_v(vb)
            if tb is not None:
                a._accum_t(tb)

        return Node(self, a.val + cc, a.tan, "add_const", back)

    def mul_const(self, a: Node, c) -> Node:
        cc = _bcast_const(c, a.val)

        def back(node):
            vb, tb = node.vbar, node.tbar
            if vb is not None:
                a._accum_v(cc * vb)
            if tb is not None:
                a._accum_t(cc[..., None, :] * tb if cc.ndim == 2 else cc * tb)

        tan = a.tan * (cc[..., None, :] if cc.ndim == 2 else cc)
        return Node(self, a.val * cc, tan, "mul_const", back)

    def neg(self, a: Node) -> Node:
        return self.mul_const(a, -1.0)

    # -- elementwise unary -----------------------------------------------------------

    def _unary(self, a: Node, val, tan, p_v, p_t, op: str) -> Node:
        """Generic unary backward from the dual-valued local partial (p_v, p_t)."""

        def back(node):
            vb, tb = node.vbar, node.tbar
            if vb is not None:
                a._accum_v(p_v * vb)
            if tb is not None:
                if p_t is not None:
                    a._accum_v((p_t * tb).sum(axis=1))
                a._accum_t(p_v[:, None, :] * tb)

        return Node(self, val, tan, op, back)

    def tanh(self, a: Node) -> Node:
        y = np.tanh(a.val)
        p_v = 1.0 - y * y
        tan = p_v[:, None, :] * a.tan
        p_t = -2.0 * y[:, None, :] * tan  # tangent of sech^2 via dual arithmetic
        return self._unary(a, y, tan, p_v, p_t, "tanh")

    def exp(self, a: Node) -> Node:
        y = np.exp(a.val)
        tan = y[:, None, :] * a.tan
        return self._unary(a, y, tan, y, tan, "exp")

    def log(self, a: Node) -> Node:
        p_v = 1.0 / a.val
        tan = p_v[:, None, :] * a.tan
        p_t = -(p_v * p_v)[:, None, :] * a.tan
        return self._unary(a, np.log(a.val), tan, p_v, p_t, "log")

    def sin(self, a: Node) -> Node:
        p_v = np.cos(a.val)
        tan = p_v[:, None, :] * a.tan
        p_t = -np.sin(a.val)[:, None, :] * a.tan
        return self._unary(a, np.sin(a.val), tan, p_v, p_t, "sin")

    def powi(self, a: Node, n) -> Node:
        if not isinstance(n, (int, float)):
            raise AutodiffError("only constant exponents are supported")
        y = a.val ** n
        p_v = n * a.val ** (n - 1)
        tan = p_v[:, None, :] * a.tan
        p_t = (n * (n - 1) * a.val ** (n - 2))[:, None, :] * a.tan
        return self._unary(a, y, tan, p_v, p_t, f"pow{n}")

    def clamp_min(self, a: Node, floor: float) -> Node:
        """max(floor, x); the tie point takes the variable branch."""
        p_v = (a.val >= floor).astype(np.float64)
        val = np.maximum(floor, a.val)
        tan = p_v[:, None, :] * a.tan
        return self._unary(a, val, tan, p_v, None, "clamp_min")

    # -- structure ---------------------------------------------------------------------

    def col(self, a: Node, j: int) -> Node:
        val = a.val[:, j : j + 1]
        tan = a.tan[:, :, j : j + 1]

        def back(node):
            vb, tb = node.vbar, node.tbar
            if vb is not None:
                g = np.zeros_like(a.val)
                g[:, j : j + 1] = vb
                a._accum_v(g)
            if tb is not None:
                g = np.zeros_like(a.tan)
                g[:, :, j : j + 1] = tb
                a._accum_t(g)

        return Node(self, val, tan, "col", back)

    def tangent(self, a: Node, k: int) -> Node:
        """Directional derivative k as a value; result is coordinate-constant."""
        if a.n_directions == 0:
            raise AutodiffError(
                "tangent() on a node with no seeded directions; build the "
                "batch with Tape.input to take field derivatives"
            )
        val = a.tan[:, k, :].copy()
        tan = np.zeros((a.n_points, a.n_directions, a.n_features))

        def back(node):
            vb = node.vbar
            if vb is not None:
                g = np.zeros_like(a.tan)
                g[:, k, :] = vb
                a._accum_t(g)

        return Node(self, val, tan, "tangent", back)

    # -- reductions (scalars carry no tangents) -------------------------------------------

    def mean(self, a: Node) -> Node:
        size = a.val.size
        val = np.array([[a.val.mean()]])

        def back(node):
            vb = node.vbar
            if vb is not None:
                a._accum_v(np.full_like(a.val, vb[0, 0] / size))

        return Node(self, val, np.zeros((1, 0, 1)), "mean", back)

    def wsum(self, a: Node, weights) -> Node:
        """Weighted sum over the batch: sum(w * x) as a coordinate-constant scalar."""
        w = _bcast_const(weights, a.val)
        val = np.array([[float(np.sum(w * a.val))]])

        def back(node):
            vb = node.vbar
            if vb is not None:
                a._accum_v(w * vb[0, 0])

        return Node(self, val, np.zeros((1, 0, 1)), "wsum", back)

    # -- backward ---------------------------------------------------------------------------

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def reset_adjoints(self):
        for n in self.nodes:
            n.vbar = None
            n.tbar = None

    def backward(self, loss: Node, zero_params: bool = True):
        """Sweep the tape backward from a scalar node, filling Param.grad."""
        if loss.val.shape != (1, 1):
            raise AutodiffError(f"backward seed must be scalar (1,1), got {loss.val.shape}")
        if not np.isfinite(loss.val[0, 0]):
            culprit = self.first_nonfinite()
            where = f"node #{culprit[0]} ({culprit[1]})" if culprit else "loss"
            raise AutodiffError(f"non-finite value during forward pass at {where}")
        self.reset_adjoints()
        if zero_params:
            self.zero_grad()
        loss.vbar = np.ones((1, 1))
        for node in reversed(self.nodes[: loss.idx + 1]):
            if node.vbar is None and node.tbar is None:
                continue
            if node._back is not None:
                node._back(node)
        self._raise_if_nonfinite()

    def _raise_if_nonfinite(self):
        for p in self.params:
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                culprit = self.first_nonfinite()
                where = f"node #{culprit[0]} ({culprit[1]})" if culprit else "parameter gradient"
                raise AutodiffError(f"non-finite value during backward sweep at {where}")

    def first_nonfinite(self):
        """(index, op) of the first node with a non-finite value/tangent/adjoint."""
        for n in self.nodes:
            for arr in (n.val, n.tan, n.vbar, n.tbar):
                if arr is not None and not np.all(np.isfinite(arr)):
                    return n.idx, n.op
        return None
