"""Feed-forward networks mapping space(-time) points to primitive variables.

A network is a chain of dense layers.  Every hidden layer owns a trainable
activation slope ``a``; the nonlinearity applied to that layer's
pre-activation is ``tanh(scale_n * a * z)``, with ``scale_n`` a fixed gain
(default 10) and ``a`` initialized to ``1/scale_n`` so the product starts at
one.  The last layer is linear.  The four output channels are interpreted as
``(rho, u, v, p)``; the density and pressure channels are floored at a small
positive ``alpha_clamp`` so downstream logarithms and square roots stay
defined even early in training.

Evaluation happens on a :class:`~shockpinn.autodiff.Tape`, so every output
carries first-order tangents with respect to the input coordinates and the
whole computation can be back-propagated to the parameters, including the
coordinate-derivative terms that physics residuals introduce.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import Node, Param, Tape
from .errors import ConfigurationError, DomainError

__all__ = [
    "CHANNELS",
    "Network",
    "NetworkOutput",
    "FieldEval",
    "xavier_init",
    "stitched_forward",
    "save_checkpoint",
    "load_checkpoint",
]

CHANNELS = ("rho", "u", "v", "p")

_CHECKPOINT_FORMAT = "shockpinn-network"
_CHECKPOINT_VERSION = 1


@dataclass
class NetworkOutput:
    """Tape-level network output: one node per primitive variable.

    ``rho`` and ``p`` are the clamped channels; ``raw`` is the unclamped
    final-layer node, kept for diagnostics.
    """

    rho: Node
    u: Node
    v: Node
    p: Node
    raw: Node

    def as_tuple(self):
        return (self.rho, self.u, self.v, self.p)


@dataclass
class FieldEval:
    """Value-level evaluation: primitive values plus coordinate tangents.

    ``values`` has shape (N, 4) in channel order ``(rho, u, v, p)``;
    ``tangents`` has shape (N, K, 4) where K is the number of input
    coordinates, ordered like the network input (x, y[, t]).
    """

    values: np.ndarray
    tangents: np.ndarray

    @property
    def rho(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def u(self) -> np.ndarray:
        return self.values[:, 1]

    @property
    def v(self) -> np.ndarray:
        return self.values[:, 2]

    @property
    def p(self) -> np.ndarray:
        return self.values[:, 3]

    def gradient(self, channel: str) -> np.ndarray:
        """(N, K) coordinate derivatives of one primitive variable."""
        return self.tangents[:, :, CHANNELS.index(channel)]


def _validate_sizes(sizes: Sequence[int]) -> list:
    sizes = [int(s) for s in sizes]
    if len(sizes) < 3:
        raise ConfigurationError(
            "network needs at least one hidden layer: got sizes %r" % (sizes,)
        )
    if any(s <= 0 for s in sizes):
        raise ConfigurationError("layer sizes must be positive: got %r" % (sizes,))
    return sizes


class Network:
    """Dense network with per-hidden-layer activation slopes.

    Parameters are owned :class:`Param` objects.  The canonical parameter
    order — used by optimizers and checkpoints — interleaves each hidden
    layer's slope after its weight and bias: W1, b1, a1, W2, b2, a2, ...,
    W_last, b_last.
    """

    def __init__(
        self,
        sizes: Sequence[int],
        scale_n: float = 10.0,
        alpha_clamp: float = 1e-6,
        adaptive: bool = True,
        seed: int | None = None,
    ):
        self.sizes = _validate_sizes(sizes)
        if not (0.0 < alpha_clamp < 1.0):
            raise ConfigurationError(
                "alpha_clamp must lie in (0, 1): got %r" % (alpha_clamp,)
            )
        if scale_n <= 0.0:
            raise ConfigurationError("scale_n must be positive: got %r" % (scale_n,))
        self.scale_n = float(scale_n)
        self.alpha_clamp = float(alpha_clamp)
        self.adaptive = bool(adaptive)
        self.seed = seed
        self.weights: list[Param] = []
        self.biases: list[Param] = []
        self.slopes: list[Param] = []
        for k in range(len(self.sizes) - 1):
            fan_in, fan_out = self.sizes[k], self.sizes[k + 1]
            self.weights.append(
                Param(np.zeros((fan_out, fan_in)), name=f"W{k + 1}")
            )
            self.biases.append(Param(np.zeros(fan_out), name=f"b{k + 1}"))
        for k in range(self.n_hidden):
            self.slopes.append(
                Param(np.float64(1.0 / self.scale_n), name=f"a{k + 1}")
            )

    # -- shape ----------------------------------------------------------
    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.sizes[-1]

    @property
    def n_hidden(self) -> int:
        """Number of hidden layers (= number of activation slopes)."""
        return len(self.sizes) - 2

    # -- parameter access -------------------------------------------------
    def parameters(self) -> list:
        """All parameters in canonical (layer-major, slope-interleaved) order."""
        params = []
        for k in range(len(self.weights)):
            params.append(self.weights[k])
            params.append(self.biases[k])
            if k < self.n_hidden:
                params.append(self.slopes[k])
        return params

    def trainable_parameters(self) -> list:
        """Canonical order, with slopes excluded when they are frozen."""
        if self.adaptive:
            return self.parameters()
        return [p for p in self.parameters() if p not in self.slopes]

    def parameter_count(self, include_slopes: bool = True) -> int:
        n = sum(w.value.size for w in self.weights) + sum(
            b.value.size for b in self.biases
        )
        if include_slopes:
            n += len(self.slopes)
        return n

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    # -- evaluation -------------------------------------------------------
    def forward(self, tape: Tape, z: Node) -> NetworkOutput:
        """Run the network on an input node already registered with ``tape``."""
        if z.n_features != self.n_inputs:
            raise ConfigurationError(
                "input has %d coordinates but the network expects %d"
                % (z.n_features, self.n_inputs)
            )
        h = tape.linear(z, self.weights[0], self.biases[0])
        for k in range(self.n_hidden):
            scaled = tape.scale_slope(h, self.slopes[k], self.scale_n)
            h = tape.linear(tape.tanh(scaled), self.weights[k + 1], self.biases[k + 1])
        raw = h
        rho = raw.col(0).clamp_min(self.alpha_clamp)
        u = raw.col(1)
        v = raw.col(2)
        p = raw.col(3).clamp_min(self.alpha_clamp)
        return NetworkOutput(rho=rho, u=u, v=v, p=p, raw=raw)

    def forward_values(self, points) -> FieldEval:
        """Evaluate at plain coordinates; returns values and coordinate tangents."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        tape = Tape()
        out = self.forward(tape, tape.input(pts))
        n, k = pts.shape
        values = np.empty((n, 4))
        tangents = np.empty((n, k, 4))
        for j, node in enumerate(out.as_tuple()):
            values[:, j] = node.val[:, 0]
            tangents[:, :, j] = node.tan[:, :, 0]
        return FieldEval(values=values, tangents=tangents)

    # -- housekeeping -------------------------------------------------------
    def state_vector(self) -> np.ndarray:
        """All parameter values flattened in canonical order."""
        return np.concatenate([np.ravel(p.value) for p in self.parameters()])

    def load_state_vector(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        expected = self.parameter_count()
        if vec.size != expected:
            raise ConfigurationError(
                "state vector has %d entries, network needs %d" % (vec.size, expected)
            )
        offset = 0
        for p in self.parameters():
            size = p.value.size
            p.value = vec[offset : offset + size].reshape(np.shape(p.value)).copy()
            offset += size

    def copy(self) -> "Network":
        twin = Network(
            self.sizes,
            scale_n=self.scale_n,
            alpha_clamp=self.alpha_clamp,
            adaptive=self.adaptive,
            seed=self.seed,
        )
        twin.load_state_vector(self.state_vector())
        return twin


def xavier_init(
    sizes: Sequence[int],
    seed: int = 0,
    scale_n: float = 10.0,
    alpha_clamp: float = 1e-6,
    adaptive: bool = True,
) -> Network:
    """Glorot-initialized network: W ~ N(0, 2/(fan_in+fan_out)), zero biases.

    Deterministic for a given ``seed``; slopes start at ``1/scale_n`` so the
    effective activation gain ``scale_n * a`` begins at one.
    """
    net = Network(
        sizes,
        scale_n=scale_n,
        alpha_clamp=alpha_clamp,
        adaptive=adaptive,
        seed=seed,
    )
    rng = np.random.default_rng(seed)
    for w in net.weights:
        fan_out, fan_in = w.value.shape
        std = math.sqrt(2.0 / (fan_in + fan_out))
        w.value = rng.normal(0.0, std, size=(fan_out, fan_in))
    return net


def stitched_forward(
    members: Sequence,
    points,
) -> FieldEval:
    """Piece together subnetwork predictions over a partitioned domain.

    ``members`` is a sequence of ``(network, indicator)`` pairs where
    ``indicator(points) -> bool array`` marks the points a subdomain claims
    (inclusive of its interfaces).  Points claimed by exactly one member get
    that member's output; points claimed by several (interface points) get
    the arithmetic mean of the claiming members' outputs; points claimed by
    none raise :class:`DomainError`.  With a single member this reproduces
    ``forward_values`` exactly.
    """
    if not members:
        raise ConfigurationError("stitched_forward needs at least one member")
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n, k = pts.shape
    masks = []
    for net, indicator in members:
        if net.n_inputs != k:
            raise ConfigurationError(
                "network expects %d coordinates but points have %d"
                % (net.n_inputs, k)
            )
        mask = np.asarray(indicator(pts), dtype=bool).reshape(-1)
        if mask.shape != (n,):
            raise ConfigurationError(
                "indicator returned shape %r for %d points" % (mask.shape, n)
            )
        masks.append(mask)
    counts = np.sum(masks, axis=0)
    if np.any(counts == 0):
        orphan = int(np.argmax(counts == 0))
        raise DomainError(
            "point %s lies outside every subdomain" % (pts[orphan].tolist(),)
        )
    values = np.zeros((n, 4))
    tangents = np.zeros((n, k, 4))
    for (net, _), mask in zip(members, masks):
        if not mask.any():
            continue
        ev = net.forward_values(pts[mask])
        values[mask] += ev.values
        tangents[mask] += ev.tangents
    values /= counts[:, None]
    tangents /= counts[:, None, None]
    return FieldEval(values=values, tangents=tangents)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(net: Network, path) -> None:
    """Write a JSON header line plus one parameter value per line.

    Values are printed with 17 significant digits, which round-trips IEEE
    double exactly, so save followed by load is bit-identical.
    """
    path = Path(path)
    header = {
        "format": _CHECKPOINT_FORMAT,
        "version": _CHECKPOINT_VERSION,
        "sizes": list(net.sizes),
        "scale_n": net.scale_n,
        "alpha_clamp": net.alpha_clamp,
        "adaptive": net.adaptive,
        "seed": net.seed,
        "count": net.parameter_count(),
    }
    vec = net.state_vector()
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for x in vec:
            fh.write("%.17g\n" % x)


def load_checkpoint(path) -> Network:
    """Inverse of :func:`save_checkpoint`."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(
                "checkpoint %s: header is not valid JSON (%s)" % (path, exc)
            ) from exc
        if header.get("format") != _CHECKPOINT_FORMAT:
            raise ConfigurationError(
                "checkpoint %s: unrecognized format %r" % (path, header.get("format"))
            )
        values = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError as exc:
                raise ConfigurationError(
                    "checkpoint %s line %d: %r is not a number" % (path, lineno, line)
                ) from exc
    net = Network(
        header["sizes"],
        scale_n=header["scale_n"],
        alpha_clamp=header["alpha_clamp"],
        adaptive=header.get("adaptive", True),
        seed=header.get("seed"),
    )
    if len(values) != header.get("count", len(values)):
        raise ConfigurationError(
            "checkpoint %s: header count %s but %d values"
            % (path, header.get("count"), len(values))
        )
    net.load_state_vector(np.array(values))
    return net
