"""Objective assembly for single-network and stitched multi-network training.

The training objective is a weighted sum of named mean-square components:

* steady or unsteady Euler residuals (one component per conservation law)
  plus an entropy-condition residual, evaluated at interior residual points;
* data mismatches: full-state targets, density-gradient targets, inflow
  states, and wall pressure probes;
* a wall no-penetration penalty (normal velocity squared);
* global conservation terms: squared net boundary flux of mass, momentum,
  and energy over a closed boundary quadrature (steady conservation demands
  zero net flux by the divergence theorem);
* interface stitching terms for multi-network runs: state-average
  continuity, residual continuity, and normal-flux continuity.

Components are grouped for weighting purposes (all residual components share
one weight, and so on).  Weights default to one; a :class:`DynamicWeights`
instance adapts the non-residual weights from gradient-magnitude statistics
while the residual weight stays pinned at one.

Every public entry point exists in two forms: a tape-level ``*_node`` form
that returns live graph nodes (for optimizers that need gradients) and a
plain form returning a float :class:`LossBreakdown` snapshot.
"""

from __future__ import annotations

import warnings
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Node, Tape
from .decomposition import CONTINUITY_TERMS
from .errors import ConfigurationError
from .network import Network
from .physics import (
    GAMMA_DEFAULT,
    PrimitiveState,
    entropy_residual,
    flux_x,
    flux_y,
    steady_euler_residuals,
    unsteady_euler_residuals,
)

__all__ = [
    "COMPONENT_ORDER",
    "COMPONENT_GROUP",
    "GROUPS",
    "GROUP_OMEGA_LABEL",
    "LossConfig",
    "LossBreakdown",
    "XpinnLoss",
    "LossNodes",
    "XpinnLossNodes",
    "InterfaceBatch",
    "BoundaryQuadrature",
    "closed_boundary_quadrature",
    "boundary_flux",
    "global_conservation_terms",
    "DynamicWeights",
    "update_dynamic_weights",
    "effective_weights",
    "pinn_loss",
    "pinn_loss_node",
    "xpinn_loss",
    "xpinn_loss_node",
]


# ---------------------------------------------------------------------------
# Component catalogue
# ---------------------------------------------------------------------------

#: Canonical component order.  Totals are accumulated by a left fold over this
#: sequence, so two breakdowns with the same components produce bit-identical
#: totals.  The global terms sit last because multi-network runs append them
#: after the per-network subtotals.
COMPONENT_ORDER = (
    "residual_mass",
    "residual_momentum_x",
    "residual_momentum_y",
    "residual_energy",
    "residual_entropy",
    "data",
    "grad_rho",
    "inflow",
    "pressure_probe",
    "wall_slip",
    "interface_average",
    "interface_residual",
    "interface_flux",
    "global_mass",
    "global_momentum",
    "global_energy",
)

RESIDUAL_COMPONENTS = COMPONENT_ORDER[:5]

#: Weight groups: every component belongs to exactly one group and all
#: components in a group share one weight.
GROUPS = {
    "residual": RESIDUAL_COMPONENTS,
    "data": ("data",),
    "grad_rho": ("grad_rho",),
    "inflow": ("inflow",),
    "pressure_probe": ("pressure_probe",),
    "wall_slip": ("wall_slip",),
    "interface": ("interface_average", "interface_residual", "interface_flux"),
    "global": ("global_mass", "global_momentum", "global_energy"),
}

COMPONENT_GROUP = {name: group for group, names in GROUPS.items() for name in names}

#: Column labels used when weights are written to loss-history files.  The
#: numbered labels follow the conventional ordering of the weighted objective
#: (residuals first, then density-gradient data, inflow data, pressure probes,
#: global conservation, wall slip).
GROUP_OMEGA_LABEL = {
    "residual": "omega1",
    "grad_rho": "omega2",
    "inflow": "omega3",
    "pressure_probe": "omega4",
    "global": "omega5",
    "wall_slip": "omega6",
    "data": "omega_data",
    "interface": "omega_interface",
}

#: Dataset keys understood by the assemblers, besides "quadrature".
_POINTSET_KEYS = (
    "residual",
    "data",
    "gradient-data",
    "inflow",
    "wall-pressure",
    "wall-slip",
)


# ---------------------------------------------------------------------------
# Configuration and weights
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossConfig:
    """Recipe-independent knobs of the objective.

    ``weights`` maps group names to fixed positive weights (unity when
    omitted).  ``required_roles`` lists dataset keys the recipe cannot run
    without; a missing or empty required dataset is a configuration error.
    """

    gamma: float = GAMMA_DEFAULT
    unsteady: bool = False
    entropy_mode: str = "relu"
    entropy_eps: float = 1e-4
    weights: Mapping[str, float] = field(default_factory=dict)
    required_roles: Tuple[str, ...] = ("residual",)

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ConfigurationError("gamma must exceed 1, got %r" % (self.gamma,))
        if self.entropy_mode not in ("relu", "literal", "off"):
            raise ConfigurationError(
                "entropy_mode must be 'relu', 'literal', or 'off', got %r"
                % (self.entropy_mode,)
            )
        if not self.entropy_eps > 0.0:
            raise ConfigurationError("entropy_eps must be positive")
        fixed = {}
        for group, value in dict(self.weights).items():
            if group not in GROUPS:
                raise ConfigurationError(
                    "unknown weight group %r (expected one of %s)"
                    % (group, sorted(GROUPS))
                )
            value = float(value)
            if not np.isfinite(value) or value <= 0.0:
                raise ConfigurationError(
                    "weight for group %r must be positive and finite, got %r"
                    % (group, value)
                )
            fixed[group] = value
        object.__setattr__(self, "weights", fixed)
        allowed = set(_POINTSET_KEYS) | {"quadrature"}
        for role in self.required_roles:
            if role not in allowed:
                raise ConfigurationError(
                    "unknown required role %r (expected one of %s)"
                    % (role, sorted(allowed))
                )
        object.__setattr__(self, "required_roles", tuple(self.required_roles))


@dataclass(frozen=True)
class DynamicWeights:
    """Adaptive weights for the non-residual groups.

    ``omega`` holds the current weight per group; the residual weight is
    pinned at one and may not appear here.  ``mix_rate`` is the smoothing
    factor applied to each candidate weight and ``period`` the number of
    iterations between updates.
    """

    omega: Mapping[str, float]
    mix_rate: float = 0.1
    period: int = 10

    def __post_init__(self):
        if not 0.0 <= self.mix_rate <= 1.0:
            raise ConfigurationError(
                "mix_rate must lie in [0, 1], got %r" % (self.mix_rate,)
            )
        if self.period < 1:
            raise ConfigurationError("period must be at least 1, got %r" % (self.period,))
        omega = {}
        for group, value in dict(self.omega).items():
            if group == "residual":
                raise ConfigurationError(
                    "the residual weight is pinned at 1 and cannot be adapted"
                )
            if group not in GROUPS:
                raise ConfigurationError(
                    "unknown weight group %r (expected one of %s)"
                    % (group, sorted(GROUPS))
                )
            value = float(value)
            if not np.isfinite(value) or value <= 0.0:
                raise ConfigurationError(
                    "dynamic weight for group %r must be positive and finite, got %r"
                    % (group, value)
                )
            omega[group] = value
        object.__setattr__(self, "omega", omega)

    @classmethod
    def for_groups(cls, groups: Sequence[str], mix_rate: float = 0.1, period: int = 10):
        """Unit starting weights for the named groups."""
        return cls({g: 1.0 for g in groups}, mix_rate=mix_rate, period=period)


def effective_weights(
    config: LossConfig, dynamic: Optional[DynamicWeights] = None
) -> Dict[str, float]:
    """Per-group weights: unity defaults, fixed overrides, then dynamic values."""
    weights = {group: 1.0 for group in GROUPS}
    weights.update(config.weights)
    if dynamic is not None:
        weights.update(dynamic.omega)
    return weights


def update_dynamic_weights(
    weights: DynamicWeights, gradient_stats: Mapping[str, np.ndarray]
) -> DynamicWeights:
    """One gradient-balancing update.

    ``gradient_stats`` maps ``"residual"`` and every adapted group to the
    parameter gradient of that group's *unweighted* component sum.  For each
    group the candidate weight is ``max|g_residual| / (omega * mean|g_group|)``
    (the denominator is the gradient of the currently weighted term), and the
    stored weight moves toward the candidate by ``mix_rate``.  Groups whose
    denominator vanishes are skipped with a warning, which keeps every weight
    strictly positive.
    """
    if "residual" not in gradient_stats:
        raise ConfigurationError(
            "gradient statistics must include a 'residual' entry"
        )
    reference_vec = np.asarray(gradient_stats["residual"], dtype=np.float64).ravel()
    if reference_vec.size == 0:
        raise ConfigurationError("residual gradient statistics are empty")
    reference = float(np.max(np.abs(reference_vec)))
    if reference == 0.0:
        warnings.warn(
            "residual gradient is identically zero; dynamic weights left unchanged"
        )
        return weights
    mix = weights.mix_rate
    new_omega = dict(weights.omega)
    for group, current in weights.omega.items():
        if group not in gradient_stats:
            raise ConfigurationError(
                "missing gradient statistics for weight group %r" % group
            )
        grad = np.asarray(gradient_stats[group], dtype=np.float64).ravel()
        denom = current * float(np.mean(np.abs(grad))) if grad.size else 0.0
        if denom == 0.0:
            warnings.warn(
                "zero gradient for weight group %r; its update was skipped" % group
            )
            continue
        candidate = reference / denom
        new_omega[group] = (1.0 - mix) * current + mix * candidate
    return replace(weights, omega=new_omega)


# ---------------------------------------------------------------------------
# Boundary quadrature and global conservation terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryQuadrature:
    """Quadrature nodes on a boundary: points, unit outward normals, weights.

    ``closed`` records whether the nodes are known to cover a closed loop
    (set by :func:`closed_boundary_quadrature`); pieces produced by
    :meth:`subset` are marked open.  ``None`` means unknown, in which case
    consumers that need a closed loop fall back on the closure defect
    ``|sum_k w_k n_k|``, which vanishes on closed boundaries.
    """

    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    closed: Optional[bool] = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        nrm = np.atleast_2d(np.asarray(self.normals, dtype=np.float64))
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ConfigurationError(
                "quadrature points must have shape (N, 2), got %r" % (pts.shape,)
            )
        if nrm.shape != pts.shape:
            raise ConfigurationError(
                "quadrature normals must match points, got %r vs %r"
                % (nrm.shape, pts.shape)
            )
        if w.shape != (len(pts),):
            raise ConfigurationError(
                "quadrature weights must have shape (%d,), got %r" % (len(pts), w.shape)
            )
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(nrm)) and np.all(np.isfinite(w))):
            raise ConfigurationError("quadrature arrays contain non-finite values")
        if np.any(w <= 0.0):
            raise ConfigurationError("quadrature weights must be positive")
        lengths = np.linalg.norm(nrm, axis=1)
        if not np.allclose(lengths, 1.0, rtol=0.0, atol=1e-9):
            raise ConfigurationError("quadrature normals must be unit vectors")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "normals", nrm)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def total_length(self) -> float:
        return float(np.sum(self.weights))

    def closure_defect(self) -> float:
        """Norm of the weighted normal sum; zero on a closed boundary."""
        return float(np.linalg.norm((self.weights[:, None] * self.normals).sum(axis=0)))

    def subset(self, mask) -> "BoundaryQuadrature":
        """The masked nodes as an (open) quadrature piece."""
        mask = np.asarray(mask)
        return BoundaryQuadrature(
            self.points[mask], self.normals[mask], self.weights[mask], closed=False
        )


def closed_boundary_quadrature(segments, points_per_segment=64) -> BoundaryQuadrature:
    """Midpoint-rule quadrature over a chain of boundary segments.

    ``segments`` must form a closed loop: each segment's end point coincides
    with the next segment's start point (cyclically).  ``points_per_segment``
    is an int applied to every segment or one count per segment.
    """
    segments = list(segments)
    if not segments:
        raise ConfigurationError("need at least one boundary segment")
    if np.isscalar(points_per_segment):
        counts = [int(points_per_segment)] * len(segments)
    else:
        counts = [int(c) for c in points_per_segment]
        if len(counts) != len(segments):
            raise ConfigurationError(
                "got %d point counts for %d segments" % (len(counts), len(segments))
            )
    if any(c < 1 for c in counts):
        raise ConfigurationError("every segment needs at least one quadrature point")

    scale = max(seg.length for seg in segments)
    for i, seg in enumerate(segments):
        nxt = segments[(i + 1) % len(segments)]
        gap = float(np.linalg.norm(np.asarray(seg.point(1.0)) - np.asarray(nxt.point(0.0))))
        if gap > 1e-9 * max(1.0, scale):
            raise ConfigurationError(
                "open boundary loop: segment %d ends at %s but segment %d starts at %s"
                % (i, np.asarray(seg.point(1.0)), (i + 1) % len(segments), np.asarray(nxt.point(0.0)))
            )

    points, normals, weights = [], [], []
    for seg, m in zip(segments, counts):
        t = (np.arange(m) + 0.5) / m
        points.append(np.atleast_2d(seg.point(t)))
        normals.append(np.atleast_2d(seg.normal(t)))
        weights.append(np.full(m, seg.length / m))
    return BoundaryQuadrature(
        np.vstack(points), np.vstack(normals), np.concatenate(weights), closed=True
    )


def _field_primitives(fieldfn, points: np.ndarray):
    """Evaluate a network or callable field as four primitive-channel arrays."""
    if isinstance(fieldfn, Network):
        values = fieldfn.forward_values(points).values
        return tuple(values[:, j] for j in range(4))
    if isinstance(fieldfn, PrimitiveState):
        state = fieldfn
    elif callable(fieldfn):
        state = fieldfn(points)
    else:
        raise ConfigurationError(
            "field must be a Network, a PrimitiveState, or a callable of the points"
        )
    if isinstance(state, PrimitiveState):
        parts = (state.rho, state.u, state.v, state.p)
    elif isinstance(state, (tuple, list)) and len(state) == 4:
        parts = state
    else:
        arr = np.asarray(state, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise ConfigurationError(
                "field callable must return (N, 4) values or four channels, got %r"
                % (arr.shape,)
            )
        parts = (arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])
    out = []
    for part in parts:
        a = np.broadcast_to(np.asarray(part, dtype=np.float64).ravel(), (len(points),))
        out.append(a.astype(np.float64))
    return tuple(out)


def _require_closed(quadrature: BoundaryQuadrature) -> BoundaryQuadrature:
    if not isinstance(quadrature, BoundaryQuadrature):
        raise ConfigurationError("expected a BoundaryQuadrature")
    if quadrature.closed is False:
        raise ConfigurationError(
            "open boundary loop: net-flux terms need a closed boundary quadrature"
        )
    if quadrature.closed is None:
        defect = quadrature.closure_defect()
        if defect > 1e-9 * max(1.0, quadrature.total_length):
            raise ConfigurationError(
                "open boundary loop: weighted normals sum to %.3e instead of zero"
                % defect
            )
    return quadrature


def boundary_flux(fieldfn, quadrature: BoundaryQuadrature, gamma: float = GAMMA_DEFAULT) -> np.ndarray:
    """Net boundary flux of (mass, x-momentum, y-momentum, energy)."""
    quad = _require_closed(quadrature)
    rho, u, v, p = _field_primitives(fieldfn, quad.points)
    g1 = flux_x(rho, u, v, p, gamma)
    g2 = flux_y(rho, u, v, p, gamma)
    nx, ny = quad.normals[:, 0], quad.normals[:, 1]
    return np.array(
        [float(np.sum(quad.weights * (g1[c] * nx + g2[c] * ny))) for c in range(4)]
    )


def global_conservation_terms(
    fieldfn, quadrature: BoundaryQuadrature, gamma: float = GAMMA_DEFAULT
):
    """Squared net boundary fluxes: (mass, momentum, energy).

    The momentum term sums the squared net fluxes of both momentum
    components.  A steady flow that conserves mass, momentum, and energy has
    zero net flux through any closed boundary, so these terms penalize the
    violation directly.
    """
    phi = boundary_flux(fieldfn, quadrature, gamma)
    return (phi[0] ** 2, phi[1] ** 2 + phi[2] ** 2, phi[3] ** 2)


# ---------------------------------------------------------------------------
# Breakdown containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossBreakdown:
    """Float snapshot of one network's objective: components, weights, total."""

    components: "OrderedDict[str, float]"
    weights: Dict[str, float]
    total: float

    def component(self, name: str, default: float = 0.0) -> float:
        return self.components.get(name, default)


@dataclass(frozen=True)
class XpinnLoss:
    """Float snapshot of a stitched run.

    ``subdomains`` holds one breakdown per network (including its interface
    terms); ``shared`` holds the global conservation terms, which are
    assembled once from all networks' boundary contributions.  ``total`` is
    the jointly optimized objective.
    """

    subdomains: Tuple[LossBreakdown, ...]
    shared: Optional[LossBreakdown]
    weights: Dict[str, float]
    total: float

    def merged(self) -> LossBreakdown:
        """Single-network view: subdomain components plus the shared terms."""
        if len(self.subdomains) != 1:
            raise ConfigurationError(
                "merged() is only defined for a single-subdomain run"
            )
        combined = dict(self.subdomains[0].components)
        if self.shared is not None:
            combined.update(self.shared.components)
        ordered = OrderedDict(
            (name, combined[name]) for name in COMPONENT_ORDER if name in combined
        )
        return LossBreakdown(ordered, dict(self.weights), self.total)


def _scalar(node: Node) -> float:
    return float(node.val[0, 0])


def _snapshot_components(components: "OrderedDict[str, Node]") -> "OrderedDict[str, float]":
    return OrderedDict(
        (name, _scalar(components[name]))
        for name in COMPONENT_ORDER
        if name in components
    )


@dataclass
class LossNodes:
    """Tape-level objective of one network: component nodes and the total node."""

    components: "OrderedDict[str, Node]"
    weights: Dict[str, float]
    total: Node
    group_sums: Dict[str, Node]

    def snapshot(self) -> LossBreakdown:
        return LossBreakdown(
            _snapshot_components(self.components), dict(self.weights), _scalar(self.total)
        )


@dataclass
class XpinnLossNodes:
    """Tape-level objective of a stitched run."""

    per_subdomain: Tuple[LossNodes, ...]
    shared_components: "OrderedDict[str, Node]"
    weights: Dict[str, float]
    total: Node
    group_sums: Dict[str, Node]

    def snapshot(self) -> XpinnLoss:
        shared = None
        if self.shared_components:
            comps = _snapshot_components(self.shared_components)
            shared_total = 0.0
            for name, value in comps.items():
                shared_total += self.weights[COMPONENT_GROUP[name]] * value
            shared = LossBreakdown(comps, dict(self.weights), shared_total)
        return XpinnLoss(
            tuple(nodes.snapshot() for nodes in self.per_subdomain),
            shared,
            dict(self.weights),
            _scalar(self.total),
        )


# ---------------------------------------------------------------------------
# Interfaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InterfaceBatch:
    """Pre-sampled stitching points between two networks.

    For steady problems an interface specification with a parametric curve is
    enough; this batch form exists for cases whose sample coordinates carry
    extra dimensions (a time column) or come from a file.  ``normals`` is
    required only when ``"flux"`` continuity is requested.
    """

    pair: Tuple[int, int]
    points: np.ndarray
    terms: Tuple[str, ...] = ("average", "residual")
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        pair = (int(self.pair[0]), int(self.pair[1]))
        if pair[0] == pair[1]:
            raise ConfigurationError("interface pair must name two distinct subdomains")
        object.__setattr__(self, "pair", pair)
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] < 2 or len(pts) == 0:
            raise ConfigurationError(
                "interface points must have shape (N>=1, d>=2), got %r" % (pts.shape,)
            )
        object.__setattr__(self, "points", pts)
        bad = [t for t in self.terms if t not in CONTINUITY_TERMS]
        if bad:
            raise ConfigurationError(
                "unknown continuity terms %r (choose from %r)" % (bad, CONTINUITY_TERMS)
            )
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.normals is not None:
            nrm = np.atleast_2d(np.asarray(self.normals, dtype=np.float64))
            if nrm.shape != (len(pts), 2):
                raise ConfigurationError(
                    "interface normals must have shape (%d, 2), got %r"
                    % (len(pts), nrm.shape)
                )
            object.__setattr__(self, "normals", nrm)
        if "flux" in self.terms and self.normals is None:
            raise ConfigurationError("flux continuity needs interface normals")


def _interface_params(count: int) -> np.ndarray:
    if count <= 0:
        raise ConfigurationError("interface point count must be positive")
    return np.linspace(0.0, 1.0, count) if count > 1 else np.array([0.5])


def _as_interface_batch(spec) -> InterfaceBatch:
    if isinstance(spec, InterfaceBatch):
        return spec
    curve = getattr(spec, "curve", None)
    if curve is not None:
        t = _interface_params(spec.count)
        terms = tuple(spec.terms)
        normals = np.atleast_2d(curve.normal(t)) if "flux" in terms else None
        return InterfaceBatch(tuple(spec.pair), np.atleast_2d(curve.point(t)), terms, normals)
    raise ConfigurationError(
        "interface entries must be InterfaceSpec-like (with a curve) or InterfaceBatch"
    )


# ---------------------------------------------------------------------------
# Component assembly
# ---------------------------------------------------------------------------


def _channels(out):
    return (out.rho, out.u, out.v, out.p)


def _residual_nodes(out, config: LossConfig):
    """Four conservation-law residuals, plus the entropy residual unless the
    entropy condition is switched off."""
    if config.unsteady:
        res = unsteady_euler_residuals(out.rho, out.u, out.v, out.p, config.gamma)
    else:
        res = steady_euler_residuals(out.rho, out.u, out.v, out.p, config.gamma)
    if config.entropy_mode == "off":
        return res
    ent = entropy_residual(
        out.rho,
        out.u,
        out.v,
        out.p,
        config.gamma,
        mode=config.entropy_mode,
        eps=config.entropy_eps,
        unsteady=config.unsteady,
    )
    return res + [ent]


def _check_point_dim(points: np.ndarray, config: LossConfig, what: str):
    if config.unsteady and points.shape[1] < 3:
        raise ConfigurationError(
            "unsteady residuals need (x, y, t) coordinates but %s points have %d columns"
            % (what, points.shape[1])
        )


def _state_mse(tape: Tape, out, targets: np.ndarray) -> Node:
    """Sum over channels of the mean squared mismatch to (N, 4) targets."""
    total = None
    for j, channel in enumerate(_channels(out)):
        diff = channel - targets[:, j : j + 1]
        term = tape.mean(diff * diff)
        total = term if total is None else total + term
    return total


def _subdomain_component_nodes(tape: Tape, network: Network, datasets, config: LossConfig):
    """Component nodes for one network, plus its partial boundary-flux sums.

    The flux sums are returned unsquared so that multi-network runs can add
    every network's boundary contribution before squaring.
    """
    allowed = set(_POINTSET_KEYS) | {"quadrature"}
    unknown = set(datasets) - allowed
    if unknown:
        raise ConfigurationError(
            "unknown dataset keys %s (expected a subset of %s)"
            % (sorted(unknown), sorted(allowed))
        )
    for key in _POINTSET_KEYS:
        ps = datasets.get(key)
        if ps is not None and getattr(ps, "role", key) != key:
            raise ConfigurationError(
                "dataset %r holds points with role %r" % (key, ps.role)
            )

    components: "OrderedDict[str, Node]" = OrderedDict()

    ps = datasets.get("residual")
    if ps is not None and len(ps.points):
        _check_point_dim(ps.points, config, "residual")
        out = network.forward(tape, tape.input(ps.points))
        for name, res in zip(RESIDUAL_COMPONENTS, _residual_nodes(out, config)):
            components[name] = tape.mean(res * res)

    ps = datasets.get("data")
    if ps is not None and len(ps.points):
        out = network.forward(tape, tape.input_values_only(ps.points))
        components["data"] = _state_mse(tape, out, ps.targets)

    ps = datasets.get("gradient-data")
    if ps is not None and len(ps.points):
        out = network.forward(tape, tape.input(ps.points))
        dx = out.rho.tangent(0) - ps.targets[:, 0:1]
        dy = out.rho.tangent(1) - ps.targets[:, 1:2]
        components["grad_rho"] = tape.mean(dx * dx) + tape.mean(dy * dy)

    ps = datasets.get("inflow")
    if ps is not None and len(ps.points):
        out = network.forward(tape, tape.input_values_only(ps.points))
        components["inflow"] = _state_mse(tape, out, ps.targets)

    ps = datasets.get("wall-pressure")
    if ps is not None and len(ps.points):
        out = network.forward(tape, tape.input_values_only(ps.points))
        diff = out.p - ps.targets
        components["pressure_probe"] = tape.mean(diff * diff)

    ps = datasets.get("wall-slip")
    if ps is not None and len(ps.points):
        out = network.forward(tape, tape.input_values_only(ps.points))
        un = out.u * ps.normals[:, 0:1] + out.v * ps.normals[:, 1:2]
        components["wall_slip"] = tape.mean(un * un)

    flux_parts = None
    quad = datasets.get("quadrature")
    if quad is not None and len(quad.points):
        if not isinstance(quad, BoundaryQuadrature):
            raise ConfigurationError(
                "the 'quadrature' dataset must be a BoundaryQuadrature"
            )
        out = network.forward(tape, tape.input_values_only(quad.points))
        g1 = flux_x(out.rho, out.u, out.v, out.p, config.gamma)
        g2 = flux_y(out.rho, out.u, out.v, out.p, config.gamma)
        nx, ny = quad.normals[:, 0:1], quad.normals[:, 1:2]
        w = quad.weights[:, None]
        flux_parts = [tape.wsum(g1[c] * nx + g2[c] * ny, w) for c in range(4)]

    return components, flux_parts


def _global_component_nodes(parts_list) -> "OrderedDict[str, Node]":
    """Squared net boundary fluxes from per-network partial sums."""
    phi = []
    for c in range(4):
        total = None
        for parts in parts_list:
            total = parts[c] if total is None else total + parts[c]
        phi.append(total)
    components: "OrderedDict[str, Node]" = OrderedDict()
    components["global_mass"] = phi[0] * phi[0]
    components["global_momentum"] = phi[1] * phi[1] + phi[2] * phi[2]
    components["global_energy"] = phi[3] * phi[3]
    return components


def _accumulate_component(components, name: str, node: Node):
    components[name] = node if name not in components else components[name] + node


def _interface_terms(tape: Tape, networks, interfaces, config: LossConfig, components_by_sub):
    for spec in interfaces:
        batch = _as_interface_batch(spec)
        a, b = batch.pair
        for q in (a, b):
            if not 0 <= q < len(networks):
                raise ConfigurationError(
                    "interface pair %r references subdomain %d but only %d networks were given"
                    % (batch.pair, q, len(networks))
                )
        need_tangents = "residual" in batch.terms
        if need_tangents:
            _check_point_dim(batch.points, config, "interface")
            x = tape.input(batch.points)
        else:
            x = tape.input_values_only(batch.points)
        out_a = networks[a].forward(tape, x)
        out_b = networks[b].forward(tape, x)

        if "average" in batch.terms:
            mse_a = mse_b = None
            for ca, cb in zip(_channels(out_a), _channels(out_b)):
                avg = (ca + cb) * 0.5
                da, db = ca - avg, cb - avg
                term_a, term_b = tape.mean(da * da), tape.mean(db * db)
                mse_a = term_a if mse_a is None else mse_a + term_a
                mse_b = term_b if mse_b is None else mse_b + term_b
            _accumulate_component(components_by_sub[a], "interface_average", mse_a)
            _accumulate_component(components_by_sub[b], "interface_average", mse_b)

        if "residual" in batch.terms:
            res_a = _residual_nodes(out_a, config)
            res_b = _residual_nodes(out_b, config)
            total = None
            for ra, rb in zip(res_a, res_b):
                diff = ra - rb
                term = tape.mean(diff * diff)
                total = term if total is None else total + term
            _accumulate_component(components_by_sub[a], "interface_residual", total)
            _accumulate_component(components_by_sub[b], "interface_residual", total)

        if "flux" in batch.terms:
            nx, ny = batch.normals[:, 0:1], batch.normals[:, 1:2]
            fluxes = []
            for out in (out_a, out_b):
                g1 = flux_x(out.rho, out.u, out.v, out.p, config.gamma)
                g2 = flux_y(out.rho, out.u, out.v, out.p, config.gamma)
                fluxes.append([g1[c] * nx + g2[c] * ny for c in range(4)])
            total = None
            for c in range(4):
                diff = fluxes[0][c] - fluxes[1][c]
                term = tape.mean(diff * diff)
                total = term if total is None else total + term
            _accumulate_component(components_by_sub[a], "interface_flux", total)
            _accumulate_component(components_by_sub[b], "interface_flux", total)


def _weighted_fold(components, weights, start: Optional[Node] = None) -> Optional[Node]:
    """Left fold of weight * component over the canonical component order."""
    total = start
    for name in COMPONENT_ORDER:
        node = components.get(name)
        if node is None:
            continue
        term = node * weights[COMPONENT_GROUP[name]]
        total = term if total is None else total + term
    return total


def _group_sum_nodes(components) -> Dict[str, Node]:
    sums: Dict[str, Node] = {}
    for name, node in components.items():
        group = COMPONENT_GROUP[name]
        sums[group] = node if group not in sums else sums[group] + node
    return sums


def _check_required(datasets, config: LossConfig):
    for role in config.required_roles:
        entry = datasets.get(role)
        count = 0 if entry is None else len(entry.points)
        if count == 0:
            raise ConfigurationError(
                "loss recipe requires %r points but none were supplied" % role
            )


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------


def pinn_loss_node(
    tape: Tape,
    network: Network,
    datasets,
    config: Optional[LossConfig] = None,
    dynamic: Optional[DynamicWeights] = None,
) -> LossNodes:
    """Tape-level single-network objective."""
    config = config if config is not None else LossConfig()
    weights = effective_weights(config, dynamic)
    _check_required(datasets, config)
    components, flux_parts = _subdomain_component_nodes(tape, network, datasets, config)
    if flux_parts is not None:
        components.update(_global_component_nodes([flux_parts]))
    if not components:
        raise ConfigurationError(
            "the objective has no components; supply at least one non-empty dataset"
        )
    total = _weighted_fold(components, weights)
    return LossNodes(components, weights, total, _group_sum_nodes(components))


def pinn_loss(
    network: Network,
    datasets,
    config: Optional[LossConfig] = None,
    dynamic: Optional[DynamicWeights] = None,
) -> LossBreakdown:
    """Single-network objective as a float breakdown."""
    return pinn_loss_node(Tape(), network, datasets, config, dynamic).snapshot()


def xpinn_loss_node(
    tape: Tape,
    networks: Sequence[Network],
    datasets: Sequence[Mapping],
    interfaces=(),
    config: Optional[LossConfig] = None,
    dynamic: Optional[DynamicWeights] = None,
) -> XpinnLossNodes:
    """Tape-level stitched objective over one network per subdomain.

    With a single subdomain and no interfaces this reproduces
    :func:`pinn_loss_node` exactly, component by component and bit for bit.
    """
    config = config if config is not None else LossConfig()
    networks = list(networks)
    datasets = list(datasets)
    if not networks:
        raise ConfigurationError("need at least one network")
    if len(networks) != len(datasets):
        raise ConfigurationError(
            "got %d networks but %d dataset groups" % (len(networks), len(datasets))
        )
    weights = effective_weights(config, dynamic)

    components_by_sub = []
    parts_list = []
    for q, (net, ds) in enumerate(zip(networks, datasets)):
        ps = ds.get("residual")
        if ps is None or len(ps.points) == 0:
            raise ConfigurationError("subdomain %d has no residual points" % q)
        components, flux_parts = _subdomain_component_nodes(tape, net, ds, config)
        components_by_sub.append(components)
        if flux_parts is not None:
            parts_list.append(flux_parts)

    _interface_terms(tape, networks, interfaces, config, components_by_sub)

    shared: "OrderedDict[str, Node]" = OrderedDict()
    if parts_list:
        shared = _global_component_nodes(parts_list)

    per_subdomain = []
    total = None
    for components in components_by_sub:
        sub_total = _weighted_fold(components, weights)
        if sub_total is None:
            raise ConfigurationError("a subdomain contributed no loss components")
        per_subdomain.append(
            LossNodes(components, weights, sub_total, _group_sum_nodes(components))
        )
        total = sub_total if total is None else total + sub_total
    if shared:
        total = _weighted_fold(shared, weights, start=total)

    group_sums: Dict[str, Node] = {}
    for components in components_by_sub + ([shared] if shared else []):
        for name, node in components.items():
            group = COMPONENT_GROUP[name]
            group_sums[group] = (
                node if group not in group_sums else group_sums[group] + node
            )

    return XpinnLossNodes(tuple(per_subdomain), shared, weights, total, group_sums)


def xpinn_loss(
    networks: Sequence[Network],
    datasets: Sequence[Mapping],
    interfaces=(),
    config: Optional[LossConfig] = None,
    dynamic: Optional[DynamicWeights] = None,
) -> XpinnLoss:
    """Stitched objective as a float breakdown per subdomain."""
    return xpinn_loss_node(Tape(), networks, datasets, interfaces, config, dynamic).snapshot()
