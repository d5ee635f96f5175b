"""Built-in experiment presets and their data pipelines.

Four flow problems ship with the package, each as a named preset capturing
its printed configuration (network size, point counts, data regions, loss
recipe):

``smooth``
    Unsteady advection of a sinusoidal density wave across a square, with
    density-gradient data on the diagonal, a pressure anchor at one corner,
    and inflow data on the upstream space-time faces.

``expansion``
    Steady supersonic flow over a convex corner (a centered rarefaction
    fan), with density-gradient data in a sector bracketing the fan, inflow
    data on the inlet, and pressure data on the downstream wall.

``oblique``
    Steady attached shock crossing a unit box, with finite-difference
    density-gradient data in a band straddling the shock, inflow data on
    the left edge, a single interior pressure probe, and net-flux
    conservation terms over the box boundary.

``bow``
    Detached shock ahead of a blunt body, driven by an ingested reference
    field: gradient and wall-pressure targets are interpolated from the
    reference, plus inflow data, no-penetration wall points, and net-flux
    conservation terms over the fluid boundary.

:class:`ExperimentConfig` is the schema-validated description of a run; it
round-trips through a nested key-value text form.  :func:`build_problem`
turns a config into sampled, nondimensionalized, loss-ready datasets plus
the networks and weight controllers the training driver consumes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import yaml

from .physics import GAMMA_DEFAULT, PrimitiveState, ReferenceScales
from .errors import ConfigurationError
from .oracles import (
    ExpansionFan,
    IngestionError,
    ObliqueShock,
    ReferenceField,
    WedgeGeometry,
    smooth_advection_density_gradient,
    smooth_advection_state,
)
from .sampling import (
    Band,
    Box,
    CircularArc,
    Difference,
    Disc,
    Intersection,
    LineSegment,
    PointSet,
    RaySector,
    Region,
    gradient_pointset,
    sample_boundary,
    sample_domain,
    synth_schlieren,
)
from .decomposition import (
    Decomposition,
    InterfaceSpec,
    SubdomainSpec,
    bow_decomposition,
    expansion_decomposition,
    oblique_decomposition,
    single_domain_decomposition,
)
from .loss import (
    BoundaryQuadrature,
    DynamicWeights,
    GROUPS,
    InterfaceBatch,
    LossConfig,
    closed_boundary_quadrature,
)
from .network import Network, xavier_init
from .optimize import AdamSchedule, LbfgsSchedule, OptimizerSchedule

__all__ = [
    "ArchitectureSection",
    "MethodSection",
    "SamplingSection",
    "ScheduleSection",
    "InletSection",
    "ExperimentConfig",
    "Problem",
    "EXPERIMENTS",
    "GEOMETRY_DEFAULTS",
    "preset",
    "apply_overrides",
    "build_problem",
]


EXPERIMENTS = ("smooth", "expansion", "oblique", "bow")

#: geometry knobs each experiment understands, with their default values
GEOMETRY_DEFAULTS: Mapping[str, Mapping[str, float]] = {
    "smooth": {
        "half_width": 1.0,
        "t_final": 1.0,
        "eval_time": 0.5,
        "advect_u": 0.7,
        "advect_v": 0.3,
    },
    "expansion": {
        "turn_deg": 10.0,
        "sector_margin_deg": 6.0,
    },
    "oblique": {
        "deflection_deg": 10.0,
        "box_size": 1.0,
        "band_halfwidth": 0.15,
        "subdomain_offset": 0.18,
        "probe_x": 0.4,
    },
    "bow": {
        "cylinder_radius": 1.0,
        "interface_radius": 2.0,
        "box_left": -3.0,
        "box_halfheight": 3.0,
        "gradient_inner": 1.05,
        "gradient_outer": 2.5,
    },
}

_ENTROPY_MODES = ("relu", "literal", "off")


def _need(mapping: Mapping, key: str, where: str):
    if key not in mapping:
        raise ConfigurationError("missing %r in %s section" % (key, where))
    return mapping[key]


def _as_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError("%s must be an integer, got %r" % (what, value))
    return int(value)


def _as_float(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError("%s must be a number, got %r" % (what, value))
    value = float(value)
    if not math.isfinite(value):
        raise ConfigurationError("%s must be finite, got %r" % (what, value))
    return value


def _as_bool(value, what: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigurationError("%s must be true or false, got %r" % (what, value))
    return value


# ---------------------------------------------------------------------------
# Config sections
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArchitectureSection:
    """Dense-network shape shared by every subdomain network."""

    hidden_layers: int
    width: int
    scale_n: float = 10.0

    def __post_init__(self):
        if self.hidden_layers < 1:
            raise ConfigurationError("hidden_layers must be at least 1")
        if self.width < 1:
            raise ConfigurationError("width must be at least 1")
        if not self.scale_n > 0:
            raise ConfigurationError("scale_n must be positive")

    def sizes(self, n_inputs: int) -> list:
        return [n_inputs] + [self.width] * self.hidden_layers + [4]


@dataclass(frozen=True)
class MethodSection:
    """Method switches: domain stitching, trainable activation slopes,
    dynamic loss weights, entropy handling, and interface flux continuity."""

    stitched: bool = False
    adaptive_activations: bool = True
    dynamic_weights: bool = False
    entropy: str = "relu"
    flux_continuity: bool = False
    dw_mix_rate: float = 0.1
    dw_period: int = 10

    def __post_init__(self):
        if self.entropy not in _ENTROPY_MODES:
            raise ConfigurationError(
                "entropy must be one of %s, got %r" % (_ENTROPY_MODES, self.entropy)
            )
        if not 0.0 <= self.dw_mix_rate <= 1.0:
            raise ConfigurationError("dw_mix_rate must lie in [0, 1]")
        if self.dw_period < 1:
            raise ConfigurationError("dw_period must be at least 1")
        if self.flux_continuity and not self.stitched:
            raise ConfigurationError(
                "flux_continuity only applies to stitched (multi-network) runs"
            )


@dataclass(frozen=True)
class SamplingSection:
    """Point counts per dataset.  ``quadrature`` is the number of nodes per
    boundary segment for the net-flux conservation terms (0 disables them);
    ``interface`` is the per-interface point count for stitched runs."""

    residual: int
    gradient: int = 0
    inflow: int = 0
    wall_pressure: int = 0
    wall_slip: int = 0
    interface: int = 0
    quadrature: int = 0

    def __post_init__(self):
        if self.residual < 1:
            raise ConfigurationError("residual point count must be positive")
        for name in ("gradient", "inflow", "wall_pressure", "wall_slip",
                     "interface", "quadrature"):
            if getattr(self, name) < 0:
                raise ConfigurationError("%s point count cannot be negative" % name)


@dataclass(frozen=True)
class ScheduleSection:
    """Optimizer budget: a first-order phase then a quasi-Newton phase."""

    adam_iterations: int
    learning_rate: float = 1e-3
    lbfgs_iterations: int = 0
    lbfgs_memory: int = 50
    lbfgs_tol_grad: float = 1e-9
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.adam_iterations < 0 or self.lbfgs_iterations < 0:
            raise ConfigurationError("iteration counts cannot be negative")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.lbfgs_memory < 1:
            raise ConfigurationError("lbfgs_memory must be at least 1")
        if self.lbfgs_tol_grad < 0:
            raise ConfigurationError("lbfgs_tol_grad cannot be negative")
        if self.checkpoint_every < 0:
            raise ConfigurationError("checkpoint_every cannot be negative")

    def optimizer(self) -> OptimizerSchedule:
        return OptimizerSchedule(
            adam=AdamSchedule(
                iterations=self.adam_iterations,
                learning_rate=self.learning_rate,
            ),
            lbfgs=LbfgsSchedule(
                iterations=self.lbfgs_iterations,
                memory=self.lbfgs_memory,
                tol_grad=self.lbfgs_tol_grad,
            ),
            checkpoint_every=self.checkpoint_every,
        )


@dataclass(frozen=True)
class InletSection:
    """Free-stream state in the units the experiment is posed in."""

    rho: float
    u: float
    v: float = 0.0
    p: float = 0.0

    def __post_init__(self):
        if not self.rho > 0 or not self.p > 0:
            raise ConfigurationError("inlet density and pressure must be positive")

    def state(self) -> PrimitiveState:
        return PrimitiveState(self.rho, self.u, self.v, self.p)


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete, schema-validated description of one run."""

    experiment: str
    architecture: ArchitectureSection
    sampling: SamplingSection
    schedule: ScheduleSection
    method: MethodSection = field(default_factory=MethodSection)
    inlet: Optional[InletSection] = None
    geometry: Mapping[str, float] = field(default_factory=dict)
    seed: int = 0
    threads: int = 0
    grid: int = 200
    reference_path: Optional[str] = None
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(
                "unknown experiment %r (expected one of %s)"
                % (self.experiment, EXPERIMENTS)
            )
        defaults = GEOMETRY_DEFAULTS[self.experiment]
        merged = dict(defaults)
        for key, value in dict(self.geometry).items():
            if key not in defaults:
                raise ConfigurationError(
                    "unknown geometry key %r for experiment %r (expected a "
                    "subset of %s)" % (key, self.experiment, sorted(defaults))
                )
            merged[key] = _as_float(value, "geometry.%s" % key)
        object.__setattr__(self, "geometry", merged)
        if self.experiment != "smooth" and self.inlet is None:
            raise ConfigurationError(
                "experiment %r needs an inlet section" % self.experiment
            )
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigurationError("seed must be an integer")
        if isinstance(self.threads, bool) or not isinstance(self.threads, int):
            raise ConfigurationError("threads must be an integer")
        if self.threads < 0:
            raise ConfigurationError("threads cannot be negative (0 = unlimited)")
        if isinstance(self.grid, bool) or not isinstance(self.grid, int):
            raise ConfigurationError("grid must be an integer")
        if self.grid < 2:
            raise ConfigurationError("grid resolution must be at least 2")

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "experiment": self.experiment,
            "seed": self.seed,
            "threads": self.threads,
            "grid": self.grid,
            "architecture": asdict(self.architecture),
            "sampling": asdict(self.sampling),
            "schedule": asdict(self.schedule),
            "method": asdict(self.method),
            "geometry": {k: float(v) for k, v in sorted(self.geometry.items())},
            "inlet": asdict(self.inlet) if self.inlet is not None else None,
            "reference_path": self.reference_path,
            "output_dir": self.output_dir,
        }
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "ExperimentConfig":
        if not isinstance(data, Mapping):
            raise ConfigurationError("config must be a mapping of sections")
        known = {
            "experiment", "seed", "threads", "grid", "architecture", "sampling",
            "schedule", "method", "geometry", "inlet", "reference_path",
            "output_dir",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(
                "unknown config keys %s (expected a subset of %s)"
                % (sorted(unknown), sorted(known))
            )

        def section(name, kind, required=True, defaults=None):
            raw = data.get(name)
            if raw is None:
                if required:
                    raise ConfigurationError("missing config section %r" % name)
                return None
            if not isinstance(raw, Mapping):
                raise ConfigurationError("config section %r must be a mapping" % name)
            fields = {f.name for f in kind.__dataclass_fields__.values()}  # type: ignore[attr-defined]
            extra = set(raw) - fields
            if extra:
                raise ConfigurationError(
                    "unknown keys %s in section %r" % (sorted(extra), name)
                )
            try:
                return kind(**dict(raw))
            except TypeError as exc:
                raise ConfigurationError("section %r: %s" % (name, exc)) from None

        experiment = _need(data, "experiment", "top-level")
        if not isinstance(experiment, str):
            raise ConfigurationError("experiment must be a string")
        geometry = data.get("geometry") or {}
        if not isinstance(geometry, Mapping):
            raise ConfigurationError("geometry must be a mapping")
        reference_path = data.get("reference_path")
        if reference_path is not None and not isinstance(reference_path, str):
            raise ConfigurationError("reference_path must be a string")
        output_dir = data.get("output_dir")
        if output_dir is not None and not isinstance(output_dir, str):
            raise ConfigurationError("output_dir must be a string")
        return cls(
            experiment=experiment,
            architecture=section("architecture", ArchitectureSection),
            sampling=section("sampling", SamplingSection),
            schedule=section("schedule", ScheduleSection),
            method=section("method", MethodSection, required=False)
            or MethodSection(),
            inlet=section("inlet", InletSection, required=False),
            geometry=dict(geometry),
            seed=data.get("seed", 0),
            threads=data.get("threads", 0),
            grid=data.get("grid", 200),
            reference_path=reference_path,
            output_dir=output_dir,
        )

    def to_text(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigurationError("config parse error: %s" % exc) from None
        if data is None:
            raise ConfigurationError("config file is empty")
        return cls.from_dict(data)


def apply_overrides(data: dict, overrides: Sequence[str]) -> dict:
    """Apply ``section.key=value`` strings onto a nested config mapping.

    Values go through the same scalar parser as the config text, so
    ``method.stitched=true`` and ``schedule.learning_rate=5e-4`` both work.
    """
    out = {k: (dict(v) if isinstance(v, Mapping) else v) for k, v in data.items()}
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(
                "override %r must look like key=value or section.key=value" % item
            )
        path, raw = item.split("=", 1)
        keys = [k.strip() for k in path.strip().split(".")]
        if not all(keys):
            raise ConfigurationError("override %r has an empty key segment" % item)
        try:
            value = yaml.safe_load(raw) if raw.strip() != "" else None
        except yaml.YAMLError as exc:
            raise ConfigurationError("override %r: bad value: %s" % (item, exc)) from None
        target = out
        for k in keys[:-1]:
            nxt = target.setdefault(k, {})
            if not isinstance(nxt, dict):
                raise ConfigurationError(
                    "override %r descends into non-section key %r" % (item, k)
                )
            target = nxt
        target[keys[-1]] = value
    return out


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


def preset(name: str) -> ExperimentConfig:
    """The shipped configuration of one of the four experiments."""
    if name == "smooth":
        return ExperimentConfig(
            experiment="smooth",
            architecture=ArchitectureSection(hidden_layers=4, width=30),
            sampling=SamplingSection(
                residual=2000, gradient=400, inflow=600,
                wall_pressure=60, interface=200,
            ),
            schedule=ScheduleSection(adam_iterations=2000, lbfgs_iterations=500),
            method=MethodSection(),
        )
    if name == "expansion":
        return ExperimentConfig(
            experiment="expansion",
            architecture=ArchitectureSection(hidden_layers=6, width=40),
            sampling=SamplingSection(
                residual=1200, gradient=340, inflow=100,
                wall_pressure=50, interface=300,
            ),
            schedule=ScheduleSection(adam_iterations=5000, lbfgs_iterations=2000),
            method=MethodSection(),
            inlet=InletSection(rho=1.23, u=678.1, v=0.0, p=1.01e5),
        )
    if name == "oblique":
        return ExperimentConfig(
            experiment="oblique",
            architecture=ArchitectureSection(hidden_layers=7, width=30),
            sampling=SamplingSection(
                residual=3900, gradient=1200, inflow=120,
                wall_pressure=1, interface=200, quadrature=64,
            ),
            schedule=ScheduleSection(adam_iterations=8000, lbfgs_iterations=2000),
            method=MethodSection(stitched=True, flux_continuity=True),
            inlet=InletSection(rho=0.06688, u=738.2, v=0.0, p=9485.0),
        )
    if name == "bow":
        return ExperimentConfig(
            experiment="bow",
            architecture=ArchitectureSection(hidden_layers=5, width=160),
            sampling=SamplingSection(
                residual=5600, gradient=700, inflow=300,
                wall_pressure=100, wall_slip=200, interface=200, quadrature=48,
            ),
            schedule=ScheduleSection(adam_iterations=1500, lbfgs_iterations=300),
            method=MethodSection(dynamic_weights=True),
            inlet=InletSection(rho=1.225, u=1360.6963, v=0.0, p=101253.6),
        )
    raise ConfigurationError(
        "unknown preset %r (expected one of %s)" % (name, EXPERIMENTS)
    )


# ---------------------------------------------------------------------------
# Problem bundle
# ---------------------------------------------------------------------------


@dataclass
class Problem:
    """Loss-ready materialization of a config: sampled data, networks,
    geometry handles, and the reference field used for error reports.

    All primitive-variable data are nondimensional (free-stream density and
    speed as references; lengths are order one already and pass through).
    """

    config: ExperimentConfig
    scales: ReferenceScales
    loss_config: LossConfig
    decomposition: Decomposition
    networks: list
    datasets: list
    interfaces: list
    dynamic: Optional[DynamicWeights]
    reference: Callable[[np.ndarray], np.ndarray]
    region: Region
    grid_box: tuple
    eval_time: Optional[float]
    wall: Optional[object]
    freestream_speed: float

    @property
    def stitched(self) -> bool:
        return len(self.networks) > 1

    @property
    def method_tag(self) -> str:
        return "XPINN" if self.stitched else "PINN"

    def members(self):
        """(network, indicator) pairs for stitched field evaluation."""
        return [
            (net, sub.region.contains)
            for net, sub in zip(self.networks, self.decomposition.subdomains)
        ]

    def eval_points(self, points: np.ndarray) -> np.ndarray:
        """Append the evaluation-time column for unsteady problems."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self.eval_time is None or pts.shape[1] == 3:
            return pts
        t = np.full((len(pts), 1), float(self.eval_time))
        return np.hstack([pts, t])


def _networks_for(config: ExperimentConfig, n_inputs: int, count: int) -> list:
    sizes = config.architecture.sizes(n_inputs)
    return [
        xavier_init(
            sizes,
            seed=config.seed + 101 * q,
            scale_n=config.architecture.scale_n,
            adaptive=config.method.adaptive_activations,
        )
        for q in range(count)
    ]


def _dynamic_for(config: ExperimentConfig, datasets: list) -> Optional[DynamicWeights]:
    """One adaptive weight per non-residual loss group present in the run."""
    if not config.method.dynamic_weights:
        return None
    present = set()
    for ds in datasets:
        if ds.get("gradient-data") is not None:
            present.add("grad_rho")
        if ds.get("data") is not None:
            present.add("data")
        if ds.get("inflow") is not None:
            present.add("inflow")
        if ds.get("wall-pressure") is not None:
            present.add("pressure_probe")
        if ds.get("wall-slip") is not None:
            present.add("wall_slip")
        if ds.get("quadrature") is not None:
            present.add("global")
    groups = sorted(present, key=list(GROUPS).index)
    if not groups:
        return None
    weights = DynamicWeights.for_groups(groups)
    return replace(
        weights,
        mix_rate=config.method.dw_mix_rate,
        period=config.method.dw_period,
    )


def _split_pointset(ps: Optional[PointSet], decomposition: Decomposition):
    """Partition a point set by subdomain membership (first claimer wins)."""
    n_sub = len(decomposition)
    if ps is None or len(ps) == 0:
        return [None] * n_sub
    taken = np.zeros(len(ps), dtype=bool)
    pieces = []
    for sub in decomposition.subdomains:
        mask = np.asarray(sub.region.contains(ps.points), dtype=bool) & ~taken
        taken |= mask
        pieces.append(mask)
    if not taken.all():
        orphan = ps.points[~taken][0]
        raise ConfigurationError(
            "point %s (role %r) lies outside every subdomain"
            % (orphan.tolist(), ps.role)
        )
    out = []
    for mask in pieces:
        if not mask.any():
            out.append(None)
            continue
        out.append(
            PointSet(
                role=ps.role,
                points=ps.points[mask],
                targets=None if ps.targets is None else ps.targets[mask],
                normals=None if ps.normals is None else ps.normals[mask],
                seed=ps.seed,
            )
        )
    return out


def _split_quadrature(quad: Optional[BoundaryQuadrature], decomposition: Decomposition):
    """Partition closed-loop quadrature nodes among subdomain owners."""
    n_sub = len(decomposition)
    if quad is None:
        return [None] * n_sub
    taken = np.zeros(len(quad.points), dtype=bool)
    pieces = []
    for sub in decomposition.subdomains:
        mask = np.asarray(sub.region.contains(quad.points), dtype=bool) & ~taken
        taken |= mask
        pieces.append(mask)
    if not taken.all():
        orphan = quad.points[~taken][0]
        raise ConfigurationError(
            "quadrature node %s lies outside every subdomain" % (orphan.tolist(),)
        )
    return [quad.subset(mask) if mask.any() else None for mask in pieces]


def _distribute(decomposition: Decomposition, **named_sets) -> list:
    """Per-subdomain dataset dicts from whole-domain point sets."""
    split = {
        key: (_split_quadrature(val, decomposition) if key == "quadrature"
              else _split_pointset(val, decomposition))
        for key, val in named_sets.items()
    }
    datasets = []
    for q in range(len(decomposition)):
        ds = {}
        for key, pieces in split.items():
            if pieces[q] is not None:
                ds[key] = pieces[q]
        datasets.append(ds)
    return datasets


def _interface_batches(decomposition: Decomposition, count: int) -> list:
    """Loss-ready interface batches from the decomposition's specs."""
    batches = []
    for spec in decomposition.interfaces:
        spec = InterfaceSpec(
            pair=spec.pair, curve=spec.curve, count=count, terms=spec.terms
        )
        points = spec.points()
        normals = None
        if "flux" in spec.terms:
            t = np.linspace(0.0, 1.0, count) if count > 1 else np.array([0.5])
            normals = spec.curve.normal(t)
        batches.append(
            InterfaceBatch(
                pair=spec.pair, points=points, terms=spec.terms, normals=normals
            )
        )
    return batches


def _state_rows(state: PrimitiveState, n: int) -> np.ndarray:
    row = np.array(
        [
            float(np.asarray(state.rho)),
            float(np.asarray(state.u)),
            float(np.asarray(state.v)),
            float(np.asarray(state.p)),
        ]
    )
    return np.tile(row, (n, 1))


def _oracle_reference(state_fn, scales: ReferenceScales) -> Callable:
    """Wrap a dimensional oracle ``state(x, y)`` as a nondim (N, 4) field."""

    def evaluate(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        state = scales.nondim(state_fn(pts[:, 0], pts[:, 1]))
        return np.stack(
            [
                np.asarray(state.rho, dtype=np.float64),
                np.asarray(state.u, dtype=np.float64),
                np.asarray(state.v, dtype=np.float64),
                np.asarray(state.p, dtype=np.float64),
            ],
            axis=1,
        )

    return evaluate


# ---------------------------------------------------------------------------
# Per-experiment builders
# ---------------------------------------------------------------------------


def _build_smooth(config: ExperimentConfig) -> Problem:
    geo = config.geometry
    w = geo["half_width"]
    t_final = geo["t_final"]
    if not 0.0 <= geo["eval_time"] <= t_final:
        raise ConfigurationError("eval_time must lie in [0, t_final]")
    adv_u, adv_v = geo["advect_u"], geo["advect_v"]
    scales = ReferenceScales(rho_ref=1.0, velocity_ref=1.0)
    counts = config.sampling
    seed = config.seed
    rng = np.random.default_rng(seed + 7)

    spacetime = Box((-w, -w, 0.0), (w, w, t_final))
    residual = sample_domain(spacetime, counts.residual, seed=seed + 11)

    gradient = None
    if counts.gradient:
        s = rng.uniform(-w, w, counts.gradient)
        t = rng.uniform(0.0, t_final, counts.gradient)
        pts = np.stack([s, s, t], axis=1)
        gx, gy, _ = smooth_advection_density_gradient(s, s, t)
        gradient = PointSet(
            role="gradient-data",
            points=pts,
            targets=np.stack([gx, gy], axis=1),
            seed=seed,
        )

    inflow = None
    if counts.inflow:
        n0 = counts.inflow // 2
        n1 = (counts.inflow - n0) // 2
        n2 = counts.inflow - n0 - n1
        slabs = [
            np.stack(
                [rng.uniform(-w, w, n0), rng.uniform(-w, w, n0), np.zeros(n0)],
                axis=1,
            ),
            np.stack(
                [np.full(n1, -w), rng.uniform(-w, w, n1),
                 rng.uniform(0.0, t_final, n1)],
                axis=1,
            ),
            np.stack(
                [rng.uniform(-w, w, n2), np.full(n2, -w),
                 rng.uniform(0.0, t_final, n2)],
                axis=1,
            ),
        ]
        pts = np.vstack([s for s in slabs if len(s)])
        state = smooth_advection_state(pts[:, 0], pts[:, 1], pts[:, 2])
        targets = np.stack(
            [np.asarray(state.rho), np.asarray(state.u),
             np.asarray(state.v), np.asarray(state.p)],
            axis=1,
        )
        inflow = PointSet(role="inflow", points=pts, targets=targets, seed=seed)

    anchor = None
    if counts.wall_pressure:
        t = rng.uniform(0.0, t_final, counts.wall_pressure)
        pts = np.stack([np.full_like(t, -w), np.full_like(t, -w), t], axis=1)
        p = np.asarray(smooth_advection_state(pts[:, 0], pts[:, 1], t).p)
        anchor = PointSet(
            role="wall-pressure", points=pts, targets=p[:, None], seed=seed
        )

    if config.method.stitched:
        left = Box((-w, -w, 0.0), (0.0, w, t_final))
        right = Box((0.0, -w, 0.0), (w, w, t_final))
        decomposition = Decomposition(
            [SubdomainSpec(0, left), SubdomainSpec(1, right)]
        )
        datasets = _distribute(
            decomposition,
            residual=residual,
            **{"gradient-data": gradient},
            inflow=inflow,
            **{"wall-pressure": anchor},
        )
        n = max(counts.interface, 1)
        n_t = int(math.ceil(math.sqrt(n / 2.0)))
        n_y = int(math.ceil(n / n_t))
        ys = np.linspace(-w, w, n_y)
        ts = np.linspace(0.0, t_final, n_t)
        gy, gt = np.meshgrid(ys, ts, indexing="ij")
        lattice = np.stack(
            [np.zeros(gy.size), gy.ravel(), gt.ravel()], axis=1
        )[:n]
        interfaces = [
            InterfaceBatch(pair=(0, 1), points=lattice, terms=("average", "residual"))
        ]
    else:
        decomposition = single_domain_decomposition(spacetime)
        datasets = [
            {
                k: v
                for k, v in {
                    "residual": residual,
                    "gradient-data": gradient,
                    "inflow": inflow,
                    "wall-pressure": anchor,
                }.items()
                if v is not None
            }
        ]
        interfaces = []

    loss_config = LossConfig(unsteady=True, entropy_mode=config.method.entropy)
    networks = _networks_for(config, 3, len(decomposition))
    eval_time = geo["eval_time"]

    def reference(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        t = pts[:, 2] if pts.shape[1] == 3 else np.full(len(pts), eval_time)
        state = smooth_advection_state(pts[:, 0], pts[:, 1], t)
        return np.stack(
            [np.asarray(state.rho), np.asarray(state.u),
             np.asarray(state.v), np.asarray(state.p)],
            axis=1,
        )

    return Problem(
        config=config,
        scales=scales,
        loss_config=loss_config,
        decomposition=decomposition,
        networks=networks,
        datasets=datasets,
        interfaces=interfaces,
        dynamic=_dynamic_for(config, datasets),
        reference=reference,
        region=Box((-w, -w), (w, w)),
        grid_box=(-w, w, -w, w),
        eval_time=eval_time,
        wall=None,
        freestream_speed=math.hypot(adv_u, adv_v),
    )


def _build_expansion(config: ExperimentConfig) -> Problem:
    geo = config.geometry
    inlet = config.inlet.state()
    scales = ReferenceScales.from_state(inlet)
    gamma = GAMMA_DEFAULT
    mach_in = float(np.asarray(inlet.mach(gamma)))
    geometry = WedgeGeometry(geo["turn_deg"])
    fan = ExpansionFan(
        mach_in=mach_in,
        rho_in=float(np.asarray(inlet.rho)),
        p_in=float(np.asarray(inlet.p)),
        deflection=geometry.theta,
        corner=geometry.corner,
    )
    counts = config.sampling
    seed = config.seed
    domain = geometry.domain_region()

    residual = sample_domain(domain, counts.residual, seed=seed + 11)

    gradient = None
    if counts.gradient:
        margin = math.radians(geo["sector_margin_deg"])
        xlo, xhi, ylo, yhi = geometry.box
        sector = RaySector(
            fan.corner,
            fan.tail_angle - margin,
            fan.lead_angle + margin,
            clip=Box((xlo, ylo), (xhi, yhi)),
        )
        d_region = Intersection((domain, sector))
        pts = sample_domain(d_region, counts.gradient, seed=seed + 12).points
        _, dx, dy = fan.state_with_gradients(pts[:, 0], pts[:, 1])
        targets = np.stack(
            [
                scales.nondim_gradient(dx["rho"]),
                scales.nondim_gradient(dy["rho"]),
            ],
            axis=1,
        )
        gradient = PointSet(
            role="gradient-data", points=pts, targets=targets, seed=seed
        )

    inflow = None
    if counts.inflow:
        nd = scales.nondim(inlet)
        inflow = sample_boundary(
            geometry.inlet(),
            counts.inflow,
            seed=seed + 13,
            role="inflow",
            target_fn=lambda pts: _state_rows(nd, len(pts)),
        )

    wall_pressure = None
    if counts.wall_pressure:
        p_wall = fan.wall_pressure() / scales.pressure_ref
        wall_pressure = sample_boundary(
            geometry.downstream_wall(),
            counts.wall_pressure,
            seed=seed + 14,
            role="wall-pressure",
            target_fn=lambda pts: np.full((len(pts), 1), p_wall),
        )

    if config.method.stitched:
        terms = ("average", "residual", "flux") if config.method.flux_continuity \
            else ("average", "residual")
        decomposition = expansion_decomposition(
            fan,
            geometry,
            margin_deg=geo["sector_margin_deg"],
            n_interface=max(counts.interface, 2),
            terms=terms,
        )
        datasets = _distribute(
            decomposition,
            residual=residual,
            **{"gradient-data": gradient},
            inflow=inflow,
            **{"wall-pressure": wall_pressure},
        )
        interfaces = _interface_batches(decomposition, max(counts.interface, 2))
    else:
        decomposition = single_domain_decomposition(domain)
        datasets = [
            {
                k: v
                for k, v in {
                    "residual": residual,
                    "gradient-data": gradient,
                    "inflow": inflow,
                    "wall-pressure": wall_pressure,
                }.items()
                if v is not None
            }
        ]
        interfaces = []

    loss_config = LossConfig(entropy_mode=config.method.entropy)
    networks = _networks_for(config, 2, len(decomposition))
    xlo, xhi, ylo, yhi = geometry.box

    return Problem(
        config=config,
        scales=scales,
        loss_config=loss_config,
        decomposition=decomposition,
        networks=networks,
        datasets=datasets,
        interfaces=interfaces,
        dynamic=_dynamic_for(config, datasets),
        reference=_oracle_reference(fan.state, scales),
        region=domain,
        grid_box=(xlo, xhi, ylo, yhi),
        eval_time=None,
        wall=geometry.downstream_wall(),
        freestream_speed=1.0,
    )


def _build_oblique(config: ExperimentConfig) -> Problem:
    geo = config.geometry
    inlet = config.inlet.state()
    scales = ReferenceScales.from_state(inlet)
    gamma = GAMMA_DEFAULT
    deflection = math.radians(geo["deflection_deg"])
    oracle = ObliqueShock(pre=inlet, deflection=deflection)
    size = geo["box_size"]
    box = Box((0.0, 0.0), (size, size))
    counts = config.sampling
    seed = config.seed

    residual = sample_domain(box, counts.residual, seed=seed + 11)

    gradient = None
    if counts.gradient:
        band = Band(
            oracle.origin, oracle.shock_angle, geo["band_halfwidth"], clip=box
        )
        h = 1e-3

        def density_fn(points: np.ndarray) -> np.ndarray:
            pts = np.atleast_2d(points)
            state = oracle.state(pts[:, 0], pts[:, 1])
            return np.asarray(state.rho) / scales.rho_ref

        samples = synth_schlieren(
            density_fn,
            band,
            counts.gradient,
            method="fd",
            h=h,
            seed=seed + 12,
            shock_distance_fn=lambda pts: oracle.signed_distance_to_shock(
                pts[:, 0], pts[:, 1]
            ),
        )
        gradient = gradient_pointset(samples)

    inflow = None
    if counts.inflow:
        nd_pre = scales.nondim(oracle.pre)
        inflow = sample_boundary(
            LineSegment((0.0, 0.0), (0.0, size), outward=(-1.0, 0.0)),
            counts.inflow,
            seed=seed + 13,
            role="inflow",
            target_fn=lambda pts: _state_rows(nd_pre, len(pts)),
        )

    probe = None
    if counts.wall_pressure:
        p_post = float(np.asarray(oracle.post.p)) / scales.pressure_ref
        pts = np.tile([geo["probe_x"], 0.0], (counts.wall_pressure, 1))
        probe = PointSet(
            role="wall-pressure",
            points=pts,
            targets=np.full((counts.wall_pressure, 1), p_post),
            seed=seed,
        )

    quadrature = None
    if counts.quadrature:
        segments = [
            LineSegment((0.0, 0.0), (size, 0.0)),
            LineSegment((size, 0.0), (size, size)),
            LineSegment((size, size), (0.0, size)),
            LineSegment((0.0, size), (0.0, 0.0)),
        ]
        quadrature = closed_boundary_quadrature(
            segments, points_per_segment=counts.quadrature
        )

    if config.method.stitched:
        terms = ("average", "residual", "flux") if config.method.flux_continuity \
            else ("average", "residual")
        decomposition = oblique_decomposition(
            mach=float(np.asarray(inlet.mach(gamma))),
            deflection=deflection,
            box=(0.0, size, 0.0, size),
            offset=geo["subdomain_offset"],
            n_interface=max(counts.interface, 2),
            terms=terms,
        )
        datasets = _distribute(
            decomposition,
            residual=residual,
            **{"gradient-data": gradient},
            inflow=inflow,
            **{"wall-pressure": probe},
            quadrature=quadrature,
        )
        interfaces = _interface_batches(decomposition, max(counts.interface, 2))
    else:
        decomposition = single_domain_decomposition(box)
        datasets = [
            {
                k: v
                for k, v in {
                    "residual": residual,
                    "gradient-data": gradient,
                    "inflow": inflow,
                    "wall-pressure": probe,
                    "quadrature": quadrature,
                }.items()
                if v is not None
            }
        ]
        interfaces = []

    loss_config = LossConfig(entropy_mode=config.method.entropy)
    networks = _networks_for(config, 2, len(decomposition))

    return Problem(
        config=config,
        scales=scales,
        loss_config=loss_config,
        decomposition=decomposition,
        networks=networks,
        datasets=datasets,
        interfaces=interfaces,
        dynamic=_dynamic_for(config, datasets),
        reference=_oracle_reference(oracle.state, scales),
        region=box,
        grid_box=(0.0, size, 0.0, size),
        eval_time=None,
        wall=None,
        freestream_speed=1.0,
    )


def _build_bow(config: ExperimentConfig) -> Problem:
    geo = config.geometry
    inlet = config.inlet.state()
    scales = ReferenceScales.from_state(inlet)
    if config.reference_path is None:
        raise IngestionError(
            "the bow experiment needs reference_path pointing at a "
            "reference-field CSV (columns x,y,rho,u,v,p with a units line)"
        )
    reference = ReferenceField.load(config.reference_path).nondimensionalized(scales)

    radius = geo["cylinder_radius"]
    xlo = geo["box_left"]
    half = geo["box_halfheight"]
    if not (radius > 0 and half > radius and xlo < -radius):
        raise ConfigurationError(
            "bow geometry needs 0 < cylinder_radius < box_halfheight and "
            "box_left < -cylinder_radius"
        )
    clip = Box((xlo, -half), (0.0, half))
    body = Disc((0.0, 0.0), radius)
    fluid = Difference(clip, body)
    counts = config.sampling
    seed = config.seed

    residual = sample_domain(fluid, counts.residual, seed=seed + 11)

    gradient = None
    if counts.gradient:
        inner, outer = geo["gradient_inner"], geo["gradient_outer"]
        if not radius <= inner < outer:
            raise ConfigurationError(
                "gradient annulus needs cylinder_radius <= gradient_inner "
                "< gradient_outer"
            )
        annulus = Intersection(
            (Difference(Disc((0.0, 0.0), outer), Disc((0.0, 0.0), inner)), clip)
        )
        samples = synth_schlieren(
            lambda pts: reference.interpolate(np.atleast_2d(pts))[:, 0],
            annulus,
            counts.gradient,
            method="fd",
            h=1e-3,
            seed=seed + 12,
        )
        gradient = gradient_pointset(samples)

    inflow = None
    if counts.inflow:
        nd = scales.nondim(inlet)
        inflow = sample_boundary(
            LineSegment((xlo, -half), (xlo, half), outward=(-1.0, 0.0)),
            counts.inflow,
            seed=seed + 13,
            role="inflow",
            target_fn=lambda pts: _state_rows(nd, len(pts)),
        )

    body_arc = CircularArc(
        (0.0, 0.0), radius, -math.pi / 2.0, -3.0 * math.pi / 2.0, inward=True
    )

    wall_pressure = None
    if counts.wall_pressure:
        wall_pressure = sample_boundary(
            body_arc,
            counts.wall_pressure,
            seed=seed + 14,
            role="wall-pressure",
            target_fn=lambda pts: reference.interpolate(pts)[:, 3:4],
        )

    wall_slip = None
    if counts.wall_slip:
        wall_slip = sample_boundary(
            body_arc, counts.wall_slip, seed=seed + 15, role="wall-slip"
        )

    quadrature = None
    if counts.quadrature:
        segments = [
            LineSegment((xlo, -half), (0.0, -half)),
            LineSegment((0.0, -half), (0.0, -radius)),
            body_arc,
            LineSegment((0.0, radius), (0.0, half)),
            LineSegment((0.0, half), (xlo, half)),
            LineSegment((xlo, half), (xlo, -half)),
        ]
        quadrature = closed_boundary_quadrature(
            segments, points_per_segment=counts.quadrature
        )

    if config.method.stitched:
        terms = ("average", "residual", "flux") if config.method.flux_continuity \
            else ("average", "residual")
        decomposition = bow_decomposition(
            cylinder_radius=radius,
            interface_radius=geo["interface_radius"],
            box=(xlo, 0.0, -half, half),
            n_interface=max(counts.interface, 2),
            terms=terms,
        )
        datasets = _distribute(
            decomposition,
            residual=residual,
            **{"gradient-data": gradient},
            inflow=inflow,
            **{"wall-pressure": wall_pressure},
            **{"wall-slip": wall_slip},
            quadrature=quadrature,
        )
        interfaces = _interface_batches(decomposition, max(counts.interface, 2))
    else:
        decomposition = single_domain_decomposition(fluid)
        datasets = [
            {
                k: v
                for k, v in {
                    "residual": residual,
                    "gradient-data": gradient,
                    "inflow": inflow,
                    "wall-pressure": wall_pressure,
                    "wall-slip": wall_slip,
                    "quadrature": quadrature,
                }.items()
                if v is not None
            }
        ]
        interfaces = []

    loss_config = LossConfig(entropy_mode=config.method.entropy)
    networks = _networks_for(config, 2, len(decomposition))

    return Problem(
        config=config,
        scales=scales,
        loss_config=loss_config,
        decomposition=decomposition,
        networks=networks,
        datasets=datasets,
        interfaces=interfaces,
        dynamic=_dynamic_for(config, datasets),
        reference=reference.interpolate,
        region=fluid,
        grid_box=(xlo, 0.0, -half, half),
        eval_time=None,
        wall=body_arc,
        freestream_speed=1.0,
    )


_BUILDERS = {
    "smooth": _build_smooth,
    "expansion": _build_expansion,
    "oblique": _build_oblique,
    "bow": _build_bow,
}


def build_problem(config: ExperimentConfig) -> Problem:
    """Materialize a config: sample every dataset, nondimensionalize targets,
    set up the decomposition, and initialize the networks."""
    return _BUILDERS[config.experiment](config)
