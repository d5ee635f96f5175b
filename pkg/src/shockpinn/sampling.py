"""Point-set generation for training and evaluation.

Everything a training run feeds on is produced here: interior collocation
points where residuals are enforced, density-gradient measurements imitating
Schlieren data inside a sub-region, inflow-boundary states, wall-pressure
samples, slip-wall points with outward normals, and evenly spaced interface
points for stitched multi-network runs.  All generators are deterministic
given their seed.

Geometric regions are small predicate objects (`contains`, `bounds`) so the
same shapes drive sampling, subdomain membership, and masking during
analysis.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "Region",
    "Box",
    "HalfPlane",
    "Disc",
    "Polygon",
    "RaySector",
    "Band",
    "Intersection",
    "Union",
    "Difference",
    "LineSegment",
    "CircularArc",
    "Polyline",
    "PointSet",
    "GradientSample",
    "ROLE_TARGET_WIDTH",
    "sample_domain",
    "sample_boundary",
    "sample_interface",
    "synth_schlieren",
    "gradient_pointset",
    "save_pointset",
    "load_pointset",
]


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------


# Membership slack for points computed from a boundary parametrization:
# round-off (e.g. cos(-pi/2) = 6.1e-17) must not push them off the domain.
_EDGE_TOL = 1e-9


class Region:
    """Predicate over 2-D (or, for boxes, N-D) points."""

    def contains(self, points: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def interior_contains(self, points: np.ndarray) -> np.ndarray:
        """Strict membership, excluding the boundary where distinguishable.

        Used by :class:`Difference` so that carving a hole out of a domain
        keeps the hole's rim: fields are evaluated and sampled on walls.
        """
        return self.contains(points)

    def bounds(self) -> tuple:  # pragma: no cover
        """((lo...), (hi...)) axis-aligned bounding box."""
        raise NotImplementedError

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.contains(points)


def _pts(points, dim: Optional[int] = None) -> np.ndarray:
    a = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if dim is not None and a.shape[1] < dim:
        raise ConfigurationError(
            "points have %d coordinates, need at least %d" % (a.shape[1], dim)
        )
    return a


@dataclass(frozen=True)
class Box(Region):
    """Axis-aligned box in any dimension; inclusive by default."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in np.atleast_1d(self.lo))
        hi = tuple(float(x) for x in np.atleast_1d(self.hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi):
            raise ConfigurationError("box lo/hi dimension mismatch")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ConfigurationError("box is empty: lo=%r hi=%r" % (lo, hi))

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, points) -> np.ndarray:
        p = _pts(points, self.dim)[:, : self.dim]
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((p >= lo - _EDGE_TOL) & (p <= hi + _EDGE_TOL), axis=1)

    def interior_contains(self, points) -> np.ndarray:
        p = _pts(points, self.dim)[:, : self.dim]
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((p > lo + _EDGE_TOL) & (p < hi - _EDGE_TOL), axis=1)

    def bounds(self):
        return self.lo, self.hi


@dataclass(frozen=True)
class HalfPlane(Region):
    """Points satisfying a*x + b*y <= c."""

    a: float
    b: float
    c: float
    clip: Optional[Box] = None

    def __post_init__(self):
        if self.a == 0.0 and self.b == 0.0:
            raise ConfigurationError("half-plane needs a nonzero normal")

    def contains(self, points) -> np.ndarray:
        p = _pts(points, 2)
        ok = self.a * p[:, 0] + self.b * p[:, 1] <= self.c
        if self.clip is not None:
            ok &= self.clip.contains(p)
        return ok

    def bounds(self):
        if self.clip is None:
            raise ConfigurationError("unbounded half-plane: supply a clip box")
        return self.clip.bounds()


@dataclass(frozen=True)
class Disc(Region):
    """Closed disc of given center and radius."""

    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigurationError("disc radius must be positive")

    def contains(self, points) -> np.ndarray:
        p = _pts(points, 2)
        return np.hypot(p[:, 0] - self.center[0], p[:, 1] - self.center[1]) <= self.radius

    def interior_contains(self, points) -> np.ndarray:
        p = _pts(points, 2)
        r = np.hypot(p[:, 0] - self.center[0], p[:, 1] - self.center[1])
        return r < self.radius - _EDGE_TOL

    def bounds(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cy - r), (cx + r, cy + r)


@dataclass(frozen=True)
class Polygon(Region):
    """Simple polygon via the even-odd ray-casting rule (2-D)."""

    vertices: tuple

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise ConfigurationError("polygon needs at least 3 vertices")
        object.__setattr__(self, "vertices", verts)

    def contains(self, points) -> np.ndarray:
        p = _pts(points, 2)
        x, y = p[:, 0], p[:, 1]
        inside = np.zeros(len(p), dtype=bool)
        verts = np.asarray(self.vertices)
        x0, y0 = verts[-1]
        for x1, y1 in verts:
            crosses = (y0 > y) != (y1 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xi = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            inside ^= crosses & (x < np.where(crosses, xi, np.inf))
            x0, y0 = x1, y1
        return inside

    def bounds(self):
        verts = np.asarray(self.vertices)
        return tuple(verts.min(axis=0)), tuple(verts.max(axis=0))


@dataclass(frozen=True)
class RaySector(Region):
    """Points whose ray angle from a vertex lies in [angle_lo, angle_hi].

    Angles follow atan2 conventions (radians).  An optional radial range
    restricts the sector to an annulus; the default extends to infinity, so
    ``bounds`` needs an explicit clip box for sampling.
    """

    vertex: tuple
    angle_lo: float
    angle_hi: float
    clip: Optional[Box] = None
    r_min: float = 0.0
    r_max: float = math.inf

    def __post_init__(self):
        if not self.angle_lo < self.angle_hi:
            raise ConfigurationError("sector needs angle_lo < angle_hi")

    def contains(self, points) -> np.ndarray:
        p = _pts(points, 2)
        dx = p[:, 0] - self.vertex[0]
        dy = p[:, 1] - self.vertex[1]
        ang = np.arctan2(dy, dx)
        r = np.hypot(dx, dy)
        ok = (ang >= self.angle_lo) & (ang <= self.angle_hi)
        ok &= (r >= self.r_min) & (r <= self.r_max)
        if self.clip is not None:
            ok &= self.clip.contains(p)
        return ok

    def bounds(self):
        if self.clip is None:
            raise ConfigurationError("unbounded sector: supply a clip box")
        return self.clip.bounds()


@dataclass(frozen=True)
class Band(Region):
    """Points within ``halfwidth`` of the line through ``point`` at ``angle``."""

    point: tuple
    angle: float
    halfwidth: float
    clip: Optional[Box] = None

    def __post_init__(self):
        if self.halfwidth <= 0:
            raise ConfigurationError("band halfwidth must be positive")

    def signed_distance(self, points) -> np.ndarray:
        """Perpendicular distance; positive on the left of the direction."""
        p = _pts(points, 2)
        n = np.array([-math.sin(self.angle), math.cos(self.angle)])
        return (p[:, 0] - self.point[0]) * n[0] + (p[:, 1] - self.point[1]) * n[1]

    def contains(self, points) -> np.ndarray:
        ok = np.abs(self.signed_distance(points)) <= self.halfwidth
        if self.clip is not None:
            ok &= self.clip.contains(_pts(points, 2))
        return ok

    def bounds(self):
        if self.clip is None:
            raise ConfigurationError("unbounded band: supply a clip box")
        return self.clip.bounds()


def _common_bounds(regions, reduce_fn_lo, reduce_fn_hi, lenient: bool = False):
    pairs = []
    for r in regions:
        try:
            pairs.append(r.bounds())
        except ConfigurationError:
            if not lenient:
                raise
    if not pairs:
        raise ConfigurationError("no member region provides bounds")
    los, his = zip(*pairs)
    lo = tuple(map(reduce_fn_lo, zip(*los)))
    hi = tuple(map(reduce_fn_hi, zip(*his)))
    return lo, hi


@dataclass(frozen=True)
class Intersection(Region):
    regions: tuple

    def contains(self, points) -> np.ndarray:
        p = _pts(points)
        out = np.ones(len(p), dtype=bool)
        for r in self.regions:
            out &= r.contains(p)
        return out

    def bounds(self):
        # any single bounded member bounds the intersection
        return _common_bounds(self.regions, max, min, lenient=True)


@dataclass(frozen=True)
class Union(Region):
    regions: tuple

    def contains(self, points) -> np.ndarray:
        p = _pts(points)
        out = np.zeros(len(p), dtype=bool)
        for r in self.regions:
            out |= r.contains(p)
        return out

    def bounds(self):
        return _common_bounds(self.regions, min, max)


@dataclass(frozen=True)
class Difference(Region):
    """Points in ``base`` but not in the interior of ``removed``.

    Subtracting only the interior keeps the rim of the hole in the region,
    so wall points remain legal sampling and evaluation locations.
    """

    base: Region
    removed: Region

    def contains(self, points) -> np.ndarray:
        p = _pts(points)
        return self.base.contains(p) & ~self.removed.interior_contains(p)

    def bounds(self):
        return self.base.bounds()


# ---------------------------------------------------------------------------
# Boundary curves
# ---------------------------------------------------------------------------


def _segment_distance(points: np.ndarray, a, b) -> np.ndarray:
    p = _pts(points, 2)[:, :2]
    a = np.asarray(a, dtype=np.float64)
    d = np.asarray(b, dtype=np.float64) - a
    t = np.clip(((p - a) @ d) / (d @ d), 0.0, 1.0)
    closest = a + t[:, None] * d
    return np.hypot(p[:, 0] - closest[:, 0], p[:, 1] - closest[:, 1])


@dataclass(frozen=True)
class LineSegment:
    """Straight segment with an explicit outward normal direction."""

    start: tuple
    end: tuple
    outward: Optional[tuple] = None

    def __post_init__(self):
        if np.allclose(self.start, self.end):
            raise ConfigurationError("degenerate segment: start == end")

    @property
    def length(self) -> float:
        return float(np.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1]))

    def point(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)[..., None]
        a = np.asarray(self.start)
        b = np.asarray(self.end)
        return a + t * (b - a)

    def normal(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if self.outward is not None:
            n = np.asarray(self.outward, dtype=np.float64)
        else:
            d = np.asarray(self.end) - np.asarray(self.start)
            n = np.array([d[1], -d[0]])
        n = n / np.linalg.norm(n)
        return np.broadcast_to(n, (len(t), 2)).copy()

    def distance(self, points) -> np.ndarray:
        return _segment_distance(points, self.start, self.end)


@dataclass(frozen=True)
class CircularArc:
    """Arc of a circle; outward normals point away from the center by default."""

    center: tuple
    radius: float
    angle_start: float
    angle_end: float
    inward: bool = False

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigurationError("arc radius must be positive")
        if self.angle_start == self.angle_end:
            raise ConfigurationError("degenerate arc: zero angular extent")

    @property
    def length(self) -> float:
        return abs(self.angle_end - self.angle_start) * self.radius

    def _phi(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.angle_start + t * (self.angle_end - self.angle_start)

    def point(self, t) -> np.ndarray:
        phi = self._phi(t)
        return np.stack(
            [
                self.center[0] + self.radius * np.cos(phi),
                self.center[1] + self.radius * np.sin(phi),
            ],
            axis=-1,
        )

    def normal(self, t) -> np.ndarray:
        phi = np.atleast_1d(self._phi(t))
        n = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        return -n if self.inward else n

    def distance(self, points) -> np.ndarray:
        p = _pts(points, 2)[:, :2]
        dx = p[:, 0] - self.center[0]
        dy = p[:, 1] - self.center[1]
        ang = np.arctan2(dy, dx)
        lo, hi = sorted((self.angle_start, self.angle_end))
        # fold the candidate angle into [lo, hi] modulo full turns
        two_pi = 2.0 * math.pi
        folded = lo + np.mod(ang - lo, two_pi)
        on_arc = folded <= hi
        radial = np.abs(np.hypot(dx, dy) - self.radius)
        d_ends = np.minimum(
            np.hypot(*(p - self.point(0.0)).T), np.hypot(*(p - self.point(1.0)).T)
        )
        return np.where(on_arc, radial, d_ends)


@dataclass(frozen=True)
class Polyline:
    """Chain of straight segments; arclength-parameterized."""

    vertices: tuple

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 2:
            raise ConfigurationError("polyline needs at least 2 vertices")
        object.__setattr__(self, "vertices", verts)
        segs = np.diff(np.asarray(verts), axis=0)
        lens = np.hypot(segs[:, 0], segs[:, 1])
        if np.any(lens == 0.0):
            raise ConfigurationError("polyline has a zero-length segment")
        cum = np.concatenate([[0.0], np.cumsum(lens)])
        object.__setattr__(self, "_cum", cum)

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    def point(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        s = np.clip(t, 0.0, 1.0) * self.length
        verts = np.asarray(self.vertices)
        idx = np.clip(np.searchsorted(self._cum, s, side="right") - 1, 0, len(verts) - 2)
        seg_len = self._cum[idx + 1] - self._cum[idx]
        frac = (s - self._cum[idx]) / seg_len
        return verts[idx] + frac[:, None] * (verts[idx + 1] - verts[idx])

    def normal(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        s = np.clip(t, 0.0, 1.0) * self.length
        verts = np.asarray(self.vertices)
        idx = np.clip(np.searchsorted(self._cum, s, side="right") - 1, 0, len(verts) - 2)
        d = verts[idx + 1] - verts[idx]
        n = np.stack([d[:, 1], -d[:, 0]], axis=-1)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def distance(self, points) -> np.ndarray:
        verts = self.vertices
        d = _segment_distance(points, verts[0], verts[1])
        for a, b in zip(verts[1:-1], verts[2:]):
            d = np.minimum(d, _segment_distance(points, a, b))
        return d


# ---------------------------------------------------------------------------
# Point sets
# ---------------------------------------------------------------------------

#: target-vector width each role must carry (None = no targets allowed)
ROLE_TARGET_WIDTH = {
    "residual": None,
    "data": 4,
    "gradient-data": 2,
    "inflow": 4,
    "wall-pressure": 1,
    "interface": None,
    "wall-slip": None,
}


@dataclass
class PointSet:
    """Coordinates plus role-dependent targets.

    ``points`` is (N, d) with d = 2 for steady problems, 3 when a time
    coordinate rides along.  ``targets`` is (N, T) with T fixed by the role
    (density-gradient pairs, full inflow states, wall pressures).
    ``normals`` is (N, 2) and only travels with wall-slip points.
    """

    role: str
    points: np.ndarray
    targets: Optional[np.ndarray] = None
    normals: Optional[np.ndarray] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.role not in ROLE_TARGET_WIDTH:
            raise ConfigurationError(
                "unknown point-set role %r (expected one of %s)"
                % (self.role, sorted(ROLE_TARGET_WIDTH))
            )
        self.points = _pts(self.points)
        width = ROLE_TARGET_WIDTH[self.role]
        if width is None:
            if self.targets is not None:
                raise ConfigurationError("%s points carry no targets" % self.role)
        else:
            if self.targets is None:
                raise ConfigurationError(
                    "%s points need %d target column(s)" % (self.role, width)
                )
            self.targets = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
            if self.targets.shape != (len(self.points), width):
                raise ConfigurationError(
                    "%s targets must have shape (%d, %d), got %r"
                    % (self.role, len(self.points), width, self.targets.shape)
                )
            if not np.all(np.isfinite(self.targets)):
                raise ConfigurationError("%s targets contain non-finite values" % self.role)
        if self.role == "wall-slip":
            if self.normals is None:
                raise ConfigurationError("wall-slip points need outward normals")
            self.normals = np.atleast_2d(np.asarray(self.normals, dtype=np.float64))
            if self.normals.shape != (len(self.points), 2):
                raise ConfigurationError("normals must have shape (N, 2)")
        elif self.normals is not None:
            raise ConfigurationError("only wall-slip points carry normals")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class GradientSample:
    """One synthetic Schlieren measurement: location and a (∂xρ, ∂yρ) target."""

    location: tuple
    gradient: tuple
    method: str
    h: Optional[float] = None

    def __post_init__(self):
        if not all(math.isfinite(g) for g in self.gradient):
            raise DomainError(
                "non-finite density gradient at %r" % (self.location,)
            )
        if self.method == "fd" and not (self.h is not None and self.h > 0):
            raise ConfigurationError("finite-difference samples need h > 0")


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def sample_domain(
    region: Region,
    count: int,
    seed: int = 0,
    strategy: str = "uniform",
    role: str = "residual",
) -> PointSet:
    """Points strictly inside ``region``.

    ``uniform`` rejection-samples the region's bounding box; ``grid`` lays
    cell centers of the finest regular lattice whose interior hits reach
    ``count`` and keeps an evenly strided subset.  Both are deterministic
    given ``seed`` (the grid ignores it).
    """
    if count <= 0:
        raise ConfigurationError("count must be positive, got %d" % count)
    lo, hi = region.bounds()
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    dim = len(lo)
    if strategy == "uniform":
        rng = np.random.default_rng(seed)
        chunks = []
        have = 0
        attempts = 0
        while have < count:
            draw = rng.uniform(lo, hi, size=(max(count, 1024), dim))
            keep = draw[region.contains(draw)]
            chunks.append(keep)
            have += len(keep)
            attempts += 1
            if attempts > 1000 and have == 0:
                raise DomainError(
                    "region accepted no samples in %d draws; is it empty?"
                    % (attempts * max(count, 1024))
                )
        pts = np.concatenate(chunks)[:count]
    elif strategy == "grid":
        span = hi - lo
        base = int(math.ceil(count ** (1.0 / dim)))
        n_axis = None
        for scale in range(base, 64 * base + 1):
            counts = np.maximum(1, np.round(scale * span / span.max()).astype(int))
            axes = [
                lo[d] + (np.arange(counts[d]) + 0.5) * span[d] / counts[d]
                for d in range(dim)
            ]
            mesh = np.meshgrid(*axes, indexing="ij")
            cand = np.stack([m.ravel(order="F") for m in mesh], axis=-1)
            inside = cand[region.contains(cand)]
            if len(inside) >= count:
                n_axis = inside
                break
        if n_axis is None:
            raise DomainError("grid refinement found too few interior points")
        idx = np.linspace(0, len(n_axis) - 1, count).round().astype(int)
        pts = n_axis[idx]
    else:
        raise ConfigurationError("unknown sampling strategy %r" % strategy)
    return PointSet(role=role, points=pts, seed=seed)


def sample_boundary(
    segment,
    count: int,
    seed: int = 0,
    role: str = "inflow",
    target_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    spacing: str = "random",
) -> PointSet:
    """Points on a boundary curve with role-appropriate targets attached.

    ``target_fn(points) -> (N, T)`` supplies inflow states or wall pressures;
    wall-slip sets instead carry the curve's outward unit normals.
    """
    if count <= 0:
        raise ConfigurationError("count must be positive, got %d" % count)
    if spacing == "random":
        t = np.sort(np.random.default_rng(seed).uniform(0.0, 1.0, count))
    elif spacing == "even":
        t = np.linspace(0.0, 1.0, count) if count > 1 else np.array([0.5])
    else:
        raise ConfigurationError("unknown spacing %r" % spacing)
    pts = segment.point(t)
    width = ROLE_TARGET_WIDTH[role]
    targets = None
    normals = None
    if role == "wall-slip":
        normals = segment.normal(t)
    elif width is not None:
        if target_fn is None:
            raise ConfigurationError("%s points need a target function" % role)
        targets = np.atleast_2d(np.asarray(target_fn(pts), dtype=np.float64))
        if targets.shape == (1, width) and len(pts) > 1:
            targets = np.broadcast_to(targets, (len(pts), width)).copy()
    return PointSet(role=role, points=pts, targets=targets, normals=normals, seed=seed)


def sample_interface(segment, count: int, role: str = "interface") -> PointSet:
    """Evenly spaced (by arclength) points along an interface curve,
    inclusive of both endpoints."""
    if count <= 0:
        raise ConfigurationError("count must be positive, got %d" % count)
    t = np.linspace(0.0, 1.0, count) if count > 1 else np.array([0.5])
    return PointSet(role=role, points=segment.point(t))


def synth_schlieren(
    density_fn: Callable[[np.ndarray], np.ndarray],
    region: Region,
    count: int,
    method: str = "analytic",
    h: float = 1e-3,
    seed: int = 0,
    gradient_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    shock_distance_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    noise_std: float = 0.0,
) -> list:
    """Synthetic density-gradient measurements inside ``region``.

    ``analytic`` requires ``gradient_fn(points) -> (N, 2)`` closed-form
    gradients.  ``fd`` central-differences ``density_fn`` with spacing ``h``;
    when ``shock_distance_fn`` marks a nearby discontinuity, the stencil
    shifts fully onto the sample's side (a second-order one-sided formula) so
    targets stay one-sided smooth gradients instead of O(1/h) jump artifacts.
    """
    pts = sample_domain(region, count, seed=seed).points
    if method == "analytic":
        if gradient_fn is None:
            raise ConfigurationError("analytic method needs gradient_fn")
        grads = np.atleast_2d(np.asarray(gradient_fn(pts), dtype=np.float64))
        used_h = None
    elif method == "fd":
        if h <= 0:
            raise ConfigurationError("finite-difference spacing h must be positive")
        grads = np.empty((len(pts), 2))
        side = None
        if shock_distance_fn is not None:
            side = np.sign(np.asarray(shock_distance_fn(pts), dtype=np.float64))
        for axis in range(2):
            e = np.zeros(pts.shape[1])
            e[axis] = h
            plus = pts + e
            minus = pts - e
            central = (density_fn(plus) - density_fn(minus)) / (2.0 * h)
            grads[:, axis] = central
            if side is not None:
                d_plus = np.asarray(shock_distance_fn(plus))
                d_minus = np.asarray(shock_distance_fn(minus))
                crossed = (np.sign(d_plus) != side) | (np.sign(d_minus) != side)
                crossed &= side != 0
                if np.any(crossed):
                    p0 = pts[crossed]
                    s = side[crossed][:, None] * e
                    f0 = density_fn(p0)
                    f1 = density_fn(p0 + s)
                    f2 = density_fn(p0 + 2.0 * s)
                    one_sided = (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)
                    grads[crossed, axis] = side[crossed] * one_sided
        used_h = h
    else:
        raise ConfigurationError("unknown gradient method %r" % method)
    if not np.all(np.isfinite(grads)):
        bad = int(np.argmax(~np.all(np.isfinite(grads), axis=1)))
        raise DomainError(
            "density oracle produced a non-finite gradient at %s" % (pts[bad].tolist(),)
        )
    if noise_std > 0.0:
        grads = grads + np.random.default_rng(seed + 1).normal(0.0, noise_std, grads.shape)
    return [
        GradientSample(
            location=tuple(p.tolist()),
            gradient=tuple(g.tolist()),
            method=method,
            h=used_h,
        )
        for p, g in zip(pts, grads)
    ]


def gradient_pointset(samples: Sequence[GradientSample]) -> PointSet:
    """Pack gradient samples into a training-ready point set."""
    if not samples:
        raise ConfigurationError("no gradient samples supplied")
    pts = np.array([s.location for s in samples])
    tg = np.array([s.gradient for s in samples])
    return PointSet(role="gradient-data", points=pts, targets=tg)


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------

_COORD_NAMES = ["x", "y", "t"]
_TARGET_NAMES = {
    "gradient-data": ["drho_dx", "drho_dy"],
    "inflow": ["rho", "u", "v", "p"],
    "wall-pressure": ["p"],
}


def save_pointset(ps: PointSet, path) -> None:
    """Write a point set with a role comment line and a descriptive header."""
    path = Path(path)
    coords = _COORD_NAMES[: ps.dim]
    header = list(coords)
    blocks = [ps.points]
    if ps.targets is not None:
        header += _TARGET_NAMES[ps.role]
        blocks.append(ps.targets)
    if ps.normals is not None:
        header += ["nx", "ny"]
        blocks.append(ps.normals)
    data = np.hstack(blocks)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write("# role: %s\n" % ps.role)
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in data:
            writer.writerow([repr(float(x)) for x in row])


def load_pointset(path) -> PointSet:
    """Inverse of :func:`save_pointset`."""
    path = Path(path)
    with path.open("r", newline="", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# role:"):
            raise ConfigurationError(
                "%s: expected a '# role: <role>' comment on line 1" % path
            )
        role = first.split(":", 1)[1].strip()
        reader = csv.reader(fh)
        header = next(reader)
        rows = [list(map(float, row)) for row in reader if row]
    data = np.array(rows, dtype=np.float64)
    dim = sum(1 for name in header if name in _COORD_NAMES)
    pts = data[:, :dim]
    rest = data[:, dim:]
    width = ROLE_TARGET_WIDTH.get(role)
    targets = None
    normals = None
    if role == "wall-slip":
        normals = rest[:, :2]
    elif width:
        targets = rest[:, :width]
    return PointSet(role=role, points=pts, targets=targets, normals=normals)
