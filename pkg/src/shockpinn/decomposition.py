"""Subdomain layouts, interfaces, and point location for stitched runs.

A decomposition is a list of subdomains (regions with ids and optional
per-subdomain overrides) plus the interfaces between them (curves carrying a
point count and the set of continuity terms enforced there).  Points within
tolerance of an interface curve belong to both adjacent subdomains; interior
points belong to exactly one.  The same claims drive training-time term
assembly and prediction-time stitching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError
from .oracles import ExpansionFan, WedgeGeometry, weak_shock_angle
from .sampling import (
    Band,
    Box,
    CircularArc,
    Difference,
    Disc,
    Intersection,
    LineSegment,
    RaySector,
    Region,
    sample_interface,
)

__all__ = [
    "INTERFACE_TOLERANCE",
    "CONTINUITY_TERMS",
    "SubdomainSpec",
    "InterfaceSpec",
    "Decomposition",
    "single_domain_decomposition",
    "smooth_decomposition",
    "expansion_decomposition",
    "oblique_decomposition",
    "bow_decomposition",
    "build_decomposition",
]

INTERFACE_TOLERANCE = 1e-12

#: continuity terms an interface may enforce
CONTINUITY_TERMS = ("average", "residual", "flux")


@dataclass
class SubdomainSpec:
    """One piece of the partition."""

    id: int
    region: Region
    network_sizes: Optional[list] = None
    point_counts: dict = field(default_factory=dict)


@dataclass
class InterfaceSpec:
    """Shared boundary between two subdomains."""

    pair: tuple
    curve: object  # LineSegment | CircularArc | Polyline
    count: int
    terms: tuple = ("average", "residual")

    def __post_init__(self):
        if len(self.pair) != 2 or self.pair[0] == self.pair[1]:
            raise ConfigurationError("interface pair must name two distinct subdomains")
        if self.count <= 0:
            raise ConfigurationError("interface point count must be positive")
        bad = [t for t in self.terms if t not in CONTINUITY_TERMS]
        if bad:
            raise ConfigurationError(
                "unknown continuity terms %r (choose from %r)" % (bad, CONTINUITY_TERMS)
            )

    def points(self) -> np.ndarray:
        """Evenly spaced points along the interface curve."""
        return sample_interface(self.curve, self.count).points


class Decomposition:
    """Immutable partition of a flow domain into subdomains."""

    def __init__(
        self,
        subdomains: Sequence[SubdomainSpec],
        interfaces: Sequence[InterfaceSpec] = (),
        tolerance: float = INTERFACE_TOLERANCE,
    ):
        if not subdomains:
            raise ConfigurationError("a decomposition needs at least one subdomain")
        ids = [s.id for s in subdomains]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("subdomain ids must be unique, got %r" % ids)
        id_set = set(ids)
        for iface in interfaces:
            missing = [q for q in iface.pair if q not in id_set]
            if missing:
                raise ConfigurationError(
                    "interface %r names unknown subdomain(s) %r" % (iface.pair, missing)
                )
        self.subdomains = list(subdomains)
        self.interfaces = list(interfaces)
        self.tolerance = float(tolerance)
        self._by_id = {s.id: s for s in self.subdomains}

    def __len__(self) -> int:
        return len(self.subdomains)

    def subdomain(self, q: int) -> SubdomainSpec:
        return self._by_id[q]

    # -- membership ------------------------------------------------------
    def _near_interfaces(self, points: np.ndarray):
        """For each interface: bool mask of points within tolerance of it."""
        return [
            iface.curve.distance(points) <= self.tolerance for iface in self.interfaces
        ]

    def claims(self, q: int, points) -> np.ndarray:
        """Mask of points subdomain ``q`` owns, interfaces included.

        A point belongs to ``q`` when its region contains it or when it lies
        within tolerance of an interface adjacent to ``q`` — the latter keeps
        membership symmetric on shared boundaries regardless of how the
        underlying region predicates treat their edges.
        """
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        mask = self._by_id[q].region.contains(p)
        for iface, near in zip(self.interfaces, self._near_interfaces(p)):
            if q in iface.pair and near.any():
                mask = mask | near
        return mask

    def indicator(self, q: int):
        """Closure form of :meth:`claims`, for the stitched predictor."""
        return lambda points: self.claims(q, points)

    def members(self, networks: Sequence) -> list:
        """Pair networks with subdomain indicators for ``stitched_forward``."""
        if len(networks) != len(self.subdomains):
            raise ConfigurationError(
                "%d networks supplied for %d subdomains"
                % (len(networks), len(self.subdomains))
            )
        return [(net, self.indicator(s.id)) for net, s in zip(networks, self.subdomains)]

    def locate(self, point):
        """('subdomain', id) for interior points, ('interface', pair) near one."""
        p = np.atleast_2d(np.asarray(point, dtype=np.float64))
        if len(p) != 1:
            raise ConfigurationError("locate() takes a single point")
        for iface, near in zip(self.interfaces, self._near_interfaces(p)):
            if near[0]:
                return ("interface", tuple(iface.pair))
        owners = [s.id for s in self.subdomains if s.region.contains(p)[0]]
        if len(owners) == 1:
            return ("subdomain", owners[0])
        if not owners:
            raise DomainError("point %s lies outside the domain" % (p[0].tolist(),))
        return ("interface", tuple(owners[:2]))

    # -- validation ------------------------------------------------------
    def validate_partition(self, count: int = 100_000, seed: int = 0) -> None:
        """Random-point audit: every domain point claimed exactly once
        (interface-tolerance aside); interface curves sit between their pair."""
        los, his = zip(*(s.region.bounds() for s in self.subdomains))
        lo = np.min(np.asarray(los), axis=0)
        hi = np.max(np.asarray(his), axis=0)
        rng = np.random.default_rng(seed)
        pts = rng.uniform(lo, hi, size=(count, len(lo)))
        owners = np.zeros(count, dtype=int)
        for s in self.subdomains:
            owners += s.region.contains(pts).astype(int)
        pts_in = pts[owners > 0]
        owned = owners[owners > 0]
        if np.any(owned > 1):
            near = np.zeros(len(pts_in), dtype=bool)
            for mask in self._near_interfaces(pts_in):
                near |= mask
            bad = (owned > 1) & ~near
            if np.any(bad):
                raise ConfigurationError(
                    "subdomain interiors overlap at %s"
                    % (pts_in[int(np.argmax(bad))].tolist(),)
                )
        for iface in self.interfaces:
            mid = iface.curve.point(np.array([0.5]))
            n = iface.curve.normal(np.array([0.5]))
            eps = 1e-9
            sides = []
            for sgn in (+1.0, -1.0):
                probe = mid + sgn * eps * n
                sides.append(
                    {s.id for s in self.subdomains if s.region.contains(probe)[0]}
                )
            a, b = iface.pair
            if not (
                (a in sides[0] and b in sides[1]) or (b in sides[0] and a in sides[1])
            ):
                raise ConfigurationError(
                    "interface %r does not separate its subdomain pair" % (iface.pair,)
                )


# ---------------------------------------------------------------------------
# Preset layouts
# ---------------------------------------------------------------------------


def single_domain_decomposition(region: Region) -> Decomposition:
    """The trivial partition used by plain (un-stitched) runs."""
    return Decomposition([SubdomainSpec(id=0, region=region)])


def smooth_decomposition(
    half_width: float = 1.0,
    n_interface: int = 101,
    terms: tuple = ("average", "residual"),
) -> Decomposition:
    """Square advection domain split vertically at x = 0."""
    w = float(half_width)
    left = Box((-w, -w), (0.0, w))
    right = Box((0.0, -w), (w, w))
    iface = InterfaceSpec(
        pair=(0, 1),
        curve=LineSegment((0.0, -w), (0.0, w)),
        count=n_interface,
        terms=terms,
    )
    return Decomposition(
        [SubdomainSpec(0, left), SubdomainSpec(1, right)], [iface]
    )


def _ray_exit(corner, angle, box) -> tuple:
    """Where a ray from ``corner`` at ``angle`` leaves an (xlo,xhi,ylo,yhi) box."""
    xlo, xhi, ylo, yhi = box
    cx, cy = corner
    dx, dy = math.cos(angle), math.sin(angle)
    ts = []
    if dx > 0:
        ts.append((xhi - cx) / dx)
    elif dx < 0:
        ts.append((xlo - cx) / dx)
    if dy > 0:
        ts.append((yhi - cy) / dy)
    elif dy < 0:
        ts.append((ylo - cy) / dy)
    t = min(t for t in ts if t > 0)
    return (cx + t * dx, cy + t * dy)


def expansion_decomposition(
    fan: ExpansionFan,
    geometry: Optional[WedgeGeometry] = None,
    margin_deg: float = 6.0,
    n_interface: int = 300,
    terms: tuple = ("average", "residual"),
) -> Decomposition:
    """Two subdomains: a sector enclosing the expansion fan, and the rest.

    The sector spans from ``margin_deg`` below the tail characteristic to
    ``margin_deg`` above the lead characteristic, so the entire nonuniform
    region lies in one subdomain; both straight edges are interfaces.
    """
    if geometry is None:
        geometry = WedgeGeometry(math.degrees(fan.deflection), corner=fan.corner)
    domain = geometry.domain_region()
    margin = math.radians(margin_deg)
    lo = fan.tail_angle - margin
    hi = fan.lead_angle + margin
    if lo <= -geometry.theta:
        raise ConfigurationError(
            "sector margin reaches the wall; reduce margin_deg"
        )
    xlo, xhi, ylo, yhi = geometry.box
    clip = Box((xlo, ylo), (xhi, yhi))
    sector = RaySector(fan.corner, lo, hi, clip=clip)
    sub_fan = SubdomainSpec(1, Intersection((domain, sector)))
    sub_rest = SubdomainSpec(0, Difference(domain, sector))
    interfaces = [
        InterfaceSpec(
            pair=(0, 1),
            curve=LineSegment(fan.corner, _ray_exit(fan.corner, ang, geometry.box)),
            count=n_interface,
            terms=terms,
        )
        for ang in (hi, lo)
    ]
    return Decomposition([sub_rest, sub_fan], interfaces)


def oblique_decomposition(
    mach: float,
    deflection: float,
    box: tuple = (0.0, 1.0, 0.0, 1.0),
    offset: float = 0.18,
    n_interface: int = 200,
    terms: tuple = ("average", "residual", "flux"),
    shock_origin: tuple = (0.0, 0.0),
) -> Decomposition:
    """Three subdomains: a band straddling the shock and the two far sides.

    The band's edges run parallel to the shock line at perpendicular offset
    ``offset``; flux continuity is enforced on both interfaces by default.
    """
    beta = weak_shock_angle(mach, deflection)
    xlo, xhi, ylo, yhi = box
    clip = Box((xlo, ylo), (xhi, yhi))
    band = Band(shock_origin, beta, offset, clip=clip)
    n_hat = (-math.sin(beta), math.cos(beta))
    # signed_distance > 0 on the pre-shock (upper-left) side
    pre = _HalfSide(band, +1.0, offset, clip)
    post = _HalfSide(band, -1.0, offset, clip)
    interfaces = []
    for sgn, pair in ((+1.0, (0, 1)), (-1.0, (1, 2))):
        p0 = (
            shock_origin[0] + sgn * offset * n_hat[0],
            shock_origin[1] + sgn * offset * n_hat[1],
        )
        seg = _clip_line_to_box(p0, beta, box)
        interfaces.append(
            InterfaceSpec(pair=pair, curve=seg, count=n_interface, terms=terms)
        )
    return Decomposition(
        [SubdomainSpec(0, pre), SubdomainSpec(1, band), SubdomainSpec(2, post)],
        interfaces,
    )


@dataclass(frozen=True)
class _HalfSide(Region):
    """Points beyond one edge of a band (sign picks the side)."""

    band: Band
    sign: float
    offset: float
    clip: Box

    def contains(self, points) -> np.ndarray:
        d = self.sign * self.band.signed_distance(points)
        return (d >= self.offset) & self.clip.contains(points)

    def bounds(self):
        return self.clip.bounds()


def _clip_line_to_box(point, angle, box) -> LineSegment:
    """Segment of the line through ``point`` at ``angle`` inside the box."""
    xlo, xhi, ylo, yhi = box
    dx, dy = math.cos(angle), math.sin(angle)
    ts = []
    for bound, origin, d in ((xlo, point[0], dx), (xhi, point[0], dx)):
        if d != 0:
            ts.append((bound - origin) / d)
    for bound, origin, d in ((ylo, point[1], dy), (yhi, point[1], dy)):
        if d != 0:
            ts.append((bound - origin) / d)
    eps = 1e-12
    inside = []
    for t in ts:
        x = point[0] + t * dx
        y = point[1] + t * dy
        if xlo - eps <= x <= xhi + eps and ylo - eps <= y <= yhi + eps:
            inside.append(t)
    if len(inside) < 2:
        raise ConfigurationError("line misses the box")
    t0, t1 = min(inside), max(inside)
    if t1 - t0 <= eps:
        raise ConfigurationError("line only touches the box corner")
    return LineSegment(
        (point[0] + t0 * dx, point[1] + t0 * dy),
        (point[0] + t1 * dx, point[1] + t1 * dy),
    )


def bow_decomposition(
    cylinder_center: tuple = (0.0, 0.0),
    cylinder_radius: float = 1.0,
    interface_radius: float = 2.0,
    box: tuple = (-3.0, 0.0, -3.0, 3.0),
    n_interface: int = 200,
    terms: tuple = ("average", "residual"),
) -> Decomposition:
    """Two subdomains around a blunt body, split by a circular-arc interface."""
    if not cylinder_radius < interface_radius:
        raise ConfigurationError("interface arc must enclose the cylinder")
    xlo, xhi, ylo, yhi = box
    clip = Box((xlo, ylo), (xhi, yhi))
    body = Disc(cylinder_center, cylinder_radius)
    inner_disc = Disc(cylinder_center, interface_radius)
    near = Intersection((Difference(inner_disc, body), clip))
    far = Difference(clip, inner_disc)
    arc = CircularArc(
        cylinder_center, interface_radius, math.pi / 2.0, 3.0 * math.pi / 2.0
    )
    iface = InterfaceSpec(pair=(0, 1), curve=arc, count=n_interface, terms=terms)
    return Decomposition([SubdomainSpec(0, far), SubdomainSpec(1, near)], [iface])


def build_decomposition(experiment: str, **kwargs) -> Decomposition:
    """The stitched layout each experiment uses (see the presets above)."""
    builders = {
        "smooth": smooth_decomposition,
        "expansion": expansion_decomposition,
        "oblique": oblique_decomposition,
        "bow": bow_decomposition,
    }
    if experiment not in builders:
        raise ConfigurationError(
            "unknown experiment %r (expected one of %s)"
            % (experiment, sorted(builders))
        )
    return builders[experiment](**kwargs)
