"""Exact gas-dynamics references: advected wave, centered expansion fan,
attached oblique shock, and ingestion of externally computed flow fields.

Angles are radians internally.  All solutions work in whatever unit system
their inlet state is given in; nondimensionalization is applied downstream.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .autodiff import Dual
from .errors import ConfigurationError, ShockPinnError
from .physics import (
    GAMMA_DEFAULT,
    AdmissibilityError,
    PrimitiveState,
    physical_entropy,
    require_admissible,
)

__all__ = [
    "IngestionError",
    "WedgeGeometry",
    "DetachedShockError",
    "smooth_advection_state",
    "smooth_advection_density_gradient",
    "smooth_advection_duals",
    "mach_angle",
    "prandtl_meyer_angle",
    "inverse_prandtl_meyer",
    "ExpansionFan",
    "deflection_from_shock_angle",
    "max_deflection",
    "weak_shock_angle",
    "normal_shock_density_ratio",
    "post_shock_state",
    "ObliqueShock",
    "verify_jump_relations",
    "resolve_post_state_ordering",
    "ReferenceField",
    "synthetic_bow_field",
]


class IngestionError(ShockPinnError, ValueError):
    """Malformed or inadmissible external reference data."""


class DetachedShockError(ShockPinnError, ValueError):
    """Deflection exceeds the attached-shock limit for the given Mach number."""


# ---------------------------------------------------------------------------
# Smooth advected density wave (unsteady, exact)
# ---------------------------------------------------------------------------

SMOOTH_U = 0.7
SMOOTH_V = 0.3
SMOOTH_P = 1.0
SMOOTH_AMPLITUDE = 0.2
SMOOTH_WAVENUMBER = math.pi


def smooth_advection_state(x, y, t) -> PrimitiveState:
    """Constant-velocity, constant-pressure transport of a sinusoidal density."""
    x, y, t = (np.asarray(q, dtype=np.float64) for q in (x, y, t))
    phase = SMOOTH_WAVENUMBER * (x + y - (SMOOTH_U + SMOOTH_V) * t)
    rho = 1.0 + SMOOTH_AMPLITUDE * np.sin(phase)
    shape = rho.shape
    return PrimitiveState(
        rho,
        np.broadcast_to(SMOOTH_U, shape).copy(),
        np.broadcast_to(SMOOTH_V, shape).copy(),
        np.broadcast_to(SMOOTH_P, shape).copy(),
    )


def smooth_advection_density_gradient(x, y, t):
    """(d rho/dx, d rho/dy, d rho/dt), all closed form."""
    x, y, t = (np.asarray(q, dtype=np.float64) for q in (x, y, t))
    phase = SMOOTH_WAVENUMBER * (x + y - (SMOOTH_U + SMOOTH_V) * t)
    slope = SMOOTH_AMPLITUDE * SMOOTH_WAVENUMBER * np.cos(phase)
    return slope, slope.copy(), -(SMOOTH_U + SMOOTH_V) * slope


def smooth_advection_duals(x, y, t):
    """Exact state as duals carrying closed-form (x, y, t) tangents."""
    x, y, t = np.broadcast_arrays(
        *(np.asarray(q, dtype=np.float64) for q in (x, y, t))
    )
    dx, dy, dt = smooth_advection_density_gradient(x, y, t)
    rho = Dual(smooth_advection_state(x, y, t).rho, np.stack([dx, dy, dt]))
    shape = x.shape
    zeros = np.zeros((3,) + shape)
    return (
        rho,
        Dual(np.broadcast_to(SMOOTH_U, shape).copy(), zeros),
        Dual(np.broadcast_to(SMOOTH_V, shape).copy(), zeros.copy()),
        Dual(np.broadcast_to(SMOOTH_P, shape).copy(), zeros.copy()),
    )


# ---------------------------------------------------------------------------
# Prandtl-Meyer machinery
# ---------------------------------------------------------------------------


def mach_angle(mach: float) -> float:
    if np.any(np.asarray(mach) < 1.0):
        raise ValueError("Mach angle requires supersonic flow")
    return float(np.arcsin(1.0 / mach))


def prandtl_meyer_angle(mach, gamma: float = GAMMA_DEFAULT):
    """Turning angle from sonic conditions to the given Mach number."""
    m = np.asarray(mach, dtype=np.float64)
    if np.any(m < 1.0):
        raise ValueError("Prandtl-Meyer angle requires Mach >= 1")
    lam = math.sqrt((gamma + 1.0) / (gamma - 1.0))
    msq = m * m - 1.0
    out = lam * np.arctan(np.sqrt(msq) / lam) - np.arctan(np.sqrt(msq))
    return float(out) if out.ndim == 0 else out


def inverse_prandtl_meyer(angle: float, gamma: float = GAMMA_DEFAULT) -> float:
    """Mach number whose turning angle equals ``angle`` (bracketed solve)."""
    lam = math.sqrt((gamma + 1.0) / (gamma - 1.0))
    limit = math.pi / 2.0 * (lam - 1.0)
    if angle < 0.0 or angle >= limit:
        raise ValueError(f"turning angle must lie in [0, {limit:.6f}) rad")
    if angle == 0.0:
        return 1.0
    hi = 2.0
    while prandtl_meyer_angle(hi, gamma) < angle:
        hi *= 2.0
        if hi > 1e6:  # pragma: no cover - unreachable below the limit
            raise ValueError("failed to bracket the Mach number")
    f = lambda m: prandtl_meyer_angle(m, gamma) - angle
    m = brentq(f, 1.0 + 1e-14, hi, xtol=1e-14, rtol=8.9e-16, maxiter=200)
    return float(m)


# ---------------------------------------------------------------------------
# Wedge geometry (expansion-corner wall and its bounding box)
# ---------------------------------------------------------------------------


@dataclass
class WedgeGeometry:
    """A flat wall that turns down by ``turn_deg`` degrees at a corner.

    Upstream of the corner the wall is horizontal; downstream it drops with
    slope ``tan`` of the turn angle (a ``tanh`` variant is selectable for
    comparison — the two differ by under 2% at 10 degrees).  The fluid
    occupies the part of the bounding box above the wall.
    """

    turn_deg: float
    corner: tuple = (0.0, 0.0)
    wall_curve: str = "tan"
    box: Optional[tuple] = None  # (xlo, xhi, ylo, yhi)

    def __post_init__(self):
        if not 0.0 < self.turn_deg < 45.0:
            raise ConfigurationError(
                "turn angle must lie in (0, 45) degrees, got %r" % self.turn_deg
            )
        if self.wall_curve not in ("tan", "tanh"):
            raise ConfigurationError(
                "wall_curve must be 'tan' or 'tanh', got %r" % self.wall_curve
            )
        if self.box is None:
            cx, cy = self.corner
            xlo, xhi = cx - 0.5, cx + 1.0
            self.box = (xlo, xhi, cy + float(self.wall_y(xhi)), cy + 1.0)

    @property
    def theta(self) -> float:
        """Turn angle in radians."""
        return math.radians(self.turn_deg)

    @property
    def slope(self) -> float:
        """Downstream wall slope magnitude."""
        fn = math.tan if self.wall_curve == "tan" else math.tanh
        return fn(self.theta)

    def wall_y(self, x) -> np.ndarray:
        """Wall height at streamwise position(s) x."""
        x = np.asarray(x, dtype=np.float64)
        cx, cy = self.corner
        return cy - self.slope * np.maximum(x - cx, 0.0)

    def above_wall(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return p[:, 1] >= self.wall_y(p[:, 0]) - 1e-14

    def domain_region(self):
        """Bounding box clipped to the fluid side of the wall."""
        from .sampling import Box, HalfPlane, Intersection, Union

        xlo, xhi, ylo, yhi = self.box
        cx, cy = self.corner
        s = self.slope
        upstream = Intersection(
            (HalfPlane(1.0, 0.0, cx), HalfPlane(0.0, -1.0, -cy))
        )
        downstream = Intersection(
            (HalfPlane(-1.0, 0.0, -cx), HalfPlane(-s, -1.0, -cy - s * cx))
        )
        return Intersection(
            (Box((xlo, ylo), (xhi, yhi)), Union((upstream, downstream)))
        )

    def downstream_wall(self):
        """Wall segment from the corner to the box edge, normal out of the fluid."""
        from .sampling import LineSegment

        xlo, xhi, ylo, yhi = self.box
        cx, cy = self.corner
        s = self.slope
        scale = math.hypot(s, 1.0)
        return LineSegment(
            (cx, cy),
            (xhi, float(self.wall_y(xhi))),
            outward=(-s / scale, -1.0 / scale),
        )

    def upstream_wall(self):
        from .sampling import LineSegment

        xlo, xhi, ylo, yhi = self.box
        cx, cy = self.corner
        return LineSegment((xlo, cy), (cx, cy), outward=(0.0, -1.0))

    def inlet(self):
        """Left boundary segment, bottom to top."""
        from .sampling import LineSegment

        xlo, xhi, ylo, yhi = self.box
        cx, cy = self.corner
        return LineSegment((xlo, cy), (xlo, yhi), outward=(-1.0, 0.0))


# ---------------------------------------------------------------------------
# Centered expansion fan around a convex corner
# ---------------------------------------------------------------------------


@dataclass
class ExpansionFan:
    """Supersonic flow along +x turning down by ``deflection`` at a corner.

    The incoming stream (Mach > 1, parallel to +x) meets a convex corner at
    ``corner``; downstream the wall drops at the deflection angle and the flow
    expands through a centered fan between the lead and tail characteristics.
    All states are isentropic functions of the ray angle from the corner.
    """

    mach_in: float
    rho_in: float
    p_in: float
    deflection: float
    gamma: float = GAMMA_DEFAULT
    corner: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.mach_in <= 1.0:
            raise ValueError("the incoming flow must be supersonic")
        if not 0.0 < self.deflection < math.pi / 2:
            raise ValueError("deflection must lie in (0, pi/2)")
        g = self.gamma
        self.nu_in = prandtl_meyer_angle(self.mach_in, g)
        self.mach_out = inverse_prandtl_meyer(self.nu_in + self.deflection, g)
        self.lead_angle = mach_angle(self.mach_in)
        self.tail_angle = mach_angle(self.mach_out) - self.deflection
        self.a_in = math.sqrt(g * self.p_in / self.rho_in)
        self.speed_in = self.mach_in * self.a_in

    # -- pointwise state -------------------------------------------------------

    def _isentropic_state(self, mach) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(rho, p, speed) at the given Mach along the inlet isentrope."""
        m = np.asarray(mach, dtype=np.float64)
        g = self.gamma
        d2 = 0.5 * (g - 1.0)
        ratio = (1.0 + d2 * self.mach_in**2) / (1.0 + d2 * m * m)
        p = self.p_in * ratio ** (g / (g - 1.0))
        rho = self.rho_in * ratio ** (1.0 / (g - 1.0))
        speed = m * np.sqrt(g * p / rho)
        return rho, p, speed

    def _ray_angle(self, x, y):
        return np.arctan2(
            np.asarray(y, dtype=np.float64) - self.corner[1],
            np.asarray(x, dtype=np.float64) - self.corner[0],
        )

    def mach_on_ray(self, phi: float) -> float:
        """Mach number on an in-fan ray at angle ``phi`` from +x."""
        f = lambda m: mach_angle(m) - (prandtl_meyer_angle(m, self.gamma) - self.nu_in) - phi
        return float(
            brentq(f, self.mach_in, self.mach_out, xtol=1e-14, rtol=8.9e-16, maxiter=200)
        )

    def state(self, x, y) -> PrimitiveState:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        x, y = np.broadcast_arrays(x, y)
        phi = self._ray_angle(x, y)
        rho = np.empty_like(phi)
        u = np.empty_like(phi)
        v = np.empty_like(phi)
        p = np.empty_like(phi)

        pre = phi >= self.lead_angle
        post = phi <= self.tail_angle
        fan = ~(pre | post)

        rho[pre], p[pre] = self.rho_in, self.p_in
        u[pre], v[pre] = self.speed_in, 0.0

        rho_o, p_o, speed_o = self._isentropic_state(self.mach_out)
        rho[post], p[post] = rho_o, p_o
        u[post] = speed_o * math.cos(self.deflection)
        v[post] = -speed_o * math.sin(self.deflection)

        if fan.any():
            machs = np.array([self.mach_on_ray(f) for f in phi[fan]])
            rho_f, p_f, speed_f = self._isentropic_state(machs)
            turn = prandtl_meyer_angle(machs, self.gamma) - self.nu_in
            rho[fan], p[fan] = rho_f, p_f
            u[fan] = speed_f * np.cos(turn)
            v[fan] = -speed_f * np.sin(turn)
        return PrimitiveState(rho, u, v, p)

    # -- closed-form gradients ---------------------------------------------------

    def state_with_gradients(self, x, y):
        """(state, d/dx of each primitive, d/dy of each primitive).

        In the uniform zones every gradient is zero; inside the fan all
        quantities depend on the ray angle only, so gradients follow from
        implicit differentiation of the characteristic condition.
        """
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        x, y = np.broadcast_arrays(x, y)
        state = self.state(x, y)
        dx = {k: np.zeros_like(x) for k in ("rho", "u", "v", "p")}
        dy = {k: np.zeros_like(x) for k in ("rho", "u", "v", "p")}

        phi = self._ray_angle(x, y)
        fan = (phi < self.lead_angle) & (phi > self.tail_angle)
        if fan.any():
            g = self.gamma
            d2 = 0.5 * (g - 1.0)
            xf = x[fan] - self.corner[0]
            yf = y[fan] - self.corner[1]
            r2 = xf * xf + yf * yf
            machs = np.array([self.mach_on_ray(f) for f in phi[fan]])
            rho_f, p_f, speed_f = self._isentropic_state(machs)
            turn = prandtl_meyer_angle(machs, g) - self.nu_in
            one = 1.0 + d2 * machs * machs
            root = np.sqrt(machs * machs - 1.0)
            # characteristic angle phi(M) = mu(M) - nu(M) + nu_in
            dmu = -1.0 / (machs * root)
            dnu = root / (machs * one)
            dM_dphi = 1.0 / (dmu - dnu)
            drho_dM = -rho_f * machs / one
            dp_dM = -g * p_f * machs / one
            a_f = speed_f / machs
            dspeed_dM = a_f / one
            du_dM = dspeed_dM * np.cos(turn) - speed_f * np.sin(turn) * dnu
            dv_dM = -dspeed_dM * np.sin(turn) - speed_f * np.cos(turn) * dnu
            # grad phi = (-y, x)/r^2
            for key, dq in (("rho", drho_dM), ("u", du_dM), ("v", dv_dM), ("p", dp_dM)):
                dq_dphi = dq * dM_dphi
                dx[key][fan] = dq_dphi * (-yf / r2)
                dy[key][fan] = dq_dphi * (xf / r2)
        return state, dx, dy

    def wall_pressure(self) -> float:
        """Uniform wall pressure downstream of the corner."""
        _, p_o, _ = self._isentropic_state(self.mach_out)
        return float(p_o)

    def outlet_state(self) -> PrimitiveState:
        rho_o, p_o, speed_o = self._isentropic_state(self.mach_out)
        return PrimitiveState(
            float(rho_o),
            float(speed_o * math.cos(self.deflection)),
            float(-speed_o * math.sin(self.deflection)),
            float(p_o),
        )

    def inlet_state(self) -> PrimitiveState:
        return PrimitiveState(self.rho_in, self.speed_in, 0.0, self.p_in)


# ---------------------------------------------------------------------------
# Attached oblique shock
# ---------------------------------------------------------------------------


def deflection_from_shock_angle(mach, shock_angle, gamma: float = GAMMA_DEFAULT):
    """Flow deflection produced by a shock at ``shock_angle`` to the stream."""
    m2 = np.asarray(mach, dtype=np.float64) ** 2
    b = np.asarray(shock_angle, dtype=np.float64)
    num = 2.0 * (m2 * np.sin(b) ** 2 - 1.0) / np.tan(b)
    den = m2 * (gamma + np.cos(2.0 * b)) + 2.0
    out = np.arctan2(num, den)
    return float(out) if out.ndim == 0 else out


def max_deflection(mach: float, gamma: float = GAMMA_DEFAULT):
    """(theta_max, beta_at_max) for an attached shock at this Mach number."""
    lo = mach_angle(mach)
    res = minimize_scalar(
        lambda b: -deflection_from_shock_angle(mach, b, gamma),
        bounds=(lo, math.pi / 2.0),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return -float(res.fun), float(res.x)


def weak_shock_angle(mach: float, deflection: float, gamma: float = GAMMA_DEFAULT) -> float:
    """Weak-branch shock angle for the given deflection; raises if detached."""
    if deflection <= 0.0:
        raise ValueError("deflection must be positive")
    theta_max, beta_max = max_deflection(mach, gamma)
    if deflection > theta_max:
        raise DetachedShockError(
            f"deflection {deflection:.4f} rad exceeds the attached-shock limit "
            f"{theta_max:.4f} rad at Mach {mach:.4f}; the shock detaches "
            "(blunt-body configuration)"
        )
    lo = mach_angle(mach) + 1e-13
    f = lambda b: deflection_from_shock_angle(mach, b, gamma) - deflection
    return float(brentq(f, lo, beta_max, xtol=1e-14, rtol=8.9e-16, maxiter=200))


def normal_shock_density_ratio(mach_normal, gamma: float = GAMMA_DEFAULT):
    m2 = np.asarray(mach_normal, dtype=np.float64) ** 2
    out = (gamma + 1.0) * m2 / ((gamma - 1.0) * m2 + 2.0)
    return float(out) if out.ndim == 0 else out


def normal_shock_pressure_ratio(mach_normal, gamma: float = GAMMA_DEFAULT):
    m2 = np.asarray(mach_normal, dtype=np.float64) ** 2
    out = 1.0 + 2.0 * gamma * (m2 - 1.0) / (gamma + 1.0)
    return float(out) if out.ndim == 0 else out


def post_shock_state(
    pre: PrimitiveState, deflection: float, gamma: float = GAMMA_DEFAULT
):
    """(post_state, shock_angle) for a weak attached shock deflecting the
    incoming +x stream upward by ``deflection``."""
    if abs(float(np.asarray(pre.v))) > 1e-12 * abs(float(np.asarray(pre.u))):
        raise ValueError("the incoming stream must be parallel to +x")
    m1 = float(np.asarray(pre.mach(gamma)))
    beta = weak_shock_angle(m1, deflection, gamma)
    m1n = m1 * math.sin(beta)
    rho2 = float(np.asarray(pre.rho)) * normal_shock_density_ratio(m1n, gamma)
    p2 = float(np.asarray(pre.p)) * normal_shock_pressure_ratio(m1n, gamma)
    m2n = math.sqrt(((gamma - 1.0) * m1n**2 + 2.0) / (2.0 * gamma * m1n**2 - (gamma - 1.0)))
    m2 = m2n / math.sin(beta - deflection)
    a2 = math.sqrt(gamma * p2 / rho2)
    speed2 = m2 * a2
    post = PrimitiveState(
        rho2, speed2 * math.cos(deflection), speed2 * math.sin(deflection), p2
    )
    return post, beta


@dataclass
class ObliqueShock:
    """Piecewise-uniform field: a weak attached shock through ``origin``.

    The incoming state fills the half-plane above the shock ray; the deflected
    state fills the wedge below it.
    """

    pre: PrimitiveState
    deflection: float
    gamma: float = GAMMA_DEFAULT
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        self.post, self.shock_angle = post_shock_state(self.pre, self.deflection, self.gamma)
        self._tan_beta = math.tan(self.shock_angle)

    def is_pre(self, x, y):
        x = np.asarray(x, dtype=np.float64) - self.origin[0]
        y = np.asarray(y, dtype=np.float64) - self.origin[1]
        return y >= self._tan_beta * x

    def signed_distance_to_shock(self, x, y):
        """Positive on the incoming side, negative downstream."""
        x = np.asarray(x, dtype=np.float64) - self.origin[0]
        y = np.asarray(y, dtype=np.float64) - self.origin[1]
        beta = self.shock_angle
        return y * math.cos(beta) - x * math.sin(beta)

    def state(self, x, y) -> PrimitiveState:
        pre_mask = self.is_pre(x, y)
        shape = np.asarray(pre_mask).shape

        def pick(a, b):
            out = np.where(pre_mask, float(np.asarray(a)), float(np.asarray(b)))
            return out.reshape(shape)

        return PrimitiveState(
            pick(self.pre.rho, self.post.rho),
            pick(self.pre.u, self.post.u),
            pick(self.pre.v, self.post.v),
            pick(self.pre.p, self.post.p),
        )


def verify_jump_relations(
    pre: PrimitiveState,
    post: PrimitiveState,
    shock_angle: float,
    gamma: float = GAMMA_DEFAULT,
) -> np.ndarray:
    """Relative mismatch of the normal flux of each conserved quantity.

    Both states are nondimensionalized by the incoming state (density,
    speed, dynamic-pressure scale) so the four flux components share one
    scale, and each component's mismatch is reported relative to the
    Euclidean norm of the incoming flux vector.  A true shock solution
    makes all four entries vanish; near-cancelling individual components
    do not inflate the result the way per-component normalization would.
    """
    n = np.array([math.sin(shock_angle), -math.cos(shock_angle)])
    rho_ref = float(np.asarray(pre.rho))
    vel_ref = float(np.asarray(pre.speed()))
    if rho_ref <= 0.0 or vel_ref <= 0.0:
        raise AdmissibilityError("incoming state must have positive density and speed")
    p_ref = rho_ref * vel_ref * vel_ref
    sides = []
    for st in (pre, post):
        rho = float(np.asarray(st.rho)) / rho_ref
        u = float(np.asarray(st.u)) / vel_ref
        v = float(np.asarray(st.v)) / vel_ref
        p = float(np.asarray(st.p)) / p_ref
        un = u * n[0] + v * n[1]
        re = p / (gamma - 1.0) + 0.5 * rho * (u * u + v * v)
        sides.append(
            np.array(
                [
                    rho * un,
                    rho * u * un + p * n[0],
                    rho * v * un + p * n[1],
                    un * (re + p),
                ]
            )
        )
    f_pre, f_post = sides
    return np.abs(f_pre - f_post) / np.linalg.norm(f_pre)


def resolve_post_state_ordering(
    pre: PrimitiveState,
    post_rho: float,
    post_speed: float,
    post_p: float,
    deflection: float,
    gamma: float = GAMMA_DEFAULT,
) -> dict:
    """Decide how a reported post-shock velocity pair maps onto (u, v).

    Builds both candidate states — ``literal`` puts speed*sin(theta) in u and
    speed*cos(theta) in v; ``swapped`` is the transpose — runs the jump-
    relation verifier on each against the incoming state, and reports the
    ordering with the smaller worst-case mismatch.
    """
    m1 = float(np.asarray(pre.mach(gamma)))
    beta = weak_shock_angle(m1, deflection, gamma)
    s, c = math.sin(deflection), math.cos(deflection)
    candidates = {
        "literal": PrimitiveState(post_rho, post_speed * s, post_speed * c, post_p),
        "swapped": PrimitiveState(post_rho, post_speed * c, post_speed * s, post_p),
    }
    residuals = {
        k: verify_jump_relations(pre, st, beta, gamma) for k, st in candidates.items()
    }
    chosen = min(residuals, key=lambda k: float(np.max(residuals[k])))
    return {
        "ordering": chosen,
        "residuals": residuals,
        "states": candidates,
        "shock_angle": beta,
    }


def entropy_rise(pre: PrimitiveState, post: PrimitiveState, gamma: float = GAMMA_DEFAULT) -> float:
    """s_post - s_pre; positive across any physical shock."""
    s_pre = physical_entropy(float(np.asarray(pre.rho)), float(np.asarray(pre.p)), gamma)
    s_post = physical_entropy(float(np.asarray(post.rho)), float(np.asarray(post.p)), gamma)
    return float(s_post - s_pre)


# ---------------------------------------------------------------------------
# External reference fields (CSV ingestion)
# ---------------------------------------------------------------------------

_REFERENCE_HEADER = ["x", "y", "rho", "u", "v", "p"]


@dataclass
class ReferenceField:
    """Scattered primitive-variable field with a declared unit system."""

    points: np.ndarray  # (N, 2)
    values: np.ndarray  # (N, 4) primitives
    units: str  # "SI" | "nondim"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise IngestionError(f"points must be (N, 2), got {self.points.shape}")
        if self.values.shape != (self.points.shape[0], 4):
            raise IngestionError(
                f"values must be (N, 4) matching {self.points.shape[0]} points, "
                f"got {self.values.shape}"
            )
        if self.units not in ("SI", "nondim"):
            raise IngestionError(f"units must be 'SI' or 'nondim', got {self.units!r}")
        self._interp = None

    @classmethod
    def load(cls, path) -> "ReferenceField":
        path = Path(path)
        if not path.exists():
            raise IngestionError(f"reference field file not found: {path}")
        units = None
        rows = []
        header = None
        with open(path, newline="") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    body = line.lstrip("#").strip()
                    if body.lower().startswith("units:"):
                        units = body.split(":", 1)[1].strip()
                    continue
                cells = [c.strip() for c in next(csv.reader(io.StringIO(line)))]
                if header is None:
                    header = [c.lower() for c in cells]
                    if header != _REFERENCE_HEADER:
                        raise IngestionError(
                            f"{path}: line {lineno}: header must be "
                            f"{','.join(_REFERENCE_HEADER)}, got {','.join(header)}"
                        )
                    continue
                if len(cells) != 6:
                    raise IngestionError(
                        f"{path}: line {lineno}: expected 6 columns, got {len(cells)}"
                    )
                try:
                    rows.append([float(c) for c in cells])
                except ValueError as e:
                    raise IngestionError(f"{path}: line {lineno}: {e}") from None
                if not all(math.isfinite(q) for q in rows[-1]):
                    raise IngestionError(f"{path}: line {lineno}: non-finite value")
                if rows[-1][2] <= 0.0 or rows[-1][5] <= 0.0:
                    raise IngestionError(
                        f"{path}: line {lineno}: density and pressure must be positive"
                    )
        if header is None or not rows:
            raise IngestionError(f"{path}: no data rows found")
        if units is None:
            raise IngestionError(
                f"{path}: missing units declaration; add a '# units: SI' or "
                "'# units: nondim' comment line"
            )
        if units not in ("SI", "nondim"):
            raise IngestionError(f"{path}: units must be 'SI' or 'nondim', got {units!r}")
        data = np.asarray(rows, dtype=np.float64)
        return cls(points=data[:, :2], values=data[:, 2:], units=units)

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(f"# units: {self.units}\n")
            fh.write(",".join(_REFERENCE_HEADER) + "\n")
            for row in np.hstack([self.points, self.values]):
                fh.write(",".join(repr(float(q)) for q in row) + "\n")

    def nondimensionalized(self, scales) -> "ReferenceField":
        """Convert SI values to reference units (no-op if already nondim)."""
        if self.units == "nondim":
            return self
        vals = self.values.copy()
        vals[:, 0] /= scales.rho_ref
        vals[:, 1] /= scales.velocity_ref
        vals[:, 2] /= scales.velocity_ref
        vals[:, 3] /= scales.pressure_ref
        return ReferenceField(points=self.points.copy(), values=vals, units="nondim")

    def interpolate(self, query) -> np.ndarray:
        """Linear interpolation with nearest-neighbor fallback off the hull."""
        from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator

        if self._interp is None:
            lin = LinearNDInterpolator(self.points, self.values)
            near = NearestNDInterpolator(self.points, self.values)
            self._interp = (lin, near)
        lin, near = self._interp
        q = np.asarray(query, dtype=np.float64)
        out = lin(q)
        bad = ~np.all(np.isfinite(out), axis=-1)
        if np.any(bad):
            out[bad] = near(q[bad])
        return out

    def state(self, x, y) -> PrimitiveState:
        q = np.stack([np.asarray(x, dtype=np.float64).ravel(),
                      np.asarray(y, dtype=np.float64).ravel()], axis=1)
        vals = self.interpolate(q)
        return PrimitiveState(vals[:, 0], vals[:, 1], vals[:, 2], vals[:, 3])


def synthetic_bow_field(
    mach: float = 4.0,
    cylinder_radius: float = 1.0,
    box=(-3.0, 0.0, -3.0, 3.0),
    n_x: int = 60,
    n_y: int = 90,
    gamma: float = GAMMA_DEFAULT,
) -> ReferenceField:
    """Fabricated smooth stand-in for a detached-shock flow field (nondim).

    This is *not* a flow solve: it blends the freestream through a parabolic
    shock layer into a stagnating near-body state, staying admissible and
    smooth.  It exists so the ingestion pipeline and error reports can be
    exercised without external flow data.
    """
    x0, x1, y0, y1 = box
    xs = np.linspace(x0, x1, n_x)
    ys = np.linspace(y0, y1, n_y)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    r = np.hypot(pts[:, 0], pts[:, 1])
    keep = r >= cylinder_radius * 1.001
    pts = pts[keep]

    p_inf = 1.0 / (gamma * mach * mach)
    rho_post = normal_shock_density_ratio(mach, gamma)
    p_post = p_inf * normal_shock_pressure_ratio(mach, gamma)
    p_stag = p_post * (1.0 + 0.2 * 0.3) ** 3.5  # mild extra compression near the body

    standoff = 0.4 * cylinder_radius
    nose = -(cylinder_radius + standoff)
    shock_x = nose - (pts[:, 1] ** 2) / (3.0 * cylinder_radius)
    s = 0.5 * (1.0 + np.tanh((pts[:, 0] - shock_x) / (0.15 * cylinder_radius)))

    r_pt = np.hypot(pts[:, 0], pts[:, 1])
    body_decay = 1.0 - np.exp(-(r_pt - cylinder_radius) / (0.6 * cylinder_radius))
    rho = 1.0 + s * (rho_post - 1.0) * (1.0 - 0.15 * np.exp(-((r_pt - cylinder_radius) / 1.5) ** 2))
    u = 1.0 * (1.0 - s) + s * (1.0 / rho_post) * body_decay
    v = s * 0.3 * np.sign(pts[:, 1]) * (1.0 - body_decay) * np.abs(pts[:, 1]) / (1.0 + pts[:, 1] ** 2)
    p = p_inf * (1.0 - s) + s * (p_post + (p_stag - p_post) * np.exp(-((r_pt - cylinder_radius) / 1.0) ** 2))

    require_admissible(rho, p, "synthetic bow field")
    vals = np.stack([rho, u, v, p], axis=1)
    return ReferenceField(points=pts, values=vals, units="nondim")
