"""Compressible-flow algebra for a calorically perfect gas in two dimensions.

State conversions, x/y flux vectors, the entropy/entropy-flux pair, pointwise
PDE residual assembly, and reference-scale nondimensionalization.  The
residual assemblers are generic over the value carrier: they accept plain
numpy arrays, forward duals, or tape nodes — anything supporting arithmetic
(and ``.tangent(k)`` / ``.log()`` where derivatives or entropy are involved).
Tangent direction order is (x, y, t); time is direction 2 and only unsteady
assemblers touch it.

Conserved order: (density, x-momentum, y-momentum, total energy).
Primitive order: (density, x-velocity, y-velocity, pressure).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from .errors import ShockPinnError

GAMMA_DEFAULT = 1.4

__all__ = [
    "GAMMA_DEFAULT",
    "AdmissibilityError",
    "PrimitiveState",
    "ReferenceScales",
    "pressure_from_conserved",
    "conserved_from_primitive",
    "primitive_from_conserved",
    "total_energy_density",
    "flux_x",
    "flux_y",
    "physical_entropy",
    "entropy_pair",
    "entropy_gradient",
    "entropy_compatibility_residuals",
    "steady_euler_residuals",
    "unsteady_euler_residuals",
    "entropy_residual",
]


class AdmissibilityError(ShockPinnError, ValueError):
    """A state with non-positive density or pressure where one is required."""


def _log(x):
    return x.log() if hasattr(x, "log") else np.log(x)


@dataclass
class PrimitiveState:
    """Density, velocity components, pressure; scalar or array-valued."""

    rho: np.ndarray
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray

    def as_array(self) -> np.ndarray:
        """Stacked (N, 4) array in primitive order."""
        rho, u, v, p = np.broadcast_arrays(
            *(np.asarray(q, dtype=np.float64) for q in (self.rho, self.u, self.v, self.p))
        )
        return np.stack([rho, u, v, p], axis=-1)

    def speed(self) -> np.ndarray:
        return np.hypot(np.asarray(self.u), np.asarray(self.v))

    def sound_speed(self, gamma: float = GAMMA_DEFAULT) -> np.ndarray:
        return np.sqrt(gamma * np.asarray(self.p) / np.asarray(self.rho))

    def mach(self, gamma: float = GAMMA_DEFAULT) -> np.ndarray:
        return self.speed() / self.sound_speed(gamma)


def require_admissible(rho, p, context: str = "state"):
    rho = np.asarray(rho)
    p = np.asarray(p)
    if np.any(rho <= 0.0) or np.any(p <= 0.0):
        raise AdmissibilityError(
            f"{context}: density and pressure must be positive "
            f"(min rho {rho.min():.3e}, min p {p.min():.3e})"
        )


# ---------------------------------------------------------------------------
# State conversions and fluxes (carrier-generic algebra)
# ---------------------------------------------------------------------------


def total_energy_density(rho, u, v, p, gamma: float = GAMMA_DEFAULT):
    """rho*E: internal plus kinetic energy per unit volume."""
    return p * (1.0 / (gamma - 1.0)) + 0.5 * (rho * (u * u + v * v))


def pressure_from_conserved(U, gamma: float = GAMMA_DEFAULT):
    """Pressure from a stacked (N, 4) conserved array."""
    U = np.asarray(U, dtype=np.float64)
    kinetic = 0.5 * (U[..., 1] ** 2 + U[..., 2] ** 2) / U[..., 0]
    return (gamma - 1.0) * (U[..., 3] - kinetic)


def conserved_from_primitive(rho, u, v, p, gamma: float = GAMMA_DEFAULT) -> np.ndarray:
    rho, u, v, p = (np.asarray(q, dtype=np.float64) for q in (rho, u, v, p))
    return np.stack(
        [rho, rho * u, rho * v, total_energy_density(rho, u, v, p, gamma)], axis=-1
    )


def primitive_from_conserved(U, gamma: float = GAMMA_DEFAULT) -> PrimitiveState:
    U = np.asarray(U, dtype=np.float64)
    rho = U[..., 0]
    if np.any(rho <= 0.0):
        raise AdmissibilityError("conserved state has non-positive density")
    u = U[..., 1] / rho
    v = U[..., 2] / rho
    p = pressure_from_conserved(U, gamma)
    if np.any(p <= 0.0):
        raise AdmissibilityError("conserved state has non-positive pressure")
    return PrimitiveState(rho, u, v, p)


def flux_x(rho, u, v, p, gamma: float = GAMMA_DEFAULT):
    """x-direction flux of (mass, x-momentum, y-momentum, energy)."""
    ru = rho * u
    pe = p + total_energy_density(rho, u, v, p, gamma)
    return [ru, p + ru * u, ru * v, u * pe]


def flux_y(rho, u, v, p, gamma: float = GAMMA_DEFAULT):
    """y-direction flux of (mass, x-momentum, y-momentum, energy)."""
    rv = rho * v
    pe = p + total_energy_density(rho, u, v, p, gamma)
    return [rv, rv * u, p + rv * v, v * pe]


# ---------------------------------------------------------------------------
# Entropy pair
# ---------------------------------------------------------------------------


def physical_entropy(rho, p, gamma: float = GAMMA_DEFAULT):
    """s = log(p / rho^gamma)."""
    return _log(p) - gamma * _log(rho)


def entropy_pair(rho, u, v, p, gamma: float = GAMMA_DEFAULT):
    """Convex entropy eta = -rho*s/(gamma-1) and its flux (u*eta, v*eta)."""
    eta = rho * physical_entropy(rho, p, gamma) * (-1.0 / (gamma - 1.0))
    return eta, u * eta, v * eta


def _entropy_quantities_from_conserved_duals(U, gamma):
    """eta, phi1, phi2 and both fluxes as duals seeded over conserved space."""
    from .autodiff import Dual

    U = np.asarray(U, dtype=np.float64)
    if U.shape != (4,):
        raise ValueError("expected a single conserved state of shape (4,)")
    comps = [Dual(U[i], np.eye(4)[i]) for i in range(4)]
    rho = comps[0]
    u = comps[1] / rho
    v = comps[2] / rho
    p = (comps[3] - 0.5 * (comps[1] * u + comps[2] * v)) * (gamma - 1.0)
    eta, phi1, phi2 = entropy_pair(rho, u, v, p, gamma)
    g1 = flux_x(rho, u, v, p, gamma)
    g2 = flux_y(rho, u, v, p, gamma)
    return eta, phi1, phi2, g1, g2


def entropy_gradient(U, gamma: float = GAMMA_DEFAULT) -> np.ndarray:
    """d(eta)/d(conserved) at one state, shape (4,)."""
    eta, *_ = _entropy_quantities_from_conserved_duals(U, gamma)
    return np.asarray(eta.tan, dtype=np.float64).copy()


def entropy_compatibility_residuals(U, gamma: float = GAMMA_DEFAULT):
    """Residuals of eta'(U) Gx'(U) - phi1'(U) and the y counterpart.

    Returns two (4,) arrays; both vanish identically for the pair above, so
    any nonzero entries measure implementation error only.
    """
    eta, phi1, phi2, g1, g2 = _entropy_quantities_from_conserved_duals(U, gamma)
    eta_p = eta.tan
    jac1 = np.stack([c.tan for c in g1], axis=0)  # (4 flux comps, 4 conserved)
    jac2 = np.stack([c.tan for c in g2], axis=0)
    r1 = eta_p @ jac1 - phi1.tan
    r2 = eta_p @ jac2 - phi2.tan
    return r1, r2


# ---------------------------------------------------------------------------
# PDE residual assembly (carrier-generic; needs .tangent(k))
# ---------------------------------------------------------------------------


def steady_euler_residuals(rho, u, v, p, gamma: float = GAMMA_DEFAULT):
    """Divergence of the steady flux, one carrier per conservation law."""
    g1 = flux_x(rho, u, v, p, gamma)
    g2 = flux_y(rho, u, v, p, gamma)
    return [g1[c].tangent(0) + g2[c].tangent(1) for c in range(4)]


def unsteady_euler_residuals(rho, u, v, p, gamma: float = GAMMA_DEFAULT):
    """Time derivative of the conserved state plus the steady divergence."""
    ru = rho * u
    rv = rho * v
    re = total_energy_density(rho, u, v, p, gamma)
    rates = [rho.tangent(2), ru.tangent(2), rv.tangent(2), re.tangent(2)]
    steady = steady_euler_residuals(rho, u, v, p, gamma)
    return [rates[c] + steady[c] for c in range(4)]


def entropy_residual(
    rho,
    u,
    v,
    p,
    gamma: float = GAMMA_DEFAULT,
    mode: str = "relu",
    eps: float = 1e-4,
    unsteady: bool = False,
):
    """Scalar entropy-condition residual (pre-squaring).

    ``relu`` penalizes positive entropy production, max(0, d/dt eta + div phi);
    ``literal`` returns the signed quantity (eps - d/dt eta - div phi) whose
    square the loss takes.
    """
    eta, phi1, phi2 = entropy_pair(rho, u, v, p, gamma)
    div = phi1.tangent(0) + phi2.tangent(1)
    if unsteady:
        div = div + eta.tangent(2)
    if mode == "relu":
        return div.clamp_min(0.0)
    if mode == "literal":
        return eps - div
    raise ValueError(f"unknown entropy mode {mode!r}; use 'relu' or 'literal'")


# ---------------------------------------------------------------------------
# Nondimensionalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceScales:
    """Density/velocity reference scales; pressure scales as rho*V^2."""

    rho_ref: float
    velocity_ref: float

    def __post_init__(self):
        if self.rho_ref <= 0.0 or self.velocity_ref <= 0.0:
            raise ValueError("reference scales must be positive")

    @property
    def pressure_ref(self) -> float:
        return self.rho_ref * self.velocity_ref**2

    @classmethod
    def from_state(cls, state: PrimitiveState) -> "ReferenceScales":
        """Freestream-based scales: its density and speed."""
        speed = float(np.asarray(state.speed()))
        return cls(rho_ref=float(np.asarray(state.rho)), velocity_ref=speed)

    def nondim(self, state: PrimitiveState) -> PrimitiveState:
        return PrimitiveState(
            rho=np.asarray(state.rho) / self.rho_ref,
            u=np.asarray(state.u) / self.velocity_ref,
            v=np.asarray(state.v) / self.velocity_ref,
            p=np.asarray(state.p) / self.pressure_ref,
        )

    def redim(self, state: PrimitiveState) -> PrimitiveState:
        return PrimitiveState(
            rho=np.asarray(state.rho) * self.rho_ref,
            u=np.asarray(state.u) * self.velocity_ref,
            v=np.asarray(state.v) * self.velocity_ref,
            p=np.asarray(state.p) * self.pressure_ref,
        )

    def nondim_gradient(self, grad, length_ref: float = 1.0) -> np.ndarray:
        """Scale a density gradient (d rho / d length) to reference units."""
        return np.asarray(grad) * (length_ref / self.rho_ref)
