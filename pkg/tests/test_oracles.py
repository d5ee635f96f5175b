"""Tests for the exact gas-dynamics references.

The advected wave is checked against its closed form, the expansion fan
against classical Prandtl-Meyer values and finite differences of its own
field, the oblique shock against the jump relations it must satisfy, and the
CSV ingestion against well-formed and malformed inputs.
"""

import math

import numpy as np
import pytest

from shockpinn.errors import ConfigurationError
from shockpinn.oracles import (
    DetachedShockError,
    ExpansionFan,
    IngestionError,
    ObliqueShock,
    ReferenceField,
    WedgeGeometry,
    deflection_from_shock_angle,
    entropy_rise,
    inverse_prandtl_meyer,
    mach_angle,
    max_deflection,
    normal_shock_density_ratio,
    normal_shock_pressure_ratio,
    post_shock_state,
    prandtl_meyer_angle,
    resolve_post_state_ordering,
    smooth_advection_density_gradient,
    smooth_advection_duals,
    smooth_advection_state,
    synthetic_bow_field,
    verify_jump_relations,
    weak_shock_angle,
)
from shockpinn.physics import (
    PrimitiveState,
    ReferenceScales,
    physical_entropy,
    steady_euler_residuals,
    unsteady_euler_residuals,
)


# ---------------------------------------------------------------------------
# Advected density wave
# ---------------------------------------------------------------------------


def test_smooth_state_closed_form():
    s = smooth_advection_state(0.25, 0.5, 0.1)
    phase = math.pi * (0.25 + 0.5 - 1.0 * 0.1)
    assert s.rho == pytest.approx(1.0 + 0.2 * math.sin(phase))
    assert s.u == pytest.approx(0.7)
    assert s.v == pytest.approx(0.3)
    assert s.p == pytest.approx(1.0)


def test_smooth_density_gradient_matches_fd():
    rng = np.random.default_rng(0)
    x, y, t = rng.uniform(0, 1, size=(3, 20))
    dx, dy, dt = smooth_advection_density_gradient(x, y, t)
    h = 1e-7
    fd_x = (smooth_advection_state(x + h, y, t).rho - smooth_advection_state(x - h, y, t).rho) / (2 * h)
    fd_t = (smooth_advection_state(x, y, t + h).rho - smooth_advection_state(x, y, t - h).rho) / (2 * h)
    assert dx == pytest.approx(fd_x, abs=1e-6)
    assert dt == pytest.approx(fd_t, abs=1e-6)
    assert dy == pytest.approx(dx)  # symmetric in x and y


def test_smooth_duals_satisfy_unsteady_equations_exactly():
    rng = np.random.default_rng(1)
    x, y, t = rng.uniform(0, 1, size=(3, 200))
    rho, u, v, p = smooth_advection_duals(x, y, t)
    for r in unsteady_euler_residuals(rho, u, v, p):
        assert np.max(np.abs(r.value)) < 1e-12


# ---------------------------------------------------------------------------
# Prandtl-Meyer machinery
# ---------------------------------------------------------------------------


def test_mach_angle():
    assert mach_angle(1.0) == pytest.approx(math.pi / 2)
    assert mach_angle(2.0) == pytest.approx(math.asin(0.5))
    with pytest.raises(ValueError):
        mach_angle(0.8)


def test_prandtl_meyer_angle_classical_values():
    assert prandtl_meyer_angle(1.0) == pytest.approx(0.0, abs=1e-15)
    # nu(2) = 26.3798 degrees for gamma = 1.4
    assert math.degrees(prandtl_meyer_angle(2.0)) == pytest.approx(26.3798, abs=1e-3)
    with pytest.raises(ValueError):
        prandtl_meyer_angle(0.9)
    arr = prandtl_meyer_angle(np.array([1.5, 2.0]))
    assert arr.shape == (2,)


def test_inverse_prandtl_meyer_round_trip():
    for m in (1.0001, 1.5, 2.2, 4.7, 8.0):
        nu = prandtl_meyer_angle(m)
        assert inverse_prandtl_meyer(nu) == pytest.approx(m, rel=1e-12)
    assert inverse_prandtl_meyer(0.0) == 1.0
    with pytest.raises(ValueError):
        inverse_prandtl_meyer(-0.1)
    with pytest.raises(ValueError):
        inverse_prandtl_meyer(3.0)  # above the vacuum limit


# ---------------------------------------------------------------------------
# Expansion fan
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def fan():
    return ExpansionFan(
        mach_in=2.0, rho_in=1.23, p_in=1.01e5, deflection=math.radians(10.0)
    )


def test_fan_validation():
    with pytest.raises(ValueError):
        ExpansionFan(mach_in=0.9, rho_in=1.0, p_in=1.0, deflection=0.2)
    with pytest.raises(ValueError):
        ExpansionFan(mach_in=2.0, rho_in=1.0, p_in=1.0, deflection=-0.1)


def test_fan_exit_mach_and_pressure_ratio(fan):
    # classical tables: M1 = 2, 10 degree turn -> M2 = 2.3849, p2/p1 = 0.5480
    assert fan.mach_out == pytest.approx(2.3848872, rel=1e-6)
    out = fan.outlet_state()
    assert float(out.p) / fan.p_in == pytest.approx(0.5479687, rel=1e-6)
    assert fan.wall_pressure() == pytest.approx(float(out.p))


def test_fan_zone_structure(fan):
    assert fan.lead_angle == pytest.approx(math.asin(0.5))
    assert fan.tail_angle < fan.lead_angle
    # upstream of the lead characteristic: inlet state
    s = fan.state(0.2, 0.9)
    inlet = fan.inlet_state()
    assert float(s.rho) == pytest.approx(float(inlet.rho))
    assert float(s.u) == pytest.approx(float(inlet.u))
    assert float(s.v) == pytest.approx(0.0)
    # downstream of the tail characteristic: uniform deflected state
    x, y = 1.0, math.tan(fan.tail_angle - 0.05) * 1.0
    s2 = fan.state(x, y)
    out = fan.outlet_state()
    assert float(s2.rho) == pytest.approx(float(out.rho))
    assert float(s2.v) / float(s2.u) == pytest.approx(-math.tan(fan.deflection))


def test_fan_is_isentropic(fan):
    rng = np.random.default_rng(2)
    phi = rng.uniform(fan.tail_angle + 0.01, fan.lead_angle - 0.01, 50)
    r = rng.uniform(0.3, 1.0, 50)
    s = fan.state(r * np.cos(phi), r * np.sin(phi))
    ent = physical_entropy(s.rho, s.p)
    ent_in = physical_entropy(fan.rho_in, fan.p_in)
    assert np.max(np.abs(ent - ent_in)) < 1e-12


def test_fan_mach_on_ray_endpoints(fan):
    assert fan.mach_on_ray(fan.lead_angle) == pytest.approx(fan.mach_in, abs=1e-10)
    assert fan.mach_on_ray(fan.tail_angle) == pytest.approx(fan.mach_out, abs=1e-10)
    mid = fan.mach_on_ray(0.5 * (fan.lead_angle + fan.tail_angle))
    assert fan.mach_in < mid < fan.mach_out


def test_fan_gradients_match_finite_differences(fan):
    rng = np.random.default_rng(3)
    phi = rng.uniform(fan.tail_angle + 0.03, fan.lead_angle - 0.03, 20)
    r = rng.uniform(0.4, 0.9, 20)
    x, y = r * np.cos(phi), r * np.sin(phi)
    _, dx, dy = fan.state_with_gradients(x, y)
    h = 1e-6
    for key in ("rho", "u", "v", "p"):
        fx = (getattr(fan.state(x + h, y), key) - getattr(fan.state(x - h, y), key)) / (2 * h)
        fy = (getattr(fan.state(x, y + h), key) - getattr(fan.state(x, y - h), key)) / (2 * h)
        scale = np.max(np.abs(fx)) + 1.0
        assert np.max(np.abs(dx[key] - fx)) / scale < 1e-6
        assert np.max(np.abs(dy[key] - fy)) / scale < 1e-6


def test_fan_gradients_zero_outside_fan(fan):
    _, dx, dy = fan.state_with_gradients([0.1, 1.0], [0.9, -0.12])
    for key in ("rho", "u", "v", "p"):
        assert np.all(dx[key] == 0.0)
        assert np.all(dy[key] == 0.0)


def test_fan_field_satisfies_steady_equations():
    """Finite-difference flux divergence vanishes at nondimensional scale."""
    from shockpinn.autodiff import Dual
    from shockpinn.physics import flux_x, flux_y

    fan = ExpansionFan(2.0, 1.23, 1.01e5, math.radians(10.0))
    scales = ReferenceScales.from_state(fan.inlet_state())
    rng = np.random.default_rng(4)
    phi = rng.uniform(fan.tail_angle + 0.02, fan.lead_angle - 0.02, 50)
    r = rng.uniform(0.3, 0.9, 50)
    x, y = r * np.cos(phi), r * np.sin(phi)
    h = 1e-6

    def fluxes(xq, yq):
        s = scales.nondim(fan.state(xq, yq))
        return flux_x(s.rho, s.u, s.v, s.p), flux_y(s.rho, s.u, s.v, s.p)

    div = []
    for c in range(4):
        gxp, _ = fluxes(x + h, y)
        gxm, _ = fluxes(x - h, y)
        _, gyp = fluxes(x, y + h)
        _, gym = fluxes(x, y - h)
        div.append((gxp[c] - gxm[c]) / (2 * h) + (gyp[c] - gym[c]) / (2 * h))
    assert max(np.max(np.abs(d)) for d in div) < 1e-6


# ---------------------------------------------------------------------------
# Wedge geometry
# ---------------------------------------------------------------------------


def test_wedge_geometry_wall():
    w = WedgeGeometry(turn_deg=10.0)
    assert w.theta == pytest.approx(math.radians(10.0))
    assert w.slope == pytest.approx(math.tan(math.radians(10.0)))
    assert w.wall_y(-0.3) == pytest.approx(0.0)
    assert w.wall_y(0.5) == pytest.approx(-0.5 * w.slope)
    assert w.above_wall([[0.5, 0.0], [0.5, -0.2]]).tolist() == [True, False]
    tanh_wall = WedgeGeometry(turn_deg=10.0, wall_curve="tanh")
    assert tanh_wall.slope == pytest.approx(math.tanh(math.radians(10.0)))
    with pytest.raises(ConfigurationError):
        WedgeGeometry(turn_deg=50.0)
    with pytest.raises(ConfigurationError):
        WedgeGeometry(turn_deg=10.0, wall_curve="cubic")


def test_wedge_region_and_walls():
    w = WedgeGeometry(turn_deg=10.0)
    region = w.domain_region()
    inside = region.contains(np.array([[-0.2, 0.5], [0.5, 0.5], [0.8, -0.1]]))
    assert inside.tolist() == [True, True, True]
    outside = region.contains(np.array([[-0.2, -0.1], [0.5, -0.2], [2.0, 0.5]]))
    assert outside.tolist() == [False, False, False]
    wall = w.downstream_wall()
    mid = wall.point(np.array([0.5]))[0]
    assert mid[1] == pytest.approx(w.wall_y(mid[0]))
    n = wall.normal(np.array([0.5]))[0]
    assert np.hypot(*n) == pytest.approx(1.0)
    assert n[1] < 0  # points out of the fluid (downward)
    inlet = w.inlet()
    assert inlet.point(np.array([0.0]))[0] == pytest.approx([-0.5, 0.0])


# ---------------------------------------------------------------------------
# Oblique shock
# ---------------------------------------------------------------------------


def test_deflection_from_shock_angle_limits():
    # a normal shock and a Mach wave both produce zero deflection
    assert deflection_from_shock_angle(2.0, math.pi / 2) == pytest.approx(0.0, abs=1e-14)
    assert deflection_from_shock_angle(2.0, mach_angle(2.0)) == pytest.approx(0.0, abs=1e-12)


def test_max_deflection_classical_value():
    theta_max, beta_at = max_deflection(2.0)
    assert math.degrees(theta_max) == pytest.approx(22.97, abs=0.05)
    assert mach_angle(2.0) < beta_at < math.pi / 2


def test_weak_shock_angle_consistency():
    m, theta = 3.0, math.radians(12.0)
    beta = weak_shock_angle(m, theta)
    assert deflection_from_shock_angle(m, beta) == pytest.approx(theta, abs=1e-12)
    _, beta_max = max_deflection(m)
    assert beta < beta_max  # weak branch
    with pytest.raises(DetachedShockError):
        weak_shock_angle(2.0, math.radians(30.0))
    with pytest.raises(ValueError):
        weak_shock_angle(2.0, 0.0)


def test_normal_shock_ratios():
    assert normal_shock_density_ratio(1.0) == pytest.approx(1.0)
    assert normal_shock_pressure_ratio(1.0) == pytest.approx(1.0)
    assert normal_shock_density_ratio(2.0) == pytest.approx(9.6 / 3.6)
    assert normal_shock_pressure_ratio(2.0) == pytest.approx(4.5)


def test_post_shock_state_satisfies_jump_relations():
    pre = PrimitiveState(rho=1.0, u=2.0 * math.sqrt(1.4), v=0.0, p=1.0)  # Mach 2
    post, beta = post_shock_state(pre, math.radians(10.0))
    residuals = verify_jump_relations(pre, post, beta)
    assert np.max(residuals) < 1e-12
    assert entropy_rise(pre, post) > 0.0
    # downstream flow is deflected by exactly the wedge angle
    assert float(post.v) / float(post.u) == pytest.approx(math.tan(math.radians(10.0)))
    with pytest.raises(ValueError):
        post_shock_state(PrimitiveState(1.0, 2.0, 1.0, 1.0), 0.1)


def test_verify_jump_relations_flags_wrong_state():
    pre = PrimitiveState(rho=1.0, u=2.0 * math.sqrt(1.4), v=0.0, p=1.0)
    post, beta = post_shock_state(pre, math.radians(10.0))
    wrong = PrimitiveState(float(post.rho) * 1.3, post.u, post.v, post.p)
    assert np.max(verify_jump_relations(pre, wrong, beta)) > 1e-2


def test_oblique_shock_field_structure():
    pre = PrimitiveState(rho=1.0, u=2.5 * math.sqrt(1.4), v=0.0, p=1.0)
    shock = ObliqueShock(pre=pre, deflection=math.radians(12.0))
    assert shock.is_pre(0.5, 1.0)  # above the shock ray
    assert not shock.is_pre(1.0, 0.05)
    s_up = shock.state(0.5, 1.0)
    assert float(s_up.rho) == pytest.approx(1.0)
    s_dn = shock.state(1.0, 0.05)
    assert float(s_dn.rho) == pytest.approx(float(shock.post.rho))
    # signed distance: positive upstream, negative downstream
    assert shock.signed_distance_to_shock(0.5, 1.0) > 0
    assert shock.signed_distance_to_shock(1.0, 0.05) < 0
    arr = shock.state(np.array([0.5, 1.0]), np.array([1.0, 0.05]))
    assert arr.rho == pytest.approx([1.0, float(shock.post.rho)])


def test_resolve_post_state_ordering_picks_consistent_candidate():
    pre = PrimitiveState(rho=1.0, u=2.2 * math.sqrt(1.4), v=0.0, p=1.0)
    theta = math.radians(10.0)
    post, _ = post_shock_state(pre, theta)
    speed = float(post.speed())
    # the true state has u = speed*cos(theta), v = speed*sin(theta): the
    # "swapped" candidate under a (sin, cos) reading of the component pair
    res = resolve_post_state_ordering(
        pre, float(post.rho), speed, float(post.p), theta
    )
    assert res["ordering"] == "swapped"
    assert np.max(res["residuals"]["swapped"]) < 1e-12
    assert np.max(res["residuals"]["literal"]) > 1e-3
    chosen = res["states"][res["ordering"]]
    assert float(chosen.u) == pytest.approx(float(post.u))
    assert float(chosen.v) == pytest.approx(float(post.v))


# ---------------------------------------------------------------------------
# Reference-field ingestion
# ---------------------------------------------------------------------------


def _write_field(path, body, units="# units: nondim\n"):
    path.write_text(units + "x,y,rho,u,v,p\n" + body)


def test_reference_field_round_trip(tmp_path):
    field = synthetic_bow_field(n_x=12, n_y=16)
    path = tmp_path / "field.csv"
    field.save(path)
    back = ReferenceField.load(path)
    assert back.units == "nondim"
    assert np.array_equal(back.points, field.points)
    assert np.array_equal(back.values, field.values)


def test_reference_field_interpolates_nodes_exactly(tmp_path):
    path = tmp_path / "f.csv"
    _write_field(
        path,
        "0,0,1.0,0.5,0.0,1.0\n1,0,2.0,0.5,0.0,1.5\n0,1,3.0,0.5,0.0,2.0\n1,1,4.0,0.5,0.0,2.5\n",
    )
    field = ReferenceField.load(path)
    vals = field.interpolate(field.points)
    assert vals == pytest.approx(field.values)
    # off-hull query falls back to nearest neighbor instead of NaN
    far = field.interpolate(np.array([[5.0, 5.0]]))
    assert np.all(np.isfinite(far))
    assert far[0] == pytest.approx(field.values[3])
    s = field.state(0.0, 0.0)
    assert s.rho == pytest.approx([1.0])


def test_reference_field_rejects_malformed(tmp_path):
    path = tmp_path / "f.csv"
    with pytest.raises(IngestionError, match="not found"):
        ReferenceField.load(tmp_path / "missing.csv")
    _write_field(path, "0,0,1,0,0,1\n", units="")
    with pytest.raises(IngestionError, match="units"):
        ReferenceField.load(path)
    path.write_text("# units: nondim\na,b,c,d,e,f\n0,0,1,0,0,1\n")
    with pytest.raises(IngestionError, match="header"):
        ReferenceField.load(path)
    _write_field(path, "0,0,1,0,0\n")
    with pytest.raises(IngestionError, match="columns"):
        ReferenceField.load(path)
    _write_field(path, "0,0,nan,0,0,1\n")
    with pytest.raises(IngestionError, match="non-finite"):
        ReferenceField.load(path)
    _write_field(path, "0,0,-1,0,0,1\n")
    with pytest.raises(IngestionError, match="positive"):
        ReferenceField.load(path)
    _write_field(path, "")
    with pytest.raises(IngestionError, match="no data"):
        ReferenceField.load(path)
    _write_field(path, "0,0,1,0,0,1\n", units="# units: furlongs\n")
    with pytest.raises(IngestionError, match="units"):
        ReferenceField.load(path)


def test_reference_field_shape_validation():
    with pytest.raises(IngestionError):
        ReferenceField(points=np.zeros((3, 3)), values=np.zeros((3, 4)), units="SI")
    with pytest.raises(IngestionError):
        ReferenceField(points=np.zeros((3, 2)), values=np.zeros((2, 4)), units="SI")
    with pytest.raises(IngestionError):
        ReferenceField(points=np.zeros((3, 2)), values=np.zeros((3, 4)), units="cgs")


def test_reference_field_nondimensionalization():
    pts = np.array([[0.0, 0.0]])
    vals = np.array([[2.0, 10.0, -5.0, 200.0]])
    field = ReferenceField(points=pts, values=vals, units="SI")
    scales = ReferenceScales(rho_ref=2.0, velocity_ref=10.0)
    nd = field.nondimensionalized(scales)
    assert nd.units == "nondim"
    assert nd.values[0] == pytest.approx([1.0, 1.0, -0.5, 1.0])
    # already-nondim fields pass through unchanged
    assert nd.nondimensionalized(scales) is nd


def test_synthetic_bow_field_is_admissible():
    field = synthetic_bow_field()
    assert field.units == "nondim"
    assert np.all(field.values[:, 0] > 0)
    assert np.all(field.values[:, 3] > 0)
    r = np.hypot(field.points[:, 0], field.points[:, 1])
    assert np.all(r >= 1.0)
    assert len(field.points) > 1000
