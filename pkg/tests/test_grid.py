import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collapselab.errors import DomainError, SupportGuardError
from collapselab.grid import (
    WAVEFUNCTION,
    DirichletCrankNicolson,
    DomainSpec,
    Grid1D,
    ObservationSchedule,
    ScalarField,
    boundary_normal_derivative,
    fresnel_step,
    gaussian_step,
    integrate,
    l2_norm,
    restrict,
    support_guard,
)


def test_nodes_hit_both_ends():
    g = Grid1D(0.0, math.pi, 513)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == math.pi
    assert g.index_of(math.pi / 2) == 256


def test_index_of_rejects_off_node_points():
    g = Grid1D(0.0, 1.0, 11)
    with pytest.raises(DomainError):
        g.index_of(0.05)
    assert not g.is_node(0.05)
    assert g.is_node(0.3)


@given(n=st.integers(8, 400), pad_lo=st.floats(0, 5), pad_hi=st.floats(0, 5))
def test_around_puts_region_on_nodes(n, pad_lo, pad_hi):
    g = Grid1D.around(-1.3, 2.1, n, pad_lo, pad_hi)
    assert g.is_node(-1.3) and g.is_node(2.1)
    assert g.x_min <= -1.3 - pad_lo + 1e-9 and g.x_max >= 2.1 + pad_hi - 1e-9


def test_scalar_field_is_read_only():
    f = ScalarField.from_function(Grid1D(0, 1, 11), lambda x: x)
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    with pytest.raises(ValueError):
        ScalarField(f.grid, f.values, "velocity")


def test_trapezoid_is_exact_for_linear_and_second_order_for_sine():
    g = Grid1D(0.0, math.pi, 129)
    assert integrate(ScalarField.from_function(g, lambda x: 3 * x + 1)) == pytest.approx(
        1.5 * math.pi ** 2 + math.pi, rel=1e-13)
    err1 = abs(integrate(ScalarField.from_function(g, np.sin)) - 2.0)
    g2 = Grid1D(0.0, math.pi, 257)
    err2 = abs(integrate(ScalarField.from_function(g2, np.sin)) - 2.0)
    assert err1 / err2 == pytest.approx(4.0, rel=1e-2)


def test_integrate_over_subregion_and_outside_grid():
    g = Grid1D(-1.0, 1.0, 201)
    f = ScalarField.from_function(g, lambda x: np.ones_like(x))
    assert integrate(f, DomainSpec(-0.5, 0.5)) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        integrate(f, DomainSpec(-2.0, 0.0))


def test_gaussian_step_matches_variance_addition():
    g = Grid1D(-15.0, 15.0, 3001)
    var0, dt = 0.3, 0.7
    f = ScalarField.from_function(g, lambda x: np.exp(-x ** 2 / (2 * var0)) / math.sqrt(2 * math.pi * var0))
    out = gaussian_step(f, dt)
    v = var0 + dt
    exact = np.exp(-g.nodes ** 2 / (2 * v)) / math.sqrt(2 * math.pi * v)
    assert np.max(np.abs(out.values - exact)) < 1e-10
    assert integrate(out) == pytest.approx(1.0, abs=1e-12)


def test_gaussian_step_over_region_ignores_outside_values():
    g = Grid1D(-10.0, 10.0, 2001)
    f = ScalarField.from_function(g, lambda x: np.exp(-x ** 2))
    region = DomainSpec(-10.0, 0.0)
    a = gaussian_step(f, 0.1, region)
    b = gaussian_step(restrict(f, region), 0.1, region)
    assert np.array_equal(a.values, b.values)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), dt=st.floats(1e-4, 1.0))
def test_fresnel_step_is_unitary(seed, dt):
    rng = np.random.default_rng(seed)
    g = Grid1D(-5, 5, 256)
    psi = ScalarField(g, rng.normal(size=256) + 1j * rng.normal(size=256), WAVEFUNCTION)
    out = fresnel_step(psi, dt)
    assert np.linalg.norm(out.values) == pytest.approx(np.linalg.norm(psi.values), rel=1e-12)


def test_fresnel_step_spreads_gaussian_packet_exactly():
    g = Grid1D(-40.0, 40.0, 4096)
    x, t, k0 = g.nodes, 1.3, 2.0
    psi0 = ScalarField(g, np.exp(-x ** 2 / 2 + 1j * k0 * x), WAVEFUNCTION)
    out = fresnel_step(psi0, t)
    # free packet: width parameter 1 + i t, centre moving at k0
    exact = np.exp(-(x - k0 * t) ** 2 / (2 * (1 + 1j * t)) + 1j * k0 * x - 0.5j * k0 ** 2 * t) / np.sqrt(1 + 1j * t)
    assert np.max(np.abs(out.values - exact)) < 1e-10


def test_outward_normal_derivative_of_sine():
    g = Grid1D(0.0, math.pi, 513)
    d = boundary_normal_derivative(ScalarField.from_function(g, np.sin), DomainSpec(0.0, math.pi))
    assert np.allclose(d, [-1.0, -1.0], atol=5 * g.dx ** 2)


def test_normal_derivative_skips_artificial_ends():
    g = Grid1D(-4.0, 0.0, 401)
    f = ScalarField.from_function(g, lambda x: -x)
    d = boundary_normal_derivative(f, DomainSpec.negative_half_line(-4.0))
    assert d.shape == (1,) and d[0] == pytest.approx(-1.0)


def test_support_guard_trips_near_walls_only():
    g = Grid1D(-10.0, 10.0, 2001)
    centred = ScalarField.from_function(g, lambda x: np.exp(-x ** 2))
    support_guard(centred)
    shifted = ScalarField.from_function(g, lambda x: np.exp(-(x - 9.8) ** 2))
    with pytest.raises(SupportGuardError):
        support_guard(shifted)
    support_guard(shifted, sides=(True, False))


def test_schedule_requires_whole_number_of_steps():
    assert ObservationSchedule.over(0.5, 1e-2).n_steps == 50
    with pytest.raises(ValueError):
        ObservationSchedule.over(0.5, 0.3)
    with pytest.raises(ValueError):
        ObservationSchedule(0.0, 3)


def test_crank_nicolson_heat_mode_decay():
    g = Grid1D(0.0, math.pi, 257)
    D = DomainSpec(0.0, math.pi)
    cn = DirichletCrankNicolson(g, D, 1e-3, 0.5)
    u = cn.interior(np.sin(g.nodes))
    for _ in range(1000):
        u = cn.step(u)
    assert np.max(np.abs(cn.embed(u, g.nodes) - math.exp(-0.5) * np.sin(g.nodes))) < 1e-5


def test_crank_nicolson_schrodinger_conserves_norm():
    g = Grid1D(0.0, 1.0, 201)
    D = DomainSpec(0.0, 1.0)
    rng = np.random.default_rng(3)
    cn = DirichletCrankNicolson(g, D, 1e-3, 0.5j)
    u = cn.interior(rng.normal(size=201) + 1j * rng.normal(size=201))
    n0 = np.linalg.norm(u)
    for _ in range(1000):
        u = cn.step(u)
    assert abs(np.linalg.norm(u) - n0) / n0 < 1e-10


def test_l2_norm_of_normalised_sine():
    g = Grid1D(0.0, math.pi, 1025)
    f = ScalarField(g, np.sqrt(2 / math.pi) * np.sin(g.nodes), WAVEFUNCTION)
    assert l2_norm(f) == pytest.approx(1.0, abs=1e-6)


def test_gaussian_step_variance_half_to_three_quarters():
    g = Grid1D(-12.0, 12.0, 2401)
    f = ScalarField.from_function(g, lambda x: np.exp(-x ** 2 / 1.0) / math.sqrt(math.pi))
    out = gaussian_step(f, 0.25)
    exact = np.exp(-g.nodes ** 2 / 1.5) / math.sqrt(1.5 * math.pi)
    assert np.max(np.abs(out.values - exact)) <= 1e-6


def test_free_packet_width_law():
    g = Grid1D(-60.0, 60.0, 4096)
    sigma = 1.0
    psi = ScalarField(g, np.exp(-g.nodes ** 2 / (4 * sigma ** 2)), WAVEFUNCTION)
    psi = psi * (1.0 / l2_norm(psi))
    out = fresnel_step(psi, 1.0)
    prob = np.abs(out.values) ** 2
    var = integrate(out.with_values(g.nodes ** 2 * prob)).real / integrate(out.with_values(prob)).real
    assert var == pytest.approx(sigma ** 2 + 1.0 / (4 * sigma ** 2), abs=1e-6)
