import math

import mpmath
import numpy as np
import pytest

from collapselab import pmwf
from collapselab.errors import AccuracyError, InsufficientPrecisionError
from collapselab.grid import Grid1D, ScalarField
from collapselab.pmwf import (
    PlaneWaveSpec,
    continuous_box_check,
    figure1_data,
    first_moment_scan,
    instantaneous_by_quadrature,
    interval_mean_scaling,
    moshinsky,
    pmwf_continuous,
    pmwf_instantaneous,
    released_by_contour,
    released_continuous,
    released_instantaneous,
    tail_fit,
)

SPEC = PlaneWaveSpec()


def _moshinsky_mp(x, t, q):
    return complex(0.5 * mpmath.exp(1j * (q * x - q * q * t / 2)) * mpmath.erfc((x - q * t) / mpmath.sqrt(2j * t)))


@pytest.mark.parametrize("x", [-30.0, -4.0, -0.3, 0.0, 0.7, 6.0, 40.0])
@pytest.mark.parametrize("t", [0.05, 1.0, 3.0])
def test_moshinsky_matches_arbitrary_precision_erfc(x, t):
    assert abs(moshinsky(np.array([x]), t, -1.0)[0] - _moshinsky_mp(x, t, -1.0)) < 1e-13


def test_moshinsky_is_continuous_across_branches():
    t, q = 1.0, -1.0
    x0 = q * t  # Re z changes sign here
    v = moshinsky(np.array([x0 - 1e-9, x0 + 1e-9]), t, q)
    assert abs(v[0] - v[1]) < 1e-8


def test_moshinsky_short_time_limit_is_the_truncated_wave():
    v = moshinsky(np.array([-2.0, 2.0]), 1e-6, -1.0)
    assert abs(v[0] - np.exp(2j)) < 1e-3 and abs(v[1]) < 1e-3


def test_instantaneous_half_jump_at_origin():
    for tau in (1e-2, 1e-4):
        v = pmwf_instantaneous(SPEC, tau, np.array([0.0]))[0]
        assert abs(v) == pytest.approx(0.5, abs=2 * math.sqrt(tau))


def test_instantaneous_recovers_plane_wave_period_far_left():
    x = np.linspace(-60, -10, 20001)
    re = pmwf_instantaneous(SPEC, 1.0, x, check=False).real
    zeros = x[1:][np.sign(re[1:]) != np.sign(re[:-1])]
    assert np.mean(np.diff(zeros)) * 2 == pytest.approx(2 * math.pi, rel=1e-3)


def test_instantaneous_closed_form_and_quadrature_agree():
    x = np.linspace(-10, 10, 101)
    q, err = instantaneous_by_quadrature(x, 1.0, -1.0)
    assert np.max(np.abs(q - moshinsky(x, 1.0, -1.0))) < 1e-9
    assert err < 1e-6


def test_instantaneous_raises_when_routes_disagree(monkeypatch):
    def skewed(x, tau, q, **kw):
        return moshinsky(x, tau, q) + 1e-3, 0.0
    monkeypatch.setattr(pmwf, "instantaneous_by_quadrature", skewed)
    with pytest.raises(AccuracyError) as info:
        pmwf_instantaneous(SPEC, 1.0, np.linspace(-1, 1, 5))
    assert info.value.diagnostics["gap"] == pytest.approx(1e-3)


def test_instantaneous_accepts_grid():
    g = Grid1D(-5.0, 5.0, 101)
    f = pmwf_instantaneous(SPEC, 1.0, g)
    assert isinstance(f, ScalarField) and f.values.dtype == complex


def test_continuous_vanishes_on_measured_side_and_at_wall():
    x = np.linspace(-10, 10, 2001)
    phi = pmwf_continuous(SPEC, 1.0, x)
    assert np.all(phi[x > 0] == 0)
    assert abs(phi[np.argmin(np.abs(x))]) < 1e-14
    # far from the wall the plane wave is untouched apart from its time phase and a diffraction ripple
    far = x < -8
    assert np.max(np.abs(phi[far] - np.exp(-1j * x[far] - 0.5j))) < 0.15  # Fresnel ripple ~ 1/|x|


def test_negative_side_is_the_mirror_image():
    x = np.linspace(-5, 5, 101)
    neg = PlaneWaveSpec(1.0, "negative")
    assert np.all(pmwf_continuous(neg, 1.0, x)[x < 0] == 0)
    assert np.allclose(pmwf_continuous(neg, 1.0, x), pmwf_continuous(PlaneWaveSpec(-1.0), 1.0, -x))
    with pytest.raises(ValueError):
        PlaneWaveSpec(1.0, "left")


def test_smoothing_is_complex_time_propagation():
    # mollified data at tau=0 equal the Gaussian-smoothed truncated wave
    x = np.array([-1.0])
    ys = np.linspace(-12, 12, 48001)
    var = 0.04
    data = np.where(ys < 0, np.exp(-1j * ys), 0) - np.where(-ys < 0, np.exp(1j * ys), 0)
    kernel = np.exp(-(x[0] - ys) ** 2 / (2 * var)) / math.sqrt(2 * math.pi * var)
    direct = np.trapezoid(kernel * data, ys)
    assert abs(pmwf_continuous(SPEC, 0.0, x, smoothing=var)[0] - direct) < 1e-8


def test_box_check_converges_only_with_smoothing():
    smooth = continuous_box_check(dx=0.005, dt_solver=1e-3)
    raw = continuous_box_check(smoothing=0.0, dx=0.005, dt_solver=1e-3)
    assert smooth.sup_distance < 5e-4
    assert raw.sup_distance > 10 * smooth.sup_distance


def test_contour_release_reproduces_free_propagation():
    x = np.linspace(0.5, 50, 30)
    v, err = released_by_contour(SPEC, 0.7, x)
    assert np.max(np.abs(v - released_instantaneous(SPEC, 0.7, x))) < 1e-12
    with pytest.raises(ValueError):
        released_by_contour(SPEC, 0.7, np.array([-1.0]))


def test_released_continuous_tail_amplitude():
    # |phi| ~ |F'(0)| s^{3/2} / (sqrt(2 pi) x^2) where F is the Dirichlet solution at tau
    h = 1e-5
    F = lambda y: pmwf_continuous(PlaneWaveSpec(), 1.0, np.array([y]))[0]
    slope = abs(F(-h) - F(0.0)) / h
    x, s = 300.0, 1.0
    v = released_continuous(SPEC, 1.0, s, np.array([x]))[0]
    assert abs(v) == pytest.approx(slope * s ** 1.5 / (math.sqrt(2 * math.pi) * x ** 2), rel=1e-3)


def test_tail_fit_recovers_power_and_certifies_window():
    x = np.geomspace(10, 100, 20)
    fit = tail_fit(x, 3.0 * x ** -2.0, (10, 100))
    assert fit.exponent == pytest.approx(-2.0, abs=1e-12) and fit.amplitude == pytest.approx(3.0)
    with pytest.raises(InsufficientPrecisionError):
        tail_fit(x, 3.0 * x ** -2.0, (10, 100), noise_floor=1e-4)
    with pytest.raises(InsufficientPrecisionError):
        tail_fit(x, x, (200, 300))


def test_moment_scan_verdicts():
    x = np.linspace(0.01, 640, 64000)
    cut = [10, 20, 40, 80, 160, 320, 640]
    assert first_moment_scan(x, cut, x ** -1.0, side="positive").verdict == "divergent"
    assert first_moment_scan(x, cut, x ** -2.0, side="positive").verdict == "convergent"
    compact = np.where(x < 5, 1.0, 0.0)
    scan = first_moment_scan(x, cut, compact, side="positive")
    assert scan.verdict == "convergent" and np.ptp(scan.moments) == 0
    with pytest.raises(ValueError):
        first_moment_scan(x, [10, 1000], x ** -1.0)


def test_moment_scan_on_field_and_sides():
    g = Grid1D(-50.0, 50.0, 10001)
    f = ScalarField.from_function(g, lambda x: np.exp(-x ** 2))
    both = first_moment_scan(f, [5, 10, 20])
    pos = first_moment_scan(f, [5, 10, 20], side="positive")
    # int |x| exp(-2 x^2) dx = 1/4 per side
    assert both.moments[-1] == pytest.approx(0.5, rel=1e-4)
    assert pos.moments[-1] == pytest.approx(0.25, rel=1e-4)


def test_interval_moment_small_time_oracles():
    dts = [0.01, 0.005]
    inst = interval_mean_scaling("instantaneous", 1.0, 2.0, dts)
    # |phi_I|^2 ~ s / (2 pi x^2) in the measured region at small s
    assert inst.moment[-1] == pytest.approx(0.005 / (2 * math.pi) * math.log(2.0), rel=0.02)
    cont = interval_mean_scaling("continuous", 1.0, 2.0, dts)
    h = 1e-5
    slope = abs(pmwf_continuous(SPEC, 1.0, np.array([-h]))[0]) / h
    oracle = slope ** 2 * 0.005 ** 3 / (2 * math.pi) * (1 - 0.25) / 2
    assert cont.moment[-1] == pytest.approx(oracle, rel=0.02)
    assert np.all((inst.conditional_mean > 1) & (inst.conditional_mean < 2))


def test_interval_scaling_argument_checks():
    with pytest.raises(ValueError):
        interval_mean_scaling("instantaneous", 2.0, 1.0, [0.01, 0.005])
    with pytest.raises(ValueError):
        interval_mean_scaling("instantaneous", 1.0, 2.0, [0.005, 0.01])
    with pytest.raises(ValueError):
        interval_mean_scaling("sudden", 1.0, 2.0, [0.01, 0.005])


def test_figure1_columns():
    d = figure1_data(n_points=201, check=True)
    assert tuple(d) == pmwf.FIGURE1_COLUMNS
    assert all(len(v) == 201 for v in d.values())
