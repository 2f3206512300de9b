"""Post-measurement wave functions of a plane wave after a negative
measurement of the positive axis.

``phi_I`` (instantaneous collapse): the truncated wave ``Theta(-x) e^{-ikx}``
propagated freely.  ``phi_C`` (continuous collapse): the same data evolved
on ``x <= 0`` with ``phi = 0`` at the origin, built by odd reflection and
free propagation.  After the measurement ends the particle is free again;
:func:`released_continuous` and :func:`released_instantaneous` give the
wave function a time ``s`` later, whose tail in the measured region is
what the tail, moment and interval-mean studies look at.

Free propagation follows ``psi_t = (i/2) psi_xx``: kernel
``(2 pi i t)^(-1/2) exp(i (x - y)^2 / 2t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec
from scipy.special import wofz

from .errors import AccuracyError, InsufficientPrecisionError
from .fitting import loglog_fit
from .grid import WAVEFUNCTION, DomainSpec, Grid1D, ScalarField, support_guard
from .quantum import dirichlet_schrodinger_solve

DUAL_PATH_TOL = 1e-6


@dataclass(frozen=True)
class PlaneWaveSpec:
    """Pre-measurement wave ``exp(-i k x)``; ``side`` is the measured half-axis."""

    k: float = 1.0
    side: str = "positive"

    def __post_init__(self):
        if self.k == 0:
            raise ValueError("k must be non-zero")
        if self.side not in ("positive", "negative"):
            raise ValueError("side must be 'positive' or 'negative'")

    @property
    def q(self) -> float:
        """Wavenumber of the kept part after mapping the measured side to x > 0."""
        return -self.k if self.side == "positive" else self.k

    def to_canonical(self, x):
        """Coordinates in which the measured region is ``x > 0``."""
        x = np.asarray(x, dtype=float)
        return x if self.side == "positive" else -x


@dataclass(frozen=True)
class TailFit:
    fit_window: tuple
    exponent: float
    r_squared: float
    amplitude: float
    noise_floor: float = 0.0


@dataclass(frozen=True)
class MomentScan:
    cutoffs: np.ndarray
    moments: np.ndarray
    verdict: str
    increment_ratio: float
    log_slope: float


@dataclass(frozen=True)
class ScalingFit:
    variant: str
    x1: float
    x2: float
    dt: np.ndarray
    moment: np.ndarray
    conditional_mean: np.ndarray
    exponent: float
    stderr: float
    r_squared: float
    noise_floor: np.ndarray = field(default=None)


@dataclass(frozen=True)
class BoxCheck:
    sup_distance: float
    window: tuple
    smoothing: float
    box: tuple
    dx: float
    dt_solver: float


# ---------------------------------------------------------------- closed forms

def moshinsky(x, t, q: float) -> np.ndarray:
    """Free evolution of ``Theta(-x) exp(i q x)`` at time ``t``:
    ``1/2 exp(i(q x - q^2 t/2)) erfc((x - q t) / sqrt(2 i t))``.

    Written through the Faddeeva function so that it is stable for large
    ``|x|`` and for complex ``x`` or ``t`` (``Re(i t) <= 0`` required).
    """
    x = np.asarray(x, dtype=complex)
    t = complex(t)
    root = np.sqrt(2j * t)
    z = (x - q * t) / root
    chirp = np.exp(1j * x ** 2 / (2.0 * t))
    out = np.empty(np.broadcast(x, z).shape, dtype=complex)
    right = z.real >= 0
    out[right] = 0.5 * chirp[right] * wofz(1j * z[right])
    left = ~right
    out[left] = (np.exp(1j * (q * x[left] - 0.5 * q * q * t))
                 - 0.5 * chirp[left] * wofz(-1j * z[left]))
    return out


def _image_solution(xc, t, q):
    return moshinsky(xc, t, q) - moshinsky(-xc, t, q)


def _as_output(grid_or_x, values):
    if isinstance(grid_or_x, Grid1D):
        return ScalarField(grid_or_x, values, WAVEFUNCTION)
    return values


def _points(grid_or_x) -> np.ndarray:
    if isinstance(grid_or_x, Grid1D):
        return grid_or_x.nodes
    return np.atleast_1d(np.asarray(grid_or_x, dtype=float))


def instantaneous_by_quadrature(x, tau: float, q: float, epsabs: float = 1e-11,
                                tail_terms: int = 8):
    """Direct quadrature of ``(2 pi i tau)^(-1/2) int_{-inf}^0 e^{iqy} e^{i(x-y)^2/2tau} dy``.

    Adaptive quadrature on ``[-Y, 0]`` plus the integration-by-parts
    asymptotic series for ``(-inf, -Y]``.  Returns ``(values, error)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    Y = max(0.0, -float(x.min())) + 60.0 * math.sqrt(tau) + abs(q) * tau
    phase = lambda y: q * y + (x - y) ** 2 / (2.0 * tau)
    body, err = quad_vec(lambda y: np.exp(1j * phase(y)), -Y, 0.0, epsabs=epsabs,
                         epsrel=0.0, limit=50000, norm="max")
    # int_{-inf}^{a} e^{i Phi} = e^{i Phi(a)}/i * sum_n (2n-1)!! / (i tau)^n / Phi'(a)^(2n+1)
    a = -Y
    dphi = q + (a - x) / tau
    term, series = 1.0 / dphi, np.zeros_like(dphi, dtype=complex)
    for n in range(tail_terms):
        series = series + term
        term = term * (2 * n + 1) / (1j * tau * dphi ** 2)
    tail = np.exp(1j * phase(a)) * series / 1j
    pref = 1.0 / np.sqrt(2j * math.pi * tau)
    err_total = abs(pref) * (float(err) + float(np.max(np.abs(term))))
    return pref * (body + tail), err_total


def pmwf_instantaneous(spec: PlaneWaveSpec, tau: float, grid_or_x, check: bool = True):
    """Freely propagated truncated plane wave at time ``tau``.

    With ``check`` the closed form is confirmed by direct quadrature and an
    :class:`AccuracyError` is raised if the two differ by more than 1e-6.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    xc = spec.to_canonical(_points(grid_or_x))
    values = moshinsky(xc, tau, spec.q)
    if check:
        quad, err = instantaneous_by_quadrature(xc, tau, spec.q)
        gap = float(np.max(np.abs(quad - values)))
        if gap > DUAL_PATH_TOL or err > DUAL_PATH_TOL:
            raise AccuracyError(f"closed form and quadrature differ by {gap:.2e}",
                                {"gap": gap, "quad_error": err, "tau": tau})
    return _as_output(grid_or_x, values)


def pmwf_continuous(spec: PlaneWaveSpec, tau: float, grid_or_x, smoothing: float = 0.0):
    """Dirichlet evolution on the unmeasured half-line by the method of images.

    The truncated wave is continued oddly through the origin and propagated
    freely; the result is zero on the measured side.  ``smoothing`` > 0
    returns the same construction for data first convolved with a Gaussian
    of that variance (free propagation to the complex time
    ``tau - i*smoothing``), which keeps the data Dirichlet-compatible.
    """
    if not tau > 0 and smoothing == 0:
        raise ValueError("tau must be positive")
    xc = spec.to_canonical(_points(grid_or_x))
    values = np.zeros(xc.shape, dtype=complex)
    kept = xc < 0
    values[kept] = _image_solution(xc[kept], tau - 1j * smoothing, spec.q)
    return _as_output(grid_or_x, values)


def continuous_box_check(spec: PlaneWaveSpec = PlaneWaveSpec(), tau: float = 1.0,
                         smoothing: float = 0.04, box: float = 80.0, taper: float = 40.0,
                         dx: float = 0.0025, dt_solver: float = 2.5e-4,
                         window: tuple = (-10.0, 0.0)) -> BoxCheck:
    """Compare the image construction with a Crank-Nicolson Dirichlet solve
    on ``[-box, 0]``.

    The plane wave is faded out smoothly over the far ``taper`` length so
    the artificial wall sees nothing; the support guard checks that.  The
    data are mollified by a Gaussian of variance ``smoothing``: an exact
    jump keeps radiating a ``1/|x|`` chirp that reflects off any finite
    wall, so with ``smoothing = 0`` the distance is limited by the box.
    """
    n = int(round(box / dx))
    grid = Grid1D.around(-box, 0.0, n, 0.0, 0.0)
    domain = DomainSpec.negative_half_line(-box)
    x = grid.nodes
    fade = 0.5 * (1.0 + np.tanh((x + box - 0.5 * taper) / (0.05 * taper)))
    if smoothing > 0:
        start = pmwf_continuous(PlaneWaveSpec(spec.k), 0.0, x, smoothing=smoothing)
    else:
        start = np.where(x < 0, np.exp(-1j * spec.k * x), 0.0)
    psi0 = ScalarField(grid, start * fade, WAVEFUNCTION)
    final = dirichlet_schrodinger_solve(psi0, domain, tau, dt_solver, record_every=10 ** 9).final
    support_guard(final, margin=0.05 * taper, tol=1e-8, sides=(True, False), what="boxed Dirichlet solve")
    exact = pmwf_continuous(PlaneWaveSpec(spec.k), tau, x, smoothing=smoothing)
    w = (x >= window[0]) & (x <= window[1])
    sup = float(np.max(np.abs(final.values[w] - exact[w])))
    return BoxCheck(sup, window, smoothing, (-box, 0.0), grid.dx, dt_solver)


# ---------------------------------------------------------------- release

def _release(initial, x, s: float, alpha: float = math.pi / 4, epsabs: float = 1e-15):
    """Free evolution over ``s`` of ``Theta(-y) initial(y)`` evaluated at ``x > 0``.

    ``initial`` must be entire.  The integral over ``(-inf, 0]`` is moved
    onto the ray ``y = -r e^{i alpha}``, where the integrand decays like a
    Gaussian, and done by adaptive quadrature.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x <= 0):
        raise ValueError("release is evaluated in the measured region x > 0 only")
    rot = complex(math.cos(alpha), math.sin(alpha))
    R = 40.0 * math.sqrt(s) + 10.0
    integrand = lambda r: np.exp(1j * (x + r * rot) ** 2 / (2.0 * s)) * initial(-r * rot)
    val, err = quad_vec(integrand, 0.0, R, epsabs=epsabs, epsrel=1e-12, limit=50000, norm="max")
    pref = rot / np.sqrt(2j * math.pi * s)
    return pref * val, abs(pref) * float(err)


def released_continuous(spec: PlaneWaveSpec, tau: float, s: float, x, with_error: bool = False):
    """Wave function a time ``s`` after a continuous measurement of length ``tau``,
    in the measured region (``x`` on the measured side)."""
    xc = spec.to_canonical(x)
    vals, err = _release(lambda y: _image_solution(y, tau, spec.q), xc, s)
    return (vals, err) if with_error else vals


def released_instantaneous(spec: PlaneWaveSpec, s: float, x, with_error: bool = False):
    """Wave function a time ``s`` after an instantaneous collapse (closed form)."""
    vals = moshinsky(spec.to_canonical(x), s, spec.q)
    err = 1e-15 * max(1.0, float(np.max(np.abs(vals))))
    return (vals, err) if with_error else vals


def released_by_contour(spec: PlaneWaveSpec, s: float, x):
    """Instantaneous case through the contour route; checks :func:`_release`."""
    return _release(lambda y: np.exp(1j * spec.q * y), spec.to_canonical(x), s)


# ---------------------------------------------------------------- statistics

def tail_fit(x, values, window: tuple, noise_floor: float = 0.0, min_ratio: float = 100.0) -> TailFit:
    """Fit ``|values| ~ A |x|^p`` on ``window`` (given in ``|x|``)."""
    x = np.asarray(x, dtype=float)
    amp = np.abs(np.asarray(values))
    sel = (np.abs(x) >= window[0]) & (np.abs(x) <= window[1])
    if sel.sum() < 3:
        raise InsufficientPrecisionError(f"fewer than 3 samples in window {window}")
    if noise_floor > 0 and np.min(amp[sel]) < min_ratio * noise_floor:
        raise InsufficientPrecisionError(
            f"amplitude {np.min(amp[sel]):.2e} in window {window} is within "
            f"{min_ratio:g}x of the noise floor {noise_floor:.2e}")
    fit = loglog_fit(x[sel], amp[sel])
    return TailFit(tuple(window), fit.exponent, fit.r_squared, fit.amplitude, noise_floor)


def first_moment_scan(field_or_x, cutoffs, values=None, side: str = "both",
                      origin: float = 0.0) -> MomentScan:
    """Truncated first moments ``int_{|x| <= c} |x| |phi|^2`` for each cutoff.

    ``side`` restricts the integral to ``x >= origin`` ("positive") or
    ``x <= origin`` ("negative").  The verdict looks at how the increments
    between consecutive cutoffs behave: geometric shrinking (ratio < 0.5)
    is "convergent", increments that do not shrink (ratio > 0.8) with
    growth in ``log c`` is "divergent".
    """
    if isinstance(field_or_x, ScalarField):
        x, f = field_or_x.x, field_or_x.values
    else:
        x, f = np.asarray(field_or_x, dtype=float), np.asarray(values)
    cutoffs = np.asarray(cutoffs, dtype=float)
    if np.any(np.diff(cutoffs) <= 0):
        raise ValueError("cutoffs must be increasing")
    r = x - origin
    if side == "positive":
        keep = r >= 0
    elif side == "negative":
        keep = r <= 0
    else:
        keep = np.ones_like(r, dtype=bool)
    if cutoffs[-1] > np.max(np.abs(r[keep])) * (1 + 1e-12):
        raise ValueError("largest cutoff lies outside the sampled range")
    dens = np.abs(r) * np.abs(f) ** 2
    moments = []
    for c in cutoffs:
        sel = keep & (np.abs(r) <= c)
        xs, ys = x[sel], dens[sel]
        order = np.argsort(xs)
        moments.append(float(np.trapezoid(ys[order], xs[order])) if sel.sum() > 1 else 0.0)
    moments = np.array(moments)
    inc = np.diff(moments)
    scale = max(float(np.max(np.abs(moments))), 1e-300)
    if np.all(np.abs(inc) <= 1e-13 * scale):
        return MomentScan(cutoffs, moments, "convergent", 0.0, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = inc[1:] / inc[:-1]
    ratio = float(np.median(ratios[np.isfinite(ratios)])) if ratios.size else math.nan
    slope = float(np.polyfit(np.log(cutoffs), moments, 1)[0])
    if ratio < 0.5:
        verdict = "convergent"
    elif ratio > 0.8 and slope > 0:
        verdict = "divergent"
    else:
        verdict = "inconclusive"
    return MomentScan(cutoffs, moments, verdict, ratio, slope)


def interval_mean_scaling(variant: str, x1: float, x2: float, dt_ladder,
                          spec: PlaneWaveSpec = PlaneWaveSpec(), tau: float = 1.0,
                          n_quad: int = 401) -> ScalingFit:
    """Partial first moment ``m(dt) = int_{x1}^{x2} x |phi(x, dt)|^2 dx`` in the
    measured region a time ``dt`` after the collapse, and its power-law fit.

    For the continuous variant the collapse is a measurement of duration
    ``tau`` and ``dt`` counts from its end.  The interval-normalised mean
    ``m / int |phi|^2`` is returned alongside.
    """
    if not 0 < x1 < x2:
        raise ValueError("need 0 < x1 < x2 inside the measured region")
    dts = np.asarray(dt_ladder, dtype=float)
    if np.any(np.diff(dts) >= 0):
        raise ValueError("dt_ladder must be decreasing")
    xs = np.linspace(x1, x2, n_quad)
    xm = xs if spec.side == "positive" else -xs
    moments, means, floors = [], [], []
    for dt in dts:
        if variant == "instantaneous":
            vals, err = released_instantaneous(spec, dt, xm, with_error=True)
        elif variant == "continuous":
            vals, err = released_continuous(spec, tau, dt, xm, with_error=True)
        else:
            raise ValueError(f"unknown variant {variant!r}")
        dens = np.abs(vals) ** 2
        m = float(np.trapezoid(xs * dens, xs))
        floor = 2.0 * err * float(np.max(np.abs(vals))) * x2 * (x2 - x1) + 1e-300
        if m < 100.0 * floor:
            raise InsufficientPrecisionError(
                f"m(dt={dt:g}) = {m:.3e} is below 100x the quadrature noise floor {floor:.1e}")
        moments.append(m)
        means.append(m / float(np.trapezoid(dens, xs)))
        floors.append(floor)
    fit = loglog_fit(dts, moments)
    return ScalingFit(variant, x1, x2, dts, np.array(moments), np.array(means),
                      fit.exponent, fit.stderr, fit.r_squared, np.array(floors))


# ---------------------------------------------------------------- figure

FIGURE1_COLUMNS = ("x", "re_phi_I", "im_phi_I", "re_phi_C", "im_phi_C")


def figure1_data(tau: float = 1.0, x_window: tuple = (-10.0, 10.0), n_points: int = 2001,
                 spec: PlaneWaveSpec = PlaneWaveSpec(), check: bool = True) -> dict:
    """Real and imaginary parts of both post-measurement wave functions."""
    x = np.linspace(x_window[0], x_window[1], n_points)
    phi_i = pmwf_instantaneous(spec, tau, x, check=check)
    phi_c = pmwf_continuous(spec, tau, x)
    return {"x": x, "re_phi_I": phi_i.real, "im_phi_I": phi_i.imag,
            "re_phi_C": phi_c.real, "im_phi_C": phi_c.imag}
