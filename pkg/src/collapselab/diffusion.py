"""Intermittently observed Brownian motion and its continuum limit.

A particle diffuses freely (generator ``1/2 d_xx``) and the measured region
outside ``D`` is illuminated every ``dt``.  Conditioning on "not seen"
gives the renormalised recursion :func:`observation_recursion`; as
``dt -> 0`` it becomes the nonlinear problem

    pi_t = 1/2 pi_xx - J(t) pi,   pi = 0 on dD,

solved directly by :func:`nonlinear_conditioned_solve` and, equivalently,
by renormalising the absorbing Fokker-Planck solution
(:func:`fp_dirichlet_solve` + :func:`renormalized_density`).

Sign convention: ``J = 1/2 sum dpi/dn`` with the outer normal, so ``J <= 0``
for absorbing walls and ``-J`` is the absorption (kill) rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConditioningError, SchemeConsistencyError
from .grid import (
    DENSITY,
    DirichletCrankNicolson,
    DomainSpec,
    Grid1D,
    ObservationSchedule,
    ScalarField,
    Trajectory,
    boundary_normal_derivative,
    gaussian_step,
    integrate,
    restrict,
    support_guard,
)

# relative size below which a surviving mass counts as zero
_DEGENERATE_MASS = 1e-300


@dataclass(frozen=True)
class FluxSeries:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ValueError("times and values differ in length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("flux values must be finite")


@dataclass(frozen=True)
class ConditionedDensityRun:
    schedule: ObservationSchedule
    domain: DomainSpec
    snapshots: list
    flux: FluxSeries
    survival: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.schedule.times

    @property
    def final(self) -> ScalarField:
        return self.snapshots[-1]


@dataclass(frozen=True)
class KillingRun:
    """Bookkeeping of the intermittent-killing experiment.

    ``mass_history[k]`` is the mass left just after the ``k``-th kill
    (index 0 is the initial mass); ``removed[k-1]`` is what the ``k``-th
    kill took out of the killing region.
    """

    times: np.ndarray
    mass_history: np.ndarray
    removed: np.ndarray
    final: ScalarField

    @property
    def total_removed(self) -> float:
        return float(self.removed.sum())

    @property
    def balance_residual(self) -> np.ndarray:
        lost = self.mass_history[0] - self.mass_history[1:]
        return lost - np.cumsum(self.removed)


def _mass_on(field: ScalarField, domain: DomainSpec) -> float:
    return float(integrate(field, domain))


def _check_supported(p0: ScalarField, domain: DomainSpec, what: str = "p0") -> None:
    outside = ~domain.mask(p0.grid)
    scale = float(np.max(np.abs(p0.values))) or 1.0
    if np.any(np.abs(p0.values[outside]) > 1e-12 * scale):
        raise ValueError(f"{what} must vanish outside D=[{domain.lower}, {domain.upper}]")


def _require_mass(mass: float, reference: float, where: str) -> None:
    if not mass > _DEGENERATE_MASS * max(reference, 1.0) or not math.isfinite(mass):
        raise DegenerateConditioningError(
            f"surviving mass {mass!r} on D is zero at {where}; reduce dt or refine the grid")


# ---------------------------------------------------------------- recursion

def observation_recursion(p0: ScalarField, domain: DomainSpec,
                          schedule: ObservationSchedule,
                          guard_tol: float = 1e-8) -> ConditionedDensityRun:
    """Diffuse for ``dt``, discard the part seen outside ``D``, renormalise.

    The free step integrates the current density over ``D`` only; the
    surviving fraction ``1 + J dt + o(dt)`` is recorded per step and
    ``log(survival) / dt`` is reported as the flux estimate.
    """
    _check_supported(p0, domain)
    m0 = _mass_on(p0, domain)
    _require_mass(m0, 1.0, "t=0")
    sides = domain.guarded_sides(p0.grid)
    margin = 0.05 * p0.grid.length

    pi = p0
    snaps, survival = [p0], []
    for j in range(1, schedule.n_steps + 1):
        before = _mass_on(pi, domain)
        p = gaussian_step(pi, schedule.dt, region=domain)
        support_guard(p, margin, guard_tol, sides, what=f"observation step {j}")
        p = restrict(p, domain)
        mass = _mass_on(p, domain)
        _require_mass(mass, before, f"observation {j}")
        survival.append(mass / before)
        pi = p * (1.0 / mass) if schedule.renormalize else p
        snaps.append(pi)
    survival = np.array(survival)
    flux = FluxSeries(schedule.times[1:], np.log(survival) / schedule.dt)
    return ConditionedDensityRun(schedule, domain, snaps, flux, survival)


# ---------------------------------------------------------------- PDE routes

def _steps(t_final: float, dt_solver: float) -> tuple[int, float]:
    if not dt_solver > 0:
        raise ValueError(f"dt_solver must be positive, got {dt_solver}")
    if t_final < 0:
        raise ValueError(f"t_final must be non-negative, got {t_final}")
    n = int(math.ceil(t_final / dt_solver - 1e-9))
    return n, (t_final / n if n else dt_solver)


def fp_dirichlet_solve(p0: ScalarField, domain: DomainSpec, t_final: float,
                       dt_solver: float, record_every: int = 1) -> Trajectory:
    """Crank-Nicolson solution of ``p_t = 1/2 p_xx`` on ``D``, ``p = 0`` on its ends.

    Artificial ends are treated as walls too and are watched by the
    support guard.  Snapshots are taken every ``record_every`` steps and
    always at ``t_final``.
    """
    _check_supported(p0, domain)
    n, dt = _steps(t_final, dt_solver)
    traj = Trajectory(np.array([0.0]), [p0])
    if n == 0:
        return traj
    cn = DirichletCrankNicolson(p0.grid, domain, dt, 0.5)
    u = cn.interior(p0.values)
    times = [0.0]
    for k in range(1, n + 1):
        u = cn.step(u)
        if k % record_every == 0 or k == n:
            times.append(k * dt)
            traj.fields.append(ScalarField(p0.grid, cn.embed(u, p0.values), DENSITY))
    traj.times = np.array(times)
    if any(domain.guarded_sides(p0.grid)) and (domain.lower_artificial or domain.upper_artificial):
        support_guard(traj.final, sides=(domain.lower_artificial, domain.upper_artificial),
                      what="Dirichlet solve")
    return traj


def renormalized_density(p_fields, domain: DomainSpec):
    """``pi = p / int_D p`` for one field or a sequence (or :class:`Trajectory`)."""
    if isinstance(p_fields, ScalarField):
        mass = _mass_on(p_fields, domain)
        _require_mass(mass, 1.0, "renormalisation")
        return p_fields * (1.0 / mass)
    out = [renormalized_density(p, domain) for p in p_fields]
    if isinstance(p_fields, Trajectory):
        return Trajectory(p_fields.times.copy(), out)
    return out


def conditioned_flux(pi: ScalarField, domain: DomainSpec) -> float:
    """``J = 1/2 * sum of outward normal derivatives`` (1-D boundary integral)."""
    return 0.5 * float(np.sum(boundary_normal_derivative(pi, domain)))


def nonlinear_conditioned_solve(p0: ScalarField, domain: DomainSpec, t_final: float,
                                dt_solver: float, record_every: int = 1,
                                max_drift_rate: float = 1e-4) -> Trajectory:
    """Integrate ``pi_t = 1/2 pi_xx - J(t) pi`` directly.

    Diffusion is Crank-Nicolson; the reaction term is explicit.  Since
    ``J(t)`` is a scalar the reaction only rescales the diffused iterate,
    by ``exp(-dt J)`` with ``J`` averaged between the current iterate and a
    predicted one (Heun).  The returned trajectory carries the flux series.

    Raises :class:`SchemeConsistencyError` when the mass on ``D`` drifts
    by more than ``max_drift_rate`` per unit time.
    """
    _check_supported(p0, domain)
    n, dt = _steps(t_final, dt_solver)
    m0 = _mass_on(p0, domain)
    _require_mass(m0, 1.0, "t=0")
    has_boundary = bool(domain.boundary_points)

    def flux(values):
        return conditioned_flux(ScalarField(p0.grid, values), domain) if has_boundary else 0.0

    traj = Trajectory(np.array([0.0]), [p0])
    if n == 0:
        traj.flux = FluxSeries(np.array([0.0]), np.array([flux(p0.values)]))
        return traj
    cn = DirichletCrankNicolson(p0.grid, domain, dt, 0.5)
    u = cn.interior(p0.values)
    j_now = flux(cn.embed(u, p0.values))
    times, fluxes = [0.0], [j_now]
    for k in range(1, n + 1):
        q = cn.step(u)
        j_pred = flux(cn.embed(q * math.exp(-dt * j_now), p0.values))
        u = q * math.exp(-0.5 * dt * (j_now + j_pred))
        full = cn.embed(u, p0.values)
        j_now = flux(full)
        t = k * dt
        if k % record_every == 0 or k == n:
            field = ScalarField(p0.grid, full, DENSITY)
            drift = abs(_mass_on(field, domain) - m0)
            if drift > max_drift_rate * t:
                raise SchemeConsistencyError(
                    f"mass drifted by {drift:.3e} by t={t:g} (limit {max_drift_rate:g} per unit "
                    f"time); dt_solver={dt_solver:g} is too large for this grid")
            times.append(t)
            fluxes.append(j_now)
            traj.fields.append(field)
    traj.times = np.array(times)
    traj.flux = FluxSeries(traj.times.copy(), np.array(fluxes))
    if domain.lower_artificial or domain.upper_artificial:
        support_guard(traj.final, sides=(domain.lower_artificial, domain.upper_artificial),
                      what="conditioned solve")
    return traj


# ---------------------------------------------------------------- killing

def intermittent_killing_run(p0: ScalarField, dt: float, t_final: float,
                             guard_tol: float = 1e-10) -> KillingRun:
    """Free diffusion with the positive axis wiped out every ``dt``.

    Unlike :func:`observation_recursion` nothing is renormalised: the
    removed mass ``m_k = int_0^inf p(x, k dt-) dx`` is booked and the
    survivors are left as they are.  The box must contain ``x = 0`` as a
    node and extend to the right far enough to hold one step of spill-over;
    its left end is an artificial wall guarded by the support guard.
    """
    grid = p0.grid
    half_line = DomainSpec.negative_half_line(grid.x_min)
    killing = DomainSpec(0.0, grid.x_max, upper_artificial=True)
    _check_supported(p0, half_line)
    schedule = ObservationSchedule.over(t_final, dt)
    margin = 0.05 * grid.length

    p = p0
    masses, removed = [_mass_on(p0, half_line)], []
    for k in range(1, schedule.n_steps + 1):
        p = gaussian_step(p, dt, region=half_line)
        support_guard(p, margin, guard_tol, what=f"killing step {k}")
        removed.append(_mass_on(p, killing))
        p = restrict(p, half_line)
        masses.append(_mass_on(p, half_line))
    return KillingRun(schedule.times, np.array(masses), np.array(removed), p)
