"""Intermittent negative position measurements of a free quantum particle.

Between observations the wave function evolves freely; every ``dt`` it is
truncated to the unmeasured region ``D`` (optionally renormalised).  As
``dt -> 0`` the truncated evolution freezes the measured region and the
recursion converges to the Schrodinger equation on ``D`` with ``psi = 0``
on its boundary (:func:`dirichlet_schrodinger_solve`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConditioningError
from .grid import (
    WAVEFUNCTION,
    DirichletCrankNicolson,
    DomainSpec,
    ObservationSchedule,
    ScalarField,
    Trajectory,
    fresnel_step,
    integrate,
    restrict,
)

_MIN_SURVIVAL = 1e-12


@dataclass(frozen=True)
class QuantumRun:
    schedule: ObservationSchedule
    domain: DomainSpec
    snapshots: list
    survival: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.schedule.times

    @property
    def final(self) -> ScalarField:
        return self.snapshots[-1]

    @property
    def norm_lost(self) -> float:
        """Probability removed by all truncations together."""
        return 1.0 - float(np.prod(self.survival))


@dataclass(frozen=True)
class EpsilonFlux:
    epsilon: float
    j_value: complex
    gradient_energy: float


@dataclass(frozen=True)
class IrrelevanceReport:
    sup_distance: float
    l2_distance: float
    phases: np.ndarray


def _prob(field: ScalarField, domain: DomainSpec) -> float:
    return float(integrate(field, domain, probability=True).real)


def quantum_truncation_recursion(psi0: ScalarField, domain: DomainSpec,
                                 schedule: ObservationSchedule) -> QuantumRun:
    """Free step, truncation to ``D``, optional renormalisation, repeated.

    ``survival[j]`` is the probability kept by the ``j``-th truncation,
    measured before any renormalisation.
    """
    psi = ScalarField(psi0.grid, psi0.values, WAVEFUNCTION)
    outside = ~domain.mask(psi.grid)
    if np.any(np.abs(psi.values[outside]) > 1e-12 * max(np.max(np.abs(psi.values)), 1e-300)):
        raise ValueError("psi0 must vanish outside D")
    snaps, survival = [psi], []
    for j in range(1, schedule.n_steps + 1):
        before = _prob(psi, domain)
        psi = restrict(fresnel_step(psi, schedule.dt), domain)
        after = _prob(psi, domain)
        s = after / before
        if not s > _MIN_SURVIVAL:
            raise DegenerateConditioningError(f"survival {s:.3e} at observation {j}")
        survival.append(s)
        if schedule.renormalize:
            psi = psi * (1.0 / math.sqrt(after))
        snaps.append(psi)
    return QuantumRun(schedule, domain, snaps, np.array(survival))


def dirichlet_schrodinger_solve(psi0: ScalarField, domain: DomainSpec, t_final: float,
                                dt_solver: float, record_every: int = 1) -> Trajectory:
    """Crank-Nicolson for ``psi_t = (i/2) psi_xx`` on ``D`` with ``psi = 0`` on its ends.

    Discontinuous data are taken as sampled; the boundary nodes are forced
    to zero.  The scheme is unitary for the discrete inner product.
    """
    if not dt_solver > 0:
        raise ValueError(f"dt_solver must be positive, got {dt_solver}")
    n = int(math.ceil(t_final / dt_solver - 1e-9))
    psi0 = ScalarField(psi0.grid, psi0.values, WAVEFUNCTION)
    traj = Trajectory(np.array([0.0]), [psi0])
    if n == 0:
        return traj
    dt = t_final / n
    cn = DirichletCrankNicolson(psi0.grid, domain, dt, 0.5j)
    u = cn.interior(psi0.values)
    times = [0.0]
    for k in range(1, n + 1):
        u = cn.step(u)
        if k % record_every == 0 or k == n:
            times.append(k * dt)
            traj.fields.append(ScalarField(psi0.grid, cn.embed(u, psi0.values), WAVEFUNCTION))
    traj.times = np.array(times)
    return traj


def dirichlet_energy(psi: ScalarField, domain: DomainSpec) -> float:
    """``<psi, -1/2 psi''>`` with the same three-point Laplacian as the solver."""
    lo, hi = domain.index_range(psi.grid)
    v = psi.values[lo:hi + 1].copy()
    v[0] = v[-1] = 0.0
    grad = np.diff(v) / psi.grid.dx
    return 0.5 * float(np.sum(np.abs(grad) ** 2) * psi.grid.dx)


def regularized_flux(pi: ScalarField, epsilon: float, domain: DomainSpec | None = None) -> EpsilonFlux:
    """``J = (i eps / 2) * int_D |pi'|^2 dx / (1 + eps^2)``.

    A diagnostic evaluated on a given wave function; it is the only
    contribution of renormalisation to the continuum equation.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if domain is None:
        domain = DomainSpec.whole(pi.grid)
    lo, hi = domain.index_range(pi.grid)
    v = pi.values[lo:hi + 1]
    grad = np.gradient(v, pi.grid.dx, edge_order=2)
    energy = float(np.trapezoid(np.abs(grad) ** 2, dx=pi.grid.dx))
    if epsilon == 0:
        return EpsilonFlux(0.0, 0j, energy)
    return EpsilonFlux(epsilon, 0.5j * epsilon * energy / (1.0 + epsilon ** 2), energy)


def align_phase(reference: np.ndarray, other: np.ndarray) -> tuple[np.ndarray, complex]:
    """Rotate ``other`` by the unit scalar that minimises ``||reference - c other||``."""
    overlap = np.vdot(other, reference)
    c = overlap / abs(overlap) if abs(overlap) > 0 else 1.0 + 0j
    return other * c, c


def renormalization_irrelevance_check(psi0: ScalarField, domain: DomainSpec,
                                      schedule: ObservationSchedule) -> IrrelevanceReport:
    """Run the recursion with and without renormalisation and compare the
    normalised, phase-aligned snapshots."""
    with_r = quantum_truncation_recursion(psi0, domain, ObservationSchedule(schedule.dt, schedule.n_steps, True))
    without = quantum_truncation_recursion(psi0, domain, ObservationSchedule(schedule.dt, schedule.n_steps, False))
    sup, l2, phases = 0.0, 0.0, []
    for a, b in zip(with_r.snapshots, without.snapshots):
        nb = b.values / math.sqrt(_prob(b, domain))
        na = a.values / math.sqrt(_prob(a, domain))
        nb, c = align_phase(na, nb)
        diff = na - nb
        sup = max(sup, float(np.max(np.abs(diff))))
        l2 = max(l2, math.sqrt(float(integrate(a.with_values(diff), domain, probability=True).real)))
        phases.append(c)
    return IrrelevanceReport(sup, l2, np.array(phases))
