"""Fleming-Viot particle estimator of the conditioned density.

N walkers perform Brownian motion (generator ``1/2 Laplacian``) in a box
``D``.  A walker found outside ``D`` at the end of a step is moved onto the
current position of a uniformly chosen walker that is inside, so N never
changes.  The histogram estimates ``pi(x, t)`` and the re-injection rate
per walker per unit time estimates ``-J(t)``.

Random numbers come from counter-based Philox streams: step ``k`` has its
own key derived from ``(seed, k)`` and walker ``i`` owns the 4-word block at
counter ``i``.  Words 0..d-1 give the Gaussian increments, word 3 the
re-injection choice.  The result therefore does not depend on how the
walkers are split between worker threads.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid
from scipy.special import ndtri

from .diffusion import FluxSeries
from .errors import EnsembleCollapseError, InsufficientDataError
from .grid import DomainSpec, ScalarField

_WORDS = 4
_STEP_TAG = 0
_INIT_TAG = 1
MIN_WINDOW_STEPS = 10


@dataclass
class ParticleEnsemble:
    positions: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    seed: int
    step: int = 0
    kill_log: list = field(default_factory=list)

    @classmethod
    def create(cls, positions, domain, seed: int) -> "ParticleEnsemble":
        lower, upper = box_bounds(domain)
        pos = np.array(positions, dtype=float).reshape(len(positions), -1)
        if pos.shape[1] != lower.size:
            raise ValueError(f"positions are {pos.shape[1]}-D but the box is {lower.size}-D")
        if not np.all(_inside(pos, lower, upper)):
            raise ValueError("initial positions must lie strictly inside D")
        return cls(pos, lower, upper, int(seed))

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class EmpiricalEstimate:
    t: float
    histogram: np.ndarray
    edges: tuple
    kill_rate: float
    positions: np.ndarray | None = None


@dataclass(frozen=True)
class FVResult:
    estimates: list
    kill_log: np.ndarray
    dt: float
    ensemble: ParticleEnsemble


def box_bounds(domain) -> tuple[np.ndarray, np.ndarray]:
    """Lower/upper corners from a :class:`DomainSpec` or a sequence of them."""
    doms = [domain] if isinstance(domain, DomainSpec) else list(domain)
    if not 1 <= len(doms) <= 3:
        raise ValueError("boxes of dimension 1, 2 or 3 only")
    lower = np.array([d.lower for d in doms], dtype=float)
    upper = np.array([d.upper for d in doms], dtype=float)
    if not np.all(np.isfinite(lower)) or not np.all(np.isfinite(upper)):
        raise ValueError("the box must be bounded")
    return lower, upper


def _inside(pos, lower, upper) -> np.ndarray:
    return np.all((pos > lower) & (pos < upper), axis=1)


def _key(seed: int, step: int, tag: int) -> np.ndarray:
    return np.random.SeedSequence(seed, spawn_key=(step, tag)).generate_state(2, np.uint64)


def _blocks(key, start: int, stop: int) -> np.ndarray:
    bg = np.random.Philox(key=key)
    if start:
        bg.advance(start)
    return bg.random_raw(_WORDS * (stop - start)).reshape(-1, _WORDS)


def _to_unit(words: np.ndarray) -> np.ndarray:
    """53-bit uniforms strictly inside (0, 1)."""
    return ((words >> np.uint64(11)).astype(float) + 0.5) / 2.0 ** 53


def _draws(seed: int, step: int, n: int, workers: int) -> np.ndarray:
    key = _key(seed, step, _STEP_TAG)
    if workers <= 1 or n < 2 * workers:
        return _blocks(key, 0, n)
    cuts = np.linspace(0, n, workers + 1).astype(int)
    with ThreadPoolExecutor(workers) as pool:
        parts = pool.map(lambda ab: _blocks(key, int(ab[0]), int(ab[1])), zip(cuts[:-1], cuts[1:]))
        return np.concatenate(list(parts))


def fv_step(ens: ParticleEnsemble, dt: float, workers: int = 1) -> ParticleEnsemble:
    """Move every walker by ``sqrt(dt) * N(0, 1)`` per axis, then re-inject
    the ones that left ``D``.  Updates ``ens`` in place and returns it."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if ens.n < 2:
        raise ValueError("need at least two walkers")
    ens.step += 1
    words = _draws(ens.seed, ens.step, ens.n, workers)
    pos = ens.positions + np.sqrt(dt) * ndtri(_to_unit(words[:, :ens.dim]))
    inside = _inside(pos, ens.lower, ens.upper)
    exited = np.flatnonzero(~inside)
    if exited.size == ens.n:
        raise EnsembleCollapseError(f"all {ens.n} walkers left D in step {ens.step}; dt={dt:g} is too large")
    if exited.size:
        alive = list(np.flatnonzero(inside))
        choice = _to_unit(words[exited, 3])
        for i, u in zip(exited, choice):
            j = alive[int(u * len(alive))]
            pos[i] = pos[j]
            alive.append(i)
    ens.positions = pos
    ens.kill_log.append(int(exited.size))
    return ens


def _histogram(ens: ParticleEnsemble, bins: int):
    ranges = list(zip(ens.lower, ens.upper))
    counts, edges = np.histogramdd(ens.positions, bins=bins, range=ranges)
    return counts / ens.n, tuple(edges)


def fv_run(p0_sampler: Callable, domain, dt: float, t_final: float, n: int, seed: int,
           sample_times: Sequence[float] | None = None, bins: int = 64,
           workers: int = 1, keep_positions: bool = False) -> FVResult:
    """Run the particle system from ``p0_sampler(rng, n)`` up to ``t_final``.

    Estimates are taken at ``sample_times`` (default: the start and the end,
    rounded to whole steps); each estimate's ``kill_rate`` covers the steps
    since the previous one.  ``keep_positions`` stores a copy of the walker
    positions with every estimate.
    """
    if not dt > 0 or not t_final > 0:
        raise ValueError("dt and t_final must be positive")
    n_steps = int(round(t_final / dt))
    if n_steps < 1:
        raise ValueError("t_final is shorter than one step")
    rng = np.random.Generator(np.random.Philox(key=_key(seed, 0, _INIT_TAG)))
    ens = ParticleEnsemble.create(p0_sampler(rng, n), domain, seed)
    if sample_times is None:
        sample_times = [0.0, t_final]
    marks = sorted({int(round(t / dt)) for t in sample_times})
    if marks and (marks[0] < 0 or marks[-1] > n_steps):
        raise ValueError("sample times must lie in [0, t_final]")
    estimates, last = [], 0
    if marks and marks[0] == 0:
        hist, edges = _histogram(ens, bins)
        estimates.append(EmpiricalEstimate(0.0, hist, edges, 0.0,
                                           ens.positions.copy() if keep_positions else None))
        marks = marks[1:]
    for k in range(1, n_steps + 1):
        fv_step(ens, dt, workers)
        if marks and k == marks[0]:
            kills = sum(ens.kill_log[last:k])
            rate = kills / (ens.n * (k - last) * dt)
            hist, edges = _histogram(ens, bins)
            estimates.append(EmpiricalEstimate(k * dt, hist, edges, rate,
                                               ens.positions.copy() if keep_positions else None))
            last = k
            marks = marks[1:]
    return FVResult(estimates, np.array(ens.kill_log, dtype=np.int64), dt, ens)


def empirical_flux(kill_log, dt: float, n: int, window: int = 100, start: int = 0) -> FluxSeries:
    """Re-injection rate per walker per unit time over consecutive windows
    of ``window`` steps.

    The values estimate ``-J``, so they are non-negative.  Times are the
    window ends.
    """
    log = np.asarray(kill_log, dtype=float)[start:]
    if log.size < 2:
        raise InsufficientDataError("need a history of at least two steps")
    if window < MIN_WINDOW_STEPS:
        raise InsufficientDataError(f"window of {window} steps is shorter than {MIN_WINDOW_STEPS}")
    if log.size < window:
        raise InsufficientDataError(f"history of {log.size} steps is shorter than the window")
    m = log.size // window
    rates = log[:m * window].reshape(m, window).sum(axis=1) / (n * window * dt)
    times = (start + window * np.arange(1, m + 1)) * dt
    return FluxSeries(times, rates)


def mean_kill_rate(kill_log, dt: float, n: int, start: int = 0) -> tuple[float, float]:
    """Average re-injection rate after step ``start`` and its Poisson standard error."""
    log = np.asarray(kill_log, dtype=float)[start:]
    if log.size < MIN_WINDOW_STEPS:
        raise InsufficientDataError("fewer than 10 steps to average over")
    exposure = n * log.size * dt
    total = float(log.sum())
    return total / exposure, float(np.sqrt(max(total, 1.0))) / exposure


def ks_distance(samples, cdf: Callable) -> float:
    """One-sample Kolmogorov-Smirnov statistic."""
    return float(stats.kstest(np.ravel(samples), cdf).statistic)


def cdf_from_density(density: ScalarField) -> Callable:
    """Normalised CDF of a density sampled on a grid (linear interpolation)."""
    x = density.x
    c = cumulative_trapezoid(np.real(density.values), x, initial=0.0)
    c = c / c[-1]
    return lambda y: np.interp(y, x, c, left=0.0, right=1.0)


def sine_profile_sampler(lower: float = 0.0, upper: float = np.pi):
    """Sampler for the product of ``sin(pi (x - lower) / (upper - lower))`` per axis."""
    lo = np.atleast_1d(np.asarray(lower, dtype=float))
    hi = np.atleast_1d(np.asarray(upper, dtype=float))

    def sample(rng, n):
        u = (rng.integers(0, 2 ** 53, size=(n, lo.size)) + 0.5) / 2.0 ** 53
        frac = np.arccos(1.0 - 2.0 * u) / np.pi
        return lo + frac * (hi - lo)

    return sample


def sine_cdf(lower: float = 0.0, upper: float = np.pi) -> Callable:
    return lambda y: 0.5 * (1.0 - np.cos(np.pi * (np.clip(y, lower, upper) - lower) / (upper - lower)))
