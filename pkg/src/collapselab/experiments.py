"""Experiment registry used by the command-line runner.

Each experiment has a dict of default parameters, a validator returning
a list of violations, and a ``compute`` function returning an
:class:`Outcome`: pass/fail criteria with their tolerances and oracles,
data tables, and optional plot scripts.
"""
from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import diffusion as dif
from . import fleming_viot as fv
from . import pmwf
from . import quantum as qm
from .errors import DomainError, InsufficientPrecisionError
from .fitting import loglog_fit
from .grid import (
    WAVEFUNCTION,
    DomainSpec,
    Grid1D,
    ObservationSchedule,
    ScalarField,
    integrate,
    l2_norm,
)


@dataclass
class Criterion:
    name: str
    measured: object
    tolerance: str
    oracle: str
    passed: bool

    def as_dict(self) -> dict:
        return {"name": self.name, "measured": _jsonable(self.measured), "tolerance": self.tolerance,
                "oracle": self.oracle, "passed": bool(self.passed)}


@dataclass
class Table:
    name: str
    columns: list  # (name, unit)
    data: list  # one sequence per column


@dataclass
class Outcome:
    criteria: list = field(default_factory=list)
    tables: list = field(default_factory=list)
    plots: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)


@dataclass(frozen=True)
class Experiment:
    name: str
    summary: str
    defaults: dict
    validate: Callable
    compute: Callable


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


# ---------------------------------------------------------------- numbers

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow, ast.USub: operator.neg, ast.UAdd: operator.pos}


def parse_number(value):
    """Numbers, or strings like ``"pi/512"`` or ``"2*pi"`` (arithmetic and ``pi`` only)."""
    if isinstance(value, bool):
        raise ValueError("booleans are not numbers")
    if isinstance(value, (int, float)):
        return value
    if not isinstance(value, str):
        raise ValueError(f"expected a number, got {value!r}")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(f"unsupported expression {value!r}")

    try:
        return ev(ast.parse(value, mode="eval"))
    except SyntaxError:
        raise ValueError(f"cannot parse {value!r} as a number") from None


def _num(params, key, violations, *, positive=False, nonneg=False, integer=False, minimum=None):
    try:
        v = parse_number(params[key])
    except (ValueError, ZeroDivisionError) as exc:
        violations.append(f"params.{key}: {exc}")
        return None
    if not math.isfinite(v):
        violations.append(f"params.{key}: must be finite")
        return None
    if integer and (not float(v).is_integer()):
        violations.append(f"params.{key}: must be an integer, got {v}")
        return None
    if positive and not v > 0:
        violations.append(f"params.{key}: must be > 0, got {v}")
        return None
    if nonneg and v < 0:
        violations.append(f"params.{key}: must be >= 0, got {v}")
        return None
    if minimum is not None and v < minimum:
        violations.append(f"params.{key}: must be >= {minimum}, got {v}")
        return None
    return int(v) if integer else float(v)


def _ladder(params, key, violations, *, decreasing=True, min_len=2):
    raw = params[key]
    if not isinstance(raw, (list, tuple)) or len(raw) < min_len:
        violations.append(f"params.{key}: must be a list of at least {min_len} numbers")
        return None
    vals = []
    for i, r in enumerate(raw):
        try:
            v = float(parse_number(r))
        except (ValueError, ZeroDivisionError) as exc:
            violations.append(f"params.{key}[{i}]: {exc}")
            return None
        if not v > 0:
            violations.append(f"params.{key}[{i}]: must be > 0, got {v}")
            return None
        vals.append(v)
    if decreasing and any(b >= a for a, b in zip(vals, vals[1:])):
        violations.append(f"params.{key}: must be strictly decreasing")
        return None
    return vals


def _interval(params, key, violations):
    raw = params[key]
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        violations.append(f"params.{key}: must be a pair [lower, upper]")
        return None
    try:
        a, b = (float(parse_number(r)) for r in raw)
    except (ValueError, ZeroDivisionError) as exc:
        violations.append(f"params.{key}: {exc}")
        return None
    if not a < b:
        violations.append(f"params.{key}: need lower < upper, got [{a}, {b}]")
        return None
    return a, b


def _multiple(total, dt, key, violations):
    if total is None or dt is None:
        return
    n = round(total / dt)
    if n < 1 or abs(n * dt - total) > 1e-9 * total:
        violations.append(f"params.{key}: total time {total} is not a whole number of steps of {dt}")


def _grid_and_domain(params, violations):
    """Shared grid/domain block: ``grid: {x_min, x_max, n_points}``, ``domain: [lower, upper]``."""
    g = params["grid"]
    if not isinstance(g, dict) or set(g) != {"x_min", "x_max", "n_points"}:
        violations.append("params.grid: needs exactly x_min, x_max, n_points")
        return None, None
    v0 = len(violations)
    x_min = _num(g, "x_min", violations)
    x_max = _num(g, "x_max", violations)
    n = _num(g, "n_points", violations, integer=True, minimum=8)
    dom = _interval(params, "domain", violations)
    if len(violations) > v0:
        return None, None
    try:
        grid = Grid1D(x_min, x_max, n)
    except DomainError as exc:
        violations.append(f"params.grid: {exc}")
        return None, None
    domain = DomainSpec(*dom)
    for name, x in (("lower", dom[0]), ("upper", dom[1])):
        if not grid.is_node(x):
            violations.append(f"params.domain.{name}: DomainSpec invariant violated, boundary "
                              f"x={x:g} is not a node of the grid (dx={grid.dx:g})")
    return grid, domain


def _unknown_keys(params, defaults, violations):
    for k in params:
        if k not in defaults:
            violations.append(f"params.{k}: unknown parameter")


def _sine_on(grid: Grid1D, domain: DomainSpec, kind=None):
    a, b = domain.lower, domain.upper
    x = grid.nodes
    v = np.where((x >= a) & (x <= b), np.sin(np.pi * (x - a) / (b - a)), 0.0)
    if kind == WAVEFUNCTION:
        f = ScalarField(grid, v, WAVEFUNCTION)
        return f * (1.0 / l2_norm(f, domain))
    f = ScalarField(grid, v)
    return f * (1.0 / float(integrate(f, domain)))


def _crit(name, measured, passed, tolerance, oracle):
    return Criterion(name, measured, tolerance, oracle, bool(passed))


# ================================================================ diffusion-equivalence

DIFFUSION_EQUIVALENCE = {
    "grid": {"x_min": 0.0, "x_max": "pi", "n_points": 513},
    "domain": [0.0, "pi"],
    "dt_solver": 1e-3,
    "t_final": 1.0,
    "n_profiles": 5,
    "refine": True,
}


def _validate_equivalence(p):
    v = []
    _grid_and_domain(p, v)
    _num(p, "dt_solver", v, positive=True)
    _num(p, "t_final", v, positive=True)
    _num(p, "n_profiles", v, integer=True, minimum=1)
    if not isinstance(p["refine"], bool):
        v.append("params.refine: must be true or false")
    return v


def random_profile(rng) -> np.ndarray:
    """Coefficients of ``sin x + sum_n a_n sin(n x)``, n = 2..4, positive on (0, pi)."""
    n = np.arange(2, 5)
    return rng.uniform(-1.0, 1.0, 3) * 0.25 / n


def _profile_field(grid, domain, coeffs):
    x = grid.nodes
    a, b = domain.lower, domain.upper
    y = np.pi * (x - a) / (b - a)
    v = np.sin(y) + sum(c * np.sin(k * y) for k, c in zip(range(2, 5), coeffs))
    v = np.where((x >= a) & (x <= b), v, 0.0)
    f = ScalarField(grid, v)
    return f * (1.0 / float(integrate(f, domain)))


def _equivalence_distance(grid, domain, coeffs, t, dt):
    p0 = _profile_field(grid, domain, coeffs)
    a = dif.nonlinear_conditioned_solve(p0, domain, t, dt, record_every=10 ** 9).final
    b = dif.renormalized_density(dif.fp_dirichlet_solve(p0, domain, t, dt, record_every=10 ** 9).final, domain)
    return float(np.max(np.abs(a.values - b.values)))


def _refined(grid: Grid1D) -> Grid1D:
    return Grid1D(grid.x_min, grid.x_max, 2 * (grid.n_points - 1) + 1)


def compute_equivalence(p, seed) -> Outcome:
    grid, domain = _grid_and_domain(p, [])
    dt, t = float(parse_number(p["dt_solver"])), float(parse_number(p["t_final"]))
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    rows, d1s, ratios = [], [], []
    for i in range(int(p["n_profiles"])):
        c = random_profile(rng)
        d1 = _equivalence_distance(grid, domain, c, t, dt)
        d2 = _equivalence_distance(_refined(grid), domain, c, t, dt) if p["refine"] else math.nan
        d1s.append(d1)
        ratios.append(d1 / d2 if p["refine"] else math.nan)
        rows.append((i, *c, d1, d2, ratios[-1]))
    out = Outcome()
    worst = max(d1s)
    out.criteria.append(_crit("equivalence_sup_distance", worst, worst <= 5e-4, "<= 5e-4",
                              "renormalised absorbing Fokker-Planck solution"))
    if p["refine"]:
        r = min(ratios)
        out.criteria.append(_crit("equivalence_refinement_ratio", r, r >= 3.0, ">= 3 when dx is halved",
                                  "second-order spatial convergence"))

    # stationarity of the sine profile
    pi0 = _sine_on(grid, domain)
    traj = dif.nonlinear_conditioned_solve(pi0, domain, t, dt, record_every=max(1, int(round(0.05 / dt))))
    drift = float(np.max(np.abs(traj.final.values - pi0.values)))
    j0 = dif.conditioned_flux(pi0, domain)
    width = domain.upper - domain.lower
    j_exact = -0.5 * (np.pi / width) ** 2
    out.criteria.append(_crit("eigenprofile_sup_drift", drift, drift <= 1e-5, "<= 1e-5 at t_final",
                              "sine profile is the stationary conditioned density"))
    out.criteria.append(_crit("eigenprofile_flux", j0, abs(j0 - j_exact) <= grid.dx ** 2,
                              f"{j_exact:g} +- dx^2 = {grid.dx ** 2:.3e}",
                              "J = -(1/2)(pi/L)^2 from the Dirichlet eigenvalue"))
    cols = [("profile", "index"), ("a2", "dimensionless"), ("a3", "dimensionless"), ("a4", "dimensionless"),
            ("sup_distance_dx", "1/length"), ("sup_distance_dx_half", "1/length"), ("ratio", "dimensionless")]
    out.tables.append(Table("equivalence", cols, [list(c) for c in zip(*rows)]))
    out.tables.append(Table("eigenprofile_flux", [("t", "time"), ("J", "1/time")],
                            [traj.flux.times, traj.flux.values]))
    return out


# ================================================================ fleming-viot

FLEMING_VIOT = {
    "domain": [0.0, "pi"],
    "dim": 1,
    "n_walkers": 10000,
    "dt": 1e-4,
    "t_final": 2.0,
    "sample_times": [0.5, 1.0, 2.0],
    "burn_in": 0.5,
    "bins": 64,
    "workers": 1,
    "window_steps": 1000,
}


def _validate_fv(p):
    v = []
    _interval(p, "domain", v)
    dim = _num(p, "dim", v, integer=True, minimum=1)
    if dim is not None and dim > 3:
        v.append("params.dim: boxes of dimension 1, 2 or 3 only")
    _num(p, "n_walkers", v, integer=True, minimum=2)
    dt = _num(p, "dt", v, positive=True)
    t = _num(p, "t_final", v, positive=True)
    _multiple(t, dt, "t_final", v)
    b = _num(p, "burn_in", v, nonneg=True)
    if b is not None and t is not None and b >= t:
        v.append("params.burn_in: must be shorter than t_final")
    _num(p, "bins", v, integer=True, minimum=2)
    _num(p, "workers", v, integer=True, minimum=1)
    _num(p, "window_steps", v, integer=True, minimum=fv.MIN_WINDOW_STEPS)
    st = _ladder(p, "sample_times", v, decreasing=False, min_len=1)
    if st is not None and t is not None and max(st) > t:
        v.append("params.sample_times: must not exceed t_final")
    return v


def compute_fv(p, seed) -> Outcome:
    lo, hi = (float(parse_number(x)) for x in p["domain"])
    dim, n = int(p["dim"]), int(p["n_walkers"])
    dt, t = float(p["dt"]), float(parse_number(p["t_final"]))
    times = [float(parse_number(s)) for s in p["sample_times"]]
    dom = DomainSpec(lo, hi)
    res = fv.fv_run(fv.sine_profile_sampler([lo] * dim, [hi] * dim), [dom] * dim, dt, t, n, seed,
                    sample_times=[0.0] + times, bins=int(p["bins"]), workers=int(p["workers"]),
                    keep_positions=True)
    out = Outcome()

    # oracle: renormalised absorbing FP solution from the same start (1-D marginals)
    grid = Grid1D(lo, hi, 1025)
    pi0 = _sine_on(grid, dom)
    ref = dif.fp_dirichlet_solve(pi0, dom, t, 1e-3, record_every=max(1, int(round(0.1 / 1e-3))))
    sine = fv.sine_cdf(lo, hi)
    final_pos = res.ensemble.positions
    ks_final = max(fv.ks_distance(final_pos[:, a], sine) for a in range(dim))
    out.criteria.append(_crit("ks_final_vs_sine", ks_final, ks_final <= 0.05, "<= 0.05",
                              "quasi-stationary sine profile"))
    for est in res.estimates[1:]:
        k = int(np.argmin(np.abs(ref.times - est.t)))
        cdf = fv.cdf_from_density(dif.renormalized_density(ref.fields[k], dom))
        ks = max(fv.ks_distance(est.positions[:, a], cdf) for a in range(dim))
        out.criteria.append(_crit(f"ks_vs_pde_t{est.t:g}", ks, ks <= 0.05, "<= 0.05",
                                  "renormalised Dirichlet Fokker-Planck solution"))
    start = int(round(float(p["burn_in"]) / dt))
    rate, se = fv.mean_kill_rate(res.kill_log, dt, n, start=start)
    expected = 0.5 * dim * (np.pi / (hi - lo)) ** 2
    out.criteria.append(_crit("kill_rate", rate, abs(rate - expected) <= 0.1 * expected,
                              f"{expected:g} +- {0.1 * expected:g}",
                              "-J of the separable Dirichlet eigenprofile"))
    out.diagnostics["kill_rate_stderr"] = se

    flux = fv.empirical_flux(res.kill_log, dt, n, window=int(p["window_steps"]))
    last = res.estimates[-1]
    centers = 0.5 * (last.edges[0][1:] + last.edges[0][:-1])
    width = np.diff(last.edges[0])
    marginal = last.histogram.sum(axis=tuple(range(1, dim))) if dim > 1 else last.histogram
    reference = 0.5 * np.pi / (hi - lo) * np.sin(np.pi * (centers - lo) / (hi - lo))
    out.tables.append(Table("histogram", [("x", "length"), ("density", "1/length"), ("reference", "1/length")],
                            [centers, marginal / width, reference]))
    out.tables.append(Table("kill_rate", [("t", "time"), ("rate", "1/time")], [flux.times, flux.values]))
    out.plots["histogram.plot"] = _gnuplot(
        "histogram.csv", "x", "density", [(2, "Fleming-Viot histogram", "boxes"), (3, "sine profile", "lines")])
    return out


# ================================================================ quantum ladders

ZENO_SCAN = {
    "domain": [0.0, "pi"],
    "n_cells": 512,
    "pad": "pi",
    "tau": 0.5,
    "dt_ladder": [1e-2, 5e-3, 2.5e-3],
    "dt_solver": 1e-3,
    "epsilons": [0.1, 0.01, 0.001],
}


def _validate_zeno(p):
    v = []
    dom = _interval(p, "domain", v)
    _num(p, "n_cells", v, integer=True, minimum=8)
    _num(p, "pad", v, nonneg=True)
    tau = _num(p, "tau", v, positive=True)
    _num(p, "dt_solver", v, positive=True)
    lad = _ladder(p, "dt_ladder", v)
    if lad and tau:
        for dt in lad:
            _multiple(tau, dt, "dt_ladder", v)
    if "epsilons" in p:
        _ladder(p, "epsilons", v)
    del dom
    return v


def _quantum_setup(p):
    lo, hi = (float(parse_number(x)) for x in p["domain"])
    grid = Grid1D.around(lo, hi, int(p["n_cells"]), float(parse_number(p["pad"])))
    dom = DomainSpec(lo, hi)
    return grid, dom, _sine_on(grid, dom, WAVEFUNCTION)


def quantum_ladder(p):
    grid, dom, psi0 = _quantum_setup(p)
    tau = float(parse_number(p["tau"]))
    ref = qm.dirichlet_schrodinger_solve(psi0, dom, tau, float(p["dt_solver"]), record_every=10 ** 9).final
    lost, err = [], []
    for dt in (float(parse_number(d)) for d in p["dt_ladder"]):
        run = qm.quantum_truncation_recursion(psi0, dom, ObservationSchedule.over(tau, dt, False))
        lost.append(run.norm_lost)
        err.append(l2_norm(ref.with_values(run.final.values - ref.values), dom))
    return np.array(lost), np.array(err)


def _monotone(v) -> bool:
    return bool(np.all(np.diff(v) < 0))


def compute_zeno(p, seed) -> Outcome:
    out = Outcome()
    dts = np.array([float(parse_number(d)) for d in p["dt_ladder"]])
    lost, err = quantum_ladder(p)
    out.criteria.append(_crit("norm_leak_monotone", lost.tolist(), _monotone(lost),
                              "strictly decreasing down the dt ladder", "Zeno freezing"))
    out.criteria.append(_crit("l2_error_monotone", err.tolist(), _monotone(err),
                              "strictly decreasing down the dt ladder", "Dirichlet Schrodinger solve"))
    fit = loglog_fit(dts, lost)
    out.criteria.append(_crit("norm_leak_exponent", fit.exponent, fit.exponent > 0, "> 0",
                              "log-log fit across the ladder"))
    out.diagnostics["l2_error_exponent"] = loglog_fit(dts, err).exponent

    grid, dom, psi0 = _quantum_setup(p)
    width = dom.upper - dom.lower
    phase = np.exp(-0.5j * (np.pi / width) ** 2 * 1.0)
    cn = qm.dirichlet_schrodinger_solve(psi0, dom, 1.0, float(p["dt_solver"]), record_every=10 ** 9).final
    cn_err = float(np.max(np.abs(cn.values - phase * psi0.values)))
    out.criteria.append(_crit("eigenstate_phase_error", cn_err, cn_err <= 1e-4, "<= 1e-4 at t=1",
                              "exp(-i E t) with E = (1/2)(pi/L)^2"))
    irr = qm.renormalization_irrelevance_check(psi0, dom, ObservationSchedule.over(
        float(parse_number(p["tau"])), dts[-1]))
    out.criteria.append(_crit("renormalization_irrelevance", irr.sup_distance, irr.sup_distance <= 1e-8,
                              "<= 1e-8 for the eigenstate", "linearity of the truncation recursion"))

    eps = np.array([float(parse_number(e)) for e in p["epsilons"]])
    fl = [qm.regularized_flux(psi0, e, dom) for e in eps]
    mags = np.array([abs(f.j_value) for f in fl])
    slope = loglog_fit(eps, mags).exponent
    out.criteria.append(_crit("epsilon_flux_slope", slope, abs(slope - 1.0) <= 0.02, "1.00 +- 0.02",
                              "J(eps) = (i eps / 2) E / (1 + eps^2)"))
    j01 = [f for f in fl if math.isclose(f.epsilon, 0.1)]
    if j01:
        target = 0.1 / (2 * 1.01) * (np.pi / width) ** 2
        m = abs(j01[0].j_value)
        out.criteria.append(_crit("epsilon_flux_at_0.1", m, abs(m - target) <= 1e-3, f"{target:.5f} +- 1e-3",
                                  "gradient energy int |pi'|^2 = (pi/L)^2"))
    out.tables.append(Table("zeno", [("dt", "time"), ("norm_lost", "dimensionless"), ("l2_error", "dimensionless")],
                            [dts, lost, err]))
    out.tables.append(Table("epsilon_flux", [("epsilon", "dimensionless"), ("abs_J", "1/time"),
                                             ("gradient_energy", "1/length^2")],
                            [eps, mags, [f.gradient_energy for f in fl]]))
    return out


# ================================================================ contrast

CONTRAST = dict(ZENO_SCAN, **{
    "killing_mean": -1.0,
    "killing_variance": 0.1,
    "killing_dx": 0.005,
    "killing_dt_solver": 1e-3,
})
del CONTRAST["epsilons"]


def _validate_contrast(p):
    v = _validate_zeno(p)
    _num(p, "killing_mean", v)
    _num(p, "killing_variance", v, positive=True)
    _num(p, "killing_dx", v, positive=True)
    _num(p, "killing_dt_solver", v, positive=True)
    m = p.get("killing_mean")
    if isinstance(m, (int, float)) and m >= 0:
        v.append("params.killing_mean: the starting packet must sit in x < 0")
    return v


def killing_setup(mean, var, tau, dx):
    half = -mean + 12.0 * math.sqrt(var + tau) + 1.0
    L = math.ceil(half)
    grid = Grid1D.around(-L, 0.0, int(round(L / dx)), 0.0, 3.0)
    dom = DomainSpec.negative_half_line(grid.x_min)
    x = grid.nodes
    p0 = ScalarField(grid, np.where(x <= 0, np.exp(-(x - mean) ** 2 / (2 * var)), 0.0))
    return grid, dom, p0 * (1.0 / float(integrate(p0, dom)))


def killing_ladder(mean, var, tau, dx, dts, dt_solver):
    grid, dom, p0 = killing_setup(mean, var, tau, dx)
    fp = dif.fp_dirichlet_solve(p0, dom, tau, dt_solver, record_every=10 ** 9).final
    absorbed = 1.0 - float(integrate(fp, dom))
    runs = [dif.intermittent_killing_run(p0, dt, tau) for dt in dts]
    return absorbed, runs


def compute_contrast(p, seed) -> Outcome:
    out = Outcome()
    dts = np.array([float(parse_number(d)) for d in p["dt_ladder"]])
    tau = float(parse_number(p["tau"]))
    lost, err = quantum_ladder(p)
    absorbed, runs = killing_ladder(float(p["killing_mean"]), float(p["killing_variance"]), tau,
                                    float(p["killing_dx"]), dts, float(p["killing_dt_solver"]))
    removed = np.array([r.total_removed for r in runs])
    rel = np.abs(removed - absorbed) / absorbed
    out.criteria.append(_crit("quantum_norm_leak_monotone", lost.tolist(), _monotone(lost),
                              "strictly decreasing toward 0", "Zeno freezing"))
    out.criteria.append(_crit("quantum_l2_error_monotone", err.tolist(), _monotone(err),
                              "strictly decreasing", "Dirichlet Schrodinger solve"))
    out.criteria.append(_crit("diffusion_absorbed_relative_error", float(rel[-1]), rel[-1] <= 0.02,
                              "<= 0.02 at the finest dt",
                              f"Dirichlet Fokker-Planck absorption 1 - int p = {absorbed:.6f}"))
    out.diagnostics["diffusion_relative_errors"] = rel.tolist()
    out.diagnostics["diffusion_error_exponent"] = loglog_fit(dts, rel).exponent
    out.diagnostics["quantum_leak_exponent"] = loglog_fit(dts, lost).exponent
    out.tables.append(Table("contrast", [("dt", "time"), ("quantum_norm_lost", "dimensionless"),
                                         ("quantum_l2_error", "dimensionless"),
                                         ("diffusion_removed", "dimensionless"),
                                         ("diffusion_reference", "dimensionless"),
                                         ("diffusion_relative_error", "dimensionless")],
                            [dts, lost, err, removed, [absorbed] * len(dts), rel]))
    out.plots["contrast.plot"] = _gnuplot("contrast.csv", "dt", "mass lost",
                                          [(2, "quantum norm lost", "linespoints"),
                                           (4, "diffusion mass removed", "linespoints"),
                                           (5, "Dirichlet absorption", "lines")], logscale="x")
    return out


# ================================================================ killing-balance

KILLING_BALANCE = {
    "mean": -1.0,
    "variance": 0.1,
    "tau": 0.5,
    "dt": 5e-3,
    "dx": 0.005,
    "dt_solver": 1e-3,
}


def _validate_killing(p):
    v = []
    m = _num(p, "mean", v)
    if m is not None and m >= 0:
        v.append("params.mean: the starting packet must sit in x < 0")
    _num(p, "variance", v, positive=True)
    tau = _num(p, "tau", v, positive=True)
    dt = _num(p, "dt", v, positive=True)
    _multiple(tau, dt, "dt", v)
    _num(p, "dx", v, positive=True)
    _num(p, "dt_solver", v, positive=True)
    return v


def compute_killing(p, seed) -> Outcome:
    out = Outcome()
    tau, dt = float(p["tau"]), float(p["dt"])
    absorbed, (run,) = killing_ladder(float(p["mean"]), float(p["variance"]), tau, float(p["dx"]),
                                      [dt], float(p["dt_solver"]))
    resid = float(np.max(np.abs(run.balance_residual)))
    out.criteria.append(_crit("mass_balance_residual", resid, resid <= 1e-10, "<= 1e-10",
                              "initial mass = survivors + removed, step by step"))
    out.criteria.append(_crit("removed_nonnegative", float(run.removed.min()), run.removed.min() >= -1e-14,
                              ">= 0 per kill", "killing only removes mass"))
    out.diagnostics["dirichlet_absorption"] = absorbed
    out.diagnostics["total_removed"] = run.total_removed
    out.tables.append(Table("killing", [("t", "time"), ("mass", "dimensionless"),
                                        ("removed", "dimensionless"), ("cumulative_removed", "dimensionless")],
                            [run.times, run.mass_history, np.r_[0.0, run.removed],
                             np.r_[0.0, np.cumsum(run.removed)]]))
    return out


# ================================================================ pmwf

PMWF_FIGURE1 = {
    "k": 1.0,
    "tau": 1.0,
    "x_window": [-10.0, 10.0],
    "n_points": 2001,
    "box": 80.0,
    "taper": 40.0,
    "smoothing": 0.04,
    "box_dx": 0.0025,
    "box_dt_solver": 2.5e-4,
}


def _validate_figure1(p):
    v = []
    _num(p, "k", v, positive=True)
    _num(p, "tau", v, positive=True)
    w = _interval(p, "x_window", v)
    if w and not w[0] < 0 < w[1]:
        v.append("params.x_window: must straddle the origin")
    _num(p, "n_points", v, integer=True, minimum=8)
    box = _num(p, "box", v, positive=True)
    taper = _num(p, "taper", v, positive=True)
    if box and taper and taper >= box:
        v.append("params.taper: must be shorter than box")
    _num(p, "smoothing", v, nonneg=True)
    _num(p, "box_dx", v, positive=True)
    _num(p, "box_dt_solver", v, positive=True)
    return v


def _sign_changes(v) -> int:
    s = np.sign(v[np.abs(v) > 1e-12])
    return int(np.sum(s[1:] != s[:-1]))


def compute_figure1(p, seed) -> Outcome:
    out = Outcome()
    spec = pmwf.PlaneWaveSpec(float(p["k"]))
    tau = float(p["tau"])
    lo, hi = (float(parse_number(x)) for x in p["x_window"])
    data = pmwf.figure1_data(tau, (lo, hi), int(p["n_points"]), spec, check=False)
    x = data["x"]
    phi_i = data["re_phi_I"] + 1j * data["im_phi_I"]
    phi_c = data["re_phi_C"] + 1j * data["im_phi_C"]

    quad, qerr = pmwf.instantaneous_by_quadrature(spec.to_canonical(x), tau, spec.q)
    gap = float(np.max(np.abs(quad - phi_i)))
    out.criteria.append(_crit("phi_I_closed_vs_quadrature", gap, gap <= 1e-6, "<= 1e-6",
                              "direct oscillatory quadrature of the free propagator"))
    out.diagnostics["quadrature_error_estimate"] = qerr
    box = pmwf.continuous_box_check(spec, tau, float(p["smoothing"]), float(p["box"]), float(p["taper"]),
                                    float(p["box_dx"]), float(p["box_dt_solver"]), (max(lo, -0.5 * float(p["taper"])), 0.0))
    out.criteria.append(_crit("phi_C_images_vs_boxed_dirichlet", box.sup_distance, box.sup_distance <= 1e-4,
                              "<= 1e-4", f"Crank-Nicolson Dirichlet solve, data mollified with variance "
                                         f"{box.smoothing:g}"))

    pos, neg = x > 0, x < 0
    out.criteria.append(_crit("phi_C_zero_on_measured_side", float(np.max(np.abs(phi_c[pos]))),
                              np.all(phi_c[pos] == 0), "== 0 exactly", "continuous collapse freezes x > 0"))
    env_near = float(np.max(np.abs(phi_i[(x > 0) & (x <= 2)])))
    env_far = float(np.max(np.abs(phi_i[x >= hi - 2])))
    osc_i = _sign_changes(phi_i.real[pos])
    ok = osc_i >= 2 and env_far < env_near
    out.criteria.append(_crit("phi_I_oscillatory_decay_on_measured_side", [osc_i, env_near, env_far], ok,
                              ">= 2 sign changes of Re and decreasing envelope", "Fresnel tail of the free jump"))
    osc_neg = [_sign_changes(phi_i.real[neg]), _sign_changes(phi_c.real[neg])]
    out.criteria.append(_crit("both_oscillatory_on_unmeasured_side", osc_neg, min(osc_neg) >= 2,
                              ">= 2 sign changes of Re each", "plane wave exp(-i k x) persists"))
    out.tables.append(Table("figure1", [("x", "length"), ("re_phi_I", "1/sqrt(length)"),
                                        ("im_phi_I", "1/sqrt(length)"), ("re_phi_C", "1/sqrt(length)"),
                                        ("im_phi_C", "1/sqrt(length)")],
                            [data[c] for c in pmwf.FIGURE1_COLUMNS]))
    out.plots["figure1.plot"] = _gnuplot("figure1.csv", "x", "wave function",
                                         [(2, "Re phi_I", "lines"), (3, "Im phi_I", "lines"),
                                          (4, "Re phi_C", "lines"), (5, "Im phi_C", "lines")])
    return out


TAIL_FIT = {
    "k": 1.0,
    "tau": 1.0,
    "release": 1.0,
    "window": [20.0, 100.0],
    "n_samples": 41,
}


def _validate_tail(p):
    v = []
    _num(p, "k", v, positive=True)
    _num(p, "tau", v, positive=True)
    _num(p, "release", v, positive=True)
    w = _interval(p, "window", v)
    if w and w[0] <= 0:
        v.append("params.window: must lie in the measured region x > 0")
    _num(p, "n_samples", v, integer=True, minimum=3)
    return v


def compute_tail(p, seed) -> Outcome:
    out = Outcome()
    spec = pmwf.PlaneWaveSpec(float(p["k"]))
    a, b = (float(parse_number(x)) for x in p["window"])
    x = np.geomspace(a, b, int(p["n_samples"]))
    s = float(p["release"])
    phi_c, err_c = pmwf.released_continuous(spec, float(p["tau"]), s, x, with_error=True)
    phi_i, err_i = pmwf.released_instantaneous(spec, s, x, with_error=True)
    for name, vals, err, target, tol in (("phi_C", phi_c, err_c, -2.0, 0.2), ("phi_I", phi_i, err_i, -1.0, 0.1)):
        try:
            fit = pmwf.tail_fit(x, vals, (a, b), noise_floor=err)
            out.criteria.append(_crit(f"{name}_tail_exponent", fit.exponent, abs(fit.exponent - target) <= tol,
                                      f"{target:g} +- {tol:g}", f"log-log fit on |x| in [{a:g}, {b:g}], "
                                      f"r^2 = {fit.r_squared:.6f}"))
        except InsufficientPrecisionError as exc:
            out.criteria.append(_crit(f"{name}_tail_exponent", str(exc), False, f"{target:g} +- {tol:g}",
                                      "window not certified"))
    exps = [c.measured for c in out.criteria]
    if all(isinstance(e, float) for e in exps):
        sep = exps[0] - exps[1]
        out.criteria.append(_crit("tail_exponent_separation", sep, abs(sep + 1.0) <= 0.3, "-1.0 +- 0.3",
                                  "kink-only data decay one power faster than jump data"))
    out.tables.append(Table("tail", [("x", "length"), ("abs_phi_C", "1/sqrt(length)"),
                                     ("abs_phi_I", "1/sqrt(length)")], [x, np.abs(phi_c), np.abs(phi_i)]))
    out.plots["tail.plot"] = _gnuplot("tail.csv", "x", "|phi|", [(2, "|phi_C|", "linespoints"),
                                                                 (3, "|phi_I|", "linespoints")], logscale="xy")
    return out


MOMENT_SCAN = {
    "k": 1.0,
    "tau": 1.0,
    "release": 1.0,
    "cutoffs": [10, 20, 40, 80, 160, 320, 640],
    "dx": 0.1,
}


def _validate_moment(p):
    v = []
    _num(p, "k", v, positive=True)
    _num(p, "tau", v, positive=True)
    _num(p, "release", v, positive=True)
    c = _ladder(p, "cutoffs", v, decreasing=False, min_len=3)
    if c and any(b <= a for a, b in zip(c, c[1:])):
        v.append("params.cutoffs: must be strictly increasing")
    _num(p, "dx", v, positive=True)
    return v


def compute_moment(p, seed) -> Outcome:
    out = Outcome()
    spec = pmwf.PlaneWaveSpec(float(p["k"]))
    cut = np.array([float(parse_number(c)) for c in p["cutoffs"]])
    dx = float(p["dx"])
    x = dx * np.arange(1, int(math.ceil(cut[-1] / dx)) + 1)
    s = float(p["release"])
    phi_c = pmwf.released_continuous(spec, float(p["tau"]), s, x)
    phi_i = pmwf.released_instantaneous(spec, s, x)
    sc = pmwf.first_moment_scan(x, cut, phi_c, side="positive")
    si = pmwf.first_moment_scan(x, cut, phi_i, side="positive")
    out.criteria.append(_crit("phi_C_moment_verdict", sc.verdict, sc.verdict == "convergent", "convergent",
                              f"increment ratio {sc.increment_ratio:.3f} (|x|^-3 integrand)"))
    out.criteria.append(_crit("phi_I_moment_verdict", si.verdict, si.verdict == "divergent", "divergent",
                              f"increment ratio {si.increment_ratio:.3f} (|x|^-1 integrand)"))
    out.tables.append(Table("moments", [("cutoff", "length"), ("moment_phi_C", "length"),
                                        ("moment_phi_I", "length")], [cut, sc.moments, si.moments]))
    return out


INTERVAL_SCALING = {
    "k": 1.0,
    "tau": 1.0,
    "x1": 1.0,
    "x2": 2.0,
    "dt_ladder": [0.04, 0.02, 0.01, 0.005],
}


def _validate_interval(p):
    v = []
    _num(p, "k", v, positive=True)
    _num(p, "tau", v, positive=True)
    x1 = _num(p, "x1", v, positive=True)
    x2 = _num(p, "x2", v, positive=True)
    if x1 and x2 and x2 <= x1:
        v.append("params.x2: must exceed x1")
    _ladder(p, "dt_ladder", v)
    return v


def compute_interval(p, seed) -> Outcome:
    out = Outcome()
    spec = pmwf.PlaneWaveSpec(float(p["k"]))
    x1, x2 = float(p["x1"]), float(p["x2"])
    dts = [float(parse_number(d)) for d in p["dt_ladder"]]
    fits = {}
    for variant, target in (("instantaneous", 0.5), ("continuous", 1.5)):
        f = pmwf.interval_mean_scaling(variant, x1, x2, dts, spec, float(p["tau"]))
        fits[variant] = f
        out.criteria.append(_crit(f"{variant}_dt_exponent", f.exponent, abs(f.exponent - target) <= 0.15,
                                  f"{target:g} +- 0.15", f"log-log fit of int_{x1:g}^{x2:g} x|phi|^2 dx "
                                                         f"over the dt ladder"))
        out.diagnostics[f"{variant}_amplitude_exponent"] = f.exponent / 2.0
    out.tables.append(Table("interval_scaling", [("dt", "time"), ("m_instantaneous", "length"),
                                                 ("m_continuous", "length"),
                                                 ("mean_instantaneous", "length"),
                                                 ("mean_continuous", "length")],
                            [dts, fits["instantaneous"].moment, fits["continuous"].moment,
                             fits["instantaneous"].conditional_mean, fits["continuous"].conditional_mean]))
    return out


# ================================================================ plots

def _gnuplot(csv, xlabel, ylabel, series, logscale=None) -> str:
    lines = ["set datafile separator ','", "set key autotitle columnhead",
             f"set xlabel '{xlabel}'", f"set ylabel '{ylabel}'"]
    if logscale:
        lines.append(f"set logscale {logscale}")
    stem = csv.rsplit(".", 1)[0]
    lines += ["set terminal pngcairo size 900,600", f"set output '{stem}.png'"]
    parts = [f"'{csv}' using 1:{col} with {style} title '{title}'" for col, title, style in series]
    lines.append("plot " + ", \\\n     ".join(parts))
    return "\n".join(lines) + "\n"


REGISTRY = {e.name: e for e in (
    Experiment("diffusion-equivalence", "nonlinear conditioned solve vs renormalised absorbing FP, "
               "and stationarity of the sine profile", DIFFUSION_EQUIVALENCE, _validate_equivalence,
               compute_equivalence),
    Experiment("fleming-viot", "particle estimate of the conditioned density and the kill rate",
               FLEMING_VIOT, _validate_fv, compute_fv),
    Experiment("zeno-scan", "quantum truncation recursion on a dt ladder, epsilon flux, "
               "renormalisation irrelevance", ZENO_SCAN, _validate_zeno, compute_zeno),
    Experiment("quantum-vs-diffusion-contrast", "norm leak -> 0 for the quantum recursion, "
               "absorbed mass -> Dirichlet value for diffusion", CONTRAST, _validate_contrast, compute_contrast),
    Experiment("pmwf-figure1", "instantaneous vs continuous post-measurement wave functions",
               PMWF_FIGURE1, _validate_figure1, compute_figure1),
    Experiment("tail-fit", "power-law tails of the released post-measurement wave functions",
               TAIL_FIT, _validate_tail, compute_tail),
    Experiment("moment-scan", "truncated first moments on a cutoff ladder",
               MOMENT_SCAN, _validate_moment, compute_moment),
    Experiment("interval-scaling", "small-time scaling of the partial first moment on [x1, x2]",
               INTERVAL_SCALING, _validate_interval, compute_interval),
    Experiment("killing-balance", "mass ledger of the intermittent killing run",
               KILLING_BALANCE, _validate_killing, compute_killing),
)}


def merged_params(name: str, overrides: dict | None) -> dict:
    exp = REGISTRY[name]
    params = {k: (dict(v) if isinstance(v, dict) else v) for k, v in exp.defaults.items()}
    for k, v in (overrides or {}).items():
        if isinstance(v, dict) and isinstance(params.get(k), dict):
            params[k] = {**params[k], **v}
        else:
            params[k] = v
    return params


def resolve_numbers(value):
    """Replace numeric strings such as ``"pi/2"`` by floats, recursively."""
    if isinstance(value, dict):
        return {k: resolve_numbers(v) for k, v in value.items()}
    if isinstance(value, list):
        return [resolve_numbers(v) for v in value]
    if isinstance(value, str):
        try:
            return float(parse_number(value))
        except (ValueError, ZeroDivisionError):
            return value
    return value


def validate_params(name: str, overrides: dict | None) -> list:
    exp = REGISTRY[name]
    params = merged_params(name, overrides)
    v = []
    _unknown_keys(params, exp.defaults, v)
    if v:
        return v
    return exp.validate(params)
