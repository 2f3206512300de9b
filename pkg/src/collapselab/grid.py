"""Uniform 1-D grids, fields on them, and the free propagators.

Everything here is node-centred: a grid with ``n_points`` nodes spans
``[x_min, x_max]`` and every physical boundary sits exactly on a node so
Dirichlet data can be imposed without interpolation.  Integrals are
composite trapezoid sums.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy.signal import fftconvolve

from .errors import DomainError, SupportGuardError

DENSITY = "density"
WAVEFUNCTION = "wavefunction"
_KINDS = (DENSITY, WAVEFUNCTION)

# nodes closer than this fraction of dx count as coincident
_NODE_TOL = 1e-9


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise DomainError(f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if self.n_points < 8:
            raise DomainError(f"need at least 8 nodes, got {self.n_points}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def nodes(self) -> np.ndarray:
        x = self.x_min + self.dx * np.arange(self.n_points)
        x[-1] = self.x_max
        return x

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    def index_of(self, x: float) -> int:
        """Index of the node at ``x``; raises if ``x`` is not a node."""
        s = (x - self.x_min) / self.dx
        i = int(round(s))
        if i < 0 or i >= self.n_points or abs(s - i) > _NODE_TOL * max(1.0, abs(s)):
            raise DomainError(f"x={x!r} is not a node of {self}")
        return i

    def is_node(self, x: float) -> bool:
        try:
            self.index_of(x)
        except DomainError:
            return False
        return True

    @classmethod
    def around(cls, lower: float, upper: float, n_inside: int,
               pad_lower: float = 0.0, pad_upper: float | None = None) -> "Grid1D":
        """Grid with nodes on ``lower`` and ``upper`` and ``n_inside`` cells
        between them, padded by at least the requested lengths."""
        if pad_upper is None:
            pad_upper = pad_lower
        dx = (upper - lower) / n_inside
        m_lo = int(math.ceil(pad_lower / dx - 1e-12))
        m_hi = int(math.ceil(pad_upper / dx - 1e-12))
        return cls(lower - m_lo * dx, upper + m_hi * dx, n_inside + m_lo + m_hi + 1)

    @classmethod
    def with_spacing(cls, x_min: float, x_max: float, dx: float) -> "Grid1D":
        n = int(round((x_max - x_min) / dx))
        return cls(x_min, x_min + n * dx, n + 1)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Samples of a density or wave function on a :class:`Grid1D`.

    ``values`` is stored as a read-only copy, so a field behaves as a value.
    """

    grid: Grid1D
    values: np.ndarray
    kind: str = DENSITY

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        dtype = complex if self.kind == WAVEFUNCTION else float
        v = np.array(self.values, dtype=np.result_type(dtype, np.asarray(self.values).dtype))
        if self.kind == DENSITY and np.iscomplexobj(v):
            raise ValueError("density fields must be real")
        if v.shape != (self.grid.n_points,):
            raise DomainError(f"expected {self.grid.n_points} samples, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid1D, fn, kind: str = DENSITY) -> "ScalarField":
        return cls(grid, fn(grid.nodes), kind)

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values, self.kind)

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__


@dataclass(frozen=True)
class DomainSpec:
    """The unmeasured region ``D = [lower, upper]``.

    An end flagged *artificial* is the truncation of an unbounded side
    (e.g. the ``-L`` wall standing in for the half-line ``(-inf, 0]``); it
    is not a boundary of ``D`` and must be protected by the support guard.
    """

    lower: float
    upper: float
    lower_artificial: bool = False
    upper_artificial: bool = False

    def __post_init__(self):
        if not self.lower < self.upper:
            raise DomainError(f"empty region [{self.lower}, {self.upper}]")

    @classmethod
    def interval(cls, a: float, b: float) -> "DomainSpec":
        return cls(a, b)

    @classmethod
    def negative_half_line(cls, wall: float) -> "DomainSpec":
        """``(-inf, 0]`` truncated at ``wall < 0``."""
        return cls(wall, 0.0, lower_artificial=True)

    @classmethod
    def whole(cls, grid: Grid1D) -> "DomainSpec":
        """The entire box, i.e. an empty measured region."""
        return cls(grid.x_min, grid.x_max, True, True)

    @property
    def boundary_points(self) -> tuple[tuple[float, int], ...]:
        """``(x, outer normal)`` for every physical boundary point."""
        pts = []
        if not self.lower_artificial:
            pts.append((self.lower, -1))
        if not self.upper_artificial:
            pts.append((self.upper, +1))
        return tuple(pts)

    def index_range(self, grid: Grid1D) -> tuple[int, int]:
        """Inclusive node indices of ``lower`` and ``upper``."""
        try:
            return grid.index_of(self.lower), grid.index_of(self.upper)
        except DomainError as exc:
            raise DomainError(f"boundary of D=[{self.lower}, {self.upper}] is not on a grid node: {exc}") from None

    def mask(self, grid: Grid1D) -> np.ndarray:
        lo, hi = self.index_range(grid)
        m = np.zeros(grid.n_points, dtype=bool)
        m[lo:hi + 1] = True
        return m

    def guarded_sides(self, grid: Grid1D) -> tuple[bool, bool]:
        """Which box edges are artificial for fields living on ``D``."""
        lo, hi = self.index_range(grid)
        return (self.lower_artificial or lo > 0,
                self.upper_artificial or hi < grid.n_points - 1)


@dataclass(frozen=True)
class ObservationSchedule:
    dt: float
    n_steps: int
    renormalize: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def total_time(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @classmethod
    def over(cls, total_time: float, dt: float, renormalize: bool = True) -> "ObservationSchedule":
        n = int(round(total_time / dt))
        if n < 1 or abs(n * dt - total_time) > 1e-9 * total_time:
            raise ValueError(f"total time {total_time} is not a multiple of dt={dt}")
        return cls(dt, n, renormalize)


@dataclass
class Trajectory:
    """Time-indexed fields produced by a solver."""

    times: np.ndarray
    fields: list = field(default_factory=list)
    flux: object = None

    def __len__(self):
        return len(self.fields)

    def __getitem__(self, i):
        return self.fields[i]

    @property
    def final(self) -> ScalarField:
        return self.fields[-1]


# ---------------------------------------------------------------- quadrature

def trapezoid_weights(grid: Grid1D, region: DomainSpec | None = None) -> np.ndarray:
    """Trapezoid weights on the nodes of ``region`` (zero elsewhere)."""
    w = np.zeros(grid.n_points)
    if region is None:
        lo, hi = 0, grid.n_points - 1
    else:
        lo, hi = region.index_range(grid)
    if hi > lo:
        w[lo:hi + 1] = grid.dx
        w[lo] = w[hi] = 0.5 * grid.dx
    return w


def integrate(field: ScalarField, region: DomainSpec | None = None, probability: bool = False):
    """Trapezoid integral of ``field`` over ``region`` (default: whole box).

    With ``probability=True`` the integrand is ``|field|**2``.
    """
    if region is not None and (region.lower < field.grid.x_min - _NODE_TOL * field.grid.dx
                               or region.upper > field.grid.x_max + _NODE_TOL * field.grid.dx):
        raise DomainError(f"region [{region.lower}, {region.upper}] leaves the grid "
                          f"[{field.grid.x_min}, {field.grid.x_max}]")
    f = np.abs(field.values) ** 2 if probability else field.values
    return np.dot(trapezoid_weights(field.grid, region), f)


def l2_norm(field: ScalarField, region: DomainSpec | None = None) -> float:
    return float(np.sqrt(integrate(field, region, probability=True).real))


def restrict(field: ScalarField, region: DomainSpec) -> ScalarField:
    """Zero the field on every node outside ``region``."""
    return field.with_values(np.where(region.mask(field.grid), field.values, 0))


# ---------------------------------------------------------------- propagators

def heat_kernel(offsets: np.ndarray, dt: float) -> np.ndarray:
    """``(2 pi dt)^(-1/2) exp(-x^2 / 2 dt)``: transition density of ``1/2 d_xx``."""
    return np.exp(-offsets ** 2 / (2.0 * dt)) / math.sqrt(2.0 * math.pi * dt)


def gaussian_step(field: ScalarField, dt: float, region: DomainSpec | None = None) -> ScalarField:
    """Convolve with the heat kernel over ``region`` (default: the box).

    The integral over ``region`` uses trapezoid weights, so the result is
    the quadrature of ``int_D f(y) K(x - y) dy`` at every node ``x``.
    Mass leaving the box is lost; use :func:`support_guard` to detect it.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    grid = field.grid
    dx = grid.dx
    half = min(grid.n_points - 1, int(math.ceil(12.0 * math.sqrt(dt) / dx)))
    kernel = heat_kernel(dx * np.arange(-half, half + 1), dt)
    src = trapezoid_weights(grid, region) * field.values
    out = fftconvolve(src, kernel, mode="full")[half:half + grid.n_points]
    return field.with_values(out)


def wavenumbers(grid: Grid1D) -> np.ndarray:
    return 2.0 * np.pi * sfft.fftfreq(grid.n_points, d=grid.dx)


def fresnel_step(field: ScalarField, dt: float) -> ScalarField:
    """Free Schrodinger propagation ``psi_t = (i/2) psi_xx`` over ``dt``.

    Spectral multiplier ``exp(-i k^2 dt / 2)`` on the periodic extension
    of the box; exact for grid-commensurate Fourier modes and unitary in
    the discrete L2 norm.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    k = wavenumbers(field.grid)
    out = sfft.ifft(np.exp(-0.5j * k ** 2 * dt) * sfft.fft(field.values))
    return ScalarField(field.grid, out, WAVEFUNCTION)


def boundary_normal_derivative(field: ScalarField, domain: DomainSpec) -> np.ndarray:
    """Outward normal derivative at each physical boundary point of ``domain``.

    One-sided three-point stencil taken from inside ``D``.
    """
    grid = field.grid
    v = field.values
    out = []
    for x_b, normal in domain.boundary_points:
        i = grid.index_of(x_b)
        j1, j2 = i - normal, i - 2 * normal
        if not (0 <= j2 < grid.n_points and 0 <= j1 < grid.n_points):
            raise DomainError(f"not enough nodes inside D next to boundary point {x_b}")
        # d/dx from the interior side, then projected on the outer normal
        inward = (-3.0 * v[i] + 4.0 * v[j1] - v[j2]) / (2.0 * grid.dx)
        out.append(-inward)
    return np.array(out, dtype=v.dtype)


# ---------------------------------------------------------------- guards

def edge_mass(field: ScalarField, margin: float) -> tuple[float, float]:
    """Mass (or probability) within ``margin`` of each end of the box."""
    grid = field.grid
    f = np.abs(field.values) ** 2 if field.kind == WAVEFUNCTION else np.abs(field.values)
    m = max(1, int(math.ceil(margin / grid.dx)))
    lo = float(np.sum(f[:m + 1]) * grid.dx)
    hi = float(np.sum(f[-(m + 1):]) * grid.dx)
    return lo, hi


def support_guard(field: ScalarField, margin: float | None = None, tol: float = 1e-8,
                  sides: tuple[bool, bool] = (True, True), what: str = "field") -> None:
    """Raise :class:`SupportGuardError` if the field reaches an artificial wall."""
    if margin is None:
        margin = 0.05 * field.grid.length
    lo, hi = edge_mass(field, margin)
    for flag, mass, name in zip(sides, (lo, hi), ("lower", "upper")):
        if flag and mass > tol:
            raise SupportGuardError(
                f"{what}: mass {mass:.3e} within {margin:g} of the {name} box wall "
                f"exceeds {tol:g}; enlarge the box")


# ---------------------------------------------------------------- implicit solver

class DirichletCrankNicolson:
    """Crank-Nicolson stepper for ``u_t = coef * u_xx`` on ``[lower, upper]``
    with ``u = 0`` at both ends.

    ``coef`` is ``1/2`` for the Fokker-Planck equation and ``i/2`` for the
    free Schrodinger equation.  The tridiagonal system is factorised once.
    """

    def __init__(self, grid: Grid1D, domain: DomainSpec, dt: float, coef: complex):
        from scipy.sparse import diags, identity
        from scipy.sparse.linalg import splu

        if not dt > 0:
            raise ValueError(f"dt_solver must be positive, got {dt}")
        self.grid, self.domain, self.dt, self.coef = grid, domain, dt, coef
        self.lo, self.hi = domain.index_range(grid)
        n = self.hi - self.lo - 1
        if n < 3:
            raise DomainError("need at least three interior nodes in D")
        dtype = complex if np.iscomplexobj(coef) or isinstance(coef, complex) else float
        lap = diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n)) / grid.dx ** 2
        r = 0.5 * dt * coef
        eye = identity(n, dtype=dtype)
        self._explicit = (eye + r * lap).tocsr()
        self._lu = splu((eye - r * lap).tocsc())
        self.dtype = dtype

    def interior(self, values: np.ndarray) -> np.ndarray:
        return np.array(values[self.lo + 1:self.hi], dtype=np.result_type(self.dtype, values.dtype))

    def embed(self, u: np.ndarray, like: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.n_points, dtype=np.result_type(u.dtype, like.dtype))
        out[self.lo + 1:self.hi] = u
        return out

    def step(self, u: np.ndarray) -> np.ndarray:
        return self._lu.solve(self._explicit @ u)
