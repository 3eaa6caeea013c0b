"""Godunov (demand/supply) finite-volume solver for the LWR traffic model.

Units: densities in veh/km, positions in m, times in s. Public flux helpers
(:func:`flux`, :func:`demand`, :func:`supply`, :func:`interface_flux`) return
veh/hr. The solver itself works with the "SI rate" flux ``u * v[m/s]`` so that
``dt/dx * q`` is directly a density increment in veh/km.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, DomainError

KMH_TO_MS = 1.0 / 3.6

# absolute slack (in units of u_max) allowed on density range checks; covers
# round-off of the conservative update, nothing more
RANGE_RTOL = 1e-9


@dataclass(frozen=True)
class FundamentalDiagram:
    """Greenshields flux law ``f(u) = u * v_max * (1 - u / u_max)``.

    Args:
        u_max: jam density (veh/km).
        v_max: free-flow speed (km/h).
    """

    u_max: float = 120.0
    v_max: float = 60.0
    v_max_ms: float = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.u_max > 0 and self.v_max > 0):
            raise ConfigurationError(
                f"u_max and v_max must be positive, got u_max={self.u_max}, v_max={self.v_max}"
            )
        object.__setattr__(self, "v_max_ms", float(self.v_max) * KMH_TO_MS)

    @classmethod
    def from_capacity(cls, u_max: float, q_max: float) -> "FundamentalDiagram":
        """Build from jam density and capacity (veh/hr); ``v_max = 4 q_max / u_max``."""
        return cls(u_max=u_max, v_max=4.0 * q_max / u_max)

    @property
    def u_cr(self) -> float:
        return self.u_max / 2.0

    @property
    def q_max(self) -> float:
        return self.u_max * self.v_max / 4.0

    def to_dict(self) -> dict:
        return {"u_max": self.u_max, "v_max": self.v_max}


@dataclass(frozen=True)
class GridSpec:
    """Uniform space-time grid with ``nx`` cells of width ``dx`` (m) and
    ``nt`` time levels spaced ``dt`` (s)."""

    nx: int
    nt: int
    dx: float
    dt: float

    def __post_init__(self):
        if self.nx < 1 or self.nt < 1:
            raise ConfigurationError(f"grid sizes must be >= 1, got ({self.nx}, {self.nt})")
        if not (self.dx > 0 and self.dt > 0):
            raise ConfigurationError(f"dx and dt must be positive, got dx={self.dx}, dt={self.dt}")

    @property
    def x_len(self) -> float:
        return self.nx * self.dx

    @property
    def t_len(self) -> float:
        return self.nt * self.dt

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.nt)

    def to_dict(self) -> dict:
        return {"nx": self.nx, "nt": self.nt, "dx": self.dx, "dt": self.dt}


def check_cfl(grid: GridSpec, fd: FundamentalDiagram) -> None:
    """Raise :class:`ConfigurationError` unless ``v_max * dt <= dx``."""
    courant = fd.v_max_ms * grid.dt / grid.dx
    if courant > 1.0 + 1e-12:
        raise ConfigurationError(
            f"CFL violated: v_max*dt/dx = {courant:.4f} > 1 "
            f"(v_max={fd.v_max} km/h, dt={grid.dt} s, dx={grid.dx} m)"
        )


@dataclass(frozen=True, eq=False)
class DensityField:
    """Cell-averaged density ``values[i, j]`` at cell ``i`` and time level ``j``."""

    values: np.ndarray
    grid: GridSpec
    u_max: float = 120.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.grid.shape:
            raise DomainError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("density field contains NaN or Inf")
        _check_range(values, self.u_max)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def mass(self) -> np.ndarray:
        """Total vehicles on the road at every time level (veh)."""
        return self.values.sum(axis=0) * self.grid.dx / 1000.0


def _check_range(u, u_max: float, what: str = "density") -> None:
    u = np.asarray(u, dtype=np.float64)
    if np.any(np.isnan(u)):
        raise DomainError(f"{what} contains NaN")
    tol = RANGE_RTOL * u_max
    if u.size and (u.min() < -tol or u.max() > u_max + tol):
        raise DomainError(f"{what} outside [0, {u_max}]: range [{u.min()}, {u.max()}]")


# -- flux laws (veh/hr) -------------------------------------------------------

def _flux_rate(u, fd: FundamentalDiagram):
    # veh/km * m/s
    return u * fd.v_max_ms * (1.0 - u / fd.u_max)


def _demand_rate(u, fd: FundamentalDiagram):
    return np.where(u <= fd.u_cr, _flux_rate(u, fd), fd.q_max * KMH_TO_MS)


def _supply_rate(u, fd: FundamentalDiagram):
    return np.where(u > fd.u_cr, _flux_rate(u, fd), fd.q_max * KMH_TO_MS)


def _interface_rate(u_up, u_dn, fd: FundamentalDiagram):
    return np.minimum(_demand_rate(u_up, fd), _supply_rate(u_dn, fd))


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def flux(u, fd: FundamentalDiagram):
    """Traffic flow ``f(u)`` in veh/hr."""
    _check_range(u, fd.u_max)
    return _scalar_or_array(_flux_rate(np.asarray(u, dtype=np.float64), fd) * 3.6)


def demand(u, fd: FundamentalDiagram):
    """Sending capacity of a cell: ``f(u)`` below critical density, else ``q_max``."""
    _check_range(u, fd.u_max)
    return _scalar_or_array(_demand_rate(np.asarray(u, dtype=np.float64), fd) * 3.6)


def supply(u, fd: FundamentalDiagram):
    """Receiving capacity of a cell: ``f(u)`` above critical density, else ``q_max``."""
    _check_range(u, fd.u_max)
    return _scalar_or_array(_supply_rate(np.asarray(u, dtype=np.float64), fd) * 3.6)


def interface_flux(u_upstream, u_downstream, fd: FundamentalDiagram):
    """Godunov flux across a cell boundary: ``min(demand(up), supply(down))``."""
    _check_range(u_upstream, fd.u_max)
    _check_range(u_downstream, fd.u_max)
    up = np.asarray(u_upstream, dtype=np.float64)
    dn = np.asarray(u_downstream, dtype=np.float64)
    return _scalar_or_array(_interface_rate(up, dn, fd) * 3.6)


# -- time stepping --------------------------------------------------------------

def _interface_rates(u, bc_exit, fd: FundamentalDiagram, boundary: str):
    """Fluxes through the nx+1 cell faces of ``u`` (shape ``(..., nx)``)."""
    inner = _interface_rate(u[..., :-1], u[..., 1:], fd)
    if boundary == "closed":
        zeros = np.zeros(u.shape[:-1] + (1,))
        return np.concatenate([zeros, inner, zeros], axis=-1)
    # upstream ghost replicates cell 0 -> min(demand, supply) of the same state = f(u0)
    inflow = _interface_rate(u[..., :1], u[..., :1], fd)
    outflow = _interface_rate(u[..., -1:], np.asarray(bc_exit, dtype=np.float64)[..., None], fd)
    return np.concatenate([inflow, inner, outflow], axis=-1)


def step(row, bc_exit, fd: FundamentalDiagram, grid: GridSpec, boundary: str = "open"):
    """Advance one (or a batch of) density rows by one explicit Godunov step.

    Args:
        row: densities of shape ``(..., nx)``.
        bc_exit: downstream ghost-cell density, scalar or shape ``(...)``.
        boundary: ``"open"`` (zero-gradient inflow, prescribed exit density) or
            ``"closed"`` (zero flux through both ends).
    """
    if boundary not in ("open", "closed"):
        raise ConfigurationError(f"unknown boundary mode {boundary!r}")
    check_cfl(grid, fd)
    u = np.asarray(row, dtype=np.float64)
    _check_range(u, fd.u_max, "row")
    _check_range(bc_exit, fd.u_max, "bc_exit")
    return _step_unchecked(u, bc_exit, fd, grid.dt / grid.dx, boundary)


def _step_unchecked(u, bc_exit, fd, ratio, boundary):
    q = _interface_rates(u, bc_exit, fd, boundary)
    u_new = u + ratio * (q[..., :-1] - q[..., 1:])
    tol = RANGE_RTOL * fd.u_max
    assert u_new.min() >= -tol and u_new.max() <= fd.u_max + tol, (
        "Godunov update left [0, u_max]; CFL or flux bug"
    )
    return u_new


def simulate_arrays(ic, bc, fd: FundamentalDiagram, grid: GridSpec,
                    boundary: str = "open") -> np.ndarray:
    """Run the scheme for a batch of initial/boundary conditions.

    Args:
        ic: initial densities, shape ``(..., nx)``.
        bc: exit boundary densities per time level, shape ``(..., nt)``; the
            value at level ``j`` drives the step ``j -> j + 1``.

    Returns:
        Array of shape ``(..., nx, nt)`` whose column 0 is ``ic``.
    """
    if boundary not in ("open", "closed"):
        raise ConfigurationError(f"unknown boundary mode {boundary!r}")
    check_cfl(grid, fd)
    ic = np.asarray(ic, dtype=np.float64)
    bc = np.asarray(bc, dtype=np.float64)
    if ic.shape[-1] != grid.nx:
        raise DomainError(f"initial condition has {ic.shape[-1]} cells, grid has {grid.nx}")
    if bc.shape[-1] != grid.nt:
        raise DomainError(f"boundary condition has {bc.shape[-1]} levels, grid has {grid.nt}")
    _check_range(ic, fd.u_max, "initial condition")
    _check_range(bc, fd.u_max, "boundary condition")

    out = np.empty(ic.shape + (grid.nt,))
    out[..., 0] = ic
    ratio = grid.dt / grid.dx
    u = ic
    for j in range(grid.nt - 1):
        u = _step_unchecked(u, bc[..., j], fd, ratio, boundary)
        out[..., j + 1] = u
    return out


def simulate(scenario, fd: FundamentalDiagram, grid: GridSpec,
             boundary: str = "open") -> DensityField:
    """Solve one :class:`~lwr_fno.scenario.Scenario` (anything with ``ic``/``bc``)."""
    values = simulate_arrays(scenario.ic, scenario.bc, fd, grid, boundary)
    return DensityField(values, grid, fd.u_max)


def _sample_density(values: np.ndarray, grid: GridSpec, x: float, t: float) -> float:
    """Bilinear interpolation between cell centres and time levels."""
    nx, nt = values.shape
    fi = min(max(x / grid.dx - 0.5, 0.0), nx - 1.0)
    fj = min(max(t / grid.dt, 0.0), nt - 1.0)
    i0, j0 = int(fi), int(fj)
    i1, j1 = min(i0 + 1, nx - 1), min(j0 + 1, nt - 1)
    a, b = fi - i0, fj - j0
    return ((1 - a) * (1 - b) * values[i0, j0] + a * (1 - b) * values[i1, j0]
            + (1 - a) * b * values[i0, j1] + a * b * values[i1, j1])


def vehicle_trajectory(field: DensityField, start_x: float, start_t: float,
                       fd: FundamentalDiagram) -> list[tuple[int, int]]:
    """Follow one vehicle through ``field`` with explicit Euler steps of ``dt``.

    Speed is ``v_max (1 - u / u_max)`` evaluated on bilinear-sampled density.
    Integration stops when the vehicle leaves the road or the horizon ends.

    Returns:
        Visited ``(cell, time level)`` index pairs in time order.
    """
    grid = field.grid
    if not (0.0 <= start_x < grid.x_len and 0.0 <= start_t < grid.t_len):
        raise DomainError(
            f"trajectory start ({start_x}, {start_t}) outside [0, {grid.x_len}) x [0, {grid.t_len})"
        )
    x = float(start_x)
    j = int(math.floor(start_t / grid.dt))
    t = float(start_t)
    cells = []
    while j < grid.nt and x < grid.x_len:
        cells.append((int(x // grid.dx), j))
        u = _sample_density(field.values, grid, x, t)
        x += fd.v_max_ms * (1.0 - u / fd.u_max) * grid.dt
        t += grid.dt
        j += 1
    return cells
