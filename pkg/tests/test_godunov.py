import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lwr_fno.exceptions import ConfigurationError, DomainError
from lwr_fno.godunov import (DensityField, FundamentalDiagram, GridSpec, check_cfl, demand,
                             flux, interface_flux, simulate, simulate_arrays, step, supply,
                             vehicle_trajectory)
from lwr_fno.scenario import Scenario, riemann_scenario

densities = st.floats(0.0, 120.0, allow_nan=False)


def test_diagram_from_capacity_matches_table_values():
    fd = FundamentalDiagram.from_capacity(120.0, 1800.0)
    assert fd.v_max == pytest.approx(60.0)
    assert fd.u_cr == 60.0
    assert fd.q_max == pytest.approx(1800.0)


def test_flux_known_points(fd):
    assert flux(0.0, fd) == 0.0
    assert flux(120.0, fd) == 0.0
    assert flux(60.0, fd) == pytest.approx(1800.0)
    assert flux(30.0, fd) == pytest.approx(30 * 60 * 0.75)


def test_flux_vectorised(fd):
    u = np.array([0.0, 30.0, 60.0, 90.0, 120.0])
    np.testing.assert_allclose(flux(u, fd), u * 60.0 * (1 - u / 120.0))


@given(densities)
def test_demand_and_supply_bracket_flux(u):
    fd = FundamentalDiagram()
    f = flux(u, fd)
    assert f <= demand(u, fd) + 1e-9
    assert f <= supply(u, fd) + 1e-9
    # one of the two is always the flux itself, the other is capacity
    assert min(demand(u, fd), supply(u, fd)) == pytest.approx(f)
    assert max(demand(u, fd), supply(u, fd)) == pytest.approx(fd.q_max)


@given(densities, densities)
def test_interface_flux_is_min_of_demand_and_supply(a, b):
    fd = FundamentalDiagram()
    q = interface_flux(a, b, fd)
    assert q == pytest.approx(min(demand(a, fd), supply(b, fd)))
    assert 0.0 <= q <= fd.q_max + 1e-9


@given(densities)
def test_interface_flux_consistency(u):
    fd = FundamentalDiagram()
    assert interface_flux(u, u, fd) == pytest.approx(flux(u, fd))


def test_red_light_blocks_outflow(fd):
    assert interface_flux(50.0, fd.u_max, fd) == 0.0


def test_density_range_is_checked(fd):
    with pytest.raises(DomainError):
        flux(-1.0, fd)
    with pytest.raises(DomainError):
        interface_flux(10.0, 121.0, fd)


def test_bad_diagram_or_grid_rejected():
    with pytest.raises(ConfigurationError):
        FundamentalDiagram(u_max=0.0)
    with pytest.raises(ConfigurationError):
        GridSpec(0, 10, 1.0, 1.0)


def test_cfl_violation_raises(fd):
    with pytest.raises(ConfigurationError, match="CFL"):
        check_cfl(GridSpec(10, 10, 10.0, 1.0), fd)
    check_cfl(GridSpec(10, 10, 100.0, 6.0), fd)  # exactly at the limit


def test_constant_free_flow_state_is_steady(fd, small_grid):
    sc = Scenario(np.full(small_grid.nx, 30.0), np.zeros(small_grid.nt), 0, 0)
    np.testing.assert_allclose(simulate(sc, fd, small_grid).values, 30.0, rtol=0, atol=1e-12)


def test_red_light_builds_a_queue(fd, small_grid):
    sc = Scenario(np.full(small_grid.nx, 30.0), np.full(small_grid.nt, fd.u_max), 0, 1)
    values = simulate(sc, fd, small_grid).values
    assert values[-1, -1] > 100.0
    # total vehicles only grow: inflow continues, nothing leaves
    mass = values.sum(axis=0)
    assert np.all(np.diff(mass) >= -1e-9)


def test_green_light_drains_a_jam(fd, small_grid):
    sc = Scenario(np.full(small_grid.nx, fd.u_max), np.zeros(small_grid.nt), 0, 0)
    values = simulate(sc, fd, small_grid).values
    assert values[-1, -1] < fd.u_max


def test_step_matches_hand_update(fd):
    grid = GridSpec(3, 2, 100.0, 5.0)
    row = np.array([20.0, 70.0, 40.0])
    q = [interface_flux(20.0, 20.0, fd), interface_flux(20.0, 70.0, fd),
         interface_flux(70.0, 40.0, fd), interface_flux(40.0, 0.0, fd)]
    q = np.array(q) / 3.6
    expected = row + 5.0 / 100.0 * (q[:-1] - q[1:])
    np.testing.assert_allclose(step(row, 0.0, fd, grid), expected, rtol=1e-14)


def test_batched_simulation_matches_single_runs(fd, small_grid):
    rng = np.random.default_rng(0)
    ics = rng.uniform(0, 120, (3, small_grid.nx))
    bcs = rng.choice([0.0, 120.0], (3, small_grid.nt))
    batch = simulate_arrays(ics, bcs, fd, small_grid)
    for b in range(3):
        np.testing.assert_array_equal(batch[b], simulate_arrays(ics[b], bcs[b], fd, small_grid))


@settings(max_examples=30, deadline=None)
@given(st.lists(densities, min_size=8, max_size=8), st.lists(densities, min_size=20, max_size=20))
def test_solution_stays_in_range(ic, bc):
    fd = FundamentalDiagram()
    grid = GridSpec(8, 20, 100.0, 6.0)
    values = simulate_arrays(np.array(ic), np.array(bc), fd, grid)
    assert values.min() >= -1e-9 and values.max() <= fd.u_max + 1e-9


def test_closed_boundary_conserves_mass(fd):
    grid = GridSpec(20, 200, 100.0, 5.0)
    ic = np.linspace(0, 120, 20)
    field = simulate(Scenario(ic, np.zeros(200), 0, 0), fd, grid, boundary="closed")
    np.testing.assert_allclose(field.mass, field.mass[0], rtol=1e-13)


def test_open_boundary_mass_balance(fd, small_grid):
    """Mass change equals inflow minus outflow, step by step."""
    rng = np.random.default_rng(1)
    ic = rng.uniform(0, 120, small_grid.nx)
    bc = rng.choice([0.0, 120.0], small_grid.nt)
    values = simulate_arrays(ic, bc, fd, small_grid)
    for j in range(small_grid.nt - 1):
        u = values[:, j]
        q_in = interface_flux(u[0], u[0], fd) / 3.6
        q_out = interface_flux(u[-1], bc[j], fd) / 3.6
        change = (values[:, j + 1].sum() - u.sum()) * small_grid.dx
        assert change == pytest.approx((q_in - q_out) * small_grid.dt, abs=1e-9)


def test_rarefaction_matches_exact_fan(fd):
    """Jam released into an empty road: compare with the self-similar solution."""
    grid = GridSpec(400, 241, 25.0, 1.25)
    sc = riemann_scenario(120.0, 0.0, grid)
    values = simulate(sc, fd, grid).values
    x0 = grid.nx // 2 * grid.dx
    t = grid.t_len
    xi = ((np.arange(grid.nx) + 0.5) * grid.dx - x0) / t
    # characteristic speed f'(u) = v (1 - 2u/u_max) -> u = u_max/2 (1 - xi/v)
    v = fd.v_max_ms
    exact = np.clip(0.5 * fd.u_max * (1 - xi / v), 0.0, fd.u_max)
    l1 = np.mean(np.abs(values[:, -1] - exact))
    assert l1 < 0.5


def test_simulate_rejects_bad_shapes(fd, small_grid):
    with pytest.raises(DomainError):
        simulate_arrays(np.zeros(3), np.zeros(small_grid.nt), fd, small_grid)
    with pytest.raises(DomainError):
        simulate_arrays(np.zeros(small_grid.nx), np.zeros(3), fd, small_grid)
    with pytest.raises(ConfigurationError):
        simulate_arrays(np.zeros(small_grid.nx), np.zeros(small_grid.nt), fd, small_grid,
                        boundary="periodic")


def test_density_field_validation(small_grid):
    with pytest.raises(DomainError):
        DensityField(np.zeros((2, 2)), small_grid)
    with pytest.raises(DomainError):
        DensityField(np.full(small_grid.shape, 130.0), small_grid)
    field = DensityField(np.zeros(small_grid.shape), small_grid)
    assert not field.values.flags.writeable


def test_vehicle_trajectory_moves_forward(fd, small_grid):
    sc = Scenario(np.full(small_grid.nx, 30.0), np.zeros(small_grid.nt), 0, 0)
    field = simulate(sc, fd, small_grid)
    cells = vehicle_trajectory(field, 0.0, 0.0, fd)
    xs = [i for i, _ in cells]
    ts = [j for _, j in cells]
    assert ts == list(range(len(ts)))
    assert xs == sorted(xs)
    # speed at 30 veh/km is 45 km/h = 12.5 m/s -> 62.5 m per step
    assert len(cells) == int(np.ceil(small_grid.x_len / 62.5))


def test_vehicle_stops_in_a_jam(fd, small_grid):
    field = DensityField(np.full(small_grid.shape, fd.u_max), small_grid)
    cells = vehicle_trajectory(field, 50.0, 0.0, fd)
    assert {i for i, _ in cells} == {0}
    assert len(cells) == small_grid.nt


def test_trajectory_start_outside_domain(fd, small_grid):
    field = DensityField(np.zeros(small_grid.shape), small_grid)
    with pytest.raises(DomainError):
        vehicle_trajectory(field, -1.0, 0.0, fd)
