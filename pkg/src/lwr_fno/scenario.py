"""Graded families of initial/boundary conditions and trajectory observations.

Complexity classes:

* ``i_k`` -- piecewise-constant initial density with exactly ``k`` jumps
  (``k + 1`` segments), ``0 <= k <= 9``.
* ``b_m`` -- exit boundary density that is free flow (0) except for exactly
  ``m`` red-light pulses at ``u_max``, ``0 <= m <= 8``.

Randomness comes from numpy's PCG64 bit generator. Every scenario owns a
substream seeded with ``seed ^ index`` so any sample can be regenerated on its
own, independent of generation order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import ConfigurationError, DomainError
from .godunov import DensityField, FundamentalDiagram, GridSpec, simulate, vehicle_trajectory

MAX_IC_CLASS = 9
MAX_BC_CLASS = 8
KINDS = ("forward", "inverse")

# evaluation scenarios are drawn from a disjoint seed namespace: substream
# indices below this tag belong to training data
EVAL_NAMESPACE = 1 << 62
_MASK64 = (1 << 64) - 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & _MASK64))


def substream_seed(seed: int, index: int, namespace: int = 0) -> int:
    """Seed of the ``index``-th per-scenario substream."""
    if not 0 <= index < EVAL_NAMESPACE:
        raise ValueError(f"substream index {index} out of range")
    return (int(seed) ^ (namespace | int(index))) & _MASK64


def is_eval_seed(seed: int, base_seed: int) -> bool:
    return bool(((int(seed) ^ int(base_seed)) & _MASK64) & EVAL_NAMESPACE)


@dataclass(eq=False)
class Scenario:
    """Input conditions of one LWR problem instance."""

    ic: np.ndarray
    bc: np.ndarray
    ic_class: int
    bc_class: int
    kind: str = "forward"
    obs_mask: np.ndarray | None = None
    seed: int = 0
    # true densities on the observed cells (zero elsewhere); inverse only
    obs_values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        self.ic = np.asarray(self.ic, dtype=np.float64)
        self.bc = np.asarray(self.bc, dtype=np.float64)
        if self.kind == "forward" and self.obs_mask is not None and np.any(self.obs_mask):
            raise ConfigurationError("forward scenarios carry no observation mask")
        if self.obs_mask is not None:
            self.obs_mask = np.asarray(self.obs_mask, dtype=bool)


@dataclass
class DatasetSpec:
    """Which class pairs to generate, and how many samples per pair.

    The generator knobs (segment length, level separation, pulse timing,
    trajectory count) are configurable defaults.
    """

    ic_classes: tuple[int, ...] = (0, 1, 2, 3)
    bc_classes: tuple[int, ...] = (0, 1, 2)
    samples_per_class_pair: int = 20
    kind: str = "forward"
    seed: int = 0
    min_segment: int = 3
    min_jump_frac: float = 0.05
    red_duration: tuple[float, float] = (30.0, 120.0)
    min_green: float = 30.0
    n_traj: int = 10

    def __post_init__(self):
        self.ic_classes = tuple(int(k) for k in self.ic_classes)
        self.bc_classes = tuple(int(m) for m in self.bc_classes)
        self.red_duration = tuple(float(d) for d in self.red_duration)
        if not self.ic_classes or not self.bc_classes:
            raise ConfigurationError("class sets must be non-empty")
        if self.samples_per_class_pair < 1:
            raise ConfigurationError("samples_per_class_pair must be > 0")
        if self.kind not in KINDS:
            raise ConfigurationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        for k in self.ic_classes:
            _check_class(k, MAX_IC_CLASS, "ic")
        for m in self.bc_classes:
            _check_class(m, MAX_BC_CLASS, "bc")

    @property
    def n_samples(self) -> int:
        return len(self.ic_classes) * len(self.bc_classes) * self.samples_per_class_pair

    def to_dict(self) -> dict:
        return {
            "ic_classes": list(self.ic_classes),
            "bc_classes": list(self.bc_classes),
            "samples_per_class_pair": self.samples_per_class_pair,
            "kind": self.kind,
            "seed": self.seed,
            "min_segment": self.min_segment,
            "min_jump_frac": self.min_jump_frac,
            "red_duration": list(self.red_duration),
            "min_green": self.min_green,
            "n_traj": self.n_traj,
        }


def _check_class(value: int, upper: int, name: str) -> None:
    if not 0 <= value <= upper:
        raise DomainError(f"{name} class {value} outside [0, {upper}]")


def count_discontinuities(profile) -> int:
    """Number of adjacent-cell jumps in a piecewise-constant profile."""
    profile = np.asarray(profile)
    return int(np.count_nonzero(profile[1:] != profile[:-1]))


def count_pulses(series, level: float) -> int:
    """Number of maximal runs where ``series == level``."""
    on = np.asarray(series) == level
    return int(on[0]) + int(np.count_nonzero(on[1:] & ~on[:-1])) if on.size else 0


def _random_composition(rng, total: int, parts: int) -> np.ndarray:
    """Uniformly random split of ``total`` into ``parts`` non-negative integers."""
    if parts == 1:
        return np.array([total])
    bars = np.sort(rng.choice(total + parts - 1, parts - 1, replace=False))
    edges = np.concatenate([[-1], bars, [total + parts - 1]])
    return np.diff(edges) - 1


def gen_initial(class_k: int, rng: np.random.Generator, nx: int, u_max: float, *,
                min_segment: int = 3, min_jump_frac: float = 0.05) -> np.ndarray:
    """Piecewise-constant initial density with exactly ``class_k`` jumps."""
    _check_class(class_k, MAX_IC_CLASS, "ic")
    n_seg = class_k + 1
    if n_seg * min_segment > nx:
        raise DomainError(
            f"{nx} cells cannot hold {n_seg} segments of at least {min_segment} cells"
        )
    lengths = min_segment + _random_composition(rng, nx - n_seg * min_segment, n_seg)

    gap = min_jump_frac * u_max
    levels = [rng.uniform(0.0, u_max)]
    for _ in range(class_k):
        prev = levels[-1]
        lo_len = max(prev - gap, 0.0)
        hi_start = min(prev + gap, u_max)
        draw = rng.uniform(0.0, lo_len + (u_max - hi_start))
        levels.append(draw if draw < lo_len else hi_start + (draw - lo_len))
    return np.repeat(np.asarray(levels), lengths)


def gen_boundary(class_m: int, rng: np.random.Generator, grid: GridSpec, u_max: float, *,
                 red_duration: tuple[float, float] = (30.0, 120.0),
                 min_green: float = 30.0) -> np.ndarray:
    """Exit density series with exactly ``class_m`` red pulses at ``u_max``.

    Red durations are uniform integers (in steps) between ``red_duration``
    bounds; when ``class_m`` pulses cannot all reach the upper bound, it is
    lowered to an even share of the horizon. Leftover green time is split
    uniformly among the leading, in-between and trailing gaps.
    """
    _check_class(class_m, MAX_BC_CLASS, "bc")
    bc = np.zeros(grid.nt)
    if class_m == 0:
        return bc
    d_lo = max(1, math.ceil(red_duration[0] / grid.dt - 1e-9))
    d_hi = max(d_lo, math.floor(red_duration[1] / grid.dt + 1e-9))
    gap = max(1, math.ceil(min_green / grid.dt - 1e-9))
    needed = class_m * d_lo + (class_m - 1) * gap
    if needed > grid.nt:
        raise DomainError(
            f"horizon of {grid.nt} steps too short for {class_m} pulses "
            f"(needs at least {needed})"
        )
    d_hi = min(d_hi, (grid.nt - (class_m - 1) * gap) // class_m)
    durations = rng.integers(d_lo, d_hi + 1, size=class_m)
    slack = grid.nt - int(durations.sum()) - (class_m - 1) * gap
    extra = _random_composition(rng, slack, class_m + 1)

    t = int(extra[0])
    for p in range(class_m):
        bc[t:t + durations[p]] = u_max
        t += int(durations[p]) + gap + int(extra[p + 1])
    return bc


def gen_observations(field: DensityField, n_traj: int, rng: np.random.Generator,
                     fd: FundamentalDiagram) -> np.ndarray:
    """Boolean ``(nx, nt)`` mask of cells visited by ``n_traj`` random vehicles.

    Start points are uniform over the ``t = 0`` edge and the ``x = 0`` edge
    combined (edge picked in proportion to its cell count).
    """
    if n_traj < 1:
        raise DomainError(f"n_traj must be >= 1, got {n_traj}")
    grid = field.grid
    mask = np.zeros(grid.shape, dtype=bool)
    p_initial = grid.nx / (grid.nx + grid.nt)
    for _ in range(n_traj):
        if rng.uniform() < p_initial:
            x0, t0 = rng.uniform(0.0, grid.x_len), 0.0
        else:
            x0, t0 = 0.0, rng.uniform(0.0, grid.t_len)
        for i, j in vehicle_trajectory(field, x0, t0, fd):
            mask[i, j] = True
    return mask


def make_scenario(ic_class: int, bc_class: int, seed: int, spec: DatasetSpec,
                  fd: FundamentalDiagram, grid: GridSpec):
    """Generate one scenario from its own substream seed and solve it.

    Returns:
        ``(scenario, field)``.
    """
    rng = make_rng(seed)
    ic = gen_initial(ic_class, rng, grid.nx, fd.u_max,
                     min_segment=spec.min_segment, min_jump_frac=spec.min_jump_frac)
    bc = gen_boundary(bc_class, rng, grid, fd.u_max,
                      red_duration=spec.red_duration, min_green=spec.min_green)
    scenario = Scenario(ic, bc, ic_class, bc_class, "forward", None, seed)
    solution = simulate(scenario, fd, grid)
    if spec.kind == "inverse":
        scenario.kind = "inverse"
        scenario.obs_mask = gen_observations(solution, spec.n_traj, rng, fd)
        scenario.obs_values = np.where(scenario.obs_mask, solution.values, 0.0)
    return scenario, solution


class Sample(NamedTuple):
    inputs: np.ndarray
    field: DensityField
    scenario: Scenario


def build_dataset(spec: DatasetSpec, fd: FundamentalDiagram, grid: GridSpec,
                  namespace: int = 0) -> list[Sample]:
    """Generate, solve and encode every (ic class, bc class, sample) triple.

    Samples are ordered by ic class, then bc class, then sample number; the
    running position in that order is the substream index.
    """
    from .fno import encode_input

    samples = []
    index = 0
    for k in spec.ic_classes:
        for m in spec.bc_classes:
            for _ in range(spec.samples_per_class_pair):
                seed = substream_seed(spec.seed, index, namespace)
                scenario, solution = make_scenario(k, m, seed, spec, fd, grid)
                samples.append(Sample(encode_input(scenario, grid, fd.u_max), solution, scenario))
                index += 1
    return samples


def riemann_scenario(u_left: float, u_right: float, grid: GridSpec, *,
                     split: int | None = None, bc: float | None = None) -> Scenario:
    """Single-jump initial condition with a constant exit density.

    The exit density defaults to ``u_right`` so the boundary does not launch
    a second wave.
    """
    split = grid.nx // 2 if split is None else split
    ic = np.where(np.arange(grid.nx) < split, float(u_left), float(u_right))
    bc_value = u_right if bc is None else bc
    return Scenario(ic, np.full(grid.nt, float(bc_value)), 1 if u_left != u_right else 0,
                    0, "forward", None, 0)
