"""Fourier Neural Operator mapping encoded input conditions to density fields.

Architecture: a pointwise lift ``P`` from the input channels to ``width``
channels, ``n_layers`` Fourier layers

    z -> act(W z + b + Re IFFT(R . FFT(z)))

and a two-layer pointwise projection ``Q`` (``width -> proj_hidden -> 1``).
The network works on densities normalised by ``u_max`` and scales its output
back to veh/km.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .exceptions import ConfigurationError
from .godunov import GridSpec

IN_CHANNELS = 4
SPECTRAL_PATHS = ("pruned", "full")


@dataclass(frozen=True)
class FnoConfig:
    """Architecture hyper-parameters.

    ``spectral_path="pruned"`` evaluates only the retained Fourier modes with
    small dense DFTs; ``"full"`` runs the complete mixed-radix ``fft2`` and
    zeroes the discarded modes. Both compute the same map.
    """

    n_layers: int = 4
    modes: tuple[int, int] = (8, 16)
    width: int = 16
    proj_hidden: int = 128
    lift_hidden: int | None = None
    in_channels: int = IN_CHANNELS
    activation: str = "gelu"
    u_max: float = 120.0
    grid: GridSpec | None = None
    spectral_path: str = "pruned"

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(int(m) for m in self.modes))
        counts = {"n_layers": self.n_layers, "width": self.width, "proj_hidden": self.proj_hidden,
                  "in_channels": self.in_channels, "m_x": self.modes[0], "m_t": self.modes[1]}
        if self.lift_hidden is not None:
            counts["lift_hidden"] = self.lift_hidden
        for name, value in counts.items():
            if int(value) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {value}")
        if self.activation not in ad.ACTIVATIONS:
            raise ConfigurationError(f"activation must be one of {sorted(ad.ACTIVATIONS)}")
        if self.spectral_path not in SPECTRAL_PATHS:
            raise ConfigurationError(f"spectral_path must be one of {SPECTRAL_PATHS}")
        if self.grid is not None:
            self.check_grid(self.grid.nx, self.grid.nt)

    def check_grid(self, nx: int, nt: int) -> None:
        m_x, m_t = self.modes
        if m_x > nx or m_t > nt:
            raise ConfigurationError(f"modes ({m_x}, {m_t}) exceed grid ({nx}, {nt})")

    def to_dict(self) -> dict:
        return {
            "n_layers": self.n_layers, "modes": list(self.modes), "width": self.width,
            "proj_hidden": self.proj_hidden, "lift_hidden": self.lift_hidden,
            "in_channels": self.in_channels, "activation": self.activation,
            "u_max": self.u_max, "spectral_path": self.spectral_path,
            "grid": None if self.grid is None else self.grid.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FnoConfig":
        d = dict(d)
        if d.get("grid") is not None:
            d["grid"] = GridSpec(**d["grid"])
        return cls(**d)


def param_shapes(config: FnoConfig) -> dict[str, tuple[tuple[int, ...], str]]:
    """Name -> (shape, dtype) in the fixed serialisation order."""
    w, h = config.width, config.proj_hidden
    m_x, m_t = config.modes
    shapes = {}
    if config.lift_hidden is None:
        shapes["lift.w"] = ((w, config.in_channels), "float64")
        shapes["lift.b"] = ((w,), "float64")
    else:
        lh = config.lift_hidden
        shapes["lift.w"] = ((lh, config.in_channels), "float64")
        shapes["lift.b"] = ((lh,), "float64")
        shapes["lift.w2"] = ((w, lh), "float64")
        shapes["lift.b2"] = ((w,), "float64")
    for layer in range(config.n_layers):
        shapes[f"layer{layer}.w"] = ((w, w), "float64")
        shapes[f"layer{layer}.b"] = ((w,), "float64")
        shapes[f"layer{layer}.r"] = ((w, w, m_x, m_t), "complex128")
    shapes["proj.w1"] = ((h, w), "float64")
    shapes["proj.b1"] = ((h,), "float64")
    shapes["proj.w2"] = ((1, h), "float64")
    shapes["proj.b2"] = ((1,), "float64")
    return shapes


def param_count(config: FnoConfig) -> int:
    """Number of real scalars (a complex entry counts twice)."""
    total = 0
    for shape, dtype in param_shapes(config).values():
        total += int(np.prod(shape)) * (2 if dtype == "complex128" else 1)
    return total


@dataclass(eq=False)
class FnoParams:
    """Trainable arrays keyed by name, in :func:`param_shapes` order."""

    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name):
        return self.arrays[name]

    def __iter__(self):
        return iter(self.arrays)

    def __len__(self):
        return len(self.arrays)

    def items(self):
        return self.arrays.items()

    def copy(self) -> "FnoParams":
        return FnoParams({k: v.copy() for k, v in self.arrays.items()})

    def count(self) -> int:
        return sum(v.size * (2 if np.iscomplexobj(v) else 1) for v in self.arrays.values())

    def check(self, config: FnoConfig) -> None:
        expected = param_shapes(config)
        if list(expected) != list(self.arrays):
            raise ConfigurationError(
                f"parameter names {list(self.arrays)} do not match config {list(expected)}"
            )
        for name, (shape, dtype) in expected.items():
            arr = self.arrays[name]
            if arr.shape != shape or arr.dtype != np.dtype(dtype):
                raise ConfigurationError(
                    f"parameter {name}: got {arr.shape}/{arr.dtype}, expected {shape}/{dtype}"
                )

    def equal(self, other: "FnoParams") -> bool:
        return (list(self) == list(other)
                and all(np.array_equal(self[k], other[k]) for k in self))


def init_params(config: FnoConfig, rng: np.random.Generator) -> FnoParams:
    """Uniform init: weights and biases in ``+-1/sqrt(fan_in)``, spectral
    weights ``(U[0,1) + i U[0,1)) / width**2``."""
    arrays = {}
    for name, (shape, dtype) in param_shapes(config).items():
        if dtype == "complex128":
            scale = 1.0 / (config.width * config.width)
            arrays[name] = scale * (rng.random(shape) + 1j * rng.random(shape))
            continue
        if name.split(".")[1].startswith("b"):
            fan_in = arrays[name.replace(".b", ".w")].shape[1]
        else:
            fan_in = shape[1]
        bound = 1.0 / np.sqrt(fan_in)
        arrays[name] = rng.uniform(-bound, bound, size=shape)
    return FnoParams(arrays)


def zero_params(config: FnoConfig) -> FnoParams:
    return FnoParams({name: np.zeros(shape, dtype=dtype)
                      for name, (shape, dtype) in param_shapes(config).items()})


def encode_input(scenario, grid: GridSpec, u_max: float) -> np.ndarray:
    """Four-channel ``(4, nx, nt)`` encoding of a scenario's known data.

    Channel 0 holds known densities divided by ``u_max``: the initial
    condition in time level 0, plus the exit boundary series in the last cell
    (forward problems) or the observed densities on trajectory cells (inverse
    problems, read from ``scenario.obs_values``).
    Channel 1 flags the known cells, channels 2 and 3 are the ``x`` and ``t``
    coordinates scaled to ``[0, 1]``.
    """
    nx, nt = grid.nx, grid.nt
    values = np.zeros((nx, nt))
    known = np.zeros((nx, nt), dtype=bool)
    if scenario.kind == "inverse":
        mask = np.asarray(scenario.obs_mask, dtype=bool)
        obs = scenario.obs_values
        if obs is None:
            raise ConfigurationError("inverse scenario needs obs_values to be encoded")
        values[mask] = np.asarray(obs)[mask] / u_max
        known |= mask
    else:
        values[nx - 1, :] = np.asarray(scenario.bc) / u_max
        known[nx - 1, :] = True
    # the initial condition wins at the shared corner cell
    values[:, 0] = np.asarray(scenario.ic) / u_max
    known[:, 0] = True

    xs = np.linspace(0.0, 1.0, nx) if nx > 1 else np.zeros(1)
    ts = np.linspace(0.0, 1.0, nt) if nt > 1 else np.zeros(1)
    out = np.empty((IN_CHANNELS, nx, nt))
    out[0] = values
    out[1] = known
    out[2] = xs[:, None]
    out[3] = ts[None, :]
    return out


def to_tensors(params: FnoParams, requires_grad: bool = False) -> dict[str, ad.Tensor]:
    return {k: ad.Tensor(v, requires_grad=requires_grad, name=k) for k, v in params.items()}


def fourier_layer(z, w, b, r, config: FnoConfig) -> ad.Tensor:
    """One Fourier layer on a ``([B,] width, nx, nt)`` latent field."""
    act = ad.ACTIVATIONS[config.activation]
    nx, nt = z.shape[-2:]
    local = ad.pointwise_linear(z, w, b)
    if config.spectral_path == "pruned":
        m_x, m_t = r.shape[-2:]
        spectral = ad.truncated_irfft2(ad.block_multiply(ad.truncated_fft2(z, m_x, m_t), r), nx, nt)
    else:
        spectral = ad.real(ad.ifft2(ad.spectral_multiply(ad.fft2(z), r)))
    return act(ad.add(local, spectral))


def forward_tensor(a, tensors: dict[str, ad.Tensor], config: FnoConfig) -> ad.Tensor:
    """Differentiable forward pass; returns densities in veh/km, unclamped.

    Args:
        a: encoded inputs ``(B, in_channels, nx, nt)`` or ``(in_channels, nx, nt)``.
    """
    act = ad.ACTIVATIONS[config.activation]
    a = ad.as_tensor(a)
    if a.shape[-3] != config.in_channels:
        raise ConfigurationError(
            f"input has {a.shape[-3]} channels, config expects {config.in_channels}"
        )
    config.check_grid(*a.shape[-2:])
    if config.lift_hidden is None:
        z = ad.pointwise_linear(a, tensors["lift.w"], tensors["lift.b"])
    else:
        z = act(ad.pointwise_linear(a, tensors["lift.w"], tensors["lift.b"]))
        z = ad.pointwise_linear(z, tensors["lift.w2"], tensors["lift.b2"])
    for layer in range(config.n_layers):
        z = fourier_layer(z, tensors[f"layer{layer}.w"], tensors[f"layer{layer}.b"],
                          tensors[f"layer{layer}.r"], config)
    h = act(ad.pointwise_linear(z, tensors["proj.w1"], tensors["proj.b1"]))
    y = ad.pointwise_linear(h, tensors["proj.w2"], tensors["proj.b2"])
    # drop the singleton channel axis
    y = ad.reshape(y, y.shape[:-3] + y.shape[-2:])
    return ad.scale(y, config.u_max)


def forward(a, params: FnoParams, config: FnoConfig) -> np.ndarray:
    """Predicted density (veh/km) of shape ``(nx, nt)`` or ``(B, nx, nt)``."""
    params.check(config)
    return forward_tensor(np.asarray(a, dtype=np.float64), to_tensors(params), config).data
