"""Run configuration, dataset directories, checkpoints and CSV reports.

Dataset directory layout::

    manifest.json          grid, diagram, generator spec, shapes, per-sample labels
    input_00000.f64 ...    encoded inputs (4, nx, nt), little-endian float64, C order
    field_00000.f64 ...    Godunov densities (nx, nt), same encoding

Checkpoint file layout (all integers little-endian)::

    8 bytes   magic b"LWRFNOCK"
    4 bytes   uint32 format version
    8 bytes   uint64 header length H
    H bytes   UTF-8 JSON header (configs, epoch, validation MAE, tensor table)
    blobs     one per tensor in the header's order; float64 as '<f8',
              complex128 as interleaved (re, im) '<f8' pairs
"""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, FormatError
from .fno import FnoConfig, FnoParams, param_shapes
from .godunov import FundamentalDiagram, GridSpec, check_cfl
from .scenario import MAX_BC_CLASS, MAX_IC_CLASS, DatasetSpec, Sample
from .training import TrainConfig

MAGIC = b"LWRFNOCK"
CHECKPOINT_VERSION = 1
DATASET_FORMAT = "lwr-fno-dataset"
DATASET_VERSION = 1
PRESETS = ("full", "desk")
REPORT_HEADER = ("class", "mean_mae", "std_mae", "n", "mean_mae_pct")
LOSS_HEADER = ("epoch", "data_loss", "phys_loss", "total", "train_mae", "val_mae", "lr")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- run configuration ----------------------------------------------------------

@dataclass
class EvalSettings:
    samples_per_class: int = 20
    ic_classes: tuple[int, ...] = tuple(range(MAX_IC_CLASS + 1))
    bc_classes: tuple[int, ...] = tuple(range(MAX_BC_CLASS + 1))
    riemann_cases: int = 20

    def to_dict(self) -> dict:
        return {"samples_per_class": self.samples_per_class, "ic_classes": list(self.ic_classes),
                "bc_classes": list(self.bc_classes), "riemann_cases": self.riemann_cases}


@dataclass
class RunConfig:
    """Everything a CLI run needs; one ``seed`` drives data, init and shuffling."""

    fd: FundamentalDiagram = field(default_factory=FundamentalDiagram)
    grid: GridSpec = field(default_factory=lambda: GridSpec(32, 120, 100.0, 5.0))
    fno: FnoConfig = field(default_factory=FnoConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DatasetSpec = field(default_factory=DatasetSpec)
    evaluation: EvalSettings = field(default_factory=EvalSettings)
    val_fraction: float = 0.1
    lambdas: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0)
    seed: int = 0

    def validate(self) -> None:
        """Raise :class:`ConfigurationError` naming the first broken invariant."""
        check_cfl(self.grid, self.fd)
        if self.fno.grid != self.grid:
            raise ConfigurationError("model grid differs from simulation grid")
        if self.fno.u_max != self.fd.u_max:
            raise ConfigurationError(
                f"model u_max {self.fno.u_max} differs from diagram u_max {self.fd.u_max}"
            )
        if not 0 <= self.val_fraction < 1:
            raise ConfigurationError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")
        if any(lam < 0 for lam in self.lambdas):
            raise ConfigurationError("lambdas must be non-negative")
        if self.evaluation.samples_per_class < 1:
            raise ConfigurationError("evaluation.samples_per_class must be >= 1")
        # every class the run may draw must fit on the grid
        ic_top = max(self.data.ic_classes + self.evaluation.ic_classes)
        if (ic_top + 1) * self.data.min_segment > self.grid.nx:
            raise ConfigurationError(
                f"ic class {ic_top} needs {(ic_top + 1) * self.data.min_segment} cells, "
                f"grid has {self.grid.nx}"
            )
        bc_top = max(self.data.bc_classes + self.evaluation.bc_classes)
        d_lo = max(1, int(np.ceil(self.data.red_duration[0] / self.grid.dt - 1e-9)))
        gap = max(1, int(np.ceil(self.data.min_green / self.grid.dt - 1e-9)))
        needed = bc_top * d_lo + max(bc_top - 1, 0) * gap
        if needed > self.grid.nt:
            raise ConfigurationError(
                f"bc class {bc_top} needs {needed} time steps, grid has {self.grid.nt}"
            )

    def to_dict(self) -> dict:
        fno = self.fno.to_dict()
        fno.pop("grid")
        fno.pop("u_max")
        fno.pop("in_channels")
        data = self.data.to_dict()
        data.pop("seed")
        train = self.train.to_dict()
        train.pop("seed")
        return {"fd": self.fd.to_dict(), "grid": self.grid.to_dict(), "fno": fno,
                "train": train, "data": data, "evaluation": self.evaluation.to_dict(),
                "val_fraction": self.val_fraction, "lambdas": list(self.lambdas),
                "seed": self.seed}


def _section(raw: dict, name: str, allowed) -> dict:
    sub = raw.get(name, {})
    if not isinstance(sub, dict):
        raise ConfigurationError(f"config section {name!r} must be an object")
    unknown = sorted(set(sub) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown keys in {name!r}: {unknown}")
    return dict(sub)


def config_from_dict(raw: dict) -> RunConfig:
    """Build and validate a :class:`RunConfig` from parsed JSON."""
    top = {"fd", "grid", "fno", "train", "data", "evaluation", "val_fraction", "lambdas", "seed"}
    unknown = sorted(set(raw) - top)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {unknown}")
    seed = int(raw.get("seed", 0))
    try:
        fd_raw = _section(raw, "fd", ("u_max", "v_max", "q_max"))
        if "q_max" in fd_raw:
            if "v_max" in fd_raw:
                raise ConfigurationError("give either fd.v_max or fd.q_max, not both")
            fd = FundamentalDiagram.from_capacity(fd_raw.get("u_max", 120.0), fd_raw["q_max"])
        else:
            fd = FundamentalDiagram(**fd_raw)
        grid = GridSpec(**_section(raw, "grid", ("nx", "nt", "dx", "dt")))
        fno_raw = _section(raw, "fno", ("n_layers", "modes", "width", "proj_hidden",
                                        "lift_hidden", "activation", "spectral_path"))
        fno = FnoConfig(**fno_raw, u_max=fd.u_max, grid=grid)
        train = TrainConfig(**_section(raw, "train", ("lam", "epochs", "batch_size", "lr",
                                                      "lr_decay", "mode")), seed=seed)
        data = DatasetSpec(**_section(raw, "data", ("ic_classes", "bc_classes",
                                                    "samples_per_class_pair", "kind",
                                                    "min_segment", "min_jump_frac",
                                                    "red_duration", "min_green", "n_traj")),
                           seed=seed)
        ev_raw = _section(raw, "evaluation", ("samples_per_class", "ic_classes", "bc_classes",
                                              "riemann_cases"))
        for key in ("ic_classes", "bc_classes"):
            if key in ev_raw:
                ev_raw[key] = tuple(int(v) for v in ev_raw[key])
        evaluation = EvalSettings(**ev_raw)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc
    cfg = RunConfig(fd=fd, grid=grid, fno=fno, train=train, data=data, evaluation=evaluation,
                    val_fraction=float(raw.get("val_fraction", 0.1)),
                    lambdas=tuple(float(v) for v in raw.get("lambdas", (0.0, 0.5, 1.0, 2.0))),
                    seed=seed)
    cfg.validate()
    return cfg


def load_config(source) -> RunConfig:
    """Load a JSON run config from a path or a preset name (``full``, ``desk``)."""
    if str(source) in PRESETS:
        text = resources.files("lwr_fno.presets").joinpath(f"{source}.json").read_text()
    else:
        path = Path(source)
        if not path.is_file():
            raise ConfigurationError(f"config file {path} not found")
        text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    return config_from_dict(raw)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(_dumps(cfg.to_dict()))


# -- datasets -------------------------------------------------------------------

@dataclass
class Dataset:
    inputs: np.ndarray
    fields: np.ndarray
    ic_classes: np.ndarray
    bc_classes: np.ndarray
    seeds: list[int]
    manifest: dict

    def __len__(self):
        return len(self.fields)

    @property
    def labels(self) -> list[tuple[int, int]]:
        return list(zip(self.ic_classes.tolist(), self.bc_classes.tolist()))


def _write_blob(path: Path, arr: np.ndarray) -> None:
    path.write_bytes(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_blob(path: Path, shape) -> np.ndarray:
    if not path.is_file():
        raise FormatError(f"missing data file {path.name}")
    raw = path.read_bytes()
    expected = int(np.prod(shape)) * 8
    if len(raw) != expected:
        raise FormatError(f"{path.name}: {len(raw)} bytes, expected {expected} for shape {list(shape)}")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


def save_dataset(samples: list[Sample], spec: DatasetSpec, fd: FundamentalDiagram,
                 grid: GridSpec, out_dir) -> Path:
    """Write a dataset directory; identical inputs give identical bytes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not samples:
        raise ValueError("no samples to save")
    entries = []
    for i, s in enumerate(samples):
        stem = f"{i:05d}"
        _write_blob(out / f"input_{stem}.f64", s.inputs)
        _write_blob(out / f"field_{stem}.f64", s.field.values)
        entries.append({"index": i, "ic_class": s.scenario.ic_class,
                        "bc_class": s.scenario.bc_class, "seed": s.scenario.seed,
                        "input": f"input_{stem}.f64", "field": f"field_{stem}.f64"})
    manifest = {
        "format": DATASET_FORMAT, "version": DATASET_VERSION,
        "grid": grid.to_dict(), "fd": fd.to_dict(), "spec": spec.to_dict(),
        "n_samples": len(samples),
        "input_shape": list(samples[0].inputs.shape), "field_shape": list(grid.shape),
        "dtype": "<f8", "order": "C", "samples": entries,
    }
    (out / "manifest.json").write_text(_dumps(manifest))
    return out


def load_dataset(path) -> Dataset:
    root = Path(path)
    mf = root / "manifest.json"
    if not mf.is_file():
        raise FormatError(f"{root} has no manifest.json")
    manifest = json.loads(mf.read_text())
    if manifest.get("format") != DATASET_FORMAT:
        raise FormatError(f"{mf} is not a {DATASET_FORMAT} manifest")
    entries = manifest["samples"]
    if len(entries) != manifest["n_samples"]:
        raise FormatError("manifest sample count disagrees with its sample table")
    in_shape, f_shape = tuple(manifest["input_shape"]), tuple(manifest["field_shape"])
    inputs = np.stack([_read_blob(root / e["input"], in_shape) for e in entries])
    fields = np.stack([_read_blob(root / e["field"], f_shape) for e in entries])
    return Dataset(inputs, fields,
                   np.array([e["ic_class"] for e in entries], dtype=int),
                   np.array([e["bc_class"] for e in entries], dtype=int),
                   [int(e["seed"]) for e in entries], manifest)


def dataset_grid(ds: Dataset) -> tuple[GridSpec, FundamentalDiagram]:
    return GridSpec(**ds.manifest["grid"]), FundamentalDiagram(**ds.manifest["fd"])


# -- checkpoints ----------------------------------------------------------------

@dataclass
class Checkpoint:
    config: FnoConfig
    params: FnoParams
    fd: FundamentalDiagram
    train: TrainConfig
    epoch: int | None = None
    val_mae: float | None = None
    extra: dict = field(default_factory=dict)


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    ckpt.params.check(ckpt.config)
    tensors = []
    blobs = []
    for name, (shape, dtype) in param_shapes(ckpt.config).items():
        arr = ckpt.params[name]
        raw = np.ascontiguousarray(arr).view(np.float64).astype("<f8").tobytes()
        tensors.append({"name": name, "shape": list(shape), "dtype": dtype, "nbytes": len(raw)})
        blobs.append(raw)
    header = {"fno": ckpt.config.to_dict(), "fd": ckpt.fd.to_dict(), "train": ckpt.train.to_dict(),
              "epoch": ckpt.epoch, "val_mae": ckpt.val_mae, "extra": ckpt.extra,
              "tensors": tensors}
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return b"".join([MAGIC, struct.pack("<IQ", CHECKPOINT_VERSION, len(head)), head, *blobs])


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(ckpt))


def checkpoint_from_bytes(raw: bytes) -> Checkpoint:
    if raw[:8] != MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    if len(raw) < 20:
        raise FormatError("checkpoint truncated inside the preamble")
    version, head_len = struct.unpack("<IQ", raw[8:20])
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if 20 + head_len > len(raw):
        raise FormatError("checkpoint truncated inside the header")
    header = json.loads(raw[20:20 + head_len].decode())
    config = FnoConfig.from_dict(header["fno"])
    expected = param_shapes(config)
    table = header["tensors"]
    if [t["name"] for t in table] != list(expected):
        raise FormatError("checkpoint tensor table does not match its model config")
    offset = 20 + head_len
    arrays = {}
    for entry in table:
        name = entry["name"]
        shape, dtype = expected[name]
        want = int(np.prod(shape)) * np.dtype(dtype).itemsize
        if entry["nbytes"] != want:
            raise FormatError(f"tensor {name}: header says {entry['nbytes']} bytes, "
                              f"shape {list(shape)} {dtype} needs {want}")
        chunk = raw[offset:offset + want]
        if len(chunk) != want:
            raise FormatError(f"tensor {name}: blob truncated ({len(chunk)} of {want} bytes)")
        flat = np.frombuffer(chunk, dtype="<f8").astype(np.float64)
        arrays[name] = (flat.view(np.complex128) if dtype == "complex128" else flat).reshape(shape)
        offset += want
    if offset != len(raw):
        raise FormatError(f"{len(raw) - offset} trailing bytes after tensor {table[-1]['name']}")
    t = dict(header["train"])
    return Checkpoint(config, FnoParams(arrays), FundamentalDiagram(**header["fd"]),
                      TrainConfig(**t), header["epoch"], header["val_mae"], header.get("extra", {}))


def load_checkpoint(path) -> Checkpoint:
    return checkpoint_from_bytes(Path(path).read_bytes())


# -- CSV ------------------------------------------------------------------------

def write_csv(rows, header, path) -> None:
    """Write dict rows with a fixed column order; floats use ``repr``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(row[k])) if isinstance(row[k], (float, np.floating))
                             else row[k] for k in header])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_loss_csv(report, path) -> None:
    write_csv(report.rows(), LOSS_HEADER, path)


def write_report_csv(report, path) -> None:
    write_csv(report.csv_rows(), REPORT_HEADER, path)
