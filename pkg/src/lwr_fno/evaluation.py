"""Generalisation benchmark: per-class error, trendline slopes, profile exports."""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .exceptions import DomainError
from .godunov import FundamentalDiagram, GridSpec, simulate
from .fno import encode_input
from .scenario import (EVAL_NAMESPACE, DatasetSpec, make_scenario, substream_seed)

TRAIN_IC_CLASSES = (0, 1, 2, 3)
TRAIN_BC_CLASSES = (0, 1, 2)
# knots sit at the last class seen in training
IC_KNOT = TRAIN_IC_CLASSES[-1]
BC_KNOT = TRAIN_BC_CLASSES[-1]

_LABEL = re.compile(r"^([ib])(\d+)$")


def mae(pred, truth) -> float:
    """Mean absolute cellwise difference in veh/km."""
    pred, truth = np.asarray(pred, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    return float(np.mean(np.abs(pred - truth)))


def parse_classes(spec) -> list[str]:
    """Expand ``"i0..i9"``, ``"b3,b5"`` or a list of labels into labels."""
    if isinstance(spec, str):
        labels = []
        for part in spec.split(","):
            part = part.strip()
            if ".." in part:
                lo, hi = part.split("..")
                m_lo, m_hi = _LABEL.match(lo), _LABEL.match(hi)
                if not (m_lo and m_hi) or m_lo.group(1) != m_hi.group(1):
                    raise ValueError(f"bad class range {part!r}")
                axis = m_lo.group(1)
                labels += [f"{axis}{k}" for k in range(int(m_lo.group(2)), int(m_hi.group(2)) + 1)]
            elif part:
                labels.append(part)
        spec = labels
    out = []
    for label in spec:
        if not _LABEL.match(label):
            raise ValueError(f"class label must look like i3 or b2, got {label!r}")
        out.append(label)
    return out


@dataclass
class ClassRow:
    label: str
    mean_mae: float
    std_mae: float
    n: int
    maes: list[float] = field(default_factory=list, repr=False)

    @property
    def axis(self) -> str:
        return self.label[0]

    @property
    def index(self) -> int:
        return int(self.label[1:])


@dataclass
class EvalReport:
    """Per-class error table plus the fitted trendline for one axis."""

    rows: list[ClassRow]
    u_max: float
    model_tag: str = "pi_fno"
    problem_tag: str = "forward"
    level: float | None = None
    slope: float | None = None

    def csv_rows(self):
        """Rows for ``class,mean_mae,std_mae,n,mean_mae_pct``."""
        for r in self.rows:
            yield {"class": r.label, "mean_mae": r.mean_mae, "std_mae": r.std_mae, "n": r.n,
                   "mean_mae_pct": percent_of_umax(r.mean_mae, self.u_max)}

    def to_dict(self) -> dict:
        return {"model": self.model_tag, "problem": self.problem_tag, "u_max": self.u_max,
                "level": self.level, "slope": self.slope,
                "slope_pct": None if self.slope is None else percent_of_umax(self.slope, self.u_max),
                "rows": list(self.csv_rows())}


def percent_of_umax(value: float, u_max: float) -> float:
    return value * 100.0 / u_max


def class_samples(labels, samples_per_class: int, fd: FundamentalDiagram, grid: GridSpec,
                  seed: int = 0, spec: DatasetSpec | None = None):
    """Held-out scenarios for each class label, from the evaluation seed namespace.

    An ``iK`` class pairs initial class ``K`` with the training boundary
    classes (b0-b2, cycled); a ``bM`` class pairs boundary class ``M`` with
    the training initial classes (i0-i3, cycled).

    Returns:
        ``{label: (inputs, fields, scenarios)}`` with stacked arrays.
    """
    if samples_per_class < 1:
        raise DomainError("samples_per_class must be >= 1")
    spec = spec or DatasetSpec(seed=seed)
    out = {}
    index = 0
    for label in parse_classes(labels):
        axis, k = label[0], int(label[1:])
        inputs, truths, scenarios = [], [], []
        for s in range(samples_per_class):
            if axis == "i":
                ic_class, bc_class = k, TRAIN_BC_CLASSES[s % len(TRAIN_BC_CLASSES)]
            else:
                ic_class, bc_class = TRAIN_IC_CLASSES[s % len(TRAIN_IC_CLASSES)], k
            scenario_seed = substream_seed(seed, index, EVAL_NAMESPACE)
            index += 1
            scenario, truth = make_scenario(ic_class, bc_class, scenario_seed, spec, fd, grid)
            inputs.append(encode_input(scenario, grid, fd.u_max))
            truths.append(truth.values)
            scenarios.append(scenario)
        out[label] = (np.stack(inputs), np.stack(truths), scenarios)
    return out


def evaluate_classes(model, fd: FundamentalDiagram, grid: GridSpec, classes, samples_per_class: int,
                     seed: int = 0, spec: DatasetSpec | None = None) -> EvalReport:
    """Mean/std MAE per complexity class on freshly generated scenarios.

    Scenarios come from :func:`class_samples`, so their seeds never coincide
    with training seeds. The trendline is fitted when all labels share one
    axis and there are two or more classes on each side of the knot.

    Args:
        model: anything with ``predict(inputs) -> fields`` (veh/km).
        spec: generator knobs and problem kind; class fields are ignored.
    """
    spec = spec or DatasetSpec(seed=seed)
    rows = []
    for label, (inputs, truths, _) in class_samples(classes, samples_per_class, fd, grid,
                                                    seed, spec).items():
        preds = model.predict(inputs)
        maes = [mae(p, t) for p, t in zip(preds, truths)]
        rows.append(ClassRow(label, float(np.mean(maes)), float(np.std(maes)), len(maes), maes))

    report = EvalReport(rows, fd.u_max, getattr(model, "model_tag", "pi_fno"), spec.kind)
    axes = {r.axis for r in rows}
    if len(axes) == 1:
        knot = IC_KNOT if axes == {"i"} else BC_KNOT
        idx = [r.index for r in rows]
        if sum(i <= knot for i in idx) >= 2 and sum(i > knot for i in idx) >= 2:
            report.level, report.slope = fit_trendline(idx, [r.mean_mae for r in rows], knot)
    return report


def fit_trendline(class_indices, mae_means, knot: float) -> tuple[float, float]:
    """Continuous two-segment least-squares fit.

    Model: ``level`` for classes ``<= knot`` and ``level + slope * (c - knot)``
    beyond it.

    Returns:
        ``(level, slope)``; the slope is the generalisation error rate.
    """
    c = np.asarray(class_indices, dtype=np.float64)
    y = np.asarray(mae_means, dtype=np.float64)
    if c.shape != y.shape:
        raise ValueError("class_indices and mae_means differ in length")
    if np.count_nonzero(c <= knot) < 2 or np.count_nonzero(c > knot) < 2:
        raise DomainError("trendline needs at least two points on each side of the knot")
    design = np.column_stack([np.ones_like(c), np.maximum(c - knot, 0.0)])
    (level, slope), *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(level), float(slope)


def spearman(x, y) -> float:
    return float(spearmanr(x, y).statistic)


def export_profiles(model, scenario, times, fd: FundamentalDiagram, grid: GridSpec) -> list[dict]:
    """Spatial slices of the true and predicted fields at the given times (s).

    Returns:
        ``len(times) * nx`` rows with keys ``t, x, u_true, u_pred``; ``x`` is
        the cell centre in metres.
    """
    truth = simulate(scenario, fd, grid).values
    pred = model.predict(encode_input(scenario, grid, fd.u_max)[None])[0]
    xs = (np.arange(grid.nx) + 0.5) * grid.dx
    rows = []
    for t in times:
        j = int(round(t / grid.dt))
        if not 0 <= j < grid.nt:
            raise DomainError(f"time {t} s outside the horizon {grid.t_len} s")
        for i in range(grid.nx):
            rows.append({"t": j * grid.dt, "x": float(xs[i]),
                         "u_true": float(truth[i, j]), "u_pred": float(pred[i, j])})
    return rows


def total_variation(profile) -> float:
    return float(np.sum(np.abs(np.diff(np.asarray(profile, dtype=np.float64)))))


def oscillation_index(profile, true_profile) -> float:
    """``|TV(profile) - TV(true_profile)|``: excess (or missing) variation."""
    return abs(total_variation(profile) - total_variation(true_profile))


def shock_oscillation(model, scenarios, times, fd: FundamentalDiagram, grid: GridSpec) -> np.ndarray:
    """Per-scenario oscillation index, averaged over the requested times."""
    out = []
    for scenario in scenarios:
        rows = export_profiles(model, scenario, times, fd, grid)
        values = []
        for k in range(len(times)):
            chunk = rows[k * grid.nx:(k + 1) * grid.nx]
            values.append(oscillation_index([r["u_pred"] for r in chunk],
                                            [r["u_true"] for r in chunk]))
        out.append(float(np.mean(values)))
    return np.asarray(out)
