"""Command-line entry point: ``lwr-fno <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .estimator import FNORegressor
from .evaluation import evaluate_classes
from .exceptions import ConfigurationError, DomainError, FormatError
from .fno import init_params
from .godunov import simulate
from .gradcheck import DEFAULT_TOL, run_suite
from .scenario import DatasetSpec, Scenario, build_dataset, make_rng, make_scenario
from .training import TrainConfig, lambda_sweep, stratified_split

logger = logging.getLogger("lwr_fno")


def _log_config(cfg: io.RunConfig, **extra) -> None:
    resolved = cfg.to_dict()
    resolved.update(extra)
    logger.info("resolved config: %s", json.dumps(resolved, sort_keys=True))
    logger.info("seed: %d", cfg.seed)


def _load_run_config(args) -> io.RunConfig:
    cfg = io.load_config(args.config)
    if getattr(args, "seed", None) is not None:
        raw = cfg.to_dict()
        raw["seed"] = args.seed
        cfg = io.config_from_dict(raw)
    return cfg


def _load_matching_dataset(path, cfg: io.RunConfig) -> io.Dataset:
    ds = io.load_dataset(path)
    grid, fd = io.dataset_grid(ds)
    if grid != cfg.grid or fd != cfg.fd:
        raise ConfigurationError(
            f"dataset grid/diagram ({grid}, {fd}) differs from config ({cfg.grid}, {cfg.fd})"
        )
    return ds


def _estimator(cfg: io.RunConfig, **overrides) -> FNORegressor:
    f, t = cfg.fno, cfg.train
    params = dict(n_layers=f.n_layers, modes=f.modes, width=f.width, proj_hidden=f.proj_hidden,
                  lift_hidden=f.lift_hidden, activation=f.activation,
                  spectral_path=f.spectral_path, mode=t.mode, lam=t.lam, epochs=t.epochs,
                  batch_size=t.batch_size, lr=t.lr, lr_decay=t.lr_decay,
                  val_fraction=cfg.val_fraction, u_max=cfg.fd.u_max, v_max=cfg.fd.v_max,
                  dx=cfg.grid.dx, dt=cfg.grid.dt, random_state=cfg.seed)
    params.update(overrides)
    return FNORegressor(**params)


# -- subcommands ------------------------------------------------------------------

def cmd_generate_data(args) -> int:
    cfg = _load_run_config(args)
    spec = cfg.data
    if args.kind:
        spec = DatasetSpec(**{**spec.to_dict(), "kind": args.kind})
    _log_config(cfg, kind=spec.kind)
    samples = build_dataset(spec, cfg.fd, cfg.grid)
    out = io.save_dataset(samples, spec, cfg.fd, cfg.grid, args.out)
    logger.info("wrote %d samples to %s", len(samples), out)
    return 0


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    overrides = {}
    if args.lam is not None:
        overrides["lam"] = args.lam
    if args.mode is not None:
        overrides["mode"] = args.mode
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    _log_config(cfg, **overrides)
    ds = _load_matching_dataset(args.data, cfg)
    est = _estimator(cfg, **overrides).fit(ds.inputs, ds.fields, groups=ds.labels)
    report = est.loss_report_
    val = min(report.val_mae) if report.val_mae else None
    ckpt = io.Checkpoint(est.config_, est.params_, est.fd_, est.train_config_,
                         report.best_epoch, val, {"data": ds.manifest["spec"]})
    io.save_checkpoint(ckpt, args.out)
    loss_csv = args.loss_csv or f"{args.out}.loss.csv"
    io.write_loss_csv(report, loss_csv)
    logger.info("checkpoint %s (epoch %s, val MAE %s), losses %s",
                args.out, report.best_epoch, val, loss_csv)
    return 0


def cmd_lambda_sweep(args) -> int:
    cfg = _load_run_config(args)
    lambdas = ([float(v) for v in args.lambdas.split(",")] if args.lambdas
               else list(cfg.lambdas))
    _log_config(cfg, lambdas=lambdas)
    ds = _load_matching_dataset(args.data, cfg)
    tr, va = stratified_split(ds.labels, cfg.val_fraction, cfg.seed)
    if not len(va):
        raise ConfigurationError("lambda sweep needs val_fraction > 0")
    init = init_params(cfg.fno, make_rng(cfg.seed))
    base = cfg.train if args.epochs is None else TrainConfig(
        **{**cfg.train.to_dict(), "epochs": args.epochs})
    best, table, _ = lambda_sweep(cfg.fno, init, (ds.inputs[tr], ds.fields[tr]),
                                  (ds.inputs[va], ds.fields[va]), lambdas, base, cfg.fd, cfg.grid)
    rows = [{"lambda": lam, "best_val_mae": mae, "selected": int(lam == best)}
            for lam, mae in table.items()]
    out = args.out or "lambda_sweep.csv"
    io.write_csv(rows, ("lambda", "best_val_mae", "selected"), out)
    logger.info("best lambda %g; table written to %s", best, out)
    print(best)
    return 0


def cmd_evaluate(args) -> int:
    ckpt = io.load_checkpoint(args.ckpt)
    est = FNORegressor.from_fitted(ckpt.config, ckpt.params, ckpt.fd, ckpt.train)
    spec_raw = dict(ckpt.extra.get("data", {}))
    spec_raw.pop("seed", None)
    if args.kind:
        spec_raw["kind"] = args.kind
    spec = DatasetSpec(**spec_raw, seed=args.seed)
    logger.info("evaluating %s on %s, %d samples/class, seed %d, kind %s",
                args.ckpt, args.classes, args.samples, args.seed, spec.kind)
    report = evaluate_classes(est, ckpt.fd, ckpt.config.grid, args.classes, args.samples,
                              seed=args.seed, spec=spec)
    io.write_report_csv(report, args.out)
    summary = Path(args.out).with_suffix(".json")
    summary.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    logger.info("report %s, summary %s, slope %s", args.out, summary, report.slope)
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_run_config(args)
    _log_config(cfg, ic_class=args.ic_class, bc_class=args.bc_class)
    scenario, field = make_scenario(args.ic_class, args.bc_class, cfg.seed, cfg.data,
                                    cfg.fd, cfg.grid)
    if args.constant_ic is not None:
        scenario = Scenario(np.full(cfg.grid.nx, args.constant_ic), scenario.bc, 0,
                            scenario.bc_class, "forward", None, scenario.seed)
        field = simulate(scenario, cfg.fd, cfg.grid)
    out = Path(args.out)
    out.write_bytes(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    meta = {"shape": list(cfg.grid.shape), "dtype": "<f8", "order": "C",
            "grid": cfg.grid.to_dict(), "fd": cfg.fd.to_dict(), "seed": cfg.seed,
            "ic_class": scenario.ic_class, "bc_class": scenario.bc_class}
    Path(f"{out}.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    logger.info("wrote %s", out)
    return 0


def cmd_gradcheck(args) -> int:
    ok = True
    for result in run_suite(seed=args.seed, tol=args.tol):
        name, err = result.worst
        print(f"{result.spectral_path}: worst {name} rel err {err:.3e} "
              f"{'PASS' if result.passed else 'FAIL'}")
        ok &= result.passed
    return 0 if ok else 1


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lwr-fno", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="generate and save a training dataset")
    p.add_argument("--config", required=True, help="JSON config path or preset name")
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("forward", "inverse"))
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="train a model, write checkpoint and loss CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--loss-csv")
    p.add_argument("--lam", type=float)
    p.add_argument("--mode", choices=("fno", "pi_fno"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("lambda-sweep", help="train one model per lambda, pick by validation MAE")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--lambdas", help="comma-separated list (default: from config)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", help="CSV table path (default lambda_sweep.csv)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_lambda_sweep)

    p = sub.add_parser("evaluate", help="per-class MAE report and trendline slope")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--classes", required=True, help="e.g. i0..i9, b0..b8 or i4,i5")
    p.add_argument("--out", required=True, help="CSV report path")
    p.add_argument("--samples", type=int, default=20, help="samples per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", choices=("forward", "inverse"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="single Godunov run to a raw float64 file")
    p.add_argument("--config", required=True)
    p.add_argument("--ic-class", type=int, required=True)
    p.add_argument("--bc-class", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--constant-ic", type=float, help="replace the initial condition by a constant")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s",
                        stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
