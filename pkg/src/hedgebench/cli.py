"""Command-line front end.

Config files are flat YAML mappings whose keys follow the simulation
parameter names (``S0, mu, sigma, T, steps, num_paths, seed_value, tc, r``)
plus optional experiment keys. Unknown keys are rejected.

Exit status is 0 iff every requested output was written; otherwise a single
``error: <kind>: <message>`` line goes to stderr and the status is 1.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import yaml

from .analytic import CostModel, MarketParams
from .engine import bs_strategy, evaluate, leland_strategy, nn_strategy
from .experiments import (
    ExperimentConfig,
    DEFAULT_ALPHAS,
    build_sets,
    delta_surface_dump,
    divergence_study,
    run_tables,
    write_divergence,
    write_histograms,
    write_loss_history,
    write_manifest,
    write_tables_csv,
)
from .network import MlpParams
from .simulation import (
    ingest_csv,
    overlapping_paths,
    read_paths_csv,
    simulate_gbm,
    vol_stats,
    write_paths_csv,
)
from .training import train

REQUIRED_KEYS = ("S0", "mu", "sigma", "T", "steps", "num_paths", "seed_value", "tc", "r")
OPTIONAL_KEYS = {
    "test_seed": None,
    "nn_seed": 0,
    "alphas": list(DEFAULT_ALPHAS),
    "epochs": 500,
    "batch_size": 64,
    "lr": 1e-3,
    "strike": 1.0,
    "extra_strikes": [],
    "mode": "independent",
    "data_source": "simulated",
    "csv_path": None,
    "csv_column": "close",
    "series_length": None,
    "bins": 30,
    "out": None,
    "nu_fixed": None,
    "div_alphas": [0.01],
    "div_steps": [30, 120, 480],
    "div_paths": 10000,
}


class ConfigError(ValueError):
    pass


def load_config(file) -> dict:
    with open(file, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{file}: config must be a flat key-value mapping")
    return validate_config(raw)


def validate_config(raw: dict) -> dict:
    unknown = sorted(set(raw) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    missing = [k for k in REQUIRED_KEYS if k not in raw]
    if missing:
        raise ConfigError(f"missing config keys: {', '.join(missing)}")
    for k, v in raw.items():
        if isinstance(v, dict) or (isinstance(v, list) and any(isinstance(x, (dict, list)) for x in v)):
            raise ConfigError(f"config key {k!r} must not be nested")
    cfg = dict(OPTIONAL_KEYS)
    cfg.update(raw)
    if cfg["test_seed"] is None:
        cfg["test_seed"] = int(cfg["seed_value"]) + 1
    return cfg


def market_of(cfg: dict) -> MarketParams:
    return MarketParams(float(cfg["S0"]), float(cfg["mu"]), float(cfg["sigma"]), float(cfg["r"]), float(cfg["T"]))


def experiment_of(cfg: dict) -> ExperimentConfig:
    return ExperimentConfig(
        market=market_of(cfg),
        steps=int(cfg["steps"]),
        n_paths=int(cfg["num_paths"]),
        alphas=tuple(float(a) for a in cfg["alphas"]),
        train_seed=int(cfg["seed_value"]),
        test_seed=int(cfg["test_seed"]),
        nn_seed=int(cfg["nn_seed"]),
        mode=cfg["mode"],
        data_source=cfg["data_source"],
        csv_path=cfg["csv_path"],
        csv_column=cfg["csv_column"],
        series_length=cfg["series_length"],
        strike=float(cfg["strike"]),
        extra_strikes=tuple(float(k) for k in cfg["extra_strikes"]),
        epochs=int(cfg["epochs"]),
        batch_size=int(cfg["batch_size"]),
        lr=float(cfg["lr"]),
        bins=int(cfg["bins"]),
    )


def _apply_overrides(cfg: dict, args) -> dict:
    cfg = dict(cfg)
    if getattr(args, "seed", None) is not None:
        cfg["seed_value"] = args.seed
        cfg["seed_override"] = args.seed
        if cfg["test_seed"] == args.seed:
            raise ConfigError("--seed collides with test_seed")
    if getattr(args, "tc", None) is not None:
        cfg["tc"] = args.tc
        cfg["alphas"] = [args.tc]
    if getattr(args, "steps", None) is not None:
        cfg["steps"] = args.steps
    return cfg


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("HEDGEBENCH_OUT")
    if not out:
        raise ConfigError("no output directory: pass --out or set HEDGEBENCH_OUT")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _echo(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def cmd_simulate(cfg: dict, args) -> None:
    exp = experiment_of(cfg)
    out = _out_dir(args)
    paths = simulate_gbm(exp.market, exp.steps, exp.n_paths, exp.train_seed).normalized()
    write_paths_csv(paths, out / "paths.csv")
    write_manifest(out / "manifest.json", cfg, ["paths.csv"], command="simulate")
    _echo({"paths": str(out / "paths.csv"), "vol_stats": asdict(vol_stats(paths))})


def cmd_ingest(cfg: dict, args) -> None:
    out = _out_dir(args)
    column = args.column or cfg["csv_column"]
    series = ingest_csv(args.csv, column)
    steps, n_paths = int(cfg["steps"]), int(cfg["num_paths"])
    paths = overlapping_paths(series, steps, n_paths, dt=float(cfg["T"]) / steps)
    write_paths_csv(paths, out / "paths.csv")
    write_manifest(out / "manifest.json", cfg, ["paths.csv"], command="ingest", source=str(args.csv))
    _echo({"count": int(len(series)), "paths": str(out / "paths.csv"), "vol_stats": asdict(vol_stats(paths))})


def cmd_train(cfg: dict, args) -> None:
    exp = experiment_of(cfg)
    out = _out_dir(args)
    paths = read_paths_csv(args.paths).normalized()
    tcfg = replace(exp.train_config(float(cfg["tc"])), seed=int(cfg["nn_seed"]))
    result = train(tcfg, paths)
    result.params.save(out / "params.json", seed=tcfg.seed, config_hash=tcfg.digest(), config=asdict(tcfg))
    write_loss_history({tcfg.tc_alpha: result.loss_history}, out / "loss_history.csv")
    write_manifest(out / "manifest.json", cfg, ["params.json", "loss_history.csv"], command="train")
    _echo({"steps": len(result.loss_history), "final_loss": result.loss_history[-1] if result.loss_history else None})


def _strategy_from_arg(text: str, exp: ExperimentConfig, tc: float):
    kind, _, arg = text.partition(":")
    if kind == "bs":
        return bs_strategy(exp.market.sigma, exp.spec, exp.market.r)
    if kind == "leland":
        return leland_strategy(exp.market.sigma, tc, exp.dt, exp.spec, exp.market.r)
    if kind == "nn":
        if not arg:
            raise ConfigError("nn strategy needs a parameter file: --strategy nn:params.json")
        return nn_strategy(MlpParams.load(arg))
    raise ConfigError(f"unknown strategy {text!r} (expected bs, leland or nn:FILE)")


def cmd_evaluate(cfg: dict, args) -> None:
    exp = experiment_of(cfg)
    out = _out_dir(args)
    paths = read_paths_csv(args.paths).normalized()
    exp = replace(exp, steps=paths.n_steps)
    tc = float(cfg["tc"])
    strategy = _strategy_from_arg(args.strategy, exp, tc)
    rep = evaluate(paths, strategy, exp.spec, exp.market.r, CostModel(tc), bins=exp.bins)
    rep.to_csv(out / "costs.csv")
    rep.to_json(out / "report.json")
    write_manifest(out / "manifest.json", cfg, ["costs.csv", "report.json"], command="evaluate",
                   strategy=args.strategy)
    _echo({"mean": rep.mean, "std": rep.std, "n_paths": int(rep.costs.size)})


def cmd_bench(cfg: dict, args) -> None:
    exp = experiment_of(cfg)
    out = _out_dir(args)
    result = run_tables(exp, jobs=args.jobs)
    write_tables_csv(result.rows, out / "tables.csv")
    write_loss_history({c.alpha: c.loss_history for c in result.cells}, out / "loss_history.csv")
    write_histograms(result, out / "histogram.csv")
    outputs = ["tables.csv", "loss_history.csv", "histogram.csv"]
    zero = [c for c in result.cells if c.alpha == 0.0]
    if zero:
        train_set, _ = build_sets(exp)
        delta_surface_dump(zero[0].params, train_set, exp.spec, exp.market.sigma, exp.market.r,
                           file=out / "delta_surface.csv")
        outputs.append("delta_surface.csv")
    write_manifest(out / "manifest.json", cfg, outputs, command="bench",
                   seeds={"train": exp.train_seed, "test": exp.test_seed, "nn": exp.nn_seed})
    _echo({"rows": len(result.rows), "outputs": outputs})


def cmd_diverge(cfg: dict, args) -> None:
    out = _out_dir(args)
    m = market_of(cfg)
    nu = float(cfg["nu_fixed"] if cfg["nu_fixed"] is not None else cfg["sigma"])
    rows = divergence_study(m.sigma, nu, tuple(cfg["div_alphas"]), tuple(cfg["div_steps"]),
                            int(cfg["div_paths"]), int(cfg["seed_value"]), m.mu, m.maturity_T,
                            float(cfg["strike"]))
    write_divergence(rows, out / "divergence.csv")
    write_manifest(out / "manifest.json", cfg, ["divergence.csv"], command="diverge")
    _echo({"ratios": {f"{r.alpha}:{r.n_steps}": r.ratio for r in rows}})


def cmd_surface(cfg: dict, args) -> None:
    exp = experiment_of(cfg)
    out = _out_dir(args)
    paths = read_paths_csv(args.paths).normalized()
    params = MlpParams.load(args.params)
    table = delta_surface_dump(params, paths, exp.spec, exp.market.sigma, exp.market.r,
                               file=out / "delta_surface.csv")
    write_manifest(out / "manifest.json", cfg, ["delta_surface.csv"], command="surface")
    _echo({"points": int(table.shape[0])})


COMMANDS = {
    "simulate": cmd_simulate,
    "ingest": cmd_ingest,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
    "diverge": cmd_diverge,
    "surface": cmd_surface,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hedgebench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="flat YAML config file")
        p.add_argument("--out", help="output directory (default: $HEDGEBENCH_OUT)")
        p.add_argument("--seed", type=int, help="override seed_value")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers for independent cells")
        p.add_argument("--tc", type=float, help="override the cost rate (and restrict alphas to it)")
        p.add_argument("--steps", type=int, help="override the number of hedging steps")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("train", "evaluate", "surface"):
            p.add_argument("--paths", required=True, help="paths CSV written by simulate/ingest")
        if name == "evaluate":
            p.add_argument("--strategy", required=True, help="bs | leland | nn:PARAMS.json")
        if name == "surface":
            p.add_argument("--params", required=True, help="trained parameters JSON")
        if name == "ingest":
            p.add_argument("--csv", required=True, help="price CSV with a header row")
            p.add_argument("--column", help="price column name (default: csv_column or 'close')")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        COMMANDS[args.command](cfg, args)
    except (ValueError, KeyError, OSError, yaml.YAMLError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
