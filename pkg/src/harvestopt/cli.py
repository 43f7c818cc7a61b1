"""Command-line interface.

Typical chain::

    harvestopt gen-data --out data --seed 1
    harvestopt fit --data data --site 0 --out run/model.json
    harvestopt forecast --data data --site 0 --model run/model.json --out run/forecast.csv
    harvestopt matrix --data data --site 0 --forecast run/forecast.csv --out run/matrix.csv
    harvestopt optimize --data data --site 0 --matrix run/matrix.csv --scenario S1 --out run
    harvestopt evaluate --data data --site 0 --forecast run/forecast.csv --run run
    harvestopt report --run run

``harvestopt run --config config.json`` executes the whole chain from one
JSON config file. Output paths default to ``$HARVESTOPT_OUT`` (or the current
directory) when not given.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from datetime import date
from pathlib import Path

import jsonschema
import numpy as np

from . import formats
from .baselines import run_random_search, run_weighted_sum_es
from .core import (CYCLIC, INVALID, ONE_SHOT, DomainError, HarvestProblem, build_harvest_matrix,
                   build_week_mapping, original_schedule, validate_schedule)
from .datagen import (SITE0, SITE1, DatagenConfig, GenerationError, YieldSpec,
                      gen_dataset_bundle)
from .evaluation import evaluate_schedule, relative_overshoot
from .evolution import (S1, SCENARIOS, ConfigError, EsConfig, ScenarioSpec, evolve,
                        hierarchical_score)
from .forecast import (FitError, GPModel, KernelParams, SearchConfig, fit_gpr, naive_forecast,
                       predict_forecast)

log = logging.getLogger("harvestopt")

OUT_ENV = "HARVESTOPT_OUT"
MODEL_FILE = "model.json"
FORECAST_FILE = "forecast.csv"
MATRIX_FILE = "matrix.csv"
SCHEDULE_FILE = "schedule.csv"
LOSS_HISTORY_FILE = "loss_history.csv"
OPTIMIZE_FILE = "optimize.json"
WEEKLY_FILE = "weekly.csv"
REPORT_FILE = "report.json"
COMPARE_FILE = "compare.csv"

USER_ERRORS = (formats.FormatError, DomainError, ConfigError, FitError, GenerationError,
               jsonschema.ValidationError, OSError)


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "."))


def _out_path(value, name: str) -> Path:
    if value is None:
        return default_out() / name
    return Path(value)


# -- shared loading helpers -------------------------------------------------

def _site_species(dataset: formats.Dataset, site: int) -> list:
    if site not in dataset.species:
        raise DomainError(f"no species for site {site} in the dataset")
    return dataset.species[site]


def _site_history(dataset: formats.Dataset, site: int):
    if site not in dataset.histories:
        raise DomainError(f"no GDU history for site {site} in the dataset")
    return dataset.histories[site]


def _week_mapping(d_max: int, cyclic: bool, delta: int):
    return build_week_mapping(d_max, delta, CYCLIC if cyclic else ONE_SHOT)


def _scenario(kind: str, capacity, cyclic: bool, delta: int, dataset, site: int) -> ScenarioSpec:
    if kind == S1 and capacity is None:
        capacity = dataset.scenario.capacities.get(site)
        if capacity is None:
            raise ConfigError(f"scenario S1 needs a capacity for site {site}")
    return ScenarioSpec(kind, capacity if kind == S1 else None, cyclic, delta)


def load_model(path, history) -> GPModel:
    raw = formats.read_json(path)
    try:
        params = KernelParams(**raw["params"])
        stride = int(raw["stride"])
    except (KeyError, TypeError) as exc:
        raise formats.FormatError(f"{path}: invalid model file: {exc!r}") from exc
    return GPModel.from_history(history, params, stride)


# -- subcommands ------------------------------------------------------------

def cmd_gen_data(args) -> int:
    profiles = (dataclasses.replace(SITE0, n_species=args.n_species_0),
                dataclasses.replace(SITE1, n_species=args.n_species_1))
    cfg = DatagenConfig(seed=args.seed, profiles=profiles,
                        yields=YieldSpec(args.yield_mean, args.yield_std),
                        start_year=args.start_year, end_year=args.end_year,
                        horizon_start=date.fromisoformat(args.horizon_start), d_max=args.d_max)
    out = gen_dataset_bundle(cfg, _out_path(args.out, "data"))
    print(f"wrote dataset to {out}")
    return 0


def cmd_fit(args) -> int:
    dataset = formats.ingest_dataset(args.data)
    history = _site_history(dataset, args.site)
    search = SearchConfig(n_starts=args.starts, max_iter=args.max_iter, stride=args.stride,
                          seed=args.seed)
    model = fit_gpr(history, search)
    out = _out_path(args.out, MODEL_FILE)
    formats.write_json(out, {
        "site": args.site,
        "params": model.params.as_dict(),
        "stride": model.stride,
        "n_train": int(len(model.t)),
        "log_marginal_likelihood": model.lml,
        "search": dataclasses.asdict(search),
    })
    print(f"fitted GP for site {args.site}: lml={model.lml:.3f}; wrote {out}")
    return 0


def cmd_forecast(args) -> int:
    dataset = formats.ingest_dataset(args.data)
    history = _site_history(dataset, args.site)
    sc = dataset.scenario
    if args.naive:
        fc = naive_forecast(history, sc.horizon_start, sc.d_max)
    else:
        if args.model is None:
            raise ConfigError("forecast needs --model (or --naive)")
        fc = predict_forecast(load_model(args.model, history), sc.horizon_start, sc.d_max)
    out = _out_path(args.out, FORECAST_FILE)
    formats.write_forecast_csv(out, fc)
    print(f"wrote {fc.d_max}-day forecast to {out}")
    return 0


def _load_forecast(path, dataset):
    fc = formats.read_forecast_csv(path)
    sc = dataset.scenario
    if fc.d_max != sc.d_max or fc.horizon_start != sc.horizon_start:
        raise formats.FormatError(
            f"{path}: forecast horizon ({fc.horizon_start}, {fc.d_max} days) does not match "
            f"the dataset ({sc.horizon_start}, {sc.d_max} days)")
    return fc


def cmd_matrix(args) -> int:
    dataset = formats.ingest_dataset(args.data)
    species = _site_species(dataset, args.site)
    fc = _load_forecast(args.forecast, dataset)
    H = build_harvest_matrix(fc.mean_accumulation(), species)
    out = _out_path(args.out, MATRIX_FILE)
    formats.write_matrix_csv(out, H, species)
    n_invalid = sum(int(np.sum(H.entries[i, s.d_early:s.d_late + 1] == INVALID))
                    for i, s in enumerate(species))
    print(f"wrote harvest matrix for {len(species)} species to {out}")
    if n_invalid:
        log.warning("%d window entries never reach harvest within the horizon", n_invalid)
    return 0


def _es_config(args, scenario) -> EsConfig:
    return EsConfig(scenario=scenario, rho_max=args.rho_max, omega=args.omega,
                    max_generations=args.generations, seed=args.seed,
                    trace_stride=args.trace_stride)


def _load_problem(args, dataset):
    species = _site_species(dataset, args.site)
    H = formats.read_matrix_csv(args.matrix, species, dataset.scenario.d_max)
    W = _week_mapping(dataset.scenario.d_max, args.cyclic, args.delta)
    return species, H, W, HarvestProblem(H, species, W)


def cmd_optimize(args) -> int:
    dataset = formats.ingest_dataset(args.data)
    species, H, W, problem = _load_problem(args, dataset)
    scenario = _scenario(args.scenario, args.capacity, args.cyclic, args.delta, dataset,
                         args.site)
    config = _es_config(args, scenario)
    state = evolve(problem, config, hierarchical_score)
    out = _out_path(args.out, "")
    formats.write_schedule_csv(out / SCHEDULE_FILE, state.parent, H, species)
    formats.write_loss_history_csv(out / LOSS_HISTORY_FILE, state.history)
    if state.trace:
        formats.write_loss_history_csv(out / "loss_trace.csv", state.trace)
    weekly = problem.weekly(state.parent.plant_day)
    formats.write_json(out / OPTIMIZE_FILE, {
        "site": args.site,
        "scenario": dataclasses.asdict(scenario),
        "c_target": state.capacity,
        "l_plus": state.parent_loss.l_plus,
        "l_minus": state.parent_loss.l_minus,
        "n_active_weeks": int(np.count_nonzero(weekly > 0)),
        "n_possible_weeks": problem.n_possible_weeks,
        "generations": state.generation,
        "budget": config.max_generations,
        "seed": config.seed,
        "rho_max": config.rho_max,
        "omega": config.omega,
        "counter_j": state.counter_j,
    })
    print(f"optimized {len(species)} species: L=({state.parent_loss.l_plus:.6g}, "
          f"{state.parent_loss.l_minus:.6g}) at C={state.capacity:.6g}; wrote {out}")
    return 0


def cmd_evaluate(args) -> int:
    dataset = formats.ingest_dataset(args.data)
    species = _site_species(dataset, args.site)
    run = Path(args.run) if args.run else default_out()
    summary = formats.read_json(run / OPTIMIZE_FILE)
    schedule = formats.read_schedule_csv(run / SCHEDULE_FILE, species)
    bad = validate_schedule(schedule, species)
    if bad:
        raise DomainError(f"{run / SCHEDULE_FILE}: planting days outside windows for "
                          f"{len(bad)} species, e.g. {species[bad[0]].species_id}")
    fc = _load_forecast(args.forecast, dataset)
    sc = summary["scenario"]
    W = _week_mapping(dataset.scenario.d_max, sc["cyclic"], sc["delta"])
    reference = original_schedule(species)
    report = evaluate_schedule(schedule, reference, fc, species, W, float(summary["c_target"]),
                               n_bootstrap=args.bootstrap, rng=args.seed)
    formats.write_weekly_csv(run / WEEKLY_FILE, report.weekly_mean, report.weekly_std)
    payload = {k: v for k, v in report.as_dict().items()
               if k not in ("weekly_mean", "weekly_std")}
    payload.update({
        "site": args.site,
        "scenario": sc["kind"],
        "l_plus": summary["l_plus"],
        "l_minus": summary["l_minus"],
        "n_active_weeks": summary["n_active_weeks"],
        "seed": summary["seed"],
        "budget": summary["budget"],
        "bootstrap_seed": args.seed,
        "relative_overshoot": relative_overshoot(report),
    })
    formats.write_json(run / REPORT_FILE, payload)
    print(_format_report(payload))
    return 0


def cmd_compare(args) -> int:
    dataset = formats.ingest_dataset(args.data)
    species, H, W, problem = _load_problem(args, dataset)
    scenario = _scenario(args.scenario, args.capacity, args.cyclic, args.delta, dataset,
                         args.site)
    rows = []
    for seed in args.seeds:
        config = dataclasses.replace(_es_config(args, scenario), seed=seed)
        es = evolve(problem, config, hierarchical_score)
        ws = run_weighted_sum_es(config, args.lambda_weight, problem)
        rs = run_random_search(config, problem, budget=args.random_budget or args.generations)
        rows.append(("hierarchical-es", seed, es.parent_loss.l_plus, es.parent_loss.l_minus,
                     es.evaluations))
        for r in (ws, rs):
            rows.append((r.method, seed, r.best_loss.l_plus, r.best_loss.l_minus, r.evaluations))
    out = _out_path(args.out, COMPARE_FILE)
    formats.write_csv(out, ("method", "seed", "l_plus", "l_minus", "evaluations"), rows)
    for row in rows:
        print("{:<16} seed={:<4} l_plus={:<12.6g} l_minus={:<12.6g} evals={}".format(*row))
    return 0


def _format_report(r: dict) -> str:
    def ratio(v):
        return "undefined" if v is None else f"{100 * v:.1f}%"
    lines = [
        f"site {r['site']} scenario {r['scenario']}",
        f"  C_target  {r['c_target']:.2f}",
        f"  C_need    {r['c_need']:.2f}",
        f"  overshoot {r['overshoot_opt']:.2f} (reference {r['overshoot_ref']:.2f}), "
        f"R_o = {ratio(r['r_o'])}",
        f"  undershoot {r['undershoot_opt']:.2f} (reference {r['undershoot_ref']:.2f}), "
        f"R_u = {ratio(r['r_u'])}",
        f"  loss ({r['l_plus']:.6g}, {r['l_minus']:.6g}), active weeks {r['n_active_weeks']}",
    ]
    return "\n".join(lines)


def cmd_report(args) -> int:
    run = Path(args.run) if args.run else default_out()
    print(_format_report(formats.read_json(run / REPORT_FILE)))
    return 0


# -- config-driven pipeline -------------------------------------------------

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["out_dir"],
    "properties": {
        "out_dir": {"type": "string"},
        "data_dir": {"type": "string"},
        "seed": {"type": "integer"},
        "site": {"type": "integer", "minimum": 0},
        "datagen": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "n_species": {"type": "array", "items": {"type": "integer", "minimum": 1},
                              "minItems": 2, "maxItems": 2},
                "d_max": {"type": "integer", "minimum": 1},
                "start_year": {"type": "integer"},
                "end_year": {"type": "integer"},
                "horizon_start": {"type": "string"},
                "yield_mean": {"type": "number"},
                "yield_std": {"type": "number", "minimum": 0},
            },
        },
        "fit": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "stride": {"type": "integer", "minimum": 1},
                "n_starts": {"type": "integer", "minimum": 1},
                "max_iter": {"type": "integer", "minimum": 1},
            },
        },
        "forecast": {"enum": ["gpr", "naive"]},
        "optimize": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "scenario": {"enum": list(SCENARIOS)},
                "capacity": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "generations": {"type": "integer", "minimum": 1},
                "rho_max": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "omega": {"type": "number", "exclusiveMinimum": 0},
                "cyclic": {"type": "boolean"},
                "delta": {"type": "integer", "minimum": 0},
                "trace_stride": {"type": "integer", "minimum": 0},
            },
        },
        "evaluate": {
            "type": "object", "additionalProperties": False,
            "properties": {"bootstrap_samples": {"type": "integer", "minimum": 1}},
        },
    },
}


def load_run_config(path) -> dict:
    raw = formats.read_json(path)
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {where}: {exc.message}") from exc
    return raw


def cmd_run(args) -> int:
    cfg = load_run_config(args.config)
    out = Path(cfg["out_dir"])
    seed = cfg.get("seed", 0)
    site = cfg.get("site", 0)
    parser = build_parser()

    def call(*argv):
        sub = parser.parse_args([str(a) for a in argv])
        return sub.func(sub)

    data = cfg.get("data_dir")
    if data is None:
        data = out / "data"
        g = cfg.get("datagen", {})
        n0, n1 = g.get("n_species", [SITE0.n_species, SITE1.n_species])
        call("gen-data", "--out", data, "--seed", seed, "--n-species-0", n0,
             "--n-species-1", n1, "--d-max", g.get("d_max", 730),
             "--start-year", g.get("start_year", 2009), "--end-year", g.get("end_year", 2019),
             "--horizon-start", g.get("horizon_start", "2020-01-01"),
             "--yield-mean", g.get("yield_mean", 250.0), "--yield-std", g.get("yield_std", 100.0))
    common = ("--data", data, "--site", site)
    if cfg.get("forecast", "gpr") == "gpr":
        f = cfg.get("fit", {})
        call("fit", *common, "--out", out / MODEL_FILE, "--seed", seed,
             "--stride", f.get("stride", 3), "--starts", f.get("n_starts", 4),
             "--max-iter", f.get("max_iter", 400))
        call("forecast", *common, "--model", out / MODEL_FILE, "--out", out / FORECAST_FILE)
    else:
        call("forecast", *common, "--naive", "--out", out / FORECAST_FILE)
    call("matrix", *common, "--forecast", out / FORECAST_FILE, "--out", out / MATRIX_FILE)
    o = cfg.get("optimize", {})
    opt_args = ["optimize", *common, "--matrix", out / MATRIX_FILE, "--out", out,
                "--scenario", o.get("scenario", S1), "--seed", seed,
                "--generations", o.get("generations", 10**6),
                "--rho-max", o.get("rho_max", 0.01), "--omega", o.get("omega", 5e-4),
                "--delta", o.get("delta", 0), "--trace-stride", o.get("trace_stride", 0)]
    if o.get("capacity") is not None:
        opt_args += ["--capacity", o["capacity"]]
    if o.get("cyclic"):
        opt_args.append("--cyclic")
    call(*opt_args)
    e = cfg.get("evaluate", {})
    return call("evaluate", *common, "--forecast", out / FORECAST_FILE, "--run", out,
                "--bootstrap", e.get("bootstrap_samples", 100), "--seed", seed)


# -- argument parsing -------------------------------------------------------

def _add_site(p):
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--site", type=int, default=0)


def _add_es(p):
    p.add_argument("--matrix", required=True, help="harvest matrix CSV")
    p.add_argument("--scenario", choices=SCENARIOS, default=S1)
    p.add_argument("--capacity", type=float, default=None,
                   help="weekly capacity for S1 (default: from scenario.json)")
    p.add_argument("--generations", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rho-max", type=float, default=0.01)
    p.add_argument("--omega", type=float, default=5e-4)
    p.add_argument("--cyclic", action="store_true", help="fold weeks modulo 52")
    p.add_argument("--delta", type=int, default=0, help="day offset of the first week")
    p.add_argument("--trace-stride", type=int, default=0,
                   help="also log the parent loss every N generations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harvestopt",
                                     description="Harvest schedule optimization toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset bundle")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-species-0", type=int, default=SITE0.n_species)
    p.add_argument("--n-species-1", type=int, default=SITE1.n_species)
    p.add_argument("--d-max", type=int, default=730)
    p.add_argument("--start-year", type=int, default=2009)
    p.add_argument("--end-year", type=int, default=2019)
    p.add_argument("--horizon-start", default="2020-01-01")
    p.add_argument("--yield-mean", type=float, default=250.0)
    p.add_argument("--yield-std", type=float, default=100.0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("fit", help="fit the GP forecast model for one site")
    _add_site(p)
    p.add_argument("--out", default=None)
    p.add_argument("--stride", type=int, default=3)
    p.add_argument("--starts", type=int, default=4)
    p.add_argument("--max-iter", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", help="predict daily GDU mean/std over the horizon")
    _add_site(p)
    p.add_argument("--model", default=None)
    p.add_argument("--naive", action="store_true", help="calendar-day average baseline")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("matrix", help="build the harvest matrix from the mean forecast")
    _add_site(p)
    p.add_argument("--forecast", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("optimize", help="run the (1+1)-ES")
    _add_site(p)
    _add_es(p)
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", help="bootstrap evaluation and report metrics")
    _add_site(p)
    p.add_argument("--forecast", required=True)
    p.add_argument("--run", default=None, help="optimize output directory")
    p.add_argument("--bootstrap", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="compare against the baseline optimizers")
    _add_site(p)
    _add_es(p)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--lambda-weight", type=float, default=1.0)
    p.add_argument("--random-budget", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="print a report.json summary")
    p.add_argument("--run", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="run the full pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
