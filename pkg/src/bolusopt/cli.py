"""Command-line interface.

Subcommands: collect, train, simulate, evaluate, recommend, replay, serve.
Exit status 2 for usage errors, 3 for invalid configuration or input,
1 for runtime failures. All outputs are deterministic for a fixed --seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .advisor import CalculatorSettings, DoseRecord, recommendation_to_dict, recommend_bolus
from .config import AppConfig, ConfigError, config_to_dict, load_config
from .evaluation import comparison_table, evaluate_cohort, write_report_files
from .insilico.cohort import load_cohort
from .insilico.metrics import compute_metrics
from .insilico.protocols import (
    AdvisorPolicy,
    CalculatorPolicy,
    PerturbedCalculatorPolicy,
    export_simulation_csv,
    load_protocol,
    protocol_a,
    protocol_b,
    run_data_collection,
    run_protocol,
)
from .pg import load_predictor, load_samples_csv, save_predictor, save_samples_csv, train_pg_model
from .replay import (
    load_clinical_trace,
    load_meal_annotations,
    replay_report_to_dict,
    replay_trace,
    write_replay_csv,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_INVALID = 3


class InputError(ValueError):
    """Bad user input that is not a usage error (exit 3)."""


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    p.add_argument("--out", default=".", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bolusopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="run the 7-day collection protocol, write samples CSV")
    _add_common(p)
    p.add_argument("--patient", type=int, default=0, help="cohort index")

    p = sub.add_parser("train", help="fit a postprandial predictor from a samples CSV")
    _add_common(p)
    p.add_argument("--samples", required=True)
    p.add_argument("--meal-class", choices=["breakfast", "lunch_dinner"], default=None)
    p.add_argument("--no-meal-info", action="store_true", help="train without carb inputs")

    p = sub.add_parser("simulate", help="run protocol A/B under one policy for one patient")
    _add_common(p)
    p.add_argument("--protocol", choices=["A", "B"], default="A")
    p.add_argument("--protocol-file", help="custom protocol JSON (overrides --protocol)")
    p.add_argument("--policy", choices=["advisor", "calculator", "perturbed_calculator"], default="calculator")
    p.add_argument("--patient", type=int, default=0)
    p.add_argument("--basal-scale", type=float, default=1.0)
    p.add_argument("--models", help="directory with breakfast.json / lunch_dinner.json (advisor)")

    p = sub.add_parser("evaluate", help="cohort comparison, Table-2-shaped output")
    _add_common(p)
    p.add_argument("--protocol", choices=["A", "B"], default="A")
    p.add_argument("--policy", choices=["both", "advisor", "calculator"], default="both")
    p.add_argument("--basal-scale", type=float, default=1.0)
    p.add_argument("--no-meal-info", action="store_true")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("recommend", help="one-shot recommendation from a glucose window")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--window", required=True, help="8 comma-separated mg/dL readings")
    p.add_argument("--carbs", type=float, default=None)
    p.add_argument("--history", help="JSON file: [{time, units}, ...]")
    p.add_argument("--now", type=float, default=None)

    p = sub.add_parser("replay", help="advisory-mode replay over a clinical trace")
    _add_common(p)
    p.add_argument("--trace", required=True, help="CSV: timestamp,glucose")
    p.add_argument("--meals", required=True, help="CSV: time,grams,clinician_bolus")
    p.add_argument("--model", required=True)

    p = sub.add_parser("serve", help="start the HTTP advisor service")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ui", help="static directory for the what-if panel")

    return parser


def _load_app_config(args) -> AppConfig:
    cfg = load_config(args.config) if args.config else AppConfig()
    if args.seed is not None:
        cfg = AppConfig(
            advisor=cfg.advisor,
            calculator=cfg.calculator,
            cohort_path=cfg.cohort_path,
            seed=args.seed,
            cgm_noise_sd=cfg.cgm_noise_sd,
        )
    return cfg


def _member(cfg: AppConfig, index: int):
    cohort = load_cohort(cfg.cohort_path)
    if not 0 <= index < len(cohort):
        raise InputError(f"patient index {index} outside cohort of {len(cohort)}")
    return cohort[index]


def cmd_collect(args) -> int:
    cfg = _load_app_config(args)
    member = _member(cfg, args.patient)
    samples, result, factors = run_data_collection(
        member, seed=cfg.seed, cgm_noise_sd=cfg.cgm_noise_sd
    )
    os.makedirs(args.out, exist_ok=True)
    out = os.path.join(args.out, f"{member.name}_samples.csv")
    save_samples_csv(samples, out)
    print(f"wrote {len(samples)} samples to {out}")
    print(f"perturbation factors in [{min(factors):.3f}, {max(factors):.3f}]")
    return EXIT_OK


def cmd_train(args) -> int:
    samples = load_samples_csv(args.samples)
    if args.meal_class:
        samples = [s for s in samples if s.meal_class == args.meal_class]
    classes = {s.meal_class for s in samples}
    if len(classes) > 1:
        raise InputError(
            f"samples file mixes classes {sorted(classes)}; pass --meal-class to select one"
        )
    if not samples:
        raise InputError("no samples to train on")
    predictor = train_pg_model(samples, meal_aware=not args.no_meal_info)
    os.makedirs(args.out, exist_ok=True)
    out = os.path.join(args.out, f"{samples[0].meal_class}.json")
    save_predictor(predictor, out)
    print(f"trained {samples[0].meal_class} model on {len(samples)} samples -> {out}")
    return EXIT_OK


def _protocol_for(name: str, basal_scale: float):
    return protocol_a(basal_scale) if name == "A" else protocol_b(basal_scale)


def cmd_simulate(args) -> int:
    cfg = _load_app_config(args)
    member = _member(cfg, args.patient)
    if args.policy == "calculator":
        policy = CalculatorPolicy(CalculatorSettings(cr=member.cr, cf=member.cf))
    elif args.policy == "perturbed_calculator":
        policy = PerturbedCalculatorPolicy(CalculatorSettings(cr=member.cr, cf=member.cf))
    else:
        if not args.models:
            raise InputError("--models directory required for the advisor policy")
        predictors = {}
        for cls in ("breakfast", "lunch_dinner"):
            path = os.path.join(args.models, f"{cls}.json")
            if not os.path.exists(path):
                raise InputError(f"missing model file {path}")
            predictors[cls] = load_predictor(path)
        announce = all(p.meal_aware for p in predictors.values())
        policy = AdvisorPolicy(predictors, cfg.advisor, seed=cfg.seed, announce_meals=announce)
    if args.protocol_file:
        try:
            protocol = load_protocol(args.protocol_file)
        except (OSError, KeyError, ValueError) as exc:
            raise InputError(f"bad protocol file {args.protocol_file}: {exc}") from exc
    else:
        protocol = _protocol_for(args.protocol, args.basal_scale)
    result = run_protocol(
        member,
        policy,
        protocol,
        seed=cfg.seed,
        cgm_noise_sd=cfg.cgm_noise_sd,
    )
    report = compute_metrics(result)
    os.makedirs(args.out, exist_ok=True)
    stem = f"{member.name}_{args.policy}_{protocol.name}"
    out = os.path.join(args.out, f"{stem}.json")
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "schema": "simulation/v1",
                "patient": member.name,
                "policy": args.policy,
                "protocol": protocol.name,
                "basal_scale": protocol.basal_scale,
                "seed": cfg.seed,
                "metrics": report.as_dict(),
                "doses": [{"time": d.time, "units": d.units} for d in result.doses],
                "meals": [
                    {"time": m.time, "carbs": m.carbs, "bolus": m.bolus, "class": m.meal_class}
                    for m in result.meals
                ],
                "cgm": {
                    "times": [float(t) for t in result.cgm.times],
                    "values": [float(v) for v in result.cgm.values],
                },
            },
            fh,
            indent=2,
            sort_keys=True,
        )
    csv_files = export_simulation_csv(result, os.path.join(args.out, stem))
    for key, value in report.as_dict().items():
        print(f"{key}: {value:.2f}")
    print(f"wrote {out} and {len(csv_files)} CSV exports")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_app_config(args)
    policies = ("calculator", "advisor") if args.policy == "both" else (args.policy,)
    report = evaluate_cohort(
        cohort=load_cohort(cfg.cohort_path),
        protocol=args.protocol,
        policies=policies,
        meal_info=not args.no_meal_info,
        basal_scale=args.basal_scale,
        seed=cfg.seed,
        config=cfg,
        jobs=args.jobs,
    )
    files = write_report_files(report, args.out)
    print(comparison_table(report))
    print(f"wrote {len(files)} files under {args.out}")
    return EXIT_OK


def _parse_window(text: str) -> np.ndarray:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != 8:
        raise InputError(f"expected 8 glucose readings, got {len(parts)}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise InputError(f"window must be numeric: {exc}") from exc


def cmd_recommend(args) -> int:
    cfg = _load_app_config(args)
    predictor = load_predictor(args.model)
    window = _parse_window(args.window)
    if predictor.meal_aware and args.carbs is None:
        raise InputError("model is meal-aware: --carbs required")
    if not predictor.meal_aware and args.carbs is not None:
        raise InputError("model is meal-free: omit --carbs")
    history = []
    if args.history:
        with open(args.history, encoding="utf-8") as fh:
            for item in json.load(fh):
                history.append(DoseRecord(time=float(item["time"]), units=float(item["units"])))
    now = args.now if args.now is not None else max((d.time for d in history), default=0.0)
    rec = recommend_bolus(predictor, window, args.carbs, cfg.advisor, history, now, cfg.seed)
    doc = recommendation_to_dict(rec, window, args.carbs)
    os.makedirs(args.out, exist_ok=True)
    out = os.path.join(args.out, "recommendation.json")
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    print(json.dumps({k: doc[k] for k in ("raw_bolus", "iob", "final_bolus")}, indent=2))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = _load_app_config(args)
    trace = load_clinical_trace(args.trace)
    meals = load_meal_annotations(args.meals)
    predictor = load_predictor(args.model)
    report = replay_trace(trace, meals, predictor, cfg.advisor, seed=cfg.seed)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "replay.csv")
    json_path = os.path.join(args.out, "replay.json")
    write_replay_csv(report, csv_path)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(replay_report_to_dict(report), fh, indent=2, sort_keys=True)
    done = sum(1 for r in report.rows if r.recommended_bolus is not None)
    print(f"replayed {done}/{len(report.rows)} meals -> {csv_path}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = _load_app_config(args)
    predictor = load_predictor(args.model)
    app = create_app(predictor, cfg, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


HANDLERS = {
    "collect": cmd_collect,
    "train": cmd_train,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "recommend": cmd_recommend,
    "replay": cmd_replay,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return HANDLERS[args.command](args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
