"""Command-line interface: fit, simulate, forecast, score, diagnose,
experiment-fix.

All commands are driven by a JSON config, with a few flag overrides (flags
win). Exit codes: 0 success, 1 usage or data error, 2 fit did not converge
(results are still written).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import inference
from .catalog import (
    Catalog,
    Event,
    read_catalog,
    split_at_mainshock,
    write_catalog,
)
from .errors import EtasLabError
from .estimator import EtasModel
from .likelihood import BinningConfig
from .model import PARAMETER_NAMES, EtasParameters, MagnitudeLaw
from .priors import (
    ParameterTransform,
    default_priors,
    fixes_from_config,
    make_fixed_prior,
    priors_from_config,
    priors_to_config,
)
from .scoring import ForecastEnsemble, normalized_iet_ecdf, exp1_cdf, ks_distance, score_forecast
from .simulator import SimulationConfig, branching_ratio, simulate_ensemble

_CANONICAL_KEYS = ["mu", "K", "alpha", "c", "p"]


class _UsageError(Exception):
    """Config or input problem that maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # usage errors must exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _config_digest(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise _UsageError(f"cannot read config {path}: {exc}") from None
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise _UsageError(f"invalid JSON in {path}: {exc}") from None
    if not isinstance(config, dict):
        raise _UsageError(f"config root must be a JSON object, got {type(config).__name__}")
    return config


def _require(config: dict, section: str) -> dict:
    if section not in config:
        raise _UsageError(f"config is missing the required {section!r} section")
    return config[section]


def _load_catalog_section(section: dict) -> Catalog:
    try:
        path = section["path"]
        m0 = float(section["m0"])
        t1, t2 = (float(v) for v in section["window"])
    except (KeyError, TypeError, ValueError) as exc:
        raise _UsageError(f"bad catalog section: {exc}") from None
    try:
        return read_catalog(path, m0, t1, t2)
    except OSError as exc:
        raise _UsageError(f"cannot read catalogue {path}: {exc}") from None


def _events_from_pairs(pairs) -> tuple[Event, ...]:
    try:
        return tuple(Event(float(t), float(m)) for t, m in pairs)
    except (TypeError, ValueError) as exc:
        raise _UsageError(f"history must be [time, magnitude] pairs: {exc}") from None


def _out_dir(config: dict, args) -> Path:
    out = Path(args.out) if args.out else Path(config.get("output", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _params_from_config(body: dict) -> EtasParameters:
    try:
        return EtasParameters.from_dict(body)
    except (KeyError, TypeError, ValueError) as exc:
        raise _UsageError(f"bad parameter block: {exc}") from None


def _samples_csv(draws: np.ndarray) -> str:
    lines = [",".join(_CANONICAL_KEYS)]
    lines.extend(",".join(repr(float(v)) for v in row) for row in draws)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# fit


def _build_model(config: dict, args) -> EtasModel:
    fit_cfg = config.get("fit", {})
    priors = priors_from_config(config.get("priors", {}))
    fix = dict(config.get("fix", {}))
    for spec in args.fix or []:
        name, _, value = spec.partition("=")
        if not value:
            raise _UsageError(f"--fix expects name=value, got {spec!r}")
        fix[name] = {"value": float(value)}
    seed = args.seed if args.seed is not None else int(fit_cfg.get("seed", 0))
    binning = fit_cfg.get("binning", {})
    return EtasModel(
        priors=priors,
        fix=fix or None,
        fix_mode=fit_cfg.get("fix_mode", "prior"),
        initial_values=fit_cfg.get("initial_values"),
        delta=float(binning.get("delta", 0.1)),
        ratio=float(binning.get("ratio", 1.0)),
        n_max=int(binning.get("n_max", 12)),
        max_iter=int(fit_cfg.get("max_iterations", 50)),
        tol=float(fit_cfg.get("tol", 0.01)),
        line_search_points=int(fit_cfg.get("line_search_points", 21)),
        fd_step=float(fit_cfg.get("fd_step", 1e-5)),
        hessian_step=float(fit_cfg.get("hessian_step", 1e-4)),
        seed=seed,
    )


def _fit_document(model: EtasModel, catalog: Catalog, config: dict) -> dict:
    post = model.posterior_
    resolved_priors = {}
    fixed = {}
    for link in post.transform.links:
        key = "K" if link.parameter == "k" else link.parameter
        if link.is_fixed:
            fixed[key] = link.value
        else:
            resolved_priors[key] = {link.spec.kind: list(link.spec.args)}
    mode = model.mode_
    return {
        "command": "fit",
        "config_digest": _config_digest(config),
        "catalog": {"n_events": len(catalog), "window": [catalog.t1, catalog.t2],
                    "m0": catalog.m0},
        "priors": resolved_priors,
        "fixed": fixed,
        "mode": {"mu": mode["mu"], "K": mode["k"], "alpha": mode["alpha"],
                 "c": mode["c"], "p": mode["p"]},
        "mode_internal": post.mode,
        "free_parameters": list(post.free_names),
        "covariance": post.covariance,
        "beta": model.magnitude_law_.beta,
        "converged": post.converged,
        "iterations": post.iterations_used,
        "wall_time_s": post.wall_time,
        "trace": [
            {"theta": rec.theta, "objective": rec.objective,
             "blend_weight": rec.blend_weight, "saturated": rec.saturated}
            for rec in post.trace
        ],
    }


def _posterior_from_fit_result(path: str) -> tuple[inference.PosteriorApproximation, MagnitudeLaw]:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise _UsageError(f"cannot read fit result {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise _UsageError(f"invalid JSON in fit result {path}: {exc}") from None
    priors = default_priors()
    priors.update(priors_from_config(doc["priors"]))
    fixed = {name.lower(): float(v) for name, v in doc.get("fixed", {}).items()}
    transform = ParameterTransform.from_priors(priors, fixed or None)
    m0 = float(doc["catalog"]["m0"])
    post = inference.PosteriorApproximation(
        mode=np.asarray(doc["mode_internal"], dtype=float),
        covariance=np.asarray(doc["covariance"], dtype=float),
        transform=transform,
        m0=m0,
        iterations_used=int(doc["iterations"]),
        converged=bool(doc["converged"]),
        wall_time=float(doc["wall_time_s"]),
    )
    return post, MagnitudeLaw(beta=float(doc["beta"]), m0=m0)


def _training_inputs(config: dict) -> tuple[Catalog, Catalog | None]:
    """Catalogue (optionally split at a mainshock) plus imposed history."""
    catalog = _load_catalog_section(_require(config, "catalog"))
    history = None
    if "split" in config:
        split_cfg = config["split"]
        split = split_at_mainshock(
            catalog, float(split_cfg["threshold"]), int(split_cfg.get("index", 1))
        )
        catalog = split.training
    fit_cfg = config.get("fit", {})
    if "history" in fit_cfg:
        events = _events_from_pairs(fit_cfg["history"])
        history = Catalog(events, min(ev.time for ev in events),
                          catalog.t2, min(ev.magnitude for ev in events))
    return catalog, history


def cmd_fit(config: dict, args) -> int:
    out = _out_dir(config, args)
    catalog, history = _training_inputs(config)
    model = _build_model(config, args)
    model.fit(catalog, history)

    doc = _fit_document(model, catalog, config)
    _write_json(out / "fit.json", doc)
    n_samples = int(config.get("fit", {}).get("n_samples", 10_000))
    draws = model.sample(n_samples)
    (out / "posterior_samples.csv").write_text(_samples_csv(draws))
    print(f"fit: converged={model.converged_} iterations={model.n_iter_} "
          f"wall_time={model.fit_time_:.3f}s -> {out / 'fit.json'}")
    return 0 if model.converged_ else 2


# ---------------------------------------------------------------------------
# simulate


def _simulation_config(config: dict, args) -> tuple[SimulationConfig, int, str]:
    sim = _require(config, "simulate")
    if "params" in sim:
        params = _params_from_config(sim["params"])
        if "beta" not in sim:
            raise _UsageError("simulate.params requires simulate.beta for magnitudes")
        law = MagnitudeLaw(beta=float(sim["beta"]), m0=params.m0)
    elif "fit_result" in sim:
        post, law = _posterior_from_fit_result(sim["fit_result"])
        mode = post.mode_model()
        params = EtasParameters(**mode, m0=post.m0)
        if "beta" in sim:
            law = MagnitudeLaw(beta=float(sim["beta"]), m0=post.m0)
    else:
        raise _UsageError("simulate needs either 'params' or 'fit_result'")
    try:
        t1, t2 = (float(v) for v in sim["window"])
    except (KeyError, TypeError, ValueError) as exc:
        raise _UsageError(f"bad simulate.window: {exc}") from None
    history = _events_from_pairs(sim["history"]) if "history" in sim else None
    seed = args.seed if args.seed is not None else int(sim.get("seed", 0))
    cfg = SimulationConfig(
        params=params,
        magnitude_law=law,
        t1=t1,
        t2=t2,
        history=history,
        max_events=int(sim.get("max_events", 1_000_000)),
        seed=seed,
        allow_supercritical=bool(sim.get("allow_supercritical", False)),
    )
    return cfg, int(sim.get("replicates", 1)), sim.get("format", "long")


def _simulate_one(payload) -> Catalog:
    cfg, draw_row = payload
    if draw_row is not None:
        mu, k, alpha, c, p = draw_row
        cfg = replace(cfg, params=EtasParameters(mu=mu, k=k, alpha=alpha, c=c, p=p,
                                                 m0=cfg.params.m0))
    from .simulator import simulate_catalog
    return simulate_catalog(cfg)


def _run_ensemble(cfg: SimulationConfig, n_replicates: int, jobs: int,
                  draws: np.ndarray | None = None) -> list[Catalog]:
    from .simulator import replicate_seed
    payloads = [
        (replace(cfg, seed=replicate_seed(cfg.seed, r)),
         None if draws is None else draws[r])
        for r in range(n_replicates)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_simulate_one, payloads))
    return [_simulate_one(p) for p in payloads]


def cmd_simulate(config: dict, args) -> int:
    out = _out_dir(config, args)
    cfg, replicates, fmt = _simulation_config(config, args)
    catalogs = _run_ensemble(cfg, replicates, args.jobs)
    if fmt == "per-replicate":
        for r, cat in enumerate(catalogs):
            write_catalog(out / f"replicate_{r:04d}.csv", cat)
        target = out / "replicate_0000.csv"
    elif fmt == "long":
        lines = ["replicate,time,magnitude"]
        for r, cat in enumerate(catalogs):
            lines.extend(f"{r},{ev.time!r},{ev.magnitude!r}" for ev in cat.events)
        target = out / "ensemble.csv"
        target.write_text("\n".join(lines) + "\n")
    else:
        raise _UsageError(f"unknown simulate.format {fmt!r}")
    _write_json(out / "simulate.json", {
        "command": "simulate",
        "config_digest": _config_digest(config),
        "seed": cfg.seed,
        "replicates": replicates,
        "window": [cfg.t1, cfg.t2],
        "branching_ratio": branching_ratio(cfg.params, cfg.magnitude_law),
        "n_events": [len(cat) for cat in catalogs],
    })
    print(f"simulate: {replicates} replicate(s) -> {target}")
    return 0


# ---------------------------------------------------------------------------
# forecast


def cmd_forecast(config: dict, args) -> int:
    out = _out_dir(config, args)
    fc = _require(config, "forecast")
    catalog = _load_catalog_section(_require(config, "catalog"))
    split_cfg = _require(config, "split")
    split = split_at_mainshock(
        catalog, float(split_cfg["threshold"]), int(split_cfg.get("index", 1))
    )
    post, law = _posterior_from_fit_result(_require(fc, "fit_result") if isinstance(fc, dict) else fc)

    n_weeks = int(fc.get("n_weeks", 10))
    n_replicates = int(fc.get("n_replicates", 1000))
    period_length = float(fc.get("period_length", 7.0))
    seed = args.seed if args.seed is not None else int(fc.get("seed", 0))
    start = split.forecast_window[0]
    horizon = start + n_weeks * period_length
    if "window" in fc:
        start, horizon = (float(v) for v in fc["window"])
        if start < split.forecast_window[0]:
            raise _UsageError(
                f"forecast window starting {start} overlaps the training window "
                f"(mainshock at {split.forecast_window[0]})"
            )

    draws = inference.sample_posterior(post, n_replicates, seed)
    cfg = SimulationConfig(
        params=EtasParameters(**post.mode_model(), m0=post.m0),
        magnitude_law=law,
        t1=start,
        t2=horizon,
        history=split.history,
        max_events=int(fc.get("max_events", 1_000_000)),
        seed=seed,
        allow_supercritical=True,  # tail posterior draws may be supercritical
    )
    catalogs = _run_ensemble(cfg, n_replicates, args.jobs, draws)
    ensemble = ForecastEnsemble.from_catalogs(catalogs, start, n_weeks, period_length)

    lines = ["replicate," + ",".join(f"week_{j + 1}" for j in range(n_weeks))]
    for r in range(n_replicates):
        lines.append(str(r) + "," + ",".join(str(int(v)) for v in ensemble.counts[r]))
    (out / "forecast_counts.csv").write_text("\n".join(lines) + "\n")
    _write_json(out / "forecast.json", {
        "command": "forecast",
        "config_digest": _config_digest(config),
        "window_start": start,
        "period_length": period_length,
        "n_periods": n_weeks,
        "n_replicates": n_replicates,
        "seed": seed,
        "mainshock": {"time": split.mainshock.time, "magnitude": split.mainshock.magnitude},
    })
    print(f"forecast: {n_replicates} replicates x {n_weeks} weeks -> "
          f"{out / 'forecast_counts.csv'}")
    return 0


# ---------------------------------------------------------------------------
# score


def _read_forecast_outputs(counts_path: str, metadata_path: str) -> ForecastEnsemble:
    try:
        lines = Path(counts_path).read_text().strip().splitlines()
        meta = json.loads(Path(metadata_path).read_text())
    except OSError as exc:
        raise _UsageError(f"cannot read forecast outputs: {exc}") from None
    header = lines[0].split(",")
    n_periods_csv = len(header) - 1
    counts = np.array([[int(v) for v in line.split(",")[1:]] for line in lines[1:]])
    n_periods = int(meta["n_periods"])
    if n_periods != n_periods_csv:
        raise _UsageError(
            f"period mismatch: metadata declares {n_periods} periods, "
            f"counts file has {n_periods_csv}"
        )
    start = float(meta["window_start"])
    length = float(meta["period_length"])
    edges = start + length * np.arange(n_periods + 1)
    return ForecastEnsemble(counts, edges)


def cmd_score(config: dict, args) -> int:
    out = _out_dir(config, args)
    sc = _require(config, "score")
    ensemble = _read_forecast_outputs(_require(sc, "counts") if isinstance(sc, dict) else sc,
                                      sc["metadata"])
    observed = _load_catalog_section(_require(config, "catalog"))
    report = score_forecast(ensemble, observed)
    (out / "score_report.csv").write_text(report.to_csv())
    _write_json(out / "score_report.json", {
        "command": "score",
        "config_digest": _config_digest(config),
        **report.to_dict(),
    })
    print(f"score: {ensemble.n_periods} period(s) -> {out / 'score_report.csv'}")
    return 0


# ---------------------------------------------------------------------------
# diagnose


def cmd_diagnose(config: dict, args) -> int:
    out = _out_dir(config, args)
    catalog = _load_catalog_section(_require(config, "catalog"))
    curve = normalized_iet_ecdf(catalog)
    distance = ks_distance(curve)
    lines = ["x,ecdf,exp1"]
    lines.extend(
        f"{x!r},{s!r},{exp1_cdf(x)!r}" for x, s in zip(curve.points, curve.steps)
    )
    (out / "ecdf.csv").write_text("\n".join(lines) + "\n")
    _write_json(out / "diagnose.json", {
        "command": "diagnose",
        "config_digest": _config_digest(config),
        "n_events": len(catalog),
        "n_durations": int(curve.points.size),
        "ks_distance": distance,
    })
    print(f"diagnose: KS distance to Exp(1) = {distance:.4f} -> {out / 'ecdf.csv'}")
    return 0


# ---------------------------------------------------------------------------
# experiment-fix


def _experiment_fit_task(payload: dict) -> dict:
    model = EtasModel(**payload["model_kwargs"])
    model.fit(payload["catalog"])
    summary = model.summary(n=payload["n_samples"])
    row = {
        "fixed_parameter": payload["label"][0],
        "fixed_value": payload["label"][1],
        "converged": model.converged_,
        "iterations": model.n_iter_,
        "wall_time_s": model.fit_time_,
    }
    for name in PARAMETER_NAMES:
        key = "K" if name == "k" else name
        row[f"{key}_mean"] = summary[name]["mean"]
        row[f"{key}_sd"] = summary[name]["sd"]
    return row


def cmd_experiment_fix(config: dict, args) -> int:
    out = _out_dir(config, args)
    exp = _require(config, "experiment")
    truth = exp["truth"]
    params = _params_from_config({k: v for k, v in truth.items() if k.lower() != "beta"})
    law = MagnitudeLaw(beta=float(truth["beta"]), m0=params.m0)
    t1, t2 = (float(v) for v in exp["window"])
    history = _events_from_pairs(exp["history"]) if "history" in exp else None
    catalog_seed = args.seed if args.seed is not None else int(exp.get("catalog_seed", 1))
    sim_cfg = SimulationConfig(
        params=params, magnitude_law=law, t1=t1, t2=t2, history=history,
        max_events=int(exp.get("max_events", 200_000)), seed=catalog_seed,
    )
    catalog = _run_ensemble(sim_cfg, 1, 1)[0]
    if history is not None:
        # planted mainshocks become observed events so the fit can see them
        catalog = Catalog(catalog.events + history, t1, t2, params.m0)
    write_catalog(out / "experiment_catalog.csv", catalog)

    fix_mode = exp.get("fix_mode", "prior")
    epsilons = {k.lower(): float(v) for k, v in exp.get("epsilon", {}).items()}
    base_model = _build_model(config, args)
    base_kwargs = base_model.get_params()

    tasks = [{
        "label": ("none", ""),
        "model_kwargs": base_kwargs,
        "catalog": catalog,
        "n_samples": int(exp.get("n_samples", 4000)),
    }]
    grid = exp.get("grid", {})
    for raw_name in sorted(grid, key=lambda n: PARAMETER_NAMES.index(n.lower())):
        name = raw_name.lower()
        for value in grid[raw_name]:
            kwargs = dict(base_kwargs)
            fix_entry = {"value": float(value)}
            if name in epsilons:
                fix_entry["epsilon"] = epsilons[name]
            kwargs["fix"] = {name: fix_entry}
            kwargs["fix_mode"] = fix_mode
            tasks.append({
                "label": (raw_name, float(value)),
                "model_kwargs": kwargs,
                "catalog": catalog,
                "n_samples": int(exp.get("n_samples", 4000)),
            })

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_experiment_fit_task, tasks))
    else:
        rows = [_experiment_fit_task(task) for task in tasks]

    columns = ["fixed_parameter", "fixed_value", "converged", "iterations", "wall_time_s"]
    for name in _CANONICAL_KEYS:
        columns += [f"{name}_mean", f"{name}_sd"]
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(
            repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in columns
        ))
    (out / "experiment_results.csv").write_text("\n".join(lines) + "\n")
    _write_json(out / "experiment.json", {
        "command": "experiment-fix",
        "config_digest": _config_digest(config),
        "catalog_seed": catalog_seed,
        "n_events": len(catalog),
        "truth": {k: (float(v) if not isinstance(v, str) else v) for k, v in truth.items()},
        "rows": rows,
    })
    print(f"experiment-fix: {len(rows)} fit(s) -> {out / 'experiment_results.csv'}")
    return 0


# ---------------------------------------------------------------------------


COMMANDS = {
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "forecast": cmd_forecast,
    "score": cmd_score,
    "diagnose": cmd_diagnose,
    "experiment-fix": cmd_experiment_fix,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="etas-lab",
                     description="Temporal ETAS fitting, simulation, and forecast scoring")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("fit", "fit the model on a catalogue"),
        ("simulate", "simulate synthetic catalogues"),
        ("forecast", "posterior-predictive weekly count forecast"),
        ("score", "score a forecast ensemble against observations"),
        ("diagnose", "inter-event-time eCDF diagnostics"),
        ("experiment-fix", "parameter-fixing experiment grid"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="JSON config path")
        cmd.add_argument("--seed", type=int, default=None, help="override config seeds")
        cmd.add_argument("--jobs", type=int, default=1, help="parallel workers")
        cmd.add_argument("--out", default=None, help="override output directory")
        if name in ("fit", "experiment-fix"):
            cmd.add_argument("--fix", action="append", default=None, metavar="NAME=VALUE",
                             help="pin a parameter (repeatable; overrides config)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "fix"):
        args.fix = None
    try:
        config = _load_config(args.config)
        return COMMANDS[args.command](config, args)
    except _UsageError as exc:
        print(f"etas-lab {args.command}: {exc}", file=sys.stderr)
        return 1
    except EtasLabError as exc:
        print(f"etas-lab {args.command}: {exc}", file=sys.stderr)
        return 1
    except (KeyError, TypeError, ValueError) as exc:
        print(f"etas-lab {args.command}: bad config: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
