"""Command-line front end: scenario simulation, model fitting, replication
studies, and residual/forecast diagnostics.

Every run writes a manifest (full config plus content hashes of inputs) into
its output directory so tables can be reproduced bit-for-bit.  Exit codes:
0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from . import __version__
from .diagnostics import acf, forecast_metrics, pearson_residuals, \
    posterior_summary, running_mean, thin_draws
from .errors import ConfigError, DataError, IngarchError, \
    IllConditionedProposalError, NumericalOverflowError, OptimizerError, \
    SamplerFailureError
from .mh import DEFAULT_INIT, MhConfig, PriorSpec, run_chain
from .mle import mle_fit
from .model import CountSeries, Link, ModelSpec, ParamVector, simulate
from .proposal import GaussianPrior
from .psais import PsaisConfig, khat_threshold, psais_run
from .scenarios import SCENARIOS, default_prior, get_scenario

logger = logging.getLogger("ingarch")

_NUMBER = {"type": "number"}
_INT = {"type": "integer"}
_BOOL = {"type": "boolean"}
_STR = {"type": "string"}
_VEC3 = {"type": "array", "items": _NUMBER, "minItems": 3, "maxItems": 3}
_VEC4 = {"type": "array", "items": _NUMBER, "minItems": 4, "maxItems": 4}

_MODEL_KEYS = {
    "link": {"enum": ["loglinear", "softplus"]},
    "softplus_scale": _NUMBER,
}
_PRIOR_KEYS = {
    "prior_mean": _VEC3,
    "prior_cov_diag": _VEC3,
    "lambda0_prior_shape": _NUMBER,
    "lambda0_prior_rate": _NUMBER,
}

SCHEMAS = {
    "simulate": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "scenario": _STR,
            "n": _INT,
            "seed": _INT,
            "out": _STR,
            "lambda0": _NUMBER,
            "alpha0": _NUMBER, "alpha1": _NUMBER, "beta1": _NUMBER,
            **_MODEL_KEYS,
        },
    },
    "fit-mh": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "data": _STR, "out": _STR, "seed": _INT,
            "iterations": _INT, "burn_in": _INT,
            "nb_tolerance": _NUMBER,
            "lambda0_proposal": {"type": "array", "items": _NUMBER,
                                 "minItems": 2, "maxItems": 2},
            "include_prior_in_ratio": _BOOL,
            "blocked": _BOOL,
            "sample_lambda0": _BOOL,
            "freeze_r_after": _INT,
            "loglinear_full_jacobian": _BOOL,
            "anchor_warmup": _INT,
            "init": _VEC4,
            **_MODEL_KEYS, **_PRIOR_KEYS,
        },
    },
    "fit-psais": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "data": _STR, "out": _STR, "seed": _INT,
            "draws": _INT,
            "nb_tolerance": _NUMBER,
            "lambda0": _NUMBER,
            "center_init": _VEC3,
            "gpd_fit": {"enum": ["profile", "ml"]},
            "overwrite_draws": _BOOL,
            **_MODEL_KEYS, **_PRIOR_KEYS,
        },
    },
    "fit-mle": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "data": _STR, "out": _STR,
            "init": _VEC4,
            **_MODEL_KEYS,
        },
    },
    "replicate": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "scenario": _STR, "n": _INT, "seed": _INT, "out": _STR,
            "replications": _INT,
            "methods": {"type": "array",
                        "items": {"enum": ["mle", "mh", "psais"]}},
            "workers": _INT,
            "iterations": _INT, "burn_in": _INT,
            "nb_tolerance": _NUMBER,
            "psais_nb_tolerance": _NUMBER,
            "draws": _INT,
            "lambda0": _NUMBER,
            **_PRIOR_KEYS,
        },
    },
    "diagnose": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "run_dir": _STR, "data": _STR, "out": _STR,
            "max_lag": _INT,
            "point_forecast": {"enum": ["draws", "plugin"]},
        },
    },
}


def _validate_config(command, config):
    validator = Draft202012Validator(SCHEMAS[command])
    errors = sorted(validator.iter_errors(config), key=str)
    if errors:
        msgs = "; ".join(e.message for e in errors)
        raise ConfigError(f"invalid {command} config: {msgs}")


def _load_config(args):
    config = {}
    if args.config:
        try:
            if args.config == "-":
                config = json.load(sys.stdin)
            else:
                with open(args.config) as fh:
                    config = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(config, dict):
            raise ConfigError("config must be a JSON object")
    for key in ("seed", "out", "scenario", "data", "workers"):
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            config[key] = val
    return config


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _write_manifest(out_dir, command, config, inputs=()):
    payload = {
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "version": __version__,
    }
    _write_json(out_dir / "manifest.json", payload)


def _out_dir(config, default):
    out = Path(config.get("out", default))
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_count_csv(path) -> CountSeries:
    """Read a single-column CSV with header `count`; errors carry 1-based
    line numbers."""
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"data file not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != ["count"]:
            raise DataError(f"{path}: line 1: expected header 'count', got "
                            f"{header!r}")
        values = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 1:
                raise DataError(f"{path}: line {lineno}: expected one column")
            token = row[0].strip()
            try:
                val = float(token)
            except ValueError:
                raise DataError(f"{path}: line {lineno}: not a number: "
                                f"{token!r}") from None
            if not np.isfinite(val):
                raise DataError(f"{path}: line {lineno}: non-finite value")
            if val < 0 or val != int(val):
                raise DataError(f"{path}: line {lineno}: counts must be "
                                f"non-negative integers, got {token}")
            values.append(int(val))
    if not values:
        raise DataError(f"{path}: no data rows")
    return CountSeries(np.asarray(values, dtype=np.int64))


def write_count_csv(path, series: CountSeries):
    _write_csv(path, ["count"], [[int(v)] for v in series.values])


def _model_from_config(config):
    link = Link(config.get("link", "loglinear"))
    return ModelSpec(link, float(config.get("softplus_scale", 1.0)))


def _prior_from_config(config, spec=None, scenario=None):
    if "prior_cov_diag" in config or scenario is None:
        cov_diag = config.get("prior_cov_diag", [1.0, 1.0, 1.0])
    else:
        cov_diag = list(scenario.prior_cov_diag)
    mean = config.get("prior_mean", [0.0, 0.0, 0.0])
    return PriorSpec(
        GaussianPrior(np.asarray(mean, dtype=float), np.diag(cov_diag)),
        lambda0_prior_shape=float(config.get("lambda0_prior_shape", 2.0)),
        lambda0_prior_rate=float(config.get("lambda0_prior_rate", 0.5)),
    )


def _mh_config_from(config):
    kwargs = {}
    for key in ("iterations", "burn_in", "seed", "nb_tolerance",
                "include_prior_in_ratio", "blocked", "sample_lambda0",
                "freeze_r_after", "loglinear_full_jacobian", "anchor_warmup"):
        if key in config:
            kwargs[key] = config[key]
    if "lambda0_proposal" in config:
        kwargs["lambda0_proposal"] = tuple(config["lambda0_proposal"])
    return MhConfig(**kwargs)


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(config):
    _validate_config("simulate", config)
    n = int(config.get("n", 800))
    seed = int(config.get("seed", 0))
    if "scenario" in config:
        scenario = get_scenario(config["scenario"])
        spec, params = scenario.spec, scenario.params
        if "lambda0" in config:
            params = params.with_lambda0(config["lambda0"])
    else:
        spec = _model_from_config(config)
        params = ParamVector(float(config.get("alpha0", 0.1)),
                             float(config.get("alpha1", 0.1)),
                             float(config.get("beta1", 0.1)),
                             float(config.get("lambda0", 1.0)))
    out = _out_dir(config, "simulate-out")
    series = simulate(spec, params, n, seed)
    write_count_csv(out / "series.csv", series)
    meta = {
        "scenario": config.get("scenario"),
        "n": n,
        "seed": seed,
        "model": {"link": spec.link.value, "softplus_scale": spec.softplus_scale},
        "params": {"alpha0": params.alpha0, "alpha1": params.alpha1,
                   "beta1": params.beta1, "lambda0": params.lambda0},
    }
    _write_json(out / "meta.json", meta)
    _write_manifest(out, "simulate", config)
    logger.info("wrote %s", out / "series.csv")
    return 0


def _emit_plot_data(out, draws, burn_in):
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    from scipy.stats import gaussian_kde
    names = ("alpha0", "alpha1", "beta1", "lambda0")
    for j, name in enumerate(names):
        col = draws[:, j]
        _write_csv(plots / f"trace_{name}.csv", ["iter", "value"],
                   list(enumerate(col)))
        _write_csv(plots / f"running_mean_{name}.csv", ["iter", "value"],
                   list(enumerate(running_mean(col))))
        kept = col[burn_in:]
        rho = acf(kept, min(50, kept.size - 1)) if np.std(kept) > 0 else None
        if rho is not None:
            _write_csv(plots / f"acf_{name}.csv", ["lag", "rho"],
                       list(enumerate(rho)))
            kde = gaussian_kde(kept)
            grid = np.linspace(kept.min(), kept.max(), 256)
            _write_csv(plots / f"density_{name}.csv", ["value", "density"],
                       zip(grid, kde(grid)))


def cmd_fit_mh(config):
    _validate_config("fit-mh", config)
    if "data" not in config:
        raise ConfigError("fit-mh requires a data path")
    series = load_count_csv(config["data"])
    spec = _model_from_config(config)
    prior = _prior_from_config(config)
    mh_cfg = _mh_config_from(config)
    init = ParamVector(*config["init"]) if "init" in config else DEFAULT_INIT
    result = run_chain(spec, prior, mh_cfg, series, init)
    out = _out_dir(config, "fit-mh-out")
    rows = [
        [k, *result.draws[k], int(result.accepted_theta[k]),
         int(result.accepted_lambda0[k])]
        for k in range(result.draws.shape[0])
    ]
    _write_csv(out / "chain.csv",
               ["iter", "alpha0", "alpha1", "beta1", "lambda0",
                "acc_theta", "acc_l0"], rows)
    summary = posterior_summary(result)
    payload = {
        "method": "mh",
        "posterior": summary.to_dict(),
        "seed": result.seed,
        "burn_in": result.burn_in,
        "iterations": result.draws.shape[0],
        "fallback_count": result.fallback_count,
        "mean_r_last": float(result.r_schedule_summary[-1]),
        "model": {"link": spec.link.value,
                  "softplus_scale": spec.softplus_scale},
    }
    _write_json(out / "summary.json", payload)
    _emit_plot_data(out, result.draws, result.burn_in)
    _write_manifest(out, "fit-mh", config, inputs=[config["data"]])
    logger.info("posterior means: %s", summary.mean)
    return 0


def cmd_fit_psais(config):
    _validate_config("fit-psais", config)
    if "data" not in config:
        raise ConfigError("fit-psais requires a data path")
    series = load_count_csv(config["data"])
    spec = _model_from_config(config)
    prior = _prior_from_config(config)
    ps_cfg = PsaisConfig(
        draws=int(config.get("draws", 5000)),
        seed=int(config.get("seed", 0)),
        nb_tolerance=float(config.get("nb_tolerance", 0.25)),
        lambda0=config.get("lambda0"),
        center_init=config.get("center_init"),
        gpd_fit=config.get("gpd_fit", "profile"),
        overwrite_draws=bool(config.get("overwrite_draws", False)),
    )
    result = psais_run(spec, prior, ps_cfg, series)
    out = _out_dir(config, "fit-psais-out")
    rows = [
        [s, *result.draws[s], result.raw_ratios[s], result.smoothed_weights[s]]
        for s in range(result.draws.shape[0])
    ]
    _write_csv(out / "weights.csv",
               ["s", "alpha0", "alpha1", "beta1", "raw_ratio",
                "smoothed_weight"], rows)
    threshold = khat_threshold(ps_cfg.draws)
    payload = {
        "method": "psais",
        "estimate": {"alpha0": float(result.estimate[0]),
                     "alpha1": float(result.estimate[1]),
                     "beta1": float(result.estimate[2])},
        "weighted_se": [float(v) for v in result.weighted_se],
        "k_hat": None if result.gpd is None else float(result.gpd.k_hat),
        "sigma_hat": None if result.gpd is None else float(result.gpd.sigma_hat),
        "khat_threshold": threshold,
        "khat_flag": result.khat_flag,
        "smoothing_degenerate": result.smoothing_degenerate,
        "ess": result.ess,
        "lambda0": float(result.lambda0_draws[0]),
        "seed": ps_cfg.seed,
        "draws": ps_cfg.draws,
        "log_ratio_shift": result.log_ratio_shift,
    }
    _write_json(out / "summary.json", payload)
    _write_manifest(out, "fit-psais", config, inputs=[config["data"]])
    return 0


def cmd_fit_mle(config):
    _validate_config("fit-mle", config)
    if "data" not in config:
        raise ConfigError("fit-mle requires a data path")
    series = load_count_csv(config["data"])
    spec = _model_from_config(config)
    init = ParamVector(*config["init"]) if "init" in config else DEFAULT_INIT
    fitted, loglik = mle_fit(spec, series, init)
    out = _out_dir(config, "fit-mle-out")
    payload = {
        "method": "mle",
        "estimate": {"alpha0": fitted.alpha0, "alpha1": fitted.alpha1,
                     "beta1": fitted.beta1, "lambda0": fitted.lambda0},
        "log_likelihood": loglik,
        "model": {"link": spec.link.value,
                  "softplus_scale": spec.softplus_scale},
    }
    _write_json(out / "summary.json", payload)
    _write_manifest(out, "fit-mle", config, inputs=[config["data"]])
    return 0


def _replication_worker(task):
    """One replication: simulate, then fit each requested method."""
    (name, n, methods, data_seed, fit_seed, iterations, burn_in,
     nb_tolerance, psais_nb_tolerance, psais_draws, lambda0_override) = task
    scenario = get_scenario(name)
    spec = scenario.spec
    params = scenario.params if lambda0_override is None \
        else scenario.params.with_lambda0(lambda0_override)
    series = simulate(spec, params, n, data_seed)
    prior = default_prior(scenario)
    estimates = {}
    failures = {}
    for method in methods:
        try:
            if method == "mle":
                fitted, _ = mle_fit(spec, series)
                estimates[method] = [fitted.alpha0, fitted.alpha1,
                                     fitted.beta1, fitted.lambda0]
            elif method == "mh":
                cfg = MhConfig(iterations=iterations, burn_in=burn_in,
                               seed=fit_seed, nb_tolerance=nb_tolerance)
                chain = run_chain(spec, prior, cfg, series)
                estimates[method] = list(chain.kept.mean(axis=0))
            else:
                ps_cfg = PsaisConfig(draws=psais_draws, seed=fit_seed,
                                     nb_tolerance=psais_nb_tolerance)
                res = psais_run(spec, prior, ps_cfg, series)
                estimates[method] = [float(v) for v in res.estimate] \
                    + [float(res.lambda0_draws[0])]
        except IngarchError as exc:
            failures[method] = f"{type(exc).__name__}: {exc}"
    return estimates, failures


def aggregate_replications(estimates_by_method, truth):
    """Mean estimate, RMSE and MAD per parameter per method."""
    table = {}
    for method, rows in estimates_by_method.items():
        arr = np.asarray(rows, dtype=float)[:, :3]
        err = arr - truth[None, :]
        table[method] = {
            "estimate": arr.mean(axis=0).tolist(),
            "rmse": np.sqrt((err ** 2).mean(axis=0)).tolist(),
            "mad": np.abs(err).mean(axis=0).tolist(),
            "replications": int(arr.shape[0]),
        }
    return table


def cmd_replicate(config):
    _validate_config("replicate", config)
    if "scenario" not in config:
        raise ConfigError("replicate requires a scenario id")
    scenario = get_scenario(config["scenario"])
    reps = int(config.get("replications", 20))
    if reps < 1:
        raise ConfigError("replications must be >= 1")
    n = int(config.get("n", 800))
    methods = list(config.get("methods", ["mle", "mh", "psais"]))
    workers = int(config.get("workers", os.cpu_count() or 1))
    seeds = np.random.SeedSequence(int(config.get("seed", 0))).spawn(reps)
    tasks = []
    for ss in seeds:
        d_seed, f_seed = (int(v) for v in ss.generate_state(2))
        tasks.append((scenario.name, n, methods, d_seed, f_seed,
                      int(config.get("iterations", 10_000)),
                      int(config.get("burn_in", 5_000)),
                      float(config.get("nb_tolerance", 0.01)),
                      float(config.get("psais_nb_tolerance", 0.25)),
                      int(config.get("draws", 5_000)),
                      config.get("lambda0")))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_replication_worker, tasks))
    else:
        outcomes = [_replication_worker(t) for t in tasks]

    out = _out_dir(config, "replicate-out")
    per_method = {m: [] for m in methods}
    rep_rows = []
    failure_log = {}
    for rep, (estimates, failures) in enumerate(outcomes):
        for method, est in estimates.items():
            per_method[method].append(est)
            rep_rows.append([rep, method, *est[:3],
                             est[3] if len(est) > 3 else ""])
        if failures:
            failure_log[str(rep)] = failures
    _write_csv(out / "replications.csv",
               ["rep", "method", "alpha0", "alpha1", "beta1", "lambda0"],
               rep_rows)
    truth = scenario.params.theta
    table = aggregate_replications(
        {m: v for m, v in per_method.items() if v}, truth)
    rows = []
    for i, pname in enumerate(("alpha0", "alpha1", "beta1")):
        row = [pname, truth[i]]
        for method in methods:
            if method in table:
                row += [table[method]["estimate"][i], table[method]["rmse"][i],
                        table[method]["mad"][i]]
            else:
                row += ["", "", ""]
        rows.append(row)
    header = ["param", "true"]
    for method in methods:
        header += [f"{method}_estimate", f"{method}_rmse", f"{method}_mad"]
    _write_csv(out / "table.csv", header, rows)
    _write_json(out / "table.json", {
        "scenario": scenario.name,
        "n": n,
        "replications": reps,
        "truth": truth.tolist(),
        "methods": table,
        "failures": failure_log,
    })
    _write_manifest(out, "replicate", config)
    if failure_log:
        logger.warning("replications with failures: %s", sorted(failure_log))
    return 0


def cmd_diagnose(config):
    _validate_config("diagnose", config)
    if "run_dir" not in config:
        raise ConfigError("diagnose requires run_dir (a fit-mh output)")
    run_dir = Path(config["run_dir"])
    chain_path = run_dir / "chain.csv"
    manifest_path = run_dir / "manifest.json"
    for p in (chain_path, manifest_path):
        if not p.exists():
            raise DataError(f"missing fitted output: {p}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    fit_config = manifest.get("config", {})
    data_path = config.get("data", fit_config.get("data"))
    if not data_path:
        raise DataError("no data path found in run manifest; pass one explicitly")
    series = load_count_csv(data_path)
    spec = _model_from_config(fit_config)
    with open(run_dir / "summary.json") as fh:
        summary = json.load(fh)
    burn_in = int(summary["burn_in"])
    raw = np.genfromtxt(chain_path, delimiter=",", skip_header=1)
    draws = raw[burn_in:, 1:5]
    mean_params = ParamVector(*draws.mean(axis=0))
    resid = pearson_residuals(spec, mean_params, series)
    out = _out_dir(config, "diagnose-out")
    _write_csv(out / "residuals.csv", ["t", "residual"],
               list(enumerate(resid, start=1)))
    max_lag = int(config.get("max_lag", 20))
    rho = acf(resid, max_lag)
    _write_csv(out / "residual_acf.csv", ["lag", "rho"], list(enumerate(rho)))
    counts, edges = np.histogram(resid, bins=20)
    _write_csv(out / "residual_hist.csv", ["bin_left", "bin_right", "count"],
               [[edges[i], edges[i + 1], int(counts[i])]
                for i in range(counts.size)])
    report = forecast_metrics(spec, thin_draws(draws), series,
                              point_forecast=config.get("point_forecast",
                                                        "draws"))
    _write_json(out / "metrics.json",
                {"mae": report.mae, "rmse": report.rmse, "lpd": report.lpd})
    _write_manifest(out, "diagnose", config,
                    inputs=[data_path, chain_path])
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit-mh": cmd_fit_mh,
    "fit-psais": cmd_fit_psais,
    "fit-mle": cmd_fit_mle,
    "replicate": cmd_replicate,
    "diagnose": cmd_diagnose,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ingarch-bayes",
        description="Bayesian inference for Poisson INGARCH(1,1) count series")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--scenario")
        p.add_argument("--data")
        p.add_argument("--workers", type=int)
        p.add_argument("--n", type=int, dest="n")
    return parser


def main(argv=None):
    level = os.environ.get("INGARCH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        if getattr(args, "n", None) is not None:
            config["n"] = args.n
        return COMMANDS[args.command](config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericalOverflowError, IllConditionedProposalError,
            SamplerFailureError, OptimizerError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
