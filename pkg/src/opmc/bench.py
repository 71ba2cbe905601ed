"""Experiment configs, presets and the replicated-run harness.

A config is a JSON document::

    {
      "name": "gm2d",
      "experiment": "gm2d",            # gm2d | banana | spectral | custom-gaussian-mixture
      "target": {...},                 # experiment-specific parameters
      "sampler": {"N": 50, "K": 20, "T": 20, "window": "second-half",
                  "adaptation": {"tau": 0.5, "theta_min": 9.5367431640625e-07,
                                 "max_backtracks": 20, "check_monotone": false}},
      "methods": [{"name": "O-PMC-GLR", "algorithm": "OPMC", "scheme": "GLR",
                   "period": 5, "sigma": 5.0}, ...],
      "replications": 200,
      "base_seed": 0,
      "workers": 1,
      "outputs": {"summary": "summary.csv", "per_run": "runs.csv",
                  "timing": "timing.csv", "trace": null}
    }

Run ``r`` of every method uses seed ``base_seed + r``; methods therefore see
the same initial locations and, for the spectral experiment, the same data.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .adaptation import AdaptationConfig, NumericalTargetError
from .linalg import NotSPDError, SeededRng
from .metrics import MetricReport, reconstructed_mse, squared_errors
from .resampling import ResamplingScheme, Scheme
from .samplers import (
    Algorithm,
    Quantity,
    RunDiagnostics,
    SamplerConfig,
    cumulative_estimate_trace,
    estimate,
    run_pmc,
    second_half,
)
from .targets import (
    BananaSpec,
    BananaTarget,
    GaussianMixtureSpec,
    GaussianMixtureTarget,
    SpectralSpec,
    SpectralTarget,
    default_spectral_spec,
    generate_spectral_data,
    gm2d_spec,
)

log = logging.getLogger(__name__)

OUT_DIR_ENV = "OPMC_OUT_DIR"
EXPERIMENTS = ("gm2d", "banana", "spectral", "custom-gaussian-mixture")
DATA_STREAM = 0
SAMPLER_STREAM = 1

DIAG_FIELDS = tuple(RunDiagnostics().as_dict())


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


@dataclass
class MethodConfig:
    name: str
    algorithm: Algorithm
    scheme: ResamplingScheme
    sigma: float
    N: int | None = None
    K: int | None = None
    T: int | None = None


@dataclass
class ExperimentConfig:
    name: str
    experiment: str
    target: dict
    methods: list[MethodConfig]
    N: int = 50
    K: int = 20
    T: int = 20
    window: tuple[int, int] | None = None
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)
    replications: int = 200
    base_seed: int = 0
    workers: int = 1
    outputs: dict = field(default_factory=dict)
    notes: str = ""

    def sampler_config(self, method: MethodConfig) -> SamplerConfig:
        return SamplerConfig(
            N=method.N or self.N,
            K=method.K or self.K,
            T=method.T or self.T,
            sigma=method.sigma,
            algorithm=method.algorithm,
            scheme=method.scheme,
            adaptation=self.adaptation,
            retain_populations=False,
        )


# ----------------------------------------------------------------------------
# parsing and validation


def _require(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def _check_keys(d: dict, allowed: set, path: str) -> None:
    _require(isinstance(d, dict), path, "expected an object")
    extra = sorted(set(d) - allowed)
    _require(not extra, f"{path}.{extra[0]}" if extra else path, "unknown field")


def _int(d: dict, key: str, path: str, default=None, minimum: int = 1):
    value = d.get(key, default)
    if value is None:
        return None
    _require(isinstance(value, int) and not isinstance(value, bool), f"{path}.{key}", "must be an integer")
    _require(value >= minimum, f"{path}.{key}", f"must be >= {minimum}")
    return value


def _positive(d: dict, key: str, path: str, default=None):
    value = d.get(key, default)
    _require(
        isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value),
        f"{path}.{key}",
        "must be a number",
    )
    _require(value > 0, f"{path}.{key}", "must be positive")
    return float(value)


def _parse_method(d: dict, path: str) -> MethodConfig:
    _check_keys(d, {"name", "algorithm", "scheme", "period", "offset", "sigma", "N", "K", "T"}, path)
    _require(isinstance(d.get("name"), str) and d["name"], f"{path}.name", "required string")
    try:
        algorithm = Algorithm(d.get("algorithm", "OPMC"))
    except ValueError:
        raise ConfigError(f"{path}.algorithm: must be one of {[a.value for a in Algorithm]}") from None
    try:
        kind = Scheme(d.get("scheme", "LR"))
    except ValueError:
        raise ConfigError(f"{path}.scheme: must be one of {[s.value for s in Scheme]}") from None
    period = _int(d, "period", path)
    offset = _int(d, "offset", path, default=0, minimum=0)
    _require(kind is not Scheme.GLR or period is not None, f"{path}.period", "required for GLR resampling")
    method = MethodConfig(
        name=d["name"],
        algorithm=algorithm,
        scheme=ResamplingScheme(kind, period, offset),
        sigma=_positive(d, "sigma", path, default=1.0),
        N=_int(d, "N", path),
        K=_int(d, "K", path),
        T=_int(d, "T", path),
    )
    return method


def _parse_target(experiment: str, d: dict, path: str) -> dict:
    if experiment == "gm2d":
        _check_keys(d, {"init_box"}, path)
    elif experiment == "banana":
        _check_keys(d, {"dim", "b", "c", "init_box"}, path)
        _int(d, "dim", path, default=2, minimum=2)
        _require(d.get("c", 1.0) != 0, f"{path}.c", "must be nonzero")
    elif experiment == "spectral":
        _check_keys(d, {"S", "frequencies", "amplitudes", "noise_std", "n_obs", "init_amplitude_max"}, path)
        _int(d, "S", path, default=2)
        try:
            _spectral_spec(d)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    else:
        _check_keys(d, {"weights", "means", "covariances", "init_box"}, path)
        for key in ("weights", "means", "covariances"):
            _require(key in d, f"{path}.{key}", "required")
        try:
            GaussianMixtureSpec(d["weights"], d["means"], d["covariances"])
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    if "init_box" in d:
        box = d["init_box"]
        _require(
            isinstance(box, list) and len(box) == 2 and box[0] < box[1],
            f"{path}.init_box",
            "must be [low, high] with low < high",
        )
    return d


def config_from_dict(d: dict, source: str = "<config>") -> ExperimentConfig:
    _check_keys(
        d,
        {"name", "experiment", "target", "sampler", "methods", "replications", "base_seed", "workers", "outputs", "notes"},
        "config",
    )
    experiment = d.get("experiment")
    _require(experiment in EXPERIMENTS, "experiment", f"must be one of {list(EXPERIMENTS)}")
    target = _parse_target(experiment, d.get("target", {}), "target")

    sampler = d.get("sampler", {})
    _check_keys(sampler, {"N", "K", "T", "window", "adaptation"}, "sampler")
    N = _int(sampler, "N", "sampler", default=50)
    K = _int(sampler, "K", "sampler", default=20)
    T = _int(sampler, "T", "sampler", default=20)
    window = sampler.get("window", "second-half")
    if window == "second-half":
        window = None
    else:
        _require(
            isinstance(window, list) and len(window) == 2 and 1 <= window[0] <= window[1],
            "sampler.window",
            'must be "second-half" or [first, last] with 1 <= first <= last',
        )
        window = (int(window[0]), int(window[1]))
    adapt = sampler.get("adaptation", {})
    _check_keys(adapt, {"tau", "theta_min", "max_backtracks", "check_monotone"}, "sampler.adaptation")
    tau = _positive(adapt, "tau", "sampler.adaptation", default=0.5)
    _require(tau < 1, "sampler.adaptation.tau", "must be < 1")
    adaptation = AdaptationConfig(
        tau=tau,
        theta_min=_positive(adapt, "theta_min", "sampler.adaptation", default=2.0**-20),
        max_backtracks=_int(adapt, "max_backtracks", "sampler.adaptation", default=20, minimum=0),
        check_monotone=bool(adapt.get("check_monotone", False)),
    )

    methods_raw = d.get("methods")
    _require(isinstance(methods_raw, list) and methods_raw, "methods", "must be a non-empty list")
    methods = [_parse_method(m, f"methods[{i}]") for i, m in enumerate(methods_raw)]
    names = [m.name for m in methods]
    _require(len(set(names)) == len(names), "methods", "method names must be unique")

    cfg = ExperimentConfig(
        name=d.get("name", Path(source).stem),
        experiment=experiment,
        target=target,
        methods=methods,
        N=N,
        K=K,
        T=T,
        window=window,
        adaptation=adaptation,
        replications=_int(d, "replications", "config", default=200),
        base_seed=_int(d, "base_seed", "config", default=0, minimum=0),
        workers=_int(d, "workers", "config", default=1),
        outputs=dict(d.get("outputs", {})),
        notes=d.get("notes", ""),
    )
    _check_keys(cfg.outputs, {"summary", "per_run", "timing", "trace"}, "outputs")
    for i, m in enumerate(methods):
        sc = cfg.sampler_config(m)
        try:
            sc.validate()
        except ValueError as exc:
            raise ConfigError(f"methods[{i}]: {exc}") from None
        if window is not None:
            _require(window[1] <= sc.T, "sampler.window", f"exceeds T = {sc.T} of methods[{i}]")
    return cfg


def load_config(source: str) -> ExperimentConfig:
    """Load a JSON config file, or a built-in preset by name."""
    path = Path(source)
    if not path.exists() and source in PRESETS:
        return config_from_dict(preset(source), source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{source}: cannot read config ({exc.strerror})") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return config_from_dict(raw, source)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


# ----------------------------------------------------------------------------
# presets


def _pmc_baselines(sigmas) -> list[dict]:
    out = []
    for kind in ("GR", "LR"):
        for s in sigmas:
            out.append({"name": f"{kind}-PMC-s{s:g}", "algorithm": "DM_PMC", "scheme": kind, "sigma": s})
    return out


def _opmc(sigma: float) -> list[dict]:
    return [
        {"name": "O-PMC-LR", "algorithm": "OPMC", "scheme": "LR", "sigma": sigma},
        {"name": "O-PMC-GLR", "algorithm": "OPMC", "scheme": "GLR", "period": 5, "sigma": sigma},
    ]


def _base(name: str, experiment: str, target: dict, methods: list[dict], notes: str) -> dict:
    return {
        "name": name,
        "experiment": experiment,
        "target": target,
        "sampler": {
            "N": 50,
            "K": 20,
            "T": 20,
            "window": "second-half",
            "adaptation": {"tau": 0.5, "theta_min": 2.0**-20, "max_backtracks": 20},
        },
        "methods": methods,
        "replications": 200,
        "base_seed": 0,
        "workers": 1,
        "outputs": {"summary": "summary.csv", "per_run": "runs.csv", "timing": "timing.csv", "trace": None},
        "notes": notes,
    }


def _build_presets() -> dict:
    presets = {
        "gm2d": _base(
            "gm2d",
            "gm2d",
            {"init_box": [-15.0, 15.0]},
            _pmc_baselines([1.0, 3.0, 5.0]) + _opmc(5.0),
            "Five-component bivariate mixture; the source study does not state its replication count.",
        )
    }
    for d in (2, 5, 10, 15, 20, 30, 40, 50):
        presets[f"banana-d{d}"] = _base(
            f"banana-d{d}",
            "banana",
            {"dim": d, "b": 3.0, "c": 1.0, "init_box": [-4.0, 4.0]},
            _pmc_baselines([1.0, 3.0, 5.0]) + _opmc(3.0),
            "Banana target; the source study uses 1000 runs, the preset 200.",
        )
    for S in (2, 3, 4, 5):
        presets[f"spectral-S{S}"] = _base(
            f"spectral-S{S}",
            "spectral",
            {"S": S, "noise_std": 0.5, "init_amplitude_max": 3.0},
            _pmc_baselines([1e-3, 1e-2, 1e-1]) + _opmc(1e-2),
            "Sinusoid posterior; replication count not stated in the source study.",
        )
    return presets


PRESETS = _build_presets()


def preset(name: str) -> dict:
    return json.loads(json.dumps(PRESETS[name]))


def list_presets() -> list[str]:
    return list(PRESETS)


# ----------------------------------------------------------------------------
# targets per run


def _spectral_spec(t: dict) -> SpectralSpec:
    S = t.get("S", 2)
    base = default_spectral_spec(S)
    return SpectralSpec(
        frequencies=tuple(t.get("frequencies", base.frequencies)),
        amplitudes=tuple(t.get("amplitudes", base.amplitudes)),
        noise_std=t.get("noise_std", 0.5),
        n_obs=t.get("n_obs"),
        init_amplitude_max=t.get("init_amplitude_max", 3.0),
    )


def build_target(cfg: ExperimentConfig, rng: SeededRng):
    """Target for one replication (spectral data is drawn from ``rng``)."""
    t = cfg.target
    box = tuple(t["init_box"]) if "init_box" in t else None
    if cfg.experiment == "gm2d":
        return GaussianMixtureTarget(gm2d_spec(), init_box=box or (-15.0, 15.0))
    if cfg.experiment == "custom-gaussian-mixture":
        spec = GaussianMixtureSpec(t["weights"], t["means"], t["covariances"])
        return GaussianMixtureTarget(spec, init_box=box or (-15.0, 15.0))
    if cfg.experiment == "banana":
        spec = BananaSpec(dim=t.get("dim", 2), b=t.get("b", 3.0), c=t.get("c", 1.0))
        return BananaTarget(spec, init_box=box or (-4.0, 4.0))
    spec = _spectral_spec(t)
    return SpectralTarget(spec, generate_spectral_data(spec, rng.spawn(DATA_STREAM)))


def ground_truth(cfg: ExperimentConfig) -> dict:
    target = build_target(cfg, SeededRng(0))
    truth = {}
    if target.known_Z is not None:
        truth[Quantity.Z.value] = np.array([target.known_Z])
    if target.known_mean is not None:
        truth[Quantity.MEAN.value] = np.asarray(target.known_mean)
    if target.known_second_moment is not None:
        truth[Quantity.SECOND_MOMENT.value] = np.asarray(target.known_second_moment)
    return truth


# ----------------------------------------------------------------------------
# running


@dataclass
class RunResult:
    method: str
    run: int
    seed: int
    status: str = "ok"
    error: str = ""
    Z: float = float("nan")
    mean: np.ndarray | None = None
    second_moment: np.ndarray | None = None
    reconstruction_mse: float | None = None
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0
    trace_z: np.ndarray | None = None
    trace_mean: np.ndarray | None = None


def run_one(cfg: ExperimentConfig, method_index: int, run: int, with_trace: bool = False) -> RunResult:
    method = cfg.methods[method_index]
    seed = cfg.base_seed + run
    rng = SeededRng(seed)
    result = RunResult(method=method.name, run=run, seed=seed)
    try:
        target = build_target(cfg, rng)
        record = run_pmc(target, cfg.sampler_config(method), rng.spawn(SAMPLER_STREAM))
        window = cfg.window or second_half(record.T)
        result.Z = float(estimate(record, Quantity.Z, window))
        result.mean = np.asarray(estimate(record, Quantity.MEAN, window), dtype=float)
        result.second_moment = np.asarray(estimate(record, Quantity.SECOND_MOMENT, window), dtype=float)
        if isinstance(target, SpectralTarget):
            result.reconstruction_mse = reconstructed_mse(result.mean, target.spec)
        result.diagnostics = record.diagnostics.as_dict()
        result.wall_time = record.wall_time
        if with_trace:
            result.trace_z = cumulative_estimate_trace(record, Quantity.Z)
            result.trace_mean = cumulative_estimate_trace(record, Quantity.MEAN)
    except (NumericalTargetError, NotSPDError, ArithmeticError, np.linalg.LinAlgError) as exc:
        result.status = "failed"
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def _task(args):
    cfg, mi, r, with_trace = args
    return run_one(cfg, mi, r, with_trace)


def run_experiment(cfg: ExperimentConfig, workers: int | None = None, with_trace: bool | None = None) -> list[RunResult]:
    """Execute every (method, run) pair; results are ordered by method then run index."""
    workers = workers or cfg.workers
    with_trace = bool(cfg.outputs.get("trace")) if with_trace is None else with_trace
    tasks = [(cfg, mi, r, with_trace) for mi in range(len(cfg.methods)) for r in range(cfg.replications)]
    if workers <= 1:
        results = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    order = {m.name: i for i, m in enumerate(cfg.methods)}
    return sorted(results, key=lambda res: (order[res.method], res.run))


# ----------------------------------------------------------------------------
# reports and files


def summarize(cfg: ExperimentConfig, results: list[RunResult]) -> list[dict]:
    truth = ground_truth(cfg)
    rows = []
    for m in cfg.methods:
        mine = [r for r in results if r.method == m.name]
        ok = [r for r in mine if r.status == "ok"]
        failed = len(mine) - len(ok)
        if not ok:
            rows.append({"method": m.name, "quantity": "-", "runs": 0, "failed": failed})
            continue
        per_q = {
            Quantity.Z.value: [[r.Z] for r in ok],
            Quantity.MEAN.value: [r.mean for r in ok],
            Quantity.SECOND_MOMENT.value: [r.second_moment for r in ok],
        }
        for q, est in per_q.items():
            if q not in truth:
                continue
            rep = MetricReport.from_runs(q, est, truth[q])
            rows.append(_report_row(m.name, rep, failed))
        if ok[0].reconstruction_mse is not None:
            recon = np.array([r.reconstruction_mse for r in ok])
            rows.append(
                {
                    "method": m.name,
                    "quantity": "RECONSTRUCTION",
                    "rel_mse": float("nan"),
                    "mse": float(np.mean(recon)),
                    "median_se": float(np.median(recon)),
                    "runs": len(ok),
                    "failed": failed,
                    "median": [float(np.median(recon))],
                    "mad": [float(np.median(np.abs(recon - np.median(recon))))],
                    "truth": [0.0],
                }
            )
    return rows


def _report_row(method: str, rep: MetricReport, failed: int) -> dict:
    return {
        "method": method,
        "quantity": rep.quantity,
        "rel_mse": rep.rel_mse,
        "mse": rep.mse,
        "median_se": rep.median_se,
        "runs": rep.runs,
        "failed": failed,
        "median": rep.median.tolist(),
        "mad": rep.mad.tolist(),
        "truth": rep.truth.tolist(),
    }


SUMMARY_COLUMNS = ("method", "quantity", "rel_mse", "mse", "median_se", "runs", "failed")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def per_run_columns(cfg: ExperimentConfig, dim: int) -> list[str]:
    cols = ["method", "run", "seed", "status", "Z"]
    cols += [f"mean_{i}" for i in range(dim)]
    cols += [f"second_moment_{i}" for i in range(dim)]
    if cfg.experiment == "spectral":
        cols.append("reconstruction_mse")
    cols += list(DIAG_FIELDS)
    cols.append("error")
    return cols


def per_run_rows(cfg: ExperimentConfig, results: list[RunResult], dim: int):
    nan = [float("nan")] * dim
    for r in results:
        row = [r.method, r.run, r.seed, r.status, r.Z]
        row += list(r.mean) if r.mean is not None else nan
        row += list(r.second_moment) if r.second_moment is not None else nan
        if cfg.experiment == "spectral":
            row.append(r.reconstruction_mse)
        row += [r.diagnostics.get(k, "") for k in DIAG_FIELDS]
        row.append(r.error)
        yield row


def write_outputs(cfg: ExperimentConfig, results: list[RunResult], out_dir: Path) -> dict:
    """Write summary/per-run/timing (and optional trace) files; returns the paths written."""
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {"summary": "summary.csv", "per_run": "runs.csv", "timing": "timing.csv", **cfg.outputs}
    dim = build_target(cfg, SeededRng(0)).dim
    written = {}
    rows = summarize(cfg, results)

    p = out_dir / outputs["summary"]
    _write_csv(p, SUMMARY_COLUMNS, ([row.get(c, "") for c in SUMMARY_COLUMNS] for row in rows))
    written["summary"] = p
    pj = p.with_suffix(".json")
    pj.write_text(json.dumps({"config": cfg.name, "rows": rows, "budget": budgets(cfg)}, indent=2, default=float) + "\n")
    written["summary_json"] = pj

    p = out_dir / outputs["per_run"]
    _write_csv(p, per_run_columns(cfg, dim), per_run_rows(cfg, results, dim))
    written["per_run"] = p

    if outputs.get("timing"):
        p = out_dir / outputs["timing"]
        _write_csv(p, ("method", "run", "wall_time"), ((r.method, r.run, r.wall_time) for r in results))
        written["timing"] = p

    if outputs.get("trace"):
        written.update(_write_traces(cfg, results, out_dir / outputs["trace"]))
    return written


def _write_traces(cfg: ExperimentConfig, results: list[RunResult], path: Path) -> dict:
    truth = ground_truth(cfg).get(Quantity.MEAN.value)
    ok = [r for r in results if r.status == "ok" and r.trace_mean is not None]
    per_run = []
    by_method: dict[str, list[np.ndarray]] = {}
    for r in ok:
        se = squared_errors(r.trace_mean, truth)
        by_method.setdefault(r.method, []).append(se)
        for t, (z, s) in enumerate(zip(r.trace_z, se), start=1):
            per_run.append((r.method, r.run, t, z, s))
    _write_csv(path, ("method", "run", "iteration", "Z", "mean_sq_error"), per_run)
    med_path = path.with_name(path.stem + "_median" + path.suffix)
    med_rows = []
    for method, ses in by_method.items():
        arr = np.array(ses)
        for t in range(arr.shape[1]):
            med_rows.append((method, t + 1, float(np.median(arr[:, t]))))
    _write_csv(med_path, ("method", "iteration", "median_sq_error"), med_rows)
    return {"trace": path, "trace_median": med_path}


def budgets(cfg: ExperimentConfig) -> dict:
    return {m.name: cfg.sampler_config(m).budget() for m in cfg.methods}


def apply_overrides(cfg: ExperimentConfig, seed=None, replications=None, workers=None) -> ExperimentConfig:
    changes = {}
    if seed is not None:
        _require(seed >= 0, "--seed", "must be >= 0")
        changes["base_seed"] = seed
    if replications is not None:
        _require(replications >= 1, "--replications", "must be >= 1")
        changes["replications"] = replications
    if workers is not None:
        _require(workers >= 1, "--workers", "must be >= 1")
        changes["workers"] = workers
    return replace(cfg, **changes) if changes else cfg


def default_out_dir(cfg: ExperimentConfig) -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "results")) / cfg.name
