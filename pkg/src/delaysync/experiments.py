"""Experiment drivers: synchronization sweeps and the fusion benchmark.

Every experiment resolves a flat parameter dict (defaults, then the
config file, then ``--set`` overrides), runs, and writes CSV artifacts
plus a ``manifest.json`` into ``output_dir``.  Identical spec and seed give
byte-identical CSVs.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
from scipy import stats

from . import __version__
from .config import ESTIMATOR_FIELDS, PROFILE_FIELDS, SIM_FIELDS, load_config
from .csvio import HISTOGRAM_SCHEMA, emit_csv, histogram_rows
from .errors import ConfigError
from .evaluation import evaluate_map, filter_frames
from .latency import EstimatorConfig, LatencyEstimate
from .scenario import CANNED, generate_scene, run_pipelines, scenario_config, scenario_from_dict
from .scheduler import (
    ESTIMATE_SCHEMA,
    SchedulerConfig,
    SchedulerMode,
    estimates_rows,
    full_match_rate,
    min_max_delay,
    oracle_estimates,
    reaction_time_stats,
    schedule_log,
)
from .sim import JITTER_TRUNCATION_MS, NodeProfile, SimConfig, TriggerMode, run_simulation

log = logging.getLogger(__name__)

EXPERIMENTS = (
    "timing_hist", "minmax_delay", "sweep_nsigma", "sweep_drop", "sweep_nodes", "fusion_bench",
)

SWEEP_SCHEMA_TAIL = (
    "mode", "full_match_rate", "theoretical", "exact", "reaction_mean_ms", "reaction_p50_ms",
    "reaction_p99_ms", "reaction_max_ms", "max_overrun_ms",
)
SWEEP_PARAM = {"sweep_nsigma": "n_sigma", "sweep_drop": "drop_rate", "sweep_nodes": "num_nodes"}
TABLE_CLASSES = ("car", "person", "truck", "bus", "bicycle")
FUSION_CONFIGS = ("EF", "EF+HD", "LF", "LF+HD")

_SYNC_DEFAULTS: dict[str, Any] = dict(
    num_nodes=8,
    anchor_interval=100.0,
    trigger_jitter_sigma=1.7,
    normal_mu=50.0,
    normal_sigma=10.0,
    abnormal_mu=200.0,
    abnormal_sigma=20.0,
    abnormal_prob=0.0,
    loss_prob=0.0,
    node_profiles=None,
    n_sigma=4.0,
    oracle_estimates=True,
    write_batches=False,
    jobs=1,
    **{k: getattr(EstimatorConfig(), k) for k in ESTIMATOR_FIELDS},
)

DEFAULTS: dict[str, dict[str, Any]] = {
    "timing_hist": dict(_SYNC_DEFAULTS, anchors_per_run=10, bin_width=1.0),
    "minmax_delay": dict(_SYNC_DEFAULTS, anchors_per_run=10, bin_width=1.0),
    "sweep_nsigma": dict(_SYNC_DEFAULTS, n_sigma_values=[2, 3, 4, 5, 6]),
    "sweep_drop": dict(_SYNC_DEFAULTS, drop_values=[0.0, 0.01, 0.02, 0.03, 0.04, 0.05]),
    "sweep_nodes": dict(_SYNC_DEFAULTS, abnormal_prob=0.01, node_values=list(range(4, 15))),
    "fusion_bench": dict(
        scenarios=["roundabout", "crossing", "occlusion_split"],
        scenario=None,
        noiseless=False,
        num_frames=10,
        detect_threshold=15.0,
        eval_iou=0.5,
        nms_iou=0.3,
        pos_noise_sigma=None,
        miss_rate_base=None,
        fp_rate=None,
        fp_outside_map_fraction=None,
        jobs=1,
    ),
}

DEFAULT_ITERATIONS = {
    "timing_hist": 100_000,
    "minmax_delay": 100_000,
    "sweep_nsigma": 100_000,
    "sweep_drop": 100_000,
    "sweep_nodes": 100_000,
    "fusion_bench": 20,
}


@dataclass
class ExperimentSpec:
    experiment: str
    iterations: int | None = None
    seed: int | None = None
    output_dir: Path = Path("out")
    overrides: dict[str, Any] = field(default_factory=dict)
    config_path: Path | None = None
    plot: bool = False

    def __post_init__(self) -> None:
        self.output_dir = Path(self.output_dir)
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.iterations is None:
            self.iterations = DEFAULT_ITERATIONS[self.experiment]
        if int(self.iterations) < 1:
            raise ConfigError("iterations must be >= 1")
        if self.seed is not None and not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


# -- parameter resolution --------------------------------------------------------


def _flatten_file(data: Mapping[str, Any], experiment: str) -> tuple[dict, int | None]:
    """Map a parsed config file onto the flat parameter namespace."""
    flat: dict[str, Any] = {}
    seed = None
    sections = ("sim", "scheduler", "estimator", "experiment", "scenario")
    if not any(k in data for k in sections):
        data = {"sim": data} if set(data) <= set(SIM_FIELDS) else {"experiment": data}
    unknown = set(data) - set(sections)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    sim = dict(data.get("sim") or {})
    bad = set(sim) - set(SIM_FIELDS)
    if bad:
        raise ConfigError(f"unknown SimConfig field(s): {', '.join(sorted(bad))}")
    seed = sim.pop("seed", None)
    for ignored in ("duration", "trigger_mode", "start"):
        if ignored in sim:
            log.info("config field sim.%s is set by the experiment and ignored", ignored)
            sim.pop(ignored)
    profiles = sim.pop("node_profiles", None)
    if profiles:
        for p in profiles:
            bad = set(p) - set(PROFILE_FIELDS)
            if bad:
                raise ConfigError(f"unknown NodeProfile field(s): {', '.join(sorted(bad))}")
        flat["node_profiles"] = [dict(p) for p in profiles]
    flat.update(sim)
    sched = dict(data.get("scheduler") or {})
    sched.pop("mode", None)
    flat.update(sched)
    est = dict(data.get("estimator") or {})
    bad = set(est) - set(ESTIMATOR_FIELDS)
    if bad:
        raise ConfigError(f"unknown EstimatorConfig field(s): {', '.join(sorted(bad))}")
    flat.update(est)
    if data.get("scenario") is not None:
        flat["scenario"] = data["scenario"]
    flat.update(data.get("experiment") or {})
    return flat, seed


def resolve_params(spec: ExperimentSpec) -> tuple[dict[str, Any], int]:
    params = dict(DEFAULTS[spec.experiment])
    seed = 0 if spec.seed is None else int(spec.seed)
    explicit: set[str] = set()
    if spec.config_path is not None:
        flat, file_seed = _flatten_file(load_config(spec.config_path), spec.experiment)
        explicit |= _merge(params, flat, spec.experiment, "config file")
        if file_seed is not None and spec.seed is None:
            seed = int(file_seed)
    explicit |= _merge(params, spec.overrides, spec.experiment, "--set")
    if spec.experiment == "fusion_bench" and params["noiseless"] and "scenarios" not in explicit:
        # the busy canned scenes include deliberately hidden objects, so the
        # noiseless benchmark defaults to the scene where everything is seen
        params["scenarios"] = ["full_view"]
    _validate(params, spec.experiment)
    return params, seed


def _merge(params: dict, updates: Mapping[str, Any], experiment: str, origin: str) -> set[str]:
    seen = set()
    for key, value in updates.items():
        bare = key.split(".")[-1]
        if bare not in params:
            raise ConfigError(f"{origin}: parameter {key!r} is not valid for {experiment}")
        params[bare] = value
        seen.add(bare)
    return seen


def _validate(p: dict, experiment: str) -> None:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    if experiment == "fusion_bench":
        names = p["scenarios"] if isinstance(p["scenarios"], list) else [p["scenarios"]]
        p["scenarios"] = names
        need(all(n in CANNED for n in names) or p["scenario"] is not None,
             f"scenarios must be drawn from {CANNED}")
        need(int(p["num_frames"]) >= 1, "num_frames must be >= 1")
        need(0 < float(p["eval_iou"]) <= 1 and 0 < float(p["nms_iou"]) <= 1, "IoU thresholds must lie in (0, 1]")
        need(int(p["jobs"]) >= 1, "jobs must be >= 1")
        return
    need(int(p["num_nodes"]) >= 1, "num_nodes must be >= 1")
    need(float(p["anchor_interval"]) > 0, "anchor_interval must be > 0")
    need(float(p["trigger_jitter_sigma"]) >= 0, "trigger_jitter_sigma must be >= 0")
    need(float(p["n_sigma"]) > 0, "n_sigma must be > 0")
    need(0 <= float(p["abnormal_prob"]) <= 1, "abnormal_prob must lie in [0, 1]")
    need(int(p["jobs"]) >= 1, "jobs must be >= 1")
    if "anchors_per_run" in p:
        need(int(p["anchors_per_run"]) >= 2, "anchors_per_run must be >= 2")
        need(float(p["bin_width"]) > 0, "bin_width must be > 0")
    for key in ("n_sigma_values", "drop_values", "node_values"):
        if key in p:
            need(isinstance(p[key], list) and len(p[key]) > 0, f"{key} must be a non-empty list")
    if "n_sigma_values" in p:
        need(all(float(v) > 0 for v in p["n_sigma_values"]), "n_sigma values must be > 0")
    if "drop_values" in p:
        need(all(0 <= float(v) <= 1 for v in p["drop_values"]), "drop values must lie in [0, 1]")
    if "node_values" in p:
        need(all(int(v) >= 1 for v in p["node_values"]), "node counts must be >= 1")
    try:
        estimator_config(p).validate()
        for prof in _profiles(p, int(p["num_nodes"])):
            prof.validate(float(p["anchor_interval"]))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# -- building blocks -------------------------------------------------------------


def derive_seed(seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def estimator_config(p: Mapping[str, Any]) -> EstimatorConfig:
    return EstimatorConfig(**{k: p[k] for k in ESTIMATOR_FIELDS})


def _profiles(p: Mapping[str, Any], num_nodes: int, abnormal_prob: float | None = None):
    prob = float(p["abnormal_prob"]) if abnormal_prob is None else abnormal_prob
    if p.get("node_profiles"):
        profs = [NodeProfile(**d) for d in p["node_profiles"]]
        if abnormal_prob is not None:
            profs = [replace(q, abnormal_prob=prob) for q in profs]
        if len(profs) not in (1, num_nodes):
            raise ConfigError(f"expected 1 or {num_nodes} node_profiles, got {len(profs)}")
        return profs
    return [NodeProfile(
        normal_mu=float(p["normal_mu"]), normal_sigma=float(p["normal_sigma"]),
        abnormal_mu=float(p["abnormal_mu"]), abnormal_sigma=float(p["abnormal_sigma"]),
        abnormal_prob=prob, loss_prob=float(p["loss_prob"]),
    )]


def sim_config(
    p: Mapping[str, Any],
    seed: int,
    anchors: int,
    mode: TriggerMode = TriggerMode.SYNCHRONIZED,
    num_nodes: int | None = None,
    abnormal_prob: float | None = None,
) -> SimConfig:
    n = int(p["num_nodes"]) if num_nodes is None else int(num_nodes)
    interval = float(p["anchor_interval"])
    return SimConfig(
        num_nodes=n,
        anchor_interval=interval,
        duration=max(anchors - 1, 1) * interval,
        trigger_mode=mode,
        trigger_jitter_sigma=float(p["trigger_jitter_sigma"]),
        node_profiles=_profiles(p, n, abnormal_prob),
        seed=seed,
    )


def _jitter_var(cfg: SimConfig) -> float:
    if cfg.trigger_mode is not TriggerMode.SYNCHRONIZED or cfg.trigger_jitter_sigma == 0:
        return 0.0
    b = JITTER_TRUNCATION_MS / cfg.trigger_jitter_sigma
    return float(stats.truncnorm.var(-b, b, scale=cfg.trigger_jitter_sigma))


def exact_full_match(cfg: SimConfig, estimates: list[LatencyEstimate], n_sigma: float) -> float:
    """Probability that every node beats the deadline under the true mixture."""
    span = max(e.mu + n_sigma * e.sigma for e in estimates)
    jv = _jitter_var(cfg)
    oracle = oracle_estimates(cfg)
    prob = 1.0
    for node_id in range(cfg.num_nodes):
        prof = cfg.profile(node_id)
        shift = oracle[node_id].mu - prof.normal_mu
        sn = math.sqrt(prof.normal_sigma**2 + jv)
        sa = math.sqrt(prof.abnormal_sigma**2 + jv)
        pn = stats.norm.cdf(span, prof.normal_mu + shift, sn) if sn > 0 else float(span >= prof.normal_mu + shift)
        pa = stats.norm.cdf(span, prof.abnormal_mu + shift, sa) if sa > 0 else float(span >= prof.abnormal_mu + shift)
        prob *= ((1 - prof.abnormal_prob) * pn + prof.abnormal_prob * pa) * (1 - prof.loss_prob)
    return float(prob)


def _sweep_point(args) -> tuple[list[tuple], list]:
    """Simulate once and schedule for every n_sigma; returns CSV rows and batch tables."""
    p, cfg, param_value, n_sigmas, theory_fn, keep_tables = args
    log_ = run_simulation(cfg)
    oracle = oracle_estimates(cfg)
    est = oracle if p["oracle_estimates"] else None
    rows, tables = [], []
    naive = schedule_log(log_, SchedulerConfig(n_sigmas[0], SchedulerMode.NAIVE_WAIT_ALL), oracle)
    for n in n_sigmas:
        adaptive = schedule_log(log_, SchedulerConfig(n, SchedulerMode.ADAPTIVE), est, estimator_config(p))
        pv = n if param_value is None else param_value
        for mode, table in ((SchedulerMode.ADAPTIVE, adaptive), (SchedulerMode.NAIVE_WAIT_ALL, naive)):
            rs = reaction_time_stats(table)
            is_adaptive = mode is SchedulerMode.ADAPTIVE
            theory = theory_fn(n, cfg) if is_adaptive else 1.0
            exact = exact_full_match(cfg, adaptive.estimates, n) if is_adaptive else 1.0
            overrun = float(np.max(table.trigger_ms - table.deadline_ms)) if is_adaptive else float("nan")
            rows.append((pv, mode.value, full_match_rate(table), theory, exact,
                         rs.mean, rs.p50, rs.p99, rs.max, overrun))
        if keep_tables:
            tables.append((pv, adaptive, naive))
    return rows, tables


def _pool_map(fn: Callable, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _theory_nsigma(n, cfg):
    return float(stats.norm.cdf(n) ** cfg.num_nodes)


def _theory_drop(n, cfg):
    return float((1 - cfg.profile(0).abnormal_prob) ** cfg.num_nodes)


# -- experiments -----------------------------------------------------------------


@dataclass
class ExperimentResult:
    files: list[Path]
    data: dict[str, Any]


def _write_batches(out: Path, prefix: str, tables) -> list[Path]:
    files = []
    for pv, adaptive, naive in tables:
        tag = f"{pv:g}" if isinstance(pv, float) else str(pv)
        files.append(adaptive.to_csv(out / f"{prefix}_batches_adaptive_{tag}.csv"))
        files.append(naive.to_csv(out / f"{prefix}_batches_naive_{tag}.csv"))
    return files


def run_sweep(spec: ExperimentSpec, p: dict, seed: int) -> ExperimentResult:
    exp = spec.experiment
    anchors = int(spec.iterations)
    keep = bool(p["write_batches"])
    if exp == "sweep_nsigma":
        cfg = sim_config(p, seed, anchors)
        points = [(p, cfg, None, [float(v) for v in p["n_sigma_values"]], _theory_nsigma, keep)]
    elif exp == "sweep_drop":
        points = [
            (p, sim_config(p, seed, anchors, abnormal_prob=float(v)), float(v),
             [float(p["n_sigma"])], _theory_drop, keep)
            for v in p["drop_values"]
        ]
    else:
        points = [
            (p, sim_config(p, seed, anchors, num_nodes=int(v)), int(v),
             [float(p["n_sigma"])], _theory_drop, keep)
            for v in p["node_values"]
        ]
    results = _pool_map(_sweep_point, points, int(p["jobs"]))
    rows = [r for rows, _ in results for r in rows]
    out = spec.output_dir
    schema = (SWEEP_PARAM[exp],) + SWEEP_SCHEMA_TAIL
    files = [emit_csv(rows, schema, out / f"{exp}.csv")]
    # estimator snapshot at the nominal point
    snap_cfg = points[0][1]
    est = schedule_log(run_simulation(snap_cfg), SchedulerConfig(float(p["n_sigma"])),
                       None if not p["oracle_estimates"] else oracle_estimates(snap_cfg),
                       estimator_config(p)).estimates
    files.append(emit_csv(estimates_rows(est), ESTIMATE_SCHEMA, out / f"{exp}_estimates.csv"))
    if keep:
        files += _write_batches(out, exp, [t for _, tables in results for t in tables])
    return ExperimentResult(files, {"rows": rows, "schema": schema})


def _many_runs(p: dict, seed: int, total_anchors: int, mode: TriggerMode):
    """Timing errors and per-anchor spreads over independent short runs."""
    per_run = int(p["anchors_per_run"])
    runs = max(1, math.ceil(total_anchors / per_run))
    errors, spreads = [], []
    oracle_est = None
    for r in range(runs):
        cfg = sim_config(p, derive_seed(seed, r), per_run, mode)
        lg = run_simulation(cfg)
        if oracle_est is None or mode is TriggerMode.NAIVE_ASYNC:
            oracle_est = oracle_estimates(cfg)
        table = schedule_log(lg, SchedulerConfig(float(p["n_sigma"])), oracle_est)
        errors.append(lg.timing_errors)
        spreads.append(min_max_delay(table))
    return np.concatenate(errors), np.concatenate(spreads)


MODE_TAG = {TriggerMode.SYNCHRONIZED: "synchronized", TriggerMode.NAIVE_ASYNC: "naive"}


def run_timing(spec: ExperimentSpec, p: dict, seed: int) -> ExperimentResult:
    out = spec.output_dir
    half = float(p["anchor_interval"]) / 2
    bw = float(p["bin_width"])
    files, summary, data = [], [], {}
    for mode in (TriggerMode.SYNCHRONIZED, TriggerMode.NAIVE_ASYNC):
        errors, spreads = _many_runs(p, seed, int(spec.iterations), mode)
        tag = MODE_TAG[mode]
        if spec.experiment == "timing_hist":
            lo = -math.ceil(half / bw) * bw
            files.append(emit_csv(histogram_rows(errors, bw, lo, -lo), HISTOGRAM_SCHEMA,
                                  out / f"timing_errors_{tag}.csv"))
            ks = stats.kstest(errors, stats.uniform(loc=-half, scale=2 * half).cdf).statistic
            summary.append((tag, len(errors), errors.mean(), errors.std(ddof=1),
                            float(np.mean(np.abs(errors) <= 5.0)), float(ks)))
            data[tag] = errors
        else:
            hi = math.ceil(2 * half / bw) * bw
            files.append(emit_csv(histogram_rows(spreads, bw, 0.0, hi), HISTOGRAM_SCHEMA,
                                  out / f"minmax_delay_{tag}.csv"))
            p50, p99 = np.percentile(spreads, [50, 99])
            summary.append((tag, len(spreads), spreads.mean(), p50, p99, spreads.max()))
            data[tag] = spreads
    if spec.experiment == "timing_hist":
        schema = ("mode", "samples", "mean_ms", "std_ms", "within_5ms", "ks_uniform")
        files.append(emit_csv(summary, schema, out / "timing_summary.csv"))
    else:
        schema = ("mode", "anchors", "mean_ms", "p50_ms", "p99_ms", "max_ms")
        files.append(emit_csv(summary, schema, out / "minmax_summary.csv"))
    data["summary"] = summary
    return ExperimentResult(files, data)


def _bench_draw(args):
    p, draw, seed, name = args
    draw_seed = derive_seed(seed, draw)
    noise = {k: p[k] for k in ("pos_noise_sigma", "miss_rate_base", "fp_rate", "fp_outside_map_fraction")
             if p[k] is not None}
    extra = dict(num_frames=int(p["num_frames"]), detect_threshold=float(p["detect_threshold"]))
    if p["scenario"] is not None:
        data = dict(p["scenario"], seed=draw_seed)
        data.update({k: v for k, v in extra.items() if k not in p["scenario"]})
        if noise or p["noiseless"]:
            data.setdefault("noiseless", bool(p["noiseless"]))
            data.update(noise)
        cfg = scenario_from_dict(data)
    else:
        cfg = scenario_config(name, draw_seed, bool(p["noiseless"]), **noise, **extra)
    frames = generate_scene(cfg, draw_seed)
    outp = run_pipelines(cfg, frames, draw_seed, float(p["nms_iou"]))
    preds = {"EF": outp.early, "LF": outp.late}
    if cfg.drivable_map is not None:
        preds["EF+HD"] = filter_frames(outp.early, cfg.drivable_map)
        preds["LF+HD"] = filter_frames(outp.late, cfg.drivable_map)
    else:
        preds["EF+HD"], preds["LF+HD"] = outp.early, outp.late
    ordered = {k: [preds[k][f.anchor_time] for f in frames] for k in FUSION_CONFIGS}
    return frames, ordered, outp.early_bytes, outp.late_bytes


def run_fusion_bench(spec: ExperimentSpec, p: dict, seed: int) -> ExperimentResult:
    names = p["scenarios"]
    draws = [(p, d, seed, names[d % len(names)]) for d in range(int(spec.iterations))]
    results = _pool_map(_bench_draw, draws, int(p["jobs"]))
    frames = [f for r in results for f in r[0]]
    preds = {k: [fp for r in results for fp in r[1][k]] for k in FUSION_CONFIGS}
    early_bytes = [b for r in results for b in r[2]]
    late_bytes = [b for r in results for b in r[3]]
    bytes_pf = {
        "EF": float(np.mean(early_bytes)), "EF+HD": float(np.mean(early_bytes)),
        "LF": float(np.mean(late_bytes)), "LF+HD": float(np.mean(late_bytes)),
    }
    out = spec.output_dir
    files, table, evals = [], [], {}
    for key in FUSION_CONFIGS:
        res = evaluate_map(preds[key], frames, float(p["eval_iou"]))
        evals[key] = res
        slug = key.lower().replace("+", "_")
        files.append(res.to_csv(out / f"eval_{slug}.csv"))
        table.append((key, *[res.per_class[c].ap if c in res.per_class else float("nan")
                             for c in TABLE_CLASSES], res.mean_ap, bytes_pf[key]))
    schema = ("config",) + TABLE_CLASSES + ("all", "bytes_per_frame")
    files.insert(0, emit_csv(table, schema, out / "fusion_bench.csv"))
    bw_rows = [
        ("EF", float(np.mean(early_bytes)) / 12, 12, bytes_pf["EF"]),
        ("LF", float(np.mean(late_bytes)) / 30, 30, bytes_pf["LF"]),
    ]
    files.append(emit_csv(bw_rows, ("config", "units_per_frame", "bytes_per_unit", "bytes_per_frame"),
                          out / "bandwidth.csv"))
    return ExperimentResult(files, {"table": table, "schema": schema, "evals": evals})


RUNNERS = {
    "timing_hist": run_timing,
    "minmax_delay": run_timing,
    "sweep_nsigma": run_sweep,
    "sweep_drop": run_sweep,
    "sweep_nodes": run_sweep,
    "fusion_bench": run_fusion_bench,
}


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, Path):
        return str(v)
    return v


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Run ``spec`` and write its CSVs, optional figures and ``manifest.json``."""
    params, seed = resolve_params(spec)
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    result = RUNNERS[spec.experiment](spec, params, seed)
    if spec.plot:
        from .plotting import render

        result.files += render(spec.experiment, result.data, spec.output_dir)
    manifest = {
        "experiment": spec.experiment,
        "seed": seed,
        "iterations": int(spec.iterations),
        "overrides": _jsonable(spec.overrides),
        "config": str(spec.config_path) if spec.config_path else None,
        "params": _jsonable(params),
        "files": sorted(f.name for f in result.files),
        "tool": "delaysync",
        "version": __version__,
    }
    path = spec.output_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    result.files.append(path)
    return result
