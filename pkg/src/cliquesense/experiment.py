"""Experiment configuration, the method x q x trial loop and result emission."""
import csv
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import yaml

from . import baselines, graph, pod, qubo, reconstruction, synthetic
from .io import DataFormatError, read_matrix
from .rng import derive_seed

RESULT_FORMAT_VERSION = 1
METHODS = ("clique", "greedy", "random")
RECON_MODES = ("auto", "pinv", "lasso")


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


@dataclass
class ExperimentConfig:
    # data source: a matrix file, or the synthetic generator when data_path is None
    data_path: Optional[str] = None
    reference_path: Optional[str] = None
    n_v: int = 128
    n_h: int = 128
    snapshots: int = 512
    modes: int = 8
    convection_speed: float = 2.0
    wavelength: float = 64.0
    amplitude: float = 1.0
    noise_sigma: float = 0.01
    # rank policy: an explicit r, or "hard_threshold"
    rank: Union[int, str] = 32
    noise_level: Optional[float] = None
    center: bool = False
    k: int = 2000
    methods: List[str] = field(default_factory=lambda: list(METHODS))
    q_values: List[int] = field(default_factory=lambda: [30, 60, 96, 128, 215, 276])
    lambda1: float = 1.0
    lambda2: float = 2.0
    clique_threshold: Optional[float] = None
    sweeps: int = 2000
    temp_start: float = 4.0
    temp_end: float = 0.01
    replicas: int = 4
    probe_sweeps: int = 200
    probe_replicas: int = 1
    random_trials: int = 32
    reconstruction: str = "auto"
    radius: int = 1
    folds: int = 10
    lambda_count: int = 50
    lambda_ratio: float = 1e-4
    probes: Optional[List[List[int]]] = None
    window_start: int = 0
    window_length: Optional[int] = None
    efficiency_factor: int = 4
    reference_rows: bool = True
    output_dir: str = "results"
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("n_v", "n_h", "snapshots", "modes", "k", "sweeps", "replicas", "probe_sweeps",
                     "probe_replicas", "random_trials", "folds", "lambda_count", "efficiency_factor"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.radius < 0:
            raise ConfigError(f"radius must be >= 0, got {self.radius}")
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        if not self.methods:
            raise ConfigError("method list is empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; choose from {list(METHODS)}")
        if not self.q_values:
            raise ConfigError("q list is empty")
        for q in self.q_values:
            if isinstance(q, bool) or not isinstance(q, (int, np.integer)) or not 1 <= q <= self.k:
                raise ConfigError(f"q values must be integers in [1, k={self.k}], got {q!r}")
        if not 0 < self.lambda1 < self.lambda2:
            raise ConfigError(f"need 0 < lambda1 < lambda2, got {self.lambda1}, {self.lambda2}")
        if isinstance(self.rank, str):
            if self.rank != "hard_threshold":
                raise ConfigError(f"rank must be an integer or 'hard_threshold', got {self.rank!r}")
        elif isinstance(self.rank, bool) or self.rank < 1:
            raise ConfigError(f"rank must be positive, got {self.rank}")
        if self.reconstruction not in RECON_MODES:
            raise ConfigError(f"reconstruction must be one of {list(RECON_MODES)}")
        if not 0 < self.lambda_ratio < 1:
            raise ConfigError("lambda_ratio must be in (0, 1)")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be nonnegative")
        if self.window_start < 0 or (self.window_length is not None and self.window_length < 1):
            raise ConfigError("evaluation window must have start >= 0 and a positive length")
        if self.probes is not None:
            for p in self.probes:
                if len(p) != 2:
                    raise ConfigError(f"probe points are [row, col] pairs, got {p!r}")
        try:
            qubo.AnnealSchedule(sweeps=self.sweeps, temp_start=self.temp_start, temp_end=self.temp_end,
                                replicas=self.replicas)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_mapping(cls, data):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("config must be a key-value mapping")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(map(str, unknown))}")
        for key, val in data.items():
            if isinstance(val, dict):
                raise ConfigError(f"config is flat; key {key!r} holds a nested mapping")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
        return cls.from_mapping(data)

    def replace(self, **changes):
        d = self.to_dict()
        d.update({k: v for k, v in changes.items() if v is not None})
        return type(self).from_mapping(d)

    def to_dict(self):
        return asdict(self)

    def synthetic_spec(self):
        return synthetic.SyntheticSpec(n_v=self.n_v, n_h=self.n_h, snapshots=self.snapshots, modes=self.modes,
                                       convection_speed=self.convection_speed, wavelength=self.wavelength,
                                       amplitude=self.amplitude, noise_sigma=self.noise_sigma,
                                       seed=derive_seed(self.seed, "synthetic"))

    def anneal_schedule(self, tag):
        return qubo.AnnealSchedule(sweeps=self.sweeps, temp_start=self.temp_start, temp_end=self.temp_end,
                                   replicas=self.replicas, seed=derive_seed(self.seed, tag))

    def probe_schedule(self, tag):
        return qubo.AnnealSchedule(sweeps=self.probe_sweeps, temp_start=self.temp_start, temp_end=self.temp_end,
                                   replicas=self.probe_replicas, seed=derive_seed(self.seed, tag))


@dataclass
class ExperimentData:
    data: pod.DataMatrix
    reference: Optional[pod.DataMatrix]
    probes: list
    clean: bool
    source: dict


def load_data(cfg):
    """Data matrix, optional clean reference and probe points for a config."""
    if cfg.data_path is None:
        spec = cfg.synthetic_spec()
        clean, noisy = synthetic.vortex_street(spec)
        probes = cfg.probes if cfg.probes is not None else spec.default_probes()
        return ExperimentData(data=noisy, reference=clean, probes=[tuple(p) for p in probes],
                              clean=spec.noise_sigma == 0, source={"synthetic": spec.to_dict()})
    data = read_matrix(cfg.data_path)
    data.check_finite()
    reference = None
    if cfg.reference_path is not None:
        reference = read_matrix(cfg.reference_path)
        reference.check_finite()
        if reference.shape != data.shape:
            raise DataFormatError("dimensions", f"reference shape {reference.shape} != data shape {data.shape}",
                                  cfg.reference_path)
    probes = [tuple(p) for p in (cfg.probes or [])]
    return ExperimentData(data=data, reference=reference, probes=probes, clean=reference is None,
                          source={"data_path": str(cfg.data_path), "reference_path": cfg.reference_path})


def build_basis(cfg, data):
    r = None if cfg.rank == "hard_threshold" else int(cfg.rank)
    if r is None:
        svd = pod.compute_svd(data, center=cfg.center)
        r = pod.optimal_hard_threshold_rank(svd.sigma, data.n, data.m, cfg.noise_level)
        basis = pod.truncate(svd, r, data.grid_shape)
    else:
        basis, svd = pod.pod_basis(data, r=r, center=cfg.center)
    return basis, svd


def _window(cfg, m):
    if cfg.window_start >= m:
        raise ConfigError(f"window_start {cfg.window_start} beyond the {m} snapshots")
    stop = m if cfg.window_length is None else min(m, cfg.window_start + cfg.window_length)
    return np.arange(cfg.window_start, stop)


@dataclass
class ResultBundle:
    config: dict
    data_info: dict
    records: list
    summary: list
    efficiency: dict
    references: list
    timing: dict
    format_version: int = RESULT_FORMAT_VERSION

    def to_dict(self, wall_clock=True):
        d = asdict(self)
        if not wall_clock:
            d.pop("timing")
            for rec in d["records"]:
                rec.pop("wall_clock_s", None)
        return d


class _Evaluator:
    def __init__(self, cfg, exp, basis):
        self.cfg = cfg
        self.exp = exp
        self.basis = basis
        self.snaps = _window(cfg, exp.data.m)
        mode = cfg.reconstruction
        if mode == "auto":
            mode = "pinv" if exp.clean else "lasso"
        self.mode = mode
        self.grid = reconstruction.default_lambda_grid(cfg.lambda_count, cfg.lambda_ratio)

    def __call__(self, placement):
        ref = self.exp.reference if self.exp.reference is not None else self.exp.data
        if self.mode == "pinv":
            rep = reconstruction.pinv_pipeline(self.basis, placement, self.exp.data, snapshots=self.snaps,
                                               reference=ref, probes=self.exp.probes)
        else:
            if self.exp.data.grid_shape is None:
                raise DataFormatError("grid", "the denoising path needs image-shaped data")
            rep = reconstruction.denoise_pipeline(self.basis, placement, self.exp.data, radius=self.cfg.radius,
                                                  folds=self.cfg.folds, snapshots=self.snaps, reference=ref,
                                                  probes=self.exp.probes, relative_grid=self.grid)
        return rep


def _record(method, q, trial, seed, role="main"):
    return {"method": method, "q": int(q), "trial": int(trial), "role": role, "seed": seed,
            "placement": None, "q_actual": None, "e_reconst": None, "rmse_mean": None, "rmse_by_probe": None,
            "energy": None, "penalty_pairs": None, "penalty_free": None, "threshold": None,
            "clique_size_found": None, "params": None, "reconstruction": None, "error": None,
            "wall_clock_s": None}


def _fill_eval(rec, rep):
    rec["e_reconst"] = _num(rep.e_reconst)
    rec["rmse_mean"] = _num(rep.rmse_mean)
    rec["rmse_by_probe"] = [_num(v) for v in rep.rmse_by_probe]
    rec["reconstruction"] = {k: _num(v) if isinstance(v, float) else v for k, v in rep.metadata.items()}
    rec["reconstruction"]["method"] = rep.method


def _num(v):
    v = float(v)
    return v if np.isfinite(v) else None


def _error_entry(exc):
    if isinstance(exc, graph.InfeasibleTarget):
        kind = "infeasible"
    elif isinstance(exc, (DataFormatError, pod.SvdError)):
        kind = "data"
    else:
        kind = "stage"
    return {"kind": kind, "type": type(exc).__name__, "message": str(exc)}


def _run_record(rec, place, evaluate):
    t0 = time.perf_counter()
    try:
        placement, extra = place()
        rec["placement"] = [int(i) for i in placement.indices]
        rec["q_actual"] = placement.q
        rec["params"] = _jsonable(placement.params)
        rec.update(extra)
        _fill_eval(rec, evaluate(placement))
    except Exception as exc:  # a failing record must not abort the others
        rec["error"] = _error_entry(exc)
    rec["wall_clock_s"] = time.perf_counter() - t0
    return rec


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def run_placement_experiment(cfg, data=None, progress=None):
    """Run every method x q (x trial) record of ``cfg`` and assemble a ResultBundle.

    ``data`` may be a preloaded :class:`ExperimentData`; ``progress`` is an
    optional callable receiving each finished record.
    """
    t_start = time.perf_counter()
    exp = data if data is not None else load_data(cfg)
    t0 = time.perf_counter()
    basis, svd = build_basis(cfg, exp.data)
    t_svd = time.perf_counter() - t0
    if cfg.k > exp.data.n:
        raise ConfigError(f"k = {cfg.k} exceeds the {exp.data.n} spatial points")
    cand = graph.select_candidates(exp.data.n, cfg.k, exp.data.grid_shape)
    need_graph = "clique" in cfg.methods
    t0 = time.perf_counter()
    wgraph = graph.build_graph(basis, cand) if need_graph else None
    t_graph = time.perf_counter() - t0
    evaluate = _Evaluator(cfg, exp, basis)
    records = []

    def done(rec):
        records.append(rec)
        if progress is not None:
            progress(rec)

    q_main = sorted(set(int(q) for q in cfg.q_values))
    for method in METHODS:
        if method not in cfg.methods:
            continue
        if method == "clique":
            qs = [None] if cfg.clique_threshold is not None else q_main
            for q in qs:
                done(_clique_record(cfg, basis, cand, wgraph, q, evaluate))
        elif method == "greedy":
            for q in q_main:
                done(_greedy_record(basis, cand, q, evaluate, "main"))
        else:
            for q in q_main:
                for t in range(cfg.random_trials):
                    seed = derive_seed(cfg.seed, f"random/q={q}/trial={t}")
                    rec = _record("random", q, t, seed)
                    done(_run_record(rec, lambda s=seed, qq=q: (baselines.random_placement(cand, qq, s), {}),
                                     evaluate))

    # extra greedy runs at factor * q for the sensor-efficiency report
    if "clique" in cfg.methods and "greedy" in cfg.methods and cfg.clique_threshold is None:
        for q in q_main:
            qq = cfg.efficiency_factor * q
            if qq <= cfg.k and qq not in q_main:
                done(_greedy_record(basis, cand, qq, evaluate, "efficiency"))

    records.sort(key=_record_key)
    summary = summarize(records)
    refs = reference_rows(cfg, exp, evaluate.snaps) if cfg.reference_rows else []
    data_info = {"shape": list(exp.data.shape), "grid_shape": list(exp.data.grid_shape or []) or None,
                 "rank": basis.rank, "rank_policy": cfg.rank, "singular_values_head": [float(s) for s in svd.sigma[:64]],
                 "hard_threshold_rank": pod.optimal_hard_threshold_rank(svd.sigma, exp.data.n, exp.data.m,
                                                                        cfg.noise_level),
                 "candidates": cand.k, "max_pair_weight": float(wgraph.max_weight) if wgraph is not None else None,
                 "probes": [list(p) for p in exp.probes], "window": [int(evaluate.snaps[0]), int(evaluate.snaps.size)],
                 "reconstruction": evaluate.mode, "source": exp.source}
    timing = {"svd_s": t_svd, "graph_s": t_graph, "total_s": time.perf_counter() - t_start}
    return ResultBundle(config=_jsonable(cfg.to_dict()), data_info=_jsonable(data_info), records=records,
                        summary=summary, efficiency=efficiency_report(summary, cfg.efficiency_factor),
                        references=refs, timing=timing)


def _record_key(rec):
    return (METHODS.index(rec["method"]), rec["q"], rec["trial"], rec["role"])


def _greedy_record(basis, cand, q, evaluate, role):
    rec = _record("greedy", q, 0, None, role)
    return _run_record(rec, lambda: (baselines.greedy_determinant_placement(basis, cand, q), {}), evaluate)


def _clique_record(cfg, basis, cand, wgraph, q, evaluate):
    tag = "clique/c" if q is None else f"clique/q={q}"
    sched = cfg.anneal_schedule(tag)
    rec = _record("clique", 0 if q is None else q, 0, sched.seed)

    def place():
        if q is None:
            res = qubo.clique_placement(basis, cand, wgraph, c=cfg.clique_threshold, lambda1=cfg.lambda1,
                                        lambda2=cfg.lambda2, schedule=sched)
        else:
            res = qubo.clique_placement(basis, cand, wgraph, q_target=q, lambda1=cfg.lambda1, lambda2=cfg.lambda2,
                                        schedule=sched, probe_schedule=cfg.probe_schedule(tag + "/probe"))
        if q is None:
            rec["q"] = res.placement.q
        extra = {"energy": float(res.energy), "penalty_pairs": int(res.penalty_pairs),
                 "penalty_free": bool(res.penalty_free and res.energy == -cfg.lambda1 * res.placement.q),
                 "threshold": float(res.threshold), "clique_size_found": int(res.clique_size)}
        if res.calibration is not None:
            extra["calibration_probes"] = [[float(c), int(s)] for c, s in res.calibration.probes]
        return res.placement, extra

    return _run_record(rec, place, evaluate)


def summarize(records):
    """One row per (method, q, role): mean/std of the per-trial probe RMSE and e_reconst."""
    groups = {}
    for rec in records:
        groups.setdefault((rec["method"], rec["q"], rec["role"]), []).append(rec)
    rows = []
    for (method, q, role), recs in sorted(groups.items(), key=lambda kv: (METHODS.index(kv[0][0]), kv[0][1], kv[0][2])):
        ok = [r for r in recs if r["error"] is None and r["rmse_mean"] is not None]
        row = {"method": method, "q": q, "role": role, "trials": len(recs), "failed": len(recs) - len(ok),
               "rmse_mean": None, "rmse_std": None, "e_reconst_mean": None, "per_trial": [r["rmse_mean"] for r in ok]}
        if ok:
            st = baselines.trial_statistics(row["per_trial"])
            row["rmse_mean"] = st.mean
            row["rmse_std"] = st.std_dev
            es = [r["e_reconst"] for r in ok if r["e_reconst"] is not None]
            row["e_reconst_mean"] = float(np.mean(es)) if es else None
        rows.append(row)
    return rows


def efficiency_report(summary, factor=4):
    """Compare clique(q) with greedy at ``factor * q`` and find the greedy q matching each clique RMSE."""
    clique = {r["q"]: r["rmse_mean"] for r in summary if r["method"] == "clique" and r["rmse_mean"] is not None}
    greedy = {r["q"]: r["rmse_mean"] for r in summary if r["method"] == "greedy" and r["rmse_mean"] is not None}
    pairs = []
    for q in sorted(clique):
        gq = greedy.get(factor * q)
        matching = [g for g in sorted(greedy) if greedy[g] <= clique[q]]
        pairs.append({"q": q, "clique_rmse": clique[q], "greedy_q": factor * q, "greedy_rmse": gq,
                      "clique_le_greedy": None if gq is None else bool(clique[q] <= gq),
                      "smallest_greedy_q_matching": matching[0] if matching else None,
                      "sensor_ratio": q / matching[0] if matching else None})
    hits = [p["q"] for p in pairs if p["clique_le_greedy"]]
    return {"factor": factor, "pairs": pairs, "smallest_q": min(hits) if hits else None,
            "ratio": 1.0 / factor if hits else None}


def reference_rows(cfg, exp, snaps):
    """Probe RMSE of the raw and of the mean-filtered data against the clean reference."""
    if exp.reference is None or not exp.probes or exp.data.grid_shape is None:
        return []
    gs = exp.data.grid_shape
    idx = np.asarray([p[0] * gs[1] + p[1] for p in exp.probes])
    ref = exp.reference.values[np.ix_(idx, snaps)]
    raw = exp.data.values[np.ix_(idx, snaps)]
    filt = reconstruction.filter_at_points(exp.data.values[:, snaps], gs, idx, cfg.radius)
    rows = []
    for name, vals in (("raw", raw), (f"filter_r{cfg.radius}", filt)):
        rm = [reconstruction.probe_rmse(vals[i], ref[i]) for i in range(len(idx))]
        rows.append({"method": name, "rmse_mean": float(np.mean(rm)), "rmse_by_probe": [float(v) for v in rm]})
    return rows


RECORD_COLUMNS = ["method", "q", "trial", "role", "seed", "q_actual", "e_reconst", "rmse_mean", "energy",
                  "penalty_pairs", "penalty_free", "threshold", "clique_size_found", "error"]
SUMMARY_COLUMNS = ["method", "q", "rmse_mean", "rmse_std", "role", "trials", "failed", "e_reconst_mean"]


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, dict):
        return f"{v.get('kind')}: {v.get('message')}"
    return str(v)


def emit_results(bundle, path, wall_clock=True):
    """Write report.json, records.csv and summary.csv under directory ``path``."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        report = bundle.to_dict(wall_clock=wall_clock)
        (out / "report.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True,
                                                    allow_nan=False) + "\n")
        with open(out / "records.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RECORD_COLUMNS)
            for rec in bundle.records:
                w.writerow([_cell(rec.get(c)) for c in RECORD_COLUMNS])
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_COLUMNS)
            for row in bundle.summary:
                w.writerow([_cell(row.get(c)) for c in SUMMARY_COLUMNS])
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc
    return out / "report.json"


def empty_bundle(cfg=None):
    return ResultBundle(config=_jsonable((cfg or ExperimentConfig()).to_dict()), data_info={}, records=[],
                        summary=[], efficiency=efficiency_report([]), references=[], timing={})
