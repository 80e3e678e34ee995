"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver
infeasibility (no threshold reaches the requested clique size).
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import baselines, graph, pod, qubo, reconstruction, synthetic
from ._accel import backend_name
from .experiment import (ConfigError, ExperimentConfig, _window, build_basis, emit_results, load_data,
                         run_placement_experiment)
from .io import (DataFormatError, export_field_image, read_matrix, read_placement, write_csv, write_matrix,
                 write_placement)
from .rng import derive_seed

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INFEASIBLE = 0, 2, 3, 4

log = logging.getLogger("cliquesense")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _global_options(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="flat YAML file of ExperimentConfig fields")
    p.add_argument("--seed", type=int, default=d, help="master seed")
    p.add_argument("--out", default=d, help="output file or directory")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, suppress=True)
    parser = _Parser(prog="cliquesense", description="Sensor placement by maximum clique search over POD rows.")
    _global_options(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate synthetic vortex-street data")
    for name, typ in (("n-v", int), ("n-h", int), ("snapshots", int), ("modes", int), ("convection-speed", float),
                      ("wavelength", float), ("amplitude", float), ("noise-sigma", float)):
        s.add_argument(f"--{name}", type=typ)
    s.add_argument("--clean-out", help="also write the noise-free field here")

    d = sub.add_parser("decompose", parents=[common], help="SVD and rank report")
    d.add_argument("--data", help="matrix file (.spmx or .csv); default: synthetic from config")
    d.add_argument("--rank", help="explicit r or 'hard_threshold'")
    d.add_argument("--noise-level", type=float, help="known noise sigma for the hard threshold")
    d.add_argument("--center", action="store_true", default=None)

    p = sub.add_parser("place", parents=[common], help="compute a sensor placement")
    p.add_argument("--data")
    p.add_argument("--rank")
    p.add_argument("--method", choices=["clique", "greedy", "random"], required=True)
    p.add_argument("--q", type=int, help="sensor count (greedy, random)")
    p.add_argument("--k", type=int, help="candidate count")
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--c", type=float, help="clique threshold")
    grp.add_argument("--q-target", type=int, help="calibrate the threshold to this clique size")
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--sweeps", type=int)
    p.add_argument("--replicas", type=int)

    r = sub.add_parser("reconstruct", parents=[common], help="rebuild fields from a placement")
    r.add_argument("--data")
    r.add_argument("--rank")
    r.add_argument("--placement", required=True, help="placement JSON from 'place'")
    mode = r.add_mutually_exclusive_group()
    mode.add_argument("--pinv", action="store_const", const="pinv", dest="mode")
    mode.add_argument("--lasso", action="store_const", const="lasso", dest="mode")
    r.add_argument("--radius", type=int)
    r.add_argument("--folds", type=int)
    r.add_argument("--reference", help="clean reference matrix for error metrics")
    r.add_argument("--window-start", type=int)
    r.add_argument("--window-length", type=int)

    e = sub.add_parser("evaluate", parents=[common], help="run the full method x q experiment")
    e.add_argument("--data")
    e.add_argument("--no-wall-clock", action="store_true", help="omit timing fields from the report")

    v = sub.add_parser("render", parents=[common], help="write a snapshot as a PGM image")
    v.add_argument("--data", required=True)
    v.add_argument("--column", type=int, default=0)
    v.add_argument("--vmin", type=float)
    v.add_argument("--vmax", type=float)
    v.add_argument("--placement", help="overlay these sensor points")
    return parser


def _config(args, **overrides):
    cfg = ExperimentConfig.load(args.config) if getattr(args, "config", None) else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "data", None):
        overrides["data_path"] = args.data
    rank = getattr(args, "rank", None)
    if rank is not None:
        overrides["rank"] = rank if rank == "hard_threshold" else _int(rank, "rank")
    return cfg.replace(**overrides)


def _int(v, name):
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {v!r}") from None


def _out(args, default):
    return Path(args.out if getattr(args, "out", None) else default)


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_synth(args):
    cfg = _config(args, n_v=args.n_v, n_h=args.n_h, snapshots=args.snapshots, modes=args.modes,
                  convection_speed=args.convection_speed, wavelength=args.wavelength, amplitude=args.amplitude,
                  noise_sigma=args.noise_sigma)
    spec = cfg.synthetic_spec()
    clean, noisy = synthetic.vortex_street(spec)
    out = _out(args, "synthetic.spmx")
    _write_any(noisy, out)
    if args.clean_out:
        _write_any(clean, Path(args.clean_out))
    _print_json({"out": str(out), "shape": list(noisy.shape), "spec": spec.to_dict(),
                 "probes": [list(p) for p in spec.default_probes()]})
    return EXIT_OK


def _write_any(X, path):
    if path.suffix.lower() == ".csv":
        write_csv(X, path)
    else:
        write_matrix(X, path)


def cmd_decompose(args):
    cfg = _config(args, noise_level=args.noise_level, center=args.center)
    exp = load_data(cfg)
    basis, svd = build_basis(cfg, exp.data)
    report = {"shape": list(exp.data.shape), "rank": basis.rank, "rank_policy": cfg.rank,
              "hard_threshold_rank": pod.optimal_hard_threshold_rank(svd.sigma, exp.data.n, exp.data.m,
                                                                     cfg.noise_level),
              "singular_values": [float(s) for s in svd.sigma],
              "energy_fraction": float(np.sum(svd.sigma[:basis.rank] ** 2) / max(np.sum(svd.sigma ** 2), 1e-300))}
    out = _out(args, "decompose")
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(pod.DataMatrix(basis.modes, grid_shape=basis.grid_shape), out / "modes.spmx")
    (out / "decompose.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    _print_json({k: v for k, v in report.items() if k != "singular_values"})
    return EXIT_OK


def cmd_place(args):
    q_hint = args.q_target or args.q or 1
    cfg = _config(args, k=args.k, lambda1=args.lambda1, lambda2=args.lambda2, sweeps=args.sweeps,
                  replicas=args.replicas, q_values=[q_hint])
    exp = load_data(cfg)
    basis, _ = build_basis(cfg, exp.data)
    if cfg.k > exp.data.n:
        raise ConfigError(f"k = {cfg.k} exceeds the {exp.data.n} spatial points")
    cand = graph.select_candidates(exp.data.n, cfg.k, exp.data.grid_shape)
    info = {}
    if args.method == "clique":
        if args.c is None and args.q_target is None and args.q is None:
            raise ConfigError("clique placement needs --c or --q-target")
        wgraph = graph.build_graph(basis, cand)
        q_target = args.q_target if args.q_target is not None else (args.q if args.c is None else None)
        tag = "clique/c" if q_target is None else f"clique/q={q_target}"
        res = qubo.clique_placement(basis, cand, wgraph, q_target=q_target, c=args.c, lambda1=cfg.lambda1,
                                    lambda2=cfg.lambda2, schedule=cfg.anneal_schedule(tag),
                                    probe_schedule=cfg.probe_schedule(tag + "/probe"))
        placement = res.placement
        info = {"energy": res.energy, "penalty_pairs": res.penalty_pairs, "penalty_free": res.penalty_free,
                "threshold": res.threshold, "clique_size_found": res.clique_size}
    else:
        if args.q is None:
            raise ConfigError(f"{args.method} placement needs --q")
        if not 1 <= args.q <= cfg.k:
            raise ConfigError(f"--q must be in [1, {cfg.k}]")
        if args.method == "greedy":
            placement = baselines.greedy_determinant_placement(basis, cand, args.q)
        else:
            placement = baselines.random_placement(cand, args.q, derive_seed(cfg.seed, "random/cli"))
    out = _out(args, "placement.json")
    write_placement(placement, out)
    _print_json({"out": str(out), "method": placement.method, "q": placement.q, **info})
    return EXIT_OK


def cmd_reconstruct(args):
    cfg = _config(args, radius=args.radius, folds=args.folds, reference_path=args.reference,
                  window_start=args.window_start, window_length=args.window_length)
    exp = load_data(cfg)
    basis, _ = build_basis(cfg, exp.data)
    placement = read_placement(args.placement)
    if placement.indices.max() >= exp.data.n:
        raise DataFormatError("dimensions", "placement index beyond the data rows", args.placement)
    mode = args.mode or ("pinv" if exp.clean else "lasso")
    snaps = _window(cfg, exp.data.m)
    ref = exp.reference if exp.reference is not None else exp.data
    if mode == "pinv":
        rep = reconstruction.pinv_pipeline(basis, placement, exp.data, snapshots=snaps, reference=ref,
                                           probes=exp.probes, keep_fields=True)
    else:
        rep = reconstruction.denoise_pipeline(basis, placement, exp.data, radius=cfg.radius, folds=cfg.folds,
                                              snapshots=snaps, reference=ref, probes=exp.probes, keep_fields=True)
    out = _out(args, "reconstruction.spmx")
    write_matrix(pod.DataMatrix(rep.fields, grid_shape=exp.data.grid_shape), out)
    _print_json({"out": str(out), "method": rep.method, "e_reconst": rep.e_reconst,
                 "rmse_by_probe": [float(v) for v in rep.rmse_by_probe], "snapshots": int(snaps.size),
                 **{k: v for k, v in rep.metadata.items()}})
    return EXIT_OK


def cmd_evaluate(args):
    cfg = _config(args)
    if getattr(args, "out", None):
        cfg = cfg.replace(output_dir=args.out)

    def progress(rec):
        status = rec["error"]["kind"] if rec["error"] else f"rmse={rec['rmse_mean']}"
        log.info("%s q=%d trial=%d %s (%.2fs)", rec["method"], rec["q"], rec["trial"], status, rec["wall_clock_s"])

    bundle = run_placement_experiment(cfg, progress=progress)
    path = emit_results(bundle, cfg.output_dir, wall_clock=not args.no_wall_clock)
    for row in bundle.summary:
        print(f"{row['method']:>7} q={row['q']:<5} rmse_mean={_fmt(row['rmse_mean'])} "
              f"rmse_std={_fmt(row['rmse_std'])} e_reconst={_fmt(row['e_reconst_mean'])} ({row['role']})")
    eff = bundle.efficiency
    print(f"efficiency: smallest q with clique(q) <= greedy({eff['factor']}q): {eff['smallest_q']}")
    print(f"report: {path}")
    kinds = {rec["error"]["kind"] for rec in bundle.records if rec["error"]}
    if "infeasible" in kinds:
        return EXIT_INFEASIBLE
    if "data" in kinds:
        return EXIT_DATA
    return EXIT_OK


def _fmt(v):
    return "n/a" if v is None else f"{v:.6g}"


def cmd_render(args):
    X = read_matrix(args.data)
    if X.grid_shape is None:
        raise DataFormatError("grid", "matrix has no grid shape; cannot render", args.data)
    if not 0 <= args.column < X.m:
        raise ConfigError(f"--column must be in [0, {X.m - 1}]")
    col = X.column(args.column)
    amax = float(np.max(np.abs(col[np.isfinite(col)]))) if np.isfinite(col).any() else 1.0
    vmin = -amax if args.vmin is None else args.vmin
    vmax = amax if args.vmax is None else args.vmax
    if not vmin < vmax:
        raise ConfigError(f"render range needs vmin < vmax, got [{vmin}, {vmax}]")
    sensors = read_placement(args.placement).indices if args.placement else None
    out = _out(args, "field.pgm")
    export_field_image(col, X.grid_shape, out, vmin, vmax, sensors=sensors)
    _print_json({"out": str(out), "vmin": vmin, "vmax": vmax})
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "decompose": cmd_decompose, "place": cmd_place, "reconstruct": cmd_reconstruct,
            "evaluate": cmd_evaluate, "render": cmd_render}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    log.debug("backend: %s", backend_name())
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except graph.InfeasibleTarget as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DataFormatError, pod.SvdError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # malformed numeric data (non-finite entries, shape mismatches) surfaces as ValueError
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
