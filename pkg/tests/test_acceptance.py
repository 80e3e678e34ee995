"""Acceptance criteria, one test per criterion.

Each test prints ``PASS [n] ...`` or ``FAIL [n] ...`` with the measured
numbers before asserting; the lines are repeated at the end of the pytest
run. Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import json
import os
import subprocess
import sys
import time
from pathlib import Path

import networkx as nx
import numpy as np
import pytest

from cliquesense import experiment as ex, graph, io, pod, qubo, reconstruction as rc
from cliquesense.io import DataMatrix
from cliquesense.placement import Placement
from cliquesense.rng import SplitMix64, derive_seed
from conftest import ACCEPTANCE

BENCHMARK = Path(__file__).resolve().parents[1] / "benchmarks" / "synthetic_benchmark.yaml"


def verdict(n, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{n}] {title}: {detail}"
    ACCEPTANCE.append(line)
    sys.__stdout__.write("\n" + line + "\n")
    sys.__stdout__.flush()
    assert ok, line


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def benchmark_run():
    cfg = ex.ExperimentConfig.load(BENCHMARK)
    bundle, secs = _timed(ex.run_placement_experiment, cfg)
    return cfg, bundle, secs


@pytest.fixture(scope="module")
def exact_run(tmp_path_factory):
    rng = np.random.default_rng(derive_seed(0, "acceptance/exact"))
    A = rng.standard_normal((4096, 10)) @ rng.standard_normal((10, 200))
    path = tmp_path_factory.mktemp("exact") / "clean.spmx"
    io.write_matrix(DataMatrix(A, grid_shape=(64, 64)), path)
    cfg = ex.ExperimentConfig(data_path=str(path), rank=10, k=1000, q_values=[10, 20], random_trials=32,
                              reconstruction="pinv", seed=0)
    bundle, secs = _timed(ex.run_placement_experiment, cfg)
    return bundle, secs


def _comp_graph(k, p, rng):
    A = np.triu(rng.random((k, k)) < p, 1)
    A = A | A.T
    return graph.ThresholdGraph(adjacency=A, threshold=0.0, complemented=True, vertex_map=np.arange(k))


def test_c1_annealer_optimality():
    t0 = time.perf_counter()
    optimal = valid = 0
    n = 200
    for i in range(n):
        rng = np.random.default_rng(derive_seed(1, f"acceptance/c1/{i}"))
        comp = _comp_graph(int(rng.integers(8, 21)), 0.3, rng)
        problem = qubo.build_qubo(comp, 1.0, 2.0)
        sched = qubo.AnnealSchedule.default_for(1.0, 2.0, seed=derive_seed(1, f"acceptance/c1/{i}/anneal"))
        bits, _ = qubo.anneal(problem, sched)
        bits = qubo.repair_to_independent_set(comp, bits)
        _, e_opt = qubo.exhaustive_solve(problem)
        valid += qubo.penalty_pairs(problem, bits) == 0
        optimal += qubo.energy(problem, bits) == e_opt
    secs = time.perf_counter() - t0
    ok = optimal >= 0.95 * n and valid == n and secs < 30
    verdict(1, "annealer optimality", ok,
            f"{optimal}/{n} optimal (need >= {int(0.95 * n)}), {valid}/{n} independent sets, {secs:.1f} s (< 30 s)")


def test_c2_penalty_free(exact_run, benchmark_run):
    recs = [r for b in (exact_run[0], benchmark_run[1]) for r in b.records if r["method"] == "clique"]
    bad = [(r["q"], r["energy"], r["error"]) for r in recs
           if r["error"] is not None or r["energy"] != -r["q"] or r["penalty_pairs"] != 0 or r["q_actual"] != r["q"]]
    verdict(2, "penalty-free clique solutions", not bad and len(recs) > 0,
            f"{len(recs)} clique records, energy == -q exactly in {len(recs) - len(bad)}" + (f"; bad: {bad}" if bad else ""))


def test_c3_exact_recovery(exact_run):
    bundle, secs = exact_run
    worst = {}
    ok = secs < 60
    parts = []
    for q in (10, 20):
        rec = {m: [r for r in bundle.records if r["method"] == m and r["q"] == q and r["role"] == "main"]
               for m in ("clique", "greedy", "random")}
        good = {m: sum(r["error"] is None and r["e_reconst"] <= 1e-8 for r in v) for m, v in rec.items()}
        worst[q] = max(r["e_reconst"] for v in rec.values() for r in v if r["error"] is None)
        ok &= good["clique"] == 1 and good["greedy"] == 1 and good["random"] >= 30
        parts.append(f"q={q}: clique {good['clique']}/1, greedy {good['greedy']}/1, random {good['random']}/32, "
                     f"max e_reconst {worst[q]:.1e}")
    verdict(3, "exact recovery", ok, "; ".join(parts) + f"; {secs:.1f} s (< 60 s)")


def _rmse(summary, method, q):
    rows = [s for s in summary if s["method"] == method and s["q"] == q and s["role"] == "main"]
    return rows[0]["rmse_mean"] if rows else None


def test_c4_ordering(benchmark_run):
    cfg, bundle, secs = benchmark_run
    ok = secs < 600
    parts = []
    for q in (32, 64, 128):
        c, g, r = (_rmse(bundle.summary, m, q) for m in ("clique", "greedy", "random"))
        ok &= c is not None and r is not None and c < r
        parts.append(f"q={q}: clique {c:.4g} < random {r:.4g}")
    c, g = _rmse(bundle.summary, "clique", 128), _rmse(bundle.summary, "greedy", 128)
    ok &= c <= 1.05 * g
    parts.append(f"q=128: clique {c:.4g} <= 1.05 x greedy {g:.4g}")
    verdict(4, "qualitative ordering", ok, "; ".join(parts) + f"; {secs:.0f} s (< 600 s)")


def test_c5_efficiency_report(benchmark_run, tmp_path):
    cfg, bundle, _ = benchmark_run
    ex.emit_results(bundle, tmp_path)
    eff = json.loads((tmp_path / "report.json").read_text())["efficiency"]
    ok = eff["factor"] == 4 and "smallest_q" in eff and "ratio" in eff and len(eff["pairs"]) == len(cfg.q_values)
    pairs = ", ".join(f"clique({p['q']}) vs greedy({p['greedy_q']}): {p['clique_le_greedy']}" for p in eff["pairs"])
    verdict(5, "sensor-efficiency report", ok,
            f"smallest q with clique(q) <= greedy(4q) = {eff['smallest_q']}, ratio {eff['ratio']} (reported); {pairs}")


def _kkt(A, phi, coef, lam):
    q = A.shape[0]
    g = A.T @ (phi - A @ coef) / q
    act = coef != 0
    res = np.zeros_like(coef)
    res[act] = np.abs(g[act] - lam * np.sign(coef[act]))
    res[~act] = np.maximum(np.abs(g[~act]) - lam, 0)
    return float(res.max(initial=0.0))


def test_c6_lasso():
    rng = np.random.default_rng(derive_seed(6, "acceptance/c6"))
    worst_soft = worst_ls = worst_kkt = 0.0
    for _ in range(50):
        q, r = int(rng.integers(16, 80)), int(rng.integers(1, 17))
        Q, _ = np.linalg.qr(rng.standard_normal((q, r)))
        theta = Q * np.sqrt(q)
        phi = rng.standard_normal(q)
        for lam in (0.0, 0.01, 0.1, 0.5):
            z = theta.T @ phi / q
            expect = np.sign(z) * np.maximum(np.abs(z) - lam, 0)
            worst_soft = max(worst_soft, np.abs(rc.lasso_fit(theta, phi, lam).coef - expect).max())
        A = rng.standard_normal((q, min(r, q - 1)))
        basis = pod.PodBasis(modes=A, singular_values=np.ones(A.shape[1]))
        op = rc.make_operator(basis, Placement(indices=np.arange(q), method="fixed"))
        worst_ls = max(worst_ls, np.abs(rc.lasso_fit(op, phi, 0.0).coef - rc.pinv_coefficients(op, phi)).max())
    for _ in range(100):
        q, r = int(rng.integers(5, 80)), int(rng.integers(1, 17))
        A = rng.standard_normal((q, r))
        phi = rng.standard_normal(q)
        lam = float(rng.uniform(0.001, 1.0)) * np.abs(A.T @ phi).max() / q
        worst_kkt = max(worst_kkt, _kkt(A, phi, rc.lasso_fit(A, phi, lam).coef, lam))
    ok = worst_soft <= 1e-8 and worst_ls <= 1e-6 and worst_kkt <= 1e-6
    verdict(6, "LASSO correctness", ok, f"soft-threshold max err {worst_soft:.1e} (<= 1e-8), lambda=0 vs pinv "
            f"{worst_ls:.1e} (<= 1e-6), KKT residual max {worst_kkt:.1e} over 100 instances (<= 1e-6)")


def test_c7_linear_algebra():
    rng = np.random.default_rng(derive_seed(7, "acceptance/c7"))
    shapes = [(512, 256), (256, 512), (300, 40), (64, 64), (17, 5), (5, 17)]
    shapes += [tuple(int(v) for v in rng.integers(2, 257, 2)) for _ in range(14)]
    recon = ortho = mp = 0.0
    for n, m in shapes:
        X = rng.standard_normal((n, m)) * rng.uniform(0.01, 100)
        svd = pod.compute_svd(DataMatrix(X))
        p = svd.sigma.size
        recon = max(recon, np.linalg.norm(X - (svd.U * svd.sigma) @ svd.V.T) / np.linalg.norm(X))
        ortho = max(ortho, np.abs(svd.U.T @ svd.U - np.eye(p)).max(), np.abs(svd.V.T @ svd.V - np.eye(p)).max())
        A = X / np.linalg.norm(X, 2)
        P, _ = rc.pinv_svd(A)
        mp = max(mp, np.abs(A @ P @ A - A).max(), np.abs(P @ A @ P - P).max() / max(np.abs(P).max(), 1),
                 np.abs((A @ P).T - A @ P).max(), np.abs((P @ A).T - P @ A).max())
    ok = recon <= 1e-10 and ortho <= 1e-10 and mp <= 1e-10
    verdict(7, "linear-algebra invariants", ok, f"{len(shapes)} matrices up to 512x256: reconstruction {recon:.1e}, "
            f"orthonormality {ortho:.1e}, Moore-Penrose {mp:.1e} (all <= 1e-10)")


def _max_clique(tg):
    G = nx.Graph()
    G.add_nodes_from(range(tg.order))
    G.add_edges_from(map(tuple, tg.edges()))
    return max(len(c) for c in nx.find_cliques(G))


def test_c8_graph_properties():
    rng = np.random.default_rng(derive_seed(8, "acceptance/c8"))
    sym = cs = par = scale = 0.0
    for _ in range(500):
        r = int(rng.integers(1, 33))
        u, v = rng.standard_normal(r) * 10 ** rng.uniform(-3, 3), rng.standard_normal(r) * 10 ** rng.uniform(-3, 3)
        a = float(rng.choice([-1, 1]) * 10 ** rng.uniform(-3, 3))
        w = graph.pair_weight(u, v)
        bound = np.linalg.norm(u) * np.linalg.norm(v)
        sym = max(sym, abs(w - graph.pair_weight(v, u)) / bound)
        cs = max(cs, (w - bound) / bound)
        par = max(par, graph.pair_weight(u, a * u) / (abs(a) * np.linalg.norm(u) ** 2))
        scale = max(scale, abs(graph.pair_weight(a * u, v) - abs(a) * w) / (abs(a) * bound))
    mono_edges = mono_clique = True
    for _ in range(40):
        k = int(rng.integers(4, 21))
        basis = pod.pod_basis(DataMatrix(rng.standard_normal((k, 12))), r=int(rng.integers(2, min(k, 8))))[0]
        wg = graph.build_graph(basis, graph.select_candidates(k, k))
        prev_edges, prev_size = None, None
        for c in np.quantile(wg.weights, np.linspace(0, 1, 9)):
            tg = graph.threshold_graph(wg, float(max(c, 0.0)))
            edges = {tuple(e) for e in tg.edges()}
            size = _max_clique(tg)
            _, e_min = qubo.exhaustive_solve(qubo.build_qubo(graph.complement(tg)))
            mono_clique &= -e_min == size
            if prev_edges is not None:
                mono_edges &= edges <= prev_edges
                mono_clique &= size <= prev_size
            prev_edges, prev_size = edges, size
    ok = max(sym, cs, par, scale) <= 1e-12 and mono_edges and mono_clique
    verdict(8, "graph and weight properties", ok,
            f"symmetry {sym:.1e}, Cauchy-Schwarz excess {max(cs, 0):.1e}, parallel {par:.1e}, scale {scale:.1e} "
            f"(<= 1e-12); edge monotonicity {mono_edges}, clique monotonicity vs oracle {mono_clique}")


TRACE_SCRIPT = r"""
import hashlib, sys
import numpy as np
from cliquesense import qubo
from cliquesense.rng import derive_seed
rng = np.random.default_rng(derive_seed(9, "acceptance/c9/graph"))
edges = [(i, j) for i in range(60) for j in range(i + 1, 60) if rng.random() < 0.3]
p = qubo.qubo_from_edges(60, edges)
res = qubo.anneal(p, qubo.AnnealSchedule(sweeps=500, replicas=3, seed=42), return_trace=True)
print(hashlib.sha256(res.traces.tobytes() + res.bits.tobytes()).hexdigest())
"""


def test_c9_determinism_and_formats(tmp_path):
    cfg = ex.ExperimentConfig(n_v=24, n_h=32, snapshots=64, modes=3, wavelength=12.0, rank=8, k=200,
                              q_values=[10, 16], random_trials=3, sweeps=200, replicas=2, probe_sweeps=60,
                              window_length=12, seed=9)
    runs = [ex.run_placement_experiment(cfg) for _ in range(2)]
    for i, b in enumerate(runs):
        ex.emit_results(b, tmp_path / str(i), wall_clock=False)
    reports_equal = all((tmp_path / "0" / f).read_bytes() == (tmp_path / "1" / f).read_bytes()
                        for f in ("report.json", "records.csv", "summary.csv"))
    placements_equal = [(r["placement"], r["energy"]) for r in runs[0].records] == \
                       [(r["placement"], r["energy"]) for r in runs[1].records]

    rng = np.random.default_rng(derive_seed(9, "acceptance/c9/matrix"))
    X = DataMatrix(rng.standard_normal((48, 7)) * 10.0 ** rng.integers(-300, 300, (48, 7)), grid_shape=(6, 8))
    io.write_matrix(X, tmp_path / "m.spmx")
    io.write_csv(X, tmp_path / "m.csv")
    roundtrip = all(np.array_equal(Y.values, X.values) and Y.grid_shape == X.grid_shape
                    for Y in (io.read_matrix(tmp_path / "m.spmx"), io.read_matrix(tmp_path / "m.csv")))
    roundtrip &= io.encode_matrix(io.read_matrix(tmp_path / "m.spmx")) == (tmp_path / "m.spmx").read_bytes()

    stream = SplitMix64(0)
    generator = [stream.next_u64() for _ in range(3)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    digests = set()
    for flag in ("0", "0", "1"):
        env = dict(os.environ, CLIQUESENSE_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", TRACE_SCRIPT], env=env, capture_output=True, text=True,
                             check=True, timeout=600)
        digests.add(out.stdout.strip())
    trajectories = len(digests) == 1
    ok = reports_equal and placements_equal and roundtrip and generator and trajectories
    verdict(9, "determinism and formats", ok,
            f"reports byte-identical {reports_equal}, placements/energies identical {placements_equal}, "
            f"SPMX/CSV round trip bit-exact {roundtrip}, generator reference {generator}, "
            f"anneal trajectories identical across 3 runs (numba x2, numpy) {trajectories}")


def test_c10_pipeline_budget(benchmark_run):
    cfg, bundle, secs = benchmark_run
    shape_ok = (cfg.k == 2000 and cfg.rank == 32 and max(cfg.q_values) == 128 and cfg.random_trials == 32
                and set(cfg.methods) == {"clique", "greedy", "random"})
    failed = sum(r["error"] is not None for r in bundle.records)
    ok = shape_ok and failed == 0 and secs < 900
    verdict(10, "desk-scale pipeline budget", ok,
            f"k={cfg.k}, r={cfg.rank}, q={cfg.q_values}, {cfg.random_trials} random trials, "
            f"{len(bundle.records)} records ({failed} failed) in {secs:.0f} s single process (< 900 s)")
