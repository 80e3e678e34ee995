"""Time the hot kernels under numba and under the pure-numpy fallback.

Each backend runs in its own subprocess (the fallback is selected with
CLIQUESENSE_DISABLE_NUMBA=1, exactly as a user would). Besides the timings
the workers save every result so the two paths can be checked for agreement
(integer outputs exactly, floating-point outputs to 1e-12 relative).

    python benchmarks/bench_kernels.py [--repeat 3] [--json out.json]
"""
import argparse
import json
import os
import subprocess
import sys
import tempfile
import time

import numpy as np


def _tasks():
    from cliquesense import graph, pod, qubo, reconstruction
    from cliquesense.placement import Placement

    rng = np.random.default_rng(7)
    X = pod.DataMatrix(rng.standard_normal((1200, 80)))
    basis, _ = pod.pod_basis(X, r=16)
    cand = graph.select_candidates(X.n, 600)

    def weights():
        g = graph.build_graph(basis, cand)
        return g.weights

    wg = graph.build_graph(basis, cand)
    comp = graph.complement(graph.threshold_graph(wg, float(np.quantile(wg.weights, 0.5))))
    problem = qubo.build_qubo(comp)
    sched = qubo.AnnealSchedule(sweeps=200, replicas=1, seed=3)

    def anneal():
        bits, e = qubo.anneal(problem, sched)
        return np.append(bits.astype(np.float64), e)

    small = qubo.qubo_from_edges(18, [(i, j) for i in range(18) for j in range(i + 1, 18) if rng.random() < 0.3])

    def exhaustive():
        bits, e = qubo.exhaustive_solve(small)
        return np.append(bits.astype(np.float64), e)

    place = Placement(indices=np.arange(0, 1200, 15)[:64], method="fixed")
    op = reconstruction.make_operator(basis, place)
    Phi = op.theta @ rng.standard_normal((16, 4)) + 0.05 * rng.standard_normal((64, 4))

    def lasso_cv():
        coefs, lams, bad = reconstruction.lasso_cv_batch(op, Phi, folds=10)
        return np.append(coefs.ravel(), bad)

    return {"pair_weights k=600 r=16": weights, "anneal k=600 200 sweeps": anneal,
            "exhaustive k=18": exhaustive, "lasso_cv q=64 r=16 x4 snapshots": lasso_cv}


def worker(repeat, dump):
    from cliquesense._accel import backend_name
    out = {"backend": backend_name(), "tasks": {}}
    saved = {}
    for i, (name, fn) in enumerate(_tasks().items()):
        t0 = time.perf_counter()
        saved[f"t{i}"] = fn()  # first call includes compilation
        first = time.perf_counter() - t0
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        out["tasks"][name] = {"first_s": first, "best_s": best, "key": f"t{i}"}
    np.savez(dump, **saved)
    print(json.dumps(out))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="write the combined results here")
    ap.add_argument("--worker", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        worker(args.repeat, args.worker)
        return 0
    results = {}
    arrays = {}
    with tempfile.TemporaryDirectory() as tmp:
        for label, flag in (("numba", "0"), ("numpy", "1")):
            env = dict(os.environ, CLIQUESENSE_DISABLE_NUMBA=flag)
            dump = os.path.join(tmp, f"{label}.npz")
            proc = subprocess.run([sys.executable, __file__, "--worker", dump, "--repeat", str(args.repeat)],
                                  env=env, capture_output=True, text=True, check=True)
            results[label] = json.loads(proc.stdout.strip().splitlines()[-1])
            with np.load(dump) as z:
                arrays[label] = {k: z[k] for k in z.files}
    print(f"{'kernel':<34}{'numba s':>10}{'numpy s':>10}{'speedup':>9}  match")
    for name, nb in results["numba"]["tasks"].items():
        npy = results["numpy"]["tasks"][name]
        a, b = arrays["numba"][nb["key"]], arrays["numpy"][npy["key"]]
        ok = a.shape == b.shape and np.allclose(a, b, rtol=1e-12, atol=1e-12 * max(np.abs(a).max(), 1.0))
        match = "yes" if ok else "NO"
        nb["match"] = npy["match"] = bool(ok)
        print(f"{name:<34}{nb['best_s']:>10.4f}{npy['best_s']:>10.4f}{npy['best_s'] / nb['best_s']:>8.1f}x  {match}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
