"""Compare the numba and pure-numpy kernel backends.

Each backend runs in its own interpreter because the backend is fixed at
import time by ``FRACSTEER_BACKEND``. Timings are best-of-``--repeat`` wall
clock after one warm-up call (which absorbs numba compilation). Results from
the two backends are also compared numerically.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--json out.json]
"""

import argparse
import json
import os
import subprocess
import sys
import time

CASES = ("ml_series", "ml_contour", "volterra_sweep", "hat_weights", "gramian", "heat_sweep")


def _child(repeat):
    import numpy as np

    from fracsteer import _backend, _kernels, _quadrature
    from fracsteer.controllability import assemble_gramian, regularization_sweep
    from fracsteer.experiments import load_config

    rng = np.random.default_rng(0)
    z_series = rng.uniform(-2.0, 2.0, 200_000)
    z_contour = -rng.uniform(2.0, 200.0, 200_000)
    size = 2000
    lower = np.tril(rng.uniform(-1.0, 1.0, (size, size)) / size) + np.eye(size)
    rhs = rng.uniform(-1.0, 1.0, size)
    nodes = np.linspace(0.0, 1.0, 801)
    cfg = load_config(preset="heat")

    def run_gramian():
        return assemble_gramian(cfg.kernel()).matrix

    def run_sweep():
        K = cfg.kernel()
        rows = regularization_sweep(K, cfg.target, cfg.a_grid, cfg.time_grid())
        return np.array([r.terminal_error for r in rows])

    jobs = {
        "ml_series": lambda: _kernels.mittag_leffler_array(0.75, 0.75, z_series)[0],
        "ml_contour": lambda: _kernels.mittag_leffler_array(0.75, 0.75, z_contour)[0],
        "volterra_sweep": lambda: _kernels.volterra_sweep(lower, rhs),
        "hat_weights": lambda: _quadrature.hat_weights(0.75, 4.0, nodes),
        "gramian": run_gramian,
        "heat_sweep": run_sweep,
    }
    report = {"backend": "numba" if _backend.USE_NUMBA else "numpy", "times": {}, "checksums": {}}
    for name in CASES:
        out = jobs[name]()  # warm-up (and numba compilation)
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            out = jobs[name]()
            best = min(best, time.perf_counter() - t0)
        report["times"][name] = best
        report["checksums"][name] = np.asarray(out, dtype=float).ravel()[:64].tolist()
    json.dump(report, sys.stdout)


def _run_backend(backend, repeat):
    env = dict(os.environ, FRACSTEER_BACKEND=backend)
    proc = subprocess.run([sys.executable, __file__, "--child", "--repeat", str(repeat)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--json", metavar="PATH", help="also write the raw results here")
    parser.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args(argv)
    if args.child:
        _child(args.repeat)
        return 0

    import numpy as np

    fast = _run_backend("numba", args.repeat)
    slow = _run_backend("numpy", args.repeat)
    print(f"{'case':<16}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'max |diff|':>14}")
    for name in CASES:
        tf, ts = fast["times"][name], slow["times"][name]
        a = np.array(fast["checksums"][name])
        b = np.array(slow["checksums"][name])
        diff = float(np.max(np.abs(a - b))) if a.size else 0.0
        print(f"{name:<16}{tf:>12.4f}{ts:>12.4f}{ts / tf:>10.1f}{diff:>14.2e}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"numba": fast, "numpy": slow}, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
