"""Timing comparison of the numba and numpy stepping kernels.

Runs the ensemble integrator on a few shapes per backend and prints
path-steps/s plus the numba speedup.  The backend is fixed per process, so
the default (no --backend) mode spawns one subprocess per backend and
merges the results; it also cross-checks that both backends produce the
same ensemble mean to 1e-10.

Usage: python3 benchmarks/bench_kernels.py
"""

import argparse
import json
import os
import subprocess
import sys
import time

CASES = [
    # (d, n_paths, n_steps)
    (1, 2048, 10_000),
    (2, 512, 20_000),
    (2, 4096, 5_000),
    (5, 1024, 10_000),
]


def run_single(backend: str) -> None:
    import numpy as np

    from eprlab.kernels import active_backend
    from eprlab.model import InitialLaw, build_model
    from eprlab.simulate import em_ensemble

    assert active_backend() == backend, active_backend()
    law = InitialLaw()
    for d, n_paths, n_steps in CASES:
        b = -np.eye(d)
        b[0, -1] += 0.5  # weak rotation so the EPR is nonzero for d > 1
        model = build_model(b, np.eye(d))
        dt = 1e-3
        t = n_steps * dt
        em_ensemble(model, law, min(64, n_paths), t, dt, seed=0)  # warm-up
        best = float("inf")
        for _ in range(3):
            t0 = time.perf_counter()
            ens = em_ensemble(model, law, n_paths, t, dt, seed=0)
            best = min(best, time.perf_counter() - t0)
        print("RESULT " + json.dumps({
            "backend": backend, "d": d, "paths": n_paths, "steps": n_steps,
            "seconds": best, "mean_ep": float(ens["ep_t"].mean()),
        }), flush=True)


def run_all() -> None:
    rows = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, EPRLAB_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--backend", backend],
            env=env, capture_output=True, text=True, check=True,
        )
        for line in proc.stdout.splitlines():
            if line.startswith("RESULT "):
                rec = json.loads(line[len("RESULT "):])
                rows.setdefault((rec["d"], rec["paths"], rec["steps"]), {})[
                    rec["backend"]] = rec

    header = f"{'case':>22} {'numpy':>12} {'numba':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for (d, paths, steps), by_backend in rows.items():
        np_rec, nb_rec = by_backend["numpy"], by_backend["numba"]
        rel = abs(np_rec["mean_ep"] - nb_rec["mean_ep"]) / (1.0 + abs(np_rec["mean_ep"]))
        if rel > 1e-10:
            raise SystemExit(f"backend mismatch on d={d}: rel diff {rel:.3e}")
        work = paths * steps
        np_rate = work / np_rec["seconds"]
        nb_rate = work / nb_rec["seconds"]
        case = f"d={d} paths={paths} steps={steps}"
        print(f"{case:>22} {np_rate:>10.3g}/s {nb_rate:>10.3g}/s "
              f"{nb_rate / np_rate:>7.1f}x")
    print("rates are path-steps per second, best of 3; means agree to 1e-10")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--backend", choices=["numpy", "numba"], default=None)
    args = ap.parse_args()
    if args.backend is None:
        run_all()
    else:
        run_single(args.backend)


if __name__ == "__main__":
    main()
