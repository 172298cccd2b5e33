"""Command line interface.

Subcommands: info, simulate, clt, mdp, lil, check.  Every run writes a
manifest.json into --out holding the fully resolved configuration, the
library version, the RNG algorithm id, the active compute backend and a
content hash of the model file; re-running a command with the inputs recorded
in its manifest reproduces every output byte for byte.

Exit codes: 0 all embedded checks passed, 1 a check failed, 2 configuration
error, 3 model validity error, 4 numeric instability.

Environment: EPRLAB_THREADS caps worker threads, EPRLAB_BACKEND selects the
numba or numpy stepping kernels.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__, asymptotics, linalg, reports, simulate
from .kernels import BackendError, active_backend
from .model import (
    InitialLaw,
    ModelError,
    OUModel,
    build_model,
    functional_constants,
    is_reversible,
    model_matrices_from_json,
)
from .rng import RNG_ALGORITHM, RngStream

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_NUMERIC = 4


def _uint64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in uint64")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad list of reals: {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("list of reals must be non-empty")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="eprlab",
        description="Entropy production rate of stationary linear diffusions: "
                    "simulation and fluctuation diagnostics.",
    )
    p.add_argument("--version", action="version", version=f"eprlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, paths_default=None):
        sp.add_argument("--model", required=True, help="model JSON file (B, Sigma)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=_uint64, default=0, help="master seed (uint64)")
        if paths_default is not None:
            sp.add_argument("--paths", type=_positive_int, default=paths_default,
                            help="number of independent paths")
        sp.add_argument("--dt", type=float, default=None,
                        help="time step (default 1e-3*min(1, 1/||B||_2))")

    sp = sub.add_parser("info", help="model summary: ep, reversibility, constants")
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("simulate", help="paths with pathwise EPR samples")
    common(sp, paths_default=1)
    sp.add_argument("--t", type=float, required=True, help="horizon")
    sp.add_argument("--initial-law", default="stationary",
                    help="stationary | shift:m1,m2,...")
    sp.add_argument("--trace-every", type=int, default=0,
                    help="record every k-th step into a trace CSV (0 = off)")

    sp = sub.add_parser("clt", help="ensemble CLT statistics and KS test")
    common(sp, paths_default=2000)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--initial-law", default="stationary")
    sp.add_argument("--t-grid", type=_float_list, default=None,
                    help="extra horizons for sigma2 stabilization")

    sp = sub.add_parser("mdp", help="moderate-deviation tail rate profile")
    common(sp, paths_default=100000)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--initial-law", default="stationary")
    sp.add_argument("--lambda-exponent", type=float, default=0.25)
    sp.add_argument("--thresholds", type=_float_list, required=True,
                    help="comma-separated thresholds x1,x2,...")
    sp.add_argument("--sigma-units", action="store_true",
                    help="interpret thresholds as multiples of sigma_hat")

    sp = sub.add_parser("lil", help="iterated-logarithm running statistic")
    common(sp)
    sp.add_argument("--t", type=float, required=True, help="horizon t_max")
    sp.add_argument("--gamma", type=float, default=1.05,
                    help="geometric checkpoint ratio in (1, 2]")
    sp.add_argument("--sigma2", type=float, default=None,
                    help="sigma2 estimate for the band check (else bands skipped)")

    sp = sub.add_parser("check", help="deterministic and integrability validations")
    common(sp, paths_default=20000)
    sp.add_argument("--t", type=float, default=5.0,
                    help="horizon for the integrability estimate")
    sp.add_argument("--eta", type=float, default=None,
                    help="exponent (default eta_max/2 for the model)")
    sp.add_argument("--t-grid", type=_float_list, default=[0.1, 1.0, 5.0],
                    help="times for the semigroup decay check")

    return p


def _load_model_file(path: str) -> tuple[OUModel, bytes]:
    with open(path, "rb") as fh:
        raw = fh.read()
    b, sigma = model_matrices_from_json(raw.decode("utf-8"))
    return build_model(b, sigma), raw


def _resolve_dt(args, model: OUModel) -> float:
    dt = getattr(args, "dt", None)
    if dt is None:
        return simulate.default_dt(model)
    dt = float(dt)
    if not (dt > 0.0) or not math.isfinite(dt):
        raise ValueError(f"--dt must be positive and finite, got {dt}")
    return dt


def _write(outdir: str, name: str, text: str) -> str:
    path = os.path.join(outdir, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return name


def _manifest(outdir: str, command: str, config: dict, model_path: str,
              model_bytes: bytes, outputs: list[str]) -> None:
    doc = {
        "command": command,
        "config": config,
        "model": model_path,
        "model_sha256": reports.sha256_hex(model_bytes),
        "library_version": __version__,
        "rng_algorithm": RNG_ALGORITHM,
        "backend": active_backend(),
        "outputs": sorted(outputs),
    }
    _write(outdir, "manifest.json", reports.json_text(doc))


def _cmd_info(args) -> int:
    model, raw = _load_model_file(args.model)
    os.makedirs(args.out, exist_ok=True)
    fc = functional_constants(model)
    rev = is_reversible(model)
    doc = {
        "d": model.d,
        "ep": model.ep,
        "reversible": rev,
        "spectral_abscissa": linalg.spectral_abscissa(model.B),
        "decay_rate": fc.decay_rate,
        "poincare_const": fc.poincare_const,
        "lsi_const": fc.lsi_const,
        "eta_max": fc.eta_max,
        "Gamma": model.Gamma,
        "M": model.M,
    }
    outputs = [_write(args.out, "info.json", reports.json_text(doc))]
    _manifest(args.out, "info", {"model": args.model}, args.model, raw, outputs)
    print(f"d = {model.d}")
    print(f"ep = {model.ep:.12g}")
    print(f"reversible = {rev}" + (f"  ({asymptotics.REVERSIBLE_NOTE})" if rev else ""))
    print(f"decay_rate = {fc.decay_rate:.12g}  eta_max = {fc.eta_max:.12g}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    model, raw = _load_model_file(args.model)
    os.makedirs(args.out, exist_ok=True)
    dt = _resolve_dt(args, model)
    law = InitialLaw.parse(args.initial_law)
    if args.trace_every < 0:
        raise ValueError("--trace-every must be >= 0")
    outputs = []
    lines = []
    for i in range(args.paths):
        stream = RngStream(args.seed, i)
        x0 = simulate.sample_initial(model, law, stream)
        sample, trace = simulate.em_path_with_epr(
            model, x0, args.t, dt, stream, trace_every=args.trace_every
        )
        lines.append(reports.json_line(sample.to_json_dict()))
        if trace is not None:
            outputs.append(_write(args.out, f"trace_{i:04d}.csv",
                                  reports.trace_csv(trace, model.d)))
    outputs.append(_write(args.out, "epr_samples.jsonl", "\n".join(lines) + "\n"))
    config = {
        "model": args.model, "seed": args.seed, "paths": args.paths,
        "t": float(args.t), "dt": dt, "initial-law": law.label,
        "trace-every": args.trace_every,
    }
    _manifest(args.out, "simulate", config, args.model, raw, outputs)
    print(f"wrote {args.paths} EPR samples (t = {args.t}, dt = {dt:.6g})")
    return EXIT_OK


def _cmd_clt(args) -> int:
    model, raw = _load_model_file(args.model)
    os.makedirs(args.out, exist_ok=True)
    dt = _resolve_dt(args, model)
    law = InitialLaw.parse(args.initial_law)
    stats = asymptotics.run_ensemble(model, law, args.paths, args.t, dt, args.seed)
    outputs = [_write(args.out, "z_samples.csv", reports.z_samples_csv(stats.z_samples))]
    reversible = stats.note == asymptotics.REVERSIBLE_NOTE
    passed = True if reversible else bool(stats.ks_pvalue > 0.01)
    report = {
        "n_paths": stats.n_paths,
        "t": stats.t,
        "dt": stats.dt,
        "initial_law": stats.initial_law,
        "e_p": stats.e_p,
        "sigma2_hat": stats.sigma2_hat,
        "ks_stat": stats.ks_stat,
        "ks_pvalue": stats.ks_pvalue,
        "z_samples_file": "z_samples.csv",
        "mean_z": stats.mean_z,
        "note": stats.note,
        "passed": passed,
    }
    outputs.append(_write(args.out, "report.json", reports.json_text(report)))
    if args.t_grid:
        grid = asymptotics.estimate_sigma2(model, args.paths, args.t_grid, dt,
                                           args.seed, law=law)
        doc = [{"t": t, "sigma2_hat": s2} for t, s2 in grid]
        outputs.append(_write(args.out, "sigma2_grid.json", reports.json_text(doc)))
    config = {
        "model": args.model, "seed": args.seed, "paths": args.paths,
        "t": float(args.t), "dt": dt, "initial-law": law.label,
    }
    if args.t_grid:
        config["t-grid"] = [float(t) for t in args.t_grid]
    _manifest(args.out, "clt", config, args.model, raw, outputs)
    if reversible:
        print(asymptotics.REVERSIBLE_NOTE)
    else:
        print(f"sigma2_hat = {stats.sigma2_hat:.6g}  ks_stat = {stats.ks_stat:.4g}  "
              f"ks_pvalue = {stats.ks_pvalue:.4g}  {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def _cmd_mdp(args) -> int:
    model, raw = _load_model_file(args.model)
    os.makedirs(args.out, exist_ok=True)
    dt = _resolve_dt(args, model)
    law = InitialLaw.parse(args.initial_law)
    profile = asymptotics.mdp_tail_profile(
        model, args.lambda_exponent, args.thresholds, args.paths, args.t, dt,
        args.seed, sigma_units=args.sigma_units, law=law,
    )
    reversible = profile.note.startswith(asymptotics.REVERSIBLE_NOTE)
    if reversible:
        passed = True
    else:
        ok_band = True
        ok_monotone = bool(np.all(np.diff(profile.empirical_rates) >= 0.0))
        for j in range(profile.thresholds.size):
            if profile.flags[j]:
                continue
            ratio = profile.empirical_rates[j] / profile.theoretical_rates[j]
            if not (0.5 <= ratio <= 1.8):
                ok_band = False
        passed = ok_band and ok_monotone
    outputs = [_write(args.out, "mdp_profile.csv", reports.mdp_csv(profile))]
    report = {
        "n_paths": profile.n_paths,
        "t": profile.t,
        "dt": profile.dt,
        "initial_law": law.label,
        "lambda_exponent": profile.lambda_exponent,
        "lambda_value": profile.lambda_value,
        "sigma2_hat": profile.sigma2_hat,
        "thresholds": profile.thresholds,
        "counts": profile.counts,
        "empirical_rates": profile.empirical_rates,
        "theoretical_rates": profile.theoretical_rates,
        "flags": list(profile.flags),
        "profile_file": "mdp_profile.csv",
        "note": profile.note,
        "passed": passed,
    }
    outputs.append(_write(args.out, "mdp_report.json", reports.json_text(report)))
    config = {
        "model": args.model, "seed": args.seed, "paths": args.paths,
        "t": float(args.t), "dt": dt, "initial-law": law.label,
        "lambda-exponent": float(args.lambda_exponent),
        "thresholds": [float(x) for x in args.thresholds],
        "sigma-units": bool(args.sigma_units),
    }
    _manifest(args.out, "mdp", config, args.model, raw, outputs)
    for j in range(profile.thresholds.size):
        flag = profile.flags[j] or "ok"
        print(f"x = {profile.thresholds[j]:.6g}  empirical = "
              f"{profile.empirical_rates[j]:.6g}  theoretical = "
              f"{profile.theoretical_rates[j]:.6g}  [{flag}]")
    print("PASS" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def _cmd_lil(args) -> int:
    model, raw = _load_model_file(args.model)
    os.makedirs(args.out, exist_ok=True)
    dt = _resolve_dt(args, model)
    trace = asymptotics.lil_running_statistic(model, args.gamma, args.t, dt, args.seed)
    outputs = [_write(args.out, "lil_trace.csv", reports.lil_csv(trace))]
    bands = "not evaluated (pass --sigma2)"
    passed = True
    if trace.note == asymptotics.REVERSIBLE_NOTE:
        bands = asymptotics.REVERSIBLE_NOTE
    elif args.sigma2 is not None:
        if not (args.sigma2 > 0.0):
            raise ValueError("--sigma2 must be positive")
        sig = math.sqrt(args.sigma2)
        run_max = trace.running_max
        run_min = trace.running_min
        max_abs = float(np.max(np.abs(trace.r_values)))
        ok_max = 0.2 * sig < run_max < 1.5 * sig
        ok_min = -1.5 * sig < run_min < -0.2 * sig
        ok_env = max_abs <= 2.0 * sig
        passed = ok_max and ok_min and ok_env
        bands = {
            "sigma_hat": sig,
            "running_max": run_max, "running_max_ok": ok_max,
            "running_min": run_min, "running_min_ok": ok_min,
            "max_abs_r": max_abs, "envelope_ok": ok_env,
        }
    report = {
        "gamma": trace.gamma_checkpoint,
        "t_max": trace.t_max,
        "dt": trace.dt,
        "seed": trace.seed,
        "n_checkpoints": int(trace.checkpoints.size),
        "running_max": trace.running_max,
        "running_min": trace.running_min,
        "trace_file": "lil_trace.csv",
        "bands": bands,
        "note": trace.note,
        "passed": passed,
    }
    outputs.append(_write(args.out, "lil_report.json", reports.json_text(report)))
    config = {
        "model": args.model, "seed": args.seed, "t": float(args.t), "dt": dt,
        "gamma": float(args.gamma),
    }
    if args.sigma2 is not None:
        config["sigma2"] = float(args.sigma2)
    _manifest(args.out, "lil", config, args.model, raw, outputs)
    print(f"checkpoints = {trace.checkpoints.size}  running_max = "
          f"{trace.running_max:.6g}  running_min = {trace.running_min:.6g}")
    print("PASS" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def _cmd_check(args) -> int:
    model, raw = _load_model_file(args.model)
    os.makedirs(args.out, exist_ok=True)
    dt = _resolve_dt(args, model)
    fc = functional_constants(model)

    resid = float(np.linalg.norm(
        model.B @ model.Gamma + model.Gamma @ model.B.T + model.Q, "fro"))
    resid_ok = resid <= 1e-10 * float(np.linalg.norm(model.Q, "fro"))

    dir_rng = RngStream(args.seed, 2**32)
    directions = list(np.eye(model.d))
    for _ in range(8):
        v = dir_rng.standard_normal(model.d)
        directions.append(v / np.linalg.norm(v))
    decay_rows = []
    decay_ok = True
    for v in directions:
        for row in asymptotics.semigroup_decay_check(model, v, args.t_grid):
            decay_rows.append(row)
            decay_ok = decay_ok and row.passed

    eta = args.eta if args.eta is not None else 0.5 * fc.eta_max
    integ = asymptotics.exp_integrability_check(
        model, eta, args.t, args.paths, dt, args.seed)
    bound = asymptotics.exp_integrability_bound(model, eta)
    integ_ok = integ.finite and (not math.isfinite(bound) or integ.rate <= bound * (1 + 1e-9))

    passed = resid_ok and decay_ok and integ_ok
    report = {
        "lyapunov_residual": resid,
        "lyapunov_ok": resid_ok,
        "decay_rate": fc.decay_rate,
        "decay_checks": [
            {"t": r.t, "lhs": r.lhs, "bound": r.bound, "passed": r.passed}
            for r in decay_rows
        ],
        "decay_ok": decay_ok,
        "eta": eta,
        "eta_max": fc.eta_max,
        "integrability_rate": integ.rate,
        "integrability_bound": bound,
        "integrability_finite": integ.finite,
        "integrability_note": integ.note,
        "integrability_ok": integ_ok,
        "passed": passed,
    }
    outputs = [_write(args.out, "check_report.json", reports.json_text(report))]
    config = {
        "model": args.model, "seed": args.seed, "paths": args.paths,
        "t": float(args.t), "dt": dt, "eta": float(eta),
        "t-grid": [float(t) for t in args.t_grid],
    }
    _manifest(args.out, "check", config, args.model, raw, outputs)
    print(f"lyapunov residual = {resid:.3e}  [{'ok' if resid_ok else 'FAIL'}]")
    print(f"semigroup decay: {len(decay_rows)} checks  [{'ok' if decay_ok else 'FAIL'}]")
    print(f"integrability rate = {integ.rate:.6g} (bound {bound:.6g})  "
          f"[{'ok' if integ_ok else 'FAIL'}]")
    print("PASS" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


_HANDLERS = {
    "info": _cmd_info,
    "simulate": _cmd_simulate,
    "clt": _cmd_clt,
    "mdp": _cmd_mdp,
    "lil": _cmd_lil,
    "check": _cmd_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ModelError as exc:
        print(f"error: invalid model: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except simulate.StepUnstableError as exc:
        print(f"error: numeric instability: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ArithmeticError as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (BackendError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: bad configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
