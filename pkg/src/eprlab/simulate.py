"""Path simulation and the pathwise entropy production sample.

Exact transition stepping (for sampling and oracles) and Euler-Maruyama
co-simulation of the state with the two entropy accumulators

    martingale  M_t = int (M X_s)^T Sigma dW_s
    qvar        <M>_t = int (M X_s)^T Q (M X_s) ds

so that a_t = M_t + qvar/2 and ep_t = a_t/t estimates the entropy
production rate.  Both integrands use the left endpoint of each step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels, linalg
from .model import InitialLaw, OUModel
from .rng import RngStream


class StepUnstableError(ArithmeticError):
    """State or accumulator became non-finite during stepping."""

    def __init__(self, message: str, step: int, path: int = 0):
        super().__init__(message)
        self.step = step
        self.path = path


@dataclass(frozen=True)
class EprSample:
    """One path's entropy production sample over [0, t_end]."""

    t_end: float
    dt: float
    seed: int
    stream: int
    martingale: float
    qvar: float
    a_t: float
    ep_t: float
    x_final: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "t_end": self.t_end,
            "dt": self.dt,
            "seed": self.seed,
            "stream": self.stream,
            "martingale": self.martingale,
            "qvar": self.qvar,
            "a_t": self.a_t,
            "ep_t": self.ep_t,
        }


@dataclass(frozen=True)
class PathTrace:
    """Decimated state/EPR history: rows (t, x, a_t/t)."""

    times: np.ndarray
    states: np.ndarray
    epr_running: np.ndarray


def default_dt(model: OUModel) -> float:
    """Default step 1e-3 * min(1, 1/||B||_2)."""
    return 1e-3 * min(1.0, 1.0 / np.linalg.norm(model.B, 2))


def check_dt_stability(model: OUModel, dt: float) -> None:
    """Require dt * ||B||_2 < 0.1, the explicit-Euler stability guard."""
    dt = float(dt)
    if not math.isfinite(dt) or dt <= 0.0:
        raise ValueError(f"dt must be positive and finite, got {dt}")
    prod = dt * float(np.linalg.norm(model.B, 2))
    if prod >= 0.1:
        raise ValueError(
            f"dt too large for stable stepping: dt*||B||_2 = {prod:.3e} >= 0.1 "
            f"(default dt for this model is {default_dt(model):.3e})"
        )


def n_steps_for(t_end: float, dt: float) -> int:
    t_end = float(t_end)
    if not math.isfinite(t_end) or t_end <= 0.0:
        raise ValueError(f"t_end must be positive and finite, got {t_end}")
    n = int(round(t_end / dt))
    if n < 1:
        raise ValueError(f"t_end = {t_end} is shorter than one step of dt = {dt}")
    return n


def sample_stationary(model: OUModel, rng: RngStream, n: int | None = None) -> np.ndarray:
    """Draw from the invariant law N(0, Gamma); shape (d,) or (n, d)."""
    chol = linalg.cholesky(model.Gamma)
    if n is None:
        return chol @ rng.standard_normal(model.d)
    return rng.standard_normal((int(n), model.d)) @ chol.T


def sample_initial(model: OUModel, law: InitialLaw, rng: RngStream) -> np.ndarray:
    """Draw one initial state from N(mean, Gamma)."""
    x = sample_stationary(model, rng)
    if law.mean is None:
        return x
    if law.mean.shape != (model.d,):
        raise ValueError(
            f"initial law mean has dimension {law.mean.size}, model has d = {model.d}"
        )
    return law.mean + x


def exact_transition_factors(model: OUModel, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """(e^{delta B}, lower Cholesky factor of Gamma_delta) for exact stepping.

    A NotPositiveDefiniteError from the factorization signals a numerically
    degenerate step covariance; increase delta.
    """
    from .model import transition_params

    e, g = transition_params(model, delta)
    return e, linalg.cholesky(g)


def exact_step(
    model: OUModel,
    x,
    delta: float,
    rng: RngStream,
    params: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """One exact transition: x' = e^{delta B} x + L_delta z, z ~ N(0, I).

    x may be a single state (d,) or a batch (n, d) advanced with independent
    noise per row.  Pass params=exact_transition_factors(model, delta) when
    stepping in a loop to avoid recomputing the matrix exponential.
    """
    x = np.asarray(x, dtype=np.float64)
    e, chol = params if params is not None else exact_transition_factors(model, delta)
    if x.ndim == 2:
        return x @ e.T + rng.standard_normal(x.shape) @ chol.T
    return e @ x + chol @ rng.standard_normal(model.d)


def exact_chain(model: OUModel, x0, n_steps: int, delta: float, rng: RngStream) -> np.ndarray:
    """States (n_steps+1, d) of a chain of exact transitions started at x0."""
    e, chol = exact_transition_factors(model, delta)
    x = np.asarray(x0, dtype=np.float64).copy()
    out = np.empty((n_steps + 1, model.d))
    out[0] = x
    chunk = max(1, min(65536, (1 << 22) // max(1, model.d)))
    k = 0
    while k < n_steps:
        m = min(chunk, n_steps - k)
        z = rng.standard_normal((m, model.d))
        for j in range(m):
            x = e @ x + chol @ z[j]
            out[k + j + 1] = x
        k += m
    return out


def time_average_epr_integrand(model: OUModel, t_end: float, dt: float, rng: RngStream) -> float:
    """Time average of the entropy production integrand along an exact-step path.

    The chain starts from a stationary draw, so every sampled state has the
    invariant law exactly and the average is an unbiased estimator of ep with
    no discretization bias.  Serves as an independent oracle for the closed
    form and for the Euler-Maruyama accumulators.
    """
    n = n_steps_for(t_end, dt)
    e, chol = exact_transition_factors(model, dt)
    qt = model.Qtilde
    x = sample_stationary(model, rng)
    total = 0.0
    chunk = max(1, min(65536, (1 << 22) // max(1, model.d)))
    k = 0
    while k < n:
        m = min(chunk, n - k)
        z = rng.standard_normal((m, model.d))
        for j in range(m):
            total += x @ qt @ x
            x = e @ x + chol @ z[j]
        k += m
    return 0.5 * total / n


def _kernel_args(model: OUModel) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    b = np.ascontiguousarray(model.B)
    sig = np.ascontiguousarray(model.Sigma)
    g = np.ascontiguousarray(model.M.T @ model.Sigma)
    qt = np.ascontiguousarray(model.Qtilde)
    return b, sig, g, qt


def _locate_bad_step(xstart, z, b, sig, g, qt, dt, mart0, qsum0) -> int:
    """Replay a chunk in plain numpy and return the first step index (within
    the chunk) at which the state or an accumulator leaves the finite range."""
    sdt = math.sqrt(dt)
    x = xstart.copy()
    mart = mart0
    qsum = qsum0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(z.shape[0]):
            dw = sdt * z[k]
            qsum += x @ qt @ x
            mart += x @ (g @ dw)
            x = x + dt * (b @ x) + sig @ dw
            if not (np.all(np.isfinite(x)) and math.isfinite(mart) and math.isfinite(qsum)):
                return k
    return z.shape[0] - 1


def em_path_with_epr(
    model: OUModel,
    x0,
    t_end: float,
    dt: float,
    rng: RngStream,
    trace_every: int = 0,
) -> tuple[EprSample, PathTrace | None]:
    """Euler-Maruyama path with entropy accumulators from a given start state.

    Draws all noise from rng (consume the stream for x0 first if the start is
    random).  trace_every > 0 additionally records every trace_every-th step
    (plus t = 0 and the final step) into a PathTrace.  Results for a fixed
    (seed, stream, dt, t_end) are bit-identical regardless of trace_every.

    Raises StepUnstableError naming the offending step if the state explodes;
    the dt stability guard makes that unreachable for sane configurations.
    """
    check_dt_stability(model, dt)
    n = n_steps_for(t_end, dt)
    t_real = n * dt
    x = np.ascontiguousarray(np.asarray(x0, dtype=np.float64).reshape(-1))
    if x.shape != (model.d,):
        raise ValueError(f"x0 has shape {np.shape(x0)}, expected ({model.d},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 contains non-finite entries")
    if trace_every < 0:
        raise ValueError("trace_every must be >= 0")

    b, sig, g, qt = _kernel_args(model)
    xb = x[None, :].copy()
    mart = np.zeros(1)
    qsum = np.zeros(1)
    chunk = max(1, min(kernels._MAX_CHUNK_STEPS, kernels._SLAB_DOUBLES // max(1, model.d)))

    tracing = trace_every > 0
    rec_times = [0.0]
    rec_states = [x.copy()]
    rec_epr = [0.0]

    done = 0
    while done < n:
        m = n - done
        if tracing:
            next_rec = (done // trace_every + 1) * trace_every
            m = min(m, next_rec - done)
        m = min(m, chunk)
        z = rng.standard_normal((m, model.d))
        x_before = xb[0].copy()
        m0, q0 = mart[0], qsum[0]
        kernels.em_epr_chunk(xb, z[None, :, :], b, sig, g, qt, dt, mart, qsum)
        if not (np.all(np.isfinite(xb)) and np.isfinite(mart[0]) and np.isfinite(qsum[0])):
            j = _locate_bad_step(x_before, z, b, sig, g, qt, dt, m0, q0)
            step = done + j + 1
            raise StepUnstableError(
                f"non-finite state at step {step} (t = {step * dt:.6g}); "
                "reduce dt (stability guard requires dt*||B||_2 < 0.1)",
                step=step,
            )
        done += m
        if tracing and (done % trace_every == 0 or done == n):
            t_now = done * dt
            rec_times.append(t_now)
            rec_states.append(xb[0].copy())
            rec_epr.append((mart[0] + 0.5 * qsum[0] * dt) / t_now)

    qvar = qsum[0] * dt
    a_t = mart[0] + 0.5 * qvar
    sample = EprSample(
        t_end=t_real,
        dt=dt,
        seed=rng.seed,
        stream=rng.stream_id,
        martingale=float(mart[0]),
        qvar=float(qvar),
        a_t=float(a_t),
        ep_t=float(a_t / t_real),
        x_final=xb[0].copy(),
    )
    trace = None
    if tracing:
        trace = PathTrace(
            times=np.asarray(rec_times),
            states=np.asarray(rec_states),
            epr_running=np.asarray(rec_epr),
        )
    return sample, trace


def em_path_checkpoints(
    model: OUModel,
    x0,
    checkpoint_steps,
    dt: float,
    rng: RngStream,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run one path to max(checkpoint_steps) and return (mart, qvar, a_t) at
    each checkpoint step.  Arrays are aligned with the sorted checkpoint list."""
    check_dt_stability(model, dt)
    steps = sorted(set(int(s) for s in checkpoint_steps))
    if not steps or steps[0] < 1:
        raise ValueError("checkpoint steps must be positive integers")
    n = steps[-1]
    x = np.ascontiguousarray(np.asarray(x0, dtype=np.float64).reshape(-1))
    b, sig, g, qt = _kernel_args(model)
    xb = x[None, :].copy()
    mart = np.zeros(1)
    qsum = np.zeros(1)
    chunk = max(1, min(kernels._MAX_CHUNK_STEPS, kernels._SLAB_DOUBLES // max(1, model.d)))

    out_m = np.empty(len(steps))
    out_q = np.empty(len(steps))
    idx = 0
    done = 0
    while done < n:
        m = min(chunk, steps[idx] - done)
        z = rng.standard_normal((m, model.d))
        x_before = xb[0].copy()
        m0, q0 = mart[0], qsum[0]
        kernels.em_epr_chunk(xb, z[None, :, :], b, sig, g, qt, dt, mart, qsum)
        if not (np.all(np.isfinite(xb)) and np.isfinite(mart[0]) and np.isfinite(qsum[0])):
            j = _locate_bad_step(x_before, z, b, sig, g, qt, dt, m0, q0)
            step = done + j + 1
            raise StepUnstableError(
                f"non-finite state at step {step} (t = {step * dt:.6g})", step=step
            )
        done += m
        while idx < len(steps) and steps[idx] == done:
            out_m[idx] = mart[0]
            out_q[idx] = qsum[0] * dt
            idx += 1
    a = out_m + 0.5 * out_q
    return out_m, out_q, a


def em_ensemble(
    model: OUModel,
    law: InitialLaw,
    n_paths: int,
    t_end: float,
    dt: float,
    seed: int,
) -> dict:
    """Independent paths on streams 0..n_paths-1, merged by path index.

    Returns arrays martingale, qvar, a_t, ep_t, x_final plus the realized
    horizon.  Path i consumes stream (seed, i): first the initial draw, then
    the increments, so results are identical to running each path alone.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    check_dt_stability(model, dt)
    n = n_steps_for(t_end, dt)
    t_real = n * dt
    d = model.d
    if law.mean is not None and law.mean.shape != (d,):
        raise ValueError(
            f"initial law mean has dimension {law.mean.size}, model has d = {d}"
        )

    b, sig, g, qt = _kernel_args(model)
    chol = linalg.cholesky(model.Gamma)
    mart = np.zeros(n_paths)
    qsum = np.zeros(n_paths)
    x_final = np.empty((n_paths, d))
    block, chunk = kernels.plan_batch(n_paths, d, n)

    for b0 in range(0, n_paths, block):
        nb = min(block, n_paths - b0)
        streams = [RngStream(seed, b0 + i) for i in range(nb)]
        x = np.empty((nb, d))
        for i, s in enumerate(streams):
            x[i] = chol @ s.standard_normal(d)
        if law.mean is not None:
            x += law.mean
        slab = np.empty((nb, chunk, d))
        mv = mart[b0:b0 + nb]
        qv = qsum[b0:b0 + nb]
        done = 0
        while done < n:
            m = min(chunk, n - done)
            # fresh buffer on the remainder chunk: the kernel wants contiguity
            z = slab if m == chunk else np.empty((nb, m, d))
            for i, s in enumerate(streams):
                s.standard_normal(out=z[i])
            x_before = x.copy()
            m_before = mv.copy()
            q_before = qv.copy()
            kernels.em_epr_chunk(x, z, b, sig, g, qt, dt, mv, qv)
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(mv)) and np.all(np.isfinite(qv))):
                bad = int(np.flatnonzero(
                    ~(np.isfinite(x).all(axis=1) & np.isfinite(mv) & np.isfinite(qv))
                )[0])
                j = _locate_bad_step(
                    x_before[bad], z[bad], b, sig, g, qt, dt,
                    m_before[bad], q_before[bad],
                )
                step = done + j + 1
                raise StepUnstableError(
                    f"non-finite state on path {b0 + bad} at step {step} "
                    f"(t = {step * dt:.6g})",
                    step=step,
                    path=int(b0 + bad),
                )
            done += m
        x_final[b0:b0 + nb] = x

    qvar = qsum * dt
    a_t = mart + 0.5 * qvar
    return {
        "martingale": mart,
        "qvar": qvar,
        "a_t": a_t,
        "ep_t": a_t / t_real,
        "x_final": x_final,
        "t_end": t_real,
        "dt": dt,
        "n_steps": n,
        "seed": int(seed),
    }
