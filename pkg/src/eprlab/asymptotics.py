"""Fluctuation diagnostics for the pathwise entropy production rate.

Ensemble central-limit statistics, moderate-deviation tail rate profiles,
the iterated-logarithm running statistic, spectral-gap semigroup decay and
exponential integrability checks.  All Monte Carlo here rides on per-path
counter-based streams, so every result is reproducible from (model, config,
seed) alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.special

from . import linalg, simulate
from .model import InitialLaw, OUModel, functional_constants, is_reversible
from .rng import RngStream

REVERSIBLE_NOTE = "reversible: EPR identically zero"


@dataclass(frozen=True)
class EnsembleStats:
    """Normalized fluctuation samples Z_i = sqrt(t) (ep_t^i - ep) and their summary."""

    n_paths: int
    t: float
    dt: float
    initial_law: str
    e_p: float
    z_samples: np.ndarray
    mean_z: float
    sigma2_hat: float
    ks_stat: float
    ks_pvalue: float
    note: str = ""


def ks_test_gaussian(samples, sigma2: float) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov statistic against N(0, sigma2) and its
    asymptotic p-value.

    Requires at least 50 samples and sigma2 > 0.
    """
    z = np.sort(np.asarray(samples, dtype=np.float64))
    n = z.size
    if n < 50:
        raise ValueError(f"need at least 50 samples for the KS test, got {n}")
    if not (sigma2 > 0.0) or not math.isfinite(sigma2):
        raise ValueError(f"sigma2 must be positive and finite, got {sigma2}")
    if not np.all(np.isfinite(z)):
        raise ValueError("samples contain non-finite values")
    cdf = scipy.special.ndtr(z / math.sqrt(sigma2))
    grid = np.arange(1, n + 1) / n
    d_plus = float(np.max(grid - cdf))
    d_minus = float(np.max(cdf - (grid - 1.0 / n)))
    stat = max(d_plus, d_minus)
    pvalue = float(min(1.0, max(0.0, scipy.special.kolmogorov(math.sqrt(n) * stat))))
    return stat, pvalue


def run_ensemble(
    model: OUModel,
    law: InitialLaw,
    n_paths: int,
    t: float,
    dt: float,
    seed: int,
) -> EnsembleStats:
    """Simulate n_paths independent EPR samples and test Z against N(0, sigma2_hat).

    Preconditions: n_paths >= 100 and t >= 10 / decay_rate (ten relaxation
    times), so the central limit regime is plausibly reached.  Reversible
    models short-circuit: Z is identically zero and the KS test is skipped.
    """
    if n_paths < 100:
        raise ValueError(f"n_paths must be >= 100, got {n_paths}")
    fc = functional_constants(model)
    t_min = 10.0 / fc.decay_rate
    if t < t_min:
        raise ValueError(
            f"t = {t} is below the mixing floor 10/decay_rate = {t_min:.6g}"
        )
    if is_reversible(model):
        n = simulate.n_steps_for(t, dt)
        return EnsembleStats(
            n_paths=n_paths,
            t=n * dt,
            dt=dt,
            initial_law=law.label,
            e_p=model.ep,
            z_samples=np.zeros(n_paths),
            mean_z=0.0,
            sigma2_hat=0.0,
            ks_stat=float("nan"),
            ks_pvalue=float("nan"),
            note=REVERSIBLE_NOTE,
        )

    ens = simulate.em_ensemble(model, law, n_paths, t, dt, seed)
    t_real = ens["t_end"]
    z = math.sqrt(t_real) * (ens["ep_t"] - model.ep)
    sigma2_hat = float(z.var(ddof=1))
    ks_stat, ks_pvalue = ks_test_gaussian(z, sigma2_hat)
    return EnsembleStats(
        n_paths=n_paths,
        t=t_real,
        dt=dt,
        initial_law=law.label,
        e_p=model.ep,
        z_samples=z,
        mean_z=float(z.mean()),
        sigma2_hat=sigma2_hat,
        ks_stat=ks_stat,
        ks_pvalue=ks_pvalue,
    )


def estimate_sigma2(
    model: OUModel,
    n_paths: int,
    t_grid,
    dt: float,
    seed: int,
    law: InitialLaw = InitialLaw(),
) -> list[tuple[float, float]]:
    """sigma2_hat over a grid of horizons, same seed (hence coupled streams)."""
    out = []
    for t in t_grid:
        stats = run_ensemble(model, law, n_paths, float(t), dt, seed)
        out.append((stats.t, stats.sigma2_hat))
    return out


@dataclass(frozen=True)
class MdpProfile:
    """Empirical moderate-deviation tail rates of Y_t = S_t/(sqrt(t) lambda(t))."""

    n_paths: int
    t: float
    dt: float
    lambda_exponent: float
    lambda_value: float
    sigma2_hat: float
    thresholds: np.ndarray
    counts: np.ndarray
    empirical_rates: np.ndarray
    theoretical_rates: np.ndarray
    flags: tuple
    note: str = ""


def mdp_tail_profile(
    model: OUModel,
    lambda_exponent: float,
    thresholds,
    n_paths: int,
    t: float,
    dt: float,
    seed: int,
    sigma_units: bool = False,
    law: InitialLaw = InitialLaw(),
) -> MdpProfile:
    """Tail rate profile -lambda^-2 log P(|Y_t| >= x) vs the quadratic rate
    x^2/(2 sigma2_hat) at the given thresholds.

    lambda(t) = t**lambda_exponent with exponent in (0, 1/2).  Tail
    probabilities use add-one smoothing (count+1)/(n+1); a zero count flags
    the entry as 'insufficient events' instead of raising.  sigma_units=True
    interprets thresholds as multiples of sigma_hat from this same ensemble
    (the theoretical rates always use that same sigma2_hat; the profile is
    self-normalized, which the note records).
    """
    expo = float(lambda_exponent)
    if not (0.0 < expo < 0.5):
        raise ValueError(f"lambda exponent must lie in (0, 1/2), got {expo}")
    xs_in = np.sort(np.asarray(thresholds, dtype=np.float64))
    if xs_in.size == 0 or not np.all(xs_in > 0.0) or not np.all(np.isfinite(xs_in)):
        raise ValueError("thresholds must be positive finite reals")

    stats = run_ensemble(model, law, n_paths, t, dt, seed)
    lam = stats.t ** expo
    lam2 = lam * lam
    note = "theoretical rates use sigma2_hat estimated from this same ensemble"

    if stats.note == REVERSIBLE_NOTE:
        counts = np.zeros(xs_in.size, dtype=np.int64)
        emp = np.full(xs_in.size, math.log(n_paths + 1.0) / lam2)
        theo = np.full(xs_in.size, float("nan"))
        return MdpProfile(
            n_paths=n_paths, t=stats.t, dt=dt,
            lambda_exponent=expo, lambda_value=lam,
            sigma2_hat=0.0, thresholds=xs_in, counts=counts,
            empirical_rates=emp, theoretical_rates=theo,
            flags=tuple("insufficient events" for _ in xs_in),
            note=REVERSIBLE_NOTE + "; " + note,
        )

    xs = xs_in * math.sqrt(stats.sigma2_hat) if sigma_units else xs_in
    y = np.abs(stats.z_samples) / lam
    counts = np.array([(y >= x).sum() for x in xs], dtype=np.int64)
    p_smooth = (counts + 1.0) / (n_paths + 1.0)
    emp = -np.log(p_smooth) / lam2
    theo = xs * xs / (2.0 * stats.sigma2_hat)
    flags = tuple("" if c > 0 else "insufficient events" for c in counts)
    return MdpProfile(
        n_paths=n_paths, t=stats.t, dt=dt,
        lambda_exponent=expo, lambda_value=lam,
        sigma2_hat=stats.sigma2_hat, thresholds=xs, counts=counts,
        empirical_rates=emp, theoretical_rates=theo, flags=flags, note=note,
    )


@dataclass(frozen=True)
class LilTrace:
    """Iterated-logarithm statistic R_t = S_t/sqrt(2 t log log t) sampled on a
    geometric checkpoint grid t_k = gamma^k (only t_k > e, where the
    normalizer is real)."""

    gamma_checkpoint: float
    t_max: float
    dt: float
    seed: int
    k_values: np.ndarray
    checkpoints: np.ndarray
    s_values: np.ndarray
    r_values: np.ndarray
    running_max: float
    running_min: float
    note: str = ""


def _lil_checkpoints(gamma: float, t_max: float, dt: float) -> tuple[list[int], list[int]]:
    """(k indices, step indices) for checkpoints gamma^k in (e, t_max] after
    rounding to the step grid; rounded times that fall at or below e are
    dropped (the normalizer needs log log t > 0)."""
    ks, steps = [], []
    seen = set()
    k = 1
    tk = gamma
    while tk <= math.e:
        k += 1
        tk = gamma ** k
    while tk <= t_max:
        step = int(round(tk / dt))
        t_real = step * dt
        if t_real > math.e and step >= 1 and step not in seen:
            seen.add(step)
            ks.append(k)
            steps.append(step)
        k += 1
        tk = gamma ** k
    if not steps:
        raise ValueError("no valid checkpoints: t_max too small for this gamma/dt")
    return ks, steps


def lil_running_statistic(
    model: OUModel,
    gamma_checkpoint: float,
    t_max: float,
    dt: float,
    seed: int,
) -> LilTrace:
    """Single stationary path to t_max with S_t and R_t recorded at geometric
    checkpoints, plus the extremes of R over the whole grid."""
    gamma = float(gamma_checkpoint)
    if not (1.0 < gamma <= 2.0):
        raise ValueError(f"gamma must lie in (1, 2], got {gamma}")
    if not (t_max > math.e ** 2):
        raise ValueError(f"t_max must exceed e^2, got {t_max}")
    ks, steps = _lil_checkpoints(gamma, float(t_max), float(dt))
    times = np.array(steps, dtype=np.float64) * dt
    norms = np.sqrt(2.0 * times * np.log(np.log(times)))

    if is_reversible(model):
        zeros = np.zeros(len(steps))
        return LilTrace(
            gamma_checkpoint=gamma, t_max=float(t_max), dt=float(dt), seed=int(seed),
            k_values=np.array(ks), checkpoints=times,
            s_values=zeros, r_values=zeros,
            running_max=0.0, running_min=0.0,
            note=REVERSIBLE_NOTE,
        )

    stream = RngStream(seed, 0)
    x0 = simulate.sample_stationary(model, stream)
    _, _, a = simulate.em_path_checkpoints(model, x0, steps, dt, stream)
    s = a - times * model.ep
    r = s / norms
    return LilTrace(
        gamma_checkpoint=gamma, t_max=float(t_max), dt=float(dt), seed=int(seed),
        k_values=np.array(ks), checkpoints=times,
        s_values=s, r_values=r,
        running_max=float(r.max()), running_min=float(r.min()),
    )


@dataclass(frozen=True)
class DecayCheckRow:
    t: float
    lhs: float
    bound: float
    passed: bool


def semigroup_decay_check(model: OUModel, v, t_grid) -> list[DecayCheckRow]:
    """Verify v^T e^{tB} Gamma e^{tB^T} v <= e^{-decay_rate t} v^T Gamma v
    (with 1e-10 relative slack) over a grid of times.

    The left side is the stationary second moment of the linear observable
    v . x propagated by the semigroup; the right side is the worst-case
    spectral-gap decay envelope.
    """
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.shape != (model.d,):
        raise ValueError(f"direction has dimension {v.size}, model has d = {model.d}")
    if not np.all(np.isfinite(v)) or not np.any(v != 0.0):
        raise ValueError("direction must be a finite non-zero vector")
    rate = functional_constants(model).decay_rate
    base = float(v @ model.Gamma @ v)
    rows = []
    for t in t_grid:
        t = float(t)
        if t < 0.0:
            raise ValueError(f"decay check times must be >= 0, got {t}")
        e = linalg.mat_exp(model.B, t)
        w = e.T @ v
        lhs = float(w @ model.Gamma @ w)
        bound = math.exp(-rate * t) * base
        rows.append(DecayCheckRow(t=t, lhs=lhs, bound=bound,
                                  passed=lhs <= bound * (1.0 + 1e-10)))
    return rows


@dataclass(frozen=True)
class ExpIntegrability:
    eta: float
    t: float
    dt: float
    n_paths: int
    rate: float
    rate_half: float
    finite: bool
    note: str = ""


def exp_integrability_bound(model: OUModel, eta: float) -> float:
    """Closed-form upper bound for the log-MGF rate of eta * int |x|^2 ds.

    (lambda_min(Q)/(4 lambda_max(Gamma))) * log E_mu exp(a |x|^2) with
    a = (4 lambda_max(Gamma)/lambda_min(Q)) eta, the Gaussian expectation in
    closed form.  Returns inf when the inner expectation diverges (eta at or
    beyond the integrability threshold)."""
    eta = float(eta)
    if eta < 0.0:
        raise ValueError("eta must be >= 0")
    if eta == 0.0:
        return 0.0
    lam_min_q = linalg.sym_eig_extrema(model.Q)[0]
    lam_max_g = linalg.sym_eig_extrema(model.Gamma)[1]
    a = (4.0 * lam_max_g / lam_min_q) * eta
    eig_g = np.linalg.eigvalsh(model.Gamma)
    factors = 1.0 - 2.0 * a * eig_g
    if np.any(factors <= 0.0):
        return float("inf")
    log_expect = -0.5 * float(np.sum(np.log(factors)))
    return (lam_min_q / (4.0 * lam_max_g)) * log_expect


def exp_integrability_check(
    model: OUModel,
    eta: float,
    t: float,
    n_paths: int,
    dt: float,
    seed: int,
) -> ExpIntegrability:
    """Monte Carlo estimate of (1/t) log E exp(eta * int_0^t |X_s|^2 ds) along
    exact-transition paths, with a stability diagnostic.

    finite=True when the estimate moves by at most 20% between the first half
    of the paths and all of them.  eta = 0 returns rate 0 exactly.  The
    integral uses left-endpoint Riemann sums on the dt grid.
    """
    eta = float(eta)
    if eta < 0.0 or not math.isfinite(eta):
        raise ValueError(f"eta must be >= 0 and finite, got {eta}")
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    n_steps = simulate.n_steps_for(t, dt)
    t_real = n_steps * dt
    if eta == 0.0:
        return ExpIntegrability(eta=0.0, t=t_real, dt=dt, n_paths=n_paths,
                                rate=0.0, rate_half=0.0, finite=True,
                                note="eta = 0: rate is identically zero")

    e, chol_step = simulate.exact_transition_factors(model, dt)
    et = np.ascontiguousarray(e.T)
    lt = np.ascontiguousarray(chol_step.T)
    chol_g = linalg.cholesky(model.Gamma)
    d = model.d

    sums = np.empty(n_paths)
    from .kernels import plan_batch

    block, chunk = plan_batch(n_paths, d, n_steps)
    for b0 in range(0, n_paths, block):
        nb = min(block, n_paths - b0)
        streams = [RngStream(seed, b0 + i) for i in range(nb)]
        x = np.empty((nb, d))
        for i, s in enumerate(streams):
            x[i] = chol_g @ s.standard_normal(d)
        acc = np.zeros(nb)
        slab = np.empty((nb, chunk, d))
        done = 0
        while done < n_steps:
            m = min(chunk, n_steps - done)
            z = slab[:, :m, :]
            for i, s in enumerate(streams):
                s.standard_normal(out=z[i])
            for k in range(m):
                acc += (x * x).sum(axis=1)
                x = x @ et + z[:, k, :] @ lt
            done += m
        sums[b0:b0 + nb] = acc
    integrals = sums * dt

    w = eta * integrals
    n_half = n_paths // 2
    lse_full = float(scipy.special.logsumexp(w)) - math.log(n_paths)
    lse_half = float(scipy.special.logsumexp(w[:n_half])) - math.log(n_half)
    rate = lse_full / t_real
    rate_half = lse_half / t_real
    rel = abs(rate - rate_half) / max(abs(rate), 1e-300)
    finite = bool(rel <= 0.2) and math.isfinite(rate)
    note = ""
    if not finite:
        note = (f"estimate moved {rel:.1%} when doubling the path count; "
                "exponential moment looks divergent at this eta")
    else:
        top_weight = float(np.exp(w.max() - (lse_full + math.log(n_paths))))
        if top_weight > 0.5:
            finite = False
            note = (f"a single path carries {top_weight:.0%} of the exponential "
                    "mass; estimate not trustworthy")
    return ExpIntegrability(eta=eta, t=t_real, dt=dt, n_paths=n_paths,
                            rate=rate, rate_half=rate_half, finite=finite, note=note)
