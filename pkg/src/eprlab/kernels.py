"""Hot loops for Euler-Maruyama co-simulation of paths and entropy accumulators.

Two interchangeable implementations of the same stepping arithmetic:

* a numba-compiled per-path loop (parallel over paths), and
* a vectorized numpy fallback that steps all paths of a block together.

``EPRLAB_BACKEND=numpy`` forces the fallback, ``EPRLAB_BACKEND=numba`` (or
unset, when numba imports) selects the compiled path.  Both consume the same
pre-drawn standard normals, accumulate stepwise in path order, and scale the
quadratic-variation sum by dt only once at the end of a path, so results do
not depend on how steps are chunked.  Each backend is deterministic; the two
backends agree to roundoff, not bitwise (BLAS reduction order differs).

``EPRLAB_THREADS`` caps the numba worker count.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only where numba is absent
    numba = None


class BackendError(RuntimeError):
    """Requested compute backend is not usable."""


def _resolve_backend() -> str:
    choice = os.environ.get("EPRLAB_BACKEND", "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise BackendError(f"unknown EPRLAB_BACKEND {choice!r}; use 'numba' or 'numpy'")
    if choice == "numpy":
        return "numpy"
    if numba is None:
        if choice == "numba":
            raise BackendError("EPRLAB_BACKEND=numba but numba is not importable")
        return "numpy"
    return "numba"


_BACKEND: str | None = None
_THREADS_CONFIGURED = False


def active_backend() -> str:
    """Resolve the backend on first use so a bad env var fails the call,
    not the import."""
    global _BACKEND
    if _BACKEND is None:
        _BACKEND = _resolve_backend()
    return _BACKEND


def configure_threads() -> None:
    """Apply the EPRLAB_THREADS cap to the numba threading layer (once)."""
    global _THREADS_CONFIGURED
    if _THREADS_CONFIGURED:
        return
    raw = os.environ.get("EPRLAB_THREADS", "").strip()
    if raw:
        try:
            want = int(raw)
        except ValueError:
            raise BackendError(f"EPRLAB_THREADS must be a positive integer, got {raw!r}")
        if want < 1:
            raise BackendError(f"EPRLAB_THREADS must be a positive integer, got {raw!r}")
        if active_backend() == "numba":
            numba.set_num_threads(min(want, numba.config.NUMBA_NUM_THREADS))
    _THREADS_CONFIGURED = True


def em_epr_chunk_numpy(x, z, b, sig, g, qt, dt, mart, qsum):
    """Advance a block of paths by one chunk of Euler-Maruyama steps.

    x     (P, d)    states, updated in place
    z     (P, n, d) standard normals for the chunk
    b, sig          drift matrix and noise factor
    g               M^T Sigma (martingale integrand factor)
    qt              Qtilde = M^T Q M (quadratic variation integrand)
    mart  (P,)      running sum of x . (G dW), updated in place
    qsum  (P,)      running sum of x . (Qt x), updated in place (caller scales by dt)

    All integrands are evaluated at the left endpoint before the state moves.
    """
    npaths, nsteps, d = z.shape
    sdt = math.sqrt(dt)
    bt = np.ascontiguousarray(b.T)
    st = np.ascontiguousarray(sig.T)
    gt = np.ascontiguousarray(g.T)
    qtt = np.ascontiguousarray(qt.T)
    cur = x
    # overflow on an exploding path is detected by the caller, not warned here
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(nsteps):
            dw = sdt * z[:, k, :]
            qsum += (cur * (cur @ qtt)).sum(axis=1)
            mart += (cur * (dw @ gt)).sum(axis=1)
            cur = cur + dt * (cur @ bt) + dw @ st
    x[:] = cur


if numba is not None:

    @numba.njit(parallel=True, cache=True)
    def _em_epr_chunk_jit(x, z, b, sig, g, qt, dt, mart, qsum):  # pragma: no cover
        npaths, nsteps, d = z.shape
        sdt = math.sqrt(dt)
        for p in numba.prange(npaths):
            xp = x[p].copy()
            xn = np.empty(d)
            dw = np.empty(d)
            m_acc = mart[p]
            q_acc = qsum[p]
            for k in range(nsteps):
                for j in range(d):
                    dw[j] = sdt * z[p, k, j]
                qk = 0.0
                mk = 0.0
                for i in range(d):
                    qt_i = 0.0
                    b_i = 0.0
                    g_i = 0.0
                    s_i = 0.0
                    for j in range(d):
                        xj = xp[j]
                        qt_i += qt[i, j] * xj
                        b_i += b[i, j] * xj
                        g_i += g[i, j] * dw[j]
                        s_i += sig[i, j] * dw[j]
                    qk += xp[i] * qt_i
                    mk += xp[i] * g_i
                    xn[i] = xp[i] + dt * b_i + s_i
                q_acc += qk
                m_acc += mk
                for i in range(d):
                    xp[i] = xn[i]
            mart[p] = m_acc
            qsum[p] = q_acc
            for i in range(d):
                x[p, i] = xp[i]

    def em_epr_chunk_numba(x, z, b, sig, g, qt, dt, mart, qsum):
        _em_epr_chunk_jit(x, z, b, sig, g, qt, dt, mart, qsum)

else:  # pragma: no cover
    em_epr_chunk_numba = None


def em_epr_chunk(x, z, b, sig, g, qt, dt, mart, qsum):
    """Dispatch one chunk to the active backend."""
    configure_threads()
    if active_backend() == "numba":
        em_epr_chunk_numba(x, z, b, sig, g, qt, dt, mart, qsum)
    else:
        em_epr_chunk_numpy(x, z, b, sig, g, qt, dt, mart, qsum)


# Slab sizing: bounded scratch for pre-drawn normals.
_SLAB_DOUBLES = 1 << 25  # 256 MB of float64 per increments slab
_MAX_BLOCK_PATHS = 4096
_MAX_CHUNK_STEPS = 65536


def plan_batch(n_paths: int, d: int, n_steps: int | None = None) -> tuple[int, int]:
    """(block_paths, chunk_steps) keeping block*chunk*d under the slab budget."""
    block = min(n_paths, _MAX_BLOCK_PATHS)
    chunk = max(256, min(_MAX_CHUNK_STEPS, _SLAB_DOUBLES // max(1, block * d)))
    if n_steps is not None:
        chunk = min(chunk, max(1, n_steps))
    while block > 1 and block * chunk * d > _SLAB_DOUBLES:
        block //= 2
    return block, chunk
