"""Substep accumulation of iterated integrals.

Two interchangeable implementations: a numba kernel (looping over paths and
substeps with O(words) state) and a vectorised numpy version (cumulative sums
over the substep axis).  ``STOCHTREE_DISABLE_NUMBA=1`` forces numpy; numpy is
also used when numba is not importable.

Both use the same update per substep, for a word ``w = prefix + (j,)``::

    I_w += 0.5 * (I_prefix(old) + I_prefix(new)) * dW^j
           - corr_w * 0.25 * (I_pre2(old) + I_pre2(new)) * dt

The trapezoid term is the Stratonovich integral; ``corr_w`` is 1 only under
Itô when the last two letters are equal and nonzero, and subtracts half the
quadratic covariation so repeated-index words come out exact.
"""
from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("STOCHTREE_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False


def accumulate_numpy(dW, dt, parent, grand, letter, corr):
    """Final values of every word, shape ``(n_paths, n_words)``.

    ``dW`` has shape ``(n_paths, K, m)``; word 0 must be the empty word.
    """
    n, K, _ = dW.shape
    nw = len(parent)
    out = np.empty((n, nw))
    out[:, 0] = 1.0
    traj: list = [None] * nw
    traj[0] = np.ones((n, K + 1))
    zeros = np.zeros((n, 1))
    for w in range(1, nw):
        lt = letter[w]
        inc = dt if lt == 0 else dW[:, :, lt - 1]
        prev = traj[parent[w]]
        steps = 0.5 * (prev[:, :-1] + prev[:, 1:]) * inc
        if corr[w]:
            g = traj[grand[w]]
            steps = steps - 0.25 * (g[:, :-1] + g[:, 1:]) * dt
        traj[w] = np.concatenate([zeros, np.cumsum(steps, axis=1)], axis=1)
        out[:, w] = traj[w][:, -1]
    return out


def _accumulate_py(dW, dt, parent, grand, letter, corr):
    n, K, _ = dW.shape
    nw = parent.shape[0]
    out = np.empty((n, nw))
    cur = np.empty(nw)
    new = np.empty(nw)
    for i in range(n):
        cur[:] = 0.0
        cur[0] = 1.0
        new[0] = 1.0
        for k in range(K):
            for w in range(1, nw):
                lt = letter[w]
                inc = dt if lt == 0 else dW[i, k, lt - 1]
                p = parent[w]
                step = 0.5 * (cur[p] + new[p]) * inc
                if corr[w]:
                    g = grand[w]
                    step = step - 0.25 * (cur[g] + new[g]) * dt
                new[w] = cur[w] + step
            cur, new = new, cur
        out[i, :] = cur
    return out


if HAVE_NUMBA:
    accumulate_numba = njit(cache=True, nogil=True)(_accumulate_py)
else:  # pragma: no cover
    accumulate_numba = None


def accumulate(dW, dt, parent, grand, letter, corr, backend: str | None = None):
    backend = backend or ("numba" if HAVE_NUMBA else "numpy")
    args = (
        np.ascontiguousarray(dW, dtype=np.float64),
        float(dt),
        np.asarray(parent, dtype=np.int64),
        np.asarray(grand, dtype=np.int64),
        np.asarray(letter, dtype=np.int64),
        np.asarray(corr, dtype=np.bool_),
    )
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but unavailable")
        return accumulate_numba(*args)
    if backend == "numpy":
        return accumulate_numpy(*args)
    raise ValueError(f"unknown backend {backend!r}")
