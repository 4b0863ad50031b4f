"""Hot numeric kernels with a numba path and a pure-numpy path.

The numba path is used when numba imports cleanly and ``SEMCLIP_DISABLE_NUMBA``
is unset (or ``0``). Both paths share signatures and are exercised against each
other in ``tests/test_kernels.py``; ``benchmarks/bench_kernels.py`` times them.
"""
from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("SEMCLIP_DISABLE_NUMBA", "0").lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("numba disabled by SEMCLIP_DISABLE_NUMBA")
    import numba as nb
    HAVE_NUMBA = True
except ImportError:
    nb = None
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# numpy reference implementations
# --------------------------------------------------------------------------

def bag_mean_forward_np(table, idx, lengths):
    """Mean of ``table`` rows selected by each padded index row of ``idx``."""
    mask = np.arange(idx.shape[1])[None, :] < lengths[:, None]
    gathered = table[idx] * mask[:, :, None]
    return gathered.sum(axis=1) / lengths[:, None].astype(table.dtype)


def bag_mean_backward_np(grad, idx, lengths, n_rows):
    mask = np.arange(idx.shape[1])[None, :] < lengths[:, None]
    scaled = grad / lengths[:, None].astype(grad.dtype)
    out = np.zeros((n_rows, grad.shape[1]), dtype=grad.dtype)
    rows = np.broadcast_to(np.arange(idx.shape[0])[:, None], idx.shape)
    np.add.at(out, idx[mask], scaled[rows[mask]])
    return out


def xent_rows_np(logits, targets):
    """Per-row softmax cross-entropy and its gradient w.r.t. the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    denom = expd.sum(axis=1, keepdims=True)
    rows = np.arange(logits.shape[0])
    losses = np.log(denom[:, 0]) - shifted[rows, targets]
    grad = expd / denom
    grad[rows, targets] -= 1.0
    return losses, grad


def gram_schmidt_np(a, tol):
    """Modified Gram-Schmidt on the columns of ``a``.

    Returns ``(q, bad)`` where ``bad`` is the first column whose residual norm
    fell below ``tol`` (``-1`` if none); columns from ``bad`` on are garbage.
    """
    q = np.array(a, dtype=np.float64, copy=True)
    for k in range(q.shape[1]):
        for j in range(k):
            q[:, k] -= (q[:, j] @ q[:, k]) * q[:, j]
        norm = np.sqrt(q[:, k] @ q[:, k])
        if norm < tol:
            return q, k
        q[:, k] /= norm
    return q, -1


def top1_hits_np(sim, targets):
    # np.argmax returns the first maximum, i.e. the lowest-index tie-break
    return (np.argmax(sim, axis=1) == targets).astype(np.int64)


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if HAVE_NUMBA:

    @nb.njit(cache=True)
    def bag_mean_forward_nb(table, idx, lengths):
        out = np.zeros((idx.shape[0], table.shape[1]), dtype=table.dtype)
        for b in range(idx.shape[0]):
            n = lengths[b]
            for j in range(n):
                row = idx[b, j]
                for c in range(table.shape[1]):
                    out[b, c] += table[row, c]
            for c in range(table.shape[1]):
                out[b, c] /= n
        return out

    @nb.njit(cache=True)
    def bag_mean_backward_nb(grad, idx, lengths, n_rows):
        out = np.zeros((n_rows, grad.shape[1]), dtype=grad.dtype)
        for b in range(idx.shape[0]):
            n = lengths[b]
            for j in range(n):
                row = idx[b, j]
                for c in range(grad.shape[1]):
                    out[row, c] += grad[b, c] / n
        return out

    @nb.njit(cache=True)
    def xent_rows_nb(logits, targets):
        n, m = logits.shape
        losses = np.empty(n, dtype=logits.dtype)
        grad = np.empty_like(logits)
        for i in range(n):
            top = logits[i, 0]
            for j in range(1, m):
                if logits[i, j] > top:
                    top = logits[i, j]
            denom = 0.0
            for j in range(m):
                e = np.exp(logits[i, j] - top)
                grad[i, j] = e
                denom += e
            for j in range(m):
                grad[i, j] /= denom
            losses[i] = np.log(denom) - (logits[i, targets[i]] - top)
            grad[i, targets[i]] -= 1.0
        return losses, grad

    @nb.njit(cache=True)
    def gram_schmidt_nb(a, tol):
        q = a.astype(np.float64).copy()
        d, n = q.shape
        for k in range(n):
            for j in range(k):
                dot = 0.0
                for r in range(d):
                    dot += q[r, j] * q[r, k]
                for r in range(d):
                    q[r, k] -= dot * q[r, j]
            norm = 0.0
            for r in range(d):
                norm += q[r, k] * q[r, k]
            norm = np.sqrt(norm)
            if norm < tol:
                return q, k
            for r in range(d):
                q[r, k] /= norm
        return q, -1

    @nb.njit(cache=True)
    def top1_hits_nb(sim, targets):
        hits = np.zeros(sim.shape[0], dtype=np.int64)
        for i in range(sim.shape[0]):
            best, best_val = 0, sim[i, 0]
            for j in range(1, sim.shape[1]):
                if sim[i, j] > best_val:
                    best, best_val = j, sim[i, j]
            if best == targets[i]:
                hits[i] = 1
        return hits

    bag_mean_forward = bag_mean_forward_nb
    bag_mean_backward = bag_mean_backward_nb
    xent_rows = xent_rows_nb
    gram_schmidt = gram_schmidt_nb
    # numpy's vectorized argmax beats the scalar loop (see the benchmark)
    top1_hits = top1_hits_np
else:
    bag_mean_forward = bag_mean_forward_np
    bag_mean_backward = bag_mean_backward_np
    xent_rows = xent_rows_np
    gram_schmidt = gram_schmidt_np
    top1_hits = top1_hits_np
