"""Pure-numpy implementations of the message-passing inner loops.

Same signatures as the compiled ``_kernels`` module. Leave-one-out products
are built from exclusive prefix and suffix products over a padded
(node, degree, cell) block, so no division is ever needed.
"""
from __future__ import annotations

import numpy as np

UNDERFLOW_LIMIT = 1e-300


def _exclusive_scan(block, op, identity):
    """Exclusive prefix and suffix reductions along axis 1."""
    prefix = np.empty_like(block)
    suffix = np.empty_like(block)
    prefix[:, 0] = identity
    suffix[:, -1] = identity
    if block.shape[1] > 1:
        prefix[:, 1:] = op.accumulate(block[:, :-1], axis=1)
        suffix[:, :-1] = op.accumulate(block[:, :0:-1], axis=1)[:, ::-1]
    return prefix, suffix


def variable_update(prior, b, var_pad, var_mask, a_out, marg_out):
    """Signal messages and marginals from incoming measurement messages.

    ``var_pad[i, t]`` is the t-th edge of variable i, padded with index E
    (a row of ones appended to ``b``). Returns the number of products that
    needed the log-domain fallback.
    """
    n_d = b.shape[1]
    padded = np.concatenate([b, np.ones((1, n_d))])
    block = padded[var_pad]  # (N, D, n_d)
    prefix, suffix = _exclusive_scan(block, np.multiply, 1.0)
    loo = prefix * suffix * prior
    full = prefix[:, -1] * block[:, -1] * prior

    a_all = loo[var_mask]
    a_sum = a_all.sum(axis=1)
    m_sum = full.sum(axis=1)
    fallbacks = 0

    bad_a = ~(a_sum > UNDERFLOW_LIMIT) | ~np.isfinite(a_sum)
    bad_m = ~(m_sum > UNDERFLOW_LIMIT) | ~np.isfinite(m_sum)
    if bad_a.any() or bad_m.any():
        with np.errstate(divide="ignore"):
            lblock = np.log(block)
            lprior = np.log(prior)
        lpre, lsuf = _exclusive_scan(lblock, np.add, 0.0)
        if bad_a.any():
            la = (lpre + lsuf + lprior)[var_mask][bad_a]
            a_all[bad_a] = _exp_normalized(la)
            a_sum[bad_a] = 1.0
            fallbacks += int(bad_a.sum())
        if bad_m.any():
            lm = (lpre[:, -1] + lblock[:, -1] + lprior)[bad_m]
            full[bad_m] = _exp_normalized(lm)
            m_sum[bad_m] = 1.0
            fallbacks += int(bad_m.sum())

    a_out[...] = a_all / a_sum[:, None]
    marg_out[...] = full / m_sum[:, None]
    return fallbacks


def _exp_normalized(logp):
    top = logp.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise FloatingPointError("product vanished on every cell")
    p = np.exp(logp - top)
    return p / p.sum(axis=1, keepdims=True)


def check_combine(noise_spec, a_spec, row_pad, row_mask, row_edges, out):
    """out[e] = noise_spec[j] * prod of a_spec over the other edges of row j."""
    n_f = a_spec.shape[1]
    padded = np.concatenate([a_spec, np.ones((1, n_f), dtype=a_spec.dtype)])
    block = padded[row_pad]  # (M, Dr, n_f)
    prefix, suffix = _exclusive_scan(block, np.multiply, 1.0)
    loo = prefix * suffix * noise_spec[:, None, :]
    out[row_edges] = loo[row_mask]
