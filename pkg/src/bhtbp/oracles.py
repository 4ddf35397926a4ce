"""Slow, independent reference computations used to cross-check the fast paths.

Nothing here touches the FFT, the message-passing engine or the QR solve;
each routine evaluates its quantity the long way (direct sums, exhaustive
enumeration, explicit inverses, quadrature).
"""
from __future__ import annotations

import itertools
import math

import numpy as np

__all__ = [
    "direct_circular_convolution",
    "exhaustive_grid_marginals",
    "dense_mmse_solve",
    "scalar_posterior_odds",
    "scalar_mmse",
]


def direct_circular_convolution(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """out[m] = sum_k a[k] b[(m - k + n/2) mod n], double loop, unnormalized."""
    n = len(a)
    c = n // 2
    out = np.zeros(n)
    for m in range(n):
        acc = 0.0
        for k in range(n):
            acc += a[k] * b[(m - k + c) % n]
        out[m] = acc
    return out


def exhaustive_grid_marginals(columns, m, prior, kernels):
    """Exact per-variable marginals by summing over every grid configuration.

    ``kernels[j]`` is the sampled noise density around z_j on the same grid.
    Measurement j scores a configuration by ``kernels[j][(c + sum of neighbour
    offsets) mod n_d]``, the circular grid arithmetic the sampled BP uses.
    All n_d^N configurations are materialized at once, so keep N small.
    """
    prior = np.asarray(prior, dtype=float)
    kernels = np.asarray(kernels, dtype=float)
    n_d = len(prior)
    c = n_d // 2
    n = len(columns)
    configs = np.array(list(itertools.product(range(n_d), repeat=n)), dtype=np.int64).reshape(-1, n)
    w = np.prod(prior[configs], axis=1)
    for j in range(m):
        members = [i for i in range(n) if j in {int(t) for t in columns[i]}]
        off = (configs[:, members] - c).sum(axis=1)
        w = w * kernels[j][(c + off) % n_d]
    marg = np.zeros((n, n_d))
    for i in range(n):
        marg[i] = np.bincount(configs[:, i], weights=w, minlength=n_d)
    return marg / marg.sum(axis=1, keepdims=True)


def dense_mmse_solve(phi_s: np.ndarray, z: np.ndarray, sigma_x1: float, sigma_n: float) -> np.ndarray:
    k = phi_s.shape[1]
    a = np.eye(k) / sigma_x1**2 + phi_s.T @ phi_s / sigma_n**2
    return np.linalg.inv(a) @ (phi_s.T @ z) / sigma_n**2


def _normal_pdf(x, var):
    return math.exp(-0.5 * x * x / var) / math.sqrt(2.0 * math.pi * var)


def scalar_posterior_odds(z: float, q: float, sigma_x1: float, sigma_n: float) -> float:
    """Pr{S=1|z}/Pr{S=0|z} for z = x + n with a spike-and-slab x (continuous model)."""
    on = q * _normal_pdf(z, sigma_x1**2 + sigma_n**2)
    off = (1.0 - q) * _normal_pdf(z, sigma_n**2)
    return on / off if off > 0 else math.inf


def scalar_mmse(z: float, q: float, sigma_x1: float, sigma_n: float) -> float:
    """E[x | z] for the scalar spike-and-slab model by numerical quadrature."""
    from scipy.integrate import quad

    def slab(x):
        return q * _normal_pdf(x, sigma_x1**2) * _normal_pdf(z - x, sigma_n**2)

    var = 1.0 / (1.0 / sigma_x1**2 + 1.0 / sigma_n**2)
    centre = var * z / sigma_n**2
    lo, hi = centre - 12 * math.sqrt(var), centre + 12 * math.sqrt(var)
    num = quad(lambda x: x * slab(x), lo, hi, points=[centre], limit=200)[0]
    den = quad(slab, lo, hi, points=[centre], limit=200)[0]
    den += (1.0 - q) * _normal_pdf(z, sigma_n**2)
    return num / den
