"""Signal-value estimation once a support is known (or assumed)."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .density import DensityGrid
from .model import SensingMatrix

__all__ = [
    "RecoveryResult",
    "mmse_on_support",
    "oracle_estimate",
    "oracle_mse_formula",
    "exhaustive_mmse",
    "map_value_readout",
    "EXHAUSTIVE_LIMIT",
]

EXHAUSTIVE_LIMIT = 16
_NOISELESS_RATIO = 1e-12


@dataclass
class RecoveryResult:
    x_hat: np.ndarray
    s_hat: np.ndarray
    ser: float = math.nan
    nmse: float = math.nan
    info: dict = field(default_factory=dict)


def _effective_sigma_n(sigma_x1, sigma_n):
    if sigma_n > 0:
        return sigma_n
    return math.sqrt(_NOISELESS_RATIO) * sigma_x1


def _factor(phi_s, sigma_x1, sigma_n):
    """R of the stacked [Phi_s / sigma_n; I / sigma_x1], so R^T R is the posterior precision."""
    k = phi_s.shape[1]
    stacked = np.vstack([phi_s / sigma_n, np.eye(k) / sigma_x1])
    q, r = np.linalg.qr(stacked)
    return q, r


def mmse_on_support(matrix: SensingMatrix, s_hat, z, sigma_x1: float, sigma_n: float) -> np.ndarray:
    """Linear MMSE estimate restricted to the columns flagged in ``s_hat``.

    Solves ((1/sx^2) I + (1/sn^2) G^T G) x = (1/sn^2) G^T z through a QR
    factorization of the stacked least-squares form; zeros elsewhere.
    """
    if sigma_x1 <= 0:
        raise ValueError("sigma_x1 must be positive")
    s_hat = np.asarray(s_hat)
    support = np.flatnonzero(s_hat)
    x_hat = np.zeros(matrix.n)
    if support.size == 0:
        return x_hat
    sigma_n = _effective_sigma_n(sigma_x1, sigma_n)
    phi_s = matrix.submatrix(support)
    q, r = _factor(phi_s, sigma_x1, sigma_n)
    rhs = np.concatenate([np.asarray(z, dtype=float) / sigma_n, np.zeros(support.size)])
    x_hat[support] = np.linalg.solve(r, q.T @ rhs)
    return x_hat


def oracle_estimate(matrix: SensingMatrix, true_state, z, sigma_x1: float, sigma_n: float) -> np.ndarray:
    return mmse_on_support(matrix, true_state, z, sigma_x1, sigma_n)


def oracle_mse_formula(matrix: SensingMatrix, true_state, sigma_x1: float, sigma_n: float, x0) -> float:
    """Tr[((1/sx^2) I + (1/sn^2) Phi_s^T Phi_s)^-1] / ||x0_s||^2."""
    support = np.flatnonzero(true_state)
    if support.size == 0:
        raise ValueError("oracle MSE is undefined for an empty support")
    sigma_n = _effective_sigma_n(sigma_x1, sigma_n)
    _, r = _factor(matrix.submatrix(support), sigma_x1, sigma_n)
    r_inv = np.linalg.solve(r, np.eye(support.size))
    energy = float(np.sum(np.asarray(x0, dtype=float)[support] ** 2))
    return float(np.sum(r_inv**2)) / energy


def _log_gaussian_evidence(z, cov):
    chol = np.linalg.cholesky(cov)
    w = np.linalg.solve(chol, z)
    return -0.5 * (w @ w) - np.sum(np.log(np.diag(chol))) - 0.5 * len(z) * math.log(2 * math.pi)


def exhaustive_mmse(matrix: SensingMatrix, z, q: float, sigma_x1: float, sigma_n: float,
                    kind: str = "gaussian") -> np.ndarray:
    """Posterior mean summed over every support (Gaussian slab) or every signed pattern.

    Only for tiny problems: 2^N supports, 3^N signed patterns.
    """
    n = matrix.n
    if n > EXHAUSTIVE_LIMIT or (kind == "signed" and n > 10):
        raise ValueError(f"exhaustive MMSE refuses N={n}")
    z = np.asarray(z, dtype=float)
    if q <= 0.0:
        return np.zeros(n)
    sigma_n = _effective_sigma_n(sigma_x1, sigma_n)
    dense = matrix.to_dense()
    log_q = math.log(q)
    log_off = math.log1p(-q) if q < 1 else -math.inf

    estimates, log_w = [], []
    if kind == "signed":
        for pattern in itertools.product((0, 1, -1), repeat=n):
            x = sigma_x1 * np.asarray(pattern, dtype=float)
            k = int(np.count_nonzero(x))
            if k < n and log_off == -math.inf:
                continue
            resid = z - dense @ x
            lw = k * (log_q - math.log(2)) + (n - k) * (log_off if k < n else 0.0)
            log_w.append(lw - 0.5 * (resid @ resid) / sigma_n**2)
            estimates.append(x)
    else:
        for bits in itertools.product((0, 1), repeat=n):
            s = np.asarray(bits)
            k = int(s.sum())
            if k < n and log_off == -math.inf:
                continue
            phi_s = dense[:, s.astype(bool)]
            cov = sigma_x1**2 * phi_s @ phi_s.T + sigma_n**2 * np.eye(matrix.m)
            lw = k * log_q + (n - k) * (log_off if k < n else 0.0)
            log_w.append(lw + _log_gaussian_evidence(z, cov))
            estimates.append(mmse_on_support(matrix, s, z, sigma_x1, sigma_n))
    log_w = np.asarray(log_w)
    w = np.exp(log_w - log_w.max())
    w /= w.sum()
    return w @ np.asarray(estimates)


def map_value_readout(marginals, grid: DensityGrid) -> np.ndarray:
    """Grid value at each marginal's peak (zero when the zero cell ties the peak).

    Cell 0 sits on the wrap seam, so it stands for both -width/2 and
    +width/2; the side with more neighbouring mass decides its sign.
    """
    f = np.atleast_2d(np.asarray(marginals, dtype=float))
    peak = np.argmax(f, axis=1)
    at_zero = f[:, grid.center_index] >= f.max(axis=1)
    peak[at_zero] = grid.center_index
    values = grid.values[peak]
    seam = (peak == 0) & (f[:, -1] > f[:, 1])
    values[seam] = -values[seam]
    return values
