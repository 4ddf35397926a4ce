"""Sampled-density belief propagation over a sparse-binary sensing graph.

Messages are stored edge-major as (E, n_d) arrays. One iteration is a
synchronous flood: every signal message a_{i->j} is rebuilt from the previous
measurement messages, then every measurement message b_{j->i} is rebuilt from
the new signal messages.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .density import DensityGrid, SampledDensity, centre_phase
from .kernels import EdgeLayout
from .model import SensingMatrix

log = logging.getLogger(__name__)

__all__ = [
    "BpState",
    "init",
    "update_signal_messages",
    "update_measurement_messages",
    "compute_marginals",
    "noise_kernels",
    "run",
    "DEFAULT_ITERATIONS",
]

DEFAULT_ITERATIONS = 10
MESSAGE_FLOOR = 1e-30
KERNEL_FLOOR_CELLS = 1.0 / 16.0


@dataclass
class BpState:
    grid: DensityGrid
    layout: EdgeLayout
    signal_messages: np.ndarray  # a_{i->j}, variable-major edge order
    measurement_messages: np.ndarray  # b_{j->i}, same edge order
    marginals: np.ndarray
    iteration: int = 0
    backend: str | None = None
    log_fallbacks: int = 0
    clamp_events: int = 0
    _noise_cache: tuple | None = field(default=None, repr=False)

    @property
    def n_messages(self) -> int:
        return self.signal_messages.shape[0] + self.measurement_messages.shape[0]

    def marginal(self, i: int) -> SampledDensity:
        return SampledDensity(self.grid, self.marginals[i].copy())

    def edge(self, i: int, j: int) -> int:
        """Edge id of (variable i, measurement j)."""
        lo, hi = self.layout.var_ptr[i], self.layout.var_ptr[i + 1]
        hits = np.flatnonzero(self.layout.edge_check[lo:hi] == j)
        if not hits.size:
            raise KeyError(f"no edge between variable {i} and measurement {j}")
        return int(lo + hits[0])


def init(graph: SensingMatrix, grid: DensityGrid, backend: str | None = None) -> BpState:
    layout = EdgeLayout.from_columns(graph.columns, graph.m)
    e = layout.n_edges
    uniform = np.full((e, grid.n_d), 1.0 / grid.n_d)
    return BpState(
        grid=grid,
        layout=layout,
        signal_messages=np.zeros((e, grid.n_d)),
        measurement_messages=uniform,
        marginals=np.zeros((graph.n, grid.n_d)),
        backend=backend,
    )


def _as_mass(prior) -> np.ndarray:
    return np.ascontiguousarray(prior.mass if isinstance(prior, SampledDensity) else prior, dtype=float)


def update_signal_messages(state: BpState, prior) -> None:
    """a_{i->j} = eta[prior * prod_{k in N_V(i), k != j} b_{k->i}]; also refreshes marginals."""
    state.log_fallbacks += kernels.variable_update(
        _as_mass(prior), state.measurement_messages, state.layout,
        state.signal_messages, state.marginals, backend=state.backend,
    )


def noise_kernels(grid: DensityGrid, z: np.ndarray, variance: float, wrap: bool = True):
    """Sampled N(x; z_j, variance) for every measurement, one row each.

    With ``wrap`` the distance is taken modulo the grid width, consistent with
    the circular convolution; otherwise out-of-range z_j is clamped to the
    grid edge. Returns (kernels, number of out-of-range z_j).
    """
    z = np.asarray(z, dtype=float)
    out_of_range = int(np.sum((z < grid.values[0]) | (z > grid.values[-1])))
    if wrap:
        width = grid.width
        d = np.mod(grid.values[None, :] - z[:, None] + width / 2, width) - width / 2
    else:
        d = grid.values[None, :] - grid.clamp(z)[:, None]
    logp = -(d * d) / (2.0 * variance)
    logp -= logp.max(axis=1, keepdims=True)
    k = np.exp(logp)
    return k / k.sum(axis=1, keepdims=True), out_of_range


def noise_variance(grid: DensityGrid, sigma_n: float, noise_aware: bool) -> float:
    """Variance of the sampled noise kernel.

    The noise-aware kernel uses sigma_n^2. It is floored at a standard
    deviation of t_s/16: a delta-like kernel lets FFT round-off decide
    noiseless decodes. The floor is inactive once sigma_n > t_s/16 (below
    about 50 dB SNR for the default presets). The plain kernel ignores
    sigma_n and uses (t_s/2)^2.
    """
    if not noise_aware:
        return (grid.t_s / 2.0) ** 2
    return max(sigma_n**2, (grid.t_s * KERNEL_FLOOR_CELLS) ** 2)


def update_measurement_messages(state: BpState, z, sigma_n: float, noise_aware: bool = True,
                                wrap: bool = True) -> None:
    """b_{j->i} = N(.; z_j, var) (*) reversed a_{k->j} for k in N_C(j) minus i, via rfft."""
    grid = state.grid
    n_d = grid.n_d
    phase = centre_phase(n_d)
    var = noise_variance(grid, sigma_n, noise_aware)
    z = np.asarray(z, dtype=float)
    key = (z.tobytes(), var, wrap)
    if state._noise_cache is None or state._noise_cache[0] != key:
        g, clamps = noise_kernels(grid, z, var, wrap=wrap)
        state._noise_cache = (key, np.ascontiguousarray(np.fft.rfft(g, axis=1) * phase), clamps)
    _, noise_spec, clamps = state._noise_cache
    state.clamp_events += clamps
    # a[-m] in the zero-offset frame has spectrum conj(A) * (-1)^k
    a_spec = np.conj(np.fft.rfft(state.signal_messages, axis=1)) * phase
    out = np.empty_like(a_spec)
    kernels.check_combine(noise_spec, a_spec,
                          state.layout, out, backend=state.backend)
    b = np.fft.irfft(out * phase, n=n_d, axis=1)
    np.maximum(b, 0.0, out=b)
    b /= b.sum(axis=1, keepdims=True)
    # far below FFT round-off; keeps later products positive and out of the denormal range
    np.maximum(b, MESSAGE_FLOOR, out=b)
    state.measurement_messages = b
    state.iteration += 1


def compute_marginals(state: BpState, prior) -> np.ndarray:
    """f_{X_i}[m|z] = eta[prior * prod_{j in N_V(i)} b_{j->i}] for every variable."""
    scratch = np.empty_like(state.signal_messages)
    state.log_fallbacks += kernels.variable_update(
        _as_mass(prior), state.measurement_messages, state.layout,
        scratch, state.marginals, backend=state.backend,
    )
    return state.marginals


def run(graph: SensingMatrix, z, prior, sigma_n: float, iterations: int = DEFAULT_ITERATIONS, *,
        grid: DensityGrid | None = None, noise_aware: bool = True, wrap: bool = True,
        backend: str | None = None, trace: Callable[[int, BpState], None] | None = None) -> BpState:
    """Full decode; returns the final state with ``state.marginals`` filled in.

    ``trace(l, state)`` is called after each iteration with fresh marginals,
    which is how per-iteration diagnostics are dumped.
    """
    if iterations < 1:
        raise ValueError("need at least one BP iteration")
    if grid is None:
        if not isinstance(prior, SampledDensity):
            raise ValueError("pass the grid explicitly when the prior is a bare array")
        grid = prior.grid
    z = np.asarray(z, dtype=float)
    if z.shape != (graph.m,):
        raise ValueError("measurement vector length does not match the graph")
    state = init(graph, grid, backend=backend)
    for it in range(1, iterations + 1):
        update_signal_messages(state, prior)
        update_measurement_messages(state, z, sigma_n, noise_aware=noise_aware, wrap=wrap)
        if trace is not None:
            compute_marginals(state, prior)
            trace(it, state)
    compute_marginals(state, prior)
    if state.log_fallbacks:
        log.debug("log-domain fallback used %d times", state.log_fallbacks)
    return state
