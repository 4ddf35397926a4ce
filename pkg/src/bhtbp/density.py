"""Sampled probability densities on a fixed, zero-centred grid.

A grid of ``n_d`` cells with step ``t_s`` covers [-3 sigma_x1, 3 sigma_x1);
cell ``m`` sits at value ``(m - n_d/2) * t_s`` so the centre cell is exactly
zero. Convolutions are circular and centre-aligned: convolving with the
delta at the centre cell is the identity, and values add modulo the grid
width.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "DensityUnderflowError",
    "DensityGrid",
    "SampledDensity",
    "UNDERFLOW_LIMIT",
    "sample_gaussian",
    "sample_spike_slab_prior",
    "uniform",
    "delta",
    "multiply_normalize",
    "reverse",
    "convolve_circular",
    "convolve_many",
    "centre_phase",
]

UNDERFLOW_LIMIT = 1e-300


class DensityUnderflowError(FloatingPointError):
    """A pointwise product vanished on every cell, even in log domain."""


@dataclass(frozen=True)
class DensityGrid:
    n_d: int
    sigma_x1: float

    def __post_init__(self):
        if self.n_d < 2 or self.n_d & (self.n_d - 1):
            raise ValueError(f"n_d must be a power of two, got {self.n_d}")
        if self.sigma_x1 <= 0:
            raise ValueError("sigma_x1 must be positive")

    @property
    def t_s(self) -> float:
        return 6.0 * self.sigma_x1 / self.n_d

    @property
    def center_index(self) -> int:
        return self.n_d // 2

    @property
    def width(self) -> float:
        return self.n_d * self.t_s

    @cached_property
    def values(self) -> np.ndarray:
        return (np.arange(self.n_d) - self.center_index) * self.t_s

    def value(self, m: int) -> float:
        return (m - self.center_index) * self.t_s

    def index_of(self, x: float) -> int:
        """Nearest cell to ``x``, clipped into the grid."""
        m = int(round(x / self.t_s)) + self.center_index
        return min(max(m, 0), self.n_d - 1)

    def clamp(self, x):
        return np.clip(x, self.values[0], self.values[-1])


@dataclass
class SampledDensity:
    grid: DensityGrid
    mass: np.ndarray

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=float)
        if self.mass.shape != (self.grid.n_d,):
            raise ValueError("mass length must equal n_d")

    def normalized(self) -> "SampledDensity":
        total = self.mass.sum()
        if not total > 0:
            raise DensityUnderflowError("cannot normalize a zero density")
        return SampledDensity(self.grid, self.mass / total)

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.mass))

    def mean(self) -> float:
        return float(self.mass @ self.grid.values)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("value,mass\n")
            for v, p in zip(self.grid.values, self.mass):
                fh.write(f"{float(v)!r},{float(p)!r}\n")


def _normalize(mass: np.ndarray) -> np.ndarray:
    return mass / mass.sum()


def uniform(grid: DensityGrid) -> SampledDensity:
    return SampledDensity(grid, np.full(grid.n_d, 1.0 / grid.n_d))


def delta(grid: DensityGrid, value: float = 0.0) -> SampledDensity:
    mass = np.zeros(grid.n_d)
    mass[grid.index_of(value)] = 1.0
    return SampledDensity(grid, mass)


def sample_gaussian(grid: DensityGrid, mean: float, variance: float) -> SampledDensity:
    """Gaussian sampled on the grid; a mean outside the grid is clamped to its edge."""
    if not variance > 0:
        raise ValueError("variance must be positive")
    mean = float(grid.clamp(mean))
    logp = -((grid.values - mean) ** 2) / (2.0 * variance)
    return SampledDensity(grid, _normalize(np.exp(logp - logp.max())))


def sample_spike_slab_prior(grid: DensityGrid, q: float, sigma_x1: float) -> SampledDensity:
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    slab = sample_gaussian(grid, 0.0, sigma_x1**2).mass
    spike = np.zeros(grid.n_d)
    spike[grid.center_index] = 1.0
    return SampledDensity(grid, _normalize(q * slab + (1.0 - q) * spike))


def _check_grid(ds: Sequence[SampledDensity]) -> DensityGrid:
    if not ds:
        raise ValueError("need at least one density")
    grid = ds[0].grid
    if any(d.grid != grid for d in ds[1:]):
        raise ValueError("densities live on different grids")
    return grid


def multiply_normalize(factors: Sequence[SampledDensity]) -> SampledDensity:
    """Normalized pointwise product; falls back to log domain on underflow."""
    grid = _check_grid(factors)
    stack = np.stack([f.mass for f in factors])
    prod = np.prod(stack, axis=0)
    total = prod.sum()
    if total > UNDERFLOW_LIMIT and math.isfinite(total):
        return SampledDensity(grid, prod / total)
    with np.errstate(divide="ignore"):
        logp = np.log(stack).sum(axis=0)
    top = logp.max()
    if not np.isfinite(top):
        raise DensityUnderflowError("factors have disjoint support")
    return SampledDensity(grid, _normalize(np.exp(logp - top)))


def reverse(d: SampledDensity) -> SampledDensity:
    """Reflect x -> -x; cell 0 (value -n_d/2 t_s) maps to itself."""
    return SampledDensity(d.grid, np.roll(d.mass[::-1], 1))


def centre_phase(n_d: int) -> np.ndarray:
    """rfft-domain factor for a circular shift by n_d/2 cells, i.e. (-1)^k."""
    return np.where(np.arange(n_d // 2 + 1) % 2 == 0, 1.0, -1.0)


def _finish(raw: np.ndarray) -> np.ndarray:
    raw = np.maximum(raw, 0.0)
    total = raw.sum()
    if not total > 0:
        raise DensityUnderflowError("convolution lost all mass")
    return raw / total


def convolve_circular(a: SampledDensity, b: SampledDensity) -> SampledDensity:
    return convolve_many([a, b])


def convolve_many(ds: Sequence[SampledDensity]) -> SampledDensity:
    """Centre-aligned circular convolution of all inputs with one inverse FFT."""
    grid = _check_grid(ds)
    if len(ds) == 1:
        return SampledDensity(grid, ds[0].mass.copy())
    spec = np.prod(np.fft.rfft(np.stack([d.mass for d in ds]), axis=1), axis=0)
    if (len(ds) - 1) % 2:
        spec = spec * centre_phase(grid.n_d)
    return SampledDensity(grid, _finish(np.fft.irfft(spec, n=grid.n_d)))
