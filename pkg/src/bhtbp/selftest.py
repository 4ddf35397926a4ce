"""Fast paths checked against the slow references in :mod:`bhtbp.oracles`.

Each check returns a :class:`CheckResult`; ``run_all`` is what
``recover selftest`` executes. The acceptance tests call the same functions
with the full problem sizes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import bp, oracles
from .density import DensityGrid, SampledDensity, convolve_circular, sample_spike_slab_prior
from .detector import bht_detect, build_references
from .estimator import mmse_on_support
from .model import SensingMatrix

__all__ = [
    "CheckResult",
    "check_convolution",
    "check_tree_marginals",
    "check_mmse_solve",
    "check_scalar_bht",
    "random_tree",
    "run_all",
]


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: worst {self.worst:.3e} (tol {self.tolerance:.0e}) {self.detail}".rstrip()


def check_convolution(pairs: int = 50, n_d: int = 256, seed: int = 1, tol: float = 1e-10) -> CheckResult:
    rng = np.random.default_rng(seed)
    grid = DensityGrid(n_d, 1.0)
    worst = 0.0
    for _ in range(pairs):
        a = rng.random(n_d) ** 4
        b = rng.random(n_d) ** 4
        a /= a.sum()
        b /= b.sum()
        fast = convolve_circular(SampledDensity(grid, a), SampledDensity(grid, b)).mass
        worst = max(worst, float(np.max(np.abs(fast - oracles.direct_circular_convolution(a, b)))))
    return CheckResult("fft convolution vs direct sum", worst <= tol, worst, tol, f"{pairs} pairs, n_d={n_d}")


def random_tree(n: int, rng: np.random.Generator) -> SensingMatrix:
    """Random bipartite tree on ``n`` variables; every variable has at least one measurement."""
    columns: list[list[int]] = [[] for _ in range(n)]
    m = 0
    placed = [0]
    for i in range(1, n):
        # attach variable i through a fresh or an existing measurement of a placed variable
        anchor = int(rng.choice(placed))
        if columns[anchor] and rng.random() < 0.5:
            j = int(rng.choice(columns[anchor]))
        else:
            j = m
            m += 1
            columns[anchor].append(j)
        columns[i].append(j)
        placed.append(i)
    for i in range(n):
        if not columns[i] or rng.random() < 0.3:  # leaf measurements keep it a tree
            columns[i].append(m)
            m += 1
    return SensingMatrix(m, n, [np.array(sorted(c)) for c in columns])


def _wrapped_kernels(values: np.ndarray, z: np.ndarray, var: float) -> np.ndarray:
    width = values[1] - values[0]
    width *= len(values)
    d = values[None, :] - z[:, None]
    d = d - width * np.round(d / width)
    k = np.exp(-(d * d) / (2.0 * var))
    return k / k.sum(axis=1, keepdims=True)


def check_tree_marginals(graphs: int = 20, max_n: int = 6, n_d: int = 8, seed: int = 2,
                         tol: float = 1e-6) -> CheckResult:
    rng = np.random.default_rng(seed)
    grid = DensityGrid(n_d, 1.0)
    prior = sample_spike_slab_prior(grid, 0.3, 1.0)
    worst = 0.0
    for _ in range(graphs):
        n = int(rng.integers(1, max_n + 1))
        tree = random_tree(n, rng)
        x = grid.values[rng.integers(0, n_d, size=n)] * (rng.random(n) < 0.5)
        sigma_n = float(rng.uniform(0.3, 1.0))
        z = tree.matvec(x) + sigma_n * rng.standard_normal(tree.m)
        state = bp.run(tree, z, prior, sigma_n, iterations=2 * n + 2)
        var = bp.noise_variance(grid, sigma_n, True)
        exact = oracles.exhaustive_grid_marginals(tree.columns, tree.m, prior.mass,
                                                  _wrapped_kernels(grid.values, z, var))
        tv = 0.5 * np.abs(state.marginals - exact).sum(axis=1).max()
        worst = max(worst, float(tv))
    return CheckResult("bp marginals on trees vs exhaustive sum", worst <= tol, worst, tol,
                       f"{graphs} trees, N<={max_n}, n_d={n_d}")


def check_mmse_solve(instances: int = 20, m: int = 8, n: int = 12, seed: int = 3, tol: float = 1e-10) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        dense = (rng.random((m, n)) < 0.35).astype(float)
        matrix = SensingMatrix.from_dense(dense)
        s = (rng.random(n) < 0.4).astype(np.int8)
        if not s.any():
            s[rng.integers(n)] = 1
        z = rng.standard_normal(m) * 3
        sigma_x1, sigma_n = float(rng.uniform(1, 5)), float(rng.uniform(0.05, 1))
        fast = mmse_on_support(matrix, s, z, sigma_x1, sigma_n)[s.astype(bool)]
        slow = oracles.dense_mmse_solve(dense[:, s.astype(bool)], z, sigma_x1, sigma_n)
        worst = max(worst, float(np.linalg.norm(fast - slow) / max(np.linalg.norm(slow), 1e-300)))
    return CheckResult("qr mmse vs explicit inverse", worst <= tol, worst, tol, f"{instances} instances {m}x{n}")


def check_scalar_bht(draws: int = 100, q: float = 0.05, sigma_x1: float = 5.0, n_d: int = 256,
                     seed: int = 4) -> CheckResult:
    """One variable, one measurement: grid BHT against the closed-form posterior odds.

    The grid quadrature error of a draw is the relative gap between the grid
    sum of prior times kernel and its closed form; draws whose analytic odds
    sit within twice that gap of the threshold are not scored.
    """
    rng = np.random.default_rng(seed)
    grid = DensityGrid(n_d, sigma_x1)
    prior = sample_spike_slab_prior(grid, q, sigma_x1)
    refs = build_references(grid, q, sigma_x1)
    graph = SensingMatrix(1, 1, [np.array([0])])
    scored = disagree = 0
    worst = 0.0
    for _ in range(draws):
        sigma_n = float(rng.uniform(0.3, 3.0))
        z = float(rng.uniform(-8.0, 8.0))
        state = bp.run(graph, np.array([z]), prior, sigma_n, iterations=1)
        decision = int(bht_detect(state.marginals, refs, q)[0])
        odds = oracles.scalar_posterior_odds(z, q, sigma_x1, sigma_n)
        grid_odds = _grid_odds(grid, prior.mass, z, sigma_n, q)
        quad_err = abs(math.log(grid_odds / odds))
        worst = max(worst, quad_err)
        if abs(math.log(odds)) <= 2.0 * quad_err:
            continue
        scored += 1
        disagree += decision != int(odds > 1.0)
    return CheckResult("scalar bht vs analytic posterior odds", disagree == 0, float(disagree), 0.0,
                       f"{scored}/{draws} draws scored, worst log quadrature gap {worst:.1e}")


def _grid_odds(grid, prior_mass, z, sigma_n, q):
    """Posterior odds from the grid prior times the unnormalized kernel, without BP."""
    like = np.exp(-((grid.values - z) ** 2) / (2 * sigma_n**2))
    spike = (1 - q) * like[grid.center_index]
    return (prior_mass @ like - spike) / spike


def run_all(quick: bool = True) -> list[CheckResult]:
    if quick:
        return [check_convolution(pairs=10), check_tree_marginals(graphs=6, max_n=5),
                check_mmse_solve(instances=8), check_scalar_bht(draws=40)]
    return [check_convolution(), check_tree_marginals(), check_mmse_solve(), check_scalar_bht()]
