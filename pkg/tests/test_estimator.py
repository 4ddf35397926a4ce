import math

import numpy as np
import pytest

from bhtbp.density import DensityGrid, delta, sample_gaussian
from bhtbp.estimator import (exhaustive_mmse, map_value_readout, mmse_on_support, oracle_estimate,
                             oracle_mse_formula)
from bhtbp.model import SensingMatrix, SignalModel, generate_matrix, generate_signal, sigma_for_snr
from bhtbp.oracles import dense_mmse_solve, scalar_mmse

GRID = DensityGrid(256, 5.0)


def test_empty_support_gives_zeros():
    a = generate_matrix(6, 10, 2, seed=0)
    assert not mmse_on_support(a, np.zeros(10), np.ones(6), 5.0, 0.1).any()


def test_single_column_closed_form():
    L, v, sx = 4, 3.0, 5.0
    a = SensingMatrix(8, 1, [np.arange(L)])
    z = a.matvec(np.array([v]))
    for sn in (1.0, 0.1, 1e-4):
        est = mmse_on_support(a, [1], z, sx, sn)[0]
        assert est == pytest.approx(v * L * sx**2 / (L * sx**2 + sn**2), rel=1e-12)
    assert mmse_on_support(a, [1], z, sx, 0.0)[0] == pytest.approx(v, rel=1e-9)


def test_matches_dense_inverse():
    rng = np.random.default_rng(1)
    for _ in range(20):
        dense = (rng.random((8, 12)) < 0.35).astype(float)
        a = SensingMatrix.from_dense(dense)
        s = (rng.random(12) < 0.4).astype(int)
        s[0] = 1
        z = rng.standard_normal(8)
        fast = mmse_on_support(a, s, z, 5.0, 0.3)[s == 1]
        slow = dense_mmse_solve(dense[:, s == 1], z, 5.0, 0.3)
        assert np.linalg.norm(fast - slow) <= 1e-10 * np.linalg.norm(slow)


def test_oracle_is_mmse_on_true_support():
    a = generate_matrix(16, 32, 3, seed=2)
    s = np.zeros(32, dtype=int)
    s[[1, 7, 20]] = 1
    z = np.random.default_rng(3).standard_normal(16)
    assert np.array_equal(oracle_estimate(a, s, z, 5.0, 0.2), mmse_on_support(a, s, z, 5.0, 0.2))


def test_oracle_formula_orthogonal_columns():
    L, sx, sn = 4, 5.0, 0.5
    cols = [np.arange(0, 4), np.arange(4, 8), np.arange(8, 12)]
    a = SensingMatrix(12, 3, cols)
    x0 = np.array([1.0, -2.0, 3.0])
    expected = 3 / ((1 / sx**2 + L / sn**2) * np.sum(x0**2))
    assert oracle_mse_formula(a, [1, 1, 1], sx, sn, x0) == pytest.approx(expected, rel=1e-12)
    # with overwhelming noise only the prior is left
    big = oracle_mse_formula(a, [1, 1, 1], sx, 1e8, x0) * np.sum(x0**2)
    assert big == pytest.approx(3 * sx**2, rel=1e-6)
    with pytest.raises(ValueError):
        oracle_mse_formula(a, [0, 0, 0], sx, sn, x0)


def test_oracle_monte_carlo_matches_trace():
    rng = np.random.default_rng(4)
    a = generate_matrix(64, 128, 4, rng)
    s = np.zeros(128, dtype=int)
    s[rng.choice(128, 8, replace=False)] = 1
    sx, sn = 5.0, 1.0
    err = np.empty(1000)
    bound = np.empty(1000)
    for t in range(1000):
        x0 = np.zeros(128)
        x0[s == 1] = rng.normal(0, sx, 8)
        z = a.matvec(x0) + sn * rng.standard_normal(64)
        x_hat = oracle_estimate(a, s, z, sx, sn)
        err[t] = np.sum((x_hat - x0) ** 2)
        bound[t] = oracle_mse_formula(a, s, sx, sn, x0) * np.sum(x0**2)
    assert err.mean() == pytest.approx(bound.mean(), rel=0.10)


def test_oracle_nmse_vanishes_noiseless():
    rng = np.random.default_rng(5)
    a = generate_matrix(64, 128, 4, rng)
    sig = generate_signal(SignalModel(n=128, q=0.05), rng)
    x_hat = oracle_estimate(a, sig.state, a.matvec(sig.values), 5.0, 0.0)
    assert np.sum((x_hat - sig.values) ** 2) / np.sum(sig.values**2) < 1e-12


def test_exhaustive_mmse_small_q():
    a = generate_matrix(6, 10, 2, seed=6)
    z = np.random.default_rng(7).standard_normal(6)
    assert not exhaustive_mmse(a, z, 0.0, 5.0, 0.1).any()
    assert np.abs(exhaustive_mmse(a, z, 1e-12, 5.0, 0.5)).max() < 1e-9


@pytest.mark.parametrize("z,sn", [(0.3, 0.5), (2.0, 0.5), (6.0, 1.0), (-4.0, 2.0)])
def test_exhaustive_mmse_scalar(z, sn):
    pytest.importorskip("scipy")
    a = SensingMatrix(1, 1, [np.array([0])])
    est = exhaustive_mmse(a, np.array([z]), 0.05, 5.0, sn)[0]
    assert est == pytest.approx(scalar_mmse(z, 0.05, 5.0, sn), abs=1e-8)


def test_exhaustive_mmse_signed_scalar():
    a = SensingMatrix(1, 1, [np.array([0])])
    z, q, sx, sn = 3.0, 0.2, 5.0, 2.0
    w = [(1 - q) * math.exp(-z**2 / (2 * sn**2)),
         q / 2 * math.exp(-(z - sx) ** 2 / (2 * sn**2)),
         q / 2 * math.exp(-(z + sx) ** 2 / (2 * sn**2))]
    expected = sx * (w[1] - w[2]) / sum(w)
    assert exhaustive_mmse(a, np.array([z]), q, sx, sn, kind="signed")[0] == pytest.approx(expected, rel=1e-12)


def test_exhaustive_mmse_refuses_large_problems():
    with pytest.raises(ValueError):
        exhaustive_mmse(generate_matrix(10, 20, 2, seed=0), np.zeros(10), 0.1, 5.0, 1.0)


def test_readout_of_on_grid_delta():
    v = GRID.values[170]
    assert map_value_readout(delta(GRID, v).mass, GRID)[0] == v


def test_readout_zero_on_tie():
    f = np.zeros(GRID.n_d)
    f[GRID.center_index] = f[200] = 0.5
    assert map_value_readout(f, GRID)[0] == 0.0


def test_readout_seam_cell_sign():
    # a value just past +15 wraps onto cell 0; the neighbour on the right side of the seam decides
    f = np.zeros(GRID.n_d)
    f[0], f[-1], f[1] = 0.6, 0.3, 0.1
    assert map_value_readout(f, GRID)[0] == pytest.approx(15.0)
    f[-1], f[1] = 0.1, 0.3
    assert map_value_readout(f, GRID)[0] == pytest.approx(-15.0)


def test_rounding_error_variance():
    rng = np.random.default_rng(8)
    x = rng.uniform(-10, 10, 20000)
    marg = np.stack([sample_gaussian(GRID, v, 0.02**2).mass for v in x[:2000]])
    err = map_value_readout(marg, GRID) - x[:2000]
    assert np.mean(err**2) == pytest.approx(GRID.t_s**2 / 12, rel=0.1)


def test_quantization_floor_value():
    # floor t_s^2 / (12 sigma^2) for n_d = 256, sigma = 5; t_s = 15/128 is exact in binary
    assert GRID.t_s**2 / 12 / 25 == pytest.approx(0.1171875**2 / 300, rel=1e-15)
    assert GRID.t_s**2 / 12 / 25 == pytest.approx(4.578e-5, abs=1e-8)


def test_sigma_for_snr_used_consistently():
    a = generate_matrix(256, 512, 4, seed=9)
    assert sigma_for_snr(a, SignalModel(n=512), 50.0) == pytest.approx(0.011, rel=0.05)
