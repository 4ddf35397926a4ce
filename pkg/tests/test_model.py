import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bhtbp.model import (NoiseModel, SensingMatrix, SignalKind, SignalModel, generate_matrix,
                         generate_signal, measure, on_support_second_moment, read_matrix,
                         read_vector, sigma_for_snr, snr_db, write_matrix, write_vector)


def test_gaussian_signal_magnitudes_and_sparsity():
    model = SignalModel(SignalKind.GAUSSIAN, n=1024, q=0.05, sigma_x1=5, x_min=1.25, x_max=15)
    ks = []
    for seed in range(40):
        sig = generate_signal(model, seed)
        nz = sig.values[sig.state == 1]
        assert np.all((np.abs(nz) >= 1.25) & (np.abs(nz) <= 15))
        assert np.array_equal(sig.state == 1, sig.values != 0)
        ks.append(sig.k)
    # E[K] = 51.2 with sd 7 per draw, so the 40-draw mean is within ~1.1
    assert abs(np.mean(ks) - 51.2) < 4


@pytest.mark.parametrize("kind", list(SignalKind))
def test_zero_rate_gives_zero_signal(kind):
    sig = generate_signal(SignalModel(kind, n=64, q=0.0), 3)
    assert not sig.values.any() and not sig.state.any()


def test_signed_values_and_rate():
    model = SignalModel(SignalKind.SIGNED, n=10, q=0.5, sigma_x1=5)
    rng = np.random.default_rng(11)
    hits = 0
    draws = 10_000
    for _ in range(draws):
        sig = generate_signal(model, rng)
        assert set(np.unique(sig.values[sig.state == 1])) <= {-5.0, 5.0}
        hits += sig.k
    # 1e5 Bernoulli(0.5) trials: sd of the fraction is 0.0016
    assert abs(hits / (10 * draws) - 0.5) < 0.01


def test_signal_model_validation():
    with pytest.raises(ValueError):
        SignalModel(q=1.5)
    with pytest.raises(ValueError):
        SignalModel(sigma_x1=0)
    with pytest.raises(ValueError):
        SignalModel(x_min=20, x_max=10)
    assert SignalModel(sigma_x1=2).x_max == 6


def test_large_matrix_shape():
    a = generate_matrix(512, 1024, 4, seed=0)
    assert a.n_edges == 4096
    assert all(len(c) == 4 for c in a.columns)
    assert a.density == pytest.approx(4 / 512)


def test_full_weight_matrix_is_all_ones():
    assert np.array_equal(generate_matrix(4, 4, 4, seed=1).to_dense(), np.ones((4, 4)))


def test_row_column_adjacency_cross_check():
    a = generate_matrix(6, 10, 2, seed=5)
    for i, col in enumerate(a.columns):
        for j in range(a.m):
            assert (j in col) == (i in a.rows[j])
        assert len(set(col.tolist())) == len(col)


def test_distinct_columns():
    a = generate_matrix(6, 15, 2, seed=0, distinct_columns=True)
    assert len({tuple(c.tolist()) for c in a.columns}) == 15
    with pytest.raises(ValueError):
        generate_matrix(6, 16, 2, seed=0, distinct_columns=True)


def test_matrix_validation():
    with pytest.raises(ValueError):
        generate_matrix(3, 5, 4)
    with pytest.raises(ValueError):
        SensingMatrix(3, 1, [np.array([0, 0])])
    with pytest.raises(ValueError):
        SensingMatrix(3, 1, [np.array([3])])
    with pytest.raises(ValueError):
        SensingMatrix.from_dense([[0.5, 1]])


def test_measure_by_hand():
    a = SensingMatrix.from_dense([[1, 1], [1, 0]])
    assert np.array_equal(measure(a, np.array([2.0, 3.0]), NoiseModel(0.0)), [5.0, 2.0])
    assert not measure(a, np.zeros(2), NoiseModel(0.0)).any()


def test_four_cycles():
    a = SensingMatrix.from_dense([[1, 1, 0], [1, 1, 1], [0, 1, 1]])
    # columns 0,1 share rows {0,1}; 1,2 share {1,2}; 0,2 share only {1}
    assert a.count_4_cycles() == 2


def test_snr_db_by_hand():
    # ||Phi x||^2 = 512 from a single column of weight 512 with value 1
    a = SensingMatrix(512, 1, [np.arange(512)])
    assert snr_db(a, np.array([1.0]), NoiseModel(1.0)) == pytest.approx(0.0)
    assert snr_db(a, np.array([10.0]), NoiseModel(1.0)) == pytest.approx(20.0)
    assert snr_db(a, np.array([1.0]), NoiseModel(0.0)) == math.inf


def test_sigma_for_snr_signed_closed_form():
    a = generate_matrix(512, 1024, 4, seed=2)
    model = SignalModel(SignalKind.SIGNED, n=1024, q=0.05, sigma_x1=5)
    assert sigma_for_snr(a, model, 0.0) == pytest.approx(math.sqrt(10))
    assert sigma_for_snr(a, model, math.inf) == 0.0


def test_truncated_second_moment_against_quadrature():
    scipy_integrate = pytest.importorskip("scipy.integrate")
    model = SignalModel(n=8, sigma_x1=5, x_min=1.25, x_max=15)
    pdf = lambda x: math.exp(-0.5 * (x / 5) ** 2)
    num = scipy_integrate.quad(lambda x: x * x * pdf(x), 1.25, 15)[0]
    den = scipy_integrate.quad(pdf, 1.25, 15)[0]
    assert on_support_second_moment(model) == pytest.approx(num / den, rel=1e-10)


def test_gaussian_sigma_matches_monte_carlo():
    a = generate_matrix(512, 1024, 4, seed=3)
    model = SignalModel(n=1024)
    rng = np.random.default_rng(4)
    energy = np.mean([np.sum(a.matvec(generate_signal(model, rng).values) ** 2) for _ in range(2000)])
    mc_sigma = math.sqrt(energy / (512 * 10 ** 2))
    assert sigma_for_snr(a, model, 20.0) == pytest.approx(mc_sigma, rel=0.02)


@pytest.mark.parametrize("target", [10.0, 30.0])
def test_snr_round_trip(target):
    model = SignalModel(n=1024)
    rng = np.random.default_rng(int(target))
    realized = []
    for _ in range(200):
        a = generate_matrix(512, 1024, 4, rng)
        sig = generate_signal(model, rng)
        realized.append(snr_db(a, sig, NoiseModel(sigma_for_snr(a, model, target))))
    assert abs(np.mean(realized) - target) < 0.5


def test_matrix_and_vector_round_trip(tmp_path):
    a = generate_matrix(12, 20, 3, seed=9)
    write_matrix(a, tmp_path / "a.txt")
    text = (tmp_path / "a.txt").read_bytes()
    assert text.startswith(b"12 20 3\n") and b"\r" not in text
    b = read_matrix(tmp_path / "a.txt")
    assert np.array_equal(a.to_dense(), b.to_dense())
    v = np.random.default_rng(0).standard_normal(7)
    write_vector(v, tmp_path / "v.txt")
    assert np.array_equal(read_vector(tmp_path / "v.txt"), v)


def test_read_matrix_rejects_bad_header(tmp_path):
    (tmp_path / "bad.txt").write_text("3 4\n")
    with pytest.raises(ValueError):
        read_matrix(tmp_path / "bad.txt")


@settings(max_examples=30, deadline=None)
@given(m=st.integers(2, 30), n=st.integers(1, 40), data=st.data())
def test_generated_matrix_invariants(m, n, data):
    weight = data.draw(st.integers(1, m))
    a = generate_matrix(m, n, weight, seed=data.draw(st.integers(0, 2**32)))
    assert a.n_edges == n * weight
    dense = a.to_dense()
    assert np.array_equal(dense.sum(axis=0), np.full(n, weight))
    x = np.arange(n, dtype=float)
    assert np.allclose(a.matvec(x), dense @ x)
