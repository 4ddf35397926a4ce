"""Problem-instance generation: sparse signals, sparse-binary sensing matrices, noise.

All randomness flows through an explicit ``numpy.random.Generator`` (or a seed
accepted by ``numpy.random.default_rng``), so every function here is pure with
respect to its inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "SignalKind",
    "SignalModel",
    "SparseSignal",
    "SensingMatrix",
    "NoiseModel",
    "generate_signal",
    "generate_matrix",
    "measure",
    "snr_db",
    "sigma_for_snr",
    "on_support_second_moment",
    "write_matrix",
    "read_matrix",
    "write_vector",
    "read_vector",
]


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class SignalKind(str, Enum):
    GAUSSIAN = "gaussian"
    SIGNED = "signed"


@dataclass(frozen=True)
class SignalModel:
    kind: SignalKind = SignalKind.GAUSSIAN
    n: int = 1024
    q: float = 0.05
    sigma_x1: float = 5.0
    x_min: float = 1.25
    x_max: float | None = None  # defaults to 3 * sigma_x1

    def __post_init__(self):
        object.__setattr__(self, "kind", SignalKind(self.kind))
        if self.x_max is None:
            object.__setattr__(self, "x_max", 3.0 * self.sigma_x1)
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")
        if self.sigma_x1 <= 0:
            raise ValueError("sigma_x1 must be positive")
        if not 0.0 <= self.x_min <= self.x_max:
            raise ValueError("need 0 <= x_min <= x_max")
        if self.n < 1:
            raise ValueError("n must be positive")


@dataclass
class SparseSignal:
    values: np.ndarray
    state: np.ndarray

    @property
    def k(self) -> int:
        return int(self.state.sum())

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.state)


@dataclass(frozen=True)
class NoiseModel:
    sigma_n: float

    def __post_init__(self):
        if self.sigma_n < 0:
            raise ValueError("sigma_n must be nonnegative")


@dataclass
class SensingMatrix:
    """Sparse-binary matrix stored as a bipartite adjacency structure.

    ``columns[i]`` is N_V(i), the measurement indices touched by variable i;
    ``rows[j]`` is N_C(j). ``column_weight`` is the common column weight, or
    ``None`` for hand-built irregular graphs (e.g. test trees).
    """

    m: int
    n: int
    columns: list[np.ndarray]
    rows: list[np.ndarray] = field(default=None)  # type: ignore[assignment]
    column_weight: int | None = None

    def __post_init__(self):
        self.columns = [np.asarray(c, dtype=np.int64) for c in self.columns]
        if len(self.columns) != self.n:
            raise ValueError("need one column list per variable")
        for i, col in enumerate(self.columns):
            if len(np.unique(col)) != len(col):
                raise ValueError(f"duplicate row index in column {i}")
            if len(col) and (col.min() < 0 or col.max() >= self.m):
                raise ValueError(f"row index out of range in column {i}")
        if self.rows is None:
            rows: list[list[int]] = [[] for _ in range(self.m)]
            for i, col in enumerate(self.columns):
                for j in col:
                    rows[j].append(i)
            self.rows = [np.asarray(r, dtype=np.int64) for r in rows]
        weights = {len(c) for c in self.columns}
        if self.column_weight is None and len(weights) == 1:
            self.column_weight = weights.pop()

    @classmethod
    def from_dense(cls, dense) -> "SensingMatrix":
        dense = np.asarray(dense)
        if not np.isin(dense, (0, 1)).all():
            raise ValueError("sensing matrix entries must be 0/1")
        m, n = dense.shape
        return cls(m, n, [np.flatnonzero(dense[:, i]) for i in range(n)])

    @property
    def n_edges(self) -> int:
        return sum(len(c) for c in self.columns)

    @property
    def density(self) -> float:
        """Fraction of nonzero entries (L/M for a fixed-weight matrix)."""
        return self.n_edges / (self.m * self.n)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.m, self.n))
        for i, col in enumerate(self.columns):
            out[col, i] = 1.0
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = np.zeros(self.m)
        for i in np.flatnonzero(x):
            z[self.columns[i]] += x[i]
        return z

    def submatrix(self, idx: Iterable[int]) -> np.ndarray:
        """Dense M x K block of the selected columns."""
        idx = list(idx)
        out = np.zeros((self.m, len(idx)))
        for k, i in enumerate(idx):
            out[self.columns[i], k] = 1.0
        return out

    def count_4_cycles(self) -> int:
        """Number of column pairs sharing two or more rows (length-4 cycles)."""
        dense = self.to_dense()
        overlap = dense.T @ dense
        iu = np.triu_indices(self.n, 1)
        shared = overlap[iu]
        return int(np.sum(shared * (shared - 1) / 2))


def on_support_second_moment(model: SignalModel) -> float:
    """E[x^2 | on support] under the model's magnitude restrictions."""
    if model.kind is SignalKind.SIGNED:
        return model.sigma_x1**2
    s = model.sigma_x1
    a, b = model.x_min / s, model.x_max / s

    def phi(t):
        return math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)

    def cdf(t):
        return 0.5 * (1.0 + math.erf(t / math.sqrt(2)))

    mass = cdf(b) - cdf(a)
    if mass <= 0:
        return model.x_min**2
    return s * s * (1.0 + (a * phi(a) - b * phi(b)) / mass)


def generate_signal(model: SignalModel, seed=None) -> SparseSignal:
    rng = _rng(seed)
    state = rng.random(model.n) < model.q
    values = np.zeros(model.n)
    k = int(state.sum())
    if k:
        if model.kind is SignalKind.SIGNED:
            signs = np.where(rng.random(k) < 0.5, -1.0, 1.0)
            values[state] = signs * model.sigma_x1
        else:
            values[state] = _truncated_normal(rng, k, model.sigma_x1, model.x_min, model.x_max)
    return SparseSignal(values=values, state=state.astype(np.int8))


def _truncated_normal(rng, k, sigma, lo, hi) -> np.ndarray:
    # rejection: acceptance is ~0.8 at lo = sigma/4, hi = 3 sigma
    out = np.empty(0)
    while out.size < k:
        draw = rng.normal(0.0, sigma, size=2 * (k - out.size) + 8)
        mag = np.abs(draw)
        out = np.concatenate([out, draw[(mag >= lo) & (mag <= hi)]])
    return out[:k]


def generate_matrix(m: int, n: int, column_weight: int, seed=None, *, distinct_columns: bool = False) -> SensingMatrix:
    """Random sparse-binary matrix with exactly ``column_weight`` ones per column.

    ``distinct_columns`` redraws any column that repeats an earlier one; with
    duplicated columns the support is not identifiable from z at all.
    """
    if column_weight > m:
        raise ValueError(f"column weight L={column_weight} exceeds m={m}")
    if column_weight < 1:
        raise ValueError("column weight must be at least 1")
    if distinct_columns and math.comb(m, column_weight) < n:
        raise ValueError("not enough distinct columns for this shape")
    rng = _rng(seed)
    cols: list[np.ndarray] = []
    seen: set[tuple[int, ...]] = set()
    while len(cols) < n:
        col = np.sort(rng.choice(m, size=column_weight, replace=False))
        if distinct_columns:
            key = tuple(col.tolist())
            if key in seen:
                continue
            seen.add(key)
        cols.append(col)
    return SensingMatrix(m, n, cols, column_weight=column_weight)


def measure(matrix: SensingMatrix, signal: SparseSignal | np.ndarray, noise: NoiseModel, seed=None) -> np.ndarray:
    values = signal.values if isinstance(signal, SparseSignal) else np.asarray(signal, dtype=float)
    if values.shape != (matrix.n,):
        raise ValueError("signal length does not match matrix")
    z = matrix.matvec(values)
    if noise.sigma_n > 0:
        z = z + _rng(seed).normal(0.0, noise.sigma_n, size=matrix.m)
    return z


def snr_db(matrix: SensingMatrix, signal: SparseSignal | np.ndarray, noise: NoiseModel) -> float:
    """Realized SNR 10 log10(||Phi x||^2 / (M sigma_n^2)); ``inf`` for a noiseless instance."""
    values = signal.values if isinstance(signal, SparseSignal) else np.asarray(signal, dtype=float)
    energy = float(np.sum(matrix.matvec(values) ** 2))
    if noise.sigma_n == 0:
        return math.inf
    if energy == 0:
        return -math.inf
    return 10.0 * math.log10(energy / (matrix.m * noise.sigma_n**2))


def sigma_for_snr(matrix: SensingMatrix, model: SignalModel, target_snr_db: float) -> float:
    """Noise level whose expected SNR equals the target.

    E||Phi x||^2 = sum_i |N_V(i)| q E[x^2 | on] because the on-support values
    are zero-mean and independent.
    """
    if math.isinf(target_snr_db) and target_snr_db > 0:
        return 0.0
    if not math.isfinite(target_snr_db):
        raise ValueError("target SNR must be finite or +inf")
    expected = matrix.n_edges * model.q * on_support_second_moment(model)
    return math.sqrt(expected / (matrix.m * 10.0 ** (target_snr_db / 10.0)))


# --- text serialization -------------------------------------------------------


def write_matrix(matrix: SensingMatrix, path) -> None:
    weight = matrix.column_weight if matrix.column_weight is not None else 0
    lines = [f"{matrix.m} {matrix.n} {weight}"]
    lines += [" ".join(str(int(j)) for j in col) for col in matrix.columns]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_matrix(path) -> SensingMatrix:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError("matrix header must be 'M N L'")
        m, n, weight = (int(t) for t in header)
        cols = [np.array([int(t) for t in fh.readline().split()], dtype=np.int64) for _ in range(n)]
    if weight and any(len(c) != weight for c in cols):
        raise ValueError("column length disagrees with header L")
    return SensingMatrix(m, n, cols, column_weight=weight or None)


def write_vector(values: Sequence[float], path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.writelines(f"{float(v)!r}\n" for v in values)


def read_vector(path) -> np.ndarray:
    with open(path) as fh:
        return np.array([float(line) for line in fh if line.strip()])
