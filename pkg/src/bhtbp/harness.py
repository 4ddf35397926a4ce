"""Recovery pipelines, metrics and Monte-Carlo SNR sweeps.

Every (SNR, trial) pair maps to one problem instance that all algorithms
share, so comparisons are paired. The matrix, signal and unit-noise pattern
depend only on ``seed + trial``; the SNR only rescales the noise.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import bp
from .density import DensityGrid, sample_spike_slab_prior
from .detector import (DEFAULT_CALIBRATION, bht_detect, build_calibrated_references,
                       build_references, map_detect)
from .estimator import (RecoveryResult, map_value_readout, mmse_on_support, oracle_estimate,
                        oracle_mse_formula)
from .model import (NoiseModel, SensingMatrix, SignalKind, SignalModel, SparseSignal,
                    generate_matrix, generate_signal, measure, sigma_for_snr, snr_db)

log = logging.getLogger(__name__)

__all__ = [
    "ALGORITHMS",
    "ConfigError",
    "ExperimentConfig",
    "Instance",
    "MetricsRow",
    "TrialRecord",
    "PRESETS",
    "Decoder",
    "make_instance",
    "recover_bht_bp",
    "recover_csbp",
    "recover_map_dd",
    "recover_oracle",
    "aggregate",
    "CSV_HEADER",
    "ser",
    "nmse",
    "run_trial",
    "run_trials",
    "run_sweep",
    "write_csv",
    "format_csv",
    "load_config",
    "parse_config",
]

ALGORITHMS = ("BHT-BP", "CS-BP", "CS-BP-NS", "MAP-floor-baseline", "Oracle")
CSV_HEADER = "algo,snr_db,trials,ser_mean,nmse_mean,runtime_s"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 512
    m: int = 256
    column_weight: int = 4
    q: float = 0.05
    sigma_x1: float = 5.0
    x_min: float = 1.25
    x_max: float | None = None
    kind: str = "gaussian"
    n_d: int = 256
    iterations: int = bp.DEFAULT_ITERATIONS
    noise_aware: bool = True  # kernel used by BHT-BP and MAP-floor-baseline
    calibration: float = DEFAULT_CALIBRATION  # 0 selects the uncalibrated references
    detect_x_min: float | None = None  # x_min given to the calibrated references
    wrap: bool = True
    distinct_columns: bool = False
    algorithms: tuple[str, ...] = ALGORITHMS
    snr_points: tuple[float, ...] = (10.0, 20.0, 30.0, 40.0, 50.0)
    trials: int = 100
    seed: int = 0
    output: str | None = None
    workers: int = 1
    timing: bool = False
    backend: str | None = None

    def __post_init__(self):
        if self.n_d < 2 or self.n_d & (self.n_d - 1):
            raise ConfigError(f"n_d must be a power of two, got {self.n_d}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not self.snr_points:
            raise ConfigError("snr_points must not be empty")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ConfigError(f"unknown algorithm(s): {sorted(unknown)}")
        if self.column_weight > self.m:
            raise ConfigError("column_weight exceeds m")
        if self.iterations < 1:
            raise ConfigError("iterations must be at least 1")
        try:
            SignalKind(self.kind)
            self.signal_model
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def signal_model(self) -> SignalModel:
        return SignalModel(SignalKind(self.kind), self.n, self.q, self.sigma_x1,
                           self.x_min, self.x_max)

    @property
    def reference_x_min(self) -> float:
        if self.detect_x_min is not None:
            return self.detect_x_min
        # signed signals have no x_min of their own; their magnitude is sigma_x1
        return self.sigma_x1 if SignalKind(self.kind) is SignalKind.SIGNED else self.x_min


PRESETS = {
    "desk": ExperimentConfig(),
    "large": ExperimentConfig(n=1024, m=512, trials=200,
                              snr_points=tuple(float(s) for s in range(10, 55, 5))),
}
PRESETS["paper"] = PRESETS["large"]


@dataclass
class Instance:
    matrix: SensingMatrix
    signal: SparseSignal
    z: np.ndarray
    sigma_n: float
    target_snr_db: float

    @property
    def realized_snr_db(self) -> float:
        return snr_db(self.matrix, self.signal, NoiseModel(self.sigma_n))


@dataclass
class MetricsRow:
    algo: str
    snr_db: float
    trials: int
    ser_mean: float
    nmse_mean: float
    runtime_s: float = 0.0
    failures: int = 0


@dataclass
class TrialRecord:
    snr_db: float
    trial: int
    ser: dict = field(default_factory=dict)
    nmse: dict = field(default_factory=dict)
    runtime: dict = field(default_factory=dict)
    failed: tuple = ()
    oracle_bound: float = math.nan
    k: int = 0


# --- metrics -------------------------------------------------------------------


def ser(true_state, detected_state) -> float:
    true_state = np.asarray(true_state)
    detected_state = np.asarray(detected_state)
    if true_state.shape != detected_state.shape:
        raise ValueError("state vectors differ in length")
    return float(np.count_nonzero(true_state != detected_state)) / true_state.size


def nmse(x_hat, x0) -> float:
    """||x_hat - x0||^2 / ||x0_s||^2; an empty true support uses denominator 1."""
    x_hat = np.asarray(x_hat, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    err = float(np.sum((x_hat - x0) ** 2))
    energy = float(np.sum(x0**2))
    return err / energy if energy > 0 else err


# --- instances and decoders ---------------------------------------------------------


def make_instance(config: ExperimentConfig, target_snr_db: float, trial: int) -> Instance:
    matrix_ss, signal_ss, noise_ss = np.random.SeedSequence(config.seed + trial).spawn(3)
    matrix = generate_matrix(config.m, config.n, config.column_weight, np.random.default_rng(matrix_ss),
                             distinct_columns=config.distinct_columns)
    model = config.signal_model
    signal = generate_signal(model, np.random.default_rng(signal_ss))
    sigma_n = sigma_for_snr(matrix, model, target_snr_db)
    unit = np.random.default_rng(noise_ss).standard_normal(config.m)
    z = matrix.matvec(signal.values) + sigma_n * unit
    return Instance(matrix, signal, z, sigma_n, target_snr_db)


class Decoder:
    """Grid, prior and reference functions for one configuration, built once."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.grid = DensityGrid(config.n_d, config.sigma_x1)
        self.prior = sample_spike_slab_prior(self.grid, config.q, config.sigma_x1)

    @cached_property
    def references(self):
        c = self.config
        if not 0.0 < c.q < 1.0:
            return None
        if c.calibration > 0:
            return build_calibrated_references(self.grid, c.q, c.sigma_x1, c.reference_x_min, c.calibration)
        return build_references(self.grid, c.q, c.sigma_x1)

    def marginals(self, instance: Instance, noise_aware: bool = True, trace=None) -> np.ndarray:
        state = bp.run(instance.matrix, instance.z, self.prior, instance.sigma_n,
                       self.config.iterations, noise_aware=noise_aware, wrap=self.config.wrap,
                       backend=self.config.backend, trace=trace)
        return state.marginals

    def bht_support(self, marginals) -> np.ndarray:
        if self.references is None:
            return np.full(marginals.shape[0], 1 if self.config.q >= 1 else 0, dtype=np.int8)
        return bht_detect(marginals, self.references, self.config.q)


def _result(instance: Instance, x_hat, s_hat, **info) -> RecoveryResult:
    return RecoveryResult(x_hat=x_hat, s_hat=s_hat, ser=ser(instance.signal.state, s_hat),
                          nmse=nmse(x_hat, instance.signal.values), info=info)


def recover_bht_bp(instance: Instance, config: ExperimentConfig, decoder: Decoder | None = None,
                   marginals=None) -> RecoveryResult:
    """Noise-aware BP, calibrated BHT support detection, then linear MMSE on the support."""
    decoder = decoder or Decoder(config)
    if marginals is None:
        marginals = decoder.marginals(instance, noise_aware=config.noise_aware)
    s_hat = decoder.bht_support(marginals)
    x_hat = mmse_on_support(instance.matrix, s_hat, instance.z, config.sigma_x1, instance.sigma_n)
    return _result(instance, x_hat, s_hat)


def recover_csbp(instance: Instance, config: ExperimentConfig, noise_aware: bool = True,
                 decoder: Decoder | None = None, marginals=None) -> RecoveryResult:
    """BP (with or without the noise kernel), MAP support, values read off the marginal peaks."""
    decoder = decoder or Decoder(config)
    if marginals is None:
        marginals = decoder.marginals(instance, noise_aware=noise_aware)
    s_hat = map_detect(marginals, decoder.grid)
    x_hat = map_value_readout(marginals, decoder.grid)
    return _result(instance, x_hat, s_hat)


def recover_map_dd(instance: Instance, config: ExperimentConfig, decoder: Decoder | None = None,
                   marginals=None) -> RecoveryResult:
    """Noise-aware BP, MAP support, then linear MMSE on that support."""
    decoder = decoder or Decoder(config)
    if marginals is None:
        marginals = decoder.marginals(instance, noise_aware=config.noise_aware)
    s_hat = map_detect(marginals, decoder.grid)
    x_hat = mmse_on_support(instance.matrix, s_hat, instance.z, config.sigma_x1, instance.sigma_n)
    return _result(instance, x_hat, s_hat)


def recover_oracle(instance: Instance, config: ExperimentConfig) -> RecoveryResult:
    s = instance.signal.state
    x_hat = oracle_estimate(instance.matrix, s, instance.z, config.sigma_x1, instance.sigma_n)
    return _result(instance, x_hat, s.copy())


# --- trials and sweeps -----------------------------------------------------------------


def run_trial(config: ExperimentConfig, target_snr_db: float, trial: int,
              decoder: Decoder | None = None) -> TrialRecord:
    decoder = decoder or Decoder(config)
    inst = make_instance(config, target_snr_db, trial)
    rec = TrialRecord(snr_db=target_snr_db, trial=trial, k=inst.signal.k)
    if inst.signal.k:
        rec.oracle_bound = oracle_mse_formula(inst.matrix, inst.signal.state, config.sigma_x1,
                                              inst.sigma_n, inst.signal.values)
    cache: dict[bool, np.ndarray] = {}
    failed = []

    def marginals(noise_aware):
        if noise_aware not in cache:
            cache[noise_aware] = decoder.marginals(inst, noise_aware=noise_aware)
        return cache[noise_aware]

    for algo in config.algorithms:
        start = time.perf_counter()
        try:
            if algo == "BHT-BP":
                res = recover_bht_bp(inst, config, decoder, marginals(config.noise_aware))
            elif algo == "CS-BP-NS":
                res = recover_csbp(inst, config, True, decoder, marginals(True))
            elif algo == "CS-BP":
                res = recover_csbp(inst, config, False, decoder, marginals(False))
            elif algo == "MAP-floor-baseline":
                res = recover_map_dd(inst, config, decoder, marginals(config.noise_aware))
            else:
                res = recover_oracle(inst, config)
        except (FloatingPointError, np.linalg.LinAlgError) as exc:
            log.warning("trial %d at %.1f dB: %s failed (%s)", trial, target_snr_db, algo, exc)
            failed.append(algo)
            continue
        rec.ser[algo] = res.ser
        rec.nmse[algo] = res.nmse
        rec.runtime[algo] = time.perf_counter() - start
    rec.failed = tuple(failed)
    return rec


def _trial_job(args):
    config, snr, trial = args
    return run_trial(config, snr, trial)


def run_trials(config: ExperimentConfig, target_snr_db: float, trials: Iterable[int] | None = None) -> list[TrialRecord]:
    """Per-trial records for one SNR point, ordered by trial index."""
    idx = list(range(config.trials)) if trials is None else list(trials)
    if config.workers > 1 and len(idx) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_trial_job, [(config, target_snr_db, t) for t in idx]))
    else:
        decoder = Decoder(config)
        records = [run_trial(config, target_snr_db, t, decoder) for t in idx]
    return sorted(records, key=lambda r: r.trial)


def aggregate(records: Sequence[TrialRecord], algo: str, timing: bool = False) -> MetricsRow:
    ok = [r for r in records if algo in r.ser]
    if not ok:
        return MetricsRow(algo, records[0].snr_db if records else math.nan, 0, math.nan, math.nan,
                          0.0, len(records))
    return MetricsRow(
        algo=algo,
        snr_db=ok[0].snr_db,
        trials=len(ok),
        ser_mean=math.fsum(r.ser[algo] for r in ok) / len(ok),
        nmse_mean=math.fsum(r.nmse[algo] for r in ok) / len(ok),
        runtime_s=math.fsum(r.runtime[algo] for r in ok) if timing else 0.0,
        failures=len(records) - len(ok),
    )


def run_sweep(config: ExperimentConfig, progress=None) -> list[MetricsRow]:
    rows = []
    for snr in config.snr_points:
        records = run_trials(config, snr)
        for algo in config.algorithms:
            row = aggregate(records, algo, config.timing)
            if row.failures:
                log.warning("%s at %.1f dB: %d failed trial(s) excluded", algo, snr, row.failures)
            rows.append(row)
            if progress is not None:
                progress(row)
    if config.output:
        write_csv(rows, config.output)
    return rows


def _num(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else str(v)


def format_csv(rows: Sequence[MetricsRow]) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(",".join([r.algo, _num(r.snr_db), str(r.trials), _num(r.ser_mean),
                               _num(r.nmse_mean), f"{r.runtime_s:.6f}"]))
    return "\n".join(lines) + "\n"


def write_csv(rows: Sequence[MetricsRow], path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(format_csv(rows))


# --- configuration files ---------------------------------------------------------------

_TUPLE_KEYS = {"algorithms": str, "snr_points": float}


def _coerce(name: str, raw: str):
    raw = raw.strip()
    if name in _TUPLE_KEYS:
        conv = _TUPLE_KEYS[name]
        return tuple(conv(t.strip()) for t in raw.split(",") if t.strip())
    if name in ("x_max", "detect_x_min", "output", "backend") and raw.lower() in ("", "none"):
        return None
    if name in ("wrap", "timing", "distinct_columns", "noise_aware"):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if name in ("n", "m", "column_weight", "n_d", "iterations", "trials", "seed", "workers"):
        return int(raw)
    if name in ("kind", "output", "backend"):
        return raw
    return float(raw)


def parse_config(text: str) -> ExperimentConfig:
    """Flat ``key = value`` lines; ``preset = desk|large`` picks the starting point."""
    known = {f.name for f in fields(ExperimentConfig)}
    values: dict[str, object] = {}
    base = PRESETS["desk"]
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (t.strip() for t in line.split("=", 1))
        if key == "preset":
            if raw not in PRESETS:
                raise ConfigError(f"line {lineno}: unknown preset {raw!r}")
            base = PRESETS[raw]
            continue
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(key, raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    try:
        return replace(base, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc


def config_to_text(config: ExperimentConfig) -> str:
    out = []
    for key, val in asdict(config).items():
        if isinstance(val, (tuple, list)):
            val = ",".join(str(v) for v in val)
        out.append(f"{key} = {val}")
    return "\n".join(out) + "\n"
