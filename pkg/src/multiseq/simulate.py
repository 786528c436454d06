"""Seedable generation of correlated standardized test statistics.

Blocks of nsims x (J*K) statistics are drawn from the joint null
distribution in independent chunks. Each chunk owns a Philox substream
derived from (seed, chunk index), so the assembled block is bit-identical
for a given SimConfig no matter how many worker threads are used.

Calibration and power evaluation share one null block: effects are added
as mean shifts instead of resimulating, which keeps design comparisons on
common random numbers.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidCorrelationError
from .model import OutcomeModel, StageSchedule, assemble_covariance

__all__ = [
    "SimConfig",
    "StatisticBlock",
    "cholesky_factor",
    "simulate_null_block",
    "mean_shift_vector",
    "apply_mean_shift",
    "dump_block",
    "load_block",
]

_MAGIC = b"MSQB"
_CHOLESKY_JITTER = 1e-10


@dataclass(frozen=True)
class SimConfig:
    """Replication count and seeding; identical configs give identical blocks."""

    seed: int
    nsims: int = 100_000
    chunk_size: int = 65_536

    def __post_init__(self):
        if self.nsims < 1:
            raise ValueError("nsims must be >= 1")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        object.__setattr__(self, "seed", int(self.seed) % 2**64)


@dataclass(frozen=True, eq=False)
class StatisticBlock:
    """nsims x (J*K) standardized statistics, stage-major columns, immutable."""

    values: np.ndarray
    n_stages: int
    n_outcomes: int
    seed: int = 0

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != self.n_stages * self.n_outcomes:
            raise ValueError("values must be 2-d with n_stages * n_outcomes columns")
        if not np.all(np.isfinite(values)):
            raise ValueError("statistics must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def nsims(self) -> int:
        return self.values.shape[0]

    def by_stage(self) -> np.ndarray:
        """Read-only view shaped (nsims, stages, outcomes)."""
        return self.values.reshape(self.nsims, self.n_stages, self.n_outcomes)


def cholesky_factor(cov: np.ndarray, jitter: float = _CHOLESKY_JITTER) -> np.ndarray:
    """Lower-triangular L with L @ L.T == cov.

    A single diagonal jitter pass rescues matrices that are PSD up to
    rounding; anything still failing is rejected rather than repaired.
    """
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
    except np.linalg.LinAlgError:
        raise InvalidCorrelationError(
            "covariance is not positive semidefinite; check the correlation matrix"
        ) from None


def _chunk_ranges(nsims: int, chunk_size: int):
    starts = range(0, nsims, chunk_size)
    return [(s, min(s + chunk_size, nsims)) for s in starts]


def simulate_null_block(schedule: StageSchedule, model: OutcomeModel,
                        cfg: SimConfig, threads: int = 1) -> StatisticBlock:
    """Draw cfg.nsims independent rows from MVN(0, assemble_covariance(...)).

    Chunk c uses the Philox stream keyed by (cfg.seed, c); assembly order
    is fixed, so output does not depend on the thread count.
    """
    cov = assemble_covariance(schedule, model)
    factor_t = cholesky_factor(cov).T
    dim = cov.shape[0]
    out = np.empty((cfg.nsims, dim))
    ranges = _chunk_ranges(cfg.nsims, cfg.chunk_size)

    def fill(chunk_index: int, start: int, stop: int) -> None:
        seq = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(chunk_index,))
        rng = np.random.Generator(np.random.Philox(seq))
        np.matmul(rng.standard_normal((stop - start, dim)), factor_t,
                  out=out[start:stop])

    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(fill, i, a, b) for i, (a, b) in enumerate(ranges)]
            for fut in futures:
                fut.result()
    else:
        for i, (a, b) in enumerate(ranges):
            fill(i, a, b)

    return StatisticBlock(values=out, n_stages=schedule.n_stages,
                          n_outcomes=model.n_outcomes, seed=cfg.seed)


def mean_shift_vector(mu, schedule: StageSchedule, model: OutcomeModel) -> np.ndarray:
    """Per-column mean mu_k * sqrt(N_j) / sigma_k as a length J*K vector."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if mu.size != model.n_outcomes:
        raise ValueError(f"mu must have length {model.n_outcomes}, got {mu.size}")
    shift = mu[None, :] * np.sqrt(schedule.cumulative)[:, None] / model.sigma[None, :]
    return shift.ravel()


def apply_mean_shift(block: StatisticBlock, mu, schedule: StageSchedule,
                     model: OutcomeModel) -> StatisticBlock:
    """Block with mu_k * sqrt(N_j) / sigma_k added to each (j, k) column."""
    shift = mean_shift_vector(mu, schedule, model)
    if shift.size != block.values.shape[1]:
        raise ValueError("schedule/model shape does not match the block")
    if not shift.any():
        return block
    return StatisticBlock(values=block.values + shift[None, :],
                          n_stages=block.n_stages,
                          n_outcomes=block.n_outcomes, seed=block.seed)


def dump_block(block: StatisticBlock, path) -> None:
    """Binary dump: magic, (seed, nsims, stages, outcomes) as little-endian
    uint64, then row-major float64 values."""
    header = _MAGIC + struct.pack("<4Q", block.seed, block.nsims,
                                  block.n_stages, block.n_outcomes)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(block.values, dtype="<f8").tobytes())


def load_block(path) -> StatisticBlock:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError("not a statistic block file")
    seed, nsims, n_stages, n_outcomes = struct.unpack("<4Q", raw[4:36])
    expected = nsims * n_stages * n_outcomes * 8
    body = raw[36:]
    if len(body) != expected:
        raise ValueError(f"block payload has {len(body)} bytes, expected {expected}")
    values = np.frombuffer(body, dtype="<f8").reshape(nsims, n_stages * n_outcomes)
    return StatisticBlock(values=values.astype(float), n_stages=int(n_stages),
                          n_outcomes=int(n_outcomes), seed=int(seed))
