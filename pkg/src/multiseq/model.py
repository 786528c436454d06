"""Domain types: outcome model, design specifications, stage schedules,
stopping boundaries, and the covariance of standardized test statistics.

A trial measures K correlated normal outcomes on every participant. At
analysis j the standardized statistic for outcome k is the running mean
scaled by the square root of its information N_j / sigma_k**2, so under
the null every statistic is standard normal and the joint distribution
over stages and outcomes is multivariate normal with the covariance
assembled here.

Statistics are laid out stage-major throughout the package: column
(j - 1) * K + (k - 1) holds outcome k at stage j.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

__all__ = [
    "OutcomeModel",
    "GSDesignSpec",
    "StageSchedule",
    "Boundaries",
    "DesignRealisation",
    "covariance_entry",
    "assemble_covariance",
    "wang_tsiatis_boundaries",
    "lfc_effects",
    "lfc_working_indices",
]

# Eigenvalues above this (negative) floor are treated as rounding noise;
# anything below means the correlation matrix is genuinely invalid.
_PSD_TOL = 1e-8


def _as_vector(x, k: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a scalar or 1-d sequence")
    if arr.size == 1 and k > 1:
        arr = np.repeat(arr, k)
    if arr.size != k:
        raise ValueError(f"{name} must have length {k}, got {arr.size}")
    return arr


@dataclass(frozen=True, eq=False)
class OutcomeModel:
    """True means, standard deviations and correlation of the K outcomes.

    ``rho`` may be a scalar (shared correlation between all pairs) or a
    full K x K matrix. Instances are immutable and safe to share across
    workers.
    """

    sigma: Any
    rho: Any
    mu: Any = None

    def __post_init__(self):
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        k = sigma.size
        if np.any(sigma <= 0) or not np.all(np.isfinite(sigma)):
            raise ValueError("sigma must be strictly positive and finite")
        rho = np.asarray(self.rho, dtype=float)
        if rho.ndim == 0:
            full = np.full((k, k), float(rho))
            np.fill_diagonal(full, 1.0)
            rho = full
        if rho.shape != (k, k):
            raise ValueError(f"rho must be {k}x{k}, got {rho.shape}")
        if not np.allclose(rho, rho.T, atol=1e-12):
            raise ValueError("rho must be symmetric")
        if not np.allclose(np.diag(rho), 1.0, atol=1e-12):
            raise ValueError("rho must have unit diagonal")
        off = rho[~np.eye(k, dtype=bool)]
        if off.size and (off.min() < -1.0 or off.max() > 1.0):
            raise ValueError("off-diagonal correlations must lie in [-1, 1]")
        if k > 1 and np.linalg.eigvalsh(rho).min() < -_PSD_TOL:
            raise ValueError("rho must be positive semidefinite")
        mu = np.zeros(k) if self.mu is None else _as_vector(self.mu, k, "mu")
        for name, arr in (("sigma", sigma), ("rho", rho), ("mu", mu)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_outcomes(self) -> int:
        return self.sigma.size

    @classmethod
    def equicorrelated(cls, n_outcomes: int, rho: float, sigma: float = 1.0,
                       mu: float | Sequence[float] = 0.0) -> "OutcomeModel":
        return cls(sigma=np.full(n_outcomes, float(sigma)), rho=float(rho), mu=mu)


@dataclass(frozen=True)
class GSDesignSpec:
    """Parameters of a group-sequential (or composite) m-of-K design.

    ``n_promising`` is the number of outcomes that must simultaneously
    clear the upper boundary for the null to be rejected. ``delta0`` and
    ``delta1`` are the lower and greater anticipated effect sizes per
    outcome; ``wt_delta`` is the Wang-Tsiatis boundary shape (0 gives
    O'Brien-Fleming style boundaries, 0.5 gives Pocock).
    """

    n_outcomes: int
    n_promising: int
    n_stages: int
    alpha: float
    beta: float
    delta0: Any
    delta1: Any
    wt_delta: float = 0.0
    composite: bool = False

    def __post_init__(self):
        if self.n_outcomes < 1:
            raise ValueError("n_outcomes must be >= 1")
        if not 1 <= self.n_promising <= self.n_outcomes:
            raise ValueError("n_promising must satisfy 1 <= m <= K")
        if self.n_stages < 1:
            raise ValueError("n_stages must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        d0 = tuple(_as_vector(self.delta0, self.n_outcomes, "delta0"))
        d1 = tuple(_as_vector(self.delta1, self.n_outcomes, "delta1"))
        if any(hi < lo for lo, hi in zip(d0, d1)):
            raise ValueError("delta1 must be >= delta0 elementwise")
        object.__setattr__(self, "delta0", d0)
        object.__setattr__(self, "delta1", d1)


@dataclass(frozen=True)
class StageSchedule:
    """Per-stage sample sizes and their cumulative totals.

    The design search always uses equal stage sizes; general sizes are
    accepted so the covariance construction can be tested against them.
    """

    stage_sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.stage_sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise ValueError("stage sizes must be positive integers")
        object.__setattr__(self, "stage_sizes", sizes)

    @classmethod
    def equal(cls, n: int, n_stages: int) -> "StageSchedule":
        return cls(stage_sizes=(int(n),) * int(n_stages))

    @property
    def n_stages(self) -> int:
        return len(self.stage_sizes)

    @property
    def n(self) -> int:
        """Per-stage size; only defined for equal-stage schedules."""
        if len(set(self.stage_sizes)) != 1:
            raise ValueError("schedule has unequal stage sizes")
        return self.stage_sizes[0]

    @property
    def cumulative(self) -> np.ndarray:
        """Cumulative sample sizes N_j, strictly increasing."""
        return np.cumsum(np.asarray(self.stage_sizes, dtype=float))

    def information(self, sigma) -> np.ndarray:
        """Information N_j / sigma_k**2 as a (stages, outcomes) array."""
        sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        return self.cumulative[:, None] / sigma[None, :] ** 2


@dataclass(frozen=True)
class Boundaries:
    """Lower (futility) and upper (efficacy) stopping boundaries per stage.

    The final lower boundary equals the final upper boundary so that a
    decision is forced at the last stage.
    """

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lower = tuple(float(x) for x in self.lower)
        upper = tuple(float(x) for x in self.upper)
        if len(lower) != len(upper) or not lower:
            raise ValueError("lower and upper must have equal positive length")
        if any(lo > up for lo, up in zip(lower, upper)):
            raise ValueError("lower boundary must not exceed upper boundary")
        if lower[-1] != upper[-1]:
            raise ValueError("final-stage boundaries must coincide")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def n_stages(self) -> int:
        return len(self.upper)

    @property
    def final(self) -> float:
        """The shared final-stage boundary; the constant a design reports."""
        return self.upper[-1]


def wang_tsiatis_boundaries(constant: float, n_stages: int, wt_delta: float = 0.0) -> Boundaries:
    """Boundaries e_j = C * j**(delta - 0.5), f_j = -e_j, with f_J = e_J."""
    if constant <= 0:
        raise ValueError("constant must be positive")
    j = np.arange(1, n_stages + 1, dtype=float)
    upper = constant * j ** (wt_delta - 0.5)
    lower = -upper
    lower[-1] = upper[-1]
    return Boundaries(lower=tuple(lower), upper=tuple(upper))


def covariance_entry(stage_a: int, stage_b: int, outcome_a: int, outcome_b: int,
                     schedule: StageSchedule, model: OutcomeModel) -> float:
    """Covariance of the statistics at (stage_a, outcome_a) and (stage_b, outcome_b).

    Indices are 1-based and stage_a <= stage_b is required; the value is
    symmetric in its arguments so callers order the pair.
    """
    j = schedule.n_stages
    k = model.n_outcomes
    if not (1 <= stage_a <= stage_b <= j):
        raise IndexError("require 1 <= stage_a <= stage_b <= number of stages")
    if not (1 <= outcome_a <= k and 1 <= outcome_b <= k):
        raise IndexError("outcome index out of range")
    cum = schedule.cumulative
    same_stage = stage_a == stage_b
    same_outcome = outcome_a == outcome_b
    if same_stage and same_outcome:
        return 1.0
    if same_stage:
        return float(model.rho[outcome_a - 1, outcome_b - 1])
    ratio = float(np.sqrt(cum[stage_a - 1] / cum[stage_b - 1]))
    if same_outcome:
        return ratio
    return float(model.rho[outcome_a - 1, outcome_b - 1]) * ratio


def assemble_covariance(schedule: StageSchedule, model: OutcomeModel) -> np.ndarray:
    """Full (J*K) x (J*K) covariance of the statistics, stage-major layout."""
    cum = schedule.cumulative
    stage_part = np.sqrt(np.minimum.outer(cum, cum) / np.maximum.outer(cum, cum))
    return np.kron(stage_part, model.rho)


def lfc_working_indices(spec: GSDesignSpec, mode: str = "first-m",
                        sigma=None) -> tuple:
    """Indices (0-based) of the m outcomes placed at their greater effect."""
    m = spec.n_promising
    if mode == "first-m":
        return tuple(range(m))
    if mode == "smallest-standardized":
        sigma = np.ones(spec.n_outcomes) if sigma is None else \
            _as_vector(sigma, spec.n_outcomes, "sigma")
        standardized = np.asarray(spec.delta1) / sigma
        # stable sort breaks ties toward the lower outcome index
        order = np.argsort(standardized, kind="stable")
        return tuple(sorted(int(i) for i in order[:m]))
    raise ValueError(f"unknown LFC mode: {mode!r}")


def lfc_effects(spec: GSDesignSpec, mode: str = "first-m", sigma=None) -> np.ndarray:
    """Least favourable configuration: exactly m outcomes at their greater
    anticipated effect, the rest at their lower anticipated effect."""
    working = lfc_working_indices(spec, mode, sigma)
    effects = np.asarray(spec.delta0, dtype=float).copy()
    d1 = np.asarray(spec.delta1, dtype=float)
    for i in working:
        effects[i] = d1[i]
    return effects


@dataclass(frozen=True, eq=False)
class DesignRealisation:
    """A calibrated design: boundary constant, sample size and achieved
    operating characteristics under the global null and under the LFC.

    ``constant`` is reported on the final-stage scale (it equals the
    final boundary e_J); ``kind`` is "gs" or "composite".
    """

    kind: str
    spec: GSDesignSpec
    n: int
    n_total: int
    constant: float
    boundaries: Boundaries
    alpha_star: float
    power_star: float
    oc_null: Any = field(repr=False, default=None)
    oc_lfc: Any = field(repr=False, default=None)
