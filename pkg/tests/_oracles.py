"""Independent estimators used as oracles by the test suite.

These deliberately avoid the package's simulation path: a different
generator family (PCG64 vs Philox), a different factorization (SVD vs
Cholesky), and direct counting instead of the row evaluators.
"""

from __future__ import annotations

import numpy as np

from multiseq.model import OutcomeModel, StageSchedule, assemble_covariance
from multiseq.simulate import SimConfig, simulate_null_block


def direct_rejection_estimate(mean, corr, threshold, m, nsims, seed,
                              chunk=250_000):
    """P(at least m coordinates of MVN(mean, corr) exceed threshold),
    estimated by streaming direct simulation."""
    mean = np.asarray(mean, dtype=float)
    corr = np.asarray(corr, dtype=float)
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < nsims:
        size = min(chunk, nsims - done)
        draws = rng.multivariate_normal(mean, corr, size=size, method="svd")
        hits += int(((draws > threshold).sum(axis=1) >= m).sum())
        done += size
    return hits / nsims


def direct_identified_estimate(mean, corr, threshold, m, working, nsims, seed,
                               chunk=250_000):
    """Single-stage go probability restricted to goes where at least m of
    the exceeding coordinates lie in the working set."""
    mean = np.asarray(mean, dtype=float)
    corr = np.asarray(corr, dtype=float)
    mask = np.zeros(mean.size, dtype=bool)
    mask[list(working)] = True
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < nsims:
        size = min(chunk, nsims - done)
        above = rng.multivariate_normal(mean, corr, size=size, method="svd") > threshold
        go = above.sum(axis=1) >= m
        named = (above & mask[None, :]).sum(axis=1) >= m
        hits += int((go & named).sum())
        done += size
    return hits / nsims


def engine_empirical_covariance(schedule: StageSchedule, model: OutcomeModel,
                                nsims_total, seed, block_size=1_000_000):
    """Empirical covariance of engine-simulated statistics, accumulated
    over independently seeded blocks so arbitrarily many replications
    never materialise at once."""
    dim = schedule.n_stages * model.n_outcomes
    acc = np.zeros((dim, dim))
    done = 0
    i = 0
    while done < nsims_total:
        size = min(block_size, nsims_total - done)
        block = simulate_null_block(schedule, model,
                                    SimConfig(seed=seed + i, nsims=size))
        acc += block.values.T @ block.values
        done += size
        i += 1
    return acc / done


def participant_level_statistics(model: OutcomeModel, schedule: StageSchedule,
                                 mu, n_trials, seed):
    """Standardized statistics built from simulated participant responses.

    Returns an (n_trials, J*K) stage-major array: for each trial the
    running outcome means at the cumulative sample sizes, scaled by
    sqrt(N_j) / sigma_k.
    """
    rng = np.random.default_rng(seed)
    cov = model.rho * np.outer(model.sigma, model.sigma)
    total = int(schedule.cumulative[-1])
    x = rng.multivariate_normal(np.asarray(mu, dtype=float), cov,
                                size=(n_trials, total), method="svd")
    out = np.empty((n_trials, schedule.n_stages * model.n_outcomes))
    running = x.cumsum(axis=1)
    for j, n_j in enumerate(schedule.cumulative):
        n_j = int(n_j)
        means = running[:, n_j - 1, :] / n_j
        cols = slice(j * model.n_outcomes, (j + 1) * model.n_outcomes)
        out[:, cols] = means * np.sqrt(n_j) / model.sigma[None, :]
    return out


def analytic_covariance(schedule: StageSchedule, model: OutcomeModel):
    return assemble_covariance(schedule, model)
