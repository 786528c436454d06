"""Comparison drivers: correlation sweeps, true-effect grids and the
identified-power variant.

Grids and tables evaluate fixed design realisations at many true effect
vectors. Each realisation gets one null block; effects enter as mean
shifts, so a 49-point grid costs a single simulation per design and all
points share common random numbers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dtl import DtLDesignSpec, DtLRealisation, estimate_dtl_oc, search_dtl_design
from .errors import TrialDesignError
from .gs import composite_transform, estimate_gs_oc, search_gs_design
from .model import GSDesignSpec, OutcomeModel, StageSchedule
from .simulate import SimConfig, StatisticBlock, mean_shift_vector, simulate_null_block

__all__ = [
    "EffectGrid",
    "RatioCurve",
    "search_design",
    "realisation_null_block",
    "evaluate_at_effects",
    "compare_at_effects",
    "effect_grid",
    "correlation_sweep",
    "identified_power",
]


@dataclass(frozen=True, eq=False)
class EffectGrid:
    """Rejection probability, ESS and ENM of two designs over a grid of
    true effect vectors, plus the A/B ratios."""

    axes: tuple
    points: np.ndarray
    p_a: np.ndarray
    p_b: np.ndarray
    ess_a: np.ndarray
    ess_b: np.ndarray
    enm_a: np.ndarray
    enm_b: np.ndarray

    @property
    def ess_ratio(self) -> np.ndarray:
        return self.ess_a / self.ess_b

    @property
    def enm_ratio(self) -> np.ndarray:
        return self.enm_a / self.enm_b


@dataclass(frozen=True, eq=False)
class RatioCurve:
    """ESS and ENM ratios of design A over design B under the LFC, per
    correlation value. Failed search points are marked invalid."""

    rho_values: tuple
    ess_a: np.ndarray
    ess_b: np.ndarray
    enm_a: np.ndarray
    enm_b: np.ndarray
    n_a: np.ndarray
    n_b: np.ndarray
    constant_a: np.ndarray
    constant_b: np.ndarray
    valid: np.ndarray
    errors: tuple

    @property
    def ess_ratio(self) -> np.ndarray:
        return self.ess_a / self.ess_b

    @property
    def enm_ratio(self) -> np.ndarray:
        return self.enm_a / self.enm_b


def search_design(spec, model: OutcomeModel, cfg: SimConfig, threads: int = 1,
                  nmin: int = 1, nmax: int = 400, lfc_mode: str = "first-m",
                  strict: bool = False):
    """Dispatch a design search by spec type (and composite flag)."""
    if isinstance(spec, DtLDesignSpec):
        return search_dtl_design(spec, model, cfg, nmin=max(nmin, 1), nmax=nmax,
                                 threads=threads, lfc_mode=lfc_mode, strict=strict)
    if isinstance(spec, GSDesignSpec):
        return search_gs_design(spec, model, cfg, nmin=nmin, threads=threads,
                                lfc_mode=lfc_mode, strict=strict)
    raise TypeError(f"unknown design spec type: {type(spec).__name__}")


def _realisation_stages(realisation) -> int:
    if isinstance(realisation, DtLRealisation):
        return 2
    return realisation.spec.n_stages


def realisation_null_block(realisation, model: OutcomeModel, cfg: SimConfig,
                           threads: int = 1) -> StatisticBlock:
    """Null block shaped for the realisation's stage count (the null
    statistics do not depend on the stage size)."""
    schedule = StageSchedule.equal(1, _realisation_stages(realisation))
    return simulate_null_block(schedule, model, cfg, threads=threads)


def evaluate_at_effects(realisation, block: StatisticBlock, model: OutcomeModel,
                        mu) -> tuple:
    """(p_reject, ess, enm) of a fixed realisation at true effects mu."""
    schedule = StageSchedule.equal(realisation.n, _realisation_stages(realisation))
    shift = mean_shift_vector(mu, schedule, model)
    if isinstance(realisation, DtLRealisation):
        oc = estimate_dtl_oc(block, realisation.spec, model, realisation.r,
                             realisation.n, shift=shift)
        return oc.p_reject, oc.ess, oc.enm
    if realisation.kind == "composite":
        cblock = composite_transform(block)
        cshift = shift.reshape(block.n_stages, -1).sum(axis=1)
        oc = estimate_gs_oc(cblock, realisation.boundaries,
                            _composite_eval_spec(realisation.spec), schedule,
                            shift=cshift)
        # composite trials still measure every outcome at each stage
        return oc.p_reject, oc.ess, realisation.spec.n_outcomes * oc.ess
    oc = estimate_gs_oc(block, realisation.boundaries, realisation.spec,
                        schedule, shift=shift)
    return oc.p_reject, oc.ess, oc.enm


def _composite_eval_spec(spec: GSDesignSpec) -> GSDesignSpec:
    return GSDesignSpec(n_outcomes=1, n_promising=1, n_stages=spec.n_stages,
                        alpha=spec.alpha, beta=spec.beta, delta0=0.0, delta1=0.0,
                        wt_delta=spec.wt_delta)


def compare_at_effects(realisation_a, realisation_b, model: OutcomeModel,
                       mus: Sequence, cfg: SimConfig, threads: int = 1) -> dict:
    """Evaluate both realisations at each effect vector on shared blocks."""
    block_a = realisation_null_block(realisation_a, model, cfg, threads)
    block_b = realisation_null_block(realisation_b, model, cfg, threads)
    cols = {name: [] for name in ("p_a", "p_b", "ess_a", "ess_b", "enm_a", "enm_b")}
    for mu in mus:
        for tag, realisation, block in (("a", realisation_a, block_a),
                                        ("b", realisation_b, block_b)):
            p, ess, enm = evaluate_at_effects(realisation, block, model, mu)
            cols[f"p_{tag}"].append(p)
            cols[f"ess_{tag}"].append(ess)
            cols[f"enm_{tag}"].append(enm)
    return {name: np.asarray(vals) for name, vals in cols.items()}


def effect_grid(realisation_a, realisation_b, axes, model: OutcomeModel,
                cfg: SimConfig, threads: int = 1) -> EffectGrid:
    """Cartesian grid of true effects evaluated for two fixed realisations.

    ``axes`` holds one sequence of candidate effect values per outcome;
    rows of the result enumerate the product in row-major order.
    """
    axes = tuple(tuple(float(v) for v in axis) for axis in axes)
    if len(axes) != model.n_outcomes:
        raise ValueError("need one grid axis per outcome")
    points = np.array(list(itertools.product(*axes)), dtype=float)
    cols = compare_at_effects(realisation_a, realisation_b, model, points, cfg,
                              threads=threads)
    assert np.all(cols["ess_b"] > 0) and np.all(cols["enm_b"] > 0)
    return EffectGrid(axes=axes, points=points, **cols)


def correlation_sweep(spec_a, spec_b, rho_values, cfg: SimConfig,
                      sigma: float = 1.0, threads: int = 1, nmin: int = 1,
                      nmax: int = 400, lfc_mode: str = "first-m",
                      strict: bool = False) -> RatioCurve:
    """Search both designs at each shared correlation and record the ESS
    and ENM ratios under the LFC.

    A failed search marks that point invalid (NaN) instead of aborting
    the sweep.
    """
    rho_values = tuple(float(r) for r in rho_values)
    shape = (len(rho_values),)
    out = {name: np.full(shape, np.nan) for name in
           ("ess_a", "ess_b", "enm_a", "enm_b", "n_a", "n_b",
            "constant_a", "constant_b")}
    valid = np.zeros(shape, dtype=bool)
    errors = []
    for i, rho in enumerate(rho_values):
        try:
            model = OutcomeModel.equicorrelated(spec_a.n_outcomes, rho, sigma)
            real_a = search_design(spec_a, model, cfg, threads, nmin, nmax,
                                   lfc_mode, strict)
            real_b = search_design(spec_b, model, cfg, threads, nmin, nmax,
                                   lfc_mode, strict)
        except TrialDesignError as exc:
            errors.append((rho, str(exc)))
            continue
        for tag, real in (("a", real_a), ("b", real_b)):
            out[f"ess_{tag}"][i] = real.oc_lfc.ess
            out[f"enm_{tag}"][i] = real.oc_lfc.enm
            out[f"n_{tag}"][i] = real.n
            out[f"constant_{tag}"][i] = real.constant
        valid[i] = True
    return RatioCurve(rho_values=rho_values, valid=valid, errors=tuple(errors), **out)


def identified_power(block: StatisticBlock, realisation, model: OutcomeModel,
                     delta_beta, working: Sequence[int]) -> float:
    """Probability of a go decision that also names the right outcomes.

    Counts the rows where the trial goes and, at the deciding stage, at
    least m of the statistics strictly above the upper boundary belong
    to the working set (0-based indices where delta_beta takes the
    greater effect).
    """
    spec = realisation.spec
    schedule = StageSchedule.equal(realisation.n, spec.n_stages)
    shift = mean_shift_vector(delta_beta, schedule, model)
    z = (block.values + shift[None, :]).reshape(block.nsims, block.n_stages,
                                                block.n_outcomes)
    upper = np.asarray(realisation.boundaries.upper)
    lower = np.asarray(realisation.boundaries.lower)
    m = spec.n_promising
    above = z > upper[None, :, None]
    go = above.sum(axis=2) >= m
    nogo = (z < lower[None, :, None]).sum(axis=2) >= (spec.n_outcomes - m + 1)
    nogo[:, -1] = ~go[:, -1]
    stop = (go | nogo).argmax(axis=1)
    rows = np.arange(block.nsims)
    is_go = go[rows, stop]
    working_mask = np.zeros(spec.n_outcomes, dtype=bool)
    working_mask[list(working)] = True
    hits = (above[rows, stop] & working_mask[None, :]).sum(axis=1)
    return float((is_go & (hits >= m)).mean())
