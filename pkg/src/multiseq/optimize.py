"""Bracketed scalar solving for boundary calibration.

The Monte Carlo rejection probability is a monotone non-increasing step
function of the boundary constant, so the constant that minimises
(target - achieved)**2 is found by bisecting the crossing. Bisection is
robust on step functions, where a golden-section minimiser can stall on
the flat plateaus between simulated order statistics.
"""

from __future__ import annotations

from typing import Callable

from .errors import CalibrationError

__all__ = ["solve_decreasing"]

_MAX_EXPANSIONS = 8


def solve_decreasing(fn: Callable[[float], float], target: float,
                     bracket: tuple = (0.3, 12.0), tol: float = 1e-4,
                     strict: bool = False) -> tuple:
    """Solve fn(x) = target for monotone non-increasing fn.

    Parameters
    ----------
    fn : callable
        Monotone non-increasing function of a positive scalar (a Monte
        Carlo estimate; step-valued is fine).
    target : float
        Level to hit.
    bracket : (lo, hi)
        Initial bracket; expanded geometrically while fn is on the same
        side of the target at both ends.
    tol : float
        Bracket width at which bisection stops.
    strict : bool
        If True return the smallest x found with fn(x) <= target; by
        default return whichever end of the final bracket minimises
        (target - fn(x))**2.

    Returns
    -------
    (x, achieved) : the solved constant and fn(x) there.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < lo < hi")
    f_lo, f_hi = fn(lo), fn(hi)
    expansions = 0
    while f_lo <= target and lo > 1e-6 and expansions < _MAX_EXPANSIONS:
        lo /= 2.0
        f_lo = fn(lo)
        expansions += 1
    while f_hi > target and expansions < _MAX_EXPANSIONS:
        hi *= 2.0
        f_hi = fn(hi)
        expansions += 1
    if f_lo <= target or f_hi > target:
        raise CalibrationError(
            f"could not bracket target {target:.6g}: "
            f"fn({lo:.6g}) = {f_lo:.6g}, fn({hi:.6g}) = {f_hi:.6g}"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = fn(mid)
        if f_mid > target:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    if strict:
        return hi, f_hi
    if (target - f_lo) ** 2 < (target - f_hi) ** 2:
        return lo, f_lo
    return hi, f_hi
