"""Critical cone angles and the Lipschitz threshold for particle-system survival.

For an exponent p > 0 and dimension d >= 2, the function

    h(theta) = F(-p, p + d - 2; (d - 1)/2; (1 - cos theta)/2)

(Gauss hypergeometric series) is the angular part of the positive harmonic
function r^p h(theta) on the right circular cone of half-angle theta about the
last coordinate axis.  Its smallest zero in (0, pi] is the critical half-angle
``theta_pd(p, d)``: the widest cone on which that function stays positive and
vanishes on the boundary.

Two derived quantities drive the experiments in this package:

* ``lipschitz_threshold(N, d)``: the Lipschitz-constant bound cot(theta_pd(p', d))
  with p' = 2 - 2/N, below which an N-particle branching system in a Lipschitz
  domain never exhausts its population in finite time.  It increases in N,
  decreases in d, and tends to 1/sqrt(d-1).
* ``hawkes_nonintersect(N, p)``: whether N independent stable subordinators of
  index p/2 have a.s. non-intersecting ranges (N*p/2 - N + 1 < 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import gamma, rgamma

__all__ = [
    "ConeSpec",
    "ConvergenceError",
    "RootNotFoundError",
    "hyp_h",
    "theta_pd",
    "lipschitz_threshold",
    "hawkes_nonintersect",
    "invert_theta",
]

# Series truncation: stop when the term is negligible relative to the partial
# sum, hard cap to guarantee termination.
_REL_TOL = 1e-15
_ABS_TOL = 1e-16
_MAX_TERMS = 10_000

# Bracketing grid for the smallest zero, and bisection width.
_GRID_N = 1024
_BISECT_TOL = 1e-12


class ConvergenceError(ArithmeticError):
    """Series failed to meet tolerance within the term cap."""


class RootNotFoundError(ValueError):
    """No sign change of the angular function in (0, pi]."""


@dataclass(frozen=True)
class ConeSpec:
    """A cone exponent p, a dimension d and the critical half-angle theta.

    ``theta`` is the smallest zero of ``hyp_h(p, d, .)``; use ``ConeSpec.make``
    to compute it rather than filling the field by hand.
    """

    p: float
    d: int
    theta: float

    @classmethod
    def make(cls, p: float, d: int) -> "ConeSpec":
        return cls(p=float(p), d=int(d), theta=theta_pd(p, d))


def hyp_h(p: float, d: int, theta: float) -> float:
    """Evaluate F(-p, p+d-2; (d-1)/2; (1-cos theta)/2) by direct summation.

    Parameters
    ----------
    p : float
        Positive exponent.
    d : int
        Dimension, >= 2.
    theta : float
        Angle in [0, pi].

    Returns
    -------
    float
        The series value.  At theta = 0 the value is exactly 1.

    Raises
    ------
    ConvergenceError
        If the term cap is reached before the stopping rule is met.  The
        argument x = (1-cos theta)/2 approaches 1 as theta -> pi, where the
        series converges too slowly (d = 2) or diverges (d >= 3); in the d = 2
        case theta = pi itself is evaluated through the closed-form limit
        Gamma(c)Gamma(c-a-b) / (Gamma(c-a)Gamma(c-b)).
    """
    p = float(p)
    if p <= 0.0:
        raise ValueError(f"p must be positive, got {p}")
    d = int(d)
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    x = (1.0 - math.cos(theta)) / 2.0
    if x >= 1.0:
        return _endpoint_value(p, d)
    a = -p
    b = p + d - 2.0
    c = (d - 1.0) / 2.0
    term = 1.0
    s = 1.0
    for k in range(_MAX_TERMS):
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * x
        s += term
        if abs(term) < _REL_TOL * abs(s) + _ABS_TOL:
            return s
    raise ConvergenceError(
        f"series for (p={p}, d={d}, theta={theta}) did not converge "
        f"within {_MAX_TERMS} terms (x={x:.6f} too close to 1)"
    )


def _endpoint_value(p: float, d: int) -> float:
    # Sum of the series at x = 1 (theta = pi), by Gauss's formula.  Finite only
    # when c - a - b = (3 - d)/2 > 0, i.e. d = 2.
    a = -p
    b = p + d - 2.0
    c = (d - 1.0) / 2.0
    if c - a - b <= 0.0:
        raise ConvergenceError(
            f"no finite series value at theta=pi for d={d} (diverges)"
        )
    # rgamma handles the poles of 1/Gamma at nonpositive integers (value 0).
    return float(gamma(c) * gamma(c - a - b) * rgamma(c - a) * rgamma(c - b))


def theta_pd(p: float, d: int) -> float:
    """Smallest zero of ``hyp_h(p, d, .)`` in (0, pi].

    Located by marching up a grid of step pi/1024 until the first sign change,
    then bisecting the bracket to width 1e-12.  When the grid march runs into
    the slow-convergence band next to pi without a sign change (possible only
    for small p in d = 2), the endpoint limit decides: a vanishing limit means
    the zero sits at pi itself.

    Raises
    ------
    RootNotFoundError
        If the function stays positive on all of (0, pi].
    ConvergenceError
        If the zero lies inside the band where the prescribed series cannot
        be evaluated (d = 2, p slightly above 1/2).
    """
    p = float(p)
    if p <= 0.0:
        raise ValueError(f"p must be positive, got {p}")
    d = int(d)
    lo = 0.0
    hi = None
    for k in range(1, _GRID_N + 1):
        th = math.pi * k / _GRID_N
        try:
            val = hyp_h(p, d, th)
        except ConvergenceError:
            # Grid reached the unevaluable band without a sign change.
            end = _endpoint_value(p, d)  # re-raises for d >= 3
            if abs(end) <= 1e-12:
                return math.pi
            if end > 0.0:
                raise RootNotFoundError(
                    f"hyp_h({p}, {d}, .) has no zero in (0, pi]"
                ) from None
            raise ConvergenceError(
                f"zero of hyp_h({p}, {d}, .) lies too close to pi for the "
                "series scheme to bracket"
            ) from None
        if val <= 0.0:
            if val == 0.0:
                return th
            hi = th
            break
        lo = th
    if hi is None:
        raise RootNotFoundError(f"hyp_h({p}, {d}, .) has no zero in (0, pi]")
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if hyp_h(p, d, mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def lipschitz_threshold(N: int, d: int) -> float:
    """Survival threshold cot(theta_pd(2 - 2/N, d)) for the Lipschitz constant.

    Clamped at 0 when the critical angle reaches pi/2 or beyond (a nonpositive
    cotangent carries no information about Lipschitz boundaries).
    """
    N = int(N)
    if N < 2:
        raise ValueError(f"N must be >= 2, got {N}")
    theta = theta_pd(2.0 - 2.0 / N, d)
    return max(1.0 / math.tan(theta), 0.0)


def hawkes_nonintersect(N: int, p: float) -> bool:
    """True iff the ranges of N independent index-p/2 stable subordinators
    a.s. have empty common intersection: N*p/2 - N + 1 < 0 (strict)."""
    N = int(N)
    if N < 2:
        raise ValueError(f"N must be >= 2, got {N}")
    p = float(p)
    if p <= 0.0:
        raise ValueError(f"p must be positive, got {p}")
    return N * p / 2.0 - N + 1.0 < 0.0


def invert_theta(theta: float, d: int, p_lo: float = 1e-3, p_hi: float = 64.0) -> float:
    """Exponent p such that theta_pd(p, d) equals the given half-angle.

    theta_pd is strictly decreasing in p, so a bisection on p suffices.  Used
    by the experiments to recover the exponent of a wedge or cone numerically
    instead of assuming a closed form.
    """
    theta = float(theta)
    if not 0.0 < theta <= math.pi:
        raise ValueError(f"theta must lie in (0, pi], got {theta}")

    def f(p: float) -> float:
        try:
            return theta_pd(p, d) - theta
        except (RootNotFoundError, ConvergenceError):
            # No zero at or below pi for this p: the critical angle sits above
            # any target we can invert for, so report "too wide".
            return math.inf

    lo, hi = p_lo, p_hi
    flo = f(lo)
    fhi = f(hi)
    if flo < 0.0 or fhi > 0.0:
        raise RootNotFoundError(
            f"no exponent in [{p_lo}, {p_hi}] gives half-angle {theta} in d={d}"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-11 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)
