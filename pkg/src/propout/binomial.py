"""Exact binomial probabilities and alpha-outlier regions.

All probabilities are evaluated without normal approximations. The pmf over
the support is anchored at the mode in log space and extended outward with
the exact ratio ``pmf(j+1)/pmf(j) = (d-j)/(j+1) * p/(1-p)``, so depths in the
thousands never touch a factorial. Far-tail terms that fall below the double
range underflow to zero, which is harmless because every region is defined
against a level ``alpha`` far above that range.

Two region shapes are supported:

* one-tailed (``"upper"``): ``[threshold, d]`` where ``threshold`` is the
  smallest count whose upper tail probability is at most ``alpha``;
* two-tailed (``"two"``): every count whose pmf lies strictly below a density
  cutoff, the cutoff being as large as possible while keeping the region's
  mass at most ``alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import ParameterError

UPPER = "upper"
TWO = "two"
TAIL_MODES = (UPPER, TWO)

# relative gap below which a float decision is re-settled exactly
_FRAGILE = 1e-9


@dataclass(frozen=True)
class BinomialSpec:
    """Binomial(d, p): ``d`` trials with success probability ``p``."""

    d: int
    p: float

    def __post_init__(self):
        if isinstance(self.d, bool) or int(self.d) != self.d or self.d < 0:
            raise ParameterError(f"trials d must be a nonnegative integer, got {self.d!r}")
        if not (0.0 <= self.p <= 1.0):
            raise ParameterError(f"probability p must lie in [0, 1], got {self.p!r}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "p", float(self.p))


@dataclass(frozen=True, eq=False)
class OutlierRegion:
    """An alpha-outlier region of a binomial distribution.

    The complement of the region within ``{0..d}`` is always a single
    interval ``[inlier_lo, inlier_hi]`` (the pmf is unimodal), which is what
    membership tests use. ``threshold`` is set for one-tailed regions and
    ``cutoff`` (the density bound) for two-tailed ones.
    """

    tail: str
    d: int
    alpha: float
    mass: float
    inlier_lo: int
    inlier_hi: int
    threshold: int | None = None
    cutoff: float | None = None

    @property
    def members(self) -> np.ndarray:
        """Sorted member counts within the support."""
        k = np.arange(self.d + 1)
        return k[(k < self.inlier_lo) | (k > self.inlier_hi)]

    @property
    def is_empty(self) -> bool:
        return self.inlier_lo <= 0 and self.inlier_hi >= self.d

    def __contains__(self, n) -> bool:
        return n < self.inlier_lo or n > self.inlier_hi

    def __eq__(self, other):
        if not isinstance(other, OutlierRegion):
            return NotImplemented
        return (
            self.tail == other.tail
            and self.d == other.d
            and self.inlier_lo == other.inlier_lo
            and self.inlier_hi == other.inlier_hi
        )

    def __hash__(self):
        return hash((self.tail, self.d, self.inlier_lo, self.inlier_hi))


def _check_alpha(alpha):
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"alpha must lie in the open interval (0, 1), got {alpha!r}")


def log_pmf(spec: BinomialSpec, k: int) -> float:
    """Natural log of ``P(N = k)``; ``-inf`` when the probability is exactly 0."""
    d, p = spec.d, spec.p
    if not 0 <= k <= d:
        raise ParameterError(f"count {k} outside the support [0, {d}]")
    if p == 0.0:
        return 0.0 if k == 0 else -math.inf
    if p == 1.0:
        return 0.0 if k == d else -math.inf
    log_comb = math.lgamma(d + 1) - (math.lgamma(k + 1) + math.lgamma(d - k + 1))
    return log_comb + k * math.log(p) + (d - k) * math.log1p(-p)


def _mode(d, p):
    return min(int((d + 1) * p), d)


def pmf_vector(spec: BinomialSpec) -> np.ndarray:
    """The pmf over ``0..d`` as a float array."""
    d, p = spec.d, spec.p
    out = np.zeros(d + 1)
    if p == 0.0:
        out[0] = 1.0
        return out
    if p == 1.0:
        out[d] = 1.0
        return out
    q = 1.0 - p
    m = _mode(d, p)
    anchor = math.exp(log_pmf(spec, m))
    out[m] = anchor
    if m < d:
        j = np.arange(m, d, dtype=float)
        out[m + 1:] = anchor * np.cumprod(((d - j) * p) / ((j + 1) * q))
    if m > 0:
        j = np.arange(m, 0, -1, dtype=float)
        out[m - 1::-1] = anchor * np.cumprod((j * q) / ((d - j + 1) * p))
    return out


def _upper_tails(pmf):
    # tails[k] = P(N >= k) for k in 0..d+1, summed from the far end inward
    tails = np.zeros(pmf.size + 1)
    tails[:-1] = np.cumsum(pmf[::-1])[::-1]
    np.minimum(tails, 1.0, out=tails)
    tails[0] = 1.0
    return tails


def upper_tail(spec: BinomialSpec, k: int) -> float:
    """``P(N >= k)`` for ``0 <= k <= d + 1``."""
    if not 0 <= k <= spec.d + 1:
        raise ParameterError(f"count {k} outside [0, {spec.d + 1}]")
    if k == 0:
        return 1.0
    if k == spec.d + 1:
        return 0.0
    return float(_upper_tails(pmf_vector(spec))[k])


def _near(x, y):
    return abs(x - y) <= _FRAGILE * max(abs(x), abs(y))


@lru_cache(maxsize=64)
def _exact_weights(d, p):
    # pmf(k) == weights[k] / scale exactly, for the binary value of p
    a, b = Fraction(p).as_integer_ratio()
    c = b - a
    if c == 0:
        return [0] * d + [1], 1
    weights = [0] * (d + 1)
    term = weights[0] = c ** d
    for k in range(d):
        term = term * (d - k) * a // ((k + 1) * c)
        weights[k + 1] = term
    return weights, b ** d


def _within(weight_sum, scale, alpha):
    num, den = Fraction(alpha).as_integer_ratio()
    return weight_sum * den <= num * scale


def _one_tailed_exact(d, p, alpha):
    weights, scale = _exact_weights(d, p)
    tail = 0
    threshold = d + 1
    for k in range(d, -1, -1):
        tail += weights[k]
        if not _within(tail, scale, alpha):
            break
        threshold = k
    return threshold


def _one_tailed(pmf, alpha, p):
    tails = _upper_tails(pmf)
    # tails is nonincreasing; first index with tail <= alpha
    threshold = int(np.searchsorted(-tails, -alpha, side="left"))
    fragile = _near(tails[threshold], alpha) or (
        threshold > 0 and _near(tails[threshold - 1], alpha)
    )
    if fragile:
        threshold = _one_tailed_exact(pmf.size - 1, p, alpha)
    return threshold, float(tails[threshold])


def _two_tailed_exact(d, p, alpha):
    weights, scale = _exact_weights(d, p)
    order = sorted(range(d + 1), key=weights.__getitem__)
    mass = 0
    count = 0
    while count <= d:
        w = weights[order[count]]
        stop = count
        while stop <= d and weights[order[stop]] == w:
            stop += 1
        if not _within(mass + w * (stop - count), scale, alpha):
            break
        mass += w * (stop - count)
        count = stop
    return sorted(order[count:])


def _two_tailed_fragile(vals, csum, ends, g, alpha, p):
    # float cannot be trusted to settle the cut at group g
    if _near(csum[ends[g]], alpha):
        return True
    if g > 0 and (_near(csum[ends[g - 1]], alpha) or _near(vals[ends[g - 1]], vals[ends[g]])):
        return True
    if g + 1 < ends.size and _near(vals[ends[g]], vals[ends[g + 1]]):
        return True
    group_size = ends[g] - (ends[g - 1] if g > 0 else -1)
    # float ties are exact only in the symmetric case
    return group_size > 1 and p != 0.5


def _two_tailed(pmf, alpha, p):
    order = np.argsort(pmf, kind="stable")
    vals = pmf[order]
    csum = np.cumsum(vals)
    # last index of each run of equal pmf values
    ends = np.flatnonzero(np.r_[vals[1:] != vals[:-1], True])
    fits = csum[ends] <= alpha
    n_groups = int(np.argmin(fits)) if not fits.all() else fits.size
    count = int(ends[n_groups - 1]) + 1 if n_groups else 0
    inliers = order[count:]
    if count < vals.size and _two_tailed_fragile(vals, csum, ends, n_groups, alpha, p):
        inliers = np.asarray(_two_tailed_exact(pmf.size - 1, p, alpha))
    inside = np.zeros(pmf.size, dtype=bool)
    inside[inliers] = True
    mass = float(np.sort(pmf[~inside]).sum())
    cutoff = float(pmf[inside].min()) if inliers.size else math.inf
    lo, hi = int(inliers.min()), int(inliers.max())
    if hi - lo + 1 != inliers.size:
        raise ArithmeticError("non-contiguous inlier set; pmf is not unimodal")
    return lo, hi, mass, cutoff


def one_tailed_region(spec: BinomialSpec, alpha: float) -> OutlierRegion:
    """Upper region ``[threshold, d]``; ``threshold`` may be ``d + 1`` (empty)."""
    _check_alpha(alpha)
    threshold, mass = _one_tailed(pmf_vector(spec), alpha, spec.p)
    return OutlierRegion(UPPER, spec.d, alpha, mass, 0, threshold - 1, threshold=threshold)


def two_tailed_region(spec: BinomialSpec, alpha: float) -> OutlierRegion:
    """Density-cutoff region.

    Counts are admitted in order of increasing pmf. Counts sharing a pmf
    value enter or stay out together, so a tie group straddling the level
    is excluded as a whole.
    """
    _check_alpha(alpha)
    lo, hi, mass, cutoff = _two_tailed(pmf_vector(spec), alpha, spec.p)
    return OutlierRegion(TWO, spec.d, alpha, mass, lo, hi, cutoff=cutoff)


def outlier_region(spec: BinomialSpec, alpha: float, tail: str = UPPER) -> OutlierRegion:
    if tail == UPPER:
        return one_tailed_region(spec, alpha)
    if tail == TWO:
        return two_tailed_region(spec, alpha)
    raise ParameterError(f"unknown tail mode {tail!r}; expected one of {TAIL_MODES}")


@lru_cache(maxsize=1 << 16)
def inlier_bounds(d: int, p: float, alpha: float, tail: str) -> tuple[int, int]:
    """Cached ``(inlier_lo, inlier_hi)`` of the region for Binomial(d, p).

    Hot path for the detector: no validation beyond what the region
    functions already do.
    """
    region = outlier_region(BinomialSpec(d, p), alpha, tail)
    return region.inlier_lo, region.inlier_hi
