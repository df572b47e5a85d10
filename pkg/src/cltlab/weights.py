"""Nonincreasing weight schedules a_1 >= a_2 >= ... in [0, 1].

A schedule assigns a weight ``a_k`` to every dyadic scale index ``k`` and
knows how to sum the ratios ``a_k / k`` over index ranges.  Those partial
sums are the block masses everything else is built on, so they get an
analytic path (digamma) for the constant schedule, which is the only mode
allowed to exceed the array budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import digamma

from .errors import ParamsError

# Largest index for which weight values are materialized as an array.
MAX_ARRAY_KMAX = 1 << 25

_EULER = float(np.euler_gamma)


def harmonic(n) -> float:
    """Partial harmonic sum 1 + 1/2 + ... + 1/n, analytic in n."""
    if n <= 0:
        return 0.0
    return float(digamma(float(n) + 1.0)) + _EULER


class WeightMode(Enum):
    CONST_ONE = "const_one"
    INV_LOG = "inv_log"
    ADAPTED = "adapted"


@dataclass(eq=False)
class WeightSchedule:
    """Weight values over k = 1..kmax plus cached ratio prefix sums.

    ``values`` is None only for CONST_ONE, where every weight is 1 and
    partial sums have closed forms, so kmax may be astronomically large.
    For ADAPTED schedules ``anchors`` records the segment endpoints that
    were actually placed and ``truncated`` whether the decay sequence ran
    out before the last segment closed.
    """

    mode: WeightMode
    kmax: int
    values: np.ndarray | None = None
    anchors: tuple[int, ...] | None = None
    truncated: bool = False
    decay: np.ndarray | None = None
    _prefix: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kmax < 1:
            raise ParamsError("kmax must be >= 1", kmax=self.kmax)
        if self.values is None:
            if self.mode is not WeightMode.CONST_ONE:
                raise ParamsError("only CONST_ONE schedules may be lazy")
        else:
            v = np.asarray(self.values, dtype=float)
            if v.shape != (self.kmax,):
                raise ParamsError("values must have length kmax")
            if np.any(v < 0.0) or np.any(v > 1.0):
                raise ParamsError("weights must lie in [0, 1]")
            if np.any(np.diff(v) > 1e-15):
                raise ParamsError("weights must be nonincreasing")
            self.values = v

    # -- accessors ---------------------------------------------------------

    def a(self, k):
        """Weight a_k; accepts scalars or integer arrays."""
        if self.values is None:
            if np.isscalar(k):
                return 1.0
            return np.ones(np.shape(k), dtype=float)
        k = np.asarray(k)
        return self.values[k - 1] if k.ndim else float(self.values[int(k) - 1])

    def ratio(self, k):
        """a_k / k, the mass carried by index k."""
        return self.a(k) / np.asarray(k, dtype=float)

    def _ratio_prefix(self) -> np.ndarray:
        # prefix[k] = sum_{j<=k} a_j/j, with prefix[0] = 0, in extended precision
        if self._prefix is None:
            j = np.arange(1, self.kmax + 1, dtype=np.longdouble)
            r = np.asarray(self.values, dtype=np.longdouble) / j
            self._prefix = np.concatenate(
                [[0.0], np.cumsum(r)]).astype(float)
        return self._prefix

    def mass(self, k_lo: int, k_hi: int) -> float:
        """Sum of a_k / k over k_lo <= k <= k_hi (0 if the range is empty)."""
        if k_hi < k_lo:
            return 0.0
        k_lo = max(int(k_lo), 1)
        k_hi = min(int(k_hi), self.kmax)
        if k_hi < k_lo:
            return 0.0
        if self.values is None:
            return harmonic(k_hi) - harmonic(k_lo - 1)
        p = self._ratio_prefix()
        return float(p[k_hi] - p[k_lo - 1])

    def first_k_reaching(self, k_lo: int, threshold: float) -> int | None:
        """Smallest k >= k_lo with mass(k_lo, k) >= threshold, else None."""
        if threshold <= 0.0:
            return k_lo if k_lo <= self.kmax else None
        if self.values is None:
            base = harmonic(k_lo - 1)
            target = base + threshold
            # analytic guess H(k) ~ ln k + gamma, then local bisection
            hi = max(k_lo, int(math.exp(min(target - _EULER, 700.0))) + 2)
            hi = min(hi, self.kmax)
            while harmonic(hi) < target:
                if hi >= self.kmax:
                    return None
                hi = min(2 * hi, self.kmax)
            lo = k_lo
            while lo < hi:
                mid = (lo + hi) // 2
                if harmonic(mid) >= target:
                    hi = mid
                else:
                    lo = mid + 1
            return lo
        p = self._ratio_prefix()
        target = p[k_lo - 1] + threshold
        k = int(np.searchsorted(p, target, side="left"))
        # searchsorted can land one early on exact-float boundaries
        while k <= self.kmax and p[k] < target:
            k += 1
        return k if k <= self.kmax else None


def adapted_schedule(c, kmax: int):
    """Slow weight schedule matched to a prescribed decay sequence.

    ``c`` is a positive nonincreasing sequence over k = 1..kmax.  Segment
    endpoints k_n are placed at the first index where c drops below 2^-n
    and the segment is at least n long; the weight at each endpoint is
    capped so that the endpoint-to-endpoint mass contribution is at most 1,
    with a short linear ramp (n steps) joining consecutive levels.

    Returns (values, anchors, truncated).
    """
    c = np.asarray(c, dtype=float)
    if c.shape != (kmax,):
        raise ParamsError("decay sequence must have length kmax")
    if np.any(c <= 0.0):
        raise ParamsError("decay sequence must be positive")
    if np.any(np.diff(c) > 1e-15):
        raise ParamsError("decay sequence must be nonincreasing")

    inv = np.concatenate([[0.0], np.cumsum(
        1.0 / np.arange(1, kmax + 1, dtype=np.longdouble))]).astype(float)

    values = np.empty(kmax, dtype=float)
    values[0] = 1.0
    anchors = [1]
    a_prev = 1.0
    n = 1
    truncated = False
    while anchors[-1] < kmax:
        k_prev = anchors[-1]
        k_min = k_prev + n
        # first k >= k_min with c_k <= 2^-n; c is nonincreasing
        level = 2.0 ** (-n)
        idx = int(np.searchsorted(-c, -level, side="left")) + 1
        k_n = max(k_min, idx)
        if k_n > kmax or c[k_n - 1] > level:
            truncated = True
            values[k_prev:] = a_prev
            break
        seg_mass = inv[k_n] - inv[k_prev]
        a_new = min(a_prev, 1.0 / seg_mass) if seg_mass > 0 else a_prev
        j = np.arange(k_prev + 1, k_n + 1)
        alpha = np.minimum((j - k_prev) / n, 1.0)
        values[k_prev:k_n] = a_prev + alpha * (a_new - a_prev)
        anchors.append(k_n)
        a_prev = a_new
        n += 1
    return values, tuple(anchors), truncated


def build_weights(mode: WeightMode, kmax: int, c=None) -> WeightSchedule:
    """Construct a weight schedule of the given mode.

    CONST_ONE accepts any kmax >= 1 and stores no array.  INV_LOG uses
    a_1 = 1 and a_k = 1/log2(k) for k >= 2.  ADAPTED requires the decay
    sequence ``c`` and checks, on the provided prefix, that it is positive,
    nonincreasing and actually decays.
    """
    mode = WeightMode(mode)
    if kmax < 1:
        raise ParamsError("kmax must be >= 1", kmax=kmax)
    if mode is WeightMode.CONST_ONE:
        return WeightSchedule(mode=mode, kmax=kmax)
    if kmax > MAX_ARRAY_KMAX:
        raise ParamsError(
            "kmax exceeds the array budget for non-constant schedules",
            kmax=kmax, budget=MAX_ARRAY_KMAX)
    if mode is WeightMode.INV_LOG:
        k = np.arange(1, kmax + 1, dtype=float)
        with np.errstate(divide="ignore"):
            vals = 1.0 / np.log2(k)
        vals[0] = 1.0
        return WeightSchedule(mode=mode, kmax=kmax, values=vals)
    if mode is WeightMode.ADAPTED:
        if c is None:
            raise ParamsError("ADAPTED schedules require a decay sequence")
        c = np.asarray(c, dtype=float)
        if c.shape != (kmax,):
            raise ParamsError("decay sequence must have length kmax")
        if kmax >= 2 and not c[-1] < c[0]:
            raise ParamsError(
                "decay sequence shows no decay over the provided prefix")
        values, anchors, truncated = adapted_schedule(c, kmax)
        return WeightSchedule(mode=mode, kmax=kmax, values=values,
                              anchors=anchors, truncated=truncated,
                              decay=c)
    raise ParamsError(f"unknown weight mode {mode!r}")


def weighted_prefix(schedule: WeightSchedule, c, ks) -> np.ndarray:
    """Partial sums of a_j c_j / j at the requested indices.

    ``c`` is the decay sequence indexed from 1; every requested index
    must be covered by both ``c`` and the schedule.  Accumulation runs
    in extended precision like the plain mass prefix.
    """
    c = np.asarray(c, dtype=float)
    ks = np.asarray(ks, dtype=np.int64)
    if ks.size == 0:
        return np.empty(0)
    k_top = int(ks.max())
    if int(ks.min()) < 1:
        raise ParamsError("indices start at 1", k=int(ks.min()))
    if k_top > c.size:
        raise ParamsError("decay sequence too short for requested index",
                          k=k_top, have=int(c.size))
    if k_top > schedule.kmax:
        raise ParamsError("requested index beyond the schedule",
                          k=k_top, kmax=schedule.kmax)
    j = np.arange(1, k_top + 1, dtype=np.longdouble)
    r = schedule.a(np.arange(1, k_top + 1)) * c[:k_top] / j
    p = np.concatenate([[0.0], np.cumsum(r)])
    return p[ks].astype(float)
