"""Finite-dimensional laboratory for transition-operator square roots.

A toy operator is a finite normal operator given by its eigenvalues
inside the closed unit disk together with the coefficients of an
observable in the same eigenbasis.  Everything else is scalar calculus
per eigenvalue: the square-root series of the operator versus the direct
spectral square root, growth statistics of the partial-sum norms
``norm_Sn`` under several summability conditions, and two algebraic
identities used to pass between tail sums and blocked sums.

Circulant toys realize the operator as an honest doubly-stochastic
matrix (a random walk on the cycle), whose eigenvalues are the DFT of
the kernel row; they give a cheap supply of genuinely normal operators
for property tests.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ParamsError, WorkBudgetError

SPECTRAL_WORK_BUDGET = 1 << 27   # eigenvalue-times-step ceiling
_EIG_ONE_TOL = 1e-14             # |lambda - 1| below this counts as 1
_CHUNK_ROWS = 1 << 14            # power-accumulation chunk length


class SpectralTag(Enum):
    EXPLICIT = "explicit"
    CIRCULANT = "circulant"


@dataclass(eq=False)
class SpectralToy:
    """Normal operator surrogate: eigenvalues plus observable coefficients.

    The mean-zero constraint appears as: wherever an eigenvalue equals 1
    the observable coefficient must vanish.
    """

    eigenvalues: np.ndarray
    observable: np.ndarray
    tag: SpectralTag = SpectralTag.EXPLICIT
    kernel_row: np.ndarray | None = None

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.eigenvalues, dtype=complex))
        obs = np.atleast_1d(np.asarray(self.observable, dtype=complex))
        if lam.shape != obs.shape or lam.ndim != 1 or lam.size == 0:
            raise ParamsError("eigenvalues and observable must be equal "
                              "length nonempty vectors")
        if np.any(np.abs(lam) > 1.0 + 1e-12):
            raise ParamsError("eigenvalues must lie in the closed unit "
                              "disk", max_abs=float(np.abs(lam).max()))
        at_one = np.abs(lam - 1.0) <= _EIG_ONE_TOL
        if np.any(at_one & (np.abs(obs) > 0.0)):
            raise ParamsError("observable must vanish on the eigenvalue-1 "
                              "subspace")
        self.eigenvalues = lam
        self.observable = obs

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    def matrix(self) -> np.ndarray:
        """Dense matrix realization (circulant toys only)."""
        if self.tag is not SpectralTag.CIRCULANT or self.kernel_row is None:
            raise ParamsError("only circulant toys have a canonical matrix")
        row = self.kernel_row
        n = row.size
        idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
        return row[idx]


def explicit_toy(eigenvalues, observable) -> SpectralToy:
    return SpectralToy(np.asarray(eigenvalues, dtype=complex),
                       np.asarray(observable, dtype=complex))


def circulant_toy(kernel_row, observable) -> SpectralToy:
    """Toy from a probability kernel row; eigenvalues are its DFT."""
    row = np.atleast_1d(np.asarray(kernel_row, dtype=float))
    if row.ndim != 1 or row.size == 0:
        raise ParamsError("kernel row must be a nonempty vector")
    if np.any(row < 0.0) or abs(row.sum() - 1.0) > 1e-12:
        raise ParamsError("kernel row must be a probability vector",
                          total=float(row.sum()))
    lam = np.fft.fft(row)
    return SpectralToy(lam, np.asarray(observable, dtype=complex),
                       tag=SpectralTag.CIRCULANT, kernel_row=row)


def random_circulant_toy(dim: int, seed: int,
                         uniform_mix: float = 0.2) -> SpectralToy:
    """Random cycle walk with a guaranteed spectral gap.

    Mixing the random kernel row with the uniform row shrinks every
    nonconstant eigenvalue by (1 - uniform_mix), so |1 - lambda| >=
    uniform_mix away from the constant mode.
    """
    if dim < 2:
        raise ParamsError("dimension must be at least 2", dim=dim)
    rng = np.random.default_rng(seed)
    row = rng.random(dim)
    row /= row.sum()
    row = (1.0 - uniform_mix) * row + uniform_mix / dim
    obs = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    obs[0] = 0.0              # the constant mode carries eigenvalue 1
    return circulant_toy(row, obs)


def toy_from_json(text: str) -> SpectralToy:
    """Build a toy from a JSON spec.

    Accepts either {"kernel_row": [...], "observable": [...]} or
    {"eigenvalues": [...], "observable": [...]}; complex entries are
    written as [re, im] pairs, real entries as numbers.  An optional
    "dim" field is checked against the vector lengths.
    """
    spec = json.loads(text)
    obs = _parse_complex_list(spec.get("observable"))
    if "kernel_row" in spec:
        toy = circulant_toy(np.asarray(spec["kernel_row"], dtype=float),
                            obs)
    elif "eigenvalues" in spec:
        toy = explicit_toy(_parse_complex_list(spec["eigenvalues"]), obs)
    else:
        raise ParamsError("toy spec needs kernel_row or eigenvalues")
    if "dim" in spec and int(spec["dim"]) != toy.dim:
        raise ParamsError("declared dimension does not match the vectors",
                          declared=int(spec["dim"]), found=toy.dim)
    return toy


def _parse_complex_list(values) -> np.ndarray:
    if values is None:
        raise ParamsError("toy spec needs an observable")
    out = np.empty(len(values), dtype=complex)
    for i, v in enumerate(values):
        if isinstance(v, (list, tuple)):
            out[i] = complex(v[0], v[1])
        else:
            out[i] = complex(v)
    return out


# ---------------------------------------------------------------------------
# Square-root series

def binom_coeffs(m: int) -> np.ndarray:
    """Coefficients a_1..a_m of sqrt(1-x) = 1 - sum_j a_j x^j.

    The ratio recurrence a_{j+1} = a_j (j - 1/2)/(j + 1) sidesteps the
    catastrophic cancellation of evaluating the binomial directly.
    """
    if m < 1:
        raise ParamsError("need at least one coefficient", m=m)
    a = np.empty(m)
    a[0] = 0.5
    for j in range(1, m):
        a[j] = a[j - 1] * (j - 0.5) / (j + 1.0)
    return a


@dataclass
class SqrtApplyResult:
    series: np.ndarray
    direct: np.ndarray
    error: float


def sqrt_apply(toy: SpectralToy, m: int) -> SqrtApplyResult:
    """Apply the square root of (I - operator) both ways.

    The series route truncates sqrt(1-x) after m terms (evaluated by
    Horner per eigenvalue); the direct route takes the principal square
    root of (1 - lambda).  The reported error is the largest coefficient
    difference.
    """
    a = binom_coeffs(m)
    lam = toy.eigenvalues
    acc = np.zeros_like(lam)
    for j in range(m - 1, -1, -1):
        acc = (acc + a[j]) * lam
    series = toy.observable * (1.0 - acc)
    direct = toy.observable * np.sqrt(1.0 - lam)
    return SqrtApplyResult(series, direct,
                           float(np.abs(series - direct).max()))


# ---------------------------------------------------------------------------
# Condition sweeps

@dataclass
class SpectralConditionReport:
    """Partial-sum statistics on a dyadic grid of step counts.

    ``sum2_partial`` is the norm of the vector partial sum of S_n/n^{3/2}
    (whose convergence is the square-root membership criterion);
    ``sum3_partial`` accumulates norms instead of vectors, so it
    dominates sum2.  ``rate5`` and ``rate6_q`` multiply norm_Sn by
    log(n)/sqrt(n) and log^q(n)/sqrt(n); ``remark7_partial`` accumulates
    squared norms over n^2; ``kronecker`` is the averaged weighted-power
    sum that must decay once the weighted series converges.
    ``correspondence`` is max |coefficient|/sqrt|1 - eigenvalue|, the
    scalar that calibrates whether sum2 can stay bounded.
    """

    ns: np.ndarray
    norm_sn: np.ndarray
    sum2_partial: np.ndarray
    sum3_partial: np.ndarray
    rate5: np.ndarray
    rate6_q: np.ndarray
    remark7_partial: np.ndarray
    kronecker: np.ndarray
    q: float
    correspondence: float

    def to_csv(self) -> str:
        lines = ["n,norm_Sn,sum3_partial,rate5,rate6_q,remark7_partial"]
        for i, n in enumerate(self.ns):
            lines.append("%d,%.17g,%.17g,%.17g,%.17g,%.17g"
                         % (n, self.norm_sn[i], self.sum3_partial[i],
                            self.rate5[i], self.rate6_q[i],
                            self.remark7_partial[i]))
        return "\n".join(lines) + "\n"


def evaluate_conditions(toy: SpectralToy, n_max: int,
                        q: float = 2.0) -> SpectralConditionReport:
    """Accumulate all condition statistics up to n_max steps.

    Work grows as n_max times the dimension and is budget-guarded.
    Partial sums accumulate over every n; rows are recorded at powers
    of two.
    """
    if n_max < 2:
        raise ParamsError("need at least two steps", n_max=n_max)
    if n_max * toy.dim > SPECTRAL_WORK_BUDGET:
        raise WorkBudgetError("condition sweep too large",
                              estimated_ops=n_max * toy.dim,
                              budget=SPECTRAL_WORK_BUDGET)
    lam = toy.eigenvalues
    g = toy.observable
    at_one = np.abs(lam - 1.0) <= _EIG_ONE_TOL
    den = np.where(at_one, 1.0, 1.0 - lam)
    gden = np.where(at_one, 0.0, g / den)
    gap = np.where(at_one, 1.0, np.sqrt(np.abs(1.0 - lam)))
    correspondence = float(np.where(at_one, 0.0, np.abs(g) / gap).max())

    kmax = int(math.floor(math.log2(n_max)))
    grid = [1 << k for k in range(1, kmax + 1)]
    acc2 = np.zeros_like(lam)
    acck = np.zeros_like(lam)
    acc3 = 0.0
    acc7 = 0.0
    rows = {"n": [], "norm": [], "s2": [], "s3": [], "r5": [], "r6": [],
            "r7": [], "kron": []}
    lam_prev = np.ones_like(lam)     # lambda^(n-1) entering the chunk
    n0 = 1
    for n_hi in grid:
        for lo in range(n0, n_hi + 1, _CHUNK_ROWS):
            hi = min(n_hi, lo + _CHUNK_ROWS - 1)
            cnt = hi - lo + 1
            pw = np.cumprod(np.tile(lam, (cnt, 1)), axis=0) * lam_prev
            lam_prev = pw[-1].copy()
            ns = np.arange(lo, hi + 1, dtype=float)[:, None]
            sn = gden * (1.0 - pw)
            norms = np.linalg.norm(sn, axis=1)
            w32 = ns ** -1.5
            acc2 += (sn * w32).sum(axis=0)
            acck += g * (pw / np.sqrt(ns)).sum(axis=0)
            acc3 += float((norms * w32[:, 0]).sum())
            acc7 += float((norms ** 2 / ns[:, 0] ** 2).sum())
        n0 = n_hi + 1
        k = math.log2(n_hi)
        norm_n = float(np.linalg.norm(gden * (1.0 - lam_prev)))
        rows["n"].append(n_hi)
        rows["norm"].append(norm_n)
        rows["s2"].append(float(np.linalg.norm(acc2)))
        rows["s3"].append(acc3)
        rows["r5"].append(norm_n * k / math.sqrt(n_hi))
        rows["r6"].append(norm_n * k ** q / math.sqrt(n_hi))
        rows["r7"].append(acc7)
        rows["kron"].append(float(np.linalg.norm(acck))
                            / math.sqrt(n_hi))
    return SpectralConditionReport(
        ns=np.asarray(rows["n"]), norm_sn=np.asarray(rows["norm"]),
        sum2_partial=np.asarray(rows["s2"]),
        sum3_partial=np.asarray(rows["s3"]),
        rate5=np.asarray(rows["r5"]), rate6_q=np.asarray(rows["r6"]),
        remark7_partial=np.asarray(rows["r7"]),
        kronecker=np.asarray(rows["kron"]), q=q,
        correspondence=correspondence)


# ---------------------------------------------------------------------------
# Algebraic identity checks

def _partial_sums(toy: SpectralToy, n_hi: int) -> np.ndarray:
    """Rows k = 0..n_hi of the operator partial sums S_k per eigenvalue."""
    if (n_hi + 1) * toy.dim > SPECTRAL_WORK_BUDGET:
        raise WorkBudgetError("identity check too large",
                              estimated_ops=(n_hi + 1) * toy.dim,
                              budget=SPECTRAL_WORK_BUDGET)
    lam = toy.eigenvalues
    at_one = np.abs(lam - 1.0) <= _EIG_ONE_TOL
    den = np.where(at_one, 1.0, 1.0 - lam)
    gden = np.where(at_one, 0.0, toy.observable / den)
    pw = np.empty((n_hi + 1, toy.dim), dtype=complex)
    pw[0] = 1.0
    if n_hi >= 1:
        pw[1:] = np.cumprod(np.tile(lam, (n_hi, 1)), axis=0)
    return gden * (1.0 - pw)


def rn_identity_check(toy: SpectralToy, n: int) -> float:
    """Residual of the blocked tail identity, relative to its terms.

    The sum of S_k/k^{3/2} over one dyadic block equals S_n times the
    block's scalar weight plus the n-step operator power applied to the
    shifted-weight sum of the earlier partial sums.
    """
    if n < 2:
        raise ParamsError("need n >= 2", n=n)
    s = _partial_sums(toy, 2 * n - 1)
    k_blk = np.arange(n, 2 * n, dtype=float)[:, None]
    lhs = (s[n: 2 * n] / k_blk ** 1.5).sum(axis=0)
    t1 = s[n] * float((k_blk ** -1.5).sum())
    k_pre = np.arange(1, n, dtype=float)[:, None]
    inner = (s[1: n] / (n + k_pre) ** 1.5).sum(axis=0)
    t2 = toy.eigenvalues ** n * inner
    scale = max(1.0, float(np.abs(lhs).max()), float(np.abs(t1).max()),
                float(np.abs(t2).max()))
    return float(np.abs(lhs - t1 - t2).max()) / scale


def rn_telescoping_check(toy: SpectralToy, n: int,
                         n_tail: int | None = None) -> float:
    """Residual of the summation-by-parts rewrite of the shifted sum.

    Both sides truncate the tail sums R_k at the same n_tail (default
    2n), which keeps the rewrite an exact identity.
    """
    if n < 3:
        raise ParamsError("need n >= 3", n=n)
    n_tail = 2 * n if n_tail is None else n_tail
    if n_tail < n:
        raise ParamsError("tail horizon must cover n", n_tail=n_tail)
    s = _partial_sums(toy, n_tail)
    k_all = np.arange(1, n_tail + 1, dtype=float)[:, None]
    terms = s[1:] / k_all ** 1.5
    # R[k] = sum_{j=k}^{n_tail} S_j/j^{3/2}, suffix sums with R[n_tail+1]=0
    suffix = np.zeros((n_tail + 2, toy.dim), dtype=complex)
    suffix[1:-1] = np.cumsum(terms[::-1], axis=0)[::-1]
    k_pre = np.arange(1, n, dtype=float)[:, None]
    lhs = (s[1: n] / (n + k_pre) ** 1.5).sum(axis=0)
    ks = np.arange(2, n, dtype=float)[:, None]
    jump = (ks ** 1.5 / (n + ks) ** 1.5
            - (ks - 1.0) ** 1.5 / (n + ks - 1.0) ** 1.5)
    rhs = (suffix[2: n] * jump).sum(axis=0)
    rhs = rhs + suffix[1] / (n + 1.0) ** 1.5
    rhs = rhs - suffix[n] * (n - 1.0) ** 1.5 / (2.0 * n - 1.0) ** 1.5
    scale = max(1.0, float(np.abs(lhs).max()), float(np.abs(rhs).max()))
    return float(np.abs(lhs - rhs).max()) / scale
