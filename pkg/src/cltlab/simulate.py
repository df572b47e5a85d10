"""Monte Carlo samplers for the layered site model.

A horizon-N partial sum is a linear functional of independent site
variables: per block l and site offset m the coefficient is
g_l(m) = sqrt(N_l or 1) * C_l(m), where C_l is the piecewise-affine
profile computed by the engine and the sqrt(N_l) factor applies to
three-valued (spike) blocks only.  Spike sites take values -1/0/+1 with
hit probability 1/N_l split evenly between signs; Gaussian-block sites
are standard normal.  Either way each site contributes unit variance
times C_l(m)^2, so the batch variance target is exactly sigma_sq(N).

Two sampling modes:

* ``aggregate`` (default) — exact in distribution and fast.  Within an
  affine segment the spike hits are a thinned binomial: the hit count is
  Binomial(L, 1/N_l), the positive share Binomial(hits, 1/2), and on
  constant segments the contribution depends on the signed count alone.
  Ramp hits additionally draw distinct positions.  Gaussian blocks (and
  any segment whose expected hit count exceeds ``GAUSSIANIZE_HITS``)
  contribute one scaled normal with the segment's exact variance; the
  Berry-Esseen error of that replacement is below 0.6/sqrt(2^40) < 6e-7,
  far under every sampling tolerance used here.  Horizons beyond the
  desk cap must be dyadic and are handled entirely through normalized
  per-block variances, so values stay finite floats.
* ``site`` — literal per-coordinate draws for validation at small
  scales, budget-guarded.

Reproducibility: all randomness comes from counter-based Philox streams
keyed by (seed, lane, fixed-size chunk index) for the per-sample lanes
and by (seed, absolute sample index, segment) for variable-length hit
details.  No stream is ever shared across chunks, so batches are
byte-identical for any worker count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import ndtri
from scipy.stats import binom

from .blocks import BlockParity, BlockSpec, SequenceParams
from .engine import (DESK_N_CAP, ExactMoments, Segment, block_var_over_n)
from .errors import MemoryBudgetError, ParamsError, WorkBudgetError

CHUNK = 4096
GAUSSIANIZE_HITS = float(1 << 40)
SITE_DRAW_BUDGET = 1 << 26
DENSE_BYTE_BUDGET = 1 << 28

_LANE_TAG = 0xA0761D6478BD642F
_HIT_TAG = 0xE7037ED1A0B428DB
_SITE_TAG = 0x8EBC6AF09C88C6E3


def _mix64(x: int) -> int:
    """splitmix64 finalizer; decorrelates derived seeds."""
    x &= 0xFFFFFFFFFFFFFFFF
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & 0xFFFFFFFFFFFFFFFF
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def derive_seed(seed: int, salt: int) -> int:
    return _mix64((seed & 0xFFFFFFFFFFFFFFFF) ^ _mix64(salt + 1))


def _stream(word0: int, word1: int) -> np.random.Generator:
    key = np.array([word0 & 0xFFFFFFFFFFFFFFFF,
                    word1 & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def trapezoid_weight(k: int, m: int, N: int) -> int:
    """#{(j, i): 0 <= j < N, 0 <= i < n_k, j - i = m}, n_k = 2^k."""
    n_k = 1 << k
    return max(0, min(N - 1, m + n_k - 1) - max(0, m) + 1)


class SampleKind(Enum):
    FULL_SN = "FULL_SN"
    APPROX_IID_SUM = "APPROX_IID_SUM"


def draw_coordinate(block: BlockSpec, rng: np.random.Generator) -> float:
    """One raw site variate for the block (spike scale lives in g)."""
    if block.parity is BlockParity.GAUSSIAN:
        return float(rng.standard_normal())
    eps_half = math.ldexp(0.5, -block.horizon_log2)
    u = rng.random()
    if u < eps_half:
        return 1.0
    if u >= 1.0 - eps_half:
        return -1.0
    return 0.0


# ---------------------------------------------------------------------------
# Profiles

@dataclass
class BlockLayer:
    """Sampling view of one block at a fixed horizon."""

    block: BlockSpec
    hit_prob: float            # 1/N_l for spikes, 0 for Gaussian sites
    var_over_n: float          # contribution variance divided by N
    segments: list | None      # None when only the variance is available

    @property
    def spike_scale(self) -> float:
        h = self.block.horizon_log2
        if h > 1023:
            raise ParamsError("spike scale overflows at this block",
                              block=self.block.index)
        return math.sqrt(math.ldexp(1.0, h))


class CoordinateProfile:
    """Per-(params, N, kind) coefficient layout used by the samplers."""

    def __init__(self, params: SequenceParams, N: int, kind: SampleKind,
                 moments: ExactMoments | None = None):
        self.params = params
        self.N = N
        self.kind = kind
        e = N.bit_length() - 1
        desk = N <= DESK_N_CAP
        if not desk and (1 << e) != N:
            raise ParamsError("beyond the desk cap only dyadic horizons "
                              "are supported", log2=e)
        moments = moments or ExactMoments(params)
        self.moments = moments
        self.layers: list[BlockLayer] = []
        for b in params.blocks:
            hit = (math.ldexp(1.0, -b.horizon_log2)
                   if b.parity is BlockParity.THREE_VALUED else 0.0)
            if kind is SampleKind.APPROX_IID_SUM:
                mass = moments.block_mass(b, N)
                segs = None
                if desk:
                    segs = [Segment(0, N - 1, mass, 0.0, (N - 1) // 2)]
                self.layers.append(BlockLayer(b, hit, mass * mass, segs))
                continue
            if desk:
                prof = moments.profiles(N)[b.index - 1]
                var = prof.sum_pow(2) / N
                self.layers.append(BlockLayer(b, hit, var, prof.segments))
            else:
                var = block_var_over_n(params, b, e)
                self.layers.append(BlockLayer(b, hit, var, None))

    @property
    def m_range(self):
        los = [s.lo for lay in self.layers if lay.segments
               for s in lay.segments[:1]]
        return (min(los) if los else 0, self.N - 1)

    def g(self, l: int, m: int) -> float:
        lay = self.layers[l - 1]
        if lay.segments is None:
            raise ParamsError("profile has no site resolution at this "
                              "horizon", block=l)
        c = 0.0
        for seg in lay.segments:
            if seg.lo <= m <= seg.hi:
                c = seg.value(m)
                break
        scale = (lay.spike_scale
                 if lay.block.parity is BlockParity.THREE_VALUED else 1.0)
        return scale * c

    def variance_over_n(self) -> float:
        return math.fsum(lay.var_over_n for lay in self.layers)

    def variance(self) -> float:
        return self.variance_over_n() * self.N

    def dense_g(self, l: int) -> tuple[int, np.ndarray]:
        """(m_lo, dense coefficient array) for one block; budget-guarded."""
        lay = self.layers[l - 1]
        if lay.segments is None:
            raise ParamsError("no site resolution", block=l)
        lo = lay.segments[0].lo
        hi = lay.segments[-1].hi
        need = 8 * (hi - lo + 1)
        if need > DENSE_BYTE_BUDGET:
            raise MemoryBudgetError("dense profile too large",
                                    estimated_bytes=need,
                                    budget=DENSE_BYTE_BUDGET)
        out = np.empty(hi - lo + 1)
        for seg in lay.segments:
            t = np.arange(seg.lo - seg.mid, seg.hi - seg.mid + 1,
                          dtype=float)
            out[seg.lo - lo: seg.hi - lo + 1] = seg.v_mid + seg.slope * t
        scale = (lay.spike_scale
                 if lay.block.parity is BlockParity.THREE_VALUED else 1.0)
        return lo, scale * out


def build_profile(params: SequenceParams, N: int,
                  kind: SampleKind = SampleKind.FULL_SN,
                  moments: ExactMoments | None = None) -> CoordinateProfile:
    if N < 1:
        raise ParamsError("horizon must be positive", N=N)
    return CoordinateProfile(params, N, kind, moments)


# ---------------------------------------------------------------------------
# Batches

@dataclass
class SampleBatch:
    seed: int
    N: int
    count: int
    kind: SampleKind
    normalized: bool
    values: np.ndarray

    @property
    def horizon_log2(self) -> int:
        return self.N.bit_length() - 1

    def mean(self) -> float:
        return float(np.mean(self.values))

    def variance(self) -> float:
        return float(np.var(self.values, ddof=1))

    def _header(self, params: SequenceParams | None):
        lines = [f"# seed = {self.seed}",
                 f"# horizon_log2 = {self.horizon_log2}"]
        if self.N.bit_length() <= 63:
            lines.insert(1, f"# horizon = {self.N}")
        lines += [f"# count = {self.count}",
                  f"# kind = {self.kind.value}",
                  f"# normalized = {str(self.normalized).lower()}"]
        if params is not None:
            from .config import params_to_dict
            blob = json.dumps(params_to_dict(params), sort_keys=True)
            lines.append(f"# params = {blob}")
        return lines

    def to_csv(self, params: SequenceParams | None = None) -> str:
        lines = self._header(params)
        lines.append("sample_index,value")
        lines.extend(f"{i},{v:.17g}" for i, v in enumerate(self.values))
        return "\n".join(lines) + "\n"

    def summary(self, params: SequenceParams | None = None,
                quantiles: int = 21) -> dict:
        qs = np.linspace(0.0, 1.0, quantiles)
        out = {
            "seed": self.seed,
            "horizon_log2": self.horizon_log2,
            "count": self.count,
            "kind": self.kind.value,
            "normalized": self.normalized,
            "mean": self.mean(),
            "variance": self.variance(),
            "quantile_probs": [float(q) for q in qs],
            "quantiles": [float(v) for v in np.quantile(self.values, qs)],
        }
        if self.N.bit_length() <= 63:
            out["horizon"] = self.N
        return out


# ---------------------------------------------------------------------------
# Aggregate sampler

class _PlanOp:
    __slots__ = ("op", "lane", "coef", "aux", "seg", "seg_id", "layer")

    def __init__(self, op, lane, coef=0.0, aux=0.0, seg=None, seg_id=-1,
                 layer=None):
        self.op = op
        self.lane = lane
        self.coef = coef
        self.aux = aux
        self.seg = seg
        self.seg_id = seg_id
        self.layer = layer


def _build_plan(profile: CoordinateProfile, normalized: bool):
    """Fixed lane layout for the aggregate sampler.

    Lane ids and segment ids depend only on (params, N, kind), never on
    chunking or worker count.
    """
    N = profile.N
    b_sq = profile.moments.normalizer_sq(N)
    if normalized and b_sq <= 0.0:
        raise ParamsError("normalization needs a horizon with at least "
                          "one sub-horizon scale", N=N)
    if not normalized and N > DESK_N_CAP:
        raise ParamsError("raw values overflow beyond the desk cap; "
                          "request normalized output")
    if not normalized:
        inv_unit = 1.0
    elif N <= DESK_N_CAP:
        inv_unit = 1.0 / math.sqrt(b_sq * float(N))
    else:
        # Astronomic horizons are dyadic and reach this plan only through
        # per-layer variances, so the (underflowing) unit is never used
        # by an op; keep the exponent arithmetic in log2 space anyway.
        e = N.bit_length() - 1
        inv_unit = 2.0 ** (-0.5 * e) / math.sqrt(b_sq)
    plan = []
    lane = 0
    seg_id = 0
    for lay in profile.layers:
        gaussian_block = lay.block.parity is BlockParity.GAUSSIAN
        if lay.segments is None or gaussian_block:
            std = (math.sqrt(lay.var_over_n / b_sq) if normalized
                   else math.sqrt(lay.var_over_n * N))
            plan.append(_PlanOp("normal", lane, coef=std))
            lane += 1
            continue
        if lay.hit_prob == 0.0:
            # The hit probability underflowed (horizon exponent beyond
            # 1074): no feasible batch ever sees a spike from this block,
            # so it contributes exactly zero to every sample.
            continue
        scale = lay.spike_scale * inv_unit
        for seg in lay.segments:
            length = seg.hi - seg.lo + 1
            expect = length * lay.hit_prob
            if expect > GAUSSIANIZE_HITS:
                std = math.sqrt(seg.sum_pow(2)) * inv_unit
                plan.append(_PlanOp("normal", lane, coef=std))
                lane += 1
            elif seg.slope == 0.0:
                plan.append(_PlanOp("flat", lane, coef=scale * seg.v_mid,
                                    aux=lay.hit_prob, seg=seg))
                lane += 2
            else:
                plan.append(_PlanOp("ramp", lane, coef=scale,
                                    aux=lay.hit_prob, seg=seg,
                                    seg_id=seg_id, layer=lay))
                lane += 1
            seg_id += 1
    return plan


def _lane_uniforms(seed: int, lane: int, chunk_idx: int,
                   size: int) -> np.ndarray:
    rng = _stream(seed ^ _LANE_TAG, (lane << 32) | chunk_idx)
    # offset keeps inversion transforms off the 0/1 endpoints
    return rng.random(size) + 2.0 ** -54


def _distinct_positions(rng: np.random.Generator, length: int,
                        hits: int) -> np.ndarray:
    """`hits` distinct offsets in [0, length), order-deterministic."""
    if hits >= length:
        return np.arange(length)
    if hits > length // 2:
        excl = _distinct_positions(rng, length, length - hits)
        keep = np.ones(length, dtype=bool)
        keep[excl] = False
        return np.nonzero(keep)[0]
    got = np.unique(rng.integers(0, length, size=hits))
    while got.size < hits:
        extra = rng.integers(0, length, size=hits - got.size)
        got = np.unique(np.concatenate([got, extra]))
    return got


def _aggregate_chunk(plan, seed, chunk_idx, start, size):
    out = np.zeros(size)
    for op in plan:
        if op.op == "normal":
            if op.coef == 0.0:
                continue
            u = _lane_uniforms(seed, op.lane, chunk_idx, size)
            out += op.coef * ndtri(u)
        elif op.op == "flat":
            length = op.seg.hi - op.seg.lo + 1
            u1 = _lane_uniforms(seed, op.lane, chunk_idx, size)
            hits = binom.ppf(u1, length, op.aux)
            u2 = _lane_uniforms(seed, op.lane + 1, chunk_idx, size)
            pos = binom.ppf(u2, hits, 0.5)
            out += op.coef * (2.0 * pos - hits)
        else:  # ramp
            length = op.seg.hi - op.seg.lo + 1
            u1 = _lane_uniforms(seed, op.lane, chunk_idx, size)
            hits = binom.ppf(u1, length, op.aux).astype(np.int64)
            for i in np.nonzero(hits)[0]:
                h = int(hits[i])
                rng = _stream(seed ^ _HIT_TAG,
                              ((start + int(i)) << 24) | op.seg_id)
                offs = _distinct_positions(rng, length, h)
                signs = 2.0 * rng.integers(0, 2, size=h) - 1.0
                vals = (op.seg.v_mid
                        + op.seg.slope * (op.seg.lo + offs - op.seg.mid))
                out[i] += op.coef * float(np.dot(vals, signs))
    return out


def _site_chunk(profile, denses, seed, chunk_idx, start, size, inv_unit):
    layers = profile.layers
    out = np.empty(size)
    for i in range(size):
        rng = _stream(seed ^ _SITE_TAG, start + i)
        total = 0.0
        for lay, (lo, g) in zip(layers, denses):
            u = rng.random(g.size)
            if lay.block.parity is BlockParity.GAUSSIAN:
                total += float(np.dot(g, ndtri(u + 2.0 ** -54)))
            else:
                eps_half = 0.5 * lay.hit_prob
                x = np.where(u < eps_half, 1.0,
                             np.where(u >= 1.0 - eps_half, -1.0, 0.0))
                total += float(np.dot(g, x))
        out[i] = total * inv_unit
    return out


def sample_batch(params: SequenceParams, N: int, count: int, seed: int,
                 kind: SampleKind = SampleKind.FULL_SN, *,
                 normalized: bool = False, mode: str = "aggregate",
                 workers: int = 1, chunk: int = CHUNK,
                 profile: CoordinateProfile | None = None,
                 moments: ExactMoments | None = None) -> SampleBatch:
    """Draw `count` values of the horizon sum (or its flat-copy stand-in).

    Identical arguments give byte-identical batches for any `workers`.
    """
    if count < 1:
        raise ParamsError("count must be positive", count=count)
    kind = SampleKind(kind)
    profile = profile or build_profile(params, N, kind, moments)
    if mode == "aggregate":
        plan = _build_plan(profile, normalized)

        def job(args):
            ci, start, size = args
            return _aggregate_chunk(plan, seed, ci, start, size)
    elif mode == "site":
        if any(lay.segments is None for lay in profile.layers):
            raise ParamsError("site mode needs full site resolution")
        coords = sum(lay.segments[-1].hi - lay.segments[0].lo + 1
                     for lay in profile.layers)
        if count * coords > SITE_DRAW_BUDGET:
            raise WorkBudgetError("site mode draw count too large",
                                  estimated_ops=count * coords,
                                  budget=SITE_DRAW_BUDGET)
        denses = [profile.dense_g(lay.block.index)
                  for lay in profile.layers]
        b_sq = profile.moments.normalizer_sq(N)
        if normalized and b_sq <= 0.0:
            raise ParamsError("normalization needs sub-horizon scales")
        inv_unit = 1.0 / math.sqrt(b_sq * float(N)) if normalized else 1.0

        def job(args):
            ci, start, size = args
            return _site_chunk(profile, denses, seed, ci, start, size,
                               inv_unit)
    else:
        raise ParamsError("unknown sampling mode", mode=mode)

    jobs = [(ci, ci * chunk, min(chunk, count - ci * chunk))
            for ci in range((count + chunk - 1) // chunk)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, jobs))
    else:
        parts = [job(j) for j in jobs]
    values = np.concatenate(parts) if parts else np.empty(0)
    return SampleBatch(seed=seed, N=N, count=count, kind=kind,
                       normalized=normalized, values=values)


def dichotomy_samples(params: SequenceParams, horizons, count: int,
                      seed: int, *, mode: str = "aggregate",
                      workers: int = 1) -> dict:
    """Normalized full-sum batches at complete-block horizons.

    Per-horizon seeds are derived from the shared seed and the block
    index, so adding horizons never perturbs existing batches.
    """
    complete = {b.horizon: b for b in params.blocks if b.complete}
    out = {}
    for N in horizons:
        blk = complete.get(N)
        if blk is None:
            raise ParamsError("horizon is not a complete block endpoint",
                              horizon_log2=int(N).bit_length() - 1)
        sub = derive_seed(seed, blk.index)
        out[N] = sample_batch(params, N, count, sub, SampleKind.FULL_SN,
                              normalized=True, mode=mode, workers=workers)
    return out


def model_tail_context(params: SequenceParams) -> float:
    """Weight mass of scales beyond kmax, sum a_k/(k 2^{k/2}).

    The truncated model is exact in itself; this reports how much the
    infinite model's coefficient mass the truncation ignores, extending
    the final weight value beyond the grid.
    """
    k0 = params.kmax
    a_last = float(params.weights.a(k0)) if k0 >= 1 else 1.0
    return math.fsum(a_last / (k0 + j) * 2.0 ** (-0.5 * (k0 + j))
                     for j in range(1, 129))
