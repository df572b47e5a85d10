import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cltlab.blocks import BlockParity, default_params
from cltlab.engine import ExactMoments
from cltlab.errors import ParamsError, WorkBudgetError
from cltlab.reference import count_pairs
from cltlab.simulate import (SampleKind, derive_seed, dichotomy_samples,
                             draw_coordinate, sample_batch, trapezoid_weight)


def desk_params():
    return default_params(kmax=14, rho=4.0)


@given(st.integers(0, 7), st.integers(-300, 300), st.integers(1, 200))
def test_trapezoid_weight_counts_pairs(k, m, N):
    assert trapezoid_weight(k, m, N) == count_pairs(1 << k, m, N)


def test_derive_seed_is_stable_and_spread():
    assert derive_seed(745, 3) == derive_seed(745, 3)
    seen = {derive_seed(s, salt) for s in range(4) for salt in range(32)}
    assert len(seen) == 128


def test_draw_coordinate_frequencies():
    params = desk_params()
    spike = params.blocks[0]
    assert spike.parity is BlockParity.THREE_VALUED
    rng = np.random.default_rng(11)
    n = 200_000
    vals = np.array([draw_coordinate(spike, rng) for _ in range(n)])
    assert set(np.unique(vals)) <= {-1.0, 0.0, 1.0}
    p = 0.5 / spike.horizon            # per sign
    for sign in (1.0, -1.0):
        freq = float(np.mean(vals == sign))
        assert abs(freq - p) < 5.0 * math.sqrt(p * (1 - p) / n)
    gauss = params.blocks[1]
    g = np.array([draw_coordinate(gauss, rng) for _ in range(20_000)])
    assert abs(g.mean()) < 0.05 and abs(g.var() - 1.0) < 0.05


def test_worker_count_never_changes_bytes():
    params = desk_params()
    base = sample_batch(params, 1 << 8, 10_000, 745, workers=1)
    for workers in (2, 8):
        again = sample_batch(params, 1 << 8, 10_000, 745, workers=workers)
        assert np.array_equal(base.values, again.values)
    # count straddling a chunk boundary, still identical
    odd = sample_batch(params, 1 << 8, 4097, 9, workers=3)
    one = sample_batch(params, 1 << 8, 4097, 9, workers=1)
    assert np.array_equal(odd.values, one.values)
    assert odd.count == odd.values.size == 4097


def test_full_sum_variance_matches_engine():
    params = desk_params()
    em = ExactMoments(params)
    N, n = 1 << 8, 40_000
    batch = sample_batch(params, N, n, 745, moments=em)
    sig2 = em.sigma_sq(N)
    k4 = em.fourth_cumulant(N)
    band = 4.0 * math.sqrt((k4 + 2.0 * sig2 ** 2) / n)
    assert abs(batch.variance() - sig2) < band
    assert abs(batch.mean()) < 4.0 * math.sqrt(sig2 / n)


def test_normalized_iid_sum_has_unit_variance():
    params = desk_params()
    batch = sample_batch(params, 1 << 8, 40_000, 7,
                         kind=SampleKind.APPROX_IID_SUM, normalized=True)
    # flat-copy sum: normalized variance is exactly 1, so only the
    # estimator noise is in play
    assert abs(batch.variance() - 1.0) < 0.05
    assert abs(batch.mean()) < 0.05


def test_site_mode_agrees_with_aggregate_in_law():
    params = default_params(kmax=12, rho=4.0)
    em = ExactMoments(params)
    N, n = 1 << 6, 10_000
    agg = sample_batch(params, N, n, 3, moments=em)
    site = sample_batch(params, N, n, 3, mode="site", moments=em)
    assert not np.array_equal(agg.values, site.values)
    sig2 = em.sigma_sq(N)
    k4 = em.fourth_cumulant(N)
    band = 4.0 * math.sqrt((k4 + 2.0 * sig2 ** 2) / n)
    for batch in (agg, site):
        assert abs(batch.variance() - sig2) < band


def test_site_mode_budget_and_validation():
    params = desk_params()
    with pytest.raises(WorkBudgetError):
        sample_batch(params, 1 << 8, 1 << 14, 1, mode="site")
    with pytest.raises(ParamsError):
        sample_batch(params, 1 << 8, 10, 1, mode="bogus")
    with pytest.raises(ParamsError):
        sample_batch(params, 1 << 8, 0, 1)


def test_astronomic_horizon_sampling():
    params = default_params(kmax=40_000_000, rho=4.0)
    N = params.blocks[1].horizon           # far beyond float range
    assert N.bit_length() - 1 == 37_605_530
    batch = sample_batch(params, N, 500, 5, normalized=True)
    assert batch.values.size == 500
    assert np.all(np.isfinite(batch.values))
    assert batch.horizon_log2 == 37_605_530
    text = batch.to_csv()
    assert "# horizon_log2 = 37605530" in text
    assert "# horizon =" not in text
    assert "horizon" not in batch.summary() or \
        "horizon_log2" in batch.summary()
    with pytest.raises(ParamsError):
        sample_batch(params, N, 10, 5, mode="site")


def test_csv_round_and_header():
    params = desk_params()
    batch = sample_batch(params, 1 << 6, 5, 42, normalized=True)
    text = batch.to_csv(params)
    lines = text.strip().split("\n")
    assert "# seed = 42" in lines
    assert "# horizon = 64" in lines
    assert "# normalized = true" in lines
    assert any(ln.startswith("# params = ") for ln in lines)
    assert lines[-6] == "sample_index,value"
    # 1 column line + 5 data rows after the comment header
    assert len([ln for ln in lines if not ln.startswith("#")]) == 6


def test_dichotomy_samples_stability():
    params = default_params(kmax=20, rho=4.0)
    odd = params.blocks[0].horizon
    assert params.blocks[0].complete
    one = dichotomy_samples(params, [odd], 2_000, 745)
    with_more = dichotomy_samples(params, [odd], 2_000, 745, workers=4)
    assert np.array_equal(one[odd].values, with_more[odd].values)
    with pytest.raises(ParamsError):
        dichotomy_samples(params, [odd * 2], 100, 745)
