import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kashf.auction import (
    Bid,
    apply_price_granularity,
    compute_bid,
    run_hb_auction,
    run_rtb_waterfall,
)
from kashf.ecosystem import BidderProfile, ObservationSet
from kashf.money import to_micro


def profile(base=0.20, affinity=None, uplift=None, zero=(0.0, 0.0), sigma=0.0):
    return BidderProfile(
        org="B",
        org_id=1,
        base_cpm_micro=to_micro(base),
        category_affinity=affinity or {},
        intent_multiplier=uplift or {},
        zero_rate_no_intent=zero[0],
        zero_rate_intent=zero[1],
        noise_sigma=sigma,
        latency_ms_range=(10, 20),
    )


def knowledge(*cats):
    o = ObservationSet()
    for c in cats:
        o.record(c)
    return o


class TestComputeBid:
    def test_empty_knowledge_bids_base(self):
        bid = compute_bid(profile(0.20), knowledge(), np.random.default_rng(0))
        assert bid.value_micro == to_micro(0.20)

    def test_category_affinity_scales_bid(self):
        p = profile(0.20, affinity={"Health": 5.8})
        bid = compute_bid(p, knowledge("Health"), np.random.default_rng(0))
        assert bid.value_micro == to_micro(1.16)

    def test_intent_multiplier_product(self):
        p = profile(0.20, affinity={"Health": 5.8}, uplift={"Health": 5.96})
        bid = compute_bid(p, knowledge("Health", "Intent"), np.random.default_rng(0))
        # product oracle: 0.20 * 5.8 * 5.96 = 6.9136
        assert bid.value_micro == to_micro(6.9136)

    def test_noise_free_is_deterministic(self):
        p = profile(0.33, affinity={"Games": 1.7})
        values = {
            compute_bid(p, knowledge("Games"), np.random.default_rng(s)).value_micro
            for s in range(10)
        }
        assert values == {round(to_micro(0.33) * 1.7)}

    def test_zero_rate_one_always_zero(self):
        p = profile(0.20, zero=(1.0, 1.0))
        bid = compute_bid(p, knowledge("Health"), np.random.default_rng(4))
        assert bid.value_micro == 0

    def test_intent_dependent_zero_rate(self):
        p = profile(0.20, zero=(1.0, 0.0))
        rng = np.random.default_rng(4)
        assert compute_bid(p, knowledge("Health"), rng).value_micro == 0
        assert compute_bid(p, knowledge("Health", "Intent"), rng).value_micro > 0

    def test_latency_within_profile_range(self):
        p = profile()
        for s in range(20):
            bid = compute_bid(p, knowledge(), np.random.default_rng(s))
            assert 10 <= bid.latency_ms <= 20

    def test_lognormal_noise_preserves_median(self):
        p = profile(0.40, sigma=0.5)
        rng = np.random.default_rng(8)
        values = [compute_bid(p, knowledge(), rng).value_micro for _ in range(4001)]
        median = sorted(values)[2000]
        assert abs(median - to_micro(0.40)) / to_micro(0.40) < 0.05


class TestHbAuction:
    def test_highest_bid_wins_first_price(self):
        out = run_hb_auction([Bid(1, 300_000, 10), Bid(2, 500_000, 10)], 100, 0)
        assert out.winner == 2
        assert out.clearing_price_micro == 500_000

    def test_timeout_filters_late_bids(self):
        out = run_hb_auction([Bid(1, 300_000, 10), Bid(2, 500_000, 200)], 100, 0)
        assert out.winner == 1
        assert out.clearing_price_micro == 300_000
        assert [b.bidder for b in out.discarded_late] == [2]

    def test_floor_rejection(self):
        out = run_hb_auction([Bid(1, 300_000, 10), Bid(2, 500_000, 10)], 100, 1_000_000)
        assert out.winner is None

    def test_tie_breaks_to_lowest_org_id(self):
        out = run_hb_auction([Bid(7, 500_000, 10), Bid(3, 500_000, 10)], 100, 0)
        assert out.winner == 3

    @given(
        st.lists(
            st.tuples(st.integers(0, 19), st.integers(0, 2_000_000)),
            min_size=1,
            max_size=8,
        )
    )
    @settings(max_examples=200, deadline=None)
    def test_first_price_identity(self, raw):
        bids = [Bid(i, v, 10) for i, (_, v) in enumerate(raw)]
        out = run_hb_auction(bids, 100, 0)
        assert out.winner is not None
        assert out.clearing_price_micro == max(b.value_micro for b in bids)

    @given(
        st.lists(st.integers(1, 200), min_size=2, max_size=6, unique=True),
        st.integers(2, 7),
    )
    @settings(max_examples=200, deadline=None)
    def test_winner_invariant_under_scaling(self, cents, factor):
        bids = [Bid(i, c * 10_000, 10) for i, c in enumerate(cents)]
        scaled = [Bid(i, c * 10_000 * factor, 10) for i, c in enumerate(cents)]
        assert (
            run_hb_auction(bids, 100, 0).winner
            == run_hb_auction(scaled, 100, 0).winner
        )


class TestRtbWaterfall:
    def test_single_tier_second_price(self):
        out = run_rtb_waterfall([[Bid(1, 300_000), Bid(2, 500_000)]], 0, 10_000, 1.0)
        assert out.winner == 2
        assert out.clearing_price_micro == 310_000

    def test_waterfall_trace_exhaustion(self):
        # tier 1 fails the floor; tier 2 discounted below it as well
        tiers = [[Bid(1, 400_000)], [Bid(2, 600_000)]]
        out = run_rtb_waterfall(tiers, 500_000, 10_000, 0.8)
        assert out.winner is None

    def test_waterfall_lower_tier_wins_after_discount(self):
        tiers = [[Bid(1, 400_000)], [Bid(2, 700_000)]]
        out = run_rtb_waterfall(tiers, 500_000, 10_000, 0.8)
        assert out.winner == 2
        assert out.clearing_price_micro == min(560_000, 0 + 10_000)

    def test_hb_price_at_least_rtb_price(self):
        rng = np.random.default_rng(13)
        for _ in range(300):
            values = rng.integers(1, 300, size=rng.integers(1, 7)) * 10_000
            bids = [Bid(i, int(v), 10) for i, v in enumerate(values)]
            hb = run_hb_auction(bids, 100, 0)
            rtb = run_rtb_waterfall([bids], 0, 10_000, 1.0)
            assert hb.clearing_price_micro >= rtb.clearing_price_micro - 10_000
            assert hb.clearing_price_micro >= rtb.clearing_price_micro

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            run_rtb_waterfall([[Bid(1, 100)]], 0, 0, 1.0)
        with pytest.raises(ValueError):
            run_rtb_waterfall([[Bid(1, 100)]], 0, 10_000, 1.5)


class TestPriceGranularity:
    def test_below_floor_rounds_to_zero(self):
        assert apply_price_granularity(to_micro(0.04), to_micro(0.05)) == 0

    def test_boundary_inclusive(self):
        assert apply_price_granularity(to_micro(0.05), to_micro(0.05)) == to_micro(0.05)

    def test_zero_fixed_point(self):
        assert apply_price_granularity(0, to_micro(0.77)) == 0
        assert apply_price_granularity(0, 0) == 0
