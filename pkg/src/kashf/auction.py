"""Bid generation and the two auction mechanics.

Header bidding runs a unified first-price auction over all on-time bids;
the waterfall runs tiered second-price auctions where lower tiers see
progressively discounted bids. All operations are pure functions of their
inputs plus an explicitly passed RNG, so they are safe to call
concurrently with per-call generators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ecosystem import BidderProfile, ObservationSet


@dataclass(frozen=True)
class Bid:
    bidder: int            # org id, used for deterministic tie-breaking
    value_micro: int       # CPM in micro-USD; 0 is a legal zero bid
    latency_ms: int = 0

    def __post_init__(self):
        if self.value_micro < 0:
            raise ValueError("bid value must be non-negative")


@dataclass(frozen=True)
class AuctionOutcome:
    winner: int | None
    clearing_price_micro: int
    all_bids: tuple[Bid, ...]
    discarded_late: tuple[Bid, ...] = field(default_factory=tuple)


def compute_bid(
    profile: BidderProfile,
    knowledge: ObservationSet,
    rng: np.random.Generator,
) -> Bid:
    """One bidder's response given whatever knowledge reached it.

    With no knowledge the bidder quotes its base CPM. Otherwise the base is
    scaled by the affinity of the dominant observed category, multiplied by
    the category's intent uplift when the intent flag arrived, and jittered
    by lognormal noise exp(sigma * g). The zero-bid draw (probability
    depends on whether intent is visible) happens first and short-circuits
    to a zero-value bid. Latency is uniform over the profile's range.

    The draw order (zero, noise, latency) is fixed so a given RNG stream
    always produces the same bid.
    """
    zero_rate = (
        profile.zero_rate_intent if knowledge.has_intent else profile.zero_rate_no_intent
    )
    is_zero = rng.random() < zero_rate

    value = 0
    if not is_zero:
        dominant = knowledge.dominant_category()
        scaled = profile.base_cpm_micro * profile.affinity(dominant)
        if knowledge.has_intent:
            scaled *= profile.intent_uplift(dominant)
        if profile.noise_sigma > 0:
            scaled *= math.exp(profile.noise_sigma * rng.standard_normal())
        value = round(scaled)

    lo, hi = profile.latency_ms_range
    latency = int(rng.integers(lo, hi + 1))
    return Bid(bidder=profile.org_id, value_micro=value, latency_ms=latency)


def run_hb_auction(
    bids: list[Bid] | tuple[Bid, ...],
    timeout_ms: int,
    floor_micro: int = 0,
) -> AuctionOutcome:
    """Unified first-price auction: highest on-time bid at or above the
    floor wins and pays its own bid. Ties break toward the lowest org id."""
    on_time = [b for b in bids if b.latency_ms <= timeout_ms]
    late = [b for b in bids if b.latency_ms > timeout_ms]
    clearing = [b for b in on_time if b.value_micro >= floor_micro]
    if not clearing:
        return AuctionOutcome(
            winner=None,
            clearing_price_micro=0,
            all_bids=tuple(bids),
            discarded_late=tuple(late),
        )
    winner = min(clearing, key=lambda b: (-b.value_micro, b.bidder))
    return AuctionOutcome(
        winner=winner.bidder,
        clearing_price_micro=winner.value_micro,
        all_bids=tuple(bids),
        discarded_late=tuple(late),
    )


def run_rtb_waterfall(
    tiers: list[list[Bid]],
    floor_micro: int,
    increment_micro: int = 10_000,
    tier_discount: float = 1.0,
) -> AuctionOutcome:
    """Tiered second-price waterfall.

    Tier i sees every bid scaled by tier_discount**i. The first tier whose
    best scaled bid clears the floor wins; the winner pays
    min(own scaled bid, second-highest scaled bid + increment), the second
    price defaulting to zero when the winner is alone in the tier. A tied
    top pair therefore clears at the shared bid value. Exhausted tiers
    produce a winner-less outcome.
    """
    if increment_micro <= 0:
        raise ValueError("increment must be positive")
    if not (0.0 < tier_discount <= 1.0):
        raise ValueError("tier discount outside (0, 1]")

    all_bids = tuple(b for tier in tiers for b in tier)
    for index, tier in enumerate(tiers):
        if not tier:
            continue
        factor = tier_discount**index
        scaled = sorted(
            ((round(b.value_micro * factor), b) for b in tier),
            key=lambda pair: (-pair[0], pair[1].bidder),
        )
        top_value, top_bid = scaled[0]
        if top_value < floor_micro:
            continue
        second = scaled[1][0] if len(scaled) > 1 else 0
        price = min(top_value, second + increment_micro)
        return AuctionOutcome(
            winner=top_bid.bidder,
            clearing_price_micro=price,
            all_bids=all_bids,
        )
    return AuctionOutcome(winner=None, clearing_price_micro=0, all_bids=all_bids)


def apply_price_granularity(value_micro: int, granularity_floor_micro: int) -> int:
    """Publisher-side rounding: bids under the granularity floor become 0."""
    return 0 if value_micro < granularity_floor_micro else value_micro
