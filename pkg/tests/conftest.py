import pytest

from kashf.ecosystem import (
    HB_CATEGORY,
    ROLE_BIDDER,
    ROLE_TRACKER,
    BidderProfile,
    Organization,
    Scenario,
    ScenarioConfig,
    SharingEdge,
    Site,
    generate_scenario,
)
from kashf.experiment import run_campaign
from kashf.money import to_micro


def make_world(
    trackers=("T1", "T2", "T3"),
    bidders=("B1", "B2"),
    sites=(),
    edges=(),
    base_cpm=0.20,
    affinity=None,
    uplift=None,
    zero_rates=(0.0, 0.0),
    noise_sigma=0.0,
):
    """Hand-built scenario for targeted protocol tests.

    `sites` entries are (domain, category, tracker-name tuple, hb_enabled);
    `edges` entries are (tracker, bidder, channel, strength).
    """
    names = list(trackers) + [b for b in bidders if b not in trackers]
    roles = {t: {ROLE_TRACKER} for t in trackers}
    for b in bidders:
        roles.setdefault(b, set()).add(ROLE_BIDDER)
    orgs = tuple(
        Organization(id=i, name=n, roles=frozenset(roles[n]))
        for i, n in enumerate(names)
    )
    ids = {o.name: o.id for o in orgs}
    profiles = tuple(
        BidderProfile(
            org=b,
            org_id=ids[b],
            base_cpm_micro=to_micro(base_cpm),
            category_affinity=dict(affinity or {}),
            intent_multiplier=dict(uplift or {}),
            zero_rate_no_intent=zero_rates[0],
            zero_rate_intent=zero_rates[1],
            noise_sigma=noise_sigma,
            latency_ms_range=(10, 20),
        )
        for b in bidders
    )
    config = ScenarioConfig(tracker_orgs=tuple(trackers), bidder_orgs=tuple(bidders))
    return Scenario(
        config=config,
        master_seed=0,
        organizations=orgs,
        sites=tuple(
            Site(domain=d, category=c, trackers=tuple(t), hb_enabled=hb)
            for (d, c, t, hb) in sites
        ),
        bidder_profiles=profiles,
        sharing_graph=tuple(
            SharingEdge(tracker=t, bidder=b, channel=ch, strength=s)
            for (t, b, ch, s) in edges
        ),
    )


BASIC_SITES = (
    ("health-a.example", "Health", ("T1",), False),
    ("health-b.example", "Health", ("T1", "T2"), False),
    ("health-c.example", "Health", ("T2",), False),
    ("sports-a.example", "Sports", ("T2", "T3"), False),
    ("hotels.com", "Intent", ("T1", "T3"), False),
    ("zales.com", "Intent", ("T2",), False),
    ("jamesedition.com", "Intent", (), False),
    ("luxuryrealestate.com", "Intent", ("T1",), False),
    ("hb00.example", HB_CATEGORY, ("T3",), True),
    ("hb01.example", HB_CATEGORY, (), True),
)


@pytest.fixture(scope="session")
def default_scenario():
    return generate_scenario(ScenarioConfig(), 1)


@pytest.fixture(scope="session")
def small_dataset(default_scenario):
    """A modest noisy campaign shared by analytics/inference tests."""
    return run_campaign(default_scenario, 400, 2024)
