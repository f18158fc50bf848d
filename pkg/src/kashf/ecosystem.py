"""Simulated ad ecosystem: organizations, sites, bidder profiles, and the
ground-truth tracker-to-bidder sharing graph.

A :class:`Scenario` is a frozen, seeded world. Everything downstream
(persona building, bid collection, inference) treats it as immutable, so
scenarios can be shared freely across concurrent experiment workers.

Knowledge moves through the world only along sharing edges: a tracker
observes site visits, and :func:`reachable_knowledge` unions those
observations into whatever a bidder is allowed to see.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .money import to_micro
from .seeds import spawn_rng

ROLE_TRACKER = "Tracker"
ROLE_BIDDER = "Bidder"

CHANNEL_CLIENT = "ClientSide"
CHANNEL_SERVER = "ServerSide"

# Persona category universe. "Control" is a persona with no history, not a
# site category; "Intent" and "HBPublisher" are site categories that never
# appear as persona categories.
PERSONA_CATEGORIES = (
    "Adult", "Art", "Business", "Computers", "Games", "Health", "Home",
    "Kids", "News", "Recreation", "Reference", "Regional", "Science",
    "Shopping", "Society", "Sports",
)
CONTROL_PERSONA = "Control"
INTENT_CATEGORY = "Intent"
HB_CATEGORY = "HBPublisher"

INTENT_SITES = (
    "hotels.com", "zales.com", "jamesedition.com", "luxuryrealestate.com",
)

# The default tracker universe: the twenty most widely deployed tracking
# organizations, grouped at the organization level (all domains an
# organization owns count as that organization).
DEFAULT_TRACKER_ORGS = (
    "Adobe", "Alibaba", "Alphabet", "AppNexus", "Automattic", "Baidu",
    "Comscore", "Criteo", "DoubleVerify", "ExoClick", "Facebook",
    "Integral Ad Science", "Microsoft", "Oracle", "PubMatic", "Quantcast",
    "Sovrn", "Twitter", "Verizon", "Yandex",
)

DEFAULT_BIDDER_ORGS = ("AppNexus", "Rubicon", "IX", "OpenX", "PubMatic")

# Calibrated bidding behavior for the five default bidders. Values are the
# noise-free CPMs (USD) each bidder produces for a persona of the given
# category; the "control" value is the bid with no knowledge at all.
# Calibration targets: per-category medians, the equal-weight Health-row
# average of exactly 0.59 USD, and per-category intent uplift ratios.
_CONTROL_CPM_USD = {
    "AppNexus": 0.20, "Rubicon": 0.26, "IX": 0.28, "OpenX": 0.44,
    "PubMatic": 0.37,
}

_CATEGORY_CPM_USD = {
    #             AppNexus Rubicon   IX   OpenX  PubMatic
    "Adult":      (0.21,   0.43,   0.25,  0.34,  0.33),
    "Art":        (0.34,   0.45,   0.29,  0.37,  0.36),
    "Business":   (0.28,   0.45,   0.28,  0.30,  0.51),
    "Computers":  (0.20,   0.75,   0.21,  0.55,  0.73),
    "Games":      (0.21,   0.33,   0.21,  0.34,  0.25),
    "Health":     (0.19,   1.16,   0.25,  0.86,  0.49),
    "Home":       (0.20,   0.39,   0.24,  0.28,  0.28),
    "Kids":       (0.20,   0.41,   0.18,  0.47,  0.30),
    "News":       (0.19,   0.61,   0.24,  0.41,  0.33),
    "Recreation": (0.31,   0.67,   0.23,  0.36,  0.44),
    "Reference":  (0.18,   0.53,   0.20,  0.58,  0.52),
    "Regional":   (0.23,   0.43,   0.33,  0.73,  0.35),
    "Science":    (0.30,   0.70,   0.28,  0.44,  0.58),
    "Shopping":   (0.40,   0.56,   0.45,  0.60,  0.47),
    "Society":    (0.22,   0.41,   0.27,  0.45,  0.37),
    "Sports":     (0.19,   0.35,   0.13,  0.23,  0.30),
}

# Intent-to-no-intent uplift per category. Raw ratios below 1.0 are clamped
# to 1.0 when profiles are built: demonstrated intent never lowers a bid.
# Like IX, OpenX carries several large uplifts so its intent-side bids span
# a genuine High class instead of one extreme outlier.
_INTENT_RATIO = {
    "Adult":      (0.97, 0.97, 2.10, 1.00, 0.95),
    "Art":        (1.04, 1.48, 1.45, 1.20, 1.32),
    "Business":   (1.02, 1.09, 2.66, 1.45, 0.84),
    "Computers":  (1.06, 1.19, 2.38, 5.60, 0.71),
    "Games":      (1.20, 1.83, 1.81, 1.10, 1.80),
    "Health":     (1.85, 1.24, 1.34, 5.96, 1.21),
    "Home":       (1.31, 0.92, 1.50, 1.15, 1.21),
    "Kids":       (1.31, 1.51, 6.00, 3.90, 1.49),
    "News":       (1.05, 1.14, 3.57, 1.30, 0.95),
    "Recreation": (1.76, 1.09, 1.04, 1.75, 0.86),
    "Reference":  (1.01, 1.06, 2.80, 1.05, 0.60),
    "Regional":   (1.04, 2.24, 1.46, 4.30, 0.83),
    "Science":    (1.11, 1.02, 0.81, 6.20, 0.92),
    "Shopping":   (1.18, 1.42, 1.55, 5.20, 1.00),
    "Society":    (1.30, 2.15, 2.52, 1.25, 0.92),
    "Sports":     (1.13, 3.00, 3.69, 2.85, 1.57),
}

# Zero-bid propensities (no-intent arm, intent arm). Chosen so that with
# five equally active bidders the overall zero-bid share lands near 21.2%
# and PubMatic's near 68.2%, with a clear drop on the intent arm, while
# keeping every bidder's bid classes predictable-but-not-degenerate.
_ZERO_RATES = {
    "AppNexus": (0.032, 0.018),
    "Rubicon":  (0.150, 0.082),
    "IX":       (0.157, 0.085),
    "OpenX":    (0.150, 0.082),
    "PubMatic": (0.704, 0.660),
}

DEFAULT_NOISE_SIGMA = 0.3
DEFAULT_LATENCY_MS = (10, 120)


class ScenarioError(ValueError):
    """Raised for configurations that cannot produce a valid scenario."""


@functools.lru_cache(maxsize=None)
def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")


@functools.lru_cache(maxsize=None)
def org_domain(name: str) -> str:
    return f"{_slug(name)}.example"


class ObservationSet:
    """What one tracker has seen of one persona.

    Holds per-category visit counts plus the intent flag (stored as a count
    under the "Intent" key). Only the sixteen persona categories compete
    for dominance; "Intent" and "HBPublisher" entries never do.
    """

    __slots__ = ("counts",)

    def __init__(self, counts: Counter | None = None):
        self.counts: Counter = Counter(counts) if counts else Counter()

    def record(self, category: str, times: int = 1) -> None:
        self.counts[category] += times

    def merge(self, other: "ObservationSet") -> None:
        self.counts.update(other.counts)

    @property
    def has_intent(self) -> bool:
        return self.counts.get(INTENT_CATEGORY, 0) > 0

    def is_empty(self) -> bool:
        return not any(v > 0 for v in self.counts.values())

    def as_set(self) -> frozenset[str]:
        return frozenset(k for k, v in self.counts.items() if v > 0)

    def dominant_category(self) -> str | None:
        """Most-visited persona category; ties break by category name."""
        best = None
        for cat in PERSONA_CATEGORIES:
            n = self.counts.get(cat, 0)
            if n > 0 and (best is None or n > self.counts[best]):
                best = cat
        return best

    def copy(self) -> "ObservationSet":
        return ObservationSet(self.counts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObservationSet):
            return NotImplemented
        return {k: v for k, v in self.counts.items() if v} == {
            k: v for k, v in other.counts.items() if v
        }

    def __repr__(self) -> str:
        return f"ObservationSet({dict(self.counts)!r})"


@dataclass(frozen=True)
class Organization:
    id: int
    name: str
    roles: frozenset[str]

    def __post_init__(self):
        if not self.roles:
            raise ScenarioError(f"organization {self.name!r} has no roles")


@dataclass(frozen=True)
class Site:
    domain: str
    category: str
    trackers: tuple[str, ...]
    hb_enabled: bool = False

    def __post_init__(self):
        if self.hb_enabled and self.category != HB_CATEGORY:
            raise ScenarioError(f"HB site {self.domain} must be {HB_CATEGORY}")


@dataclass(frozen=True)
class SharingEdge:
    tracker: str
    bidder: str
    channel: str
    strength: float = 1.0

    def __post_init__(self):
        if self.channel not in (CHANNEL_CLIENT, CHANNEL_SERVER):
            raise ScenarioError(f"bad channel {self.channel!r}")
        if not (0.0 < self.strength <= 1.0):
            raise ScenarioError(f"edge strength {self.strength} outside (0, 1]")


@dataclass(frozen=True)
class BidderProfile:
    org: str
    org_id: int
    base_cpm_micro: int
    category_affinity: dict[str, float]
    intent_multiplier: dict[str, float]
    zero_rate_no_intent: float
    zero_rate_intent: float
    noise_sigma: float
    latency_ms_range: tuple[int, int]

    def __post_init__(self):
        if self.base_cpm_micro <= 0:
            raise ScenarioError(f"{self.org}: base CPM must be positive")
        for rate in (self.zero_rate_no_intent, self.zero_rate_intent):
            if not (0.0 <= rate <= 1.0):
                raise ScenarioError(f"{self.org}: zero rate {rate} outside [0,1]")
        if self.noise_sigma < 0:
            raise ScenarioError(f"{self.org}: negative noise sigma")
        if any(a <= 0 for a in self.category_affinity.values()):
            raise ScenarioError(f"{self.org}: affinities must be positive")
        if any(m < 1.0 for m in self.intent_multiplier.values()):
            raise ScenarioError(f"{self.org}: intent multipliers must be >= 1")

    def affinity(self, category: str | None) -> float:
        if category is None:
            return 1.0
        return self.category_affinity.get(category, 1.0)

    def intent_uplift(self, category: str | None) -> float:
        if category is None:
            return 1.0
        return self.intent_multiplier.get(category, 1.0)


@dataclass(frozen=True)
class ScenarioConfig:
    tracker_orgs: tuple[str, ...] = DEFAULT_TRACKER_ORGS
    bidder_orgs: tuple[str, ...] = DEFAULT_BIDDER_ORGS
    sites_per_category: int = 50
    hb_site_count: int = 25
    tracker_presence_prob: float = 0.6
    edges_per_bidder: int = 3
    client_edges_per_bidder: int = 1
    edge_strength: float = 1.0
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    latency_ms_range: tuple[int, int] = DEFAULT_LATENCY_MS
    hb_timeout_ms: int = 3000
    hb_floor_micro: int = 0
    price_granularity_micro: int = 0
    # When set, used verbatim instead of drawing a random sharing graph.
    # Entries are (tracker, bidder, channel, strength) tuples.
    sharing_edges: tuple[tuple[str, str, str, float], ...] | None = None

    def validate(self) -> None:
        if not self.bidder_orgs:
            raise ScenarioError("config has zero bidders")
        if self.hb_site_count < 1:
            raise ScenarioError("config has zero HB sites")
        if not self.tracker_orgs:
            raise ScenarioError("config has zero tracker organizations")
        if len(set(self.tracker_orgs)) != len(self.tracker_orgs):
            raise ScenarioError("duplicate tracker organization names")
        if len(set(self.bidder_orgs)) != len(self.bidder_orgs):
            raise ScenarioError("duplicate bidder organization names")
        if self.sites_per_category < 1:
            raise ScenarioError("need at least one site per category")
        if not (0.0 < self.tracker_presence_prob <= 1.0):
            raise ScenarioError("tracker presence probability outside (0, 1]")
        if self.sharing_edges is None:
            if self.edges_per_bidder < 1:
                raise ScenarioError("every bidder needs at least one inbound edge")
            if self.edges_per_bidder > len(self.tracker_orgs):
                raise ScenarioError("more edges per bidder than tracker orgs")
            if not (0 <= self.client_edges_per_bidder <= self.edges_per_bidder):
                raise ScenarioError("client edge count outside [0, edges_per_bidder]")
            if not (0.0 < self.edge_strength <= 1.0):
                raise ScenarioError("edge strength outside (0, 1]")


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    master_seed: int
    organizations: tuple[Organization, ...]
    sites: tuple[Site, ...]
    bidder_profiles: tuple[BidderProfile, ...]
    sharing_graph: tuple[SharingEdge, ...]

    # Derived lookup tables, excluded from equality/serialization.
    _by_domain: dict = field(init=False, repr=False, compare=False, default_factory=dict)
    _inbound: dict = field(init=False, repr=False, compare=False, default_factory=dict)
    _profile_by_org: dict = field(init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        self._by_domain.update({s.domain: s for s in self.sites})
        self._profile_by_org.update({p.org: p for p in self.bidder_profiles})
        for edge in self.sharing_graph:
            self._inbound.setdefault(edge.bidder, []).append(edge)

    @property
    def tracker_names(self) -> tuple[str, ...]:
        return self.config.tracker_orgs

    @property
    def bidder_names(self) -> tuple[str, ...]:
        return tuple(p.org for p in self.bidder_profiles)

    @property
    def hb_sites(self) -> tuple[Site, ...]:
        return tuple(s for s in self.sites if s.hb_enabled)

    def site(self, domain: str) -> Site:
        try:
            return self._by_domain[domain]
        except KeyError:
            raise ScenarioError(f"unknown site domain {domain!r}") from None

    def category_sites(self, category: str) -> tuple[Site, ...]:
        return tuple(s for s in self.sites if s.category == category)

    def profile(self, bidder: str) -> BidderProfile:
        try:
            return self._profile_by_org[bidder]
        except KeyError:
            raise ScenarioError(f"unknown bidder {bidder!r}") from None

    def inbound_edges(self, bidder: str) -> tuple[SharingEdge, ...]:
        return tuple(self._inbound.get(bidder, ()))

    def noise_free_view(self) -> "Scenario":
        """Copy with multiplicative noise and zero-bid draws disabled."""
        quiet = tuple(
            dataclasses.replace(
                p, noise_sigma=0.0, zero_rate_no_intent=0.0, zero_rate_intent=0.0
            )
            for p in self.bidder_profiles
        )
        return dataclasses.replace(self, bidder_profiles=quiet)


def _build_profile(
    name: str, org_id: int, config: ScenarioConfig, rng: np.random.Generator
) -> BidderProfile:
    if name in _CONTROL_CPM_USD:
        col = DEFAULT_BIDDER_ORGS.index(name)
        base = to_micro(_CONTROL_CPM_USD[name])
        affinity = {
            cat: to_micro(row[col]) / base for cat, row in _CATEGORY_CPM_USD.items()
        }
        uplift = {cat: max(1.0, row[col]) for cat, row in _INTENT_RATIO.items()}
        zero_no, zero_int = _ZERO_RATES[name]
    else:
        # Unknown bidder name: synthesize a plausible profile from the
        # scenario stream so generalized worlds still work end to end.
        base = to_micro(float(rng.uniform(0.15, 0.50)))
        affinity = {
            cat: float(rng.uniform(0.8, 4.0)) for cat in PERSONA_CATEGORIES
        }
        uplift = {cat: float(rng.uniform(1.0, 3.5)) for cat in PERSONA_CATEGORIES}
        zero_no = float(rng.uniform(0.0, 0.3))
        zero_int = zero_no * float(rng.uniform(0.3, 1.0))
    return BidderProfile(
        org=name,
        org_id=org_id,
        base_cpm_micro=base,
        category_affinity=affinity,
        intent_multiplier=uplift,
        zero_rate_no_intent=zero_no,
        zero_rate_intent=zero_int,
        noise_sigma=config.noise_sigma,
        latency_ms_range=config.latency_ms_range,
    )


def generate_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Deterministically build a scenario from (config, seed).

    Tracker placement is an independent Bernoulli draw per (site, tracker),
    then patched so every tracker org appears on at least one site of every
    category (including intent and HB publisher sites), keeping every
    presence feature informative.
    """
    config.validate()
    rng = spawn_rng(seed, "scenario")

    orgs: list[Organization] = []
    roles: dict[str, set[str]] = {t: {ROLE_TRACKER} for t in config.tracker_orgs}
    for b in config.bidder_orgs:
        roles.setdefault(b, set()).add(ROLE_BIDDER)
    names = list(config.tracker_orgs) + [
        b for b in config.bidder_orgs if b not in config.tracker_orgs
    ]
    for i, name in enumerate(names):
        orgs.append(Organization(id=i, name=name, roles=frozenset(roles[name])))
    org_ids = {o.name: o.id for o in orgs}

    trackers = config.tracker_orgs
    n_track = len(trackers)

    def draw_tracker_sets(count: int) -> list[list[int]]:
        present = rng.random((count, n_track)) < config.tracker_presence_prob
        sets = [list(np.flatnonzero(present[i])) for i in range(count)]
        # Coverage patch: every tracker shows up somewhere in this category.
        for t in range(n_track):
            if not any(t in s for s in sets):
                sets[int(rng.integers(count))].append(t)
        return sets

    sites: list[Site] = []
    for cat in PERSONA_CATEGORIES:
        tracker_sets = draw_tracker_sets(config.sites_per_category)
        for i in range(config.sites_per_category):
            sites.append(
                Site(
                    domain=f"{_slug(cat)}-{i:03d}.example",
                    category=cat,
                    trackers=tuple(trackers[t] for t in sorted(tracker_sets[i])),
                )
            )
    intent_sets = draw_tracker_sets(len(INTENT_SITES))
    for i, domain in enumerate(INTENT_SITES):
        sites.append(
            Site(
                domain=domain,
                category=INTENT_CATEGORY,
                trackers=tuple(trackers[t] for t in sorted(intent_sets[i])),
            )
        )
    hb_sets = draw_tracker_sets(config.hb_site_count)
    for i in range(config.hb_site_count):
        sites.append(
            Site(
                domain=f"hb{i:02d}.example",
                category=HB_CATEGORY,
                trackers=tuple(trackers[t] for t in sorted(hb_sets[i])),
                hb_enabled=True,
            )
        )

    profiles = tuple(
        _build_profile(name, org_ids[name], config, rng)
        for name in config.bidder_orgs
    )

    if config.sharing_edges is not None:
        edges = tuple(
            SharingEdge(tracker=t, bidder=b, channel=c, strength=s)
            for (t, b, c, s) in config.sharing_edges
        )
        seen = set()
        for e in edges:
            if e.tracker not in org_ids or e.bidder not in org_ids:
                raise ScenarioError(f"edge references unknown org: {e}")
            if e.tracker not in trackers:
                raise ScenarioError(f"edge tracker {e.tracker!r} has no Tracker role")
            if e.bidder not in config.bidder_orgs:
                raise ScenarioError(f"edge bidder {e.bidder!r} has no Bidder role")
            if (e.tracker, e.bidder) in seen:
                raise ScenarioError(f"duplicate edge {e.tracker}->{e.bidder}")
            seen.add((e.tracker, e.bidder))
    else:
        drawn: list[SharingEdge] = []
        for b in config.bidder_orgs:
            # A dual-role org never gets an edge to itself: self-knowledge is
            # not a sharing relationship and would be undetectable by the
            # sync heuristic, breaking its soundness contract.
            pool = [t for t in range(n_track) if trackers[t] != b]
            if len(pool) < config.edges_per_bidder:
                raise ScenarioError(f"not enough tracker orgs for edges to {b}")
            chosen = rng.choice(len(pool), size=config.edges_per_bidder, replace=False)
            client_slots = set(
                rng.choice(
                    config.edges_per_bidder,
                    size=config.client_edges_per_bidder,
                    replace=False,
                ).tolist()
            )
            for slot, t in enumerate(chosen.tolist()):
                drawn.append(
                    SharingEdge(
                        tracker=trackers[pool[t]],
                        bidder=b,
                        channel=CHANNEL_CLIENT if slot in client_slots else CHANNEL_SERVER,
                        strength=config.edge_strength,
                    )
                )
        edges = tuple(drawn)

    return Scenario(
        config=config,
        master_seed=seed,
        organizations=tuple(orgs),
        sites=tuple(sites),
        bidder_profiles=profiles,
        sharing_graph=edges,
    )


def reachable_knowledge(
    graph: tuple[SharingEdge, ...] | list[SharingEdge],
    bidder: str,
    observations: dict[str, ObservationSet],
    rng: np.random.Generator | None = None,
) -> ObservationSet:
    """Union of tracker observations that reach `bidder` along its edges.

    A strength-1.0 edge forwards everything deterministically; weaker edges
    forward each observation event independently with probability equal to
    the edge strength, drawn from `rng` (required only in that case).
    Trackers with no recorded observations contribute nothing.
    """
    result = ObservationSet()
    for edge in graph:
        if edge.bidder != bidder:
            continue
        obs = observations.get(edge.tracker)
        if obs is None:
            continue
        if edge.strength >= 1.0:
            result.merge(obs)
            continue
        if rng is None:
            raise ValueError("fractional edge strength requires an rng")
        for category, count in obs.counts.items():
            if count <= 0:
                continue
            kept = int(rng.binomial(count, edge.strength))
            if kept:
                result.record(category, kept)
    return result


# --- serialization ---------------------------------------------------------

def scenario_to_dict(scenario: Scenario) -> dict:
    cfg = scenario.config
    return {
        "config": {
            "tracker_orgs": list(cfg.tracker_orgs),
            "bidder_orgs": list(cfg.bidder_orgs),
            "sites_per_category": cfg.sites_per_category,
            "hb_site_count": cfg.hb_site_count,
            "tracker_presence_prob": cfg.tracker_presence_prob,
            "edges_per_bidder": cfg.edges_per_bidder,
            "client_edges_per_bidder": cfg.client_edges_per_bidder,
            "edge_strength": cfg.edge_strength,
            "noise_sigma": cfg.noise_sigma,
            "latency_ms_range": list(cfg.latency_ms_range),
            "hb_timeout_ms": cfg.hb_timeout_ms,
            "hb_floor_micro": cfg.hb_floor_micro,
            "price_granularity_micro": cfg.price_granularity_micro,
            "sharing_edges": (
                None
                if cfg.sharing_edges is None
                else [list(e) for e in cfg.sharing_edges]
            ),
        },
        "master_seed": scenario.master_seed,
        "organizations": [
            {"id": o.id, "name": o.name, "roles": sorted(o.roles)}
            for o in scenario.organizations
        ],
        "sites": [
            {
                "domain": s.domain,
                "category": s.category,
                "trackers": list(s.trackers),
                "hb_enabled": s.hb_enabled,
            }
            for s in scenario.sites
        ],
        "bidder_profiles": [
            {
                "org": p.org,
                "org_id": p.org_id,
                "base_cpm_micro": p.base_cpm_micro,
                "category_affinity": p.category_affinity,
                "intent_multiplier": p.intent_multiplier,
                "zero_rate_no_intent": p.zero_rate_no_intent,
                "zero_rate_intent": p.zero_rate_intent,
                "noise_sigma": p.noise_sigma,
                "latency_ms_range": list(p.latency_ms_range),
            }
            for p in scenario.bidder_profiles
        ],
        "sharing_graph": [
            {
                "tracker": e.tracker,
                "bidder": e.bidder,
                "channel": e.channel,
                "strength": e.strength,
            }
            for e in scenario.sharing_graph
        ],
    }


def scenario_from_dict(data: dict) -> Scenario:
    cfg = data["config"]
    config = ScenarioConfig(
        tracker_orgs=tuple(cfg["tracker_orgs"]),
        bidder_orgs=tuple(cfg["bidder_orgs"]),
        sites_per_category=cfg["sites_per_category"],
        hb_site_count=cfg["hb_site_count"],
        tracker_presence_prob=cfg["tracker_presence_prob"],
        edges_per_bidder=cfg["edges_per_bidder"],
        client_edges_per_bidder=cfg["client_edges_per_bidder"],
        edge_strength=cfg["edge_strength"],
        noise_sigma=cfg["noise_sigma"],
        latency_ms_range=tuple(cfg["latency_ms_range"]),
        hb_timeout_ms=cfg["hb_timeout_ms"],
        hb_floor_micro=cfg["hb_floor_micro"],
        price_granularity_micro=cfg["price_granularity_micro"],
        sharing_edges=(
            None
            if cfg["sharing_edges"] is None
            else tuple(tuple(e) for e in cfg["sharing_edges"])
        ),
    )
    return Scenario(
        config=config,
        master_seed=data["master_seed"],
        organizations=tuple(
            Organization(id=o["id"], name=o["name"], roles=frozenset(o["roles"]))
            for o in data["organizations"]
        ),
        sites=tuple(
            Site(
                domain=s["domain"],
                category=s["category"],
                trackers=tuple(s["trackers"]),
                hb_enabled=s["hb_enabled"],
            )
            for s in data["sites"]
        ),
        bidder_profiles=tuple(
            BidderProfile(
                org=p["org"],
                org_id=p["org_id"],
                base_cpm_micro=p["base_cpm_micro"],
                category_affinity=dict(p["category_affinity"]),
                intent_multiplier=dict(p["intent_multiplier"]),
                zero_rate_no_intent=p["zero_rate_no_intent"],
                zero_rate_intent=p["zero_rate_intent"],
                noise_sigma=p["noise_sigma"],
                latency_ms_range=tuple(p["latency_ms_range"]),
            )
            for p in data["bidder_profiles"]
        ),
        sharing_graph=tuple(
            SharingEdge(
                tracker=e["tracker"],
                bidder=e["bidder"],
                channel=e["channel"],
                strength=e["strength"],
            )
            for e in data["sharing_graph"]
        ),
    )


def scenario_to_json(scenario: Scenario) -> str:
    return json.dumps(scenario_to_dict(scenario), sort_keys=True, indent=1)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(scenario_to_json(scenario), encoding="utf-8")


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
