import numpy as np
import pytest

from kashf.ecosystem import (
    CHANNEL_CLIENT,
    CHANNEL_SERVER,
    PERSONA_CATEGORIES,
    ObservationSet,
    ScenarioConfig,
    ScenarioError,
    SharingEdge,
    generate_scenario,
    load_scenario,
    reachable_knowledge,
    save_scenario,
    scenario_to_json,
)


def obs(*categories, counts=None):
    o = ObservationSet()
    for c in categories:
        o.record(c)
    for c, n in (counts or {}).items():
        o.record(c, n)
    return o


class TestGenerateScenario:
    def test_default_world_shape(self):
        scenario = generate_scenario(ScenarioConfig(), seed=1)
        assert len(scenario.tracker_names) == 20
        assert scenario.bidder_names == ("AppNexus", "Rubicon", "IX", "OpenX", "PubMatic")
        assert len(scenario.hb_sites) == 25
        assert len(scenario.category_sites("Health")) == 50

    def test_zero_bidders_rejected(self):
        with pytest.raises(ScenarioError):
            generate_scenario(ScenarioConfig(bidder_orgs=()), seed=1)

    def test_zero_hb_sites_rejected(self):
        with pytest.raises(ScenarioError):
            generate_scenario(ScenarioConfig(hb_site_count=0), seed=1)

    def test_determinism_and_seed_sensitivity(self):
        a = generate_scenario(ScenarioConfig(), seed=1)
        b = generate_scenario(ScenarioConfig(), seed=1)
        c = generate_scenario(ScenarioConfig(), seed=2)
        assert scenario_to_json(a) == scenario_to_json(b)
        assert a.sharing_graph != c.sharing_graph

    def test_every_bidder_has_inbound_edges(self):
        scenario = generate_scenario(ScenarioConfig(), seed=3)
        for bidder in scenario.bidder_names:
            assert len(scenario.inbound_edges(bidder)) == 3

    def test_tracker_coverage_per_category(self):
        scenario = generate_scenario(ScenarioConfig(sites_per_category=5), seed=7)
        for cat in PERSONA_CATEGORIES:
            seen = set()
            for site in scenario.category_sites(cat):
                seen.update(site.trackers)
            assert seen == set(scenario.tracker_names)

    def test_no_self_edges_in_random_graph(self):
        for seed in range(5):
            scenario = generate_scenario(ScenarioConfig(), seed=seed)
            assert all(e.tracker != e.bidder for e in scenario.sharing_graph)

    def test_explicit_edges_used_verbatim(self):
        cfg = ScenarioConfig(
            sharing_edges=(("Criteo", "OpenX", CHANNEL_SERVER, 1.0),)
        )
        scenario = generate_scenario(cfg, seed=1)
        assert scenario.sharing_graph == (
            SharingEdge("Criteo", "OpenX", CHANNEL_SERVER, 1.0),
        )

    def test_explicit_edge_validation(self):
        bad = ScenarioConfig(sharing_edges=(("Nobody", "OpenX", CHANNEL_SERVER, 1.0),))
        with pytest.raises(ScenarioError):
            generate_scenario(bad, seed=1)
        dup = ScenarioConfig(
            sharing_edges=(
                ("Criteo", "OpenX", CHANNEL_SERVER, 1.0),
                ("Criteo", "OpenX", CHANNEL_CLIENT, 1.0),
            )
        )
        with pytest.raises(ScenarioError):
            generate_scenario(dup, seed=1)

    def test_edge_strength_bounds(self):
        with pytest.raises(ScenarioError):
            SharingEdge("T", "B", CHANNEL_CLIENT, 0.0)
        with pytest.raises(ScenarioError):
            SharingEdge("T", "B", CHANNEL_CLIENT, 1.5)
        with pytest.raises(ScenarioError):
            SharingEdge("T", "B", "Sideways", 1.0)

    def test_round_trip(self, tmp_path):
        scenario = generate_scenario(ScenarioConfig(), seed=5)
        path = tmp_path / "scenario.json"
        save_scenario(scenario, path)
        assert load_scenario(path) == scenario


class TestReachableKnowledge:
    def test_empty_graph_yields_nothing(self):
        out = reachable_knowledge((), "B", {"T": obs("Health")})
        assert out.is_empty()

    def test_full_strength_forwards_everything(self):
        graph = (SharingEdge("T", "B", CHANNEL_SERVER, 1.0),)
        out = reachable_knowledge(graph, "B", {"T": obs("Health")})
        assert out.as_set() == {"Health"}

    def test_union_over_edges(self):
        graph = (
            SharingEdge("T1", "B", CHANNEL_SERVER, 1.0),
            SharingEdge("T2", "B", CHANNEL_CLIENT, 1.0),
        )
        observations = {"T1": obs("Health"), "T2": obs("Sports", "Intent")}
        out = reachable_knowledge(graph, "B", observations)
        assert out.as_set() == {"Health", "Sports", "Intent"}

    def test_missing_trackers_contribute_nothing(self):
        graph = (SharingEdge("T", "B", CHANNEL_SERVER, 1.0),)
        assert reachable_knowledge(graph, "B", {}).is_empty()

    def test_matches_bruteforce_union_oracle(self):
        rng = np.random.default_rng(11)
        trackers = [f"T{i}" for i in range(20)]
        bidders = [f"B{i}" for i in range(5)]
        cats = list(PERSONA_CATEGORIES)
        for _ in range(30):
            edges = tuple(
                SharingEdge(trackers[int(rng.integers(20))], b, CHANNEL_SERVER, 1.0)
                for b in bidders
                for _ in range(int(rng.integers(1, 4)))
                if True
            )
            # de-duplicate (tracker, bidder) pairs as the type requires
            seen, unique = set(), []
            for e in edges:
                if (e.tracker, e.bidder) not in seen:
                    seen.add((e.tracker, e.bidder))
                    unique.append(e)
            observations = {
                t: obs(*rng.choice(cats, size=int(rng.integers(0, 4)), replace=False))
                for t in trackers
                if rng.random() < 0.7
            }
            for b in bidders:
                expected = set()
                for e in unique:
                    if e.bidder == b and e.tracker in observations:
                        expected |= observations[e.tracker].as_set()
                got = reachable_knowledge(tuple(unique), b, observations)
                assert got.as_set() == expected

    def test_monotone_in_edges(self):
        rng = np.random.default_rng(5)
        observations = {
            f"T{i}": obs(*rng.choice(list(PERSONA_CATEGORIES), size=2, replace=False))
            for i in range(6)
        }
        graph = []
        previous = set()
        for i in range(6):
            graph.append(SharingEdge(f"T{i}", "B", CHANNEL_SERVER, 1.0))
            now = reachable_knowledge(tuple(graph), "B", observations).as_set()
            assert previous <= now
            previous = now

    def test_fractional_strength_needs_rng(self):
        graph = (SharingEdge("T", "B", CHANNEL_SERVER, 0.5),)
        with pytest.raises(ValueError):
            reachable_knowledge(graph, "B", {"T": obs("Health")})

    def test_fractional_strength_forwards_a_fraction(self):
        graph = (SharingEdge("T", "B", CHANNEL_SERVER, 0.25),)
        rng = np.random.default_rng(0)
        observations = {"T": obs(counts={"Health": 10_000})}
        out = reachable_knowledge(graph, "B", observations, rng)
        kept = out.counts["Health"]
        assert 2_200 <= kept <= 2_800


class TestObservationSet:
    def test_dominant_category_by_visits_then_name(self):
        o = obs(counts={"Sports": 2, "Health": 2, "Kids": 1})
        assert o.dominant_category() == "Health"  # tie broken by name order

    def test_intent_and_hb_never_dominate(self):
        o = obs(counts={"Intent": 5, "HBPublisher": 5, "Games": 1})
        assert o.dominant_category() == "Games"
        assert o.has_intent

    def test_empty(self):
        assert ObservationSet().is_empty()
        assert ObservationSet().dominant_category() is None
