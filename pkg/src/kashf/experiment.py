"""The measurement protocol: persona construction, intent signaling, bid
collection, and seeded campaigns.

One experiment = one persona built from a random subset of one category's
sites with one tracker organization blocked, optionally signaling intent,
followed by a single visit to one HB-enabled site where every bidder's bid
is recorded. Experiments are embarrassingly parallel: each one derives its
own RNG stream from (master_seed, index), so campaign output is bitwise
identical at any worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import syncdetect
from .auction import Bid, apply_price_granularity, compute_bid, run_hb_auction
from .ecosystem import (
    CHANNEL_CLIENT,
    CONTROL_PERSONA,
    HB_CATEGORY,
    INTENT_CATEGORY,
    INTENT_SITES,
    PERSONA_CATEGORIES,
    ObservationSet,
    Scenario,
    reachable_knowledge,
)
from .seeds import derive_seed
from .syncdetect import RequestRecord

# Simulated-clock increments (milliseconds).
VISIT_GAP_MS = 60_000
CONTACT_GAP_MS = 10
POST_BUILD_WAIT_MS = 90 * 60 * 1000  # server-side pipelines get time to settle


class ExperimentError(ValueError):
    """Invalid persona spec or protocol misuse."""


class DatasetError(ValueError):
    """Dataset file cannot be parsed."""


@dataclass(frozen=True)
class PersonaSpec:
    category: str
    site_subset: tuple[str, ...]
    blocked_orgs: tuple[str, ...]
    intent: bool
    experiment_seed: int

    def __post_init__(self):
        if self.category == CONTROL_PERSONA:
            if self.site_subset or self.intent:
                raise ExperimentError("control persona has no sites and no intent")
        elif self.category not in PERSONA_CATEGORIES:
            raise ExperimentError(f"unknown persona category {self.category!r}")
        elif not (1 <= len(self.site_subset) <= 10):
            raise ExperimentError("site subset size must be in [1, 10]")

    @property
    def blocked_org(self) -> str | None:
        """Single-block convenience view (the default protocol blocks one org)."""
        return self.blocked_orgs[0] if self.blocked_orgs else None


@dataclass
class Persona:
    spec: PersonaSpec
    observations: dict[str, ObservationSet] = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentRecord:
    spec: PersonaSpec
    hb_site: str
    observed_orgs: tuple[str, ...]   # trackers that saw the persona pre-collection
    bids: dict[str, int]             # bidder org name -> CPM micro-USD
    winner: str | None
    price_micro: int
    log_ref: str


@dataclass
class Dataset:
    records: list[ExperimentRecord]
    trackers: tuple[str, ...]
    bidders: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.records)


class _Clock:
    __slots__ = ("now",)

    def __init__(self, start: int = 0):
        self.now = start

    def tick(self, ms: int) -> int:
        self.now += ms
        return self.now


def _visit_site(
    scenario: Scenario,
    persona: Persona,
    domain: str,
    observed_as: str,
    tokens: dict[str, str],
    clock: _Clock,
    log_ref: str,
    respect_block: bool,
) -> list[RequestRecord]:
    """One page load: every present (non-blocked) tracker fires a beacon and
    records the visit under `observed_as` in its observation set."""
    site = scenario.site(domain)
    blocked = set(persona.spec.blocked_orgs) if respect_block else set()
    clock.tick(VISIT_GAP_MS)
    records = []
    for tracker in site.trackers:
        if tracker in blocked:
            continue
        persona.observations.setdefault(tracker, ObservationSet()).record(observed_as)
        records.append(
            syncdetect.tracker_contact(
                log_ref, clock.tick(CONTACT_GAP_MS), tracker, tokens[tracker], domain
            )
        )
    return records


def build_persona(
    scenario: Scenario,
    spec: PersonaSpec,
    *,
    tokens: dict[str, str] | None = None,
    clock: _Clock | None = None,
) -> tuple[Persona, list[RequestRecord]]:
    """Visit the spec's site subset, accumulating tracker observations.

    Blocked organizations are never contacted and never observe anything.
    The control persona visits nothing. Deterministic given the spec.
    """
    for domain in spec.site_subset:
        site = scenario.site(domain)
        if site.category != spec.category:
            raise ExperimentError(
                f"site {domain} has category {site.category}, persona is {spec.category}"
            )
    if tokens is None:
        tokens = _default_tokens(scenario, spec)
    clock = clock or _Clock()
    persona = Persona(spec=spec)
    log_ref = _log_ref(spec.experiment_seed)
    records: list[RequestRecord] = []
    for domain in spec.site_subset:
        records.extend(
            _visit_site(
                scenario, persona, domain, spec.category, tokens, clock, log_ref,
                respect_block=True,
            )
        )
    return persona, records


def signal_intent(
    scenario: Scenario,
    persona: Persona,
    *,
    tokens: dict[str, str] | None = None,
    clock: _Clock | None = None,
) -> tuple[Persona, list[RequestRecord]]:
    """Visit the four intent sites; present, non-blocked trackers gain the
    intent flag. Only valid for personas whose spec declares intent."""
    if not persona.spec.intent:
        raise ExperimentError("signal_intent called on a non-intent persona")
    if tokens is None:
        tokens = _default_tokens(scenario, persona.spec)
    clock = clock or _Clock()
    log_ref = _log_ref(persona.spec.experiment_seed)
    records: list[RequestRecord] = []
    for domain in INTENT_SITES:
        records.extend(
            _visit_site(
                scenario, persona, domain, INTENT_CATEGORY, tokens, clock, log_ref,
                respect_block=True,
            )
        )
    return persona, records


def collect_bids(
    scenario: Scenario,
    persona: Persona,
    hb_site: str,
    rng: np.random.Generator | None = None,
    *,
    tokens: dict[str, str] | None = None,
    clock: _Clock | None = None,
) -> tuple[ExperimentRecord, list[RequestRecord]]:
    """Visit one HB-enabled site and run the unified first-price auction.

    Trackers on the publisher page observe the visit before bids are
    gathered (the persona-construction block does not apply here; blocking
    is a history manipulation, not an ad blocker). Each bidder's knowledge
    is whatever its inbound sharing edges forward; client-side edges whose
    tracker saw this persona additionally emit an observable sync request.
    """
    site = scenario.site(hb_site)
    if not site.hb_enabled:
        raise ExperimentError(f"{hb_site} is not HB-enabled")
    if rng is None:
        rng = np.random.default_rng(derive_seed(persona.spec.experiment_seed, "collect"))
    if tokens is None:
        tokens = _default_tokens(scenario, persona.spec)
    clock = clock or _Clock()
    log_ref = _log_ref(persona.spec.experiment_seed)
    observed_orgs = tuple(sorted(persona.observations.keys()))

    merged = {org: obs.copy() for org, obs in persona.observations.items()}
    records: list[RequestRecord] = []
    clock.tick(VISIT_GAP_MS)
    for tracker in site.trackers:
        merged.setdefault(tracker, ObservationSet()).record(HB_CATEGORY)
        records.append(
            syncdetect.tracker_contact(
                log_ref, clock.tick(CONTACT_GAP_MS), tracker, tokens[tracker], hb_site
            )
        )

    id_to_name = {o.id: o.name for o in scenario.organizations}
    bids: list[Bid] = []
    bid_values: dict[str, int] = {}
    for profile in scenario.bidder_profiles:
        knowledge = reachable_knowledge(
            scenario.sharing_graph, profile.org, merged, rng
        )
        bid = compute_bid(profile, knowledge, rng)
        value = apply_price_granularity(
            bid.value_micro, scenario.config.price_granularity_micro
        )
        bid = replace(bid, value_micro=value)
        bids.append(bid)
        bid_values[profile.org] = value

    outcome = run_hb_auction(
        bids, timeout_ms=scenario.config.hb_timeout_ms,
        floor_micro=scenario.config.hb_floor_micro,
    )

    for edge in scenario.sharing_graph:
        if edge.channel != CHANNEL_CLIENT:
            continue
        obs = merged.get(edge.tracker)
        if obs is None or obs.is_empty():
            continue
        records.append(
            syncdetect.sync_request(
                log_ref,
                clock.tick(CONTACT_GAP_MS),
                edge.tracker,
                tokens[edge.tracker],
                edge.bidder,
                tokens[edge.bidder],
                hb_site,
            )
        )

    record = ExperimentRecord(
        spec=persona.spec,
        hb_site=hb_site,
        observed_orgs=observed_orgs,
        bids=bid_values,
        winner=None if outcome.winner is None else id_to_name[outcome.winner],
        price_micro=outcome.clearing_price_micro,
        log_ref=log_ref,
    )
    return record, records


def _log_ref(experiment_seed: int) -> str:
    return f"exp-{experiment_seed:016x}"


def _default_tokens(scenario: Scenario, spec: PersonaSpec) -> dict[str, str]:
    rng = np.random.default_rng(derive_seed(spec.experiment_seed, "tokens"))
    return syncdetect.make_tokens(rng, (o.name for o in scenario.organizations))


def run_experiment(
    scenario: Scenario, index: int, master_seed: int, block_set_size: int = 1
) -> tuple[ExperimentRecord, list[RequestRecord]]:
    """One full trial: draw a spec, build, optionally signal intent, wait,
    collect bids. All randomness comes from the derived experiment seed."""
    experiment_seed = derive_seed(master_seed, index)
    rng = np.random.default_rng(experiment_seed)

    category = PERSONA_CATEGORIES[int(rng.integers(len(PERSONA_CATEGORIES)))]
    trackers = scenario.tracker_names
    block_idx = rng.choice(len(trackers), size=block_set_size, replace=False)
    blocked = tuple(sorted(trackers[i] for i in block_idx.tolist()))
    subset_size = int(rng.integers(1, 11))
    cat_sites = scenario.category_sites(category)
    site_idx = rng.choice(len(cat_sites), size=min(subset_size, len(cat_sites)),
                          replace=False)
    site_subset = tuple(cat_sites[i].domain for i in site_idx.tolist())
    intent = bool(rng.random() < 0.5)
    hb_sites = scenario.hb_sites
    hb_site = hb_sites[int(rng.integers(len(hb_sites)))].domain

    spec = PersonaSpec(
        category=category,
        site_subset=site_subset,
        blocked_orgs=blocked,
        intent=intent,
        experiment_seed=experiment_seed,
    )
    tokens = syncdetect.make_tokens(rng, (o.name for o in scenario.organizations))
    clock = _Clock()

    persona, logs = build_persona(scenario, spec, tokens=tokens, clock=clock)
    if intent:
        _, intent_logs = signal_intent(scenario, persona, tokens=tokens, clock=clock)
        logs.extend(intent_logs)
    clock.tick(POST_BUILD_WAIT_MS)
    record, collect_logs = collect_bids(
        scenario, persona, hb_site, rng, tokens=tokens, clock=clock
    )
    logs.extend(collect_logs)
    return record, logs


def _run_chunk(args) -> tuple[list[ExperimentRecord], list[RequestRecord]]:
    scenario, master_seed, start, stop, block_set_size = args
    records: list[ExperimentRecord] = []
    logs: list[RequestRecord] = []
    for i in range(start, stop):
        rec, rec_logs = run_experiment(scenario, i, master_seed, block_set_size)
        records.append(rec)
        logs.extend(rec_logs)
    return records, logs


def run_campaign(
    scenario: Scenario,
    n_experiments: int,
    master_seed: int,
    *,
    noise_free: bool = False,
    block_set_size: int = 1,
    workers: int = 1,
    log_sink: Callable[[RequestRecord], None] | None = None,
) -> Dataset:
    """Run n independent experiments against the scenario.

    Output is a pure function of (scenario, n, master_seed, flags): records
    and logs come back in experiment-index order no matter how many workers
    execute the chunks. `log_sink` receives every request record in that
    order; pass None to discard logs.
    """
    if n_experiments < 1:
        raise ExperimentError("need at least one experiment")
    if not (1 <= block_set_size <= len(scenario.tracker_names)):
        raise ExperimentError("block set size outside [1, #trackers]")
    world = scenario.noise_free_view() if noise_free else scenario

    records: list[ExperimentRecord] = []
    if workers <= 1:
        for i in range(n_experiments):
            rec, logs = run_experiment(world, i, master_seed, block_set_size)
            records.append(rec)
            if log_sink is not None:
                for entry in logs:
                    log_sink(entry)
    else:
        chunk = max(1, -(-n_experiments // (workers * 4)))
        spans = [
            (world, master_seed, s, min(s + chunk, n_experiments), block_set_size)
            for s in range(0, n_experiments, chunk)
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk_records, chunk_logs in pool.map(_run_chunk, spans):
                records.extend(chunk_records)
                if log_sink is not None:
                    for entry in chunk_logs:
                        log_sink(entry)

    return Dataset(
        records=records,
        trackers=scenario.tracker_names,
        bidders=scenario.bidder_names,
    )


# --- dataset file IO --------------------------------------------------------

def record_to_dict(rec: ExperimentRecord) -> dict:
    return {
        "spec": {
            "category": rec.spec.category,
            "site_subset": list(rec.spec.site_subset),
            "blocked_orgs": list(rec.spec.blocked_orgs),
            "intent": rec.spec.intent,
            "experiment_seed": rec.spec.experiment_seed,
        },
        "hb_site": rec.hb_site,
        "observed_orgs": list(rec.observed_orgs),
        "bids": rec.bids,
        "winner": rec.winner,
        "price": rec.price_micro,
        "log_ref": rec.log_ref,
    }


def record_from_dict(d: dict) -> ExperimentRecord:
    spec = d["spec"]
    return ExperimentRecord(
        spec=PersonaSpec(
            category=spec["category"],
            site_subset=tuple(spec["site_subset"]),
            blocked_orgs=tuple(spec["blocked_orgs"]),
            intent=spec["intent"],
            experiment_seed=spec["experiment_seed"],
        ),
        hb_site=d["hb_site"],
        observed_orgs=tuple(d["observed_orgs"]),
        bids={k: int(v) for k, v in d["bids"].items()},
        winner=d["winner"],
        price_micro=int(d["price"]),
        log_ref=d["log_ref"],
    )


def _meta_path(path: str | Path) -> Path:
    return Path(str(path) + ".meta.json")


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Line-delimited records plus a sidecar with the org universe."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in dataset.records:
            fh.write(json.dumps(record_to_dict(rec), sort_keys=True))
            fh.write("\n")
    meta = {"trackers": list(dataset.trackers), "bidders": list(dataset.bidders)}
    _meta_path(path).write_text(json.dumps(meta, sort_keys=True), encoding="utf-8")


def load_dataset(path: str | Path) -> Dataset:
    records: list[ExperimentRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(record_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"{path}: bad record on line {lineno}: {exc}") from exc

    meta_file = _meta_path(path)
    if meta_file.exists():
        meta = json.loads(meta_file.read_text(encoding="utf-8"))
        trackers, bidders = tuple(meta["trackers"]), tuple(meta["bidders"])
    else:
        seen: set[str] = set()
        for rec in records:
            seen.update(rec.observed_orgs)
            seen.update(rec.spec.blocked_orgs)
        trackers = tuple(sorted(seen))
        bidders = tuple(sorted(records[0].bids)) if records else ()
    return Dataset(records=records, trackers=trackers, bidders=bidders)
