"""Tracker-influence inference from collected bids.

Per bidder: discretize its bids into Low/Medium/High around the mean and
population standard deviation, train a random forest that predicts the bid
class from which tracker organizations observed the persona, and read the
top-k most important features as that bidder's likely data suppliers.
Rankings are then checked against the scenario's ground-truth sharing
graph and against what client-side cookie-sync detection could see.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ecosystem import CHANNEL_CLIENT, CHANNEL_SERVER, SharingEdge
from .experiment import Dataset
from .forest import (
    FeatureMatrix,
    ForestParams,
    cross_validate_details,
    fit_forest,
)
from .seeds import derive_seed


class InferenceError(ValueError):
    pass


class InsensitiveBidderError(InferenceError):
    """All of a bidder's bids land in one class: bids insensitive to trackers."""


class BidClass(enum.IntEnum):
    Low = 0
    Medium = 1
    High = 2


@dataclass(frozen=True)
class ClassBoundaries:
    mu: float
    sigma: float  # population standard deviation

    def __post_init__(self):
        if self.sigma < 0:
            raise InferenceError("sigma must be non-negative")

    def classify(self, value: float) -> BidClass:
        if value < self.mu - self.sigma:
            return BidClass.Low
        if value > self.mu + self.sigma:
            return BidClass.High
        return BidClass.Medium


def discretize(
    bids: Sequence[float | int], boundaries: ClassBoundaries | None = None
) -> tuple[list[BidClass], ClassBoundaries]:
    """Three-way split of bid values: Low below mu-sigma, High above
    mu+sigma, Medium in the closed band between. Boundaries default to the
    mean and population standard deviation of the input itself."""
    values = np.asarray(bids, dtype=np.float64)
    if values.size == 0:
        raise InferenceError("cannot discretize an empty bid list")
    if boundaries is None:
        # fsum keeps the boundaries exact regardless of summation order
        mu = math.fsum(values) / values.size
        var = math.fsum((v - mu) ** 2 for v in values) / values.size
        boundaries = ClassBoundaries(mu=mu, sigma=math.sqrt(var))
    lo = boundaries.mu - boundaries.sigma
    hi = boundaries.mu + boundaries.sigma
    classes = np.full(values.size, BidClass.Medium, dtype=np.int64)
    classes[values < lo] = BidClass.Low
    classes[values > hi] = BidClass.High
    return [BidClass(int(c)) for c in classes], boundaries


def build_feature_matrix(
    dataset: Dataset, bidder: str, include_zero_bids: bool = True
) -> tuple[FeatureMatrix, ClassBoundaries]:
    """One row per experiment: feature f is true iff tracker org f observed
    the persona during construction/intent (present on a visited site and
    not blocked); the label is the bidder's discretized bid."""
    if not dataset.records:
        raise InferenceError("dataset is empty")
    if bidder not in dataset.bidders:
        raise InferenceError(f"bidder {bidder!r} not present in dataset")

    trackers = dataset.trackers
    index = {name: i for i, name in enumerate(trackers)}
    rows = []
    bids = []
    for rec in dataset.records:
        if bidder not in rec.bids:
            raise InferenceError(f"bidder {bidder!r} missing from record {rec.log_ref}")
        value = rec.bids[bidder]
        if not include_zero_bids and value == 0:
            continue
        row = np.zeros(len(trackers), dtype=np.uint8)
        for org in rec.observed_orgs:
            pos = index.get(org)
            if pos is not None:
                row[pos] = 1
        rows.append(row)
        bids.append(value)
    if not rows:
        raise InferenceError(f"no usable rows for bidder {bidder!r}")

    classes, boundaries = discretize(bids)
    matrix = FeatureMatrix(
        X=np.vstack(rows),
        y=np.array([int(c) for c in classes], dtype=np.int64),
        feature_names=trackers,
    )
    return matrix, boundaries


@dataclass(frozen=True)
class BidderInference:
    bidder: str
    ranking: tuple[tuple[str, float], ...]  # (tracker, importance), descending
    cv_accuracy: float | None
    per_class_recall: tuple[float | None, ...]
    n_rows: int
    boundaries: ClassBoundaries
    importance: dict[str, float] | None = None  # full per-tracker vector

    @property
    def top_trackers(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.ranking)


@dataclass(frozen=True)
class InferenceReport:
    top_k: int
    bidders: tuple[str, ...]
    results: dict[str, BidderInference]
    insensitive: dict[str, str]  # bidder -> reason, for untrainable bidders
    seed: int


def infer_relationships(
    dataset: Dataset,
    bidder: str,
    top_k: int = 3,
    params: ForestParams | None = None,
    seed: int = 0,
    folds: int = 10,
    include_zero_bids: bool = True,
) -> BidderInference:
    """Train the per-bidder forest and rank trackers by importance.

    folds=0 skips cross-validation (cv_accuracy comes back None). Raises
    InsensitiveBidderError when every bid falls in a single class, since
    there is nothing for the model to learn.
    """
    params = params or ForestParams()
    matrix, boundaries = build_feature_matrix(dataset, bidder, include_zero_bids)
    if len(matrix.distinct_labels()) < 2:
        raise InsensitiveBidderError(
            f"bids insensitive to trackers: all {matrix.n_rows} bids for "
            f"{bidder} fall in one class"
        )

    forest = fit_forest(matrix.X, matrix.y, params, derive_seed(seed, bidder, "forest"))
    order = np.argsort(-forest.importance, kind="stable")
    ranking = tuple(
        (matrix.feature_names[i], float(forest.importance[i]))
        for i in order[:top_k]
    )
    importance = {
        name: float(v) for name, v in zip(matrix.feature_names, forest.importance)
    }

    accuracy = None
    recall: tuple[float | None, ...] = ()
    if folds:
        cv = cross_validate_details(
            matrix.X, matrix.y, folds, params, derive_seed(seed, bidder, "cv")
        )
        accuracy = cv.accuracy
        recall = cv.per_class_recall
    return BidderInference(
        bidder=bidder,
        ranking=ranking,
        cv_accuracy=accuracy,
        per_class_recall=recall,
        n_rows=matrix.n_rows,
        boundaries=boundaries,
        importance=importance,
    )


def infer_all(
    dataset: Dataset,
    top_k: int = 3,
    params: ForestParams | None = None,
    seed: int = 0,
    folds: int = 10,
    include_zero_bids: bool = True,
) -> InferenceReport:
    """Run the inference pipeline for every bidder in the dataset."""
    results: dict[str, BidderInference] = {}
    insensitive: dict[str, str] = {}
    for bidder in dataset.bidders:
        try:
            results[bidder] = infer_relationships(
                dataset, bidder, top_k, params, seed, folds, include_zero_bids
            )
        except InsensitiveBidderError as exc:
            insensitive[bidder] = str(exc)
    return InferenceReport(
        top_k=top_k,
        bidders=dataset.bidders,
        results=results,
        insensitive=insensitive,
        seed=seed,
    )


@dataclass(frozen=True)
class EdgeAssessment:
    bidder: str
    tracker: str
    rank: int
    importance: float
    in_ground_truth: bool
    channel: str | None  # ClientSide/ServerSide when in the ground truth
    detected_by_cookie_sync: bool


@dataclass(frozen=True)
class EvaluationMetrics:
    per_bidder_precision: dict[str, float]
    precision_at_k: float
    recall: float | None  # None when the ground-truth graph is empty
    recovered_client_side: int
    recovered_server_side: int
    server_side_recovered: int  # recovered server-side edges invisible to sync
    assessments: tuple[EdgeAssessment, ...]
    sync_pairs: frozenset[tuple[str, str]]


def evaluate(
    report: InferenceReport,
    sharing_graph: Iterable[SharingEdge],
    sync_pairs: Iterable[tuple[str, str]],
) -> EvaluationMetrics:
    """Cross-reference inferred rankings against ground truth and the
    cookie-sync detections.

    precision@k is macro-averaged over bidders with a ranking; recall
    counts recovered edges over all ground-truth edges (None for an empty
    graph). server_side_recovered counts recovered ServerSide edges that
    the sync detector could not see.
    """
    edges = list(sharing_graph)
    truth = {(e.tracker, e.bidder): e.channel for e in edges}
    sync = frozenset(tuple(p) for p in sync_pairs)

    assessments: list[EdgeAssessment] = []
    per_bidder: dict[str, float] = {}
    recovered: set[tuple[str, str]] = set()
    for bidder, inf in report.results.items():
        hits = 0
        for rank, (tracker, importance) in enumerate(inf.ranking, start=1):
            pair = (tracker, bidder)
            in_truth = pair in truth
            if in_truth:
                hits += 1
                recovered.add(pair)
            assessments.append(
                EdgeAssessment(
                    bidder=bidder,
                    tracker=tracker,
                    rank=rank,
                    importance=importance,
                    in_ground_truth=in_truth,
                    channel=truth.get(pair),
                    detected_by_cookie_sync=pair in sync,
                )
            )
        per_bidder[bidder] = hits / report.top_k if report.top_k else 0.0

    precision = (
        math.fsum(per_bidder.values()) / len(per_bidder) if per_bidder else 0.0
    )
    recall = len(recovered) / len(truth) if truth else None
    client_hits = sum(1 for p in recovered if truth[p] == CHANNEL_CLIENT)
    server_hits = sum(1 for p in recovered if truth[p] == CHANNEL_SERVER)
    hidden = sum(
        1 for p in recovered if truth[p] == CHANNEL_SERVER and p not in sync
    )
    return EvaluationMetrics(
        per_bidder_precision=per_bidder,
        precision_at_k=precision,
        recall=recall,
        recovered_client_side=client_hits,
        recovered_server_side=server_hits,
        server_side_recovered=hidden,
        assessments=tuple(assessments),
        sync_pairs=sync,
    )


# --- report serialization ---------------------------------------------------

def report_to_dict(report: InferenceReport) -> dict:
    return {
        "top_k": report.top_k,
        "seed": report.seed,
        "bidders": list(report.bidders),
        "insensitive": dict(report.insensitive),
        "results": {
            b: {
                "ranking": [[t, imp] for t, imp in r.ranking],
                "cv_accuracy": r.cv_accuracy,
                "per_class_recall": list(r.per_class_recall),
                "n_rows": r.n_rows,
                "mu": r.boundaries.mu,
                "sigma": r.boundaries.sigma,
                "importance": r.importance,
            }
            for b, r in report.results.items()
        },
    }


def report_from_dict(data: dict) -> InferenceReport:
    results = {
        b: BidderInference(
            bidder=b,
            ranking=tuple((t, float(i)) for t, i in r["ranking"]),
            cv_accuracy=r["cv_accuracy"],
            per_class_recall=tuple(r["per_class_recall"]),
            n_rows=r["n_rows"],
            boundaries=ClassBoundaries(mu=r["mu"], sigma=r["sigma"]),
            importance=r.get("importance"),
        )
        for b, r in data["results"].items()
    }
    return InferenceReport(
        top_k=data["top_k"],
        bidders=tuple(data["bidders"]),
        results=results,
        insensitive=dict(data["insensitive"]),
        seed=data["seed"],
    )


def save_report(report: InferenceReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report), sort_keys=True, indent=1),
        encoding="utf-8",
    )


def load_report(path: str | Path) -> InferenceReport:
    return report_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
