"""kashf: a seeded header-bidding ecosystem simulator with an inference
pipeline that recovers tracker-to-bidder data-sharing relationships from
client-observable bids."""

__version__ = "0.1.0"

from .ecosystem import (  # noqa: F401
    ObservationSet,
    Scenario,
    ScenarioConfig,
    SharingEdge,
    generate_scenario,
    load_scenario,
    reachable_knowledge,
    save_scenario,
)
from .experiment import (  # noqa: F401
    Dataset,
    ExperimentRecord,
    PersonaSpec,
    build_persona,
    collect_bids,
    load_dataset,
    run_campaign,
    save_dataset,
    signal_intent,
)
from .forest import (  # noqa: F401
    FeatureMatrix,
    ForestParams,
    cross_validate,
    entropy,
    fit_forest,
    fit_tree,
    information_gain,
)
from .inference import (  # noqa: F401
    BidClass,
    InferenceReport,
    build_feature_matrix,
    discretize,
    evaluate,
    infer_all,
    infer_relationships,
)
from .syncdetect import detect_cookie_sync  # noqa: F401
