"""cachemix: exact Markov-chain analysis and simulation of cache eviction.

Eight policies as exact finite-state machines (move-to-front, queue,
random replacement, hit-climbing, meta-cache KLRU, multi-level LRUM,
adaptive replacement, and the beta-mixed ALRU), with stationary laws,
weighted rank distances to the ideal cache, mixing-time measurement and
bounds, and simulation under synthetic or trace workloads.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    CacheState,
    Level,
    PolicyConfig,
    PolicyKind,
    PopularityDist,
    RankWeights,
    RequestStream,
    alru,
    arc,
    climb,
    fifo,
    from_probs,
    ideal_vector,
    klru,
    lru,
    lrum,
    make_zipf,
    random_policy,
    validate_state,
)
