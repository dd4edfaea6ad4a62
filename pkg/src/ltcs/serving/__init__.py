"""Two-tier serving simulation: leaf shards score, the master re-ranks."""
from .cluster import (POLICIES, Cluster, LeafShard, ServeResult, ShardFailure,
                      balanced_partition, leaf_score, master_rerank, rank_order, serve_query)
from .wire import (RERANK_RESULT, SCORE_REQUEST, SCORE_RESPONSE, VERSION, WireMessage, decode,
                   encode)

__all__ = [
    "POLICIES", "Cluster", "LeafShard", "RERANK_RESULT", "SCORE_REQUEST", "SCORE_RESPONSE",
    "ServeResult", "ShardFailure", "VERSION", "WireMessage", "balanced_partition", "decode",
    "encode", "leaf_score", "master_rerank", "rank_order", "serve_query",
]
