"""Leaf/master serving simulation with embedding reuse.

Leaves run the initial ranker over their slice of the candidates and send
their local top-K (logit plus embedding) and the logits of everything else.
The master picks the global top-K from those records and runs only the
re-ranker on the transmitted embeddings.
"""
import socket
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ProtocolError, StateError
from ..nn import OpCounter
from . import wire

POLICIES = ("fail", "degrade")


class ShardFailure(ProtocolError):
    """A leaf shard did not answer and the failure policy is ``fail``."""


def rank_order(logits, item_ids):
    """Indices by (logit desc, item_id asc)."""
    return np.lexsort((np.asarray(item_ids), -np.asarray(logits)))


class LeafShard:
    def __init__(self, shard_id, model=None):
        self.shard_id = shard_id
        self.model = model
        self.item_ids = None
        self.item_features = None
        self.counter = OpCounter()

    @property
    def initialized(self):
        return self.model is not None and self.item_ids is not None

    def assign(self, item_ids, item_features):
        self.item_ids = np.asarray(item_ids, dtype=np.uint64)
        self.item_features = np.asarray(item_features, dtype=np.float64)
        if self.item_features.shape[0] != len(self.item_ids):
            raise ConfigError(f"shard {self.shard_id}: {len(self.item_ids)} ids but "
                              f"{self.item_features.shape[0]} feature rows")
        return self

    @property
    def size(self):
        return 0 if self.item_ids is None else len(self.item_ids)


def leaf_score(shard, request, k, float_width=4):
    """Answer a score_request for the shard's candidates."""
    if not shard.initialized:
        raise StateError(f"shard {shard.shard_id} has no model or candidates")
    if request.kind != wire.SCORE_REQUEST:
        raise ProtocolError(f"leaf expected score_request, got {request.kind_name}")
    if len(shard.item_ids) == 0:
        return wire.WireMessage(wire.SCORE_RESPONSE, request.query_id, float_width)
    logits, emb = shard.model.initial_forward(request.aux, shard.item_features, shard.counter)
    order = rank_order(logits, shard.item_ids)
    top, rest = order[:k], order[k:]
    return wire.WireMessage(wire.SCORE_RESPONSE, request.query_id, float_width,
                            item_ids=shard.item_ids[top], logits=logits[top],
                            embeddings=emb[top], tail_ids=shard.item_ids[rest],
                            tail_logits=logits[rest])


def master_rerank(responses, k, model, counter=None):
    """Merge shard responses and re-rank the global top-k.

    Returns ``(rerank_result message, ranked item ids)``. Only the re-ranker
    runs here; embeddings are the transmitted ones, cast to the model dtype.
    """
    if not responses:
        raise ProtocolError("master received no responses")
    qids = {int(r.query_id) for r in responses}
    if len(qids) != 1:
        raise ProtocolError(f"responses mix query ids {sorted(qids)}")
    widths = {r.float_width for r in responses}
    if len(widths) != 1:
        raise ProtocolError(f"responses mix float widths {sorted(widths)}")
    dims = {r.dim for r in responses if len(r.item_ids)}
    if len(dims) > 1 or (dims and dims != {model.config.embedding_dim}):
        raise ProtocolError(f"embedding width(s) {sorted(dims)} do not match the model's "
                            f"{model.config.embedding_dim}")
    for r in responses:
        if r.kind != wire.SCORE_RESPONSE:
            raise ProtocolError(f"master expected score_response, got {r.kind_name}")
    (qid,), (width,) = qids, widths
    ids = np.concatenate([r.item_ids for r in responses])
    logits = np.concatenate([r.logits for r in responses])
    emb = np.concatenate([r.embeddings.reshape(len(r.item_ids), -1) for r in responses
                          if len(r.item_ids)] or [np.zeros((0, 0))])
    all_ids = np.concatenate([ids] + [r.tail_ids for r in responses])
    if len(np.unique(all_ids)) != len(all_ids):
        raise ProtocolError(f"query {qid}: an item was reported by more than one shard")
    if len(ids) == 0:
        return wire.WireMessage(wire.RERANK_RESULT, qid, width), np.zeros(0, dtype=np.uint64)
    order = rank_order(logits, ids)
    top = order[:k]
    rerank_logits, _ = model.rerank_forward(emb[top], counter)
    perm = np.argsort(-rerank_logits, kind="stable")
    head = top[perm]
    rest_ids = np.concatenate([ids[order[k:]]] + [r.tail_ids for r in responses])
    rest_logits = np.concatenate([logits[order[k:]]] + [r.tail_logits for r in responses])
    tail = rank_order(rest_logits, rest_ids)
    result = wire.WireMessage(wire.RERANK_RESULT, qid, width, item_ids=ids[head],
                              logits=rerank_logits[perm],
                              tail_ids=rest_ids[tail], tail_logits=rest_logits[tail])
    return result, result.all_ids()


def balanced_partition(n, shards):
    """Round-robin assignment; shard sizes differ by at most one."""
    return [np.arange(s, n, shards) for s in range(shards)]


@dataclass
class ServeResult:
    query_id: int
    ranking: np.ndarray
    result: wire.WireMessage
    degraded: bool = False
    failed_shards: list = field(default_factory=list)
    accounting: dict = field(default_factory=dict)


class Cluster:
    """A master plus ``num_shards`` leaves sharing one read-only model.

    ``transport`` is ``"inprocess"`` (bytes handed over directly) or
    ``"socket"`` (frames over a loopback socket pair per shard). Both move the
    same encoded frames. ``workers > 1`` scores shards concurrently.
    """

    def __init__(self, model, num_shards, top_k=None, failure_policy="fail",
                 float_width=None, transport="inprocess", workers=1):
        if num_shards < 1:
            raise ConfigError(f"need at least one shard, got {num_shards}")
        if failure_policy not in POLICIES:
            raise ConfigError(f"failure policy must be one of {POLICIES}, got "
                              f"{failure_policy!r}")
        if transport not in ("inprocess", "socket"):
            raise ConfigError(f"unknown transport {transport!r}")
        self.model = model
        self.top_k = model.config.top_k if top_k is None else top_k
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        self.num_shards = num_shards
        self.failure_policy = failure_policy
        # transmitting at the model's own width keeps serving bit-equal to full_forward
        self.float_width = model.dtype.itemsize if float_width is None else float_width
        self.transport = transport
        self.workers = workers
        self.shards = [LeafShard(s, model) for s in range(num_shards)]
        self.master_counter = OpCounter()
        self.failed = set()

    def fail_shard(self, shard_id, failed=True):
        (self.failed.add if failed else self.failed.discard)(shard_id)

    def _exchange(self, shard, request_frame):
        if shard.shard_id in self.failed:
            raise ConnectionError(f"shard {shard.shard_id} is down")
        if self.transport == "inprocess":
            req = wire.decode(request_frame)
            return wire.decode(wire.encode(leaf_score(shard, req, self.top_k,
                                                      self.float_width)))
        master_end, leaf_end = socket.socketpair()
        with master_end, leaf_end:
            def leaf():
                req = wire.recv_frame(leaf_end)
                wire.send_frame(leaf_end, leaf_score(shard, req, self.top_k, self.float_width))
            t = threading.Thread(target=leaf, daemon=True)
            t.start()
            master_end.sendall(request_frame)
            resp = wire.recv_frame(master_end)
            t.join()
        return resp

    def serve(self, query, partition=None):
        """Rank one QueryGroup (labels are ignored)."""
        n = len(query.item_ids)
        parts = balanced_partition(n, self.num_shards) if partition is None else partition
        if len(parts) != self.num_shards:
            raise ConfigError(f"partition has {len(parts)} parts for {self.num_shards} shards")
        covered = np.sort(np.concatenate([np.asarray(p, dtype=np.int64) for p in parts]))
        if not np.array_equal(covered, np.arange(n)):
            raise ConfigError("partition must assign every candidate to exactly one shard")
        for shard, idx in zip(self.shards, parts):
            shard.assign(query.item_ids[idx], query.item_features[idx])
            shard.counter.reset()
        self.master_counter.reset()
        request = wire.encode(wire.WireMessage(wire.SCORE_REQUEST, int(query.query_id),
                                               self.float_width, aux=query.query_features))

        timings = {}

        def call(shard):
            t0 = time.perf_counter()
            try:
                return self._exchange(shard, request)
            except (ConnectionError, OSError, ProtocolError) as exc:
                return exc
            finally:
                timings[shard.shard_id] = time.perf_counter() - t0

        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                answers = list(pool.map(call, self.shards))
        else:
            answers = [call(s) for s in self.shards]

        failed = [s.shard_id for s, a in zip(self.shards, answers) if isinstance(a, Exception)]
        responses = [a for a in answers if not isinstance(a, Exception)]
        if failed and (self.failure_policy == "fail" or not responses):
            raise ShardFailure(f"query {query.query_id}: shard(s) {failed} failed: "
                               f"{answers[failed[0]]}")
        t0 = time.perf_counter()
        result, ranking = master_rerank(responses, self.top_k, self.model, self.master_counter)
        master_time = time.perf_counter() - t0
        leaves = [{"shard_id": s.shard_id, "candidates": s.size,
                   "embeddings": s.counter.embeddings, "mlp_rows": s.counter.mlp_rows,
                   "attention_scores": s.counter.attention_scores,
                   "failed": s.shard_id in failed, "seconds": timings.get(s.shard_id, 0.0)}
                  for s in self.shards]
        accounting = {
            "leaves": leaves,
            "master": {"embeddings": self.master_counter.embeddings,
                       "mlp_rows": self.master_counter.mlp_rows,
                       "attention_scores": self.master_counter.attention_scores,
                       "seconds": master_time},
            "total_embeddings": sum(leaf["embeddings"] for leaf in leaves),
        }
        return ServeResult(int(query.query_id), ranking, result, bool(failed), failed,
                           accounting)


def serve_query(cluster, query, partition=None):
    return cluster.serve(query, partition)
