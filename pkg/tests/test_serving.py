import socket
import struct
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ltcs.errors import ConfigError, ProtocolError, StateError
from ltcs.metrics import ndcg
from ltcs.model import LtcsModel, QueryGroup
from ltcs.nn import OpCounter
from ltcs.serving import (Cluster, LeafShard, ShardFailure, WireMessage, balanced_partition,
                          leaf_score, master_rerank, serve_query, wire)

from conftest import random_group, tiny_config


def _model(precision=32, **kw):
    return LtcsModel(tiny_config(precision=precision, **kw))


def _request(qid, q, width=4):
    return WireMessage(wire.SCORE_REQUEST, qid, width, aux=q)


# -- wire format ----------------------------------------------------------

@st.composite
def messages(draw):
    width = draw(st.sampled_from([4, 8]))
    f = np.float32 if width == 4 else np.float64
    floats = st.floats(width=8 * width, allow_nan=True, allow_infinity=True)
    n = draw(st.integers(0, 6))
    dim = draw(st.integers(0, 5))
    t = draw(st.integers(0, 6))
    ids = st.integers(0, 2**64 - 1)
    return WireMessage(
        kind=draw(st.sampled_from(list(wire.KINDS))),
        query_id=draw(ids), float_width=width,
        item_ids=draw(st.lists(ids, min_size=n, max_size=n)),
        logits=draw(arrays(f, n, elements=floats)),
        embeddings=draw(arrays(f, (n, dim), elements=floats)),
        tail_ids=draw(st.lists(ids, min_size=t, max_size=t)),
        tail_logits=draw(arrays(f, t, elements=floats)),
        aux=draw(arrays(f, draw(st.integers(0, 4)), elements=floats)))


@settings(max_examples=500)
@given(messages())
def test_wire_round_trip(msg):
    frame = wire.encode(msg)
    back = wire.decode(frame)
    assert back == msg
    assert wire.encode(back) == frame


def test_wire_layout_little_endian():
    msg = WireMessage(wire.SCORE_RESPONSE, 7, 4, item_ids=[9], logits=[1.5],
                      embeddings=[[2.0, -1.0]], tail_ids=[3], tail_logits=[0.25])
    frame = wire.encode(msg)
    (n,) = struct.unpack_from("<I", frame)
    assert n == len(frame) - 4
    kind, version, width, qid, count, tail, dim, aux = struct.unpack_from("<BHBQIIHI", frame, 4)
    assert (kind, version, width, qid, count, tail, dim, aux) == (2, 1, 4, 7, 1, 1, 2, 0)
    body = frame[4 + struct.calcsize("<BHBQIIHI"):]
    assert struct.unpack("<Qfff", body[:20]) == (9, 1.5, 2.0, -1.0)
    assert struct.unpack("<Qf", body[20:]) == (3, 0.25)


def test_embeddings_bit_equal_after_transmission(rng):
    emb = rng.normal(size=(5, 3)).astype(np.float32)
    msg = WireMessage(wire.SCORE_RESPONSE, 1, 4, item_ids=range(5), logits=np.zeros(5),
                      embeddings=emb)
    assert wire.decode(wire.encode(msg)).embeddings.tobytes() == emb.tobytes()


def test_malformed_frames():
    frame = wire.encode(WireMessage(wire.SCORE_REQUEST, 3, 4, aux=[1.0, 2.0]))
    with pytest.raises(ProtocolError):
        wire.decode(frame[:-1])
    with pytest.raises(ProtocolError):
        wire.decode(frame + b"\0")
    with pytest.raises(ProtocolError):
        wire.decode(b"\1\0")
    with pytest.raises(ProtocolError, match="shorter than the header"):
        wire.decode_body(b"\0" * 5)
    bad_version = bytearray(frame)
    bad_version[5:7] = struct.pack("<H", 9)
    with pytest.raises(ProtocolError, match="version 9.*expected 1"):
        wire.decode(bytes(bad_version))
    bad_kind = bytearray(frame)
    bad_kind[4] = 8
    with pytest.raises(ProtocolError, match="kind"):
        wire.decode(bytes(bad_kind))
    bad_width = bytearray(frame)
    bad_width[7] = 2
    with pytest.raises(ProtocolError, match="width"):
        wire.decode(bytes(bad_width))
    # a header that claims one more record than the body holds
    short = bytearray(frame)
    struct.pack_into("<I", short, 4 + 12, 1)
    with pytest.raises(ProtocolError, match="header implies"):
        wire.decode(bytes(short))


def test_message_validation():
    with pytest.raises(ProtocolError):
        WireMessage(9, 0)
    with pytest.raises(ProtocolError):
        WireMessage(1, 0, float_width=2)
    with pytest.raises(ProtocolError):
        WireMessage(1, -1)
    with pytest.raises(ProtocolError):
        WireMessage(2, 0, item_ids=[1, 2], logits=[0.0])
    with pytest.raises(ProtocolError):
        WireMessage(2, 0, item_ids=[1], logits=[0.0], embeddings=np.zeros((2, 3)))
    with pytest.raises(ProtocolError):
        WireMessage(2, 0, tail_ids=[1], tail_logits=[])


def test_socket_frames():
    a, b = socket.socketpair()
    with a, b:
        msg = WireMessage(wire.SCORE_RESPONSE, 5, 8, item_ids=[1, 2], logits=[0.5, -0.5],
                          embeddings=np.arange(8.0).reshape(2, 4))
        sender = threading.Thread(target=wire.send_frame, args=(a, msg))
        sender.start()
        assert wire.recv_frame(b) == msg
        sender.join()
        a.sendall(struct.pack("<I", wire.MAX_FRAME + 1))
        with pytest.raises(ProtocolError, match="exceeds"):
            wire.recv_frame(b)
        a.sendall(struct.pack("<I", 100) + b"\0" * 10)
        a.close()
        with pytest.raises(ProtocolError, match="closed"):
            wire.recv_frame(b)


# -- leaf and master ------------------------------------------------------

def test_single_shard_response_is_global_top_k(rng):
    m = _model()
    g = random_group(rng, 12, m.config)
    shard = LeafShard(0, m).assign(g.item_ids, g.item_features)
    resp = leaf_score(shard, _request(0, g.query_features), m.config.top_k)
    out = m.full_forward(g)
    np.testing.assert_array_equal(resp.item_ids, g.item_ids[out.top_k_indices])
    assert resp.embeddings.tobytes() == out.embeddings[out.top_k_indices].tobytes()
    assert len(resp.tail_ids) == 12 - m.config.top_k
    assert shard.counter.embeddings == 12


def test_small_shard_returns_everything(rng):
    m = _model()
    g = random_group(rng, 3, m.config)
    shard = LeafShard(0, m).assign(g.item_ids, g.item_features)
    resp = leaf_score(shard, _request(0, g.query_features), 10)
    assert sorted(resp.item_ids.tolist()) == sorted(g.item_ids.tolist())
    assert len(resp.tail_ids) == 0


def test_empty_shard(rng):
    m = _model()
    shard = LeafShard(0, m).assign([], np.zeros((0, m.config.item_feature_dim)))
    resp = leaf_score(shard, _request(0, np.zeros(m.config.query_feature_dim)), 4)
    assert len(resp.item_ids) == 0


def test_leaf_errors(rng):
    m = _model()
    with pytest.raises(StateError):
        leaf_score(LeafShard(0, m), _request(0, np.zeros(3)), 4)
    with pytest.raises(StateError):
        leaf_score(LeafShard(0), _request(0, np.zeros(3)), 4)
    shard = LeafShard(0, m).assign([1], np.zeros((1, m.config.item_feature_dim)))
    with pytest.raises(ProtocolError):
        leaf_score(shard, WireMessage(wire.SCORE_RESPONSE, 0), 4)
    with pytest.raises(ConfigError):
        LeafShard(0, m).assign([1, 2], np.zeros((1, 5)))


def _responses(m, g, parts):
    out = []
    for s, idx in enumerate(parts):
        shard = LeafShard(s, m).assign(g.item_ids[idx], g.item_features[idx])
        out.append(leaf_score(shard, _request(int(g.query_id), g.query_features),
                              m.config.top_k))
    return out


def test_master_errors(rng):
    m = _model()
    g = random_group(rng, 10, m.config)
    parts = balanced_partition(10, 2)
    good = _responses(m, g, parts)
    with pytest.raises(ProtocolError):
        master_rerank([], 4, m)
    other = _responses(m, QueryGroup(99, g.query_features, g.item_ids, g.item_features,
                                     g.labels), parts)
    with pytest.raises(ProtocolError, match="query ids"):
        master_rerank([good[0], other[1]], 4, m)
    with pytest.raises(ProtocolError, match="more than one shard"):
        master_rerank([good[0], good[0]], 4, m)
    with pytest.raises(ProtocolError, match="score_response"):
        master_rerank([WireMessage(wire.RERANK_RESULT, int(g.query_id))], 4, m)
    wide = _model(initial_hidden_widths=[8, 6])
    with pytest.raises(ProtocolError, match="embedding width"):
        master_rerank(good, 4, wide)
    mixed = WireMessage(wire.SCORE_RESPONSE, int(g.query_id), 8)
    with pytest.raises(ProtocolError, match="float widths"):
        master_rerank([good[0], mixed], 4, m)


def test_master_never_computes_embeddings(rng):
    m = _model()
    g = random_group(rng, 20, m.config)
    counter = OpCounter()
    _, ranking = master_rerank(_responses(m, g, balanced_partition(20, 3)), 4, m, counter)
    assert counter.embeddings == 0
    k = m.config.top_k
    assert counter.attention_scores == m.config.encoder_layers * m.config.attention_heads * k * k
    np.testing.assert_array_equal(ranking, g.item_ids[m.full_forward(g).final_ranking])


@pytest.mark.parametrize("precision", [32, 64])
@pytest.mark.parametrize("shards", [1, 2, 4, 7])
def test_serving_matches_monolithic(rng, precision, shards):
    m = _model(precision)
    cluster = Cluster(m, shards)
    for qid in range(40):
        n = int(rng.integers(1, 30))
        g = random_group(rng, n, m.config, qid=qid)
        parts = np.array_split(rng.permutation(n), shards)
        res = serve_query(cluster, g, parts)
        np.testing.assert_array_equal(res.ranking, g.item_ids[m.full_forward(g).final_ranking])
        assert res.accounting["total_embeddings"] == n
        assert res.accounting["master"]["embeddings"] == 0


def test_served_ndcg_equals_evaluation(rng):
    m = _model(32)
    cluster = Cluster(m, 3)
    for qid in range(20):
        g = random_group(rng, 15, m.config, qid=qid)
        res = cluster.serve(g)
        pos = {int(i): j for j, i in enumerate(g.item_ids)}
        served = ndcg([pos[int(i)] for i in res.ranking], g.labels)
        assert served == ndcg(m.full_forward(g).final_ranking, g.labels)


def test_arrival_order_irrelevant(rng):
    m = _model()
    g = random_group(rng, 17, m.config)
    resp = _responses(m, g, balanced_partition(17, 4))
    a = master_rerank(resp, 4, m)[0]
    b = master_rerank(resp[::-1], 4, m)[0]
    assert a == b


def test_master_cost_independent_of_n(rng):
    m = _model(top_k=10)
    costs = []
    for n in (10, 1000):
        res = Cluster(m, 4).serve(random_group(rng, n, m.config))
        costs.append(res.accounting["master"]["attention_scores"])
    assert costs[0] == costs[1] == m.config.encoder_layers * m.config.attention_heads * 100


def test_doubling_shards_halves_load():
    for n in (1000, 64, 99):
        for s in (1, 2, 4, 8):
            big = max(len(p) for p in balanced_partition(n, s))
            half = max(len(p) for p in balanced_partition(n, 2 * s))
            assert half == -(-big // 2) or half == -(-n // (2 * s))
            assert sum(len(p) for p in balanced_partition(n, s)) == n
    assert max(len(p) for p in balanced_partition(1000, 4)) == 250
    assert max(len(p) for p in balanced_partition(1000, 8)) == 125


def test_failure_policies(rng):
    m = _model()
    g = random_group(rng, 16, m.config)
    strict = Cluster(m, 4)
    strict.fail_shard(2)
    with pytest.raises(ShardFailure, match=r"\[2\]"):
        strict.serve(g)
    lenient = Cluster(m, 4, failure_policy="degrade")
    lenient.fail_shard(2)
    res = lenient.serve(g)
    assert res.degraded and res.failed_shards == [2]
    lost = set(g.item_ids[balanced_partition(16, 4)[2]].tolist())
    assert set(res.ranking.tolist()) == set(g.item_ids.tolist()) - lost
    assert res.accounting["leaves"][2]["failed"]
    for s in range(4):
        lenient.fail_shard(s)
    with pytest.raises(ShardFailure):
        lenient.serve(g)
    lenient.fail_shard(2, failed=False)
    assert lenient.serve(g).failed_shards == [0, 1, 3]


def test_cluster_config_errors(rng):
    m = _model()
    with pytest.raises(ConfigError):
        Cluster(m, 0)
    with pytest.raises(ConfigError):
        Cluster(m, 2, failure_policy="retry")
    with pytest.raises(ConfigError):
        Cluster(m, 2, transport="udp")
    with pytest.raises(ConfigError):
        Cluster(m, 2, top_k=0)
    g = random_group(rng, 6, m.config)
    with pytest.raises(ConfigError):
        Cluster(m, 2).serve(g, [np.arange(6)])
    with pytest.raises(ConfigError):
        Cluster(m, 2).serve(g, [np.arange(3), np.arange(2, 6)])


@pytest.mark.parametrize("transport,workers", [("socket", 1), ("inprocess", 4),
                                               ("socket", 3)])
def test_transports_and_concurrency_agree(rng, transport, workers):
    m = _model()
    base = Cluster(m, 3)
    other = Cluster(m, 3, transport=transport, workers=workers)
    for qid in range(10):
        g = random_group(rng, 25, m.config, qid=qid)
        a, b = base.serve(g), other.serve(g)
        np.testing.assert_array_equal(a.ranking, b.ranking)
        assert a.result == b.result


def test_default_wire_width_follows_model():
    assert Cluster(_model(32), 1).float_width == 4
    assert Cluster(_model(64), 1).float_width == 8
