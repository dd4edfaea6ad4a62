import csv
import io
import json

import numpy as np
import pytest

from ltcs.checkpoint import Checkpoint
from ltcs.errors import ConfigError, InvalidArgumentError
from ltcs.evaluation import (REPORT_COLUMNS, compare_systems, evaluate_model,
                             evaluate_system, stability_report, sweep, train_baseline)
from ltcs.model import LtcsModel
from ltcs.training import TrainConfig, silence_reranker, train
from ltcs.world import WorldConfig, generate_dataset

from conftest import random_group, tiny_config


@pytest.fixture(scope="module")
def tiny_world():
    wc = WorldConfig(num_queries=24, eval_queries=12, items_per_query=7, query_feature_dim=3,
                     item_feature_dim=5, consideration_size=3, seed=11)
    return generate_dataset(wc), generate_dataset(wc, "eval")


TC = TrainConfig(epochs=2)


def test_zero_reranker_end_to_end_equals_initial(rng):
    cfg = tiny_config()
    m = LtcsModel(cfg)
    silence_reranker(m)
    data = [random_group(rng, 9, cfg, qid=i) for i in range(15)]
    rep = evaluate_model(m, data)
    assert rep.ndcg_end_to_end == rep.ndcg_initial_only
    assert rep.per_query_end_to_end == rep.per_query_initial_only


class _OracleModel(LtcsModel):
    """Initial logits read straight from the first item feature."""

    def initial_forward(self, query_features, item_features, counter=None):
        _, emb = super().initial_forward(query_features, item_features, counter)
        return np.asarray(item_features[:, 0], dtype=self.dtype), emb


def test_perfect_logits_score_one(rng):
    cfg = tiny_config()
    m = _OracleModel(cfg)
    silence_reranker(m)
    data = []
    for i in range(10):
        g = random_group(rng, 9, cfg, qid=i)
        g.item_features[:, 0] = 100.0 * g.labels
        data.append(g)
    rep = evaluate_model(m, data)
    assert rep.ndcg_end_to_end == 1.0 and rep.ndcg_initial_only == 1.0


def test_evaluation_does_not_mutate_checkpoint(tiny_world):
    train_data, eval_data = tiny_world
    lc = tiny_config()
    ck = train_baseline("ltcs", train_data, lc, TC)
    before = ck.fingerprint()
    a = evaluate_system(ck, eval_data)
    b = evaluate_system(ck, eval_data)
    assert ck.fingerprint() == before
    assert a.to_dict(per_query=True) == b.to_dict(per_query=True)


def test_dimension_mismatch(tiny_world):
    _, eval_data = tiny_world
    lc = tiny_config(item_feature_dim=6)
    ck = Checkpoint(lc, TC, LtcsModel(lc).params)
    with pytest.raises(ConfigError):
        evaluate_system(ck, eval_data)


def test_empty_eval():
    with pytest.raises(InvalidArgumentError):
        evaluate_model(LtcsModel(tiny_config()), [])


def test_pointwise_only_is_initial_only(tiny_world):
    train_data, eval_data = tiny_world
    lc = tiny_config()
    rep = evaluate_system(train_baseline("pointwise_only", train_data, lc, TC), eval_data)
    assert rep.ndcg_end_to_end == rep.ndcg_initial_only


def test_independent_two_stage_freezes_initial(tiny_world):
    train_data, _ = tiny_world
    lc = tiny_config()
    stage1 = train(train_data, lc, TC.replace(alpha=0.0, train_rerank=False,
                                              zero_untrained_reranker=False)).model
    ck = train_baseline("independent_two_stage", train_data, lc, TC)
    final = ck.model()
    for name in final.initial_param_names():
        assert final.params[name].tobytes() == stage1.params[name].tobytes(), name
    assert any(final.params[n].tobytes() != stage1.params[n].tobytes()
               for n in final.rerank_param_names())
    assert {h["stage"] for h in ck.history} == {"initial", "rerank"}


def test_unknown_baseline(tiny_world):
    with pytest.raises(ConfigError):
        train_baseline("attn", tiny_world[0], tiny_config(), TC)


def test_sweep_rows_and_reproducibility(tiny_world):
    train_data, eval_data = tiny_world
    lc = tiny_config()
    res = sweep("alpha", [0.0, 0.5, 1.0], [0, 1, 2], train_data, eval_data, lc, TC,
                with_baseline=True)
    rows = list(csv.DictReader(io.StringIO(res.to_csv())))
    assert len(rows) == 9 and tuple(rows[0]) == REPORT_COLUMNS
    for s in (0, 1, 2):
        cell = res.cell(0.0, s)
        assert cell.ndcg_end_to_end == cell.ndcg_initial_only
    summary = json.loads(res.to_json())["summary"]
    assert {"ndcg_end_to_end_gain_abs", "ndcg_end_to_end_gain_pct"} <= set(summary[0])
    again = sweep("alpha", [0.0, 0.5, 1.0], [0, 1, 2], train_data, eval_data, lc, TC,
                  jobs=2, with_baseline=True)
    assert again.to_csv() == res.to_csv() and again.to_json() == res.to_json()


def test_sweep_over_architecture(tiny_world):
    train_data, eval_data = tiny_world
    lc = tiny_config()
    res = sweep("top_k", [2, 4], [0, 1, 2], train_data, eval_data, lc, TC.replace(epochs=1))
    assert res.cell(2, 0).config_fingerprint != res.cell(4, 0).config_fingerprint


@pytest.mark.parametrize("args,match", [(("alpha", [0.5], [0, 1]), "3 seeds"),
                                        (("alpha", [], [0, 1, 2]), "empty"),
                                        (("heads", [2], [0, 1, 2]), "heads")])
def test_sweep_errors(tiny_world, args, match):
    with pytest.raises(ConfigError, match=match):
        sweep(*args, *tiny_world)


def test_stability_needs_five_seeds(tiny_world):
    with pytest.raises(ConfigError, match="5 seeds"):
        stability_report([0.5], 4, *tiny_world)


def test_stability_deterministic(tiny_world):
    lc = tiny_config()
    tc = TC.replace(epochs=1)
    a, _ = stability_report([0.5, 1.0], 5, *tiny_world, lc, tc)
    b, _ = stability_report([0.5, 1.0], 5, *tiny_world, lc, tc)
    assert a == b and [r["alpha"] for r in a] == [0.5, 1.0]


def test_compare_systems_keys(tiny_world):
    lc = tiny_config()
    out = compare_systems(["ltcs", "rerank_only"], [0], *tiny_world, lc, TC.replace(epochs=1))
    assert set(out) == {"ltcs", "rerank_only"} and len(out["ltcs"]) == 1
