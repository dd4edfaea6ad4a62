"""End-to-end evaluation, baselines, hyperparameter sweeps and seed-stability reports."""
import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint
from .errors import ConfigError, InvalidArgumentError
from .metrics import ndcg
from .model import LtcsConfig, initial_order
from .training import TrainConfig, TrainResult, train

log = logging.getLogger(__name__)

BASELINES = ("ltcs", "pointwise_only", "rerank_only", "independent_two_stage")
SWEEP_PARAMETERS = ("top_k", "encoder_layers", "alpha")
REPORT_COLUMNS = ("parameter", "value", "seed", "ndcg_end_to_end", "ndcg_initial_only")


@dataclass
class EvalReport:
    ndcg_end_to_end: float
    ndcg_initial_only: float
    per_query_end_to_end: list
    per_query_initial_only: list
    seed: int = 0
    config_fingerprint: str = ""

    def to_dict(self, per_query=False):
        out = {"ndcg_end_to_end": self.ndcg_end_to_end,
               "ndcg_initial_only": self.ndcg_initial_only,
               "num_queries": len(self.per_query_end_to_end),
               "seed": self.seed, "config_fingerprint": self.config_fingerprint}
        if per_query:
            out["per_query_end_to_end"] = list(self.per_query_end_to_end)
            out["per_query_initial_only"] = list(self.per_query_initial_only)
        return out


def config_fingerprint(ltcs_config, train_config=None):
    data = {"ltcs": ltcs_config.to_dict(),
            "train": None if train_config is None else train_config.to_dict()}
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]


def evaluate_model(model, dataset, k=None, train_config=None):
    """NDCG of the full pipeline and of the initial ranking alone (no guided top-K)."""
    if not dataset:
        raise InvalidArgumentError("evaluation dataset is empty")
    e2e, init = [], []
    for g in dataset:
        g.validate(model.config)
        out = model.full_forward(g, k)
        e2e.append(ndcg(out.final_ranking, g.labels))
        init.append(ndcg(initial_order(out.initial_logits), g.labels))
    return EvalReport(float(np.mean(e2e)), float(np.mean(init)), e2e, init,
                      seed=model.config.seed,
                      config_fingerprint=config_fingerprint(model.config, train_config))


def evaluate_system(checkpoint, dataset):
    return evaluate_model(checkpoint.model(), dataset, train_config=checkpoint.train_config)


def _stage(result, stage):
    return [dict(h, stage=stage) for h in result.history]


def train_baseline(kind, dataset, ltcs_config, train_config, eval_dataset=None):
    """Train one of the comparison systems and return its Checkpoint.

    ``ltcs`` uses ``train_config.alpha`` unchanged. ``independent_two_stage``
    trains the initial ranker alone, then freezes it and trains the re-ranker
    on detached embeddings.
    """
    if kind not in BASELINES:
        raise ConfigError(f"unknown baseline {kind!r}; expected one of {BASELINES}")
    if kind == "ltcs":
        res = train(dataset, ltcs_config, train_config, eval_dataset=eval_dataset)
        history = _stage(res, "joint")
    elif kind == "pointwise_only":
        res = train(dataset, ltcs_config, train_config.replace(alpha=0.0),
                    eval_dataset=eval_dataset)
        history = _stage(res, "initial")
    elif kind == "rerank_only":
        res = train(dataset, ltcs_config, train_config.replace(alpha=1.0),
                    eval_dataset=eval_dataset)
        history = _stage(res, "rerank")
    else:
        first = train(dataset, ltcs_config,
                      train_config.replace(alpha=0.0, train_rerank=False,
                                           zero_untrained_reranker=False),
                      eval_dataset=eval_dataset)
        res = train(dataset, ltcs_config,
                    train_config.replace(alpha=1.0, train_initial=False,
                                         detach_embeddings=True),
                    model=first.model, eval_dataset=eval_dataset)
        history = _stage(first, "initial") + _stage(res, "rerank")
    res = TrainResult(res.model, res.train_config, history)
    return res.checkpoint(meta={"kind": kind})


def _seeded(ltcs_config, train_config, seed):
    return ltcs_config.replace(seed=seed), train_config.replace(seed=seed)


def _run_cell(args):
    kind, value, seed, parameter, train_data, eval_data, lc, tc = args
    if parameter == "alpha":
        tc = tc.replace(alpha=value)
    elif parameter is not None:
        lc = lc.replace(**{parameter: value})
    lc, tc = _seeded(lc, tc, seed)
    ckpt = train_baseline(kind, train_data, lc, tc)
    rep = evaluate_system(ckpt, eval_data)
    log.info("cell %s=%s seed=%s kind=%s: e2e=%.4f init=%.4f", parameter, value, seed, kind,
             rep.ndcg_end_to_end, rep.ndcg_initial_only)
    return rep


def run_cells(cells, jobs=1):
    """Run independent training cells, optionally in parallel processes.

    Results come back in input order regardless of completion order.
    """
    if jobs <= 1 or len(cells) <= 1:
        return [_run_cell(c) for c in cells]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_cell, cells))


def _stats(values):
    arr = np.asarray(values, dtype=np.float64)
    sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), sd


@dataclass
class SweepResult:
    parameter: str
    grid: list
    seeds: list
    reports: dict = field(default_factory=dict)
    baseline: dict = field(default_factory=dict)

    def cell(self, value, seed):
        return self.reports[(value, seed)]

    def values(self, value, metric="ndcg_end_to_end"):
        return [getattr(self.reports[(value, s)], metric) for s in self.seeds]

    def mean(self, value, metric="ndcg_end_to_end"):
        return _stats(self.values(value, metric))[0]

    def stdev(self, value, metric="ndcg_end_to_end"):
        return _stats(self.values(value, metric))[1]

    def rows(self):
        rows = []
        for value in self.grid:
            for seed in self.seeds:
                rep = self.reports[(value, seed)]
                rows.append({"parameter": self.parameter, "value": value, "seed": seed,
                             "ndcg_end_to_end": rep.ndcg_end_to_end,
                             "ndcg_initial_only": rep.ndcg_initial_only})
        return rows

    def summary(self):
        """Per-value means and seed stdevs, with gains over the pointwise baseline if run.

        Gains are reported both as absolute differences and as percentages.
        """
        out = []
        base = None
        if self.baseline:
            base = _stats([r.ndcg_end_to_end for r in self.baseline.values()])[0]
        for value in self.grid:
            row = {"parameter": self.parameter, "value": value}
            for metric in ("ndcg_end_to_end", "ndcg_initial_only"):
                row[f"{metric}_mean"], row[f"{metric}_stdev"] = _stats(self.values(value,
                                                                                   metric))
                if base is not None:
                    row[f"{metric}_gain_abs"] = row[f"{metric}_mean"] - base
                    row[f"{metric}_gain_pct"] = 100.0 * (row[f"{metric}_mean"] - base) / base
            out.append(row)
        return out

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()

    def to_json(self):
        return json.dumps({"parameter": self.parameter, "grid": self.grid,
                           "seeds": self.seeds, "rows": self.rows(),
                           "summary": self.summary(),
                           "baseline": {str(s): r.to_dict() for s, r in self.baseline.items()}},
                          sort_keys=True, indent=1)


def sweep(parameter, grid, seeds, train_data, eval_data, ltcs_config=None, train_config=None,
          jobs=1, with_baseline=False):
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"cannot sweep {parameter!r}; expected one of {SWEEP_PARAMETERS}")
    grid = list(grid)
    seeds = list(seeds)
    if not grid:
        raise ConfigError("sweep grid is empty")
    if len(seeds) < 3:
        raise ConfigError(f"sweeps need at least 3 seeds, got {len(seeds)}")
    lc = ltcs_config or LtcsConfig()
    tc = train_config or TrainConfig()
    cells = [("ltcs", v, s, parameter, train_data, eval_data, lc, tc)
             for v in grid for s in seeds]
    if with_baseline:
        cells += [("pointwise_only", None, s, None, train_data, eval_data, lc, tc)
                  for s in seeds]
    reports = run_cells(cells, jobs)
    result = SweepResult(parameter, grid, seeds)
    for c, rep in zip(cells, reports):
        if c[0] == "ltcs":
            result.reports[(c[1], c[2])] = rep
        else:
            result.baseline[c[2]] = rep
    return result


def compare_systems(kinds, seeds, train_data, eval_data, ltcs_config=None, train_config=None,
                    jobs=1):
    """Train and evaluate each system kind over seeds: ``{kind: [EvalReport, ...]}``."""
    lc = ltcs_config or LtcsConfig()
    tc = train_config or TrainConfig()
    cells = [(kind, None, s, None, train_data, eval_data, lc, tc)
             for kind in kinds for s in seeds]
    reports = run_cells(cells, jobs)
    out = {kind: [] for kind in kinds}
    for c, rep in zip(cells, reports):
        out[c[0]].append(rep)
    return out


def stability_report(alpha_values, num_seeds, train_data, eval_data, ltcs_config=None,
                     train_config=None, jobs=1, first_seed=0):
    """Per-alpha mean and seed stdev of end-to-end NDCG."""
    if num_seeds < 5:
        raise ConfigError(f"stability reports need at least 5 seeds, got {num_seeds}")
    seeds = list(range(first_seed, first_seed + num_seeds))
    res = sweep("alpha", alpha_values, seeds, train_data, eval_data, ltcs_config,
                train_config, jobs)
    table = []
    for a in res.grid:
        mean, sd = _stats(res.values(a))
        table.append({"alpha": a, "ndcg_end_to_end_mean": mean, "ndcg_end_to_end_stdev": sd,
                      "num_seeds": num_seeds})
    return table, res
