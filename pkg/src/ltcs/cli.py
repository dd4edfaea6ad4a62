"""Command-line entry point: ``ltcs <command> [flags]``.

Configuration comes from built-in defaults, then an optional YAML file
(``--config``), then flags. A run manifest written by an earlier command is
also accepted as ``--config``; its resolved configuration is reused.
"""
import argparse
import csv
import hashlib
import io
import json
import logging
import os
import re
import sys
import time

import numpy as np
import yaml

from . import __version__
from .bayes import CONDITIONALLY_INDEPENDENT, DiscreteWorld, bayes_factorization_check, \
    bundled_worlds
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError, InvalidArgumentError, LtcsError, NumericalError
from .evaluation import BASELINES, SWEEP_PARAMETERS, evaluate_model, stability_report, \
    sweep, train_baseline
from .metrics import ndcg_single
from .model import PRESETS, LtcsModel
from .serving import POLICIES, Cluster
from .training import TrainConfig
from .world import WorldConfig, generate_dataset, oracle_optimal_ndcg, read_dataset, \
    world_config_of, write_dataset

log = logging.getLogger("ltcs")

SECTIONS = ("world", "model", "train", "sweep", "stability", "serve", "bayes")
_SECTION_KEYS = {
    "sweep": {"parameter", "grid", "num_seeds", "baseline"},
    "stability": {"alphas", "num_seeds"},
    "serve": {"shards", "top_k", "failure_policy", "transport", "fail_shards"},
    "bayes": {"worlds", "k"},
}
MANIFEST = "manifest.json"


# -- configuration -----------------------------------------------------------

class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot (``1e-5``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                   |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                   |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                   |[-+]?\.(?:inf|Inf|INF)
                   |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


def _key_lines(text):
    """``{(section, key): line}`` for the YAML document, 1-based."""
    lines = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines
    if not isinstance(root, yaml.MappingNode):
        return lines
    for k, v in root.value:
        lines[(k.value, None)] = k.start_mark.line + 1
        if isinstance(v, yaml.MappingNode):
            for kk, _ in v.value:
                lines[(k.value, kk.value)] = kk.start_mark.line + 1
    return lines


class ConfigFile:
    """Parsed ``--config`` document with line numbers for error messages."""

    def __init__(self, path=None):
        self.path = path
        self.sections = {}
        self.lines = {}
        if path is None:
            return
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            doc = yaml.load(text, Loader=_Loader)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f":{mark.line + 1}:{mark.column + 1}" if mark else ""
            raise ConfigError(f"{path}{where}: cannot parse config: "
                              f"{getattr(exc, 'problem', exc)}") from exc
        doc = {} if doc is None else doc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a mapping of sections")
        if "command" in doc and "config" in doc:
            doc = doc["config"]      # a run manifest
        self.lines = _key_lines(text)
        for section, body in doc.items():
            if section not in SECTIONS:
                raise ConfigError(f"{self.where(section)}unknown section {section!r}; "
                                  f"expected one of {SECTIONS}")
            if body is None:
                body = {}
            if not isinstance(body, dict):
                raise ConfigError(f"{self.where(section)}section {section!r} must be a mapping")
            allowed = _SECTION_KEYS.get(section)
            for key in body:
                if allowed is not None and key not in allowed:
                    raise ConfigError(f"{self.where(section, key)}unknown field "
                                      f"{section}.{key}")
            self.sections[section] = dict(body)

    def where(self, section, key=None):
        line = self.lines.get((section, key))
        return f"{self.path}:{line}: " if line else (f"{self.path}: " if self.path else "")

    def get(self, section):
        return dict(self.sections.get(section, {}))

    def build(self, section, factory, base=None, **flags):
        """Apply file values, then non-None flags, naming the bad field on error."""
        data = {} if base is None else base.to_dict()
        data.update(self.get(section))
        data.update({k: v for k, v in flags.items() if v is not None})
        try:
            return factory.from_dict(data)
        except (TypeError, ValueError) as exc:
            msg = str(exc)
            for key in self.sections.get(section, {}):
                if msg.startswith(f"{key}:") or f"'{key}'" in msg:
                    raise ConfigError(f"{self.where(section, key)}{section}.{msg}") from exc
            if isinstance(exc, ConfigError):
                raise ConfigError(f"{self.where(section)}{section}: {msg}") from exc
            raise ConfigError(f"{self.where(section)}{section}: invalid config: {msg}") \
                from exc


def _world_config(cfg, args):
    return cfg.build("world", WorldConfig, seed=args.seed)


def _model_config(cfg, args, preset="desk"):
    base = PRESETS[preset]()
    return cfg.build("model", type(base), base=base, seed=args.seed,
                     precision=args.precision, alpha=getattr(args, "alpha", None))


def _train_config(cfg, args):
    return cfg.build("train", TrainConfig, seed=args.seed, alpha=getattr(args, "alpha", None),
                     epochs=getattr(args, "epochs", None))


# -- outputs and manifests ---------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Tracks one command's outputs and writes its manifest."""

    def __init__(self, args, names):
        self.args = args
        self.command = args.command
        self.out = args.out
        self.started = time.perf_counter()
        self.inputs = {}
        self.outputs = {}
        self.config = {}
        paths = [os.path.join(self.out, n) for n in list(names) + [MANIFEST]]
        existing = [p for p in paths if os.path.exists(p)]
        if existing and not args.force:
            raise InvalidArgumentError(f"refusing to overwrite {', '.join(existing)} "
                                       f"(pass --force)")
        os.makedirs(self.out, exist_ok=True)

    def path(self, name):
        return os.path.join(self.out, name)

    def add_input(self, role, path):
        self.inputs[role] = {"path": os.path.abspath(path), "sha256": _sha256(path)}

    def wrote(self, name):
        self.outputs[name] = {"path": os.path.abspath(self.path(name)),
                              "sha256": _sha256(self.path(name))}

    def write_text(self, name, text):
        with open(self.path(name), "w") as fh:
            fh.write(text)
        self.wrote(name)

    def write_json(self, name, obj):
        self.write_text(name, json.dumps(obj, sort_keys=True, indent=1) + "\n")

    def finish(self):
        manifest = {
            "command": self.command,
            "config": self.config,
            "seed": self.args.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "tool_version": __version__,
            "duration_seconds": time.perf_counter() - self.started,
            "argv": getattr(self.args, "argv", None),
        }
        with open(self.path(MANIFEST), "w") as fh:
            fh.write(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
        return 0


def _load_dataset(path, run=None, role="data"):
    header, groups = read_dataset(path)
    if run is not None:
        run.add_input(role, path)
    return header, groups


def _check_dims(groups, lc, path):
    for g in groups:
        if (g.query_features.shape != (lc.query_feature_dim,)
                or g.item_features.shape[1] != lc.item_feature_dim):
            raise ConfigError(
                f"{path}: query {g.query_id} has query/item feature dims "
                f"{g.query_features.shape[0]}/{g.item_features.shape[1]}, model expects "
                f"{lc.query_feature_dim}/{lc.item_feature_dim}")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InvalidArgumentError(f"expected a comma-separated list of numbers, got "
                                   f"{text!r}") from exc


# -- commands ----------------------------------------------------------------

def cmd_gen_data(args):
    cfg = ConfigFile(args.config)
    wc = _world_config(cfg, args)
    if args.num_queries is not None:
        wc = wc.replace(num_queries=args.num_queries)
    splits = ("train", "eval") if args.split == "both" else (args.split,)
    run = Run(args, [f"{s}.jsonl" for s in splits])
    run.config = {"world": wc.to_dict()}
    for split in splits:
        groups = generate_dataset(wc, split)
        write_dataset(run.path(f"{split}.jsonl"), groups, wc, split)
        run.wrote(f"{split}.jsonl")
        print(f"{split}: {len(groups)} queries -> {run.path(f'{split}.jsonl')} "
              f"sha256={run.outputs[f'{split}.jsonl']['sha256'][:16]}")
    return run.finish()


def _param_count(lc):
    return LtcsModel(lc.replace(precision=32)).params.size()


def cmd_train(args):
    cfg = ConfigFile(args.config)
    lc = _model_config(cfg, args, args.preset)
    tc = _train_config(cfg, args)
    if args.preset == "paper":
        n = _param_count(lc)
        print(f"paper preset: {n} parameters "
              f"(initial widths {lc.initial_hidden_widths}, {lc.encoder_layers} encoder "
              f"layers x {lc.attention_heads} heads, K={lc.top_k}); not training")
        run = Run(args, ["architecture.json"])
        run.config = {"model": lc.to_dict(), "train": tc.to_dict()}
        run.write_json("architecture.json", {"preset": "paper", "parameters": n,
                                             "model": lc.to_dict()})
        return run.finish()
    if args.data is None:
        raise InvalidArgumentError("train needs --data")
    run = Run(args, ["checkpoint.ltcs", "metrics.json"])
    run.config = {"model": lc.to_dict(), "train": tc.to_dict()}
    _, groups = _load_dataset(args.data, run)
    _check_dims(groups, lc, args.data)
    eval_groups = None
    if args.eval_data:
        _, eval_groups = _load_dataset(args.eval_data, run, "eval_data")
        _check_dims(eval_groups, lc, args.eval_data)
    ckpt = train_baseline(args.baseline, groups, lc, tc, eval_dataset=eval_groups)
    save_checkpoint(ckpt, run.path("checkpoint.ltcs"))
    run.wrote("checkpoint.ltcs")
    metrics = {"kind": args.baseline, "history": ckpt.history}
    if eval_groups is not None:
        metrics["eval"] = evaluate_model(ckpt.model(), eval_groups,
                                         train_config=ckpt.train_config).to_dict()
    run.write_json("metrics.json", metrics)
    last = ckpt.history[-1] if ckpt.history else {}
    print(f"trained {args.baseline}: {len(ckpt.history)} epochs, final loss "
          f"{last.get('loss', float('nan')):.4f} -> {run.path('checkpoint.ltcs')}")
    if "eval" in metrics:
        print(f"eval NDCG end-to-end {metrics['eval']['ndcg_end_to_end']:.4f} "
              f"initial-only {metrics['eval']['ndcg_initial_only']:.4f}")
    return run.finish()


def _checkpoint(path, run, precision=None):
    ckpt = load_checkpoint(path)
    run.add_input("checkpoint", path)
    model = ckpt.model()
    if precision is not None and precision != ckpt.ltcs_config.precision:
        model = model.with_precision(precision)
    return ckpt, model


def cmd_eval(args):
    run = Run(args, ["eval.json"])
    ckpt, model = _checkpoint(args.checkpoint, run, args.precision)
    header, groups = _load_dataset(args.data, run)
    _check_dims(groups, model.config, args.data)
    rep = evaluate_model(model, groups, train_config=ckpt.train_config)
    out = rep.to_dict(per_query=True)
    wc = world_config_of(header)
    if wc is not None:
        out["oracle_ndcg"] = oracle_optimal_ndcg(wc, groups)
    run.config = {"model": model.config.to_dict(), "train": ckpt.train_config.to_dict()}
    run.write_json("eval.json", out)
    print(f"NDCG end-to-end {rep.ndcg_end_to_end:.4f}  initial-only "
          f"{rep.ndcg_initial_only:.4f}  over {len(groups)} queries"
          + (f"  (oracle {out['oracle_ndcg']:.4f})" if "oracle_ndcg" in out else ""))
    return run.finish()


def _seed_list(args, n):
    first = 0 if args.seed is None else args.seed
    return list(range(first, first + n))


def _rows_csv(rows, columns):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def _train_eval_data(args, run, lc):
    _, train_groups = _load_dataset(args.data, run)
    _, eval_groups = _load_dataset(args.eval_data, run, "eval_data")
    _check_dims(train_groups, lc, args.data)
    _check_dims(eval_groups, lc, args.eval_data)
    return train_groups, eval_groups


def cmd_sweep(args):
    cfg = ConfigFile(args.config)
    section = cfg.get("sweep")
    parameter = args.param or section.get("parameter")
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}, got "
                          f"{parameter!r}")
    grid = _floats(args.grid) if args.grid else section.get("grid")
    if not grid:
        raise ConfigError("sweep needs a grid (--grid or sweep.grid)")
    if parameter != "alpha":
        if any(float(v) != int(v) for v in grid):
            raise ConfigError(f"{parameter} grid values must be integers, got {grid}")
        grid = [int(v) for v in grid]
    num_seeds = args.num_seeds or section.get("num_seeds", 3)
    with_baseline = args.baseline or bool(section.get("baseline", False))
    lc = _model_config(cfg, args)
    tc = _train_config(cfg, args)
    run = Run(args, ["sweep.csv", "sweep.json"])
    run.config = {"model": lc.to_dict(), "train": tc.to_dict(),
                  "sweep": {"parameter": parameter, "grid": grid, "num_seeds": num_seeds,
                            "baseline": with_baseline}}
    train_groups, eval_groups = _train_eval_data(args, run, lc)
    res = sweep(parameter, grid, _seed_list(args, num_seeds), train_groups, eval_groups, lc,
                tc, jobs=args.jobs, with_baseline=with_baseline)
    run.write_text("sweep.csv", res.to_csv())
    run.write_text("sweep.json", res.to_json() + "\n")
    for row in res.summary():
        print(f"{parameter}={row['value']}: end-to-end {row['ndcg_end_to_end_mean']:.4f} "
              f"± {row['ndcg_end_to_end_stdev']:.4f}  initial-only "
              f"{row['ndcg_initial_only_mean']:.4f} ± {row['ndcg_initial_only_stdev']:.4f}")
    return run.finish()


def cmd_stability(args):
    cfg = ConfigFile(args.config)
    section = cfg.get("stability")
    alphas = _floats(args.alphas) if args.alphas else section.get("alphas", [0.5, 1.0])
    num_seeds = args.num_seeds or section.get("num_seeds", 5)
    lc = _model_config(cfg, args)
    tc = _train_config(cfg, args)
    run = Run(args, ["stability.csv", "stability.json"])
    run.config = {"model": lc.to_dict(), "train": tc.to_dict(),
                  "stability": {"alphas": alphas, "num_seeds": num_seeds}}
    train_groups, eval_groups = _train_eval_data(args, run, lc)
    first = 0 if args.seed is None else args.seed
    table, res = stability_report(alphas, num_seeds, train_groups, eval_groups, lc, tc,
                                  jobs=args.jobs, first_seed=first)
    run.write_text("stability.csv", _rows_csv(table, list(table[0])))
    run.write_json("stability.json", {"table": table, "rows": res.rows()})
    for row in table:
        print(f"alpha={row['alpha']}: end-to-end {row['ndcg_end_to_end_mean']:.4f}, "
              f"stdev over {num_seeds} seeds {row['ndcg_end_to_end_stdev']:.5f}")
    return run.finish()


def cmd_bayes_check(args):
    section = ConfigFile(args.config).get("bayes")
    k = args.k if args.k is not None else section.get("k")
    worlds = bundled_worlds()
    if args.world_file:
        try:
            with open(args.world_file) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read world file {args.world_file}: {exc}") from exc
        docs = doc if isinstance(doc, list) else [doc]
        try:
            selected = [DiscreteWorld.from_dict(d) for d in docs]
        except (KeyError, TypeError) as exc:
            raise DataError(f"{args.world_file}: malformed world: {exc}") from exc
    else:
        names = args.world or section.get("worlds") or list(worlds)
        unknown = [n for n in names if n not in worlds]
        if unknown:
            raise ConfigError(f"unknown world(s) {unknown}; bundled: {sorted(worlds)}")
        selected = [worlds[n] for n in names]
    run = Run(args, ["bayes.json"])
    if args.world_file:
        run.add_input("world_file", args.world_file)
    run.config = {"bayes": {"worlds": [w.name for w in selected], "k": k}}
    results, broken = [], []
    for w in selected:
        dev = bayes_factorization_check(w, k)
        expected = ("independent" if w.name in CONDITIONALLY_INDEPENDENT
                    else "violating" if w.name in worlds else "unknown")
        results.append({"world": w.name, "max_deviation": dev, "expected": expected,
                        "items": w.num_items, "alphabet": w.alphabet_size})
        print(f"{w.name}: max |ratio - 1| = {dev:.3e} ({expected})")
        if expected == "independent" and not dev <= 1e-9:
            broken.append(w.name)
    run.write_json("bayes.json", {"results": results})
    run.finish()
    if broken:
        raise NumericalError(f"factorization deviates beyond 1e-9 on {broken}")
    return 0


def _served_ndcg(ranking_ids, group):
    pos = group.positive
    if pos is None:
        return None
    hits = np.flatnonzero(ranking_ids == group.item_ids[pos])
    return ndcg_single(int(hits[0]) + 1) if len(hits) else 0.0


def cmd_serve_sim(args):
    cfg = ConfigFile(args.config)
    section = cfg.get("serve")
    shards = args.shards or section.get("shards", 1)
    policy = args.failure_policy or section.get("failure_policy", "fail")
    transport = args.transport or section.get("transport", "inprocess")
    fail = args.fail_shard or section.get("fail_shards", [])
    run = Run(args, ["rankings.jsonl", "serve.json"])
    ckpt, model = _checkpoint(args.checkpoint, run, args.precision)
    top_k = args.top_k or section.get("top_k") or model.config.top_k
    _, groups = _load_dataset(args.data, run)
    _check_dims(groups, model.config, args.data)
    cluster = Cluster(model, shards, top_k, policy, transport=transport, workers=args.jobs)
    for s in fail:
        if not 0 <= s < shards:
            raise ConfigError(f"--fail-shard {s} is not a shard id (0..{shards - 1})")
        cluster.fail_shard(s)
    run.config = {"model": model.config.to_dict(),
                  "serve": {"shards": shards, "top_k": top_k, "failure_policy": policy,
                            "transport": transport, "fail_shards": list(fail)}}
    lines, scores, degraded = [], [], 0
    master_attn, leaf_max, total_emb = set(), 0, 0
    for g in groups:
        res = cluster.serve(g)
        lines.append(json.dumps({"query_id": int(g.query_id),
                                 "ranking": [int(i) for i in res.ranking],
                                 "degraded": res.degraded}))
        score = _served_ndcg(res.ranking.astype(np.int64), g)
        if score is not None:
            scores.append(score)
        degraded += res.degraded
        master_attn.add(res.accounting["master"]["attention_scores"])
        leaf_max = max(leaf_max, max(leaf["candidates"] for leaf in res.accounting["leaves"]))
        total_emb += res.accounting["total_embeddings"]
        if res.accounting["master"]["embeddings"]:
            raise NumericalError("master recomputed embeddings")
    run.write_text("rankings.jsonl", "\n".join(lines) + "\n")
    summary = {"queries": len(groups), "ndcg": float(np.mean(scores)) if scores else None,
               "degraded_queries": degraded, "master_attention_scores": sorted(master_attn),
               "max_candidates_per_shard": leaf_max, "leaf_embeddings": total_emb,
               "master_embeddings": 0}
    run.write_json("serve.json", summary)
    print(f"served {len(groups)} queries on {shards} shard(s), K={top_k}: NDCG "
          f"{summary['ndcg']:.4f}, degraded {degraded}, master attention scores "
          f"{sorted(master_attn)}")
    return run.finish()


# -- parser ------------------------------------------------------------------

def _common(p):
    p.add_argument("--seed", type=int, default=None, help="random seed (overrides config)")
    p.add_argument("--config", default=None, help="YAML config file or a run manifest")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1)")
    p.add_argument("--precision", type=int, choices=(32, 64), default=None,
                   help="floating-point width of model parameters")


def build_parser():
    parser = argparse.ArgumentParser(prog="ltcs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ltcs {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="log progress (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-data", help="generate train/eval datasets from the synthetic world")
    _common(p)
    p.add_argument("--split", choices=("train", "eval", "both"), default="both",
                   help="which split(s) to write (default both)")
    p.add_argument("--num-queries", type=int, default=None,
                   help="training queries (overrides world.num_queries)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a ranking system and write a checkpoint")
    _common(p)
    p.add_argument("--data", help="training dataset (JSONL)")
    p.add_argument("--eval-data", help="optional eval dataset for per-epoch NDCG")
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk",
                   help="architecture preset; 'paper' only builds and counts parameters")
    p.add_argument("--alpha", type=float, default=None, help="re-ranker loss weight in [0, 1]")
    p.add_argument("--epochs", type=int, default=None, help="training epochs")
    p.add_argument("--baseline", choices=BASELINES, default="ltcs",
                   help="system to train (default ltcs)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="hyperparameter sweep over seeds")
    _common(p)
    p.add_argument("--param", choices=SWEEP_PARAMETERS, default=None)
    p.add_argument("--grid", default=None, help="comma-separated values, e.g. 2,5,10")
    p.add_argument("--num-seeds", type=int, default=None, help="seeds per cell (>= 3)")
    p.add_argument("--baseline", action="store_true",
                   help="also train pointwise_only per seed and report gains")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--eval-data", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stability", help="per-alpha cross-seed NDCG spread")
    _common(p)
    p.add_argument("--alphas", default=None, help="comma-separated alpha values")
    p.add_argument("--num-seeds", type=int, default=None, help="seeds per alpha (>= 5)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--eval-data", required=True)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("bayes-check", help="verify the score factorization by enumeration")
    _common(p)
    p.add_argument("--world", action="append", default=None,
                   help="bundled world name (repeatable; default: all)")
    p.add_argument("--world-file", default=None, help="JSON world (or list of worlds)")
    p.add_argument("--k", type=int, default=None, help="only the first k items")
    p.set_defaults(func=cmd_bayes_check)

    p = sub.add_parser("serve-sim", help="serve a dataset through leaf shards and a master")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--shards", type=int, default=None, help="number of leaf shards")
    p.add_argument("--top-k", type=int, default=None, help="re-rank depth K")
    p.add_argument("--failure-policy", choices=POLICIES, default=None,
                   help="on shard failure: fail the query or degrade (default fail)")
    p.add_argument("--fail-shard", type=int, action="append", default=None,
                   help="simulate an outage of this shard id (repeatable)")
    p.add_argument("--transport", choices=("inprocess", "socket"), default=None)
    p.set_defaults(func=cmd_serve_sim)
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[
        min(args.verbose, 2)], format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print(f"ltcs {args.command}: --jobs must be >= 1", file=sys.stderr)
        return InvalidArgumentError.exit_code
    try:
        return args.func(args) or 0
    except LtcsError as exc:
        print(f"ltcs {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"ltcs {args.command}: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
