"""Synthetic comparison-shopping world.

Users first score every item independently (utility ``u``), keep the best
``c`` as a consideration set, then compare within that set: each considered
item's utility is shifted by how far its comparison feature sits above the set
mean. The booked item is drawn from a softmax over the shifted utilities.
"""
import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError, DataError, InvalidArgumentError
from .metrics import ndcg
from .model import QueryGroup

DATASET_FORMAT = "ltcs-dataset"
DATASET_VERSION = 1
EVAL_ID_OFFSET = 1_000_000


@dataclass
class WorldConfig:
    num_queries: int = 2000
    eval_queries: int = 1000
    items_per_query: int = 50
    query_feature_dim: int = 4
    item_feature_dim: int = 12
    pointwise_weight_vector: list = None
    query_interaction: float = 0.5
    consideration_size: int = 3
    comparison_strength: float = 1.5
    comparison_feature_index: int = 0
    noise_scale: float = 0.05
    temperature: float = 1.0
    seed: int = 0

    def validate(self):
        for name in ("num_queries", "items_per_query", "query_feature_dim",
                     "item_feature_dim", "consideration_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1, got {getattr(self, name)}")
        if self.eval_queries < 0:
            raise ConfigError(f"eval_queries: must be >= 0, got {self.eval_queries}")
        if self.consideration_size > self.items_per_query:
            raise ConfigError(f"consideration_size: {self.consideration_size} exceeds "
                              f"items_per_query {self.items_per_query}")
        if not 0 <= self.comparison_feature_index < self.item_feature_dim:
            raise ConfigError(f"comparison_feature_index: {self.comparison_feature_index} "
                              f"out of range for item_feature_dim {self.item_feature_dim}")
        for name in ("comparison_strength", "noise_scale", "temperature"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be >= 0, got {getattr(self, name)}")
        w = self.pointwise_weight_vector
        if w is not None and len(w) != self.item_feature_dim:
            raise ConfigError(f"pointwise_weight_vector: length {len(w)} != "
                              f"item_feature_dim {self.item_feature_dim}")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown WorldConfig field(s): {sorted(unknown)}")
        return cls(**data).validate()

    def replace(self, **changes):
        data = self.to_dict()
        data.update(changes)
        return WorldConfig.from_dict(data)


def world_parameters(config):
    """Fixed per-world weights: pointwise vector ``w`` and query interaction ``M``."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0,)))
    w = rng.normal(size=config.item_feature_dim)
    w /= np.linalg.norm(w)
    interaction = rng.normal(size=(config.query_feature_dim, config.item_feature_dim))
    interaction /= np.sqrt(config.item_feature_dim)
    if config.pointwise_weight_vector is not None:
        w = np.asarray(config.pointwise_weight_vector, dtype=np.float64)
    return w, interaction


def query_latent(config, query_id, params=None):
    """Features and all latent quantities of one query.

    Randomness comes only from ``(seed, query_id)``, so any query can be
    regenerated independently of the others.
    """
    w, interaction = world_parameters(config) if params is None else params
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1, query_id)))
    n, c = config.items_per_query, config.consideration_size
    q = rng.normal(size=config.query_feature_dim)
    x = rng.normal(size=(n, config.item_feature_dim))
    noise = rng.normal(size=n)
    draw = rng.random()
    u = x @ w + config.query_interaction * (x @ (interaction.T @ q)) + config.noise_scale * noise
    considered = np.argsort(-u, kind="stable")[:c]
    feat = x[considered, config.comparison_feature_index]
    v = u[considered] + config.comparison_strength * (feat - feat.mean())
    probs = np.zeros(n)
    if config.temperature == 0:
        booked = considered[int(np.argmax(v))]
        probs[booked] = 1.0
    else:
        z = (v - v.max()) / config.temperature
        p = np.exp(z)
        probs[considered] = p / p.sum()
        cdf = np.cumsum(probs[considered])
        booked = considered[min(int(np.searchsorted(cdf, draw * cdf[-1], side="right")), c - 1)]
    return {"q": q, "x": x, "u": u, "considered": considered, "v": v, "probs": probs,
            "booked": int(booked)}


def split_ids(config, split):
    if split == "train":
        return range(config.num_queries)
    if split == "eval":
        return range(EVAL_ID_OFFSET, EVAL_ID_OFFSET + config.eval_queries)
    raise InvalidArgumentError(f"unknown split {split!r}")


def generate_dataset(config, split="train"):
    """Return a list of QueryGroup, each with exactly one booked item."""
    config.validate()
    params = world_parameters(config)
    groups = []
    for qid in split_ids(config, split):
        lat = query_latent(config, qid, params)
        labels = np.zeros(config.items_per_query, dtype=np.int64)
        labels[lat["booked"]] = 1
        groups.append(QueryGroup(qid, lat["q"], np.arange(config.items_per_query),
                                 lat["x"], labels))
    return groups


def oracle_optimal_ndcg(config, dataset):
    """Mean NDCG of ranking every query by its true booking probability."""
    params = world_parameters(config)
    scores = []
    for g in dataset:
        lat = query_latent(config, g.query_id, params)
        if (lat["x"].shape != g.item_features.shape
                or not np.array_equal(lat["x"], g.item_features)
                or not np.array_equal(lat["q"], g.query_features)):
            raise InvalidArgumentError(f"query {g.query_id} was not generated by this world")
        ranking = np.argsort(-lat["probs"], kind="stable")
        scores.append(ndcg(ranking, g.labels))
    return float(np.mean(scores))


def write_dataset(path, groups, config, split="train"):
    header = {"format": DATASET_FORMAT, "version": DATASET_VERSION, "split": split,
              "world_config": None if config is None else config.to_dict()}
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for g in groups:
            rec = {
                "query_id": int(g.query_id),
                "query_features": g.query_features.tolist(),
                "items": [{"item_id": int(i), "features": f.tolist()}
                          for i, f in zip(g.item_ids, g.item_features)],
                "labels": g.labels.tolist(),
            }
            fh.write(json.dumps(rec) + "\n")


def read_dataset(path):
    """Return ``(header, groups)``."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    if not lines:
        raise DataError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:1: bad header: {exc}") from exc
    if header.get("format") != DATASET_FORMAT:
        raise DataError(f"{path}: not an LTCS dataset")
    if header.get("version") != DATASET_VERSION:
        raise DataError(f"{path}: dataset version {header.get('version')} is not supported "
                        f"(expected {DATASET_VERSION})")
    groups = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
            items = rec["items"]
            groups.append(QueryGroup(
                rec["query_id"], rec["query_features"], [it["item_id"] for it in items],
                np.array([it["features"] for it in items], dtype=np.float64).reshape(
                    len(items), -1),
                rec["labels"]).validate())
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: bad record: {exc}") from exc
    return header, groups


def world_config_of(header):
    wc = header.get("world_config")
    return None if wc is None else WorldConfig.from_dict(wc)
