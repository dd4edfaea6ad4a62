"""Pointwise initial ranker, top-K selection and setwise transformer re-ranker."""
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError, DataError, InvalidArgumentError
from .nn import EXTENDED, Dense, Encoder, MLP, ParamStore

INITIAL_PREFIX = "initial."


@dataclass
class LtcsConfig:
    query_feature_dim: int = 4
    item_feature_dim: int = 12
    initial_hidden_widths: list = field(default_factory=lambda: [64, 32, 16])
    rerank_hidden_widths: list = field(default_factory=lambda: [32, 16])
    encoder_layers: int = 2
    attention_heads: int = 2
    top_k: int = 10
    alpha: float = 0.5
    smelu_beta: float = 1.0
    seed: int = 0
    precision: int = 32
    ffn_multiplier: int = 2
    layer_norm_eps: float = 1e-5
    final_encoder_norm: bool = True

    @property
    def embedding_dim(self):
        return self.initial_hidden_widths[-1]

    @property
    def dtype(self):
        return np.float32 if self.precision == 32 else np.float64

    def validate(self):
        if not self.initial_hidden_widths:
            raise ConfigError("initial_hidden_widths: at least one hidden layer is required")
        for name in ("initial_hidden_widths", "rerank_hidden_widths"):
            widths = getattr(self, name)
            if any(int(w) < 1 for w in widths):
                raise ConfigError(f"{name}: all widths must be >= 1, got {widths}")
        for name in ("query_feature_dim", "item_feature_dim", "attention_heads",
                     "ffn_multiplier"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1, got {getattr(self, name)}")
        if self.encoder_layers < 0:
            raise ConfigError(f"encoder_layers: must be >= 0, got {self.encoder_layers}")
        if self.top_k < 1:
            raise ConfigError(f"top_k: must be >= 1, got {self.top_k}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha: must lie in [0, 1], got {self.alpha}")
        if not self.smelu_beta > 0:
            raise ConfigError(f"smelu_beta: must be positive, got {self.smelu_beta}")
        if self.precision not in (32, 64):
            raise ConfigError(f"precision: must be 32 or 64, got {self.precision}")
        if self.embedding_dim % self.attention_heads:
            raise ConfigError(
                f"attention_heads: embedding width {self.embedding_dim} is not divisible "
                f"by {self.attention_heads} heads")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown LtcsConfig field(s): {sorted(unknown)}")
        cfg = cls(**data)
        cfg.initial_hidden_widths = [int(w) for w in cfg.initial_hidden_widths]
        cfg.rerank_hidden_widths = [int(w) for w in cfg.rerank_hidden_widths]
        return cfg.validate()

    def replace(self, **changes):
        data = self.to_dict()
        data.update(changes)
        return LtcsConfig.from_dict(data)


def desk_preset(**overrides):
    return LtcsConfig().replace(**overrides)


def paper_preset(**overrides):
    # feature dims stand in for the production feature set
    cfg = LtcsConfig(
        query_feature_dim=64,
        item_feature_dim=256,
        initial_hidden_widths=[2048, 1024, 512, 256, 64],
        rerank_hidden_widths=[256, 128, 64],
        encoder_layers=30,
        attention_heads=4,
        top_k=40,
        alpha=0.5,
    )
    return cfg.replace(**overrides)


PRESETS = {"desk": desk_preset, "paper": paper_preset}


@dataclass
class QueryGroup:
    query_id: int
    query_features: np.ndarray
    item_ids: np.ndarray
    item_features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.query_features = np.asarray(self.query_features, dtype=np.float64)
        self.item_features = np.asarray(self.item_features, dtype=np.float64)
        self.item_ids = np.asarray(self.item_ids, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def n(self):
        return len(self.item_ids)

    @property
    def positive(self):
        """Index of the single positive item, or None."""
        pos = np.flatnonzero(self.labels)
        return int(pos[0]) if len(pos) == 1 else None

    def validate(self, config=None, training=False):
        if self.item_features.ndim != 2 or self.item_features.shape[0] != self.n:
            raise DataError(f"query {self.query_id}: item feature matrix has shape "
                            f"{self.item_features.shape} for {self.n} items")
        if self.n == 0:
            raise DataError(f"query {self.query_id}: no items")
        if len(self.labels) != self.n:
            raise DataError(f"query {self.query_id}: {len(self.labels)} labels for "
                            f"{self.n} items")
        if np.any((self.labels != 0) & (self.labels != 1)):
            raise DataError(f"query {self.query_id}: labels must be 0 or 1")
        if training and int(self.labels.sum()) != 1:
            raise DataError(f"query {self.query_id}: training groups need exactly one "
                            f"positive, got {int(self.labels.sum())}")
        if config is not None:
            if self.query_features.shape != (config.query_feature_dim,):
                raise ConfigError(f"query {self.query_id}: query feature dim "
                                  f"{self.query_features.shape} != {config.query_feature_dim}")
            if self.item_features.shape[1] != config.item_feature_dim:
                raise ConfigError(f"query {self.query_id}: item feature dim "
                                  f"{self.item_features.shape[1]} != {config.item_feature_dim}")
        return self

    def permuted(self, perm):
        perm = np.asarray(perm)
        return QueryGroup(self.query_id, self.query_features, self.item_ids[perm],
                          self.item_features[perm], self.labels[perm])


@dataclass
class RankerOutputs:
    initial_logits: np.ndarray
    embeddings: np.ndarray
    top_k_indices: np.ndarray
    context_embeddings: np.ndarray
    rerank_logits: np.ndarray
    final_ranking: np.ndarray

    @property
    def initial_ranking(self):
        return initial_order(self.initial_logits)


def initial_order(logits):
    """All indices by descending logit, ties by ascending index."""
    return np.argsort(-np.asarray(logits), kind="stable")


def select_top_k(initial_logits, k):
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    return initial_order(initial_logits)[:k]


def merge_ranking(order, rerank_logits):
    """Re-ranked head of ``order`` followed by its untouched tail.

    The head is stably sorted by re-rank logit, so equal logits keep the
    initial order.
    """
    m = len(rerank_logits)
    head = order[:m][np.argsort(-np.asarray(rerank_logits), kind="stable")]
    return np.concatenate([head, order[m:]])


class LtcsModel:
    """Parameters plus the four networks of the two-stage ranker.

    ``initial.*`` parameters belong to the pointwise ranker (MLP body and
    bias-free logit head); everything else belongs to the re-ranker.
    """

    def __init__(self, config, params=None):
        self.config = config.validate()
        d_in = config.query_feature_dim + config.item_feature_dim
        d_e = config.embedding_dim
        beta = config.smelu_beta
        self.initial = MLP("initial.mlp", [d_in, *config.initial_hidden_widths], beta,
                           activate_last=True)
        self.head = Dense("initial.head", d_e, 1, bias=False)
        self.encoder = Encoder("encoder", d_e, config.encoder_layers, config.attention_heads,
                               config.ffn_multiplier * d_e, beta, config.layer_norm_eps,
                               config.final_encoder_norm)
        # listwise losses ignore a shared logit offset, so neither head has a bias
        self.rerank = MLP("rerank", [2 * d_e, *config.rerank_hidden_widths, 1], beta,
                          activate_last=False, last_bias=False)
        if params is None:
            params = ParamStore(config.dtype)
            rng = np.random.default_rng(config.seed)
            self.initial.init(params, rng)
            self.head.init(params, rng)
            self.encoder.init(params, rng)
            self.rerank.init(params, rng)
        elif params.dtype not in (np.dtype(config.dtype), EXTENDED):
            raise ConfigError(f"parameter dtype {params.dtype} does not match precision "
                              f"{config.precision}")
        self.params = params

    @property
    def dtype(self):
        return self.params.dtype

    def initial_param_names(self):
        return self.params.names(INITIAL_PREFIX)

    def rerank_param_names(self):
        return [n for n in self.params.names() if not n.startswith(INITIAL_PREFIX)]

    def with_precision(self, precision):
        cfg = self.config.replace(precision=precision)
        return LtcsModel(cfg, self.params.copy(cfg.dtype))

    def copy(self):
        return LtcsModel(self.config, self.params.copy())

    # -- initial ranker ---------------------------------------------------

    def _inputs(self, query_features, item_features):
        item_features = np.asarray(item_features, dtype=self.dtype)
        query_features = np.asarray(query_features, dtype=self.dtype)
        if item_features.ndim == 1:
            item_features = item_features[None, :]
        cfg = self.config
        if query_features.shape != (cfg.query_feature_dim,):
            raise ConfigError(f"query feature dim {query_features.shape} != "
                              f"{cfg.query_feature_dim}")
        if item_features.shape[1] != cfg.item_feature_dim:
            raise ConfigError(f"item feature dim {item_features.shape[1]} != "
                              f"{cfg.item_feature_dim}")
        q = np.broadcast_to(query_features, (item_features.shape[0], query_features.size))
        return np.ascontiguousarray(np.concatenate([q, item_features], axis=1))

    def initial_pass(self, query_features, item_features, counter=None):
        x = self._inputs(query_features, item_features)
        emb, c_mlp = self.initial.forward(self.params, x)
        logit, c_head = self.head.forward(self.params, emb)
        if counter is not None:
            counter.embeddings += x.shape[0]
            counter.mlp_rows += x.shape[0]
        return logit[:, 0], emb, (c_mlp, c_head)

    def initial_forward(self, query_features, item_features, counter=None):
        """Score items independently; returns ``(logits, embeddings)``.

        The embedding is the last hidden activation and the logit a bias-free
        linear function of it. One item (1-D features) or many (2-D) may be passed.
        """
        logits, emb, _ = self.initial_pass(query_features, item_features, counter)
        return logits, emb

    def initial_backward(self, cache, dlogits, demb=None):
        c_mlp, c_head = cache
        g = self.head.backward(self.params, c_head, np.asarray(dlogits, self.dtype)[:, None])
        if demb is not None:
            g = g + demb
        self.initial.backward(self.params, c_mlp, g, need_dx=False)

    # -- re-ranker --------------------------------------------------------

    def rerank_pass(self, top_embeddings, counter=None):
        e = np.ascontiguousarray(top_embeddings, dtype=self.dtype)
        if e.ndim != 2 or e.shape[0] == 0:
            raise InvalidArgumentError("rerank_forward needs at least one embedding")
        if e.shape[1] != self.config.embedding_dim:
            raise ConfigError(f"embedding width {e.shape[1]} != {self.config.embedding_dim}")
        ctx, c_enc = self.encoder.forward(self.params, e, counter)
        z = np.concatenate([e, ctx], axis=1)
        out, c_mlp = self.rerank.forward(self.params, z)
        if counter is not None:
            counter.mlp_rows += e.shape[0]
        return out[:, 0], ctx, (c_enc, c_mlp)

    def rerank_forward(self, top_embeddings, counter=None):
        """Re-rank logits and context embeddings for an ``m x d_e`` set."""
        logits, ctx, _ = self.rerank_pass(top_embeddings, counter)
        return logits, ctx

    def rerank_backward(self, cache, dlogits, need_input_grad=True):
        c_enc, c_mlp = cache
        dz = self.rerank.backward(self.params, c_mlp, np.asarray(dlogits, self.dtype)[:, None])
        d = self.config.embedding_dim
        de = dz[:, :d]
        de = de + self.encoder.backward(self.params, c_enc, np.ascontiguousarray(dz[:, d:]))
        return de if need_input_grad else None

    # -- composition ------------------------------------------------------

    def full_forward(self, group, k=None, counter=None):
        k = self.config.top_k if k is None else k
        logits, emb = self.initial_forward(group.query_features, group.item_features, counter)
        order = initial_order(logits)
        top = order[:k]
        rerank_logits, ctx = self.rerank_forward(emb[top], counter)
        return RankerOutputs(
            initial_logits=logits,
            embeddings=emb,
            top_k_indices=top,
            context_embeddings=ctx,
            rerank_logits=rerank_logits,
            final_ranking=merge_ranking(order, rerank_logits),
        )

    def rank(self, group, k=None, use_reranker=True):
        if not use_reranker:
            logits, _ = self.initial_forward(group.query_features, group.item_features)
            return initial_order(logits)
        return self.full_forward(group, k).final_ranking
