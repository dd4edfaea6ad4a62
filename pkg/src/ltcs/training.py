"""Listwise losses, the weighted co-training objective and the training loop."""
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError, InvalidArgumentError, NumericalError
from .model import LtcsModel, initial_order

log = logging.getLogger(__name__)


def listwise_loss_and_grad(logits, labels):
    """Softmax cross-entropy ``-sum_j y_j log softmax(s)_j`` and its gradient.

    Computed in float64, or in the logits' dtype when that is wider.
    """
    s = np.asarray(logits)
    s = s.astype(np.result_type(s.dtype, np.float64), copy=False)
    y = np.asarray(labels, dtype=s.dtype)
    if s.shape != y.shape:
        raise InvalidArgumentError(f"logits {s.shape} and labels {y.shape} differ in shape")
    if s.ndim != 1 or s.size == 0:
        raise InvalidArgumentError("listwise loss needs a non-empty vector")
    total = y.sum()
    if total == 0:
        return 0.0, np.zeros_like(s)
    z = s - s.max()
    logp = z - np.log(np.exp(z).sum())
    loss = -(y * logp).sum()
    return loss, np.exp(logp) * total - y


def listwise_loss(logits, labels):
    return listwise_loss_and_grad(logits, labels)[0]


def combined_loss(loss_initial, loss_rerank, alpha):
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    return (1.0 - alpha) * loss_initial + alpha * loss_rerank


@dataclass
class TrainConfig:
    epochs: int = 8
    learning_rate: float = 3e-4
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    momentum: float = 0.0
    alpha: float = 0.5
    guided_topk: bool = True
    eq7_literal: bool = False
    detach_embeddings: bool = False
    groups_per_step: int = 1
    train_initial: bool = True
    train_rerank: bool = True
    zero_untrained_reranker: bool = True
    eval_every: int = 1
    seed: int = 0

    def validate(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs: must be >= 0, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate: must be > 0, got {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer: must be 'adam' or 'sgd', got {self.optimizer!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha: must lie in [0, 1], got {self.alpha}")
        if self.groups_per_step < 1:
            raise ConfigError("groups_per_step: must be >= 1")
        if self.eval_every < 0:
            raise ConfigError("eval_every: must be >= 0")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown TrainConfig field(s): {sorted(unknown)}")
        return cls(**data).validate()

    def replace(self, **changes):
        data = self.to_dict()
        data.update(changes)
        return TrainConfig.from_dict(data)


class Adam:
    def __init__(self, params, names, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.names = list(names)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {n: np.zeros_like(params[n]) for n in self.names}
        self.v = {n: np.zeros_like(params[n]) for n in self.names}
        self.t = 0

    def step(self, params):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for n in self.names:
            g = params.grad(n)
            m, v = self.m[n], self.v[n]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p = params[n]
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, params, names, lr, momentum=0.0):
        self.names = list(names)
        self.lr, self.momentum = lr, momentum
        self.buf = {n: np.zeros_like(params[n]) for n in self.names}

    def step(self, params):
        for n in self.names:
            b = self.buf[n]
            b *= self.momentum
            b += params.grad(n)
            params[n][...] -= self.lr * b


def make_optimizer(model, tc):
    names = []
    if tc.train_initial:
        names += model.initial_param_names()
    if tc.train_rerank:
        names += model.rerank_param_names()
    if tc.optimizer == "adam":
        return Adam(model.params, names, tc.learning_rate, tc.beta1, tc.beta2, tc.adam_eps)
    return SGD(model.params, names, tc.learning_rate, tc.momentum)


def training_selection(logits, labels, k, guided):
    """Top-k by current logits; optionally force the positive into the set."""
    sel = initial_order(logits)[:k].copy()
    if guided:
        pos = np.flatnonzero(labels)
        if len(pos) == 1 and pos[0] not in sel:
            sel[-1] = pos[0]
    return sel


def group_loss(model, group, alpha, *, guided=True, eq7_literal=False, detach=False,
               selection=None, k=None, backward=True):
    """Co-training loss of one query group, with gradients accumulated in place.

    The top-k selection is computed from the current initial logits (or taken
    from ``selection``) and treated as a constant; gradients reach the initial
    ranker through the selected embeddings unless ``detach`` is set.
    """
    k = model.config.top_k if k is None else k
    labels = group.labels
    logits, emb, c_init = model.initial_pass(group.query_features, group.item_features)
    sel = (training_selection(logits, labels, k, guided) if selection is None
           else np.asarray(selection))

    if eq7_literal:
        li, gi_sel = listwise_loss_and_grad(logits[sel], labels[sel])
        gi = np.zeros(len(logits))
        gi[sel] = gi_sel
    else:
        li, gi = listwise_loss_and_grad(logits, labels)

    lr = 0.0
    if alpha > 0:
        r_logits, _, c_re = model.rerank_pass(emb[sel])
        lr, gr = listwise_loss_and_grad(r_logits, labels[sel])
    total = combined_loss(li, lr, alpha)

    if backward:
        demb = None
        if alpha > 0:
            de_sel = model.rerank_backward(c_re, alpha * gr, need_input_grad=not detach)
            if not detach:
                demb = np.zeros_like(emb)
                demb[sel] += de_sel
        model.initial_backward(c_init, (1.0 - alpha) * gi, demb)
    return {"loss": total, "loss_initial": li, "loss_rerank": lr, "selection": sel}


@dataclass
class TrainResult:
    model: LtcsModel
    train_config: TrainConfig
    history: list = field(default_factory=list)

    def checkpoint(self, meta=None):
        from .checkpoint import Checkpoint
        return Checkpoint(ltcs_config=self.model.config, train_config=self.train_config,
                          params=self.model.params, history=self.history,
                          meta=dict(meta or {}))


def train(dataset, ltcs_config, train_config, model=None, eval_dataset=None):
    """Train both rankers on ``dataset`` (a list of QueryGroup).

    Deterministic given the configs: parameter init uses ``ltcs_config.seed``
    and the per-epoch shuffle uses ``train_config.seed``.
    """
    tc = train_config.validate()
    ltcs_config.validate()
    if not dataset:
        raise InvalidArgumentError("training dataset is empty")
    for g in dataset:
        g.validate(ltcs_config, training=True)
    if model is None:
        model = LtcsModel(ltcs_config)
    opt = make_optimizer(model, tc)
    rng = np.random.default_rng(tc.seed)
    history = []
    params = model.params
    step = 0
    for epoch in range(tc.epochs):
        order = rng.permutation(len(dataset))
        sums = np.zeros(3)
        params.zero_grads()
        pending = 0
        for idx in order:
            group = dataset[idx]
            out = group_loss(model, group, tc.alpha, guided=tc.guided_topk,
                             eq7_literal=tc.eq7_literal, detach=tc.detach_embeddings,
                             k=ltcs_config.top_k)
            if not np.isfinite(out["loss"]):
                raise NumericalError(f"non-finite loss at step {step} (epoch {epoch}, "
                                     f"query_id {group.query_id}): {out}")
            sums += (out["loss"], out["loss_initial"], out["loss_rerank"])
            pending += 1
            if pending == tc.groups_per_step:
                opt.step(params)
                params.zero_grads()
                pending = 0
                step += 1
        if pending:
            opt.step(params)
            params.zero_grads()
            step += 1
        record = {
            "epoch": epoch + 1,
            "loss": float(sums[0] / len(dataset)),
            "loss_initial": float(sums[1] / len(dataset)),
            "loss_rerank": float(sums[2] / len(dataset)),
        }
        if eval_dataset is not None and tc.eval_every and (epoch + 1) % tc.eval_every == 0:
            from .evaluation import evaluate_model
            rep = evaluate_model(model, eval_dataset)
            record["ndcg_end_to_end"] = rep.ndcg_end_to_end
            record["ndcg_initial_only"] = rep.ndcg_initial_only
        log.info("epoch %d: %s", epoch + 1, record)
        history.append(record)
    if tc.alpha == 0 and tc.zero_untrained_reranker:
        silence_reranker(model)
    # the loss weight actually used wins over the architecture config's copy
    model.config = model.config.replace(alpha=tc.alpha)
    return TrainResult(model=model, train_config=tc, history=history)


def silence_reranker(model):
    """Zero the re-ranker's output layer so every re-rank logit is 0.

    The stable merge then keeps the initial order, making an untrained
    re-ranker inert.
    """
    last = model.rerank.layers[-1].name
    model.params[f"{last}.W"][...] = 0.0
