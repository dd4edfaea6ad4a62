"""Exhaustive-enumeration check of the re-ranker score factorization.

A ``DiscreteWorld`` is an explicit joint table ``P(x_1, ..., x_k, E | q)`` for
one query, with each item feature drawn from a finite alphabet and ``E`` the
binary purchase event. For every split of the items into a focal item ``x``
and its context ``C`` (the other items), the check computes::

    P(E | x, C) * P(E) / (P(E | x) * P(E | C))

from marginals of the table. When items are independent given ``q`` and
given ``(q, E)``, this ratio is 1 for every configuration, i.e. the
re-ranker probability is the product of the pointwise probability and the
context term, divided by the prior.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidArgumentError, ResourceError

MAX_OUTCOMES = 1_000_000


@dataclass
class DiscreteWorld:
    name: str
    joint: np.ndarray

    def __post_init__(self):
        self.joint = np.asarray(self.joint, dtype=np.float64)
        if self.joint.ndim < 2 or self.joint.shape[-1] != 2:
            raise ConfigError("joint table must have shape (a, ..., a, 2)")
        a = self.joint.shape[0]
        if any(s != a for s in self.joint.shape[:-1]):
            raise ConfigError("all item axes must share one alphabet size")
        if np.any(self.joint < 0):
            raise ConfigError(f"world {self.name!r}: negative probabilities")
        total = self.joint.sum()
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"world {self.name!r}: table sums to {total!r}, not 1")

    @property
    def alphabet_size(self):
        return self.joint.shape[0]

    @property
    def num_items(self):
        return self.joint.ndim - 1

    def to_dict(self):
        return {"name": self.name, "kind": "joint", "shape": list(self.joint.shape),
                "joint": self.joint.reshape(-1).tolist()}

    @classmethod
    def from_dict(cls, data):
        kind = data.get("kind", "joint")
        name = data.get("name", "world")
        if kind == "joint":
            return cls(name, np.asarray(data["joint"], dtype=np.float64).reshape(data["shape"]))
        if kind == "factorized":
            return factorized_world(name, data["marginals"], data["booked_marginals"],
                                    data["prior"])
        raise ConfigError(f"unknown world kind {kind!r}")


def _outer(tables):
    out = np.asarray(tables[0], dtype=np.float64)
    for t in tables[1:]:
        out = np.multiply.outer(out, np.asarray(t, dtype=np.float64))
    return out


def factorized_world(name, marginals, booked_marginals, prior):
    """World with items independent given ``q`` and given ``(q, E)``.

    ``marginals[l]`` is ``P(x_l | q)``, ``booked_marginals[l]`` is
    ``P(x_l | E, q)`` and ``prior`` is ``P(E | q)``. The non-purchase slice
    is whatever remains, which must be non-negative.
    """
    marginals = np.asarray(marginals, dtype=np.float64)
    booked = np.asarray(booked_marginals, dtype=np.float64)
    if marginals.shape != booked.shape or marginals.ndim != 2:
        raise ConfigError("marginal tables must both have shape (k, a)")
    for t in (marginals, booked):
        if np.any(np.abs(t.sum(axis=1) - 1.0) > 1e-12):
            raise ConfigError("each marginal table row must sum to 1")
    if not 0.0 < prior < 1.0:
        raise ConfigError(f"prior must lie in (0, 1), got {prior}")
    p_x = _outer(marginals)
    p_e1 = prior * _outer(booked)
    p_e0 = p_x - p_e1
    if np.any(p_e0 < -1e-15):
        raise ConfigError(f"world {name!r}: prior {prior} too large for these tables")
    return DiscreteWorld(name, np.stack([np.maximum(p_e0, 0.0), p_e1], axis=-1))


def independent_world(name, marginals, prior):
    """``E`` independent of every item feature."""
    return factorized_world(name, marginals, marginals, prior)


def correlated_world(name="correlated_items", copy_prob=0.9, prior=0.2, seed=7):
    """Items that are dependent given ``q``: item 2 tends to copy item 1.

    Purchase depends on both items, so the factorization's independence
    premise fails.
    """
    rng = np.random.default_rng(seed)
    a = 2
    p1 = np.array([0.5, 0.5])
    copy = copy_prob * np.eye(a) + (1.0 - copy_prob) / a
    p_x = p1[:, None] * copy
    buy = rng.uniform(0.05, 0.95, size=(a, a))
    buy *= prior / (p_x * buy).sum()
    return DiscreteWorld(name, np.stack([p_x * (1.0 - buy), p_x * buy], axis=-1))


def _random_tables(rng, k, a):
    t = rng.uniform(0.2, 1.0, size=(k, a))
    return t / t.sum(axis=1, keepdims=True)


def bundled_worlds():
    """Worlds shipped with the package, keyed by name."""
    rng = np.random.default_rng(2024)
    worlds = {}
    worlds["independence"] = independent_world("independence", _random_tables(rng, 3, 3),
                                               0.3)
    # hand-built binary pair
    worlds["binary_pair"] = factorized_world(
        "binary_pair", [[0.6, 0.4], [0.3, 0.7]], [[0.2, 0.8], [0.5, 0.5]], 0.25)
    p = _random_tables(rng, 4, 3)
    r = _random_tables(rng, 4, 3)
    # largest prior keeping the non-purchase slice non-negative
    cap = float((_outer(p) / _outer(r)).min())
    worlds["ternary_four"] = factorized_world("ternary_four", p, r, 0.9 * cap)
    worlds["correlated_items"] = correlated_world()
    return worlds


CONDITIONALLY_INDEPENDENT = ("independence", "binary_pair", "ternary_four")
VIOLATING = ("correlated_items",)


def bayes_factorization_check(world, k=None, details=None):
    """Max ``|ratio - 1|`` over every focal item and every configuration.

    ``k`` optionally restricts the check to the first ``k`` items (the rest
    are marginalized out). Configurations of zero probability are skipped.
    """
    joint = world.joint
    if k is not None:
        if not 1 <= k <= world.num_items:
            raise InvalidArgumentError(f"k={k} outside 1..{world.num_items}")
        joint = joint.sum(axis=tuple(range(k, world.num_items)))
    kk = joint.ndim - 1
    if world.alphabet_size ** kk > MAX_OUTCOMES:
        raise ResourceError(f"{world.alphabet_size}^{kk} configurations exceed the "
                            f"enumeration limit of {MAX_OUTCOMES}")
    e1 = joint[..., 1]
    px = joint.sum(axis=-1)
    prior = e1.sum()
    support = px > 0
    p_full = np.divide(e1, px, out=np.zeros_like(e1), where=support)
    worst = 0.0
    for j in range(kk):
        others = tuple(ax for ax in range(kk) if ax != j)
        shape_j = [1] * kk
        shape_j[j] = world.alphabet_size
        pe_x = (e1.sum(axis=others) / px.sum(axis=others)).reshape(shape_j) if others else \
            e1 / px
        if kk > 1:
            pe_c = np.expand_dims(e1.sum(axis=j) / px.sum(axis=j), j)
        else:
            pe_c = np.full([1] * kk, prior)
        ratio = p_full * prior / (pe_x * pe_c)
        dev = float(np.abs(ratio[support] - 1.0).max())
        if details is not None:
            details[j] = dev
        worst = max(worst, dev)
    return worst
