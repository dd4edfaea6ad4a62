import math

import numpy as np

from .errors import InvalidArgumentError


def ndcg(ranking, labels):
    """Binary-gain NDCG over the full list with a ``log2(position + 1)`` discount."""
    labels = np.asarray(labels)
    ranking = np.asarray(ranking)
    n = len(labels)
    if len(ranking) != n or not np.array_equal(np.sort(ranking), np.arange(n)):
        raise InvalidArgumentError("ranking is not a permutation of the label indices")
    gains = labels[ranking].astype(np.float64)
    npos = int(gains.sum())
    if npos == 0:
        raise InvalidArgumentError("NDCG is undefined without a positive label")
    discounts = 1.0 / np.log2(np.arange(2, n + 2))
    dcg = float((gains * discounts).sum())
    idcg = float(discounts[:npos].sum())
    return dcg / idcg


def ndcg_single(position):
    """NDCG of one positive at 1-based ``position``."""
    return 1.0 / math.log2(position + 1)
