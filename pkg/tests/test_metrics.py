import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ltcs.errors import InvalidArgumentError
from ltcs.metrics import ndcg, ndcg_single


def test_examples():
    assert ndcg([0, 1], [1, 0]) == 1.0
    assert ndcg([1, 0], [1, 0]) == pytest.approx(0.63093, abs=1e-5)
    labels = np.zeros(50)
    labels[0] = 1
    order = list(range(1, 50)) + [0]
    assert ndcg(order, labels) == pytest.approx(1 / math.log2(51), rel=1e-12)


def test_no_positive_is_error():
    with pytest.raises(InvalidArgumentError):
        ndcg([0, 1], [0, 0])


def test_not_a_permutation():
    with pytest.raises(InvalidArgumentError):
        ndcg([0, 0], [1, 0])
    with pytest.raises(InvalidArgumentError):
        ndcg([0], [1, 0])


def test_multiple_positives_ideal():
    assert ndcg([2, 0, 1], [1, 0, 1]) == 1.0
    assert ndcg([1, 0, 2], [1, 0, 1]) < 1.0


@given(st.integers(1, 60), st.data())
def test_single_positive_monotone(n, data):
    pos = data.draw(st.integers(0, n - 1))
    labels = np.zeros(n)
    labels[pos] = 1
    values = []
    for place in range(n):
        order = [i for i in range(n) if i != pos]
        order.insert(place, pos)
        values.append(ndcg(order, labels))
        assert values[-1] == pytest.approx(ndcg_single(place + 1), rel=1e-12)
    assert values[0] == 1.0
    assert all(a > b for a, b in zip(values, values[1:]))
    assert all(0 < v <= 1 for v in values)
