import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ltcs.model import LtcsConfig, LtcsModel, QueryGroup

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def tiny_config(**kw):
    base = dict(query_feature_dim=3, item_feature_dim=5, initial_hidden_widths=[8, 8],
                rerank_hidden_widths=[6], encoder_layers=2, attention_heads=2, top_k=4,
                precision=64, seed=0)
    base.update(kw)
    return LtcsConfig(**base)


def random_group(rng, n, config, qid=0, positive=True, item_ids=None):
    labels = np.zeros(n, dtype=np.int64)
    if positive:
        labels[rng.integers(n)] = 1
    ids = np.arange(n) if item_ids is None else item_ids
    return QueryGroup(qid, rng.normal(size=config.query_feature_dim), ids,
                      rng.normal(size=(n, config.item_feature_dim)), labels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny():
    return tiny_config()


@pytest.fixture
def tiny_model(tiny):
    return LtcsModel(tiny)


# -- acceptance reporting ---------------------------------------------------

_CRITERIA = {}


@pytest.fixture
def detail(request):
    """Callable that attaches a one-line measurement to the running criterion."""
    marker = request.node.get_closest_marker("criterion")

    def note(text):
        if marker is not None:
            _CRITERIA.setdefault(marker.args[0], {})["detail"] = text
    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.skipped:
        return
    entry = _CRITERIA.setdefault(marker.args[0], {})
    if rep.when == "call" or rep.failed:
        entry["passed"] = entry.get("passed", True) and rep.passed
        entry["title"] = marker.kwargs.get("title", item.name)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        status = "PASS" if e.get("passed") else "FAIL"
        line = f"criterion {n:>2} [PRIMARY] {status}  {e.get('title', '')}"
        if e.get("detail"):
            line += f"  ({e['detail']})"
        terminalreporter.write_line(line)
