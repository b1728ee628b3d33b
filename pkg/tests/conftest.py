import numpy as np
import pytest

from sceneaog import datasets, learning


@pytest.fixture(scope="session")
def bedroom_grammar():
    return datasets.make_bedroom_grammar()


@pytest.fixture(scope="session")
def small_corpus():
    return datasets.make_bedroom_corpus(40, random_state=3)


@pytest.fixture(scope="session")
def small_stats(small_corpus, bedroom_grammar):
    return learning.collect_stats(small_corpus, bedroom_grammar, datasets.bedroom_rules())


@pytest.fixture(scope="session")
def small_model(small_stats, bedroom_grammar):
    model = learning.fit_model(small_stats, bedroom_grammar, datasets.bedroom_rules())
    # a moderate hand-picked weight vector keeps every slot in play
    return model.with_weights([1.0, 0.0, 0.5, 0.5, 1.0, 0.5, 1.0, 1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance report ----------------------------------------------------------

_ACCEPTANCE = []


@pytest.fixture
def acceptance_report():
    """``report(number, name, ok, detail)`` records one PASS/FAIL line for the summary."""
    def report(number, name, ok, detail=""):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {name}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE.append((number, line))
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
