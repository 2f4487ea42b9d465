import numpy as np
import pytest
from hypothesis import settings

from gpcrbert.corpus import MotifKind, build_motif_dataset
from gpcrbert.model import Model, ModelConfig
from gpcrbert.synthetic import synthetic_motif_corpus
from gpcrbert.tokenizer import encode_all

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def synthetic_records():
    return synthetic_motif_corpus(16, 48)


@pytest.fixture(scope="session")
def npxxy_examples(synthetic_records):
    return encode_all(build_motif_dataset(synthetic_records, MotifKind.NPXXY), 52)


@pytest.fixture
def small_model():
    return Model.create(ModelConfig.tiny(max_len=52, d_model=16, n_heads=2), 7)


# ---------------------------------------------------------------- acceptance reporting

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Run a criterion body returning ``(passed, detail)``; record one verdict line and assert on it."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def check(key: str, title: str, body):
        try:
            passed, detail = body()
        except Exception as exc:  # an error is a failed criterion, reported like one
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        lines.append(f"{'PASS' if passed else 'FAIL'} {key} {title}: {detail}")
        assert passed, detail

    return check


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1][1:])):
            terminalreporter.write_line(line)
