import numpy as np
import pytest

from tinyrocket import kernels, quantize, ridge
from tinyrocket.pipeline import prepare
from tinyrocket.synth import SynthConfig, synth_generate


def random_windows(rng, n, length=80, channels=1, scale=2000.0):
    return (rng.standard_normal((n, channels, length)) * scale).astype(np.float32)


@pytest.fixture(scope="session")
def toy_model():
    """Small fitted float + quantized model on random labelled windows."""
    rng = np.random.default_rng(11)
    x = random_windows(rng, 120)
    # class 1 gets extra high-frequency content so the head has something to learn
    y = np.repeat([0, 1], 60)
    x[y == 1] += (800 * np.sin(np.arange(80) * 2.5)).astype(np.float32)
    ks = kernels.fit(x, 84, seed=3)
    clf = ridge.train_ridge(kernels.transform(x, ks), y)
    qm = quantize.quantize_model(ks, clf)
    return ks, clf, qm, x, y


@pytest.fixture(scope="session")
def small_corpus():
    cfg = SynthConfig(recordings_per_brand={"A": 6, "B": 1, "C": 1}, recording_seconds=60.0,
                      brands=("A", "B", "C"))
    return synth_generate(cfg, seed=5)


@pytest.fixture(scope="session")
def small_prepared(small_corpus):
    return list(prepare(small_corpus, 200.0))


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(criterion: str, passed: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
