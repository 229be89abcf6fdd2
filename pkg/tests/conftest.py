import time

import numpy as np
import pytest

from latenthdr.imageio import LdrImage, RadianceMap


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_radiance(rng, h=8, w=8, scale=4.0):
    return RadianceMap(rng.uniform(0.0, scale, size=(h, w, 3)).astype(np.float32))


def random_ldr(rng, h=8, w=8):
    return LdrImage(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


# -- shared training runs (expensive; computed once per session) --------------

TRAIN_STEPS = 5000
TRAIN_SEED = 1


def _train_corpus():
    from latenthdr.scenegen import SceneSpec, generate_corpus
    return generate_corpus(8, 100, SceneSpec(dr_target=10.0))


def _heldout_corpus():
    from latenthdr.scenegen import SceneSpec, generate_corpus
    return generate_corpus(4, 200, SceneSpec(dr_target=10.0))


@pytest.fixture(scope="session")
def train_evs():
    from latenthdr.bracket import ev_range
    return ev_range(-7, 5, 1)


@pytest.fixture(scope="session")
def train_corpus():
    return _train_corpus()


@pytest.fixture(scope="session")
def heldout_corpus():
    return _heldout_corpus()


@pytest.fixture(scope="session")
def train_data(train_corpus, train_evs):
    from latenthdr.head import prepare_data
    return prepare_data(train_corpus, train_evs)


def _run(train_corpus, train_evs, train_data, **kw):
    from latenthdr.head import HeadConfig, ablate_no_film, train
    cfg = HeadConfig()
    if kw.pop("no_film", False):
        cfg = ablate_no_film(cfg, train_evs)
    t0 = time.perf_counter()
    result = train(train_corpus, train_evs, cfg, steps=TRAIN_STEPS, seed=TRAIN_SEED,
                   data=train_data, **kw)
    result.seconds = time.perf_counter() - t0
    return result


@pytest.fixture(scope="session")
def film_run(train_corpus, train_evs, train_data):
    return _run(train_corpus, train_evs, train_data)


@pytest.fixture(scope="session")
def nofilm_run(train_corpus, train_evs, train_data):
    return _run(train_corpus, train_evs, train_data, no_film=True)


@pytest.fixture(scope="session")
def sampled_run(train_corpus, train_evs, train_data):
    return _run(train_corpus, train_evs, train_data, sampled_z=True)



# -- acceptance report ----------------------------------------------------------

ACCEPTANCE_LINES = {}


def record(number: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
