import json
import sys
from functools import lru_cache
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hybridlpf.data import generate_samples, pick_anchor_states  # noqa: E402
from hybridlpf.network import SHIPPED, shipped_feeder, shipped_feeder_path  # noqa: E402


@lru_cache(maxsize=None)
def feeder(name):
    return shipped_feeder(name)


@lru_cache(maxsize=None)
def feeder_doc(name):
    return json.loads(shipped_feeder_path(name).read_text())


@lru_cache(maxsize=None)
def anchors_of(name):
    return pick_anchor_states(feeder(name))


@lru_cache(maxsize=None)
def samples_of(name, count, seed, drift=0.0):
    return tuple(generate_samples(feeder(name), count, seed=seed, drift=drift))


@pytest.fixture(params=SHIPPED)
def shipped_name(request):
    return request.param


@lru_cache(maxsize=None)
def trained_model(name, count=100, seed=1):
    from hybridlpf.evaluation import train_model
    model, _ = train_model(feeder(name), list(samples_of(name, count, seed)), anchors_of(name))
    return model


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import VERDICTS
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[key])
