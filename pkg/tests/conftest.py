import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from cesmc import load_model, model_path  # noqa: E402


@pytest.fixture(scope="session")
def models():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = load_model(model_path(name))
        return cache[name]
    return get


@pytest.fixture(scope="session")
def t1(models):
    return models("tiny-t1")
