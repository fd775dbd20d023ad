import sys

import numpy as np
import pytest

from gwalign import save_embeddings

import toydata


@pytest.fixture(scope="session")
def toy():
    return toydata.toy_space()


@pytest.fixture(scope="session")
def rotation():
    return toydata.random_orthogonal(toydata.TOY_D, seed=123)


@pytest.fixture(scope="session")
def toy_rotated(toy, rotation):
    return toydata.rotated(toy, rotation)


@pytest.fixture(scope="session")
def languages():
    return toydata.toy_languages()


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture
def write_vec(tmp_path):
    def write(emb, name="emb.vec"):
        path = tmp_path / name
        save_embeddings(emb, path)
        return path

    return write


@pytest.fixture
def write_text(tmp_path):
    def write(text, name="file.txt", mode="w"):
        path = tmp_path / name
        if mode == "wb":
            path.write_bytes(text)
        else:
            path.write_text(text, encoding="utf-8")
        return path

    return write


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(acceptance.RESULTS, key=lambda l: int(l.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
