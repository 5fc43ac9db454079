import numpy as np
import pytest

from netident.netfile import load_network, parse_network, resolve_spec_path


def shipped(name):
    return load_network(resolve_spec_path(name))


@pytest.fixture
def path3():
    return shipped("path3")[0]


@pytest.fixture
def diamond4():
    return shipped("diamond4")[0]


@pytest.fixture
def bridge4():
    return shipped("bridge4")[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def net(text):
    return parse_network(text)[0]
