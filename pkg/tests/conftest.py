import os
import sys

os.environ.setdefault("MARKOVNET_PROGRESS", "0")
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest
from sqlalchemy import create_engine

from data_acquisition.channel_model import ChannelConfig, generate
from database.database import get_session, init_database
from feedback.codec import CodecConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run desk-scale training runs")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale training run (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_channel():
    return ChannelConfig(nb=8, nf=64, rd=8, gamma_true=0.95, num_paths=8, slots=4, seed=7)


@pytest.fixture
def small_dataset(small_channel):
    return generate(small_channel, 40, progress=False)


@pytest.fixture
def small_codec():
    return CodecConfig(rd=8, nb=8, encoder_widths=(4, 2), decoder_widths=(4, 2), kernel_size=3)


@pytest.fixture
def registry():
    engine = create_engine("sqlite://")
    init_database(engine)
    session = get_session(engine)
    yield session
    session.close()
