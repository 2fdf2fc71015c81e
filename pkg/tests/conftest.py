# 測試共用的任務與小型獎勵機

import numpy as np
import pytest

from rm_core import RewardMachine
from tasks import build_team_env, load_task


@pytest.fixture(scope='session')
def generator_task():
    return load_task('generator')


@pytest.fixture(scope='session')
def laboratory_task():
    return load_task('laboratory')


@pytest.fixture(scope='session')
def buttons_task():
    return load_task('buttons')


@pytest.fixture
def generator_env(generator_task):
    return build_team_env(generator_task)


@pytest.fixture
def laboratory_env(laboratory_task):
    return build_team_env(laboratory_task)


@pytest.fixture
def buttons_env(buttons_task):
    return build_team_env(buttons_task)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def chain_rm():
    """a 之後 b 完成任務"""
    return RewardMachine.from_names(['s0', 's1', 's2'], 's0', 'a b',
                                    [('s0', 'a', 's1'), ('s1', 'b', 's2')], ['s2'])
