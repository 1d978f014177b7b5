import os

import hypothesis
import numpy as np
import pytest

from daie import logging
from daie.config import ScenarioConfig
from daie.valley import ValleyScenario


np.seterr(all='warn')

hypothesis.settings.register_profile('ci', max_examples=1000, deadline=None)
hypothesis.settings.register_profile('fast', max_examples=5, deadline=None)
hypothesis.settings.register_profile('debugger', report_multiple_bugs=False, deadline=None)
hypothesis.settings.load_profile(os.getenv('HYPOTHESIS_PROFILE', 'ci'))

logging.disable_progress_bar()


@pytest.fixture
def caplog_daie(caplog):
    logging.enable_propagation()
    caplog.set_level(logging.DEBUG, logger='daie')
    yield caplog
    logging.disable_propagation()


@pytest.fixture(scope='session')
def default_scenario() -> ValleyScenario:
    return ValleyScenario.load()


@pytest.fixture
def small_config() -> ScenarioConfig:
    """The bundled scenario shrunk so an episode or a training epoch runs in well under a second."""
    return ValleyScenario.load().config.replace(candidates=('0.70/0.30/0.00', '0.40/0.40/0.20', '0.50/0.50/0.00',
                                                            '0.35/0.35/0.30'),
                                                days=3, episodes=1, episode_days=2, horizon=2)
