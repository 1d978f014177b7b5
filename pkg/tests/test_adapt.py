import math
import pickle

import numpy as np
import pytest

from daie.adapt import (EthicalParams, ObjectivePool, ScenarioObjective, episode_objective, finite_diff_gradient,
                        history_frame, save_history, scenario_objective, train, update_step)
from daie.agent import run_episode
from daie.errors import NonFiniteObjective
from daie.valley import ValleyScenario
from .testing_utils import slow


TARGET = np.array([1.5, -2.0, 0.5])


def quadratic(params: EthicalParams, seed: int) -> float:
    return float(np.sum((params.to_vector() - TARGET) ** 2))


def pref_params(*values, env_weight=0.0) -> EthicalParams:
    return EthicalParams({'x': list(values)}, env_weight=env_weight)


def test_flattening_order(default_scenario):
    params = EthicalParams.from_scenario(default_scenario)
    names = params.names()

    assert names[0] == 'pref.C1.0'
    assert names.index('pref.C2.0') < names.index('pref.W.0') < names.index('weight.water_c1')
    assert [n for n in names if n.startswith('weight.')] == [f'weight.{n.id}' for n in default_scenario.norms]
    assert names[-1] == 'env_weight'
    assert len(names) == params.to_vector().size
    np.testing.assert_array_equal(params.from_vector(params.to_vector()).to_vector(), params.to_vector())


def test_projection_only_touches_weights():
    params = EthicalParams({'C1': [-1.0, 2.0]}, weights=(-0.5, 1.0), env_weight=-2.0, norm_ids=('a', 'b'))
    projected = params.project()

    np.testing.assert_array_equal(projected.preferences['C1'], [-1.0, 2.0])
    assert projected.weights == (0.0, 1.0)
    assert projected.env_weight == 0.0


def test_update_step():
    stepped = update_step(pref_params(3.0), [2.0, 0.0], 0.5)

    assert stepped.preferences['x'].tolist() == [2.0]

    params = pref_params(1.0, 2.0, env_weight=0.3)
    np.testing.assert_array_equal(update_step(params, [5.0, 5.0, 5.0], 0.0).to_vector(), params.to_vector())
    np.testing.assert_array_equal(update_step(params, [0.0, 0.0, 0.0], 0.7).to_vector(), params.to_vector())

    with pytest.raises(ValueError):
        update_step(params, [0.0, 0.0, 0.0], -0.1)


def test_gradient_of_quadratic():
    params = pref_params(0.0, 0.0, env_weight=1.0)
    grad = finite_diff_gradient(params, quadratic, seed=0, delta=1e-3)

    np.testing.assert_allclose(grad, 2 * (params.to_vector() - TARGET), atol=1e-6)


def test_forward_difference_at_bound():
    params = pref_params(0.0, 0.0, env_weight=0.0)
    delta = 1e-2
    grad = finite_diff_gradient(params, quadratic, seed=0, delta=delta)

    assert grad[-1] == pytest.approx(2 * (0.0 - TARGET[-1]) + delta)


def test_constant_coordinate_has_zero_gradient():
    params = pref_params(0.3, 0.7, env_weight=1.0)
    grad = finite_diff_gradient(params, lambda p, seed: float(p.preferences['x'][0] ** 2), seed=0)

    assert grad[1] == pytest.approx(0.0, abs=1e-9)
    assert grad[2] == pytest.approx(0.0, abs=1e-9)


def test_discrete_jump_is_logged(caplog_daie):
    params = pref_params(0.0, env_weight=1.0)
    finite_diff_gradient(params, lambda p, seed: 10.0 if p.preferences['x'][0] > 0 else 0.0, seed=0)

    assert 'Discrete jump' in caplog_daie.text
    assert 'pref.x.0' in caplog_daie.text


def test_non_finite_objective():
    with pytest.raises(NonFiniteObjective) as e:
        finite_diff_gradient(pref_params(0.0, env_weight=1.0),
                             lambda p, seed: math.nan if p.env_weight > 1 else 0.0, seed=0)

    assert e.value.parameter == 'env_weight'


def test_train_converges_on_quadratic():
    history = train(quadratic, pref_params(0.0, 0.0, env_weight=2.0), eta=0.1, epochs=100, seed=0, delta=1e-3)

    assert len(history) == 101
    assert [h.epoch for h in history[:2]] == [0, 1]
    np.testing.assert_allclose(history[-1].params.to_vector(), TARGET, atol=1e-3)
    assert history[-1].objective < history[0].objective


def test_single_epoch_takes_one_step(tmp_path):
    params0 = pref_params(0.0, 0.0, env_weight=2.0)
    history = train(quadratic, params0, eta=0.1, epochs=1, seed=0, delta=1e-3)
    expected = update_step(params0, 2 * (params0.to_vector() - TARGET), 0.1)

    assert len(history) == 2
    np.testing.assert_allclose(history[1].params.to_vector(), expected.to_vector(), atol=1e-6)

    save_history(history, tmp_path / 'history.csv')
    frame = history_frame(history)

    assert list(frame.columns[:2]) == ['epoch', 'objective']
    assert (tmp_path / 'history.csv').read_text().splitlines()[0].startswith('epoch,objective,pref.x.0')


def test_params_file(tmp_path, default_scenario):
    params = EthicalParams.from_scenario(default_scenario)
    params.save(tmp_path / 'params.toml')
    loaded = EthicalParams.load(tmp_path / 'params.toml')

    assert loaded.names() == params.names()
    np.testing.assert_allclose(loaded.to_vector(), params.to_vector())


def test_episode_objective(small_config):
    scenario = ValleyScenario.load(small_config)
    params = EthicalParams.from_scenario(scenario)

    single = episode_objective(params, scenario, seed=4, episodes=1, days=2)
    other = episode_objective(params, scenario, seed=5, episodes=1, days=2)

    assert single == episode_objective(params, scenario, seed=4, episodes=1, days=2)
    assert single == pytest.approx(run_episode(scenario, 4, days=2).objective)
    assert episode_objective(params, scenario, seed=4, episodes=2, days=2) == pytest.approx((single + other) / 2)


def test_params_change_the_objective(small_config):
    scenario = ValleyScenario.load(small_config)
    params = EthicalParams.from_scenario(scenario)
    heavier = params.from_vector(params.to_vector() * 2)

    assert episode_objective(heavier, scenario, seed=4) != episode_objective(params, scenario, seed=4)


def test_base_point_is_evaluated_once_per_epoch():
    calls = []

    def counted(params: EthicalParams, seed: int) -> float:
        calls.append(seed)
        return quadratic(params, seed)

    train(counted, pref_params(0.0, 0.0, env_weight=2.0), eta=0.1, epochs=1, seed=3, delta=1e-3)

    # initial point, two perturbations per coordinate, stepped point
    assert len(calls) == 1 + 2 * 3 + 1
    assert set(calls) == {3}


def test_pool_keeps_point_order():
    points = [(f'p{i}', pref_params(float(i), 0.0, env_weight=1.0)) for i in range(5)]

    with ObjectivePool(quadratic, jobs=1) as pool:
        values = pool.evaluate(points, seed=0)

    assert values == [quadratic(p, 0) for _, p in points]

    with pytest.raises(ValueError):
        ObjectivePool(quadratic, jobs=-1)


def test_scenario_objective_pickles(small_config):
    scenario = ValleyScenario.load(small_config)
    params = EthicalParams.from_scenario(scenario)
    objective = scenario_objective(scenario, episodes=1, days=2)

    assert objective(params, 4) == pytest.approx(episode_objective(params, scenario, seed=4, episodes=1, days=2))

    restored = pickle.loads(pickle.dumps(objective))

    assert isinstance(restored, ScenarioObjective)
    assert restored(params, 4) == pytest.approx(objective(params, 4), rel=1e-12)


def test_parallel_training_matches_serial(small_config):
    scenario = ValleyScenario.load(small_config)
    params0 = EthicalParams.from_scenario(scenario)
    serial = train(scenario, params0, eta=0.05, epochs=1, seed=2, delta=1e-2, jobs=1)
    parallel = train(scenario, params0, eta=0.05, epochs=1, seed=2, delta=1e-2, jobs=2)

    assert [h.objective for h in parallel] == pytest.approx([h.objective for h in serial], rel=1e-12)
    np.testing.assert_allclose(parallel[-1].params.to_vector(), serial[-1].params.to_vector(), rtol=1e-12)


@slow
def test_training_does_not_worsen_bundled_scenario(default_scenario):
    config = default_scenario.config
    history = train(default_scenario, EthicalParams.from_scenario(default_scenario), config.eta, config.epochs,
                    config.seed, config.delta, config.jobs)
    objectives = [h.objective for h in history[1:]]

    assert (config.epochs, config.episodes, config.seed) == (50, 8, 7)
    assert np.mean(objectives[-10:]) <= np.mean(objectives[:10])
