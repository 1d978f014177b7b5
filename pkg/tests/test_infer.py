import math
import pickle

from hypothesis import given, strategies as st
import numpy as np
import pytest

from daie.errors import (AbsoluteContinuityViolation, InvalidDistribution, InvalidModel, SupportMismatch,
                         UnknownAction, ZeroEvidence)
from daie.infer import (CategoricalDist, GenerativeModel, entropy, exact_posterior, expected_free_energy,
                        kl_divergence, point_mass, predict_outcome_dist, predict_outcome_path, predict_state_dist,
                        rollout_efe, uniform, variational_free_energy)
from .testing_utils import random_dist, random_model, two_state_model


def test_kl_examples():
    p = CategoricalDist([1.0, 0.0], ('x', 'y'))
    q = CategoricalDist([0.5, 0.5], ('x', 'y'))

    assert kl_divergence(p, q) == pytest.approx(math.log(2))
    assert kl_divergence(q, q) == 0.0

    with pytest.raises(AbsoluteContinuityViolation):
        kl_divergence(q, p)


def test_kl_support_mismatch():
    with pytest.raises(SupportMismatch):
        kl_divergence(uniform(('a', 'b')), uniform(('a', 'b', 'c')))

    with pytest.raises(SupportMismatch):
        kl_divergence(uniform(('a', 'b')), uniform(('b', 'a')))


@given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
def test_kl_nonnegative(n, seed):
    rng = np.random.default_rng(seed)
    p, q = random_dist(rng, n), random_dist(rng, n)

    assert kl_divergence(p, q) >= 0
    assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-12)


def test_distribution_validation():
    with pytest.raises(InvalidDistribution):
        CategoricalDist([0.5, 0.6])

    with pytest.raises(InvalidDistribution):
        CategoricalDist([1.2, -0.2])

    with pytest.raises(InvalidDistribution):
        CategoricalDist([0.5, 0.5], ('only',))

    dist = CategoricalDist.normalized([2, 6], ('a', 'b'))
    assert dist['b'] == pytest.approx(0.75)
    assert entropy(point_mass(('a', 'b'), 'a')) == 0.0
    assert entropy(uniform('abcd')) == pytest.approx(math.log(4))


def test_posterior_and_free_energy():
    model = two_state_model()
    prior = uniform(model.states)
    posterior = exact_posterior(model, prior, 'o0')

    np.testing.assert_allclose(posterior.probs, [0.8, 0.2])
    assert variational_free_energy(model, posterior, prior, 'o0') == pytest.approx(0.6931, abs=1e-4)
    assert variational_free_energy(model, prior, prior, 'o0') == pytest.approx(0.9163, abs=1e-4)


def test_zero_evidence():
    model = two_state_model(likelihood=((1.0, 0.0), (1.0, 0.0)))

    with pytest.raises(ZeroEvidence):
        exact_posterior(model, uniform(model.states), 'o1')


@given(st.integers(2, 5), st.integers(2, 5), st.integers(0, 2 ** 32 - 1))
def test_free_energy_bounds_surprise(n_states, n_obs, seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, n_states, n_obs)
    prior = random_dist(rng, n_states, model.states)
    q = random_dist(rng, n_states, model.states)
    obs = model.observations[0]

    evidence = float(model.likelihood[:, 0] @ prior.probs)
    surprise = -math.log(evidence)
    posterior = exact_posterior(model, prior, obs)

    assert variational_free_energy(model, q, prior, obs) >= surprise - 1e-9
    assert variational_free_energy(model, posterior, prior, obs) == pytest.approx(surprise, abs=1e-9)


def test_efe_examples():
    identity = two_state_model(likelihood=((1.0, 0.0), (0.0, 1.0)), preferences=(2.0, -2.0))
    belief = point_mass(identity.states, 's0')
    stay = expected_free_energy(identity, belief, 'stay')

    assert stay.ambiguity == pytest.approx(0.0)
    assert stay.risk < expected_free_energy(identity, belief, 'go').risk

    noisy = two_state_model(likelihood=((0.8, 0.2), (0.5, 0.5)))
    go = expected_free_energy(noisy, uniform(noisy.states), 'go')

    assert go.risk == pytest.approx(0.0, abs=1e-12)
    assert go.ambiguity == pytest.approx(math.log(2))
    assert go.total == pytest.approx(go.risk + go.ambiguity)


@given(st.integers(2, 5), st.integers(2, 5), st.integers(0, 2 ** 32 - 1))
def test_efe_components_nonnegative(n_states, n_obs, seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, n_states, n_obs)
    belief = random_dist(rng, n_states, model.states)

    for action in model.actions:
        efe = expected_free_energy(model, belief, action)
        assert efe.risk >= 0 and efe.ambiguity >= 0
        assert efe.ambiguity <= math.log(n_obs) + 1e-9


def test_prediction():
    model = two_state_model()
    belief = CategoricalDist([0.3, 0.7], model.states)

    np.testing.assert_allclose(predict_state_dist(model, belief, 'stay').probs, [0.3, 0.7])
    np.testing.assert_allclose(predict_state_dist(model, belief, 'go').probs, [0.0, 1.0])
    np.testing.assert_allclose(predict_outcome_dist(model, belief, 'go').probs, [0.2, 0.8])

    with pytest.raises(UnknownAction):
        predict_state_dist(model, belief, 'fly')


def test_model_validation():
    with pytest.raises(InvalidModel, match='transition from state'):
        GenerativeModel(('s0', 's1'), ('o0',), ('a',), np.ones((2, 1)), {'a': np.array([[0.5, 0.5], [0.4, 0.5]])},
                        np.zeros(1))

    with pytest.raises(InvalidModel, match='likelihood'):
        GenerativeModel(('s0', 's1'), ('o0', 'o1'), ('a',), np.array([[0.7, 0.2], [0.5, 0.5]]), {'a': np.eye(2)},
                        np.zeros(2))

    with pytest.raises(InvalidModel, match='preferences'):
        GenerativeModel(('s0',), ('o0',), ('a',), np.ones((1, 1)), {'a': np.eye(1)}, np.zeros(3))


def enumerated_efe(model, belief, action):
    """Risk and ambiguity by summing over every (s, s', o) triple."""
    trans, lik = model.transition[action], model.likelihood
    preferred = np.exp(model.preferences - model.preferences.max())
    preferred /= preferred.sum()
    outcome = np.zeros(len(model.observations))
    ambiguity = 0.0

    for s in range(len(model.states)):
        for s_next in range(len(model.states)):
            for o in range(len(model.observations)):
                p = belief.probs[s] * trans[s_next, s] * lik[s_next, o]
                outcome[o] += p

                if lik[s_next, o] > 0:
                    ambiguity -= p * math.log(lik[s_next, o])

    risk = sum(p * math.log(p / preferred[o]) for o, p in enumerate(outcome) if p > 0)

    return risk, ambiguity


def test_efe_matches_enumeration():
    rng = np.random.default_rng(2024)

    for _ in range(200):
        model = random_model(rng, int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        belief = random_dist(rng, len(model.states), model.states)

        for action in model.actions:
            risk, ambiguity = enumerated_efe(model, belief, action)
            efe = expected_free_energy(model, belief, action)

            assert efe.risk == pytest.approx(risk, abs=1e-9)
            assert efe.ambiguity == pytest.approx(ambiguity, abs=1e-9)

            nxt = predict_state_dist(model, belief, action)
            risk_2, ambiguity_2 = enumerated_efe(model, nxt, action)
            rolled = rollout_efe(model, belief, action, 2)

            assert rolled.risk == pytest.approx(risk + risk_2, abs=1e-9)
            assert rolled.ambiguity == pytest.approx(ambiguity + ambiguity_2, abs=1e-9)


def test_posterior_minimizes_free_energy():
    rng = np.random.default_rng(11)

    for _ in range(200):
        n_states = int(rng.integers(1, 4))
        model = random_model(rng, n_states, int(rng.integers(1, 5)))
        prior = random_dist(rng, n_states, model.states)
        obs = model.observations[int(rng.integers(len(model.observations)))]
        best = variational_free_energy(model, exact_posterior(model, prior, obs), prior, obs)

        for probs in rng.dirichlet(np.ones(n_states), size=500):
            q = CategoricalDist.normalized(probs, model.states)
            assert variational_free_energy(model, q, prior, obs) >= best - 1e-9


def test_outcome_path():
    model = two_state_model()
    path = predict_outcome_path(model, CategoricalDist([0.3, 0.7], model.states), 'go', 3)

    np.testing.assert_allclose(path.outcomes, [[0.2, 0.8]] * 3)
    np.testing.assert_allclose(path.ambiguity, [-(0.8 * math.log(0.8) + 0.2 * math.log(0.2))] * 3)

    with pytest.raises(ValueError):
        predict_outcome_path(model, uniform(model.states), 'go', 0)

    with pytest.raises(SupportMismatch):
        rollout_efe(model, uniform(('x', 'y')), 'go', 1)


def test_preference_variants_share_predictions():
    model = two_state_model(preferences=(1.0, -1.0))
    belief = CategoricalDist([0.3, 0.7], model.states)
    variant = model.with_preferences([-1.0, 1.0])

    assert model.with_preferences([-1.0, 1.0]) is variant
    assert variant.with_preferences([1.0, -1.0]) is model
    assert predict_outcome_path(model, belief, 'stay', 2) is predict_outcome_path(variant, belief, 'stay', 2)

    before = rollout_efe(variant, belief, 'stay', 2)
    assert before.risk != pytest.approx(rollout_efe(model, belief, 'stay', 2).risk)

    restored = pickle.loads(pickle.dumps(variant))

    assert not restored._rollouts and not restored._paths
    assert restored.with_preferences([-1.0, 1.0]) is restored
    assert rollout_efe(restored, belief, 'stay', 2).total == before.total


def test_preferences_must_be_finite():
    with pytest.raises(InvalidModel, match='finite'):
        two_state_model(preferences=(0.0, math.nan))
