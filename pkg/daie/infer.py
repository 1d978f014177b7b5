from dataclasses import dataclass, field
from typing import Hashable, List, Mapping, Sequence, Tuple

from scipy.special import entr, rel_entr, softmax
import numpy as np

from .errors import (AbsoluteContinuityViolation, InvalidDistribution, InvalidModel, SupportMismatch, UnknownAction,
                     ZeroEvidence)
from .utils import TINY


__all__ = ['CategoricalDist', 'GenerativeModel', 'EfeBreakdown', 'kl_divergence', 'entropy', 'exact_posterior',
           'variational_free_energy', 'predict_state_dist', 'predict_outcome_dist', 'expected_free_energy',
           'softmax_preferences', 'uniform', 'point_mass', 'OutcomePath', 'predict_outcome_path', 'rollout_efe']


SUM_TOLERANCE = 1e-9
MEMO_LIMIT = 100_000
_MEMOS = ('_paths', '_rollouts', '_variants')


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)

    return arr


def _memoized(store: dict, key, compute):
    try:
        return store[key]
    except KeyError:
        pass

    if len(store) >= MEMO_LIMIT:
        store.clear()

    value = store[key] = compute()

    return value


@dataclass(frozen=True, eq=False)
class CategoricalDist:
    """A probability vector over a declared finite support. Immutable."""
    probs: np.ndarray
    labels: Tuple[Hashable, ...] = None

    def __post_init__(self):
        probs = _freeze(self.probs)

        if probs.ndim != 1 or probs.size < 1:
            raise InvalidDistribution(f'Expected a non-empty vector, got shape {probs.shape}')

        labels = tuple(range(probs.size)) if self.labels is None else tuple(self.labels)

        if len(labels) != probs.size:
            raise InvalidDistribution(f'{len(labels)} labels for {probs.size} probabilities')

        if np.any(probs < -TINY) or np.any(probs > 1 + TINY):
            raise InvalidDistribution(f'Probabilities outside [0, 1]: {probs.tolist()}')

        if abs(probs.sum() - 1.0) > SUM_TOLERANCE:
            raise InvalidDistribution(f'Probabilities sum to {probs.sum():.12g}, not 1')

        object.__setattr__(self, 'probs', probs)
        object.__setattr__(self, 'labels', labels)

    @classmethod
    def normalized(cls, values: Sequence[float], labels: Sequence[Hashable] = None) -> 'CategoricalDist':
        values = np.clip(np.asarray(values, dtype=float), 0, None)
        total = values.sum()

        if total <= 0:
            raise InvalidDistribution('Cannot normalize a vector with no positive mass')

        return cls(values / total, labels)

    def __len__(self) -> int:
        return self.probs.size

    def __getitem__(self, label: Hashable) -> float:
        return float(self.probs[self.labels.index(label)])

    def same_support(self, other: 'CategoricalDist') -> bool:
        return self.labels == other.labels

    def __repr__(self):
        inner = ', '.join(f'{k}: {v:.4g}' for k, v in zip(self.labels, self.probs))
        return f'CategoricalDist({inner})'


def uniform(labels: Sequence[Hashable]) -> CategoricalDist:
    return CategoricalDist(np.full(len(labels), 1.0 / len(labels)), labels)


def point_mass(labels: Sequence[Hashable], label: Hashable) -> CategoricalDist:
    probs = np.zeros(len(labels))
    probs[list(labels).index(label)] = 1.0

    return CategoricalDist(probs, labels)


@dataclass(frozen=True)
class EfeBreakdown:
    risk: float
    ambiguity: float
    total: float = field(default=None)

    def __post_init__(self):
        if self.total is None:
            object.__setattr__(self, 'total', self.risk + self.ambiguity)
        elif abs(self.total - (self.risk + self.ambiguity)) > 1e-9:
            raise ValueError(f'EFE total {self.total} != risk {self.risk} + ambiguity {self.ambiguity}')

    def __add__(self, other: 'EfeBreakdown') -> 'EfeBreakdown':
        return EfeBreakdown(self.risk + other.risk, self.ambiguity + other.ambiguity)


@dataclass(frozen=True, eq=False)
class GenerativeModel:
    """
    Tabular world model of one agent.

    `likelihood[s, o]` is P(o|s) (one row per state); `transition[a][s', s]` is P(s'|s, a) (one column per current
    state); `preferences` are log-preferences C(o) over observations; `prior` is D(s).
    """
    states: Tuple[str, ...]
    observations: Tuple[str, ...]
    actions: Tuple[str, ...]
    likelihood: np.ndarray
    transition: Mapping[str, np.ndarray]
    preferences: np.ndarray
    prior: CategoricalDist = None

    def __post_init__(self):
        object.__setattr__(self, 'states', tuple(self.states))
        object.__setattr__(self, 'observations', tuple(self.observations))
        object.__setattr__(self, 'actions', tuple(self.actions))
        object.__setattr__(self, 'likelihood', _freeze(self.likelihood))
        object.__setattr__(self, 'preferences', _freeze(self.preferences))
        object.__setattr__(self, 'transition', {a: _freeze(m) for a, m in self.transition.items()})

        if self.prior is None:
            object.__setattr__(self, 'prior', uniform(self.states))

        problems = self.diagnostics()

        if problems:
            raise InvalidModel(problems[0])

        object.__setattr__(self, '_obs_index', {o: i for i, o in enumerate(self.observations)})
        # per-state entropy of P(o|s), the ambiguity integrand
        object.__setattr__(self, '_ambiguity', entr(np.where(self.likelihood > TINY, self.likelihood, 0.0)).sum(1))
        object.__setattr__(self, '_preferred', softmax(self.preferences))
        # rollouts keyed by belief bytes; `_paths` and `_variants` are shared by every preference variant
        object.__setattr__(self, '_paths', {})
        object.__setattr__(self, '_rollouts', {})
        object.__setattr__(self, '_variants', {self.preferences.tobytes(): self})

    def __getstate__(self):
        state = dict(self.__dict__)
        state.update({name: {} for name in _MEMOS})

        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._variants[self.preferences.tobytes()] = self

    def diagnostics(self) -> List[str]:
        problems = []
        n_s, n_o = len(self.states), len(self.observations)

        if self.likelihood.shape != (n_s, n_o):
            problems.append(f'likelihood has shape {self.likelihood.shape}, expected {(n_s, n_o)}')
        else:
            for s, row in zip(self.states, self.likelihood):
                if np.any(row < 0) or abs(row.sum() - 1) > SUM_TOLERANCE:
                    problems.append(f'likelihood row for state {s!r} sums to {row.sum():.6g}')

        if set(self.transition) != set(self.actions):
            problems.append(f'transition actions {sorted(self.transition)} differ from declared {list(self.actions)}')

        for a, mat in self.transition.items():
            if mat.shape != (n_s, n_s):
                problems.append(f'transition for action {a!r} has shape {mat.shape}, expected {(n_s, n_s)}')
                continue

            for s, col in zip(self.states, mat.T):
                if np.any(col < 0) or abs(col.sum() - 1) > SUM_TOLERANCE:
                    problems.append(f'transition from state {s!r} under action {a!r} sums to {col.sum():.6g}')

        if self.preferences.shape != (n_o,):
            problems.append(f'preferences have length {self.preferences.size}, expected {n_o}')
        elif not np.all(np.isfinite(self.preferences)):
            problems.append('preferences must be finite')

        if self.prior.labels != self.states:
            problems.append('prior support differs from the model states')

        return problems

    def obs_index(self, obs: str) -> int:
        try:
            return self._obs_index[obs]
        except KeyError:
            raise InvalidModel(f'Unknown observation {obs!r}') from None

    def transition_for(self, action: str) -> np.ndarray:
        try:
            return self.transition[action]
        except KeyError:
            raise UnknownAction(f'Unknown action {action!r}; expected one of {list(self.actions)}') from None

    def with_preferences(self, preferences: Sequence[float]) -> 'GenerativeModel':
        preferences = np.asarray(preferences, dtype=float)

        def build() -> GenerativeModel:
            variant = GenerativeModel(self.states, self.observations, self.actions, self.likelihood, self.transition,
                                      preferences, self.prior)
            object.__setattr__(variant, '_paths', self._paths)
            object.__setattr__(variant, '_variants', self._variants)

            return variant

        return _memoized(self._variants, preferences.tobytes(), build)


def _check_support(p: CategoricalDist, q: CategoricalDist):
    if len(p) != len(q) or not p.same_support(q):
        raise SupportMismatch(f'Supports differ: {p.labels} vs {q.labels}')


def kl_divergence(p: CategoricalDist, q: CategoricalDist) -> float:
    _check_support(p, q)
    pp = np.where(p.probs > TINY, p.probs, 0.0)

    if np.any((pp > 0) & (q.probs <= 0)):
        raise AbsoluteContinuityViolation('p has mass where q has none')

    return max(0.0, float(rel_entr(pp, q.probs).sum()))


def entropy(p: CategoricalDist) -> float:
    return float(entr(np.where(p.probs > TINY, p.probs, 0.0)).sum())


def _joint(model: GenerativeModel, prior: CategoricalDist, obs: str) -> np.ndarray:
    if prior.labels != model.states:
        raise SupportMismatch('Prior support differs from the model states')

    joint = model.likelihood[:, model.obs_index(obs)] * prior.probs

    if joint.sum() <= 0:
        raise ZeroEvidence(f'Observation {obs!r} has zero evidence under the prior')

    return joint


def exact_posterior(model: GenerativeModel, prior: CategoricalDist, obs: str) -> CategoricalDist:
    joint = _joint(model, prior, obs)

    return CategoricalDist(joint / joint.sum(), model.states)


def variational_free_energy(model: GenerativeModel, q: CategoricalDist, prior: CategoricalDist, obs: str) -> float:
    """F = E_q[log q(s) - log P(obs, s)], bounded below by the surprise -log P(obs)."""
    joint = _joint(model, prior, obs)

    if q.labels != model.states:
        raise SupportMismatch('Recognition distribution support differs from the model states')

    mask = q.probs > TINY

    if np.any(joint[mask] <= 0):
        raise AbsoluteContinuityViolation('q has mass on states with zero joint probability')

    qm = q.probs[mask]

    return float(np.sum(qm * (np.log(qm) - np.log(joint[mask]))))


def predict_state_dist(model: GenerativeModel, belief: CategoricalDist, action: str) -> CategoricalDist:
    if belief.labels != model.states:
        raise SupportMismatch('Belief support differs from the model states')

    nxt = model.transition_for(action) @ belief.probs

    return CategoricalDist(nxt / nxt.sum(), model.states)


def predict_outcome_dist(model: GenerativeModel, belief: CategoricalDist, action: str) -> CategoricalDist:
    qs = predict_state_dist(model, belief, action)
    qo = model.likelihood.T @ qs.probs

    return CategoricalDist(qo / qo.sum(), model.observations)


def softmax_preferences(model: GenerativeModel) -> CategoricalDist:
    return CategoricalDist(softmax(model.preferences), model.observations)


def expected_free_energy(model: GenerativeModel, belief: CategoricalDist, action: str) -> EfeBreakdown:
    """Single-step EFE: risk is KL(Q(o'|a) || softmax(C)), ambiguity is the expected entropy of P(o|s')."""
    qs = predict_state_dist(model, belief, action)
    qo = model.likelihood.T @ qs.probs
    qo = CategoricalDist(qo / qo.sum(), model.observations)
    risk = kl_divergence(qo, softmax_preferences(model))
    ambiguity = float(qs.probs @ model._ambiguity)

    return EfeBreakdown(risk=risk, ambiguity=max(0.0, ambiguity))


@dataclass(frozen=True, eq=False)
class OutcomePath:
    """Outcome distributions (one row per step) and per-step ambiguity while repeating one action."""
    outcomes: np.ndarray
    ambiguity: np.ndarray


def _check_rollout(model: GenerativeModel, belief: CategoricalDist, horizon: int):
    if belief.labels != model.states:
        raise SupportMismatch('Belief support differs from the model states')

    if horizon < 1:
        raise ValueError(f'Horizon must be at least 1, got {horizon}')


def predict_outcome_path(model: GenerativeModel, belief: CategoricalDist, action: str,
                         horizon: int) -> OutcomePath:
    """
    Pushes `belief` through the transition model `horizon` times. Independent of the preferences, so models that
    differ only in preferences share the result.
    """
    _check_rollout(model, belief, horizon)

    def compute() -> OutcomePath:
        trans = model.transition_for(action)
        qs, outcomes, ambiguity = belief.probs, [], []

        for _ in range(horizon):
            qs = trans @ qs
            qs = qs / qs.sum()
            qo = model.likelihood.T @ qs
            outcomes.append(qo / qo.sum())
            ambiguity.append(max(0.0, float(qs @ model._ambiguity)))

        return OutcomePath(_freeze(outcomes), _freeze(ambiguity))

    return _memoized(model._paths, (belief.probs.tobytes(), action, horizon), compute)


def rollout_efe(model: GenerativeModel, belief: CategoricalDist, action: str, horizon: int) -> EfeBreakdown:
    """EFE summed over `horizon` steps of repeating `action`, the belief pushed forward by the transition model."""
    _check_rollout(model, belief, horizon)

    def compute() -> EfeBreakdown:
        path = predict_outcome_path(model, belief, action, horizon)
        qo = np.where(path.outcomes > TINY, path.outcomes, 0.0)

        if np.any((qo > 0) & (model._preferred <= 0)):
            raise AbsoluteContinuityViolation('Predicted outcomes have mass where the preferences have none')

        risk = np.maximum(rel_entr(qo, model._preferred).sum(axis=1), 0.0)

        return EfeBreakdown(risk=float(risk.sum()), ambiguity=float(path.ambiguity.sum()))

    return _memoized(model._rollouts, (belief.probs.tobytes(), action, horizon), compute)
