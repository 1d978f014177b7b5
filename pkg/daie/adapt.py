from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union
import math
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np
import pandas as pd
import tomli_w

from . import logging
from .agent import run_episode
from .errors import ConfigError, NonFiniteObjective
from .valley import ValleyScenario


__all__ = ['EthicalParams', 'TrainingEpoch', 'ScenarioObjective', 'ObjectivePool', 'episode_objective',
           'scenario_objective', 'finite_diff_gradient', 'update_step', 'train', 'history_frame', 'save_history']


logger = logging.get_logger(__name__)

Objective = Callable[['EthicalParams', int], float]


@dataclass(frozen=True, eq=False)
class EthicalParams:
    """
    The adaptable part of an ethical stance. Flattened as: preference vectors by sorted stakeholder id, then
    obligation weights in norm-file order, then `env_weight`. Weights and `env_weight` are kept nonnegative.
    """
    preferences: Mapping[str, np.ndarray]
    weights: Tuple[float, ...] = ()
    env_weight: float = 0.0
    norm_ids: Tuple[str, ...] = ()

    def __post_init__(self):
        prefs = {k: np.array(self.preferences[k], dtype=float) for k in sorted(self.preferences)}
        object.__setattr__(self, 'preferences', prefs)
        object.__setattr__(self, 'weights', tuple(float(w) for w in self.weights))
        object.__setattr__(self, 'env_weight', float(self.env_weight))

        if not self.norm_ids:
            object.__setattr__(self, 'norm_ids', tuple(f'norm{i}' for i in range(len(self.weights))))

        if len(self.norm_ids) != len(self.weights):
            raise ValueError(f'{len(self.weights)} weights for {len(self.norm_ids)} norms')

    @classmethod
    def from_scenario(cls, scenario: ValleyScenario) -> 'EthicalParams':
        return cls(scenario.preferences, tuple(n.weight for n in scenario.norms), scenario.env_weight,
                   tuple(n.id for n in scenario.norms))

    def apply(self, scenario: ValleyScenario) -> ValleyScenario:
        by_id = dict(zip(self.norm_ids, self.weights))
        weights = [by_id.get(n.id, n.weight) for n in scenario.norms]

        return scenario.with_parameters(self.preferences, weights, self.env_weight)

    def names(self) -> List[str]:
        names = [f'pref.{sid}.{i}' for sid, vec in self.preferences.items() for i in range(vec.size)]
        names += [f'weight.{nid}' for nid in self.norm_ids]

        return names + ['env_weight']

    def constrained(self) -> np.ndarray:
        """Mask of the coordinates projected to be nonnegative."""
        n_pref = sum(v.size for v in self.preferences.values())
        return np.array([False] * n_pref + [True] * (len(self.weights) + 1))

    def to_vector(self) -> np.ndarray:
        parts = [v for v in self.preferences.values()] + [np.array(self.weights), np.array([self.env_weight])]
        return np.concatenate(parts).astype(float)

    def from_vector(self, vec: Sequence[float]) -> 'EthicalParams':
        vec = np.asarray(vec, dtype=float)

        if vec.size != self.to_vector().size:
            raise ValueError(f'Expected {self.to_vector().size} coordinates, got {vec.size}')

        prefs, offset = {}, 0

        for sid, old in self.preferences.items():
            prefs[sid] = vec[offset:offset + old.size]
            offset += old.size

        weights = tuple(vec[offset:offset + len(self.weights)])

        return EthicalParams(prefs, weights, float(vec[-1]), self.norm_ids)

    def project(self) -> 'EthicalParams':
        vec = self.to_vector()
        mask = self.constrained()
        vec[mask] = np.maximum(vec[mask], 0.0)

        return self.from_vector(vec)

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(self.names(), self.to_vector().tolist()))

    def save(self, path: Union[str, os.PathLike]):
        data = {
            'preferences': {sid: vec.tolist() for sid, vec in self.preferences.items()},
            'weights': dict(zip(self.norm_ids, self.weights)),
            'env_weight': self.env_weight,
        }

        Path(path).parent.mkdir(parents=True, exist_ok=True)

        with open(path, 'wb') as f:
            tomli_w.dump(data, f)

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> 'EthicalParams':
        try:
            with open(path, 'rb') as f:
                data = tomllib.load(f)

            weights = data.get('weights', {})

            return cls(data['preferences'], tuple(weights.values()), data.get('env_weight', 0.0),
                       tuple(weights.keys()))
        except FileNotFoundError:
            raise ConfigError([f'params file {str(path)!r} not found']) from None
        except (KeyError, ValueError, tomllib.TOMLDecodeError) as e:
            raise ConfigError([f'invalid params: {e}'], str(path)) from None


@dataclass(frozen=True)
class TrainingEpoch:
    epoch: int
    params: EthicalParams
    objective: float


def episode_objective(params: EthicalParams, scenario: ValleyScenario, seed: int, episodes: Optional[int] = None,
                      days: Optional[int] = None) -> float:
    """Mean over `episodes` seeded episodes (seeds `seed`, `seed + 1`, ...) of the summed chosen-action totals."""
    episodes = scenario.config.episodes if episodes is None else episodes
    days = scenario.config.episode_days if days is None else days

    if episodes < 1:
        raise ValueError(f'Need at least one episode, got {episodes}')

    scenario = params.apply(scenario)
    values = [run_episode(scenario, seed + e, days).objective for e in range(episodes)]

    return float(np.mean(values))


@dataclass(frozen=True, eq=False)
class ScenarioObjective:
    """`episode_objective` bound to a scenario. Picklable, so worker processes can evaluate it."""
    scenario: ValleyScenario
    episodes: Optional[int] = None
    days: Optional[int] = None

    def __call__(self, params: EthicalParams, seed: int) -> float:
        return episode_objective(params, self.scenario, seed, self.episodes, self.days)


def scenario_objective(scenario: ValleyScenario, episodes: Optional[int] = None,
                       days: Optional[int] = None) -> ScenarioObjective:
    return ScenarioObjective(scenario, episodes, days)


def _as_objective(target: Union[ValleyScenario, Objective]) -> Objective:
    return scenario_objective(target) if isinstance(target, ValleyScenario) else target


def _check_finite(value: float, name: str) -> float:
    if not math.isfinite(value):
        raise NonFiniteObjective(f'Objective is {value} when perturbing {name}', parameter=name)

    return value


def _evaluate(objective: Objective, params: EthicalParams, seed: int, name: str) -> float:
    return _check_finite(objective(params, seed), name)


_worker_objective: Optional[Objective] = None


def _init_worker(objective: Objective):
    global _worker_objective
    _worker_objective = objective
    logging.disable_progress_bar()


def _worker_evaluate(params: EthicalParams, seed: int) -> float:
    return _worker_objective(params, seed)


class ObjectivePool:
    """
    Evaluates one objective at many parameter points, in `jobs` worker processes (0 means one per CPU). With a single
    job everything runs in-process and the pool needs no context.
    """

    def __init__(self, objective: Objective, jobs: int = 1):
        if jobs < 0:
            raise ValueError(f'jobs must be nonnegative, got {jobs}')

        self.objective = objective
        self.jobs = jobs or os.cpu_count() or 1
        self._executor: Optional[ProcessPoolExecutor] = None

    def __enter__(self):
        if self.jobs > 1:
            self._executor = ProcessPoolExecutor(self.jobs, initializer=_init_worker, initargs=(self.objective,))

        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self._executor is not None:
            self._executor.shutdown(cancel_futures=exc_type is not None)
            self._executor = None

    def evaluate(self, points: Sequence[Tuple[str, EthicalParams]], seed: int) -> List[float]:
        """Objective at each `(name, params)` point; `name` labels a non-finite value."""
        if self._executor is None:
            return [_evaluate(self.objective, params, seed, name) for name, params in points]

        futures = [self._executor.submit(_worker_evaluate, params, seed) for _, params in points]

        return [_check_finite(f.result(), name) for (name, _), f in zip(points, futures)]


def _as_pool(target: Union[ValleyScenario, Objective, ObjectivePool]) -> ObjectivePool:
    return target if isinstance(target, ObjectivePool) else ObjectivePool(_as_objective(target))


def finite_diff_gradient(params: EthicalParams, target: Union[ValleyScenario, Objective, ObjectivePool], seed: int,
                         delta: float = 1e-2, jump_tolerance: float = 1.0, base: Optional[float] = None) -> np.ndarray:
    """
    Central differences with the same seed on both sides. Constrained coordinates closer than `delta` to zero use a
    forward difference instead, so no perturbation leaves the feasible set. `base` is the objective at `params` when
    already known.
    """
    if not delta > 0:
        raise ValueError(f'delta must be positive, got {delta}')

    pool = _as_pool(target)
    vec, names, mask = params.to_vector(), params.names(), params.constrained()

    if base is None:
        base = pool.evaluate([('base point', params)], seed)[0]

    forward = mask & (vec - delta < 0)
    points = []

    for i, name in enumerate(names):
        plus = vec.copy()
        plus[i] += delta
        points.append((name, params.from_vector(plus)))

        if not forward[i]:
            minus = vec.copy()
            minus[i] -= delta
            points.append((name, params.from_vector(minus)))

    values = iter(pool.evaluate(points, seed))
    grad = np.zeros_like(vec)

    for i, name in enumerate(names):
        f_plus = next(values)

        if forward[i]:
            grad[i] = (f_plus - base) / delta
            continue

        f_minus = next(values)
        grad[i] = (f_plus - f_minus) / (2 * delta)

        if abs((f_plus - base) - (base - f_minus)) > jump_tolerance:
            logger.warning(f'Discrete jump in the objective around {name}: one-sided differences '
                           f'{base - f_minus:.4g} and {f_plus - base:.4g}')

    return grad


def update_step(params: EthicalParams, grad: Sequence[float], eta: float) -> EthicalParams:
    if eta < 0:
        raise ValueError(f'Learning rate must be nonnegative, got {eta}')

    return params.from_vector(params.to_vector() - eta * np.asarray(grad, dtype=float)).project()


def train(target: Union[ValleyScenario, Objective], params0: EthicalParams, eta: float, epochs: int, seed: int,
          delta: float = 1e-2, jobs: int = 1) -> List[TrainingEpoch]:
    """
    Projected gradient descent; the history holds the initial point and one entry per epoch. Perturbed objectives
    are spread over `jobs` processes.
    """
    if epochs < 1:
        raise ValueError(f'Need at least one epoch, got {epochs}')

    params = params0

    with ObjectivePool(_as_objective(target), jobs) as pool:
        value = pool.evaluate([('initial parameters', params)], seed)[0]
        history = [TrainingEpoch(0, params, value)]

        for epoch in logging.tqdm(range(1, epochs + 1), desc='train'):
            grad = finite_diff_gradient(params, pool, seed, delta, base=value)
            params = update_step(params, grad, eta)
            value = pool.evaluate([(f'epoch {epoch}', params)], seed)[0]
            history.append(TrainingEpoch(epoch, params, value))

            logger.info(f'Epoch {epoch}: objective {value:.6g}, |grad| {np.linalg.norm(grad):.4g}')

    return history


def history_frame(history: Sequence[TrainingEpoch]) -> pd.DataFrame:
    rows = [dict(epoch=h.epoch, objective=h.objective, **h.params.as_dict()) for h in history]
    return pd.DataFrame(rows)


def save_history(history: Sequence[TrainingEpoch], path: Union[str, os.PathLike]):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    history_frame(history).to_csv(path, index=False)
