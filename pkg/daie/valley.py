from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union
import math
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import logging
from .config import (COMMUNITIES, COVERAGE_LEVELS, GRID_STEPS, SANCTUARY, STAKEHOLDERS, ScenarioConfig,
                     community_observations, community_states, load_config, sanctuary_observations,
                     sanctuary_states)
from .errors import ConfigError, InvalidGridStep, ZeroEvidence
from .ethica import Norm, SymbolicState, parse_norms
from .field import EthicalField, StakeholderModel
from .infer import CategoricalDist, GenerativeModel, entropy, exact_posterior, point_mass, uniform
from .opinion import Opinion, discount, from_evidence, fuse, vacuous
from .utils import largest_remainder


__all__ = ['ValleyState', 'Allocation', 'SourceReport', 'Report', 'ValleyEnvironment', 'ValleyScenario',
           'survival_probability', 'candidate_allocations', 'step', 'observe', 'species_expectation',
           'normalized_entropy', 'diversity_bin', 'community_model', 'sanctuary_model', 'stakeholder_models',
           'reports_to_state', 'build_field', 'realized_actions', 'action_vocabulary', 'atom_vocabulary',
           'trust_opinions', 'load_state', 'load_report', 'allocation_units']


logger = logging.get_logger(__name__)


def survival_probability(deficit: int, kappa: float, d_max: Optional[int] = None) -> float:
    if deficit < 0 or (d_max is not None and deficit > d_max):
        raise ValueError(f'Deficit {deficit} outside [0, {d_max}]')

    return math.exp(-kappa * deficit)


@dataclass(frozen=True)
class ValleyState:
    deficits: Mapping[str, int]
    species: Tuple[int, ...]
    day: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'deficits', {sid: int(self.deficits[sid]) for sid in STAKEHOLDERS})
        object.__setattr__(self, 'species', tuple(int(x) for x in self.species))

        if min(self.deficits.values()) < 0:
            raise ValueError(f'Negative deficit in {self.deficits}')

        if min(self.species) < 0 or sum(self.species) == 0:
            raise ValueError(f'Species counts must be nonnegative and not all zero, got {self.species}')

    def check(self, config: ScenarioConfig):
        over = {k: v for k, v in self.deficits.items() if v > config.d_max}

        if over:
            raise ValueError(f'Deficits {over} exceed d_max={config.d_max}')

        if len(self.species) != config.species:
            raise ValueError(f'{len(self.species)} species counts, config declares {config.species}')

    def species_dist(self) -> CategoricalDist:
        return CategoricalDist.normalized(self.species, _species_labels(len(self.species)))

    def as_dict(self) -> dict:
        return dict(day=self.day, deficits=dict(self.deficits), species=list(self.species))


@dataclass(frozen=True)
class Allocation:
    """Shares of the daily budget for (C1, C2, W)."""
    fractions: Tuple[float, float, float]
    budget: int = 100

    def __post_init__(self):
        fractions = tuple(float(x) for x in self.fractions)

        if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1) > 1e-9:
            raise ValueError(f'Allocation shares must be three nonnegative numbers summing to 1, got {fractions}')

        object.__setattr__(self, 'fractions', fractions)

    @classmethod
    def parse(cls, label: str, budget: int = 100) -> 'Allocation':
        return cls(tuple(float(x) for x in label.split('/')), budget)

    @property
    def label(self) -> str:
        return '/'.join(f'{x:.2f}' for x in self.fractions)

    def units(self) -> Dict[str, int]:
        return dict(zip(STAKEHOLDERS, largest_remainder(self.fractions, self.budget)))

    def __str__(self):
        return self.label


def candidate_allocations(grid_step: float, budget: int = 100) -> List[Allocation]:
    if not any(abs(grid_step - s) < 1e-12 for s in GRID_STEPS):
        raise InvalidGridStep(f'Grid step must be one of {list(GRID_STEPS)}, got {grid_step}')

    n = round(1 / grid_step)
    triples = {(round(i / n, 12), round(j / n, 12), round((n - i - j) / n, 12))
               for i in range(n + 1) for j in range(n + 1 - i)}

    return [Allocation(t, budget) for t in sorted(triples)]


@dataclass(frozen=True)
class SourceReport:
    """One source's daily report: (r, s) evidence for `has_water` and a noisy reading of its own state."""
    source: str
    r: int
    s: int
    reading: str
    noise: float

    def __post_init__(self):
        if self.r < 0 or self.s < 0:
            raise ValueError(f'Evidence counts for {self.source} must be nonnegative')


@dataclass(frozen=True)
class Report:
    """
    A day of reports. `diversity` is the sanctuary's (r, s) evidence for low diversity; `census` is one more (r, s)
    reading taken from the noisy species census itself.
    """
    day: int
    sources: Mapping[str, SourceReport]
    species: Tuple[int, ...]
    diversity: Tuple[int, int]
    census: Tuple[int, int] = (0, 0)

    def __post_init__(self):
        object.__setattr__(self, 'species', tuple(int(x) for x in self.species))
        object.__setattr__(self, 'diversity', tuple(int(x) for x in self.diversity))
        object.__setattr__(self, 'census', tuple(int(x) for x in self.census))

        if min(self.diversity + self.census) < 0:
            raise ValueError('Diversity evidence counts must be nonnegative')

    def as_dict(self) -> dict:
        return dict(
            day=self.day,
            sources={k: dict(r=v.r, s=v.s, reading=v.reading, noise=v.noise) for k, v in self.sources.items()},
            species=list(self.species),
            diversity=list(self.diversity),
            census=list(self.census)
        )


def _species_labels(k: int) -> Tuple[str, ...]:
    return tuple(f's{i}' for i in range(k))


def normalized_entropy(counts: Sequence[float]) -> float:
    if len(counts) < 2:
        return 0.0

    return entropy(CategoricalDist.normalized(counts)) / math.log(len(counts))


def diversity_bin(counts: Sequence[float], bins: int) -> int:
    return min(bins - 1, int(normalized_entropy(counts) * bins))


def water_adequacy(units: float, need: float) -> float:
    return min(1.0, units / need) if need > 0 else 1.0


def coverage_label(units: float, need: float) -> str:
    return f'cov{round(water_adequacy(units, need) * 10) / 10:.1f}'


def species_expectation(probs: np.ndarray, adequacy: float, config: ScenarioConfig) -> np.ndarray:
    """
    Expected next species distribution: drought sharpens it toward the dominant species (exponent grows as water
    falls short), then a share of the population proportional to the water received mixes through the response
    matrix.
    """
    gamma = 1.0 + config.drought_sharpness * (1.0 - adequacy)
    sharpened = np.power(probs, gamma)
    sharpened /= sharpened.sum()
    mix = config.recovery_rate * adequacy

    return (1 - mix) * sharpened + mix * (config.response_matrix() @ sharpened)


def step(state: ValleyState, alloc: Allocation, config: ScenarioConfig,
         rng: np.random.Generator) -> Tuple[ValleyState, 'Report']:
    units = alloc.units()
    deficits = {
        sid: 0 if units[sid] >= config.need_of(sid) else min(state.deficits[sid] + 1, config.d_max)
        for sid in STAKEHOLDERS
    }

    probs = np.asarray(state.species, dtype=float) / sum(state.species)
    expected = species_expectation(probs, water_adequacy(units[SANCTUARY], config.sanctuary_need), config)
    noisy = expected * np.exp(rng.normal(0.0, config.process_noise, expected.size))
    species = largest_remainder(noisy, config.population)

    nxt = ValleyState(deficits, species, state.day + 1)

    return nxt, observe(nxt, config, rng)


def _noisy_reading(true_idx: int, n: int, eps: float, rng: np.random.Generator) -> int:
    flip, other = rng.random(), int(rng.integers(n - 1))

    if flip >= eps:
        return true_idx

    return other if other < true_idx else other + 1


def _noisy_evidence(truth: bool, readings: int, eps: float, rng: np.random.Generator) -> Tuple[int, int]:
    flips = rng.random(readings) < eps
    r = int(np.sum(np.logical_xor(truth, flips)))

    return r, readings - r


def observe(state: ValleyState, config: ScenarioConfig, rng: np.random.Generator) -> Report:
    sources = {}

    for sid in STAKEHOLDERS:
        eps = config.noise_of(sid)
        r, s = _noisy_evidence(state.deficits[sid] == 0, config.readings, eps, rng)

        if sid == SANCTUARY:
            obs = sanctuary_observations(config.diversity_bins)
            idx = _noisy_reading(diversity_bin(state.species, config.diversity_bins), len(obs), eps, rng)
        else:
            obs = community_observations(config.d_max)
            idx = _noisy_reading(min(state.deficits[sid], config.d_max), len(obs), eps, rng)

        sources[sid] = SourceReport(sid, r, s, obs[idx], eps)

    eps_w = config.noise_of(SANCTUARY)
    counts = np.asarray(state.species, dtype=float) * np.exp(rng.normal(0.0, eps_w, len(state.species)))
    species = tuple(int(x) for x in np.clip(np.rint(counts), 0, None))

    low = normalized_entropy(state.species) < config.low_diversity_threshold
    diversity = _noisy_evidence(low, config.readings, eps_w, rng)

    if sum(species) > 0:
        census = (1, 0) if normalized_entropy(species) < config.low_diversity_threshold else (0, 1)
    else:
        census = (0, 0)

    return Report(state.day, sources, species, diversity, census)


def _symmetric_likelihood(n: int, eps: float) -> np.ndarray:
    off = eps / (n - 1)
    return np.full((n, n), off) + np.eye(n) * (1 - eps - off)


def _coverage(label: str) -> float:
    return float(label[len('cov'):])


def community_model(config: ScenarioConfig, noise: Optional[float] = None) -> GenerativeModel:
    """Deficit days d0..dD: full water resets to d0 with probability equal to the coverage, else one more dry day."""
    states = community_states(config.d_max)
    n = len(states)
    transition = {}

    for label in COVERAGE_LEVELS:
        cov = _coverage(label)
        mat = np.zeros((n, n))

        for s in range(n):
            mat[0, s] += cov
            mat[min(s + 1, n - 1), s] += 1 - cov

        transition[label] = mat

    preferences = np.array([config.preference_precision * math.log(survival_probability(d, config.kappa))
                            for d in range(n)])

    return GenerativeModel(states, community_observations(config.d_max), COVERAGE_LEVELS,
                           _symmetric_likelihood(n, config.noise if noise is None else noise), transition,
                           preferences)


def sanctuary_model(config: ScenarioConfig, noise: Optional[float] = None) -> GenerativeModel:
    """Diversity bins: water moves the sanctuary one bin up with probability equal to the coverage, else one down."""
    bins = config.diversity_bins
    transition = {}

    for label in COVERAGE_LEVELS:
        cov = _coverage(label)
        mat = np.zeros((bins, bins))

        for s in range(bins):
            mat[min(s + 1, bins - 1), s] += cov
            mat[max(s - 1, 0), s] += 1 - cov

        transition[label] = mat

    preferences = -config.preference_precision * (1 - np.arange(bins) / (bins - 1))

    return GenerativeModel(sanctuary_states(bins), sanctuary_observations(bins), COVERAGE_LEVELS,
                           _symmetric_likelihood(bins, config.noise if noise is None else noise), transition,
                           preferences)


def _apply_override(model: GenerativeModel, override: Mapping) -> GenerativeModel:
    likelihood = np.array(override['likelihood'], dtype=float) if 'likelihood' in override else model.likelihood
    transition = dict(model.transition)

    for action, rows in override.get('transition', {}).items():
        transition[action] = np.array(rows, dtype=float).T

    return GenerativeModel(model.states, model.observations, model.actions, likelihood, transition,
                           model.preferences, model.prior)


def stakeholder_models(config: ScenarioConfig) -> Dict[str, GenerativeModel]:
    models = {sid: community_model(config, config.noise_of(sid)) for sid in COMMUNITIES}
    models[SANCTUARY] = sanctuary_model(config, config.noise_of(SANCTUARY))

    for sid, override in config.models.items():
        models[sid] = _apply_override(models[sid], override)

    return models


def trust_opinions(config: ScenarioConfig) -> Dict[str, Opinion]:
    return {sid: from_evidence(*config.trust.get(sid, (0.0, 0.0))) for sid in STAKEHOLDERS}


def atom_vocabulary() -> Tuple[str, ...]:
    return tuple(f'has_water({sid})' for sid in STAKEHOLDERS) + (f'low_diversity({SANCTUARY})',)


def action_vocabulary() -> Tuple[str, ...]:
    return tuple(f'{verb}({sid})' for verb in ('give_water', 'starve', 'prioritize') for sid in STAKEHOLDERS)


def realized_actions(alloc: Allocation, config: ScenarioConfig) -> FrozenSet[str]:
    units = alloc.units()
    labels = set()

    for sid in STAKEHOLDERS:
        if units[sid] >= config.need_of(sid):
            labels.add(f'give_water({sid})')

        if units[sid] == 0:
            labels.add(f'starve({sid})')

        if all(units[sid] > units[other] for other in STAKEHOLDERS if other != sid):
            labels.add(f'prioritize({sid})')

    return frozenset(labels)


def reports_to_state(report: Report, trust: Mapping[str, Opinion]) -> SymbolicState:
    """
    Atom opinions come from each source's evidence discounted by the trust in that source. Each stakeholder's frame
    holds its own undiscounted readings; atoms it does not report on are vacuous there. `low_diversity(W)` fuses the
    sanctuary's readings with the census reading.
    """
    raw = {f'has_water({sid})': from_evidence(src.r, src.s) for sid, src in report.sources.items()}
    owners = {atom: atom[len('has_water('):-1] for atom in raw}

    diversity_atom = f'low_diversity({SANCTUARY})'
    raw[diversity_atom] = fuse(from_evidence(*report.diversity), from_evidence(*report.census))
    owners[diversity_atom] = SANCTUARY

    atoms = {atom: discount(trust.get(owners[atom], vacuous()), op) for atom, op in raw.items()}
    frames = {
        sid: {atom: (op if owners[atom] == sid else vacuous()) for atom, op in raw.items()}
        for sid in report.sources
    }

    return SymbolicState(atoms, frames, dict(trust))


def _belief(model: GenerativeModel, reading: Optional[str], true_label: str,
            prior: Optional[CategoricalDist] = None) -> CategoricalDist:
    if reading is None:
        return point_mass(model.states, true_label)

    if prior is None:
        return exact_posterior(model, uniform(model.states), reading)

    try:
        return exact_posterior(model, prior, reading)
    except ZeroEvidence:
        logger.warning(f'Reading {reading!r} is impossible under the carried belief; restarting from a uniform prior')
        return exact_posterior(model, uniform(model.states), reading)


@lru_cache(maxsize=4096)
def allocation_units(label: str, budget: int) -> Tuple[int, ...]:
    """Units of an allocation label, in stakeholder order."""
    units = Allocation.parse(label, budget).units()
    return tuple(units[sid] for sid in STAKEHOLDERS)


@lru_cache(maxsize=16384)
def _coverage_of(label: str, budget: int, index: int, need: float) -> str:
    return coverage_label(allocation_units(label, budget)[index], need)


def build_field(config: ScenarioConfig, state: ValleyState, report: Optional[Report] = None,
                models: Optional[Mapping[str, GenerativeModel]] = None,
                preferences: Optional[Mapping[str, Sequence[float]]] = None,
                env_weight: Optional[float] = None,
                beliefs: Optional[Mapping[str, CategoricalDist]] = None) -> EthicalField:
    """
    Three stakeholder models with beliefs from the report (point masses on the true state when there is none), a
    projection from allocation labels to water coverage, and a species forecast for the environment term. `beliefs`
    are priors carried over from the previous day; without them each reading is read against a uniform prior.
    """
    models = dict(models or stakeholder_models(config))
    trust = trust_opinions(config)
    beliefs = beliefs or {}

    for sid, prefs in (preferences or {}).items():
        models[sid] = models[sid].with_preferences(prefs)

    truth = {sid: f'd{min(state.deficits[sid], config.d_max)}' for sid in COMMUNITIES}
    truth[SANCTUARY] = f'bin{diversity_bin(state.species, config.diversity_bins)}'

    members = []

    for sid in STAKEHOLDERS:
        reading = report.sources[sid].reading if report is not None else None
        belief = _belief(models[sid], reading, truth[sid], beliefs.get(sid))
        members.append(StakeholderModel(sid, models[sid], belief, trust[sid]))

    index = {sid: i for i, sid in enumerate(STAKEHOLDERS)}

    def projection(sid: str, label: str) -> str:
        return _coverage_of(label, config.budget, index[sid], config.need_of(sid))

    species_now = report.species if report is not None and sum(report.species) > 0 else state.species
    labels = _species_labels(len(species_now))
    start = np.asarray(species_now, dtype=float) / sum(species_now)
    forecasts: Dict[float, Tuple[CategoricalDist, ...]] = {}

    def env_forecast(label: str) -> Tuple[CategoricalDist, ...]:
        units = allocation_units(label, config.budget)[index[SANCTUARY]]
        adequacy = water_adequacy(units, config.sanctuary_need)

        if adequacy not in forecasts:
            probs, forecast = start, []

            for _ in range(config.horizon):
                probs = species_expectation(probs, adequacy, config)
                forecast.append(CategoricalDist(probs / probs.sum(), labels))

            forecasts[adequacy] = tuple(forecast)

        return forecasts[adequacy]

    return EthicalField(
        stakeholders=tuple(members),
        env_target=uniform(labels),
        env_weight=config.env_weight if env_weight is None else env_weight,
        horizon=config.horizon,
        projection=projection,
        env_forecast=env_forecast
    )


def load_state(path: Union[str, os.PathLike], config: ScenarioConfig) -> ValleyState:
    """Reads a `[state]` TOML table: `day`, `deficits = {C1 = .., C2 = .., W = ..}` and `species = [...]`."""
    try:
        with open(path, 'rb') as f:
            data = tomllib.load(f).get('state', {})

        state = ValleyState(data.get('deficits', {}), data['species'], data.get('day', 0))
        state.check(config)
    except FileNotFoundError:
        raise ConfigError([f'state file {str(path)!r} not found']) from None
    except (KeyError, ValueError, TypeError, tomllib.TOMLDecodeError) as e:
        raise ConfigError([f'invalid state: {e}'], str(path)) from None

    return state


def load_report(path: Union[str, os.PathLike], config: ScenarioConfig, day: int = 0) -> Optional[Report]:
    """
    Reads the optional `[report]` table of a state file: `species`, `diversity` and `census` evidence, and one
    `[report.sources.<id>]` table per stakeholder with `r`, `s` and `reading`. Returns None when there is none.
    """
    try:
        with open(path, 'rb') as f:
            data = tomllib.load(f).get('report')

        if data is None:
            return None

        sources = {}

        for sid in STAKEHOLDERS:
            src = data['sources'][sid]
            sources[sid] = SourceReport(sid, int(src['r']), int(src['s']), str(src['reading']), config.noise_of(sid))

        report = Report(day, sources, data['species'], data['diversity'], data.get('census', (0, 0)))
    except FileNotFoundError:
        raise ConfigError([f'state file {str(path)!r} not found']) from None
    except (KeyError, ValueError, TypeError, tomllib.TOMLDecodeError) as e:
        raise ConfigError([f'invalid report: {e}'], str(path)) from None

    problems = [f'report reading {src.reading!r} of {sid} is not one of its observations'
                for sid, src in report.sources.items() if src.reading not in _observations_of(sid, config)]

    if problems:
        raise ConfigError(problems, str(path))

    return report


def _observations_of(sid: str, config: ScenarioConfig) -> Tuple[str, ...]:
    if sid == SANCTUARY:
        return tuple(sanctuary_observations(config.diversity_bins))

    return tuple(community_observations(config.d_max))


class ValleyEnvironment:
    """Ground truth for one seeded episode."""

    def __init__(self, config: ScenarioConfig, seed: int):
        self.config = config
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.state: Optional[ValleyState] = None

    def reset(self) -> Tuple[ValleyState, Report]:
        self.rng = np.random.default_rng(self.seed)
        self.state = ValleyState({sid: 0 for sid in STAKEHOLDERS}, self.config.initial_species, 0)

        return self.state, observe(self.state, self.config, self.rng)

    def step(self, action: str) -> Tuple[ValleyState, Report]:
        alloc = Allocation.parse(action, self.config.budget)
        self.state, report = step(self.state, alloc, self.config, self.rng)

        return self.state, report


@dataclass(frozen=True, eq=False)
class ValleyScenario:
    """Config, parsed norms and the current ethical parameters (preferences per stakeholder and env weight)."""
    config: ScenarioConfig
    norms: Tuple[Norm, ...]
    preferences: Mapping[str, np.ndarray] = field(default_factory=dict)
    env_weight: Optional[float] = None
    models: Optional[Mapping[str, GenerativeModel]] = None

    def __post_init__(self):
        object.__setattr__(self, 'norms', tuple(self.norms))

        if self.models is None:
            object.__setattr__(self, 'models', stakeholder_models(self.config))

        if not self.preferences:
            object.__setattr__(self, 'preferences', {sid: m.preferences for sid, m in self.models.items()})

        if self.env_weight is None:
            object.__setattr__(self, 'env_weight', self.config.env_weight)

    @classmethod
    def load(cls, config: Union[str, os.PathLike, ScenarioConfig, None] = None) -> 'ValleyScenario':
        if not isinstance(config, ScenarioConfig):
            config = load_config(config)

        norms = parse_norms(Path(config.norms_path).read_text(encoding='utf-8'), actions=action_vocabulary(),
                            atoms=atom_vocabulary())

        return cls(config, norms)

    @cached_property
    def field_models(self) -> Dict[str, GenerativeModel]:
        """The stakeholder models carrying the current preferences."""
        return {sid: m.with_preferences(self.preferences.get(sid, m.preferences)) for sid, m in self.models.items()}

    @cached_property
    def trust(self) -> Dict[str, Opinion]:
        return trust_opinions(self.config)

    @cached_property
    def _realized(self) -> Dict[str, FrozenSet[str]]:
        return {}

    @cached_property
    def _candidates(self) -> Tuple[str, ...]:
        if self.config.candidates:
            return tuple(Allocation.parse(c, self.config.budget).label for c in self.config.candidates)

        return tuple(a.label for a in candidate_allocations(self.config.grid_step, self.config.budget))

    def candidates(self) -> List[str]:
        return list(self._candidates)

    def realizes(self, candidate: str) -> FrozenSet[str]:
        if candidate not in self._realized:
            self._realized[candidate] = realized_actions(Allocation.parse(candidate, self.config.budget),
                                                         self.config)

        return self._realized[candidate]

    def initial_state(self) -> ValleyState:
        return ValleyState({sid: 0 for sid in STAKEHOLDERS}, self.config.initial_species, 0)

    def symbolic_state(self, report: Report) -> SymbolicState:
        return reports_to_state(report, self.trust)

    def build_field(self, state: ValleyState, report: Optional[Report] = None,
                    beliefs: Optional[Mapping[str, CategoricalDist]] = None) -> EthicalField:
        return build_field(self.config, state, report, self.field_models, env_weight=self.env_weight, beliefs=beliefs)

    def with_parameters(self, preferences: Mapping[str, np.ndarray], weights: Sequence[float],
                        env_weight: float) -> 'ValleyScenario':
        norms = [norm.with_weight(w) for norm, w in zip(self.norms, weights)]

        return ValleyScenario(self.config, norms, dict(preferences), env_weight, self.models)
