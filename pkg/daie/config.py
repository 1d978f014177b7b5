""" Scenario configuration: a frozen dataclass read from and written to versioned TOML."""
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union
import copy
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np
import tomli_w

from . import logging
from .errors import ConfigError


__all__ = ['ScenarioConfig', 'load_config', 'DATA_DIR', 'DEFAULT_CONFIG', 'FLIP_CONFIG', 'DEFAULT_STATE',
           'COVERAGE_LEVELS', 'COMMUNITIES', 'SANCTUARY', 'STAKEHOLDERS', 'GRID_STEPS', 'community_states',
           'community_observations', 'sanctuary_states', 'sanctuary_observations', 'stakeholder_spaces']


logger = logging.get_logger(__name__)

SCHEMA_VERSION = 1
DATA_DIR = Path(__file__).parent / 'data'
DEFAULT_CONFIG = DATA_DIR / 'arid_valley.toml'
FLIP_CONFIG = DATA_DIR / 'arid_valley_flip.toml'
DEFAULT_STATE = DATA_DIR / 'arid_valley_state.toml'

COMMUNITIES = ('C1', 'C2')
SANCTUARY = 'W'
STAKEHOLDERS = COMMUNITIES + (SANCTUARY,)
COVERAGE_LEVELS = tuple(f'cov{i / 10:.1f}' for i in range(11))
GRID_STEPS = (0.05, 0.1, 0.2, 0.25, 0.5, 1.0)


def community_states(d_max: int) -> Tuple[str, ...]:
    return tuple(f'd{i}' for i in range(d_max + 1))


def community_observations(d_max: int) -> Tuple[str, ...]:
    return tuple(f'r{i}' for i in range(d_max + 1))


def sanctuary_states(bins: int) -> Tuple[str, ...]:
    return tuple(f'bin{i}' for i in range(bins))


def sanctuary_observations(bins: int) -> Tuple[str, ...]:
    return tuple(f'e{i}' for i in range(bins))


def _section(name: Optional[str]):
    return dict(section=name)


@dataclass(frozen=True)
class ScenarioConfig:
    """
    All knobs of an Arid Valley scenario. Each field lives in one TOML section (see the field metadata); `trust` and
    `models` are tables keyed by stakeholder id.
    """
    schema_version: int = field(default=SCHEMA_VERSION, metadata=_section(None))
    seed: int = field(default=7, metadata=_section(None))
    days: int = field(default=30, metadata=_section(None))

    budget: int = field(default=100, metadata=_section('valley'))
    need: int = field(default=35, metadata=_section('valley'))
    d_max: int = field(default=5, metadata=_section('valley'))
    sustain_share: float = field(default=0.2, metadata=_section('valley'))
    grid_step: float = field(default=0.1, metadata=_section('valley'))
    candidates: Optional[Tuple[str, ...]] = field(default=None, metadata=_section('valley'))

    kappa: float = field(default=0.5, metadata=_section('survival'))
    preference_precision: float = field(default=8.0, metadata=_section('survival'))

    initial_species: Tuple[int, ...] = field(default=(260, 250, 250, 240), metadata=_section('ecology'))
    response: Optional[Tuple[Tuple[float, ...], ...]] = field(default=None, metadata=_section('ecology'))
    drought_sharpness: float = field(default=1.0, metadata=_section('ecology'))
    recovery_rate: float = field(default=0.5, metadata=_section('ecology'))
    process_noise: float = field(default=0.05, metadata=_section('ecology'))
    diversity_bins: int = field(default=4, metadata=_section('ecology'))
    low_diversity_threshold: float = field(default=0.75, metadata=_section('ecology'))

    noise: float = field(default=0.1, metadata=_section('sensors'))
    readings: int = field(default=8, metadata=_section('sensors'))
    source_noise: Mapping[str, float] = field(default_factory=dict, metadata=_section('sensors'))

    trust: Mapping[str, Tuple[float, float]] = field(
        default_factory=lambda: {sid: (18.0, 0.0) for sid in STAKEHOLDERS}, metadata=_section('trust'))

    norms: str = field(default='arid_valley.norms', metadata=_section('ethics'))
    tau: float = field(default=0.8, metadata=_section('ethics'))
    theta: float = field(default=0.5, metadata=_section('ethics'))
    env_weight: float = field(default=1.0, metadata=_section('ethics'))

    horizon: int = field(default=3, metadata=_section('selection'))

    eta: float = field(default=0.05, metadata=_section('train'))
    delta: float = field(default=0.01, metadata=_section('train'))
    episodes: int = field(default=8, metadata=_section('train'))
    episode_days: int = field(default=10, metadata=_section('train'))
    epochs: int = field(default=50, metadata=_section('train'))
    jobs: int = field(default=0, metadata=_section('train'))

    models: Mapping[str, Mapping[str, Any]] = field(default_factory=dict, metadata=_section('models'))

    base_dir: Optional[str] = field(default=None, compare=False, metadata=_section('__internal__'))

    config_name = 'arid_valley.toml'
    table_sections = ('trust', 'models')

    def __post_init__(self):
        if self.candidates is not None:
            object.__setattr__(self, 'candidates', tuple(self.candidates))

        if self.response is not None:
            object.__setattr__(self, 'response', tuple(tuple(float(x) for x in row) for row in self.response))

        object.__setattr__(self, 'initial_species', tuple(self.initial_species))
        object.__setattr__(self, 'trust', {k: tuple(v) for k, v in self.trust.items()})

    @property
    def species(self) -> int:
        return len(self.initial_species)

    @property
    def population(self) -> int:
        return int(sum(self.initial_species))

    @property
    def sanctuary_need(self) -> float:
        return self.sustain_share * self.budget

    def need_of(self, stakeholder: str) -> float:
        return self.sanctuary_need if stakeholder == SANCTUARY else float(self.need)

    def noise_of(self, source: str) -> float:
        return float(self.source_noise.get(source, self.noise))

    def response_matrix(self) -> np.ndarray:
        if self.response is None:
            return np.full((self.species, self.species), 1.0 / self.species)

        return np.array(self.response, dtype=float)

    @property
    def norms_path(self) -> Path:
        path = Path(self.norms)

        if path.is_absolute():
            return path

        return Path(self.base_dir) / path if self.base_dir else DATA_DIR / path

    def replace(self, **changes) -> 'ScenarioConfig':
        return replace(self, **changes)

    @classmethod
    def _sections(cls) -> Dict[str, Optional[str]]:
        return {f.name: f.metadata['section'] for f in fields(cls)}

    @classmethod
    def extract_init_dict(cls, config_dict: Mapping[str, Any], **kwargs) -> Tuple[Dict[str, Any], List[str]]:
        sections = cls._sections()
        by_section = {}

        for name, section in sections.items():
            by_section.setdefault(section, set()).add(name)

        init_dict, unused = {}, []

        for key, value in copy.deepcopy(dict(config_dict)).items():
            if key in cls.table_sections:
                init_dict[key] = value
            elif isinstance(value, dict) and key in by_section:
                for sub_key, sub_value in value.items():
                    if sub_key in by_section[key]:
                        init_dict[sub_key] = sub_value
                    else:
                        unused.append(f'{key}.{sub_key}')
            elif key in by_section.get(None, ()):
                init_dict[key] = value
            else:
                unused.append(key)

        if 'trust' in init_dict:
            init_dict['trust'] = {k: (v.get('r', 0.0), v.get('s', 0.0)) if isinstance(v, dict) else v
                                  for k, v in init_dict['trust'].items()}

        init_dict.update(kwargs)
        missing = set(sections) - set(init_dict) - {'base_dir'}

        if unused:
            logger.warning(f'The config attributes {sorted(unused)} are not expected by {cls.__name__} and will be '
                           f'ignored.')

        if missing:
            logger.info(f'{sorted(missing)} not found in config. Values will be initialized to default values.')

        return init_dict, unused

    @classmethod
    def from_dict(cls, config_dict: Mapping[str, Any], **kwargs) -> 'ScenarioConfig':
        if 'schema_version' not in config_dict:
            raise ConfigError(['schema_version is missing'])

        init_dict, _ = cls.extract_init_dict(config_dict, **kwargs)

        try:
            return cls(**init_dict)
        except (TypeError, ValueError) as e:
            raise ConfigError([str(e)]) from e

    @classmethod
    def from_config(cls, path: Union[str, os.PathLike], **kwargs) -> 'ScenarioConfig':
        """Reads a scenario TOML file. Relative paths inside it (the norm file) resolve against its directory."""
        path = Path(path)

        try:
            with open(path, 'rb') as f:
                config_dict = tomllib.load(f)
        except FileNotFoundError:
            raise ConfigError([f'config file {str(path)!r} not found']) from None
        except tomllib.TOMLDecodeError as e:
            raise ConfigError([f'not valid TOML: {e}'], str(path)) from None

        kwargs.setdefault('base_dir', str(path.parent))

        try:
            return cls.from_dict(config_dict, **kwargs)
        except ConfigError as e:
            raise ConfigError(e.diagnostics, str(path)) from None

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {}
        values = asdict(self)

        for name, section in self._sections().items():
            value = values[name]

            if section == '__internal__' or value is None:
                continue

            if isinstance(value, tuple):
                value = [list(v) if isinstance(v, tuple) else v for v in value]

            if name == 'trust':
                out['trust'] = {k: dict(r=float(r), s=float(s)) for k, (r, s) in value.items()}
            elif name == 'models':
                if value:
                    out['models'] = value
            elif section is None:
                out[name] = value
            else:
                out.setdefault(section, {})[name] = value

        return out

    def save_config(self, path: Union[str, os.PathLike]):
        path = Path(path)

        if path.is_dir():
            path = path / self.config_name

        path.parent.mkdir(parents=True, exist_ok=True)

        with open(path, 'wb') as f:
            tomli_w.dump(self.to_dict(), f)

        logger.info(f'Scenario config saved in {path}')

    def validate(self) -> List[str]:
        """Returns every problem found, each as a human-readable diagnostic; empty when the config is usable."""
        problems = []

        def check(ok, message):
            if not ok:
                problems.append(message)

        check(self.schema_version == SCHEMA_VERSION, f'schema_version must be {SCHEMA_VERSION}, got '
                                                     f'{self.schema_version}')
        check(self.days >= 1, f'days must be >= 1, got {self.days}')
        check(isinstance(self.budget, int) and self.budget > 0, f'valley.budget must be a positive integer, got '
                                                                f'{self.budget}')
        check(self.need > 0, f'valley.need must be positive, got {self.need}')
        check(self.d_max >= 1, f'valley.d_max must be >= 1, got {self.d_max}')
        check(0 < self.sustain_share <= 1, f'valley.sustain_share must lie in (0, 1], got {self.sustain_share}')
        check(any(abs(self.grid_step - s) < 1e-12 for s in GRID_STEPS),
              f'valley.grid_step must be one of {list(GRID_STEPS)}, got {self.grid_step}')

        for label in self.candidates or ():
            try:
                parts = [float(x) for x in label.split('/')]
                ok = len(parts) == 3 and min(parts) >= 0 and abs(sum(parts) - 1) <= 1e-9
            except ValueError:
                ok = False

            check(ok, f'valley.candidates entry {label!r} is not three shares c1/c2/w summing to 1')

        check(self.kappa > 0, f'survival.kappa must be positive, got {self.kappa}')
        check(self.preference_precision > 0, f'survival.preference_precision must be positive')

        species = np.asarray(self.initial_species, dtype=float)
        check(self.species >= 2, f'ecology.initial_species needs at least 2 species, got {self.species}')
        check(np.all(species >= 0) and species.sum() > 0,
              'ecology.initial_species must be nonnegative and not all zero')

        if self.response is not None:
            mat = np.array(self.response, dtype=float)

            if mat.shape != (self.species, self.species):
                problems.append(f'ecology.response has shape {mat.shape}, expected {(self.species, self.species)}')
            else:
                check(np.all(mat >= 0), 'ecology.response has negative entries')

                for j, total in enumerate(mat.sum(0)):
                    check(abs(total - 1) <= 1e-9, f'ecology.response column {j} sums to {total:.6g}')

                for i, total in enumerate(mat.sum(1)):
                    check(abs(total - 1) <= 1e-9, f'ecology.response row {i} sums to {total:.6g}')

        check(self.drought_sharpness >= 0, 'ecology.drought_sharpness must be nonnegative')
        check(0 <= self.recovery_rate <= 1, 'ecology.recovery_rate must lie in [0, 1]')
        check(self.process_noise >= 0, 'ecology.process_noise must be nonnegative')
        check(self.diversity_bins >= 2, 'ecology.diversity_bins must be >= 2')
        check(0 < self.low_diversity_threshold < 1, 'ecology.low_diversity_threshold must lie in (0, 1)')

        for source, eps in {'default': self.noise, **self.source_noise}.items():
            check(0 <= eps < 0.5, f'sensors noise for {source} must lie in [0, 0.5), got {eps}')

        check(self.readings >= 1, 'sensors.readings must be >= 1')

        for sid in STAKEHOLDERS:
            check(sid in self.trust, f'trust.{sid} is missing')

        for sid, evidence in self.trust.items():
            check(sid in STAKEHOLDERS, f'trust.{sid} names an unknown stakeholder')
            check(len(evidence) == 2 and min(evidence) >= 0, f'trust.{sid} evidence must be nonnegative r and s')

        check(0 < self.tau <= 1, f'ethics.tau must lie in (0, 1], got {self.tau}')
        check(0 < self.theta <= 1, f'ethics.theta must lie in (0, 1], got {self.theta}')
        check(self.env_weight >= 0, f'ethics.env_weight must be nonnegative, got {self.env_weight}')
        check(self.norms_path.is_file(), f'ethics.norms file {str(self.norms_path)!r} not found')
        check(self.horizon >= 1, f'selection.horizon must be >= 1, got {self.horizon}')

        check(self.eta >= 0, 'train.eta must be nonnegative')
        check(self.delta > 0, 'train.delta must be positive')
        check(self.episodes >= 1 and self.episode_days >= 1 and self.epochs >= 1,
              'train.episodes, train.episode_days and train.epochs must be >= 1')
        check(self.jobs >= 0, f'train.jobs must be >= 0 (0 means one per CPU), got {self.jobs}')

        problems.extend(self._validate_models())

        return problems

    def _validate_models(self) -> List[str]:
        problems = []
        spaces = stakeholder_spaces(self)

        for sid, override in self.models.items():
            if sid not in spaces:
                problems.append(f'models.{sid} names an unknown stakeholder')
                continue

            states, observations = spaces[sid]

            if 'likelihood' in override:
                rows = override['likelihood']

                if len(rows) != len(states):
                    problems.append(f'models.{sid}.likelihood has {len(rows)} rows, expected {len(states)}')

                for s, row in zip(states, rows):
                    if len(row) != len(observations) or min(row) < 0 or abs(sum(row) - 1) > 1e-9:
                        problems.append(f'models.{sid}.likelihood row for state {s!r} sums to {sum(row):.6g}')

                if all(len(row) == len(observations) for row in rows):
                    for j, o in enumerate(observations):
                        if all(row[j] <= 0 for row in rows):
                            problems.append(f'models.{sid}.likelihood gives observation {o!r} zero probability in '
                                            f'every state')

            for action, rows in override.get('transition', {}).items():
                if action not in COVERAGE_LEVELS:
                    problems.append(f'models.{sid}.transition names unknown action {action!r}')
                    continue

                if len(rows) != len(states):
                    problems.append(f'models.{sid}.transition.{action} has {len(rows)} rows, expected '
                                    f'{len(states)}')

                for s, row in zip(states, rows):
                    if len(row) != len(states) or min(row) < 0 or abs(sum(row) - 1) > 1e-9:
                        problems.append(f'transition from state {s!r} under action {action!r} for {sid} sums to '
                                        f'{sum(row):.6g}')

        return problems


def stakeholder_spaces(config: ScenarioConfig) -> Dict[str, Tuple[Tuple[str, ...], Tuple[str, ...]]]:
    spaces = {sid: (community_states(config.d_max), community_observations(config.d_max)) for sid in COMMUNITIES}
    spaces[SANCTUARY] = (sanctuary_states(config.diversity_bins), sanctuary_observations(config.diversity_bins))

    return spaces


def load_config(path: Union[str, os.PathLike, None] = None, **kwargs) -> ScenarioConfig:
    """`from_config` plus `validate`; raises ConfigError listing the diagnostics when any are found."""
    path = DEFAULT_CONFIG if path is None else path
    config = ScenarioConfig.from_config(path, **kwargs)
    problems = config.validate()

    if problems:
        raise ConfigError(problems, str(path))

    return config
