from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

from . import logging
from .errors import EmptyCandidateSet, NoPermittedAction, SupportMismatch, UnknownStakeholder, UnmappedAction
from .ethica import Norm, Realizer, SymbolicState, Verdicts, active_verdicts, exclusions, obligation_penalties
from .infer import CategoricalDist, EfeBreakdown, GenerativeModel, kl_divergence, rollout_efe, uniform
from .opinion import Opinion, confidence_weight


__all__ = ['StakeholderModel', 'EthicalField', 'StakeholderTerm', 'GlobalBreakdown', 'CandidateTable',
           'DecisionRecord', 'rollout_efe', 'stakeholder_efe', 'env_free_energy', 'global_efe', 'select_action',
           'SELF_ID']


logger = logging.get_logger(__name__)

SELF_ID = 'self'
TIE_TOLERANCE = 1e-12
FULL_TRUST = Opinion(1.0, 0.0, 0.0)


@dataclass(frozen=True, eq=False)
class StakeholderModel:
    """The deciding agent's model of one stakeholder: its world model, its current belief, and how far we trust it."""
    id: str
    model: GenerativeModel
    belief: CategoricalDist
    trust: Opinion = FULL_TRUST

    def __post_init__(self):
        if self.belief.labels != self.model.states:
            raise SupportMismatch(f'Belief of {self.id!r} is over {self.belief.labels}, model states are '
                                  f'{self.model.states}')


def identity_projection(stakeholder: str, action: str) -> str:
    return action


@dataclass(frozen=True, eq=False)
class EthicalField:
    stakeholders: Tuple[StakeholderModel, ...]
    env_target: Optional[CategoricalDist] = None
    env_weight: float = 1.0
    horizon: int = 3
    projection: Callable[[str, str], str] = identity_projection
    env_forecast: Optional[Callable[[str], Sequence[CategoricalDist]]] = None
    self_model: Optional[StakeholderModel] = None

    def __post_init__(self):
        object.__setattr__(self, 'stakeholders', tuple(self.stakeholders))

        if self.horizon < 1:
            raise ValueError(f'Horizon must be at least 1, got {self.horizon}')

        if not self.env_weight >= 0:
            raise ValueError(f'env_weight must be nonnegative, got {self.env_weight}')

        ids = [m.id for m in self.members()]

        if len(set(ids)) != len(ids):
            raise ValueError(f'Duplicate stakeholder ids in {ids}')

    def members(self) -> List[StakeholderModel]:
        head = [self.self_model] if self.self_model is not None else []
        return head + list(self.stakeholders)

    def stakeholder(self, stakeholder_id: str) -> StakeholderModel:
        for member in self.members():
            if member.id == stakeholder_id:
                return member

        raise UnknownStakeholder(f'Unknown stakeholder {stakeholder_id!r}')

    def weight_of(self, member: StakeholderModel) -> float:
        return 1.0 if member is self.self_model else confidence_weight(member.trust)

    def local_action(self, member: StakeholderModel, action: str) -> str:
        try:
            local = self.projection(member.id, action)
        except KeyError:
            local = None

        if local is None or local not in member.model.actions:
            raise UnmappedAction(f'Action {action!r} has no local counterpart for stakeholder {member.id!r}')

        return local


def stakeholder_efe(field: EthicalField, stakeholder_id: str, action: str) -> float:
    member = field.stakeholder(stakeholder_id)
    local = field.local_action(member, action)

    return rollout_efe(member.model, member.belief, local, field.horizon).total


def env_free_energy(projected_species: CategoricalDist, target: CategoricalDist) -> float:
    return kl_divergence(projected_species, target)


@dataclass(frozen=True)
class StakeholderTerm:
    efe: float
    risk: float
    ambiguity: float
    confidence: float
    local_action: str

    @property
    def weighted(self) -> float:
        return self.confidence * self.efe


@dataclass(frozen=True, eq=False)
class GlobalBreakdown:
    action: str
    stakeholders: Mapping[str, StakeholderTerm]
    env: float
    penalty: float
    total: float = None

    def __post_init__(self):
        parts = self.reconstruct()

        if self.total is None:
            object.__setattr__(self, 'total', parts)
        elif abs(self.total - parts) > 1e-9:
            raise ValueError(f'Breakdown of {self.action!r} does not add up: {self.total} vs {parts}')

    def reconstruct(self) -> float:
        return sum(t.weighted for t in self.stakeholders.values()) + self.env + self.penalty


EfeCache = Dict[Tuple[str, str], EfeBreakdown]


def _member_efe(field: EthicalField, member: StakeholderModel, local: str, cache: EfeCache) -> EfeBreakdown:
    key = (member.id, local)

    if key not in cache:
        cache[key] = rollout_efe(member.model, member.belief, local, field.horizon)

    return cache[key]


def _env_term(field: EthicalField, action: str, cache: Optional[dict] = None) -> float:
    if field.env_forecast is None or field.env_weight <= 0:
        return 0.0

    forecast = tuple(field.env_forecast(action))
    cache = {} if cache is None else cache

    if forecast not in cache:
        target = field.env_target or uniform(forecast[0].labels)
        cache[forecast] = field.env_weight * sum(env_free_energy(p, target) for p in forecast)

    return cache[forecast]


def global_efe(field: EthicalField, action: str, penalties: Optional[Mapping[str, float]] = None,
               cache: Optional[EfeCache] = None, env_cache: Optional[dict] = None) -> GlobalBreakdown:
    cache = {} if cache is None else cache
    terms = {}

    for member in field.members():
        local = field.local_action(member, action)
        efe = _member_efe(field, member, local, cache)
        terms[member.id] = StakeholderTerm(efe.total, efe.risk, efe.ambiguity, field.weight_of(member), local)

    penalty = float((penalties or {}).get(action, 0.0))

    return GlobalBreakdown(action, terms, _env_term(field, action, env_cache), penalty)


class CandidateTable(Mapping[str, GlobalBreakdown]):
    """
    Global EFE of a set of candidates. `totals` is computed up front, in the same order of operations as
    `GlobalBreakdown.reconstruct`; a candidate's full breakdown is built when first looked up.
    """

    def __init__(self, field: EthicalField, actions: Iterable[str], penalties: Optional[Mapping[str, float]] = None):
        self.field = field
        self.penalties = dict(penalties or {})
        self._cache: EfeCache = {}
        self._env_cache = {}
        self._breakdowns: Dict[str, GlobalBreakdown] = {}

        members = field.members()
        weights = [field.weight_of(m) for m in members]
        self.totals: Dict[str, float] = {}

        for action in sorted(set(actions)):
            stakeholders = 0

            for member, weight in zip(members, weights):
                efe = _member_efe(field, member, field.local_action(member, action), self._cache)
                stakeholders = stakeholders + weight * efe.total

            penalty = float(self.penalties.get(action, 0.0))
            self.totals[action] = stakeholders + _env_term(field, action, self._env_cache) + penalty

    def __getitem__(self, action: str) -> GlobalBreakdown:
        if action not in self.totals:
            raise KeyError(action)

        if action not in self._breakdowns:
            self._breakdowns[action] = global_efe(self.field, action, self.penalties, self._cache, self._env_cache)

        return self._breakdowns[action]

    def __iter__(self) -> Iterator[str]:
        return iter(self.totals)

    def __len__(self) -> int:
        return len(self.totals)


@dataclass(frozen=True, eq=False)
class DecisionRecord:
    day: int
    candidates: Mapping[str, GlobalBreakdown]
    verdicts: Verdicts
    exclusions: Mapping[str, Tuple[str, float]]
    penalties: Mapping[str, float]
    chosen: str
    tied: Tuple[str, ...] = ()

    def __post_init__(self):
        totals = self.totals

        if totals[self.chosen] > min(totals.values()) + TIE_TOLERANCE:
            raise ValueError(f'Chosen action {self.chosen!r} does not minimize the global EFE')

    @property
    def totals(self) -> Mapping[str, float]:
        if isinstance(self.candidates, CandidateTable):
            return self.candidates.totals

        return {a: b.total for a, b in self.candidates.items()}

    @property
    def chosen_breakdown(self) -> GlobalBreakdown:
        return self.candidates[self.chosen]

    @property
    def tie_note(self) -> str:
        if len(self.tied) < 2:
            return ''

        return f'tie among {", ".join(self.tied)}; lexicographically first chosen'


def select_action(field: EthicalField, candidates: Iterable[str], norms: Sequence[Norm], state: SymbolicState,
                  tau: float, theta: float, realizes: Optional[Realizer] = None, day: int = 0) -> DecisionRecord:
    candidates = sorted(set(candidates))

    if not candidates:
        raise EmptyCandidateSet('At least one candidate action is required')

    verdicts = active_verdicts(norms, state, theta, candidates, realizes)
    excluded = exclusions(candidates, verdicts, tau, realizes)

    for candidate, (action, prob) in excluded.items():
        logger.debug(f'Day {day}: excluded {candidate}, realizes forbidden {action} (p={prob:.3f})')

    allowed = [a for a in candidates if a not in excluded]

    if not allowed:
        raise NoPermittedAction(f'Day {day}: All {len(candidates)} candidates are forbidden at tau={tau}',
                                verdicts=verdicts, day=day)

    penalties = obligation_penalties(candidates, verdicts, realizes)
    table = CandidateTable(field, allowed, penalties)
    best = min(table.totals.values())
    tied = tuple(a for a, total in table.totals.items() if total - best <= TIE_TOLERANCE)

    if len(tied) > 1:
        logger.debug(f'Day {day}: tie among {tied}, choosing {tied[0]}')

    return DecisionRecord(day, table, verdicts, excluded, penalties, tied[0], tied)
