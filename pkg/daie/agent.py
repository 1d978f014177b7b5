from dataclasses import dataclass, field
from typing import Dict, List, Optional

from . import logging
from .ethica import SymbolicState
from .field import DecisionRecord, select_action
from .infer import CategoricalDist, predict_state_dist
from .valley import Report, ValleyEnvironment, ValleyScenario, ValleyState


__all__ = ['EthicalAgent', 'Episode', 'run_episode']


logger = logging.get_logger(__name__)


class EthicalAgent:
    """
    Perception then deontic filtering then global-EFE selection, once per day. Each stakeholder belief is carried to
    the next day by pushing it through that stakeholder's transition under the chosen allocation.
    """

    def __init__(self, scenario: ValleyScenario):
        self.scenario = scenario
        self.report: Optional[Report] = None
        self.symbolic: Optional[SymbolicState] = None
        self.priors: Dict[str, CategoricalDist] = {}
        self.beliefs: Dict[str, CategoricalDist] = {}

    def reset(self):
        self.report, self.symbolic = None, None
        self.priors, self.beliefs = {}, {}

    def perceive(self, report: Report) -> SymbolicState:
        self.report = report
        self.symbolic = self.scenario.symbolic_state(report)

        return self.symbolic

    def decide(self, state: ValleyState, day: int) -> DecisionRecord:
        if self.symbolic is None:
            raise RuntimeError('decide() called before perceive()')

        config = self.scenario.config
        field = self.scenario.build_field(state, self.report, self.priors)
        record = select_action(field, self.scenario.candidates(), self.scenario.norms, self.symbolic, config.tau,
                               config.theta, realizes=self.scenario.realizes, day=day)

        self.beliefs = {m.id: m.belief for m in field.stakeholders}
        self.priors = {
            m.id: predict_state_dist(m.model, m.belief, field.local_action(m, record.chosen))
            for m in field.stakeholders
        }

        return record


@dataclass
class Episode:
    seed: int
    decisions: List[DecisionRecord] = field(default_factory=list)
    states: List[ValleyState] = field(default_factory=list)
    reports: List[Report] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return sum(d.totals[d.chosen] for d in self.decisions)

    @property
    def actions(self) -> List[str]:
        return [d.chosen for d in self.decisions]


def run_episode(scenario: ValleyScenario, seed: int, days: Optional[int] = None,
                agent: Optional[EthicalAgent] = None, env: Optional[ValleyEnvironment] = None) -> Episode:
    days = scenario.config.days if days is None else days
    agent = agent or EthicalAgent(scenario)
    env = env or ValleyEnvironment(scenario.config, seed)
    episode = Episode(seed)

    agent.reset()
    state, report = env.reset()
    episode.states.append(state)

    for day in range(days):
        agent.perceive(report)
        episode.reports.append(report)

        record = agent.decide(state, day)
        episode.decisions.append(record)

        state, report = env.step(record.chosen)
        episode.states.append(state)

    logger.debug(f'Episode seed={seed}: {days} days, objective {episode.objective:.4f}')

    return episode
