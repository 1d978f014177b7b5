from dataclasses import dataclass, field
from typing import Any, Dict, List, Type
import json

from .agent import EthicalAgent
from .ethica import SymbolicState, Verdicts
from .field import DecisionRecord, GlobalBreakdown
from .hook import AggregateHooker, ObjectHooker
from .utils import jsonable
from .valley import Allocation, Report, ValleyEnvironment


__all__ = ['trace', 'EpisodeTraceHooker', 'TraceEvent', 'TraceRecorder', 'KIND_ORDER', 'breakdown_to_dict',
           'verdicts_to_dict', 'decision_to_dict']


KIND_ORDER = {'report': 0, 'decision': 1, 'transition': 2, 'epoch': 3}


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    seed: int
    day: int
    kind: str
    payload: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return dict(seq=self.seq, seed=self.seed, day=self.day, kind=self.kind, **self.payload)

    def to_json(self) -> str:
        return json.dumps(jsonable(self.to_dict()), ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TraceEvent':
        data = dict(data)
        return cls(data.pop('seq'), data.pop('seed'), data.pop('day'), data.pop('kind'), data)


def breakdown_to_dict(b: GlobalBreakdown) -> Dict[str, Any]:
    stakeholders = {
        sid: dict(efe=t.efe, risk=t.risk, ambiguity=t.ambiguity, confidence=t.confidence, weighted=t.weighted,
                  local_action=t.local_action)
        for sid, t in b.stakeholders.items()
    }

    return dict(total=b.total, env=b.env, penalty=b.penalty, stakeholders=stakeholders)


def verdicts_to_dict(v: Verdicts) -> Dict[str, Any]:
    return dict(
        fired=list(v.fired),
        obligated=dict(v.obligated),
        forbidden={a: op.as_dict() for a, op in v.forbidden.items()},
        conflicts=[dict(action=c.action, obligation_weight=c.obligation_weight,
                        prohibition_weight=c.prohibition_weight, winner=c.winner.value) for c in v.conflicts]
    )


def decision_to_dict(record: DecisionRecord) -> Dict[str, Any]:
    return dict(
        chosen=record.chosen,
        tie=record.tie_note,
        verdicts=verdicts_to_dict(record.verdicts),
        exclusions={c: dict(action=a, probability=p) for c, (a, p) in record.exclusions.items()},
        penalties={c: p for c, p in record.penalties.items() if p},
        candidates={a: breakdown_to_dict(b) for a, b in record.candidates.items()}
    )


def _report_to_dict(report: Report, symbolic: SymbolicState) -> Dict[str, Any]:
    return dict(report=report.as_dict(), atoms={a: op.as_dict() for a, op in symbolic.atoms.items()})


class TraceRecorder:
    def __init__(self, seed: int):
        self.seed = seed
        self.events: List[TraceEvent] = []

    def add(self, kind: str, day: int, payload: Dict[str, Any]) -> TraceEvent:
        event = TraceEvent(len(self.events), self.seed, day, kind, payload)
        self.events.append(event)

        return event


class AgentHooker(ObjectHooker[EthicalAgent]):
    def __init__(self, agent: EthicalAgent, recorder: TraceRecorder):
        super().__init__(agent)
        self.recorder = recorder

    def _hook_impl(self):
        self.patch('perceive', self._perceive)
        self.patch('decide', self._decide)

    def _perceive(hk_self, self, report: Report):
        symbolic = hk_self.call_original('perceive', report)
        hk_self.recorder.add('report', report.day, _report_to_dict(report, symbolic))

        return symbolic

    def _decide(hk_self, self, state, day: int):
        record = hk_self.call_original('decide', state, day)
        hk_self.recorder.add('decision', day, decision_to_dict(record))

        return record


class EnvironmentHooker(ObjectHooker[ValleyEnvironment]):
    def __init__(self, env: ValleyEnvironment, recorder: TraceRecorder):
        super().__init__(env)
        self.recorder = recorder

    def _hook_impl(self):
        self.patch('step', self._step)

    def _step(hk_self, self, action: str):
        before = self.state
        after, report = hk_self.call_original('step', action)
        units = Allocation.parse(action, self.config.budget).units()
        hk_self.recorder.add('transition', before.day, dict(action=action, units=units, before=before.as_dict(),
                                                            after=after.as_dict()))

        return after, report


class EpisodeTraceHooker(AggregateHooker):
    """Records report, decision and transition events of one episode while hooked."""

    def __init__(self, agent: EthicalAgent, env: ValleyEnvironment):
        self.recorder = TraceRecorder(env.seed)
        super().__init__([AgentHooker(agent, self.recorder), EnvironmentHooker(env, self.recorder)])

    @property
    def events(self) -> List[TraceEvent]:
        return self.recorder.events


trace: Type[EpisodeTraceHooker] = EpisodeTraceHooker
