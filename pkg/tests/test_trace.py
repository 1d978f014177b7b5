import copy
import json

import pytest

from daie.agent import EthicalAgent, run_episode
from daie.evaluate import TraceAuditor, audit_trace, serialization_tolerance
from daie.experiment import SUMMARY_COLUMNS, EpisodeExperiment, record_episode, write_trace
from daie.hook import AggregateHooker, ObjectHooker
from daie.trace import KIND_ORDER, TraceEvent, trace
from daie.utils import sig_round
from daie.valley import ValleyEnvironment, ValleyScenario


class Counter:
    def __init__(self):
        self.value = 0

    def bump(self, by=1):
        self.value += by
        return self.value


class DoublingHooker(ObjectHooker[Counter]):
    def _hook_impl(self):
        self.patch('bump', self._bump)

    def _bump(hk_self, self, by=1):
        return hk_self.call_original('bump', 2 * by)


@pytest.fixture(scope='module')
def scenario() -> ValleyScenario:
    candidates = ('0.70/0.30/0.00', '0.40/0.40/0.20', '0.35/0.35/0.30')
    config = ValleyScenario.load().config.replace(candidates=candidates, horizon=2)

    return ValleyScenario.load(config)


@pytest.fixture(scope='module')
def experiment(scenario) -> EpisodeExperiment:
    return record_episode(scenario, seed=3, days=2)


def test_hooker_patches_and_restores():
    counter = Counter()

    with DoublingHooker(counter):
        assert counter.bump(3) == 6
        assert 'bump' in vars(counter)

    assert 'bump' not in vars(counter)
    assert counter.bump(3) == 9


def test_hooker_state_errors():
    hooker = DoublingHooker(Counter())

    with pytest.raises(RuntimeError):
        hooker.unhook()

    hooker.hook()

    with pytest.raises(RuntimeError):
        hooker.hook()

    hooker.unhook()


def test_aggregate_unhooks_all():
    a, b = Counter(), Counter()

    with AggregateHooker([DoublingHooker(a), DoublingHooker(b)]):
        a.bump()
        b.bump()

    assert (a.value, b.value) == (2, 2)
    assert 'bump' not in vars(a) and 'bump' not in vars(b)


def test_trace_leaves_agent_untouched(scenario):
    agent, env = EthicalAgent(scenario), ValleyEnvironment(scenario.config, 3)

    with trace(agent, env) as tc:
        episode = run_episode(scenario, 3, 1, agent=agent, env=env)

    assert 'decide' not in vars(agent) and 'step' not in vars(env)
    assert [e.kind for e in tc.events] == ['report', 'decision', 'transition']
    assert tc.events[1].payload['chosen'] == episode.actions[0]


def test_event_order(experiment):
    events = experiment.events

    assert [e.kind for e in events] == ['report', 'decision', 'transition'] * 2
    assert [e.seq for e in events] == list(range(6))
    assert {e.seed for e in events} == {3}
    assert [(e.day, KIND_ORDER[e.kind]) for e in events] == sorted((e.day, KIND_ORDER[e.kind]) for e in events)


def test_transition_payload(experiment, scenario):
    transition = experiment.events[2].payload

    assert sum(transition['units'].values()) == scenario.config.budget
    assert transition['before']['day'] == 0 and transition['after']['day'] == 1


def test_trace_is_deterministic(scenario, experiment, tmp_path):
    again = record_episode(scenario, seed=3, days=2)
    write_trace(experiment.events, tmp_path / 'a.jsonl')
    write_trace(again.events, tmp_path / 'b.jsonl')

    assert (tmp_path / 'a.jsonl').read_bytes() == (tmp_path / 'b.jsonl').read_bytes()


def test_floats_are_rounded(experiment):
    decision = json.loads(experiment.events[1].to_json())

    for b in decision['candidates'].values():
        assert b['total'] == sig_round(b['total'], 9)


def test_event_roundtrip(experiment):
    event = experiment.events[0]

    assert TraceEvent.from_dict(event.to_dict()) == event


def test_save_and_load(experiment, tmp_path):
    EpisodeExperiment(experiment.events, tmp_path / 'run').save()

    assert EpisodeExperiment.has_experiment(tmp_path / 'run')

    loaded = EpisodeExperiment.load(tmp_path / 'run')

    assert len(loaded.events) == 6
    assert (tmp_path / 'run' / 'summary.csv').read_text().splitlines()[0] == ','.join(SUMMARY_COLUMNS)


def test_summary(experiment):
    summary = experiment.summary

    assert list(summary.columns) == SUMMARY_COLUMNS
    assert len(summary) == 2
    assert summary['day'].tolist() == [0, 1]

    row = summary.iloc[0]
    parts = row[['weighted_C1', 'weighted_C2', 'weighted_W', 'env', 'penalty']].sum()
    assert row['total'] == pytest.approx(parts, abs=1e-6)


def test_merge_orders_by_seed(scenario, experiment):
    earlier = record_episode(scenario, seed=1, days=1)
    merged = EpisodeExperiment.merge([experiment, earlier])

    assert merged.seeds == [1, 3]
    assert [e.seed for e in merged.events] == [1] * 3 + [3] * 6


def test_serialization_tolerance():
    assert serialization_tolerance() == pytest.approx(1e-9)
    assert serialization_tolerance(2.0, -2.0) == pytest.approx(1e-9 + 0.5e-8 * 4)


def test_audit_passes_recorded_trace(experiment, tmp_path):
    write_trace(experiment.events, tmp_path / 'trace.jsonl')
    auditor = audit_trace(tmp_path / 'trace.jsonl')

    assert auditor.ok, auditor.violations
    assert len(auditor) == 6
    assert auditor.max_error < 1e-6
    assert 'violations' in str(auditor)


def _dicts(experiment):
    return [json.loads(e.to_json()) for e in experiment.events]


def test_audit_catches_broken_total(experiment):
    events = _dicts(experiment)
    decision = events[1]
    action = next(iter(decision['candidates']))
    decision['candidates'][action]['total'] += 1.0

    assert not audit_trace(events).ok


def test_audit_catches_wrong_choice(experiment):
    events = _dicts(experiment)
    decision = events[1]
    worst = max(decision['candidates'], key=lambda a: decision['candidates'][a]['total'])

    if worst == decision['chosen']:
        pytest.skip('all candidates tied')

    decision['chosen'] = worst
    auditor = audit_trace(events)

    assert any('does not minimize' in v for v in auditor.violations)


def test_audit_catches_reordering(experiment):
    events = _dicts(experiment)
    events[0], events[2] = copy.deepcopy(events[2]), copy.deepcopy(events[0])

    assert any('out of order' in v for v in audit_trace(events).violations)


def test_audit_catches_excluded_choice(experiment):
    events = _dicts(experiment)
    events[1]['exclusions'] = {events[1]['chosen']: dict(action='starve(W)', probability=1.0)}

    assert any('was excluded' in v for v in TraceAuditor().log_decision(events[1]).violations)
