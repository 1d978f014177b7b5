from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union
import json
import os

import pandas as pd

from .agent import EthicalAgent, run_episode
from .config import STAKEHOLDERS
from .trace import TraceEvent, trace
from .utils import jsonable
from .valley import ValleyEnvironment, ValleyScenario


__all__ = ['EpisodeExperiment', 'summary_frame', 'write_trace', 'read_trace', 'SUMMARY_COLUMNS', 'record_episode']


SUMMARY_COLUMNS = (['seed', 'day', 'chosen', 'total', 'env', 'penalty']
                   + [f'weighted_{sid}' for sid in STAKEHOLDERS] + ['fired'])


def summary_frame(events: Sequence[TraceEvent]) -> pd.DataFrame:
    """One row per decision event: the chosen action and the terms of its breakdown."""
    rows = []

    for event in events:
        if event.kind != 'decision':
            continue

        chosen = event.payload['chosen']
        b = jsonable(event.payload['candidates'][chosen])
        row = dict(seed=event.seed, day=event.day, chosen=chosen, total=b['total'], env=b['env'],
                   penalty=b['penalty'])

        for sid in STAKEHOLDERS:
            row[f'weighted_{sid}'] = b['stakeholders'][sid]['weighted'] if sid in b['stakeholders'] else 0.0

        row['fired'] = ';'.join(event.payload['verdicts']['fired'])
        rows.append(row)

    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def write_trace(events: Sequence[TraceEvent], path: Union[str, os.PathLike]):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for event in events:
            f.write(event.to_json() + '\n')


def read_trace(path: Union[str, os.PathLike]) -> List[Dict[str, Any]]:
    with open(path, encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]


@dataclass
class EpisodeExperiment:
    """The events of one or more seeded episodes, savable as a JSONL trace plus a CSV summary."""
    events: List[TraceEvent] = field(default_factory=list)
    path: Optional[Path] = None

    @property
    def seeds(self) -> List[int]:
        return sorted({e.seed for e in self.events})

    @property
    def summary(self) -> pd.DataFrame:
        return summary_frame(self.events)

    @classmethod
    def merge(cls, experiments: Sequence['EpisodeExperiment']) -> 'EpisodeExperiment':
        """Concatenates episodes in seed order, keeping each episode's own event order."""
        ordered = sorted(experiments, key=lambda x: min(x.seeds, default=0))
        return cls([e for exp in ordered for e in exp.events])

    def save(self, trace_path: Union[str, os.PathLike, None] = None,
             summary_path: Union[str, os.PathLike, None] = None):
        if trace_path is None and summary_path is None:
            self.path.mkdir(parents=True, exist_ok=True)
            trace_path, summary_path = self.path / 'trace.jsonl', self.path / 'summary.csv'

        if trace_path is not None:
            Path(trace_path).parent.mkdir(parents=True, exist_ok=True)
            write_trace(self.events, trace_path)

        if summary_path is not None:
            Path(summary_path).parent.mkdir(parents=True, exist_ok=True)
            self.summary.to_csv(summary_path, index=False, float_format='%.9g')

    @staticmethod
    def has_experiment(path: Union[str, Path]) -> bool:
        return (Path(path) / 'trace.jsonl').exists()

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> 'EpisodeExperiment':
        path = Path(path)
        trace_path = path / 'trace.jsonl' if path.is_dir() else path

        return cls([TraceEvent.from_dict(d) for d in read_trace(trace_path)], path if path.is_dir() else None)


def record_episode(scenario: ValleyScenario, seed: int, days: Optional[int] = None) -> EpisodeExperiment:
    """Runs one seeded episode with tracing hooked onto a fresh agent and environment."""
    agent, env = EthicalAgent(scenario), ValleyEnvironment(scenario.config, seed)

    with trace(agent, env) as tc:
        run_episode(scenario, seed, days, agent=agent, env=env)

    return EpisodeExperiment(list(tc.events))
