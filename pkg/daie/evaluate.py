from collections import defaultdict
from typing import Any, Dict, Iterable, List, Tuple, Union
import os

import numpy as np

from .experiment import read_trace
from .trace import KIND_ORDER


__all__ = ['serialization_tolerance', 'TraceAuditor', 'audit_trace']


SIG_DIGITS = 9


def serialization_tolerance(*values: float) -> float:
    """Worst-case error of a sum of terms each rounded to `SIG_DIGITS` significant digits, plus 1e-9 slack."""
    return 1e-9 + 0.5 * 10 ** (1 - SIG_DIGITS) * sum(abs(v) for v in values)


class TraceAuditor:
    """Re-checks decision events: totals decompose into their terms and the chosen action is the argmin."""

    def __init__(self, name: str = 'TraceAuditor'):
        self.name = name
        self.errors: List[float] = []
        self.violations: List[str] = []
        self._last: Dict[int, Tuple[int, int]] = {}
        self.num_events = 0

    def log_event(self, event: Dict[str, Any]):
        self.num_events += 1
        seed, day, kind = event['seed'], event['day'], event['kind']
        key = (day, KIND_ORDER.get(kind, len(KIND_ORDER)))

        if seed in self._last and key <= self._last[seed]:
            self.violations.append(f'seed {seed} seq {event["seq"]}: {kind} on day {day} out of order')

        self._last[seed] = key

        if kind == 'decision':
            self.log_decision(event)

        return self

    def log_decision(self, event: Dict[str, Any]):
        where = f'seed {event["seed"]} day {event["day"]}'
        totals = {}

        for action, b in event['candidates'].items():
            weighted = [t['weighted'] for t in b['stakeholders'].values()]
            parts = sum(weighted) + b['env'] + b['penalty']
            error = abs(b['total'] - parts)
            self.errors.append(error)

            if error > serialization_tolerance(b['total'], *weighted, b['env'], b['penalty']):
                self.violations.append(f'{where}: {action} total {b["total"]} != parts {parts}')

            for sid, t in b['stakeholders'].items():
                if abs(t['weighted'] - t['confidence'] * t['efe']) > serialization_tolerance(t['weighted'], t['efe']):
                    self.violations.append(f'{where}: {action} weighted term of {sid} != confidence * efe')

            totals[action] = b['total']

        chosen = event['chosen']

        if chosen not in totals:
            self.violations.append(f'{where}: chosen {chosen} is not an allowed candidate')
        elif totals[chosen] > min(totals.values()) + serialization_tolerance(totals[chosen]):
            self.violations.append(f'{where}: chosen {chosen} does not minimize the total')

        if chosen in event.get('exclusions', {}):
            self.violations.append(f'{where}: chosen {chosen} was excluded')

        return self

    @property
    def max_error(self) -> float:
        return float(np.max(self.errors)) if self.errors else 0.0

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return self.num_events

    def __str__(self):
        return f'{self.name}<{len(self.errors)} breakdowns, max error {self.max_error:.3g}, ' \
               f'{len(self.violations)} violations, {len(self)} events>'


def audit_trace(source: Union[str, os.PathLike, Iterable[Dict[str, Any]]]) -> TraceAuditor:
    events = read_trace(source) if isinstance(source, (str, os.PathLike)) else source
    auditor = TraceAuditor()

    for event in events:
        auditor.log_event(event)

    return auditor
