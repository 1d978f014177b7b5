from argparse import ArgumentParser, Namespace
from collections import defaultdict
from pathlib import Path

import numpy as np
import pandas as pd

from ..config import DEFAULT_STATE, STAKEHOLDERS
from ..errors import ConfigError
from ..ethica import Modality
from ..field import DecisionRecord, select_action
from ..valley import Allocation, ValleyScenario, load_report, load_state, observe
from . import BaseDaieCLICommand, add_common_arguments, load_scenario


def decide_command_factory(args: Namespace):
    return DecideCommand(args)


def decision_table(record: DecisionRecord) -> pd.DataFrame:
    rows = []

    for action, b in record.candidates.items():
        row = dict(action=action)
        row.update({sid: b.stakeholders[sid].weighted for sid in STAKEHOLDERS if sid in b.stakeholders})
        row.update(env=b.env, penalty=b.penalty, total=b.total, chosen='*' if action == record.chosen else '')
        rows.append(row)

    return pd.DataFrame(rows).sort_values(['total', 'action']).reset_index(drop=True)


def explain(record: DecisionRecord, scenario: ValleyScenario) -> str:
    lines = [f'fired norms: {", ".join(record.verdicts.fired) or "none"}']
    owners = defaultdict(list)

    for norm in scenario.norms:
        if norm.id in record.verdicts.fired and norm.modality is Modality.OBLIGATION:
            owners[norm.action].append(f'{norm.id} (weight {norm.weight:g})')

    for action in sorted(record.verdicts.forbidden):
        lines.append(f'forbidden: {action}')

    for conflict in record.verdicts.conflicts:
        lines.append(f'conflict on {conflict.action}: {conflict.winner.value} wins')

    for candidate, (action, prob) in sorted(record.exclusions.items()):
        lines.append(f'excluded {candidate}: realizes {action} (p={prob:.3f})')

    for candidate in record.candidates:
        neglected = [o for action in record.verdicts.obligated if action not in scenario.realizes(candidate)
                     for o in owners[action]]

        if neglected:
            lines.append(f'{candidate} neglects: {", ".join(neglected)}')

    if record.tie_note:
        lines.append(record.tie_note)

    return '\n'.join(lines)


class DecideCommand(BaseDaieCLICommand):
    """
    Evaluates one decision from a state file and prints every allowed candidate's breakdown. The report is the state
    file's `[report]` table when it has one, else a draw from the seeded sensors.
    """

    @staticmethod
    def register_subcommand(parser: ArgumentParser):
        decide_parser = parser.add_parser('decide', help='evaluate a single decision')
        add_common_arguments(decide_parser)
        decide_parser.add_argument('--state', type=str, default=str(DEFAULT_STATE))
        decide_parser.add_argument('--candidate', action='append', default=None, help='c1/c2/w shares, repeatable')
        decide_parser.add_argument('--explain', action='store_true')
        decide_parser.add_argument('--table', type=str, default=None, help='CSV of the breakdown table')
        decide_parser.set_defaults(func=decide_command_factory)

    def __init__(self, args: Namespace):
        self.args = args

    def run(self) -> int:
        scenario = load_scenario(self.args)
        config = scenario.config
        state = load_state(self.args.state, config)
        report = load_report(self.args.state, config, state.day)

        if report is None:
            report = observe(state, config, np.random.default_rng(config.seed))

        if self.args.candidate:
            try:
                candidates = [Allocation.parse(c, config.budget).label for c in self.args.candidate]
            except ValueError as e:
                raise ConfigError([f'invalid --candidate: {e}']) from None
        else:
            candidates = scenario.candidates()

        field = scenario.build_field(state, report)
        record = select_action(field, candidates, scenario.norms, scenario.symbolic_state(report), config.tau,
                               config.theta, realizes=scenario.realizes, day=state.day)

        table = decision_table(record)

        with pd.option_context('display.float_format', '{:.6f}'.format, 'display.width', 160):
            print(table.to_string(index=False))

        if self.args.table:
            Path(self.args.table).parent.mkdir(parents=True, exist_ok=True)
            table.to_csv(self.args.table, index=False, float_format='%.12g')

        print(f'chosen: {record.chosen}')

        if self.args.explain:
            print(explain(record, scenario))

        return 0
