from argparse import ArgumentParser, Namespace
import sys

from ..evaluate import audit_trace
from . import BaseDaieCLICommand


def audit_command_factory(args: Namespace):
    return AuditCommand(args)


class AuditCommand(BaseDaieCLICommand):
    """Re-checks that every decision in a trace decomposes into its terms and picks the argmin."""

    @staticmethod
    def register_subcommand(parser: ArgumentParser):
        audit_parser = parser.add_parser('audit', help='audit a JSONL trace')
        audit_parser.add_argument('trace', type=str)
        audit_parser.add_argument('--quiet', '-q', action='store_true')
        audit_parser.set_defaults(func=audit_command_factory)

    def __init__(self, args: Namespace):
        self.args = args

    def run(self) -> int:
        auditor = audit_trace(self.args.trace)
        print(auditor)

        for line in auditor.violations[:20]:
            print(f'  - {line}', file=sys.stderr)

        return 0 if auditor.ok else 2
