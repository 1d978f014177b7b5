from argparse import ArgumentParser
from typing import List, Optional
import sys

from .. import logging
from ..errors import (ConfigError, DuplicateNormId, NoPermittedAction, NonFiniteObjective, ParseError,
                      UnknownActionLabel, UnknownAtom)
from .audit import AuditCommand
from .decide import DecideCommand
from .run import RunCommand
from .train import TrainCommand
from .validate import ValidateCommand


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_PERMITTED_ACTION = 3
EXIT_NON_FINITE = 4


def main(argv: Optional[List[str]] = None) -> int:
    parser = ArgumentParser('daie CLI tool', usage='daie <command> [<args>]')
    commands_parser = parser.add_subparsers(help='daie command helpers')

    # Register commands
    RunCommand.register_subcommand(commands_parser)
    DecideCommand.register_subcommand(commands_parser)
    TrainCommand.register_subcommand(commands_parser)
    ValidateCommand.register_subcommand(commands_parser)
    AuditCommand.register_subcommand(commands_parser)

    args = parser.parse_args(argv)

    if not hasattr(args, 'func'):
        parser.print_help()
        return 1

    if getattr(args, 'quiet', False):
        logging.set_verbosity_error()
        logging.disable_progress_bar()

    try:
        service = args.func(args)
        return service.run()
    except ConfigError as e:
        print('error: invalid configuration', file=sys.stderr)

        for line in e.diagnostics[:20]:
            print(f'  - {line}', file=sys.stderr)

        return EXIT_CONFIG
    except (ParseError, DuplicateNormId, UnknownActionLabel, UnknownAtom) as e:
        print(f'error: {e}', file=sys.stderr)
        return EXIT_CONFIG
    except NoPermittedAction as e:
        print(f'error: no permitted action on day {e.day}: {e}', file=sys.stderr)

        if e.verdicts is not None:
            print(f'  fired norms: {", ".join(e.verdicts.fired) or "none"}', file=sys.stderr)
            print(f'  forbidden: {", ".join(sorted(e.verdicts.forbidden)) or "none"}', file=sys.stderr)

        return EXIT_NO_PERMITTED_ACTION
    except NonFiniteObjective as e:
        print(f'error: {e} (parameter {e.parameter})', file=sys.stderr)
        return EXIT_NON_FINITE


if __name__ == '__main__':
    sys.exit(main())
