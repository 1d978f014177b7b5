from argparse import ArgumentParser, Namespace
from typing import List

from ..config import DEFAULT_CONFIG, ScenarioConfig
from ..errors import ConfigError, DaieError
from ..ethica import parse_norms
from ..valley import action_vocabulary, atom_vocabulary, stakeholder_models
from . import BaseDaieCLICommand, add_common_arguments


def validate_command_factory(args: Namespace):
    return ValidateCommand(args)


def collect_diagnostics(path: str) -> List[str]:
    try:
        config = ScenarioConfig.from_config(path)
    except ConfigError as e:
        return e.diagnostics

    problems = config.validate()

    if config.norms_path.is_file():
        try:
            parse_norms(config.norms_path.read_text(encoding='utf-8'), actions=action_vocabulary(),
                        atoms=atom_vocabulary())
        except DaieError as e:
            problems.append(f'{config.norms_path.name}: {e}')

    if not problems:
        try:
            stakeholder_models(config)
        except DaieError as e:
            problems.append(str(e))

    return problems


class ValidateCommand(BaseDaieCLICommand):
    """Checks a scenario config and its norm file without running anything."""

    @staticmethod
    def register_subcommand(parser: ArgumentParser):
        validate_parser = parser.add_parser('validate', help='check a config and its norms')
        add_common_arguments(validate_parser)
        validate_parser.set_defaults(func=validate_command_factory)

    def __init__(self, args: Namespace):
        self.args = args

    def run(self) -> int:
        path = self.args.config or str(DEFAULT_CONFIG)
        problems = collect_diagnostics(path)

        if problems:
            raise ConfigError(problems, path)

        print(f'{path}: OK')

        return 0
