from abc import ABC, abstractmethod
from argparse import ArgumentParser, Namespace

from ..config import ScenarioConfig, load_config
from ..valley import ValleyScenario


class BaseDaieCLICommand(ABC):
    @staticmethod
    @abstractmethod
    def register_subcommand(parser: ArgumentParser):
        raise NotImplementedError()

    @abstractmethod
    def run(self) -> int:
        raise NotImplementedError()


def add_common_arguments(parser: ArgumentParser):
    parser.add_argument('--config', '-c', type=str, default=None, help='scenario TOML (default: bundled Arid Valley)')
    parser.add_argument('--seed', '-s', type=int, default=None, help='overrides the config seed')
    parser.add_argument('--quiet', '-q', action='store_true', help='errors only, no progress bars')


def load_scenario(args: Namespace) -> ValleyScenario:
    config: ScenarioConfig = load_config(args.config)

    if args.seed is not None:
        config = config.replace(seed=args.seed)

    return ValleyScenario.load(config)
