from argparse import ArgumentParser, Namespace
from pathlib import Path

from .. import logging
from ..adapt import EthicalParams, save_history, train
from ..errors import ConfigError
from ..experiment import write_trace
from ..trace import TraceRecorder
from ..valley import ValleyScenario
from . import BaseDaieCLICommand, add_common_arguments, load_scenario


logger = logging.get_logger(__name__)


def train_command_factory(args: Namespace):
    return TrainCommand(args)


class TrainCommand(BaseDaieCLICommand):
    """Adapts preferences, obligation weights and the env weight by finite-difference gradient descent."""

    @staticmethod
    def register_subcommand(parser: ArgumentParser):
        train_parser = parser.add_parser('train', help='adapt the ethical parameters')
        add_common_arguments(train_parser)
        train_parser.add_argument('--epochs', '-e', type=int, default=None)
        train_parser.add_argument('--eta', type=float, default=None)
        train_parser.add_argument('--delta', type=float, default=None)
        train_parser.add_argument('--episodes', '-n', type=int, default=None)
        train_parser.add_argument('--jobs', '-j', type=int, default=None, help='worker processes, 0 for one per CPU')
        train_parser.add_argument('--init', type=str, default=None, help='starting parameters (TOML)')
        train_parser.add_argument('--out', '-o', type=str, default='params.toml')
        train_parser.add_argument('--history', type=str, default='history.csv')
        train_parser.add_argument('--trace', '-t', type=str, default=None, help='JSONL of training epochs')
        train_parser.set_defaults(func=train_command_factory)

    def __init__(self, args: Namespace):
        self.args = args

    def run(self) -> int:
        scenario = load_scenario(self.args)
        config = scenario.config

        overrides = dict(episodes=self.args.episodes, epochs=self.args.epochs, eta=self.args.eta, delta=self.args.delta,
                         jobs=self.args.jobs)
        overrides = {k: v for k, v in overrides.items() if v is not None}

        if overrides:
            config = config.replace(**overrides)
            problems = config.validate()

            if problems:
                raise ConfigError(problems)

            scenario = ValleyScenario(config, scenario.norms)

        params0 = EthicalParams.load(self.args.init) if self.args.init else EthicalParams.from_scenario(scenario)
        epochs = config.epochs
        history = train(scenario, params0, config.eta, epochs, config.seed, config.delta, config.jobs)

        history[-1].params.save(self.args.out)
        save_history(history, self.args.history)

        if self.args.trace:
            recorder = TraceRecorder(config.seed)

            for h in history:
                recorder.add('epoch', h.epoch, dict(epoch=h.epoch, objective=h.objective, params=h.params.as_dict()))

            Path(self.args.trace).parent.mkdir(parents=True, exist_ok=True)
            write_trace(recorder.events, self.args.trace)

        print(f'objective {history[0].objective:.6g} -> {history[-1].objective:.6g} over {epochs} epochs')
        print(f'parameters written to {self.args.out}, history to {self.args.history}')

        return 0
