from argparse import ArgumentParser, Namespace
from concurrent.futures import ProcessPoolExecutor

from .. import logging
from ..errors import ConfigError
from ..experiment import EpisodeExperiment, record_episode
from . import BaseDaieCLICommand, add_common_arguments, load_scenario


logger = logging.get_logger(__name__)


def run_command_factory(args: Namespace):
    return RunCommand(args)


class RunCommand(BaseDaieCLICommand):
    """Runs the daily perceive, filter and select cycle for one or more seeded episodes."""

    @staticmethod
    def register_subcommand(parser: ArgumentParser):
        run_parser = parser.add_parser('run', help='simulate episodes and write a trace and a summary')
        add_common_arguments(run_parser)
        run_parser.add_argument('--days', '-d', type=int, default=None)
        run_parser.add_argument('--trace', '-t', type=str, default=None, help='JSONL trace output')
        run_parser.add_argument('--summary', type=str, default=None, help='CSV summary output')
        run_parser.add_argument('--episodes', '-n', type=int, default=1)
        run_parser.add_argument('--jobs', '-j', type=int, default=1)
        run_parser.set_defaults(func=run_command_factory)

    def __init__(self, args: Namespace):
        self.args = args

    def run(self) -> int:
        scenario = load_scenario(self.args)
        days = scenario.config.days if self.args.days is None else self.args.days

        if days < 1:
            raise ConfigError([f'--days must be >= 1, got {days}'])

        seeds = [scenario.config.seed + i for i in range(max(1, self.args.episodes))]

        if self.args.jobs > 1 and len(seeds) > 1:
            with ProcessPoolExecutor(max_workers=self.args.jobs) as pool:
                episodes = list(pool.map(record_episode, [scenario] * len(seeds), seeds, [days] * len(seeds)))
        else:
            episodes = [record_episode(scenario, seed, days) for seed in logging.tqdm(seeds, desc='episodes')]

        experiment = EpisodeExperiment.merge(episodes)

        if self.args.trace or self.args.summary:
            experiment.save(self.args.trace, self.args.summary)

        summary = experiment.summary

        for seed, df in summary.groupby('seed'):
            print(f'seed {seed}: {len(df)} days, objective {df["total"].sum():.6g}, '
                  f'last action {df["chosen"].iloc[-1]}')

        return 0
