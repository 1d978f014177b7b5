import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from daie.adapt import EthicalParams
from daie.commands.daie_cli import main
from daie.config import DATA_DIR, FLIP_CONFIG, ScenarioConfig
from daie.valley import ValleyScenario


A1, A2 = '0.70/0.30/0.00', '0.40/0.40/0.20'
GOLDEN = Path(__file__).parent / 'data'
NUMERIC = ['C1', 'C2', 'W', 'env', 'penalty', 'total']


def write_config(tmp_path, norms_text=None, **changes) -> str:
    if norms_text is not None:
        norms = tmp_path / 'scenario.norms'
        norms.write_text(norms_text)
    else:
        norms = DATA_DIR / 'arid_valley.norms'

    ScenarioConfig(norms=str(norms), **changes).save_config(tmp_path)

    return str(tmp_path / ScenarioConfig.config_name)


def test_no_command(capsys):
    assert main([]) == 1
    assert 'usage' in capsys.readouterr().out


def test_validate_bundled(capsys):
    assert main(['validate']) == 0
    assert 'OK' in capsys.readouterr().out


def test_validate_unknown_action(tmp_path, capsys):
    path = write_config(tmp_path, 'norm bad_norm weight 1.0: when has_water(C1) then obligate fly(C1)\n')

    assert main(['validate', '--config', path]) == 2
    assert 'bad_norm' in capsys.readouterr().err


def test_validate_bad_transition(tmp_path, capsys):
    rows = [[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]] * 6
    rows[2] = [0.5, 0.4, 0.0, 0.0, 0.0, 0.0]
    path = write_config(tmp_path, models={'C2': {'transition': {'cov0.5': rows}}})

    assert main(['validate', '-c', path]) == 2

    err = capsys.readouterr().err
    assert "'d2'" in err and "'cov0.5'" in err


def test_parse_error_exit_code(tmp_path, capsys):
    path = write_config(tmp_path, 'norm broken weight 1.0: when and then permit give_water(C1)\n')

    assert main(['run', '-c', path, '--days', '1']) == 2
    assert 'line 1' in capsys.readouterr().err


def test_run_one_day(tmp_path):
    trace = tmp_path / 'trace.jsonl'

    assert main(['run', '--days', '1', '--seed', '11', '--trace', str(trace), '-q']) == 0

    events = [json.loads(line) for line in trace.read_text().splitlines()]
    assert [e['kind'] for e in events] == ['report', 'decision', 'transition']
    assert {e['seed'] for e in events} == {11}


def test_run_is_deterministic(tmp_path):
    path = write_config(tmp_path, candidates=(A1, A2, '0.35/0.35/0.30'))

    for name in ('a', 'b'):
        assert main(['run', '-c', path, '--days', '3', '--episodes', '2', '--trace', str(tmp_path / f'{name}.jsonl'),
                     '--summary', str(tmp_path / f'{name}.csv'), '-q']) == 0

    assert (tmp_path / 'a.jsonl').read_bytes() == (tmp_path / 'b.jsonl').read_bytes()
    assert (tmp_path / 'a.csv').read_bytes() == (tmp_path / 'b.csv').read_bytes()


def test_run_everything_forbidden(tmp_path, capsys):
    path = write_config(tmp_path, 'norm dry_c1 weight 1.0: when true then forbid give_water(C1)\n',
                        candidates=('0.5/0.5/0.0',))

    assert main(['run', '-c', path, '--days', '1']) == 3
    assert 'dry_c1' in capsys.readouterr().err


def test_decide_two_candidates(capsys):
    assert main(['decide', '--candidate', A1, '--candidate', A2]) == 0

    out = capsys.readouterr().out
    assert f'chosen: {A2}' in out
    assert out.index(A2) < out.index(A1)


def test_decide_single_candidate(capsys):
    assert main(['decide', '--candidate', A1]) == 0

    out = capsys.readouterr().out
    assert f'chosen: {A1}' in out
    assert '*' in out


def test_decide_explains_neglected_obligation(capsys):
    assert main(['decide', '-c', str(FLIP_CONFIG), '--explain']) == 0

    out = capsys.readouterr().out
    assert f'chosen: {A1}' in out
    assert 'prioritize_c1' in out
    assert f'{A2} neglects: prioritize_c1 (weight 100)' in out


def test_decide_bad_candidate():
    assert main(['decide', '--candidate', '0.9/0.9/0.9']) == 2


def test_train_with_zero_rate(tmp_path, capsys):
    path = write_config(tmp_path, candidates=(A1, A2), horizon=1, episodes=1, episode_days=1)
    out, history, trace = tmp_path / 'params.toml', tmp_path / 'history.csv', tmp_path / 'epochs.jsonl'

    assert main(['train', '-c', path, '--epochs', '1', '--eta', '0', '--jobs', '1', '--out', str(out), '--history',
                 str(history), '--trace', str(trace), '-q']) == 0

    initial = EthicalParams.from_scenario(ValleyScenario.load(path))
    trained = EthicalParams.load(out)

    assert trained.names() == initial.names()
    np.testing.assert_allclose(trained.to_vector(), initial.to_vector())
    assert len(history.read_text().splitlines()) == 3
    assert [json.loads(line)['kind'] for line in trace.read_text().splitlines()] == ['epoch', 'epoch']


def test_audit(tmp_path, capsys):
    path = write_config(tmp_path, candidates=(A1, A2))
    trace = tmp_path / 'trace.jsonl'

    assert main(['run', '-c', path, '--days', '2', '--trace', str(trace), '-q']) == 0
    assert main(['audit', str(trace)]) == 0

    events = [json.loads(line) for line in trace.read_text().splitlines()]
    decision = events[1]
    decision['candidates'][decision['chosen']]['penalty'] += 5.0
    trace.write_text('\n'.join(json.dumps(e) for e in events) + '\n')

    assert main(['audit', str(trace)]) == 2
    assert '!= parts' in capsys.readouterr().err


@pytest.mark.parametrize('args,golden', [
    (['--candidate', A1, '--candidate', A2], 'decide_default.csv'),
    (['-c', str(FLIP_CONFIG)], 'decide_flip.csv'),
])
def test_decide_matches_golden_table(tmp_path, capsys, args, golden):
    table = tmp_path / 'table.csv'

    assert main(['decide', *args, '--table', str(table)]) == 0

    actual = pd.read_csv(table).fillna('')
    expected = pd.read_csv(GOLDEN / golden, comment='#').fillna('')

    assert list(actual.columns) == list(expected.columns)
    assert list(actual['action']) == list(expected['action'])
    assert list(actual['chosen']) == list(expected['chosen'])
    np.testing.assert_allclose(actual[NUMERIC].to_numpy(float), expected[NUMERIC].to_numpy(float), rtol=1e-7,
                               atol=1e-12)


def test_run_seed_replays_byte_for_byte(tmp_path):
    for name in ('a', 'b'):
        assert main(['run', '--seed', '7', '--days', '30', '--trace', str(tmp_path / f'{name}.jsonl'),
                     '--summary', str(tmp_path / f'{name}.csv'), '-q']) == 0

    assert (tmp_path / 'a.jsonl').read_bytes() == (tmp_path / 'b.jsonl').read_bytes()
    assert (tmp_path / 'a.csv').read_bytes() == (tmp_path / 'b.csv').read_bytes()
    assert len((tmp_path / 'a.csv').read_text().splitlines()) == 31


def test_run_zero_days(capsys):
    assert main(['run', '--days', '0']) == 2
    assert '--days' in capsys.readouterr().err


def test_validate_zero_likelihood_column(tmp_path, capsys):
    eye = np.eye(6)
    eye[:, 5] = 0.0
    eye[5, 4] = 1.0
    path = write_config(tmp_path, models={'C1': {'likelihood': eye.tolist()}})

    assert main(['validate', '-c', path]) == 2
    assert "'r5'" in capsys.readouterr().err
