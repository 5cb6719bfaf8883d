import json

import pandas as pd
import pytest

from lending.cli import execute, exit_code_for
from lending.services.core import (
    ConfigParseError,
    ConfigurationError,
    ContractViolation,
    DegenerateFitError,
    ResultsIOError,
)
from lending.services.results import SERIES_COLUMNS

SMALL = """
[scenario]
name = cli
pool = type5
algorithms = learner, perfect
T = {T}
N_t = 5
replications = 2
pool_size = 500
n_features = 4
regret_sample = 0
seed = 7

[learner]
num_candidates = 2
keep_best = 1
fresh_random = 1
multi_periods = 3
"""


def write_config(path, text):
    path.write_text(text, encoding='utf-8')
    return str(path)


@pytest.mark.parametrize('exc,code', [
    (ConfigParseError('x'), 2),
    (ConfigurationError('x'), 3),
    (ResultsIOError('x'), 4),
    (ContractViolation('x'), 5),
    (DegenerateFitError('x'), 6),
    (ValueError('x'), 1),
])
def test_exit_codes(exc, code):
    assert exit_code_for(exc) == code


def test_run(tmp_path):
    config = write_config(tmp_path / 'exp.ini', SMALL.format(T=12))
    assert execute(['run', '--config', config, '--out', str(tmp_path / 'out')]) == 0
    series = pd.read_csv(tmp_path / 'out' / 'cli' / 'learner.csv')
    assert len(series) == 2 * 12
    summary = pd.read_csv(tmp_path / 'out' / 'summary.csv')
    assert set(summary['algorithm']) == {'learner', 'perfect'}
    metadata = json.loads((tmp_path / 'out' / 'metadata.json').read_text(encoding='utf-8'))
    assert metadata['seed'] == 7
    assert metadata['config']['profile'] == 'quick'


def test_zero_periods_writes_headers_only(tmp_path):
    config = write_config(tmp_path / 'exp.ini', SMALL.format(T=0))
    assert execute(['run', '--config', config, '--out', str(tmp_path / 'out')]) == 0
    text = (tmp_path / 'out' / 'cli' / 'perfect.csv').read_text(encoding='utf-8')
    assert text.strip() == ','.join(SERIES_COLUMNS)


def test_same_seed_byte_identical(tmp_path):
    config = write_config(tmp_path / 'exp.ini', SMALL.format(T=10))
    for out in ('a', 'b'):
        assert execute(['run', '--config', config, '--out', str(tmp_path / out), '--seed', '3']) == 0
    for name in ('summary.csv', 'cli/learner.csv', 'cli/learner_z.csv', 'cli/perfect.csv'):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()
    metadata = json.loads((tmp_path / 'a' / 'metadata.json').read_text(encoding='utf-8'))
    assert metadata['seed'] == 3


def test_sweep(tmp_path):
    text = SMALL.format(T=5) + '\n[sweep]\nparam = missing_p\nvalues = 0, 0.1, 0.25, 0.5\n'
    config = write_config(tmp_path / 'exp.ini', text)
    assert execute(['sweep', '--config', config, '--out', str(tmp_path / 'out')]) == 0
    dirs = sorted(p.name for p in (tmp_path / 'out').iterdir() if p.is_dir())
    assert dirs == ['cli_missing_p=0', 'cli_missing_p=0.1', 'cli_missing_p=0.25', 'cli_missing_p=0.5']
    summary = pd.read_csv(tmp_path / 'out' / 'summary.csv')
    assert sorted(summary['sweep_value'].unique()) == [0.0, 0.1, 0.25, 0.5]


def test_sweep_without_section(tmp_path):
    config = write_config(tmp_path / 'exp.ini', SMALL.format(T=5))
    assert execute(['sweep', '--config', config, '--out', str(tmp_path / 'out')]) == 3


def test_unknown_key(tmp_path, capsys):
    config = write_config(tmp_path / 'bad.ini', '[scenario]\nhorizon = 5\n')
    assert execute(['run', '--config', config, '--out', str(tmp_path / 'out')]) == 3
    assert 'scenario.horizon' in capsys.readouterr().err


def test_syntax_error(tmp_path):
    config = write_config(tmp_path / 'bad.ini', '[scenario\nT = 5\n')
    assert execute(['run', '--config', config, '--out', str(tmp_path / 'out')]) == 2


def test_pool_command(tmp_path):
    config = write_config(tmp_path / 'pool.ini', '[scenario]\nn_features = 3\n\n[pool]\nsource = type1\nsize = 40\n'
                                                 'output = type1.csv\n')
    assert execute(['pool', '--config', config, '--out', str(tmp_path / 'out')]) == 0
    frame = pd.read_csv(tmp_path / 'out' / 'type1.csv')
    assert list(frame.columns) == ['s1', 's2', 's3', 'group_size', 'prob']
    assert len(frame) == 40
    assert (tmp_path / 'out' / 'type1.csv.meta.json').exists()


def test_pool_augment_from_csv(tmp_path):
    source = tmp_path / 'loans.csv'
    source.write_text('amount,term,label\n1,2,1\n3,1,0\n2,2,1\n4,0,0\n', encoding='utf-8')
    config = write_config(tmp_path / 'pool.ini', f'[pool]\nsource = csv:{source}\nsize = 25\naugment = true\n')
    assert execute(['pool', '--config', config, '--out', str(tmp_path / 'out')]) == 0
    frame = pd.read_csv(tmp_path / 'out' / 'pool.csv')
    assert len(frame) == 25
    assert frame['prob'].between(0.0, 1.0).all()


def test_pool_label_resampling_needs_labels(tmp_path):
    config = write_config(tmp_path / 'pool.ini', '[scenario]\nn_features = 2\n\n[pool]\nsource = type1\n'
                                                 'size = 10\ndefault_fraction = 0.25\n')
    assert execute(['pool', '--config', config, '--out', str(tmp_path / 'out')]) == 3


def test_report(tmp_path):
    config = write_config(tmp_path / 'exp.ini', SMALL.format(T=8))
    assert execute(['run', '--config', config, '--out', str(tmp_path / 'runs')]) == 0
    report = write_config(tmp_path / 'report.ini', f'[report]\ninputs = {tmp_path / "runs"}\n')
    assert execute(['report', '--config', report, '--out', str(tmp_path / 'report')]) == 0
    assert (tmp_path / 'report' / 'report_rise_time.csv').exists()


def test_report_without_results(tmp_path):
    report = write_config(tmp_path / 'report.ini', f'[report]\ninputs = {tmp_path / "nothing"}\n')
    assert execute(['report', '--config', report, '--out', str(tmp_path / 'report')]) == 4
