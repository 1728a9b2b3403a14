import json
import logging

import numpy as np
import pytest

from lingauss import cli, io
from lingauss.__about__ import __version__
from lingauss.cli import RunReport, main


@pytest.fixture(autouse=True)
def handler():
    yield

    # captured streams close with each test
    if cli._handler is not None:
        logging.getLogger('lingauss').removeHandler(cli._handler)
        cli._handler = None


@pytest.fixture
def problem_file(tmp_path):
    def make(document, name='problem.json'):
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding='utf-8')
        return str(path)

    return make


@pytest.fixture
def quadrant(problem_file):
    return problem_file({'dim': 2, 'A': [[1, 0], [0, 1]], 'b': [0, 0]})


@pytest.fixture
def correlated(problem_file):
    return problem_file({
        'dim': 2,
        'A': [[1, 0], [0, 1]],
        'b': [0, 0],
        'mean': [1.0, -1.0],
        'cov': [[2.0, 0.5], [0.5, 1.0]],
    }, 'correlated.json')


def test_integrate(quadrant, tmp_path):
    output = tmp_path / 'z.json'

    status = main(['integrate', '--problem', quadrant, '--samples-per-nesting', '4096',
                   '--repeats', '4', '--output', str(output)])

    assert status == 0

    document = io.read_json(output)

    assert document['z'] == pytest.approx(0.25, rel=0.05)
    assert document['log2_z'] == pytest.approx(-2.0, abs=0.1)
    assert document['z_underflow'] is False
    assert document['stddev_log2_z'] > 0
    assert len(document['runs']) == 4

    assert document['subcommand'] == 'integrate'
    assert document['version'] == __version__
    assert document['problem_fingerprint'] == io.file_fingerprint(quadrant)
    assert document['config']['samples_per_nesting'] == 4096
    assert document['config']['seed'] == 0
    assert 'wall_seconds' in document

    assert document['nestings']['gammas'] == document['gammas']


def test_integrate_stdout(quadrant, capsys):
    assert main(['integrate', '--problem', quadrant, '--samples-per-nesting', '64',
                 '--quiet']) == 0

    (out, err) = capsys.readouterr()

    assert json.loads(out)['subcommand'] == 'integrate'
    assert err == ''


def test_usage_error(capsys):
    assert main(['integrate']) == 1
    assert 'usage' in capsys.readouterr().err

    assert main(['integrate', '--problem', 'x.json', '--rho', '1.5']) == 1
    assert main(['unknown']) == 1


def test_version(capsys):
    assert main(['--version']) == 0
    assert __version__ in capsys.readouterr().out


def test_malformed_json(tmp_path, capsys):
    path = tmp_path / 'bad.json'
    path.write_text('{"dim": 2, "A": [[1, 0] [0, 1]]}')

    assert main(['integrate', '--problem', str(path)]) == 1
    assert 'byte' in capsys.readouterr().err


def test_invalid_field(problem_file, capsys):
    path = problem_file({'dim': 2, 'A': [[1, 0], [0]], 'b': [0, 0]})

    assert main(['integrate', '--problem', path]) == 1
    assert 'A[1]' in capsys.readouterr().err


def test_integer_overflow(tmp_path, capsys):
    path = tmp_path / 'huge.json'
    path.write_text('{"dim": 2, "A": [[1' + '0' * 400 + ', 0], [0, 1]], "b": [0, 0]}')

    assert main(['integrate', '--problem', str(path)]) == 1
    assert 'A[0][0]' in capsys.readouterr().err


def test_not_positive_definite(problem_file, capsys):
    path = problem_file({
        'dim': 2,
        'A': [[1, 0], [0, 1]],
        'b': [0, 0],
        'cov': [[1.0, 2.0], [2.0, 1.0]],
    })

    assert main(['integrate', '--problem', path]) == 2
    assert 'positive definite' in capsys.readouterr().err


def test_missing_problem(tmp_path):
    assert main(['integrate', '--problem', str(tmp_path / 'absent.json')]) == 1


def test_nestings_then_integrate(quadrant, tmp_path):
    nestings = tmp_path / 'seq.json'

    assert main(['nestings', '--problem', quadrant, '--n', '32', '--output', str(nestings)]) == 0

    sequence = io.load_sequence(nestings)

    assert sequence.gammas[-1] == 0.0
    assert len(sequence.seeds) == len(sequence)

    output = tmp_path / 'z.json'

    assert main(['integrate', '--problem', quadrant, '--nestings', str(nestings),
                 '--samples-per-nesting', '1024', '--output', str(output)]) == 0

    document = io.read_json(output)

    assert document['gammas'] == list(sequence.gammas)
    assert 'nestings' not in document
    assert document['config']['nestings'] == io.file_fingerprint(nestings)


def test_nestings_mismatch(quadrant, tmp_path):
    # a seed outside its domain
    nestings = tmp_path / 'seq.json'
    io.write_json(nestings, {'gammas': [0.0], 'seeds': [[-1.0, -1.0]]})

    assert main(['integrate', '--problem', quadrant, '--nestings', str(nestings)]) == 1


def test_no_timing(quadrant, tmp_path):
    outputs = [tmp_path / 'first.json', tmp_path / 'second.json']

    for output in outputs:
        assert main(['integrate', '--problem', quadrant, '--samples-per-nesting', '128',
                     '--repeats', '3', '--seed', '7', '--no-timing',
                     '--output', str(output)]) == 0

    (first, second) = (output.read_bytes() for output in outputs)

    assert first == second
    assert b'wall_seconds' not in first


def test_sample(correlated, tmp_path):
    output = tmp_path / 'samples.csv'
    report = tmp_path / 'report.json'

    assert main(['sample', '--problem', correlated, '--n', '500', '--thinning', '2',
                 '--output', str(output), '--report', str(report)]) == 0

    samples = np.array(io.read_samples(output))

    assert samples.shape == (500, 2)
    assert (samples > 0).all()

    document = io.read_json(report)

    assert document['subcommand'] == 'sample'
    assert document['samples'] == str(output)
    assert document['config']['thinning'] == 2


def test_sample_x0(correlated, tmp_path):
    output = tmp_path / 'samples.csv'

    assert main(['sample', '--problem', correlated, '--n', '50', '--x0', '1.5,0.5',
                 '--output', str(output)]) == 0

    assert (np.array(io.read_samples(output)) > 0).all()

    # infeasible start
    assert main(['sample', '--problem', correlated, '--n', '50', '--x0', '-1,0.5',
                 '--output', str(output)]) == 1

    assert main(['sample', '--problem', correlated, '--n', '50', '--x0', '1',
                 '--output', str(output)]) == 1


def test_sample_deterministic(quadrant, tmp_path):
    outputs = [tmp_path / 'first.csv', tmp_path / 'second.csv']

    for output in outputs:
        assert main(['sample', '--problem', quadrant, '--n', '100', '--seed', '3',
                     '--output', str(output)]) == 0

    assert outputs[0].read_bytes() == outputs[1].read_bytes()


def test_gradient(correlated, tmp_path):
    output = tmp_path / 'gradient.json'

    assert main(['gradient', '--problem', correlated, '--n', '2000', '--chains', '2',
                 '--samples-per-nesting', '256', '--output', str(output)]) == 0

    document = io.read_json(output)

    assert len(document['d_mu']) == 2
    assert np.array(document['d_sigma']).shape == (2, 2)
    assert np.array(document['hessian_mu']).shape == (2, 2)
    assert document['p_hat_log'] < 0
    assert document['config']['chains'] == 2


def test_gradient_requires_parameters(quadrant, capsys):
    assert main(['gradient', '--problem', quadrant, '--n', '100']) == 1
    assert 'mean' in capsys.readouterr().err


def test_repro_list(capsys):
    assert main(['repro', '--list']) == 0

    out = capsys.readouterr().out

    for name in ('quadrant', 'halfspaces', 'orthant500', 'nesting-bias', 'orthant1000',
                 'hdr-samples'):
        assert name in out


def test_repro(tmp_path, capsys):
    output = tmp_path / 'repro.json'

    assert main(['repro', 'quadrant', '--seeds', '2', '--output', str(output)]) == 0

    lines = capsys.readouterr().out.splitlines()

    assert lines[0].split('\t') == ['preset', 'seed', 'nestings', 'log2_z', 'reference_log2_z']
    assert len(lines) == 3

    document = io.read_json(output)

    assert [row['seed'] for row in document['rows']] == [0, 1]
    assert document['summary'][0]['log2_z']['count'] == 2
    assert document['summary'][0]['log2_z']['mean'] == pytest.approx(-2.0, abs=0.3)


def test_repro_grid(monkeypatch, tmp_path, capsys):
    presets = cli.load_presets()

    small = dict(presets['hdr-samples'],
                 problem={'builder': 'shifted_orthant', 'dim': 10, 'offset': 1.0},
                 sweep=[{'parameter': 'n_per_level', 'values': [8, 32]},
                        {'parameter': 'samples_per_nesting', 'values': [64, 256]}])

    monkeypatch.setattr(cli, 'load_presets', lambda: dict(presets, **{'hdr-samples': small}))

    output = tmp_path / 'repro.json'

    assert main(['repro', 'hdr-samples', '--seeds', '2', '--output', str(output)]) == 0

    lines = capsys.readouterr().out.splitlines()

    assert lines[0].split('\t') == ['n_per_level', 'samples_per_nesting', 'seed',
                                    'nestings', 'log2_z', 'reference_log2_z']
    assert len(lines) == 1 + 2 * 2 * 2

    document = io.read_json(output)

    assert [(row['n_per_level'], row['samples_per_nesting']) for row in document['rows']][:4] == \
        [(8, 64), (8, 64), (8, 256), (8, 256)]

    for row in document['rows']:
        if 'error' in row:
            continue

        assert len(row['rho_hats']) == row['nestings']
        assert all(0 < rho_hat <= 1 for rho_hat in row['rho_hats'])

    # rows of one seed and nesting size share their nestings
    (first, _, third, _) = document['rows'][:4]
    assert first['nestings'] == third['nestings']

    assert len(document['summary']) == 4
    assert document['summary'][0]['rho_hats']


def test_repro_unknown():
    assert main(['repro', 'nonesuch']) == 1


def test_json_logs(quadrant, capsys):
    assert main(['integrate', '--problem', quadrant, '--samples-per-nesting', '64',
                 '--json-logs']) == 0

    records = [json.loads(line) for line in capsys.readouterr().err.splitlines()]

    assert records
    assert all(set(record) >= {'time', 'level', 'logger', 'message'} for record in records)
    assert any('log2 Z' in record['message'] for record in records)


def test_threads_env(quadrant, monkeypatch, tmp_path):
    monkeypatch.setenv(cli.THREADS_ENV, 'many')

    assert main(['integrate', '--problem', quadrant]) == 1

    monkeypatch.setenv(cli.THREADS_ENV, '2')

    output = tmp_path / 'z.json'

    assert main(['integrate', '--problem', quadrant, '--samples-per-nesting', '64',
                 '--output', str(output)]) == 0

    assert io.read_json(output)['config']['threads'] == 2

    # the option takes precedence
    assert main(['integrate', '--problem', quadrant, '--samples-per-nesting', '64',
                 '--threads', '3', '--output', str(output)]) == 0

    assert io.read_json(output)['config']['threads'] == 3


def test_report_mapping():
    report = RunReport('integrate', {'seed': 0}, {'log_z': -1.0}, 'abc', 1.5, 1.0)

    document = report.to_mapping()

    assert document['log_z'] == -1.0
    assert document['subcommand'] == 'integrate'

    assert RunReport.from_mapping(document) == report

    untimed = RunReport('integrate', {'seed': 0}, {'log_z': -1.0})

    assert 'wall_seconds' not in untimed.to_mapping()
    assert RunReport.from_mapping(untimed.to_mapping()) == untimed
