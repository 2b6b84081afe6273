#!/usr/bin/env python3
"""
Tests for configuration, the experiment runner, result files and the CLI
"""

import json

import numpy as np
import pytest

import lib.harness.experiment_runner as experiment_runner
from lib.errors import ConfigurationError, NumericalError
from lib.harness import load_config, run_bench, run_experiment, trajectory
from lib.models import ModelSpec
from lib.harness.config import DESK_EVAL_BUDGETS, DESK_NMC_BUDGETS
from lib.ResultWriter import CSV_HEADER, ResultRow, ResultWriter, TrialFailure, emit_results, format_value, \
    summarize
from main import main, parse_grid

HEADER_LINE = 'trial,selector,k,design,mi_value,mi_stderr,wall_time_ms,op_mults,op_factorizations,op_model_evals'


def make_row(trial=0, selector='lsig', k=1, design='0', value=0.5):
    return ResultRow(trial, selector, k, design, value, 0.0, 1.5, 10, 1, 0)


def lg_overrides(out, **harness):
    return {
        'models': {'name': 'linear_gaussian', 'linear_gaussian': {'n': 8, 'd': 8}},
        'selectors': {'names': 'lsig,gauss,random,exhaustive', 'k_max': 3},
        'harness': {'trials': 2, 'seed': 7, 'output': str(out), 'deterministic': True, **harness},
    }


def test_csv_header_is_exact():
    assert ','.join(CSV_HEADER) == HEADER_LINE


def test_float_formatting_keeps_17_digits():
    assert format_value(0.1) == '0.10000000000000001'
    assert format_value(np.float64(2.0)) == '2'
    assert format_value(12) == '12'


def test_emit_results_empty_and_two_rows(tmp_path):
    path, summary_path = emit_results([], tmp_path / 'empty.csv')
    assert path.read_text() == HEADER_LINE + '\n'
    assert summary_path.name == 'empty.summary.json'

    path, _ = emit_results([make_row(), make_row(k=2, design='0;3')], tmp_path / 'two.csv')
    lines = path.read_text().splitlines()
    assert len(lines) == 3
    assert lines[2].startswith('0,lsig,2,0;3,0.5,')


def test_emit_results_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        emit_results([make_row()], tmp_path / 'missing' / 'out.csv')


def test_summary_occupied_cells_for_identical_designs():
    rows = [make_row(trial=t, k=4, design='1;5;9;12') for t in range(50)]
    summary = summarize(rows)
    assert summary['occupied_cells']['lsig']['4'] == 4
    assert summary['selection_frequency']['lsig']['4']['5'] == 1.0
    assert summary['curves']['lsig']['4']['stderr'] == 0.0


def test_summary_curves_and_paired_differences():
    rows = [
        make_row(trial=0, selector='lsig', value=1.0), make_row(trial=1, selector='lsig', value=3.0),
        make_row(trial=0, selector='nmc', value=0.5), make_row(trial=1, selector='nmc', value=2.5),
    ]
    failures = [TrialFailure(2, 'gauss', 'NumericalError', 'boom')]
    summary = summarize(rows, failures)
    assert summary['curves']['lsig']['1']['mean'] == pytest.approx(2.0)
    assert summary['curves']['lsig']['1']['stderr'] == pytest.approx(1.0)
    assert summary['difference_vs_nmc']['lsig']['1']['mean'] == pytest.approx(0.5)
    assert 'nmc' not in summary['difference_vs_nmc']
    assert summary['failures'][0]['selector'] == 'gauss'


def test_result_writer_orders_rows(tmp_path):
    writer = ResultWriter(tmp_path / 'out.csv', selector_order=['nmc', 'lsig'])
    writer.add_row(make_row(trial=1, selector='lsig'))
    writer.add_row(make_row(trial=0, selector='lsig', k=2))
    writer.add_row(make_row(trial=0, selector='nmc'))
    writer.add_row(make_row(trial=0, selector='lsig', k=1))
    ordered = [(r.trial, r.selector, r.k) for r in writer.rows()]
    assert ordered == [(0, 'nmc', 1), (0, 'lsig', 1), (0, 'lsig', 2), (1, 'lsig', 1)]
    csv_path, _ = writer.flush()
    assert len(csv_path.read_text().splitlines()) == 5


def test_load_config_layers(tmp_path):
    config_file = tmp_path / 'experiment.yaml'
    config_file.write_text(
        "models:\n  name: epidemic\n  epidemic: {n: 12}\n"
        "selectors:\n  names: [lsig, nmc]\n  k_max: 4\n"
        "harness:\n  trials: 3\n"
    )
    config = load_config(config_file, {'harness': {'trials': 5, 'seed': None}})
    assert config.model.name == 'epidemic' and config.model.n == 12
    assert config.selectors == ('lsig', 'nmc')
    assert config.trials == 5
    assert config.seed == 42


def test_desk_scales_budgets_unless_explicit():
    config = load_config(None, {'harness': {'desk': True}})
    assert (config.eval_inner, config.eval_outer) == DESK_EVAL_BUDGETS
    assert (config.nmc_inner, config.nmc_outer) == DESK_NMC_BUDGETS
    config = load_config(None, {'harness': {'desk': True}, 'mi': {'eval_inner': 500, 'eval_outer': 50}})
    assert (config.eval_inner, config.eval_outer) == (500, 50)


def test_config_rejects_unknown_keys(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(None, {'plotting': {'dpi': 300}})
    with pytest.raises(ConfigurationError):
        load_config(None, {'score': {'bank': 10}})
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / 'nope.yaml')


def test_config_validation_collects_every_problem():
    with pytest.raises(ConfigurationError) as excinfo:
        load_config(None, {'selectors': {'names': 'lsig,magic', 'k_max': 0}, 'harness': {'trials': 0}})
    message = str(excinfo.value)
    assert 'magic' in message and 'k_max' in message and 'trials' in message


def test_exhaustive_needs_linear_gaussian():
    with pytest.raises(ConfigurationError):
        load_config(None, {'models': {'name': 'epidemic'}, 'selectors': {'names': 'exhaustive'}})


def test_run_experiment_rows_and_prefixes(tmp_path):
    config = load_config(None, lg_overrides(tmp_path / 'out.csv'))
    result = run_experiment(config)
    assert result.exit_code == 0
    assert len(result.rows) == 2 * 4 * 3
    for trial in range(2):
        for selector in ('lsig', 'gauss'):
            designs = [r.design for r in result.rows if r.trial == trial and r.selector == selector]
            for shorter, longer in zip(designs, designs[1:]):
                assert longer.startswith(shorter + ';')
    assert all(r.wall_time_ms == 0.0 for r in result.rows)
    assert all(r.mi_stderr == 0.0 for r in result.rows)


def test_exhaustive_bounds_other_selectors(tmp_path):
    config = load_config(None, lg_overrides(tmp_path / 'out.csv'))
    rows = run_experiment(config).rows
    best = {(r.trial, r.k): r.mi_value for r in rows if r.selector == 'exhaustive'}
    for r in rows:
        assert r.mi_value <= best[(r.trial, r.k)] + 1e-10


def test_deterministic_runs_are_byte_identical(tmp_path):
    outputs = []
    for name in ('first.csv', 'second.csv'):
        config = load_config(None, {
            'models': {'name': 'epidemic', 'epidemic': {'n': 10}},
            'selectors': {'names': 'random', 'k_max': 3},
            'mi': {'eval_inner': 40, 'eval_outer': 10},
            'harness': {'trials': 1, 'seed': 3, 'output': str(tmp_path / name), 'deterministic': True},
        })
        result = run_experiment(config)
        path, _ = emit_results(result.rows, config.output, result.failures)
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1]


def test_count_model_experiment(tmp_path):
    config = load_config(None, {
        'models': {'name': 'spatial_poisson', 'spatial_poisson': {'grid': 2}},
        'score': {'M': 40, 'm': 30},
        'mi': {'eval_inner': 40, 'eval_outer': 10},
        'selectors': {'names': 'lsig,gauss,nmc', 'k_max': 2, 'nmc_inner': 20, 'nmc_outer': 5},
        'harness': {'trials': 2, 'workers': 2, 'output': str(tmp_path / 'poisson.csv')},
    })
    result = run_experiment(config)
    assert result.exit_code == 0
    assert len(result.rows) == 2 * 3 * 2
    assert all(np.isfinite(r.mi_value) for r in result.rows)
    assert [r.trial for r in result.rows] == sorted(r.trial for r in result.rows)
    nmc_rows = [r for r in result.rows if r.selector == 'nmc' and r.k == 2]
    assert all(r.op_model_evals == (4 + 3) * 5 * (1 + 20) for r in nmc_rows)


def test_failed_selectors_are_recorded(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise NumericalError("injected")

    monkeypatch.setattr(experiment_runner, 'select_random', broken)
    config = load_config(None, lg_overrides(tmp_path / 'out.csv'))
    result = run_experiment(config)
    assert result.exit_code == 2
    assert [(f.trial, f.selector, f.error_type) for f in result.failures] == [
        (0, 'random', 'NumericalError'), (1, 'random', 'NumericalError')
    ]
    assert not any(r.selector == 'random' for r in result.rows)
    assert any(r.selector == 'lsig' for r in result.rows)


def test_bench_counts():
    report = run_bench(ns=(10, 20), ks=(2, 3))
    assert report.nmc_counts_exact
    assert report.lsig_fits
    assert report.gauss_within_bound
    assert [r.lsig_mults for r in report.rows if r.n == 10] == [10 * 5, 10 * 14]


def test_parse_grid():
    assert parse_grid(['n=6,8', 'k=2']) == ([6, 8], [2])
    with pytest.raises(ConfigurationError):
        parse_grid(['q=1'])


def test_cli_run_writes_results(tmp_path):
    out = tmp_path / 'cli.csv'
    code = main(['run', '--model', 'linear_gaussian', '--selector', 'lsig,random', '--k', '2', '--trials', '1',
                 '--deterministic', '--out', str(out)])
    assert code == 0
    assert out.read_text().splitlines()[0] == HEADER_LINE
    summary = json.loads((tmp_path / 'cli.summary.json').read_text())
    assert set(summary['curves']) == {'lsig', 'random'}
    assert summary['metadata']['harness']['trials'] == 1
    assert summary['metadata']['selectors']['names'] == 'lsig,random'


def test_cli_exit_codes(tmp_path, capsys):
    assert main(['check-gradients', '--model', 'epidemic', '--points', '20']) == 0
    assert main(['check-gradients', '--model', 'epidemic', '--points', '20', '--corrupt']) == 3
    assert main(['bench', '--grid', 'n=6,8', 'k=2,3']) == 0
    assert main(['run', '--config', str(tmp_path / 'missing.yaml')]) == 1
    assert main(['spectrum', '--model', 'epidemic']) == 1
    assert main(['evaluate', '--model', 'linear_gaussian', '--design', '0;0']) == 1
    capsys.readouterr()

    assert main(['evaluate', '--model', 'linear_gaussian', '--design', '3;7;12']) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload['estimator'] == 'closed_form' and payload['value'] > 0


def test_epidemic_trajectory():
    result = trajectory(ModelSpec.epidemic(n=10, population=50), rates=[0.5, 2.0])
    counts = np.array(result['mean_counts'])
    assert counts.shape == (2, 10)
    assert np.all(np.diff(counts, axis=1) > 0)
    assert np.all(counts[1] > counts[0]) and np.all(counts < 50)
    assert len(trajectory(ModelSpec.epidemic())['rates']) == 3


def test_cli_trajectory(capsys):
    assert main(['trajectory', '--model', 'epidemic', '--rates', '0.5,1']) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload['rates'] == [0.5, 1.0]
    assert main(['trajectory', '--model', 'linear_gaussian']) == 1
    assert main(['trajectory', '--model', 'epidemic', '--rates', 'fast']) == 1
