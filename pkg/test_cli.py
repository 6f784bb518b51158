#!/usr/bin/env python3
"""
Tests for the experiment driver: config layering, CSV output and exit codes
Run with: pytest test_cli.py
"""

import csv

import pytest

from cli import (ExperimentConfig, build_parser, canonical, load_experiment, main,
                 parse_assignments)
from errors import ConfigError
from lrumodel import NetworkConfig, fleet_update_rate, item_profiles, normalized_rate
from ratecore import DistortionBudget
from workload import parse_trace, synthetic_stream, write_trace


def read_csv(path):
    with open(path, newline='') as f:
        return list(csv.reader(f))


@pytest.fixture(autouse=True)
def two_threads(monkeypatch):
    monkeypatch.setenv('CACHEWIRE_THREADS', '2')


# ============================================================================
# CONFIG LAYERING
# ============================================================================

def test_parse_assignments():
    assert parse_assignments(['Lc=20', ' eps = 0.01']) == {'Lc': '20', 'eps': '0.01'}
    with pytest.raises(ConfigError):
        parse_assignments(['Lc'])


def test_canonical_aliases():
    values = canonical({'M': '10', 'Nc': '2', 'eps': '0.1'})
    assert values == {'n_items': '10', 'n_caches': '2', 'eps1': '0.1', 'eps2': '0.1'}
    with pytest.raises(ConfigError, match='unknown experiment key'):
        canonical({'colour': 'blue'})


def test_from_mapping_types():
    exp = ExperimentConfig.from_mapping({'M': '1e4', 'B': '1e5', 'refresh_internal': 'false'})
    assert exp.n_items == 10_000
    assert exp.item_size == 1e5
    assert exp.refresh_on_internal is False


@pytest.mark.parametrize('values', [
    {'mode': 'plot'},
    {'M': '10.5'},
    {'mode': 'sweep'},
    {'mode': 'sweep', 'sweep_axis': 'Lc', 'sweep_values': '1,-2'},
    {'mode': 'sweep', 'sweep_axis': 'policy', 'sweep_values': '1'},
    {'rounds': '0'},
])
def test_from_mapping_rejects(values):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping(values)


def test_layer_precedence(tmp_path):
    path = tmp_path / 'exp.env'
    path.write_text('# fig4 variant\nLc=30\nM=500\nmode=cost\n')
    args = build_parser().parse_args(['--preset', 'fig4', '--config', str(path), '--set', 'Lc=40',
                                      '--mode', 'rate', 'alpha=0.9'])
    exp = load_experiment(args)
    assert exp.cache_capacity == 40
    assert exp.n_items == 500
    assert exp.zipf_alpha == 0.9
    assert exp.eps1 == 1e-4
    assert exp.mode == 'rate'


def test_total_storage_splits_capacity():
    exp = ExperimentConfig.from_mapping({'M': '10000', 'total_storage': '5000', 'Nc': '25'})
    assert exp.network_config().cache_capacity == 200


def test_log2_copies_rule():
    exp = ExperimentConfig.from_mapping({'M': '1000', 'Nc': '100', 'copies_rule': 'log2'})
    assert exp.network_config().n_copies == 7


@pytest.mark.parametrize('raw, seed', [
    ('3', 3),
    ('1e4', 10_000),
    (str(2 ** 53 + 1), 2 ** 53 + 1),
    (str(2 ** 64 - 1), 2 ** 64 - 1),
])
def test_seed_is_exact(raw, seed):
    assert ExperimentConfig.from_mapping({'seed': raw}).seed == seed


@pytest.mark.parametrize('raw', [str(2 ** 64), '-1', '2.5'])
def test_seed_outside_u64_rejected(raw):
    with pytest.raises(ConfigError, match='seed'):
        ExperimentConfig.from_mapping({'seed': raw})


# ============================================================================
# MODES
# ============================================================================

def test_rate_mode(tmp_path):
    out = tmp_path / 'out'
    assert main(['--mode', 'rate', '--out', str(out), 'M=200', 'Lc=20', 'eps=1e-3']) == 0
    rows = read_csv(out / 'rate.csv')
    assert rows[0] == ['item', 'rho', 'lambda', 'R_i', 'normalized_rate']
    assert len(rows) == 201

    cfg = NetworkConfig(n_items=200, cache_capacity=20)
    profile = item_profiles(cfg)
    total, _ = fleet_update_rate(cfg, DistortionBudget(1e-3, 1e-3), profile)
    shares = sum(float(r[4]) for r in rows[1:])
    assert shares == pytest.approx(normalized_rate(total, cfg, profile), rel=1e-9)


def test_cost_mode(tmp_path):
    assert main(['--mode', 'cost', '--out', str(tmp_path), 'M=300', 'Lc=10', 'Nc=4', 'Ncopies=2',
                 'eps=1e-4']) == 0
    rows = read_csv(tmp_path / 'cost.csv')
    assert rows[0][0] == 'param'
    assert len(rows) == 2
    phi_low, phi_high = float(rows[1][5]), float(rows[1][6])
    assert phi_low <= phi_high


def test_optimize_mode(tmp_path):
    assert main(['--mode', 'optimize', '--out', str(tmp_path), 'N=100', 'M=150', 'Nc=5', 'Lc=5',
                 'eps=1e-4']) == 0
    rows = read_csv(tmp_path / 'optimize.csv')
    assert rows[0] == ['i_star_candidate', 'phi', 'phi1', 'phi2', 'phi3']
    assert len(rows) == 152
    plan = (tmp_path / 'optimize_plan.txt').read_text()
    assert plan.startswith('i_star=')


def test_simulate_synthetic(tmp_path):
    assert main(['--mode', 'simulate', '--out', str(tmp_path), 'N=20', 'M=40', 'Lc=5',
                 'n_requests=3000', 'rounds=2', 'eps=0.05']) == 0
    rows = read_csv(tmp_path / 'simulate.csv')
    assert rows[0] == ['item', 'rho_hat', 'd1', 'd2', 'updates', 'local', 'internal', 'external']
    assert len(rows) == 41


def test_simulate_trace_file(tmp_path):
    trace = synthetic_stream(NetworkConfig(n_users=10, n_items=30, cache_capacity=5), 2000, seed=1)
    path = tmp_path / 'u.data'
    write_trace(trace, str(path))
    assert main(['--mode', 'simulate', '--out', str(tmp_path), f'trace={path}', 'Lc=5',
                 'eps=0.01', 'N=10']) == 0
    rows = read_csv(tmp_path / 'simulate.csv')
    assert len(rows) == parse_trace(str(path)).n_items + 1


def test_sweep_preset(tmp_path):
    assert main(['--preset', 'fig4', '--out', str(tmp_path), '--set', 'sweep_values=5,10,20']) == 0
    rows = read_csv(tmp_path / 'sweep.csv')
    assert rows[0][:4] == ['Lc', 'R_total', 'normalized_rate', 'updates_per_change']
    assert [r[0] for r in rows[1:]] == ['5', '10', '20']


def test_eps_sweep_is_monotone(tmp_path):
    assert main(['--mode', 'sweep', '--out', str(tmp_path), 'M=500', 'Lc=50', 'sweep_axis=eps',
                 'sweep_values=1e-4,1e-3,1e-2']) == 0
    rates = [float(r[1]) for r in read_csv(tmp_path / 'sweep.csv')[1:]]
    assert rates == sorted(rates, reverse=True)


def test_same_seed_same_csv(tmp_path):
    argv = ['--mode', 'simulate', 'N=20', 'M=40', 'Lc=5', 'n_requests=2000', 'eps=0.05', '--seed', '3']
    assert main(argv + ['--out', str(tmp_path / 'a')]) == 0
    assert main(argv + ['--out', str(tmp_path / 'b')]) == 0
    assert (tmp_path / 'a' / 'simulate.csv').read_bytes() == (tmp_path / 'b' / 'simulate.csv').read_bytes()


# ============================================================================
# EXIT CODES
# ============================================================================

def test_list_presets(capsys):
    assert main(['--list-presets']) == 0
    printed = capsys.readouterr().out
    assert 'fig2-movielens' in printed and 'fig8' in printed


def test_inconsistent_parameters_exit_2(tmp_path):
    assert main(['--mode', 'rate', '--out', str(tmp_path), 'M=100', 'Lc=500']) == 2


def test_unknown_preset_exit_2(tmp_path):
    assert main(['--preset', 'fig99', '--out', str(tmp_path)]) == 2


def test_missing_trace_exit_3(tmp_path):
    assert main(['--mode', 'simulate', '--out', str(tmp_path), f'trace={tmp_path / "nope.data"}']) == 3


def test_missing_config_exit_3(tmp_path):
    assert main(['--config', str(tmp_path / 'nope.env'), '--out', str(tmp_path)]) == 3


def test_undecodable_trace_exit_2(tmp_path):
    path = tmp_path / 'bad.data'
    path.write_bytes(b'1\t10\t3\t50\n\xff\xfe\t20\t3\t60\n')
    assert main(['--mode', 'simulate', '--out', str(tmp_path), f'trace={path}']) == 2
