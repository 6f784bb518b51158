#!/usr/bin/env python3
"""
cachewire experiment driver

Reads a preset, a key=value experiment file and command-line overrides, runs one of the
analytic models, the simulator, a parameter sweep or the threshold optimizer, and writes CSV.

    python cli.py --preset fig4 --out results
    python cli.py --mode rate M=1000 Lc=100 eps=1e-4
    python cli.py --config exp.env --set Nc=10 --seed 3
"""

import argparse
import csv
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import config
from costmodel import CostRates, optimize_threshold, total_cost
from errors import ConfigError, ContractError, DomainError, TraceError
from lrumodel import (COPIES_RULES, NetworkConfig, copies_for, fleet_update_rate, item_profiles,
                      normalized_rate, updates_per_change)
from presets import PRESETS, get_preset, preset_names
from ratecore import DistortionBudget
from simkernel import POLICY_SOURCES, run_rounds
from workload import fetch_movielens, parse_trace, synthetic_stream

logger = logging.getLogger('cachewire')

MODES = ('rate', 'cost', 'optimize', 'simulate', 'sweep', 'fetch')
SEED_LIMIT = 2 ** 64

ALIASES = {
    'N': 'n_users',
    'M': 'n_items',
    'Nc': 'n_caches',
    'Ncopies': 'n_copies',
    'Lc': 'cache_capacity',
    'B': 'item_size',
    'alpha': 'zipf_alpha',
    'gamma': 'request_rate_per_user',
    'refresh_internal': 'refresh_on_internal',
}

HEADERS = {
    'rate': ['item', 'rho', 'lambda', 'R_i', 'normalized_rate'],
    'cost': ['param', 'phi_up_min', 'phi_up_max', 'phi_dl_low', 'phi_dl_high', 'phi_low', 'phi_high'],
    'optimize': ['i_star_candidate', 'phi', 'phi1', 'phi2', 'phi3'],
    'simulate': ['item', 'rho_hat', 'd1', 'd2', 'updates', 'local', 'internal', 'external'],
}
SWEEP_COLUMNS = ['R_total', 'normalized_rate', 'updates_per_change',
                 'phi_up_min', 'phi_up_max', 'phi_dl_low', 'phi_dl_high', 'phi_low', 'phi_high']


# ============================================================================
# VALUE PARSING
# ============================================================================

def _to_int(key, raw):
    """Exact for plain integers of any size; '1e4' style accepted when it is integral"""
    try:
        return int(str(raw).strip())
    except (TypeError, ValueError):
        pass
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be an integer (got {raw!r})")
    if not math.isfinite(value) or value != int(value):
        raise ConfigError(f"{key} must be an integer (got {raw!r})")
    return int(value)


def _to_float(key, raw):
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number (got {raw!r})")
    if not math.isfinite(value):
        raise ConfigError(f"{key} must be finite (got {raw!r})")
    return value


def _to_bool(key, raw):
    text = str(raw).strip().lower()
    if text in ('1', 'true', 'yes', 'on'):
        return True
    if text in ('0', 'false', 'no', 'off'):
        return False
    raise ConfigError(f"{key} must be true or false (got {raw!r})")


def _to_str(key, raw):
    text = str(raw).strip()
    if not text:
        raise ConfigError(f"{key} must not be empty")
    return text


def _to_values(key, raw):
    parts = [p for p in str(raw).replace(' ', '').split(',') if p]
    if not parts:
        raise ConfigError(f"{key} needs at least one value")
    values = tuple(_to_float(key, p) for p in parts)
    if any(v <= 0 for v in values):
        raise ConfigError(f"{key} must all be > 0 (got {raw!r})")
    return values


def _optional(convert):
    def parse(key, raw):
        if raw is None or str(raw).strip().lower() in ('', 'none'):
            return None
        return convert(key, raw)
    return parse


CONVERTERS = {
    'mode': _to_str,
    'n_users': _to_int,
    'n_items': _to_int,
    'n_caches': _to_int,
    'n_copies': _to_int,
    'cache_capacity': _to_int,
    'item_size': _to_float,
    'zipf_alpha': _to_float,
    'request_rate_per_user': _to_float,
    'eps1': _to_float,
    'eps2': _to_float,
    'xi_up': _to_float,
    'xi_int': _to_float,
    'xi_ext': _to_float,
    'copies_rule': _to_str,
    'total_storage': _optional(_to_int),
    'sweep_axis': _optional(_to_str),
    'sweep_values': _to_values,
    'trace': _optional(_to_str),
    'n_requests': _to_int,
    'rounds': _to_int,
    'policy': _to_str,
    'refresh_on_internal': _to_bool,
    'warmup': _optional(_to_int),
    'seed': _to_int,
    'out': _to_str,
}

SWEEP_AXES = ('eps', 'eps1', 'eps2', 'n_users', 'n_items', 'n_caches', 'n_copies', 'cache_capacity',
              'item_size', 'zipf_alpha', 'request_rate_per_user', 'xi_up', 'xi_int', 'xi_ext',
              'total_storage')


def canonical(values):
    """Resolve aliases; `eps` expands to eps1 and eps2"""
    out = {}
    for key, raw in values.items():
        key = key.strip()
        if key == 'eps':
            out['eps1'] = out['eps2'] = raw
            continue
        name = ALIASES.get(key, key)
        if name not in CONVERTERS:
            raise ConfigError(f"unknown experiment key {key!r}")
        out[name] = raw
    return out


def parse_assignments(tokens):
    """['Lc=20', 'eps=0.01'] -> {'Lc': '20', 'eps': '0.01'}"""
    values = {}
    for token in tokens:
        key, sep, raw = token.partition('=')
        if not sep or not key.strip():
            raise ConfigError(f"expected key=value, got {token!r}")
        values[key.strip()] = raw.strip()
    return values


# ============================================================================
# EXPERIMENT CONFIG
# ============================================================================

@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = 'rate'
    n_users: int = 1000
    n_items: int = 1000
    n_caches: int = 1
    n_copies: int = 1
    cache_capacity: int = 100
    item_size: float = 1e5
    zipf_alpha: float = 0.7
    request_rate_per_user: float = 1.0
    eps1: float = 0.0
    eps2: float = 0.0
    xi_up: float = 1.0
    xi_int: float = 1.0
    xi_ext: float = 5.0
    copies_rule: str = 'fixed'
    total_storage: int = None
    sweep_axis: str = None
    sweep_values: tuple = ()
    trace: str = None
    n_requests: int = 100_000
    rounds: int = 1
    policy: str = 'empirical'
    refresh_on_internal: bool = True
    warmup: int = None
    seed: int = 0
    out: str = 'results'

    @classmethod
    def from_mapping(cls, values):
        """Build from raw key=value strings (aliases allowed) and validate"""
        parsed = {name: CONVERTERS[name](name, raw) for name, raw in canonical(values).items()}
        experiment = cls(**parsed)
        experiment.validate()
        return experiment

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)} (got {self.mode!r})")
        if self.copies_rule not in COPIES_RULES:
            raise ConfigError(f"copies_rule must be one of {COPIES_RULES} (got {self.copies_rule!r})")
        if self.policy not in POLICY_SOURCES:
            raise ConfigError(f"policy must be one of {POLICY_SOURCES} (got {self.policy!r})")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1 (got {self.rounds})")
        if self.n_requests < 1:
            raise ConfigError(f"n_requests must be >= 1 (got {self.n_requests})")
        if not 0 <= self.seed < SEED_LIMIT:
            raise ConfigError(f"seed must be an unsigned 64-bit integer (got {self.seed})")
        if self.total_storage is not None and self.total_storage < 1:
            raise ConfigError(f"total_storage must be >= 1 (got {self.total_storage})")
        if self.mode == 'sweep':
            if self.sweep_axis is None or not self.sweep_values:
                raise ConfigError("sweep mode needs sweep_axis and sweep_values")
            if self.axis not in SWEEP_AXES:
                raise ConfigError(f"cannot sweep {self.sweep_axis!r}; choose one of {', '.join(SWEEP_AXES)}")

    @property
    def axis(self):
        if self.sweep_axis is None:
            return None
        return ALIASES.get(self.sweep_axis, self.sweep_axis)

    def at(self, value):
        """Copy with the sweep axis set to `value`"""
        axis = self.axis
        if axis == 'eps':
            return replace(self, eps1=value, eps2=value)
        if CONVERTERS[axis] in (_to_int, CONVERTERS['total_storage']):
            value = _to_int(self.sweep_axis, value)
        return replace(self, **{axis: value})

    def network_config(self):
        capacity = self.cache_capacity
        if self.total_storage is not None:
            capacity = self.total_storage // self.n_caches
            if capacity < 1:
                raise DomainError(f"total_storage {self.total_storage} leaves no room on {self.n_caches} caches")
        return NetworkConfig(
            n_users=self.n_users,
            n_items=self.n_items,
            n_caches=self.n_caches,
            n_copies=copies_for(self.n_caches, self.copies_rule, self.n_copies),
            cache_capacity=capacity,
            item_size=self.item_size,
            zipf_alpha=self.zipf_alpha,
            request_rate_per_user=self.request_rate_per_user,
        )

    def budget(self):
        return DistortionBudget(self.eps1, self.eps2)

    def cost_rates(self):
        return CostRates(xi_up=self.xi_up, xi_int=self.xi_int, xi_ext=self.xi_ext)


def load_experiment(args):
    """Layer preset < config file < key=value overrides < dedicated flags"""
    merged = {}
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; available: {', '.join(preset_names())}")
        merged.update(canonical(get_preset(args.preset)))
    if args.config:
        merged.update(canonical(config.read_experiment_file(args.config)))
    merged.update(canonical(parse_assignments(args.overrides + args.assignments)))
    for name in ('mode', 'seed', 'out'):
        value = getattr(args, name)
        if value is not None:
            merged[name] = value
    return ExperimentConfig.from_mapping(merged)


# ============================================================================
# OUTPUT
# ============================================================================

def fmt(value):
    if isinstance(value, (int, str)) and not isinstance(value, bool):
        return str(value)
    return format(float(value), '.12g')


def write_csv(path, header, rows):
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    logger.info(f"wrote {path}")
    return path


def _param_tag(net):
    return f"N={net.n_users} M={net.n_items} Nc={net.n_caches} Ncopies={net.n_copies} Lc={net.cache_capacity}"


# ============================================================================
# MODES
# ============================================================================

def run_rate(exp):
    net = exp.network_config()
    profile = item_profiles(net)
    total, rates = fleet_update_rate(net, exp.budget(), profile)
    # per-item shares sum to the fleet's normalized rate
    shares = rates / (net.n_caches * profile.per_cache_rate.sum())
    logger.info(f"R_total={total:.6g} updates/s, normalized {normalized_rate(total, net, profile):.6g}, "
                f"{updates_per_change(total, net, profile):.6g} per change")

    rows = [(i + 1, profile.occupancy[i], profile.per_cache_rate[i], rates[i], shares[i])
            for i in range(net.n_items)]
    return [write_csv(os.path.join(exp.out, 'rate.csv'), HEADERS['rate'], rows)]


def _cost_row(report):
    return (report.phi_up_min, report.phi_up_max, report.phi_dl_low, report.phi_dl_high,
            report.phi_low, report.phi_high)


def run_cost(exp):
    net = exp.network_config()
    report = total_cost(net, exp.budget(), exp.cost_rates())
    logger.info(f"phi in [{report.phi_low:.6g}, {report.phi_high:.6g}]")
    row = (_param_tag(net),) + _cost_row(report)
    return [write_csv(os.path.join(exp.out, 'cost.csv'), HEADERS['cost'], [row])]


def run_optimize(exp):
    net = exp.network_config()
    plan = optimize_threshold(net, exp.budget(), exp.cost_rates(), threads=config.thread_cap())
    rows = [(pt.i_star, pt.phi, pt.phi1, pt.phi2, pt.phi3) for pt in plan.curve]
    csv_path = write_csv(os.path.join(exp.out, 'optimize.csv'), HEADERS['optimize'], rows)

    summary = (f"i_star={plan.i_star} phi={fmt(plan.phi_at)} phi_full={fmt(plan.phi_full)} "
               f"phi_no_cache={fmt(plan.phi_no_cache)} reduction={fmt(plan.reduction)} "
               f"low_bound_i_star={plan.low_bound_i_star}")
    plan_path = os.path.join(exp.out, 'optimize_plan.txt')
    with open(plan_path, 'w', encoding='utf-8') as f:
        f.write(summary + '\n')
    print(f"[OK] {summary}")
    return [csv_path, plan_path]


def _stream_for(exp, net):
    if exp.trace:
        trace = parse_trace(exp.trace)
        if exp.policy == 'empirical' or exp.n_items == trace.n_items:
            net = net.replace(n_items=trace.n_items)
        return trace, net
    return synthetic_stream(net, exp.n_requests, seed=exp.seed), net


def run_simulate(exp):
    net = exp.network_config()
    budget = exp.budget()
    trace, net = _stream_for(exp, net)
    report = run_rounds(net, budget, trace, rounds=exp.rounds, seed=exp.seed,
                        threads=config.thread_cap(), policy_source=exp.policy,
                        rates=exp.cost_rates(), warmup=exp.warmup,
                        refresh_on_internal=exp.refresh_on_internal)

    check = report.budget_check(budget)
    mix = report.service_mix
    logger.info(f"[SIM] {check.requested} requested items: {check.over_d1} above eps1, {check.over_d2} above eps2")
    logger.info(f"[SIM] local={mix['local']:.4f} internal={mix['internal']:.4f} "
                f"external={mix['external']:.4f} updates/request={report.updates_per_request:.6g}")

    rows = [(i + 1, report.rho_hat[i], report.d1[i], report.d2[i], report.updates[i],
             report.local[i], report.internal[i], report.external[i]) for i in range(report.n_items)]
    return [write_csv(os.path.join(exp.out, 'simulate.csv'), HEADERS['simulate'], rows)]


def sweep_point(exp):
    net = exp.network_config()
    budget = exp.budget()
    profile = item_profiles(net)
    total, _ = fleet_update_rate(net, budget, profile)
    report = total_cost(net, budget, exp.cost_rates())
    return (total, normalized_rate(total, net, profile), updates_per_change(total, net, profile)) \
        + _cost_row(report)


def run_sweep(exp):
    points = [exp.at(v) for v in exp.sweep_values]
    threads = min(config.thread_cap(), len(points))
    logger.info(f"[SWEEP] {exp.sweep_axis} over {len(points)} value(s) with {threads} thread(s)")
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(sweep_point, points))

    rows = []
    for point, value, result in zip(points, exp.sweep_values, results):
        shown = getattr(point, exp.axis) if exp.axis != 'eps' else value
        rows.append((shown,) + result)
    return [write_csv(os.path.join(exp.out, 'sweep.csv'), [exp.sweep_axis] + SWEEP_COLUMNS, rows)]


def run_fetch(exp):
    path = fetch_movielens()
    print(f"[OK] MovieLens trace at {path}")
    return [path]


RUNNERS = {
    'rate': run_rate,
    'cost': run_cost,
    'optimize': run_optimize,
    'simulate': run_simulate,
    'sweep': run_sweep,
    'fetch': run_fetch,
}


def run(exp):
    if exp.mode != 'fetch':
        os.makedirs(exp.out, exist_ok=True)
    logger.info(f"mode={exp.mode} seed={exp.seed}")
    return RUNNERS[exp.mode](exp)


# ============================================================================
# ENTRY POINT
# ============================================================================

def build_parser():
    parser = argparse.ArgumentParser(
        prog='cachewire',
        description='Distortion-constrained update rates and retrieval cost for LRU cache networks',
    )
    parser.add_argument('--mode', choices=MODES, help='what to run (overrides preset and config file)')
    parser.add_argument('--config', help='flat key=value experiment file')
    parser.add_argument('--out', help='output directory for CSV files (default: results)')
    parser.add_argument('--seed', type=int, help='random seed for streams and simulation')
    parser.add_argument('--preset', help='bundled experiment preset, see --list-presets')
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='override one experiment key (repeatable)')
    parser.add_argument('--list-presets', action='store_true', help='list bundled presets and exit')
    parser.add_argument('assignments', nargs='*', metavar='KEY=VALUE', help='experiment keys')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)

    if args.list_presets:
        for name in preset_names():
            print(f"{name}: mode={PRESETS[name]['mode']}")
        return 0

    try:
        config.setup_logging()
        exp = load_experiment(args)
        paths = run(exp)
    except (ConfigError, DomainError, ContractError, TraceError) as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return 3

    for path in paths:
        print(f"[OK] {path}")
    return 0


if __name__ == '__main__':
    sys.exit(main())
