"""
Discrete-event simulation of an LRU cache fleet reporting to a content resolution system (CRS)

Requests are replayed twice: an estimation pass measures per-item occupancy, then a measured
pass announces each cache change with the per-item probabilities from ratecore and records how
long the CRS view disagrees with the caches, how many updates were sent and where each request
was served from. Also holds the exact small-instance LRU oracle.
"""

import itertools
import logging
import math
import random
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.sparse import csr_matrix, lil_matrix
from scipy.sparse.linalg import spsolve

import config
from costmodel import CostRates, packet_lengths, update_shares
from errors import DomainError, TraceError
from lrumodel import item_profiles
from ratecore import UpdatePolicy, policy_for_occupancy
from workload import as_trace

logger = logging.getLogger(__name__)

MAX_EXACT_STATES = 100_000
MAX_EXACT_ITEMS = 8
POLICY_SOURCES = ('empirical', 'analytic')


class ChangeKind(str, Enum):
    TYPE_I = 'insert'
    TYPE_II = 'evict'


@dataclass(frozen=True)
class ChangeEvent:
    kind: ChangeKind
    item: int


class LruCache:
    """Move-to-front LRU; the last key of the OrderedDict is the most recently used"""

    def __init__(self, capacity):
        if capacity < 1:
            raise DomainError(f"cache capacity must be >= 1 (got {capacity})")
        self.capacity = capacity
        self._order = OrderedDict()

    def __contains__(self, item):
        return item in self._order

    def __len__(self):
        return len(self._order)

    def items(self):
        """Most recently used first"""
        return list(reversed(self._order))

    def victim(self):
        """Item a miss would evict right now, if any"""
        if len(self._order) < self.capacity:
            return None
        return next(iter(self._order))

    def touch(self, item):
        if item in self._order:
            self._order.move_to_end(item)
            return True
        return False

    def apply(self, item):
        """Hit: refresh, no events. Miss: insert (type I) and evict the tail when full (type II)."""
        if self.touch(item):
            return []
        self._order[item] = None
        events = [ChangeEvent(ChangeKind.TYPE_I, item)]
        if len(self._order) > self.capacity:
            evicted, _ = self._order.popitem(last=False)
            events.append(ChangeEvent(ChangeKind.TYPE_II, evicted))
        return events


def lru_apply(cache, item):
    return cache.apply(item)


# ============================================================================
# FLEET STATE
# ============================================================================

class CacheFleetState:
    """
    Mutable state of one run: LRU caches, the CRS view per cache and the accumulators.
    Accrual is lazy: a (cache, item) pair is settled whenever its true or perceived state
    is about to change, and once more at the end of the run.
    """

    def __init__(self, n_caches, capacity, n_items, start_time, accrue_from):
        self.n_caches = n_caches
        self.n_items = n_items
        self.caches = [LruCache(capacity) for _ in range(n_caches)]
        self.view = [set() for _ in range(n_caches)]
        self.last = [dict() for _ in range(n_caches)]
        self.clock = start_time
        self.start_time = start_time
        self.accrue_from = accrue_from

        size = n_items + 1
        self.time_present = [0.0] * size
        self.time_d1 = [0.0] * size
        self.time_d2 = [0.0] * size
        self.changes = [0] * size
        self.updates = [0] * size
        self.local = [0] * size
        self.internal = [0] * size
        self.external = [0] * size
        self.misdirected = [0] * size

    def settle(self, cache_id, item, now):
        last = self.last[cache_id]
        start = max(last.get(item, self.start_time), self.accrue_from)
        if now > start:
            dt = now - start
            held = item in self.caches[cache_id]
            seen = item in self.view[cache_id]
            if held:
                self.time_present[item] += dt
                if not seen:
                    self.time_d1[item] += dt
            elif seen:
                self.time_d2[item] += dt
        last[item] = now
        self.clock = max(self.clock, now)

    def settle_all(self, now):
        self.clock = max(self.clock, now)
        for cache_id in range(self.n_caches):
            for item in set(self.caches[cache_id].items()) | self.view[cache_id]:
                self.settle(cache_id, item, now)


def _draw_static_view(state, policy, rnd, cache_id, item):
    """S_hat ~ Bernoulli(static_assignment), independent of the true state"""
    if policy.static_assignment == 1 or rnd.random() < policy.static_assignment:
        state.view[cache_id].add(item)
    else:
        state.view[cache_id].discard(item)


def _set_static_views(state, policies, rnd):
    """Initial S_hat for static policies; random ones are redrawn at every change"""
    for item in range(1, state.n_items + 1):
        policy = policies[item]
        if not policy.is_static or policy.static_assignment == 0:
            continue
        for cache_id in range(state.n_caches):
            _draw_static_view(state, policy, rnd, cache_id, item)


# ============================================================================
# REPLAY
# ============================================================================

def _attach(requester, n_users, n_caches):
    """Users attach round-robin; trace users beyond N wrap modulo N"""
    user = (requester - 1) % n_users
    return user % n_caches


def _announce(state, policies, rnd, cache_id, event, counting):
    item = event.item
    if counting:
        state.changes[item] += 1

    policy = policies[item]
    if policy.is_static:
        if 0 < policy.static_assignment < 1:
            _draw_static_view(state, policy, rnd, cache_id, item)
        return
    p = policy.u1 if event.kind is ChangeKind.TYPE_I else policy.u2
    if rnd.random() < p:
        if event.kind is ChangeKind.TYPE_I:
            state.view[cache_id].add(item)
        else:
            state.view[cache_id].discard(item)
        if counting:
            state.updates[item] += 1


def _replay(trace, cfg, policies, seed, warmup, refresh_on_internal):
    """One pass over the stream; policies[item] drives announcements (index 0 unused)"""
    rnd = random.Random(seed)
    n = len(trace)
    warmup = warmup if n > warmup else 0
    times = trace.times
    state = CacheFleetState(cfg.n_caches, cfg.cache_capacity, trace.n_items,
                            start_time=float(times[0]), accrue_from=float(times[warmup]))
    _set_static_views(state, policies, rnd)

    others = [[c for c in range(cfg.n_caches) if c != local] for local in range(cfg.n_caches)]
    extra_copies = cfg.n_copies - 1
    caches = state.caches
    view = state.view

    for k, (now, item, requester) in enumerate(zip(times.tolist(), trace.items.tolist(),
                                                   trace.requesters.tolist())):
        counting = k >= warmup
        local = _attach(requester, cfg.n_users, cfg.n_caches)

        if caches[local].touch(item):
            if counting:
                state.local[item] += 1
            continue

        holders = [c for c in range(cfg.n_caches) if c != local and item in view[c]]
        server = next((c for c in holders if item in caches[c]), None)
        if server is not None:
            if refresh_on_internal:
                caches[server].touch(item)
            if counting:
                state.internal[item] += 1
        elif counting:
            state.external[item] += 1
            if holders:
                state.misdirected[item] += 1

        targets = [local]
        if extra_copies:
            targets += rnd.sample(others[local], extra_copies)
        for cache_id in targets:
            cache = caches[cache_id]
            if cache.touch(item):
                continue
            # both states are about to flip: close their open intervals first
            state.settle(cache_id, item, now)
            victim = cache.victim()
            if victim is not None:
                state.settle(cache_id, victim, now)
            for event in cache.apply(item):
                _announce(state, policies, rnd, cache_id, event, counting)

    state.settle_all(float(times[-1]))
    return state


# ============================================================================
# REPORTS
# ============================================================================

@dataclass(frozen=True)
class BudgetCheck:
    """Items with at least one measured request, and how many of them exceed eps1 / eps2"""
    requested: int
    over_d1: int
    over_d2: int

    @property
    def share_within_d1(self):
        return 1 - self.over_d1 / self.requested if self.requested else 1.0

    @property
    def share_within_d2(self):
        return 1 - self.over_d2 / self.requested if self.requested else 1.0


@dataclass(frozen=True)
class SimReport:
    """Per-item arrays are indexed by item - 1"""
    d1: np.ndarray
    d2: np.ndarray
    rho_hat: np.ndarray
    changes: np.ndarray
    updates: np.ndarray
    local: np.ndarray
    internal: np.ndarray
    external: np.ndarray
    misdirected: np.ndarray
    duration: float
    realized_cost: float
    seed: int
    rounds: int = 1
    config: object = field(default=None, repr=False)
    budget: object = field(default=None, repr=False)

    @property
    def n_items(self):
        return int(self.d1.size)

    @property
    def total_updates(self):
        return float(self.updates.sum())

    @property
    def total_changes(self):
        return float(self.changes.sum())

    @property
    def total_requests(self):
        return float(self.local.sum() + self.internal.sum() + self.external.sum())

    @property
    def updates_per_request(self):
        requests = self.total_requests
        return self.total_updates / requests if requests else 0.0

    @property
    def updates_per_change(self):
        changes = self.total_changes
        return self.total_updates / changes if changes else 0.0

    @property
    def service_mix(self):
        requests = self.total_requests
        if not requests:
            return {'local': 0.0, 'internal': 0.0, 'external': 0.0}
        return {
            'local': float(self.local.sum()) / requests,
            'internal': float(self.internal.sum()) / requests,
            'external': float(self.external.sum()) / requests,
        }

    def budget_check(self, budget=None):
        budget = budget or self.budget
        requested = self.local + self.internal + self.external > 0
        return BudgetCheck(
            requested=int(requested.sum()),
            over_d1=int((self.d1[requested] > budget.eps1).sum()),
            over_d2=int((self.d2[requested] > budget.eps2).sum()),
        )


def empty_report(cfg, budget, seed, n_items):
    zeros = np.zeros(n_items)
    return SimReport(d1=zeros, d2=zeros, rho_hat=zeros, changes=zeros, updates=zeros,
                     local=zeros, internal=zeros, external=zeros, misdirected=zeros,
                     duration=0.0, realized_cost=0.0, seed=seed, config=cfg, budget=budget)


def _realized_cost(state, cfg, rates, duration):
    """Cost per second: downloads by where their bits came from plus update packets"""
    sizes = cfg.sizes() if cfg.n_items == state.n_items else np.full(state.n_items, cfg.item_size)
    internal = np.array(state.internal[1:], dtype=float)
    external = np.array(state.external[1:], dtype=float)
    changes = np.array(state.changes[1:], dtype=float)
    updates = np.array(state.updates[1:], dtype=float)

    download = float((sizes * (internal * rates.xi_int + external * rates.xi_ext)).sum())
    lengths = np.nan_to_num(packet_lengths(cfg.n_caches, update_shares(changes, np.zeros_like(changes))))
    update = float((updates * lengths).sum()) * rates.xi_up
    return (download + update) / duration


def _report(state, cfg, budget, rates, seed):
    duration = state.clock - state.accrue_from
    scale = cfg.n_caches * duration

    def arr(values, normalise=False):
        out = np.array(values[1:], dtype=float)
        return out / scale if normalise else out

    return SimReport(
        d1=arr(state.time_d1, True),
        d2=arr(state.time_d2, True),
        rho_hat=arr(state.time_present, True),
        changes=arr(state.changes),
        updates=arr(state.updates),
        local=arr(state.local),
        internal=arr(state.internal),
        external=arr(state.external),
        misdirected=arr(state.misdirected),
        duration=duration,
        realized_cost=_realized_cost(state, cfg, rates, duration),
        seed=seed,
        config=cfg,
        budget=budget,
    )


# ============================================================================
# OPERATIONS
# ============================================================================

def _check_trace(trace):
    trace = as_trace(trace)
    if len(trace) and np.any(np.diff(trace.times) < 0):
        raise TraceError("request times must be non-decreasing")
    return trace


def _warmup_for(cfg, warmup):
    return cfg.cache_capacity * cfg.n_caches if warmup is None else warmup


def empirical_occupancy(trace, cfg, seed=0, warmup=None, refresh_on_internal=True):
    """
    Time-weighted presence fraction per item (averaged over caches) after the fill transient,
    measured with a CRS that always knows the truth.
    """
    trace = _check_trace(trace)
    if len(trace) == 0 or trace.duration <= 0:
        raise TraceError("occupancy needs a trace spanning a positive duration")
    policies = [UpdatePolicy.announce_all()] * (trace.n_items + 1)
    state = _replay(trace, cfg, policies, seed, _warmup_for(cfg, warmup), refresh_on_internal)
    if state.clock - state.accrue_from <= 0:
        raise TraceError("no time elapses after the warm-up requests")
    return np.array(state.time_present[1:], dtype=float) / (cfg.n_caches * (state.clock - state.accrue_from))


def _policies_for(source, trace, cfg, budget, seed, warmup, refresh_on_internal):
    if isinstance(source, UpdatePolicy):
        return [source] * (trace.n_items + 1)
    if not isinstance(source, str):
        policies = list(source)
        if len(policies) != trace.n_items:
            raise DomainError(f"{len(policies)} policies given for {trace.n_items} items")
        return [policies[0]] + policies

    if source == 'empirical':
        rho = empirical_occupancy(trace, cfg, seed, warmup, refresh_on_internal)
    elif source == 'analytic':
        if cfg.n_items != trace.n_items:
            raise DomainError(f"analytic occupancy needs n_items = {trace.n_items} (config has {cfg.n_items})")
        rho = item_profiles(cfg).occupancy
    else:
        raise DomainError(f"policy source must be one of {POLICY_SOURCES} (got {source!r})")

    rho = np.clip(rho, 0.0, 1.0)
    policies = [policy_for_occupancy(float(r), budget) for r in rho]
    return [policies[0]] + policies


def run_simulation(cfg, budget, trace, policy_source='empirical', seed=0, rates=None,
                   warmup=None, refresh_on_internal=True):
    """
    Two-phase replay: estimate occupancy (or take Che's), derive per-item policies, then
    measure distortion, update traffic and service mix. Warm-up defaults to L_c * N_c requests.
    """
    trace = _check_trace(trace)
    rates = rates or CostRates()
    if len(trace) == 0:
        return empty_report(cfg, budget, seed, trace.n_items)
    if trace.duration <= 0:
        raise TraceError("simulation needs a trace spanning a positive duration")

    warmup = _warmup_for(cfg, warmup)
    policies = _policies_for(policy_source, trace, cfg, budget, seed, warmup, refresh_on_internal)
    logger.debug(f"[SIM] seed={seed}: measured pass over {len(trace)} requests")
    state = _replay(trace, cfg, policies, seed + 1, warmup, refresh_on_internal)
    if state.clock - state.accrue_from <= 0:
        raise TraceError("no time elapses after the warm-up requests")

    report = _report(state, cfg, budget, rates, seed)
    misdirected = int(report.misdirected.sum())
    if misdirected:
        logger.warning(f"[SIM] seed={seed}: {misdirected} request(s) misdirected by a stale CRS view")
    return report


def average_reports(reports):
    """Per-item mean over rounds; rounds are reduced in the order given"""
    first = reports[0]
    names = ('d1', 'd2', 'rho_hat', 'changes', 'updates', 'local', 'internal', 'external', 'misdirected')
    means = {name: np.mean([getattr(r, name) for r in reports], axis=0) for name in names}
    return SimReport(
        duration=float(np.mean([r.duration for r in reports])),
        realized_cost=float(np.mean([r.realized_cost for r in reports])),
        seed=first.seed,
        rounds=len(reports),
        config=first.config,
        budget=first.budget,
        **means,
    )


def run_rounds(cfg, budget, trace, rounds=1, seed=0, threads=None, **kwargs):
    """Independent seeded rounds (seed, seed + 2, ...) averaged per item"""
    if rounds < 1:
        raise DomainError(f"rounds must be >= 1 (got {rounds})")
    trace = _check_trace(trace)
    threads = threads or config.thread_cap()
    seeds = [seed + 2 * k for k in range(rounds)]

    def one(round_seed):
        report = run_simulation(cfg, budget, trace, seed=round_seed, **kwargs)
        logger.info(f"[SIM] round seed={round_seed} done: {report.updates_per_request:.4f} updates/request")
        return report

    with ThreadPoolExecutor(max_workers=min(threads, rounds)) as pool:
        reports = list(pool.map(one, seeds))
    return average_reports(reports)


def exact_lru_stationary(rates, capacity):
    """
    Exact per-item presence probability of one LRU cache under independent Poisson requests.
    Solves the generator of the chain over ordered full-cache states (MRU first).
    """
    rates = np.asarray(rates, dtype=float)
    n_items = rates.size
    if n_items > MAX_EXACT_ITEMS:
        raise DomainError(f"exact LRU oracle takes at most {MAX_EXACT_ITEMS} items (got {n_items})")
    if capacity < 1:
        raise DomainError(f"cache capacity must be >= 1 (got {capacity})")
    if not np.all(rates > 0):
        raise DomainError("every request rate must be > 0")
    if capacity >= n_items:
        return np.ones(n_items)

    n_states = math.perm(n_items, capacity)
    if n_states > MAX_EXACT_STATES:
        raise DomainError(f"{n_states} LRU states exceed the limit of {MAX_EXACT_STATES}")

    states = list(itertools.permutations(range(n_items), capacity))
    index = {s: k for k, s in enumerate(states)}
    rows, cols, vals = [], [], []
    for k, s in enumerate(states):
        for j in range(n_items):
            if j == s[0]:
                continue
            if j in s:
                nxt = (j,) + tuple(x for x in s if x != j)
            else:
                nxt = (j,) + s[:-1]
            # transposed generator: row = destination
            rows += [index[nxt], k]
            cols += [k, k]
            vals += [rates[j], -rates[j]]

    generator_t = lil_matrix(csr_matrix((vals, (rows, cols)), shape=(n_states, n_states)))
    generator_t[n_states - 1, :] = np.ones(n_states)
    rhs = np.zeros(n_states)
    rhs[-1] = 1.0
    pi = spsolve(generator_t.tocsr(), rhs)

    rho = np.zeros(n_items)
    for k, s in enumerate(states):
        rho[list(s)] += pi[k]
    return rho
