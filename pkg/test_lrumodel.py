#!/usr/bin/env python3
"""
Tests for Zipf popularity, Che occupancy and fleet update rates
Run with: pytest test_lrumodel.py
"""

import math

import numpy as np
import pytest

from errors import DomainError
from lrumodel import (NetworkConfig, che_characteristic_time, copies_for, fleet_update_rate,
                      item_profiles, item_update_rate, item_update_rate_via_onoff, item_update_rates,
                      normalized_rate, occupancy, per_cache_rates, updates_per_change,
                      zipf_popularities)
from ratecore import DistortionBudget
from simkernel import exact_lru_stationary

LC_AXIS = [1, 2, 5, 10, 20, 50, 100, 200, 500]


def test_zipf_four_items():
    alpha = zipf_popularities(4, 0.7)
    assert alpha.sum() == pytest.approx(1.0)
    assert alpha[0] == pytest.approx(0.40684, abs=1e-5)
    assert np.all(np.diff(alpha) < 0)


def test_zipf_flat():
    assert np.allclose(zipf_popularities(10, 0.0), 0.1)


def test_zipf_rejects_empty_catalogue():
    with pytest.raises(DomainError):
        zipf_popularities(0, 0.7)


def test_network_config_validation():
    with pytest.raises(DomainError, match='cache_capacity'):
        NetworkConfig(n_items=10, cache_capacity=11)
    with pytest.raises(DomainError, match='n_copies'):
        NetworkConfig(n_caches=2, n_copies=3)


def test_per_cache_rates_scale_with_copies():
    cfg = NetworkConfig(n_users=100, n_items=50, n_caches=10, n_copies=2, cache_capacity=5)
    lam = per_cache_rates(cfg)
    assert lam.sum() == pytest.approx(100 * 2 / 10)


@pytest.mark.parametrize('n_caches,expected', [(1, 1), (2, 1), (10, 3), (100, 7)])
def test_copies_log2_rule(n_caches, expected):
    assert copies_for(n_caches, 'log2') == expected


def test_copies_unknown_rule():
    with pytest.raises(DomainError):
        copies_for(10, 'sqrt')


# ============================================================================
# CHE APPROXIMATION
# ============================================================================

def test_che_fills_the_cache():
    lam = per_cache_rates(NetworkConfig(n_items=1000, cache_capacity=100))
    rho = occupancy(lam, 100)
    assert rho.sum() == pytest.approx(100, rel=1e-8)
    assert np.all(np.diff(rho) <= 0)


def test_che_whole_catalogue_fits():
    assert math.isinf(che_characteristic_time(np.ones(5), 5))
    assert np.all(occupancy(np.ones(5), 5) == 1.0)


def test_che_flat_popularity_is_exact():
    rho = occupancy(np.full(6, 2.0), 2)
    assert np.allclose(rho, 2 / 6)


@pytest.mark.parametrize('n_items', [3, 4, 5, 6])
@pytest.mark.parametrize('capacity', [1, 2, 3])
@pytest.mark.parametrize('alpha', [0.0, 0.7, 1.2])
def test_che_close_to_exact_lru(n_items, capacity, alpha):
    if capacity >= n_items:
        pytest.skip('cache holds the whole catalogue')
    lam = zipf_popularities(n_items, alpha)
    exact = exact_lru_stationary(lam, capacity)
    assert np.max(np.abs(occupancy(lam, capacity) - exact)) <= 0.08


def test_che_three_items_two_slots():
    lam = zipf_popularities(3, 0.7)
    exact = exact_lru_stationary(lam, 2)
    assert exact.sum() == pytest.approx(2.0)
    assert np.max(np.abs(occupancy(lam, 2) - exact)) <= 0.05


# ============================================================================
# UPDATE RATES
# ============================================================================

def test_rate_bridge_random_draws():
    rng = np.random.default_rng(2024)
    for _ in range(10_000):
        lam = rng.uniform(0.01, 100.0)
        rho = rng.uniform(0.05, 0.95)
        n_caches = int(rng.integers(1, 50))
        budget = DistortionBudget(*rng.uniform(1e-4, 1e-2, size=2))
        direct = item_update_rate(lam, rho, n_caches, budget)
        bridged = item_update_rate_via_onoff(lam, rho, n_caches, budget)
        assert direct == pytest.approx(bridged, rel=1e-10)


def test_rate_zero_outside_updates_region():
    budget = DistortionBudget(0.1, 0.1)
    rates = item_update_rates([1.0, 1.0, 1.0], [0.05, 0.5, 0.95], 1, budget)
    assert rates[0] == 0.0
    assert rates[1] > 0.0
    assert rates[2] == 0.0


def test_zero_budget_two_updates_per_change():
    cfg = NetworkConfig(n_items=1000, cache_capacity=100, zipf_alpha=0.3)
    profile = item_profiles(cfg)
    total, _ = fleet_update_rate(cfg, DistortionBudget(), profile)
    assert updates_per_change(total, cfg, profile) == pytest.approx(2.0)


def _normalized_curve(eps):
    curve = []
    for capacity in LC_AXIS:
        cfg = NetworkConfig(n_items=1000, cache_capacity=capacity, zipf_alpha=0.3)
        profile = item_profiles(cfg)
        total, _ = fleet_update_rate(cfg, DistortionBudget(eps, eps), profile)
        curve.append(normalized_rate(total, cfg, profile))
    return np.array(curve)


def test_normalized_rate_has_interior_maximum():
    for eps in (1e-2, 1e-4):
        curve = _normalized_curve(eps)
        peak = int(np.argmax(curve))
        assert 0 < peak < len(LC_AXIS) - 1


def test_looser_budget_never_costs_more_updates():
    assert np.all(_normalized_curve(1e-2) <= _normalized_curve(1e-4) + 1e-12)


def test_item_profile_view():
    profile = item_profiles(NetworkConfig(n_items=20, cache_capacity=5))
    first = profile.item(1)
    assert first.popularity == pytest.approx(profile.popularity[0])
    assert first.occupancy == profile.occupancy.max()
    assert len(profile) == 20
