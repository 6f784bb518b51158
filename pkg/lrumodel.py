"""
Analytical model of a fleet of homogeneous LRU caches

Zipf popularity, per-cache request rates, Che-approximation occupancy and the fleet-wide minimum
update rate that keeps the content resolution system within a distortion budget.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import bisect

from errors import DomainError
from ratecore import OnOffStats, min_update_rate

logger = logging.getLogger(__name__)

CHE_RTOL = 1e-10
COPIES_RULES = ('fixed', 'log2')


@dataclass(frozen=True)
class NetworkConfig:
    """
    N users, M items, N_c caches of L_c items each; every download lands in n_copies caches.
    item_size is B in bits (item_sizes overrides it per item).
    """
    n_users: int = 1000
    n_items: int = 1000
    n_caches: int = 1
    n_copies: int = 1
    cache_capacity: int = 100
    item_size: float = 1e5
    zipf_alpha: float = 0.7
    request_rate_per_user: float = 1.0
    item_sizes: tuple = field(default=None, compare=False)

    def __post_init__(self):
        for name in ('n_users', 'n_items', 'n_caches', 'n_copies', 'cache_capacity'):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise DomainError(f"{name} must be an integer >= 1 (got {value})")
        if self.cache_capacity > self.n_items:
            raise DomainError(f"cache_capacity ({self.cache_capacity}) exceeds n_items ({self.n_items})")
        if self.n_copies > self.n_caches:
            raise DomainError(f"n_copies ({self.n_copies}) exceeds n_caches ({self.n_caches})")
        if not self.request_rate_per_user > 0:
            raise DomainError(f"request_rate_per_user must be > 0 (got {self.request_rate_per_user})")
        if self.zipf_alpha < 0:
            raise DomainError(f"zipf_alpha must be >= 0 (got {self.zipf_alpha})")
        if self.item_size < 0:
            raise DomainError(f"item_size must be >= 0 (got {self.item_size})")
        if self.item_sizes is not None and len(self.item_sizes) != self.n_items:
            raise DomainError(f"item_sizes has {len(self.item_sizes)} entries for {self.n_items} items")

    def replace(self, **changes):
        return replace(self, **changes)

    def sizes(self):
        if self.item_sizes is not None:
            return np.asarray(self.item_sizes, dtype=float)
        return np.full(self.n_items, float(self.item_size))


@dataclass(frozen=True)
class ItemProfile:
    popularity: float
    request_rate_per_user: float
    per_cache_rate: float
    occupancy: float


@dataclass(frozen=True)
class FleetProfile:
    """Vectorised ItemProfile for a whole catalogue; index 0 is the most popular item"""
    popularity: np.ndarray
    request_rate: np.ndarray
    per_cache_rate: np.ndarray
    occupancy: np.ndarray
    characteristic_time: float

    def __len__(self):
        return self.popularity.size

    def item(self, i):
        """1-based item rank"""
        k = i - 1
        return ItemProfile(
            popularity=float(self.popularity[k]),
            request_rate_per_user=float(self.request_rate[k]),
            per_cache_rate=float(self.per_cache_rate[k]),
            occupancy=float(self.occupancy[k]),
        )


def copies_for(n_caches, rule='fixed', fixed=1):
    """N_bar_c for a fleet size; 'log2' rounds log2(N_c) to the nearest integer, at least 1"""
    if rule == 'fixed':
        return min(fixed, n_caches)
    if rule == 'log2':
        return max(1, min(n_caches, int(round(math.log2(n_caches)))))
    raise DomainError(f"unknown copies rule {rule!r} (expected one of {COPIES_RULES})")


# ============================================================================
# POPULARITY AND OCCUPANCY
# ============================================================================

def zipf_popularities(n_items, alpha):
    if n_items < 1:
        raise DomainError(f"catalogue needs at least one item (got {n_items})")
    if alpha < 0:
        raise DomainError(f"zipf alpha must be >= 0 (got {alpha})")
    weights = np.arange(1, n_items + 1, dtype=float) ** (-alpha)
    return weights / weights.sum()


def per_cache_rates(config, popularity=None):
    """lambda_i = gamma_i * N * N_bar_c / N_c (independent caches, worst case)"""
    if popularity is None:
        popularity = zipf_popularities(config.n_items, config.zipf_alpha)
    gamma_i = config.request_rate_per_user * popularity
    return gamma_i * config.n_users * config.n_copies / config.n_caches


def _filled(rates, t):
    return float(-np.expm1(-rates * t).sum())


def che_characteristic_time(rates, capacity):
    """
    Root t_C of sum(1 - exp(-lambda_i t)) = L_c, by bisection to relative tolerance 1e-10.
    Returns math.inf when the cache holds the whole catalogue.
    """
    rates = np.asarray(rates, dtype=float)
    if capacity >= rates.size:
        return math.inf
    if capacity <= 0:
        raise DomainError(f"cache capacity must be >= 1 (got {capacity})")
    if not np.all(rates > 0):
        raise DomainError("every request rate must be > 0 for the Che fixed point")

    def excess(t):
        return _filled(rates, t) - capacity

    # sum(lambda) * t >= sum(1 - e^-lambda t), so capacity / sum(lambda) undershoots the root
    low = capacity / rates.sum()
    high = 2 * low
    while excess(high) < 0:
        low, high = high, 2 * high
    return bisect(excess, low, high, xtol=np.finfo(float).tiny, rtol=CHE_RTOL, maxiter=400)


def occupancy(rates, capacity):
    """rho_i = 1 - exp(-lambda_i t_C)"""
    rates = np.asarray(rates, dtype=float)
    t_c = che_characteristic_time(rates, capacity)
    if math.isinf(t_c):
        return np.ones_like(rates)
    return -np.expm1(-rates * t_c)


def item_profiles(config):
    popularity = zipf_popularities(config.n_items, config.zipf_alpha)
    lam = per_cache_rates(config, popularity)
    t_c = che_characteristic_time(lam, config.cache_capacity)
    rho = np.ones_like(lam) if math.isinf(t_c) else -np.expm1(-lam * t_c)
    return FleetProfile(
        popularity=popularity,
        request_rate=config.request_rate_per_user * popularity,
        per_cache_rate=lam,
        occupancy=rho,
        characteristic_time=t_c,
    )


# ============================================================================
# UPDATE RATES
# ============================================================================

def item_update_rates(lam, rho, n_caches, budget):
    """
    Vectorised fleet update rate per item:
    R_i = N_c lambda_i (1-rho_i) {2 - eps1(1-rho)/(rho(1-rho-eps2)) - eps2 rho/((1-rho)(rho-eps1))}
    inside eps1 < rho < 1-eps2 and eps1(1-rho) + eps2 rho < rho(1-rho); zero elsewhere.
    """
    lam = np.asarray(lam, dtype=float)
    rho = np.asarray(rho, dtype=float)
    eps1, eps2 = budget.eps1, budget.eps2
    miss = 1.0 - rho

    active = (rho > eps1) & (miss > eps2) & (eps1 * miss + eps2 * rho < rho * miss)
    with np.errstate(divide='ignore', invalid='ignore'):
        u1 = 1.0 - eps1 * miss / (rho * (miss - eps2))
        u2 = 1.0 - eps2 * rho / (miss * (rho - eps1))
        rate = n_caches * lam * miss * (u1 + u2)
    return np.where(active, rate, 0.0)


def item_update_rate(lam, rho, n_caches, budget):
    return float(item_update_rates(np.array([lam]), np.array([rho]), n_caches, budget)[0])


def item_update_rate_via_onoff(lam, rho, n_caches, budget):
    """Same quantity through ratecore, with theta = 1/lambda and tau = theta rho / (1 - rho)"""
    if rho <= 0 or rho >= 1:
        return 0.0
    return n_caches * min_update_rate(OnOffStats.from_occupancy(rho, lam), budget)


def fleet_update_rate(config, budget, profile=None):
    """(R_total, R_i) for the configured fleet; homogeneous caches"""
    profile = profile or item_profiles(config)
    rates = item_update_rates(profile.per_cache_rate, profile.occupancy, config.n_caches, budget)
    return float(rates.sum()), rates


def normalized_rate(total_rate, config, profile):
    """Updates per generated request per cache: R_total / (N_c * sum lambda_i)"""
    return total_rate / (config.n_caches * profile.per_cache_rate.sum())


def updates_per_change(total_rate, config, profile):
    """R_total / (N_c * sum lambda_i (1 - rho_i)); equals 2 with a zero budget"""
    change_rate = config.n_caches * float((profile.per_cache_rate * (1 - profile.occupancy)).sum())
    if change_rate == 0:
        return 0.0
    return total_rate / change_rate
