"""
Retrieval cost of a cache fleet: update traffic to the resolution system plus downloads

Packet length, update cost band, internal-service probability bounds, download cost bounds,
total cost, and the popularity threshold i* that minimises total cost.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

import config
from errors import DomainError
from lrumodel import (che_characteristic_time, item_profiles, item_update_rates,
                      per_cache_rates, zipf_popularities)

logger = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 100_000
GRID_RATIO = 1.05
P_BOUNDS = ('high', 'low')


@dataclass(frozen=True)
class CostRates:
    """Per-bit costs: cache->CRS update, intra-domain download, external download"""
    xi_up: float = 1.0
    xi_int: float = 1.0
    xi_ext: float = 5.0

    def __post_init__(self):
        if self.xi_up < 0 or self.xi_int < 0:
            raise DomainError(f"per-bit costs must be >= 0 (got xi_up={self.xi_up}, xi_int={self.xi_int})")
        if self.xi_int > self.xi_ext:
            raise DomainError(f"xi_int ({self.xi_int}) must not exceed xi_ext ({self.xi_ext})")


@dataclass(frozen=True)
class ItemCosts:
    update_rate: np.ndarray
    packet_length: np.ndarray
    update_share: np.ndarray
    p_low: np.ndarray
    p_high: np.ndarray


@dataclass(frozen=True)
class CostReport:
    phi_up_min: float
    phi_up_max: float
    phi_dl_low: float
    phi_dl_high: float
    per_item: ItemCosts

    @property
    def phi_low(self):
        return self.phi_dl_low + self.phi_up_min

    @property
    def phi_high(self):
        return self.phi_dl_high + self.phi_up_max


@dataclass(frozen=True)
class ThresholdPoint:
    i_star: int
    phi: float
    phi1: float
    phi2: float
    phi3: float


@dataclass(frozen=True)
class ThresholdPlan:
    i_star: int
    phi_at: float
    phi_no_cache: float
    benefit: float
    overhead: float
    phi_full: float
    low_bound_i_star: int
    curve: list = field(default_factory=list, repr=False)

    @property
    def reduction(self):
        """Relative saving at i* versus caching the whole catalogue"""
        if self.phi_full == 0:
            return 0.0
        return 1 - self.phi_at / self.phi_full


# ============================================================================
# PACKETS AND UPDATE COST
# ============================================================================

def update_shares(lam, rho):
    """beta_i = lambda_i (1-rho_i) / sum_k lambda_k (1-rho_k)"""
    changes = np.asarray(lam, dtype=float) * (1 - np.asarray(rho, dtype=float))
    total = changes.sum()
    if total <= 0:
        return np.zeros_like(changes)
    return changes / total


def packet_length(n_caches, beta):
    """
    l_i = log2 N_c - log2 beta_i + 1 bits (real-valued lower bound).
    None for an item that never changes (beta = 0).
    """
    if n_caches < 1:
        raise DomainError(f"n_caches must be >= 1 (got {n_caches})")
    if not 0 <= beta <= 1:
        raise DomainError(f"beta must lie in [0, 1] (got {beta})")
    if beta == 0:
        return None
    return math.log2(n_caches) - math.log2(beta) + 1


def packet_lengths(n_caches, betas):
    """Vectorised packet_length; NaN marks items that never change"""
    betas = np.asarray(betas, dtype=float)
    with np.errstate(divide='ignore'):
        lengths = math.log2(n_caches) - np.log2(betas) + 1
    return np.where(betas > 0, lengths, np.nan)


def update_cost(update_rates, lengths, rates):
    """sum R_i l_i xi_up, skipping items with no packet"""
    terms = np.asarray(update_rates, dtype=float) * np.nan_to_num(np.asarray(lengths, dtype=float))
    return float(terms.sum() * rates.xi_up)


def _update_terms(cfg, budget, profile):
    r = item_update_rates(profile.per_cache_rate, profile.occupancy, cfg.n_caches, budget)
    beta = update_shares(profile.per_cache_rate, profile.occupancy)
    return r, packet_lengths(cfg.n_caches, beta), beta


def update_cost_band(cfg, budget, rates):
    """
    (min, max) update cost. max: downloads stored in n_copies independent caches.
    min: fully dependent placements, one reporting copy (n_copies = 1).
    """
    r_max, l_max, _ = _update_terms(cfg, budget, item_profiles(cfg))
    phi_max = update_cost(r_max, l_max, rates)
    if cfg.n_copies == 1:
        return phi_max, phi_max
    single = cfg.replace(n_copies=1)
    r_min, l_min, _ = _update_terms(single, budget, item_profiles(single))
    return update_cost(r_min, l_min, rates), phi_max


# ============================================================================
# DOWNLOAD COST
# ============================================================================

def internal_probability_bounds(rho, n_caches, eps1):
    """
    Band on P_i, the chance some internal cache serves the request:
    [1 - (1 - rho + eps1)^N_c]^+ <= P_i <= 1 - (1 - rho)^N_c
    """
    rho = np.asarray(rho, dtype=float)
    p_high = 1 - (1 - rho) ** n_caches
    p_low = np.maximum(0.0, 1 - np.minimum(1.0, 1 - rho + eps1) ** n_caches)
    if p_high.ndim == 0:
        return float(p_low), float(p_high)
    return p_low, p_high


def _download_cost(cfg, profile, rates, p):
    sizes = cfg.sizes()
    p = np.maximum(p, profile.occupancy)
    per_item = cfg.n_users * profile.request_rate * sizes * (
        (p - profile.occupancy) * rates.xi_int + (1 - p) * rates.xi_ext)
    return float(per_item.sum())


def download_cost(cfg, profile, rates, eps1):
    """(low, high): low cost at the upper P_i bound, high cost at the lower bound (clamped to rho)"""
    p_low, p_high = internal_probability_bounds(profile.occupancy, cfg.n_caches, eps1)
    return (_download_cost(cfg, profile, rates, p_high),
            _download_cost(cfg, profile, rates, p_low))


def total_cost(cfg, budget, rates):
    """Update band plus download bounds for the whole catalogue"""
    profile = item_profiles(cfg)
    r, lengths, beta = _update_terms(cfg, budget, profile)
    phi_up_min, phi_up_max = update_cost_band(cfg, budget, rates)
    phi_dl_low, phi_dl_high = download_cost(cfg, profile, rates, budget.eps1)
    p_low, p_high = internal_probability_bounds(profile.occupancy, cfg.n_caches, budget.eps1)
    return CostReport(
        phi_up_min=phi_up_min,
        phi_up_max=phi_up_max,
        phi_dl_low=phi_dl_low,
        phi_dl_high=phi_dl_high,
        per_item=ItemCosts(update_rate=r, packet_length=lengths, update_share=beta,
                           p_low=np.maximum(p_low, profile.occupancy), p_high=p_high),
    )


# ============================================================================
# CACHING THRESHOLD
# ============================================================================

class _ThresholdModel:
    """Shared per-config state for evaluating many thresholds"""

    def __init__(self, cfg, budget, rates, p_bound='high'):
        if p_bound not in P_BOUNDS:
            raise DomainError(f"p_bound must be one of {P_BOUNDS} (got {p_bound!r})")
        self.cfg = cfg
        self.budget = budget
        self.rates = rates
        self.p_bound = p_bound
        sizes = cfg.sizes()
        if np.any(sizes != sizes[0]):
            raise DomainError("threshold costs need a uniform item size; item_sizes varies per item")
        self.popularity = zipf_popularities(cfg.n_items, cfg.zipf_alpha)
        self.lam = per_cache_rates(cfg, self.popularity)
        self.scale = float(sizes[0]) * cfg.n_users * cfg.request_rate_per_user
        self.phi1 = self.scale * rates.xi_ext

    def point(self, i_star):
        if not 0 <= i_star <= self.cfg.n_items:
            raise DomainError(f"i_star must lie in [0, {self.cfg.n_items}] (got {i_star})")
        if i_star == 0:
            return ThresholdPoint(0, self.phi1, self.phi1, 0.0, 0.0)

        lam = self.lam[:i_star]
        t_c = che_characteristic_time(lam, self.cfg.cache_capacity)
        rho = np.ones_like(lam) if math.isinf(t_c) else -np.expm1(-lam * t_c)
        p_low, p_high = internal_probability_bounds(rho, self.cfg.n_caches, self.budget.eps1)
        p = p_high if self.p_bound == 'high' else np.maximum(p_low, rho)

        alpha = self.popularity[:i_star]
        rates = self.rates
        phi2 = (self.scale * (rates.xi_ext - rates.xi_int) * float((alpha * p).sum())
                + self.scale * rates.xi_int * float((alpha * rho).sum()))

        r = item_update_rates(lam, rho, self.cfg.n_caches, self.budget)
        lengths = packet_lengths(self.cfg.n_caches, update_shares(lam, rho))
        phi3 = update_cost(r, lengths, rates)
        return ThresholdPoint(i_star, self.phi1 - phi2 + phi3, self.phi1, phi2, phi3)


def threshold_cost(cfg, budget, rates, i_star, p_bound='high'):
    """
    Cost when only items 1..i* may be cached: phi = phi1 - phi2 + phi3.
    Occupancy is recomputed over the restricted catalogue; uniform B and per-bit costs.
    """
    return _ThresholdModel(cfg, budget, rates, p_bound).point(i_star)


def candidate_thresholds(n_items):
    """Every i* up to EXHAUSTIVE_LIMIT items, a 1.05-geometric grid beyond"""
    if n_items <= EXHAUSTIVE_LIMIT:
        return list(range(n_items + 1))
    grid = {0, n_items}
    value = 1.0
    while value < n_items:
        grid.add(int(round(value)))
        value *= GRID_RATIO
    return sorted(grid)


def _scan(model, candidates, threads):
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(model.point, candidates))


def _refine(model, points, threads):
    """Exhaustive pass over +-2 grid steps around the grid minimum"""
    best = min(range(len(points)), key=lambda k: (points[k].phi, points[k].i_star))
    lo = points[max(0, best - 2)].i_star
    hi = points[min(len(points) - 1, best + 2)].i_star
    seen = {pt.i_star for pt in points}
    extra = [i for i in range(lo, hi + 1) if i not in seen]
    logger.info(f"[OPT] refining {len(extra)} thresholds in [{lo}, {hi}]")
    return sorted(points + _scan(model, extra, threads), key=lambda pt: pt.i_star)


def _best(points):
    # smallest i* wins ties regardless of completion order
    return min(points, key=lambda pt: (pt.phi, pt.i_star))


def _optimize(model, threads):
    candidates = candidate_thresholds(model.cfg.n_items)
    points = _scan(model, candidates, threads)
    if model.cfg.n_items > EXHAUSTIVE_LIMIT:
        points = _refine(model, points, threads)
    return points


def optimize_threshold(cfg, budget, rates, threads=None):
    """Scan i* in [0, M] and keep the cheapest; also reports the i* under the lower P_i bound"""
    threads = threads or config.thread_cap()
    logger.info(f"[OPT] scanning thresholds for M={cfg.n_items} with {threads} thread(s)")

    points = _optimize(_ThresholdModel(cfg, budget, rates, 'high'), threads)
    low_points = _optimize(_ThresholdModel(cfg, budget, rates, 'low'), threads)

    best = _best(points)
    full = points[-1]
    plan = ThresholdPlan(
        i_star=best.i_star,
        phi_at=best.phi,
        phi_no_cache=best.phi1,
        benefit=best.phi2,
        overhead=best.phi3,
        phi_full=full.phi,
        low_bound_i_star=_best(low_points).i_star,
        curve=points,
    )
    logger.info(f"[OPT] i*={plan.i_star} phi={plan.phi_at:.6g} "
                f"({plan.reduction:.1%} below caching everything)")
    return plan
