"""
Minimum update rates for one binary on/off state under a distortion budget

A forwarding-plane state S flips between 'down' (0) and 'up' (1). The control plane keeps a
perceived copy S_hat that only changes when a change is announced. D1 = Pr(S=1, S_hat=0) and
D2 = Pr(S=0, S_hat=1) must stay below (eps1, eps2); this module gives the cheapest announcement
policy that achieves that, and a Monte-Carlo oracle to check it.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from errors import ContractError, DomainError

logger = logging.getLogger(__name__)

CLAMP_SLACK = 1e-12
MIN_ORACLE_CYCLES = 100_000


class Region(str, Enum):
    ALWAYS_DOWN = 'AlwaysDown'
    ALWAYS_UP = 'AlwaysUp'
    RANDOM_STATIC = 'RandomStatic'
    UPDATES_REQUIRED = 'UpdatesRequired'


def _check_finite(name, value):
    if not isinstance(value, (int, float, np.floating, np.integer)) or not math.isfinite(value):
        raise DomainError(f"{name} must be a finite number (got {value!r})")


@dataclass(frozen=True)
class OnOffStats:
    """Mean 'up' duration tau and mean 'down' duration theta, in seconds"""
    tau: float
    theta: float

    def __post_init__(self):
        _check_finite('tau', self.tau)
        _check_finite('theta', self.theta)
        if self.tau <= 0 or self.theta <= 0:
            raise DomainError(f"tau and theta must be > 0 (got tau={self.tau}, theta={self.theta})")

    @classmethod
    def from_occupancy(cls, rho, lam):
        """theta = 1/lambda, tau = theta * rho / (1 - rho)"""
        if not 0 < rho < 1:
            raise DomainError(f"occupancy must lie strictly inside (0, 1) (got {rho})")
        if lam <= 0:
            raise DomainError(f"change-generating rate must be > 0 (got {lam})")
        theta = 1.0 / lam
        return cls(tau=theta * rho / (1.0 - rho), theta=theta)

    @property
    def cycle(self):
        return self.tau + self.theta

    @property
    def p_up(self):
        return self.tau / self.cycle

    @property
    def p_down(self):
        return self.theta / self.cycle


@dataclass(frozen=True)
class DistortionBudget:
    """eps1 caps Pr(S=1, S_hat=0); eps2 caps Pr(S=0, S_hat=1)"""
    eps1: float = 0.0
    eps2: float = 0.0

    def __post_init__(self):
        _check_finite('eps1', self.eps1)
        _check_finite('eps2', self.eps2)
        if self.eps1 < 0 or self.eps2 < 0:
            raise DomainError(f"eps1 and eps2 must be >= 0 (got {self.eps1}, {self.eps2})")
        if self.eps1 + self.eps2 > 1:
            raise DomainError(f"eps1 + eps2 must be <= 1 (got {self.eps1} + {self.eps2})")


@dataclass(frozen=True)
class UpdatePolicy:
    """
    u1/u2: probability of announcing a 0->1 / 1->0 change
    static_assignment: Pr(S_hat=1) used instead of updates (0 or 1 for a constant view)
    """
    u1: float
    u2: float
    static_assignment: float = None

    def __post_init__(self):
        for name, value in (('u1', self.u1), ('u2', self.u2)):
            _check_finite(name, value)
            if not 0 <= value <= 1:
                raise DomainError(f"{name} must lie in [0, 1] (got {value})")
        silent = self.u1 == 0 and self.u2 == 0
        if silent and self.static_assignment is None:
            raise DomainError("a policy that never announces needs a static_assignment")
        if not silent and self.static_assignment is not None:
            raise DomainError("static_assignment only applies when u1 = u2 = 0")
        if self.static_assignment is not None and not 0 <= self.static_assignment <= 1:
            raise DomainError(f"static_assignment must lie in [0, 1] (got {self.static_assignment})")

    @property
    def is_static(self):
        return self.static_assignment is not None

    @classmethod
    def announce_all(cls):
        return cls(1.0, 1.0)

    @classmethod
    def constant(cls, value):
        return cls(0.0, 0.0, static_assignment=float(value))


# ============================================================================
# CLOSED FORMS
# ============================================================================

def _region_for_p(p, budget):
    eps1, eps2 = budget.eps1, budget.eps2
    if p <= eps1:
        return Region.ALWAYS_DOWN
    if 1 - p <= eps2:
        return Region.ALWAYS_UP
    # 1 - eps1/p <= eps2/(1-p), multiplied through by p(1-p) > 0
    if eps1 * (1 - p) + eps2 * p >= p * (1 - p):
        return Region.RANDOM_STATIC
    return Region.UPDATES_REQUIRED


def classify_region(stats, budget):
    """Which of the three no-update cases applies, or UpdatesRequired. Equality counts as no-update."""
    return _region_for_p(stats.p_up, budget)


def _clamp_fraction(name, value):
    if value < -CLAMP_SLACK or value > 1 + CLAMP_SLACK:
        raise ContractError(f"{name} = {value!r} is outside [0, 1]; region classification is inconsistent")
    return min(1.0, max(0.0, value))


def update_fractions(stats, budget):
    """Smallest per-change announcement probabilities meeting the budget with equality"""
    region = classify_region(stats, budget)
    if region is not Region.UPDATES_REQUIRED:
        raise ContractError(f"update_fractions needs the UpdatesRequired region (got {region.value})")

    tau, theta = stats.tau, stats.theta
    eps1, eps2 = budget.eps1, budget.eps2
    u1 = 1 - eps1 * (theta / tau) / (theta / (tau + theta) - eps2)
    u2 = 1 - eps2 * (tau / theta) / (tau / (tau + theta) - eps1)
    return UpdatePolicy(_clamp_fraction('u1', u1), _clamp_fraction('u2', u2))


def min_update_rate(stats, budget):
    """Updates per second: (u1 + u2) / (tau + theta) inside UpdatesRequired, else 0"""
    if classify_region(stats, budget) is not Region.UPDATES_REQUIRED:
        return 0.0
    policy = update_fractions(stats, budget)
    return (policy.u1 + policy.u2) / stats.cycle


def _static_for_p(p, region, budget):
    if region is Region.ALWAYS_DOWN:
        return UpdatePolicy.constant(0.0)
    if region is Region.ALWAYS_UP:
        return UpdatePolicy.constant(1.0)
    if region is Region.RANDOM_STATIC:
        low = 1 - budget.eps1 / p
        high = budget.eps2 / (1 - p)
        rho0 = min(1.0, max(0.0, (low + high) / 2))
        return UpdatePolicy(0.0, 0.0, static_assignment=rho0)
    raise ContractError("static_policy cannot satisfy the budget in the UpdatesRequired region")


def static_policy(stats, budget):
    """Announcement-free view: constant 0, constant 1, or Bernoulli(rho0) at the interval midpoint"""
    return _static_for_p(stats.p_up, classify_region(stats, budget), budget)


def policy_for(stats, budget):
    if classify_region(stats, budget) is Region.UPDATES_REQUIRED:
        return update_fractions(stats, budget)
    return static_policy(stats, budget)


def policy_for_occupancy(rho, budget):
    """
    Policy from a presence probability alone; u1/u2 only depend on tau/theta through p_up
    """
    if not 0 <= rho <= 1:
        raise DomainError(f"occupancy must lie in [0, 1] (got {rho})")
    if rho == 0:
        return UpdatePolicy.constant(0.0)
    if rho == 1:
        return UpdatePolicy.constant(1.0)
    return policy_for(OnOffStats(tau=rho / (1 - rho), theta=1.0), budget)


def expected_distortion(stats, policy):
    """
    Stationary (D1, D2) for any policy
    With announcement the view becomes correct; without, correctness toggles. Solving the
    two-state chain across alternating changes gives Pr(correct while down) = u2 / (1 - (1-u1)(1-u2)).
    """
    p = stats.p_up
    if policy.is_static:
        rho0 = policy.static_assignment
        return p * (1 - rho0), (1 - p) * rho0

    denom = 1 - (1 - policy.u1) * (1 - policy.u2)
    correct_down = policy.u2 / denom
    correct_up = policy.u1 / denom
    return p * (1 - correct_up), (1 - p) * (1 - correct_down)


# ============================================================================
# MONTE-CARLO ORACLE
# ============================================================================

@dataclass(frozen=True)
class OracleResult:
    d1: float
    d2: float
    changes: int
    updates: int
    expected_cycles: float
    short_horizon: bool

    def __iter__(self):
        return iter((self.d1, self.d2))


def monte_carlo_distortion_oracle(stats, policy, horizon, seed=0):
    """
    Simulate an alternating renewal process (exponential durations, means tau and theta) for
    `horizon` seconds and measure time-averaged D1, D2 under `policy`.

    Period k (k even: down, k odd: up) ends with change k. The view is correct at t = 0.
    After an announced change the view is correct; an unannounced change toggles correctness,
    so only a change hitting a correct view creates fresh distortion.
    """
    if horizon <= 0:
        raise DomainError(f"horizon must be > 0 (got {horizon})")

    rng = np.random.default_rng(seed)
    expected_cycles = horizon / stats.cycle
    short = expected_cycles < MIN_ORACLE_CYCLES
    if short:
        logger.warning(f"[ORACLE] horizon covers only {expected_cycles:.0f} cycles (< {MIN_ORACLE_CYCLES})")

    # generous draw, then trim to the horizon
    n_cycles = int(math.ceil(expected_cycles + 6 * math.sqrt(expected_cycles) + 10))
    n_periods = 2 * n_cycles
    means = np.where(np.arange(n_periods) % 2 == 0, stats.theta, stats.tau)
    durations = rng.exponential(means)
    ends = np.cumsum(durations)
    while ends[-1] < horizon:
        extra = rng.exponential(np.resize(np.array([stats.theta, stats.tau]), n_periods))
        durations = np.concatenate([durations, extra])
        ends = np.cumsum(durations)
        n_periods = durations.size

    keep = int(np.searchsorted(ends, horizon)) + 1
    durations = durations[:keep].copy()
    durations[-1] -= ends[keep - 1] - horizon
    is_up = (np.arange(keep) % 2) == 1

    if policy.is_static:
        view_up = rng.random(keep) < policy.static_assignment
        wrong = np.where(is_up, ~view_up, view_up)
        changes = keep - 1
        updates = 0
    else:
        # change k closes period k and opens period k + 1
        n_changes = keep - 1
        change_is_type1 = (np.arange(n_changes) % 2) == 0
        probs = np.where(change_is_type1, policy.u1, policy.u2)
        announced = rng.random(n_changes) < probs
        # virtual announcement at index -1 makes period 0 correct
        idx = np.arange(n_changes)
        last = np.maximum.accumulate(np.where(announced, idx, -1))
        correct_after = ((idx - last) % 2) == 0
        correct = np.concatenate([[True], correct_after])
        wrong = ~correct
        changes = n_changes
        updates = int(announced.sum())

    d1 = float(durations[is_up & wrong].sum() / horizon)
    d2 = float(durations[~is_up & wrong].sum() / horizon)
    return OracleResult(d1=d1, d2=d2, changes=changes, updates=updates,
                        expected_cycles=expected_cycles, short_horizon=short)
