#!/usr/bin/env python3
"""System blackout risk from sampled malignancies.

Each malignancy contributes R = p * s (joint outage probability times MW
shed). Risk of order k is the sum over the sampled unique malignancies,
scaled by |Omega_k| / |sampled_k|; total risk sums the orders up to k_max.
Units are MW of expected unserved load per exposure hour, following the
per-hour probability convention of the case.
"""

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import pandas as pd

from .cascade_sim import SimConfig
from .copula_risk import CorrelationModel, ProbabilityCache
from .errors import MissingSetSize, ValidationError
from .grid_model import GridCase, scale_load
from .ledger import CampaignLedger, Malignancy
from .rc_sampler import CampaignConfig, run_campaign
from .set_estimation import EstimationConfig, chao_estimate, rcp_estimate

logger = logging.getLogger(__name__)

K_MAX = 3
RISK_UNITS = "MW expected unserved per exposure hour"

GRID_COLUMNS = [
    "rho0", "L", "r2", "r3_low", "r3_high", "total_low", "total_high",
    "share3_low", "share3_high", "relative_to_uncorrelated",
]


@dataclass(frozen=True)
class RiskTerm:
    omega: Malignancy
    p_omega: float
    s_omega: float
    r_omega: float


@dataclass(frozen=True)
class SetSizePolicy:
    """Size of Omega_k used for scaling: exact, or a (lower, upper) range."""

    lower: float
    upper: float

    def __post_init__(self):
        if not 0 <= self.lower <= self.upper or not math.isfinite(self.upper):
            raise ValidationError(f"Invalid set size range [{self.lower}, {self.upper}]")

    @classmethod
    def exact(cls, size: float) -> "SetSizePolicy":
        return cls(size, size)

    @property
    def is_exact(self) -> bool:
        return self.lower == self.upper


@dataclass(frozen=True)
class OrderRisk:
    k: int
    sampled_count: int
    risk_sum: float
    set_size: SetSizePolicy

    @property
    def scaling_low(self) -> float:
        return self.set_size.lower / self.sampled_count

    @property
    def scaling_high(self) -> float:
        return self.set_size.upper / self.sampled_count

    @property
    def r_hat_low(self) -> float:
        return self.scaling_low * self.risk_sum

    @property
    def r_hat_high(self) -> float:
        return self.scaling_high * self.risk_sum

    @property
    def r_hat(self) -> float:
        return (self.r_hat_low + self.r_hat_high) / 2.0


@dataclass(frozen=True)
class RiskEstimate:
    per_k: dict[int, OrderRisk]
    rho0: float = 0.0
    L: float = 0.0

    @property
    def total_low(self) -> float:
        return sum(order.r_hat_low for order in self.per_k.values())

    @property
    def total_high(self) -> float:
        return sum(order.r_hat_high for order in self.per_k.values())

    @property
    def total(self) -> float:
        return sum(order.r_hat for order in self.per_k.values())

    @property
    def bounds(self) -> Optional[tuple[float, float]]:
        if all(order.set_size.is_exact for order in self.per_k.values()):
            return None
        return self.total_low, self.total_high

    def r_low(self, k: int) -> float:
        return self.per_k[k].r_hat_low if k in self.per_k else 0.0

    def r_high(self, k: int) -> float:
        return self.per_k[k].r_hat_high if k in self.per_k else 0.0

    def share(self, k: int) -> tuple[float, float]:
        """Fraction of total risk from order k, at the low and high set sizes."""
        low = self.r_low(k) / self.total_low if self.total_low > 0 else 0.0
        high = self.r_high(k) / self.total_high if self.total_high > 0 else 0.0
        return low, high


def risk_for_set(
    case: GridCase, omega: Malignancy, model: CorrelationModel, cache: Optional[ProbabilityCache] = None
) -> RiskTerm:
    cache = cache or ProbabilityCache(case)
    p = cache.probability(omega.branches, model)
    s = omega.blackout_size_mw
    return RiskTerm(omega=omega, p_omega=p, s_omega=s, r_omega=p * s)


def accumulation_is_flat(ledger: CampaignLedger, k: int = 2, window: float = 0.2) -> bool:
    """True when no new unique order-k set appeared in the last ``window`` of trials."""
    if not 0.0 < window < 1.0:
        raise ValidationError(f"window must lie in (0, 1), got {window}")
    seen: set[tuple[int, ...]] = set()
    last_new = -1
    for discovery in ledger.sorted_discoveries():
        if discovery.malignancy.k == k and discovery.malignancy.key not in seen:
            seen.add(discovery.malignancy.key)
            last_new = discovery.trial
    return bool(seen) and last_new < ledger.trials_run * (1.0 - window)


def exact_k2_policy(ledger: CampaignLedger, window: float = 0.2) -> SetSizePolicy:
    """Use the sampled N-2 set as complete, warning when its accumulation is still rising."""
    unique = len(ledger.occurrence_counts(2))
    if not accumulation_is_flat(ledger, 2, window):
        logger.warning(
            "N-2 accumulation is still rising in the last %.0f%% of trials; "
            "treating the %d sampled sets as complete understates N-2 risk",
            100 * window, unique,
        )
    return SetSizePolicy.exact(unique)


def estimate_risk(
    case: GridCase,
    ledger: CampaignLedger,
    model: CorrelationModel,
    set_sizes: Mapping[int, SetSizePolicy],
    cache: Optional[ProbabilityCache] = None,
    k_max: int = K_MAX,
) -> RiskEstimate:
    """Scaled risk per order plus the total.

    Only unique malignancies count, so duplicate discoveries do not change
    the result.

    Raises:
        MissingSetSize: if an order present in the ledger has no size policy
        ValidationError: if a set size is below the sampled count
    """
    cache = cache or ProbabilityCache(case)
    orders = [k for k in ledger.orders() if k <= k_max]
    missing = [k for k in orders if k not in set_sizes]
    if missing:
        raise MissingSetSize(f"No set size policy for orders {missing}")

    per_k = {}
    for k in orders:
        uniques = ledger.unique(k)
        policy = set_sizes[k]
        if policy.lower < len(uniques) * (1 - 1e-12):
            raise ValidationError(
                f"Set size {policy.lower} for k={k} is below the {len(uniques)} sets already sampled"
            )
        risk_sum = sum(risk_for_set(case, omega, model, cache).r_omega for omega in uniques)
        per_k[k] = OrderRisk(k=k, sampled_count=len(uniques), risk_sum=risk_sum, set_size=policy)
    return RiskEstimate(per_k=per_k, rho0=model.rho0, L=model.L)


def k3_policy(
    case: GridCase,
    ledger: CampaignLedger,
    bounds: Sequence[str] = ("chao", "rcp"),
    config: Optional[EstimationConfig] = None,
    require_stable: bool = False,
    workers: int = 1,
    sim_config: Optional[SimConfig] = None,
) -> Optional[SetSizePolicy]:
    """Set size range for N-3 from the chosen estimators, None without N-3 data."""
    if not ledger.occurrence_counts(3):
        return None
    unique = len(ledger.occurrence_counts(3))
    bounds = set(bounds)
    unknown = bounds - {"chao", "rcp", "sampled"}
    if unknown:
        raise ValidationError(f"Unknown N-3 bound methods: {sorted(unknown)}")
    lower = chao_estimate(ledger, 3) if "chao" in bounds else float(unique)
    if "rcp" in bounds:
        upper = rcp_estimate(
            case, ledger, config, sim_config, require_stable=require_stable, workers=workers
        ).rcp_upper
    else:
        upper = lower
    if upper < lower:
        logger.warning("Chao estimate %.1f exceeds the RCP bound %.1f; using them as a range", lower, upper)
        lower, upper = upper, lower
    return SetSizePolicy(lower, upper)


def _grid_row(estimate: RiskEstimate, baseline: float) -> dict:
    share_low, share_high = estimate.share(3)
    return {
        "rho0": estimate.rho0,
        "L": estimate.L,
        "r2": estimate.r_low(2),
        "r3_low": estimate.r_low(3),
        "r3_high": estimate.r_high(3),
        "total_low": estimate.total_low,
        "total_high": estimate.total_high,
        "share3_low": share_low,
        "share3_high": share_high,
        "relative_to_uncorrelated": estimate.total / baseline if baseline > 0 else float("nan"),
    }


def risk_grid(
    case: GridCase,
    ledger: CampaignLedger,
    rho0_list: Sequence[float],
    L_list: Sequence[float],
    set_sizes: Mapping[int, SetSizePolicy],
    cache: Optional[ProbabilityCache] = None,
) -> pd.DataFrame:
    """One risk estimate per (rho0, L), rows ordered by L then rho0."""
    cache = cache or ProbabilityCache(case)
    baselines: dict[float, float] = {}
    rows = []
    for L in sorted(set(L_list)):
        baseline_model = CorrelationModel(0.0, L)
        baselines[L] = estimate_risk(case, ledger, baseline_model, set_sizes, cache).total
        for rho0 in sorted(set(rho0_list)):
            estimate = estimate_risk(case, ledger, CorrelationModel(rho0, L), set_sizes, cache)
            rows.append(_grid_row(estimate, baselines[L]))
    return pd.DataFrame(rows, columns=GRID_COLUMNS)


def load_sweep(
    case: GridCase,
    factors: Sequence[float],
    model: CorrelationModel,
    campaign: CampaignConfig,
    k3_bounds: Sequence[str] = ("chao", "rcp"),
    estimation: Optional[EstimationConfig] = None,
) -> pd.DataFrame:
    """Fresh campaign and risk estimate at each load level, ascending by factor.

    Raises:
        InfeasibleDispatch: if a factor's load exceeds generation capacity
    """
    rows = []
    for factor in sorted(set(factors)):
        scaled = scale_load(case, factor)
        ledger = run_campaign(
            scaled, campaign.scheme_for(scaled), campaign.n_trials, campaign.seed,
            workers=campaign.workers, checkpoint_every=campaign.checkpoint_every, sim_config=campaign.sim,
        )
        set_sizes: dict[int, SetSizePolicy] = {}
        if ledger.occurrence_counts(2):
            set_sizes[2] = exact_k2_policy(ledger)
        k3 = k3_policy(scaled, ledger, k3_bounds, estimation, workers=campaign.workers, sim_config=campaign.sim)
        if k3 is not None:
            set_sizes[3] = k3
        estimate = estimate_risk(scaled, ledger, model, set_sizes)
        rows.append({
            "factor": factor,
            "total_load_mw": scaled.total_load,
            "trials": ledger.trials_run,
            "aborted": ledger.trials_aborted,
            "unique2": len(ledger.occurrence_counts(2)),
            "unique3": len(ledger.occurrence_counts(3)),
            "r2": estimate.r_low(2),
            "r3_low": estimate.r_low(3),
            "r3_high": estimate.r_high(3),
            "total_low": estimate.total_low,
            "total_high": estimate.total_high,
        })
    return pd.DataFrame(rows)
