#!/usr/bin/env python3
"""Bounds on the number of N-3 malignancies from RC campaign data.

The Chao estimate, computed from how many sets were found exactly once
(n1) and exactly twice (n2), is a lower bound. The RCP bound brute-forces
every triple containing the most frequent branch pair (Pair_max), measures
the fraction q of those the campaign found, and scales the unique count by
1/q, which overestimates because Pair_max is the best-sampled pair.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import pandas as pd

from .cascade_sim import SimConfig
from .errors import InsufficientData, NotMinimalizable, Unstable, ValidationError
from .grid_model import GridCase
from .ledger import CampaignLedger, pair_counts
from .rc_sampler import brute_force_k3_containing_pair

logger = logging.getLogger(__name__)

Pair = tuple[int, int]


@dataclass(frozen=True)
class EstimationConfig:
    stability_fraction: float = 0.1
    min_stability_trials: int = 1000
    k: int = 3

    def __post_init__(self):
        if not 0.0 < self.stability_fraction <= 1.0:
            raise ValidationError(f"stability_fraction must lie in (0, 1], got {self.stability_fraction}")
        if self.min_stability_trials < 0:
            raise ValidationError(f"min_stability_trials must be >= 0, got {self.min_stability_trials}")
        if self.k != 3:
            raise ValidationError(f"The RCP bound is defined for k = 3, got {self.k}")

    def window(self, trials_run: int) -> int:
        return max(math.ceil(self.stability_fraction * trials_run), self.min_stability_trials)


@dataclass(frozen=True)
class PairFrequency:
    counts: Counter

    def top(self, m: int) -> list[tuple[Pair, int]]:
        """The m most frequent pairs, ties broken by the lower pair ids."""
        return sorted(self.counts.items(), key=lambda item: (-item[1], item[0]))[:m]

    @property
    def pair_max(self) -> Pair:
        return self.top(1)[0][0]


@dataclass(frozen=True)
class SetSizeBounds:
    chao_lower: float
    rcp_upper: float
    n1: int
    n2: int
    pair_max: Pair
    q_proportion: float
    unique_found: int
    pair_found: int = 0
    pair_true: int = 0
    stable: bool = True

    def to_dict(self) -> dict:
        return {
            "chao_lower": self.chao_lower,
            "rcp_upper": self.rcp_upper,
            "n1": self.n1,
            "n2": self.n2,
            "pair_max": list(self.pair_max),
            "q_proportion": self.q_proportion,
            "unique_found": self.unique_found,
            "pair_found": self.pair_found,
            "pair_true": self.pair_true,
            "stable": self.stable,
        }


def singletons_doubletons(counts: Counter) -> tuple[int, int, int]:
    """(unique, n1, n2) of an occurrence multiset."""
    values = list(counts.values())
    return len(values), values.count(1), values.count(2)


def chao1(unique: int, n1: int, n2: int) -> float:
    """unique + n1^2 / (2 n2); with no doubletons, unique + n1 (n1 - 1) / 2."""
    if n2 > 0:
        return unique + n1 * n1 / (2.0 * n2)
    return unique + n1 * (n1 - 1) / 2.0


def _occurrences(ledger: CampaignLedger, k: int) -> Counter:
    counts = ledger.occurrence_counts(k)
    if not counts:
        raise InsufficientData(f"Ledger has no discoveries of order {k}")
    return counts


def chao_estimate(ledger: CampaignLedger, k: int = 3) -> float:
    """Chao lower bound on the number of order-k malignancies.

    Raises:
        InsufficientData: if there are no discoveries of order k
    """
    return chao1(*singletons_doubletons(_occurrences(ledger, k)))


def chao_confidence(ledger: CampaignLedger, k: int = 3, z: float = 1.96) -> tuple[float, float]:
    """Log-normal confidence interval around the Chao estimate.

    Uses the EstimateS variance rules: the classic variance with singletons
    and doubletons, the no-doubleton variance, and the no-singleton
    interval based on the number of discoveries.
    """
    counts = _occurrences(ledger, k)
    unique, n1, n2 = singletons_doubletons(counts)
    if n1 == 0:
        n = sum(counts.values())
        p = math.exp(-n / unique)
        half = z * math.sqrt(unique * p / (1.0 - p))
        return max(float(unique), unique / (1.0 - p) - half), unique / (1.0 - p) + half

    estimate = chao1(unique, n1, n2)
    if n2 > 0:
        r = n1 / n2
        variance = n2 * (0.5 * r ** 2 + r ** 3 + 0.25 * r ** 4)
    else:
        variance = n1 * (n1 - 1) / 2.0 + n1 * (2 * n1 - 1) ** 2 / 4.0 - n1 ** 4 / (4.0 * estimate)
    excess = estimate - unique
    if excess <= 0 or variance <= 0:
        return float(unique), float(estimate)
    spread = math.exp(abs(z) * math.sqrt(math.log(1.0 + variance / excess ** 2)))
    return unique + excess / spread, unique + excess * spread


def pair_frequencies(ledger: CampaignLedger, k: int = 3) -> PairFrequency:
    """Pair occurrences over the unique order-k malignancies."""
    return PairFrequency(pair_counts(ledger.unique(k)))


def pair_max_history(ledger: CampaignLedger, k: int = 3) -> list[tuple[int, Pair]]:
    """(trial, Pair_max) at every trial where the identity of Pair_max changed.

    Pair counts grow only when a new unique malignancy is found.
    """
    counts: Counter = Counter()
    seen: set[tuple[int, ...]] = set()
    best: Optional[Pair] = None
    history: list[tuple[int, Pair]] = []
    for discovery in ledger.sorted_discoveries():
        key = discovery.malignancy.key
        if discovery.malignancy.k != k or key in seen:
            continue
        seen.add(key)
        for i in range(len(key)):
            for j in range(i + 1, len(key)):
                pair = (key[i], key[j])
                counts[pair] += 1
                if best is None or counts[pair] > counts[best] or (counts[pair] == counts[best] and pair < best):
                    best = pair
        if not history or history[-1][1] != best:
            history.append((discovery.trial, best))
    return history


def pair_max_is_stable(ledger: CampaignLedger, config: EstimationConfig) -> bool:
    """True when Pair_max has not changed over the trailing stability window."""
    history = pair_max_history(ledger, config.k)
    if not history:
        return False
    window = config.window(ledger.trials_run)
    last_change = history[-1][0]
    return last_change < ledger.trials_run - window


def rcp_estimate(
    case: GridCase,
    ledger: CampaignLedger,
    config: Optional[EstimationConfig] = None,
    sim_config: Optional[SimConfig] = None,
    require_stable: bool = True,
    workers: int = 1,
    true_counts: Optional[dict[Pair, int]] = None,
) -> SetSizeBounds:
    """Chao lower and RCP upper bounds on the order-k malignancy count.

    Args:
        true_counts: memo of brute-forced triple counts per pair, filled in place

    Raises:
        InsufficientData: if the ledger has no order-k discoveries
        Unstable: if Pair_max changed inside the stability window and
            ``require_stable`` is set
        NotMinimalizable: if Pair_max blacks out on its own
    """
    config = config or EstimationConfig()
    k = config.k
    counts = _occurrences(ledger, k)
    unique, n1, n2 = singletons_doubletons(counts)

    frequencies = pair_frequencies(ledger, k)
    pair_max = frequencies.pair_max
    stable = pair_max_is_stable(ledger, config)
    if not stable:
        message = (
            f"Pair_max {pair_max} changed within the last {config.window(ledger.trials_run)} "
            f"of {ledger.trials_run} trials"
        )
        if require_stable:
            raise Unstable(message)
        logger.warning(message)

    found = frequencies.counts[pair_max]
    true_counts = true_counts if true_counts is not None else {}
    if pair_max not in true_counts:
        true_counts[pair_max] = len(
            brute_force_k3_containing_pair(case, pair_max, sim_config, workers=workers)
        )
    true = true_counts[pair_max]
    if true < found:
        logger.warning(
            "Brute force found %d triples with pair %s but the ledger holds %d; "
            "ledger and case may not match", true, pair_max, found,
        )
        true = found
    q = found / true
    return SetSizeBounds(
        chao_lower=chao1(unique, n1, n2),
        rcp_upper=unique / q,
        n1=n1,
        n2=n2,
        pair_max=pair_max,
        q_proportion=q,
        unique_found=unique,
        pair_found=found,
        pair_true=true,
        stable=stable,
    )


def undersampling_report(
    case: GridCase,
    ledger: CampaignLedger,
    top_m: int = 20,
    sim_config: Optional[SimConfig] = None,
    workers: int = 1,
    k: int = 3,
) -> pd.DataFrame:
    """Per top pair: triples found by RC, triples that exist, and their ratio."""
    rows = []
    for rank, (pair, found) in enumerate(pair_frequencies(ledger, k).top(top_m), start=1):
        try:
            true = len(brute_force_k3_containing_pair(case, pair, sim_config, workers=workers))
        except NotMinimalizable:
            logger.warning("Skipping pair %s: it causes a blackout on its own", pair)
            continue
        true = max(true, found)
        rows.append({
            "rank": rank,
            "branch_a": pair[0],
            "branch_b": pair[1],
            "rc_count": found,
            "true_count": true,
            "proportion": found / true,
        })
    return pd.DataFrame(rows, columns=["rank", "branch_a", "branch_b", "rc_count", "true_count", "proportion"])


def bounds_trajectory(
    case: GridCase,
    ledger: CampaignLedger,
    checkpoints: Sequence[int],
    sim_config: Optional[SimConfig] = None,
    workers: int = 1,
    k: int = 3,
) -> pd.DataFrame:
    """Chao and RCP bounds recomputed on growing prefixes of the campaign."""
    rows = []
    true_counts: dict[Pair, int] = {}
    config = EstimationConfig(min_stability_trials=0, k=k)
    for trials in sorted(set(checkpoints)):
        sub = ledger.prefix(trials)
        if not sub.occurrence_counts(k):
            continue
        bounds = rcp_estimate(
            case, sub, config, sim_config, require_stable=False, workers=workers, true_counts=true_counts
        )
        rows.append({
            "trials": trials,
            "unique_found": bounds.unique_found,
            "chao_lower": bounds.chao_lower,
            "rcp_upper": bounds.rcp_upper,
            "pair_max": f"{bounds.pair_max[0]}-{bounds.pair_max[1]}",
            "q_proportion": bounds.q_proportion,
        })
    return pd.DataFrame(rows, columns=["trials", "unique_found", "chao_lower", "rcp_upper", "pair_max", "q_proportion"])
