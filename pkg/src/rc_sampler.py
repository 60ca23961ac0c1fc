#!/usr/bin/env python3
"""Random Chemistry search for minimal N-k blackout contingencies.

A trial draws a random blackout-causing subset of branches, shrinks it
through the sizes of an RCScheme (each stage keeps the first random
sub-subset that still causes a blackout), and finally searches the small
remaining set bottom-up for the first blackout-causing subset of size
2, 3, ... . That subset is minimal because every smaller one was tried.

Trials are independent; each draws from its own generator seeded by
(campaign seed, trial index), so results never depend on scheduling.
"""

import logging
import math
import multiprocessing
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import settings
from .cascade_sim import CascadeOutcome, SimConfig, simulate
from .errors import NotMinimalizable, ValidationError
from .grid_model import GridCase
from .ledger import CampaignLedger, Malignancy, load_ledger, save_ledger

logger = logging.getLogger(__name__)

RATIO_LARGE = 2.0
RATIO_SMALL = 1.5
RATIO_SWITCH_SIZE = 20
DEFAULT_A1_CAP = 80
BRUTE_FORCE_WARN = 1_000_000

ProgressCallback = Callable[[int, int, int], None]


@dataclass(frozen=True)
class RCScheme:
    sizes: tuple[int, ...]
    max_subsamples: int = 20

    def __post_init__(self):
        sizes = tuple(int(a) for a in self.sizes)
        if not sizes:
            raise ValidationError("RC scheme needs at least one subset size")
        if any(b >= a for a, b in zip(sizes, sizes[1:])):
            raise ValidationError(f"RC scheme sizes must be strictly decreasing: {sizes}")
        if sizes[-1] < 2:
            raise ValidationError(f"RC scheme a_final must be >= 2, got {sizes[-1]}")
        if self.max_subsamples < 1:
            raise ValidationError(f"max_subsamples must be >= 1, got {self.max_subsamples}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def a1(self) -> int:
        return self.sizes[0]

    @property
    def a_final(self) -> int:
        return self.sizes[-1]

    def check_fits(self, n_branches: int) -> None:
        if self.a1 > n_branches:
            raise ValidationError(f"RC scheme a1={self.a1} exceeds the {n_branches} available branches")

    def simulation_bound(self) -> int:
        """Upper bound on simulations per trial."""
        search = sum(math.comb(self.a_final, k) for k in range(2, self.a_final + 1))
        return len(self.sizes) * self.max_subsamples + search

    def __str__(self) -> str:
        return "{" + ",".join(str(a) for a in self.sizes) + "}"

    @classmethod
    def parse(cls, text: str, n_branches: int, max_subsamples: int = 20) -> "RCScheme":
        """Parse ``auto`` or a comma-separated size list such as ``80,40,20,14,10,7,5``."""
        if text.strip().lower() == "auto":
            return auto_scheme(n_branches, max_subsamples=max_subsamples)
        try:
            sizes = tuple(int(part) for part in text.split(",") if part.strip())
        except ValueError:
            raise ValidationError(f"Invalid RC scheme: {text!r}")
        return cls(sizes, max_subsamples)


def auto_scheme(
    n_branches: int, a_final: int = 5, a1: Optional[int] = None, max_subsamples: int = 20
) -> RCScheme:
    """Build a scheme halving down to 20, then dividing by 1.5 (rounded up) to a_final.

    Without an explicit a1 the scheme starts at the largest 20·2^m not above
    min(N, 80), or at N for cases with fewer than 20 branches.
    """
    if n_branches < 2:
        raise ValidationError(f"RC needs at least 2 branches, got {n_branches}")
    if a1 is None:
        cap = min(n_branches, DEFAULT_A1_CAP)
        if cap < RATIO_SWITCH_SIZE:
            a1 = cap
        else:
            a1 = RATIO_SWITCH_SIZE
            while a1 * 2 <= cap:
                a1 *= 2
    a_final = min(a_final, a1)

    sizes = [a1]
    a = a1
    while a > RATIO_SWITCH_SIZE:
        a = max(math.ceil(a / RATIO_LARGE), RATIO_SWITCH_SIZE, a_final)
        sizes.append(a)
    while a > a_final:
        a = max(math.ceil(a / RATIO_SMALL), a_final)
        sizes.append(a)
    return RCScheme(tuple(sizes), max_subsamples)


@dataclass(frozen=True)
class TrialResult:
    trial_index: int
    malignancy: Optional[Malignancy]
    simulations: int
    aborted_stage: Optional[int] = None

    @property
    def aborted(self) -> bool:
        return self.malignancy is None


class _BlackoutOracle:
    """Per-trial memo of simulated outage sets."""

    def __init__(self, case: GridCase, config: SimConfig):
        self.case = case
        self.config = config
        self.calls = 0
        self._cache: dict[frozenset, CascadeOutcome] = {}

    def __call__(self, outages: Iterable[int]) -> CascadeOutcome:
        key = frozenset(outages)
        if key not in self._cache:
            self._cache[key] = simulate(self.case, key, self.config)
            self.calls += 1
        return self._cache[key]


def trial_seed(seed: int, trial_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, trial_index])


def rc_trial(
    case: GridCase,
    scheme: RCScheme,
    seed,
    config: Optional[SimConfig] = None,
    trial_index: int = 0,
) -> TrialResult:
    """Run one Random Chemistry trial.

    Args:
        seed: anything numpy.random.default_rng accepts
        trial_index: recorded on the result

    Returns:
        TrialResult holding the malignancy, or None when a stage exhausted
        ``scheme.max_subsamples`` draws without a blackout
    """
    config = config or SimConfig()
    pool = np.array(case.in_service_branch_ids)
    scheme.check_fits(len(pool))
    rng = np.random.default_rng(seed)
    oracle = _BlackoutOracle(case, config)

    current = pool
    for stage, size in enumerate(scheme.sizes):
        for _ in range(scheme.max_subsamples):
            subset = np.sort(rng.choice(current, size=size, replace=False))
            if oracle(subset.tolist()).is_blackout:
                current = subset
                break
        else:
            return TrialResult(trial_index, None, oracle.calls, aborted_stage=stage)

    final = current.tolist()
    for k in range(2, len(final) + 1):
        candidates = list(combinations(final, k))
        for i in rng.permutation(len(candidates)):
            outcome = oracle(candidates[i])
            if outcome.is_blackout:
                malignancy = Malignancy(candidates[i], outcome.load_shed_mw)
                return TrialResult(trial_index, malignancy, oracle.calls)

    # The final stage subset is itself a blackout set, so this is unreachable
    # unless the simulator is nondeterministic.
    raise RuntimeError(f"Trial {trial_index}: no blackout subset found in the final set {final}")


@dataclass(frozen=True)
class CampaignConfig:
    n_trials: int
    scheme: Optional[RCScheme] = None
    seed: int = settings.DEFAULT_SEED
    workers: int = 1
    checkpoint_every: int = settings.CHECKPOINT_EVERY
    sim: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValidationError(f"n_trials must be >= 1, got {self.n_trials}")
        if self.seed < 0:
            raise ValidationError(f"seed must be >= 0, got {self.seed}")
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}")
        if self.checkpoint_every < 1:
            raise ValidationError(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")

    def scheme_for(self, case: GridCase) -> RCScheme:
        return self.scheme or auto_scheme(len(case.in_service_branch_ids))


# Worker processes receive the case once through the pool initializer.
_WORKER: dict = {}


def _init_worker(case: GridCase, scheme: Optional[RCScheme], config: SimConfig, seed: int) -> None:
    _WORKER.update(case=case, scheme=scheme, config=config, seed=seed)


def _trial_task(trial_index: int) -> TrialResult:
    return rc_trial(
        _WORKER["case"], _WORKER["scheme"], trial_seed(_WORKER["seed"], trial_index),
        _WORKER["config"], trial_index,
    )


def _simulate_task(outages: tuple[int, ...]) -> tuple[tuple[int, ...], CascadeOutcome]:
    return outages, simulate(_WORKER["case"], outages, _WORKER["config"])


def _map(task, items: Sequence, case: GridCase, scheme, config: SimConfig, seed: int, workers: int):
    """Ordered map of a worker task, in-process when workers == 1."""
    if workers <= 1:
        _init_worker(case, scheme, config, seed)
        return [task(item) for item in items]
    chunksize = max(1, len(items) // (workers * 8))
    with multiprocessing.Pool(
        processes=workers, initializer=_init_worker, initargs=(case, scheme, config, seed)
    ) as pool:
        return pool.map(task, items, chunksize=chunksize)


def run_campaign(
    case: GridCase,
    scheme: RCScheme,
    n_trials: int,
    seed: int = settings.DEFAULT_SEED,
    checkpoint: Optional[Path] = None,
    *,
    workers: int = 1,
    checkpoint_every: int = settings.CHECKPOINT_EVERY,
    sim_config: Optional[SimConfig] = None,
    progress: Optional[ProgressCallback] = None,
    manifest: Optional[dict] = None,
) -> CampaignLedger:
    """Run ``n_trials`` independent RC trials and collect their discoveries.

    With ``checkpoint`` set, the ledger is written there every
    ``checkpoint_every`` trials and an existing checkpoint is resumed from
    its ``trials_run`` count. The worker count never changes the result.

    Raises:
        ValidationError: on bad arguments or a checkpoint from a different campaign
        OSError: if the checkpoint cannot be written
    """
    config = CampaignConfig(
        n_trials=n_trials, scheme=scheme, seed=seed, workers=workers,
        checkpoint_every=checkpoint_every, sim=sim_config or SimConfig(),
    )
    scheme = config.scheme_for(case)
    scheme.check_fits(len(case.in_service_branch_ids))

    identity = {"seed": seed, "scheme": list(scheme.sizes), "max_subsamples": scheme.max_subsamples}
    ledger = None
    if checkpoint is not None and Path(checkpoint).exists():
        ledger = load_ledger(checkpoint)
        previous = {key: ledger.manifest.get(key) for key in identity}
        if any(value is not None for value in previous.values()) and previous != identity:
            raise ValidationError(
                f"Checkpoint {checkpoint} belongs to a different campaign: {previous} vs {identity}"
            )
        logger.info("Resuming campaign at trial %d from %s", ledger.trials_run, checkpoint)
    if ledger is None:
        ledger = CampaignLedger()
    ledger.manifest = {**(manifest or {}), **ledger.manifest, **identity}

    start = ledger.trials_run
    for chunk_start in range(start, n_trials, config.checkpoint_every):
        indices = list(range(chunk_start, min(chunk_start + config.checkpoint_every, n_trials)))
        results = _map(_trial_task, indices, case, scheme, config.sim, seed, config.workers)
        for result in results:
            ledger.record(result)
        if checkpoint is not None:
            save_ledger(ledger, checkpoint)
        if progress is not None:
            progress(ledger.trials_run, n_trials, len(ledger.counts))
    return ledger


def simulate_many(
    case: GridCase,
    outage_sets: Sequence[tuple[int, ...]],
    config: Optional[SimConfig] = None,
    workers: int = 1,
) -> list[tuple[tuple[int, ...], CascadeOutcome]]:
    """Simulate many outage sets, preserving input order."""
    return _map(_simulate_task, list(outage_sets), case, None, config or SimConfig(), 0, workers)


def brute_force_k2(
    case: GridCase, config: Optional[SimConfig] = None, workers: int = 1
) -> set[Malignancy]:
    """Every blackout-causing branch pair (exact Ω₂ for this simulator).

    Pairs containing a branch that blacks out alone are not minimal and
    are left out.
    """
    ids = case.in_service_branch_ids
    n_pairs = math.comb(len(ids), 2)
    if n_pairs > BRUTE_FORCE_WARN:
        logger.warning("Brute-force N-2 scan needs %d simulations", n_pairs)
    singles = {
        outages[0] for outages, outcome in simulate_many(case, [(b,) for b in ids], config, workers)
        if outcome.is_blackout
    }
    pairs = [pair for pair in combinations(ids, 2) if not singles.intersection(pair)]
    return {
        Malignancy(pair, outcome.load_shed_mw)
        for pair, outcome in simulate_many(case, pairs, config, workers)
        if outcome.is_blackout
    }


def brute_force_k3_containing_pair(
    case: GridCase,
    pair: Sequence[int],
    config: Optional[SimConfig] = None,
    omega2: Optional[set[tuple[int, ...]]] = None,
    workers: int = 1,
) -> set[Malignancy]:
    """All minimal triples that contain ``pair``.

    A third branch b qualifies when pair ∪ {b} blacks out and neither new
    pair (a, b) does. With ``omega2`` (keys of a complete N-2 set) the new
    pairs are looked up instead of simulated.

    Raises:
        NotMinimalizable: if the pair blacks out by itself
    """
    config = config or SimConfig()
    pair = tuple(sorted(pair))
    if len(pair) != 2 or pair[0] == pair[1]:
        raise ValidationError(f"Expected two distinct branch ids, got {pair}")
    if simulate(case, pair, config).is_blackout:
        raise NotMinimalizable(f"Pair {pair} causes a blackout on its own")

    thirds = [b for b in case.in_service_branch_ids if b not in pair]
    triples = [tuple(sorted(pair + (b,))) for b in thirds]
    found = [(t, o) for t, o in simulate_many(case, triples, config, workers) if o.is_blackout]

    if omega2 is None and found:
        sides = sorted({
            tuple(sorted((a, b))) for triple, _ in found for b in triple if b not in pair for a in pair
        })
        omega2 = {s for s, o in simulate_many(case, sides, config, workers) if o.is_blackout}
    omega2 = omega2 or set()

    result = set()
    for triple, outcome in found:
        third = next(b for b in triple if b not in pair)
        if any(tuple(sorted((a, third))) in omega2 for a in pair):
            continue
        result.add(Malignancy(triple, outcome.load_shed_mw))
    return result


def enumerate_malignancies(
    case: GridCase, k_max: int = 3, config: Optional[SimConfig] = None, workers: int = 1
) -> dict[int, set[Malignancy]]:
    """Exhaustive minimal blackout sets of every order 2..k_max.

    Feasible only for small cases; the cost is C(N, k_max) simulations.
    """
    if k_max < 2:
        raise ValidationError(f"k_max must be >= 2, got {k_max}")
    ids = case.in_service_branch_ids
    total = sum(math.comb(len(ids), k) for k in range(1, k_max + 1))
    if total > BRUTE_FORCE_WARN:
        logger.warning("Exhaustive enumeration up to N-%d needs %d simulations", k_max, total)

    known: set[frozenset] = {
        frozenset(outages)
        for outages, outcome in simulate_many(case, [(b,) for b in ids], config, workers)
        if outcome.is_blackout
    }
    found: dict[int, set[Malignancy]] = {}
    for k in range(2, k_max + 1):
        candidates = [
            combo for combo in combinations(ids, k)
            if not any(frozenset(sub) in known for j in range(1, k) for sub in combinations(combo, j))
        ]
        found[k] = {
            Malignancy(combo, outcome.load_shed_mw)
            for combo, outcome in simulate_many(case, candidates, config, workers)
            if outcome.is_blackout
        }
        known.update(frozenset(m.branches) for m in found[k])
    return found


def verify_minimal(case: GridCase, malignancy: Malignancy, config: Optional[SimConfig] = None) -> bool:
    """True when the set blacks out and none of its proper subsets does."""
    config = config or SimConfig()
    if not simulate(case, malignancy.branches, config).is_blackout:
        return False
    return not any(
        simulate(case, subset, config).is_blackout
        for size in range(1, malignancy.k)
        for subset in combinations(malignancy.branches, size)
    )


def audit_ledger(
    case: GridCase, ledger: CampaignLedger, config: Optional[SimConfig] = None
) -> list[tuple[tuple[int, ...], str]]:
    """Minimality audit of every unique malignancy; returns (key, reason) violations."""
    config = config or SimConfig()
    violations = []
    for malignancy in ledger.unique():
        outcome = simulate(case, malignancy.branches, config)
        if not outcome.is_blackout:
            violations.append((malignancy.key, "does not cause a blackout"))
        elif not verify_minimal(case, malignancy, config):
            violations.append((malignancy.key, "a proper subset causes a blackout"))
        elif abs(outcome.load_shed_mw - malignancy.blackout_size_mw) > 1e-6 * max(outcome.load_shed_mw, 1.0):
            violations.append((malignancy.key, "recorded blackout size differs from simulation"))
    return violations
