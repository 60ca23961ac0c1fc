#!/usr/bin/env python3
"""Campaign ledger: the record of malignancies discovered by RC trials.

Discoveries are stored one JSON object per line:

    {"trial": 17, "branches": [3, 7], "shed_mw": 60.0}

Trial counters and the run manifest live in a sidecar ``<ledger>.meta.json``.
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Optional

from .errors import EmptyLedger, ParseError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Malignancy:
    """A minimal blackout-causing branch set, keyed by its sorted ids."""

    branches: tuple[int, ...]
    blackout_size_mw: float

    def __post_init__(self):
        canonical = tuple(sorted(int(b) for b in self.branches))
        if len(set(canonical)) != len(canonical):
            raise ValidationError(f"Malignancy repeats a branch: {self.branches}")
        if len(canonical) < 2:
            raise ValidationError(f"Malignancy needs at least 2 branches, got {canonical}")
        object.__setattr__(self, "branches", canonical)

    @property
    def k(self) -> int:
        return len(self.branches)

    @property
    def key(self) -> tuple[int, ...]:
        return self.branches


@dataclass(frozen=True)
class Discovery:
    trial: int
    malignancy: Malignancy

    def to_record(self) -> dict:
        return {
            "trial": self.trial,
            "branches": list(self.malignancy.branches),
            "shed_mw": self.malignancy.blackout_size_mw,
        }


class CampaignLedger:
    """Append-only multiset of discoveries with occurrence counts."""

    def __init__(self, trials_run: int = 0, trials_aborted: int = 0, manifest: Optional[dict] = None):
        self.discoveries: list[Discovery] = []
        self.counts: Counter = Counter()
        self._first: dict[tuple[int, ...], Malignancy] = {}
        self.trials_run = trials_run
        self.trials_aborted = trials_aborted
        self.manifest = manifest or {}

    def __len__(self) -> int:
        return len(self.discoveries)

    def add(self, trial: int, malignancy: Malignancy) -> None:
        self.discoveries.append(Discovery(trial, malignancy))
        self.counts[malignancy.key] += 1
        self._first.setdefault(malignancy.key, malignancy)

    def record(self, result) -> None:
        """Account for one finished trial (a rc_sampler.TrialResult)."""
        self.trials_run += 1
        if result.malignancy is None:
            self.trials_aborted += 1
        else:
            self.add(result.trial_index, result.malignancy)

    @property
    def unique_sets(self) -> dict[tuple[int, ...], int]:
        return dict(self.counts)

    def orders(self) -> list[int]:
        return sorted({len(key) for key in self.counts})

    def unique(self, k: Optional[int] = None) -> list[Malignancy]:
        """Unique malignancies, optionally of order k, sorted by key."""
        return [self._first[key] for key in sorted(self.counts) if k is None or len(key) == k]

    def occurrence_counts(self, k: int) -> Counter:
        return Counter({key: n for key, n in self.counts.items() if len(key) == k})

    def of_order(self, k: int) -> list[Discovery]:
        return [d for d in self.discoveries if d.malignancy.k == k]

    def sorted_discoveries(self) -> list[Discovery]:
        """Discoveries in trial order, the order accumulation curves use."""
        return sorted(self.discoveries, key=lambda d: (d.trial, d.malignancy.key))

    def trials_successful(self) -> int:
        return self.trials_run - self.trials_aborted

    def prefix(self, trials: int) -> "CampaignLedger":
        """The ledger as it stood after the first ``trials`` trials.

        trials_aborted is not tracked per trial, so the prefix scales it
        proportionally.
        """
        trials = min(trials, self.trials_run)
        aborted = round(self.trials_aborted * trials / self.trials_run) if self.trials_run else 0
        sub = CampaignLedger(trials_run=trials, trials_aborted=aborted, manifest=self.manifest)
        for discovery in self.sorted_discoveries():
            if discovery.trial < trials:
                sub.add(discovery.trial, discovery.malignancy)
        return sub


def merge_ledgers(ledgers: Iterable[CampaignLedger]) -> CampaignLedger:
    """Combine per-worker or per-run ledgers into one ordered by trial index.

    Raises:
        ValidationError: if two ledgers claim the same trial index
    """
    ledgers = list(ledgers)
    merged = CampaignLedger(
        trials_run=sum(ledger.trials_run for ledger in ledgers),
        trials_aborted=sum(ledger.trials_aborted for ledger in ledgers),
        manifest=ledgers[0].manifest if ledgers else None,
    )
    owner: dict[int, int] = {}
    discoveries = []
    for i, ledger in enumerate(ledgers):
        for discovery in ledger.discoveries:
            if owner.setdefault(discovery.trial, i) != i:
                raise ValidationError(f"Trial {discovery.trial} appears in more than one ledger")
            discoveries.append(discovery)
    for discovery in sorted(discoveries, key=lambda d: (d.trial, d.malignancy.key)):
        merged.add(discovery.trial, discovery.malignancy)
    return merged


def meta_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def save_ledger(ledger: CampaignLedger, path: Path) -> Path:
    """Write the discoveries as JSON-lines plus the counters sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, 'w', encoding='utf-8') as f:
        for discovery in ledger.sorted_discoveries():
            f.write(json.dumps(discovery.to_record()) + "\n")
    tmp.replace(path)

    with open(meta_path(path), 'w', encoding='utf-8') as f:
        json.dump(
            {
                "trials_run": ledger.trials_run,
                "trials_aborted": ledger.trials_aborted,
                "manifest": ledger.manifest,
            },
            f,
            indent=2,
        )
    return path


def load_ledger(path: Path) -> CampaignLedger:
    """Read a ledger written by save_ledger.

    A missing sidecar is tolerated: trials_run then falls back to the
    highest trial index seen plus one.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Ledger not found: {path}")

    meta = {}
    if meta_path(path).exists():
        with open(meta_path(path), 'r', encoding='utf-8') as f:
            meta = json.load(f)

    ledger = CampaignLedger(manifest=meta.get("manifest"))
    with open(path, 'r', encoding='utf-8') as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                malignancy = Malignancy(tuple(record["branches"]), float(record["shed_mw"]))
                ledger.add(int(record["trial"]), malignancy)
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ParseError(f"{path}:{lineno}: malformed ledger record ({e})")

    if meta:
        ledger.trials_run = int(meta.get("trials_run", 0))
        ledger.trials_aborted = int(meta.get("trials_aborted", 0))
    else:
        logger.warning("No sidecar for %s; inferring trial counts from discoveries", path)
        ledger.trials_run = max((d.trial for d in ledger.discoveries), default=-1) + 1
    return ledger


def accumulation_curve(ledger: CampaignLedger, k: Optional[int] = None) -> list[tuple[int, int]]:
    """Cumulative discoveries against cumulative unique sets, in trial order.

    Raises:
        EmptyLedger: if there are no discoveries (of order k)
    """
    discoveries = [d for d in ledger.sorted_discoveries() if k is None or d.malignancy.k == k]
    if not discoveries:
        raise EmptyLedger("Ledger has no discoveries" + (f" of order {k}" if k is not None else ""))
    seen: set[tuple[int, ...]] = set()
    curve = []
    for i, discovery in enumerate(discoveries, start=1):
        seen.add(discovery.malignancy.key)
        curve.append((i, len(seen)))
    return curve


def branch_frequencies(ledger: CampaignLedger, k: int) -> Counter:
    """How often each branch appears among the unique malignancies of order k."""
    counts: Counter = Counter()
    for malignancy in ledger.unique(k):
        counts.update(malignancy.branches)
    return counts


def pair_counts(malignancies: Iterable[Malignancy]) -> Counter:
    """Occurrences of each branch pair across the given malignancies."""
    counts: Counter = Counter()
    for malignancy in malignancies:
        counts.update(combinations(malignancy.branches, 2))
    return counts
