#!/usr/bin/env python3
"""Tabular datasets describing a campaign: accumulation, frequencies, distributions.

Every function returns a pandas DataFrame that the CLI writes as CSV, so the
figures can be regenerated with any plotting tool.
"""

import logging
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from .errors import EmptyLedger, ValidationError
from .geometry import paired_distances
from .grid_model import GridCase
from .ledger import CampaignLedger, accumulation_curve, branch_frequencies

logger = logging.getLogger(__name__)

DISTRIBUTION_ORDERS = (2, 3, 4, 5)
BENIGN_SAMPLE = 1_000_000
MAX_DRAW_ROUNDS = 10_000


def _require_discoveries(ledger: CampaignLedger) -> None:
    if not ledger.discoveries:
        raise EmptyLedger("Ledger has no discoveries")


def accumulation_table(ledger: CampaignLedger, k: Optional[int] = None) -> pd.DataFrame:
    """Cumulative discoveries against cumulative unique sets, one row per discovery."""
    orders = [k] if k is not None else ledger.orders()
    frames = []
    for order in orders:
        curve = accumulation_curve(ledger, order)
        frames.append(pd.DataFrame(curve, columns=["discoveries", "unique"]).assign(k=order))
    return pd.concat(frames, ignore_index=True)[["k", "discoveries", "unique"]]


def pair_frequency_table(ledger: CampaignLedger, k: int = 3, top_m: Optional[int] = None) -> pd.DataFrame:
    """Branch pairs ranked by occurrences among unique order-k malignancies."""
    from .set_estimation import pair_frequencies

    _require_discoveries(ledger)
    frequencies = pair_frequencies(ledger, k)
    ranked = frequencies.top(top_m if top_m is not None else len(frequencies.counts))
    return pd.DataFrame(
        [(rank, a, b, count) for rank, ((a, b), count) in enumerate(ranked, start=1)],
        columns=["rank", "branch_a", "branch_b", "count"],
    )


def branch_frequency_table(ledger: CampaignLedger, k: int = 2) -> pd.DataFrame:
    _require_discoveries(ledger)
    counts = branch_frequencies(ledger, k)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return pd.DataFrame(
        [(rank, branch, count) for rank, (branch, count) in enumerate(ranked, start=1)],
        columns=["rank", "branch_id", "count"],
    )


def _present_orders(ledger: CampaignLedger, orders: Iterable[int]) -> list[int]:
    present = []
    for k in orders:
        if ledger.occurrence_counts(k):
            present.append(k)
        else:
            logger.warning("No malignancies of order %d in the ledger", k)
    return present


def _medians(values: pd.DataFrame, column: str) -> pd.DataFrame:
    grouped = values.groupby("k")[column]
    return pd.DataFrame({
        "k": grouped.median().index,
        "count": grouped.size().values,
        f"median_{column}": grouped.median().values,
    })


def blackout_size_distribution(
    ledger: CampaignLedger, orders: Sequence[int] = DISTRIBUTION_ORDERS
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Blackout size of every unique malignancy, plus the median per order.

    Returns:
        (values with columns k, branches, shed_mw; medians with columns k, count, median_shed_mw)
    """
    _require_discoveries(ledger)
    rows = [
        (k, " ".join(map(str, m.branches)), m.blackout_size_mw)
        for k in _present_orders(ledger, orders)
        for m in ledger.unique(k)
    ]
    values = pd.DataFrame(rows, columns=["k", "branches", "shed_mw"])
    return values, _medians(values, "shed_mw")


def pairwise_distance_distribution(
    case: GridCase, ledger: CampaignLedger, orders: Sequence[int] = DISTRIBUTION_ORDERS
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Distance between every branch pair inside each unique malignancy.

    Returns:
        (values with columns k, branches, branch_a, branch_b, distance_km;
         medians with columns k, count, median_distance_km)
    """
    _require_discoveries(ledger)
    rows = []
    for k in _present_orders(ledger, orders):
        for m in ledger.unique(k):
            label = " ".join(map(str, m.branches))
            for i in range(m.k):
                for j in range(i + 1, m.k):
                    rows.append((k, label, m.branches[i], m.branches[j]))
    values = pd.DataFrame(rows, columns=["k", "branches", "branch_a", "branch_b"])
    values["distance_km"] = paired_distances(case, list(values["branch_a"]), list(values["branch_b"]))
    return values, _medians(values, "distance_km")


def sample_benign_pairs(
    case: GridCase, ledger: CampaignLedger, n_pairs: int = BENIGN_SAMPLE, seed: int = 0
) -> np.ndarray:
    """Random distinct branch pairs that are not N-2 malignancies, as an (n, 2) id array.

    Pairs are drawn uniformly with replacement from the in-service branches.

    Raises:
        ValidationError: if every in-service pair is an N-2 malignancy
        RuntimeError: if MAX_DRAW_ROUNDS batches do not yield n_pairs benign pairs
    """
    ids = np.array(case.in_service_branch_ids)
    if len(ids) < 2 or n_pairs <= 0:
        return np.zeros((0, 2), dtype=np.int64)
    in_service = set(case.in_service_branch_ids)
    malignant = {pair for pair in ledger.occurrence_counts(2) if set(pair) <= in_service}
    benign_pool = len(ids) * (len(ids) - 1) // 2 - len(malignant)
    if benign_pool <= 0:
        raise ValidationError(f"All {len(malignant)} in-service branch pairs are N-2 malignancies")

    rng = np.random.default_rng(seed)
    chosen: list[np.ndarray] = []
    needed = n_pairs
    for _ in range(MAX_DRAW_ROUNDS):
        draw = ids[rng.integers(0, len(ids), size=(max(needed, 1024), 2))]
        draw = draw[draw[:, 0] != draw[:, 1]]
        draw.sort(axis=1)
        if malignant:
            keep = np.fromiter(
                ((int(a), int(b)) not in malignant for a, b in draw), dtype=bool, count=len(draw)
            )
            draw = draw[keep]
        draw = draw[:needed]
        chosen.append(draw)
        needed -= len(draw)
        if needed == 0:
            return np.concatenate(chosen)
    raise RuntimeError(
        f"Drew only {n_pairs - needed} of {n_pairs} benign pairs in {MAX_DRAW_ROUNDS} rounds "
        f"({benign_pool} benign pairs exist)"
    )


def malignant_vs_benign_distances(
    case: GridCase, ledger: CampaignLedger, n_benign: int = BENIGN_SAMPLE, seed: int = 0
) -> pd.DataFrame:
    """Distances of N-2 malignancy pairs next to a random benign-pair baseline.

    Columns: population ("malignant" or "benign"), branch_a, branch_b, distance_km.
    """
    malignant = ledger.unique(2)
    if not malignant:
        raise EmptyLedger("Ledger has no N-2 malignancies")
    benign = sample_benign_pairs(case, ledger, n_benign, seed)
    a = [m.branches[0] for m in malignant] + benign[:, 0].tolist()
    b = [m.branches[1] for m in malignant] + benign[:, 1].tolist()
    populations = ["malignant"] * len(malignant) + ["benign"] * len(benign)
    return pd.DataFrame({
        "population": populations,
        "branch_a": a,
        "branch_b": b,
        "distance_km": paired_distances(case, a, b),
    })


def distance_summary(distances: pd.DataFrame) -> pd.DataFrame:
    """Count, median and mean distance per population."""
    grouped = distances.groupby("population")["distance_km"]
    return pd.DataFrame({
        "population": grouped.size().index,
        "count": grouped.size().values,
        "median_distance_km": grouped.median().values,
        "mean_distance_km": grouped.mean().values,
    })
