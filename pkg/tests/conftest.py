"""Shared fixtures: bundled cases and small hand-built grids."""

import sys
from pathlib import Path

import pytest

# Ensure the project root is importable
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.grid_model import case_from_dict, load_case, synthesize_ratings, validate_case
from src.ledger import CampaignLedger, Malignancy

CASES_DIR = Path(__file__).parent.parent / "data" / "cases"
STRESS_CASE = CASES_DIR / "stress_pockets.json"
TRIANGLE_CASE = CASES_DIR / "triangle.json"
TOY4_CASE = CASES_DIR / "toy4.m"
TOY4_COORDS = CASES_DIR / "toy4_coords.csv"

# Minimal blackout sets of the stress case, by construction
STRESS_OMEGA2 = {
    (11, 12), (13, 14), (15, 16), (17, 18),
    (19, 20), (19, 21), (20, 21),
    (36, 37),
}
STRESS_OMEGA3 = {
    (22, 23, 24), (25, 26, 27),
    (28, 29, 30), (28, 29, 31), (28, 30, 31), (29, 30, 31),
    (32, 33, 34), (32, 33, 35), (32, 34, 35), (33, 34, 35),
}


def build_case(data: dict):
    return validate_case(synthesize_ratings(case_from_dict(data)))


def pocket_case_dict() -> dict:
    """Ten branches; only the parallel pair {3, 7} feeding bus 5 blacks out."""
    backbone = [(1, 1, 2), (2, 2, 3), (4, 3, 4), (5, 4, 1), (6, 1, 3), (8, 2, 4), (9, 1, 2), (10, 3, 4)]
    branches = [
        {"id": i, "from_bus": f, "to_bus": t, "reactance_pu": 0.1, "rate_a_mw": 1000.0}
        for i, f, t in backbone
    ]
    branches += [
        {"id": 3, "from_bus": 1, "to_bus": 5, "reactance_pu": 0.1, "rate_a_mw": 70.0},
        {"id": 7, "from_bus": 1, "to_bus": 5, "reactance_pu": 0.1, "rate_a_mw": 70.0},
    ]
    return {
        "name": "pocket10",
        "base_mva": 100.0,
        "buses": [
            {"id": 1, "x_km": 0.0, "y_km": 0.0, "load_mw": 0.0, "is_slack_candidate": True},
            {"id": 2, "x_km": 100.0, "y_km": 0.0, "load_mw": 50.0},
            {"id": 3, "x_km": 100.0, "y_km": 100.0, "load_mw": 50.0},
            {"id": 4, "x_km": 0.0, "y_km": 100.0, "load_mw": 50.0},
            {"id": 5, "x_km": -40.0, "y_km": -30.0, "load_mw": 100.0},
        ],
        "branches": sorted(branches, key=lambda b: b["id"]),
        "generators": [
            {"id": g, "bus": g, "p_mw": 62.5, "p_max_mw": 200.0, "p_min_mw": 0.0} for g in (1, 2, 3, 4)
        ],
    }


@pytest.fixture(scope="session")
def stress_case():
    return load_case(STRESS_CASE)


@pytest.fixture(scope="session")
def triangle_case():
    return load_case(TRIANGLE_CASE)


@pytest.fixture(scope="session")
def toy4_case():
    return load_case(TOY4_CASE, coordinates=TOY4_COORDS)


@pytest.fixture(scope="session")
def pocket_case():
    return build_case(pocket_case_dict())


@pytest.fixture
def output_dir(tmp_path):
    out = tmp_path / "output"
    out.mkdir()
    return out


def make_ledger(records, trials_run=None, trials_aborted=0) -> CampaignLedger:
    """Ledger from (trial, branches, shed_mw) tuples."""
    ledger = CampaignLedger()
    for trial, branches, shed in records:
        ledger.add(trial, Malignancy(tuple(branches), shed))
    ledger.trials_run = trials_run if trials_run is not None else max((r[0] for r in records), default=-1) + 1
    ledger.trials_aborted = trials_aborted
    return ledger
