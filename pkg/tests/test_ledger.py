import json

import pytest

from conftest import make_ledger
from src.errors import EmptyLedger, ParseError, ValidationError
from src.ledger import (
    CampaignLedger,
    Malignancy,
    accumulation_curve,
    branch_frequencies,
    load_ledger,
    merge_ledgers,
    meta_path,
    pair_counts,
    save_ledger,
)


@pytest.fixture
def ledger():
    return make_ledger(
        [
            (0, (12, 11), 60.0),
            (2, (11, 12), 60.0),
            (3, (22, 23, 24), 70.0),
            (5, (19, 20), 100.0),
            (7, (11, 12), 60.0),
            (8, (28, 29, 30), 100.0),
        ],
        trials_run=10,
        trials_aborted=2,
    )


def test_malignancy_is_canonical():
    assert Malignancy((7, 3), 10.0).branches == (3, 7)
    assert Malignancy((7, 3), 10.0) == Malignancy((3, 7), 10.0)


@pytest.mark.parametrize("branches", [(3,), (3, 3), ()])
def test_malignancy_rejects_bad_sets(branches):
    with pytest.raises(ValidationError):
        Malignancy(branches, 1.0)


def test_counts_and_orders(ledger):
    assert len(ledger) == 6
    assert ledger.orders() == [2, 3]
    assert ledger.counts[(11, 12)] == 3
    assert [m.branches for m in ledger.unique(2)] == [(11, 12), (19, 20)]
    assert dict(ledger.occurrence_counts(3)) == {(22, 23, 24): 1, (28, 29, 30): 1}
    assert ledger.trials_successful() == 8


def test_prefix(ledger):
    sub = ledger.prefix(4)
    assert sub.trials_run == 4
    assert sub.trials_aborted == 1
    assert sub.counts[(11, 12)] == 2
    assert [m.branches for m in sub.unique()] == [(11, 12), (22, 23, 24)]


def test_save_and_load(ledger, tmp_path):
    ledger.manifest = {"seed": 3}
    path = save_ledger(ledger, tmp_path / "ledger.jsonl")
    assert meta_path(path).name == "ledger.jsonl.meta.json"
    first = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert first == {"trial": 0, "branches": [11, 12], "shed_mw": 60.0}

    again = load_ledger(path)
    assert again.counts == ledger.counts
    assert again.trials_run == 10
    assert again.trials_aborted == 2
    assert again.manifest == {"seed": 3}


def test_load_without_sidecar(ledger, tmp_path, caplog):
    path = save_ledger(ledger, tmp_path / "ledger.jsonl")
    meta_path(path).unlink()
    again = load_ledger(path)
    assert again.trials_run == 9
    assert "No sidecar" in caplog.text


def test_load_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_ledger(tmp_path / "absent.jsonl")


def test_load_malformed(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"trial": 0, "branches": [1, 2]}\n', encoding="utf-8")
    with pytest.raises(ParseError, match="bad.jsonl:1"):
        load_ledger(path)


def test_merge_orders_by_trial():
    a = make_ledger([(4, (1, 2), 10.0)], trials_run=3)
    b = make_ledger([(1, (3, 4), 10.0), (2, (1, 2), 10.0)], trials_run=3, trials_aborted=1)
    merged = merge_ledgers([a, b])
    assert [d.trial for d in merged.discoveries] == [1, 2, 4]
    assert merged.trials_run == 6
    assert merged.trials_aborted == 1


def test_merge_rejects_shared_trials():
    a = make_ledger([(1, (1, 2), 10.0)])
    b = make_ledger([(1, (3, 4), 10.0)])
    with pytest.raises(ValidationError):
        merge_ledgers([a, b])


def test_accumulation_curve(ledger):
    assert accumulation_curve(ledger, k=2) == [(1, 1), (2, 1), (3, 2), (4, 2)]
    assert accumulation_curve(ledger)[-1] == (6, 4)


def test_accumulation_curve_empty():
    with pytest.raises(EmptyLedger):
        accumulation_curve(CampaignLedger())


def test_branch_and_pair_counts(ledger):
    assert branch_frequencies(ledger, 2) == {11: 1, 12: 1, 19: 1, 20: 1}
    pairs = pair_counts(ledger.unique(3))
    assert pairs[(22, 23)] == 1
    assert pairs[(28, 30)] == 1
    assert sum(pairs.values()) == 6
