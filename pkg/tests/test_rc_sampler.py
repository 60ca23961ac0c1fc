import pytest

from conftest import STRESS_OMEGA2, STRESS_OMEGA3, make_ledger
from src.cascade_sim import SimConfig
from src.errors import NotMinimalizable, ValidationError
from src.ledger import Malignancy, load_ledger
from src.rc_sampler import (
    RCScheme,
    audit_ledger,
    auto_scheme,
    brute_force_k2,
    brute_force_k3_containing_pair,
    enumerate_malignancies,
    rc_trial,
    run_campaign,
    simulate_many,
    trial_seed,
    verify_minimal,
)

POCKET_SCHEME = RCScheme((10, 5))


@pytest.mark.parametrize("n,expected", [
    (37, (20, 14, 10, 7, 5)),
    (1000, (80, 40, 20, 14, 10, 7, 5)),
    (60, (40, 20, 14, 10, 7, 5)),
    (10, (10, 7, 5)),
    (4, (4,)),
])
def test_auto_scheme(n, expected):
    assert auto_scheme(n).sizes == expected


def test_auto_scheme_explicit_a1():
    assert auto_scheme(500, a1=30).sizes == (30, 20, 14, 10, 7, 5)


@pytest.mark.parametrize("sizes", [(), (5, 10), (10, 10), (10, 1)])
def test_scheme_rejects(sizes):
    with pytest.raises(ValidationError):
        RCScheme(sizes)


def test_scheme_parse():
    assert RCScheme.parse("auto", 37).sizes == (20, 14, 10, 7, 5)
    assert RCScheme.parse("10, 5", 10).sizes == (10, 5)
    assert str(RCScheme.parse("10,5", 10)) == "{10,5}"
    with pytest.raises(ValidationError):
        RCScheme.parse("ten,five", 10)


def test_scheme_must_fit(pocket_case):
    with pytest.raises(ValidationError, match="exceeds"):
        rc_trial(pocket_case, RCScheme((20, 5)), 0)


def test_simulation_bound():
    assert POCKET_SCHEME.simulation_bound() == 2 * 20 + 26


def test_trial_finds_the_pocket_pair(pocket_case):
    results = [rc_trial(pocket_case, POCKET_SCHEME, trial_seed(0, i), trial_index=i) for i in range(20)]
    found = [r for r in results if not r.aborted]
    assert found
    for result in found:
        assert result.malignancy.branches == (3, 7)
        assert result.malignancy.blackout_size_mw == pytest.approx(100.0)
        assert result.simulations <= POCKET_SCHEME.simulation_bound()


def test_trial_is_reproducible(stress_case):
    scheme = auto_scheme(stress_case.n_branches)
    first = rc_trial(stress_case, scheme, trial_seed(7, 3), trial_index=3)
    second = rc_trial(stress_case, scheme, trial_seed(7, 3), trial_index=3)
    assert first == second


def test_trial_aborts_at_first_stage(pocket_case):
    config = SimConfig(blackout_threshold=0.99)
    result = rc_trial(pocket_case, POCKET_SCHEME, 1, config)
    assert result.aborted
    assert result.aborted_stage == 0
    assert result.simulations == 1


def test_campaign_counts(pocket_case):
    ledger = run_campaign(pocket_case, POCKET_SCHEME, 60, seed=5)
    assert ledger.trials_run == 60
    assert set(ledger.counts) == {(3, 7)}
    assert ledger.counts[(3, 7)] + ledger.trials_aborted == 60
    assert ledger.manifest["scheme"] == [10, 5]


def test_campaign_all_aborted(pocket_case):
    ledger = run_campaign(pocket_case, POCKET_SCHEME, 10, sim_config=SimConfig(blackout_threshold=0.99))
    assert ledger.trials_aborted == 10
    assert len(ledger) == 0


def test_campaign_independent_of_workers(stress_case):
    scheme = auto_scheme(stress_case.n_branches)
    serial = run_campaign(stress_case, scheme, 24, seed=11, workers=1, checkpoint_every=8)
    parallel = run_campaign(stress_case, scheme, 24, seed=11, workers=2, checkpoint_every=8)
    assert [d.to_record() for d in serial.sorted_discoveries()] == \
        [d.to_record() for d in parallel.sorted_discoveries()]
    assert serial.trials_aborted == parallel.trials_aborted


def test_campaign_resume_matches_fresh_run(pocket_case, tmp_path):
    checkpoint = tmp_path / "ledger.jsonl"
    run_campaign(pocket_case, POCKET_SCHEME, 30, seed=2, checkpoint=checkpoint, checkpoint_every=10)
    assert load_ledger(checkpoint).trials_run == 30

    resumed = run_campaign(pocket_case, POCKET_SCHEME, 50, seed=2, checkpoint=checkpoint, checkpoint_every=10)
    fresh = run_campaign(pocket_case, POCKET_SCHEME, 50, seed=2)
    assert resumed.trials_run == 50
    assert [d.trial for d in resumed.sorted_discoveries()] == [d.trial for d in fresh.sorted_discoveries()]
    assert resumed.trials_aborted == fresh.trials_aborted


def test_resume_rejects_other_campaign(pocket_case, tmp_path):
    checkpoint = tmp_path / "ledger.jsonl"
    run_campaign(pocket_case, POCKET_SCHEME, 5, seed=2, checkpoint=checkpoint)
    with pytest.raises(ValidationError, match="different campaign"):
        run_campaign(pocket_case, POCKET_SCHEME, 10, seed=3, checkpoint=checkpoint)


def test_progress_callback(pocket_case):
    calls = []
    run_campaign(pocket_case, POCKET_SCHEME, 25, checkpoint_every=10, progress=lambda *a: calls.append(a))
    assert [c[0] for c in calls] == [10, 20, 25]
    assert all(c[1] == 25 for c in calls)


def test_campaign_discoveries_are_minimal(stress_case):
    ledger = run_campaign(stress_case, auto_scheme(stress_case.n_branches), 60, seed=1)
    known = STRESS_OMEGA2 | STRESS_OMEGA3
    assert set(ledger.counts) <= known
    assert audit_ledger(stress_case, ledger) == []


def test_simulate_many_keeps_order(stress_case):
    sets = [(36, 37), (1,), (11, 12)]
    results = simulate_many(stress_case, sets)
    assert [s for s, _ in results] == sets
    assert [o.is_blackout for _, o in results] == [True, False, True]


def test_brute_force_k2(stress_case):
    found = brute_force_k2(stress_case)
    assert {m.branches for m in found} == STRESS_OMEGA2


def test_brute_force_k3_containing_pair(stress_case):
    found = brute_force_k3_containing_pair(stress_case, (29, 28))
    assert {m.branches for m in found} == {(28, 29, 30), (28, 29, 31)}


def test_brute_force_k3_with_known_pairs(stress_case):
    found = brute_force_k3_containing_pair(stress_case, (22, 23), omega2=STRESS_OMEGA2)
    assert {m.branches for m in found} == {(22, 23, 24)}


def test_brute_force_k3_rejects_malignant_pair(stress_case):
    with pytest.raises(NotMinimalizable):
        brute_force_k3_containing_pair(stress_case, (11, 12))


def test_verify_minimal(stress_case):
    assert verify_minimal(stress_case, Malignancy((19, 20), 100.0))
    assert not verify_minimal(stress_case, Malignancy((11, 12, 13), 60.0))
    assert not verify_minimal(stress_case, Malignancy((1, 2), 0.0))


def test_audit_flags_violations(stress_case):
    ledger = make_ledger([
        (0, (11, 12), 60.0),
        (1, (11, 12, 13), 60.0),
        (2, (1, 2), 0.0),
        (3, (36, 37), 50.0),
    ])
    violations = dict(audit_ledger(stress_case, ledger))
    assert (11, 12) not in violations
    assert "proper subset" in violations[(11, 12, 13)]
    assert "does not cause" in violations[(1, 2)]
    assert "differs" in violations[(36, 37)]


@pytest.mark.slow
def test_enumerate_stress_case(stress_case):
    found = enumerate_malignancies(stress_case, k_max=3)
    assert {m.branches for m in found[2]} == STRESS_OMEGA2
    assert {m.branches for m in found[3]} == STRESS_OMEGA3


@pytest.mark.slow
def test_long_campaign_recovers_every_set(stress_case):
    ledger = run_campaign(stress_case, auto_scheme(stress_case.n_branches), 20000, seed=0, workers=4)
    assert set(ledger.counts) == STRESS_OMEGA2 | STRESS_OMEGA3
