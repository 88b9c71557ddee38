import math

import numpy as np
import pytest

from nsbandits.ledger import (
    ContractError,
    EpisodeLedger,
    confidence_radius,
    exploration_quota,
    gap_estimate,
    gap_lower_bound,
    gap_rel_estimate,
    own_gap_estimate,
    persistent_set,
    pull_count,
    recency,
    round_start_time,
)

from oracles import b_gap, b_gap_rel, b_persistent, b_pull_count, fill_ledger, random_rounds


def test_round_start_times():
    led = fill_ledger([{0: 1.0, 1: 0.0}, {1: 0.5}, {0: 0.2, 1: 0.1, 2: 0.3}], K=3)
    assert [round_start_time(led, r) for r in (1, 2, 3, 4)] == [1, 3, 4, 7]


def test_pull_order_enforced():
    led = EpisodeLedger(3, 10)
    led.open_round([0, 2])
    led.record_pull(2, 0.5)
    with pytest.raises(RuntimeError, match="increasing"):
        led.record_pull(0, 0.5)
    with pytest.raises(RuntimeError):
        led.record_pull(1, 0.5)


def test_window_validation():
    led = fill_ledger([{0: 1.0, 1: 0.0}] * 3, K=2)
    with pytest.raises(ValueError):
        persistent_set(led, 2, 2)
    with pytest.raises(ValueError):
        persistent_set(led, 1, 5)


def test_gap_rel_requires_persistent_comparator():
    led = fill_ledger([{0: 1.0, 1: 0.0}, {0: 1.0}], K=2)
    assert gap_rel_estimate(led, 0, 0, 1, 3) == 0.0
    with pytest.raises(ContractError):
        gap_rel_estimate(led, 0, 1, 1, 3)
    assert gap_rel_estimate(led, 1, 0, 1, 3) == 1.0


def test_gap_estimate_empty_persistent_set():
    led = fill_ledger([{0: 1.0}, {1: 0.0}], K=2)
    with pytest.raises(ContractError):
        gap_estimate(led, 0, 1, 3)


def test_gap_estimate_witness_lowest_index_on_ties():
    led = fill_ledger([{0: 0.7, 1: 0.7, 2: 0.2}], K=3)
    assert gap_estimate(led, 2, 1, 2) == (pytest.approx(0.5), 0)


@pytest.mark.parametrize("seed", range(200))
def test_estimators_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    K, R = int(rng.integers(2, 6)), int(rng.integers(1, 21))
    rounds = random_rounds(rng, K, R)
    led = fill_ledger(rounds, K)
    for r1 in range(1, R + 1):
        for r in range(r1 + 1, R + 2):
            S = persistent_set(led, r1, r)
            assert S == b_persistent(rounds, K, r1, r)
            for k in range(K):
                assert pull_count(led, k, r1, r) == b_pull_count(rounds, k, r1, r)
                for j in S:
                    assert abs(gap_rel_estimate(led, k, j, r1, r) - b_gap_rel(rounds, k, j, r1, r)) <= 1e-12
                if S:
                    assert abs(gap_estimate(led, k, r1, r)[0] - b_gap(rounds, K, k, r1, r)) <= 1e-12


def test_reset_keeps_rounds_from_start():
    rounds = [{0: 1.0, 1: 0.0}] * 4 + [{0: 0.0, 1: 1.0}] * 2
    led = fill_ledger(rounds, K=2)
    led.frozen_quota[1] = 3.0
    led.reset_episode(5)
    assert led.episode_start == 5 and led.episode_index == 2 and led.next_round == 7
    assert led.frozen_quota == [None, None]
    assert gap_estimate(led, 0, 5, 7)[0] == 1.0
    with pytest.raises(ValueError):
        pull_count(led, 0, 4, 7)
    assert len(led.history) == 6


def test_confidence_radius_modes():
    led = EpisodeLedger(2, 100)
    L = math.log(4e6)
    assert confidence_radius(led, 8) == pytest.approx(math.sqrt(2 * L / 8))
    assert confidence_radius(led, 8, "gap") == pytest.approx(math.sqrt(L / 16))


def test_lower_bound_closed_form():
    # Zero noise, gap 0.5, K=2, T=100: positive once 0.5 > sqrt(2 ln(4e6) / n), i.e. n >= 122.
    led = fill_ledger([{0: 0.9, 1: 0.4}] * 122, K=2, T=100)
    assert gap_lower_bound(led, 1, 1, 122, 0.0) == 0.0
    assert gap_lower_bound(led, 1, 1, 123, 0.0) > 0.0
    assert gap_lower_bound(led, 1, 1, 123, 0.1) == 0.0
    assert gap_lower_bound(led, 0, 1, 123, 0.0) == 0.0


def test_gap_mode_lower_bound():
    # Gap observations of -0.9, T=100: slack 2 * 0.1, radius sqrt(ln(4e6) / (2n)); positive from n = 16.
    led = fill_ledger([{0: 0.0, 1: -0.9}] * 16, K=2, T=100, mode="gap")
    assert own_gap_estimate(led, 1, 1, 17) == pytest.approx(0.9)
    assert gap_lower_bound(led, 1, 1, 16, 0.0, "gap") == 0.0
    assert gap_lower_bound(led, 1, 1, 17, 0.0, "gap") > 0.0


def test_recency():
    led = fill_ledger([{0: 1.0, 1: 0.0}, {0: 1.0}, {0: 1.0}], K=2)
    # Arm 1 last pulled at t=2; round 4 starts at t=5.
    assert recency(led, 1, 4) == 3
    assert recency(led, 0, 4) == 1
    # Past round 3 starts at t=4; arm 0's last pull before it is t=3.
    assert recency(led, 0, 3) == 1
    assert recency(led, 1, 3) == 2
    fresh = EpisodeLedger(2, 10)
    assert recency(fresh, 0, 1) == 1


def test_quota_freezes_at_first_positive_bound():
    T, K = 100, 2
    led = fill_ledger([{0: 0.9, 1: 0.4}] * 122, K=K, T=T)
    assert exploration_quota(led, 1, 122, 0.0, 1) == 0.0
    for _ in range(5):
        led.open_round([0, 1])
        led.record_pull(0, 0.9)
        led.record_pull(1, 0.0)  # later data must not move the frozen value
        led.close_round()
    q = exploration_quota(led, 1, 128, 0.0, 1)
    assert q == pytest.approx(0.5 * math.sqrt(T * K))
    assert exploration_quota(led, 1, 128, 0.0, 1) == q
    tilde = fill_ledger([{0: 0.9, 1: 0.4}] * 122, K=K, T=T)
    lb = gap_lower_bound(tilde, 1, 1, 123, 0.0)
    assert exploration_quota(tilde, 1, 123, 0.0, 1, value="tilde") == pytest.approx(lb * math.sqrt(T * K))


def test_quota_errors():
    led = EpisodeLedger(2, 10)
    with pytest.raises(ValueError):
        exploration_quota(led, 0, 1, 0.0, 0)
    with pytest.raises(ValueError):
        exploration_quota(led, 0, 1, 0.0, 1, value="other")


def test_dump_jsonl(tmp_path):
    import json

    led = fill_ledger([{0: 1.0, 1: 0.0}, {1: 0.5}], K=2)
    path = tmp_path / "ledger.jsonl"
    with path.open("w") as fh:
        led.dump_jsonl(fh)
    recs = [json.loads(line) for line in path.read_text().splitlines()]
    assert recs[1] == {"r": 2, "t_r": 3, "active": [1], "pulls": [[1, 3]], "obs": [0.5], "quotas": None, "recencies": None}
