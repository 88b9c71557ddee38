"""Acceptance suite: one test per numbered criterion.

Each test prints ``criterion N: PASS|FAIL <measurements>``; the lines are
repeated in a summary section at the end of the pytest run.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from nsbandits import NoiseModel, PrudentParams, SelectiveParams
from nsbandits import prudent, selective
from nsbandits.assumptions import minimal_significant_partition
from nsbandits.generators import gen_holder, gen_inflexion, gen_local_poly, gen_switching
from nsbandits.harness import RunConfig, run_experiment
from nsbandits.ledger import gap_estimate, gap_rel_estimate, persistent_set, pull_count
from nsbandits.params import params_case_b, params_case_c, params_case_d

from conftest import ACCEPTANCE, constant_env, step_env
from oracles import b_gap, b_gap_rel, b_persistent, b_pull_count, fill_ledger, random_rounds

ROOT = Path(__file__).resolve().parents[1]
SEEDS = range(100)


def verdict(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE.append(line)
    return ok


def test_criterion_01_noiseless_prudent_regression():
    t0 = time.perf_counter()
    tr = prudent.run(constant_env([0.9, 0.4], 100), PrudentParams(1, 0.0), 0)
    dt = time.perf_counter() - t0
    ok = tr.total_regret == 25.0 and not tr.detections and tr.episodes == 1 and dt < 1.0
    assert verdict(1, ok, f"regret={tr.total_regret!r} detections={len(tr.detections)} episodes={tr.episodes} time={dt:.2f}s")


def test_criterion_02_noiseless_selective_regression():
    t0 = time.perf_counter()
    tr = selective.run(constant_env([0.9, 0.0], 100, mode="gap"), SelectiveParams(0.0), 0)
    dt = time.perf_counter() - t0
    pulls = int(tr.pull_counts()[1])
    ok = tr.eliminations == [(17, 1)] and pulls == 16 and tr.total_regret == 14.4 and dt < 1.0
    assert verdict(2, ok, f"arm-2 pulls={pulls} eliminations={tr.eliminations} regret={tr.total_regret!r} time={dt:.2f}s")


def test_criterion_03_estimators_match_brute_force():
    rng = np.random.default_rng(20240603)
    t0 = time.perf_counter()
    worst, checks = 0.0, 0
    for _ in range(1000):
        K, R = int(rng.integers(2, 6)), int(rng.integers(1, 21))
        rounds = random_rounds(rng, K, R)
        led = fill_ledger(rounds, K)
        for _ in range(3):
            r1 = int(rng.integers(1, R + 1))
            r = int(rng.integers(r1 + 1, R + 2))
            S = persistent_set(led, r1, r)
            assert S == b_persistent(rounds, K, r1, r)
            for k in range(K):
                assert pull_count(led, k, r1, r) == b_pull_count(rounds, k, r1, r)
                for j in S:
                    worst = max(worst, abs(gap_rel_estimate(led, k, j, r1, r) - b_gap_rel(rounds, k, j, r1, r)))
                if S:
                    worst = max(worst, abs(gap_estimate(led, k, r1, r)[0] - b_gap(rounds, K, k, r1, r)))
                checks += 1
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 5.0
    assert verdict(3, ok, f"ledgers=1000 arm-window checks={checks} max|diff|={worst:.2e} time={dt:.2f}s")


def test_criterion_04_no_spurious_detection():
    env = constant_env([0.7, 0.3], 2000, noise="bernoulli")
    t0 = time.perf_counter()
    traces = [prudent.run(env, PrudentParams(1, 0.0), s) for s in SEEDS]
    dt = time.perf_counter() - t0
    with_det = sum(bool(tr.detections) for tr in traces)
    forced = sum(tr.forced_rounds for tr in traces)
    ok = with_det <= 5 and forced == 0 and dt < 60
    assert verdict(4, ok, f"seeds with a detection={with_det}/100 (limit 5) forced rounds={forced} time={dt:.1f}s")


def jump_env():
    # Arm 1's gap jumps 0 -> 0.9 at t = 1001; arm 2 stays optimal.
    return step_env([1, 1001], [(0.95, 0.05), (0.95, 0.95)], T=2000, noise="bernoulli")


def test_criterion_05_change_detected_within_window():
    env = jump_env()
    tau = 1001
    t0 = time.perf_counter()
    timely, clean, delays, forced = 0, 0, [], 0
    for s in SEEDS:
        tr = prudent.run(env, PrudentParams(2, 0.0), s)
        forced += tr.forced_rounds
        times = [ev.time for ev in tr.detections]
        clean += not any(t < tau for t in times)
        post = [t for t in times if t >= tau]
        if post:
            delays.append(post[0] - tau)
            timely += post[0] - tau <= 600
    dt = time.perf_counter() - t0
    ok = timely >= 90 and clean >= 95 and dt < 120
    med = float(np.median(delays)) if delays else float("nan")
    assert verdict(
        5,
        ok,
        f"detected within 600 steps={timely}/100 (need 90) no pre-change detection={clean}/100 (need 95) "
        f"detected at all={len(delays)} median delay={med:.0f} forced rounds={forced} time={dt:.1f}s",
    )


def test_criterion_06_regret_scaling():
    K, M = 2, 3
    means = {}
    t0 = time.perf_counter()
    for T in (2000, 8000):
        env = gen_switching(K, T, M, [[0.0, 0.5], [0.5, 0.0], [0.0, 0.5]], top_mean=0.75,
                            noise=NoiseModel("bernoulli"))
        regrets = [prudent.run(env, PrudentParams(M, 0.0), s).total_regret for s in range(50)]
        means[T] = math.fsum(regrets) / len(regrets)
    dt = time.perf_counter() - t0
    ratio = means[8000] / means[2000]
    C = max(means[T] / (math.log(T) * math.sqrt(K * T * M)) for T in means)
    ok = 1.2 <= ratio <= 3.2 and C <= 30 and dt < 300
    assert verdict(
        6,
        ok,
        f"mean regret T=2000: {means[2000]:.1f}, T=8000: {means[8000]:.1f}, ratio={ratio:.2f} (need [1.2, 3.2]) "
        f"fitted C={C:.2f} (need <= 30) time={dt:.0f}s",
    )


def test_criterion_07_case_parameter_formulas():
    b = params_case_b(2, 1, 1.0, 3, 1024)
    d = params_case_d(3, 0.05, 2, 10**4)
    c1 = params_case_c(1, 1.0, 2, 1000)
    c2 = params_case_c(1, 0.5, 1, 10**4)
    # References evaluated with 40-digit arithmetic outside the package.
    err = max(abs(c1.B_star - 0.0575764158022777370), abs(c2.B_star - 0.0303485425877029270))
    ok = b.M == 72 and d.M == 42 and err <= 1e-9
    assert verdict(7, ok, f"case b M={b.M} (72) case d M={d.M} (42) case c max|B* diff|={err:.1e}")


def test_criterion_08_partition_within_derived_M():
    t0 = time.perf_counter()
    setups = {
        "local_poly": (lambda g: gen_local_poly(2, 1024, 2, 2, 1.0, g), params_case_b(2, 2, 1.0, 2, 1024)),
        "holder": (lambda g: gen_holder(2, 1000, 2, 1.0, g), params_case_c(2, 1.0, 2, 1000)),
        "inflexion": (lambda g: gen_inflexion(2, 10**4, 3, 0.01, g), params_case_d(3, 0.01, 2, 10**4)),
    }
    parts, all_ok = [], True
    for name, (make, cp) in setups.items():
        good, worst = 0, 0
        for s in range(20):
            rep = minimal_significant_partition(make(np.random.default_rng(s)), cp.B_star)
            good += rep.ok and rep.M <= cp.M
            worst = max(worst, rep.M)
        all_ok &= good == 20
        parts.append(f"{name}: {good}/20 (max M'={worst}, derived M={cp.M})")
    dt = time.perf_counter() - t0
    assert verdict(8, all_ok and dt < 120, "; ".join(parts) + f" time={dt:.1f}s")


def test_criterion_09_episode_isolation():
    t0 = time.perf_counter()
    env = step_env([1, 401, 1201], [(0.95, 0.05, 0.9), (0.05, 0.95, 0.1)], T=1600, noise="bernoulli")
    replays, mismatches = 0, 0
    for s in range(10):
        full = prudent.run(env, PrudentParams(3), s)
        for i, ev in enumerate(full.detections):
            replay = prudent.run(env, PrudentParams(3), s, resume=prudent.ResumeState.from_trace(full, i))
            want = [(rec.r, rec.active_set, rec.pulled) for rec in full.rounds if rec.r >= ev.r]
            got = [(rec.r, rec.active_set, rec.pulled) for rec in replay.rounds]
            replays += 1
            mismatches += want != got or full.detections[i + 1 :] != replay.detections
    dt = time.perf_counter() - t0
    ok = replays > 0 and mismatches == 0 and dt < 60
    assert verdict(9, ok, f"replayed episodes={replays} mismatches={mismatches} time={dt:.1f}s")


def test_criterion_10_end_to_end_determinism(tmp_path):
    doc = json.loads((ROOT / "configs" / "acceptance.json").read_text())
    digests = []
    t0 = time.perf_counter()
    for i in range(2):
        out = tmp_path / f"run{i}"
        doc["outputs"] = {"csv": str(out / "regret.csv"), "json": str(out / "report.json")}
        run_experiment(RunConfig.from_dict(doc))
        digests.append(((out / "regret.csv").read_bytes(), (out / "report.json").read_bytes()))
    dt = time.perf_counter() - t0
    ok = digests[0] == digests[1] and dt < 60
    assert verdict(10, ok, f"csv identical={digests[0][0] == digests[1][0]} json identical={digests[0][1] == digests[1][1]} "
                           f"time={dt:.1f}s")
