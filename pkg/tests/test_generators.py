import math

import numpy as np
import pytest

from nsbandits import EnvError, EnvironmentSpec
from nsbandits.assumptions import minimal_significant_partition, validate_assumptions
from nsbandits.generators import gen_holder, gen_inflexion, gen_local_poly, gen_switching, holder_constant
from nsbandits.params import case_c_bstar, params_case_b, params_case_d


def test_switching_stationary_passes_own_partition():
    env = gen_switching(2, 100, 1, [0.0, 0.5])
    assert env.mean_table[0, 0] - env.mean_table[1, 0] == pytest.approx(0.5)
    rep = validate_assumptions(env, env.metadata["change_points"], 0.0)
    assert rep.ok and rep.M == 1


@pytest.mark.parametrize("seed", range(5))
def test_switching_random_profile(seed):
    env = gen_switching(3, 300, 4, rng=np.random.default_rng(seed))
    cps = env.metadata["change_points"]
    assert len(cps) == 5 and cps[-1] == 301
    assert validate_assumptions(env, cps, 0.0).ok
    for a, b in zip(cps, cps[1:]):
        block = env.mean_table[:, a - 1 : b - 1]
        assert (block == block[:, :1]).all()


def test_switching_rejects_profile_without_optimal_arm():
    with pytest.raises(EnvError, match="optimal arm"):
        gen_switching(2, 10, 1, [0.1, 0.5])


def test_switching_rejects_infeasible_top_mean():
    with pytest.raises(EnvError):
        gen_switching(2, 10, 1, [0.0, 0.9], top_mean=0.5)


@pytest.mark.parametrize("seed", range(8))
def test_local_poly_structure(seed):
    rng = np.random.default_rng(seed)
    K, T, M_star, gamma, u = 3, 400, 3, 2, 1.0
    env = gen_local_poly(K, T, M_star, gamma, u, rng)
    meta = env.metadata
    for norms in meta["l1_norms"]:
        assert max(norms) <= u + 1e-12
    for f in env.means:
        assert f.degree <= gamma
        assert len(f.segments) == M_star
    # Best-mean drift within K steps stays below u* K / T on the union partition.
    rep = validate_assumptions(env, [1] + meta["true_change_points"][1:], u * K / T)
    assert max(rep.drift) <= u * K / T + 1e-12
    bound = params_case_b(M_star, gamma, u, K, T)
    part = minimal_significant_partition(env, bound.B_star)
    assert part.ok and part.M <= bound.M


def test_local_poly_degree_zero_is_piecewise_constant():
    env = gen_local_poly(2, 200, 3, 0, 1.0, np.random.default_rng(4))
    for f in env.means:
        assert all(len(c) == 1 for _, c in f.segments)


def test_holder_constant_matches_pairwise_scan():
    rng = np.random.default_rng(0)
    v = rng.uniform(size=40)
    h, alpha = 0.01, 0.6
    brute = max(abs(v[i] - v[j]) / ((j - i) * h) ** alpha for i in range(40) for j in range(i + 1, 40))
    assert holder_constant(v, h, alpha) == pytest.approx(brute, rel=1e-12)


@pytest.mark.parametrize("alpha", [1.0, 0.5, 0.25])
def test_holder_chords(alpha):
    T = 150
    env = gen_holder(2, T, 2, alpha, np.random.default_rng(int(alpha * 100)))
    for k, starts in enumerate(env.metadata["change_points"]):
        mu = env.mean_table[k]
        for a, b in zip(starts, starts[1:]):
            seg = mu[a - 1 : b - 1]
            for lag in range(1, len(seg)):
                chord = np.abs(seg[lag:] - seg[:-lag]).max()
                assert chord <= (lag / T) ** alpha + 1e-12
    B = case_c_bstar(alpha, 2, T)
    part = minimal_significant_partition(env, B)
    # Counting bound: K (B*)^(-1/alpha) + M*.
    assert part.ok and part.M <= 2 * B ** (-1 / alpha) + 2


def _sign_changes(d):
    s = np.sign(d[np.abs(d) > 1e-12])
    return int((s[1:] != s[:-1]).sum())


@pytest.mark.parametrize("seed", range(6))
def test_inflexion_monotone_pieces(seed):
    K, T, ups, B = 3, 500, 2, 0.01
    env = gen_inflexion(K, T, ups, B, np.random.default_rng(seed))
    for k in range(K):
        assert _sign_changes(np.diff(env.gap_table[k])) <= ups - 1
    best = env.metadata["best_arm"]
    assert (env.gap_table[best] == 0).all()
    rep = validate_assumptions(env, [1, T + 1], B)
    assert max(rep.drift) <= B
    cp = params_case_d(ups, B, K, T)
    part = minimal_significant_partition(env, B)
    assert part.ok and part.M <= cp.M


@pytest.mark.parametrize(
    "make",
    [
        lambda s: gen_local_poly(2, 100, 2, 1, 0.8, np.random.default_rng(s)),
        lambda s: gen_holder(2, 100, 2, 0.7, np.random.default_rng(s)),
        lambda s: gen_inflexion(2, 100, 3, 0.05, np.random.default_rng(s)),
    ],
)
def test_generators_are_deterministic_and_round_trip(make):
    a, b = make(9), make(9)
    assert a.to_json() == b.to_json()
    back = EnvironmentSpec.from_json(a.to_json())
    assert np.array_equal(back.mean_table, a.mean_table)
    assert make(10).to_json() != a.to_json()


def test_generator_parameter_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(EnvError):
        gen_holder(2, 10, 1, 1.5, rng)
    with pytest.raises(EnvError):
        gen_local_poly(2, 10, 0, 1, 1.0, rng)
    with pytest.raises(EnvError):
        gen_inflexion(2, 10, 0, 0.1, rng)
    with pytest.raises(EnvError):
        gen_switching(2, 5, 6, [0.0, 0.1])
