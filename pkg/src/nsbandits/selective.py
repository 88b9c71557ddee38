"""SelectiveBandits for the gap-observation model.

Each pull of arm k returns a noisy negative gap, so an arm can be ruled out
from its own samples. Ruled-out arms stay out until every arm is ruled out,
which starts a new episode with all arms restored.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .env import GAP_MODE, EnvError, EnvironmentSpec, NoiseTable, sample_reward
from .ledger import EpisodeLedger, gap_lower_bound
from .trace import RunTrace


@dataclass(frozen=True)
class SelectiveParams:
    B_star: float = 0.0

    def __post_init__(self):
        if not (self.B_star >= 0 and math.isfinite(self.B_star)):
            raise ValueError(f"B* must be finite and >= 0, got {self.B_star!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EliminationState:
    """Sticky per-episode elimination flags."""

    K: int
    eliminated: list[bool] = field(default_factory=list)
    checked_through: int = 0  # last round r whose check has been applied

    def __post_init__(self):
        if not self.eliminated:
            self.eliminated = [False] * self.K

    def restore(self) -> None:
        self.eliminated = [False] * self.K


def select_active_set(
    ledger: EpisodeLedger, params: SelectiveParams, r: int, state: EliminationState | None = None
) -> list[int]:
    """Arms whose gap lower bound has stayed at 0 at every check since the episode start.

    Without ``state`` every round of the episode is re-checked from scratch.
    """
    rho = ledger.episode_start
    if state is None:
        state = EliminationState(ledger.K, checked_through=rho)
    newly = []
    for r2 in range(max(state.checked_through, rho) + 1, r + 1):
        for k in range(ledger.K):
            if not state.eliminated[k] and gap_lower_bound(ledger, k, rho, r2, params.B_star, GAP_MODE) > 0:
                state.eliminated[k] = True
                newly.append((r2, k))
        state.checked_through = r2
    state.newly = newly
    return [k for k in range(ledger.K) if not state.eliminated[k]]


def run(env: EnvironmentSpec, params: SelectiveParams, rng) -> RunTrace:
    """Play SelectiveBandits for env.T steps; ``rng`` is a seed, NoiseTable or Generator."""
    if env.mode != GAP_MODE:
        raise EnvError("SelectiveBandits needs a gap-observation environment")
    if isinstance(rng, (int, np.integer)):
        seed, noise = int(rng), NoiseTable(int(rng), env.K, env.T)
    else:
        seed, noise = getattr(rng, "seed", None), rng
    K, T = env.K, env.T
    gaps = env.gap_table
    ledger = EpisodeLedger(K, T, GAP_MODE)
    state = EliminationState(K, checked_through=1)
    arms = np.full(T, -1, dtype=np.int64)
    rewards = np.zeros(T)
    regret = np.zeros(T)
    episode_starts = [(1, 1)]
    eliminations: list[tuple[int, int]] = []

    while ledger.next_time <= T:
        r = ledger.next_round
        active = select_active_set(ledger, params, r, state)
        eliminations.extend(state.newly)
        ledger.open_round(active)
        for k in active:
            t = ledger.next_time
            if t > T:
                break
            x = sample_reward(env, k, t, noise)
            ledger.record_pull(k, x)
            arms[t - 1], rewards[t - 1], regret[t - 1] = k, x, gaps[k, t - 1]
        rec = ledger.close_round()
        if not active:
            # Every arm is ruled out: the empty round r opens a new episode.
            ledger.reset_episode(r)
            state.restore()
            state.checked_through = r
            episode_starts.append((r, rec.start_time))

    return RunTrace(
        policy="selective",
        mode=GAP_MODE,
        K=K,
        T=T,
        seed=seed,
        env_digest=env.digest(),
        params=params.to_dict(),
        arms=arms,
        rewards=rewards,
        regret=regret,
        rounds=ledger.history,
        episode_starts=episode_starts,
        eliminations=eliminations,
    )
