"""Episode bookkeeping and the gap estimators built on it.

Rounds are numbered from 1 over the whole run; ``episode_start`` is the round
at which the current episode began. Window arguments ``(r1, r)`` denote the
rounds ``r1, ..., r - 1`` and must lie inside the current episode.

Per-episode prefix sums make every window statistic O(K^2):
``counts[j, k]`` is the number of the first j episode rounds in which arm k
was pulled and ``pairs[j, k, k2]`` sums ``X(k2)`` over those of them in which
arm k was pulled.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .env import GAP_MODE, MEAN_MODE, log_term


class ContractError(ValueError):
    """An estimator was called outside the domain where it is defined."""


@dataclass
class RoundRecord:
    r: int
    start_time: int
    active_set: tuple[int, ...]
    observations: list[tuple[int, int, float]] = field(default_factory=list)  # (arm, time, value)
    quotas: tuple[float, ...] | None = None
    recencies: tuple[int, ...] | None = None

    @property
    def pulled(self) -> list[int]:
        return [k for k, _, _ in self.observations]

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "t_r": self.start_time,
            "active": list(self.active_set),
            "pulls": [[k, t] for k, t, _ in self.observations],
            "obs": [x for _, _, x in self.observations],
            "quotas": None if self.quotas is None else list(self.quotas),
            "recencies": None if self.recencies is None else list(self.recencies),
        }


class EpisodeLedger:
    """Single-writer record of one run, with the current episode indexed."""

    def __init__(self, K: int, T: int, mode: str = MEAN_MODE):
        if K < 1 or T < 1:
            raise ValueError(f"need K >= 1 and T >= 1, got K={K}, T={T}")
        self.K = K
        self.T = T
        self.mode = mode
        self.log_level = log_term(K, T)
        self.episode_start = 1
        self.episode_index = 1
        self.rounds: list[RoundRecord] = []  # current episode only
        self.history: list[RoundRecord] = []  # whole run
        self.round_starts: dict[int, int] = {}  # t_r for every opened round
        self.next_time = 1
        self.last_pull_time: list[int | None] = [None] * K
        self.frozen_quota: list[float | None] = [None] * K
        self._quota_checked = [1] * K  # largest r'' already tested, per arm
        self._open: RoundRecord | None = None
        self._alloc(64)

    # -- storage -----------------------------------------------------------
    def _alloc(self, capacity: int) -> None:
        self.counts = np.zeros((capacity + 1, self.K), dtype=np.int64)
        self.pairs = np.zeros((capacity + 1, self.K, self.K), dtype=float)

    def _grow(self) -> None:
        n = len(self.rounds)
        if n + 1 < len(self.counts):
            return
        counts, pairs = self.counts, self.pairs
        self._alloc(2 * len(counts))
        self.counts[: n + 1] = counts[: n + 1]
        self.pairs[: n + 1] = pairs[: n + 1]

    def _append_prefix(self, rec: RoundRecord) -> None:
        self._grow()
        n = len(self.rounds)
        mask = np.zeros(self.K)
        vals = np.zeros(self.K)
        for k, _, x in rec.observations:
            mask[k] = 1.0
            vals[k] = x
        self.counts[n + 1] = self.counts[n] + mask.astype(np.int64)
        self.pairs[n + 1] = self.pairs[n] + np.outer(mask, vals)
        self.rounds.append(rec)

    # -- round lifecycle ---------------------------------------------------
    @property
    def next_round(self) -> int:
        return self.episode_start + len(self.rounds)

    @property
    def n_rounds(self) -> int:
        """Completed rounds in the current episode."""
        return len(self.rounds)

    def open_round(self, active: Iterable[int], quotas=None, recencies=None) -> RoundRecord:
        if self._open is not None:
            raise RuntimeError("previous round still open")
        active = tuple(sorted(int(k) for k in active))
        rec = RoundRecord(self.next_round, self.next_time, active, quotas=quotas, recencies=recencies)
        self.round_starts[rec.r] = self.next_time
        self._open = rec
        return rec

    def record_pull(self, k: int, value: float) -> int:
        rec = self._open
        if rec is None or k not in rec.active_set:
            raise RuntimeError(f"arm {k} is not active in the open round")
        if rec.observations and rec.observations[-1][0] >= k:
            raise RuntimeError("arms must be pulled once each, in increasing index order")
        t = self.next_time
        rec.observations.append((k, t, float(value)))
        self.last_pull_time[k] = t
        self.next_time += 1
        return t

    def close_round(self) -> RoundRecord:
        rec = self._open
        if rec is None:
            raise RuntimeError("no open round")
        self._open = None
        self._append_prefix(rec)
        self.history.append(rec)
        return rec

    def reset_episode(self, start_round: int | None = None) -> None:
        """Start a new episode at ``start_round`` (default: the last closed round).

        Rounds before ``start_round`` are dropped from the estimators and the
        frozen exploration quotas are cleared.
        """
        if self._open is not None:
            raise RuntimeError("cannot reset with an open round")
        start = self.next_round - 1 if start_round is None else start_round
        if not self.episode_start <= start <= self.next_round:
            raise ValueError(f"episode start {start} outside the current episode")
        kept = self.rounds[start - self.episode_start :]
        self.episode_start = start
        self.episode_index += 1
        self.rounds = []
        self._alloc(max(64, 2 * len(kept)))
        for rec in kept:
            self._append_prefix(rec)
        self.frozen_quota = [None] * self.K
        self._quota_checked = [start] * self.K

    # -- window helpers ----------------------------------------------------
    def window(self, r1: int, r: int) -> tuple[int, int]:
        """Episode-relative prefix indices of rounds [r1, r)."""
        if r1 >= r:
            raise ValueError(f"empty or reversed window [{r1}, {r})")
        if r1 < self.episode_start or r > self.next_round:
            raise ValueError(
                f"window [{r1}, {r}) outside episode rounds [{self.episode_start}, {self.next_round})"
            )
        return r1 - self.episode_start, r - self.episode_start

    def dump_jsonl(self, fh: IO[str]) -> None:
        for rec in self.history:
            fh.write(json.dumps(rec.to_dict(), separators=(",", ":")) + "\n")


def round_start_time(ledger: EpisodeLedger, r: int) -> int:
    """t_r: 1 for the first round, else 1 + total active-set sizes before r."""
    if r in ledger.round_starts:
        return ledger.round_starts[r]
    if r == ledger.next_round and ledger._open is None:
        return ledger.next_time
    raise ValueError(f"unknown round {r} (next round is {ledger.next_round})")


def persistent_set(ledger: EpisodeLedger, r1: int, r: int) -> list[int]:
    """Arms present in the active set of every round r1, ..., r-1."""
    u, v = ledger.window(r1, r)
    cnt = ledger.counts[v] - ledger.counts[u]
    return [k for k in range(ledger.K) if cnt[k] == v - u]


def pull_count(ledger: EpisodeLedger, k: int, r1: int, r: int) -> int:
    u, v = ledger.window(r1, r)
    return int(ledger.counts[v, k] - ledger.counts[u, k])


def gap_rel_estimate(ledger: EpisodeLedger, k: int, k2: int, r1: int, r: int) -> float:
    """Average of X(k2) - X(k) over the rounds of [r1, r) where k was pulled."""
    u, v = ledger.window(r1, r)
    cnt = ledger.counts[v] - ledger.counts[u]
    if cnt[k2] != v - u:
        raise ContractError(f"arm {k2} is not persistent on rounds [{r1}, {r})")
    n = int(cnt[k])
    if n == 0:
        return 0.0
    pair = ledger.pairs[v, k] - ledger.pairs[u, k]
    return float((pair[k2] - pair[k]) / n)


def gap_estimate(ledger: EpisodeLedger, k: int, r1: int, r: int) -> tuple[float, int]:
    """Largest comparison estimate over the persistent set, with its witness."""
    u, v = ledger.window(r1, r)
    cnt = ledger.counts[v] - ledger.counts[u]
    persistent = [j for j in range(ledger.K) if cnt[j] == v - u]
    if not persistent:
        raise ContractError(f"no arm is persistent on rounds [{r1}, {r})")
    n = int(cnt[k])
    if n == 0:
        return 0.0, persistent[0]
    pair = ledger.pairs[v, k] - ledger.pairs[u, k]
    best, witness = -math.inf, persistent[0]
    for j in persistent:
        val = float((pair[j] - pair[k]) / n)
        if val > best:
            best, witness = val, j
    return best, witness


def own_gap_estimate(ledger: EpisodeLedger, k: int, r1: int, r: int) -> float:
    """Gap-observation estimate: minus the average of arm k's own observations."""
    u, v = ledger.window(r1, r)
    n = int(ledger.counts[v, k] - ledger.counts[u, k])
    if n == 0:
        return 0.0
    return float(-(ledger.pairs[v, k, k] - ledger.pairs[u, k, k]) / n)


def confidence_radius(ledger: EpisodeLedger, n: int, mode: str = MEAN_MODE) -> float:
    if mode == MEAN_MODE:
        return math.sqrt(2.0 * ledger.log_level / n)
    return math.sqrt(ledger.log_level / (2.0 * n))


def gap_lower_bound(
    ledger: EpisodeLedger, k: int, r1: int, r: int, B_star: float, mode: str = MEAN_MODE
) -> float:
    """High-probability lower bound on arm k's gap over rounds [r1, r)."""
    if B_star < 0:
        raise ValueError(f"B* must be non-negative, got {B_star}")
    n = pull_count(ledger, k, r1, r)
    if n == 0:
        return 0.0
    if mode == MEAN_MODE:
        est = gap_estimate(ledger, k, r1, r)[0]
        slack = 2.0 * B_star
    elif mode == GAP_MODE:
        est = own_gap_estimate(ledger, k, r1, r)
        slack = 2.0 * max(ledger.T**-0.5, B_star)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return max(0.0, est - confidence_radius(ledger, n, mode) - slack)


def recency(ledger: EpisodeLedger, k: int, r: int) -> int:
    """Steps since arm k's last pull, measured from the start of round r."""
    t_r = round_start_time(ledger, r)
    s = ledger.last_pull_time[k]
    if s is not None and s >= t_r:
        # r is a past round: look up the last pull before it.
        earlier = [t for rec in ledger.history for j, t, _ in rec.observations if j == k and t < t_r]
        s = max(earlier, default=None)
    return t_r if s is None else t_r - s


def exploration_quota(
    ledger: EpisodeLedger,
    k: int,
    r: int,
    B_star: float,
    M: int,
    T: int | None = None,
    K: int | None = None,
    value: str = "hat",
) -> float:
    """Forced-exploration spacing for arm k at round r.

    Zero until the gap lower bound over [episode start, r'') first turns
    positive for some r'' <= r; from that round on, the raw gap estimate at
    r'' times sqrt(T K / M), frozen until the episode ends. ``value="tilde"``
    freezes the lower bound instead of the raw estimate.
    """
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    if value not in ("hat", "tilde"):
        raise ValueError(f"unknown quota value rule {value!r}")
    T = ledger.T if T is None else T
    K = ledger.K if K is None else K
    if r > ledger.next_round:
        raise ValueError(f"round {r} has not been reached")
    rho = ledger.episode_start
    frozen = ledger.frozen_quota[k]
    if frozen is not None:
        return frozen
    scale = math.sqrt(T * K / M)
    for r2 in range(max(ledger._quota_checked[k], rho) + 1, r + 1):
        ledger._quota_checked[k] = r2
        lower = gap_lower_bound(ledger, k, rho, r2, B_star, MEAN_MODE)
        if lower > 0:
            est = gap_estimate(ledger, k, rho, r2)[0] if value == "hat" else lower
            ledger.frozen_quota[k] = est * scale
            return ledger.frozen_quota[k]
    return 0.0
