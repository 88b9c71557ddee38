"""PrudentBandits: round-based sampling with forced exploration and change detection."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .env import MEAN_MODE, EnvError, EnvironmentSpec, NoiseTable, sample_reward
from .ledger import EpisodeLedger, RoundRecord, exploration_quota, recency
from .trace import DetectionEvent, RunTrace

log = logging.getLogger(__name__)

SCAN_MODES = ("geometric-grid", "exhaustive")
# Candidate filter margin; every candidate is re-checked with the exact inequality.
_SCREEN_SLACK = 1e-9


@dataclass(frozen=True)
class PrudentParams:
    M: int
    B_star: float = 0.0
    scan_mode: str = "geometric-grid"
    grid_base: float = 2.0
    symmetric: bool = False
    quota_value: str = "hat"

    def __post_init__(self):
        if not (isinstance(self.M, (int, np.integer)) and self.M >= 1):
            raise ValueError(f"M must be an integer >= 1, got {self.M!r}")
        if not (self.B_star >= 0 and math.isfinite(self.B_star)):
            raise ValueError(f"B* must be finite and >= 0, got {self.B_star!r}")
        if self.scan_mode not in SCAN_MODES:
            raise ValueError(f"scan_mode must be one of {SCAN_MODES}, got {self.scan_mode!r}")
        if not self.grid_base > 1:
            raise ValueError(f"grid_base must exceed 1, got {self.grid_base!r}")
        if self.quota_value not in ("hat", "tilde"):
            raise ValueError(f"quota_value must be 'hat' or 'tilde', got {self.quota_value!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ResumeState:
    """Where to restart a run: the round that opened an episode, plus pull times before it."""

    record: RoundRecord
    last_pull_time: tuple[int | None, ...]

    @classmethod
    def from_trace(cls, trace: RunTrace, detection: int = 0) -> ResumeState:
        ev = trace.detections[detection]
        rec = next(rec for rec in trace.rounds if rec.r == ev.r)
        end = rec.observations[-1][1]
        last: list[int | None] = [None] * trace.K
        for i in range(end):
            if trace.arms[i] >= 0:
                last[trace.arms[i]] = i + 1
        return cls(rec, tuple(last))


def _select(ledger: EpisodeLedger, params: PrudentParams, r: int):
    quotas = tuple(
        exploration_quota(ledger, k, r, params.B_star, params.M, value=params.quota_value)
        for k in range(ledger.K)
    )
    recs = tuple(recency(ledger, k, r) for k in range(ledger.K))
    active = [k for k in range(ledger.K) if quotas[k] <= recs[k]]
    forced = False
    if not active:
        k = min(range(ledger.K), key=lambda j: quotas[j] - recs[j])
        log.warning("round %d: no arm qualifies, forcing arm %d", r, k)
        active, forced = [k], True
    return active, quotas, recs, forced


def select_active_set(ledger: EpisodeLedger, params: PrudentParams, r: int) -> list[int]:
    """Arms whose exploration quota does not exceed their recency, in index order."""
    return _select(ledger, params, r)[0]


def scan_endpoints(n: int, scan_mode: str = "geometric-grid", grid_base: float = 2.0) -> np.ndarray:
    """Episode-relative window endpoints for an episode with ``n`` complete rounds."""
    if scan_mode == "exhaustive":
        return np.arange(n + 1)
    pts = {0, n - 1, n}
    i = 0
    while True:
        e = math.ceil(grid_base**i)
        if e >= n:
            break
        pts.add(e)
        i += 1
    return np.array(sorted(p for p in pts if p >= 0))


def window_table(ledger: EpisodeLedger, ends: np.ndarray):
    """Gap estimates and pull counts of every window between two endpoints.

    Returns ``(U, V, est, n, ok)``: windows ``[U, V)`` in lexicographic order,
    estimates and counts of shape (W, K), and a mask of windows that have a
    persistent arm.
    """
    iu, iv = np.triu_indices(len(ends), k=1)
    U, V = ends[iu], ends[iv]
    cnt = ledger.counts[V] - ledger.counts[U]
    pers = cnt == (V - U)[:, None]
    pair = ledger.pairs[V] - ledger.pairs[U]
    diag = np.einsum("wkk->wk", pair)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = (pair - diag[:, :, None]) / cnt[:, :, None]
    rel = np.where(pers[:, None, :], rel, -np.inf)
    est = rel.max(axis=2)
    est = np.where(cnt > 0, est, 0.0)
    return U, V, est, cnt, pers.any(axis=1)


def _screen(a, n, c, twoB, symmetric):
    """Windows that may satisfy the inequality against some partner (superset)."""
    order = np.argsort(n, kind="stable")
    ns, as_, cs = n[order], a[order], c[order]
    pos = np.searchsorted(ns, n, side="left")  # first partner with n2 >= n1
    suf_min = np.append(np.minimum.accumulate(as_[::-1])[::-1], np.inf)
    suf_max = np.append(np.maximum.accumulate(as_[::-1])[::-1], -np.inf)
    pre_neg = np.concatenate(([-np.inf], np.maximum.accumulate(-as_ - cs)))
    lo, hi = suf_min[pos], suf_max[pos]
    if symmetric:
        cand = -lo >= a + c + twoB - _SCREEN_SLACK
        cand |= pre_neg[pos] >= a + twoB - _SCREEN_SLACK
        return cand
    pre_pos = np.concatenate(([-np.inf], np.maximum.accumulate(as_ - cs)))
    cand = np.maximum(a - lo, hi - a) >= 2 * a + c + twoB - _SCREEN_SLACK
    cand |= pre_neg[pos] >= a + twoB - _SCREEN_SLACK
    cand |= pre_pos[pos] >= 3 * a + twoB - _SCREEN_SLACK
    return cand


def cp_detect(ledger: EpisodeLedger, params: PrudentParams, r: int) -> DetectionEvent | None:
    """First arm and window quadruple inside complete rounds [rho, r) violating stationarity."""
    rho = ledger.episode_start
    if r <= rho:
        raise ValueError(f"cp_detect needs r > rho, got r={r}, rho={rho}")
    n_rounds = r - rho
    if n_rounds > ledger.n_rounds:
        raise ValueError(f"round {r - 1} is not complete")
    ends = scan_endpoints(n_rounds, params.scan_mode, params.grid_base)
    U, V, est, cnt, ok = window_table(ledger, ends)
    L = ledger.log_level
    twoB = 2.0 * params.B_star
    for k in range(ledger.K):
        idx = np.flatnonzero(ok & (cnt[:, k] > 0))
        if len(idx) == 0:
            continue
        a = est[idx, k]
        n = cnt[idx, k]
        c = 2.0 * np.sqrt(2.0 * L / n)
        for i in np.flatnonzero(_screen(a, n, c, twoB, params.symmetric)):
            nmin = np.minimum(n[i], n)
            base = np.maximum(a[i], a) if params.symmetric else a[i]
            rhs = 2.0 * base + 2.0 * np.sqrt(2.0 * L / nmin) + twoB
            hit = np.flatnonzero(np.abs(a[i] - a) >= rhs)
            if len(hit):
                j = hit[0]
                w1, w2 = idx[i], idx[j]
                return DetectionEvent(
                    r=r,
                    arm=k,
                    u=int(rho + U[w1]),
                    v=int(rho + V[w1]),
                    u2=int(rho + U[w2]),
                    v2=int(rho + V[w2]),
                    left=float(a[i]),
                    right=float(a[j]),
                    threshold=float(rhs[j]),
                    n_min=int(nmin[j]),
                    time=ledger.next_time - 1,
                )
    return None


def _noise_source(env: EnvironmentSpec, rng):
    if isinstance(rng, (int, np.integer)):
        return NoiseTable(int(rng), env.K, env.T), int(rng)
    return rng, getattr(rng, "seed", None)


def run(env: EnvironmentSpec, params: PrudentParams, rng, resume: ResumeState | None = None) -> RunTrace:
    """Play PrudentBandits for env.T steps.

    ``rng`` is a seed, a NoiseTable or a numpy Generator. With ``resume``, the
    run starts as a fresh episode at the given round, reusing its recorded
    observations, as if a detection had just fired there.
    """
    if env.mode != MEAN_MODE:
        raise EnvError("PrudentBandits needs a mean-observation environment")
    noise, seed = _noise_source(env, rng)
    K, T = env.K, env.T
    gaps = env.gap_table
    ledger = EpisodeLedger(K, T, MEAN_MODE)
    arms = np.full(T, -1, dtype=np.int64)
    rewards = np.zeros(T)
    regret = np.zeros(T)
    detections: list[DetectionEvent] = []
    episode_starts = [(1, 1)]
    forced_rounds = 0
    first_time = 1

    if resume is not None:
        rec = resume.record
        ledger.episode_start = rec.r
        ledger.next_time = rec.start_time
        ledger.open_round(rec.active_set, rec.quotas, rec.recencies)
        for k, t, x in rec.observations:
            ledger.record_pull(k, x)
            arms[t - 1], rewards[t - 1], regret[t - 1] = k, x, gaps[k, t - 1]
        ledger.close_round()
        ledger.last_pull_time = list(resume.last_pull_time)
        ledger._quota_checked = [rec.r] * K
        episode_starts = [(rec.r, rec.start_time)]
        first_time = rec.start_time

    while ledger.next_time <= T:
        r = ledger.next_round
        active, quotas, recs, forced = _select(ledger, params, r)
        forced_rounds += forced
        ledger.open_round(active, quotas, recs)
        for k in active:
            t = ledger.next_time
            if t > T:
                break
            x = sample_reward(env, k, t, noise)
            ledger.record_pull(k, x)
            arms[t - 1], rewards[t - 1], regret[t - 1] = k, x, gaps[k, t - 1]
        rec = ledger.close_round()
        if ledger.next_time > T or r <= ledger.episode_start:
            continue
        event = cp_detect(ledger, params, r)
        if event is not None:
            detections.append(event)
            ledger.reset_episode(r)
            episode_starts.append((r, rec.start_time))

    return RunTrace(
        policy="prudent",
        mode=MEAN_MODE,
        K=K,
        T=T,
        seed=seed,
        env_digest=env.digest(),
        params=params.to_dict(),
        arms=arms,
        rewards=rewards,
        regret=regret,
        rounds=ledger.history,
        detections=detections,
        episode_starts=episode_starts,
        forced_rounds=forced_rounds,
        first_time=first_time,
    )
