"""Mechanical checks of the structural assumptions on a candidate partition.

On an interval, arm k passes when its gaps are either all small
(<= 2 * max(T^-1/2, B*)) or all within a factor 2^(1/4) of each other; for
any pair (t, t') this is exactly the pairwise ratio-or-small dichotomy, since
the largest gap must be within 2^(1/4) of every other one. The best mean must
move by at most B* between any two steps of the interval at most K apart.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .env import EnvironmentSpec

RATIO = 2.0**0.25
# Slack for floating-point rounding in mean evaluation; far below any gap scale used.
TOL = 1e-12


@dataclass(frozen=True)
class IntervalEvidence:
    arm: int
    interval: int
    start: int
    stop: int
    kind: str  # "small", "level" or "violated"
    gap_min: float
    gap_max: float
    kappa: int | None = None


@dataclass(frozen=True)
class PartitionReport:
    change_points: tuple[int, ...]
    B_star: float
    evidence: tuple[IntervalEvidence, ...]
    drift: tuple[float, ...]  # largest K-window move of the best mean per interval
    ok: bool
    exact: bool = field(default=False)

    @property
    def M(self) -> int:
        return len(self.change_points) - 1

    def failures(self) -> list:
        bad = [e for e in self.evidence if e.kind == "violated"]
        bad += [("drift", m, d) for m, d in enumerate(self.drift) if d > self.B_star + TOL]
        return bad

    def to_dict(self) -> dict:
        return {
            "change_points": list(self.change_points),
            "M": self.M,
            "B_star": self.B_star,
            "ok": self.ok,
            "drift": list(self.drift),
            "evidence": [e.__dict__ for e in self.evidence],
        }


def small_gap_band(T: int, B_star: float) -> float:
    return 2.0 * max(T**-0.5, B_star)


def _arm_kind(gmin: float, gmax: float, band: float) -> str:
    if gmax <= band + TOL:
        return "small"
    if gmin > 0 and gmax <= RATIO * gmin:
        return "level"
    return "violated"


def _kappa(gmin: float, T: int, B_star: float) -> int:
    # Level index in the dyadic-sqrt grid 2^(kappa/2) * max(T^-1/2, B*).
    return math.floor(2 * math.log2(gmin / max(T**-0.5, B_star)))


def _max_drift(top: np.ndarray, K: int) -> float:
    best = 0.0
    for lag in range(1, min(K, len(top) - 1) + 1):
        best = max(best, float(np.abs(top[lag:] - top[:-lag]).max()))
    return best


def _check_points(change_points: Sequence[int], T: int) -> tuple[int, ...]:
    cps = tuple(int(c) for c in change_points)
    if len(cps) < 2 or cps[0] != 1 or cps[-1] != T + 1:
        raise ValueError(f"change points must run from 1 to T+1={T + 1}, got {list(cps)}")
    if any(b <= a for a, b in zip(cps, cps[1:])):
        raise ValueError(f"change points must be strictly increasing, got {list(cps)}")
    return cps


def validate_assumptions(env: EnvironmentSpec, change_points: Sequence[int], B_star: float) -> PartitionReport:
    """Check both structural assumptions on every interval of a partition."""
    if B_star < 0:
        raise ValueError(f"B* must be non-negative, got {B_star}")
    cps = _check_points(change_points, env.T)
    band = small_gap_band(env.T, B_star)
    gaps, top = env.gap_table, env.top_mean
    evidence, drift = [], []
    ok = True
    for m, (a, b) in enumerate(zip(cps, cps[1:])):
        window = gaps[:, a - 1 : b - 1]
        for k in range(env.K):
            gmin, gmax = float(window[k].min()), float(window[k].max())
            kind = _arm_kind(gmin, gmax, band)
            kappa = _kappa(gmin, env.T, B_star) if kind == "level" else None
            evidence.append(IntervalEvidence(k, m, a, b, kind, gmin, gmax, kappa))
            ok &= kind != "violated"
        d = _max_drift(top[a - 1 : b - 1], env.K)
        drift.append(d)
        ok &= d <= B_star + TOL
    return PartitionReport(cps, B_star, tuple(evidence), tuple(drift), bool(ok))


def interval_feasible(env: EnvironmentSpec, start: int, stop: int, B_star: float) -> bool:
    """Whether [start, stop) can be one interval of a valid partition."""
    band = small_gap_band(env.T, B_star)
    window = env.gap_table[:, start - 1 : stop - 1]
    for k in range(env.K):
        if _arm_kind(float(window[k].min()), float(window[k].max()), band) == "violated":
            return False
    return _max_drift(env.top_mean[start - 1 : stop - 1], env.K) <= B_star + TOL


def minimal_significant_partition(env: EnvironmentSpec, B_star: float) -> PartitionReport:
    """Greedy left-to-right partition satisfying both assumptions.

    Each interval is extended until adding the next step would break the gap
    dichotomy for some arm or move the best mean by more than B* within K
    steps. Feasibility is inherited by sub-intervals, so this greedy cut is in
    fact a minimum-cardinality partition (``exact_minimal_partition`` agrees).
    """
    if B_star < 0:
        raise ValueError(f"B* must be non-negative, got {B_star}")
    T, K = env.T, env.K
    band = small_gap_band(T, B_star)
    gaps = env.gap_table.T.tolist()  # per-step rows, plain floats for a tight loop
    top = env.top_mean.tolist()
    cps = [1]
    start = 0
    lo = list(gaps[0])
    hi = list(gaps[0])
    for i in range(1, T):
        row = gaps[i]
        cut = False
        new_lo, new_hi = [], []
        for k in range(K):
            a, b = min(lo[k], row[k]), max(hi[k], row[k])
            if not (b <= band + TOL or (a > 0 and b <= RATIO * a)):
                cut = True
                break
            new_lo.append(a)
            new_hi.append(b)
        if not cut:
            for j in range(max(start, i - K), i):
                if abs(top[i] - top[j]) > B_star + TOL:
                    cut = True
                    break
        if cut:
            cps.append(i + 1)
            start = i
            lo, hi = list(row), list(row)
        else:
            lo, hi = new_lo, new_hi
    cps.append(T + 1)
    return validate_assumptions(env, cps, B_star)


def exact_minimal_partition(env: EnvironmentSpec, B_star: float, max_T: int = 2000) -> PartitionReport:
    """Minimum-cardinality partition by dynamic programming over all intervals.

    O(T^2) interval checks; intended as a test oracle for moderate T.
    """
    T = env.T
    if T > max_T:
        raise ValueError(f"exact partition is limited to T <= {max_T}, got {T}")
    band = small_gap_band(T, B_star)
    gaps, top, K = env.gap_table, env.top_mean, env.K
    INF = T + 1
    cost = [0] + [INF] * T
    back = [0] * (T + 1)
    for i in range(T):  # interval starts at step i + 1
        if cost[i] >= INF:
            continue
        lo = gaps[:, i].copy()
        hi = gaps[:, i].copy()
        for j in range(i, T):  # interval covers steps i+1 .. j+1
            np.minimum(lo, gaps[:, j], out=lo)
            np.maximum(hi, gaps[:, j], out=hi)
            small = hi <= band + TOL
            level = (lo > 0) & (hi <= RATIO * lo)
            if not (small | level).all():
                break
            if j > i and np.abs(top[max(i, j - K) : j] - top[j]).max() > B_star + TOL:
                break
            if cost[i] + 1 < cost[j + 1]:
                cost[j + 1] = cost[i] + 1
                back[j + 1] = i
    cps = [T]
    while cps[-1] > 0:
        cps.append(back[cps[-1]])
    points = [c + 1 for c in reversed(cps)]
    report = validate_assumptions(env, points, B_star)
    return PartitionReport(report.change_points, B_star, report.evidence, report.drift, report.ok, exact=True)
