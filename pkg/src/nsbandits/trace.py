"""Per-run records shared by all policies."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .ledger import RoundRecord


@dataclass(frozen=True)
class DetectionEvent:
    """A quadruple of windows whose gap estimates differ by more than the threshold.

    Windows are given in rounds: ``(u, v)`` covers rounds u..v-1.
    """

    r: int
    arm: int
    u: int
    v: int
    u2: int
    v2: int
    left: float  # gap estimate on [u, v)
    right: float  # gap estimate on [u2, v2)
    threshold: float
    n_min: int
    time: int  # last step of round r

    @property
    def quadruple(self) -> tuple[int, int, int, int]:
        return self.u, self.v, self.u2, self.v2

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunTrace:
    policy: str
    mode: str
    K: int
    T: int
    seed: int | None
    env_digest: str
    params: dict
    arms: np.ndarray  # arm pulled at each step, -1 where the run did not act
    rewards: np.ndarray
    regret: np.ndarray  # per-step gap of the pulled arm
    rounds: list[RoundRecord] = field(default_factory=list)
    detections: list[DetectionEvent] = field(default_factory=list)
    episode_starts: list[tuple[int, int]] = field(default_factory=list)  # (round, time)
    forced_rounds: int = 0
    first_time: int = 1
    eliminations: list[tuple[int, int]] = field(default_factory=list)  # (round, arm)

    @property
    def total_regret(self) -> float:
        return math.fsum(self.regret.tolist())

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.cumsum(self.regret)

    @property
    def episodes(self) -> int:
        return len(self.episode_starts)

    def pull_counts(self) -> np.ndarray:
        valid = self.arms[self.arms >= 0]
        return np.bincount(valid, minlength=self.K)

    def to_jsonl(self) -> str:
        lines = [
            {
                "type": "header",
                "policy": self.policy,
                "mode": self.mode,
                "K": self.K,
                "T": self.T,
                "seed": self.seed,
                "env": self.env_digest,
                "params": self.params,
            }
        ]
        for i in range(self.first_time - 1, self.T):
            lines.append(
                {"type": "pull", "t": i + 1, "k": int(self.arms[i]), "x": float(self.rewards[i]), "gap": float(self.regret[i])}
            )
        for ev in self.detections:
            lines.append({"type": "detection", **ev.to_dict()})
        lines.append(
            {
                "type": "footer",
                "total_regret": self.total_regret,
                "episodes": self.episodes,
                "episode_starts": [list(e) for e in self.episode_starts],
                "forced_rounds": self.forced_rounds,
            }
        )
        return "".join(json.dumps(rec, separators=(",", ":")) + "\n" for rec in lines)
