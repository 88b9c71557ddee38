"""Ground-truth non-stationary bandit environments.

Arms are indexed from 0. Time steps run over 1..T and each arm's mean is a
piecewise polynomial in x = t / T.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from statistics import NormalDist
from typing import Any, Sequence

import numpy as np

SCHEMA_VERSION = 1

MEAN_MODE = "mean"
GAP_MODE = "gap"
_MODES = (MEAN_MODE, GAP_MODE)

_NOISE_KINDS = ("zero", "bernoulli", "gaussian")
_STD_NORMAL = NormalDist()


class EnvError(ValueError):
    """Raised for malformed environments or infeasible generator inputs."""


@dataclass(frozen=True)
class MeanFunction:
    """Piecewise polynomial mean.

    ``segments`` holds ``(start, coeffs)`` pairs; segment i covers the integer
    steps ``[start_i, start_{i+1})`` and evaluates ``sum(c_j * x**j)`` at
    ``x = t / T``.
    """

    segments: tuple[tuple[int, tuple[float, ...]], ...]

    def __post_init__(self):
        segs = tuple((int(s), tuple(float(c) for c in coeffs)) for s, coeffs in self.segments)
        if not segs:
            raise EnvError("mean function needs at least one segment")
        if segs[0][0] != 1:
            raise EnvError(f"first segment must start at t=1, got {segs[0][0]}")
        for (s0, _), (s1, _) in zip(segs, segs[1:]):
            if s1 <= s0:
                raise EnvError(f"segment starts must be strictly increasing ({s0} then {s1})")
        for s, coeffs in segs:
            if not coeffs:
                raise EnvError(f"segment starting at {s} has no coefficients")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def constant(cls, value: float) -> MeanFunction:
        return cls(((1, (value,)),))

    @classmethod
    def steps(cls, starts: Sequence[int], values: Sequence[float]) -> MeanFunction:
        return cls(tuple((s, (v,)) for s, v in zip(starts, values)))

    @property
    def degree(self) -> int:
        return max(len(c) - 1 for _, c in self.segments)

    def evaluate(self, T: int) -> np.ndarray:
        """Values at t = 1..T (Horner, highest coefficient first)."""
        out = np.empty(T, dtype=float)
        starts = [s for s, _ in self.segments] + [T + 1]
        for (s, coeffs), stop in zip(self.segments, starts[1:]):
            lo, hi = s - 1, min(stop, T + 1) - 1
            if lo >= T:
                break
            x = np.arange(s, hi + 1, dtype=float) / T
            acc = np.full(hi - lo, coeffs[-1])
            for c in reversed(coeffs[:-1]):
                acc = acc * x + c
            out[lo:hi] = acc
        return out


@dataclass(frozen=True)
class NoiseModel:
    """Observation noise.

    ``zero`` returns the expectation exactly; ``bernoulli`` draws Bernoulli(mu)
    in mean mode and -Bernoulli(gap) in gap mode; ``gaussian`` adds N(0, sigma^2)
    and clips to the legal range (clipping biases the mean near the edges).
    """

    kind: str = "bernoulli"
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in _NOISE_KINDS:
            raise EnvError(f"unknown noise kind {self.kind!r}; expected one of {_NOISE_KINDS}")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise EnvError("gaussian noise needs sigma > 0")

    def draw(self, expectation: float, u: float) -> float:
        """Map one uniform variate in [0, 1) to an observation in [0, 1]."""
        if self.kind == "zero":
            return expectation
        if self.kind == "bernoulli":
            return 1.0 if u < expectation else 0.0
        z = _STD_NORMAL.inv_cdf(min(max(u, 1e-300), 1.0 - 1e-16))
        return min(1.0, max(0.0, expectation + self.sigma * z))


@dataclass(frozen=True, eq=False)
class EnvironmentSpec:
    K: int
    T: int
    means: tuple[MeanFunction, ...]
    noise: NoiseModel = field(default_factory=NoiseModel)
    mode: str = MEAN_MODE
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.K < 2:
            raise EnvError(f"need K >= 2 arms, got {self.K}")
        if self.T < 1:
            raise EnvError(f"need T >= 1, got {self.T}")
        if len(self.means) != self.K:
            raise EnvError(f"{len(self.means)} mean functions for K={self.K} arms")
        if self.mode not in _MODES:
            raise EnvError(f"unknown observation mode {self.mode!r}")
        object.__setattr__(self, "means", tuple(self.means))
        for k, f in enumerate(self.means):
            if f.segments[-1][0] > self.T:
                raise EnvError(f"arm {k}: segment starts beyond T={self.T}")
        table = self.mean_table
        bad = np.argwhere((table < 0.0) | (table > 1.0) | ~np.isfinite(table))
        if bad.size:
            k, i = bad[0]
            raise EnvError(f"arm {k} mean {table[k, i]!r} at t={i + 1} leaves [0, 1]")

    @cached_property
    def mean_table(self) -> np.ndarray:
        """(K, T) array with entry [k, t-1] = mu_k(t)."""
        table = np.vstack([f.evaluate(self.T) for f in self.means])
        table.setflags(write=False)
        return table

    @cached_property
    def top_mean(self) -> np.ndarray:
        top = self.mean_table.max(axis=0)
        top.setflags(write=False)
        return top

    @cached_property
    def gap_table(self) -> np.ndarray:
        gaps = self.top_mean[None, :] - self.mean_table
        gaps.setflags(write=False)
        return gaps

    @cached_property
    def best_arms(self) -> np.ndarray:
        # argmax returns the first maximiser, i.e. the lowest index on ties.
        best = self.mean_table.argmax(axis=0)
        best.setflags(write=False)
        return best

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "K": self.K,
            "T": self.T,
            "mode": self.mode,
            "noise": {"kind": self.noise.kind, "sigma": self.noise.sigma},
            "arms": [
                [{"start": s, "coeffs": list(c)} for s, c in f.segments] for f in self.means
            ],
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        # json writes floats with repr, which round-trips every double exactly.
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict) -> EnvironmentSpec:
        version = doc.get("schema_version")
        if version != SCHEMA_VERSION:
            raise EnvError(f"unsupported environment schema_version {version!r}")
        try:
            means = tuple(
                MeanFunction(tuple((seg["start"], tuple(seg["coeffs"])) for seg in arm))
                for arm in doc["arms"]
            )
            noise = NoiseModel(**doc.get("noise", {}))
            return cls(
                K=int(doc["K"]),
                T=int(doc["T"]),
                means=means,
                noise=noise,
                mode=doc.get("mode", MEAN_MODE),
                metadata=doc.get("metadata", {}),
            )
        except (KeyError, TypeError) as exc:
            raise EnvError(f"malformed environment document: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> EnvironmentSpec:
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def with_noise(self, noise: NoiseModel) -> EnvironmentSpec:
        return EnvironmentSpec(self.K, self.T, self.means, noise, self.mode, self.metadata)

    def with_mode(self, mode: str) -> EnvironmentSpec:
        return EnvironmentSpec(self.K, self.T, self.means, self.noise, mode, self.metadata)


def _check_arm_time(env: EnvironmentSpec, k: int, t: int) -> None:
    if not (isinstance(k, (int, np.integer)) and 0 <= k < env.K):
        raise IndexError(f"arm index {k!r} outside 0..{env.K - 1}")
    if not (isinstance(t, (int, np.integer)) and 1 <= t <= env.T):
        raise IndexError(f"time step {t!r} outside 1..{env.T}")


def mean_at(env: EnvironmentSpec, k: int, t: int) -> float:
    _check_arm_time(env, k, t)
    return float(env.mean_table[k, t - 1])


def gap_at(env: EnvironmentSpec, k: int, t: int) -> float:
    _check_arm_time(env, k, t)
    return float(env.gap_table[k, t - 1])


def best_arm_at(env: EnvironmentSpec, t: int) -> int:
    _check_arm_time(env, 0, t)
    return int(env.best_arms[t - 1])


class NoiseTable:
    """Counter-based uniform variates, one per (arm, time) cell.

    The table is the Philox stream keyed by ``seed`` read in (arm, time) order,
    so the variate used for a pull never depends on which arms a policy pulled
    before it.
    """

    def __init__(self, seed: int, K: int, T: int):
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        gen = np.random.Generator(np.random.Philox(key=seed))
        self._u = gen.random((K, T))
        self._u.setflags(write=False)

    def uniform(self, k: int, t: int) -> float:
        return float(self._u[k, t - 1])


def sample_reward(env: EnvironmentSpec, k: int, t: int, rng) -> float:
    """One observation of arm ``k`` at step ``t``.

    ``rng`` is either a :class:`NoiseTable` (cell-addressed, reproducible across
    policies) or a ``numpy.random.Generator`` (fresh draw per call).
    """
    _check_arm_time(env, k, t)
    if isinstance(rng, NoiseTable):
        u = rng.uniform(k, t)
    elif env.noise.kind == "zero":
        u = 0.0
    else:
        u = float(rng.random())
    if env.mode == MEAN_MODE:
        return env.noise.draw(float(env.mean_table[k, t - 1]), u)
    return -env.noise.draw(float(env.gap_table[k, t - 1]), u)


def log_term(K: int, T: int) -> float:
    """Natural log of 2 K T^3, the confidence level used throughout."""
    return math.log(2 * K * T**3)


def jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and tuples into plain JSON types."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value
