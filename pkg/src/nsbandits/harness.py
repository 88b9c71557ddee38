"""Seeded experiment runner: configs, baselines, aggregation and report files."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import generators, prudent, selective
from .env import GAP_MODE, MEAN_MODE, EnvironmentSpec, NoiseModel, NoiseTable, jsonable, sample_reward
from .params import regret_bound_prudent, regret_bound_selective
from .trace import RunTrace

CONFIG_VERSION = 1
POLICIES = ("prudent", "selective", "oracle", "uniform")
MAX_POINTS = 1000


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    pass


# -- environments --------------------------------------------------------------

_GENERATORS = {
    "a": generators.gen_switching,
    "b": generators.gen_local_poly,
    "c": generators.gen_holder,
    "d": generators.gen_inflexion,
}


def build_environment(block: dict) -> EnvironmentSpec:
    """Inline spec (``{"inline": {...}}``) or generator call (``{"case": "b", "args": {...}, "seed": 0}``)."""
    if "inline" in block:
        env = EnvironmentSpec.from_dict(block["inline"])
    elif "case" in block:
        case = block["case"]
        if case not in _GENERATORS:
            raise ConfigError(f"unknown environment case {case!r}")
        args = dict(block.get("args", {}))
        if "seed" in block:
            args["rng"] = np.random.default_rng(block["seed"])
        elif case != "a":
            raise ConfigError(f"case {case!r} generator needs a seed")
        try:
            env = _GENERATORS[case](**args)
        except TypeError as exc:
            raise ConfigError(f"bad arguments for case {case!r}: {exc}") from exc
    else:
        raise ConfigError("environment needs an 'inline' spec or a 'case' generator block")
    if "noise" in block:
        env = env.with_noise(NoiseModel(**block["noise"]))
    if "mode" in block:
        env = env.with_mode(block["mode"])
    return env


def true_change_points(env: EnvironmentSpec) -> list[int]:
    """Interior change points recorded by the generator (empty when unknown)."""
    meta = env.metadata or {}
    cps = meta.get("true_change_points", meta.get("change_points"))
    if cps is None:
        return []
    if cps and isinstance(cps[0], list):  # per-arm lists
        cps = sorted({c for arm in cps for c in arm})
    return [int(c) for c in cps if 1 < c <= env.T]


# -- baselines -----------------------------------------------------------------

def _baseline(env: EnvironmentSpec, seed: int, policy: str) -> RunTrace:
    noise = NoiseTable(seed, env.K, env.T)
    t = np.arange(1, env.T + 1)
    arms = env.best_arms.astype(np.int64) if policy == "oracle" else (t - 1) % env.K
    rewards = np.array([sample_reward(env, int(k), int(s), noise) for k, s in zip(arms, t)])
    regret = env.gap_table[arms, t - 1].copy()
    return RunTrace(policy, env.mode, env.K, env.T, seed, env.digest(), {}, arms, rewards, regret,
                    episode_starts=[(1, 1)])


def run_policy(env: EnvironmentSpec, policy: str, params: dict, seed: int) -> RunTrace:
    if policy == "prudent":
        return prudent.run(env, prudent.PrudentParams(**params), seed)
    if policy == "selective":
        return selective.run(env, selective.SelectiveParams(**params), seed)
    if policy in ("oracle", "uniform"):
        return _baseline(env, seed, policy)
    raise ConfigError(f"unknown policy {policy!r}")


# -- configuration -------------------------------------------------------------

@dataclass
class RunConfig:
    environment: dict
    policy: str
    params: dict = field(default_factory=dict)
    seeds: list[int] = field(default_factory=list)
    outputs: dict = field(default_factory=dict)
    scan_mode: str | None = None
    workers: int = 1
    bound_C: float = 1.0
    name: str = "experiment"

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if not self.seeds:
            raise ConfigError("seeds must be a non-empty list")
        for s in self.seeds:
            if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s < 2**64:
                raise ConfigError(f"seed {s!r} is not a 64-bit unsigned integer")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.scan_mode is not None:
            if self.policy != "prudent":
                raise ConfigError("scan_mode only applies to the prudent policy")
            self.params = {**self.params, "scan_mode": self.scan_mode}
        unknown = set(self.outputs) - {"csv", "json", "svg"}
        if unknown:
            raise ConfigError(f"unknown output kinds {sorted(unknown)}")

    @classmethod
    def from_dict(cls, doc: dict) -> RunConfig:
        if doc.get("schema_version") != CONFIG_VERSION:
            raise ConfigError(f"unsupported config schema_version {doc.get('schema_version')!r}")
        keys = set(doc) - {"schema_version"}
        allowed = set(cls.__dataclass_fields__)
        if keys - allowed:
            raise ConfigError(f"unknown config keys {sorted(keys - allowed)}")
        if "environment" not in doc or "policy" not in doc:
            raise ConfigError("config needs 'environment' and 'policy'")
        return cls(**{k: doc[k] for k in keys})

    @classmethod
    def load(cls, path: str | os.PathLike) -> RunConfig:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc

    def build(self) -> EnvironmentSpec:
        env = build_environment(self.environment)
        if self.policy == "selective" and env.mode != GAP_MODE:
            raise ConfigError("the selective policy needs a gap-mode environment")
        if self.policy == "prudent" and env.mode != MEAN_MODE:
            raise ConfigError("the prudent policy needs a mean-mode environment")
        return env


# -- per-seed records and reports ----------------------------------------------

def sample_times(T: int, limit: int = MAX_POINTS) -> np.ndarray:
    """At most ``limit`` increasing steps in [1, T], always including T."""
    if T <= limit:
        return np.arange(1, T + 1)
    return np.unique(np.round(np.linspace(1, T, limit)).astype(np.int64))


@dataclass
class SeedRecord:
    seed: int
    total_regret: float
    times: list[int]
    cum_regret: list[float]
    episode_at: list[int]
    detections_at: list[int]
    detection_times: list[int]
    detection_rounds: list[int]
    episodes: int
    forced_rounds: int

    @classmethod
    def from_trace(cls, trace: RunTrace) -> SeedRecord:
        times = sample_times(trace.T)
        cum = trace.cumulative_regret[times - 1]
        if trace.policy == "selective":
            det_times = [t for _, t in trace.episode_starts[1:]]
            det_rounds = [r for r, _ in trace.episode_starts[1:]]
        else:
            det_times = [ev.time for ev in trace.detections]
            det_rounds = [ev.r for ev in trace.detections]
        starts = [t for _, t in trace.episode_starts]
        return cls(
            seed=int(trace.seed),
            total_regret=trace.total_regret,
            times=times.tolist(),
            cum_regret=cum.tolist(),
            episode_at=np.searchsorted(starts, times, side="right").tolist(),
            detections_at=np.searchsorted(det_times, times, side="right").tolist(),
            detection_times=det_times,
            detection_rounds=det_rounds,
            episodes=trace.episodes,
            forced_rounds=trace.forced_rounds,
        )

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def classify_detections(times: list[int], change_points: list[int]) -> tuple[int, list[int]]:
    """False alarms and per-change delays.

    A detection is matched to the earliest true change at or before it that has
    not been matched yet; unmatched detections are false alarms.
    """
    pending = sorted(change_points)
    false_alarms, delays = 0, []
    for t in sorted(times):
        hits = [c for c in pending if c <= t]
        if not hits:
            false_alarms += 1
            continue
        c = hits[-1]
        delays.append(t - c)
        pending = [p for p in pending if p > c]
    return false_alarms, delays


@dataclass
class RunReport:
    name: str
    policy: str
    env_digest: str
    K: int
    T: int
    params: dict
    change_points: list[int]
    records: list[SeedRecord]
    bound_times: list[int] = field(default_factory=list)
    bound_values: list[float] = field(default_factory=list)

    def aggregate(self) -> dict:
        return aggregate([self])

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "policy": self.policy,
            "env": self.env_digest,
            "K": self.K,
            "T": self.T,
            "params": self.params,
            "change_points": self.change_points,
            "summary": self.aggregate(),
            "bound": {"t": self.bound_times, "value": self.bound_values},
            "seeds": [r.to_dict() for r in self.records],
        }


def aggregate(reports: list[RunReport]) -> dict:
    """Summary statistics over every seed of the given reports."""
    if not reports:
        raise ValueError("aggregate needs at least one report")
    finals, fa, delays = [], 0, []
    for rep in reports:
        for rec in rep.records:
            finals.append(rec.total_regret)
            f, d = classify_detections(rec.detection_times, rep.change_points)
            fa += f
            delays += d
    q25, med, q75 = np.percentile(finals, [25, 50, 75])
    return {
        "runs": len(finals),
        "mean_regret": math.fsum(finals) / len(finals),
        "median_regret": float(med),
        "iqr_regret": float(q75 - q25),
        "false_alarms": fa,
        "runs_with_false_alarm": sum(
            classify_detections(rec.detection_times, rep.change_points)[0] > 0
            for rep in reports
            for rec in rep.records
        ),
        "mean_detection_delay": math.fsum(delays) / len(delays) if delays else None,
        "detected_changes": len(delays),
    }


def _bound_curve(config: RunConfig, env: EnvironmentSpec, times: np.ndarray) -> list[float]:
    p = config.params
    if config.policy == "prudent":
        return [regret_bound_prudent(p["M"], p.get("B_star", 0.0), env.K, int(t), config.bound_C) for t in times]
    if config.policy == "selective":
        M = max(1, len(true_change_points(env)) + 1)
        return [regret_bound_selective(M, p.get("B_star", 0.0), env.K, int(t), 16.0) for t in times]
    return []


def _one_seed(args) -> SeedRecord:
    env_doc, policy, params, seed = args
    env = EnvironmentSpec.from_dict(env_doc)
    return SeedRecord.from_trace(run_policy(env, policy, params, seed))


def run_experiment(config: RunConfig, *, write: bool = True) -> RunReport:
    env = config.build()
    env_doc = env.to_dict()
    jobs = [(env_doc, config.policy, config.params, s) for s in sorted(config.seeds)]
    records: list[SeedRecord] = []
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_one_seed, job) for job in jobs]
            for job, fut in zip(jobs, futures):
                try:
                    records.append(fut.result())
                except Exception as exc:
                    for other in futures:
                        other.cancel()
                    raise ExperimentError(f"seed {job[3]} failed: {exc!r}") from exc
    else:
        for job in jobs:
            try:
                records.append(_one_seed(job))
            except Exception as exc:
                raise ExperimentError(f"seed {job[3]} failed: {exc!r}") from exc
    for rec in records:
        if abs(rec.cum_regret[-1] - rec.total_regret) > 1e-9:
            raise ExperimentError(f"seed {rec.seed}: per-step regret does not add up to the total")
    times = sample_times(env.T)
    report = RunReport(
        name=config.name,
        policy=config.policy,
        env_digest=env.digest(),
        K=env.K,
        T=env.T,
        params=jsonable(config.params),
        change_points=true_change_points(env),
        records=records,
        bound_times=times.tolist() if config.policy in ("prudent", "selective") else [],
        bound_values=_bound_curve(config, env, times),
    )
    if write:
        outs = config.outputs
        if "csv" in outs:
            emit_csv(report, outs["csv"])
        if "json" in outs:
            emit_json(report, outs["json"])
        if "svg" in outs:
            emit_plot(report, outs["svg"])
    return report


# -- emitters ------------------------------------------------------------------

def atomic_write(path: str | os.PathLike, data: str | bytes) -> None:
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


CSV_COLUMNS = ("seed", "t", "cum_regret", "episode", "detections")


def report_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in report.records:
        for row in zip(rec.times, rec.cum_regret, rec.episode_at, rec.detections_at):
            w.writerow((rec.seed, row[0], repr(float(row[1])), row[2], row[3]))
    return buf.getvalue()


def emit_csv(report: RunReport, path) -> None:
    atomic_write(path, report_csv(report))


def emit_json(report: RunReport, path) -> None:
    atomic_write(path, json.dumps(jsonable(report.to_dict()), sort_keys=True, indent=1) + "\n")


def emit_plot(report: RunReport, path) -> None:
    """Cumulative regret against t for every seed, with the mean and the bound curve."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "nsbandits", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        curves = np.array([rec.cum_regret for rec in report.records])
        times = report.records[0].times
        for row in curves:
            ax.plot(times, row, color="0.75", lw=0.6)
        ax.plot(times, curves.mean(axis=0), color="C0", lw=1.8, label=f"{report.policy} (mean of {len(curves)})")
        if report.bound_values:
            ax.plot(report.bound_times, report.bound_values, color="C3", ls="--", lw=1.2, label="reference bound")
            ax.set_ylim(0, max(curves.max(), 1.0) * 1.5)
        for c in report.change_points:
            ax.axvline(c, color="k", ls=":", lw=0.8)
        ax.set_xlabel("t")
        ax.set_ylabel("cumulative regret")
        ax.set_title(report.name)
        ax.legend(loc="upper left")
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    atomic_write(path, buf.getvalue())
