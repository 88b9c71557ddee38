"""Environment generators for the four structural cases.

Every generator returns an :class:`EnvironmentSpec` whose ``metadata`` records
the ground-truth structure (true change points, degrees, coefficient norms,
Hölder knots, monotone pieces) so tests can check the structure directly.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .env import EnvError, EnvironmentSpec, MeanFunction, NoiseModel, jsonable


def _even_starts(T: int, M: int) -> list[int]:
    return [1 + (m * T) // M for m in range(M)]


def _random_starts(T: int, pieces: int, rng: np.random.Generator) -> list[int]:
    if pieces > T:
        raise EnvError(f"cannot split T={T} steps into {pieces} pieces")
    inner = rng.choice(np.arange(2, T + 1), size=pieces - 1, replace=False) if pieces > 1 else []
    return [1] + sorted(int(s) for s in inner)


def _check_sizes(K: int, T: int) -> None:
    if K < 2:
        raise EnvError(f"need K >= 2 arms, got {K}")
    if T < 1:
        raise EnvError(f"need T >= 1, got {T}")


def gen_switching(
    K: int,
    T: int,
    M: int,
    gap_profile=None,
    rng: np.random.Generator | None = None,
    *,
    change_points: Sequence[int] | None = None,
    top_mean=None,
    noise: NoiseModel | None = None,
) -> EnvironmentSpec:
    """Case a: means constant on each of M intervals.

    ``gap_profile`` is either one K-vector reused on every interval or an
    (M, K) array; each row needs at least one zero entry. When it is omitted,
    ``rng`` draws a random best arm and gaps in [0.1, 0.9] per interval.
    ``top_mean`` fixes the best mean (scalar or per interval); otherwise it is
    drawn in [max gap, 1] when ``rng`` is given, else set to (1 + max gap) / 2.
    """
    _check_sizes(K, T)
    if M < 1 or M > T:
        raise EnvError(f"need 1 <= M <= T, got M={M}, T={T}")
    if gap_profile is None:
        if rng is None:
            raise EnvError("gen_switching needs a gap_profile or an rng")
        gaps = rng.uniform(0.1, 0.9, size=(M, K))
        gaps[np.arange(M), rng.integers(0, K, size=M)] = 0.0
    else:
        gaps = np.asarray(gap_profile, dtype=float)
        if gaps.ndim == 1:
            gaps = np.tile(gaps, (M, 1))
    if gaps.shape != (M, K):
        raise EnvError(f"gap_profile must have shape ({K},) or ({M}, {K}), got {gaps.shape}")
    if (gaps < 0).any() or (gaps > 1).any():
        raise EnvError("gaps must lie in [0, 1]")
    if not (gaps.min(axis=1) == 0).all():
        raise EnvError("every interval needs an optimal arm with gap 0")

    starts = list(change_points) if change_points is not None else _even_starts(T, M)
    if len(starts) != M or starts[0] != 1 or any(b <= a for a, b in zip(starts, starts[1:])):
        raise EnvError(f"change points {starts} are not M={M} increasing starts beginning at 1")
    if starts[-1] > T:
        raise EnvError(f"change point {starts[-1]} beyond T={T}")

    max_gap = gaps.max(axis=1)
    if top_mean is None:
        tops = rng.uniform(max_gap, 1.0) if rng is not None else (1.0 + max_gap) / 2
    else:
        tops = np.broadcast_to(np.asarray(top_mean, dtype=float), (M,)).copy()
    if (tops > 1).any() or (tops - max_gap < 0).any():
        raise EnvError(f"best means {tops} cannot host gaps up to {max_gap} inside [0, 1]")

    means = tuple(MeanFunction.steps(starts, [float(tops[m] - gaps[m, k]) for m in range(M)]) for k in range(K))
    meta = {
        "generator": "switching",
        "case": "a",
        "M": M,
        "change_points": starts + [T + 1],
        "gap_profile": gaps,
        "top_means": tops,
    }
    return EnvironmentSpec(K, T, means, noise or NoiseModel(), metadata=jsonable(meta))


def gen_local_poly(
    K: int,
    T: int,
    M_star: int,
    gamma_star: int,
    u_star: float,
    rng: np.random.Generator,
    *,
    noise: NoiseModel | None = None,
) -> EnvironmentSpec:
    """Case b: each arm is a polynomial of degree <= gamma_star on M_star pieces.

    Per piece, the non-constant part has sum_j j|c_j| = w <= min(u*/2, 1/2),
    so both the coefficient l1 norm and the Lipschitz constant in x stay within
    u*; the constant term is then placed so the piece stays in [0, 1].
    """
    _check_sizes(K, T)
    if M_star < 1 or gamma_star < 0 or u_star < 0:
        raise EnvError(f"need M* >= 1, gamma* >= 0, u* >= 0 (got {M_star}, {gamma_star}, {u_star})")
    arms, arm_starts, arm_coeffs, arm_norms = [], [], [], []
    w_cap = min(u_star / 2, 0.5)
    for _ in range(K):
        starts = _random_starts(T, M_star, rng)
        segs, coeff_list, norms = [], [], []
        for s in starts:
            c = np.zeros(gamma_star + 1)
            if gamma_star > 0 and w_cap > 0:
                raw = rng.uniform(-1.0, 1.0, size=gamma_star)
                weight = np.sum(np.arange(1, gamma_star + 1) * np.abs(raw))
                c[1:] = raw * (rng.uniform(0.0, w_cap) / weight)
            a = float(np.abs(c[1:]).sum())
            hi = min(1.0 - a, u_star - a)
            c[0] = rng.uniform(a, hi) if hi > a else a
            segs.append((s, tuple(float(v) for v in c)))
            coeff_list.append(c)
            norms.append(float(np.abs(c).sum()))
        arms.append(MeanFunction(tuple(segs)))
        arm_starts.append(starts + [T + 1])
        arm_coeffs.append(coeff_list)
        arm_norms.append(norms)
    meta = {
        "generator": "local_poly",
        "case": "b",
        "M_star": M_star,
        "gamma_star": gamma_star,
        "u_star": u_star,
        "change_points": arm_starts,
        "coefficients": arm_coeffs,
        "l1_norms": arm_norms,
        "true_change_points": sorted({s for starts in arm_starts for s in starts}),
    }
    return EnvironmentSpec(K, T, tuple(arms), noise or NoiseModel(), metadata=jsonable(meta))


def _triangle(y: np.ndarray) -> np.ndarray:
    return np.abs(np.mod(y, 1.0) - 0.5) - 0.25


def holder_constant(values: np.ndarray, spacing: float, alpha: float) -> float:
    """max |v_j - v_i| / ((j - i) * spacing)^alpha over all knot pairs."""
    best = 0.0
    for lag in range(1, len(values)):
        d = np.abs(values[lag:] - values[:-lag]).max()
        best = max(best, d / (lag * spacing) ** alpha)
    return best


def gen_holder(
    K: int,
    T: int,
    M_star: int,
    alpha: float,
    rng: np.random.Generator,
    *,
    knots_per_step: int = 4,
    noise: NoiseModel | None = None,
) -> EnvironmentSpec:
    """Case c: each arm is alpha-Hölder (constant 1, in x) on M_star pieces.

    A piece covering steps [s, e) is a piecewise-linear curve with knots at
    x = i / (knots_per_step * T) for i in [knots_per_step*(s-1), knots_per_step*(e-1)].
    The curve is a random dyadic sum of triangle waves rescaled so that its
    exact Hölder constant over the knots is below 1. Chords of a piecewise-
    linear curve are maximised at knots, so the knot check is exact.
    """
    _check_sizes(K, T)
    if not 0 < alpha <= 1:
        raise EnvError(f"alpha must lie in (0, 1], got {alpha}")
    if M_star < 1:
        raise EnvError(f"need M* >= 1, got {M_star}")
    if knots_per_step < 4:
        raise EnvError("need at least 4 knots per time step")
    q = knots_per_step
    h = 1.0 / (q * T)
    levels = int(np.ceil(np.log2(q * T))) + 1
    arms, arm_starts, arm_knots = [], [], []
    for _ in range(K):
        starts = _random_starts(T, M_star, rng)
        bounds = starts + [T + 1]
        segs, knots = [], []
        for s, e in zip(bounds, bounds[1:]):
            idx = np.arange(q * (s - 1), q * (e - 1) + 1)
            x = idx * h
            v = np.zeros(len(idx))
            for j in range(levels):
                v += rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0) * 2.0 ** (-j * alpha) * _triangle(
                    2.0**j * x + rng.uniform()
                )
            H = holder_constant(v, h, alpha) if len(v) > 1 else 0.0
            if H > 0:
                v = v * (rng.uniform(0.2, 0.95) / H)
            lo, hi = -v.min() + 1e-9, 1.0 - v.max() - 1e-9
            v = v + rng.uniform(lo, hi)
            for t in range(s, e):
                i = q * t - idx[0]
                slope = (v[i + 1] - v[i]) / h if i + 1 < len(v) else (v[i] - v[i - 1]) / h
                segs.append((t, (float(v[i] - slope * (t / T)), float(slope))))
            knots.append({"start": s, "first_knot": int(idx[0]), "values": v})
        arms.append(MeanFunction(tuple(segs)))
        arm_starts.append(bounds)
        arm_knots.append(knots)
    meta = {
        "generator": "holder",
        "case": "c",
        "M_star": M_star,
        "alpha": alpha,
        "knot_spacing": h,
        "change_points": arm_starts,
        "knots": arm_knots,
        "true_change_points": sorted({s for starts in arm_starts for s in starts}),
    }
    return EnvironmentSpec(K, T, tuple(arms), noise or NoiseModel(), metadata=jsonable(meta))


# Monotone shapes on z in [0, 1], as coefficient vectors in z.
_SHAPES = {
    "linear": np.array([0.0, 1.0]),
    "convex": np.array([0.0, 0.0, 1.0]),
    "concave": np.array([0.0, 2.0, -1.0]),
}


def gen_inflexion(
    K: int,
    T: int,
    upsilon_star: int,
    B_star: float,
    rng: np.random.Generator,
    *,
    noise: NoiseModel | None = None,
) -> EnvironmentSpec:
    """Case d: every gap is monotone on at most upsilon_star pieces.

    One arm (drawn by ``rng``) carries the best mean, which drifts linearly by
    at most 0.9 * B_star per K steps. Each other arm's gap zig-zags between
    random levels in [0, g_max], switching direction at its piece boundaries.
    """
    _check_sizes(K, T)
    if upsilon_star < 1 or B_star < 0:
        raise EnvError(f"need upsilon* >= 1 and B* >= 0 (got {upsilon_star}, {B_star})")
    best = int(rng.integers(0, K))
    g_max = float(rng.uniform(0.3, 0.8))
    slope_x = float(rng.uniform(-1.0, 1.0)) * min(0.9 * B_star * T / K, 0.2)
    lo_top = g_max + max(0.0, -slope_x)
    hi_top = 1.0 - max(0.0, slope_x)
    if hi_top < lo_top:
        raise EnvError("best-mean drift leaves no room for the gaps inside [0, 1]")
    top = np.array([rng.uniform(lo_top, hi_top), slope_x])

    arms, pieces_meta = [], []
    for k in range(K):
        if k == best:
            arms.append(MeanFunction(((1, tuple(float(c) for c in top)),)))
            pieces_meta.append({"starts": [1, T + 1], "levels": [0.0, 0.0], "shapes": ["linear"]})
            continue
        starts = _random_starts(T, upsilon_star, rng)
        bounds = starts + [T + 1]
        levels = [float(rng.uniform(0.0, g_max))]
        up = bool(rng.integers(0, 2))
        for _ in range(len(starts)):
            prev = levels[-1]
            levels.append(float(rng.uniform(prev, g_max) if up else rng.uniform(0.0, prev)))
            up = not up
        segs, shapes = [], []
        for m, (s, e) in enumerate(zip(bounds, bounds[1:])):
            name = str(rng.choice(list(_SHAPES)))
            shapes.append(name)
            # z = (t - s) / (e - s) = (T x - s) / (e - s)
            z = np.array([-s / (e - s), T / (e - s)])
            shape_x = _compose(_SHAPES[name], z)
            gap_x = P.polyadd([levels[m]], (levels[m + 1] - levels[m]) * shape_x)
            mean_x = P.polysub(top, gap_x)
            segs.append((s, tuple(float(c) for c in mean_x)))
        arms.append(MeanFunction(tuple(segs)))
        pieces_meta.append({"starts": bounds, "levels": levels, "shapes": shapes})
    meta = {
        "generator": "inflexion",
        "case": "d",
        "upsilon_star": upsilon_star,
        "B_star": B_star,
        "best_arm": best,
        "g_max": g_max,
        "top_coefficients": top,
        "pieces": pieces_meta,
    }
    return EnvironmentSpec(K, T, tuple(arms), noise or NoiseModel(), metadata=jsonable(meta))


def _compose(poly_z: np.ndarray, z_of_x: np.ndarray) -> np.ndarray:
    """Coefficients in x of poly_z(z(x)), both in increasing-degree order."""
    out = np.array([0.0])
    power = np.array([1.0])
    for c in poly_z:
        out = P.polyadd(out, c * power)
        power = P.polymul(power, z_of_x)
    return out
