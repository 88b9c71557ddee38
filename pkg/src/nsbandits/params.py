"""Algorithm parameters (M, B*) for the four structural cases, and reference regret curves.

All logarithms are natural. ``floor(log2(sqrt(T)))`` is computed with integer
arithmetic as ``(T.bit_length() - 1) // 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class CaseParams:
    case: str
    inputs: dict = field(compare=False)
    M: int
    B_star: float

    def to_dict(self) -> dict:
        return {"case": self.case, "inputs": dict(self.inputs), "M": self.M, "B_star": self.B_star}


def _int(name: str, value, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def _positive(name: str, value) -> float:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def floor_log2_sqrt(T: int) -> int:
    _int("T", T, 1)
    return (T.bit_length() - 1) // 2


def params_case_a(M: int) -> CaseParams:
    _int("M", M, 1)
    return CaseParams("a", {"M": M}, M, 0.0)


def params_case_b(M_star: int, gamma_star: int, u_star: float, K: int, T: int) -> CaseParams:
    _int("M_star", M_star, 1)
    _int("gamma_star", gamma_star, 0)
    _positive("u_star", u_star)
    _int("K", K, 1)
    _int("T", T, 1)
    M = M_star * (gamma_star + 1) * K * (floor_log2_sqrt(T) + 1)
    inputs = {"M_star": M_star, "gamma_star": gamma_star, "u_star": u_star, "K": K, "T": T}
    return CaseParams("b", inputs, M, u_star * K / T)


def case_c_bstar(alpha: float, K: int, T: int) -> float:
    return (K * math.log(T) / T) ** (2 * alpha / (2 * alpha + 1))


def params_case_c(M_star: int, alpha: float, K: int, T: int) -> CaseParams:
    _int("M_star", M_star, 1)
    if not (isinstance(alpha, (int, float)) and 0 < alpha <= 1):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    _int("K", K, 1)
    _int("T", T, 2)
    B = case_c_bstar(alpha, K, T)
    M = math.ceil(M_star + K * B ** (1 / alpha))
    return CaseParams("c", {"M_star": M_star, "alpha": alpha, "K": K, "T": T}, M, B)


def params_case_d(upsilon_star: int, B_star: float, K: int, T: int) -> CaseParams:
    _int("upsilon_star", upsilon_star, 1)
    _positive("B_star", B_star)
    _int("K", K, 1)
    _int("T", T, 1)
    M = upsilon_star * K * (floor_log2_sqrt(T) + 1)
    return CaseParams("d", {"upsilon_star": upsilon_star, "B_star": B_star, "K": K, "T": T}, M, float(B_star))


def regret_bound_prudent(M: int, B_star: float, K: int, T: int, C: float) -> float:
    """C ln(T) sqrt(K T M) + C T B*."""
    if M < 1 or K < 1 or T < 1 or B_star < 0:
        raise ValueError("need M, K, T >= 1 and B* >= 0")
    return C * math.log(T) * math.sqrt(K * T * M) + C * T * B_star


def regret_bound_selective(M: int, B_star: float, K: int, T: int, c: float = 16.0) -> float:
    """High-probability regret bound for the gap-observation agent; requires c >= 16."""
    if c < 16:
        raise ValueError(f"c must be >= 16, got {c!r}")
    if M < 1 or K < 1 or T < 1 or B_star < 0:
        raise ValueError("need M, K, T >= 1 and B* >= 0")
    lead = 2**1.5 + 2**0.5 * c * math.log(2 * K * T**3)
    return lead * math.sqrt(K * T * M) + 2 * K * M + 8 * T * max(B_star, T**-0.5) + 1


CASES = {"a": params_case_a, "b": params_case_b, "c": params_case_c, "d": params_case_d}
