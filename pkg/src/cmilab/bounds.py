"""Closed-form generalization and information bounds, and the verdicts that audit them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .infotheory import binary_entropy

LOG2 = math.log(2)
MC_SIGMAS = 4.0
EXACT_TOL = 1e-9


@dataclass(frozen=True)
class BoundReport:
    """A measured quantity against its bound; passes iff ``measured <= bound + 4 * stderr``.

    Exact measurements (``stderr == 0``) get an absolute slack of 1e-9.
    """

    name: str
    measured: float
    bound: float
    stderr: float = 0.0

    @property
    def slack(self) -> float:
        return self.bound - self.measured

    @property
    def verdict(self) -> bool:
        tol = MC_SIGMAS * self.stderr if self.stderr > 0 else EXACT_TOL
        return self.measured <= self.bound + tol

    CSV_HEADER = "name,measured,stderr,bound,slack,verdict"

    def csv_row(self) -> str:
        return f"{self.name},{self.measured!r},{self.stderr!r},{self.bound!r},{self.slack!r},{'pass' if self.verdict else 'fail'}"

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "measured": self.measured,
            "stderr": self.stderr,
            "bound": self.bound,
            "slack": self.slack,
            "verdict": "pass" if self.verdict else "fail",
        }


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


# generalization from information


def ege_interpolate(emp: float, cmi: float, n: int) -> float:
    """Risk bound ``2 emp + 3 cmi / n`` for [0, 1]-bounded losses."""
    _need(n >= 1, "n must be >= 1")
    return 2 * emp + 3 * cmi / n


def ege_fastrate_cmi(cmi: float, n: int) -> float:
    """Risk bound ``cmi / (n log 2)`` for interpolating learners."""
    _need(n >= 1, "n must be >= 1")
    return cmi / (n * LOG2)


def ege_fastrate_ecmi(ecmi: float, n: int) -> float:
    """Risk bound ``1.5 ecmi / n`` for consistent learners."""
    _need(n >= 1, "n must be >= 1")
    return 1.5 * ecmi / n


# information ceilings


def cmi_bound_vc_ecmi(d: int, n: int) -> float:
    """Per-supersample eCMI ceiling ``d log(6n)`` for proper learners."""
    _need(d >= 0 and n >= 1, "need d >= 0 and n >= 1")
    return d * math.log(6 * n)


def cmi_bound_compression(k: int, n: int) -> float:
    _need(k >= 0 and n >= 1, "need k >= 0 and n >= 1")
    return k * math.log(2 * n)


def cmi_bound_stable(k: int) -> float:
    _need(k >= 0, "k must be >= 0")
    return 2 * k * LOG2


def cmi_bound_svm(d: int) -> float:
    _need(d >= 1, "d must be >= 1")
    return 2 * (d + 1) * LOG2


def cmi_bound_version_space(s: int) -> float:
    _need(s >= 1, "star number must be >= 1")
    return 2 * s * LOG2


def cmi_from_risk_erm(risk: float, n: int) -> float:
    """``2 n log 2 * risk``, the CMI ceiling of the least-element ERM in terms of its risk."""
    _need(n >= 1, "n must be >= 1")
    return 2 * n * LOG2 * risk


@dataclass(frozen=True)
class LooBudget:
    theta: float
    n: int

    def __post_init__(self):
        _need(self.theta > 0, "theta must be positive")
        _need(self.n >= 2 * self.theta, "need n >= 2 theta")


def ecmi_bound_loo(theta: float, n: int) -> float:
    """``theta log((n+1)/theta) + 2 theta log 2`` for a leave-one-out error budget ``theta/(n+1)``."""
    LooBudget(theta, n)
    return theta * math.log((n + 1) / theta) + 2 * theta * LOG2


@dataclass(frozen=True)
class SandwichCheck:
    lower_ok: bool
    upper_ok: bool
    lower: float
    upper: float
    normalized_ecmi: float

    def __bool__(self) -> bool:
        return self.lower_ok and self.upper_ok


def sandwich_upper(risk: float) -> float:
    return binary_entropy(risk) + risk * LOG2


def sandwich(risk: float, ecmi: float, n: int, tol: float = EXACT_TOL) -> SandwichCheck:
    """``(2/3) risk <= ecmi / n <= h2(risk) + risk log 2`` for consistent learners."""
    _need(n >= 1, "n must be >= 1")
    _need(0 <= risk <= 1, "risk must lie in [0, 1]")
    e = ecmi / n
    lower = 2 * risk / 3
    upper = sandwich_upper(risk)
    return SandwichCheck(lower <= e + tol, e <= upper + tol, lower, upper, e)


def sandwich_reports(risks, ecmis, n: int, name: str = "sandwich") -> tuple:
    """Both sandwich inequalities as Monte-Carlo reports from paired per-draw values.

    The upper side is linearized around the mean risk so the standard error
    accounts for the pairing of risk and eCMI within a draw.
    """
    r = np.asarray(risks, dtype=float)
    e = np.asarray(ecmis, dtype=float) / n
    k = len(r)
    _need(k >= 2 and len(e) == k, "need >= 2 paired draws")
    rbar = float(r.mean())
    lower_stat = 2 * r / 3 - e
    lower = BoundReport(f"{name}-lower", float(lower_stat.mean()), 0.0, float(lower_stat.std(ddof=1) / math.sqrt(k)))
    slope = LOG2 + (math.log((1 - rbar) / rbar) if 0 < rbar < 1 else 0.0)
    lin = e - slope * r
    upper = BoundReport(
        f"{name}-upper", float(e.mean()), sandwich_upper(rbar), float(lin.std(ddof=1) / math.sqrt(k))
    )
    return lower, upper


# coupon collector


def coupon_guarantee(M: int, m: int, k: int) -> bool:
    """Whether ``k`` uniform draws from ``M`` coupons provably leave at least ``m`` unseen w.p. >= 1/2."""
    _need(1 <= m <= M, "need 1 <= m <= M")
    _need(k >= 0, "k must be >= 0")
    return k <= (M / 2) * math.log(M / m)


def simulate_unseen(M: int, m: int, k: int, trials: int, seed: int) -> tuple:
    """Monte-Carlo ``Pr(unseen >= m)`` after ``k`` draws, with its standard error."""
    rng = np.random.default_rng(seed)
    if k == 0:
        return 1.0 if M >= m else 0.0, 0.0
    draws = rng.integers(0, M, size=(trials, k))
    seen = np.zeros((trials, M), dtype=bool)
    np.put_along_axis(seen, draws, True, axis=1)
    hit = (M - seen.sum(axis=1)) >= m
    p = float(hit.mean())
    return p, math.sqrt(p * (1 - p) / trials)


def fitted_slope(xs, ys) -> tuple:
    """Least-squares slope and its standard error."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    dof = len(x) - 2
    sxx = float(((x - x.mean()) ** 2).sum())
    if dof > 0 and sxx > 0:
        resid = y - A @ coef
        se = math.sqrt(float(resid @ resid) / dof / sxx)
    else:
        se = 0.0
    return float(coef[0]), se
