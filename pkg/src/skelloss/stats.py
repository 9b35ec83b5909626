"""Welch's one-sided two-sample t-test and mean/std summaries.

The t statistic uses the unequal-variance (Welch) form with
Welch-Satterthwaite degrees of freedom.  The Student-t CDF is evaluated
through the regularized incomplete beta function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special


@dataclass(frozen=True)
class TTestResult:
    t_value: float
    p_value: float
    df: float


def student_t_cdf(t: float, df: float) -> float:
    """P(T <= t) for Student's t with ``df`` degrees of freedom.

    Uses tail = 0.5 * I_x(df/2, 1/2) with x = df / (df + t^2), where I is
    the regularized incomplete beta function.
    """
    if df <= 0:
        raise ValueError(f"degrees of freedom must be > 0, got {df}")
    if math.isinf(t):
        return 0.0 if t < 0 else 1.0
    x = df / (df + t * t)
    tail = 0.5 * float(special.betainc(df / 2.0, 0.5, x))
    return tail if t < 0 else 1.0 - tail


def _check_sample(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or len(arr) < 2:
        raise ValueError(f"{name}: need a flat sample of length >= 2, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name}: sample contains non-finite values")
    return arr


def t_test_one_sided(a, b, alternative: str = "greater") -> TTestResult:
    """Welch two-sample one-sided t-test on mean(a) - mean(b).

    ``alternative="greater"`` tests H1: mean(a) > mean(b) with
    p = P(T_df > t); ``"less"`` tests the mirror with p = P(T_df < t).

    Degenerate samples: both variances zero with equal means gives t = 0,
    p = 0.5; zero variances with unequal means gives an infinite t and a
    p of exactly 0 or 1.
    """
    if alternative not in ("greater", "less"):
        raise ValueError(f"alternative must be 'greater' or 'less', got {alternative!r}")
    a = _check_sample(a, "a")
    b = _check_sample(b, "b")
    na, nb = len(a), len(b)
    ma, mb = float(a.mean()), float(b.mean())
    va, vb = float(a.var(ddof=1)), float(b.var(ddof=1))
    qa, qb = va / na, vb / nb
    se2 = qa + qb
    if se2 == 0.0:
        df = float(na + nb - 2)
        t = 0.0 if ma == mb else math.copysign(math.inf, ma - mb)
    else:
        df = se2 * se2 / (qa * qa / (na - 1) + qb * qb / (nb - 1))
        t = (ma - mb) / math.sqrt(se2)
    # symmetry: P(T > t) = P(T <= -t), which keeps the upper tail accurate
    p = student_t_cdf(-t, df) if alternative == "greater" else student_t_cdf(t, df)
    return TTestResult(t_value=t, p_value=p, df=df)


def summarize(values) -> tuple[float, float]:
    """Arithmetic mean and sample standard deviation (n-1 denominator)."""
    arr = _check_sample(values, "samples")
    return float(arr.mean()), float(arr.std(ddof=1))
