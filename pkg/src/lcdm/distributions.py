"""CDFs and survival functions for the reference distributions of the tests."""

from __future__ import annotations

import enum
import math

from .special import betainc, betaincc, gammainc, gammaincc


class Dist(str, enum.Enum):
    F = "F"
    T = "T"
    CHI2 = "CHI2"
    STD_NORMAL = "STD_NORMAL"


def _check_df(*dfs: float) -> None:
    for df in dfs:
        if not (df > 0) or math.isinf(df):
            raise ValueError(f"degrees of freedom must be positive and finite, got {df}")


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def norm_sf(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def t_cdf(x: float, df: float) -> float:
    _check_df(df)
    if math.isnan(x):
        return math.nan
    if math.isinf(x):
        return 1.0 if x > 0 else 0.0
    x2 = x * x
    # tail mass beyond |x| is I_{df/(df+x^2)}(df/2, 1/2) / 2
    tail = 0.5 * betainc(0.5 * df, 0.5, df / (df + x2), x2 / (df + x2))
    return 1.0 - tail if x > 0 else tail


def t_sf(x: float, df: float) -> float:
    return t_cdf(-x, df)


def chi2_cdf(x: float, df: float) -> float:
    _check_df(df)
    return gammainc(0.5 * df, 0.5 * x) if x > 0 else 0.0


def chi2_sf(x: float, df: float) -> float:
    _check_df(df)
    return gammaincc(0.5 * df, 0.5 * x) if x > 0 else 1.0


def f_cdf(x: float, d1: float, d2: float) -> float:
    _check_df(d1, d2)
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    denom = d1 * x + d2
    return betainc(0.5 * d1, 0.5 * d2, d1 * x / denom, d2 / denom)


def f_sf(x: float, d1: float, d2: float) -> float:
    _check_df(d1, d2)
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    denom = d1 * x + d2
    return betaincc(0.5 * d1, 0.5 * d2, d1 * x / denom, d2 / denom)


def dist_cdf(kind: Dist | str, x: float, *df: float) -> float:
    """CDF of ``kind`` at ``x``; ``df`` carries (d1, d2) for F and one value for T/CHI2."""
    kind = Dist(kind)
    if kind is Dist.STD_NORMAL:
        if df:
            raise ValueError("standard normal takes no degrees of freedom")
        return norm_cdf(x)
    if kind is Dist.F:
        if len(df) != 2:
            raise ValueError("F distribution needs two degrees of freedom")
        return f_cdf(x, *df)
    if len(df) != 1:
        raise ValueError(f"{kind.value} distribution needs one degree of freedom")
    if kind is Dist.T:
        return t_cdf(x, df[0])
    return chi2_cdf(x, df[0])


def dist_sf(kind: Dist | str, x: float, *df: float) -> float:
    """Upper tail probability, computed directly rather than as 1 - cdf."""
    kind = Dist(kind)
    if kind is Dist.STD_NORMAL:
        return norm_sf(x)
    if kind is Dist.F:
        return f_sf(x, *df)
    if kind is Dist.T:
        return t_sf(x, df[0])
    return chi2_sf(x, df[0])
