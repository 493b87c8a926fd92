"""Statistical test battery: Friedman, Wilcoxon signed-rank, Holm adjustment,
paired t, and one-way repeated-measures ANOVA.

The special functions backing the p-values (regularized incomplete gamma and
beta) are implemented here directly with series/continued-fraction expansions
so the package carries no stats dependency; they are validated against
high-precision reference values in the test suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_MAX_ITER = 500
_EPS = 3e-16
_TINY = 1e-300


class StatsError(ValueError):
    pass


# --- special functions -------------------------------------------------------


def _gamma_p_series(a: float, x: float) -> float:
    """Lower regularized incomplete gamma P(a, x) by power series (x < a + 1)."""
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_cf(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x) by continued fraction (x >= a + 1)."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_gamma_q(a: float, x: float) -> float:
    """Q(a, x) = Gamma(a, x) / Gamma(a), the upper regularized incomplete gamma."""
    if a <= 0:
        raise StatsError("gamma shape must be positive")
    if x < 0:
        raise StatsError("gamma argument must be non-negative")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_cf(a, x)


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h


def regularized_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b), the regularized incomplete beta function."""
    if a <= 0 or b <= 0:
        raise StatsError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def chi2_sf(x: float, df: float) -> float:
    """P(Chi2_df > x)."""
    if x <= 0:
        return 1.0
    return regularized_gamma_q(df / 2.0, x / 2.0)


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T_df| > |t|)."""
    if df <= 0:
        raise StatsError("degrees of freedom must be positive")
    if t == 0:
        return 1.0
    if math.isinf(t):
        return 0.0
    return regularized_beta(df / 2.0, 0.5, df / (df + t * t))


def f_sf(f: float, df1: float, df2: float) -> float:
    """P(F_{df1, df2} > f)."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return regularized_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))


def normal_sf_two_sided(z: float) -> float:
    """P(|Z| > |z|) for a standard normal."""
    return math.erfc(abs(z) / math.sqrt(2.0))


# --- rank helpers ------------------------------------------------------------


def rank_with_ties(values: np.ndarray) -> np.ndarray:
    """Ranks starting at 1; tied values share the mean of their rank range."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=np.float64)
    sv = v[order]
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _tie_term(values: np.ndarray) -> float:
    """Sum of t^3 - t over tie groups."""
    _, counts = np.unique(np.asarray(values, dtype=np.float64), return_counts=True)
    return float(np.sum(counts.astype(np.float64) ** 3 - counts))


# --- results -----------------------------------------------------------------


@dataclass
class TestResult:
    """Outcome of one statistical test, optionally Holm-adjusted in a family."""

    name: str
    statistic_name: str
    statistic: float
    dof: tuple[float, ...] | float | None
    p: float
    adjusted_p: float | None = None
    n: int | None = None
    effect_size: float | None = None
    extra: dict = field(default_factory=dict)

    def significant(self, alpha: float = 0.05) -> bool:
        p = self.adjusted_p if self.adjusted_p is not None else self.p
        return p < alpha

    def to_dict(self) -> dict:
        dof = self.dof
        if isinstance(dof, tuple):
            dof = list(dof)
        return {
            "name": self.name,
            "statistic_name": self.statistic_name,
            "statistic": self.statistic,
            "dof": dof,
            "p": self.p,
            "adjusted_p": self.adjusted_p,
            "n": self.n,
            "effect_size": self.effect_size,
            **({"extra": self.extra} if self.extra else {}),
        }


# --- tests -------------------------------------------------------------------


def friedman_test(data: np.ndarray, name: str = "friedman") -> TestResult:
    """Friedman chi-square over a participants x conditions matrix.

    Within-row average ranks with shared mean ranks on ties; the statistic
    carries the standard tie correction. Fully tied data yields chi2 = 0,
    p = 1.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise StatsError("friedman test needs at least 2 participants and 2 conditions")
    n, k = x.shape
    ranks = np.apply_along_axis(rank_with_ties, 1, x)
    rank_sums = ranks.sum(axis=0)
    chi2_raw = 12.0 / (n * k * (k + 1)) * np.sum(rank_sums**2) - 3.0 * n * (k + 1)
    tie_sum = sum(_tie_term(row) for row in x)
    correction = 1.0 - tie_sum / (n * k * (k * k - 1))
    if correction <= 0:
        chi2 = 0.0
        p = 1.0
    else:
        chi2 = float(chi2_raw / correction)
        p = chi2_sf(chi2, k - 1)
    return TestResult(name=name, statistic_name="chi2", statistic=chi2,
                      dof=float(k - 1), p=p, n=n)


def _exact_signed_rank_cdf(scaled_ranks: np.ndarray) -> np.ndarray:
    """Null distribution of 2*W+ over all sign assignments (counts array)."""
    total = int(scaled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in scaled_ranks:
        r = int(r)
        counts[r:] += counts[: len(counts) - r].copy()
    return counts


def wilcoxon_signed_rank(
    a: np.ndarray,
    b: np.ndarray,
    method: str = "auto",
    exact_limit: int = 25,
    name: str = "wilcoxon",
) -> TestResult:
    """Two-sided Wilcoxon signed-rank test for paired samples.

    Zero differences are dropped; tied |differences| share mean ranks.
    W = min(W+, W-). The p-value is exact (dynamic programming over the
    signed-rank distribution of the observed ranks) for effective n up to
    ``exact_limit``, otherwise a normal approximation with tie and
    continuity corrections. ``method`` one of auto|exact|approx.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise StatsError("wilcoxon needs two 1-D paired samples of equal length")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise StatsError("degenerate pairing: all differences are zero")

    ranks = rank_with_ties(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)

    if method == "exact" or (method == "auto" and n <= exact_limit):
        scaled = np.round(ranks * 2).astype(np.int64)
        counts = _exact_signed_rank_cdf(scaled)
        total = counts.sum()
        target = int(round(2 * w_plus))
        p_le = counts[: target + 1].sum() / total
        p_ge = counts[target:].sum() / total
        p = min(1.0, 2.0 * min(p_le, p_ge))
        used = "exact"
    elif method in ("approx", "auto"):
        mean = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - _tie_term(np.abs(d)) / 48.0
        if var <= 0:
            raise StatsError("degenerate pairing: zero variance")
        diff = w_plus - mean
        cc = 0.5 * np.sign(diff)
        z = (diff - cc) / math.sqrt(var)
        p = normal_sf_two_sided(z)
        used = "approx"
    else:
        raise StatsError(f"unknown method {method!r}")

    return TestResult(name=name, statistic_name="W", statistic=w, dof=None,
                      p=float(p), n=n, extra={"w_plus": w_plus, "w_minus": w_minus,
                                              "method": used})


def holm_bonferroni(pvals: list[float]) -> list[float]:
    """Step-down Holm adjustment; output in the input order."""
    p = np.asarray(pvals, dtype=np.float64)
    if np.any((p < 0) | (p > 1)):
        raise StatsError("p-values must lie in [0, 1]")
    m = len(p)
    if m == 0:
        return []
    order = np.argsort(p, kind="stable")
    adjusted = np.empty(m)
    running = 0.0
    for i, idx in enumerate(order):
        running = max(running, min(1.0, (m - i) * p[idx]))
        adjusted[idx] = running
    return adjusted.tolist()


def paired_t_test(a: np.ndarray, b: np.ndarray, name: str = "paired_t") -> TestResult:
    """Two-sided paired t-test."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise StatsError("paired t-test needs two 1-D samples of equal length >= 2")
    d = a - b
    n = len(d)
    sd = d.std(ddof=1)
    mean = d.mean()
    if sd == 0:
        t = 0.0 if mean == 0 else math.inf * np.sign(mean)
    else:
        t = mean / (sd / math.sqrt(n))
    p = t_sf_two_sided(float(abs(t)) if not math.isinf(t) else math.inf, n - 1)
    return TestResult(name=name, statistic_name="t", statistic=float(t),
                      dof=float(n - 1), p=p, n=n)


def rm_anova(data: np.ndarray, name: str = "rm_anova") -> TestResult:
    """One-way repeated-measures ANOVA over participants x conditions.

    Subject effects are removed; F = MS_condition / MS_error with
    dof (k-1, (k-1)(n-1)); effect_size is partial eta squared.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise StatsError("rm-anova needs at least 2 participants and 2 conditions")
    if not np.all(np.isfinite(x)):
        raise StatsError("missing cells are not allowed (no imputation)")
    n, k = x.shape
    grand = x.mean()
    ss_total = float(np.sum((x - grand) ** 2))
    ss_subj = float(k * np.sum((x.mean(axis=1) - grand) ** 2))
    ss_cond = float(n * np.sum((x.mean(axis=0) - grand) ** 2))
    if ss_cond <= 1e-12 * max(ss_total, 1.0):
        ss_cond = 0.0
    ss_err = max(ss_total - ss_subj - ss_cond, 0.0)
    df1 = k - 1
    df2 = (k - 1) * (n - 1)
    ms_cond = ss_cond / df1
    ms_err = ss_err / df2
    if ms_cond == 0:
        f = 0.0
    elif ms_err == 0:
        f = math.inf
    else:
        f = ms_cond / ms_err
    eta = ss_cond / (ss_cond + ss_err) if (ss_cond + ss_err) > 0 else 0.0
    return TestResult(name=name, statistic_name="F", statistic=float(f),
                      dof=(float(df1), float(df2)), p=f_sf(f, df1, df2), n=n,
                      effect_size=float(eta))
