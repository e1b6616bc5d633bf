"""Agreement statistics: concordance, Bland-Altman, Wilcoxon, chi-square, kappa.

Pinned conventions: population moments for the concordance coefficient,
sample (n-1) SD for Bland-Altman, zero differences dropped in the Wilcoxon
test (Pratt behind a flag), two-sided exact p as the sign-flip probability
of |W - E[W]| >= observed, and mid-ranks for ties.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaincc, ndtr, ndtri

from .errors import UndefinedStatisticError, ValidationError


def _check_pairs(x: Sequence[float], y: Sequence[float], min_len: int = 1) -> tuple[np.ndarray, np.ndarray]:
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.ndim != 1 or ya.ndim != 1:
        raise ValidationError("paired series must be 1D")
    if xa.size != ya.size:
        raise ValidationError("paired series must have equal length")
    if xa.size < min_len:
        raise ValidationError(f"need at least {min_len} pairs")
    return xa, ya


@dataclass(frozen=True)
class CccResult:
    rho_c: float
    ci_low: Optional[float]
    ci_high: Optional[float]


def lin_ccc(x: Sequence[float], y: Sequence[float], level: float = 0.95) -> CccResult:
    """Concordance correlation with population moments.

    rho_c = 2 cov / (var_x + var_y + (mean_x - mean_y)^2). The CI uses the
    Fisher z-transform with the classic variance approximation; it is None
    when the approximation is not computable (n < 3, degenerate inputs, or
    |rho_c| = 1).
    """
    xa, ya = _check_pairs(x, y, min_len=2)
    n = xa.size
    mx, my = float(xa.mean()), float(ya.mean())
    vx, vy = float(xa.var()), float(ya.var())
    cov = float(((xa - mx) * (ya - my)).mean())
    denom = vx + vy + (mx - my) ** 2
    if denom == 0.0:
        raise UndefinedStatisticError("both series constant with equal means")
    rho_c = 2.0 * cov / denom

    ci_low = ci_high = None
    if n >= 3 and vx > 0 and vy > 0 and 0.0 < abs(rho_c) < 1.0:
        r = cov / math.sqrt(vx * vy)
        if r != 0.0:
            u = (mx - my) / (vx * vy) ** 0.25
            z = math.atanh(rho_c)
            one = 1.0 - rho_c**2
            var_z = (
                (1.0 - r**2) * rho_c**2 / (one * r**2)
                + 2.0 * rho_c**3 * (1.0 - rho_c) * u**2 / (r * one**2)
                - rho_c**4 * u**4 / (2.0 * r**2 * one**2)
            ) / (n - 2)
            if var_z > 0:
                zcrit = float(ndtri(1.0 - (1.0 - level) / 2.0))
                half = zcrit * math.sqrt(var_z)
                ci_low, ci_high = math.tanh(z - half), math.tanh(z + half)
    return CccResult(rho_c=rho_c, ci_low=ci_low, ci_high=ci_high)


@dataclass(frozen=True)
class BlandAltmanResult:
    bias: float
    sd_diff: float
    loa_low: float
    loa_high: float


def bland_altman(x: Sequence[float], y: Sequence[float], multiplier: float = 1.96) -> BlandAltmanResult:
    """Bias and limits of agreement of the differences y - x (sample SD)."""
    xa, ya = _check_pairs(x, y, min_len=2)
    d = ya - xa
    bias = float(d.mean())
    sd = float(d.std(ddof=1))
    return BlandAltmanResult(
        bias=bias,
        sd_diff=sd,
        loa_low=bias - multiplier * sd,
        loa_high=bias + multiplier * sd,
    )


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with mid-rank ties; every value is a multiple of 0.5."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def wilcoxon_signed_rank(
    x: Sequence[float],
    y: Sequence[float],
    mode: str = "auto",
    zero_method: str = "wilcox",
    exact_threshold: int = 20,
) -> float:
    """Two-sided paired signed-rank p-value.

    mode: "exact" enumerates the sign-flip null (via a rank-sum count
    distribution, identical to full enumeration); "normal" uses the
    tie-corrected normal approximation with continuity correction; "auto"
    picks exact when the number of non-zero differences is <= the
    threshold. All-zero differences give p = 1.0.
    """
    if mode not in ("auto", "exact", "normal"):
        raise ValidationError(f"unknown mode {mode!r}")
    if zero_method not in ("wilcox", "pratt"):
        raise ValidationError(f"unknown zero_method {zero_method!r}")
    xa, ya = _check_pairs(x, y, min_len=1)
    d = ya - xa

    if zero_method == "wilcox":
        d = d[d != 0.0]
        if d.size == 0:
            return 1.0
        ranks = _midranks(np.abs(d))
    else:  # pratt: rank zeros too, then discard their ranks
        if not np.any(d != 0.0):
            return 1.0
        all_ranks = _midranks(np.abs(d))
        keep = d != 0.0
        d, ranks = d[keep], all_ranks[keep]

    m = d.size
    use_exact = mode == "exact" or (mode == "auto" and m <= exact_threshold)
    if use_exact:
        return _wilcoxon_exact_p(d, ranks)
    return _wilcoxon_normal_p(d, ranks)


def _wilcoxon_exact_p(d: np.ndarray, ranks: np.ndarray) -> float:
    # Work in doubled units so every rank is an integer and arithmetic exact.
    r2 = np.rint(2.0 * ranks).astype(np.int64)
    s2 = int(r2.sum())
    e2 = s2 // 2  # s2 = 2 * sum(ranks) is even: sum of ranks is m(m+1)/2
    w2_obs = int(r2[d > 0].sum())
    d2 = abs(w2_obs - e2)
    counts = [0] * (s2 + 1)
    counts[0] = 1
    for r in r2.tolist():
        for s in range(s2 - r, -1, -1):
            if counts[s]:
                counts[s + r] += counts[s]
    hits = sum(c for w2, c in enumerate(counts) if abs(w2 - e2) >= d2)
    return hits / (1 << len(r2))


def _wilcoxon_normal_p(d: np.ndarray, ranks: np.ndarray) -> float:
    # Moments under the sign-flip null, from the ranks actually in play:
    # E[T+] = sum(r)/2 and Var[T+] = sum(r^2)/4. With mid-ranks this equals
    # the classic tie-corrected closed form, and it stays valid for the
    # Pratt zero handling where the zero ranks are discarded.
    t_plus = float(ranks[d > 0].sum())
    mean = float(ranks.sum()) / 2.0
    var = float((ranks**2).sum()) / 4.0
    if var <= 0:
        return 1.0
    diff = t_plus - mean
    if diff == 0:
        return 1.0
    z = (diff - 0.5 * math.copysign(1.0, diff)) / math.sqrt(var)
    return min(1.0, 2.0 * (1.0 - float(ndtr(abs(z)))))


@dataclass(frozen=True)
class ChiSquareResult:
    chi2: float
    df: int
    p: float


def chi_square_uniform(counts: Sequence[int]) -> ChiSquareResult:
    """One-way chi-square against the uniform distribution over categories."""
    obs = [int(c) for c in counts]
    if len(obs) < 2:
        raise ValidationError("need at least 2 categories")
    if any(c < 0 for c in obs):
        raise ValidationError("counts must be non-negative")
    total = sum(obs)
    if total == 0:
        raise UndefinedStatisticError("chi-square needs a positive total")
    k = len(obs)
    expected = total / k
    chi2 = sum((o - expected) ** 2 / expected for o in obs)
    df = k - 1
    # upper tail of the chi-square CDF via the regularized incomplete gamma
    p = float(gammaincc(df / 2.0, chi2 / 2.0))
    return ChiSquareResult(chi2=chi2, df=df, p=p)


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # k x k, rows = rater 1, cols = rater 2
    labels: tuple[str, ...]

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValidationError("confusion matrix must be square")
        if counts.shape[0] < 2:
            raise ValidationError("confusion matrix needs k >= 2 categories")
        if len(self.labels) != counts.shape[0]:
            raise ValidationError("label count must match matrix size")
        if (counts < 0).any():
            raise ValidationError("counts must be non-negative")
        counts = counts.copy()
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def cohen_kappa(matrix, weighting: str = "none") -> float:
    """Cohen's kappa, unweighted or with linear (ordinal-distance) weights."""
    if weighting not in ("none", "linear"):
        raise ValidationError(f"unknown weighting {weighting!r}")
    counts = matrix.counts if isinstance(matrix, ConfusionMatrix) else np.asarray(matrix, dtype=np.int64)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or counts.shape[0] < 2:
        raise ValidationError("kappa needs a square k>=2 matrix")
    total = int(counts.sum())
    if total == 0:
        raise UndefinedStatisticError("kappa needs a positive total")
    k = counts.shape[0]
    rows = counts.sum(axis=1)
    cols = counts.sum(axis=0)
    if weighting == "none":
        p_o = float(np.trace(counts)) / total
        p_e = float((rows * cols).sum()) / total**2
        if p_e == 1.0:
            return 1.0
        return (p_o - p_e) / (1.0 - p_e)
    idx = np.arange(k)
    disagreement = np.abs(idx[:, None] - idx[None, :]) / (k - 1)
    obs_term = float((disagreement * counts).sum())
    exp = np.outer(rows, cols) / total
    exp_term = float((disagreement * exp).sum())
    if exp_term == 0.0:
        return 1.0
    return 1.0 - obs_term / exp_term
