"""Macro F1, Student-t confidence limits and the Wilcoxon signed-rank test."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from senres.errors import InsufficientDataError, InvalidParamsError, ShapeError

EXACT_WILCOXON_MAX_N = 20


def mean_f1(preds, labels, num_classes: int | None = None) -> float:
    """Unweighted mean of per-class F1 over the classes present in ``labels``.

    A class whose F1 denominator is zero scores 0.  ``num_classes`` only
    validates the ids.
    """
    preds = np.asarray(preds, dtype=np.int64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if preds.shape != labels.shape:
        raise ShapeError(f"{preds.size} predictions for {labels.size} labels")
    if labels.size == 0:
        raise InvalidParamsError("mean_f1 of an empty label set")
    if num_classes is not None and (max(preds.max(), labels.max()) >= num_classes or min(preds.min(), labels.min()) < 0):
        raise InvalidParamsError("class id outside the class table")
    scores = []
    for c in np.unique(labels):
        tp = np.sum((preds == c) & (labels == c))
        fp = np.sum((preds == c) & (labels != c))
        fn = np.sum((preds != c) & (labels == c))
        denom = 2 * tp + fp + fn
        scores.append(2.0 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def confidence_limits_95(scores) -> tuple[float, float]:
    """mean +/- t(0.975, n-1) * s / sqrt(n) with the sample standard deviation."""
    x = np.asarray(scores, dtype=np.float64).reshape(-1)
    n = x.size
    if n < 2:
        raise InvalidParamsError(f"confidence limits need at least 2 scores, got {n}")
    mean = float(x.mean())
    half = float(stats.t.ppf(0.975, n - 1) * x.std(ddof=1) / math.sqrt(n))
    return mean - half, mean + half


def _average_ranks(mags: np.ndarray) -> np.ndarray:
    return stats.rankdata(mags, method="average")


def signed_rank_distribution(doubled_ranks) -> list[int]:
    """Counts of every attainable 2*W+ over the 2^n sign assignments.

    Ranks are doubled so that tied (half-integer) ranks stay integral;
    the counts are exact Python integers.
    """
    total = int(sum(doubled_ranks))
    counts = [0] * (total + 1)
    counts[0] = 1
    reach = 0
    for r in doubled_ranks:
        r = int(r)
        for s in range(reach, -1, -1):
            if counts[s]:
                counts[s + r] += counts[s]
        reach += r
    return counts


@dataclass
class WilcoxonResult:
    n: int
    n_used: int
    w_plus: float
    w_minus: float
    p_value: float
    mean_diff: float
    verdict: str
    exact: bool

    def to_dict(self) -> dict:
        return asdict(self)


def verdict(mean_diff: float, p_value: float, alpha: float = 0.05) -> str:
    sign = "+" if mean_diff >= 0 else "-"
    return ("s" + sign) if p_value < alpha else sign


def wilcoxon_signed_rank(a, b, alpha: float = 0.05) -> WilcoxonResult:
    """Two-sided paired test of ``a`` against ``b``.

    Zero differences are dropped and tied magnitudes share average ranks.
    Up to 20 non-zero pairs the p-value is exact,
    ``min(1, 2 * min(P(W+ <= w), P(W+ >= w)))`` under the sign-flip null;
    beyond that a normal approximation with continuity and tie corrections
    is used.  The verdict sign follows the mean of ``a - b``.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ShapeError(f"paired samples differ in length: {a.size} vs {b.size}")
    if a.size < 5:
        raise InsufficientDataError(f"signed-rank test needs at least 5 pairs, got {a.size}")
    d = a - b
    mean_diff = float(d.mean())
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise InsufficientDataError("all paired differences are zero")
    ranks = _average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    exact = n <= EXACT_WILCOXON_MAX_N
    if exact:
        doubled = np.rint(2 * ranks).astype(np.int64)
        counts = signed_rank_distribution(doubled)
        w2 = int(round(2 * w_plus))
        total = 2 ** n
        lower = sum(counts[:w2 + 1])
        upper = sum(counts[w2:])
        p = min(1.0, 2.0 * min(lower, upper) / total)
    else:
        mu = n * (n + 1) / 4.0
        _, tie_counts = np.unique(np.abs(d), return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0
        z = max(abs(w_plus - mu) - 0.5, 0.0) / math.sqrt(var)
        p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    return WilcoxonResult(a.size, n, w_plus, w_minus, p, mean_diff, verdict(mean_diff, p, alpha), exact)


@dataclass
class StatReport:
    """Summary of one method's repetition scores plus paired comparisons."""

    method: str
    scores: list[float]
    mean: float
    lower: float | None
    upper: float | None
    comparisons: dict[str, WilcoxonResult] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["comparisons"] = {k: v.to_dict() for k, v in self.comparisons.items()}
        return d


def compare(a, b, alpha: float = 0.05) -> WilcoxonResult:
    """Like :func:`wilcoxon_signed_rank` but identical score lists give p = 1."""
    try:
        return wilcoxon_signed_rank(a, b, alpha)
    except InsufficientDataError:
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if a.shape == b.shape and a.size >= 5 and np.all(a == b):
            return WilcoxonResult(a.size, 0, 0.0, 0.0, 1.0, 0.0, verdict(0.0, 1.0, alpha), True)
        raise


def stat_report(method: str, scores, baselines: dict | None = None, alpha: float = 0.05) -> StatReport:
    scores = [float(s) for s in scores]
    mean = float(np.mean(scores))
    lower = upper = None
    if len(scores) >= 2:
        lower, upper = confidence_limits_95(scores)
    comparisons = {name: compare(scores, base, alpha) for name, base in (baselines or {}).items()}
    return StatReport(method, scores, mean, lower, upper, comparisons)


def render_table(reports: list[StatReport]) -> str:
    """Fixed-width text table: mean, 95% limits and one verdict column per baseline."""
    baselines: list[str] = []
    for r in reports:
        baselines.extend(b for b in r.comparisons if b not in baselines)
    header = ["method", "mean", "lower", "upper"] + [f"vs {b}" for b in baselines]
    rows = [header]
    for r in reports:
        row = [r.method, f"{r.mean:.4f}",
               "-" if r.lower is None else f"{r.lower:.4f}",
               "-" if r.upper is None else f"{r.upper:.4f}"]
        for b in baselines:
            c = r.comparisons.get(b)
            row.append("" if c is None else f"{c.verdict} (p={c.p_value:.4g})")
        rows.append(row)
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows) + "\n"
