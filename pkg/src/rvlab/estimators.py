"""Tail index, tail ratio, balance, spectral and window estimators."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, InsufficientDataError, UndefinedRatioError
from .rv_core import SphereDist, batch_norm

Z_95 = 1.96
MIN_SPECTRAL_EXCEEDANCES = 100
ATOM_DECIMALS = 12

ESTIMATE_COLUMNS = (
    "experiment_id",
    "estimator",
    "value",
    "ci_low",
    "ci_high",
    "threshold",
    "n_exceedances",
    "n_total",
    "seed",
)


@dataclass
class TailEstimate:
    value: float
    ci_low: float
    ci_high: float
    threshold: float
    n_exceedances: int
    n_total: int

    def __post_init__(self):
        if not (self.ci_low <= self.value <= self.ci_high):
            raise DomainError(f"estimate {self.value} outside its interval [{self.ci_low}, {self.ci_high}]")
        if self.n_exceedances > self.n_total:
            raise DomainError("more exceedances than samples")

    def to_row(self, experiment_id: str = "", estimator: str = "", seed: int | None = None) -> dict:
        row = {"experiment_id": experiment_id, "estimator": estimator}
        row.update(asdict(self))
        row["seed"] = seed
        return row

    @classmethod
    def from_dict(cls, d: dict) -> "TailEstimate":
        return cls(
            float(d["value"]),
            float(d["ci_low"]),
            float(d["ci_high"]),
            float(d["threshold"]),
            int(d["n_exceedances"]),
            int(d["n_total"]),
        )


def _positive(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("empty sample")
    if np.any(~(x > 0)):
        raise DomainError("samples must be positive")
    return x


def top_values(x: np.ndarray, m: int) -> np.ndarray:
    """The ``m`` largest values of ``x`` in decreasing order."""
    m = min(m, x.size)
    if m == x.size:
        return np.sort(x)[::-1]
    return np.sort(np.partition(x, x.size - m)[x.size - m :])[::-1]


def hill_estimate(samples, k: int) -> TailEstimate:
    """Hill estimator of the tail index from the ``k`` largest order statistics.

    ``value = 1 / mean(log(X_(i) / X_(k+1)))`` with ``X_(1) >= X_(2) >= ...``.
    """
    x = _positive(samples)
    n = x.size
    if not (2 <= k < n):
        raise DomainError(f"k must satisfy 2 <= k < n, got k={k}, n={n}")
    top = top_values(x, k + 1)
    mean_log = float(np.mean(np.log(top[:k] / top[k])))
    if mean_log <= 0:
        raise DomainError("degenerate sample: the top order statistics are all equal")
    value = 1.0 / mean_log
    half = Z_95 / math.sqrt(k)
    return TailEstimate(value, max(0.0, value * (1 - half)), value * (1 + half), float(top[k]), k, n)


def quantile_threshold(values, level: float) -> tuple[float, int]:
    """Threshold with ``round((1 - level) n)`` values strictly above it.

    Returns ``(threshold, k)``; the threshold is the (k+1)-th largest value.
    """
    v = np.asarray(values, dtype=float).ravel()
    if not 0 < level < 1:
        raise DomainError("quantile level must lie in (0, 1)")
    k = int(round((1 - level) * v.size))
    if k < 1 or k >= v.size:
        raise InsufficientDataError(f"level {level} leaves {k} exceedances out of {v.size}", k)
    return float(top_values(v, k + 1)[k]), k


def ratio_from_counts(
    k_num: int,
    n_num: int,
    k_den: int,
    n_den: int,
    threshold: float = math.nan,
    k_both: int | None = None,
) -> TailEstimate:
    """Ratio of exceedance frequencies with a delta-method interval.

    ``k_both`` (joint exceedances of paired samples) adds the covariance
    term; without it the two samples are treated as independent. A zero
    numerator gives value 0 with a rule-of-three upper limit.
    """
    if k_den == 0:
        raise UndefinedRatioError("no exceedances in the denominator sample", k_num, n_num, k_den, n_den)
    if n_num < 1 or n_den < 1:
        raise DomainError("sample sizes must be positive")
    p_num, p_den = k_num / n_num, k_den / n_den
    value = p_num / p_den
    if k_num == 0:
        return TailEstimate(0.0, 0.0, (3.0 / n_num) / p_den, threshold, 0, n_num)
    rel_var = (1 - p_num) / k_num + (1 - p_den) / k_den
    if k_both is not None:
        if n_num != n_den:
            raise DomainError("paired counts need equal sample sizes")
        p_both = k_both / n_num
        rel_var -= 2 * (p_both - p_num * p_den) / (n_num * p_num * p_den)
    half = Z_95 * value * math.sqrt(max(rel_var, 0.0))
    return TailEstimate(value, max(0.0, value - half), value + half, threshold, k_num, n_num)


def tail_ratio(samples_num, samples_den, t: float, paired: bool = False) -> TailEstimate:
    """Estimate ``P(num > t) / P(den > t)`` from two samples.

    With ``paired=True`` the samples are taken as drawn jointly (same length)
    and the interval accounts for their correlation.
    """
    if not t > 0:
        raise DomainError("threshold must be positive")
    num = np.asarray(samples_num, dtype=float).ravel()
    den = np.asarray(samples_den, dtype=float).ravel()
    if num.size == 0 or den.size == 0:
        raise DomainError("both samples must be nonempty")
    en, ed = num > t, den > t
    k_both = int(np.count_nonzero(en & ed)) if paired else None
    return ratio_from_counts(
        int(np.count_nonzero(en)), num.size, int(np.count_nonzero(ed)), den.size, float(t), k_both
    )


def balance_constants(x_norms_pow, y_norms_pow, t: float) -> tuple[TailEstimate, TailEstimate]:
    """Balance constants ``c_X, c_Y`` from paired powered norms.

    ``c_X = P(|X|^a_X > t) / P(|X|^a_X |Y|^a_Y > t)`` and symmetrically for Y.
    """
    xp = np.asarray(x_norms_pow, dtype=float).ravel()
    yp = np.asarray(y_norms_pow, dtype=float).ravel()
    if xp.size != yp.size:
        raise DomainError("balance constants need paired samples of equal length")
    prod = xp * yp
    return tail_ratio(xp, prod, t, paired=True), tail_ratio(yp, prod, t, paired=True)


def empirical_spectral(samples, threshold: float, norm_kind: str = "euclidean", shape=None) -> SphereDist:
    """Weighted table of directions ``x / ||x||`` over samples with ``||x|| > threshold``.

    Directions equal to twelve decimals are merged into one atom.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    norms = batch_norm(x, norm_kind, shape)
    keep = norms > threshold
    count = int(np.count_nonzero(keep))
    if count < MIN_SPECTRAL_EXCEEDANCES:
        raise InsufficientDataError(
            f"{count} exceedances of {threshold}, need at least {MIN_SPECTRAL_EXCEEDANCES}", count
        )
    dirs = x[keep].reshape(count, -1) / norms[keep][:, None]
    _, first, counts = np.unique(
        np.round(dirs, ATOM_DECIMALS), axis=0, return_index=True, return_counts=True
    )
    atoms = dirs[first]
    atoms = atoms / batch_norm(atoms, norm_kind, shape)[:, None]
    probs = counts / counts.sum()
    return SphereDist(x.shape[1], norm_kind, "custom-table", atoms=atoms, probs=probs, shape=shape)


def window_diagnostic(x_samples, y_samples, M: float, t: float) -> float:
    """Finite-``(M, t)`` value of ``P(XY > t, M < X <= t/M) / P(X > t)``.

    A diagnostic number only; the corresponding double limit cannot be
    settled from finite data.
    """
    if not M > 1:
        raise DomainError("M must exceed 1")
    if not t > M * M:
        raise DomainError("t must exceed M^2")
    x = np.asarray(x_samples, dtype=float).ravel()
    y = np.asarray(y_samples, dtype=float).ravel()
    if x.size != y.size:
        raise DomainError("window diagnostic needs paired samples")
    k_den = int(np.count_nonzero(x > t))
    if k_den == 0:
        raise UndefinedRatioError("no exceedances of X above t", 0, x.size, 0, x.size)
    window = (x > M) & (x <= t / M) & (x * y > t)
    return int(np.count_nonzero(window)) / k_den
