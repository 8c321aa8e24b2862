"""Transaction-gap statistics: distribution fits, KS ranking, gap detector.

Inter-arrival gaps of a healthy ATM are modelled with four candidate
families ranked by the raw Kolmogorov-Smirnov statistic. The fitted
exponential mean also yields an inactivity threshold: once a machine has
been silent longer than the gap a healthy stream would exceed with only 1%
probability, its transaction channel votes out-of-service.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.special import erf, gammainc

from .journal import StatusTimeline

FAMILIES = ("exponential", "gamma", "logistic", "normal")

MIN_RANK_SAMPLES = 8


class FitError(ValueError):
    pass


class DegenerateFitError(FitError):
    """Raised when a family cannot be fitted (for example zero variance)."""


@dataclasses.dataclass(frozen=True)
class ExponentialFit:
    mean: float

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x > 0, 1.0 - np.exp(-np.clip(x, 0, None) / self.mean), 0.0)


@dataclasses.dataclass(frozen=True)
class GammaFit:
    shape: float
    scale: float

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return gammainc(self.shape, np.clip(x, 0, None) / self.scale)


@dataclasses.dataclass(frozen=True)
class LogisticFit:
    location: float
    scale: float

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return 1.0 / (1.0 + np.exp(-(x - self.location) / self.scale))


@dataclasses.dataclass(frozen=True)
class NormalFit:
    mean: float
    sd: float

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        z = (x - self.mean) / (self.sd * math.sqrt(2.0))
        return 0.5 * (1.0 + erf(z))


def _check_samples(samples, positive: bool) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or len(x) == 0:
        raise FitError("samples must be a non-empty 1-d array")
    if not np.all(np.isfinite(x)):
        raise FitError("samples must be finite")
    if positive and np.any(x <= 0):
        raise FitError("samples must be strictly positive")
    return x


def fit_exponential(samples) -> ExponentialFit:
    x = _check_samples(samples, positive=True)
    return ExponentialFit(mean=float(x.mean()))


def fit_gamma(samples) -> GammaFit:
    """Method-of-moments fit: shape = mean^2/var, scale = var/mean."""
    x = _check_samples(samples, positive=True)
    var = float(x.var())
    if var == 0.0:
        raise DegenerateFitError("gamma fit needs non-zero variance")
    mean = float(x.mean())
    return GammaFit(shape=mean * mean / var, scale=var / mean)


def fit_logistic(samples) -> LogisticFit:
    x = _check_samples(samples, positive=False)
    sd = float(x.std())
    if sd == 0.0:
        raise DegenerateFitError("logistic fit needs non-zero variance")
    return LogisticFit(location=float(x.mean()), scale=sd * math.sqrt(3.0) / math.pi)


def fit_normal(samples) -> NormalFit:
    x = _check_samples(samples, positive=False)
    sd = float(x.std())
    if sd == 0.0:
        raise DegenerateFitError("normal fit needs non-zero variance")
    return NormalFit(mean=float(x.mean()), sd=sd)


_FITTERS = {
    "exponential": fit_exponential,
    "gamma": fit_gamma,
    "logistic": fit_logistic,
    "normal": fit_normal,
}


def ks_statistic(samples, cdf) -> float:
    """Raw two-sided KS distance between the empirical CDF and ``cdf``.

    The supremum is evaluated at the sample points from both sides of each
    empirical step, which handles tied samples exactly.
    """
    x = _check_samples(samples, positive=False)
    n = len(x)
    vals, counts = np.unique(x, return_counts=True)
    cum = np.cumsum(counts)
    fn_right = cum / n
    fn_left = (cum - counts) / n
    f = np.asarray(cdf(vals), dtype=np.float64)
    return float(np.maximum(np.abs(fn_right - f), np.abs(fn_left - f)).max())


@dataclasses.dataclass(frozen=True)
class RankingResult:
    """KS distances per family, best (smallest) first."""

    entries: list[tuple[str, float]]
    skipped: dict[str, str]

    @property
    def best(self) -> str:
        return self.entries[0][0]

    def distance(self, family: str) -> float:
        for name, d in self.entries:
            if name == family:
                return d
        raise KeyError(family)


def rank_families(samples) -> RankingResult:
    x = _check_samples(samples, positive=True)
    if len(x) < MIN_RANK_SAMPLES:
        raise FitError(f"family ranking needs at least {MIN_RANK_SAMPLES} samples")
    scored = []
    skipped = {}
    for rank, family in enumerate(FAMILIES):
        try:
            fit = _FITTERS[family](x)
        except DegenerateFitError as exc:
            skipped[family] = str(exc)
            continue
        scored.append((ks_statistic(x, fit.cdf), rank, family))
    scored.sort()
    return RankingResult(entries=[(f, d) for d, _, f in scored], skipped=skipped)


def gap_threshold(mean_interarrival_s: float, confidence: float = 0.99) -> float:
    """Gap length a healthy exponential stream exceeds with prob 1-confidence."""
    if mean_interarrival_s <= 0:
        raise ValueError("mean inter-arrival must be positive")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie strictly between 0 and 1")
    return -mean_interarrival_s * math.log(1.0 - confidence)


@dataclasses.dataclass(frozen=True)
class GapDetectorState:
    """Per-ATM inactivity detector fitted on clean in-service gaps."""

    atm_id: str
    mean_interarrival_s: float
    threshold_s: float
    last_tx_ts: float
    fittable: bool = True


def transaction_status(state: GapDetectorState, now_ts: float) -> bool:
    """True (in service) while the current gap is within the threshold.

    Unfittable detectors always report in service; callers should consult
    ``state.fittable`` before trusting the vote.
    """
    if now_ts < state.last_tx_ts:
        raise ValueError("now precedes the last observed transaction")
    if not state.fittable:
        return True
    return (now_ts - state.last_tx_ts) <= state.threshold_s


def clean_gaps(
    tx_ts: np.ndarray, timeline: StatusTimeline, window: tuple[float, float] | None = None
) -> np.ndarray:
    """Inter-arrival gaps whose spanning interval lies wholly in up-time."""
    ts = np.asarray(tx_ts, dtype=np.float64)
    if window is not None:
        ts = ts[(ts >= window[0]) & (ts < window[1])]
    if len(ts) < 2:
        return np.empty(0)
    a, b = ts[:-1], ts[1:]
    ia = np.searchsorted(timeline.starts, a, side="right") - 1
    ib = np.searchsorted(timeline.starts, b, side="right") - 1
    same_up = (ia == ib) & timeline.up[ia.clip(min=0)] & (ia >= 0)
    return (b - a)[same_up]


def fit_per_atm(
    transactions: dict[str, np.ndarray],
    truth: dict[str, StatusTimeline],
    window: tuple[float, float] | None = None,
    confidence: float = 0.99,
) -> dict[str, GapDetectorState]:
    """Fit one gap detector per ATM from clean gaps in the given window.

    ATMs with no clean gap are marked unfittable. The detector's
    ``last_tx_ts`` starts at the last transaction seen in the window (or
    the window start when there is none).
    """
    out = {}
    for atm_id, ts in transactions.items():
        timeline = truth[atm_id]
        win = window if window is not None else timeline.horizon
        gaps = clean_gaps(ts, timeline, win)
        ts_in = np.asarray(ts, dtype=np.float64)
        ts_in = ts_in[(ts_in >= win[0]) & (ts_in < win[1])]
        last = float(ts_in[-1]) if len(ts_in) else float(win[0])
        if len(gaps) == 0:
            out[atm_id] = GapDetectorState(atm_id, math.nan, math.nan, last, fittable=False)
            continue
        mean = float(gaps.mean())
        out[atm_id] = GapDetectorState(
            atm_id, mean, gap_threshold(mean, confidence), last, fittable=True
        )
    return out
