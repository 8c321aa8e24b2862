"""Classification metrics and service-level KPIs.

The out-of-service class (label 0) is the positive class: a false alarm
is a down call on an up truth. Macro averages are plain arithmetic means
of the two per-class values; a 0/0 metric is reported as None and
excluded from its macro with a warning instead of being coerced to 0.
"""

from __future__ import annotations

import dataclasses
import math
import warnings

import numpy as np

from .journal import StatusTimeline

DOWN = 0
UP = 1


class AlignmentError(ValueError):
    """Prediction and truth keys disagree."""


@dataclasses.dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with down as positive: tp = correctly flagged down."""

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @staticmethod
    def from_labels(predicted, truth) -> "ConfusionMatrix":
        predicted = np.asarray(predicted)
        truth = np.asarray(truth)
        if predicted.shape != truth.shape:
            raise ValueError("prediction/truth length mismatch")
        p_down = predicted == DOWN
        t_down = truth == DOWN
        return ConfusionMatrix(
            tp=int(np.sum(p_down & t_down)),
            fp=int(np.sum(p_down & ~t_down)),
            tn=int(np.sum(~p_down & ~t_down)),
            fn=int(np.sum(~p_down & t_down)),
        )


def confusion(predictions: dict, truth: dict) -> ConfusionMatrix:
    """Both arguments map an alignment key (atm_id, ts) to a 0/1 label."""
    if predictions.keys() != truth.keys():
        missing = sorted(truth.keys() - predictions.keys())[:3]
        extra = sorted(predictions.keys() - truth.keys())[:3]
        raise AlignmentError(
            f"prediction/truth keys differ; missing from predictions: {missing}, "
            f"unmatched predictions: {extra}"
        )
    keys = sorted(predictions.keys())
    pred = np.array([predictions[k] for k in keys])
    true = np.array([truth[k] for k in keys])
    return ConfusionMatrix.from_labels(pred, true)


@dataclasses.dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision_down: float | None
    recall_down: float | None
    f1_down: float | None
    precision_up: float | None
    recall_up: float | None
    f1_up: float | None
    macro_precision: float | None
    macro_recall: float | None
    macro_f1: float | None


def _ratio(num: int, den: int, name: str) -> float | None:
    if den == 0:
        warnings.warn(f"{name} is 0/0 (undefined); excluded from macro averages")
        return None
    return num / den


def _f1(precision: float | None, recall: float | None, name: str) -> float | None:
    if precision is None or recall is None or precision + recall == 0.0:
        warnings.warn(f"{name} is undefined; excluded from macro averages")
        return None
    return 2.0 * precision * recall / (precision + recall)


def _macro(values: tuple) -> float | None:
    defined = [v for v in values if v is not None]
    if not defined:
        return None
    return sum(defined) / len(defined)


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    precision_down = _ratio(cm.tp, cm.tp + cm.fp, "precision(down)")
    recall_down = _ratio(cm.tp, cm.tp + cm.fn, "recall(down)")
    precision_up = _ratio(cm.tn, cm.tn + cm.fn, "precision(up)")
    recall_up = _ratio(cm.tn, cm.tn + cm.fp, "recall(up)")
    f1_down = _f1(precision_down, recall_down, "f1(down)")
    f1_up = _f1(precision_up, recall_up, "f1(up)")
    return MetricsReport(
        accuracy=(cm.tp + cm.tn) / cm.total,
        precision_down=precision_down,
        recall_down=recall_down,
        f1_down=f1_down,
        precision_up=precision_up,
        recall_up=recall_up,
        f1_up=f1_up,
        macro_precision=_macro((precision_down, precision_up)),
        macro_recall=_macro((recall_down, recall_up)),
        macro_f1=_macro((f1_down, f1_up)),
    )


def false_alarm_rate(cm: ConfusionMatrix) -> float | None:
    """Fraction of truly-up instances called down."""
    if cm.fp + cm.tn == 0:
        warnings.warn("false-alarm rate undefined: no truly-up instances")
        return None
    return cm.fp / (cm.fp + cm.tn)


def missed_alarm_rate(cm: ConfusionMatrix) -> float | None:
    """Fraction of truly-down instances called up."""
    if cm.tp + cm.fn == 0:
        warnings.warn("missed-alarm rate undefined: no truly-down instances")
        return None
    return cm.fn / (cm.tp + cm.fn)


@dataclasses.dataclass(frozen=True)
class KpiReport:
    availability: float
    mttf_s: float  # inf when the timeline has no outages
    mttr_s: float | None

    def reliability_at(self, t: float) -> float:
        if t < 0:
            raise ValueError("t must be nonnegative")
        if math.isinf(self.mttf_s):
            return 1.0
        return math.exp(-t / self.mttf_s)


def kpis(timeline: StatusTimeline) -> KpiReport:
    horizon = timeline.horizon[1] - timeline.horizon[0]
    if horizon <= 0:
        raise ValueError("timeline horizon must be positive")
    up = timeline.up_seconds()
    down = timeline.down_seconds()
    n = timeline.n_outages()
    if n == 0:
        return KpiReport(availability=up / horizon, mttf_s=math.inf, mttr_s=None)
    return KpiReport(availability=up / horizon, mttf_s=up / n, mttr_s=down / n)
