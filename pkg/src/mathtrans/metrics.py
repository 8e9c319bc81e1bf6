"""The three accuracy measures over predicted vs ground-truth padded trees.

full accuracy      p_f: position-wise equality over all hull positions,
                        padding and internal markers included.
masked accuracy    p_m: equality over content positions only (truth not in
                        {internal, Y_END}).
bag-of-words       p_b: 1 - sum_i max(#_i^truth - #_i^pred, 0) / n_positions,
                        summed over all value ids (reserved ids included by
                        default; content_only restricts to ids >= 2).

Aggregation over a dataset pools the numerators and denominators, so the
report allows exact recomputation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .encoding import INTERNAL_ID, Y_END_ID


class MetricError(ValueError):
    pass


@dataclass
class EvalReport:
    p_f: float
    p_m: float
    p_b: float
    n_trees: int
    n_positions: int
    full_hits: int
    content_hits: int
    content_positions: int
    bow_missing: int

    def to_dict(self) -> dict:
        return asdict(self)


class MetricAccumulator:
    """Pools position counts across trees; position-weighted aggregation."""

    def __init__(self, content_only_bow: bool = False):
        self.content_only_bow = content_only_bow
        self.n_trees = 0
        self.n_positions = 0
        self.full_hits = 0
        self.content_hits = 0
        self.content_positions = 0
        self.bow_missing = 0
        self.bow_total = 0

    def add(self, pred: np.ndarray, truth: np.ndarray) -> None:
        """One tree: pred and truth are aligned value vectors on one hull."""
        pred = np.asarray(pred)
        truth = np.asarray(truth)
        if pred.shape != truth.shape:
            raise MetricError("prediction/truth hulls differ")
        self.n_trees += 1
        self.n_positions += truth.size
        self.full_hits += int((pred == truth).sum())
        content = (truth != INTERNAL_ID) & (truth != Y_END_ID)
        self.content_hits += int((pred[content] == truth[content]).sum())
        self.content_positions += int(content.sum())
        self.bow_missing += bow_missing_count(pred, truth,
                                              self.content_only_bow)
        self.bow_total += int(content.sum()) if self.content_only_bow \
            else truth.size

    def add_batch(self, preds: np.ndarray, truths: np.ndarray) -> None:
        for row in range(preds.shape[0]):
            self.add(preds[row], truths[row])

    def report(self) -> EvalReport:
        if self.content_positions == 0:
            raise MetricError("no content positions in the evaluation set")
        return EvalReport(
            p_f=self.full_hits / self.n_positions,
            p_m=self.content_hits / self.content_positions,
            p_b=1.0 - self.bow_missing / self.bow_total,
            n_trees=self.n_trees,
            n_positions=self.n_positions,
            full_hits=self.full_hits,
            content_hits=self.content_hits,
            content_positions=self.content_positions,
            bow_missing=self.bow_missing,
        )


def bow_missing_count(pred: np.ndarray, truth: np.ndarray,
                      content_only: bool = False) -> int:
    """sum_i max(#_i^truth - #_i^pred, 0) over value ids."""
    if content_only:
        keep_t = (truth != INTERNAL_ID) & (truth != Y_END_ID)
        keep_p = (pred != INTERNAL_ID) & (pred != Y_END_ID)
        truth = truth[keep_t]
        pred = pred[keep_p]
    n = int(max(truth.max(initial=0), pred.max(initial=0))) + 1
    ct = np.bincount(truth, minlength=n)
    cp = np.bincount(pred, minlength=n)
    return int(np.maximum(ct - cp, 0).sum())


def full_accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise MetricError("prediction/truth hulls differ")
    return float((pred == truth).mean())


def masked_accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise MetricError("prediction/truth hulls differ")
    content = (truth != INTERNAL_ID) & (truth != Y_END_ID)
    if not content.any():
        raise MetricError("no content positions")
    return float((pred[content] == truth[content]).mean())


def bow_accuracy(pred: np.ndarray, truth: np.ndarray,
                 content_only: bool = False) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    total = int(((truth != INTERNAL_ID) & (truth != Y_END_ID)).sum()) \
        if content_only else truth.size
    if total == 0:
        raise MetricError("empty truth")
    return 1.0 - bow_missing_count(pred, truth, content_only) / total
