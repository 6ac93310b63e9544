"""Oracle-based evaluation: separation AUC, thresholded selection quality,
test accuracy and the per-metric comparison table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import EvaluationError
from .net import forward

METRICS = ("single_loss", "ema_loss", "fe", "fkl", "wrong_event")
DEFAULT_THRESHOLDS = (0.2, 0.5, 0.8)


@dataclass(frozen=True)
class SeparationScores:
    metric_name: str
    scores: np.ndarray
    noise_mask: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).ravel()
        m = np.asarray(self.noise_mask, dtype=bool).ravel()
        if s.shape != m.shape:
            raise EvaluationError("scores and mask lengths differ")
        if np.any(~np.isfinite(s)):
            raise EvaluationError(f"{self.metric_name}: scores must be finite")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "noise_mask", m)


def auc(scores, noise_mask=None) -> float:
    """Mann-Whitney AUC with the noisy class as positive; ties count one half.

    Accepts a :class:`SeparationScores` or a (scores, mask) pair.
    """
    if not isinstance(scores, SeparationScores):
        scores = SeparationScores("scores", scores, noise_mask)
    s, m = scores.scores, scores.noise_mask
    n_pos = int(m.sum())
    n_neg = m.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUC needs both noisy and clean samples")
    ranks = rankdata(s)
    u = ranks[m].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def prf_at_threshold(clean_posterior, noise_mask, thresh=0.5):
    """Precision, recall and F-score of predicting clean where tau1 >= thresh."""
    tau1 = np.asarray(clean_posterior, dtype=np.float64).ravel()
    clean = ~np.asarray(noise_mask, dtype=bool).ravel()
    picked = tau1 >= thresh
    tp = int(np.sum(picked & clean))
    precision = tp / picked.sum() if picked.any() else 0.0
    recall = tp / clean.sum() if clean.any() else 0.0
    f = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return float(precision), float(recall), float(f)


def test_accuracy(model, test) -> float:
    if len(test) == 0:
        raise EvaluationError("empty test set")
    pred = forward(model, test.features).argmax(axis=1)
    return float(np.mean(pred == test.true_labels))


def metric_scores(ledger):
    """Per-sample suspicion scores for every comparison metric, larger = more likely noisy."""
    fkl = ledger.fkl_first.astype(np.float64)
    fkl = np.where(fkl < 0, ledger.epoch + 1.0, fkl)
    return {
        "single_loss": ledger.single_loss.astype(np.float64),
        "ema_loss": ledger.ema_loss.astype(np.float64),
        "fe": ledger.forgetting.astype(np.float64),
        "fkl": fkl,
        "wrong_event": ledger.wrong_events.astype(np.float64),
    }


def compare_metrics(snapshots, noise_mask):
    """AUC of each metric at each probe epoch.

    ``snapshots`` maps probe epoch -> ledger state at that epoch. A metric whose
    values are all identical gets ``None`` (no fit possible, shown as '-').
    """
    mask = np.asarray(noise_mask, dtype=bool)
    table = {}
    for epoch in sorted(snapshots):
        row = {}
        for name, s in metric_scores(snapshots[epoch]).items():
            row[name] = None if np.ptp(s) == 0 else auc(s, mask)
        table[epoch] = row
    return table


def write_table_csv(path, header, rows, schema):
    """CSV preceded by a one-line ``# schema:`` comment."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {schema}\n")
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else format(v, ".10g")
    return str(v)
