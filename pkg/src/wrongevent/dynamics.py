"""Per-sample training dynamics accumulated epoch by epoch.

The ledger is a pure fold over (predictions, losses, labels) triples: replaying
the same stream always rebuilds the same state.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError, StateError

NORM_CLIP = 1e-4


@dataclass
class DynamicsLedger:
    n_samples: int
    fkl_k: int = 2
    keep_history: bool = False
    epoch: int = 0
    wrong_events: np.ndarray = None
    forgetting: np.ndarray = None
    fkl_run: np.ndarray = None
    fkl_first: np.ndarray = None
    ema_loss: np.ndarray = None
    single_loss: np.ndarray = None
    last_pred: np.ndarray | None = None
    label_wave: list = field(default_factory=list)
    we_history: list = field(default_factory=list)
    loss_history: list = field(default_factory=list)

    def __post_init__(self):
        n = self.n_samples
        if n < 0:
            raise ParameterError("n_samples must be non-negative")
        if self.fkl_k < 1:
            raise ParameterError("fkl_k must be >= 1")
        if self.wrong_events is None:
            self.wrong_events = np.zeros(n, dtype=np.int64)
            self.forgetting = np.zeros(n, dtype=np.int64)
            self.fkl_run = np.zeros(n, dtype=np.int64)
            self.fkl_first = np.full(n, -1, dtype=np.int64)
            self.ema_loss = np.zeros(n)
            self.single_loss = np.zeros(n)

    def copy(self) -> "DynamicsLedger":
        return DynamicsLedger(
            n_samples=self.n_samples,
            fkl_k=self.fkl_k,
            keep_history=self.keep_history,
            epoch=self.epoch,
            wrong_events=self.wrong_events.copy(),
            forgetting=self.forgetting.copy(),
            fkl_run=self.fkl_run.copy(),
            fkl_first=self.fkl_first.copy(),
            ema_loss=self.ema_loss.copy(),
            single_loss=self.single_loss.copy(),
            last_pred=None if self.last_pred is None else self.last_pred.copy(),
            label_wave=list(self.label_wave),
            we_history=[h.copy() for h in self.we_history],
            loss_history=[h.copy() for h in self.loss_history],
        )

    @property
    def fkl(self) -> np.ndarray:
        """First epoch (1-based) closing a run of fkl_k correct epochs; -1 if never."""
        return self.fkl_first


def record_epoch(ledger: DynamicsLedger, preds, losses, labels, ema_beta=0.7) -> DynamicsLedger:
    """Fold one epoch of argmax predictions and per-sample losses into the ledger.

    Mutates and returns ``ledger``.
    """
    preds = np.asarray(preds, dtype=np.int64).ravel()
    losses = np.asarray(losses, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    n = ledger.n_samples
    if not (preds.size == losses.size == labels.size == n):
        raise ParameterError(
            f"expected {n} predictions/losses/labels, got {preds.size}/{losses.size}/{labels.size}"
        )
    if not 0.0 <= ema_beta < 1.0:
        raise ParameterError("ema_beta must lie in [0, 1)")
    if np.any(~np.isfinite(losses)) or np.any(losses < 0):
        raise ParameterError("losses must be finite and non-negative")

    correct = preds == labels
    wrong = ~correct
    ledger.wrong_events += wrong
    if ledger.last_pred is not None:
        was_correct = ledger.last_pred == labels
        ledger.forgetting += was_correct & wrong
        ledger.label_wave.append(int(np.count_nonzero(preds != ledger.last_pred)))
    ledger.epoch += 1

    ledger.fkl_run = np.where(correct, ledger.fkl_run + 1, 0)
    newly = (ledger.fkl_first < 0) & (ledger.fkl_run >= ledger.fkl_k)
    ledger.fkl_first[newly] = ledger.epoch

    if ledger.epoch == 1:
        ledger.ema_loss = losses.copy()
    else:
        ledger.ema_loss = ema_beta * ledger.ema_loss + (1.0 - ema_beta) * losses
    ledger.single_loss = losses.copy()
    ledger.last_pred = preds.copy()
    if ledger.keep_history:
        ledger.we_history.append(ledger.wrong_events.copy())
        ledger.loss_history.append(losses.copy())
    return ledger


def fluctuation_flags(ledger: DynamicsLedger) -> np.ndarray:
    """True where the given label was predicted at some epoch and missed at a later one."""
    if ledger.epoch < 2:
        raise StateError("fluctuation flags need at least two recorded epochs")
    return ledger.forgetting >= 1


def normalized_wrong_events(ledger: DynamicsLedger) -> np.ndarray:
    if ledger.epoch < 1:
        raise StateError("no epochs recorded")
    return np.clip(ledger.wrong_events / ledger.epoch, NORM_CLIP, 1.0 - NORM_CLIP)


@dataclass(frozen=True)
class ChangeRates:
    """Per-epoch change statistics, one entry per epoch from the second on."""

    epochs: np.ndarray
    we_max: np.ndarray
    we_avg: np.ndarray
    loss_max: np.ndarray
    loss_avg: np.ndarray
    we_max_relative: np.ndarray  # max of (w^t - w^{t-1}) / w^{t-1} over samples with w^{t-1} >= 1


def _minmax(v):
    v = np.asarray(v, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi - lo <= 0:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def change_rate_stats(ledger: DynamicsLedger) -> ChangeRates:
    if not ledger.keep_history:
        raise StateError("ledger was created without keep_history")
    if ledger.epoch < 2 or len(ledger.we_history) < 2:
        raise StateError("change rates need at least two recorded epochs")
    we = ledger.we_history
    ls = ledger.loss_history
    rows = []
    for t in range(1, len(we)):
        dw = np.abs(_minmax(we[t]) - _minmax(we[t - 1]))
        dl = np.abs(_minmax(ls[t]) - _minmax(ls[t - 1]))
        prev = we[t - 1]
        active = prev >= 1
        rel = (we[t][active] - prev[active]) / prev[active]
        rows.append((t + 1, dw.max(), dw.mean(), dl.max(), dl.mean(), rel.max() if rel.size else 0.0))
    arr = np.array(rows)
    return ChangeRates(arr[:, 0].astype(int), arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4], arr[:, 5])


def first_local_min_epoch(label_wave):
    """Index of the first strict interior local minimum of the series, or None."""
    w = list(label_wave)
    for t in range(1, len(w) - 1):
        if w[t] < w[t - 1] and w[t] < w[t + 1]:
            return t
    return None


def export_ledger_csv(ledger: DynamicsLedger, path, noise_mask=None):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["idx", "wrong_events", "forgetting", "fkl", "ema_loss", "single_loss", "is_noisy"])
        for i in range(ledger.n_samples):
            noisy = "" if noise_mask is None else int(bool(noise_mask[i]))
            w.writerow([
                i,
                int(ledger.wrong_events[i]),
                int(ledger.forgetting[i]),
                int(ledger.fkl_first[i]),
                format(float(ledger.ema_loss[i]), ".17g"),
                format(float(ledger.single_loss[i]), ".17g"),
                noisy,
            ])
