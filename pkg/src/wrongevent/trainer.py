"""Two-stage training.

Stage 1 trains with plain cross-entropy, records wrong events every epoch and
keeps the model at the first local minimum of the label-wave series as the
base model. Stage 2 starts from that base model and, every epoch, refits the
per-class beta mixtures on the normalised wrong events, turns them into
per-sample (tau1, eps, tau2) weights and trains on the weighted two-view
objective, then refreshes the wrong events from the averaged two-view output.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .betamix import MixtureBank, difficulty, fit_bank, posterior
from .dynamics import DynamicsLedger, first_local_min_epoch, normalized_wrong_events, record_epoch
from .errors import NumericError, ParameterError
from .evaluation import auc, test_accuracy
from .losses import ALL_TERMS, ido_loss, ido_loss_and_grad  # noqa: F401  (re-exported)
from .net import AugmentParams, augment, ce_loss_and_grad, cross_entropy, forward, init_model, sgd_init, sgd_step
from .seeding import derive_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    stage1_epochs: int = 30
    stage2_epochs: int = 30
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    hidden: tuple = (64, 64)
    augment: AugmentParams = AugmentParams()
    bmm_iters_warm: int = 2
    bmm_max_iters: int = 50
    bmm_tol: float = 1e-6
    fkl_k: int = 2
    ema_beta: float = 0.7
    seed: int = 0
    # "dynamic" or a constant in [0, 1] replacing eps for every sample
    eps_mode: object = "dynamic"
    terms: frozenset = ALL_TERMS
    # (tau1, eps, tau2) applied to every sample instead of the mixture weights
    frozen_weights: tuple | None = None
    detach_target: bool = False
    probe_epochs: tuple = ()
    keep_history: bool = False

    def __post_init__(self):
        for name in ("stage1_epochs", "batch_size", "bmm_max_iters", "fkl_k"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if self.stage2_epochs < 0 or self.bmm_iters_warm < 1:
            raise ParameterError("stage2_epochs must be >= 0 and bmm_iters_warm >= 1")
        if not self.lr > 0 or not 0 <= self.momentum < 1:
            raise ParameterError("need lr > 0 and momentum in [0, 1)")
        if not 0 <= self.ema_beta < 1:
            raise ParameterError("ema_beta must lie in [0, 1)")
        if self.eps_mode != "dynamic" and not (0.0 <= float(self.eps_mode) <= 1.0):
            raise ParameterError("eps_mode must be 'dynamic' or a number in [0, 1]")
        terms = frozenset(self.terms)
        if not terms <= ALL_TERMS:
            raise ParameterError(f"unknown loss terms {sorted(terms - ALL_TERMS)}")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def layer_dims(self, d, K):
        return (d, *self.hidden, K)


@dataclass
class WeightTriples:
    """Per-sample stage-2 coefficients as parallel arrays."""

    tau1: np.ndarray
    eps: np.ndarray
    tau2: np.ndarray
    w_norm: np.ndarray

    def __len__(self):
        return len(self.tau1)

    def __getitem__(self, i):
        return float(self.tau1[i]), float(self.eps[i]), float(self.tau2[i])


@dataclass
class EpochMetrics:
    epoch: int
    stage: int
    train_loss: float
    test_acc: float
    label_wave: int | None
    auc_we: float
    auc_loss: float


@dataclass
class CoefficientCheck:
    epoch: int
    max_sum_error: float
    eps_min: float
    eps_max: float


@dataclass
class RunReport:
    metrics: list = field(default_factory=list)
    base_epoch: int | None = None
    weights: WeightTriples | None = None
    bank: MixtureBank | None = None
    coefficient_checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    checkpoint_paths: dict = field(default_factory=dict)
    final_model: object = None
    base_model: object = None

    @property
    def final_test_acc(self) -> float:
        return self.metrics[-1].test_acc if self.metrics else float("nan")

    def stage_metrics(self, stage):
        return [m for m in self.metrics if m.stage == stage]


def _batches(n, batch_size, seed):
    order = np.random.default_rng(seed).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _cosine(lr, step, total):
    return 0.5 * lr * (1.0 + math.cos(math.pi * step / max(total, 1)))


def _separation(ledger, ds):
    if not ds.has_oracle or ds.noise_mask.all() or not ds.noise_mask.any():
        return float("nan"), float("nan")
    return auc(ledger.wrong_events, ds.noise_mask), auc(ledger.single_loss, ds.noise_mask)


def _check_finite(loss, epoch, stage):
    if not np.isfinite(loss):
        raise NumericError(f"stage {stage}, epoch {epoch}: loss became non-finite")


def _ce_training(config: TrainConfig, train, test, epochs, schedule, report, ledger=None, model=None):
    """CE epochs shared by stage 1 and the plain baseline. Yields after every epoch."""
    K = train.n_classes
    X, y = train.features, train.given_labels
    model = model or init_model(config.layer_dims(train.dim, K), derive_seed(config.seed, "init"))
    ledger = ledger or DynamicsLedger(len(train), fkl_k=config.fkl_k, keep_history=config.keep_history)
    state = sgd_init(model)
    steps_per_epoch = math.ceil(len(train) / config.batch_size)
    total = epochs * steps_per_epoch
    step = 0
    for e in range(1, epochs + 1):
        epoch = ledger.epoch + 1
        losses = []
        for idx in _batches(len(train), config.batch_size, derive_seed(config.seed, "shuffle", epoch)):
            lr = config.lr if schedule == "constant" else _cosine(config.lr, step, total)
            loss, grads = ce_loss_and_grad(model, X[idx], y[idx])
            _check_finite(loss, epoch, 1)
            try:
                sgd_step(model, grads, lr, config.momentum, state)
            except NumericError as exc:
                raise NumericError(f"stage 1, epoch {epoch}: {exc}") from None
            losses.append(loss)
            step += 1
        p = forward(model, X)
        record_epoch(ledger, p.argmax(axis=1), cross_entropy(p, y), y, config.ema_beta)
        auc_we, auc_loss = _separation(ledger, train)
        report.metrics.append(EpochMetrics(
            epoch, 1, float(np.mean(losses)), test_accuracy(model, test),
            ledger.label_wave[-1] if ledger.label_wave else None, auc_we, auc_loss,
        ))
        if epoch in config.probe_epochs:
            report.snapshots[epoch] = ledger.copy()
        yield model, ledger


def stage1(config: TrainConfig, train, test):
    """Cross-entropy warm-up collecting wrong events; returns (base model, ledger, report)."""
    report = RunReport()
    prev = None
    base = None
    model = ledger = None
    for model, ledger in _ce_training(config, train, test, config.stage1_epochs, "constant", report):
        if base is None:
            t = first_local_min_epoch(ledger.label_wave)
            if t is not None:
                # label_wave[t] compares epochs t+1 and t+2, so the minimum sits at epoch t+2
                base, report.base_epoch = prev, t + 2
        prev = model.copy()
    if base is None:
        base, report.base_epoch = model.copy(), ledger.epoch
        report.notes.append("no label-wave local minimum in stage 1; base model is the final stage-1 model")
    report.final_model = model
    return base, ledger, report


def train_ce_baseline(config: TrainConfig, train, test, epochs=None, schedule="cosine"):
    """Plain cross-entropy for the whole budget; returns (model, ledger, report)."""
    epochs = epochs if epochs is not None else config.stage1_epochs + config.stage2_epochs
    report = RunReport()
    model = ledger = None
    for model, ledger in _ce_training(config, train, test, epochs, schedule, report):
        pass
    report.final_model = model
    return model, ledger, report


def compute_weights(bank: MixtureBank, ledger: DynamicsLedger, labels) -> WeightTriples:
    """(tau1, eps, tau2) per sample from the mixture of its given class."""
    y = np.asarray(labels, dtype=np.int64)
    if len(y) != ledger.n_samples:
        raise ParameterError("labels length does not match the ledger")
    if len(y) and (y.min() < 0 or y.max() >= bank.n_classes):
        raise ParameterError(f"class index outside [0, {bank.n_classes})")
    w = normalized_wrong_events(ledger)
    tau1 = np.empty(len(y))
    tau2 = np.empty(len(y))
    eps = np.empty(len(y))
    for c in np.unique(y):
        sel = y == c
        mix = bank.mixture_for(int(c))
        tau1[sel], tau2[sel] = posterior(mix, w[sel])
        eps[sel] = difficulty(mix, w[sel])
    return WeightTriples(tau1, eps, tau2, w)


def _effective_weights(config: TrainConfig, wt: WeightTriples):
    n = len(wt)
    if config.frozen_weights is not None:
        t1, e, t2 = config.frozen_weights
        return np.full(n, float(t1)), np.full(n, float(e)), np.full(n, float(t2))
    eps = wt.eps if config.eps_mode == "dynamic" else np.full(n, float(config.eps_mode))
    return wt.tau1, eps, wt.tau2


def stage2(config: TrainConfig, train, test, base, ledger: DynamicsLedger, report: RunReport | None = None):
    """Robust training from ``base``; mutates ``ledger`` and returns (model, report)."""
    report = report if report is not None else RunReport()
    ledger = ledger if ledger is not None else DynamicsLedger(len(train), config.fkl_k, config.keep_history)
    if ledger.epoch < 1:
        raise ParameterError("stage 2 needs a ledger carrying stage-1 history")
    K = train.n_classes
    X, y = train.features, train.given_labels
    stds = X.std(axis=0)
    model = base.copy()
    state = sgd_init(model)
    steps_per_epoch = math.ceil(len(train) / config.batch_size)
    total = config.stage2_epochs * steps_per_epoch
    step = 0
    bank = None
    for _ in range(config.stage2_epochs):
        epoch = ledger.epoch + 1
        bank = fit_bank(normalized_wrong_events(ledger), y, K, warm=bank, iters_warm=config.bmm_iters_warm,
                        max_iters=config.bmm_max_iters, tol=config.bmm_tol)
        for note in bank.notes:
            report.notes.append(f"epoch {epoch}: {note}")
            log.warning("epoch %d: %s", epoch, note)
        wt = compute_weights(bank, ledger, y)
        tau1, eps, tau2 = _effective_weights(config, wt)
        report.coefficient_checks.append(CoefficientCheck(
            epoch, float(np.max(np.abs(tau1 + tau2 - 1.0))), float(eps.min()), float(eps.max())))

        losses = []
        batches = _batches(len(train), config.batch_size, derive_seed(config.seed, "shuffle", epoch))
        for b, idx in enumerate(batches):
            xb = X[idx]
            x_w = augment(xb, "weak", config.augment, stds, derive_seed(config.seed, "aug", epoch, b, "weak"))
            x_s = augment(xb, "strong", config.augment, stds, derive_seed(config.seed, "aug", epoch, b, "strong"))
            loss, grads, _ = ido_loss_and_grad(model, x_w, x_s, y[idx], tau1[idx], eps[idx], tau2[idx],
                                               terms=config.terms, detach_target=config.detach_target)
            _check_finite(loss, epoch, 2)
            try:
                sgd_step(model, grads, _cosine(config.lr, step, total), config.momentum, state)
            except NumericError as exc:
                raise NumericError(f"stage 2, epoch {epoch}: {exc}") from None
            losses.append(loss)
            step += 1

        x_w = augment(X, "weak", config.augment, stds, derive_seed(config.seed, "pass", epoch, "weak"))
        x_s = augment(X, "strong", config.augment, stds, derive_seed(config.seed, "pass", epoch, "strong"))
        q = 0.5 * (forward(model, x_w) + forward(model, x_s))
        record_epoch(ledger, q.argmax(axis=1), cross_entropy(q, y), y, config.ema_beta)
        auc_we, auc_loss = _separation(ledger, train)
        report.metrics.append(EpochMetrics(
            epoch, 2, float(np.mean(losses)), test_accuracy(model, test),
            ledger.label_wave[-1] if ledger.label_wave else None, auc_we, auc_loss,
        ))
        if epoch in config.probe_epochs:
            report.snapshots[epoch] = ledger.copy()
        report.weights, report.bank = wt, bank
    report.final_model = model
    return model, report


def run_two_stage(config: TrainConfig, train, test):
    """Stage 1 followed by stage 2; returns (final model, ledger, report)."""
    base, ledger, report = stage1(config, train, test)
    report.base_model = base
    if config.stage2_epochs == 0:
        return report.final_model, ledger, report
    model, report = stage2(config, train, test, base, ledger, report)
    return model, ledger, report
