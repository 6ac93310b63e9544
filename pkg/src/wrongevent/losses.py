"""The dynamically weighted two-view objective.

Per sample, with weak/strong view probabilities p_w, p_s and q = (p_w + p_s) / 2:

    L = tau1 * [CE(p_w, y) + CE(p_s, y)]
      + eps  * sum_j (p_w[j] - p_s[j])^2
      + tau2 * (-c * sum_j q[j] * log q[j])

The confidence ``c = max_j q[j]`` is always a constant. By default the last term
is a confidence-weighted entropy and gradients flow through both factors of q.
With ``detach_target=True`` the leading q is frozen as well; note that this
variant is a cross-entropy of q against its own current value, so its gradient
along the simplex is exactly zero and the term stops shaping the model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import (
    PROB_FLOOR,
    backward,
    ce_grad_probs,
    ce_loss_and_grad,
    cross_entropy,
    forward_cache,
    softmax_backward,
)

ALL_TERMS = frozenset({"C", "N", "SIM"})


@dataclass(frozen=True)
class Detached:
    """Quantities held constant inside the loss."""

    conf: np.ndarray  # c, shape (n,)
    target: np.ndarray | None = None  # qbar, shape (n, K); None unless the target is detached


def detach(p_w, p_s, detach_target=False) -> Detached:
    q = 0.5 * (p_w + p_s)
    return Detached(q.max(axis=1), q.copy() if detach_target else None)


def ido_terms(p_w, p_s, labels, frozen: Detached | None = None):
    """Per-sample (L_C, L_SIM, L_N)."""
    frozen = frozen or detach(p_w, p_s)
    q = 0.5 * (p_w + p_s)
    lead = q if frozen.target is None else frozen.target
    l_c = cross_entropy(p_w, labels) + cross_entropy(p_s, labels)
    l_sim = np.sum((p_w - p_s) ** 2, axis=1)
    l_n = -frozen.conf * np.sum(lead * np.log(np.maximum(q, PROB_FLOOR)), axis=1)
    return l_c, l_sim, l_n


def ido_loss(p_w, p_s, labels, tau1, eps, tau2, frozen: Detached | None = None, terms=ALL_TERMS,
             detach_target=False):
    """Batch-mean loss and its gradients w.r.t. p_w and p_s.

    Accepts single samples (1-D probability vectors, scalar label and weights)
    as well as batches. Returns ``(loss, dp_w, dp_s, frozen)``.
    """
    single = np.ndim(p_w) == 1
    p_w = np.atleast_2d(np.asarray(p_w, dtype=np.float64))
    p_s = np.atleast_2d(np.asarray(p_s, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n = len(labels)
    tau1, eps, tau2 = (np.broadcast_to(np.asarray(v, dtype=np.float64), (n,)) for v in (tau1, eps, tau2))
    if "C" not in terms:
        tau1 = np.zeros(n)
    if "SIM" not in terms:
        eps = np.zeros(n)
    if "N" not in terms:
        tau2 = np.zeros(n)

    frozen = frozen or detach(p_w, p_s, detach_target)
    l_c, l_sim, l_n = ido_terms(p_w, p_s, labels, frozen)
    per = tau1 * l_c + eps * l_sim + tau2 * l_n
    loss = float(per.mean())

    diff = p_w - p_s
    q = 0.5 * (p_w + p_s)
    logq = np.log(np.maximum(q, PROB_FLOOR))
    if frozen.target is None:
        dq = np.where(q > PROB_FLOOR, -(logq + 1.0), -logq)
    else:
        dq = np.where(q > PROB_FLOOR, -frozen.target / np.maximum(q, PROB_FLOOR), 0.0)
    dq *= (tau2 * frozen.conf)[:, None]
    dp_w = tau1[:, None] * ce_grad_probs(p_w, labels) + 2.0 * eps[:, None] * diff + 0.5 * dq
    dp_s = tau1[:, None] * ce_grad_probs(p_s, labels) - 2.0 * eps[:, None] * diff + 0.5 * dq
    dp_w /= n
    dp_s /= n
    if single:
        return loss, dp_w[0], dp_s[0], frozen
    return loss, dp_w, dp_s, frozen


def ido_loss_and_grad(model, x_w, x_s, labels, tau1, eps, tau2, frozen=None, terms=ALL_TERMS,
                      detach_target=False, need_grad=True):
    """Forward both views, evaluate the loss and backpropagate into the model."""
    p_w, acts_w = forward_cache(model, x_w)
    p_s, acts_s = forward_cache(model, x_s)
    loss, dp_w, dp_s, frozen = ido_loss(p_w, p_s, labels, tau1, eps, tau2, frozen, terms, detach_target)
    if not need_grad:
        return loss, None, frozen
    g_w = backward(model, acts_w, softmax_backward(p_w, dp_w))
    g_s = backward(model, acts_s, softmax_backward(p_s, dp_s))
    return loss, [a + b for a, b in zip(g_w, g_s)], frozen


def make_ido_loss_fn(terms=ALL_TERMS, detach_target=False):
    """Adapter for :func:`wrongevent.net.grad_check`; batch is (x_w, x_s, labels, tau1, eps, tau2)."""

    def loss_fn(model, batch, frozen=None):
        x_w, x_s, labels, tau1, eps, tau2 = batch
        return ido_loss_and_grad(model, x_w, x_s, labels, tau1, eps, tau2, frozen, terms, detach_target)

    return loss_fn


def ce_loss_fn(model, batch, frozen=None):
    """Adapter for plain cross-entropy; batch is (x, labels)."""
    x, labels = batch
    loss, grads = ce_loss_and_grad(model, x, labels)
    return loss, grads, None
