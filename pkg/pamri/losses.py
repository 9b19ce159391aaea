from __future__ import annotations

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor
from errors import EmbeddingNormError, ShapeMismatchError


"""
Cross-modal losses on unit embeddings U (target) and W (auxiliary), both (B, D).

For anchor z_i in direction u the candidates are every u_k and every w_k, each divided by
tau[i, k]; the anchor's own term z_i . z_i is left out of the denominator and w_i is the
positive. Direction w mirrors this with tau_w (by default tau.T, which is what per-pair NMI
gives since NMI is symmetric). The loss is the mean of both directions over 2B anchors.
"""


UNIT_TOLERANCE = 1e-6


def _check_unit(name: str, embeddings: Tensor) -> None:
    norms = np.linalg.norm(embeddings.data, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOLERANCE):
        worst = float(norms[np.argmax(np.abs(norms - 1.0))])
        raise EmbeddingNormError(f"nce_loss: {name} rows must be unit-norm (found norm {worst})")


def _direction(anchor: Tensor, same: Tensor, other: Tensor, tau: np.ndarray, intra_modal: bool = True) -> Tensor:
    """Sum over anchors of -log(exp(pos) / sum(exp(candidates) minus own term))."""
    b = anchor.shape[0]
    inv_tau = 1.0 / tau
    logits = ops.concat([
        ops.mul(ops.matmul(anchor, ops.transpose(same)), inv_tau),
        ops.mul(ops.matmul(anchor, ops.transpose(other)), inv_tau),
    ], axis=1)
    eye = np.eye(b, dtype=bool)
    same_block = ~eye if intra_modal else np.zeros((b, b), dtype=bool)
    include = np.concatenate([same_block, np.ones((b, b), dtype=bool)], axis=1)
    positive = np.concatenate([np.zeros((b, b)), np.eye(b)], axis=1)
    log_denominator = ops.sum_(ops.masked_logsumexp(logits, include, axis=1))
    return ops.sub(log_denominator, ops.sum_(ops.mul(logits, positive)))


def nce_loss(u: Tensor, w: Tensor, tau, tau_w=None, intra_modal: bool = True) -> Tensor:
    """
    Adaptive-temperature InfoNCE with inter- and intra-modal negatives. <tau> is the (B, B)
    temperature matrix of the u direction, or a scalar for a constant temperature.
    intra_modal=False keeps only the cross-modal candidates (plain bidirectional InfoNCE).
    """
    if u.shape != w.shape or u.ndim != 2:
        raise ShapeMismatchError("nce_loss", u.shape, w.shape)
    _check_unit("U", u)
    _check_unit("W", w)
    b = u.shape[0]
    tau = np.broadcast_to(np.asarray(tau, dtype=np.float64), (b, b))
    tau_w = tau.T if tau_w is None else np.broadcast_to(np.asarray(tau_w, dtype=np.float64), (b, b))
    if (tau <= 0).any() or (tau_w <= 0).any():
        raise ValueError("nce_loss: temperatures must be positive")
    total = ops.add(_direction(u, u, w, tau, intra_modal), _direction(w, w, u, tau_w, intra_modal))
    return ops.mul(total, 1.0 / (2 * b))


def rec_loss(decoders, encoders, p_tar, p_aux, features: tuple[Tensor, Tensor] | None = None) -> Tensor:
    """
    Per-pixel mean L1 patch reconstruction error, averaged over the batch and both modalities.
    <features> may carry precomputed (phi, psi) head outputs to avoid a second encoder pass.
    """
    p_tar, p_aux = ops.as_tensor(p_tar), ops.as_tensor(p_aux)
    if features is None:
        features = (encoders.phi.features(p_tar), encoders.psi.features(p_aux))
    f_tar, f_aux = features
    err_tar = ops.mean(ops.abs_(ops.sub(decoders.tar(f_tar), p_tar)))
    err_aux = ops.mean(ops.abs_(ops.sub(decoders.aux(f_aux), p_aux)))
    return ops.mul(ops.add(err_tar, err_aux), 0.5)
