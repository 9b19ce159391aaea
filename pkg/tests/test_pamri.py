import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.special import logsumexp

from autodiff import Tensor
from errors import EmbeddingNormError, ShapeMismatchError
from pamri import (DecoderPair, EncoderPair, SSLConfig, adaptive_tau, extract_patch_pairs, nce_loss, nmi, nmi_matrix,
                   pretrain_pamri, rec_loss, retrieval_accuracy, tile)
from phantoms import sample_dataset
from storage import ArtifactStore, read_csv


def _unit_rows(rng, b, d):
    x = rng.standard_normal((b, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _reference_nce(u, w, tau):
    """Double-loop evaluation of the two-direction adaptive InfoNCE."""
    b = len(u)
    total = 0.0
    for anchors, same, other, temps in ((u, u, w, tau), (w, w, u, tau.T)):
        for i in range(b):
            terms = [math.exp(anchors[i] @ same[k] / temps[i, k]) for k in range(b) if k != i]
            terms += [math.exp(anchors[i] @ other[k] / temps[i, k]) for k in range(b)]
            positive = anchors[i] @ other[i] / temps[i, i]
            total += -(positive - math.log(sum(terms)))
    return total / (2 * b)


def test_nce_matches_double_loop_reference(rng):
    u, w = _unit_rows(rng, 6, 5), _unit_rows(rng, 6, 5)
    tau = rng.uniform(0.05, 0.5, size=(6, 6))
    tau = 0.5 * (tau + tau.T)
    value = nce_loss(Tensor(u), Tensor(w), tau).item()
    assert abs(value - _reference_nce(u, w, tau)) < 1e-12


def test_nce_single_pair_is_zero(rng):
    u, w = _unit_rows(rng, 1, 8), _unit_rows(rng, 1, 8)
    assert nce_loss(Tensor(u), Tensor(w), 0.1).item() == 0.0


def test_nce_scalar_temperature_broadcasts(rng):
    u, w = _unit_rows(rng, 4, 3), _unit_rows(rng, 4, 3)
    assert nce_loss(Tensor(u), Tensor(w), 0.2).item() == pytest.approx(
        nce_loss(Tensor(u), Tensor(w), np.full((4, 4), 0.2)).item(), rel=1e-14)


def test_nce_prefers_aligned_pairs(rng):
    u = _unit_rows(rng, 8, 16)
    aligned = nce_loss(Tensor(u), Tensor(u), 0.1).item()
    shuffled = nce_loss(Tensor(u), Tensor(u[::-1].copy()), 0.1).item()
    assert aligned < shuffled


def test_nce_rejects_unnormalized_embeddings(rng):
    with pytest.raises(EmbeddingNormError):
        nce_loss(Tensor(2.0 * _unit_rows(rng, 3, 4)), Tensor(_unit_rows(rng, 3, 4)), 0.1)
    with pytest.raises(ShapeMismatchError):
        nce_loss(Tensor(_unit_rows(rng, 3, 4)), Tensor(_unit_rows(rng, 2, 4)), 0.1)

def test_nce_two_orthogonal_pairs_by_hand():
    u = np.eye(2)
    # each anchor sees exp(10) for its positive and exp(0) for the two negatives
    expected = -math.log(math.exp(10) / (math.exp(10) + 2))
    assert nce_loss(Tensor(u), Tensor(u.copy()), 0.1).item() == pytest.approx(expected, rel=1e-12)


def test_nce_without_intra_modal_terms_is_standard_infonce(rng):
    u, w = _unit_rows(rng, 7, 5), _unit_rows(rng, 7, 5)
    logits = u @ w.T / 0.2
    standard = 0.5 * (np.mean(logsumexp(logits, axis=1) - np.diag(logits))
                      + np.mean(logsumexp(logits.T, axis=1) - np.diag(logits)))
    assert abs(nce_loss(Tensor(u), Tensor(w), 0.2, intra_modal=False).item() - standard) < 1e-12


def _positive_pull(s: float, tau: float, h: float = 1e-6) -> float:
    # B = 2; only the similarity of the first positive pair depends on s
    def loss(similarity):
        u = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        w = np.array([[similarity, 0.0, math.sqrt(1.0 - similarity ** 2)], [0.0, 1.0, 0.0]])
        return nce_loss(Tensor(u), Tensor(w), np.array([[tau, 0.2], [0.2, 0.2]])).item()
    return abs(loss(s + h) - loss(s - h)) / (2 * h)


def test_raising_the_positive_temperature_softens_the_pull():
    checked = 0
    taus = np.linspace(0.05, 0.5, 19)
    for s in np.linspace(0.1, 0.95, 10):
        p = np.exp(s / taus) / (np.exp(s / taus) + 2.0)
        # the pull (1 - p) / tau shrinks with tau while p * s / tau <= 1
        unsaturated = p * s / taus <= 1.0
        for k in range(len(taus) - 1):
            if unsaturated[k] and unsaturated[k + 1]:
                assert _positive_pull(s, taus[k + 1]) <= _positive_pull(s, taus[k]) + 1e-7
                checked += 1
    assert checked > 30


def test_nmi_of_a_shuffled_smooth_patch_is_low(rng):
    rows, cols = np.mgrid[0:32, 0:32]
    patch = (rows + cols) / 62.0
    shuffled = rng.permutation(patch.ravel()).reshape(32, 32)
    assert nmi(patch, shuffled) < 0.2


def test_adaptive_tau_midpoint():
    assert adaptive_tau(0.5, 0.05, 0.5) == pytest.approx(0.275)
    taus = adaptive_tau(np.linspace(0.0, 1.0, 11))
    assert np.all(np.diff(taus) < 0) and taus.min() >= 0.05 and taus.max() <= 0.5


def test_untrained_encoders_retrieve_at_chance():
    holdout = sample_dataset(20, 64, 64, 0.5, seed=1)
    cfg = SSLConfig(patch_size=32, batch_size=64)
    p_tar, p_aux, _ = extract_patch_pairs(holdout, cfg, np.random.default_rng(5))
    assert retrieval_accuracy(EncoderPair.create(seed=0), p_tar, p_aux) < 0.15



def test_nmi_properties(rng):
    a = rng.uniform(size=(16, 16))
    b = rng.uniform(size=(16, 16))
    assert nmi(a, a) == pytest.approx(1.0)
    assert nmi(a, b) == nmi(b, a)
    assert 0.0 <= nmi(a, b) < nmi(a, 1.0 - a)
    assert nmi(np.full((4, 4), 0.5), np.full((4, 4), 0.5)) == 1.0
    assert nmi(np.full((4, 4), 0.1), np.full((4, 4), 0.9)) == 0.0
    np.testing.assert_allclose(nmi_matrix(a[None], b[None]), [[nmi(a, b)]])


def test_adaptive_tau_endpoints():
    assert adaptive_tau(1.0) == pytest.approx(0.05)
    assert adaptive_tau(0.0) == pytest.approx(0.5)
    np.testing.assert_allclose(adaptive_tau(np.array([0.0, 0.5, 1.0]), 0.1, 0.3), [0.3, 0.2, 0.1])


def test_tile_is_row_major():
    pixels = np.arange(16, dtype=float).reshape(4, 4)
    tiles = tile(pixels, 2)
    np.testing.assert_array_equal(tiles[1], [[2, 3], [6, 7]])
    with pytest.raises(ShapeMismatchError):
        tile(pixels, 3)


def test_patch_pairs_are_colocated(small_pairs):
    cfg = SSLConfig(patch_size=8, batch_size=10, jitter=0, flip_prob=0.0, intensity_scale=(1.0, 1.0))
    p_tar, p_aux, origins = extract_patch_pairs(small_pairs, cfg, np.random.default_rng(0))
    assert p_tar.shape == p_aux.shape == (10, 8, 8)
    for patch, (index, row, col) in zip(p_tar, origins):
        np.testing.assert_array_equal(patch, small_pairs[index].target.pixels[row:row + 8, col:col + 8])
    again = extract_patch_pairs(small_pairs, cfg, np.random.default_rng(0))
    np.testing.assert_array_equal(again[1], p_aux)


def test_encoders_embed_on_unit_sphere(rng):
    encoders = EncoderPair.create(width=2, embed_dim=6, seed=0)
    patches = Tensor(rng.uniform(size=(3, 1, 16, 16)))
    np.testing.assert_allclose(np.linalg.norm(encoders.phi.embed(patches).data, axis=1), 1.0)
    with pytest.raises(ShapeMismatchError):
        encoders.phi.features(Tensor(rng.uniform(size=(3, 1, 12, 12))))
    clone = EncoderPair.from_state(encoders.state_dict())
    np.testing.assert_array_equal(clone.psi.embed(patches).data, encoders.psi.embed(patches).data)


def test_rec_loss_is_mean_l1_over_both_modalities(rng):
    encoders = EncoderPair.create(width=2, embed_dim=4, seed=0)
    decoders = DecoderPair.create(patch_size=8, width=2, embed_dim=4, seed=0)
    p_tar, p_aux = rng.uniform(size=(2, 3, 1, 8, 8))
    d_tar = decoders.tar(encoders.phi.features(Tensor(p_tar))).data
    d_aux = decoders.aux(encoders.psi.features(Tensor(p_aux))).data
    expected = 0.5 * (np.mean(np.abs(d_tar - p_tar)) + np.mean(np.abs(d_aux - p_aux)))
    assert rec_loss(decoders, encoders, p_tar, p_aux).item() == pytest.approx(expected, rel=1e-12)
    restored = DecoderPair.from_state(decoders.state_dict())
    assert restored.tar.patch_size == 8


@pytest.mark.parametrize("overrides", [{"patch_size": 12}, {"tau_min": 0.6, "tau_max": 0.5}, {"jitter": 5}])
def test_ssl_config_validation(overrides):
    with pytest.raises(ValidationError):
        SSLConfig(**overrides)


def test_pretrain_writes_checkpoints_and_log(small_pairs, tmp_path):
    cfg = SSLConfig(patch_size=8, batch_size=6, iterations=4, width=2, embed_dim=8, log_every=2)
    encoders, decoders = pretrain_pamri(small_pairs, cfg, store=ArtifactStore(tmp_path), holdout=small_pairs[:2])
    rows = read_csv(tmp_path / "pamri_log.csv")
    assert [int(row["iter"]) for row in rows] == [1, 2, 3, 4]
    assert all(np.isfinite(float(row["total"])) for row in rows)
    assert (tmp_path / "encoders.mpfw").is_file() and (tmp_path / "decoders.mpfw").is_file()
    again, _ = pretrain_pamri(small_pairs, cfg, holdout=small_pairs[:2])
    assert again.history == encoders.history


@pytest.mark.slow
def test_pretraining_learns_cross_modal_retrieval():
    train = sample_dataset(200, 64, 64, 0.5, seed=0)
    holdout = sample_dataset(20, 64, 64, 0.5, seed=1)
    cfg = SSLConfig(patch_size=32, batch_size=64, iterations=500, seed=0)
    encoders, _ = pretrain_pamri(train, cfg)
    p_tar, p_aux, _ = extract_patch_pairs(holdout, cfg, np.random.default_rng(5))
    assert retrieval_accuracy(encoders, p_tar, p_aux) > 0.8
