from pamri.encoders import Decoder, DecoderPair, Encoder, EncoderPair
from pamri.losses import nce_loss, rec_loss
from pamri.patches import extract_patch_pairs, tile
from pamri.pretrain import SSLConfig, pretrain_pamri, retrieval_accuracy
from pamri.similarity import adaptive_tau, nmi, nmi_matrix

__all__ = [
    "Decoder", "DecoderPair", "Encoder", "EncoderPair", "nce_loss", "rec_loss",
    "extract_patch_pairs", "tile", "SSLConfig", "pretrain_pamri", "retrieval_accuracy",
    "adaptive_tau", "nmi", "nmi_matrix",
]
