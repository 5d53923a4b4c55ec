"""fastText-style linear classifier over hashed bags of features."""

from .config import LOSS_MODES, TrainConfig
from .io import (
    BadMagicError,
    ModelFormatError,
    TruncatedPayloadError,
    UnsupportedVersionError,
    dumps,
    fingerprint,
    load,
    loads,
    save,
)
from .model import (
    EmbeddingTable,
    HuffmanTree,
    Model,
    Prediction,
    forward,
    gradients,
    logits,
    loss,
    predict_text,
    softmax,
)
from .train import TrainingError, train
from .vocab import Vocabulary, build_vocabulary

__all__ = [
    "BadMagicError", "EmbeddingTable", "HuffmanTree", "LOSS_MODES", "Model", "ModelFormatError",
    "Prediction", "TrainConfig", "TrainingError", "TruncatedPayloadError", "UnsupportedVersionError",
    "Vocabulary", "build_vocabulary", "dumps", "fingerprint", "forward", "gradients", "load", "loads",
    "logits", "loss", "predict_text", "save", "softmax", "train",
]
