"""Voice conversion by factoring speech into rhythm, content, pitch and timbre.

A sequence autoencoder encodes an utterance into four information streams
(discrete rhythm codes, downsampled content and pitch codes, a timbre
embedding), trained with a masked self-prediction adversary so each stream
keeps only its own factor. Swapping any subset of streams between utterances
at inference time converts that subset of speech attributes.
"""

from .converter import convert, encode_utterance
from .dataset import build_dataset
from .evaluator import mcd, wer
from .features import FeatureConfig, SpeakerStats
from .model import FactorModel, ModelConfig, load_checkpoint
from .trainer import TrainingConfig, train

__version__ = "0.1.0"

__all__ = [
    "FactorModel",
    "FeatureConfig",
    "ModelConfig",
    "SpeakerStats",
    "TrainingConfig",
    "build_dataset",
    "convert",
    "encode_utterance",
    "load_checkpoint",
    "mcd",
    "train",
    "wer",
    "__version__",
]
