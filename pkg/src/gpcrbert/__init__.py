"""Masked-residue transformer modelling of GPCR conserved motifs, built on a numpy autograd core."""

from .corpus import MotifKind, ProteinRecord, RawMaskedPair, build_motif_dataset, filter_corpus, parse_corpus
from .model import Model, ModelConfig, encoder_forward, forward
from .tokenizer import MaskedExample, decode, encode
from .trainer import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Model",
    "ModelConfig",
    "MaskedExample",
    "MotifKind",
    "ProteinRecord",
    "RawMaskedPair",
    "TrainConfig",
    "build_motif_dataset",
    "decode",
    "encode",
    "encoder_forward",
    "filter_corpus",
    "forward",
    "parse_corpus",
    "train",
]
