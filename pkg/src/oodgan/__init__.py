"""Pseudo out-of-domain utterance generation with an entropy-rewarded sequence GAN."""

from oodgan.corpus import (
    DatasetSplit,
    LabeledExample,
    TokenSequence,
    Vocabulary,
    build_vocabulary,
    decode,
    encode,
    load_dataset,
    tokenize,
)
from oodgan.simkernel import BACKEND as SIMILARITY_BACKEND

__version__ = "0.1.0"

__all__ = [
    "DatasetSplit",
    "LabeledExample",
    "SIMILARITY_BACKEND",
    "TokenSequence",
    "Vocabulary",
    "build_vocabulary",
    "decode",
    "encode",
    "load_dataset",
    "tokenize",
]
