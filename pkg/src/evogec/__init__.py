"""Evolutionary prompt optimization for LLM-based post-ASR error correction."""

from evogec.corpus import Corpus, FieldMapping, Split, Utterance, load_corpus, sample_subset
from evogec.errors import ConfigError, DataError, EvogecError, ProviderError
from evogec.metrics import EditStats, NormPolicy, WerReport, align, corpus_wer, normalize

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Corpus",
    "DataError",
    "EditStats",
    "EvogecError",
    "FieldMapping",
    "NormPolicy",
    "ProviderError",
    "Split",
    "Utterance",
    "WerReport",
    "align",
    "corpus_wer",
    "load_corpus",
    "normalize",
    "sample_subset",
]
