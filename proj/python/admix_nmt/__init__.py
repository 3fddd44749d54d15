"""Python bindings for the AdMix NMT core operations."""

from admix_nmt._core import (
    BleuReport,
    Rng,
    Vocab,
    corpus_bleu,
    js_divergence,
    mix_embeddings,
    sample_beta,
    sample_dirichlet,
    switchout_baseline,
    word_drop,
    word_replace,
    word_swap,
)

__all__ = [
    "BleuReport",
    "Rng",
    "Vocab",
    "corpus_bleu",
    "js_divergence",
    "mix_embeddings",
    "sample_beta",
    "sample_dirichlet",
    "switchout_baseline",
    "word_drop",
    "word_replace",
    "word_swap",
]
