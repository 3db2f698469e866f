"""Synthetic classification tasks and the hashing tokenizer."""

import numpy as np

from .errors import ConfigError
from .model import Batch
from .rng import hash_string_64, mix64

PAD_TOKEN = 0
MARKER_COUNT = 5

TASKS = ("marker-detect", "parity")


def marker_set(vocab_size):
    """Fixed 5-token marker set, spread over the vocabulary."""
    if vocab_size <= MARKER_COUNT + 1:
        raise ConfigError("vocab too small for marker task")
    step = max(1, (vocab_size - 1) // (MARKER_COUNT + 1))
    return tuple(1 + i * step for i in range(MARKER_COUNT))


def _rand_ints(rng, low, high, size):
    return rng.integers(low, high, size=size, dtype=np.int64)


def generate_dataset(task, size, vocab, seq_len, seed, batch_size=None, classes=2):
    """Deterministic synthetic dataset; returns tokens [size, seq_len] and
    labels [size], or a list of Batches when batch_size is given.

    marker-detect: y=1 iff the sequence contains any marker token; labels
    drawn Bernoulli(1/2), sequences constructed to match.
    parity: y = (sum of token ids) mod 2.
    """
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; known: {TASKS}")
    if size < 1 or seq_len < 1 or vocab < 8:
        raise ConfigError("size and seq_len must be >= 1, vocab >= 8")
    if batch_size is not None and (batch_size < 1 or size < batch_size):
        raise ConfigError("need size >= batch_size >= 1")
    rng = np.random.default_rng(mix64(seed, hash_string_64(task)))
    markers = np.array(marker_set(vocab))
    non_markers = np.setdiff1d(np.arange(vocab, dtype=np.int64), markers)
    if task == "marker-detect":
        labels = _rand_ints(rng, 0, 2, size)
        # negatives: marker-free tokens; positives: inject >=1 marker
        tokens = non_markers[_rand_ints(rng, 0, len(non_markers), (size, seq_len))]
        pos = np.flatnonzero(labels == 1)
        inject_at = _rand_ints(rng, 0, seq_len, len(pos))
        inject_tok = markers[_rand_ints(rng, 0, len(markers), len(pos))]
        tokens[pos, inject_at] = inject_tok
    else:
        tokens = _rand_ints(rng, 0, vocab, (size, seq_len))
        labels = (tokens.sum(axis=1) % 2).astype(np.int64)
    if batch_size is None:
        return tokens, labels
    batches = []
    for i in range(0, size - batch_size + 1, batch_size):
        batches.append(Batch(tokens[i:i + batch_size], labels[i:i + batch_size]))
    return batches


def tokenize_hashing(text, vocab_size):
    """Whitespace split, 64-bit FNV-1a hash per word, mod vocab_size."""
    if vocab_size < 2:
        raise ConfigError("vocab_size must be >= 2")
    words = text.split()
    if not words:
        return [PAD_TOKEN]
    return [hash_string_64(w) % vocab_size for w in words]
