"""Counter-based deterministic random numbers.

Every sample is a pure function of (seed, index), so a perturbation
direction can be regenerated from its seed instead of being stored.
The 64-bit bit stream comes from the Philox counter-based generator
(random access via counter advance); normals are produced by the
Box-Muller transform with pairs anchored at even stream indices, which
keeps any sub-range of the stream consistent with any other chunking.
Seed derivation and string hashing use splitmix64-style mixing / FNV-1a
so they are cheap, documented, and platform-stable.
"""

import numpy as np
from numpy.random import Philox

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = 0xFFFFFFFFFFFFFFFF
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_TWO_NEG24 = np.float32(2.0 ** -24)
_TWO_PI_NEG24 = np.float32(2.0 ** -24 * 2.0 * np.pi)
_F32_ONE = np.float32(1.0)


def _finalize(x):
    # splitmix64 output function on a Python int
    x &= _MASK
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK
    return x ^ (x >> 31)


def mix64(*words):
    """Hash an arbitrary tuple of integers into one 64-bit seed."""
    acc = 0x2545F4914F6CDD1D
    for w in words:
        acc = _finalize((acc + (int(w) & _MASK)) * _GOLDEN + _GOLDEN)
    return acc


def mix_probe_seed(seed_base, step_index, probe_index):
    """Derive the per-probe seed used for one SPSA direction."""
    return mix64(seed_base, step_index, probe_index)


def _raw_bits(seed, start, count):
    """uint64 words at positions [start, start+count) of seed's stream.

    Philox advances in 128-bit blocks of four words, so generation is
    aligned to the enclosing block and the lead-in sliced off."""
    bg = Philox(key=int(seed) & _MASK)
    block, skip = divmod(int(start), 4)
    if block:
        bg.advance(block)
    if skip:
        return bg.random_raw(count + skip)[skip:]
    return bg.random_raw(count)


def _box_muller(raw):
    """2 normals per uint64 pair; raw has even length, pairs adjacent.

    Computed in float32 (the parameter dtype the streams feed): the
    single-precision transcendentals vectorize twice as wide and the
    tail truncation this implies (|z| <= ~5.8) is unobservable at any
    realistic sample count. The second coordinate uses
    |sin| = sqrt(1 - cos^2) with its sign taken from a spare bit of the
    second word, distributed identically to sin of the uniform angle
    but avoiding a second trig call."""
    w2 = raw[1::2]
    u1 = (raw[0::2] >> np.uint64(40)).astype(np.float32)
    u1 += _F32_ONE          # (0, 1], log() always safe
    u1 *= _TWO_NEG24
    u2 = (w2 >> np.uint64(40)).astype(np.float32)
    u2 += _F32_ONE
    u2 *= _TWO_PI_NEG24
    np.log(u1, out=u1)
    u1 *= np.float32(-2.0)
    np.sqrt(u1, out=u1)          # r = sqrt(-2 ln u1)
    c = np.cos(u2)
    s = u2
    np.multiply(c, c, out=s)
    np.subtract(_F32_ONE, s, out=s)
    np.sqrt(s, out=s)
    sign = (w2 & np.uint64(1)).astype(np.float32)
    sign *= np.float32(-2.0)
    sign += _F32_ONE
    s *= sign
    c *= u1
    s *= u1
    z = np.empty(len(raw), dtype=np.float32)
    z[0::2] = c
    z[1::2] = s
    return z


def normal_stream(seed, start_index, count):
    """Standard-normal samples at indices [start_index, start_index+count).

    Random access: sample k depends only on (seed, k); Box-Muller pairs
    are anchored at even indices, so any partitioning of a range into
    calls yields identical samples."""
    if count == 0:
        return np.empty(0, dtype=np.float32)
    first_pair = start_index // 2
    last_pair = (start_index + count - 1) // 2
    raw = _raw_bits(seed, 2 * first_pair, 2 * (last_pair - first_pair + 1))
    z = _box_muller(raw)
    lo = start_index - 2 * first_pair
    return z[lo:lo + count]


def normal_chunks(seed, total, chunk):
    """Yield (start, z) covering [0, total) in chunk-sized pieces.

    Bitwise identical to calling normal_stream(seed, start, len) per
    chunk, but an even chunk size lets every chunk consume whole
    Box-Muller pairs, so one generator instance can serve the raw words
    contiguously instead of being reconstructed per chunk."""
    if chunk % 2:
        for start in range(0, total, chunk):
            yield start, normal_stream(seed, start, min(chunk, total - start))
        return
    bg = Philox(key=int(seed) & _MASK)
    for start in range(0, total, chunk):
        count = min(chunk, total - start)
        raw = bg.random_raw(count + (count & 1))
        z = _box_muller(raw)
        yield start, z[:count] if count & 1 else z


def normal_stream_fill(seed, start_index, out):
    """Fill `out` with normal_stream(seed, start_index, len(out))."""
    flat = out.reshape(-1)
    flat[:] = normal_stream(seed, start_index, flat.size)


def normal_matrix(seeds, count):
    """One row of `count` normals per seed; rows equal
    normal_stream(seed, 0, count)."""
    out = np.empty((len(seeds), count), dtype=np.float32)
    for i, s in enumerate(seeds):
        out[i] = normal_stream(s, 0, count)
    return out


def hash_string_64(text):
    """FNV-1a over UTF-8 bytes; stable across platforms."""
    h = _FNV_OFFSET
    for b in text.encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK
    return h
