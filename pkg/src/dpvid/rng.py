"""Deterministic substreams on top of numpy's Philox counter-based generator.

Every random draw in the pipeline comes from a stream addressed by
(seed, domain, *key). Distinct keys select disjoint counter blocks of the
same Philox keyspace, so streams are independent and the values drawn from
one stream never depend on how much any other stream has consumed. That
makes per-color sampling reproducible regardless of iteration or thread
order.
"""

from __future__ import annotations

import numpy as np

# Substream domains. Keep these stable: changing them changes every output.
SAMPLE = 1
LAPLACE = 2
TRIAL = 3
PERTURB = 4
SCENARIO = 5

_MASK64 = (1 << 64) - 1
_KEY_HI = 0x9E3779B97F4A7C15  # fixed second key word (golden-ratio constant)


def pack_rgb(rgb) -> int:
    r, g, b = rgb
    return (int(r) << 16) | (int(g) << 8) | int(b)


def _stream_words(seed: int, domain: int, key: tuple[int, ...]):
    if len(key) > 2:
        raise ValueError("at most two key parts after the domain")
    counter = [0, int(domain), 0, 0]
    for i, part in enumerate(key):
        if part < 0:
            raise ValueError("key parts must be non-negative")
        counter[2 + i] = int(part)
    return counter, [int(seed) & _MASK64, _KEY_HI]


def substream(seed: int, domain: int, *key: int) -> np.random.Generator:
    """Generator for the (domain, *key) substream of `seed`.

    Philox is keyed by the seed; the stream is selected by placing the key
    parts in the upper counter words, which a single stream can never reach
    by generation alone (that would take 2**64 blocks).
    """
    counter, key_words = _stream_words(seed, domain, key)
    bitgen = np.random.Philox(
        counter=np.array(counter, dtype=np.uint64),
        key=np.array(key_words, dtype=np.uint64),
    )
    return np.random.Generator(bitgen)


_template_bitgen = None
_template_gen = None


def borrow_stream(seed: int, domain: int, *key: int) -> np.random.Generator:
    """Same stream as `substream`, via a reused generator object.

    Skips per-call entropy gathering, which matters in trial loops. The
    returned generator is invalidated by the next call, so draw from it
    immediately and do not keep it. Not thread-safe; parallel code should
    use `substream`.
    """
    global _template_bitgen, _template_gen
    if _template_bitgen is None:
        _template_bitgen = np.random.Philox(seed=np.random.SeedSequence(0))
        _template_gen = np.random.Generator(_template_bitgen)
    counter, key_words = _stream_words(seed, domain, key)
    state = _template_bitgen.state
    inner = state["state"]
    inner["counter"][:] = counter
    inner["key"][:] = key_words
    state["buffer_pos"] = 4
    state["has_uint32"] = 0
    state["uinteger"] = 0
    _template_bitgen.state = state
    return _template_gen


def mix64(*parts: int) -> int:
    """Cheap deterministic 63-bit mix of integer parts (splitmix64 rounds).

    Used to derive per-trial integer seeds without constructing a generator.
    """
    h = 0x243F6A8885A308D3
    for p in parts:
        h = (h + (int(p) & _MASK64)) & _MASK64
        h = (h ^ (h >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
        h = (h ^ (h >> 27)) * 0x94D049BB133111EB & _MASK64
        h ^= h >> 31
    return h >> 1
