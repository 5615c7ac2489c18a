"""Deterministic random-stream management.

All randomness in the package flows through `stream(seed, purpose)`, which
derives a counter-based Philox generator from a SHA-256 hash of the seed and
a purpose label ("sources", "mixing", "noise", "init", ...).  Distinct
purposes never share a stream, so e.g. regenerating the same sources with a
different noise level reproduces the sources bit for bit.  Philox output is
fixed by numpy's bit-generator compatibility guarantee, so the same
(seed, purpose) pair yields identical draws on every platform.
"""

import hashlib

import numpy as np

_PREFIX = "pem-bss"


def stream_key(seed, purpose, *qualifiers):
    """128-bit Philox key derived from (seed, purpose, qualifiers)."""
    label = ":".join([_PREFIX, str(int(seed)), str(purpose)] + [str(q) for q in qualifiers])
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "little")


def stream(seed, purpose, *qualifiers):
    """Return a `numpy.random.Generator` for one (seed, purpose) stream."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, purpose, *qualifiers)))
