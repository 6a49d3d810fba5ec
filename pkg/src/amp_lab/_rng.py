"""Counter-based random streams.

Every random quantity in the package comes from a numpy ``Philox4x64`` bit
generator.  A stream is identified by ``(seed, trial, purpose)`` and the
128-bit Philox key is ``seed | ((trial << 8 | purpose) << 64)``, so two
trials, or two purposes within a trial, never share a counter sequence.

Uniforms take the top 53 bits of each raw 64-bit word,
``u = ((w >> 11) + 0.5) * 2**-53``, which lies strictly inside (0, 1).
Gaussians are ``ndtri(u)`` (inverse normal cdf, Cephes rational
approximations, double precision).  Both maps depend only on the raw word
sequence, which Philox defines identically on every platform.
"""

import numpy as np
from scipy.special import ndtri

DESIGN = 1
SIGNAL = 2
NOISE = 3
AUX = 4

_MASK64 = (1 << 64) - 1


def stream_key(seed, trial=0, purpose=DESIGN):
    """128-bit Philox key for a (seed, trial, purpose) triple."""
    seed = int(seed)
    trial = int(trial)
    purpose = int(purpose)
    if not 0 <= purpose < 256:
        raise ValueError("purpose tag must fit in 8 bits")
    if trial < 0 or trial >= 1 << 56:
        raise ValueError("trial index out of range")
    word = (trial << 8) | purpose
    return (seed & _MASK64) | (word << 64)


def stream(seed, trial=0, purpose=DESIGN):
    """Fresh ``np.random.Generator`` positioned at the start of a stream."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, trial, purpose)))


def uniforms(gen, size):
    """Uniforms in (0, 1) from the top 53 bits of raw draws."""
    raw = gen.bit_generator.random_raw(size)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normals(gen, size):
    """Standard Gaussians by inverse cdf of :func:`uniforms`."""
    return ndtri(uniforms(gen, size))
