"""Deterministic random number generation.

A counter-based variant of the splitmix64 generator: draw ``i`` (0-based)
of a stream with seed ``s`` is ``mix64(s + (i + 1) * GOLDEN)`` where
``GOLDEN`` is the 64-bit golden-ratio increment.  Because each draw is a
pure function of ``(seed, i)``, blocks of any size can be produced with
vectorized arithmetic and the stream is identical regardless of how it is
chunked.  All arithmetic is modulo 2**64.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# 2**-53; (u64 >> 11) + 1 scaled by this lands in (0, 1].
_U53_SCALE = 1.0 / (1 << 53)


def mix64(value: int) -> int:
    """splitmix64 finalizer on a single 64-bit integer."""
    z = value & _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed: int, *salts: int | str) -> int:
    """Fold integer or string salts into ``seed`` to name an independent substream."""
    h = mix64(seed)
    for salt in salts:
        if isinstance(salt, str):
            for ch in salt:
                h = mix64(h ^ ord(ch))
        else:
            h = mix64(h ^ (int(salt) & _MASK))
    return h


class Prng:
    """Counter-based splitmix64 stream with uniform and Gaussian output.

    Scalar and block methods consume the same underlying counter, so a
    sequence of draws does not depend on the block sizes used to obtain it.
    """

    def __init__(self, seed: int):
        self._seed = int(seed) & _MASK
        self._counter = 0

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def counter(self) -> int:
        return self._counter

    def u64_block(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit draws as a uint64 array."""
        if n < 0:
            raise ValidationError("block size must be non-negative")
        base = self._counter
        self._counter += n
        idx = np.arange(base + 1, base + n + 1, dtype=np.uint64)
        # uint64 arithmetic wraps modulo 2**64, matching the scalar mix64.
        z = (np.uint64(self._seed) + idx * np.uint64(_GOLDEN)).astype(np.uint64)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def u64(self) -> int:
        return int(self.u64_block(1)[0])

    def below(self, n: int) -> int:
        """Integer in [0, n)."""
        if n <= 0:
            raise ValidationError("below() requires a positive bound")
        return self.u64() % n

    def uniform_block(self, n: int) -> np.ndarray:
        """Next ``n`` uniforms in the half-open interval (0, 1]."""
        bits = self.u64_block(n)
        return ((bits >> np.uint64(11)).astype(np.float64) + 1.0) * _U53_SCALE

    def uniform(self) -> float:
        return float(self.uniform_block(1)[0])

    def gaussian_block(self, n: int) -> np.ndarray:
        """Next ``n`` standard normal draws via the Box-Muller transform.

        Consumes ``2 * ceil(n / 2)`` raw draws so the counter advance is a
        function of ``n`` alone.
        """
        if n < 0:
            raise ValidationError("block size must be non-negative")
        pairs = (n + 1) // 2
        u1 = self.uniform_block(pairs)
        u2 = self.uniform_block(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:n]

    def shuffle(self, items: np.ndarray | Sequence) -> None:
        """In-place Fisher-Yates shuffle."""
        m = len(items)
        for i in range(m - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> np.ndarray:
        idx = np.arange(n)
        self.shuffle(idx)
        return idx
