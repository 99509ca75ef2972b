"""Counter-based random numbers.

A draw is a pure function of ``(seed, counter)``: the splitmix64 stream of
the seed, indexed by the counter. Integer arithmetic only, so draws are
identical on every platform and in both kernel backends.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels

MASK64 = (1 << 64) - 1


def mix64(z):
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


@dataclass
class RngState:
    seed: int
    counter: int = 0

    def __post_init__(self):
        self.seed = int(self.seed) & MASK64
        self.counter = int(self.counter)

    def fork(self, *keys):
        """Independent child stream keyed by ``keys``; does not advance self."""
        s = mix64(self.seed ^ 0x5EED5EED5EED5EED)
        for k in keys:
            s = mix64(s ^ (int(k) & MASK64))
        return RngState(s)

    def take(self, n):
        """Reserve ``n`` draws; returns the counter value they start at."""
        start = self.counter
        self.counter += n
        return start

    def uniform(self, n, low=0.0, high=1.0):
        u = kernels.uniform(self.seed, self.take(n), n)
        return low + (high - low) * u

    def integers(self, high, n):
        """``n`` integers in ``[0, high)``."""
        return np.minimum((self.uniform(n) * high).astype(np.int64), high - 1)

    def permutation(self, n):
        return np.argsort(self.uniform(n), kind="stable")

    def choice(self, seq, k=None):
        """``k`` distinct elements of ``seq`` (one element when ``k`` is None)."""
        if k is None:
            return seq[int(self.integers(len(seq), 1)[0])]
        idx = self.permutation(len(seq))[:k]
        return [seq[i] for i in idx]
