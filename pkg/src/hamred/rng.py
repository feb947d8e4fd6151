"""Reproducible uniform draws of test parameters.

The generator is xoshiro256** seeded by splitmix64, written out here so that
draws can be reproduced bit for bit in other languages:

* seeding: the four 64-bit state words are four consecutive outputs of
  splitmix64 started at the user seed (increment ``0x9E3779B97F4A7C15``,
  multipliers ``0xBF58476D1CE4E5B9`` and ``0x94D049BB133111EB``, shifts 30,
  27, 31);
* output: ``rotl(s1 * 5, 7) * 9``, then the usual xoshiro256 state update
  with ``t = s1 << 17`` and a final ``rotl(s3, 45)``;
* a uniform double in ``[0, 1)`` is ``(next >> 11) * 2**-53``;
* a parameter draw is ``lower + u * (upper - lower)`` componentwise, the
  components of one draw taken in order.
"""

import numpy as np

MASK = (1 << 64) - 1


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK


def splitmix64(seed):
    """Infinite splitmix64 stream started at ``seed``."""
    x = seed & MASK
    while True:
        x = (x + 0x9E3779B97F4A7C15) & MASK
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        yield z ^ (z >> 31)


class Xoshiro256StarStar:
    """xoshiro256** with splitmix64 seeding."""

    def __init__(self, seed):
        if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
            raise TypeError("seed must be an integer")
        if not 0 <= int(seed) <= MASK:
            raise ValueError("seed must be a 64-bit unsigned integer")
        sm = splitmix64(int(seed))
        self.state = [next(sm) for _ in range(4)]

    def next_u64(self):
        s = self.state
        result = (_rotl((s[1] * 5) & MASK, 7) * 9) & MASK
        t = (s[1] << 17) & MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self):
        """Double in ``[0, 1)`` from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53


def uniform_parameters(domain, count, seed):
    """``count`` parameters drawn uniformly from ``domain``; shape ``(count, n_p)``."""
    gen = Xoshiro256StarStar(seed)
    lo, up = domain.lower, domain.upper
    out = np.empty((int(count), lo.size))
    for i in range(out.shape[0]):
        for j in range(lo.size):
            out[i, j] = lo[j] + gen.uniform() * (up[j] - lo[j])
    return out
