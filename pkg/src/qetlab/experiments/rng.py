"""SplitMix64 streams and Box-Muller Gaussians.

The generator is fully specified here so that sampling sweeps can be
reproduced bit for bit by any implementation:

* state update ``s <- s + 0x9E3779B97F4A7C15 (mod 2**64)``
* output ``mix(s)`` with
  ``z = (s ^ (s >> 30)) * 0xBF58476D1CE4E5B9``,
  ``z = (z ^ (z >> 27)) * 0x94D049BB133111EB``, ``z ^ (z >> 31)``
* uniform doubles ``(x >> 11) * 2**-53`` in ``[0, 1)``
* Gaussians in pairs from two consecutive outputs ``x1, x2``:
  ``u1 = ((x1 >> 11) + 1) * 2**-53`` (in ``(0, 1]``), ``u2 = (x2 >> 11) * 2**-53``,
  ``r = sqrt(-2 ln u1)``, giving ``r cos(2 pi u2)`` then ``r sin(2 pi u2)``.
* the stream for sample ``i`` of a sweep seeded with ``seed`` starts from
  state ``child_seed(seed, i) = mix(seed + (i + 1) * gamma)``, the ``i``-th
  output of the master stream.
"""
from __future__ import annotations

import numpy as np

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_TWO_M53 = 2.0 ** -53


def mix64(z):
    z &= MASK
    z = ((z ^ (z >> 30)) * _M1) & MASK
    z = ((z ^ (z >> 27)) * _M2) & MASK
    return z ^ (z >> 31)


def child_seed(seed, index):
    return mix64((seed + (index + 1) * GAMMA) & MASK)


class SplitMix64:
    def __init__(self, seed):
        self.state = int(seed) & MASK

    @classmethod
    def for_sample(cls, seed, index):
        return cls(child_seed(seed, index))

    def next_u64(self, n=None):
        """One output (``n is None``) or an array of ``n`` outputs."""
        if n is None:
            self.state = (self.state + GAMMA) & MASK
            return mix64(self.state)
        # counter form: output k uses state + (k + 1) * gamma; uint64 wraps mod 2**64
        k = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + k * np.uint64(GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * GAMMA) & MASK
        return z

    def uniform(self, n):
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * _TWO_M53

    def normal(self, n):
        pairs = (n + 1) // 2
        raw = self.next_u64(2 * pairs)
        u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_M53
        u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _TWO_M53
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(2 * np.pi * u2)
        out[1::2] = r * np.sin(2 * np.pi * u2)
        return out[:n]

    def integer(self, low, high):
        """Integer in ``[low, high]`` as ``low + next % (high - low + 1)``."""
        return low + self.next_u64() % (high - low + 1)


def complex_gaussian(rng, dim):
    """``dim x dim`` matrix: real parts first, then imaginary parts, row-major."""
    z = rng.normal(2 * dim * dim)
    return (z[: dim * dim] + 1j * z[dim * dim:]).reshape(dim, dim)


def random_density(rng, dim):
    a = complex_gaussian(rng, dim)
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_hermitian(rng, dim):
    a = complex_gaussian(rng, dim)
    return 0.5 * (a + a.conj().T)
