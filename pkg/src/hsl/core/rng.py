"""Deterministic random streams.

Algorithm (fixed, so every run on every platform draws the same numbers):

* The bit generator is Philox4x64-10 (``numpy.random.Philox``), a
  counter-based generator.  Each stream starts at counter 0.
* A stream is identified by a *path*: the root seed followed by any number
  of tags (ints or strings), e.g. ``(7, "episode", 3, "query", "dsr")``.
  The 128-bit Philox key is the first 16 bytes of
  ``blake2b(repr-of-path)``, read little-endian.  Splitting a stream
  (:meth:`Rng.spawn`) appends tags to the path, so child streams never
  depend on how many numbers the parent has drawn.
* Uniform doubles are ``(u64 >> 11) * 2**-53`` in ``[0, 1)``.
* Normal draws use Box-Muller on consecutive uniform pairs ``(u1, u2)``:
  ``r = sqrt(-2 ln(1 - u1))``, yielding ``r cos(2 pi u2)`` then
  ``r sin(2 pi u2)``.  Transcendentals go through :mod:`math` rather than
  numpy's vectorised kernels, whose last-bit results vary with the CPU's
  SIMD extensions.
* ``integers(n)`` returns ``floor(u * n)``.
"""

from __future__ import annotations

import hashlib
import math
import struct

import numpy as np

_TWO_NEG_53 = 2.0**-53


def _path_key(path: tuple) -> int:
    parts = []
    for tag in path:
        if isinstance(tag, bool) or not isinstance(tag, (int, str)):
            raise TypeError(f"stream tags must be int or str, got {tag!r}")
        parts.append(("i:" if isinstance(tag, int) else "s:") + str(tag))
    digest = hashlib.blake2b("/".join(parts).encode(), digest_size=16).digest()
    lo, hi = struct.unpack("<QQ", digest)
    return lo | (hi << 64)


class Rng:
    """A named random stream; cheap to create, never shared between calls."""

    def __init__(self, seed: int, *tags: int | str):
        self.path = (int(seed) & 0xFFFFFFFFFFFFFFFF,) + tuple(tags)
        self._bits = np.random.Philox(key=_path_key(self.path))

    def spawn(self, *tags: int | str) -> "Rng":
        child = Rng.__new__(Rng)
        child.path = self.path + tuple(tags)
        child._bits = np.random.Philox(key=_path_key(child.path))
        return child

    def raw(self, n: int) -> np.ndarray:
        return np.asarray(self._bits.random_raw(n), dtype=np.uint64)

    def uniform(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * _TWO_NEG_53
        return float(u[0]) if size is None else u.reshape(size)

    def normal(self, size=None, std: float = 1.0):
        n = 1 if size is None else int(np.prod(size))
        u = self.uniform(2 * ((n + 1) // 2)).tolist()
        out = []
        for k in range(0, len(u), 2):
            r = math.sqrt(-2.0 * math.log(1.0 - u[k]))
            theta = 2.0 * math.pi * u[k + 1]
            out.append(r * math.cos(theta))
            out.append(r * math.sin(theta))
        z = np.asarray(out[:n], dtype=np.float64) * std
        return float(z[0]) if size is None else z.reshape(size)

    def integers(self, n: int, size=None):
        if n < 1:
            raise ValueError("integers() needs n >= 1")
        u = self.uniform(1 if size is None else size)
        k = np.minimum(np.floor(np.asarray(u) * n).astype(np.int64), n - 1)
        return int(k.reshape(-1)[0]) if size is None else k

    def __repr__(self) -> str:
        return f"Rng{self.path!r}"
