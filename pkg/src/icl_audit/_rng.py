"""Portable hashing and random streams.

Every random draw in the toolkit goes through :class:`CounterRNG`, a
SplitMix64 generator run in counter mode and keyed by a 64-bit FNV-1a hash
of the seed material. Both are defined bit-exactly, so seeded runs are
reproducible across platforms and language ports.
"""

import math

MASK64 = (1 << 64) - 1
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def seed_material(*parts) -> bytes:
    # Unit separator keeps ("ab", "c") and ("a", "bc") distinct.
    return "\x1f".join(str(p) for p in parts).encode("utf-8")


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary printable parts."""
    return fnv1a64(seed_material(*parts))


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class CounterRNG:
    """SplitMix64 in counter mode: the i-th output is ``mix(key + i * gamma)``."""

    def __init__(self, key: int):
        self.key = key & MASK64
        self.counter = 0

    @classmethod
    def from_parts(cls, *parts):
        return cls(derive_seed(*parts))

    def next_u64(self) -> int:
        self.counter += 1
        return _mix((self.key + self.counter * GOLDEN_GAMMA) & MASK64)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def bernoulli(self, p: float) -> bool:
        return self.random() < p

    def geometric(self, mean: float, cap: int = 1000) -> int:
        """Geometric draw on {1, 2, ...} with the given mean, capped at ``cap``."""
        if mean < 1:
            raise ValueError("geometric mean must be >= 1")
        p = 1.0 / mean
        if p >= 1.0:
            return 1
        u = 1.0 - self.random()  # in (0, 1]
        k = 1 + int(math.floor(math.log(u) / math.log1p(-p)))
        return min(k, cap)

    def shuffle(self, items: list) -> list:
        """Fisher-Yates shuffle returning a new list."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.below(i + 1)
            out[i], out[j] = out[j], out[i]
        return out

    def sample(self, items, k: int) -> list:
        """``k`` distinct elements, in draw order (partial Fisher-Yates)."""
        pool = list(items)
        if k > len(pool):
            raise ValueError("sample larger than population")
        for i in range(k):
            j = i + self.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def choice(self, items):
        return items[self.below(len(items))]
