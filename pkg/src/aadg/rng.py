"""Deterministic PRNG used for policy application.

Policy replay must be reproducible across independent implementations, so
sub-policy selection and Cutout placement never use a platform default
generator.  The stream below is SplitMix64 with the standard constants;
the exact algorithm and draw discipline are documented in
docs/policy_schema.md and shared with every consumer of exported policies.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """SplitMix64 stream over 64-bit state.

    Reference behavior: seed 0 yields 0xE220A8397B1DCDAF as the first
    output.  All arithmetic is modulo 2**64.
    """

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Integer in [0, n), by modulo reduction of one 64-bit draw.

        Modulo bias is negligible for the small n used here and keeps the
        cross-implementation contract a one-liner.
        """
        if n <= 0:
            raise ValueError(f"below() needs n >= 1, got {n}")
        return self.next_u64() % n

    def fork(self, offset: int) -> "SplitMix64":
        """Independent child stream for item `offset` (seed = state + offset)."""
        return SplitMix64((self.state + offset) & _MASK64)


def stream_for_item(seed: int, index: int) -> SplitMix64:
    """Per-item stream used when applying a policy to a sequence of images.

    Contract shared with external consumers: item `index` (0-based) uses a
    fresh SplitMix64 seeded with (seed + index) mod 2**64.
    """
    return SplitMix64((seed + index) & _MASK64)
