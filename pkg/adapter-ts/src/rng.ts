/**
 * SplitMix64 — the shared PRNG for policy replay.
 *
 * Matches docs/policy_schema.md exactly; neither side of the interchange
 * uses a platform default generator.  Reference: seed 0 yields
 * 0xE220A8397B1DCDAF as its first output.
 */

const MASK64 = (1n << 64n) - 1n;
const GAMMA = 0x9e3779b97f4a7c15n;
const MIX1 = 0xbf58476d1ce4e5b9n;
const MIX2 = 0x94d049bb133111ebn;

export class SplitMix64 {
  state: bigint;

  constructor(seed: bigint | number) {
    this.state = BigInt(seed) & MASK64;
  }

  nextU64(): bigint {
    this.state = (this.state + GAMMA) & MASK64;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * MIX1) & MASK64;
    z = ((z ^ (z >> 27n)) * MIX2) & MASK64;
    return z ^ (z >> 31n);
  }

  /** Integer in [0, n) by modulo reduction of one 64-bit draw. */
  below(n: number): number {
    if (n <= 0) throw new Error(`below() needs n >= 1, got ${n}`);
    return Number(this.nextU64() % BigInt(n));
  }
}

/** Stream for item `index` of a sequence: seed + index, mod 2^64. */
export function streamForItem(seed: bigint | number, index: number): SplitMix64 {
  return new SplitMix64((BigInt(seed) + BigInt(index)) & MASK64);
}
