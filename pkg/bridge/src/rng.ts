/**
 * Deterministic seeded random stream (splitmix64 core). Identical
 * (seed, tags) always yields the identical draw sequence, so exports are
 * reproducible file-for-file.
 */

const GOLDEN = 0x9e3779b97f4a7c15n;
const MASK = 0xffffffffffffffffn;

function splitmix64(state: bigint): [bigint, bigint] {
  state = (state + GOLDEN) & MASK;
  let z = state;
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK;
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK;
  z = z ^ (z >> 31n);
  return [state, z];
}

export class Rng {
  private state: bigint;
  private spare: number | null = null;

  constructor(seed: number | bigint, ...tags: number[]) {
    // fold the tags into the seed so derived streams are independent
    let s = BigInt(seed) & MASK;
    for (const t of tags) {
      [s] = splitmix64((s ^ (BigInt(t) + GOLDEN)) & MASK);
      [, s] = splitmix64(s);
    }
    this.state = s;
  }

  nextU64(): bigint {
    const [state, out] = splitmix64(this.state);
    this.state = state;
    return out;
  }

  /** uniform in [0, 1) with 53 bits of entropy */
  float(): number {
    return Number(this.nextU64() >> 11n) / 2 ** 53;
  }

  /** uniform integer in [0, n) */
  int(n: number): number {
    return Math.floor(this.float() * n);
  }

  uniform(lo: number, hi: number): number {
    return lo + (hi - lo) * this.float();
  }

  /** standard normal via Box-Muller */
  normal(): number {
    if (this.spare !== null) {
      const v = this.spare;
      this.spare = null;
      return v;
    }
    let u = 0;
    while (u === 0) u = this.float();
    const v = this.float();
    const r = Math.sqrt(-2 * Math.log(u));
    this.spare = r * Math.sin(2 * Math.PI * v);
    return r * Math.cos(2 * Math.PI * v);
  }
}
