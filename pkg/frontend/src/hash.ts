/**
 * 64-bit FNV-1a over UTF-8 bytes.
 *
 * This is the join key between knowledge-base sentences and exported
 * embedding rows, so it must agree bit-for-bit with the core pipeline.
 */

const FNV_OFFSET = 0xcbf29ce484222325n;
const FNV_PRIME = 0x100000001b3n;
const MASK64 = (1n << 64n) - 1n;

export function hash64(text: string): bigint {
  let h = FNV_OFFSET;
  const bytes = Buffer.from(text, "utf-8");
  for (const byte of bytes) {
    h = ((h ^ BigInt(byte)) * FNV_PRIME) & MASK64;
  }
  return h;
}

/** splitmix64 stream; deterministic helper for fallback models. */
export class SplitMix64 {
  private counter = 0n;

  constructor(private readonly seed: bigint) {}

  nextU64(): bigint {
    this.counter += 1n;
    let z = (this.seed + this.counter * 0x9e3779b97f4a7c15n) & MASK64;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
    return (z ^ (z >> 31n)) & MASK64;
  }

  uniform(): number {
    return Number(this.nextU64() >> 11n) * 2 ** -53;
  }
}
