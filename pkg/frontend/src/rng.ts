/** Uniform [0, 1) source. Injectable so tests can replay a seed. */
export type Rng = () => number;

/** Small LCG, good enough for coin flips and fully reproducible. */
export function seededRng(seed: number): Rng {
  let state = seed | 0;
  return () => {
    state = (state * 1664525 + 1013904223) | 0;
    return (state >>> 0) / 4294967296;
  };
}
