/** Small LCG, good enough for coin flips and fully reproducible. */
export function seededRng(seed) {
    let state = seed | 0;
    return () => {
        state = (state * 1664525 + 1013904223) | 0;
        return (state >>> 0) / 4294967296;
    };
}
