use super::{SpectrumBlock, BINS, NUM_BANDS};
use crate::{AecError, Result};

/// Bark critical-band edges (0, 100, 200, ... 6400, 7700 Hz, then 8 kHz)
/// quantised to 512-point FFT bins at 16 kHz: `round(f * 512 / 16000)`.
pub const BARK_EDGES: [usize; NUM_BANDS + 1] = [
    0, 3, 6, 10, 13, 16, 20, 25, 29, 35, 41, 47, 55, 64, 74, 86, 101, 118, 141, 170, 205, 246, 256,
];

/// Partition of the half spectrum into 22 bands. Band `k` is anchored at
/// bin `edges[k]`; bins between two anchors are shared between the two
/// bands with triangular weights that sum to one. The last band owns
/// everything from its anchor up to Nyquist.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BandLayout {
    edges: [usize; NUM_BANDS + 1],
}

impl Default for BandLayout {
    fn default() -> Self {
        Self::bark()
    }
}

impl BandLayout {
    pub fn bark() -> Self {
        BandLayout { edges: BARK_EDGES }
    }

    pub fn new(edges: [usize; NUM_BANDS + 1]) -> Result<Self> {
        if edges[0] != 0 || edges[NUM_BANDS] != BINS - 1 {
            return Err(AecError::Config(format!(
                "band edges must span bins 0..={}",
                BINS - 1
            )));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AecError::Config("band edges must be strictly increasing".into()));
        }
        Ok(BandLayout { edges })
    }

    pub fn edges(&self) -> &[usize; NUM_BANDS + 1] {
        &self.edges
    }

    pub fn band_len(&self, band: usize) -> usize {
        self.edges[band + 1] - self.edges[band]
    }

    /// Visit every (bin, band, weight) triple with nonzero weight.
    pub fn for_each_weight(&self, mut f: impl FnMut(usize, usize, f64)) {
        for k in 0..NUM_BANDS - 1 {
            let len = self.band_len(k);
            for m in 0..len {
                let frac = m as f64 / len as f64;
                let bin = self.edges[k] + m;
                f(bin, k, 1.0 - frac);
                if m > 0 {
                    f(bin, k + 1, frac);
                }
            }
        }
        for bin in self.edges[NUM_BANDS - 1]..BINS {
            f(bin, NUM_BANDS - 1, 1.0);
        }
    }

    /// Triangularly weighted per-band sum of a per-bin quantity.
    pub fn accumulate(&self, per_bin: impl Fn(usize) -> f64) -> [f64; NUM_BANDS] {
        let mut out = [0.0; NUM_BANDS];
        self.for_each_weight(|bin, band, w| out[band] += w * per_bin(bin));
        out
    }

    pub fn band_energies(&self, spec: &SpectrumBlock) -> [f64; NUM_BANDS] {
        self.accumulate(|bin| spec.bins[bin].norm_sqr())
    }
}
