//! Band gains to per-bin gains, and their application to a spectrum.

use crate::dsp::{BandLayout, SpectrumBlock, BINS, NUM_BANDS};

#[derive(Clone, Debug, PartialEq)]
pub struct BandGains {
    pub g: [f64; NUM_BANDS],
    pub frame_index: usize,
}

impl BandGains {
    pub fn uniform(value: f64, frame_index: usize) -> Self {
        BandGains {
            g: [value; NUM_BANDS],
            frame_index,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinGains {
    pub g: [f64; BINS],
    pub derived_from: usize,
}

/// Linear interpolation between band anchors: bin `edges[k] + m` in band
/// `k` of length `M` gets `(1 - m/M) g_k + (m/M) g_{k+1}`. The last band has
/// no right neighbour and holds its own value up to Nyquist.
pub fn interpolate_gains(bands: &BandGains, layout: &BandLayout) -> BinGains {
    let edges = layout.edges();
    let mut g = [0.0; BINS];
    for k in 0..NUM_BANDS - 1 {
        let len = layout.band_len(k);
        for m in 0..len {
            let frac = m as f64 / len as f64;
            g[edges[k] + m] = (1.0 - frac) * bands.g[k] + frac * bands.g[k + 1];
        }
    }
    for v in &mut g[edges[NUM_BANDS - 1]..] {
        *v = bands.g[NUM_BANDS - 1];
    }
    BinGains {
        g,
        derived_from: bands.frame_index,
    }
}

/// Scale each bin by its real gain; phase is untouched.
pub fn apply_gains(spec: &SpectrumBlock, gains: &BinGains) -> SpectrumBlock {
    let mut out = spec.clone();
    for (c, g) in out.bins.iter_mut().zip(&gains.g) {
        *c *= *g;
    }
    out
}

/// Asymmetric first-order smoothing of band gains across frames.
#[derive(Clone, Debug, PartialEq)]
pub struct GainSmoother {
    prev: [f64; NUM_BANDS],
    /// Weight of the new value when the gain rises.
    pub rise: f64,
    /// Weight of the new value when the gain falls.
    pub fall: f64,
}

impl Default for GainSmoother {
    fn default() -> Self {
        GainSmoother {
            prev: [1.0; NUM_BANDS],
            rise: 0.6,
            fall: 0.4,
        }
    }
}

impl GainSmoother {
    pub fn smooth(&mut self, raw: &BandGains) -> BandGains {
        let mut out = raw.clone();
        for ((o, p), &r) in out.g.iter_mut().zip(self.prev.iter_mut()).zip(&raw.g) {
            let a = if r > *p { self.rise } else { self.fall };
            *p += a * (r - *p);
            *o = p.clamp(0.0, 1.0);
        }
        out
    }

    pub fn reset(&mut self) {
        self.prev = [1.0; NUM_BANDS];
    }
}
