use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{FrameBuffer, BINS, FFT_SIZE, WINDOW};
use crate::{AecError, Result};

/// Hermitian half spectrum of one frame (`BINS` bins, DC to Nyquist).
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumBlock {
    pub frame_index: usize,
    pub bins: [Complex64; BINS],
}

impl SpectrumBlock {
    pub fn zeroed(frame_index: usize) -> Self {
        SpectrumBlock {
            frame_index,
            bins: [Complex64::new(0.0, 0.0); BINS],
        }
    }

    pub fn from_bins(frame_index: usize, bins: &[Complex64]) -> Result<Self> {
        if bins.len() != BINS {
            return Err(AecError::Config(format!(
                "spectrum needs {BINS} bins, got {}",
                bins.len()
            )));
        }
        let mut s = Self::zeroed(frame_index);
        s.bins.copy_from_slice(bins);
        Ok(s)
    }

    /// Sum of |X(k)|^2 over the half spectrum.
    pub fn half_energy(&self) -> f64 {
        self.bins.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Energy of the full two-sided spectrum (interior bins counted twice).
    pub fn full_energy(&self) -> f64 {
        let interior: f64 = self.bins[1..BINS - 1].iter().map(|c| c.norm_sqr()).sum();
        self.bins[0].norm_sqr() + 2.0 * interior + self.bins[BINS - 1].norm_sqr()
    }
}

/// Real forward / inverse transform at `FFT_SIZE`. Forward is unnormalised,
/// inverse carries the `1 / FFT_SIZE` factor.
pub struct FrameFft {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl fmt::Debug for FrameFft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrameFft").field("size", &FFT_SIZE).finish()
    }
}

impl Default for FrameFft {
    fn default() -> Self {
        Self::new()
    }
}

impl FrameFft {
    pub fn new() -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(FFT_SIZE);
        let inverse = planner.plan_fft_inverse(FFT_SIZE);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        FrameFft {
            forward,
            inverse,
            buf: vec![Complex64::new(0.0, 0.0); FFT_SIZE],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    pub fn forward(&mut self, frame: &FrameBuffer) -> SpectrumBlock {
        self.transform(&frame.samples, frame.index)
    }

    /// Forward transform of an arbitrary real block of at most `FFT_SIZE`
    /// samples (zero-padded).
    pub fn forward_samples(&mut self, samples: &[f64], frame_index: usize) -> Result<SpectrumBlock> {
        if samples.len() > FFT_SIZE {
            return Err(AecError::Config(format!(
                "block of {} samples exceeds FFT size {FFT_SIZE}",
                samples.len()
            )));
        }
        Ok(self.transform(samples, frame_index))
    }

    fn transform(&mut self, samples: &[f64], frame_index: usize) -> SpectrumBlock {
        for (i, c) in self.buf.iter_mut().enumerate() {
            *c = Complex64::new(samples.get(i).copied().unwrap_or(0.0), 0.0);
        }
        self.forward
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        let mut out = SpectrumBlock::zeroed(frame_index);
        out.bins.copy_from_slice(&self.buf[..BINS]);
        out
    }

    /// Inverse transform returning all `FFT_SIZE` real samples.
    pub fn inverse_full(&mut self, spec: &SpectrumBlock, out: &mut [f64; FFT_SIZE]) {
        self.buf[..BINS].copy_from_slice(&spec.bins);
        for k in BINS..FFT_SIZE {
            self.buf[k] = spec.bins[FFT_SIZE - k].conj();
        }
        // DC and Nyquist of a real signal are real
        self.buf[0].im = 0.0;
        self.buf[BINS - 1].im = 0.0;
        self.inverse
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        let scale = 1.0 / FFT_SIZE as f64;
        for (o, c) in out.iter_mut().zip(&self.buf) {
            *o = c.re * scale;
        }
    }

    /// Inverse transform truncated to the analysis window length.
    pub fn inverse(&mut self, spec: &SpectrumBlock) -> FrameBuffer {
        let mut full = [0.0; FFT_SIZE];
        self.inverse_full(spec, &mut full);
        let mut frame = FrameBuffer::zeroed(spec.frame_index);
        frame.samples.copy_from_slice(&full[..WINDOW]);
        frame
    }
}
