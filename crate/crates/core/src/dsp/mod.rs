//! Framing, windowing, FFT, overlap-add synthesis and Bark band energies.
//!
//! Every stage of the engine runs on the same geometry: 16 kHz mono,
//! 10 ms hop, 20 ms analysis window zero-padded to a 512-point FFT.

mod bands;
mod fft;
mod frame;
pub mod wav;

pub use bands::{BandLayout, BARK_EDGES};
pub use fft::{FrameFft, SpectrumBlock};
pub use frame::{analysis_frame, frame_stream, overlap_add, window, FrameBuffer};

pub use rustfft::num_complex::Complex64;

pub const SAMPLE_RATE: u32 = 16_000;
pub const HOP: usize = 160;
pub const WINDOW: usize = 2 * HOP;
pub const FFT_SIZE: usize = 512;
/// Bins in the Hermitian half spectrum.
pub const BINS: usize = FFT_SIZE / 2 + 1;
pub const NUM_BANDS: usize = 22;

/// Frame geometry shared by all modules. Only the standard geometry is
/// supported; the type exists so reports and configs can state it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AudioClock {
    sample_rate: u32,
    hop: usize,
    window: usize,
    fft_size: usize,
}

impl AudioClock {
    pub const STANDARD: AudioClock = AudioClock {
        sample_rate: SAMPLE_RATE,
        hop: HOP,
        window: WINDOW,
        fft_size: FFT_SIZE,
    };

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    /// Number of hop-spaced frames covering `samples` (last one zero-padded).
    pub fn frame_count(&self, samples: usize) -> usize {
        samples.div_ceil(self.hop)
    }

    pub fn hop_millis(&self) -> f64 {
        1000.0 * self.hop as f64 / self.sample_rate as f64
    }
}

impl Default for AudioClock {
    fn default() -> Self {
        Self::STANDARD
    }
}

/// Mean-square power of a frame expressed in dBFS (full-scale DC = 0 dB).
pub fn power_dbfs(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return -120.0;
    }
    let ms = samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64;
    10.0 * (ms + 1e-12).log10()
}
