//! Training targets: per-frame VAD labels and per-band gain labels.

use crate::dsp::{window, BandLayout, FrameBuffer, SpectrumBlock, NUM_BANDS};

/// Band energies below this count as silent when labelling gains.
pub const GAIN_FLOOR: f64 = 1e-10;
pub const VAD_HIGH_DBFS: f64 = -50.0;
pub const VAD_LOW_DBFS: f64 = -60.0;

/// Level of a windowed frame in dBFS, normalised by the window energy so a
/// constant-amplitude input `a` reads `20·log10(a)`.
pub fn frame_dbfs(frame: &FrameBuffer) -> f64 {
    let wsum: f64 = window().iter().map(|w| w * w).sum();
    let ms = frame.energy() / wsum;
    10.0 * (ms + 1e-12).log10()
}

pub fn vad_value(dbfs: f64, high_dbfs: f64, low_dbfs: f64) -> f32 {
    if dbfs > high_dbfs {
        1.0
    } else if dbfs < low_dbfs {
        0.0
    } else {
        0.5
    }
}

pub fn label_vad(frames: &[FrameBuffer], high_dbfs: f64, low_dbfs: f64) -> Vec<f32> {
    debug_assert!(high_dbfs > low_dbfs);
    frames
        .iter()
        .map(|f| vad_value(frame_dbfs(f), high_dbfs, low_dbfs))
        .collect()
}

pub fn gain_label(clean: &[f64; NUM_BANDS], filtered: &[f64; NUM_BANDS]) -> [f32; NUM_BANDS] {
    let mut g = [0f32; NUM_BANDS];
    for k in 0..NUM_BANDS {
        let (es, em) = (clean[k], filtered[k]);
        // a silent residual has nothing to suppress
        g[k] = if em < GAIN_FLOOR {
            1.0
        } else {
            (es / em).sqrt().clamp(0.0, 1.0) as f32
        };
    }
    g
}

pub fn label_gains(
    clean: &[SpectrumBlock],
    filtered: &[SpectrumBlock],
    layout: &BandLayout,
) -> Vec<[f32; NUM_BANDS]> {
    clean
        .iter()
        .zip(filtered)
        .map(|(s, m)| gain_label(&layout.band_energies(s), &layout.band_energies(m)))
        .collect()
}
