use std::sync::LazyLock;

use super::{HOP, WINDOW};

/// One windowed analysis frame. Frame `index` starts at sample `index * HOP`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameBuffer {
    pub index: usize,
    pub samples: [f64; WINDOW],
}

impl FrameBuffer {
    pub fn zeroed(index: usize) -> Self {
        FrameBuffer {
            index,
            samples: [0.0; WINDOW],
        }
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }
}

// Power-complementary sine-of-squared-sine window: w[n]^2 + w[n + HOP]^2 = 1,
// so using it for both analysis and synthesis reconstructs exactly at 50%
// overlap.
static WINDOW_TABLE: LazyLock<[f64; WINDOW]> = LazyLock::new(|| {
    let mut w = [0.0; WINDOW];
    for (n, v) in w.iter_mut().enumerate() {
        let s = (std::f64::consts::PI * (n as f64 + 0.5) / WINDOW as f64).sin();
        *v = (std::f64::consts::FRAC_PI_2 * s * s).sin();
    }
    w
});

pub fn window() -> &'static [f64; WINDOW] {
    &WINDOW_TABLE
}

/// Build the windowed frame whose first half is `prev` and second half `cur`
/// (both `HOP` long). This is the streaming form of [`frame_stream`].
pub fn analysis_frame(prev: &[f64], cur: &[f64], index: usize) -> FrameBuffer {
    debug_assert_eq!(prev.len(), HOP);
    debug_assert_eq!(cur.len(), HOP);
    let w = window();
    let mut frame = FrameBuffer::zeroed(index);
    for (i, (o, x)) in frame
        .samples
        .iter_mut()
        .zip(prev.iter().chain(cur.iter()))
        .enumerate()
    {
        *o = x * w[i];
    }
    frame
}

/// Split a mono stream into hop-spaced, windowed frames. The final partial
/// frame is zero-padded; empty input yields no frames.
pub fn frame_stream(pcm: &[f64]) -> Vec<FrameBuffer> {
    let w = window();
    let count = pcm.len().div_ceil(HOP);
    (0..count)
        .map(|index| {
            let start = index * HOP;
            let end = (start + WINDOW).min(pcm.len());
            let mut frame = FrameBuffer::zeroed(index);
            for (i, x) in pcm[start..end].iter().enumerate() {
                frame.samples[i] = x * w[i];
            }
            frame
        })
        .collect()
}

/// Synthesis-window each frame and sum at its hop offset. Output length is
/// `(n - 1) * HOP + WINDOW` for `n` frames (zero for no frames).
pub fn overlap_add(frames: &[FrameBuffer]) -> Vec<f64> {
    let Some(last) = frames.iter().map(|f| f.index).max() else {
        return Vec::new();
    };
    let w = window();
    let mut out = vec![0.0; last * HOP + WINDOW];
    for frame in frames {
        let start = frame.index * HOP;
        for (i, x) in frame.samples.iter().enumerate() {
            out[start + i] += x * w[i];
        }
    }
    out
}
