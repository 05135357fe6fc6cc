//! ERLE, log-spectral distance and response-time statistics.

use crate::dsp::{frame_stream, power_dbfs, FrameFft, HOP};
use crate::{AecError, Result};

/// Floor used in every ratio and logarithm.
pub const EPS: f64 = 1e-12;
/// Frames quieter than this (dBFS) are not speech-active for the
/// unmasked LSD.
pub const ACTIVITY_DBFS: f64 = -60.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ErleSeries {
    /// Per-frame ERLE in dB; `None` where the microphone frame is silent.
    pub per_frame: Vec<Option<f64>>,
    /// Mean over frames that are both defined and selected by the mask.
    pub mean_db: f64,
    pub frames_used: usize,
}

/// Frame-wise `10 log10(sum d^2 / sum e^2)` over non-overlapping frames of
/// `frame_len` samples. `mask`, when given, selects the frames (e.g.
/// echo-active frames) that enter the mean.
pub fn erle(mic: &[f64], out: &[f64], frame_len: usize, mask: Option<&[bool]>) -> Result<ErleSeries> {
    if mic.len() != out.len() {
        return Err(AecError::Config(format!(
            "ERLE needs equal lengths, got {} and {}",
            mic.len(),
            out.len()
        )));
    }
    if frame_len == 0 {
        return Err(AecError::Config("ERLE frame length must be positive".into()));
    }
    let per_frame: Vec<Option<f64>> = mic
        .chunks(frame_len)
        .zip(out.chunks(frame_len))
        .map(|(d, e)| {
            let ed: f64 = d.iter().map(|x| x * x).sum();
            let ee: f64 = e.iter().map(|x| x * x).sum();
            (ed > 0.0).then(|| 10.0 * ((ed + EPS) / (ee + EPS)).log10())
        })
        .collect();
    let selected: Vec<f64> = per_frame
        .iter()
        .enumerate()
        .filter(|(i, _)| mask.is_none_or(|m| m.get(*i).copied().unwrap_or(false)))
        .filter_map(|(_, v)| *v)
        .collect();
    let mean_db = if selected.is_empty() {
        0.0
    } else {
        selected.iter().sum::<f64>() / selected.len() as f64
    };
    Ok(ErleSeries {
        per_frame,
        mean_db,
        frames_used: selected.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LsdValue {
    pub mean_db: f64,
    pub frames_used: usize,
}

/// Log-spectral distance in dB between `reference` and `processed`,
/// averaged over active frames of the standard analysis framing. Without a
/// mask a frame is active when either signal exceeds [`ACTIVITY_DBFS`].
pub fn lsd(reference: &[f64], processed: &[f64], mask: Option<&[bool]>) -> Result<LsdValue> {
    if reference.len() != processed.len() {
        return Err(AecError::Config(format!(
            "LSD needs equal lengths, got {} and {}",
            reference.len(),
            processed.len()
        )));
    }
    let mut fft = FrameFft::new();
    let (fs, fy) = (frame_stream(reference), frame_stream(processed));
    let mut total = 0.0;
    let mut used = 0;
    for (i, (a, b)) in fs.iter().zip(&fy).enumerate() {
        let active = match mask {
            Some(m) => m.get(i).copied().unwrap_or(false),
            None => {
                let start = i * HOP;
                let end = (start + 2 * HOP).min(reference.len());
                power_dbfs(&reference[start..end]).max(power_dbfs(&processed[start..end])) > ACTIVITY_DBFS
            }
        };
        if !active {
            continue;
        }
        let (sa, sb) = (fft.forward(a), fft.forward(b));
        let msd = sa
            .bins
            .iter()
            .zip(&sb.bins)
            .map(|(x, y)| {
                let d = 10.0 * (x.norm_sqr() + EPS).log10() - 10.0 * (y.norm_sqr() + EPS).log10();
                d * d
            })
            .sum::<f64>()
            / sa.bins.len() as f64;
        total += msd.sqrt();
        used += 1;
    }
    Ok(LsdValue {
        mean_db: if used > 0 { total / used as f64 } else { 0.0 },
        frames_used: used,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RtProfile {
    pub frames: usize,
    pub mean_micros: f64,
    pub max_micros: f64,
}

impl RtProfile {
    pub fn mean_millis(&self) -> f64 {
        self.mean_micros / 1000.0
    }
}

pub fn rt_profile(micros: &[f64]) -> RtProfile {
    let frames = micros.len();
    let mean_micros = if frames > 0 {
        micros.iter().sum::<f64>() / frames as f64
    } else {
        0.0
    };
    RtProfile {
        frames,
        mean_micros,
        max_micros: micros.iter().cloned().fold(0.0, f64::max),
    }
}
