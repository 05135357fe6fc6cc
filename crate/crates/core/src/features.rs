//! The 42-dimensional per-frame network input.
//!
//! Layout: 22 Bark cepstral coefficients, first and second differences of
//! the first six, a DCT of the first six per-band pitch correlations, the
//! pitch period in samples and a spectral non-stationarity measure.

use std::io::{Read, Write};

use crate::dsp::{analysis_frame, BandLayout, FrameFft, SpectrumBlock, HOP, NUM_BANDS, WINDOW};
use crate::{AecError, Result};

pub const FEATURE_DIM: usize = 42;
pub const DELTA_COEFFS: usize = 6;
/// Two channels (far reference, filter output) side by side.
pub const DUAL_FEATURE_DIM: usize = 2 * FEATURE_DIM;

const LOG_FLOOR: f64 = 1e-10;
const PITCH_MIN_LAG: usize = 40;
const PITCH_MAX_LAG: usize = 320;
/// 25 ms correlation window.
const PITCH_WINDOW: usize = 400;
const PITCH_BUF: usize = PITCH_MAX_LAG + PITCH_WINDOW;

const DUMP_MAGIC: &[u8; 4] = b"AECF";
const DUMP_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub bfcc: [f64; NUM_BANDS],
    pub d_bfcc: [f64; DELTA_COEFFS],
    pub dd_bfcc: [f64; DELTA_COEFFS],
    pub pitch_dct: [f64; DELTA_COEFFS],
    pub pitch_period: f64,
    pub nonstationarity: f64,
}

impl FeatureVector {
    pub fn to_f64(&self) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        let parts = self
            .bfcc
            .iter()
            .chain(&self.d_bfcc)
            .chain(&self.dd_bfcc)
            .chain(&self.pitch_dct)
            .chain([&self.pitch_period, &self.nonstationarity]);
        for (o, v) in out.iter_mut().zip(parts) {
            *o = *v;
        }
        out
    }

    pub fn to_f32(&self) -> [f32; FEATURE_DIM] {
        self.to_f64().map(|v| v as f32)
    }

    pub fn is_finite(&self) -> bool {
        self.to_f64().iter().all(|v| v.is_finite())
    }
}

/// Temporal context for one channel.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureState {
    pub prev_bfcc: [f64; NUM_BANDS],
    pub prev_prev_bfcc: [f64; NUM_BANDS],
    pub prev_log_band: [f64; NUM_BANDS],
    /// Trailing raw samples, oldest first.
    pub pitch_buffer: Vec<f64>,
}

impl Default for FeatureState {
    fn default() -> Self {
        FeatureState {
            prev_bfcc: [0.0; NUM_BANDS],
            prev_prev_bfcc: [0.0; NUM_BANDS],
            prev_log_band: [0.0; NUM_BANDS],
            pitch_buffer: vec![0.0; PITCH_BUF],
        }
    }
}

/// Orthonormal DCT-II.
pub fn dct_ortho(input: &[f64], out: &mut [f64]) {
    let n = input.len();
    let nf = n as f64;
    for (k, o) in out.iter_mut().enumerate().take(n) {
        let s: f64 = input
            .iter()
            .enumerate()
            .map(|(i, x)| x * (std::f64::consts::PI * (i as f64 + 0.5) * k as f64 / nf).cos())
            .sum();
        let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        *o = s * scale;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PitchEstimate {
    /// Refined period in samples, 0 when no periodicity is found.
    pub period: f64,
    pub lag: usize,
    pub correlation: f64,
}

/// Normalised autocorrelation pitch search over 40..=320 sample lags
/// (400 Hz down to 50 Hz) on the last 400 samples of `buf`, with a
/// sub-multiple check against octave errors and parabolic refinement.
pub fn estimate_pitch(buf: &[f64]) -> PitchEstimate {
    let none = PitchEstimate {
        period: 0.0,
        lag: 0,
        correlation: 0.0,
    };
    let n = buf.len();
    if n < PITCH_BUF {
        return none;
    }
    let cur = &buf[n - PITCH_WINDOW..];
    let e_cur: f64 = cur.iter().map(|x| x * x).sum();
    if !(e_cur > 1e-20) {
        return none;
    }
    let mut corr = vec![0.0; PITCH_MAX_LAG + 2];
    for lag in PITCH_MIN_LAG..=PITCH_MAX_LAG {
        let past = &buf[n - PITCH_WINDOW - lag..n - lag];
        let (mut num, mut e_past) = (0.0, 0.0);
        for (a, b) in cur.iter().zip(past) {
            num += a * b;
            e_past += b * b;
        }
        let den = (e_cur * e_past).sqrt();
        corr[lag] = if den > 0.0 { num / den } else { 0.0 };
    }
    let mut best = PITCH_MIN_LAG;
    for lag in PITCH_MIN_LAG..=PITCH_MAX_LAG {
        if corr[lag] > corr[best] {
            best = lag;
        }
    }
    if !(corr[best] > 0.0) {
        return none;
    }
    // prefer the shortest sub-multiple that is nearly as periodic
    let peak = corr[best];
    for div in (2..=best / PITCH_MIN_LAG).rev() {
        let centre = (best as f64 / div as f64).round() as usize;
        let lo = centre.saturating_sub(2).max(PITCH_MIN_LAG);
        let hi = (centre + 2).min(PITCH_MAX_LAG);
        let cand = (lo..=hi).max_by(|&a, &b| corr[a].total_cmp(&corr[b])).unwrap();
        if corr[cand] >= 0.9 * peak {
            best = cand;
            break;
        }
    }
    let mut period = best as f64;
    if best > PITCH_MIN_LAG && best < PITCH_MAX_LAG {
        let (a, b, c) = (corr[best - 1], corr[best], corr[best + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            period += (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
        }
    }
    PitchEstimate {
        period,
        lag: best,
        correlation: corr[best],
    }
}

/// Per-channel feature extractor.
#[derive(Debug)]
pub struct FeatureExtractor {
    state: FeatureState,
    layout: BandLayout,
    fft: FrameFft,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::new(BandLayout::bark())
    }
}

impl FeatureExtractor {
    pub fn new(layout: BandLayout) -> Self {
        FeatureExtractor {
            state: FeatureState::default(),
            layout,
            fft: FrameFft::new(),
        }
    }

    pub fn state(&self) -> &FeatureState {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state = FeatureState::default();
    }

    /// Features of the frame ending with `hop`. `spec` must be the spectrum
    /// of the windowed last `WINDOW` samples of this channel, i.e. the
    /// previous hop followed by `hop`.
    pub fn extract(&mut self, spec: &SpectrumBlock, hop: &[f64]) -> FeatureVector {
        debug_assert_eq!(hop.len(), HOP);
        let st = &mut self.state;
        st.pitch_buffer.rotate_left(HOP);
        let n = st.pitch_buffer.len();
        st.pitch_buffer[n - HOP..].copy_from_slice(hop);

        let energies = self.layout.band_energies(spec);
        let log_band = energies.map(|e| (e + LOG_FLOOR).log10());
        let mut bfcc = [0.0; NUM_BANDS];
        dct_ortho(&log_band, &mut bfcc);

        let mut d_bfcc = [0.0; DELTA_COEFFS];
        let mut dd_bfcc = [0.0; DELTA_COEFFS];
        for i in 0..DELTA_COEFFS {
            d_bfcc[i] = bfcc[i] - st.prev_bfcc[i];
            dd_bfcc[i] = bfcc[i] - 2.0 * st.prev_bfcc[i] + st.prev_prev_bfcc[i];
        }
        let nonstationarity = log_band
            .iter()
            .zip(&st.prev_log_band)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / NUM_BANDS as f64;

        let pitch = estimate_pitch(&st.pitch_buffer);
        let mut band_corr = [0.0; NUM_BANDS];
        if pitch.lag > 0 {
            let end = n - pitch.lag;
            let past = &st.pitch_buffer[end - WINDOW..end];
            let frame = analysis_frame(&past[..HOP], &past[HOP..], spec.frame_index);
            let lagged = self.fft.forward(&frame);
            let cross = self
                .layout
                .accumulate(|k| (spec.bins[k] * lagged.bins[k].conj()).re);
            let e_lag = self.layout.band_energies(&lagged);
            for b in 0..NUM_BANDS {
                let den = (energies[b] * e_lag[b]).sqrt();
                band_corr[b] = if den > 1e-30 { cross[b] / den } else { 0.0 };
            }
        }
        let mut pitch_dct = [0.0; DELTA_COEFFS];
        dct_ortho(&band_corr[..DELTA_COEFFS], &mut pitch_dct);

        st.prev_prev_bfcc = st.prev_bfcc;
        st.prev_bfcc = bfcc;
        st.prev_log_band = log_band;

        FeatureVector {
            bfcc,
            d_bfcc,
            dd_bfcc,
            pitch_dct,
            pitch_period: pitch.period,
            nonstationarity,
        }
    }
}

/// Writes the training feature dump: 16-byte header (magic, version,
/// dimension, frame count) followed by row-major little-endian f32 rows of
/// far and near features.
pub fn write_feature_dump<W: Write>(mut w: W, rows: &[[f32; DUAL_FEATURE_DIM]]) -> std::io::Result<()> {
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&DUMP_VERSION.to_le_bytes())?;
    w.write_all(&(DUAL_FEATURE_DIM as u32).to_le_bytes())?;
    w.write_all(&(rows.len() as u32).to_le_bytes())?;
    for row in rows {
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_feature_dump<R: Read>(mut r: R) -> Result<Vec<[f32; DUAL_FEATURE_DIM]>> {
    let bad = |m: &str| AecError::DatasetFormat(format!("feature dump: {m}"));
    let mut header = [0u8; 16];
    r.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
    if &header[..4] != DUMP_MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    if word(4) != DUMP_VERSION {
        return Err(bad("unsupported version"));
    }
    if word(8) as usize != DUAL_FEATURE_DIM {
        return Err(bad("dimension is not 84"));
    }
    let count = word(12) as usize;
    let mut rows = Vec::with_capacity(count);
    let mut buf = [0u8; DUAL_FEATURE_DIM * 4];
    for i in 0..count {
        r.read_exact(&mut buf)
            .map_err(|_| bad(&format!("truncated at row {i}")))?;
        let mut row = [0f32; DUAL_FEATURE_DIM];
        for (j, v) in row.iter_mut().enumerate() {
            *v = f32::from_le_bytes(buf[4 * j..4 * j + 4].try_into().unwrap());
        }
        rows.push(row);
    }
    Ok(rows)
}
