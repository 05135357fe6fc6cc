//! Streaming engine: adaptive filter, dual-channel features, network,
//! band-gain suppression and overlap-add synthesis, one hop at a time.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use crate::dsp::{analysis_frame, power_dbfs, wav, window, AudioClock, BandLayout, FrameFft, FFT_SIZE, HOP, NUM_BANDS, WINDOW};
use crate::features::FeatureExtractor;
use crate::mdf::{FilterConfig, MdfFilter};
use crate::metrics::{self, RtProfile, EPS};
use crate::nn::{NetState, NetworkWeights};
use crate::suppression::{apply_gains, interpolate_gains, BandGains, GainSmoother};
use crate::{AecError, Result};

/// Far-end frames quieter than this do not count as echo-active in run
/// reports.
const FAR_ACTIVE_DBFS: f64 = -60.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SessionOptions {
    pub filter: FilterConfig,
    /// Run the suppression network; when false the output is the adaptive
    /// filter output resynthesised.
    pub use_network: bool,
    /// Gate with hard VAD decisions instead of using the network gains
    /// directly.
    pub hard_gate: bool,
    /// Far VAD probability below which a frame counts as far-silent.
    pub gate_threshold: f32,
    /// Consecutive far-silent frames before gains are forced to one.
    pub gate_enter_frames: usize,
    /// Consecutive far-active frames before suppression resumes.
    pub gate_exit_frames: usize,
    pub smooth_gains: bool,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions {
            filter: FilterConfig::default(),
            use_network: true,
            hard_gate: false,
            gate_threshold: 0.1,
            gate_enter_frames: 10,
            gate_exit_frames: 5,
            smooth_gains: true,
        }
    }
}

impl SessionOptions {
    pub fn without_network() -> Self {
        SessionOptions {
            use_network: false,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameResult {
    /// `HOP` output samples, delayed by one hop relative to the input.
    pub out_frame: Vec<f64>,
    /// VAD probabilities (zero when the network is bypassed).
    pub vad_near: f32,
    pub vad_far: f32,
    /// Gains actually applied this frame.
    pub band_gains: BandGains,
    pub erle_instant: f64,
    pub proc_micros: f64,
}

/// Far-silence detector with hysteresis.
#[derive(Clone, Debug, Default)]
struct FarGate {
    low_run: usize,
    high_run: usize,
    passthrough: bool,
}

impl FarGate {
    fn update(&mut self, far_silent: bool, enter: usize, exit: usize) -> bool {
        if far_silent {
            self.low_run += 1;
            self.high_run = 0;
        } else {
            self.high_run += 1;
            self.low_run = 0;
        }
        if !self.passthrough && self.low_run >= enter {
            self.passthrough = true;
        } else if self.passthrough && self.high_run >= exit {
            self.passthrough = false;
        }
        self.passthrough
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SessionStats {
    pub frames: u64,
    pub rt_sum_micros: f64,
    pub rt_max_micros: f64,
}

impl SessionStats {
    pub fn mean_micros(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.rt_sum_micros / self.frames as f64
        }
    }
}

/// One echo-cancellation stream. Push aligned far/mic hops in order.
#[derive(Debug)]
pub struct AecSession {
    options: SessionOptions,
    clock: AudioClock,
    layout: BandLayout,
    mdf: MdfFilter,
    far_feat: FeatureExtractor,
    near_feat: FeatureExtractor,
    net_state: NetState,
    weights: Option<Arc<NetworkWeights>>,
    fft: FrameFft,
    smoother: GainSmoother,
    gate: FarGate,
    prev_far: Vec<f64>,
    prev_err: Vec<f64>,
    prev_mic: Vec<f64>,
    ola_tail: Vec<f64>,
    synth: Box<[f64; FFT_SIZE]>,
    frame_index: usize,
    poisoned: bool,
    stats: SessionStats,
}

impl AecSession {
    pub fn new(weights: Option<Arc<NetworkWeights>>, options: SessionOptions) -> Result<Self> {
        if options.use_network {
            match &weights {
                Some(w) => w.validate()?,
                None => {
                    return Err(AecError::Config(
                        "the suppression network is enabled but no model was supplied".into(),
                    ))
                }
            }
        }
        Ok(AecSession {
            mdf: MdfFilter::new(options.filter.clone())?,
            clock: AudioClock::STANDARD,
            layout: BandLayout::bark(),
            far_feat: FeatureExtractor::default(),
            near_feat: FeatureExtractor::default(),
            net_state: NetState::default(),
            weights,
            fft: FrameFft::new(),
            smoother: GainSmoother::default(),
            gate: FarGate::default(),
            prev_far: vec![0.0; HOP],
            prev_err: vec![0.0; HOP],
            prev_mic: vec![0.0; HOP],
            ola_tail: vec![0.0; HOP],
            synth: Box::new([0.0; FFT_SIZE]),
            frame_index: 0,
            poisoned: false,
            stats: SessionStats::default(),
            options,
        })
    }

    pub fn options(&self) -> &SessionOptions {
        &self.options
    }

    pub fn clock(&self) -> AudioClock {
        self.clock
    }

    pub fn filter(&self) -> &MdfFilter {
        &self.mdf
    }

    pub fn stats(&self) -> SessionStats {
        self.stats
    }

    pub fn net_state(&self) -> &NetState {
        &self.net_state
    }

    /// Algorithmic delay of the output relative to the microphone input.
    pub fn latency_samples(&self) -> usize {
        WINDOW - HOP
    }

    pub fn process_frame(&mut self, far: &[f64], mic: &[f64]) -> Result<FrameResult> {
        if self.poisoned {
            return Err(AecError::Poisoned);
        }
        if far.len() != HOP || mic.len() != HOP {
            return Err(AecError::Config(format!(
                "frames must be {HOP} samples, got far={} mic={}",
                far.len(),
                mic.len()
            )));
        }
        let start = Instant::now();
        let filtered = match self.mdf.process(far, mic) {
            Ok(f) => f,
            Err(e) => {
                if matches!(e, AecError::Stream(_)) {
                    self.poisoned = true;
                }
                return Err(e);
            }
        };
        let err = filtered.error;
        let idx = self.frame_index;
        let err_spec = self.fft.forward(&analysis_frame(&self.prev_err, &err, idx));

        let (gains, vad_near, vad_far) = match (&self.weights, self.options.use_network) {
            (Some(weights), true) => {
                let far_spec = self.fft.forward(&analysis_frame(&self.prev_far, far, idx));
                let far_features = self.far_feat.extract(&far_spec, far);
                let near_features = self.near_feat.extract(&err_spec, &err);
                let out = weights.forward(
                    &mut self.net_state,
                    &far_features.to_f32(),
                    &near_features.to_f32(),
                )?;
                let raw = BandGains {
                    g: out.band_gains.map(f64::from),
                    frame_index: idx,
                };
                let smoothed = if self.options.smooth_gains {
                    self.smoother.smooth(&raw)
                } else {
                    raw
                };
                let passthrough = self.gate.update(
                    out.vad_far < self.options.gate_threshold,
                    self.options.gate_enter_frames,
                    self.options.gate_exit_frames,
                );
                let gains = if passthrough {
                    BandGains::uniform(1.0, idx)
                } else if self.options.hard_gate {
                    if out.vad_far < 0.5 {
                        BandGains::uniform(1.0, idx)
                    } else if out.vad_near < 0.5 {
                        BandGains::uniform(0.0, idx)
                    } else {
                        smoothed
                    }
                } else {
                    smoothed
                };
                (gains, out.vad_near, out.vad_far)
            }
            _ => (BandGains::uniform(1.0, idx), 0.0, 0.0),
        };

        let bin_gains = interpolate_gains(&gains, &self.layout);
        let shaped = apply_gains(&err_spec, &bin_gains);
        self.fft.inverse_full(&shaped, &mut self.synth);
        let w = window();
        let mut out_frame = vec![0.0; HOP];
        for i in 0..HOP {
            out_frame[i] = self.ola_tail[i] + self.synth[i] * w[i];
            self.ola_tail[i] = self.synth[HOP + i] * w[HOP + i];
        }

        let e_mic: f64 = self.prev_mic.iter().map(|x| x * x).sum();
        let e_out: f64 = out_frame.iter().map(|x| x * x).sum();
        let erle_instant = 10.0 * ((e_mic + EPS) / (e_out + EPS)).log10();

        self.prev_far.copy_from_slice(far);
        self.prev_err.copy_from_slice(&err);
        self.prev_mic.copy_from_slice(mic);
        self.frame_index += 1;

        let proc_micros = start.elapsed().as_secs_f64() * 1e6;
        self.stats.frames += 1;
        self.stats.rt_sum_micros += proc_micros;
        self.stats.rt_max_micros = self.stats.rt_max_micros.max(proc_micros);

        Ok(FrameResult {
            out_frame,
            vad_near,
            vad_far,
            band_gains: gains,
            erle_instant,
            proc_micros,
        })
    }
}

/// Per-frame record for gain dumps.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameTrace {
    pub frame: usize,
    pub gains: [f64; NUM_BANDS],
    pub vad_near: f32,
    pub vad_far: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub frames: usize,
    pub samples: usize,
    /// Mean frame ERLE over far-active frames, latency compensated.
    pub mean_erle_db: f64,
    pub erle_frames: usize,
    pub rt: RtProfile,
    pub warnings: Vec<String>,
    pub trace: Vec<FrameTrace>,
}

/// Run a whole far/mic pair through a fresh session. The output is
/// latency-compensated so it lines up sample-for-sample with `mic`, and
/// has the length of the longer input (the shorter one is zero-padded).
pub fn process_signals(
    far: &[f64],
    mic: &[f64],
    weights: Option<Arc<NetworkWeights>>,
    options: &SessionOptions,
    collect_trace: bool,
) -> Result<(Vec<f64>, RunReport)> {
    let mut warnings = Vec::new();
    let len = far.len().max(mic.len());
    if far.len() != mic.len() {
        let (short, n) = if far.len() < mic.len() { ("far-end", far.len()) } else { ("microphone", mic.len()) };
        warnings.push(format!(
            "{short} input is shorter ({n} vs {len} samples); zero-padded"
        ));
    }
    let mut session = AecSession::new(weights, options.clone())?;
    let latency = session.latency_samples();
    let hops = (len + latency).div_ceil(HOP);
    let padded = |x: &[f64], i: usize| -> Vec<f64> {
        (i * HOP..(i + 1) * HOP).map(|n| x.get(n).copied().unwrap_or(0.0)).collect()
    };
    let mut out = Vec::with_capacity(hops * HOP);
    let mut micros = Vec::with_capacity(hops);
    let mut trace = Vec::new();
    for i in 0..hops {
        let r = session.process_frame(&padded(far, i), &padded(mic, i))?;
        out.extend_from_slice(&r.out_frame);
        micros.push(r.proc_micros);
        if collect_trace {
            trace.push(FrameTrace {
                frame: i,
                gains: r.band_gains.g,
                vad_near: r.vad_near,
                vad_far: r.vad_far,
            });
        }
    }
    let out: Vec<f64> = out.into_iter().skip(latency).take(len).collect();

    let mic_full: Vec<f64> = (0..len).map(|n| mic.get(n).copied().unwrap_or(0.0)).collect();
    let far_mask: Vec<bool> = (0..len.div_ceil(HOP))
        .map(|i| {
            let s = &far[(i * HOP).min(far.len())..((i + 1) * HOP).min(far.len())];
            power_dbfs(s) > FAR_ACTIVE_DBFS
        })
        .collect();
    let erle = metrics::erle(&mic_full, &out, HOP, Some(&far_mask))?;
    Ok((
        out,
        RunReport {
            frames: hops,
            samples: len,
            mean_erle_db: erle.mean_db,
            erle_frames: erle.frames_used,
            rt: metrics::rt_profile(&micros),
            warnings,
            trace,
        },
    ))
}

/// File wrapper around [`process_signals`].
pub fn process_files(
    far_path: &Path,
    mic_path: &Path,
    out_path: &Path,
    weights: Option<Arc<NetworkWeights>>,
    options: &SessionOptions,
    collect_trace: bool,
) -> Result<RunReport> {
    let far = wav::read_wav(far_path)?;
    let mic = wav::read_wav(mic_path)?;
    let (out, report) = process_signals(&far, &mic, weights, options, collect_trace)?;
    wav::write_wav(out_path, &out)?;
    Ok(report)
}

/// Load and validate a `RESW` model file.
pub fn load_model(path: &Path) -> Result<NetworkWeights> {
    let bytes = std::fs::read(path).map_err(|e| AecError::io(path, e))?;
    crate::nn::load_weights(&bytes).map_err(|e| match e {
        AecError::ModelFormat(m) => AecError::ModelFormat(format!("{}: {m}", path.display())),
        other => other,
    })
}
