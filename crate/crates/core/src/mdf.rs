//! Multidelay block frequency-domain NLMS echo canceller.
//!
//! The far-end history is split into `taps / block_size` partitions, each
//! filtered with its own frequency-domain weight block using overlap-save
//! transforms of size `2 * block_size`. Adaptation is the block form of
//! the normalised LMS update with the gradient constrained to the causal
//! half, so the filter realises a true linear convolution of `taps` taps.
//!
//! The learning rate is set per bin and per frame from the ratio of the
//! estimated residual echo to the output power, where the residual echo is
//! predicted from the echo estimate through a leakage coefficient that is
//! itself learned by recursive regression. During double-talk the output
//! power rises while the echo estimate does not, so the rate collapses and
//! the weights are protected.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{AecError, Result};

const SNAPSHOT_MAGIC: &[u8; 4] = b"MDFS";
const SNAPSHOT_VERSION: u32 = 1;

/// Per-bin power averaging used to centre the powers before regression.
const SPECTRUM_AVERAGE: f64 = 0.05;
/// Far-end block mean square above which a block counts as active (-70 dBFS).
const FAR_ACTIVE_MS: f64 = 1e-7;
/// Relative floor on the normalisation power.
const RELATIVE_FLOOR: f64 = 1e-10;
/// Floor on |E|^2 in the learning-rate ratio.
const ERROR_FLOOR: f64 = 1e-10;
const MIN_LEAK: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// Recursively smoothed per-bin far-end power (the usual MDF form),
    /// never below the power currently held in the partitions so a speech
    /// onset after a pause cannot produce an oversized step.
    PerBin,
    /// The time-domain sum of squares over the whole filter span, shared by
    /// every bin. Makes the filter equivalent to block time-domain NLMS.
    /// Meant for checking against a time-domain reference: with strongly
    /// coloured input such as speech it needs a much smaller `mu_max`.
    Broadband,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterConfig {
    /// Filter length in samples.
    pub taps: usize,
    pub block_size: usize,
    pub mu_max: f64,
    /// Base learning rate of the leakage regression.
    pub beta0: f64,
    /// Weight of the previous value in the per-bin power recursion.
    pub power_smoothing: f64,
    /// Absolute regulariser added to the normalisation power.
    pub regularization: f64,
    pub normalization: Normalization,
    /// Smallest leakage the regression may report. Without a floor a run
    /// of negatively correlated frames (double-talk onsets and offsets) can
    /// park the estimate at zero and stall adaptation.
    pub min_leak: f64,
    /// Active far-end blocks adapted at `mu_max` before the leakage
    /// controller takes over (it cannot start from all-zero weights).
    pub warmup_blocks: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            taps: 1600,
            block_size: crate::dsp::HOP,
            mu_max: 0.5,
            beta0: 0.008,
            power_smoothing: 0.9,
            regularization: 1e-5,
            normalization: Normalization::PerBin,
            min_leak: MIN_LEAK,
            warmup_blocks: 40,
        }
    }
}

impl FilterConfig {
    pub fn num_blocks(&self) -> usize {
        self.taps / self.block_size
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(AecError::Config(m));
        if self.block_size == 0 || self.taps == 0 {
            return fail("taps and block_size must be positive".into());
        }
        if !self.taps.is_multiple_of(self.block_size) {
            return fail(format!(
                "taps ({}) must be a multiple of block_size ({})",
                self.taps, self.block_size
            ));
        }
        if !(self.mu_max > 0.0 && self.mu_max <= 1.0) {
            return fail(format!("mu_max must lie in (0, 1], got {}", self.mu_max));
        }
        if !(self.beta0 > 0.0 && self.beta0 < 1.0) {
            return fail(format!("beta0 must lie in (0, 1), got {}", self.beta0));
        }
        if !(0.0..1.0).contains(&self.power_smoothing) {
            return fail("power_smoothing must lie in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.min_leak) {
            return fail(format!("min_leak must lie in [0, 1), got {}", self.min_leak));
        }
        if !(self.regularization > 0.0) {
            return fail("regularization must be positive".into());
        }
        Ok(())
    }
}

/// Per-frame learning-rate choice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepControl {
    /// Leakage-driven variable rate (after warm-up).
    Adaptive,
    /// The same rate in every bin.
    Fixed(f64),
    /// No adaptation.
    Frozen,
}

/// Learning rate from the leakage estimate:
/// `min(eta * |Y|^2 / |E|^2, mu_max)` per bin, `|E|^2` floored.
pub fn optimal_step(eta: f64, p_y: &[f64], p_e: &[f64], mu_max: f64, out: &mut [f64]) {
    for ((o, &y), &e) in out.iter_mut().zip(p_y).zip(p_e) {
        *o = (eta * y / e.max(ERROR_FLOOR)).min(mu_max);
    }
}

/// Recursive regression of output power on echo-estimate power.
///
/// Both powers are centred on slow per-bin averages before forming the
/// correlations, which makes `eta` the regression slope: near-end speech
/// is uncorrelated with the echo estimate and does not inflate it.
#[derive(Clone, Debug, PartialEq)]
pub struct LeakageEstimator {
    r_ey: Vec<f64>,
    r_yy: Vec<f64>,
    mean_y: Vec<f64>,
    mean_e: Vec<f64>,
    beta0: f64,
    min_leak: f64,
    eta: f64,
    sigma2_y: f64,
    sigma2_e: f64,
    beta: f64,
}

impl LeakageEstimator {
    pub fn new(bins: usize, beta0: f64, min_leak: f64) -> Self {
        LeakageEstimator {
            beta0,
            min_leak,
            r_ey: vec![0.0; bins],
            r_yy: vec![0.0; bins],
            mean_y: vec![0.0; bins],
            mean_e: vec![0.0; bins],
            eta: 1.0,
            sigma2_y: 0.0,
            sigma2_e: 0.0,
            beta: 0.0,
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sigma2_y(&self) -> f64 {
        self.sigma2_y
    }

    pub fn sigma2_e(&self) -> f64 {
        self.sigma2_e
    }

    pub fn r_ey(&self) -> &[f64] {
        &self.r_ey
    }

    pub fn r_yy(&self) -> &[f64] {
        &self.r_yy
    }

    /// Fold one frame of echo-estimate power `p_y` and output power `p_e`
    /// into the correlations. `sigma2_y` / `sigma2_e` are the frame's total
    /// powers and set the averaging rate; with no echo estimate the state
    /// is left untouched.
    pub fn update(&mut self, p_y: &[f64], p_e: &[f64], sigma2_y: f64, sigma2_e: f64) {
        self.sigma2_y = sigma2_y;
        self.sigma2_e = sigma2_e;
        if !(sigma2_y > 0.0) {
            self.beta = 0.0;
            return;
        }
        let ratio = if sigma2_e > 0.0 { sigma2_y / sigma2_e } else { 1.0 };
        let beta = self.beta0 * ratio.min(1.0);
        self.beta = beta;
        for k in 0..self.r_ey.len() {
            let dy = p_y[k] - self.mean_y[k];
            let de = p_e[k] - self.mean_e[k];
            self.r_ey[k] = (1.0 - beta) * self.r_ey[k] + beta * dy * de;
            self.r_yy[k] = (1.0 - beta) * self.r_yy[k] + beta * dy * dy;
            self.mean_y[k] += SPECTRUM_AVERAGE * (p_y[k] - self.mean_y[k]);
            self.mean_e[k] += SPECTRUM_AVERAGE * (p_e[k] - self.mean_e[k]);
        }
        let sum_yy: f64 = self.r_yy.iter().sum();
        if sum_yy > 0.0 {
            let sum_ey: f64 = self.r_ey.iter().sum();
            let eta = (sum_ey / sum_yy).clamp(self.min_leak, 1.0);
            // keep the stored statistics consistent with the clamped value
            if sum_ey != eta * sum_yy {
                for (ey, yy) in self.r_ey.iter_mut().zip(&self.r_yy) {
                    *ey = eta * yy;
                }
            }
            self.eta = eta;
        }
    }

    pub fn learning_rates(&self, p_y: &[f64], p_e: &[f64], mu_max: f64, out: &mut [f64]) {
        optimal_step(self.eta, p_y, p_e, mu_max, out);
    }
}

/// Result of one block of filtering.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutput {
    /// e(n) = d(n) - y(n)
    pub error: Vec<f64>,
    /// y(n), the echo estimate.
    pub echo_estimate: Vec<f64>,
    /// Learning rate used for each of the `block_size + 1` bins.
    pub mu: Vec<f64>,
}

pub struct MdfFilter {
    config: FilterConfig,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    /// Weight spectra, one per partition (`2 * block_size` bins each).
    weights: Vec<Vec<Complex64>>,
    /// Far-end spectra of the partitions, newest first.
    far_spectra: Vec<Vec<Complex64>>,
    prev_far: Vec<f64>,
    /// Last `taps` far-end samples, oldest first.
    far_history: Vec<f64>,
    power: Vec<f64>,
    power_frames: u64,
    leak: LeakageEstimator,
    adapted: bool,
    warm_blocks: usize,
    frames: u64,
    // work buffers
    acc: Vec<Complex64>,
    err_spec: Vec<Complex64>,
    echo_spec: Vec<Complex64>,
    step: Vec<f64>,
}

impl fmt::Debug for MdfFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MdfFilter")
            .field("config", &self.config)
            .field("frames", &self.frames)
            .field("adapted", &self.adapted)
            .field("eta", &self.leak.eta)
            .finish()
    }
}

impl Clone for MdfFilter {
    fn clone(&self) -> Self {
        MdfFilter {
            config: self.config.clone(),
            fft: Arc::clone(&self.fft),
            ifft: Arc::clone(&self.ifft),
            scratch: self.scratch.clone(),
            weights: self.weights.clone(),
            far_spectra: self.far_spectra.clone(),
            prev_far: self.prev_far.clone(),
            far_history: self.far_history.clone(),
            power: self.power.clone(),
            power_frames: self.power_frames,
            leak: self.leak.clone(),
            adapted: self.adapted,
            warm_blocks: self.warm_blocks,
            frames: self.frames,
            acc: self.acc.clone(),
            err_spec: self.err_spec.clone(),
            echo_spec: self.echo_spec.clone(),
            step: self.step.clone(),
        }
    }
}

fn zeros(n: usize) -> Vec<Complex64> {
    vec![Complex64::new(0.0, 0.0); n]
}

impl MdfFilter {
    pub fn new(config: FilterConfig) -> Result<Self> {
        config.validate()?;
        let l = config.block_size;
        let m = 2 * l;
        let k = config.num_blocks();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        let ifft = planner.plan_fft_inverse(m);
        let scratch = zeros(fft.get_inplace_scratch_len().max(ifft.get_inplace_scratch_len()));
        Ok(MdfFilter {
            fft,
            ifft,
            scratch,
            weights: vec![zeros(m); k],
            far_spectra: vec![zeros(m); k],
            prev_far: vec![0.0; l],
            far_history: vec![0.0; config.taps],
            power: vec![0.0; m],
            power_frames: 0,
            leak: LeakageEstimator::new(l + 1, config.beta0, config.min_leak),
            adapted: false,
            warm_blocks: 0,
            frames: 0,
            acc: zeros(m),
            err_spec: zeros(m),
            echo_spec: zeros(m),
            step: vec![0.0; m],
            config,
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn leakage(&self) -> &LeakageEstimator {
        &self.leak
    }

    pub fn is_adapted(&self) -> bool {
        self.adapted
    }

    pub fn frames_processed(&self) -> u64 {
        self.frames
    }

    /// Filter one block with the leakage-driven learning rate.
    pub fn process(&mut self, far: &[f64], mic: &[f64]) -> Result<FilterOutput> {
        self.process_with(far, mic, StepControl::Adaptive)
    }

    pub fn process_with(&mut self, far: &[f64], mic: &[f64], control: StepControl) -> Result<FilterOutput> {
        let l = self.config.block_size;
        let m = 2 * l;
        if far.len() != l || mic.len() != l {
            return Err(AecError::Config(format!(
                "expected blocks of {l} samples, got far={} mic={}",
                far.len(),
                mic.len()
            )));
        }
        if far.iter().chain(mic).any(|x| !x.is_finite()) {
            return Err(AecError::Stream(format!(
                "non-finite sample in block {}",
                self.frames
            )));
        }

        // newest far spectrum goes to slot 0
        self.far_spectra.rotate_right(1);
        {
            let x0 = &mut self.far_spectra[0];
            for (i, c) in x0.iter_mut().enumerate() {
                let v = if i < l { self.prev_far[i] } else { far[i - l] };
                *c = Complex64::new(v, 0.0);
            }
            self.fft.process_with_scratch(x0, &mut self.scratch);
        }
        self.prev_far.copy_from_slice(far);
        self.far_history.rotate_left(l);
        let n = self.far_history.len();
        self.far_history[n - l..].copy_from_slice(far);

        // echo estimate: overlap-save, keep the last l outputs
        self.acc.fill(Complex64::new(0.0, 0.0));
        for (w, x) in self.weights.iter().zip(&self.far_spectra) {
            for ((a, wk), xk) in self.acc.iter_mut().zip(w).zip(x) {
                *a += wk * xk;
            }
        }
        self.ifft.process_with_scratch(&mut self.acc, &mut self.scratch);
        let inv_m = 1.0 / m as f64;
        let echo_estimate: Vec<f64> = self.acc[l..].iter().map(|c| c.re * inv_m).collect();
        let error: Vec<f64> = mic.iter().zip(&echo_estimate).map(|(d, y)| d - y).collect();

        // frequency-domain counterparts of e and y
        for i in 0..m {
            let (e, y) = if i < l { (0.0, 0.0) } else { (error[i - l], echo_estimate[i - l]) };
            self.err_spec[i] = Complex64::new(e, 0.0);
            self.echo_spec[i] = Complex64::new(y, 0.0);
        }
        self.fft.process_with_scratch(&mut self.err_spec, &mut self.scratch);
        self.fft.process_with_scratch(&mut self.echo_spec, &mut self.scratch);
        let p_e: Vec<f64> = self.err_spec[..=l].iter().map(|c| c.norm_sqr()).collect();
        let p_y: Vec<f64> = self.echo_spec[..=l].iter().map(|c| c.norm_sqr()).collect();
        let sigma2_y: f64 = echo_estimate.iter().map(|y| y * y).sum();
        let sigma2_e: f64 = error.iter().map(|e| e * e).sum();

        self.update_far_power();

        let far_active = far.iter().map(|x| x * x).sum::<f64>() / l as f64 > FAR_ACTIVE_MS;
        let mut mu = vec![0.0; l + 1];
        match control {
            StepControl::Frozen => {}
            StepControl::Fixed(v) => mu.fill(v),
            StepControl::Adaptive if !self.adapted => {
                mu.fill(self.config.mu_max);
                if far_active {
                    self.warm_blocks += 1;
                    if self.warm_blocks >= self.config.warmup_blocks {
                        self.adapted = true;
                    }
                }
            }
            StepControl::Adaptive => {
                self.leak
                    .learning_rates(&p_y, &p_e, self.config.mu_max, &mut mu);
            }
        }

        // the rate above used statistics from previous frames only
        self.leak.update(&p_y, &p_e, sigma2_y, sigma2_e);

        if mu.iter().any(|&v| v > 0.0) {
            self.adapt(&mu);
        }
        self.frames += 1;

        Ok(FilterOutput {
            error,
            echo_estimate,
            mu,
        })
    }

    fn update_far_power(&mut self) {
        let m = 2 * self.config.block_size;
        let a = self.config.power_smoothing;
        self.power_frames += 1;
        for k in 0..m {
            // each partition spectrum spans two blocks, hence the half
            let inst = self.partition_power(k);
            self.power[k] = a * self.power[k] + (1.0 - a) * inst;
        }
    }

    fn partition_power(&self, k: usize) -> f64 {
        0.5 * self.far_spectra.iter().map(|x| x[k].norm_sqr()).sum::<f64>()
    }

    /// Normalisation denominator per bin, floored.
    fn normalizer(&self, k: usize) -> f64 {
        let raw = match self.config.normalization {
            Normalization::Broadband => self.far_history.iter().map(|x| x * x).sum::<f64>(),
            Normalization::PerBin => {
                // bias-corrected recursive average
                let a = self.config.power_smoothing;
                let corr = 1.0 - a.powi(self.power_frames.min(i32::MAX as u64) as i32);
                let smoothed = if corr > 0.0 { self.power[k] / corr } else { self.power[k] };
                smoothed.max(self.partition_power(k))
            }
        };
        raw + RELATIVE_FLOOR * raw + self.config.regularization
    }

    fn adapt(&mut self, mu: &[f64]) {
        let l = self.config.block_size;
        let m = 2 * l;
        let broadband = match self.config.normalization {
            Normalization::Broadband => Some(self.normalizer(0)),
            Normalization::PerBin => None,
        };
        for k in 0..=l {
            let p = broadband.unwrap_or_else(|| self.normalizer(k));
            self.step[k] = mu[k] / p;
        }
        for k in l + 1..m {
            self.step[k] = self.step[m - k];
        }
        let inv_m = 1.0 / m as f64;
        for (w, x) in self.weights.iter_mut().zip(&self.far_spectra) {
            for (k, g) in self.acc.iter_mut().enumerate() {
                *g = x[k].conj() * self.err_spec[k] * self.step[k];
            }
            self.ifft.process_with_scratch(&mut self.acc, &mut self.scratch);
            // gradient constraint: keep only the causal half
            for (i, g) in self.acc.iter_mut().enumerate() {
                if i < l {
                    *g *= inv_m;
                } else {
                    *g = Complex64::new(0.0, 0.0);
                }
            }
            self.fft.process_with_scratch(&mut self.acc, &mut self.scratch);
            for (wk, g) in w.iter_mut().zip(&self.acc) {
                *wk += g;
            }
        }
    }

    /// Current weights as a `taps`-long impulse response.
    pub fn time_domain_weights(&self) -> Vec<f64> {
        let l = self.config.block_size;
        let m = 2 * l;
        let mut buf = zeros(m);
        let mut scratch = zeros(self.scratch.len());
        let mut out = Vec::with_capacity(self.config.taps);
        for w in &self.weights {
            buf.copy_from_slice(w);
            self.ifft.process_with_scratch(&mut buf, &mut scratch);
            out.extend(buf[..l].iter().map(|c| c.re / m as f64));
        }
        out
    }

    /// Load a `taps`-long impulse response into the weight blocks.
    pub fn set_time_domain_weights(&mut self, taps: &[f64]) -> Result<()> {
        if taps.len() > self.config.taps {
            return Err(AecError::Config(format!(
                "{} taps exceed filter length {}",
                taps.len(),
                self.config.taps
            )));
        }
        let l = self.config.block_size;
        for (j, w) in self.weights.iter_mut().enumerate() {
            for (i, c) in w.iter_mut().enumerate() {
                let idx = j * l + i;
                let v = if i < l { taps.get(idx).copied().unwrap_or(0.0) } else { 0.0 };
                *c = Complex64::new(v, 0.0);
            }
            self.fft.process_with_scratch(w, &mut self.scratch);
        }
        Ok(())
    }

    pub fn weights_finite(&self) -> bool {
        self.weights
            .iter()
            .flatten()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Versioned little-endian dump of the complete adaptive state.
    pub fn snapshot(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SNAPSHOT_MAGIC);
        put_u32(&mut out, SNAPSHOT_VERSION);
        put_u32(&mut out, self.config.taps as u32);
        put_u32(&mut out, self.config.block_size as u32);
        out.push(self.adapted as u8);
        put_u32(&mut out, self.warm_blocks as u32);
        out.extend_from_slice(&self.frames.to_le_bytes());
        out.extend_from_slice(&self.power_frames.to_le_bytes());
        put_f64s(&mut out, &self.prev_far);
        put_f64s(&mut out, &self.far_history);
        for block in self.weights.iter().chain(&self.far_spectra) {
            for c in block {
                put_f64s(&mut out, &[c.re, c.im]);
            }
        }
        put_f64s(&mut out, &self.power);
        let leak = &self.leak;
        for v in [&leak.r_ey, &leak.r_yy, &leak.mean_y, &leak.mean_e] {
            put_f64s(&mut out, v);
        }
        put_f64s(&mut out, &[leak.eta, leak.sigma2_y, leak.sigma2_e, leak.beta]);
        out
    }

    pub fn restore(config: FilterConfig, bytes: &[u8]) -> Result<Self> {
        let mut f = MdfFilter::new(config)?;
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != SNAPSHOT_MAGIC {
            return Err(snapshot_err("bad magic"));
        }
        if r.u32()? != SNAPSHOT_VERSION {
            return Err(snapshot_err("unsupported version"));
        }
        let (taps, block) = (r.u32()? as usize, r.u32()? as usize);
        if taps != f.config.taps || block != f.config.block_size {
            return Err(snapshot_err("geometry does not match configuration"));
        }
        f.adapted = r.take(1)?[0] != 0;
        f.warm_blocks = r.u32()? as usize;
        f.frames = r.u64()?;
        f.power_frames = r.u64()?;
        r.f64s(&mut f.prev_far)?;
        r.f64s(&mut f.far_history)?;
        for block in f.weights.iter_mut().chain(f.far_spectra.iter_mut()) {
            for c in block.iter_mut() {
                let mut pair = [0.0; 2];
                r.f64s(&mut pair)?;
                *c = Complex64::new(pair[0], pair[1]);
            }
        }
        r.f64s(&mut f.power)?;
        let leak = &mut f.leak;
        for v in [&mut leak.r_ey, &mut leak.r_yy, &mut leak.mean_y, &mut leak.mean_e] {
            r.f64s(v)?;
        }
        let mut tail = [0.0; 4];
        r.f64s(&mut tail)?;
        [leak.eta, leak.sigma2_y, leak.sigma2_e, leak.beta] = tail;
        if r.pos != bytes.len() {
            return Err(snapshot_err("trailing bytes"));
        }
        Ok(f)
    }
}

fn snapshot_err(msg: &str) -> AecError {
    AecError::Config(format!("filter snapshot: {msg}"))
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| snapshot_err("truncated"))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, out: &mut [f64]) -> Result<()> {
        for v in out {
            *v = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
        }
        Ok(())
    }
}
