//! Echo-path simulation: room impulse responses, loudspeaker nonlinearity
//! and microphone mixing.

use std::path::PathBuf;

use rand::Rng;
use rustfft::{num_complex::Complex64, FftPlanner};

use crate::dsp::{wav, SAMPLE_RATE};
use crate::{AecError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum RirSpec {
    /// Exponentially decaying noise tail behind a unit direct path.
    Synthetic {
        rt60: f64,
        taps: usize,
        delay: usize,
        seed: u64,
    },
    File(PathBuf),
}

impl RirSpec {
    pub fn random(rt60: (f64, f64), max_taps: usize, rng: &mut impl Rng) -> Self {
        let rt60 = rng.random_range(rt60.0..=rt60.1);
        let taps = ((rt60 * SAMPLE_RATE as f64) as usize).clamp(16, max_taps.max(16));
        RirSpec::Synthetic {
            rt60,
            taps,
            delay: rng.random_range(0..=(taps / 20).min(40)),
            seed: rng.random(),
        }
    }

    pub fn realize(&self) -> Result<Vec<f64>> {
        match self {
            RirSpec::Synthetic { rt60, taps, delay, seed } => {
                Ok(synthetic_rir(*rt60, *taps, *delay, *seed))
            }
            RirSpec::File(p) => wav::read_wav(p),
        }
    }
}

/// Build a synthetic response with `taps` coefficients, the direct path at
/// `delay` with gain one and a decaying tail reaching -60 dB after `rt60`.
pub fn synthetic_rir(rt60: f64, taps: usize, delay: usize, seed: u64) -> Vec<f64> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let taps = taps.max(delay + 1);
    let decay = 6.9078 / (rt60.max(1e-3) * SAMPLE_RATE as f64);
    let mut h = vec![0.0; taps];
    h[delay] = 1.0;
    for (n, v) in h.iter_mut().enumerate().skip(delay + 1) {
        let t = (n - delay) as f64;
        *v = 0.35 * rng.random_range(-1.0..1.0) * (-decay * t).exp();
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NonlinearitySpec {
    None,
    HardClip { drive: f64 },
    Tanh { drive: f64 },
}

impl NonlinearitySpec {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            NonlinearitySpec::None => x,
            NonlinearitySpec::HardClip { drive } => (drive * x).clamp(-1.0, 1.0) / drive,
            NonlinearitySpec::Tanh { drive } => (drive * x).tanh() / drive,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "none" {
            return Ok(NonlinearitySpec::None);
        }
        let (kind, drive) = s
            .split_once(':')
            .ok_or_else(|| AecError::Config(format!("bad nonlinearity '{s}', expected none, tanh:D or clip:D")))?;
        let drive: f64 = drive
            .parse()
            .map_err(|_| AecError::Config(format!("bad drive in nonlinearity '{s}'")))?;
        if !(drive > 0.0 && drive.is_finite()) {
            return Err(AecError::Config(format!("drive must be positive in '{s}'")));
        }
        match kind {
            "tanh" => Ok(NonlinearitySpec::Tanh { drive }),
            "clip" => Ok(NonlinearitySpec::HardClip { drive }),
            _ => Err(AecError::Config(format!("unknown nonlinearity '{kind}'"))),
        }
    }
}

/// Linear convolution via FFT, output length `x.len()` (causal, truncated).
pub fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; x.len()];
    }
    let n = (x.len() + h.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(n, Complex64::default());
    let mut b: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(n, Complex64::default());
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    a.iter().take(x.len()).map(|c| c.re / n as f64).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneMix {
    pub mic: Vec<f64>,
    pub echo: Vec<f64>,
    pub near: Vec<f64>,
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// Mix `near` with the echo of `far` so that near/echo power equals
/// `snr_db`. If either signal is silent the echo is left unscaled.
pub fn synth_scene(
    far: &[f64],
    near: &[f64],
    rir: &[f64],
    nl: NonlinearitySpec,
    snr_db: f64,
) -> Result<SceneMix> {
    if rir.is_empty() || rir.iter().all(|&v| v == 0.0) {
        return Err(AecError::Config("room impulse response is all zeros".into()));
    }
    if far.len() != near.len() {
        return Err(AecError::Config(format!(
            "far and near lengths differ ({} vs {})",
            far.len(),
            near.len()
        )));
    }
    let distorted: Vec<f64> = far.iter().map(|&x| nl.apply(x)).collect();
    let mut echo = fft_convolve(&distorted, rir);
    let pe = power(&echo);
    let pn = power(near);
    if pe > 0.0 && pn > 0.0 {
        let g = (pn / (pe * 10f64.powf(snr_db / 10.0))).sqrt();
        for v in &mut echo {
            *v *= g;
        }
    }
    let mic = echo.iter().zip(near).map(|(e, s)| e + s).collect();
    Ok(SceneMix {
        mic,
        echo,
        near: near.to_vec(),
    })
}
