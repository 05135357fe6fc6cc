#![allow(dead_code)]

use aec_core::datagen::{synth_speech, synthetic_rir, TalkerProfile};
use aec_core::mdf::{FilterConfig, MdfFilter, StepControl};
use aec_core::HOP;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn white(n: usize, seed: u64, amp: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| amp * rng.random_range(-1.0..1.0)).collect()
}

pub fn speech(n: usize, seed: u64) -> Vec<f64> {
    talk(n, seed, 0.2)
}

/// Speech without long pauses.
pub fn continuous_speech(n: usize, seed: u64) -> Vec<f64> {
    talk(n, seed, 0.0)
}

fn talk(n: usize, seed: u64, pause_rate: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = TalkerProfile { base_f0: 140.0, level_dbfs: -24.0, formant_scale: 1.0, pause_rate };
    synth_speech(n, &p, &mut rng)
}

/// Direct causal convolution, output truncated to `x.len()`.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| h.iter().enumerate().take(n + 1).map(|(k, hk)| hk * x[n - k]).sum())
        .collect()
}

pub fn rir_100ms(seed: u64) -> Vec<f64> {
    synthetic_rir(0.1, 1600, 12, seed)
}

pub fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

pub fn ratio_db(num: &[f64], den: &[f64]) -> f64 {
    10.0 * ((power(num) + 1e-20) / (power(den) + 1e-20)).log10()
}

/// Run a filter over whole signals one block at a time.
pub fn run_filter(
    filter: &mut MdfFilter,
    far: &[f64],
    mic: &[f64],
    mut control: impl FnMut(usize) -> StepControl,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(mic.len());
    for (i, (f, d)) in far.chunks(HOP).zip(mic.chunks(HOP)).enumerate() {
        out.extend(filter.process_with(f, d, control(i)).unwrap().error);
    }
    out
}

pub fn adaptive(far: &[f64], mic: &[f64], config: FilterConfig) -> Vec<f64> {
    let mut f = MdfFilter::new(config).unwrap();
    run_filter(&mut f, far, mic, |_| StepControl::Adaptive)
}

/// Time-domain block NLMS: the echo estimate of each block uses the
/// weights held at the start of the block, then every tap moves by
/// `mu / P` times the block's error/far-end cross-correlation, with `P` the
/// far-end energy over the filter span plus `delta`.
pub fn block_nlms_oracle(far: &[f64], mic: &[f64], taps: usize, block: usize, mus: &[f64], delta: f64) -> Vec<f64> {
    let x = |n: isize| if n < 0 { 0.0 } else { far[n as usize] };
    let mut w = vec![0.0; taps];
    let mut out = vec![0.0; mic.len()];
    for (b, &mu) in mus.iter().enumerate() {
        let start = b * block;
        let mut e = vec![0.0; block];
        for i in 0..block {
            let n = (start + i) as isize;
            let y: f64 = (0..taps).map(|k| w[k] * x(n - k as isize)).sum();
            e[i] = mic[start + i] - y;
            out[start + i] = e[i];
        }
        let end = (start + block) as isize;
        let raw: f64 = (end - taps as isize..end).map(|n| x(n) * x(n)).sum();
        let p = raw + 1e-10 * raw + delta;
        for k in 0..taps {
            let g: f64 = (0..block).map(|i| e[i] * x((start + i) as isize - k as isize)).sum();
            w[k] += mu / p * g;
        }
    }
    out
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct EquivalenceRun {
    pub relative_rms: f64,
}

/// Drive the broadband-normalised filter and the time-domain oracle with
/// the same random per-block rates and compare their error signals.
pub fn equivalence_run(seed: u64, seconds: f64) -> EquivalenceRun {
    use aec_core::mdf::Normalization;
    let n = (seconds * 16000.0) as usize;
    let mut rng = seeded(seed);
    let far: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mic: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mus: Vec<f64> = (0..n / HOP).map(|_| rng.random_range(0.0..0.5)).collect();
    let config = FilterConfig { normalization: Normalization::Broadband, ..FilterConfig::default() };
    let delta = config.regularization;
    let taps = config.taps;
    let mut f = MdfFilter::new(config).unwrap();
    let got = run_filter(&mut f, &far, &mic, |i| StepControl::Fixed(mus[i]));
    let want = block_nlms_oracle(&far, &mic, taps, HOP, &mus, delta);
    let diff: Vec<f64> = got.iter().zip(&want).map(|(a, b)| a - b).collect();
    EquivalenceRun { relative_rms: (power(&diff) / power(&want)).sqrt() }
}

pub struct DoubleTalkRun {
    pub control_db: f64,
    pub injected_db: f64,
    pub fixed_db: f64,
}

impl DoubleTalkRun {
    pub fn degradation_db(&self) -> f64 {
        self.control_db - self.injected_db
    }

    pub fn advantage_db(&self) -> f64 {
        self.injected_db - self.fixed_db
    }
}

/// 10 s of white-noise far end through a 100 ms room, microphone noise
/// 30 dB below the echo, and 2 s of continuous near speech at 0 dB
/// injected at 4 s. Reports mean frame ERLE over the 0.5 s after the
/// injection for the untouched control run, the injected run and the
/// injected run with the rate fixed at its maximum.
pub fn double_talk_run(seed: u64) -> DoubleTalkRun {
    let n = 10 * 16000;
    let (start, stop) = (4 * 16000, 6 * 16000);
    let far = white(n, 1 + seed * 10, 0.1);
    let echo = convolve(&far, &rir_100ms(2 + seed));
    let noise_amp = (3.0 * power(&echo)).sqrt() * 10f64.powf(-30.0 / 20.0);
    let noise = white(n, 9 + seed, noise_amp);
    let mut near = continuous_speech(n, 5 + seed);
    for (i, v) in near.iter_mut().enumerate() {
        if i < start || i >= stop {
            *v = 0.0;
        }
    }
    let g = (power(&echo[start..stop]) / power(&near[start..stop])).sqrt();
    near.iter_mut().for_each(|v| *v *= g);
    let config = FilterConfig::default();
    let mu_max = config.mu_max;
    let run = |inject: bool, control: StepControl| {
        let mic: Vec<f64> = (0..n)
            .map(|i| echo[i] + noise[i] + if inject { near[i] } else { 0.0 })
            .collect();
        let mut f = MdfFilter::new(config.clone()).unwrap();
        let e = run_filter(&mut f, &far, &mic, |_| control);
        let w = stop..stop + 8000;
        aec_core::metrics::erle(&mic[w.clone()], &e[w], HOP, None).unwrap().mean_db
    };
    DoubleTalkRun {
        control_db: run(false, StepControl::Adaptive),
        injected_db: run(true, StepControl::Adaptive),
        fixed_db: run(true, StepControl::Fixed(mu_max)),
    }
}

/// Mean frame ERLE over the final second of 5 s of white noise through a
/// 100 ms room with no near-end signal.
pub fn convergence_erle(seed: u64) -> f64 {
    let n = 5 * 16000;
    let far = white(n, 40 + seed, 0.1);
    let echo = convolve(&far, &rir_100ms(50 + seed));
    let e = adaptive(&far, &echo, FilterConfig::default());
    aec_core::metrics::erle(&echo[4 * 16000..], &e[4 * 16000..], HOP, None).unwrap().mean_db
}

#[derive(serde::Deserialize)]
struct NetFixture {
    frames: Vec<NetFrame>,
}

#[derive(serde::Deserialize)]
struct NetFrame {
    far: Vec<f32>,
    near: Vec<f32>,
    vad_near: f64,
    vad_far: f64,
    gains: Vec<f64>,
}

#[derive(serde::Deserialize)]
struct GruFixture {
    inputs: usize,
    hidden: usize,
    input_weights: Vec<f32>,
    recurrent_weights: Vec<f32>,
    bias: Vec<f32>,
    sequence: Vec<Vec<f32>>,
    states: Vec<Vec<f64>>,
}

pub fn fixtures_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn tiny_model_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models/tiny.resw")
}

/// Largest absolute deviation between the engine and the float64
/// reference outputs stored for `tag` ("zero", "random" or "tiny"), and
/// the number of frames compared.
pub fn fixture_deviation(tag: &str) -> (f64, usize) {
    let model = match tag {
        "tiny" => tiny_model_path(),
        _ => fixtures_dir().join(format!("{tag}.resw")),
    };
    let weights = aec_core::nn::load_weights(&std::fs::read(model).unwrap()).unwrap();
    let text = std::fs::read_to_string(fixtures_dir().join(format!("{tag}.json"))).unwrap();
    let fixture: NetFixture = serde_json::from_str(&text).unwrap();
    let mut state = aec_core::NetState::default();
    let mut worst = 0f64;
    for f in &fixture.frames {
        let out = weights.forward(&mut state, &f.far, &f.near).unwrap();
        worst = worst.max((out.vad_near as f64 - f.vad_near).abs());
        worst = worst.max((out.vad_far as f64 - f.vad_far).abs());
        for (a, b) in out.band_gains.iter().zip(&f.gains) {
            worst = worst.max((*a as f64 - b).abs());
        }
    }
    (worst, fixture.frames.len())
}

/// Same comparison for the single GRU trajectory fixture.
pub fn gru_fixture_deviation() -> (f64, usize) {
    let text = std::fs::read_to_string(fixtures_dir().join("gru.json")).unwrap();
    let f: GruFixture = serde_json::from_str(&text).unwrap();
    let layer = aec_core::nn::GruLayer {
        inputs: f.inputs,
        hidden: f.hidden,
        input_weights: f.input_weights,
        recurrent_weights: f.recurrent_weights,
        bias: f.bias,
    };
    let mut h = vec![0f32; f.hidden];
    let mut worst = 0f64;
    for (x, want) in f.sequence.iter().zip(&f.states) {
        layer.step(x, &mut h).unwrap();
        for (a, b) in h.iter().zip(want) {
            worst = worst.max((*a as f64 - b).abs());
        }
    }
    (worst, f.states.len())
}
