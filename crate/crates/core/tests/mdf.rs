mod common;

use aec_core::mdf::{optimal_step, FilterConfig, LeakageEstimator, MdfFilter, Normalization, StepControl};
use aec_core::HOP;
use common::*;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn matches_time_domain_oracle() {
    let r = equivalence_run(11, 0.5);
    assert!(r.relative_rms < 1e-6, "relative rms {}", r.relative_rms);
}

#[test]
fn zero_far_end_passes_mic() {
    let mut f = MdfFilter::new(FilterConfig::default()).unwrap();
    f.set_time_domain_weights(&white(1600, 1, 1.0)).unwrap();
    let mic = white(HOP, 2, 0.3);
    let out = f.process(&vec![0.0; HOP], &mic).unwrap();
    assert_eq!(out.error, mic);
    assert!(out.echo_estimate.iter().all(|&y| y == 0.0));
}

#[test]
fn zero_weights_pass_mic() {
    let mut f = MdfFilter::new(FilterConfig::default()).unwrap();
    let far = white(16000, 3, 0.5);
    let mic = white(16000, 4, 0.5);
    let e = run_filter(&mut f, &far, &mic, |_| StepControl::Frozen);
    assert_eq!(e, mic);
}

#[test]
fn frozen_fir_cancels_exactly() {
    let h = white(64, 5, 0.5);
    let far = white(16000, 6, 0.5);
    let mic = convolve(&far, &h);
    let mut f = MdfFilter::new(FilterConfig::default()).unwrap();
    f.set_time_domain_weights(&h).unwrap();
    let e = run_filter(&mut f, &far, &mic, |_| StepControl::Frozen);
    let rel = (power(&e) / power(&mic)).sqrt();
    assert!(rel < 1e-6, "{rel}");
}

#[test]
fn zero_rate_keeps_weights() {
    let mut f = MdfFilter::new(FilterConfig::default()).unwrap();
    let h = white(1600, 7, 0.1);
    f.set_time_domain_weights(&h).unwrap();
    let far = white(4800, 8, 0.5);
    let mic = white(4800, 9, 0.5);
    run_filter(&mut f, &far, &mic, |_| StepControl::Fixed(0.0));
    for (a, b) in f.time_domain_weights().iter().zip(&h) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn scalar_update_arithmetic() {
    let config = FilterConfig {
        taps: 1,
        block_size: 1,
        normalization: Normalization::Broadband,
        ..FilterConfig::default()
    };
    let delta = config.regularization;
    let mut f = MdfFilter::new(config).unwrap();
    f.process_with(&[1.0], &[1.0], StepControl::Fixed(0.5)).unwrap();
    let w = f.time_domain_weights()[0];
    // w = mu * e * x / (x^2 + delta)
    assert!((w - 0.5 / (1.0 + 1e-10 + delta)).abs() < 1e-12, "{w}");
    assert!((w - 0.5).abs() < 1e-5);
}

#[test]
fn single_tap_echo_is_identified() {
    let far = white(16000, 12, 0.3);
    let mut mic = vec![0.0; far.len()];
    for n in 5..far.len() {
        mic[n] = 0.6 * far[n - 5];
    }
    let mut f = MdfFilter::new(FilterConfig::default()).unwrap();
    run_filter(&mut f, &far, &mic, |_| StepControl::Adaptive);
    let w = f.time_domain_weights();
    let (idx, val) = w
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap();
    assert_eq!(idx, 5);
    assert!((val - 0.6).abs() < 0.006, "{val}");
}

#[test]
fn converges_on_linear_echo() {
    let erle = convergence_erle(0);
    assert!(erle >= 30.0, "{erle}");
}

#[test]
fn snapshot_resumes_identically() {
    let far = white(32000, 20, 0.3);
    let mic: Vec<f64> = convolve(&far, &rir_100ms(21))
        .iter()
        .zip(white(32000, 22, 0.01))
        .map(|(a, b)| a + b)
        .collect();
    let mut a = MdfFilter::new(FilterConfig::default()).unwrap();
    run_filter(&mut a, &far[..16000], &mic[..16000], |_| StepControl::Adaptive);
    let bytes = a.snapshot();
    let mut b = MdfFilter::restore(FilterConfig::default(), &bytes).unwrap();
    assert_eq!(b.snapshot(), bytes);
    let ea = run_filter(&mut a, &far[16000..], &mic[16000..], |_| StepControl::Adaptive);
    let eb = run_filter(&mut b, &far[16000..], &mic[16000..], |_| StepControl::Adaptive);
    assert_eq!(ea, eb);

    let wrong = FilterConfig { taps: 800, ..FilterConfig::default() };
    assert!(MdfFilter::restore(wrong, &bytes).is_err());
    assert!(MdfFilter::restore(FilterConfig::default(), &bytes[..bytes.len() - 3]).is_err());
}

#[test]
fn clone_is_independent_state() {
    let far = white(3200, 30, 0.3);
    let mic = white(3200, 31, 0.3);
    let mut a = MdfFilter::new(FilterConfig::default()).unwrap();
    run_filter(&mut a, &far, &mic, |_| StepControl::Adaptive);
    let mut b = a.clone();
    let ea = run_filter(&mut a, &far, &mic, |_| StepControl::Adaptive);
    let eb = run_filter(&mut b, &far, &mic, |_| StepControl::Adaptive);
    assert_eq!(ea, eb);
}

#[test]
fn state_moves_between_threads() {
    let far = white(3200, 40, 0.3);
    let mic = white(3200, 41, 0.3);
    let mut f = MdfFilter::new(FilterConfig::default()).unwrap();
    run_filter(&mut f, &far[..1600], &mic[..1600], |_| StepControl::Adaptive);
    let mut reference = f.clone();
    let handle = std::thread::spawn(move || {
        let e = run_filter(&mut f, &far[1600..], &mic[1600..], |_| StepControl::Adaptive);
        (f, e)
    });
    let (_, moved) = handle.join().unwrap();
    let far = white(3200, 40, 0.3);
    let mic = white(3200, 41, 0.3);
    let stayed = run_filter(&mut reference, &far[1600..], &mic[1600..], |_| StepControl::Adaptive);
    assert_eq!(moved, stayed);
}

/// Bounded but hostile input: bursts, full-scale clipping, silence and
/// tiny values, with an occasional change of echo path.
fn hostile_stream(seconds: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seeded(seed);
    let n = seconds * 16000;
    let mut far = Vec::with_capacity(n);
    let mut mic = Vec::with_capacity(n);
    let mut mode = 0;
    let mut gain = 0.5;
    for i in 0..n {
        if i % 4000 == 0 {
            mode = rng.random_range(0..5);
            gain = rng.random_range(0.0..1.5);
        }
        let x: f64 = match mode {
            0 => rng.random_range(-1.0..1.0),
            1 => 0.0,
            2 => if rng.random::<bool>() { 1.0 } else { -1.0 },
            3 => rng.random_range(-1e-6..1e-6),
            _ => (i as f64 * 0.3).sin(),
        };
        far.push(x);
        let d: f64 = gain * far[i.saturating_sub(rng.random_range(0..200))] + rng.random_range(-0.3..0.3);
        mic.push(d.clamp(-1.0, 1.0));
    }
    (far, mic)
}

#[test]
fn stays_finite_on_hostile_minute() {
    let (far, mic) = hostile_stream(60, 77);
    let mut f = MdfFilter::new(FilterConfig::default()).unwrap();
    for (x, d) in far.chunks(HOP).zip(mic.chunks(HOP)) {
        let o = f.process(x, d).unwrap();
        assert!(o.error.iter().all(|v| v.is_finite()));
        assert!(o.mu.iter().all(|&m| (0.0..=0.5).contains(&m)));
        let eta = f.leakage().eta();
        assert!((0.0..=1.0).contains(&eta));
    }
    assert!(f.weights_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rates_and_leakage_stay_in_range(seed in any::<u64>(), mu_max in 0.05f64..=1.0) {
        let (far, mic) = hostile_stream(2, seed);
        let config = FilterConfig { mu_max, ..FilterConfig::default() };
        let mut f = MdfFilter::new(config).unwrap();
        for (x, d) in far.chunks(HOP).zip(mic.chunks(HOP)) {
            let o = f.process(x, d).unwrap();
            prop_assert!(o.mu.iter().all(|&m| m >= 0.0 && m <= mu_max));
            prop_assert!((0.0..=1.0).contains(&f.leakage().eta()));
            prop_assert!(f.leakage().r_yy().iter().all(|&r| r >= 0.0));
        }
        prop_assert!(f.weights_finite());
    }

    #[test]
    fn output_is_mic_minus_estimate(seed in any::<u64>()) {
        let far = white(1600, seed, 0.5);
        let mic = white(1600, seed ^ 1, 0.5);
        let mut f = MdfFilter::new(FilterConfig::default()).unwrap();
        for (x, d) in far.chunks(HOP).zip(mic.chunks(HOP)) {
            let o = f.process(x, d).unwrap();
            for i in 0..HOP {
                prop_assert_eq!(o.error[i], d[i] - o.echo_estimate[i]);
            }
        }
    }
}

// Straight transcription of the centred recursion, one scalar per bin.
struct LeakOracle {
    r_ey: Vec<f64>,
    r_yy: Vec<f64>,
    my: Vec<f64>,
    me: Vec<f64>,
}

impl LeakOracle {
    fn step(&mut self, py: &[f64], pe: &[f64], beta: f64) -> f64 {
        for k in 0..py.len() {
            let (dy, de) = (py[k] - self.my[k], pe[k] - self.me[k]);
            self.r_ey[k] = (1.0 - beta) * self.r_ey[k] + beta * dy * de;
            self.r_yy[k] = (1.0 - beta) * self.r_yy[k] + beta * dy * dy;
            self.my[k] = 0.95 * self.my[k] + 0.05 * py[k];
            self.me[k] = 0.95 * self.me[k] + 0.05 * pe[k];
        }
        self.r_ey.iter().sum::<f64>() / self.r_yy.iter().sum::<f64>()
    }
}

#[test]
fn leakage_settles_on_the_power_ratio() {
    for c in [0.05, 0.3, 0.8] {
        let bins = 8;
        let mut est = LeakageEstimator::new(bins, 0.008, 0.0);
        let mut oracle = LeakOracle { r_ey: vec![0.0; bins], r_yy: vec![0.0; bins], my: vec![0.0; bins], me: vec![0.0; bins] };
        let mut rng = seeded(60);
        for frame in 0..3000 {
            let py: Vec<f64> = (0..bins).map(|_| rng.random_range(0.1..2.0)).collect();
            let pe: Vec<f64> = py.iter().map(|y| c * y).collect();
            let (sy, se) = (py.iter().sum::<f64>(), pe.iter().sum::<f64>());
            est.update(&py, &pe, sy, se);
            // sigma2_y > sigma2_e here, so the averaging rate is beta0
            let want = oracle.step(&py, &pe, 0.008);
            assert!((est.eta() - want).abs() < 1e-9, "c {c} frame {frame}: {} vs {want}", est.eta());
        }
        assert!((est.eta() - c).abs() < 1e-9, "c {c}: {}", est.eta());
    }
}

#[test]
fn leakage_is_clamped() {
    let mut rng = seeded(61);
    let mut hot = LeakageEstimator::new(4, 0.008, 0.005);
    let mut anti = LeakageEstimator::new(4, 0.008, 0.005);
    for _ in 0..500 {
        let py: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..2.0)).collect();
        let double: Vec<f64> = py.iter().map(|y| 2.0 * y).collect();
        let flipped: Vec<f64> = py.iter().map(|y| 3.0 - y).collect();
        hot.update(&py, &double, 1.0, 1.0);
        anti.update(&py, &flipped, 1.0, 1.0);
        assert!((0.005..=1.0).contains(&hot.eta()) && (0.005..=1.0).contains(&anti.eta()));
    }
    assert_eq!(hot.eta(), 1.0);
    assert_eq!(anti.eta(), 0.005);
}

#[test]
fn silent_echo_estimate_leaves_leakage_alone() {
    let mut est = LeakageEstimator::new(4, 0.008, 0.0);
    est.update(&[1.0, 2.0, 0.5, 1.0], &[0.2, 0.1, 0.4, 0.3], 4.5, 1.0);
    let before = est.clone();
    est.update(&[0.0; 4], &[1.0; 4], 0.0, 4.0);
    assert_eq!(est.r_ey(), before.r_ey());
    assert_eq!(est.eta(), before.eta());
    assert_eq!(est.beta(), 0.0);
}

#[test]
fn step_is_leak_times_power_ratio_capped() {
    let mut out = [0.0; 3];
    optimal_step(0.2, &[1.0, 4.0, 1.0], &[2.0, 1.0, 0.0], 0.5, &mut out);
    assert!((out[0] - 0.1).abs() < 1e-15);
    assert_eq!(out[1], 0.5);
    assert_eq!(out[2], 0.5);
}
