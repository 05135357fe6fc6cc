mod common;

use std::path::PathBuf;
use std::sync::Arc;

use aec_core::dsp::wav;
use aec_core::metrics::lsd;
use aec_core::mdf::FilterConfig;
use aec_core::pipeline::{load_model, process_files, process_signals};
use aec_core::{AecError, AecSession, NetworkWeights, SessionOptions, HOP, SAMPLE_RATE};
use common::*;
use proptest::prelude::*;

fn tiny() -> Arc<NetworkWeights> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models/tiny.resw");
    Arc::new(load_model(&path).unwrap())
}

fn rms(x: &[f64]) -> f64 {
    power(x).sqrt()
}

#[test]
fn bypass_matches_filter_output() {
    let n = 3 * SAMPLE_RATE as usize;
    let far = white(n, 1, 0.3);
    let mic: Vec<f64> = convolve(&far, &rir_100ms(2))
        .iter()
        .zip(speech(n, 3))
        .map(|(e, s)| e + s)
        .collect();
    let (out, _) = process_signals(&far, &mic, None, &SessionOptions::without_network(), false).unwrap();
    let e = adaptive(&far, &mic, FilterConfig::default());
    let diff: Vec<f64> = out.iter().zip(&e).map(|(a, b)| a - b).collect();
    assert!(rms(&diff) < 1e-6, "{}", rms(&diff));
}

#[test]
fn impulse_comes_out_one_hop_late() {
    let mut s = AecSession::new(None, SessionOptions::without_network()).unwrap();
    assert_eq!(s.latency_samples(), 160);
    let mut mic = vec![0.0; 20 * HOP];
    mic[1005] = 0.5;
    let mut out = Vec::new();
    for m in mic.chunks(HOP) {
        out.extend(s.process_frame(&[0.0; HOP], m).unwrap().out_frame);
    }
    let peak = out.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap();
    assert_eq!(peak.0, 1005 + 160);
    assert!((peak.1 - 0.5).abs() < 1e-9);
    let rest: f64 = out.iter().enumerate().filter(|(i, _)| *i != 1165).map(|(_, v)| v.abs()).sum();
    assert!(rest < 1e-9, "{rest}");
}

#[test]
fn silence_in_silence_out() {
    for weights in [None, Some(tiny())] {
        let options = if weights.is_some() { SessionOptions::default() } else { SessionOptions::without_network() };
        let mut s = AecSession::new(weights, options).unwrap();
        for _ in 0..200 {
            let r = s.process_frame(&[0.0; HOP], &[0.0; HOP]).unwrap();
            assert!(r.out_frame.iter().all(|&v| v == 0.0));
            assert!(r.band_gains.g.iter().all(|g| (0.0..=1.0).contains(g)));
            assert!(r.erle_instant.is_finite() && r.proc_micros >= 0.0);
        }
    }
}

#[test]
fn linear_echo_is_removed() {
    let n = 5 * SAMPLE_RATE as usize;
    let far = white(n, 11, 0.1);
    let mic = convolve(&far, &rir_100ms(12));
    let (out, report) = process_signals(&far, &mic, Some(tiny()), &SessionOptions::default(), false).unwrap();
    let tail = n - SAMPLE_RATE as usize;
    let db = ratio_db(&out[tail..], &mic[tail..]);
    assert!(db <= -30.0, "{db}");
    assert!(report.mean_erle_db.is_finite());
}

#[test]
fn near_speech_alone_passes_through_the_model() {
    let n = 8 * SAMPLE_RATE as usize;
    let mic = speech(n, 21);
    let far = vec![0.0; n];
    let (out, _) = process_signals(&far, &mic, Some(tiny()), &SessionOptions::default(), false).unwrap();
    let d = lsd(&mic, &out, None).unwrap();
    assert!(d.frames_used > 100);
    assert!(d.mean_db <= 2.0, "{}", d.mean_db);
}

#[test]
fn network_requires_weights() {
    assert!(matches!(AecSession::new(None, SessionOptions::default()), Err(AecError::Config(_))));
}

#[test]
fn bad_frame_length_is_rejected() {
    let mut s = AecSession::new(None, SessionOptions::without_network()).unwrap();
    assert!(matches!(s.process_frame(&[0.0; 100], &[0.0; HOP]), Err(AecError::Config(_))));
    // a length error is not a stream error
    assert!(s.process_frame(&[0.0; HOP], &[0.0; HOP]).is_ok());
}

#[test]
fn stream_error_poisons_session() {
    let mut s = AecSession::new(Some(tiny()), SessionOptions::default()).unwrap();
    s.process_frame(&[0.1; HOP], &[0.1; HOP]).unwrap();
    let mut bad = [0.0; HOP];
    bad[7] = f64::INFINITY;
    assert!(matches!(s.process_frame(&bad, &[0.0; HOP]), Err(AecError::Stream(_))));
    assert!(matches!(s.process_frame(&[0.0; HOP], &[0.0; HOP]), Err(AecError::Poisoned)));
}

#[test]
fn files_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let n = 2 * SAMPLE_RATE as usize;
    let far = speech(n, 31);
    let mic: Vec<f64> = convolve(&far, &rir_100ms(32)).iter().zip(speech(n, 33)).map(|(a, b)| a + 0.5 * b).collect();
    let (fp, mp) = (dir.path().join("far.wav"), dir.path().join("mic.wav"));
    wav::write_wav(&fp, &far).unwrap();
    wav::write_wav(&mp, &mic).unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let op = dir.path().join(format!("out{k}.wav"));
        let report = process_files(&fp, &mp, &op, Some(tiny()), &SessionOptions::default(), false).unwrap();
        assert!(report.mean_erle_db.is_finite() && report.rt.mean_micros.is_finite());
        assert!(report.rt.mean_millis() < 10.0);
        assert!(report.warnings.is_empty());
        outputs.push(std::fs::read(op).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn short_mic_is_padded_with_warning() {
    let far = white(5000, 41, 0.2);
    let mic = white(3000, 42, 0.2);
    let (out, report) = process_signals(&far, &mic, None, &SessionOptions::without_network(), false).unwrap();
    assert_eq!(out.len(), 5000);
    assert_eq!(report.samples, 5000);
    assert_eq!(report.warnings.len(), 1);
    assert!(report.warnings[0].contains("microphone"), "{:?}", report.warnings);
}

#[test]
fn rt_profile_counts_every_frame() {
    let far = white(1000 * HOP - 160, 51, 0.2);
    let mic = white(1000 * HOP - 160, 52, 0.2);
    let (_, plain) = process_signals(&far, &mic, None, &SessionOptions::without_network(), false).unwrap();
    let (_, full) = process_signals(&far, &mic, Some(tiny()), &SessionOptions::default(), true).unwrap();
    assert_eq!(plain.rt.frames, 1000);
    assert_eq!(full.rt.frames, 1000);
    assert_eq!(full.trace.len(), 1000);
    assert!(plain.rt.mean_micros <= plain.rt.max_micros);
    assert!(full.rt.mean_micros >= plain.rt.mean_micros);
}

#[test]
fn concurrent_sessions_share_weights() {
    let weights = tiny();
    let n = SAMPLE_RATE as usize;
    let jobs: Vec<(Vec<f64>, Vec<f64>)> = (0..3).map(|k| (white(n, 60 + k, 0.2), speech(n, 70 + k))).collect();
    let serial: Vec<Vec<f64>> = jobs
        .iter()
        .map(|(f, m)| process_signals(f, m, Some(weights.clone()), &SessionOptions::default(), false).unwrap().0)
        .collect();
    let parallel: Vec<Vec<f64>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(f, m)| {
                let w = weights.clone();
                s.spawn(move || process_signals(f, m, Some(w), &SessionOptions::default(), false).unwrap().0)
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(serial, parallel);
}

#[test]
fn long_stream_stays_bounded() {
    let mut s = AecSession::new(Some(tiny()), SessionOptions::default()).unwrap();
    let rir = rir_100ms(81);
    let far = speech(12 * SAMPLE_RATE as usize, 82);
    let echo = convolve(&far, &rir);
    let near = speech(far.len(), 83);
    for round in 0..10 {
        for (i, (f, e)) in far.chunks(HOP).zip(echo.chunks(HOP)).enumerate() {
            let mic: Vec<f64> = e.iter().zip(&near[i * HOP..]).map(|(a, b)| a + if round % 2 == 0 { *b } else { 0.0 }).collect();
            let r = s.process_frame(f, &mic).unwrap();
            assert!(r.out_frame.iter().all(|v| v.is_finite() && v.abs() < 4.0));
        }
    }
    assert_eq!(s.stats().frames, 10 * 1200);
    assert!(s.net_state().iter().all(|v| v.is_finite()));
}

#[test]
fn hard_gate_passes_far_silence() {
    let mut options = SessionOptions::default();
    options.hard_gate = true;
    let mic = speech(4 * SAMPLE_RATE as usize, 91);
    let far = vec![0.0; mic.len()];
    let (out, _) = process_signals(&far, &mic, Some(tiny()), &options, false).unwrap();
    assert!(out.iter().all(|v| v.is_finite()));
    let tail = 2 * SAMPLE_RATE as usize;
    assert!(ratio_db(&out[tail..], &mic[tail..]).abs() < 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    // Changing input after a frame boundary never alters earlier output.
    #[test]
    fn output_is_causal(seed in 0u64..1000, cut in 5usize..25) {
        let n = 30 * HOP;
        let far = white(n, seed, 0.3);
        let mic = white(n, seed + 1, 0.3);
        let mut mic2 = mic.clone();
        for v in &mut mic2[cut * HOP..] {
            *v = -*v * 0.3;
        }
        let run = |m: &[f64]| {
            let mut s = AecSession::new(Some(tiny()), SessionOptions::default()).unwrap();
            let mut out = Vec::new();
            for (f, d) in far.chunks(HOP).zip(m.chunks(HOP)) {
                out.extend(s.process_frame(f, d).unwrap().out_frame);
            }
            out
        };
        let (a, b) = (run(&mic), run(&mic2));
        prop_assert_eq!(&a[..cut * HOP], &b[..cut * HOP]);
    }
}
