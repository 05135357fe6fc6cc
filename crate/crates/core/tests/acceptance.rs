//! Acceptance suite: one line per criterion, non-zero exit if any fails.

mod common;

use std::sync::Arc;
use std::time::Instant;

use aec_core::datagen::{evaluation_scene, NonlinearitySpec, RECORD_WIDTH};
use aec_core::metrics::{erle, lsd};
use aec_core::pipeline::{load_model, process_signals};
use aec_core::suppression::interpolate_gains;
use aec_core::{BandGains, BandLayout, SessionOptions, BINS, FEATURE_DIM, HOP, NUM_BANDS};
use common::*;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mdf_oracle() -> Outcome {
    let t = Instant::now();
    let runs: Vec<f64> = (0..3).map(|seed| equivalence_run(seed, 1.0).relative_rms).collect();
    let worst = runs.iter().cloned().fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst < 1e-6 && secs < 10.0,
        format!("worst relative RMS {worst:.2e} over 3 one-second runs (< 1e-6), {secs:.2} s (< 10 s)"),
    )
}

fn convergence() -> Outcome {
    let t = Instant::now();
    let db = convergence_erle(0);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        db >= 30.0 && secs < 5.0,
        format!("final-second ERLE {db:.1} dB (>= 30), {secs:.2} s (< 5 s)"),
    )
}

fn double_talk() -> Outcome {
    let runs: Vec<DoubleTalkRun> = (0..4).map(double_talk_run).collect();
    let n = runs.len() as f64;
    let degradation = runs.iter().map(|r| r.degradation_db()).sum::<f64>() / n;
    let advantage = runs.iter().map(|r| r.advantage_db()).sum::<f64>() / n;
    let per_seed: Vec<String> = runs
        .iter()
        .map(|r| format!("{:.1}/{:.1}", r.degradation_db(), r.advantage_db()))
        .collect();
    outcome(
        degradation < 6.0 && advantage >= 10.0,
        format!(
            "mean degradation {degradation:.2} dB (< 6), mean advantage over fixed rate {advantage:.2} dB (>= 10); per seed {}",
            per_seed.join(" ")
        ),
    )
}

fn interpolation() -> Outcome {
    let layout = BandLayout::bark();
    let edges = *layout.edges();
    let mut rng = seeded(5);
    let mut worst = 0f64;
    let mut check = |got: f64, want: f64| worst = worst.max((got - want).abs());

    // endpoint identity and hand arithmetic
    let mut g = BandGains::uniform(0.0, 0);
    for (k, v) in g.g.iter_mut().enumerate() {
        *v = 0.2 + 0.6 * ((k % 2) as f64);
    }
    let bins = interpolate_gains(&g, &layout);
    for k in 0..NUM_BANDS {
        check(bins.g[edges[k]], g.g[k]);
    }
    // band 3 spans bins 10..13 (M = 3): 0.8 -> 0.2
    check(bins.g[11], 0.8 * (2.0 / 3.0) + 0.2 / 3.0);
    check(bins.g[12], 0.8 / 3.0 + 0.2 * (2.0 / 3.0));
    // band 13 spans bins 64..74 (M = 10): halfway between 0.8 and 0.2
    check(bins.g[69], 0.5);
    check(bins.g[0], 0.2);
    for b in edges[NUM_BANDS - 1]..BINS {
        check(bins.g[b], g.g[NUM_BANDS - 1]);
    }

    // flat gains stay flat; random gains are continuous at each boundary
    let bins = interpolate_gains(&BandGains::uniform(1.0, 0), &layout);
    bins.g.iter().for_each(|&v| check(v, 1.0));
    for _ in 0..50 {
        let mut g = BandGains::uniform(0.0, 0);
        g.g.iter_mut().for_each(|v| *v = rng.random_range(0.0..1.0));
        let bins = interpolate_gains(&g, &layout);
        for k in 0..NUM_BANDS - 1 {
            let m_len = (edges[k + 1] - edges[k]) as f64;
            // the line through band k, extended to m = M, lands on g_{k+1}
            let last = edges[k + 1] - 1;
            let slope = g.g[k + 1] - g.g[k];
            check(bins.g[last] + slope / m_len, bins.g[edges[k + 1]]);
            for b in edges[k]..edges[k + 1] {
                let frac = (b - edges[k]) as f64 / m_len;
                check(bins.g[b], (1.0 - frac) * g.g[k] + frac * g.g[k + 1]);
            }
        }
    }
    outcome(worst <= 1e-12, format!("largest deviation {worst:.1e} (<= 1e-12)"))
}

fn parity() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for tag in ["zero", "random", "tiny"] {
        let (d, frames) = fixture_deviation(tag);
        pass &= d < 1e-4 && frames >= 100;
        parts.push(format!("{tag} {d:.1e} over {frames} frames"));
    }
    let (d, steps) = gru_fixture_deviation();
    pass &= d < 1e-5;
    parts.push(format!("gru trajectory {d:.1e} over {steps} steps"));
    outcome(pass, format!("{} (< 1e-4)", parts.join(", ")))
}

fn structure() -> Outcome {
    let pass = FEATURE_DIM == 42 && NUM_BANDS == 22 && RECORD_WIDTH == 108;
    outcome(pass, format!("features {FEATURE_DIM}, bands {NUM_BANDS}, record width {RECORD_WIDTH}"))
}

struct EndToEnd {
    nn_erle: f64,
    filter_erle: f64,
    lsd: f64,
    echo_frames: usize,
    speech_frames: usize,
    rt_ms: f64,
    secs: f64,
}

fn end_to_end() -> EndToEnd {
    let t = Instant::now();
    let weights = Arc::new(load_model(&tiny_model_path()).unwrap());
    let scene = evaluation_scene(2024, 60.0, NonlinearitySpec::Tanh { drive: 1.5 }, 0.0).unwrap();
    let activity = scene.activity(2 * HOP, -60.0);
    let echo_mask: Vec<bool> = activity.iter().map(|a| a.echo).collect();
    let speech_mask: Vec<bool> = activity.iter().map(|a| a.speech).collect();
    let mic = &scene.mix.mic;
    let (with_nn, report) = process_signals(&scene.far, mic, Some(weights), &SessionOptions::default(), false).unwrap();
    let (filter_only, _) =
        process_signals(&scene.far, mic, None, &SessionOptions::without_network(), false).unwrap();
    let nn = erle(mic, &with_nn, HOP, Some(&echo_mask)).unwrap();
    let plain = erle(mic, &filter_only, HOP, Some(&echo_mask)).unwrap();
    let d = lsd(&scene.mix.near, &with_nn, Some(&speech_mask)).unwrap();
    EndToEnd {
        nn_erle: nn.mean_db,
        filter_erle: plain.mean_db,
        lsd: d.mean_db,
        echo_frames: nn.frames_used,
        speech_frames: d.frames_used,
        rt_ms: report.rt.mean_millis(),
        secs: t.elapsed().as_secs_f64(),
    }
}

fn improvement(e: &EndToEnd) -> Outcome {
    let gain = e.nn_erle - e.filter_erle;
    outcome(
        gain >= 6.0 && e.lsd <= 2.0 && e.secs < 120.0,
        format!(
            "ERLE filter+NN {:.1} dB vs filter {:.1} dB (+{gain:.1}, need >= 6) on {} echo-only frames; \
             LSD {:.2} dB (<= 2) on {} near-only frames; {:.1} s (< 120 s)",
            e.nn_erle, e.filter_erle, e.echo_frames, e.lsd, e.speech_frames, e.secs
        ),
    )
}

fn real_time(e: &EndToEnd) -> Outcome {
    outcome(e.rt_ms < 10.0, format!("mean process_frame {:.3} ms (< 10 ms)", e.rt_ms))
}

fn metrics_sanity() -> Outcome {
    let s = speech(32000, 9);
    let half: Vec<f64> = s.iter().map(|v| v / 2.0).collect();
    let e0 = erle(&s, &s, HOP, None).unwrap().mean_db;
    let l0 = lsd(&s, &s, None).unwrap().mean_db;
    let l6 = lsd(&s, &half, None).unwrap().mean_db;
    let want = 10.0 * 4f64.log10();
    outcome(
        e0.abs() < 1e-12 && l0.abs() < 1e-12 && (l6 - want).abs() <= 0.01,
        format!("ERLE(d,d) {e0:.2e} dB, LSD(s,s) {l0:.2e} dB, LSD(s,s/2) {l6:.4} dB (6.02 +/- 0.01)"),
    )
}

fn main() {
    let e2e = end_to_end();
    let results = [
        ("mdf-oracle-equivalence", mdf_oracle()),
        ("linear-convergence", convergence()),
        ("double-talk-robustness", double_talk()),
        ("gain-interpolation", interpolation()),
        ("inference-oracle-parity", parity()),
        ("structural-constants", structure()),
        ("end-to-end-improvement", improvement(&e2e)),
        ("real-time-budget", real_time(&e2e)),
        ("metrics-sanity", metrics_sanity()),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        println!("{} {name}: {}", if r.pass { "PASS" } else { "FAIL" }, r.detail);
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
