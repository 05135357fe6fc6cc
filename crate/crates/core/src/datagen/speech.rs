//! Seeded speech-like signal generator: glottal pulse trains through a
//! formant cascade, noise bursts for fricatives, syllable envelopes and
//! pauses.

use rand::Rng;
use std::f64::consts::PI;

use crate::dsp::SAMPLE_RATE;

const FS: f64 = SAMPLE_RATE as f64;

/// Formant triples (F1, F2, F3) for a handful of vowels.
const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
    [660.0, 1720.0, 2410.0],
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TalkerProfile {
    pub base_f0: f64,
    /// Target RMS over voiced regions, in dBFS.
    pub level_dbfs: f64,
    pub formant_scale: f64,
    /// Probability of a long pause after each syllable.
    pub pause_rate: f64,
}

impl TalkerProfile {
    pub fn random(rng: &mut impl Rng) -> Self {
        TalkerProfile {
            base_f0: rng.random_range(85.0..230.0),
            level_dbfs: rng.random_range(-32.0..-20.0),
            formant_scale: rng.random_range(0.9..1.15),
            pause_rate: 0.2,
        }
    }
}

/// Two-pole resonator with unity peak gain.
#[derive(Clone, Copy, Debug, Default)]
struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn tune(&mut self, freq: f64, bandwidth: f64) {
        let r = (-PI * bandwidth / FS).exp();
        let theta = 2.0 * PI * freq / FS;
        self.a1 = 2.0 * r * theta.cos();
        self.a2 = -r * r;
        self.gain = (1.0 - r) * (1.0 + r * r - 2.0 * r * (2.0 * theta).cos()).sqrt();
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.gain * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn envelope(n: usize, len: usize) -> f64 {
    let ramp = (len / 5).clamp(1, 480);
    if n < ramp {
        0.5 - 0.5 * (PI * n as f64 / ramp as f64).cos()
    } else if n + ramp > len {
        0.5 - 0.5 * (PI * (len - n) as f64 / ramp as f64).cos()
    } else {
        1.0
    }
}

/// Generate `samples` samples of continuous babble from one talker:
/// syllables separated by short gaps and occasional longer pauses.
pub fn synth_speech(samples: usize, profile: &TalkerProfile, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = vec![0.0; samples];
    let mut formants = [Resonator::default(); 3];
    let mut fric = Resonator::default();
    let mut glottal = 0.0;
    let mut phase = 0.0;
    let mut pos = 0;
    let mut voiced_energy = 0.0;
    let mut voiced_count = 0usize;
    while pos < samples {
        let len = (rng.random_range(0.08..0.3) * FS) as usize;
        let end = (pos + len).min(samples);
        let voiced = rng.random::<f64>() < 0.8;
        if voiced {
            let v = VOWELS[rng.random_range(0..VOWELS.len())];
            for (res, (f, bw)) in formants.iter_mut().zip(v.iter().zip([80.0, 110.0, 160.0])) {
                res.tune(f * profile.formant_scale, bw);
            }
            let f0_start = profile.base_f0 * rng.random_range(0.85..1.2);
            let f0_end = profile.base_f0 * rng.random_range(0.8..1.1);
            for n in pos..end {
                let t = (n - pos) as f64 / len as f64;
                let f0 = f0_start + (f0_end - f0_start) * t;
                phase += f0 / FS;
                let mut pulse = 0.0;
                if phase >= 1.0 {
                    phase -= 1.0;
                    pulse = 1.0;
                }
                // simple glottal shaping plus a little aspiration noise
                glottal = 0.9 * glottal + pulse + 0.02 * rng.random_range(-1.0..1.0);
                let mut y = 0.0;
                for (res, w) in formants.iter_mut().zip([1.0, 0.6, 0.3]) {
                    y += w * res.tick(glottal);
                }
                let s = y * envelope(n - pos, end - pos);
                out[n] = s;
                voiced_energy += s * s;
                voiced_count += 1;
            }
        } else {
            fric.tune(rng.random_range(3000.0..6000.0), rng.random_range(800.0..2000.0));
            for n in pos..end {
                let s = 0.15 * fric.tick(rng.random_range(-1.0..1.0)) * envelope(n - pos, end - pos);
                out[n] = s;
            }
        }
        pos = end;
        let gap = if rng.random::<f64>() < profile.pause_rate {
            rng.random_range(0.15..0.45)
        } else {
            rng.random_range(0.01..0.06)
        };
        pos += (gap * FS) as usize;
    }
    if voiced_count > 0 {
        let rms = (voiced_energy / voiced_count as f64).sqrt().max(1e-9);
        let target = 10f64.powf(profile.level_dbfs / 20.0);
        let g = target / rms;
        for s in &mut out {
            *s = (*s * g).clamp(-0.99, 0.99);
        }
    }
    out
}
