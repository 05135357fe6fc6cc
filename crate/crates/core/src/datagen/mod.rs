//! Synthetic training data: scripted far/near conversations, echo-path
//! simulation, labels and the `AECD` dataset file.

mod labels;
mod manifest;
mod scene;
mod speech;

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use labels::{frame_dbfs, gain_label, label_gains, label_vad, vad_value, GAIN_FLOOR, VAD_HIGH_DBFS, VAD_LOW_DBFS};
pub use manifest::{Manifest, SourceSpec};
pub use scene::{fft_convolve, synth_scene, synthetic_rir, NonlinearitySpec, RirSpec, SceneMix};
pub use speech::{synth_speech, TalkerProfile};

use crate::dsp::{analysis_frame, wav, BandLayout, FrameFft, HOP, NUM_BANDS, SAMPLE_RATE};
use crate::features::{FeatureExtractor, FEATURE_DIM};
use crate::mdf::{FilterConfig, MdfFilter};
use crate::{AecError, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"AECD";
pub const DATASET_VERSION: u32 = 1;
/// far features, near features, near VAD, far VAD, band gains.
pub const RECORD_WIDTH: usize = 2 * FEATURE_DIM + 2 + NUM_BANDS;
pub type Record = [f32; RECORD_WIDTH];

const GATE_RAMP: usize = 160;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    FarOnly,
    NearOnly,
    DoubleTalk,
    Silence,
}

impl SegmentKind {
    pub fn far_active(self) -> bool {
        matches!(self, SegmentKind::FarOnly | SegmentKind::DoubleTalk)
    }

    pub fn near_active(self) -> bool {
        matches!(self, SegmentKind::NearOnly | SegmentKind::DoubleTalk)
    }

    fn pick(rng: &mut impl Rng) -> Self {
        let u: f64 = rng.random();
        if u < 0.3 {
            SegmentKind::FarOnly
        } else if u < 0.55 {
            SegmentKind::NearOnly
        } else if u < 0.85 {
            SegmentKind::DoubleTalk
        } else {
            SegmentKind::Silence
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: usize,
    pub len: usize,
}

/// Random conversation script of 1-3 s segments covering `samples`.
pub fn script_segments(samples: usize, rng: &mut impl Rng) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < samples {
        let len = ((rng.random_range(1.0..3.0) * SAMPLE_RATE as f64) as usize).min(samples - start);
        out.push(Segment { kind: SegmentKind::pick(rng), start, len });
        start += len;
    }
    out
}

/// Per-sample gate for one talker with short raised-cosine ramps at
/// segment edges.
fn gate(segments: &[Segment], samples: usize, active: impl Fn(SegmentKind) -> bool) -> Vec<f64> {
    let mut g = vec![0.0; samples];
    for s in segments.iter().filter(|s| active(s.kind)) {
        for n in 0..s.len {
            let edge = n.min(s.len - 1 - n);
            g[s.start + n] = if edge < GATE_RAMP {
                0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / GATE_RAMP as f64).cos()
            } else {
                1.0
            };
        }
    }
    // merge across adjacent active segments
    for w in segments.windows(2) {
        if active(w[0].kind) && active(w[1].kind) {
            let b = w[1].start;
            for v in &mut g[b.saturating_sub(GATE_RAMP)..(b + GATE_RAMP).min(samples)] {
                *v = 1.0;
            }
        }
    }
    g
}

/// Audio read from files, concatenated and consumed cyclically.
#[derive(Debug)]
pub struct Corpus {
    audio: Vec<f64>,
}

impl Corpus {
    pub fn load(paths: &[std::path::PathBuf]) -> Result<Self> {
        let mut audio = Vec::new();
        for p in paths {
            audio.extend(wav::read_wav(p)?);
        }
        if audio.is_empty() {
            return Err(AecError::DatasetFormat("corpus contains no audio".into()));
        }
        Ok(Corpus { audio })
    }

    /// `n` samples starting at `offset`; each wrap past the end applies a
    /// fresh random gain.
    pub fn take(&self, offset: usize, n: usize, rng: &mut impl Rng) -> Vec<f64> {
        let len = self.audio.len();
        let mut pos = offset % len;
        let mut gain = 1.0;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            if i > 0 && pos == 0 {
                gain = 10f64.powf(rng.random_range(-6.0..6.0) / 20.0);
            }
            out.push((self.audio[pos] * gain).clamp(-1.0, 1.0));
            pos = (pos + 1) % len;
        }
        out
    }
}

#[derive(Clone, Debug)]
pub enum Source {
    Synthetic,
    Corpus(Arc<Corpus>),
}

impl Source {
    fn draw(&self, offset: usize, n: usize, rng: &mut impl Rng) -> Vec<f64> {
        match self {
            Source::Synthetic => {
                let profile = TalkerProfile::random(rng);
                synth_speech(n, &profile, rng)
            }
            Source::Corpus(c) => c.take(offset, n, rng),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SceneConfig {
    pub samples: usize,
    pub far: Source,
    pub near: Source,
    pub rir: Vec<f64>,
    pub nonlinearity: NonlinearitySpec,
    pub snr_db: f64,
    /// Read position for corpus sources.
    pub corpus_offset: usize,
}

#[derive(Clone, Debug)]
pub struct ScriptedScene {
    pub segments: Vec<Segment>,
    pub far: Vec<f64>,
    pub mix: SceneMix,
}

impl ScriptedScene {
    pub fn kind_at(&self, sample: usize) -> Option<SegmentKind> {
        self.segments
            .iter()
            .find(|s| sample >= s.start && sample < s.start + s.len)
            .map(|s| s.kind)
    }

    /// Segment kind for every `HOP`-sample frame that lies entirely
    /// inside one segment, at least `guard` samples from either edge.
    pub fn frame_kinds(&self, guard: usize) -> Vec<Option<SegmentKind>> {
        let frames = self.far.len().div_ceil(HOP);
        (0..frames)
            .map(|i| {
                let (a, b) = (i * HOP, (i + 1) * HOP);
                self.segments
                    .iter()
                    .find(|s| a >= s.start + guard && b + guard <= s.start + s.len)
                    .map(|s| s.kind)
            })
            .collect()
    }
}

/// Per-frame ground-truth activity of a scene.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FrameActivity {
    /// Echo present without near speech.
    pub echo: bool,
    /// Near speech present without echo.
    pub speech: bool,
}

impl ScriptedScene {
    /// Echo-only and speech-only frame masks: the frame lies inside a
    /// far-only (near-only) segment, away from its edges by `guard`
    /// samples, and the echo (near speech) in it is above `floor_dbfs`.
    pub fn activity(&self, guard: usize, floor_dbfs: f64) -> Vec<FrameActivity> {
        let level = |x: &[f64], i: usize| {
            let s = &x[(i * HOP).min(x.len())..((i + 1) * HOP).min(x.len())];
            crate::dsp::power_dbfs(s) > floor_dbfs
        };
        self.frame_kinds(guard)
            .into_iter()
            .enumerate()
            .map(|(i, kind)| FrameActivity {
                echo: kind == Some(SegmentKind::FarOnly) && level(&self.mix.echo, i),
                speech: kind == Some(SegmentKind::NearOnly) && level(&self.mix.near, i),
            })
            .collect()
    }
}

/// A seeded conversation for evaluation: synthetic talkers on both ends
/// and a synthetic room that fits inside the default filter span.
pub fn evaluation_scene(
    seed: u64,
    seconds: f64,
    nonlinearity: NonlinearitySpec,
    snr_db: f64,
) -> Result<ScriptedScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rir = RirSpec::random((0.05, 0.3), FilterConfig::default().taps, &mut rng).realize()?;
    let config = SceneConfig {
        samples: (seconds * SAMPLE_RATE as f64).round() as usize,
        far: Source::Synthetic,
        near: Source::Synthetic,
        rir,
        nonlinearity,
        snr_db,
        corpus_offset: 0,
    };
    scripted_scene(&config, &mut rng)
}

/// Generate one scripted conversation and mix it through the echo path.
pub fn scripted_scene(config: &SceneConfig, rng: &mut impl Rng) -> Result<ScriptedScene> {
    let n = config.samples;
    let segments = script_segments(n, rng);
    let far_gate = gate(&segments, n, SegmentKind::far_active);
    let near_gate = gate(&segments, n, SegmentKind::near_active);
    let far: Vec<f64> = config
        .far
        .draw(config.corpus_offset, n, rng)
        .iter()
        .zip(&far_gate)
        .map(|(x, g)| x * g)
        .collect();
    let near: Vec<f64> = config
        .near
        .draw(config.corpus_offset, n, rng)
        .iter()
        .zip(&near_gate)
        .map(|(x, g)| x * g)
        .collect();
    let mix = synth_scene(&far, &near, &config.rir, config.nonlinearity, config.snr_db)?;
    Ok(ScriptedScene { segments, far, mix })
}

/// Run a scene through the streaming filter and feature front end and
/// produce one training record per hop.
pub fn scene_records(scene: &ScriptedScene, high_dbfs: f64, low_dbfs: f64) -> Result<Vec<Record>> {
    let n = scene.far.len();
    let layout = BandLayout::bark();
    let mut mdf = MdfFilter::new(FilterConfig::default())?;
    let mut fft = FrameFft::new();
    let mut far_feat = FeatureExtractor::new(layout.clone());
    let mut near_feat = FeatureExtractor::new(layout.clone());
    let mut prev = [vec![0.0; HOP], vec![0.0; HOP], vec![0.0; HOP]];
    let hop_of = |x: &[f64], i: usize| -> Vec<f64> {
        (i * HOP..(i + 1) * HOP).map(|k| x.get(k).copied().unwrap_or(0.0)).collect()
    };
    let frames = n.div_ceil(HOP);
    let mut records = Vec::with_capacity(frames);
    for i in 0..frames {
        let far = hop_of(&scene.far, i);
        let mic = hop_of(&scene.mix.mic, i);
        let clean = hop_of(&scene.mix.near, i);
        let err = mdf.process(&far, &mic)?.error;

        let far_frame = analysis_frame(&prev[0], &far, i);
        let err_frame = analysis_frame(&prev[1], &err, i);
        let clean_frame = analysis_frame(&prev[2], &clean, i);
        let far_spec = fft.forward(&far_frame);
        let err_spec = fft.forward(&err_frame);
        let clean_spec = fft.forward(&clean_frame);

        let mut rec = [0f32; RECORD_WIDTH];
        rec[..FEATURE_DIM].copy_from_slice(&far_feat.extract(&far_spec, &far).to_f32());
        rec[FEATURE_DIM..2 * FEATURE_DIM].copy_from_slice(&near_feat.extract(&err_spec, &err).to_f32());
        rec[2 * FEATURE_DIM] = vad_value(frame_dbfs(&clean_frame), high_dbfs, low_dbfs);
        rec[2 * FEATURE_DIM + 1] = vad_value(frame_dbfs(&far_frame), high_dbfs, low_dbfs);
        let g = gain_label(&layout.band_energies(&clean_spec), &layout.band_energies(&err_spec));
        rec[2 * FEATURE_DIM + 2..].copy_from_slice(&g);
        records.push(rec);

        prev = [far, err, clean];
    }
    Ok(records)
}

/// Resolved manifest: loaded corpora and the RIR pool.
#[derive(Debug)]
pub struct DatasetPlan {
    pub manifest: Manifest,
    far: Source,
    near: Source,
    rirs: Vec<Vec<f64>>,
}

impl DatasetPlan {
    pub fn new(manifest: Manifest) -> Result<Self> {
        manifest.validate()?;
        let source = |s: &SourceSpec| -> Result<Source> {
            Ok(match s {
                SourceSpec::Synthetic => Source::Synthetic,
                SourceSpec::Files(p) => Source::Corpus(Arc::new(Corpus::load(p)?)),
            })
        };
        let rirs = match &manifest.rir {
            SourceSpec::Synthetic => {
                let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed ^ 0x5249_5200);
                (0..manifest.rir_count)
                    .map(|_| RirSpec::random(manifest.rt60, manifest.rir_max_taps, &mut rng).realize())
                    .collect::<Result<_>>()?
            }
            SourceSpec::Files(p) => p
                .iter()
                .map(|f| RirSpec::File(f.clone()).realize())
                .collect::<Result<_>>()?,
        };
        Ok(DatasetPlan {
            far: source(&manifest.far)?,
            near: source(&manifest.near)?,
            rirs,
            manifest,
        })
    }

    pub fn scene(&self, index: usize) -> Result<ScriptedScene> {
        let m = &self.manifest;
        let mut rng = ChaCha8Rng::seed_from_u64(m.seed);
        rng.set_stream(index as u64 + 1);
        let config = SceneConfig {
            samples: m.scene_samples(index),
            far: self.far.clone(),
            near: self.near.clone(),
            rir: self.rirs[rng.random_range(0..self.rirs.len())].clone(),
            nonlinearity: m.nonlinearity[rng.random_range(0..m.nonlinearity.len())],
            snr_db: m.snr_db[rng.random_range(0..m.snr_db.len())],
            corpus_offset: index * (m.scene_seconds * SAMPLE_RATE as f64) as usize,
        };
        scripted_scene(&config, &mut rng)
    }

    pub fn scene_records(&self, index: usize) -> Result<Vec<Record>> {
        let scene = self.scene(index)?;
        scene_records(&scene, self.manifest.vad_high_dbfs, self.manifest.vad_low_dbfs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetSummary {
    pub scenes: usize,
    pub records: usize,
}

/// Generate the dataset described by `manifest` into `out`. Scenes are
/// synthesised in parallel (at most `threads` workers) and written in
/// manifest order.
pub fn build_dataset(manifest: Manifest, out: &Path, threads: Option<usize>) -> Result<DatasetSummary> {
    let plan = DatasetPlan::new(manifest)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| AecError::Config(format!("thread pool: {e}")))?;
    let file = File::create(out).map_err(|e| AecError::io(out, e))?;
    let mut writer = DatasetWriter::new(BufWriter::new(file)).map_err(|e| AecError::io(out, e))?;
    let scenes = plan.manifest.scene_count();
    let chunk = pool.current_num_threads() * 2;
    for start in (0..scenes).step_by(chunk) {
        let batch: Vec<Result<Vec<Record>>> = pool.install(|| {
            (start..(start + chunk).min(scenes))
                .into_par_iter()
                .map(|i| plan.scene_records(i))
                .collect()
        });
        for recs in batch {
            writer.write_records(&recs?).map_err(|e| AecError::io(out, e))?;
        }
    }
    let records = writer.finish().map_err(|e| AecError::io(out, e))?;
    Ok(DatasetSummary { scenes, records })
}

/// Streaming writer; the record count in the header is patched on finish.
pub struct DatasetWriter<W: Write + Seek> {
    inner: W,
    count: u64,
}

impl<W: Write + Seek> DatasetWriter<W> {
    pub fn new(mut inner: W) -> std::io::Result<Self> {
        inner.write_all(DATASET_MAGIC)?;
        inner.write_all(&DATASET_VERSION.to_le_bytes())?;
        inner.write_all(&(RECORD_WIDTH as u32).to_le_bytes())?;
        inner.write_all(&0u32.to_le_bytes())?;
        Ok(DatasetWriter { inner, count: 0 })
    }

    pub fn write_records(&mut self, records: &[Record]) -> std::io::Result<()> {
        for r in records {
            for v in r {
                self.inner.write_all(&v.to_le_bytes())?;
            }
        }
        self.count += records.len() as u64;
        Ok(())
    }

    pub fn finish(mut self) -> std::io::Result<usize> {
        let count = u32::try_from(self.count)
            .map_err(|_| std::io::Error::other("too many records for the dataset header"))?;
        self.inner.seek(SeekFrom::Start(12))?;
        self.inner.write_all(&count.to_le_bytes())?;
        self.inner.flush()?;
        Ok(self.count as usize)
    }
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<Vec<Record>> {
    let bad = |m: &str| AecError::DatasetFormat(m.to_string());
    let mut head = [0u8; 16];
    r.read_exact(&mut head).map_err(|_| bad("file shorter than the header"))?;
    if &head[..4] != DATASET_MAGIC {
        return Err(bad("bad magic, expected AECD"));
    }
    let word = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().unwrap());
    if word(4) != DATASET_VERSION {
        return Err(AecError::DatasetFormat(format!("unsupported version {}", word(4))));
    }
    if word(8) as usize != RECORD_WIDTH {
        return Err(AecError::DatasetFormat(format!(
            "record width {} (expected {RECORD_WIDTH})",
            word(8)
        )));
    }
    let count = word(12) as usize;
    let mut body = Vec::new();
    r.read_to_end(&mut body).map_err(|e| AecError::DatasetFormat(e.to_string()))?;
    if body.len() != count * RECORD_WIDTH * 4 {
        return Err(AecError::DatasetFormat(format!(
            "header announces {count} records but the payload holds {} bytes",
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(RECORD_WIDTH * 4)
        .map(|c| {
            let mut rec = [0f32; RECORD_WIDTH];
            for (v, b) in rec.iter_mut().zip(c.chunks_exact(4)) {
                *v = f32::from_le_bytes(b.try_into().unwrap());
            }
            rec
        })
        .collect())
}

pub fn read_dataset_file(path: &Path) -> Result<Vec<Record>> {
    let f = File::open(path).map_err(|e| AecError::io(path, e))?;
    read_dataset(std::io::BufReader::new(f))
}
