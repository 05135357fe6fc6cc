//! Plain-text `key = value` manifest describing a synthetic dataset.

use std::path::{Path, PathBuf};

use super::scene::NonlinearitySpec;
use super::labels::{VAD_HIGH_DBFS, VAD_LOW_DBFS};
use crate::{AecError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum SourceSpec {
    Synthetic,
    Files(Vec<PathBuf>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub seed: u64,
    pub seconds: f64,
    pub scene_seconds: f64,
    pub far: SourceSpec,
    pub near: SourceSpec,
    pub rir: SourceSpec,
    pub rir_count: usize,
    pub rt60: (f64, f64),
    pub rir_max_taps: usize,
    pub nonlinearity: Vec<NonlinearitySpec>,
    pub snr_db: Vec<f64>,
    pub vad_high_dbfs: f64,
    pub vad_low_dbfs: f64,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            seed: 0,
            seconds: 60.0,
            scene_seconds: 10.0,
            far: SourceSpec::Synthetic,
            near: SourceSpec::Synthetic,
            rir: SourceSpec::Synthetic,
            rir_count: 8,
            rt60: (0.05, 0.3),
            rir_max_taps: 2400,
            nonlinearity: vec![
                NonlinearitySpec::None,
                NonlinearitySpec::Tanh { drive: 1.5 },
                NonlinearitySpec::HardClip { drive: 2.0 },
            ],
            snr_db: vec![-5.0, 0.0, 5.0, 10.0],
            vad_high_dbfs: VAD_HIGH_DBFS,
            vad_low_dbfs: VAD_LOW_DBFS,
        }
    }
}

impl Manifest {
    pub fn scene_count(&self) -> usize {
        (self.seconds / self.scene_seconds).ceil().max(1.0) as usize
    }

    pub fn scene_samples(&self, index: usize) -> usize {
        let total = (self.seconds * crate::SAMPLE_RATE as f64).round() as usize;
        let per = (self.scene_seconds * crate::SAMPLE_RATE as f64).round() as usize;
        per.min(total.saturating_sub(index * per))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AecError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parse manifest text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut m = Manifest::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: String| AecError::Manifest { line: line_no, reason };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key = value, got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let list = || value.split(',').map(str::trim).filter(|s| !s.is_empty());
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("'{s}' is not a number")))
            };
            let int = |s: &str| -> Result<u64> {
                s.parse::<u64>().map_err(|_| bad(format!("'{s}' is not a non-negative integer")))
            };
            let source = || -> SourceSpec {
                if value == "synthetic" {
                    SourceSpec::Synthetic
                } else {
                    SourceSpec::Files(list().map(|p| base.join(p)).collect())
                }
            };
            match key {
                "seed" => m.seed = int(value)?,
                "seconds" => m.seconds = num(value)?,
                "scene_seconds" => m.scene_seconds = num(value)?,
                "far" => m.far = source(),
                "near" => m.near = source(),
                "rir" => m.rir = source(),
                "rir_count" => m.rir_count = int(value)? as usize,
                "rt60" => {
                    let v: Vec<f64> = list().map(num).collect::<Result<_>>()?;
                    if v.len() != 2 || v[0] > v[1] || v[0] <= 0.0 {
                        return Err(bad("rt60 needs 'min, max' with 0 < min <= max".into()));
                    }
                    m.rt60 = (v[0], v[1]);
                }
                "rir_max_taps" => m.rir_max_taps = int(value)? as usize,
                "nonlinearity" => {
                    m.nonlinearity = list()
                        .map(|s| NonlinearitySpec::parse(s).map_err(|e| bad(e.to_string())))
                        .collect::<Result<_>>()?
                }
                "snr_db" => m.snr_db = list().map(num).collect::<Result<_>>()?,
                "vad_high_dbfs" => m.vad_high_dbfs = num(value)?,
                "vad_low_dbfs" => m.vad_low_dbfs = num(value)?,
                _ => return Err(bad(format!("unknown key '{key}'"))),
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| AecError::Manifest { line: 0, reason: reason.into() };
        if !(self.seconds > 0.0) || !(self.scene_seconds > 0.0) {
            return Err(bad("seconds and scene_seconds must be positive"));
        }
        if self.vad_high_dbfs <= self.vad_low_dbfs {
            return Err(bad("vad_high_dbfs must exceed vad_low_dbfs"));
        }
        if self.nonlinearity.is_empty() || self.snr_db.is_empty() {
            return Err(bad("nonlinearity and snr_db grids must not be empty"));
        }
        if self.rir_count == 0 || !(16..=2400).contains(&self.rir_max_taps) {
            return Err(bad("rir_count must be positive and rir_max_taps within 16..=2400"));
        }
        for s in [&self.far, &self.near, &self.rir] {
            if matches!(s, SourceSpec::Files(f) if f.is_empty()) {
                return Err(bad("file source lists no files"));
            }
        }
        Ok(())
    }
}
