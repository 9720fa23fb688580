//! Labeled synthetic ROI datasets whose classes differ in one specific way.
//!
//! * `correlation`: a block of ROIs shares one latent signal; the block sits
//!   at the front for class 0 and at the back for class 1.
//! * `amplitude`: identical latent structure for both classes; class 1 is the
//!   same draw multiplied by a constant factor, so Pearson matrices coincide
//!   exactly while distances scale.
//! * `switching`: two ROI partitions (contiguous halves and even/odd). Class 0
//!   mixes both partitions' latents for the whole scan; class 1 follows the
//!   first partition for the first half and the second afterwards. The
//!   whole-scan correlation is the same in expectation; windows differ.
//!
//! Each ROI is `latent + noise_std * N(0, 1)`, i.i.d. over time.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data_io::{write_manifest, write_roi_csv, DatasetManifest, ManifestEntry, RoiTimeSeries, MANIFEST_SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Correlation,
    Amplitude,
    Switching,
}

impl SynthKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "correlation" => Ok(SynthKind::Correlation),
            "amplitude" => Ok(SynthKind::Amplitude),
            "switching" => Ok(SynthKind::Switching),
            other => Err(Error::Spec(format!("unknown kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n_subjects: usize,
    pub rois: usize,
    pub timepoints: usize,
    pub noise_std: f64,
    pub seed: u64,
    /// Class-1 multiplier for `amplitude`.
    pub amplitude_factor: f64,
    /// Shared-latent block size; `None` means `rois / 2`.
    pub block_size: Option<usize>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            kind: SynthKind::Correlation,
            n_subjects: 60,
            rois: 10,
            timepoints: 120,
            noise_std: 0.5,
            seed: 0,
            amplitude_factor: 2.0,
            block_size: None,
        }
    }
}

impl SynthSpec {
    pub fn block(&self) -> usize {
        self.block_size.unwrap_or(self.rois / 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects < 2 || self.n_subjects % 2 != 0 {
            return Err(Error::Spec(format!(
                "n_subjects must be even and >= 2 for balanced classes, got {}",
                self.n_subjects
            )));
        }
        if self.rois < 4 {
            return Err(Error::Spec(format!("need at least 4 ROIs, got {}", self.rois)));
        }
        if self.timepoints < 4 {
            return Err(Error::Spec(format!("need at least 4 timepoints, got {}", self.timepoints)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Spec(format!("noise_std must be finite and >= 0, got {}", self.noise_std)));
        }
        if !(self.amplitude_factor > 0.0 && self.amplitude_factor.is_finite()) {
            return Err(Error::Spec(format!("amplitude_factor must be > 0, got {}", self.amplitude_factor)));
        }
        let b = self.block();
        if b < 2 || b > self.rois {
            return Err(Error::Spec(format!("block size {b} must be in 2..={}", self.rois)));
        }
        Ok(())
    }
}

fn subject_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn subject_id(index: usize) -> String {
    format!("sub-{index:03}")
}

/// Subject `index` with an explicit label. The random draws depend only on
/// `(seed, index)`, so the two labels of one index share latents and noise.
pub fn generate_subject(spec: &SynthSpec, index: usize, label: u8) -> Result<RoiTimeSeries> {
    spec.validate()?;
    let (t_len, m) = (spec.timepoints, spec.rois);
    let mut rng = subject_rng(spec.seed, index);
    let mut x = Matrix::zeros(t_len, m);
    match spec.kind {
        SynthKind::Correlation | SynthKind::Amplitude => {
            let b = spec.block();
            let block = if spec.kind == SynthKind::Correlation && label == 1 { m - b..m } else { 0..b };
            for t in 0..t_len {
                let shared = normal(&mut rng);
                for j in 0..m {
                    let own = normal(&mut rng);
                    let noise = normal(&mut rng);
                    let latent = if block.contains(&j) { shared } else { own };
                    x[(t, j)] = latent + spec.noise_std * noise;
                }
            }
            if spec.kind == SynthKind::Amplitude && label == 1 {
                x = x.scale(spec.amplitude_factor);
            }
        }
        SynthKind::Switching => {
            let half = t_len / 2;
            for t in 0..t_len {
                // contiguous halves, then even/odd
                let lat = [normal(&mut rng), normal(&mut rng), normal(&mut rng), normal(&mut rng)];
                for j in 0..m {
                    let first = if j < m / 2 { lat[0] } else { lat[1] };
                    let second = if j % 2 == 0 { lat[2] } else { lat[3] };
                    let noise = normal(&mut rng);
                    let latent = if label == 0 {
                        (first + second) / std::f64::consts::SQRT_2
                    } else if t < half {
                        first
                    } else {
                        second
                    };
                    x[(t, j)] = latent + spec.noise_std * noise;
                }
            }
        }
    }
    RoiTimeSeries::new(subject_id(index), x, label)
}

/// Balanced dataset: even indices are class 0, odd indices class 1.
pub fn generate(spec: &SynthSpec) -> Result<Vec<RoiTimeSeries>> {
    spec.validate()?;
    (0..spec.n_subjects)
        .map(|i| generate_subject(spec, i, (i % 2) as u8))
        .collect()
}

/// Writes one CSV per subject plus `manifest.json` into `dir`.
pub fn write_dataset(dir: &Path, subjects: &[RoiTimeSeries]) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(subjects.len());
    for s in subjects {
        let file = PathBuf::from(format!("{}.csv", s.subject_id));
        write_roi_csv(&dir.join(&file), &s.signals)?;
        entries.push(ManifestEntry {
            id: s.subject_id.clone(),
            path: file,
            label: s.label,
        });
    }
    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        roi_count: subjects.first().map_or(0, RoiTimeSeries::rois),
        entries,
    };
    write_manifest(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
