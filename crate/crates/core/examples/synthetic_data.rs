//! The three synthetic dataset kinds and what separates their classes,
//! written in the CSV + manifest layout the CLI reads.
//!
//! ```text
//! cargo run --example synthetic_data [out_dir]
//! ```

use std::path::PathBuf;

use cdgin::data_io::load_dataset;
use cdgin::dynamic_fc::{distance_matrix, pearson_matrix, DistanceKind};
use cdgin::matrix::Matrix;
use cdgin::synthgen::{generate, write_dataset, SynthKind, SynthSpec};

fn mean_offdiag(m: &Matrix, rois: std::ops::Range<usize>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for i in rois.clone() {
        for j in rois.clone() {
            if i != j {
                sum += m[(i, j)];
                n += 1;
            }
        }
    }
    sum / n as f64
}

fn main() -> cdgin::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("cdgin_synth_example"));
    for kind in [SynthKind::Correlation, SynthKind::Amplitude, SynthKind::Switching] {
        let spec = SynthSpec {
            kind,
            n_subjects: 10,
            noise_std: 0.1,
            ..SynthSpec::default()
        };
        let dir = out.join(format!("{kind:?}").to_lowercase());
        write_dataset(&dir, &generate(&spec)?)?;
        let (manifest, subjects) = load_dataset(&dir.join("manifest.json"))?;
        println!("{kind:?}: {} subjects in {}", manifest.entries.len(), dir.display());
        for s in subjects.iter().take(2) {
            let half = s.timepoints() / 2;
            let first = s.signals.row_block(0, half);
            let whole = pearson_matrix(&s.signals);
            println!(
                "  {} label {}: pcc rois 0-4 {:+.2}, rois 5-9 {:+.2}, first-half rois 0-4 {:+.2}, mean euclidean {:.1}",
                s.subject_id,
                s.label,
                mean_offdiag(&whole, 0..5),
                mean_offdiag(&whole, 5..10),
                mean_offdiag(&pearson_matrix(&first), 0..5),
                -mean_offdiag(&distance_matrix(&s.signals, DistanceKind::Euclidean)?, 0..10),
            );
        }
    }
    Ok(())
}
