//! Both streams against each single-stream ablation on one synthetic
//! dataset kind, scored on the held-out test subjects.
//!
//! ```text
//! cargo run --release --example stream_ablation [correlation|amplitude|switching] [epochs]
//! ```

use cdgin::config::TrainConfig;
use cdgin::data_io::{DatasetManifest, ManifestEntry, MANIFEST_SCHEMA_VERSION};
use cdgin::synthgen::{generate, SynthKind, SynthSpec};
use cdgin::train_eval::train_holdout;

fn main() -> cdgin::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind = SynthKind::parse(&args.next().unwrap_or_else(|| "switching".into()))?;
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(40);
    let subjects = generate(&SynthSpec {
        kind,
        noise_std: if kind == SynthKind::Switching { 0.1 } else { 0.5 },
        seed: 7,
        ..SynthSpec::default()
    })?;
    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        roi_count: 10,
        entries: subjects
            .iter()
            .map(|s| ManifestEntry {
                id: s.subject_id.clone(),
                path: format!("{}.csv", s.subject_id).into(),
                label: s.label,
            })
            .collect(),
    };
    println!("{kind:?} data, {epochs} epochs");
    for streams in ["both", "correlation", "distance"] {
        for normalize in [true, false] {
            let cfg = TrainConfig {
                streams: streams.into(),
                normalize,
                epochs,
                window_size: 30,
                stride: 15,
                ..TrainConfig::default()
            };
            let (_, report) = train_holdout(&manifest, &subjects, &cfg)?;
            println!(
                "{streams:<12} normalize={normalize:<5}  test auc {}  acc {}",
                report.test.auc, report.test.acc
            );
        }
    }
    Ok(())
}
