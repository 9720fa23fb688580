//! Train on synthetic correlation-structured data, score the held-out test
//! subjects and round-trip the checkpoint.
//!
//! ```text
//! cargo run --release --example train_holdout [epochs]
//! ```

use cdgin::config::TrainConfig;
use cdgin::data_io::{DatasetManifest, ManifestEntry, MANIFEST_SCHEMA_VERSION};
use cdgin::diffcore::checkpoint;
use cdgin::synthgen::{generate, SynthKind, SynthSpec};
use cdgin::train_eval::{prepare_inputs, train_holdout, evaluate};

fn main() -> cdgin::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(40);
    let subjects = generate(&SynthSpec {
        kind: SynthKind::Correlation,
        n_subjects: 40,
        seed: 3,
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
    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let (trained, report) = train_holdout(&manifest, &subjects, &cfg)?;
    for e in trained.log.iter().step_by((epochs / 8).max(1)) {
        println!("epoch {:>3}: loss {:.4} (bce {:.4}, contrastive {:.4})", e.epoch, e.mean_loss, e.bce, e.info_loss);
    }
    println!(
        "test ({} subjects): auc {} acc {} se {} sp {}",
        report.test.n, report.test.auc, report.test.acc, report.test.se, report.test.sp
    );

    let path = std::env::temp_dir().join("cdgin_example_model.ckpt");
    checkpoint::save(&path, &trained.params)?;
    let mut restored = trained.model.init_params(0)?;
    checkpoint::restore_into(&mut restored, &checkpoint::load(&path)?)?;
    let inputs = prepare_inputs(&subjects, &trained.input)?;
    let before = evaluate(&trained.params, &trained.model, &inputs)?;
    let after = evaluate(&restored, &trained.model, &inputs)?;
    println!("checkpoint {}: all-subject auc {} before, {} after reload", path.display(), before.auc, after.auc);
    Ok(())
}
