//! Stratified k-fold cross-validation written to disk the way `cdgin cv`
//! does it: one checkpoint and epoch log per fold plus a JSON report.
//!
//! ```text
//! cargo run --release --example cross_validation [out_dir]
//! ```

use std::path::PathBuf;

use cdgin::config::TrainConfig;
use cdgin::data_io::load_dataset;
use cdgin::diffcore::checkpoint;
use cdgin::synthgen::{generate, write_dataset, SynthKind, SynthSpec};
use cdgin::train_eval::{cross_validate, epoch_log_jsonl};
use cdgin::write_atomic;

fn main() -> cdgin::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("cdgin_cv_example"));
    let data = out.join("data");
    write_dataset(
        &data,
        &generate(&SynthSpec {
            kind: SynthKind::Correlation,
            n_subjects: 40,
            seed: 11,
            ..SynthSpec::default()
        })?,
    )?;
    let (manifest, subjects) = load_dataset(&data.join("manifest.json"))?;

    let cfg = TrainConfig {
        epochs: 30,
        folds: 4,
        ..TrainConfig::default()
    };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let (report, _model, artifacts) = cross_validate(&manifest, &subjects, &cfg, jobs)?;
    for (i, a) in artifacts.iter().enumerate() {
        checkpoint::save(&out.join(format!("fold{i}.ckpt")), &a.params)?;
        write_atomic(&out.join(format!("fold{i}_epochs.jsonl")), epoch_log_jsonl(&a.log).as_bytes())?;
    }
    write_atomic(&out.join("cv_report.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;

    for f in &report.per_fold {
        println!(
            "fold {} (seed {}): {} train, {} val, val auc {} acc {}, test auc {}",
            f.fold,
            f.seed,
            f.train_ids.len(),
            f.val_ids.len(),
            f.val.auc,
            f.val.acc,
            f.test.auc
        );
    }
    println!("validation: {:?}", report.summary.formatted);
    println!("held-out test ({} subjects): {:?}", report.test_ids.len(), report.test_summary.formatted);
    println!("wrote {}", out.display());
    Ok(())
}
