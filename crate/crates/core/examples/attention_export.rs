//! Channel and temporal attention of a model trained on the switching data:
//! per window, the temporal factor and the mean channel factor of each
//! stream block.
//!
//! ```text
//! cargo run --release --example attention_export
//! ```

use cdgin::cdgin::Stream;
use cdgin::cli::attention_csv;
use cdgin::config::TrainConfig;
use cdgin::model::attention_record;
use cdgin::synthgen::{generate, SynthKind, SynthSpec};
use cdgin::train_eval::{prepare_inputs, train};

fn main() -> cdgin::Result<()> {
    let subjects = generate(&SynthSpec {
        kind: SynthKind::Switching,
        n_subjects: 20,
        noise_std: 0.1,
        ..SynthSpec::default()
    })?;
    let cfg = TrainConfig {
        window_size: 30,
        stride: 15,
        epochs: 30,
        lr: 2e-3,
        ..TrainConfig::default()
    };
    let trained = train(&subjects, &cfg)?;
    let inputs = prepare_inputs(&subjects, &trained.input)?;
    let records = inputs
        .iter()
        .take(2)
        .map(|s| attention_record(&trained.params, &trained.model, s))
        .collect::<cdgin::Result<Vec<_>>>()?;

    for r in &records {
        println!("{} (label {}, p = {:.3})", r.subject_id, r.label, r.prob);
        let last = r.layers.last().unwrap();
        let (cr, cd) = (
            last.mean_channel(Stream::Correlation).unwrap(),
            last.mean_channel(Stream::Distance).unwrap(),
        );
        for (t, (start, temporal)) in last.window_starts.iter().zip(&last.temporal).enumerate() {
            println!(
                "  window {t} @ t={start:>3}: temporal {temporal:.3}  pcc {:.3}  distance {:.3}",
                cr * temporal,
                cd * temporal
            );
        }
    }
    println!("\n{}", attention_csv(&records).lines().take(4).collect::<Vec<_>>().join("\n"));
    Ok(())
}
