//! Reverse-mode gradients of the full training loss against central
//! differences, on the tiny configuration and on a single-stream variant.
//!
//! ```text
//! cargo run --release --example gradcheck
//! ```

use cdgin::config::TrainConfig;
use cdgin::train_eval::{gradcheck_model, tiny_config};

fn main() -> cdgin::Result<()> {
    let variants = [
        ("tiny (both streams)", tiny_config()),
        (
            "distance stream only, mahalanobis",
            TrainConfig {
                streams: "distance".into(),
                distance: "mahalanobis".into(),
                ..tiny_config()
            },
        ),
        (
            "three layers, delta 2",
            TrainConfig {
                layers: 3,
                delta: 2,
                ..tiny_config()
            },
        ),
    ];
    for (name, cfg) in variants {
        for seed in [1, 2] {
            let r = gradcheck_model(&cfg, seed)?;
            println!(
                "{name:<36} seed {seed}: max rel error {:.2e} at {}[{}] ({} coordinates, {} tensors)",
                r.max_rel_error, r.worst_param, r.worst_index, r.coordinates_checked, r.tensors_covered
            );
        }
    }
    Ok(())
}
