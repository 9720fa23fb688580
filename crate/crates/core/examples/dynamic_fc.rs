//! Sliding-window similarity graphs for one synthetic subject.
//!
//! ```text
//! cargo run --example dynamic_fc
//! ```

use cdgin::data_io::zscore_normalize;
use cdgin::dynamic_fc::{dynamic_fc, edge_list, DistanceKind, WindowSpec};
use cdgin::synthgen::{generate_subject, SynthKind, SynthSpec};

fn main() -> cdgin::Result<()> {
    let spec = SynthSpec {
        kind: SynthKind::Switching,
        rois: 8,
        timepoints: 120,
        noise_std: 0.1,
        ..SynthSpec::default()
    };
    // class 1 switches partitions half way through the scan
    let subject = zscore_normalize(&generate_subject(&spec, 0, 1)?);
    let windows = dynamic_fc(&subject.signals, WindowSpec::new(30, 15)?, DistanceKind::Euclidean)?;

    println!("{} windows of 30 timepoints, stride 15", windows.len());
    for w in &windows {
        let r_edges = edge_list(&w.a_r);
        let d_edges = edge_list(&w.a_d);
        let shared = r_edges.iter().filter(|e| d_edges.contains(e)).count();
        println!(
            "window {} @ t={:>3}: r(0,1)={:+.2} r(0,2)={:+.2} | {} correlation edges, {} distance edges, {} shared",
            w.window_index,
            w.start,
            w.r[(0, 1)],
            w.r[(0, 2)],
            r_edges.len(),
            d_edges.len(),
            shared
        );
    }

    let first = &windows[0];
    println!("\ncorrelation edges of window 0: {:?}", edge_list(&first.a_r));
    let last = windows.last().unwrap();
    println!("correlation edges of window {}: {:?}", last.window_index, edge_list(&last.a_r));

    let maha = DistanceKind::Mahalanobis {
        ridge_scale: DistanceKind::DEFAULT_RIDGE_SCALE,
    };
    let w = &dynamic_fc(&subject.signals, WindowSpec::new(30, 15)?, maha)?[0];
    println!("\nmahalanobis window 0, d(0, 1..4): {:?}", (1..4).map(|j| w.d[(0, j)]).collect::<Vec<_>>());
    Ok(())
}
