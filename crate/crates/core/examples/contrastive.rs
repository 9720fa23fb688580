//! The cross-stream contrastive loss on hand-made projections.
//!
//! ```text
//! cargo run --example contrastive
//! ```

use cdgin::cdgin::{contrastive_loss, ContrastiveConfig};
use cdgin::diffcore::{ParamStore, Tape, Tensor};
use cdgin::matrix::Matrix;

fn loss(zr: &Matrix, zd: &Matrix, delta: usize) -> cdgin::Result<f64> {
    let mut tape = Tape::new();
    let (a, b) = (tape.constant(zr.clone()), tape.constant(zd.clone()));
    let l = contrastive_loss(&mut tape, &[a, b], &ContrastiveConfig { delta, alpha: 0.1 })?;
    Ok(tape.scalar(l))
}

fn main() -> cdgin::Result<()> {
    let same = Matrix::from_vec(2, 2, vec![1.0, 0.0, 1.0, 0.0]);
    println!("two windows, identical unit projections: {:.12} (ln 3 = {:.12})", loss(&same, &same, 1)?, 3f64.ln());

    // Neighbouring windows agree, distant windows are orthogonal.
    let smooth = Matrix::from_fn(4, 4, |t, k| if k == t / 2 { 1.0 } else { 0.0 });
    let shuffled = Matrix::from_fn(4, 4, |t, k| if k == t { 1.0 } else { 0.0 });
    println!("temporally smooth projections:  {:.4}", loss(&smooth, &smooth, 1)?);
    println!("every window orthogonal:        {:.4}", loss(&shuffled, &shuffled, 1)?);

    // Gradient with respect to the projections, through a parameter store.
    let mut store = ParamStore::new();
    store.insert("zr", Tensor::new(vec![4, 4], smooth.as_slice().to_vec()));
    store.insert("zd", Tensor::new(vec![4, 4], shuffled.as_slice().to_vec()));
    let mut tape = Tape::new();
    let (a, b) = (tape.param(&store, "zr"), tape.param(&store, "zd"));
    let l = contrastive_loss(&mut tape, &[a, b], &ContrastiveConfig { delta: 1, alpha: 0.1 })?;
    tape.backward(l, &mut store, 1.0)?;
    let g = store.grad("zr").unwrap();
    println!("mixed streams: {:.4}, |dL/dz_r| = {:.4}", tape.scalar(l), g.iter().map(|v| v * v).sum::<f64>().sqrt());
    Ok(())
}
