use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::params::ParamStore;
use crate::error::Result;

/// Denominator floor for relative errors.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub coordinates_checked: usize,
    pub tensors_covered: usize,
    pub step: f64,
}

/// `|a - b| / max(|a|, |b|, REL_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Picks at least `min_total` coordinates (all of them if the model is
/// smaller), with every tensor represented at least once.
pub fn sample_coordinates(params: &ParamStore, min_total: usize, seed: u64) -> Vec<(String, usize)> {
    let total = params.num_values();
    if total <= min_total {
        return params
            .iter()
            .flat_map(|(name, t)| (0..t.len()).map(move |i| (name.clone(), i)))
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::new();
    // Proportional share per tensor, never below one.
    for (name, t) in params.iter() {
        let share = ((t.len() * min_total).div_ceil(total)).clamp(1, t.len());
        let mut picked: Vec<usize> = sample(&mut rng, t.len(), share).into_iter().collect();
        picked.sort_unstable();
        coords.extend(picked.into_iter().map(|i| (name.clone(), i)));
    }
    coords
}

/// Compares reverse-mode gradients with central differences.
///
/// `eval(params, with_grad)` must return the loss and, when `with_grad` is
/// set, leave the gradient of that loss in `params` (starting from zeroed
/// buffers).
pub fn check<F>(params: &ParamStore, coords: &[(String, usize)], step: f64, mut eval: F) -> Result<GradcheckReport>
where
    F: FnMut(&mut ParamStore, bool) -> Result<f64>,
{
    let mut work = params.clone();
    work.zero_grad();
    eval(&mut work, true)?;
    let analytic = work.clone();
    work.zero_grad();

    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        coordinates_checked: coords.len(),
        tensors_covered: 0,
        step,
    };
    let mut seen = std::collections::BTreeSet::new();
    for (name, idx) in coords {
        seen.insert(name.as_str());
        let original = work.get(name).expect("sampled name exists").values()[*idx];
        work.get_mut(name).unwrap().values_mut()[*idx] = original + step;
        let plus = eval(&mut work, false)?;
        work.get_mut(name).unwrap().values_mut()[*idx] = original - step;
        let minus = eval(&mut work, false)?;
        work.get_mut(name).unwrap().values_mut()[*idx] = original;

        let numeric = (plus - minus) / (2.0 * step);
        let g = analytic.grad(name).map_or(0.0, |g| g[*idx]);
        let err = relative_error(g, numeric);
        if err > report.max_rel_error || report.worst_param.is_empty() {
            report.max_rel_error = err;
            report.worst_param = name.clone();
            report.worst_index = *idx;
        }
    }
    report.tensors_covered = seen.len();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::params::Tensor;
    use crate::diffcore::tape::Tape;

    #[test]
    fn cubic_passes() {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::new(vec![3], vec![0.3, -1.2, 2.0]));
        let coords = sample_coordinates(&p, 200, 0);
        assert_eq!(coords.len(), 3);
        let report = check(&p, &coords, 1e-5, |ps, grad| {
            let mut tape = Tape::new();
            let x = tape.param(ps, "x");
            let x2 = tape.mul(x, x);
            let x3 = tape.mul(x2, x);
            let loss = tape.sum(x3);
            if grad {
                tape.backward(loss, ps, 1.0)?;
            }
            Ok(tape.scalar(loss))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
        assert_eq!(report.tensors_covered, 1);
    }

    #[test]
    fn sampling_covers_every_tensor() {
        let mut p = ParamStore::new();
        p.insert("big", Tensor::zeros(vec![1000]));
        p.insert("tiny", Tensor::zeros(vec![1]));
        let coords = sample_coordinates(&p, 200, 7);
        assert!(coords.len() >= 200);
        assert!(coords.iter().any(|(n, _)| n == "tiny"));
    }
}
