//! Sliding windows and per-window similarity graphs.
//!
//! Each window yields two `M x M` similarity matrices over ROIs: Pearson
//! correlation and negated pairwise distance. Each is thresholded on its own
//! into a binary adjacency keeping the top 30% of unique off-diagonal pairs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Standard deviations below this are treated as zero when correlating.
pub const FLAT_STD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window_size: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn new(window_size: usize, stride: usize) -> Result<Self> {
        if window_size < 2 || stride < 1 {
            return Err(Error::Shape(format!(
                "window size must be >= 2 and stride >= 1 (got {window_size}, {stride})"
            )));
        }
        Ok(WindowSpec { window_size, stride })
    }

    /// `floor((T - WS) / SS) + 1`, or 0 when the window does not fit.
    pub fn count(&self, timepoints: usize) -> usize {
        if self.window_size > timepoints {
            0
        } else {
            (timepoints - self.window_size) / self.stride + 1
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub index: usize,
    pub start: usize,
    pub len: usize,
}

impl Window {
    /// Last timepoint covered by the window.
    pub fn end(&self) -> usize {
        self.start + self.len - 1
    }

    pub fn slice(&self, signals: &Matrix) -> Matrix {
        signals.row_block(self.start, self.len)
    }
}

/// Windows start at `0, SS, 2*SS, ...`; partial trailing windows are dropped.
pub fn extract_windows(timepoints: usize, spec: WindowSpec) -> Result<Vec<Window>> {
    if spec.window_size > timepoints {
        return Err(Error::Shape(format!(
            "window size {} exceeds sequence length {timepoints}",
            spec.window_size
        )));
    }
    Ok((0..spec.count(timepoints))
        .map(|index| Window {
            index,
            start: index * spec.stride,
            len: spec.window_size,
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistanceKind {
    Manhattan,
    Euclidean,
    /// Ridge `lambda = ridge_scale * trace(cov) / WS` is added to the
    /// covariance before inversion.
    Mahalanobis { ridge_scale: f64 },
}

impl DistanceKind {
    pub const DEFAULT_RIDGE_SCALE: f64 = 1e-3;

    pub fn parse(name: &str, ridge_scale: f64) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "manhattan" => Ok(DistanceKind::Manhattan),
            "euclidean" => Ok(DistanceKind::Euclidean),
            "mahalanobis" => {
                if !(ridge_scale > 0.0 && ridge_scale.is_finite()) {
                    return Err(Error::Config(format!("mahalanobis ridge scale must be > 0, got {ridge_scale}")));
                }
                Ok(DistanceKind::Mahalanobis { ridge_scale })
            }
            other => Err(Error::Config(format!("unknown distance `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DistanceKind::Manhattan => "manhattan",
            DistanceKind::Euclidean => "euclidean",
            DistanceKind::Mahalanobis { .. } => "mahalanobis",
        }
    }
}

/// `M x M` Pearson correlation between the columns of a `WS x M` window.
/// Pairs involving a flat column (std below [`FLAT_STD`]) get 0; the diagonal
/// is always 1.
pub fn pearson_matrix(window: &Matrix) -> Matrix {
    let (n, m) = window.shape();
    let mut centered = window.clone();
    let mut norms = vec![0.0; m];
    for j in 0..m {
        let mean = (0..n).map(|i| window[(i, j)]).sum::<f64>() / n as f64;
        let mut ss = 0.0;
        for i in 0..n {
            let c = window[(i, j)] - mean;
            centered[(i, j)] = c;
            ss += c * c;
        }
        norms[j] = ss.sqrt();
    }
    let flat: Vec<bool> = norms.iter().map(|&s| s / ((n - 1) as f64).sqrt() < FLAT_STD).collect();
    let mut r = Matrix::identity(m);
    for a in 0..m {
        for b in a + 1..m {
            let v = if flat[a] || flat[b] {
                0.0
            } else {
                let dot: f64 = (0..n).map(|i| centered[(i, a)] * centered[(i, b)]).sum();
                (dot / (norms[a] * norms[b])).clamp(-1.0, 1.0)
            };
            r[(a, b)] = v;
            r[(b, a)] = v;
        }
    }
    r
}

fn negated_pairwise(columns: &Matrix, metric: impl Fn(&[f64], &[f64]) -> f64) -> Result<Matrix> {
    // columns: one ROI per row
    let m = columns.rows();
    let mut d = Matrix::zeros(m, m);
    for a in 0..m {
        for b in a + 1..m {
            let v = metric(columns.row(a), columns.row(b));
            if !v.is_finite() {
                return Err(Error::Numerics {
                    op: format!("distance({a},{b})"),
                });
            }
            d[(a, b)] = -v;
            d[(b, a)] = -v;
        }
    }
    Ok(d)
}

fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

fn manhattan(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

/// `M x M` negated distance between the columns of a `WS x M` window.
pub fn distance_matrix(window: &Matrix, kind: DistanceKind) -> Result<Matrix> {
    let rois = window.transpose();
    match kind {
        DistanceKind::Euclidean => negated_pairwise(&rois, euclidean),
        DistanceKind::Manhattan => negated_pairwise(&rois, manhattan),
        DistanceKind::Mahalanobis { ridge_scale } => {
            let cov = roi_sample_covariance(window);
            let trace: f64 = (0..cov.rows()).map(|i| cov[(i, i)]).sum();
            let mut lambda = ridge_scale * trace / cov.rows() as f64;
            if !(lambda > 0.0) {
                // Every ROI identical in this window; any positive ridge works.
                lambda = ridge_scale;
            }
            let mut reg = cov;
            for i in 0..reg.rows() {
                reg[(i, i)] += lambda;
            }
            mahalanobis_with_covariance(window, &reg)
        }
    }
}

/// Covariance (`WS x WS`) of the `M` ROI vectors of a window, each ROI one
/// sample in `WS`-dimensional space.
pub fn roi_sample_covariance(window: &Matrix) -> Matrix {
    let (ws, m) = window.shape();
    let means: Vec<f64> = (0..ws).map(|i| window.row(i).iter().sum::<f64>() / m as f64).collect();
    let denom = (m.max(2) - 1) as f64;
    Matrix::from_fn(ws, ws, |p, q| {
        (0..m)
            .map(|j| (window[(p, j)] - means[p]) * (window[(q, j)] - means[q]))
            .sum::<f64>()
            / denom
    })
}

/// Negated Mahalanobis distance under an explicit (positive definite)
/// covariance.
pub fn mahalanobis_with_covariance(window: &Matrix, covariance: &Matrix) -> Result<Matrix> {
    let (ws, m) = window.shape();
    if covariance.shape() != (ws, ws) {
        return Err(Error::Shape(format!(
            "covariance is {:?}, window length is {ws}",
            covariance.shape()
        )));
    }
    let cov = DMatrix::from_row_slice(ws, ws, covariance.as_slice());
    let chol = cov.cholesky().ok_or_else(|| Error::Numerics {
        op: "mahalanobis cholesky".into(),
    })?;
    // Whitening: ||L^-1 (x_i - x_j)|| is the Mahalanobis distance.
    let x = DMatrix::from_row_slice(ws, m, window.as_slice());
    let white = chol
        .l()
        .solve_lower_triangular(&x)
        .ok_or_else(|| Error::Numerics {
            op: "mahalanobis solve".into(),
        })?;
    let rois = Matrix::from_fn(m, ws, |j, i| white[(i, j)]);
    negated_pairwise(&rois, euclidean)
}

/// Number of edges kept out of `e` unique pairs: `ceil(0.3 * e)`, computed in
/// integers.
pub fn top_k_count(unique_pairs: usize) -> usize {
    (3 * unique_pairs).div_ceil(10)
}

/// Keeps the `ceil(0.3 * E)` largest unique off-diagonal entries as symmetric
/// unit edges. Ties at the cut go to the lexicographically smaller `(i, j)`.
pub fn binarize_topk(s: &Matrix) -> Result<Matrix> {
    let m = s.rows();
    if s.cols() != m {
        return Err(Error::Shape(format!("similarity matrix is {}x{}", m, s.cols())));
    }
    if m < 2 {
        return Err(Error::Shape(format!("need at least 2 ROIs to threshold, got {m}")));
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            pairs.push((s[(i, j)], i, j));
        }
    }
    let k = top_k_count(pairs.len());
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut a = Matrix::zeros(m, m);
    for &(_, i, j) in &pairs[..k] {
        a[(i, j)] = 1.0;
        a[(j, i)] = 1.0;
    }
    Ok(a)
}

/// Upper-triangle edges of a binary adjacency as `(src, dst)` pairs.
pub fn edge_list(adjacency: &Matrix) -> Vec<(usize, usize)> {
    let m = adjacency.rows();
    let mut out = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            if adjacency[(i, j)] != 0.0 {
                out.push((i, j));
            }
        }
    }
    out
}

/// Similarity matrices and adjacencies of one window.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedFcPair {
    pub window_index: usize,
    pub start: usize,
    pub r: Matrix,
    pub d: Matrix,
    pub a_r: Matrix,
    pub a_d: Matrix,
}

pub fn window_fc(signals: &Matrix, window: Window, kind: DistanceKind) -> Result<WindowedFcPair> {
    let x = window.slice(signals);
    let r = pearson_matrix(&x);
    let d = distance_matrix(&x, kind)?;
    Ok(WindowedFcPair {
        window_index: window.index,
        start: window.start,
        a_r: binarize_topk(&r)?,
        a_d: binarize_topk(&d)?,
        r,
        d,
    })
}

pub fn dynamic_fc(signals: &Matrix, spec: WindowSpec, kind: DistanceKind) -> Result<Vec<WindowedFcPair>> {
    extract_windows(signals.rows(), spec)?
        .into_iter()
        .map(|w| window_fc(signals, w, kind))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(x: &[f64], y: &[f64]) -> Matrix {
        Matrix::from_fn(x.len(), 2, |i, j| if j == 0 { x[i] } else { y[i] })
    }

    #[test]
    fn window_counts() {
        let starts: Vec<usize> = extract_windows(100, WindowSpec::new(35, 25).unwrap())
            .unwrap()
            .iter()
            .map(|w| w.start)
            .collect();
        assert_eq!(starts, vec![0, 25, 50]);
        assert_eq!(extract_windows(50, WindowSpec::new(50, 5).unwrap()).unwrap().len(), 1);
        // floor((40 - 10) / 5) + 1
        assert_eq!(extract_windows(40, WindowSpec::new(10, 5).unwrap()).unwrap().len(), 7);
        assert!(matches!(extract_windows(20, WindowSpec::new(21, 1).unwrap()), Err(Error::Shape(_))));
    }

    #[test]
    fn pearson_exact_cases() {
        assert!((pearson_matrix(&pair(&[1., 2., 3.], &[1., 2., 3.]))[(0, 1)] - 1.0).abs() < 1e-15);
        assert!((pearson_matrix(&pair(&[1., 2., 3.], &[3., 2., 1.]))[(0, 1)] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn pearson_brute_force_value() {
        // means 7/3 and 13/3; cov*n = 7/3*... computed independently:
        // dx = [-4/3, -1/3, 5/3], dy = [-10/3, -4/3, 14/3]
        let dx = [-4.0 / 3.0, -1.0 / 3.0, 5.0 / 3.0];
        let dy = [-10.0 / 3.0, -4.0 / 3.0, 14.0 / 3.0];
        let num: f64 = dx.iter().zip(&dy).map(|(a, b)| a * b).sum();
        let den = dx.iter().map(|a| a * a).sum::<f64>().sqrt() * dy.iter().map(|b| b * b).sum::<f64>().sqrt();
        let expected = num / den;
        assert!((expected - 0.9959).abs() < 1e-4);
        let r = pearson_matrix(&pair(&[1., 2., 4.], &[1., 3., 9.]));
        assert!((r[(0, 1)] - expected).abs() < 1e-14);
    }

    #[test]
    fn flat_roi_correlates_to_zero() {
        let r = pearson_matrix(&pair(&[2., 2., 2.], &[1., 5., 3.]));
        assert_eq!(r[(0, 1)], 0.0);
        assert_eq!(r[(0, 0)], 1.0);
    }

    #[test]
    fn distance_exact_cases() {
        let d = distance_matrix(&pair(&[0., 0.], &[3., 4.]), DistanceKind::Euclidean).unwrap();
        assert_eq!(d[(0, 1)], -5.0);
        assert_eq!(d[(1, 0)], -5.0);
        assert_eq!(d[(0, 0)], 0.0);
        let d = distance_matrix(&pair(&[1., 2.], &[3., 5.]), DistanceKind::Manhattan).unwrap();
        assert_eq!(d[(0, 1)], -5.0);
    }

    #[test]
    fn mahalanobis_identity_reduces_to_euclidean() {
        let w = Matrix::from_fn(6, 4, |i, j| ((i * 3 + j * 5) % 7) as f64 - 2.5);
        let m = mahalanobis_with_covariance(&w, &Matrix::identity(6)).unwrap();
        let e = distance_matrix(&w, DistanceKind::Euclidean).unwrap();
        assert!(m.max_abs_diff(&e) < 1e-12);
    }

    #[test]
    fn mahalanobis_is_nonpositive_and_symmetric() {
        let w = Matrix::from_fn(12, 5, |i, j| ((i * 7 + j * 13) % 11) as f64 * 0.1 + (i as f64).sin());
        let d = distance_matrix(&w, DistanceKind::Mahalanobis { ridge_scale: 1e-3 }).unwrap();
        assert!(d.is_symmetric(1e-12));
        assert!(d.as_slice().iter().all(|&v| v <= 0.0));
    }

    #[test]
    fn topk_rank_case() {
        // upper triangle values 1..=6 in (i,j) order
        let mut s = Matrix::zeros(4, 4);
        let mut v = 1.0;
        for i in 0..4 {
            for j in i + 1..4 {
                s[(i, j)] = v;
                s[(j, i)] = v;
                v += 1.0;
            }
        }
        let a = binarize_topk(&s).unwrap();
        // 6 is at (2,3), 5 at (1,3)
        assert_eq!(edge_list(&a), vec![(1, 3), (2, 3)]);
        assert_eq!(a.sum(), 4.0);
    }

    #[test]
    fn topk_ties_take_lexicographic_first() {
        let s = Matrix::filled(5, 5, 0.7);
        let a = binarize_topk(&s).unwrap();
        // E = 10, k = 3
        assert_eq!(edge_list(&a), vec![(0, 1), (0, 2), (0, 3)]);
        assert_eq!((0..5).map(|i| a[(i, i)]).sum::<f64>(), 0.0);
    }

    #[test]
    fn topk_two_rois_always_connected() {
        let a = binarize_topk(&Matrix::from_rows(&[[0.0, -9.0], [-9.0, 0.0]])).unwrap();
        assert_eq!(edge_list(&a), vec![(0, 1)]);
        assert!(matches!(binarize_topk(&Matrix::zeros(1, 1)), Err(Error::Shape(_))));
    }

    #[test]
    fn top_k_count_avoids_float_rounding() {
        assert_eq!(top_k_count(10), 3);
        assert_eq!(top_k_count(6), 2);
        assert_eq!(top_k_count(1), 1);
        assert_eq!(top_k_count(45), 14);
    }
}
