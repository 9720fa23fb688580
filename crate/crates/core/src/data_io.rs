//! ROI time-series loading, dataset manifests, normalization and stratified
//! splitting.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// One subject's `T x M` signal matrix (rows are timepoints, columns ROIs)
/// with its binary response label (1 = responder).
#[derive(Clone, Debug, PartialEq)]
pub struct RoiTimeSeries {
    pub subject_id: String,
    pub signals: Matrix,
    pub label: u8,
}

impl RoiTimeSeries {
    pub fn new(subject_id: impl Into<String>, signals: Matrix, label: u8) -> Result<Self> {
        let subject_id = subject_id.into();
        if signals.rows() < 2 || signals.cols() < 2 {
            return Err(Error::Shape(format!(
                "subject `{subject_id}`: need at least 2 timepoints and 2 ROIs, got {}x{}",
                signals.rows(),
                signals.cols()
            )));
        }
        if !signals.is_finite() {
            return Err(Error::Parse(format!("subject `{subject_id}`: non-finite signal value")));
        }
        if label > 1 {
            return Err(Error::Manifest(format!("subject `{subject_id}`: label {label} is not 0 or 1")));
        }
        Ok(RoiTimeSeries {
            subject_id,
            signals,
            label,
        })
    }

    pub fn timepoints(&self) -> usize {
        self.signals.rows()
    }

    pub fn rois(&self) -> usize {
        self.signals.cols()
    }
}

fn parse_row(record: &csv::StringRecord) -> std::result::Result<Vec<f64>, usize> {
    record
        .iter()
        .enumerate()
        .map(|(j, cell)| cell.trim().parse::<f64>().map_err(|_| j))
        .collect()
}

/// Reads a `timepoints x ROIs` CSV. A first row in which no cell parses as a
/// number is taken as a header of ROI names.
pub fn read_signals_csv(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_signals_csv(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        Error::Shape(msg) => Error::Shape(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_signals_csv(text: &str) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("line {}: {e}", line + 1)))?;
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(Error::Parse(format!(
                    "line {}: expected {w} columns, found {}",
                    line + 1,
                    record.len()
                )))
            }
            _ => width = Some(record.len()),
        }
        match parse_row(&record) {
            Ok(values) => {
                if let Some(j) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Parse(format!("line {}, column {}: non-finite value", line + 1, j + 1)));
                }
                rows.push(values);
            }
            Err(_) if line == 0 && record.iter().all(|c| c.trim().parse::<f64>().is_err()) => {}
            Err(j) => {
                return Err(Error::Parse(format!(
                    "line {}, column {}: `{}` is not a number",
                    line + 1,
                    j + 1,
                    &record[j]
                )))
            }
        }
    }
    let cols = width.unwrap_or(0);
    if rows.len() < 2 || cols < 2 {
        return Err(Error::Shape(format!(
            "need at least 2 timepoints and 2 ROIs, got {}x{cols}",
            rows.len()
        )));
    }
    Ok(Matrix::from_rows(&rows))
}

/// Loads one subject's signals; the label comes from the manifest.
pub fn load_roi_csv(path: &Path, subject_id: &str, label: u8) -> Result<RoiTimeSeries> {
    RoiTimeSeries::new(subject_id, read_signals_csv(path)?, label)
}

/// Formats signals as CSV with a `roi_0,roi_1,...` header. Values use the
/// shortest representation that parses back to the same bits.
pub fn signals_to_csv(signals: &Matrix) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..signals.cols()).map(|j| format!("roi_{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..signals.rows() {
        let row: Vec<String> = signals.row(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_roi_csv(path: &Path, signals: &Matrix) -> Result<()> {
    crate::io_util::write_atomic(path, signals_to_csv(signals).as_bytes())
}

/// Centers each ROI and divides by its sample standard deviation over the
/// whole sequence. Constant columns become all-zero.
pub fn zscore_normalize(x: &RoiTimeSeries) -> RoiTimeSeries {
    let (t, m) = x.signals.shape();
    let mut out = x.signals.clone();
    for j in 0..m {
        let col = x.signals.column(j);
        let mean = col.iter().sum::<f64>() / t as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
        let std = var.sqrt();
        for i in 0..t {
            out[(i, j)] = if std > 0.0 { (col[i] - mean) / std } else { 0.0 };
        }
    }
    RoiTimeSeries {
        subject_id: x.subject_id.clone(),
        signals: out,
        label: x.label,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub roi_count: usize,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "schema_version {} unsupported (expected {MANIFEST_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.roi_count == 0 {
            return Err(Error::Manifest("roi_count must be positive".into()));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate subject id `{}`", e.id)));
            }
            if e.label > 1 {
                return Err(Error::Manifest(format!("subject `{}`: label {} is not 0 or 1", e.id, e.label)));
            }
        }
        Ok(())
    }

    pub fn label_of(&self, id: &str) -> Option<u8> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.label)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    crate::io_util::write_atomic(path, manifest.to_json().as_bytes())
}

/// Loads every subject listed in a manifest. Relative signal paths resolve
/// against the manifest's directory.
pub fn load_dataset(manifest_path: &Path) -> Result<(DatasetManifest, Vec<RoiTimeSeries>)> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut subjects = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let path = if e.path.is_absolute() { e.path.clone() } else { base.join(&e.path) };
        let s = load_roi_csv(&path, &e.id, e.label)?;
        if s.rois() != manifest.roi_count {
            return Err(Error::Manifest(format!(
                "subject `{}` has {} ROIs, manifest says {}",
                e.id,
                s.rois(),
                manifest.roi_count
            )));
        }
        subjects.push(s);
    }
    Ok((manifest, subjects))
}

/// Held-out test ids plus cross-validation folds over the remaining ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    /// `(train_ids, val_ids)` per fold.
    pub folds: Vec<(Vec<String>, Vec<String>)>,
    pub seed: u64,
}

/// Per-class seeded shuffle, per-class test hold-out of
/// `round(n_class * test_fraction)`, then round-robin fold assignment that
/// carries its cursor from one class to the next so fold sizes stay even.
pub fn stratified_split(manifest: &DatasetManifest, test_fraction: f64, k: usize, seed: u64) -> Result<SplitPlan> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Stratification(format!("test_fraction {test_fraction} not in (0, 1)")));
    }
    if k < 2 {
        return Err(Error::Stratification(format!("need at least 2 folds, got {k}")));
    }
    let mut by_class: BTreeMap<u8, Vec<String>> = BTreeMap::new();
    for e in &manifest.entries {
        by_class.entry(e.label).or_default().push(e.id.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_ids = Vec::new();
    let mut test_ids = Vec::new();
    let mut val: Vec<Vec<String>> = vec![Vec::new(); k];
    let mut cursor = 0;
    for (label, ids) in by_class.iter_mut() {
        ids.sort();
        ids.shuffle(&mut rng);
        let n_test = (ids.len() as f64 * test_fraction).round() as usize;
        let (test, train) = ids.split_at(n_test);
        if train.len() < k {
            return Err(Error::Stratification(format!(
                "class {label} has {} training subjects, fewer than {k} folds",
                train.len()
            )));
        }
        test_ids.extend_from_slice(test);
        for id in train {
            val[cursor % k].push(id.clone());
            cursor += 1;
        }
        train_ids.extend_from_slice(train);
    }
    let folds = val
        .into_iter()
        .map(|v| {
            let held: HashSet<&String> = v.iter().collect();
            let tr = train_ids.iter().filter(|id| !held.contains(id)).cloned().collect();
            (tr, v)
        })
        .collect();
    Ok(SplitPlan {
        train_ids,
        test_ids,
        folds,
        seed,
    })
}

/// Stratified k-fold assignment over all subjects, without a test hold-out.
pub fn stratified_folds(manifest: &DatasetManifest, k: usize, seed: u64) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    if k < 2 {
        return Err(Error::Stratification(format!("need at least 2 folds, got {k}")));
    }
    let mut by_class: BTreeMap<u8, Vec<String>> = BTreeMap::new();
    for e in &manifest.entries {
        by_class.entry(e.label).or_default().push(e.id.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut val: Vec<Vec<String>> = vec![Vec::new(); k];
    let mut all = Vec::new();
    let mut cursor = 0;
    for (label, ids) in by_class.iter_mut() {
        if ids.len() < k {
            return Err(Error::Stratification(format!("class {label} has {} subjects, fewer than {k} folds", ids.len())));
        }
        ids.sort();
        ids.shuffle(&mut rng);
        for id in ids.iter() {
            val[cursor % k].push(id.clone());
            cursor += 1;
        }
        all.extend_from_slice(ids);
    }
    Ok(val
        .into_iter()
        .map(|v| {
            let held: HashSet<&String> = v.iter().collect();
            (all.iter().filter(|id| !held.contains(id)).cloned().collect(), v)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(pos: usize, neg: usize) -> DatasetManifest {
        let entries = (0..pos + neg)
            .map(|i| ManifestEntry {
                id: format!("s{i:02}"),
                path: format!("s{i:02}.csv").into(),
                label: u8::from(i < pos),
            })
            .collect();
        DatasetManifest {
            schema_version: 1,
            roi_count: 4,
            entries,
        }
    }

    #[test]
    fn csv_shape_passthrough() {
        let mut text = String::from("a,b,c,d,e,f,g,h,i,j\n");
        for t in 0..100 {
            let row: Vec<String> = (0..10).map(|j| format!("{}", t * 10 + j)).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        let m = parse_signals_csv(&text).unwrap();
        assert_eq!(m.shape(), (100, 10));
        assert_eq!(m[(3, 4)], 34.0);
    }

    #[test]
    fn headerless_csv() {
        let m = parse_signals_csv("1,2\n3,4\n").unwrap();
        assert_eq!(m, Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
    }

    #[test]
    fn ragged_row_is_parse_error() {
        let err = parse_signals_csv("1,2,3\n4,5\n6,7,8\n").unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err:?}");
    }

    #[test]
    fn nan_is_parse_error() {
        let err = parse_signals_csv("1,2\n3,NaN\n").unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err:?}");
    }

    #[test]
    fn non_numeric_cell_is_parse_error() {
        assert!(matches!(parse_signals_csv("1,2\n3,x\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn too_small_is_shape_error() {
        assert!(matches!(parse_signals_csv("r0,r1\n1,2\n"), Err(Error::Shape(_))));
        assert!(matches!(parse_signals_csv("1\n2\n3\n"), Err(Error::Shape(_))));
    }

    #[test]
    fn zscore_small_column() {
        let x = RoiTimeSeries::new("a", Matrix::from_rows(&[[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]), 0).unwrap();
        let z = zscore_normalize(&x);
        assert_eq!(z.signals.column(0), vec![-1.0, 0.0, 1.0]);
        assert_eq!(z.signals.column(1), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn zscore_is_idempotent() {
        let x = RoiTimeSeries::new(
            "a",
            Matrix::from_fn(20, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 * 0.3 - j as f64),
            1,
        )
        .unwrap();
        let once = zscore_normalize(&x);
        let twice = zscore_normalize(&once);
        assert!(once.signals.max_abs_diff(&twice.signals) < 1e-12);
    }

    #[test]
    fn eight_and_nine_split() {
        let m = manifest(8, 9);
        let plan = stratified_split(&m, 0.2, 4, 11).unwrap();
        let test_pos = plan.test_ids.iter().filter(|id| m.label_of(id) == Some(1)).count();
        let test_neg = plan.test_ids.len() - test_pos;
        assert!((1..=2).contains(&test_pos) && (1..=2).contains(&test_neg));
        assert!((13..=14).contains(&plan.train_ids.len()));
        let mut sizes: Vec<usize> = plan.folds.iter().map(|(_, v)| v.len()).collect();
        sizes.sort();
        assert_eq!(sizes, vec![3, 3, 3, 4]);
    }

    #[test]
    fn split_is_deterministic() {
        let m = manifest(10, 10);
        assert_eq!(stratified_split(&m, 0.2, 4, 5).unwrap(), stratified_split(&m, 0.2, 4, 5).unwrap());
    }

    #[test]
    fn too_few_in_class_is_rejected() {
        let m = manifest(3, 10);
        assert!(matches!(stratified_split(&m, 0.2, 4, 0), Err(Error::Stratification(_))));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut m = manifest(2, 2);
        m.entries[1].id = m.entries[0].id.clone();
        assert!(matches!(m.validate(), Err(Error::Manifest(_))));
    }
}
