//! Binary classification metrics.

use serde::{Serialize, Serializer};

/// Scores at or above this are predicted positive.
pub const THRESHOLD: f64 = 0.5;

/// A metric that may be undefined; serializes as `"n/a"` when it is.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metric(pub Option<f64>);

impl Metric {
    pub fn value(self) -> Option<f64> {
        self.0
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) => s.serialize_f64(v),
            None => s.serialize_str("n/a"),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v:.3}"),
            None => f.write_str("n/a"),
        }
    }
}

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs where the
/// positive scores higher, ties counting one half. `None` for a single class.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Midranks over tie groups, then the rank-sum form of U.
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = mid;
        }
        i = j + 1;
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn at_threshold(scores: &[f64], labels: &[u8], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &l) in scores.iter().zip(labels) {
            match (s >= threshold, l == 1) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> Metric {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn sensitivity(&self) -> Metric {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> Metric {
        ratio(self.tn, self.tn + self.fp)
    }
}

fn ratio(num: usize, den: usize) -> Metric {
    Metric((den > 0).then(|| num as f64 / den as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub auc: Metric,
    pub acc: Metric,
    pub se: Metric,
    pub sp: Metric,
    pub confusion: Confusion,
}

impl EvalReport {
    pub fn from_scores(scores: &[f64], labels: &[u8]) -> Self {
        let confusion = Confusion::at_threshold(scores, labels, THRESHOLD);
        EvalReport {
            n: scores.len(),
            auc: Metric(auc(scores, labels)),
            acc: confusion.accuracy(),
            se: confusion.sensitivity(),
            sp: confusion.specificity(),
            confusion,
        }
    }
}

/// Mean and population standard deviation over the defined values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: Metric,
    pub std: Metric,
    /// How many folds had the metric defined.
    pub defined: usize,
}

impl MeanStd {
    pub fn of(values: impl IntoIterator<Item = Metric>) -> Self {
        let xs: Vec<f64> = values.into_iter().filter_map(Metric::value).collect();
        if xs.is_empty() {
            return MeanStd {
                mean: Metric(None),
                std: Metric(None),
                defined: 0,
            };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        MeanStd {
            mean: Metric(Some(mean)),
            std: Metric(Some(var.sqrt())),
            defined: xs.len(),
        }
    }

    /// `m±s` with two decimals.
    pub fn formatted(&self) -> String {
        match (self.mean.0, self.std.0) {
            (Some(m), Some(s)) => format!("{m:.2}±{s:.2}"),
            _ => "n/a".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub auc_mean: Metric,
    pub auc_std: Metric,
    pub acc_mean: Metric,
    pub acc_std: Metric,
    pub se_mean: Metric,
    pub se_std: Metric,
    pub sp_mean: Metric,
    pub sp_std: Metric,
    /// `m±s` strings keyed by metric name.
    pub formatted: std::collections::BTreeMap<String, String>,
}

impl Summary {
    pub fn of(reports: &[&EvalReport]) -> Self {
        let auc = MeanStd::of(reports.iter().map(|r| r.auc));
        let acc = MeanStd::of(reports.iter().map(|r| r.acc));
        let se = MeanStd::of(reports.iter().map(|r| r.se));
        let sp = MeanStd::of(reports.iter().map(|r| r.sp));
        let formatted = [("auc", &auc), ("acc", &acc), ("se", &se), ("sp", &sp)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.formatted()))
            .collect();
        Summary {
            auc_mean: auc.mean,
            auc_std: auc.std,
            acc_mean: acc.mean,
            acc_std: acc.std,
            se_mean: se.mean,
            se_std: se.std,
            sp_mean: sp.mean,
            sp_std: sp.std,
            formatted,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let r = EvalReport::from_scores(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 0]);
        assert_eq!(r.auc, Metric(Some(1.0)));
        assert_eq!(r.acc, Metric(Some(1.0)));
    }

    #[test]
    fn half_concordant() {
        assert_eq!(auc(&[0.9, 0.4, 0.35, 0.8], &[1, 0, 1, 0]), Some(0.5));
    }

    #[test]
    fn ties_count_half() {
        assert_eq!(auc(&[0.5, 0.5], &[1, 0]), Some(0.5));
        assert_eq!(auc(&[0.5, 0.5, 0.1], &[1, 0, 0]), Some(0.75));
    }

    #[test]
    fn single_class_is_na() {
        let r = EvalReport::from_scores(&[0.9, 0.2, 0.7], &[1, 1, 1]);
        assert_eq!(r.auc, Metric(None));
        assert_eq!(r.sp, Metric(None));
        assert!((r.se.0.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"auc\":\"n/a\""), "{json}");
    }

    #[test]
    fn population_std() {
        let s = MeanStd::of([Metric(Some(0.6)), Metric(Some(0.8))]);
        assert!((s.mean.0.unwrap() - 0.7).abs() < 1e-15);
        assert!((s.std.0.unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(s.formatted(), "0.70±0.10");
        let z = MeanStd::of([Metric(Some(0.5)); 4]);
        assert_eq!(z.formatted(), "0.50±0.00");
    }
}
