//! Confusion-matrix metrics and cross-fold stability.
//!
//! Rows of a [`ConfusionMatrix`] are actual classes and columns are predicted
//! classes. Ratios whose denominator is zero are `None` (undefined) and are
//! skipped by [`macro_average`] rather than counted as 0 or 1.

use std::fmt::Write as _;

use thiserror::Error;

use crate::canio::ClassLabel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("actual has {actual} labels, predicted has {predicted}")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("class index {index} out of range for {classes} classes")]
    IndexOutOfRange { index: usize, classes: usize },
    #[error("mean score is zero")]
    ZeroMean,
    #[error("no scores")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    /// Builds a matrix from row-major rows.
    pub fn from_rows(rows: &[Vec<u64>]) -> Option<Self> {
        let c = rows.len();
        rows.iter().all(|r| r.len() == c).then(|| Self {
            num_classes: c,
            counts: rows.concat(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual * self.num_classes + predicted]
    }

    pub fn record(
        &mut self,
        actual: ClassLabel,
        predicted: ClassLabel,
    ) -> Result<(), MetricsError> {
        for l in [actual, predicted] {
            if l.0 >= self.num_classes {
                return Err(MetricsError::LabelOutOfRange {
                    label: l.0,
                    classes: self.num_classes,
                });
            }
        }
        self.counts[actual.0 * self.num_classes + predicted.0] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row(&self, actual: usize) -> &[u64] {
        &self.counts[actual * self.num_classes..(actual + 1) * self.num_classes]
    }

    /// Fraction of samples on the diagonal.
    pub fn accuracy(&self) -> Option<f64> {
        let diag: u64 = (0..self.num_classes).map(|k| self.get(k, k)).sum();
        ratio(diag, self.total())
    }

    /// Adds another matrix of the same size.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.num_classes, other.num_classes, "class count mismatch");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

pub fn confusion(
    actual: &[ClassLabel],
    predicted: &[ClassLabel],
    num_classes: usize,
) -> Result<ConfusionMatrix, MetricsError> {
    if actual.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    let mut m = ConfusionMatrix::new(num_classes);
    for (&a, &p) in actual.iter().zip(predicted) {
        m.record(a, p)?;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcomes {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

/// One-vs-rest counts for class `k`.
pub fn tp_tn_fp_fn(m: &ConfusionMatrix, k: usize) -> Result<Outcomes, MetricsError> {
    if k >= m.num_classes {
        return Err(MetricsError::IndexOutOfRange {
            index: k,
            classes: m.num_classes,
        });
    }
    let tp = m.get(k, k);
    let fn_ = m.row(k).iter().sum::<u64>() - tp;
    let fp = (0..m.num_classes).map(|a| m.get(a, k)).sum::<u64>() - tp;
    let tn = m.total() - tp - fn_ - fp;
    Ok(Outcomes { tp, tn, fp, fn_ })
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Detection rate, false-positive rate, accuracy, precision and F1 of one class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerClassMetrics {
    pub dr: Option<f64>,
    pub fpr: Option<f64>,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

impl PerClassMetrics {
    pub fn from_outcomes(o: Outcomes) -> Self {
        let Outcomes { tp, tn, fp, fn_ } = o;
        Self {
            dr: ratio(tp, tp + fn_),
            fpr: ratio(fp, tn + fp),
            accuracy: ratio(tp + tn, tp + tn + fp + fn_),
            precision: ratio(tp, tp + fp),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
        }
    }

    pub fn values(&self) -> [Option<f64>; 5] {
        [self.dr, self.fpr, self.accuracy, self.precision, self.f1]
    }

    fn from_values(v: [Option<f64>; 5]) -> Self {
        Self {
            dr: v[0],
            fpr: v[1],
            accuracy: v[2],
            precision: v[3],
            f1: v[4],
        }
    }
}

pub const METRIC_NAMES: [&str; 5] = ["DR", "FPR", "Accuracy", "Precision", "F1"];

pub fn per_class(m: &ConfusionMatrix, k: usize) -> Result<PerClassMetrics, MetricsError> {
    Ok(PerClassMetrics::from_outcomes(tp_tn_fp_fn(m, k)?))
}

/// All classes in index order.
pub fn all_classes(m: &ConfusionMatrix) -> Vec<PerClassMetrics> {
    (0..m.num_classes)
        .map(|k| per_class(m, k).expect("index in range"))
        .collect()
}

/// Unweighted mean of every metric over the classes where it is defined.
pub fn macro_average(all: &[PerClassMetrics]) -> PerClassMetrics {
    let mut out = [None; 5];
    for (slot, col) in out.iter_mut().enumerate() {
        let defined: Vec<f64> = all.iter().filter_map(|m| m.values()[slot]).collect();
        *col = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    }
    PerClassMetrics::from_values(out)
}

/// Population standard deviation over the mean, in percent.
pub fn coefficient_of_variation(scores: &[f64]) -> Result<f64, MetricsError> {
    let s = summarize(scores)?;
    s.cv_percent.ok_or(MetricsError::ZeroMean)
}

/// Mean, population standard deviation and coefficient of variation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvStat {
    pub mean: f64,
    pub std: f64,
    /// `None` when the mean is zero.
    pub cv_percent: Option<f64>,
}

pub fn summarize(scores: &[f64]) -> Result<CvStat, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    // Identical scores have exactly zero spread; the computed mean can carry
    // rounding error that would otherwise leak into the deviation.
    let std = if scores.iter().all(|&s| s == scores[0]) {
        0.0
    } else {
        (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt()
    };
    let cv_percent = (mean != 0.0).then(|| (std / mean.abs()) * 100.0);
    Ok(CvStat {
        mean,
        std,
        cv_percent,
    })
}

/// Per-metric stability of macro-averaged scores across folds. Overall
/// accuracy is included alongside the five class metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldScores>,
    /// Entries for DR, FPR, Accuracy, Precision, F1 then overall accuracy.
    /// `None` when a metric is undefined in every fold.
    pub stats: Vec<(String, Option<CvStat>)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldScores {
    pub macro_avg: PerClassMetrics,
    pub overall_accuracy: Option<f64>,
}

impl FoldScores {
    pub fn from_confusion(m: &ConfusionMatrix) -> Self {
        Self {
            macro_avg: macro_average(&all_classes(m)),
            overall_accuracy: m.accuracy(),
        }
    }

    fn column(&self, i: usize) -> Option<f64> {
        if i < 5 {
            self.macro_avg.values()[i]
        } else {
            self.overall_accuracy
        }
    }
}

impl CvReport {
    pub fn from_folds(folds: Vec<FoldScores>) -> Self {
        let names = METRIC_NAMES.iter().copied().chain(["Overall accuracy"]);
        let stats = names
            .enumerate()
            .map(|(i, name)| {
                let scores: Vec<f64> = folds.iter().filter_map(|f| f.column(i)).collect();
                (name.to_string(), summarize(&scores).ok())
            })
            .collect();
        Self { folds, stats }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<6}", "fold");
        for name in METRIC_NAMES.iter().chain(&["OverallAcc"]) {
            let _ = write!(out, " {name:>10}");
        }
        out.push('\n');
        for (i, f) in self.folds.iter().enumerate() {
            let _ = write!(out, "{:<6}", i + 1);
            for c in 0..6 {
                let _ = write!(out, " {:>10}", fmt6(f.column(c)));
            }
            out.push('\n');
        }
        out.push_str("\nmetric              mean        std      cv(%)\n");
        for (name, stat) in &self.stats {
            match stat {
                Some(s) => {
                    let _ = writeln!(
                        out,
                        "{name:<16} {:>9.6} {:>10.6} {:>10}",
                        s.mean,
                        s.std,
                        s.cv_percent
                            .map_or("undefined".to_string(), |c| format!("{c:.6}"))
                    );
                }
                None => {
                    let _ = writeln!(out, "{name:<16} undefined");
                }
            }
        }
        out
    }
}

/// Fixed 6-decimal rendering, `n/a` for undefined.
pub fn fmt6(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

/// Per-class rows plus an `Average` row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<(String, PerClassMetrics)>,
    pub average: PerClassMetrics,
    pub overall_accuracy: Option<f64>,
}

impl MetricsTable {
    pub fn new(m: &ConfusionMatrix, class_names: &[String]) -> Self {
        let per = all_classes(m);
        Self {
            average: macro_average(&per),
            rows: class_names.iter().cloned().zip(per).collect(),
            overall_accuracy: m.accuracy(),
        }
    }

    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|(n, _)| n.len())
            .chain([7])
            .max()
            .unwrap_or(7);
        let mut out = format!("{:<width$}", "Class");
        for name in METRIC_NAMES {
            let _ = write!(out, " {name:>10}");
        }
        out.push('\n');
        let rows = self
            .rows
            .iter()
            .map(|(n, m)| (n.as_str(), m))
            .chain([("Average", &self.average)]);
        for (name, m) in rows {
            let _ = write!(out, "{name:<width$}");
            for v in m.values() {
                let _ = write!(out, " {:>10}", fmt6(v));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "Overall accuracy: {}", fmt6(self.overall_accuracy));
        out
    }

    /// Machine-readable form with full-precision values; undefined cells are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,dr,fpr,accuracy,precision,f1\n");
        let rows = self
            .rows
            .iter()
            .map(|(n, m)| (n.as_str(), m))
            .chain([("Average", &self.average)]);
        for (name, m) in rows {
            out.push_str(name);
            for v in m.values() {
                out.push(',');
                if let Some(x) = v {
                    let _ = write!(out, "{x}");
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_to_text(m: &ConfusionMatrix, class_names: &[String]) -> String {
    let mut out = String::from("actual \\ predicted");
    for k in 0..m.num_classes {
        let _ = write!(out, "\t{}", class_names.get(k).map_or("?", |s| s.as_str()));
    }
    out.push('\n');
    for a in 0..m.num_classes {
        out.push_str(class_names.get(a).map_or("?", |s| s.as_str()));
        for v in m.row(a) {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn labels(v: &[usize]) -> Vec<ClassLabel> {
        v.iter().map(|&l| ClassLabel(l)).collect()
    }

    fn worked() -> ConfusionMatrix {
        ConfusionMatrix::from_rows(&[vec![8, 2], vec![1, 9]]).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let m = confusion(&labels(&[0, 1, 2]), &labels(&[0, 1, 2]), 3).unwrap();
        assert_eq!(
            m,
            ConfusionMatrix::from_rows(&[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]).unwrap()
        );
        let m = confusion(&labels(&[0, 0]), &labels(&[1, 1]), 2).unwrap();
        assert_eq!(m.get(0, 1), 2);
        assert_eq!(m.row(1), &[0, 0]);
        let a: Vec<usize> = (0..20).map(|i| i % 3).collect();
        let p: Vec<usize> = (0..20).map(|i| (i * 7) % 3).collect();
        assert_eq!(confusion(&labels(&a), &labels(&p), 3).unwrap().total(), 20);
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(
            confusion(&labels(&[0]), &labels(&[0, 1]), 2),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(
            confusion(&labels(&[0]), &labels(&[2]), 2),
            Err(MetricsError::LabelOutOfRange { label: 2, .. })
        ));
    }

    #[test]
    fn outcome_counts() {
        let o = tp_tn_fp_fn(&worked(), 0).unwrap();
        assert_eq!(
            o,
            Outcomes {
                tp: 8,
                tn: 9,
                fp: 1,
                fn_: 2
            }
        );
        let diag = ConfusionMatrix::from_rows(&[vec![3, 0], vec![0, 4]]).unwrap();
        for k in 0..2 {
            let o = tp_tn_fp_fn(&diag, k).unwrap();
            assert_eq!((o.fp, o.fn_), (0, 0));
        }
        assert!(matches!(
            tp_tn_fp_fn(&diag, 2),
            Err(MetricsError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn worked_metrics() {
        let m = per_class(&worked(), 0).unwrap();
        assert_relative_eq!(m.dr.unwrap(), 0.8, epsilon = 1e-12);
        assert_relative_eq!(m.fpr.unwrap(), 0.1, epsilon = 1e-12);
        assert_relative_eq!(m.accuracy.unwrap(), 0.85, epsilon = 1e-12);
        assert_relative_eq!(m.precision.unwrap(), 8.0 / 9.0, epsilon = 1e-12);
        assert_relative_eq!(m.f1.unwrap(), 16.0 / 19.0, epsilon = 1e-12);
    }

    #[test]
    fn perfect_and_empty_class() {
        let m = ConfusionMatrix::from_rows(&[vec![5, 0, 0], vec![0, 7, 0], vec![0, 0, 0]]).unwrap();
        let p = per_class(&m, 1).unwrap();
        assert_eq!(
            p.values(),
            [Some(1.0), Some(0.0), Some(1.0), Some(1.0), Some(1.0)]
        );
        let e = per_class(&m, 2).unwrap();
        assert_eq!(e.dr, None);
        assert_eq!(e.precision, None);
        assert_eq!(e.fpr, Some(0.0));
    }

    #[test]
    fn macro_average_rules() {
        let a = per_class(&worked(), 0).unwrap();
        assert_eq!(macro_average(&[a, a]), a);
        let mk = |dr| PerClassMetrics {
            dr,
            fpr: Some(0.0),
            accuracy: Some(1.0),
            precision: Some(1.0),
            f1: Some(1.0),
        };
        assert_relative_eq!(
            macro_average(&[mk(Some(1.0)), mk(Some(0.8))]).dr.unwrap(),
            0.9
        );
        let avg = macro_average(&[mk(Some(1.0)), mk(None), mk(Some(0.5))]);
        assert_relative_eq!(avg.dr.unwrap(), 0.75);
        assert_eq!(macro_average(&[mk(None)]).dr, None);
    }

    #[test]
    fn cv_examples() {
        assert_eq!(coefficient_of_variation(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_relative_eq!(
            coefficient_of_variation(&[2.0, 4.0]).unwrap(),
            100.0 / 3.0,
            epsilon = 1e-12
        );
        assert_eq!(coefficient_of_variation(&[0.1; 10]).unwrap(), 0.0);
        assert_eq!(
            coefficient_of_variation(&[0.0, 0.0]),
            Err(MetricsError::ZeroMean)
        );
        assert_eq!(coefficient_of_variation(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn table_rendering() {
        let names = vec!["Normal".to_string(), "DoS".to_string()];
        let t = MetricsTable::new(&worked(), &names);
        let text = t.to_text();
        assert!(text.contains("Normal"));
        assert!(text.contains("0.800000"));
        assert!(text.contains("0.842105"));
        assert!(text.lines().any(|l| l.starts_with("Average")));
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("Normal,0.8,0.1,0.85,"));
    }

    #[test]
    fn cv_report_marks_zero_mean_undefined() {
        let perfect = ConfusionMatrix::from_rows(&[vec![5, 0], vec![0, 5]]).unwrap();
        let folds = vec![FoldScores::from_confusion(&perfect); 3];
        let r = CvReport::from_folds(folds);
        let get = |n: &str| r.stats.iter().find(|(k, _)| k == n).unwrap().1.unwrap();
        assert_eq!(get("DR").cv_percent, Some(0.0));
        assert_eq!(get("FPR").cv_percent, None);
        assert!(r.to_text().contains("undefined"));
    }

    fn small_instance() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2usize..=6).prop_flat_map(|c| (Just(c), prop::collection::vec((0..c, 0..c), 1..=50)))
    }

    proptest! {
        #[test]
        fn outcome_partition_identity((c, pairs) in small_instance()) {
            let (a, p): (Vec<_>, Vec<_>) = pairs.iter().map(|&(a, p)| (ClassLabel(a), ClassLabel(p))).unzip();
            let m = confusion(&a, &p, c).unwrap();
            for k in 0..c {
                let o = tp_tn_fp_fn(&m, k).unwrap();
                prop_assert_eq!(o.tp + o.tn + o.fp + o.fn_, m.total());
            }
        }

        #[test]
        fn f1_is_harmonic_mean((c, pairs) in small_instance()) {
            let (a, p): (Vec<_>, Vec<_>) = pairs.iter().map(|&(a, p)| (ClassLabel(a), ClassLabel(p))).unzip();
            let m = confusion(&a, &p, c).unwrap();
            for pc in all_classes(&m) {
                if let (Some(pr), Some(dr), Some(f1)) = (pc.precision, pc.dr, pc.f1) {
                    if pr + dr > 0.0 {
                        prop_assert!((f1 - 2.0 * pr * dr / (pr + dr)).abs() <= 1e-12);
                    }
                }
            }
        }

        #[test]
        fn macro_average_is_permutation_invariant((c, pairs) in small_instance(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let (a, p): (Vec<_>, Vec<_>) = pairs.iter().map(|&(a, p)| (ClassLabel(a), ClassLabel(p))).unzip();
            let per = all_classes(&confusion(&a, &p, c).unwrap());
            let mut shuffled = per.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let x = macro_average(&per);
            let y = macro_average(&shuffled);
            for (u, v) in x.values().iter().zip(y.values()) {
                match (u, v) {
                    (Some(u), Some(v)) => prop_assert!((u - v).abs() <= 1e-12),
                    (None, None) => {}
                    _ => prop_assert!(false),
                }
            }
        }

        #[test]
        fn cv_nonnegative(scores in prop::collection::vec(0.01f64..1.0, 1..20)) {
            let cv = coefficient_of_variation(&scores).unwrap();
            prop_assert!(cv.is_finite() && cv >= 0.0);
        }
    }
}
