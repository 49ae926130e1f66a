//! Allocation-rule comparison: the class-proportional architecture against
//! fixed-width hidden layers of the same depth, all trained with one config.

use std::fmt::Write as _;
use std::time::Instant;

use crate::canio::FEATURE_DIM;
use crate::dataset::Dataset;
use crate::metrics::{all_classes, fmt6, macro_average};
use crate::nncore::{allocate_layers, ModelArchitecture};
use crate::trainer::{evaluate, train, TrainConfig, TrainError};

pub const DEFAULT_FIXED_WIDTHS: [usize; 5] = [10, 25, 50, 100, 200];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub scheme: String,
    pub hidden_widths: Vec<usize>,
    pub train_seconds: f64,
    pub test_seconds: f64,
    /// Macro-averaged detection rate.
    pub tpr: Option<f64>,
    /// Macro-averaged false-positive rate.
    pub fpr: Option<f64>,
    pub accuracy: Option<f64>,
}

impl BenchRow {
    pub fn total_seconds(&self) -> f64 {
        self.train_seconds + self.test_seconds
    }
}

fn run_one(
    scheme: String,
    arch: &ModelArchitecture,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<BenchRow, TrainError> {
    let (model, report) = train(arch, train_set, cfg)?;
    let t0 = Instant::now();
    let eval = evaluate(&model, test_set)?;
    let test_seconds = t0.elapsed().as_secs_f64();
    let avg = macro_average(&all_classes(&eval.confusion));
    Ok(BenchRow {
        scheme,
        hidden_widths: arch.hidden_widths().to_vec(),
        train_seconds: report.train_seconds,
        test_seconds,
        tpr: avg.dr,
        fpr: avg.fpr,
        accuracy: eval.confusion.accuracy(),
    })
}

/// First row is the allocation rule, then one row per fixed width.
pub fn allocation_bench(
    train_set: &Dataset,
    test_set: &Dataset,
    num_hidden: usize,
    fixed_widths: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<BenchRow>, TrainError> {
    let c = train_set.num_classes();
    let mut rows = Vec::with_capacity(fixed_widths.len() + 1);
    let rule = allocate_layers(num_hidden, c, FEATURE_DIM)?;
    rows.push(run_one("i*c".to_string(), &rule, train_set, test_set, cfg)?);
    for &w in fixed_widths {
        let arch = ModelArchitecture::custom(FEATURE_DIM, vec![w; num_hidden], c)?;
        rows.push(run_one(
            format!("fixed-{w}"),
            &arch,
            train_set,
            test_set,
            cfg,
        )?);
    }
    Ok(rows)
}

pub fn bench_to_text(rows: &[BenchRow]) -> String {
    let mut out = format!(
        "{:<12} {:<16} {:>12} {:>12} {:>10} {:>12}\n",
        "scheme", "hidden", "train_s", "test_s", "TPR", "FPR"
    );
    for r in rows {
        let widths: Vec<String> = r.hidden_widths.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(
            out,
            "{:<12} {:<16} {:>12.6} {:>12.6} {:>10} {:>12}",
            r.scheme,
            widths.join("-"),
            r.train_seconds,
            r.test_seconds,
            fmt6(r.tpr),
            r.fpr.map_or("n/a".to_string(), |v| format!("{v:.8}"))
        );
    }
    out
}

pub fn bench_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("scheme,hidden,train_seconds,test_seconds,tpr,fpr,accuracy\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        let widths: Vec<String> = r.hidden_widths.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.scheme,
            widths.join("-"),
            r.train_seconds,
            r.test_seconds,
            opt(r.tpr),
            opt(r.fpr),
            opt(r.accuracy)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, split, SyntheticSpec};

    #[test]
    fn bench_rows_cover_every_scheme() {
        let ds = gen_synthetic(&SyntheticSpec::car_hacking_like(40), 2).unwrap();
        let (train_set, test_set) = split(&ds, 0.8, 2);
        let cfg = TrainConfig {
            epochs: 3,
            num_batches: 10,
            ..TrainConfig::default()
        };
        let rows = allocation_bench(&train_set, &test_set, 3, &[10, 50], &cfg).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].hidden_widths, vec![20, 15, 10]);
        assert_eq!(rows[2].hidden_widths, vec![50, 50, 50]);
        let text = bench_to_text(&rows);
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("fixed-10"));
        let csv = bench_to_csv(&rows);
        assert!(csv.lines().nth(1).unwrap().starts_with("i*c,20-15-10,"));
    }
}
