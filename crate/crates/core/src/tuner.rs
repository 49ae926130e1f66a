//! Random-search hyperparameter tuning scored by k-fold cross-validation.

use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::canio::FEATURE_DIM;
use crate::dataset::{kfold, Dataset, DatasetError};
use crate::metrics::{ConfusionMatrix, CvReport, FoldScores};
use crate::nncore::{allocate_layers, ModelArchitecture, NnError};
use crate::trainer::{evaluate, train, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum TuneError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid search: {0}")]
    InvalidSearch(String),
}

/// Inclusive integer ranges to sample from. The batch knob is the number of
/// batches per epoch, not the batch size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSpace {
    pub hidden_layers: RangeInclusive<usize>,
    pub num_batches: RangeInclusive<usize>,
    pub epochs: RangeInclusive<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            hidden_layers: 1..=5,
            num_batches: 100..=500,
            epochs: 100..=500,
        }
    }
}

impl SearchSpace {
    fn validate(&self) -> Result<(), TuneError> {
        for (name, r) in [
            ("hidden_layers", &self.hidden_layers),
            ("num_batches", &self.num_batches),
            ("epochs", &self.epochs),
        ] {
            if r.is_empty() || *r.start() == 0 {
                return Err(TuneError::InvalidSearch(format!(
                    "{name} range {r:?} must be nonempty and positive"
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, c: &TrialConfig) -> bool {
        self.hidden_layers.contains(&c.hidden_layers)
            && self.num_batches.contains(&c.num_batches)
            && self.epochs.contains(&c.epochs)
    }

    fn sample(&self, rng: &mut impl Rng) -> TrialConfig {
        TrialConfig {
            hidden_layers: rng.random_range(self.hidden_layers.clone()),
            num_batches: rng.random_range(self.num_batches.clone()),
            epochs: rng.random_range(self.epochs.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialConfig {
    pub hidden_layers: usize,
    pub num_batches: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub index: usize,
    pub config: TrialConfig,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub mean_fold_seconds: f64,
}

impl TrialResult {
    /// One trial-log row: index, config, per-fold accuracies, mean, time.
    pub fn to_row(&self) -> String {
        let folds: Vec<String> = self
            .fold_accuracies
            .iter()
            .map(|a| format!("{a:.6}"))
            .collect();
        format!(
            "{}\thidden={}\tnum_batches={}\tepochs={}\t[{}]\t{:.6}\t{:.3}s",
            self.index,
            self.config.hidden_layers,
            self.config.num_batches,
            self.config.epochs,
            folds.join(","),
            self.mean_accuracy,
            self.mean_fold_seconds
        )
    }

    /// Higher mean accuracy wins; ties go to fewer hidden layers, then fewer
    /// epochs, then the earlier trial.
    fn beats(&self, other: &TrialResult) -> bool {
        let key = |t: &TrialResult| {
            (
                std::cmp::Reverse(t.config.hidden_layers),
                std::cmp::Reverse(t.config.epochs),
                std::cmp::Reverse(t.index),
            )
        };
        match self.mean_accuracy.total_cmp(&other.mean_accuracy) {
            std::cmp::Ordering::Equal => key(self) > key(other),
            ord => ord.is_gt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: TrialResult,
    pub trials: Vec<TrialResult>,
}

impl SearchOutcome {
    pub fn to_log(&self) -> String {
        let mut out =
            String::from("trial\thidden\tnum_batches\tepochs\tfold_accuracies\tmean\ttime\n");
        for t in &self.trials {
            let _ = writeln!(out, "{}", t.to_row());
        }
        let _ = writeln!(out, "best\t{}", self.best.to_row());
        out
    }
}

/// Draws `trials` configurations uniformly from `space` and scores each by mean
/// k-fold test accuracy on `ds`. All trials share one fold assignment.
pub fn random_search(
    space: &SearchSpace,
    ds: &Dataset,
    trials: usize,
    k: usize,
    seed: u64,
    base: &TrainConfig,
) -> Result<SearchOutcome, TuneError> {
    space.validate()?;
    if trials == 0 {
        return Err(TuneError::InvalidSearch("trials must be positive".into()));
    }
    // Fail early on a dataset too small for k folds.
    kfold(ds, k, seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let configs: Vec<TrialConfig> = (0..trials).map(|_| space.sample(&mut rng)).collect();

    let mut results = Vec::with_capacity(trials);
    for (index, config) in configs.into_iter().enumerate() {
        let arch = allocate_layers(config.hidden_layers, ds.num_classes(), FEATURE_DIM)?;
        let cfg = TrainConfig {
            epochs: config.epochs,
            num_batches: config.num_batches,
            ..base.clone()
        };
        let mut fold_accuracies = Vec::with_capacity(k);
        let mut seconds = 0.0;
        for (train_set, test_set) in kfold(ds, k, seed)? {
            let t0 = Instant::now();
            let (model, _) = train(&arch, &train_set, &cfg)?;
            let eval = evaluate(&model, &test_set)?;
            seconds += t0.elapsed().as_secs_f64();
            fold_accuracies.push(eval.confusion.accuracy().unwrap_or(0.0));
        }
        let mean_accuracy = fold_accuracies.iter().sum::<f64>() / k as f64;
        results.push(TrialResult {
            index,
            config,
            fold_accuracies,
            mean_accuracy,
            mean_fold_seconds: seconds / k as f64,
        });
    }

    let best = results
        .iter()
        .skip(1)
        .fold(&results[0], |best, t| if t.beats(best) { t } else { best })
        .clone();
    Ok(SearchOutcome {
        best,
        trials: results,
    })
}

/// Per-fold confusion matrices plus the stability summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub folds: Vec<ConfusionMatrix>,
    pub report: CvReport,
}

/// Trains and tests one model per fold.
pub fn cross_validate(
    arch: &ModelArchitecture,
    ds: &Dataset,
    cfg: &TrainConfig,
    k: usize,
    seed: u64,
) -> Result<CrossValidation, TuneError> {
    let mut folds = Vec::with_capacity(k);
    for (train_set, test_set) in kfold(ds, k, seed)? {
        let (model, _) = train(arch, &train_set, cfg)?;
        folds.push(evaluate(&model, &test_set)?.confusion);
    }
    let report = CvReport::from_folds(folds.iter().map(FoldScores::from_confusion).collect());
    Ok(CrossValidation { folds, report })
}
