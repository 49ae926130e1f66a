//! Labeled CAN datasets: loading, splitting and subsampling.
//!
//! All randomized operations take an explicit seed and use ChaCha8, so results
//! are reproducible across runs and platforms. Splits are uniform, never
//! stratified, and no operation resamples or balances classes.

mod loaders;
mod synthetic;

pub use loaders::{
    load_csv, load_many, write_labeled, CarHackingAttack, Schema, CAR_HACKING_CLASSES,
    CICIOV2024_CLASSES,
};
pub use synthetic::{gen_synthetic, IdRule, PayloadRule, SyntheticClass, SyntheticSpec};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::canio::{CanError, ClassLabel, FeatureVector};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema mismatch at line {line}: {reason}")]
    SchemaMismatch { line: u64, reason: String },
    #[error("unknown label {label:?} at line {line}")]
    UnknownLabel { line: u64, label: String },
    #[error("file contains no samples")]
    EmptyFile,
    #[error("{samples} samples cannot fill {folds} folds")]
    TooFewSamples { samples: usize, folds: usize },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("invalid synthetic spec at line {line}: {reason}")]
    BadSpec { line: usize, reason: String },
    #[error(transparent)]
    Frame(#[from] CanError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: ClassLabel,
}

/// An ordered collection of labeled samples over a fixed class set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        samples: Vec<LabeledSample>,
        class_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        if class_names.len() < 2 {
            return Err(DatasetError::Invalid(format!(
                "need at least 2 classes, got {}",
                class_names.len()
            )));
        }
        for (i, name) in class_names.iter().enumerate() {
            if class_names[..i].contains(name) {
                return Err(DatasetError::Invalid(format!(
                    "duplicate class name {name:?}"
                )));
            }
        }
        if let Some(s) = samples.iter().find(|s| s.label.0 >= class_names.len()) {
            return Err(DatasetError::Invalid(format!(
                "label {} out of range for {} classes",
                s.label,
                class_names.len()
            )));
        }
        Ok(Self {
            samples,
            class_names,
        })
    }

    /// Same class set, different samples. Labels are assumed to be valid.
    fn with_samples(&self, samples: Vec<LabeledSample>) -> Self {
        Self {
            samples,
            class_names: self.class_names.clone(),
        }
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for s in &self.samples {
            counts[s.label.0] += 1;
        }
        counts
    }

    /// Appends another dataset with the identical class set.
    pub fn extend(&mut self, other: Dataset) -> Result<(), DatasetError> {
        if other.class_names != self.class_names {
            return Err(DatasetError::Invalid(
                "cannot merge datasets with different class sets".into(),
            ));
        }
        self.samples.extend(other.samples);
        Ok(())
    }

    fn shuffled_indices(&self, seed: u64) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx
    }

    fn gather(&self, idx: &[usize]) -> Dataset {
        self.with_samples(idx.iter().map(|&i| self.samples[i]).collect())
    }
}

/// Seeded uniform shuffle, then the first `floor(n * train_fraction)` samples
/// become the training set.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> (Dataset, Dataset) {
    let idx = ds.shuffled_indices(seed);
    let n_train = ((ds.len() as f64) * train_fraction).floor() as usize;
    let n_train = n_train.min(ds.len());
    (ds.gather(&idx[..n_train]), ds.gather(&idx[n_train..]))
}

/// Shuffled k-fold partition. Folds are materialized lazily, one
/// `(train, test)` pair per iteration.
pub fn kfold(ds: &Dataset, k: usize, seed: u64) -> Result<KFold<'_>, DatasetError> {
    if k < 2 || ds.len() < k {
        return Err(DatasetError::TooFewSamples {
            samples: ds.len(),
            folds: k,
        });
    }
    Ok(KFold {
        ds,
        order: ds.shuffled_indices(seed),
        k,
        next: 0,
    })
}

pub struct KFold<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    k: usize,
    next: usize,
}

impl KFold<'_> {
    /// Index range of fold `i` within the shuffled order. The first `n % k`
    /// folds hold one extra sample.
    fn bounds(&self, i: usize) -> (usize, usize) {
        let n = self.order.len();
        let base = n / self.k;
        let extra = n % self.k;
        let start = i * base + i.min(extra);
        let len = base + usize::from(i < extra);
        (start, start + len)
    }
}

impl Iterator for KFold<'_> {
    type Item = (Dataset, Dataset);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.k {
            return None;
        }
        let (lo, hi) = self.bounds(self.next);
        self.next += 1;
        let train: Vec<usize> = self.order[..lo]
            .iter()
            .chain(&self.order[hi..])
            .copied()
            .collect();
        Some((self.ds.gather(&train), self.ds.gather(&self.order[lo..hi])))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = self.k - self.next;
        (rest, Some(rest))
    }
}

impl ExactSizeIterator for KFold<'_> {}

/// Draws `floor(count * fraction)` samples without replacement from every class
/// (at least one from each nonempty class), then shuffles the union.
pub fn subsample_per_class(ds: &Dataset, fraction: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes()];
    for (i, s) in ds.samples.iter().enumerate() {
        by_class[s.label.0].push(i);
    }
    let mut chosen = Vec::new();
    for members in &mut by_class {
        if members.is_empty() {
            continue;
        }
        let take = (((members.len() as f64) * fraction).floor() as usize).clamp(1, members.len());
        let (picked, _) = members.partial_shuffle(&mut rng, take);
        chosen.extend_from_slice(picked);
    }
    chosen.shuffle(&mut rng);
    ds.gather(&chosen)
}
