//! Mini-batch RMSprop training and test-set evaluation.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::Dataset;
use crate::metrics::ConfusionMatrix;
use crate::nncore::{
    self, accumulate_data_gradient, data_loss, forward_into, kaiming_init, DenseLayer,
    ForwardTrace, Gradients, Model, ModelArchitecture, NnError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("model has {model} classes, dataset has {data}")]
    ClassMismatch { model: usize, data: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("parameter, gradient and state shapes disagree")]
    ShapeMismatch,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Number of mini-batches per epoch; batch size is `train_size / num_batches`.
    pub num_batches: usize,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub l2_lambda: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            num_batches: 300,
            learning_rate: 0.001,
            rho: 0.9,
            epsilon: 1e-8,
            l2_lambda: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.num_batches == 0 {
            return bad("num_batches must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad("l2_lambda must be nonnegative");
        }
        Ok(())
    }
}

/// `floor(train_size / num_batches)`, at least 1.
pub fn batch_size(train_size: usize, num_batches: usize) -> usize {
    (train_size / num_batches.max(1)).max(1)
}

/// Running mean of squared gradients, one accumulator per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsState {
    layers: Vec<DenseLayer>,
}

impl RmsState {
    pub fn new(model: &Model) -> Self {
        Self {
            layers: Gradients::zeros_like(model).layers,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
            .copied()
    }
}

/// Elementwise RMSprop: `s = rho s + (1 - rho) g^2; p -= lr g / (sqrt(s) + eps)`.
pub fn rmsprop_update(
    params: &mut [f64],
    grads: &[f64],
    state: &mut [f64],
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(TrainError::ShapeMismatch);
    }
    for ((p, &g), s) in params.iter_mut().zip(grads).zip(state.iter_mut()) {
        *s = cfg.rho * *s + (1.0 - cfg.rho) * g * g;
        *p -= cfg.learning_rate * g / (s.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Applies one RMSprop step to every model parameter.
pub fn rmsprop_step(
    model: &mut Model,
    grads: &Gradients,
    state: &mut RmsState,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    let n = model.layers().len();
    if grads.layers.len() != n || state.layers.len() != n {
        return Err(TrainError::ShapeMismatch);
    }
    for ((layer, g), s) in model
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.layers)
    {
        rmsprop_update(&mut layer.weights, &g.weights, &mut s.weights, cfg)?;
        rmsprop_update(&mut layer.biases, &g.biases, &mut s.biases, cfg)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean over batches of the batch-mean loss (L2 term included).
    pub loss: f64,
    /// Fraction of training samples classified correctly by the pre-update
    /// model of their batch.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub train_seconds: f64,
}

impl TrainReport {
    /// `epoch<TAB>loss<TAB>accuracy` rows with a header line.
    pub fn to_table(&self) -> String {
        let mut out = String::from("epoch\tloss\taccuracy\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{}\t{:.6}\t{:.6}", e.epoch, e.loss, e.accuracy);
        }
        out
    }
}

/// Trains a freshly initialized model of the given architecture.
pub fn train(
    arch: &ModelArchitecture,
    train_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Model, TrainReport), TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if train_set.num_classes() != arch.num_classes() {
        return Err(TrainError::ClassMismatch {
            model: arch.num_classes(),
            data: train_set.num_classes(),
        });
    }
    let started = Instant::now();
    let mut model = kaiming_init(arch, cfg.seed);
    model.set_class_names(train_set.class_names().to_vec())?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let samples = train_set.samples();
    let n = samples.len();
    let bs = batch_size(n, cfg.num_batches);
    let n_batches = cfg.num_batches.min(n);

    let mut order: Vec<usize> = (0..n).collect();
    let mut state = RmsState::new(&model);
    let mut grads = Gradients::zeros_like(&model);
    let mut trace = ForwardTrace::empty();
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for b in 0..n_batches {
            let start = b * bs;
            let end = if b + 1 == n_batches { n } else { start + bs };
            let batch = &order[start..end];

            grads.fill_zero();
            let mut batch_loss = 0.0;
            for &i in batch {
                let s = &samples[i];
                forward_into(&model, &s.features, &mut trace)?;
                batch_loss += data_loss(&trace.probs, s.label);
                if nncore::argmax(&trace.probs).0 == s.label {
                    correct += 1;
                }
                accumulate_data_gradient(&model, &trace, s.label, &mut grads)?;
            }
            let inv = 1.0 / batch.len() as f64;
            grads.scale(inv);
            grads.add_l2(&model, cfg.l2_lambda);
            loss_sum += batch_loss * inv + cfg.l2_lambda * model.weight_norm_sq();

            rmsprop_step(&mut model, &grads, &mut state, cfg)?;
        }
        epochs.push(EpochStats {
            epoch,
            loss: loss_sum / n_batches as f64,
            accuracy: correct as f64 / n as f64,
        });
    }

    Ok((
        model,
        TrainReport {
            epochs,
            train_seconds: started.elapsed().as_secs_f64(),
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    /// Per-sample classification time in microseconds, in dataset order.
    pub latencies_us: Vec<f64>,
    pub predictions: Vec<crate::canio::ClassLabel>,
}

/// Classifies every sample, timing each prediction individually.
pub fn evaluate(model: &Model, test_set: &Dataset) -> Result<Evaluation, TrainError> {
    if test_set.num_classes() != model.num_classes() {
        return Err(TrainError::ClassMismatch {
            model: model.num_classes(),
            data: test_set.num_classes(),
        });
    }
    let mut confusion = ConfusionMatrix::new(model.num_classes());
    let mut latencies_us = Vec::with_capacity(test_set.len());
    let mut predictions = Vec::with_capacity(test_set.len());
    for s in test_set.samples() {
        let t0 = Instant::now();
        let (pred, _) = nncore::predict(model, &s.features)?;
        latencies_us.push(t0.elapsed().as_secs_f64() * 1e6);
        confusion
            .record(s.label, pred)
            .expect("labels validated by dataset and model");
        predictions.push(pred);
    }
    Ok(Evaluation {
        confusion,
        latencies_us,
        predictions,
    })
}
