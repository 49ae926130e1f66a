//! Feed-forward classifier: ReLU hidden layers, softmax output, sparse
//! categorical cross-entropy with an L2 weight penalty, and exact
//! backpropagation.
//!
//! Layer widths follow the class-proportional allocation rule: counting
//! trainable layers from the output with index `i` starting at 1, layer `i`
//! holds `i * c` neurons. The output layer therefore has `c` neurons, the last
//! hidden layer `2c`, and the first hidden layer `(H + 1) c`. The input width is
//! the feature count and is not governed by the rule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::canio::{ClassLabel, Normalizer};

/// Lower clip for the true-class probability inside the log.
pub const PROB_CLIP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("invalid architecture: {0}")]
    InvalidArity(String),
    #[error("input has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("forward trace does not match model shapes")]
    TraceMismatch,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelArchitecture {
    input_dim: usize,
    hidden_widths: Vec<usize>,
    num_classes: usize,
}

impl ModelArchitecture {
    /// Any layout with at least one hidden layer, e.g. fixed-width baselines.
    pub fn custom(
        input_dim: usize,
        hidden_widths: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self, NnError> {
        if input_dim == 0 {
            return Err(NnError::InvalidArity("input_dim must be positive".into()));
        }
        if hidden_widths.is_empty() {
            return Err(NnError::InvalidArity(
                "need at least one hidden layer".into(),
            ));
        }
        if num_classes < 2 {
            return Err(NnError::InvalidArity(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if hidden_widths.contains(&0) {
            return Err(NnError::InvalidArity(
                "hidden widths must be positive".into(),
            ));
        }
        Ok(Self {
            input_dim,
            hidden_widths,
            num_classes,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_hidden(&self) -> usize {
        self.hidden_widths.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.hidden_widths
    }

    /// Hidden widths in input-to-output order followed by the output width.
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut w = self.hidden_widths.clone();
        w.push(self.num_classes);
        w
    }

    /// `(fan_in, fan_out)` of every trainable layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let widths = self.layer_widths();
        std::iter::once(self.input_dim)
            .chain(widths.iter().copied())
            .zip(widths.iter().copied())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(fan_in, fan_out)| fan_in * fan_out + fan_out)
            .sum()
    }

    /// True when every trainable layer width equals `i * c`.
    pub fn follows_allocation_rule(&self) -> bool {
        let widths = self.layer_widths();
        let n = widths.len();
        widths
            .iter()
            .enumerate()
            .all(|(pos, &w)| w == (n - pos) * self.num_classes)
    }
}

/// Derives the architecture for `num_hidden` hidden layers and `num_classes`
/// classes from the allocation rule.
pub fn allocate_layers(
    num_hidden: usize,
    num_classes: usize,
    input_dim: usize,
) -> Result<ModelArchitecture, NnError> {
    if num_hidden < 1 {
        return Err(NnError::InvalidArity(
            "need at least one hidden layer".into(),
        ));
    }
    if num_classes < 2 {
        return Err(NnError::InvalidArity(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    let hidden = (2..=num_hidden + 1)
        .rev()
        .map(|i| i * num_classes)
        .collect();
    ModelArchitecture::custom(input_dim, hidden, num_classes)
}

/// Weights are stored row-major with shape `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    fan_in: usize,
    fan_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            biases: vec![0.0; fan_out],
        }
    }

    pub fn from_parts(
        fan_in: usize,
        fan_out: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
    ) -> Option<Self> {
        (weights.len() == fan_in * fan_out && biases.len() == fan_out).then_some(Self {
            fan_in,
            fan_out,
            weights,
            biases,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn fan_out(&self) -> usize {
        self.fan_out
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.fan_out + col]
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.biases);
        for (row, &x) in self.weights.chunks_exact(self.fan_out).zip(input) {
            if x == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(row) {
                *o += x * w;
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: ModelArchitecture,
    layers: Vec<DenseLayer>,
    normalizer: Normalizer,
    class_names: Vec<String>,
}

impl Model {
    /// Assembles a model from parts, checking that every shape composes.
    pub fn from_layers(
        arch: ModelArchitecture,
        layers: Vec<DenseLayer>,
        normalizer: Normalizer,
        class_names: Vec<String>,
    ) -> Result<Self, NnError> {
        let shapes = arch.layer_shapes();
        if layers.len() != shapes.len()
            || layers
                .iter()
                .zip(&shapes)
                .any(|(l, &(i, o))| l.fan_in != i || l.fan_out != o)
        {
            return Err(NnError::InvalidArity("layer shapes do not compose".into()));
        }
        if class_names.len() != arch.num_classes {
            return Err(NnError::InvalidArity(format!(
                "{} class names for {} classes",
                class_names.len(),
                arch.num_classes
            )));
        }
        if !layers.iter().all(DenseLayer::is_finite) {
            return Err(NnError::InvalidArity("non-finite parameter".into()));
        }
        Ok(Self {
            arch,
            layers,
            normalizer,
            class_names,
        })
    }

    pub fn arch(&self) -> &ModelArchitecture {
        &self.arch
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn normalizer(&self) -> Normalizer {
        self.normalizer
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn set_class_names(&mut self, names: Vec<String>) -> Result<(), NnError> {
        if names.len() != self.arch.num_classes {
            return Err(NnError::InvalidArity(format!(
                "{} class names for {} classes",
                names.len(),
                self.arch.num_classes
            )));
        }
        self.class_names = names;
        Ok(())
    }

    /// Sum of squared weights over all layers (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| &l.weights)
            .map(|w| w * w)
            .sum()
    }

    /// A model whose parameters are all zero.
    pub fn zeros(arch: ModelArchitecture) -> Self {
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| DenseLayer::zeros(i, o))
            .collect();
        let class_names = (0..arch.num_classes).map(|c| c.to_string()).collect();
        Self {
            arch,
            layers,
            normalizer: Normalizer::default(),
            class_names,
        }
    }
}

/// He/Kaiming normal initialization: weights ~ N(0, 2 / fan_in), zero biases.
pub fn kaiming_init(arch: &ModelArchitecture, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::zeros(arch.clone());
    for layer in &mut model.layers {
        let std = (2.0 / layer.fan_in as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("finite positive std");
        for w in &mut layer.weights {
            *w = dist.sample(&mut rng);
        }
    }
    model
}

/// Numerically stable softmax: `softmax(z) == softmax(z - max z)`.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    /// Affine outputs of every layer; the last entry holds the logits.
    pub pre_activations: Vec<Vec<f64>>,
    /// ReLU outputs of the hidden layers.
    pub hidden_activations: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl ForwardTrace {
    pub fn empty() -> Self {
        Self {
            input: Vec::new(),
            pre_activations: Vec::new(),
            hidden_activations: Vec::new(),
            probs: Vec::new(),
        }
    }
}

pub fn forward(model: &Model, x: &[f64]) -> Result<ForwardTrace, NnError> {
    let mut trace = ForwardTrace::empty();
    forward_into(model, x, &mut trace)?;
    Ok(trace)
}

/// [`forward`] writing into an existing trace, reusing its buffers.
pub fn forward_into(model: &Model, x: &[f64], trace: &mut ForwardTrace) -> Result<(), NnError> {
    check_input(model, x)?;
    let n = model.layers.len();
    trace.input.clear();
    trace.input.extend_from_slice(x);
    trace.pre_activations.resize_with(n, Vec::new);
    trace.hidden_activations.resize_with(n - 1, Vec::new);
    for (i, layer) in model.layers.iter().enumerate() {
        let input = if i == 0 {
            x
        } else {
            &trace.hidden_activations[i - 1]
        };
        let mut z = std::mem::take(&mut trace.pre_activations[i]);
        layer.affine(input, &mut z);
        if i + 1 < n {
            let a = &mut trace.hidden_activations[i];
            a.clear();
            a.extend(z.iter().map(|&v| v.max(0.0)));
        }
        trace.pre_activations[i] = z;
    }
    let logits = &trace.pre_activations[n - 1];
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    trace.probs.clear();
    trace.probs.extend(logits.iter().map(|z| (z - max).exp()));
    let sum: f64 = trace.probs.iter().sum();
    for p in &mut trace.probs {
        *p /= sum;
    }
    Ok(())
}

fn check_input(model: &Model, x: &[f64]) -> Result<(), NnError> {
    if x.len() != model.arch.input_dim {
        return Err(NnError::DimensionMismatch {
            expected: model.arch.input_dim,
            got: x.len(),
        });
    }
    Ok(())
}

/// `-ln(max(p_label, 1e-12)) + l2_lambda * sum(w^2)`.
pub fn scce_loss(trace: &ForwardTrace, label: ClassLabel, model: &Model, l2_lambda: f64) -> f64 {
    data_loss(&trace.probs, label) + l2_lambda * model.weight_norm_sq()
}

pub(crate) fn data_loss(probs: &[f64], label: ClassLabel) -> f64 {
    -probs[label.0].max(PROB_CLIP).ln()
}

/// Parameter-shaped gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseLayer>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.fan_in, l.fan_out))
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.biases.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *v *= factor;
            }
        }
    }

    /// Adds the gradient of `l2_lambda * sum(w^2)`.
    pub fn add_l2(&mut self, model: &Model, l2_lambda: f64) {
        if l2_lambda == 0.0 {
            return;
        }
        for (g, l) in self.layers.iter_mut().zip(&model.layers) {
            for (gw, w) in g.weights.iter_mut().zip(&l.weights) {
                *gw += 2.0 * l2_lambda * w;
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
            .copied()
    }
}

/// Analytic gradient of [`scce_loss`] with respect to every parameter.
pub fn backward(
    model: &Model,
    trace: &ForwardTrace,
    label: ClassLabel,
    l2_lambda: f64,
) -> Result<Gradients, NnError> {
    let mut grads = Gradients::zeros_like(model);
    accumulate_data_gradient(model, trace, label, &mut grads)?;
    grads.add_l2(model, l2_lambda);
    Ok(grads)
}

/// Adds the cross-entropy part of the gradient for one sample into `grads`.
pub(crate) fn accumulate_data_gradient(
    model: &Model,
    trace: &ForwardTrace,
    label: ClassLabel,
    grads: &mut Gradients,
) -> Result<(), NnError> {
    let n = model.layers.len();
    if label.0 >= model.arch.num_classes {
        return Err(NnError::LabelOutOfRange {
            label: label.0,
            classes: model.arch.num_classes,
        });
    }
    let shapes_ok = trace.input.len() == model.arch.input_dim
        && trace.pre_activations.len() == n
        && trace.hidden_activations.len() == n - 1
        && trace.probs.len() == model.arch.num_classes
        && grads.layers.len() == n
        && model
            .layers
            .iter()
            .zip(&trace.pre_activations)
            .all(|(l, z)| z.len() == l.fan_out);
    if !shapes_ok {
        return Err(NnError::TraceMismatch);
    }

    // dL/dz for the output layer is probs - one_hot(label).
    let mut delta = trace.probs.clone();
    delta[label.0] -= 1.0;

    for i in (0..n).rev() {
        let layer = &model.layers[i];
        let input = if i == 0 {
            &trace.input
        } else {
            &trace.hidden_activations[i - 1]
        };
        let g = &mut grads.layers[i];
        for (gb, d) in g.biases.iter_mut().zip(&delta) {
            *gb += d;
        }
        for (grow, &a) in g.weights.chunks_exact_mut(layer.fan_out).zip(input) {
            if a == 0.0 {
                continue;
            }
            for (gw, d) in grow.iter_mut().zip(&delta) {
                *gw += a * d;
            }
        }
        if i > 0 {
            let z_prev = &trace.pre_activations[i - 1];
            delta = layer
                .weights
                .chunks_exact(layer.fan_out)
                .zip(z_prev)
                .map(|(row, &z)| {
                    if z > 0.0 {
                        row.iter().zip(&delta).map(|(w, d)| w * d).sum()
                    } else {
                        0.0
                    }
                })
                .collect();
        }
    }
    Ok(())
}

/// Class probabilities without keeping the trace.
pub fn probabilities(model: &Model, x: &[f64]) -> Result<Vec<f64>, NnError> {
    check_input(model, x)?;
    let mut cur = x.to_vec();
    let mut next = Vec::new();
    let n = model.layers.len();
    for (i, layer) in model.layers.iter().enumerate() {
        layer.affine(&cur, &mut next);
        if i + 1 < n {
            for v in &mut next {
                *v = v.max(0.0);
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(softmax(&cur))
}

/// Argmax class (lowest index wins ties) and its probability.
pub fn predict(model: &Model, x: &[f64]) -> Result<(ClassLabel, f64), NnError> {
    Ok(argmax(&probabilities(model, x)?))
}

pub(crate) fn argmax(probs: &[f64]) -> (ClassLabel, f64) {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    (ClassLabel(best), probs[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn allocation_examples() {
        let a = allocate_layers(3, 6, 9).unwrap();
        assert_eq!(a.hidden_widths(), &[24, 18, 12]);
        assert_eq!(a.layer_widths(), vec![24, 18, 12, 6]);
        assert_eq!(allocate_layers(1, 2, 9).unwrap().layer_widths(), vec![4, 2]);
        assert_eq!(
            allocate_layers(3, 5, 9).unwrap().layer_widths(),
            vec![20, 15, 10, 5]
        );
        assert!(a.follows_allocation_rule());
        assert_eq!(a.num_hidden(), 3);
    }

    #[test]
    fn allocation_rejects_bad_arity() {
        assert!(matches!(
            allocate_layers(0, 6, 9),
            Err(NnError::InvalidArity(_))
        ));
        assert!(matches!(
            allocate_layers(3, 1, 9),
            Err(NnError::InvalidArity(_))
        ));
        assert!(allocate_layers(3, 6, 0).is_err());
    }

    #[test]
    fn parameter_count_matches_formula() {
        let arch = allocate_layers(3, 6, 9).unwrap();
        assert_eq!(arch.param_count(), 996);
        assert_eq!(kaiming_init(&arch, 0).param_count(), 996);
    }

    #[test]
    fn fixed_width_is_not_allocation_rule() {
        let arch = ModelArchitecture::custom(9, vec![10, 10, 10], 6).unwrap();
        assert!(!arch.follows_allocation_rule());
    }

    #[test]
    fn kaiming_std_and_zero_biases() {
        // One 8 x 1250 layer gives 10,000 draws with fan_in = 8.
        let arch = ModelArchitecture::custom(8, vec![1250], 2).unwrap();
        let model = kaiming_init(&arch, 11);
        let w = &model.layers()[0].weights;
        assert_eq!(w.len(), 10_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let std = var.sqrt();
        assert!((std - 0.5).abs() <= 0.025, "std {std}");
        assert!(model
            .layers()
            .iter()
            .all(|l| l.biases.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn kaiming_is_seeded() {
        let arch = allocate_layers(3, 6, 9).unwrap();
        assert_eq!(kaiming_init(&arch, 5), kaiming_init(&arch, 5));
        assert_ne!(kaiming_init(&arch, 5), kaiming_init(&arch, 6));
    }

    #[test]
    fn zero_model_is_uniform() {
        let model = Model::zeros(allocate_layers(2, 6, 9).unwrap());
        let t = forward(&model, &[0.3; 9]).unwrap();
        for p in &t.probs {
            assert_relative_eq!(*p, 1.0 / 6.0, epsilon = 1e-15);
        }
        let (label, conf) = predict(&model, &[0.3; 9]).unwrap();
        assert_eq!(label, ClassLabel(0));
        assert_relative_eq!(conf, 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn softmax_hand_values() {
        let p = softmax(&[1.0, 2.0, 3.0]);
        assert_relative_eq!(p[0], 0.090031, epsilon = 1e-6);
        assert_relative_eq!(p[1], 0.244728, epsilon = 1e-6);
        assert_relative_eq!(p[2], 0.665241, epsilon = 1e-6);
        assert_eq!(softmax(&[0.0; 3]), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let model = Model::zeros(allocate_layers(1, 2, 9).unwrap());
        assert_eq!(
            forward(&model, &[0.0; 8]).unwrap_err(),
            NnError::DimensionMismatch {
                expected: 9,
                got: 8
            }
        );
        assert!(predict(&model, &[0.0; 10]).is_err());
    }

    fn trace_with_probs(probs: Vec<f64>) -> ForwardTrace {
        ForwardTrace {
            input: vec![],
            pre_activations: vec![],
            hidden_activations: vec![],
            probs,
        }
    }

    #[test]
    fn loss_examples() {
        let model = Model::zeros(allocate_layers(1, 4, 1).unwrap());
        let t = trace_with_probs(vec![0.25; 4]);
        assert_relative_eq!(
            scce_loss(&t, ClassLabel(2), &model, 0.0),
            4f64.ln(),
            epsilon = 1e-12
        );
        let t = trace_with_probs(vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(scce_loss(&t, ClassLabel(1), &model, 0.0), 0.0);
        // A zero probability is clipped rather than producing infinity.
        assert_relative_eq!(
            scce_loss(&t, ClassLabel(0), &model, 0.0),
            -(1e-12f64).ln(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn loss_with_l2_penalty() {
        // Single weight matrix [[1, -2]]: one input, two classes.
        let arch = ModelArchitecture::custom(1, vec![1], 2).unwrap();
        let mut model = Model::zeros(arch);
        model.layers_mut()[0].weights = vec![0.0];
        model.layers_mut()[1].weights = vec![1.0, -2.0];
        let t = trace_with_probs(vec![0.5, 0.5]);
        let loss = scce_loss(&t, ClassLabel(0), &model, 0.01);
        assert_relative_eq!(loss, 0.743147, epsilon = 1e-6);
        assert_relative_eq!(loss, 2f64.ln() + 0.05, epsilon = 1e-15);
    }

    #[test]
    fn zero_model_output_gradient() {
        let model = Model::zeros(allocate_layers(1, 2, 9).unwrap());
        let t = forward(&model, &[0.5; 9]).unwrap();
        let g = backward(&model, &t, ClassLabel(0), 0.0).unwrap();
        assert_eq!(g.layers[1].biases, vec![-0.5, 0.5]);
    }

    #[test]
    fn dead_relu_unit_has_zero_incoming_gradient() {
        let arch = allocate_layers(1, 2, 3).unwrap();
        let mut model = kaiming_init(&arch, 3);
        // Unit 0 of the hidden layer: strongly negative bias, nonpositive weights.
        for row in 0..3 {
            let w = &mut model.layers_mut()[0].weights[row * 4];
            *w = -w.abs();
        }
        model.layers_mut()[0].biases[0] = -1.0;
        let x = [0.2, 0.7, 0.4];
        let t = forward(&model, &x).unwrap();
        assert!(t.pre_activations[0][0] < 0.0);
        let g = backward(&model, &t, ClassLabel(1), 0.0).unwrap();
        for row in 0..3 {
            assert_eq!(g.layers[0].weight(row, 0), 0.0);
        }
        assert_eq!(g.layers[0].biases[0], 0.0);
    }

    #[test]
    fn backward_rejects_foreign_trace() {
        let small = Model::zeros(allocate_layers(1, 2, 9).unwrap());
        let big = Model::zeros(allocate_layers(2, 2, 9).unwrap());
        let t = forward(&small, &[0.1; 9]).unwrap();
        assert_eq!(
            backward(&big, &t, ClassLabel(0), 0.0).unwrap_err(),
            NnError::TraceMismatch
        );
        assert!(matches!(
            backward(&small, &t, ClassLabel(2), 0.0),
            Err(NnError::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn argmax_tie_break_and_confidence() {
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), (ClassLabel(1), 0.7));
        assert_eq!(argmax(&[0.5, 0.5]), (ClassLabel(0), 0.5));
    }

    #[test]
    fn probabilities_match_forward_trace() {
        let arch = allocate_layers(3, 6, 9).unwrap();
        let model = kaiming_init(&arch, 2);
        let x = [0.1, 0.9, 0.3, 0.0, 1.0, 0.5, 0.25, 0.75, 0.6];
        assert_eq!(
            probabilities(&model, &x).unwrap(),
            forward(&model, &x).unwrap().probs
        );
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(logits in prop::collection::vec(-50.0f64..50.0, 2..12)) {
            let p = softmax(&logits);
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&v| v > 0.0));
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let shifted: Vec<f64> = logits.iter().map(|z| z - max).collect();
            prop_assert_eq!(softmax(&shifted), p);
        }

        #[test]
        fn argmax_invariant_under_logit_shift(
            logits in prop::collection::vec(-20.0f64..20.0, 2..8),
            shift in -100.0f64..100.0,
        ) {
            let a = argmax(&softmax(&logits)).0;
            let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
            prop_assert_eq!(argmax(&softmax(&shifted)).0, a);
        }

        #[test]
        fn allocation_widths_strictly_decrease(h in 1usize..8, c in 2usize..12) {
            let arch = allocate_layers(h, c, 9).unwrap();
            let w = arch.layer_widths();
            prop_assert_eq!(w.len(), h + 1);
            prop_assert!(w.windows(2).all(|p| p[0] > p[1]));
            prop_assert_eq!(w[0], (h + 1) * c);
            prop_assert!(arch.follows_allocation_rule());
        }
    }
}
