//! Shallow baselines: zero rule, logistic regression and a one-hidden-layer
//! perceptron, trained with weighted cross-entropy and Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embed::{IndexedParagraph, Vocabulary};
use crate::error::{Error, Result};

mod format;
mod train;

pub use format::{decode_model, encode_model, FORMAT_VERSION, MAGIC};
pub use train::{
    carve_validation, fit, train, EarlyStopping, EpochRecord, History, TrainConfig,
};

/// Floor applied to the true-class probability inside the log.
pub const PROB_FLOOR: f64 = 1e-12;
pub const DEFAULT_HIDDEN: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    ZeroRule,
    /// Logistic regression on vocabulary indices scaled by vocabulary size.
    LogRegIndex,
    /// Logistic regression on the flattened embedded matrix.
    LogRegEmbedded,
    /// One rectifier hidden layer on the flattened embedded matrix.
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::ZeroRule,
        ModelKind::LogRegIndex,
        ModelKind::LogRegEmbedded,
        ModelKind::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::ZeroRule => "zero-rule",
            ModelKind::LogRegIndex => "logreg-index",
            ModelKind::LogRegEmbedded => "logreg-embedded",
            ModelKind::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            ModelKind::ZeroRule => 0,
            ModelKind::LogRegIndex => 1,
            ModelKind::LogRegEmbedded => 2,
            ModelKind::Mlp => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<ModelKind> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn uses_embeddings(self) -> bool {
        matches!(self, ModelKind::LogRegEmbedded | ModelKind::Mlp)
    }
}

/// One classifier input, visited as its nonzero features.
#[derive(Clone, Copy, Debug)]
pub enum Features<'a> {
    Dense(&'a [f32]),
    /// Compacted token indices; row `r` of the flattened matrix holds the
    /// vector of `indices[r]`, rows past the end are zero.
    Tokens {
        indices: &'a [u32],
        vocab: &'a Vocabulary,
        window: usize,
    },
}

impl Features<'_> {
    pub fn input_dim(&self) -> usize {
        match self {
            Features::Dense(x) => x.len(),
            Features::Tokens { vocab, window, .. } => window * vocab.dim(),
        }
    }

    fn check(&self, expected: usize) -> Result<()> {
        if self.input_dim() != expected {
            return Err(Error::Shape {
                expected,
                actual: self.input_dim(),
            });
        }
        if let Features::Tokens {
            indices, window, vocab,
        } = self
        {
            if indices.len() > *window {
                return Err(Error::Shape {
                    expected: *window,
                    actual: indices.len(),
                });
            }
            for &i in *indices {
                vocab.vector(i)?;
            }
        }
        Ok(())
    }

    /// Calls `f(feature, value)` for every possibly nonzero feature.
    fn visit(&self, mut f: impl FnMut(usize, f64)) {
        match self {
            Features::Dense(x) => {
                for (i, &v) in x.iter().enumerate() {
                    if v != 0.0 {
                        f(i, f64::from(v));
                    }
                }
            }
            Features::Tokens { indices, vocab, .. } => {
                let dim = vocab.dim();
                for (r, &idx) in indices.iter().enumerate() {
                    let Ok(vector) = vocab.vector(idx) else {
                        continue;
                    };
                    for (d, &v) in vector.iter().enumerate() {
                        f(r * dim + d, f64::from(v));
                    }
                }
            }
        }
    }
}

/// Index-mode features: each window slot holds its index over the
/// vocabulary size, padding stays zero.
pub fn index_features(p: &IndexedParagraph, vocab_size: usize) -> Vec<f32> {
    let scale = vocab_size.max(1) as f64;
    p.indices
        .iter()
        .map(|&i| (f64::from(i) / scale) as f32)
        .collect()
}

/// A set of training or evaluation inputs of one shape.
#[derive(Clone, Debug)]
pub enum Inputs<'v> {
    Dense { dim: usize, rows: Vec<Vec<f32>> },
    Tokens {
        vocab: &'v Vocabulary,
        window: usize,
        rows: Vec<Vec<u32>>,
    },
}

impl<'v> Inputs<'v> {
    pub fn len(&self) -> usize {
        match self {
            Inputs::Dense { rows, .. } => rows.len(),
            Inputs::Tokens { rows, .. } => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Inputs::Dense { dim, .. } => *dim,
            Inputs::Tokens { vocab, window, .. } => window * vocab.dim(),
        }
    }

    pub fn get(&self, i: usize) -> Features<'_> {
        match self {
            Inputs::Dense { rows, .. } => Features::Dense(&rows[i]),
            Inputs::Tokens {
                vocab,
                window,
                rows,
            } => Features::Tokens {
                indices: &rows[i],
                vocab,
                window: *window,
            },
        }
    }

    /// Builds inputs for `kind` from indexed paragraphs.
    pub fn from_indexed(
        kind: ModelKind,
        paragraphs: &[IndexedParagraph],
        vocab: &'v Vocabulary,
        window: usize,
    ) -> Inputs<'v> {
        if kind.uses_embeddings() {
            Inputs::Tokens {
                vocab,
                window,
                rows: paragraphs.iter().map(|p| p.tokens().to_vec()).collect(),
            }
        } else {
            Inputs::Dense {
                dim: window,
                rows: paragraphs
                    .iter()
                    .map(|p| index_features(p, vocab.len()))
                    .collect(),
            }
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-w[y] * ln(max(p[y], 1e-12))`, rejecting invalid distributions.
pub fn weighted_cross_entropy(probs: &[f64], truth: usize, weights: &[f64]) -> Result<f64> {
    if probs.len() != weights.len() {
        return Err(Error::Shape {
            expected: weights.len(),
            actual: probs.len(),
        });
    }
    if truth >= probs.len() {
        return Err(Error::Argument(format!(
            "class {truth} out of range for {} classes",
            probs.len()
        )));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Distribution("negative or non-finite entry".into()));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Distribution(format!("sums to {sum}")));
    }
    Ok(-weights[truth] * probs[truth].max(PROB_FLOOR).ln())
}

/// Balanced weights `N / (K * count)`; absent classes get weight 1.
pub fn class_weights(labels: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &y in labels {
        if y < classes {
            counts[y] += 1;
        }
    }
    let n = labels.len() as f64;
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                1.0
            } else {
                n / (classes as f64 * c as f64)
            }
        })
        .collect()
}

/// Most frequent label; ties go to the lowest index.
pub fn zero_rule(labels: &[usize], classes: usize) -> Result<usize> {
    if labels.is_empty() {
        return Err(Error::Empty("training labels"));
    }
    let mut counts = vec![0u64; classes];
    for &y in labels {
        if y >= classes {
            return Err(Error::Argument(format!("label {y} out of range")));
        }
        counts[y] += 1;
    }
    majority_class(&counts)
}

/// Zero rule over per-class counts.
pub fn majority_class(counts: &[u64]) -> Result<usize> {
    let best = counts.iter().copied().max().unwrap_or(0);
    if best == 0 {
        return Err(Error::Empty("training labels"));
    }
    Ok(counts.iter().position(|&c| c == best).unwrap_or(0))
}

/// Adam optimizer state.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            epsilon,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn with_defaults(len: usize) -> Self {
        Self::new(len, 0.001, 0.9, 0.999, 1e-8)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape {
                expected: self.m.len(),
                actual: grads.len().min(params.len()),
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(i));
        }
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let step = self.lr * (1.0 - b2.powi(t)).sqrt() / (1.0 - b1.powi(t));
        let eps_hat = eps * (1.0 - b2.powi(t)).sqrt();
        params
            .par_iter_mut()
            .zip(self.m.par_iter_mut())
            .zip(self.v.par_iter_mut())
            .zip(grads.par_iter())
            .for_each(|(((p, m), v), &g)| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= step * *m / (v.sqrt() + eps_hat);
            });
        Ok(())
    }
}

/// Dense network over flattened inputs. Parameters are stored flat:
/// linear is `W (input × K)` then `b (K)`; the perceptron is
/// `W1 (input × H)`, `b1 (H)`, `W2 (H × K)`, `b2 (K)`, all row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub input_dim: usize,
    /// Hidden width; `None` for a linear model.
    pub hidden: Option<usize>,
    pub classes: usize,
    pub params: Vec<f64>,
}

impl Network {
    pub fn param_count(input_dim: usize, hidden: Option<usize>, classes: usize) -> Option<usize> {
        match hidden {
            None => input_dim.checked_add(1)?.checked_mul(classes),
            Some(h) => {
                let first = input_dim.checked_add(1)?.checked_mul(h)?;
                let second = h.checked_add(1)?.checked_mul(classes)?;
                first.checked_add(second)
            }
        }
    }

    pub fn zeros(input_dim: usize, hidden: Option<usize>, classes: usize) -> Result<Network> {
        let n = Self::param_count(input_dim, hidden, classes)
            .ok_or_else(|| Error::Argument("network too large".into()))?;
        if classes == 0 || input_dim == 0 || hidden == Some(0) {
            return Err(Error::Argument("network dimensions must be positive".into()));
        }
        Ok(Network {
            input_dim,
            hidden,
            classes,
            params: vec![0.0; n],
        })
    }

    /// Glorot-uniform weights and zero biases from a seeded generator.
    pub fn init(input_dim: usize, hidden: Option<usize>, classes: usize, seed: u64) -> Result<Network> {
        let mut net = Self::zeros(input_dim, hidden, classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |w: &mut [f64], fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for x in w {
                *x = rng.gen_range(-limit..limit);
            }
        };
        match hidden {
            None => {
                let n = input_dim * classes;
                fill(&mut net.params[..n], input_dim, classes);
            }
            Some(h) => {
                let w1 = input_dim * h;
                fill(&mut net.params[..w1], input_dim, h);
                let w2_start = w1 + h;
                fill(&mut net.params[w2_start..w2_start + h * classes], h, classes);
            }
        }
        Ok(net)
    }

    fn check(&self, x: &Features<'_>) -> Result<()> {
        x.check(self.input_dim)
    }

    /// Pre-softmax scores, plus the hidden pre-activations for the
    /// perceptron.
    fn forward(&self, x: &Features<'_>) -> (Vec<f64>, Vec<f64>) {
        let k = self.classes;
        match self.hidden {
            None => {
                let bias = &self.params[self.input_dim * k..];
                let mut z = bias.to_vec();
                x.visit(|f, v| {
                    let row = &self.params[f * k..(f + 1) * k];
                    for (zj, w) in z.iter_mut().zip(row) {
                        *zj += v * w;
                    }
                });
                (z, Vec::new())
            }
            Some(h) => {
                let w1 = self.input_dim * h;
                let mut pre = self.params[w1..w1 + h].to_vec();
                x.visit(|f, v| {
                    let row = &self.params[f * h..(f + 1) * h];
                    for (a, w) in pre.iter_mut().zip(row) {
                        *a += v * w;
                    }
                });
                let w2 = w1 + h;
                let b2 = w2 + h * k;
                let mut z = self.params[b2..b2 + k].to_vec();
                for (j, &a) in pre.iter().enumerate() {
                    if a > 0.0 {
                        let row = &self.params[w2 + j * k..w2 + (j + 1) * k];
                        for (zk, w) in z.iter_mut().zip(row) {
                            *zk += a * w;
                        }
                    }
                }
                (z, pre)
            }
        }
    }

    pub fn logits(&self, x: &Features<'_>) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self.forward(x).0)
    }

    pub fn predict(&self, x: &Features<'_>) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Weighted cross-entropy of one sample; adds its gradient, scaled by
    /// `scale`, into `grad`.
    pub fn loss_and_grad(
        &self,
        x: &Features<'_>,
        truth: usize,
        weights: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        self.check(x)?;
        if grad.len() != self.params.len() {
            return Err(Error::Shape {
                expected: self.params.len(),
                actual: grad.len(),
            });
        }
        let k = self.classes;
        let (z, pre) = self.forward(x);
        let p = softmax(&z);
        let loss = weighted_cross_entropy(&p, truth, weights)?;
        let w = weights[truth];
        let dz: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(j, &pj)| scale * w * (pj - if j == truth { 1.0 } else { 0.0 }))
            .collect();
        match self.hidden {
            None => {
                x.visit(|f, v| {
                    for (g, d) in grad[f * k..(f + 1) * k].iter_mut().zip(&dz) {
                        *g += v * d;
                    }
                });
                for (g, d) in grad[self.input_dim * k..].iter_mut().zip(&dz) {
                    *g += d;
                }
            }
            Some(h) => {
                let w1 = self.input_dim * h;
                let w2 = w1 + h;
                let b2 = w2 + h * k;
                let mut dpre = vec![0.0; h];
                for (j, &a) in pre.iter().enumerate() {
                    if a <= 0.0 {
                        continue;
                    }
                    let row = w2 + j * k;
                    let mut back = 0.0;
                    for c in 0..k {
                        grad[row + c] += a * dz[c];
                        back += self.params[row + c] * dz[c];
                    }
                    dpre[j] = back;
                }
                for (g, d) in grad[b2..b2 + k].iter_mut().zip(&dz) {
                    *g += d;
                }
                x.visit(|f, v| {
                    for (g, d) in grad[f * h..(f + 1) * h].iter_mut().zip(&dpre) {
                        *g += v * d;
                    }
                });
                for (g, d) in grad[w1..w1 + h].iter_mut().zip(&dpre) {
                    *g += d;
                }
            }
        }
        Ok(loss)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Body {
    /// Zero rule: always this class.
    Constant(usize),
    Network(Network),
}

/// A trained classifier together with the input shape it expects.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub classes: Vec<String>,
    pub window: usize,
    /// Embedding dimension, 0 for index-mode models.
    pub emb_dim: usize,
    pub vocab_size: usize,
    pub body: Body,
}

impl Model {
    pub fn input_dim(&self) -> usize {
        match &self.body {
            Body::Constant(_) => 0,
            Body::Network(n) => n.input_dim,
        }
    }

    /// Class probabilities for one input. The zero rule ignores its input.
    pub fn predict(&self, x: &Features<'_>) -> Result<Vec<f64>> {
        match &self.body {
            Body::Constant(c) => {
                let mut p = vec![0.0; self.classes.len()];
                p[*c] = 1.0;
                Ok(p)
            }
            Body::Network(n) => n.predict(x),
        }
    }

    /// Predictions for all inputs, computed in parallel.
    pub fn predict_all(&self, inputs: &Inputs<'_>) -> Result<Vec<Vec<f64>>> {
        (0..inputs.len())
            .into_par_iter()
            .map(|i| self.predict(&inputs.get(i)))
            .collect()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, encode_model(self)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Model> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        decode_model(&bytes)
    }
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cross_entropy_values() {
        let w = vec![1.0; 13];
        let mut onehot = vec![0.0; 13];
        onehot[4] = 1.0;
        assert_eq!(weighted_cross_entropy(&onehot, 4, &w).unwrap(), 0.0);
        let uniform = vec![1.0 / 13.0; 13];
        assert_relative_eq!(
            weighted_cross_entropy(&uniform, 0, &w).unwrap(),
            13f64.ln(),
            epsilon = 1e-12
        );
        let mut half = vec![0.0; 13];
        half[0] = 0.5;
        half[1] = 0.5;
        let mut w2 = w.clone();
        w2[1] = 2.0;
        assert_relative_eq!(
            weighted_cross_entropy(&half, 1, &w2).unwrap(),
            2.0 * 2f64.ln(),
            epsilon = 1e-12
        );
        // floor keeps the loss finite
        assert_relative_eq!(
            weighted_cross_entropy(&half, 5, &w).unwrap(),
            -(1e-12f64).ln(),
            epsilon = 1e-9
        );
        assert!(weighted_cross_entropy(&[0.7, 0.7], 0, &[1.0, 1.0]).is_err());
        assert!(weighted_cross_entropy(&[1.5, -0.5], 0, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let mut p = vec![0.0];
        let mut adam = Adam::with_defaults(1);
        adam.step(&mut p, &[1.0]).unwrap();
        assert_relative_eq!(p[0], -0.001, epsilon = 1e-9);
        let before = p.clone();
        adam.step(&mut p, &[0.0]).unwrap();
        assert_eq!(adam.steps(), 2);
        // momentum still moves the parameter; from a fresh state it does not
        let mut fresh = Adam::with_defaults(1);
        let mut q = before.clone();
        fresh.step(&mut q, &[0.0]).unwrap();
        assert_eq!(q, before);
        assert_eq!(fresh.steps(), 1);
        assert!(matches!(
            fresh.step(&mut q, &[f64::NAN]),
            Err(Error::NonFiniteGradient(0))
        ));
    }

    #[test]
    fn zero_rule_ties_and_empty() {
        assert_eq!(zero_rule(&[2, 1, 1, 2], 3).unwrap(), 1);
        assert!(zero_rule(&[], 3).is_err());
    }

    #[test]
    fn zero_network_is_uniform() {
        let net = Network::zeros(5, Some(3), 13).unwrap();
        let x = [1.0f32, -2.0, 0.5, 0.0, 3.0];
        let p = net.predict(&Features::Dense(&x)).unwrap();
        for v in p {
            assert_relative_eq!(v, 1.0 / 13.0, epsilon = 1e-12);
        }
        assert!(net.predict(&Features::Dense(&[1.0])).is_err());
    }

    #[test]
    fn token_features_match_dense_flattening() {
        let vocab = Vocabulary::parse("a 1 2\nb -1 0.5\n").unwrap();
        let net = Network::init(6, Some(4), 3, 7).unwrap();
        let tokens = Features::Tokens {
            indices: &[2, 1],
            vocab: &vocab,
            window: 3,
        };
        let dense = [-1.0f32, 0.5, 1.0, 2.0, 0.0, 0.0];
        assert_eq!(
            net.logits(&tokens).unwrap(),
            net.logits(&Features::Dense(&dense)).unwrap()
        );
    }

    #[test]
    fn class_weight_formula() {
        let w = class_weights(&[0, 0, 0, 1], 3);
        assert_relative_eq!(w[0], 4.0 / 9.0);
        assert_relative_eq!(w[1], 4.0 / 3.0);
        assert_eq!(w[2], 1.0);
    }
}
