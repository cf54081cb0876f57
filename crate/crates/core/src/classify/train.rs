use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{class_weights, weighted_cross_entropy, Adam, Inputs, Network};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Per-class loss weights; balanced weights from the training labels
    /// when absent.
    pub class_weights: Option<Vec<f64>>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub min_delta: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Share of the training set held out for validation by [`fit`].
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            class_weights: None,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 128,
            min_delta: 0.001,
            patience: 3,
            max_epochs: 50,
            seed: 0,
            validation_fraction: 0.05,
        }
    }
}

impl TrainConfig {
    fn validate(&self, classes: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("invalid optimizer settings");
        }
        if let Some(w) = &self.class_weights {
            if w.len() != classes {
                return Err(Error::Shape {
                    expected: classes,
                    actual: w.len(),
                });
            }
            if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return bad("class weights must be positive");
            }
        }
        Ok(())
    }
}

/// Stops when the monitored loss has not improved by `min_delta` for
/// `patience` consecutive epochs.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    min_delta: f64,
    patience: usize,
    reference: f64,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(min_delta: f64, patience: usize) -> Self {
        EarlyStopping {
            min_delta,
            patience,
            reference: f64::INFINITY,
            wait: 0,
        }
    }

    /// Records one epoch's loss; returns true when training should stop.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.reference - self.min_delta {
            self.reference = loss;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        self.wait >= self.patience
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose weights were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub fn best_val_loss(&self) -> f64 {
        self.epochs
            .get(self.best_epoch.wrapping_sub(1))
            .map_or(f64::NAN, |e| e.val_loss)
    }
}

/// Splits `0..n` into (train, validation) with a seeded shuffle.
/// Validation gets `round(n * fraction)` items, at least one when `n > 1`.
pub fn carve_validation(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    let mut k = (n as f64 * fraction).round() as usize;
    if n > 1 {
        k = k.clamp(1, n - 1);
    } else {
        k = 0;
    }
    let val = idx.split_off(n - k);
    (idx, val)
}

fn mean_loss(
    net: &Network,
    inputs: &Inputs<'_>,
    labels: &[usize],
    ids: &[usize],
    weights: &[f64],
) -> Result<f64> {
    let losses: Vec<f64> = ids
        .par_iter()
        .map(|&i| {
            let p = net.predict(&inputs.get(i))?;
            weighted_cross_entropy(&p, labels[i], weights)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Mini-batch Adam on weighted cross-entropy. Returns the weights of the
/// epoch with the lowest validation loss.
pub fn train(
    mut net: Network,
    inputs: &Inputs<'_>,
    labels: &[usize],
    train_ids: &[usize],
    val_ids: &[usize],
    config: &TrainConfig,
) -> Result<(Network, History)> {
    config.validate(net.classes)?;
    if train_ids.is_empty() || val_ids.is_empty() {
        return Err(Error::Empty("training or validation set"));
    }
    if labels.len() != inputs.len() {
        return Err(Error::Shape {
            expected: inputs.len(),
            actual: labels.len(),
        });
    }
    if inputs.input_dim() != net.input_dim {
        return Err(Error::Shape {
            expected: net.input_dim,
            actual: inputs.input_dim(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= net.classes) {
        return Err(Error::Argument(format!("label {bad} out of range")));
    }
    let train_labels: Vec<usize> = train_ids.iter().map(|&i| labels[i]).collect();
    if train_labels.iter().all(|&y| y == train_labels[0]) {
        log::warn!("training set has a single class");
    }
    let weights = config
        .class_weights
        .clone()
        .unwrap_or_else(|| class_weights(&train_labels, net.classes));

    let mut adam = Adam::new(
        net.params.len(),
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
    );
    let mut stopper = EarlyStopping::new(config.min_delta, config.patience);
    let mut history = History::default();
    let mut best: Option<(f64, Network)> = None;
    let mut grad = vec![0.0; net.params.len()];
    let mut order = train_ids.to_vec();

    for epoch in 1..=config.max_epochs {
        order.copy_from_slice(train_ids);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64)));
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            // sequential accumulation keeps the sum order fixed
            for &i in batch {
                total += net.loss_and_grad(&inputs.get(i), labels[i], &weights, scale, &mut grad)?;
            }
            adam.step(&mut net.params, &grad)?;
        }
        let train_loss = total / order.len() as f64;
        let val_loss = mean_loss(&net, inputs, labels, val_ids, &weights)?;
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, net.clone()));
            history.best_epoch = epoch;
        }
        if stopper.observe(val_loss) {
            history.stopped_early = epoch < config.max_epochs;
            break;
        }
    }
    let net = best.map(|(_, n)| n).unwrap_or(net);
    Ok((net, history))
}

/// Initializes a network, carves the validation slice and trains.
pub fn fit(
    inputs: &Inputs<'_>,
    labels: &[usize],
    hidden: Option<usize>,
    classes: usize,
    config: &TrainConfig,
) -> Result<(Network, History)> {
    if inputs.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let net = Network::init(inputs.input_dim(), hidden, classes, config.seed)?;
    let (train_ids, val_ids) = carve_validation(inputs.len(), config.validation_fraction, config.seed);
    train(net, inputs, labels, &train_ids, &val_ids, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopping_rule() {
        let mut s = EarlyStopping::new(0.001, 3);
        let stops: Vec<bool> = [1.0, 0.9995, 0.9991, 0.9990]
            .iter()
            .map(|&l| s.observe(l))
            .collect();
        assert_eq!(stops, [false, false, false, true]);
        let mut s = EarlyStopping::new(0.001, 3);
        assert!(![1.0, 0.99, 0.98, 0.97, 0.96].iter().any(|&l| s.observe(l)));
    }

    #[test]
    fn carve_is_disjoint_and_deterministic() {
        let (t, v) = carve_validation(100, 0.05, 3);
        assert_eq!(v.len(), 5);
        assert_eq!(t.len(), 95);
        let mut all: Vec<usize> = t.iter().chain(&v).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(carve_validation(100, 0.05, 3), (t, v));
        assert_eq!(carve_validation(10, 0.05, 0).1.len(), 1);
    }
}
