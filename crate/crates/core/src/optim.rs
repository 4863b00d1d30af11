//! MSE loss, Adagrad updates and the epoch/batch training loop with early
//! stopping and best-weight restore.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::layers::Parameterized;
use crate::model::{EncodedExample, Model};
use crate::tensor::SeededRng;

/// Per-parameter accumulated squared gradients, laid out to mirror the
/// model's parameter blocks.
#[derive(Debug, Clone)]
pub struct AdagradState {
    accum: Vec<Vec<f64>>,
    pub eta: f64,
    pub eps: f64,
}

impl AdagradState {
    pub fn new(model: &Model, eta: f64, eps: f64) -> AdagradState {
        let accum = (0..model.block_count())
            .map(|b| vec![0.0; model.block_len(b)])
            .collect();
        AdagradState { accum, eta, eps }
    }

    /// Current per-element effective step magnitude eta / sqrt(S + eps),
    /// flattened in block order. Nonincreasing over the course of training.
    pub fn effective_steps(&self) -> Vec<f64> {
        self.accum
            .iter()
            .flatten()
            .map(|&s| self.eta / (s + self.eps).sqrt())
            .collect()
    }
}

/// Mean squared error and its gradient with respect to the predictions:
/// loss = (1/N) sum (pred - target)^2, dpreds[i] = 2 (pred_i - target_i) / N.
pub fn mse_loss(preds: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(Error::Argument(format!(
            "mse_loss: got {} predictions and {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let n = preds.len() as f64;
    let mut loss = 0.0;
    let mut dpreds = Vec::with_capacity(preds.len());
    for (&p, &t) in preds.iter().zip(targets) {
        let diff = p - t;
        loss += diff * diff;
        dpreds.push(2.0 * diff / n);
    }
    Ok((loss / n, dpreds))
}

/// One Adagrad update over every parameter: S += g^2, then
/// theta -= eta * g / sqrt(S + eps). Gradients are left untouched; the
/// caller zeroes them at the start of the next batch.
pub fn adagrad_step(state: &mut AdagradState, model: &mut Model) -> Result<()> {
    if state.accum.len() != model.block_count() {
        return Err(Error::Shape(format!(
            "adagrad state has {} blocks, model has {}",
            state.accum.len(),
            model.block_count()
        )));
    }
    for b in 0..model.block_count() {
        if state.accum[b].len() != model.block_len(b) {
            return Err(Error::Shape(format!(
                "adagrad block {} length {} vs model {}",
                b,
                state.accum[b].len(),
                model.block_len(b)
            )));
        }
        for i in 0..state.accum[b].len() {
            let g = model.grad(b, i);
            if g == 0.0 {
                continue;
            }
            let s = &mut state.accum[b][i];
            *s += g * g;
            let theta = model.param(b, i);
            model.set_param(b, i, theta - state.eta * g / (*s + state.eps).sqrt());
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub eta: f64,
    pub eps: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 32,
            eta: 0.01,
            eps: 1e-8,
            early_stop_patience: 20,
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config("train counts must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must be in (0,1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub train_rmse: f64,
    pub val_mse: f64,
    pub val_rmse: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.records[self.best_epoch]
    }
}

/// One pass over the training set: shuffle, then per mini-batch zero the
/// gradients, backpropagate the batch-mean MSE gradient and take one Adagrad
/// step. Returns the mean per-batch loss weighted by batch size.
pub fn train_epoch(
    model: &mut Model,
    train: &[EncodedExample],
    state: &mut AdagradState,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::Dataset("train_epoch on empty training set".into()));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    rng.shuffle(&mut order);
    let mut total_loss = 0.0;
    for batch in order.chunks(cfg.batch_size) {
        model.zero_grads();
        let mut preds = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        let mut caches = Vec::with_capacity(batch.len());
        for &i in batch {
            let (pred, cache) = model.forward(&train[i])?;
            preds.push(pred);
            targets.push(train[i].target);
            caches.push(cache);
        }
        let (loss, dpreds) = mse_loss(&preds, &targets)?;
        for (cache, dpred) in caches.iter().zip(dpreds) {
            model.backward(cache, dpred)?;
        }
        adagrad_step(state, model)?;
        total_loss += loss * batch.len() as f64;
    }
    Ok(total_loss / train.len() as f64)
}

fn mean_squared_error(model: &Model, set: &[EncodedExample]) -> Result<f64> {
    let mut sum = 0.0;
    for ex in set {
        let diff = model.predict(ex)? - ex.target;
        sum += diff * diff;
    }
    Ok(sum / set.len() as f64)
}

/// Full training run: up to cfg.epochs epochs, tracking validation RMSE,
/// stopping after `early_stop_patience` epochs without improvement and
/// restoring the best epoch's parameters before returning.
pub fn fit(
    model: &mut Model,
    train: &[EncodedExample],
    val: &[EncodedExample],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Dataset("fit needs non-empty train and validation sets".into()));
    }
    let mut state = AdagradState::new(model, cfg.eta, cfg.eps);
    let mut records = Vec::new();
    let mut best_epoch = 0;
    let mut best_val_rmse = f64::INFINITY;
    let mut best_params: Vec<Vec<f64>> = model.snapshot();
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut rng = SeededRng::derive(cfg.seed, epoch as u64);
        let train_mse = train_epoch(model, train, &mut state, cfg, &mut rng)?;
        let val_mse = mean_squared_error(model, val)?;
        let val_rmse = val_mse.sqrt();
        records.push(EpochRecord {
            epoch,
            train_mse,
            train_rmse: train_mse.sqrt(),
            val_mse,
            val_rmse,
            seconds: started.elapsed().as_secs_f64(),
        });
        if val_rmse < best_val_rmse {
            best_val_rmse = val_rmse;
            best_epoch = epoch;
            best_params = model.snapshot();
        } else if epoch - best_epoch >= cfg.early_stop_patience {
            break;
        }
    }
    model.restore(&best_params);
    Ok(TrainHistory { records, best_epoch })
}
