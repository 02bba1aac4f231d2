use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, ParamStore, Tape, Var};
use crate::ingest::split::{Batch, WindowSource};
use crate::{Error, Result};

/// Optimization settings shared by the neural forecasters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub decay_rate: f64,
    pub decay_every: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            decay_rate: 0.7,
            decay_every: 5,
            max_epochs: 200,
            patience: 10,
            batch_size: 32,
        }
    }
}

impl TrainOptions {
    /// Learning rate for a 0-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let steps = if self.decay_every == 0 { 0 } else { epoch / self.decay_every };
        self.learning_rate * self.decay_rate.powi(steps as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return Err(Error::Config("learning rate must be positive and decay in (0, 1]".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and epoch budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub initial_validation_loss: f64,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainHistory {
    /// True when some epoch improved on the untrained validation loss.
    pub fn converged(&self) -> bool {
        self.best_epoch.is_some()
    }

    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }
}

/// A model whose parameters live in a [`ParamStore`] and whose loss on a
/// batch can be recorded on a tape.
pub trait Trainable {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn batch_loss(&self, tape: &mut Tape, vars: &[Var], batch: &Batch) -> Result<Var>;
}

/// Mean loss over `targets` in chunks of `batch_size`, without updates.
pub fn evaluate<M: Trainable>(model: &M, source: &WindowSource, targets: &[usize], batch_size: usize) -> Result<f64> {
    if targets.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for chunk in targets.chunks(batch_size) {
        let mut tape = Tape::new();
        let vars = model.params().bind(&mut tape);
        let loss = model.batch_loss(&mut tape, &vars, &source.batch(chunk))?;
        total += tape.scalar(loss) * chunk.len() as f64;
    }
    Ok(total / targets.len() as f64)
}

/// Mini-batch Adam with step decay, early stopping on validation loss and
/// restoration of the best parameters. A non-finite loss aborts with
/// [`Error::Diverged`].
pub fn fit<M: Trainable>(
    model: &mut M,
    source: &WindowSource,
    train: &[usize],
    validation: &[usize],
    opts: &TrainOptions,
    seed: u64,
) -> Result<TrainHistory> {
    opts.validate()?;
    if train.is_empty() {
        return Err(Error::Data("no training windows".into()));
    }
    let monitor = if validation.is_empty() { train } else { validation };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Adam::new(opts.learning_rate);
    let mut history = TrainHistory {
        initial_validation_loss: evaluate(model, source, monitor, opts.batch_size)?,
        ..Default::default()
    };
    let mut best = history.initial_validation_loss;
    let mut best_params = model.params().clone();
    let mut since_best = 0;
    let mut order = train.to_vec();
    for epoch in 0..opts.max_epochs {
        opt.lr = opts.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            let mut tape = Tape::new();
            let vars = model.params().bind(&mut tape);
            let loss = model.batch_loss(&mut tape, &vars, &source.batch(chunk))?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("training loss became {value}"),
                });
            }
            total += value * chunk.len() as f64;
            let mut grads = tape.backward(loss);
            let g = model.params().gradients(&vars, &mut grads);
            opt.update(model.params_mut(), &g);
            if !model.params().all_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: "parameters became non-finite".into(),
                });
            }
        }
        let val = evaluate(model, source, monitor, opts.batch_size)?;
        if !val.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("validation loss became {val}"),
            });
        }
        history.train_loss.push(total / order.len() as f64);
        history.validation_loss.push(val);
        history.learning_rate.push(opt.lr);
        log::debug!("epoch {epoch}: train {:.6} val {val:.6}", total / order.len() as f64);
        if val < best {
            best = val;
            best_params = model.params().clone();
            history.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    *model.params_mut() = best_params;
    Ok(history)
}
