use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::{domain_loss, make_batch, DomainData, Sample};
use super::optim::{adam_step, clip_global_norm, AdamState};
use crate::error::{Error, Result};
use crate::features::N_FEATURES;
use crate::nn::{Model, ModelConfig};
use crate::objectives::{objective_step, Objective, ObjectiveState, PenaltyConfig};
use crate::rng::keyed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainWeighting {
    /// One minibatch per domain per step, domains averaged uniformly.
    #[default]
    Equal,
    /// Training domains merged into one pool, weighted by size.
    Proportional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub objective: Objective,
    pub penalties: PenaltyConfig,
    pub clip_norm: Option<f64>,
    pub domain_weighting: DomainWeighting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            weight_decay: 0.0,
            dropout: 0.5,
            batch_size: 128,
            hidden_dim: 64,
            layers: 1,
            max_epochs: 1000,
            patience: 10,
            seed: 0,
            objective: Objective::Erm,
            penalties: PenaltyConfig::default(),
            clip_norm: Some(10.0),
            domain_weighting: DomainWeighting::Equal,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig { input_dim: N_FEATURES, hidden_dim: self.hidden_dim, layers: self.layers, dropout: self.dropout }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.penalties.validate()?;
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be finite and non-negative".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be finite and non-negative".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be positive".into()));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

/// Patience-based early stopping on a loss to be minimised.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    since: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: f64::INFINITY, best_epoch: 0, since: 0 }
    }

    /// Records an epoch; returns whether it is the new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.since = 0;
            true
        } else {
            self.since += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since >= self.patience
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub domain_losses: Vec<f64>,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Parameters of the best validation epoch.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub steps: usize,
    pub train_domains: Vec<String>,
}

/// Endless reshuffled stream over one domain's samples.
struct SampleStream {
    order: Vec<usize>,
    pos: usize,
}

impl SampleStream {
    fn new(n: usize, rng: &mut impl Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        SampleStream { order, pos: 0 }
    }

    fn take(&mut self, k: usize, rng: &mut impl Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Validation loss: mean per-stay loss of each validation domain, averaged
/// across domains (or over the pool for proportional weighting).
pub fn validation_loss(model: &Model, val: &[DomainData], weighting: DomainWeighting) -> Result<f64> {
    match weighting {
        DomainWeighting::Equal => {
            let mut s = 0.0;
            for d in val {
                s += domain_loss(model, d)?;
            }
            Ok(s / val.len().max(1) as f64)
        }
        DomainWeighting::Proportional => domain_loss(model, &DomainData::pooled("pool", val)),
    }
}

/// Trains from scratch with early stopping on `val`.
pub fn train(cfg: &TrainConfig, train: &[DomainData], val: &[DomainData]) -> Result<TrainResult> {
    cfg.validate()?;
    if train.is_empty() || train.iter().any(DomainData::is_empty) {
        return Err(Error::Invalid("every training domain needs at least one sample".into()));
    }
    if val.is_empty() || val.iter().all(DomainData::is_empty) {
        return Err(Error::Invalid("validation data is empty".into()));
    }
    let domains: Vec<DomainData> = match cfg.domain_weighting {
        DomainWeighting::Equal => train.to_vec(),
        DomainWeighting::Proportional => alloc::vec![DomainData::pooled("pool", train)],
    };
    let mut rng = keyed(&[cfg.seed, 0x7472_6169_6e]);
    let mut model = Model::init(cfg.model_config(), cfg.seed)?;
    let mut adam = AdamState::new(model.n_params());
    let mut state = ObjectiveState::default();
    let mut streams: Vec<SampleStream> = domains.iter().map(|d| SampleStream::new(d.len(), &mut rng)).collect();
    let max_n = domains.iter().map(DomainData::len).max().unwrap_or(0);
    let steps_per_epoch = max_n.div_ceil(cfg.batch_size);

    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.clone();
    let mut history = Vec::new();
    let mut steps = 0;
    for epoch in 1..=cfg.max_epochs {
        let mut train_loss = 0.0;
        let mut dom = alloc::vec![0.0; domains.len()];
        for _ in 0..steps_per_epoch {
            let mut batches = Vec::with_capacity(domains.len());
            for (d, s) in domains.iter().zip(streams.iter_mut()) {
                let idx = s.take(cfg.batch_size.min(d.len()), &mut rng);
                let refs: Vec<&Sample> = idx.iter().map(|&i| &d.samples[i]).collect();
                batches.push(make_batch(&refs)?);
            }
            let out = objective_step(
                &model,
                &batches,
                cfg.objective,
                &cfg.penalties,
                &state,
                cfg.learning_rate,
                true,
                &mut rng,
            )?;
            let mut grads = out.grads;
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            let mut theta = model.flat();
            adam_step(&mut theta, &grads, &mut adam, cfg.learning_rate, cfg.weight_decay);
            model.set_flat(&theta)?;
            state = out.next_state;
            train_loss += out.loss;
            for (a, l) in dom.iter_mut().zip(&out.domain_losses) {
                if !l.is_nan() {
                    *a += l;
                }
            }
            steps += 1;
        }
        let k = steps_per_epoch.max(1) as f64;
        let val_loss = validation_loss(&model, val, cfg.domain_weighting)?;
        history.push(EpochRecord {
            epoch,
            train_loss: train_loss / k,
            domain_losses: dom.iter().map(|l| l / k).collect(),
            val_loss,
        });
        if stopper.observe(epoch, val_loss) {
            best = model.clone();
        }
        if stopper.should_stop() {
            break;
        }
    }
    Ok(TrainResult {
        model: best,
        history,
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best,
        steps,
        train_domains: train.iter().map(|d| d.name.clone()).collect(),
    })
}
