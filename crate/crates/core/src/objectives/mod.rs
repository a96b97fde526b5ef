//! Training objectives over one minibatch per training domain.
//!
//! Every objective starts from the per-domain risks `L_e`, each a weighted
//! mean of per-hour binary cross-entropy. ERM averages them uniformly;
//! the other objectives add a penalty or reweight them.

mod penalties;

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{forward, Bound, Forward, Model, SeqBatch};

pub use penalties::{
    coral_penalty, fishr_penalty, groupdro_update, mldg_direction, mldg_meta_test_count, output_layer_gradients,
    vrex_penalty,
};
use penalties::mean_scalars;

/// Minibatch of one training domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBatch {
    pub x: SeqBatch,
    /// Rows of `x` that carry a label.
    pub rows: Vec<usize>,
    pub targets: Vec<f64>,
    /// Loss weight per labelled row; sums to 1 so the weighted BCE is `L_e`.
    pub weights: Vec<f64>,
}

impl DomainBatch {
    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != self.targets.len() || self.rows.len() != self.weights.len() || self.rows.is_empty() {
            return Err(Error::Invalid("domain batch rows, targets and weights must be non-empty and aligned".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Erm,
    Coral,
    Vrex,
    Fishr,
    Mldg,
    GroupDro,
}

impl Objective {
    pub const ALL: [Objective; 6] =
        [Objective::Erm, Objective::Coral, Objective::Vrex, Objective::Fishr, Objective::Mldg, Objective::GroupDro];

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Erm => "erm",
            Objective::Coral => "coral",
            Objective::Vrex => "vrex",
            Objective::Fishr => "fishr",
            Objective::Mldg => "mldg",
            Objective::GroupDro => "groupdro",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown objective `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    pub coral_gamma: f64,
    /// Square the mean distance in the CORAL penalty.
    pub coral_mean_squared: bool,
    pub vrex_lambda: f64,
    pub vrex_warmup: usize,
    pub fishr_lambda: f64,
    pub fishr_warmup: usize,
    pub fishr_ema: f64,
    pub mldg_beta: f64,
    pub mldg_n_meta_test: usize,
    pub groupdro_eta: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            coral_gamma: 1000.0,
            coral_mean_squared: false,
            vrex_lambda: 1000.0,
            vrex_warmup: 100,
            fishr_lambda: 1000.0,
            fishr_warmup: 100,
            fishr_ema: 0.95,
            mldg_beta: 1.0,
            mldg_n_meta_test: 2,
            groupdro_eta: 0.01,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.coral_gamma, self.vrex_lambda, self.fishr_lambda, self.mldg_beta];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("penalty weights must be finite and non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.fishr_ema) {
            return Err(Error::Config("fishr_ema must lie in [0, 1]".into()));
        }
        if !(self.groupdro_eta.is_finite() && self.groupdro_eta >= 0.0) {
            return Err(Error::Config("groupdro_eta must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// State carried across optimizer steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectiveState {
    /// Optimizer steps taken so far.
    pub step: usize,
    pub groupdro_q: Option<Vec<f64>>,
    pub fishr_ema: Option<Vec<Matrix>>,
}

/// Result of evaluating an objective and its gradient.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub loss: f64,
    pub domain_losses: Vec<f64>,
    pub penalty: f64,
    /// Update direction, flattened in parameter order.
    pub grads: Vec<f64>,
    pub next_state: ObjectiveState,
}

struct DomainPass {
    out: Forward,
    loss: Var,
}

fn domain_pass<R: Rng>(
    tape: &mut Tape,
    model: &Model,
    bound: &Bound,
    batch: &DomainBatch,
    rng: Option<&mut R>,
) -> Result<DomainPass> {
    batch.validate()?;
    let out = forward(tape, model, bound, &batch.x, &batch.rows, rng)?;
    let loss = tape.bce_with_logits(out.logits, &batch.targets, &batch.weights)?;
    Ok(DomainPass { out, loss })
}

fn flat_grads(tape: &Tape, bound: &Bound, loss: Var) -> Result<Vec<f64>> {
    let g = tape.backward(loss)?;
    Ok(bound.vars.iter().flat_map(|&v| g.get(v).as_slice().iter().copied()).collect())
}

fn check_finite(step: usize, loss: f64, domain_losses: &[f64]) -> Result<()> {
    if loss.is_finite() && domain_losses.iter().all(|l| l.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { step, domain_losses: domain_losses.to_vec() })
    }
}

/// Evaluates `objective` on one batch per training domain.
///
/// `rng` drives dropout (when `train` is set) and the meta-learning split.
/// `inner_lr` is the inner step size of the meta-learning objective.
#[allow(clippy::too_many_arguments)]
pub fn objective_step<R: Rng>(
    model: &Model,
    batches: &[DomainBatch],
    objective: Objective,
    cfg: &PenaltyConfig,
    state: &ObjectiveState,
    inner_lr: f64,
    train: bool,
    rng: &mut R,
) -> Result<StepOutput> {
    if batches.is_empty() {
        return Err(Error::TooFewDomains(0));
    }
    if objective == Objective::Mldg {
        return mldg_step(model, batches, cfg, state, inner_lr, train, rng);
    }
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let mut passes = Vec::with_capacity(batches.len());
    for b in batches {
        let r = if train { Some(&mut *rng) } else { None };
        passes.push(domain_pass(&mut tape, model, &bound, b, r)?);
    }
    let losses: Vec<Var> = passes.iter().map(|p| p.loss).collect();
    let domain_losses: Vec<f64> = losses.iter().map(|&l| tape.value(l).item()).collect();
    let erm = mean_scalars(&mut tape, &losses)?;
    let mut next_state = state.clone();
    next_state.step += 1;

    let (total, penalty) = match objective {
        Objective::Erm | Objective::Mldg => (erm, 0.0),
        Objective::Coral => {
            if cfg.coral_gamma == 0.0 {
                (erm, 0.0)
            } else {
                let z: Vec<Var> = passes.iter().map(|p| p.out.z).collect();
                let p = coral_penalty(&mut tape, &z, cfg.coral_mean_squared)?;
                let w = tape.scale(p, cfg.coral_gamma);
                (tape.add(erm, w)?, tape.value(p).item())
            }
        }
        Objective::Vrex => {
            let lambda = if state.step < cfg.vrex_warmup { 0.0 } else { cfg.vrex_lambda };
            if lambda == 0.0 {
                (erm, 0.0)
            } else {
                let p = vrex_penalty(&mut tape, &losses)?;
                let w = tape.scale(p, lambda);
                (tape.add(erm, w)?, tape.value(p).item())
            }
        }
        Objective::Fishr => {
            let mut grads = Vec::with_capacity(passes.len());
            for (p, b) in passes.iter().zip(batches) {
                grads.push(output_layer_gradients(&mut tape, p.out.hidden, p.out.logits, &b.targets)?);
            }
            let (p, ema) = fishr_penalty(&mut tape, &grads, state.fishr_ema.as_deref(), cfg.fishr_ema)?;
            next_state.fishr_ema = Some(ema);
            let lambda = if state.step < cfg.fishr_warmup { 0.0 } else { cfg.fishr_lambda };
            if lambda == 0.0 {
                (erm, 0.0)
            } else {
                let w = tape.scale(p, lambda);
                (tape.add(erm, w)?, tape.value(p).item())
            }
        }
        Objective::GroupDro => {
            let n = batches.len();
            let q = state.groupdro_q.clone().unwrap_or_else(|| alloc::vec![1.0 / n as f64; n]);
            let q = groupdro_update(&q, &domain_losses, cfg.groupdro_eta);
            let weighted: Vec<Var> = losses.iter().zip(&q).map(|(&l, &w)| tape.scale(l, w)).collect();
            let total = penalties::sum_scalars(&mut tape, &weighted)?;
            next_state.groupdro_q = Some(q);
            (total, 0.0)
        }
    };
    let loss = tape.value(total).item();
    check_finite(state.step, loss, &domain_losses)?;
    let grads = flat_grads(&tape, &bound, total)?;
    Ok(StepOutput { loss, domain_losses, penalty, grads, next_state })
}

fn mldg_step<R: Rng>(
    model: &Model,
    batches: &[DomainBatch],
    cfg: &PenaltyConfig,
    state: &ObjectiveState,
    inner_lr: f64,
    train: bool,
    rng: &mut R,
) -> Result<StepOutput> {
    let n = batches.len();
    let n_test = mldg_meta_test_count(n, cfg.mldg_n_meta_test)?;
    let mut order: Vec<usize> = (0..n).collect();
    if n_test > 0 {
        order.shuffle(rng);
    }
    let (meta_test, meta_train) = order.split_at(n_test);
    let mut meta_train = meta_train.to_vec();
    meta_train.sort_unstable();
    let mut meta_test = meta_test.to_vec();
    meta_test.sort_unstable();

    let mut domain_losses = alloc::vec![f64::NAN; n];
    let theta = model.flat();
    let mut scratch = model.clone();
    let (loss, grads) = mldg_direction(&theta, &meta_train, &meta_test, inner_lr, cfg.mldg_beta, |th, ds| {
        scratch.set_flat(th)?;
        let mut tape = Tape::new();
        let bound = scratch.bind(&mut tape);
        let mut losses = Vec::with_capacity(ds.len());
        for &e in ds {
            let r = if train { Some(&mut *rng) } else { None };
            let p = domain_pass(&mut tape, &scratch, &bound, &batches[e], r)?;
            domain_losses[e] = tape.value(p.loss).item();
            losses.push(p.loss);
        }
        let l = mean_scalars(&mut tape, &losses)?;
        Ok((tape.value(l).item(), flat_grads(&tape, &bound, l)?))
    })?;
    let observed: Vec<f64> = domain_losses.iter().copied().filter(|l| !l.is_nan()).collect();
    check_finite(state.step, loss, &observed)?;
    let mut next_state = state.clone();
    next_state.step += 1;
    Ok(StepOutput { loss, domain_losses, penalty: 0.0, grads, next_state })
}

/// Mean weighted BCE of one batch in eval mode.
pub fn eval_loss(model: &Model, batch: &DomainBatch) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = model.bind_frozen(&mut tape);
    let p = domain_pass::<rand_chacha::ChaCha8Rng>(&mut tape, model, &bound, batch, None)?;
    Ok(tape.value(p.loss).item())
}
