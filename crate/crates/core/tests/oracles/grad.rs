//! Central finite differences and small model instances for gradient checks.

use icudg_core::autodiff::Tape;
use icudg_core::nn::{forward, Model, ModelConfig, SeqBatch};
use icudg_core::objectives::{eval_loss, objective_step, DomainBatch, Objective, ObjectiveState, PenaltyConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so that vanishing components
/// are judged on absolute error instead.
pub const FLOOR: f64 = 1e-6;
pub const INNER_LR: f64 = 0.05;

pub fn central_diff(theta: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            x[i] = theta[i] + STEP;
            let up = f(&x);
            x[i] = theta[i] - STEP;
            let down = f(&x);
            x[i] = theta[i];
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

/// Largest elementwise `|a - n| / max(|a|, |n|, FLOOR)`.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(FLOOR))
        .fold(0.0, f64::max)
}

pub const T: usize = 5;
pub const P: usize = 8;
pub const D: usize = 4;

pub struct Instance {
    pub model: Model,
    pub batches: Vec<DomainBatch>,
}

fn domain_batch(rng: &mut ChaCha8Rng, shift: f64) -> DomainBatch {
    let n_seq = 3;
    let seqs: Vec<Vec<f32>> = (0..n_seq)
        .map(|_| {
            let len = rng.random_range(2..=T);
            (0..len * P).map(|_| (rng.random_range(-1.5..1.5) + shift) as f32).collect()
        })
        .collect();
    let refs: Vec<&[f32]> = seqs.iter().map(Vec::as_slice).collect();
    let x = SeqBatch::from_f32(&refs, P).unwrap();
    let mut rows = Vec::new();
    for (b, &len) in x.lengths.iter().enumerate() {
        for t in 0..len {
            rows.push(x.row(t, b));
        }
    }
    let mut targets: Vec<f64> = rows.iter().map(|_| f64::from(rng.random_bool(0.4))).collect();
    targets[0] = 1.0;
    targets[1] = 0.0;
    let raw: Vec<f64> = rows.iter().map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    DomainBatch { x, rows, targets, weights: raw.iter().map(|w| w / total).collect() }
}

/// A `T x P` input, `D`-dimensional GRU instance with `n_domains` batches.
/// Domain `e` has its inputs shifted by `e * shift`.
pub fn instance(seed: u64, n_domains: usize, shift: f64) -> Instance {
    let cfg = ModelConfig { input_dim: P, hidden_dim: D, layers: 1, dropout: 0.0 };
    let mut model = Model::init(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    // non-zero biases so that every parameter is exercised
    let mut flat = model.flat();
    for v in &mut flat {
        *v += rng.random_range(-0.2..0.2);
    }
    model.set_flat(&flat).unwrap();
    let batches = (0..n_domains).map(|e| domain_batch(&mut rng, e as f64 * shift)).collect();
    Instance { model, batches }
}

/// Every penalty switched on, warm-ups disabled.
pub fn active_penalties() -> PenaltyConfig {
    PenaltyConfig {
        coral_gamma: 3.0,
        coral_mean_squared: false,
        vrex_lambda: 5.0,
        vrex_warmup: 0,
        fishr_lambda: 7.0,
        fishr_warmup: 0,
        fishr_ema: 0.5,
        mldg_beta: 0.8,
        mldg_n_meta_test: 1,
        groupdro_eta: 0.3,
    }
}

fn with_params(model: &Model, theta: &[f64]) -> Model {
    let mut m = model.clone();
    m.set_flat(theta).unwrap();
    m
}

/// Relative error of the GRU and classifier gradient of the weighted BCE.
pub fn model_error(inst: &Instance) -> f64 {
    let batch = &inst.batches[0];
    let loss = |m: &Model| -> (f64, Vec<f64>) {
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape);
        let out = forward::<ChaCha8Rng>(&mut tape, m, &bound, &batch.x, &batch.rows, None).unwrap();
        let l = tape.bce_with_logits(out.logits, &batch.targets, &batch.weights).unwrap();
        let g = tape.backward(l).unwrap();
        let flat = bound.vars.iter().flat_map(|&v| g.get(v).as_slice().to_vec()).collect();
        (tape.value(l).item(), flat)
    };
    let (_, analytic) = loss(&inst.model);
    let theta = inst.model.flat();
    let numeric = central_diff(&theta, |th| loss(&with_params(&inst.model, th)).0);
    rel_error(&analytic, &numeric)
}

fn step(model: &Model, batches: &[DomainBatch], o: Objective, cfg: &PenaltyConfig, state: &ObjectiveState, seed: u64) -> icudg_core::objectives::StepOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    objective_step(model, batches, o, cfg, state, INNER_LR, false, &mut rng).unwrap()
}

fn mean_loss(model: &Model, batches: &[DomainBatch], domains: &[usize]) -> f64 {
    domains.iter().map(|&e| eval_loss(model, &batches[e]).unwrap()).sum::<f64>() / domains.len() as f64
}

/// Relative error of one objective's update direction against finite
/// differences of the function it descends.
///
/// The check runs from the state left by one previous step, so the
/// smoothed Fishr variances and a non-uniform GroupDRO weighting are in play.
/// GroupDRO descends `sum_e q_e L_e` with `q` held at its updated value.
/// The meta-learning objective descends `L_S(theta) + beta L_V(theta + c)`
/// with the shift `c = theta' - theta` held fixed.
pub fn objective_error(inst: &Instance, o: Objective, cfg: &PenaltyConfig, seed: u64) -> f64 {
    let first = step(&inst.model, &inst.batches, o, cfg, &ObjectiveState::default(), seed);
    let state = first.next_state;
    let out = step(&inst.model, &inst.batches, o, cfg, &state, seed);
    let theta = inst.model.flat();
    let numeric = match o {
        Objective::GroupDro => {
            let q = out.next_state.groupdro_q.clone().unwrap();
            central_diff(&theta, |th| {
                let m = with_params(&inst.model, th);
                q.iter().enumerate().map(|(e, w)| w * eval_loss(&m, &inst.batches[e]).unwrap()).sum()
            })
        }
        Objective::Mldg => {
            let n = inst.batches.len();
            // meta-train domains are the ones whose reported loss is taken at theta
            let at_theta: Vec<usize> = (0..n)
                .filter(|&e| (out.domain_losses[e] - eval_loss(&inst.model, &inst.batches[e]).unwrap()).abs() < 1e-13)
                .collect();
            let rest: Vec<usize> = (0..n).filter(|e| !at_theta.contains(e)).collect();
            assert_eq!(rest.len(), cfg.mldg_n_meta_test.min(n - 1), "ambiguous meta split");
            let gs = central_diff(&theta, |th| mean_loss(&with_params(&inst.model, th), &inst.batches, &at_theta));
            let inner: Vec<f64> = theta.iter().zip(&gs).map(|(t, g)| t - INNER_LR * g).collect();
            central_diff(&theta, |th| {
                let shifted: Vec<f64> = th.iter().zip(&theta).zip(&inner).map(|((x, t0), i)| i + (x - t0)).collect();
                mean_loss(&with_params(&inst.model, th), &inst.batches, &at_theta)
                    + cfg.mldg_beta * mean_loss(&with_params(&inst.model, &shifted), &inst.batches, &rest)
            })
        }
        _ => central_diff(&theta, |th| step(&with_params(&inst.model, th), &inst.batches, o, cfg, &state, seed).loss),
    };
    rel_error(&out.grads, &numeric)
}

/// Largest elementwise gap between each objective with its penalties
/// disabled and ERM on the same batches.
pub fn erm_reduction_gap(inst: &Instance, seed: u64) -> f64 {
    let off = PenaltyConfig {
        coral_gamma: 0.0,
        vrex_lambda: 0.0,
        fishr_lambda: 0.0,
        mldg_beta: 0.0,
        mldg_n_meta_test: 0,
        groupdro_eta: 0.0,
        ..active_penalties()
    };
    let state = ObjectiveState::default();
    let erm = step(&inst.model, &inst.batches, Objective::Erm, &off, &state, seed);
    let mut gap: f64 = 0.0;
    for o in Objective::ALL {
        let mut s = state.clone();
        // several steps, so that warm-up counters and smoothed statistics move
        for _ in 0..3 {
            let out = step(&inst.model, &inst.batches, o, &off, &s, seed);
            for (a, b) in out.grads.iter().zip(&erm.grads) {
                gap = gap.max((a - b).abs());
            }
            s = out.next_state;
        }
    }
    gap
}

/// Penalty values `(coral, vrex, fishr)` reported by one step.
pub fn penalties(inst: &Instance, seed: u64) -> [f64; 3] {
    let cfg = active_penalties();
    let state = ObjectiveState::default();
    [Objective::Coral, Objective::Vrex, Objective::Fishr].map(|o| step(&inst.model, &inst.batches, o, &cfg, &state, seed).penalty)
}

/// The same batch repeated for every domain.
pub fn identical_domains(seed: u64, n_domains: usize) -> Instance {
    let mut inst = instance(seed, 1, 0.0);
    let b = inst.batches[0].clone();
    inst.batches = vec![b; n_domains];
    inst
}

/// Worst simplex violation of the GroupDRO weights over `steps` plain
/// gradient steps: `max(|sum q - 1|, -min q)`.
pub fn groupdro_simplex_violation(seed: u64, steps: usize) -> f64 {
    let mut inst = instance(seed, 3, 0.7);
    let cfg = PenaltyConfig { groupdro_eta: 2.0, ..active_penalties() };
    let mut state = ObjectiveState::default();
    let mut worst: f64 = 0.0;
    for k in 0..steps {
        let out = step(&inst.model, &inst.batches, Objective::GroupDro, &cfg, &state, seed + k as u64);
        let q = out.next_state.groupdro_q.clone().unwrap();
        worst = worst.max((q.iter().sum::<f64>() - 1.0).abs());
        worst = worst.max(-q.iter().copied().fold(f64::INFINITY, f64::min));
        let theta: Vec<f64> = inst.model.flat().iter().zip(&out.grads).map(|(t, g)| t - 0.5 * g).collect();
        inst.model.set_flat(&theta).unwrap();
        state = out.next_state;
    }
    worst
}
