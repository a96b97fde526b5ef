//! GRU featuriser and feed-forward classifier.
//!
//! Each layer follows the usual gate equations with `h_0 = 0`:
//!
//! ```text
//! r_t = sigmoid(x_t W_ir + b_ir + h_{t-1} W_hr + b_hr)
//! z_t = sigmoid(x_t W_iz + b_iz + h_{t-1} W_hz + b_hz)
//! n_t = tanh(x_t W_in + b_in + r_t * (h_{t-1} W_hn + b_hn))
//! h_t = (1 - z_t) * n_t + z_t * h_{t-1}
//! ```
//!
//! The classifier maps a representation through `tanh(z W_1 + b_1)` and then
//! to one logit.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};

/// Logits are clamped to this magnitude before the sigmoid at prediction time.
pub const LOGIT_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub dropout: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.layers == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(alloc::format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

const GRU_PARAMS_PER_LAYER: usize = 12;

/// Parameters `theta = {phi, w}` of the GRU and the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub seed: u64,
    pub names: Vec<String>,
    pub params: Vec<Matrix>,
}

impl Model {
    /// Weights uniform in `(-1/sqrt(d), 1/sqrt(d))`, biases zero.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut rng = crate::rng::keyed(&[seed, 0x6d6f_6465_6c]);
        let d = config.hidden_dim;
        let k = 1.0 / libm::sqrt(d as f64);
        let mut names = Vec::new();
        let mut params = Vec::new();
        let mut weight = |name: String, r: usize, c: usize, names: &mut Vec<String>, params: &mut Vec<Matrix>| {
            names.push(name);
            params.push(Matrix::from_fn(r, c, |_, _| rng.random_range(-k..k)));
        };
        for l in 0..config.layers {
            let input = if l == 0 { config.input_dim } else { d };
            for g in ["r", "z", "n"] {
                weight(alloc::format!("gru{l}.w_i{g}"), input, d, &mut names, &mut params);
            }
            for g in ["r", "z", "n"] {
                weight(alloc::format!("gru{l}.w_h{g}"), d, d, &mut names, &mut params);
            }
            for g in ["ir", "iz", "in", "hr", "hz", "hn"] {
                names.push(alloc::format!("gru{l}.b_{g}"));
                params.push(Matrix::zeros(1, d));
            }
        }
        weight("clf.w1".into(), d, d, &mut names, &mut params);
        names.push("clf.b1".into());
        params.push(Matrix::zeros(1, d));
        weight("clf.w2".into(), d, 1, &mut names, &mut params);
        names.push("clf.b2".into());
        params.push(Matrix::zeros(1, 1));
        Ok(Model { config, seed, names, params })
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().map(Matrix::len).sum()
    }

    /// Index of the first classifier parameter.
    pub fn classifier_offset(&self) -> usize {
        self.config.layers * GRU_PARAMS_PER_LAYER
    }

    /// Registers every parameter on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound { vars: self.params.iter().map(|p| tape.param(p.clone())).collect() }
    }

    /// Registers parameters as constants, for inference.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        Bound { vars: self.params.iter().map(|p| tape.constant(p.clone())).collect() }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.as_slice().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Invalid(alloc::format!("expected {} parameters, got {}", self.n_params(), flat.len())));
        }
        let mut k = 0;
        for p in &mut self.params {
            let n = p.len();
            p.as_mut_slice().copy_from_slice(&flat[k..k + n]);
            k += n;
        }
        Ok(())
    }
}

/// Model parameters registered on a tape.
#[derive(Debug, Clone)]
pub struct Bound {
    pub vars: Vec<Var>,
}

/// Padded, time-major batch of sequences: row `t * batch + b` holds hour `t`
/// of sequence `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqBatch {
    pub x: Matrix,
    pub lengths: Vec<usize>,
    pub steps: usize,
}

impl SeqBatch {
    /// `seqs[b]` is a row-major `len_b x width` block.
    pub fn from_f32(seqs: &[&[f32]], width: usize) -> Result<SeqBatch> {
        let lengths: Vec<usize> = seqs.iter().map(|s| s.len() / width).collect();
        if seqs.iter().any(|s| s.len() % width != 0) {
            return Err(Error::Invalid("sequence length is not a multiple of the feature width".into()));
        }
        let steps = lengths.iter().copied().max().unwrap_or(0);
        let b = seqs.len();
        let mut x = Matrix::zeros(steps * b, width);
        for (j, s) in seqs.iter().enumerate() {
            for t in 0..lengths[j] {
                for (c, &v) in s[t * width..(t + 1) * width].iter().enumerate() {
                    x[(t * b + j, c)] = f64::from(v);
                }
            }
        }
        Ok(SeqBatch { x, lengths, steps })
    }

    pub fn batch(&self) -> usize {
        self.lengths.len()
    }

    /// Row of hour `t` of sequence `b`.
    pub fn row(&self, t: usize, b: usize) -> usize {
        t * self.batch() + b
    }
}

/// Outputs of a forward pass restricted to the requested rows.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// Representations from the last GRU layer, `n x d`.
    pub z: Var,
    /// Classifier hidden activations after dropout, `n x d`.
    pub hidden: Var,
    pub logits: Var,
}

fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut impl Rng) -> Matrix {
    let keep = 1.0 / (1.0 - p);
    Matrix::from_fn(rows, cols, |_, _| if rng.random::<f64>() < p { 0.0 } else { keep })
}

fn apply_dropout<R: Rng>(tape: &mut Tape, x: Var, p: f64, rng: Option<&mut R>) -> Result<Var> {
    match rng {
        Some(rng) if p > 0.0 => {
            let (r, c) = tape.shape(x);
            let m = tape.constant(dropout_mask(r, c, p, rng));
            tape.mul(x, m)
        }
        _ => Ok(x),
    }
}

/// Runs the model on `batch` and keeps the rows listed in `rows`.
///
/// Dropout is active when `rng` is given (training mode).
pub fn forward<R: Rng>(
    tape: &mut Tape,
    model: &Model,
    bound: &Bound,
    batch: &SeqBatch,
    rows: &[usize],
    rng: Option<&mut R>,
) -> Result<Forward> {
    let cfg = model.config;
    if batch.x.cols() != cfg.input_dim {
        return Err(Error::Shape { op: "forward", lhs: batch.x.shape(), rhs: (0, cfg.input_dim) });
    }
    if !batch.x.is_finite() {
        return Err(Error::NonFiniteInput("feature batch".into()));
    }
    let mut rng = rng;
    let b = batch.batch();
    let d = cfg.hidden_dim;
    let p = &bound.vars;
    let mut input = tape.constant(batch.x.clone());
    for l in 0..cfg.layers {
        let w = &p[l * GRU_PARAMS_PER_LAYER..(l + 1) * GRU_PARAMS_PER_LAYER];
        let mut proj = [input; 3];
        for g in 0..3 {
            let xw = tape.matmul(input, w[g])?;
            proj[g] = tape.add(xw, w[6 + g])?;
        }
        let mut h = tape.constant(Matrix::zeros(b, d));
        let mut outs = Vec::with_capacity(batch.steps);
        for t in 0..batch.steps {
            let xr = tape.slice(proj[0], t * b, b, 0, d)?;
            let xz = tape.slice(proj[1], t * b, b, 0, d)?;
            let xn = tape.slice(proj[2], t * b, b, 0, d)?;
            let hr = tape.matmul(h, w[3])?;
            let hr = tape.add(hr, w[9])?;
            let r = tape.add(xr, hr)?;
            let r = tape.sigmoid(r);
            let hz = tape.matmul(h, w[4])?;
            let hz = tape.add(hz, w[10])?;
            let z = tape.add(xz, hz)?;
            let z = tape.sigmoid(z);
            let hn = tape.matmul(h, w[5])?;
            let hn = tape.add(hn, w[11])?;
            let rn = tape.mul(r, hn)?;
            let n = tape.add(xn, rn)?;
            let n = tape.tanh(n);
            let diff = tape.sub(h, n)?;
            let zd = tape.mul(z, diff)?;
            h = tape.add(n, zd)?;
            outs.push(h);
        }
        input = tape.concat_rows(&outs)?;
        if l + 1 < cfg.layers {
            input = apply_dropout(tape, input, cfg.dropout, rng.as_deref_mut())?;
        }
    }
    let z = tape.select_rows(input, rows)?;
    let c = &p[model.classifier_offset()..];
    let a = tape.matmul(z, c[0])?;
    let a = tape.add(a, c[1])?;
    let hidden = tape.tanh(a);
    let hidden = apply_dropout(tape, hidden, cfg.dropout, rng.as_deref_mut())?;
    let o = tape.matmul(hidden, c[2])?;
    let logits = tape.add(o, c[3])?;
    Ok(Forward { z, hidden, logits })
}

/// Probability from a logit, clamped against overflow.
pub fn predict_proba(logit: f64) -> f64 {
    crate::autodiff::sigmoid(logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP))
}

/// Eval-mode logits of the selected rows.
pub fn predict_logits(model: &Model, batch: &SeqBatch, rows: &[usize]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let bound = model.bind_frozen(&mut tape);
    let f = forward::<rand_chacha::ChaCha8Rng>(&mut tape, model, &bound, batch, rows, None)?;
    Ok(tape.value(f.logits).as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;

    fn cfg() -> ModelConfig {
        ModelConfig { input_dim: 3, hidden_dim: 4, layers: 2, dropout: 0.0 }
    }

    fn batch(t: usize, seed: u64) -> SeqBatch {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..t * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        SeqBatch::from_f32(&[&data], 3).unwrap()
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let mut m = Model::init(cfg(), 1).unwrap();
        for p in &mut m.params {
            p.as_mut_slice().fill(0.0);
        }
        let last = m.params.len() - 1;
        m.params[last] = Matrix::scalar(0.7);
        let b = batch(4, 2);
        let logits = predict_logits(&m, &b, &[0, 1, 2, 3]).unwrap();
        assert!(logits.iter().all(|&l| l == 0.7));
    }

    #[test]
    fn single_step_and_bounded_state() {
        let m = Model::init(cfg(), 3).unwrap();
        let b = batch(1, 4);
        let mut tape = Tape::new();
        let bound = m.bind_frozen(&mut tape);
        let f = forward::<rand_chacha::ChaCha8Rng>(&mut tape, &m, &bound, &b, &[0], None).unwrap();
        assert_eq!(tape.shape(f.z), (1, 4));
        assert!(tape.value(f.z).as_slice().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn permutation_affects_only_later_hours() {
        let m = Model::init(cfg(), 5).unwrap();
        let b = batch(6, 6);
        let mut swapped = b.clone();
        for c in 0..3 {
            let (a, bb) = (swapped.x[(2, c)], swapped.x[(4, c)]);
            swapped.x[(2, c)] = bb;
            swapped.x[(4, c)] = a;
        }
        let rows: Vec<usize> = (0..6).collect();
        let z = |batch: &SeqBatch| {
            let mut tape = Tape::new();
            let bound = m.bind_frozen(&mut tape);
            let f = forward::<rand_chacha::ChaCha8Rng>(&mut tape, &m, &bound, batch, &rows, None).unwrap();
            tape.value(f.z).clone()
        };
        let (z0, z1) = (z(&b), z(&swapped));
        for t in 0..6 {
            let same = z0.row(t) == z1.row(t);
            assert_eq!(same, t < 2, "hour {t}");
        }
    }

    #[test]
    fn padding_and_lengths() {
        let a = vec![1.0f32; 6];
        let b = vec![2.0f32; 3];
        let s = SeqBatch::from_f32(&[&a, &b], 3).unwrap();
        assert_eq!(s.lengths, vec![2, 1]);
        assert_eq!(s.x.shape(), (4, 3));
        assert_eq!(s.x[(s.row(1, 1), 0)], 0.0);
        assert_eq!(s.x[(s.row(0, 1), 0)], 2.0);
    }

    #[test]
    fn predict_clamps() {
        assert_eq!(predict_proba(0.0), 0.5);
        assert!(predict_proba(1e6) < 1.0);
        assert!(predict_proba(-1e6) > 0.0);
    }

    #[test]
    fn non_finite_input_rejected() {
        let m = Model::init(cfg(), 1).unwrap();
        let mut b = batch(2, 1);
        b.x[(0, 0)] = f64::NAN;
        assert!(matches!(predict_logits(&m, &b, &[0]), Err(Error::NonFiniteInput(_))));
    }
}
