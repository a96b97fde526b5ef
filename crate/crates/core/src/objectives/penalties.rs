//! Penalty terms built on a tape, plus the non-differentiable state updates.

use alloc::vec::Vec;

use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};

/// `||a - b||` (or its square) between two row vectors.
fn vector_distance(tape: &mut Tape, a: Var, b: Var, squared: bool) -> Result<Var> {
    let d = tape.sub(a, b)?;
    let sq = tape.square(d);
    let s = tape.sum(sq);
    Ok(if squared { s } else { tape.sqrt(s) })
}

/// Sum over unordered domain pairs of the mean distance and the squared
/// Frobenius distance between unbiased covariances of `z_e` (`n_e x d`).
pub fn coral_penalty(tape: &mut Tape, z: &[Var], mean_squared: bool) -> Result<Var> {
    let stats: Vec<(Var, Var)> = z
        .iter()
        .map(|&x| Ok((tape.mean_rows(x), tape.covariance(x)?)))
        .collect::<Result<_>>()?;
    let mut terms = Vec::new();
    for a in 0..stats.len() {
        for b in a + 1..stats.len() {
            let m = vector_distance(tape, stats[a].0, stats[b].0, mean_squared)?;
            let c = tape.sub(stats[a].1, stats[b].1)?;
            let c = tape.square(c);
            let c = tape.sum(c);
            terms.push(tape.add(m, c)?);
        }
    }
    sum_scalars(tape, &terms)
}

pub(crate) fn sum_scalars(tape: &mut Tape, xs: &[Var]) -> Result<Var> {
    if xs.is_empty() {
        return Ok(tape.constant(Matrix::scalar(0.0)));
    }
    let col = tape.concat_rows(xs)?;
    Ok(tape.sum(col))
}

pub(crate) fn mean_scalars(tape: &mut Tape, xs: &[Var]) -> Result<Var> {
    let s = sum_scalars(tape, xs)?;
    Ok(tape.scale(s, 1.0 / xs.len().max(1) as f64))
}

/// Population variance of scalar domain losses.
pub fn vrex_penalty(tape: &mut Tape, losses: &[Var]) -> Result<Var> {
    let col = tape.concat_rows(losses)?;
    let v = tape.var_rows(col, false)?;
    Ok(tape.sum(v))
}

/// Per-sample gradients of the BCE loss with respect to the output layer,
/// `(sigmoid(logit_i) - y_i) * [h_i, 1]`, as an `n x (d + 1)` node.
pub fn output_layer_gradients(tape: &mut Tape, hidden: Var, logits: Var, targets: &[f64]) -> Result<Var> {
    let p = tape.sigmoid(logits);
    let y = tape.constant(Matrix::column(targets.to_vec()));
    let r = tape.sub(p, y)?;
    let rh = tape.mul(r, hidden)?;
    tape.concat_cols(&[rh, r])
}

/// Fishr penalty from per-domain per-sample gradient matrices.
///
/// Each domain's unbiased gradient variance is smoothed with its previous
/// value in `ema_state` (absent on the first step). Returns the penalty and
/// the smoothed variances to carry into the next step.
pub fn fishr_penalty(tape: &mut Tape, grads: &[Var], ema_state: Option<&[Matrix]>, ema: f64) -> Result<(Var, Vec<Matrix>)> {
    let mut smoothed = Vec::with_capacity(grads.len());
    for (e, &g) in grads.iter().enumerate() {
        let v = tape.var_rows(g, true)?;
        let v = match ema_state {
            Some(prev) => {
                let old = tape.constant(prev[e].clone());
                let old = tape.scale(old, ema);
                let cur = tape.scale(v, 1.0 - ema);
                tape.add(old, cur)?
            }
            None => v,
        };
        smoothed.push(v);
    }
    let all = tape.concat_rows(&smoothed)?;
    let mean = tape.mean_rows(all);
    let mut terms = Vec::with_capacity(smoothed.len());
    for &v in &smoothed {
        terms.push(vector_distance(tape, v, mean, true)?);
    }
    let penalty = mean_scalars(tape, &terms)?;
    let state = smoothed.iter().map(|&v| tape.value(v).clone()).collect();
    Ok((penalty, state))
}

/// Exponentiated-gradient step `q_e <- q_e exp(eta L_e)`, renormalised in log space.
pub fn groupdro_update(q: &[f64], losses: &[f64], eta: f64) -> Vec<f64> {
    let logits: Vec<f64> = q.iter().zip(losses).map(|(&q, &l)| libm::log(q) + eta * l).collect();
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|&l| libm::exp(l - m)).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Number of meta-test domains actually used for `n_domains` training domains.
pub fn mldg_meta_test_count(n_domains: usize, n_meta_test: usize) -> Result<usize> {
    if n_meta_test == 0 {
        return Ok(0);
    }
    if n_domains < 2 {
        return Err(Error::TooFewDomains(n_domains));
    }
    Ok(n_meta_test.min(n_domains - 1))
}

/// First-order meta-learning direction `grad L_S(theta) + beta grad L_V(theta')`
/// with `theta' = theta - alpha grad L_S(theta)`.
///
/// `loss_grad(theta, domains)` returns the mean loss over `domains` and its
/// gradient. Returns the combined loss `L_S(theta) + beta L_V(theta')` and the direction.
pub fn mldg_direction(
    theta: &[f64],
    meta_train: &[usize],
    meta_test: &[usize],
    alpha: f64,
    beta: f64,
    mut loss_grad: impl FnMut(&[f64], &[usize]) -> Result<(f64, Vec<f64>)>,
) -> Result<(f64, Vec<f64>)> {
    let (ls, mut g) = loss_grad(theta, meta_train)?;
    if meta_test.is_empty() || beta == 0.0 {
        return Ok((ls, g));
    }
    let inner: Vec<f64> = theta.iter().zip(&g).map(|(t, g)| t - alpha * g).collect();
    let (lv, gv) = loss_grad(&inner, meta_test)?;
    for (a, b) in g.iter_mut().zip(&gv) {
        *a += beta * b;
    }
    Ok((ls + beta * lv, g))
}
