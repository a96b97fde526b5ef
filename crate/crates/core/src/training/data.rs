use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::{FeatureTensor, N_FEATURES};
use crate::labels::LabelTrack;
use crate::nn::{predict_logits, Model, SeqBatch};
use crate::objectives::{eval_loss, DomainBatch};

/// One stay with its labelled hours.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Arc<FeatureTensor>,
    /// `(hour, label)` pairs, ascending by hour.
    pub labels: Vec<(usize, bool)>,
}

impl Sample {
    /// Pairs a tensor with its label track; hours past the tensor are dropped.
    pub fn new(x: Arc<FeatureTensor>, track: &LabelTrack) -> Option<Sample> {
        let labels: Vec<(usize, bool)> = track.labelled_hours().into_iter().filter(|(h, _)| *h < x.hours).collect();
        (!labels.is_empty()).then_some(Sample { x, labels })
    }

    pub fn stay_id(&self) -> &str {
        &self.x.stay_id
    }

    /// Hours the model must read to reach the last label.
    pub fn steps(&self) -> usize {
        self.labels.last().map_or(0, |l| l.0 + 1)
    }
}

/// Samples of one domain (or of several pooled domains).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DomainData {
    pub name: String,
    pub samples: Vec<Sample>,
}

impl DomainData {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Self {
        DomainData { name: name.into(), samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Union of several domains under one name.
    pub fn pooled(name: impl Into<String>, parts: &[DomainData]) -> DomainData {
        DomainData { name: name.into(), samples: parts.iter().flat_map(|d| d.samples.iter().cloned()).collect() }
    }
}

/// Builds a padded minibatch. Every stay carries equal weight, split evenly
/// over its labelled hours.
pub fn make_batch(samples: &[&Sample]) -> Result<DomainBatch> {
    if samples.is_empty() {
        return Err(Error::Invalid("empty minibatch".into()));
    }
    let seqs: Vec<&[f32]> = samples.iter().map(|s| &s.x.data[..s.steps() * N_FEATURES]).collect();
    let x = SeqBatch::from_f32(&seqs, N_FEATURES)?;
    let n = samples.len() as f64;
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut weights = Vec::new();
    for (b, s) in samples.iter().enumerate() {
        let w = 1.0 / (n * s.labels.len() as f64);
        for &(h, y) in &s.labels {
            rows.push(x.row(h, b));
            targets.push(if y { 1.0 } else { 0.0 });
            weights.push(w);
        }
    }
    Ok(DomainBatch { x, rows, targets, weights })
}

pub const EVAL_CHUNK: usize = 256;

/// Mean per-stay loss over a whole domain in eval mode.
pub fn domain_loss(model: &Model, data: &DomainData) -> Result<f64> {
    let mut total = 0.0;
    for chunk in data.samples.chunks(EVAL_CHUNK) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        total += eval_loss(model, &make_batch(&refs)?)? * chunk.len() as f64;
    }
    Ok(total / data.len().max(1) as f64)
}

/// Eval-mode predictions for every labelled hour.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Predictions {
    pub logits: Vec<f64>,
    pub labels: Vec<bool>,
    /// Index of the stay in the domain's sample list.
    pub stay: Vec<usize>,
}

pub fn predict(model: &Model, data: &DomainData) -> Result<Predictions> {
    let mut out = Predictions::default();
    for (c, chunk) in data.samples.chunks(EVAL_CHUNK).enumerate() {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let batch = make_batch(&refs)?;
        out.logits.extend(predict_logits(model, &batch.x, &batch.rows)?);
        for (b, s) in chunk.iter().enumerate() {
            for &(_, y) in &s.labels {
                out.labels.push(y);
                out.stay.push(c * EVAL_CHUNK + b);
            }
        }
    }
    Ok(out)
}

impl Predictions {
    pub fn probabilities(&self) -> Vec<f64> {
        self.logits.iter().map(|&l| crate::nn::predict_proba(l)).collect()
    }
}
