//! Hourly discretisation, forward filling, standardisation and missing indicators.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::concept::{ConceptId, N_DYNAMIC, N_STATIC};
use crate::error::{Error, Result};
use crate::stay::{Sex, StayTimeline};

/// Number of standardised value columns.
pub const N_VALUES: usize = N_STATIC + N_DYNAMIC;
/// Full tensor width: values followed by one missing indicator per value column.
pub const N_FEATURES: usize = 2 * N_VALUES;
pub const SD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Last,
}

/// One stay on the hourly grid before standardisation.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyGrid {
    pub stay_id: String,
    pub hours: usize,
    /// Row-major `hours x 48`; `NAN` where no value is available.
    pub values: Vec<f64>,
    /// Whether the cell held at least one raw measurement.
    pub observed: Vec<bool>,
    pub statics: [Option<f64>; N_STATIC],
}

impl HourlyGrid {
    pub fn value(&self, hour: usize, j: usize) -> Option<f64> {
        let v = self.values[hour * N_DYNAMIC + j];
        (!v.is_nan()).then_some(v)
    }

    pub fn is_observed(&self, hour: usize, j: usize) -> bool {
        self.observed[hour * N_DYNAMIC + j]
    }
}

/// Column names of a feature tensor row.
pub fn feature_names() -> Vec<String> {
    let values: Vec<String> = ConceptId::all().take(N_VALUES).map(|c| String::from(c.name())).collect();
    let indicators = values.iter().map(|n| alloc::format!("{n}_missing")).collect::<Vec<_>>();
    values.into_iter().chain(indicators).collect()
}

fn static_values(t: &StayTimeline) -> [Option<f64>; N_STATIC] {
    let s = &t.stay;
    let sex = match s.sex {
        Sex::Female => Some(1.0),
        Sex::Male => Some(0.0),
        Sex::Unknown => None,
    };
    [s.age, sex, s.height, s.weight]
}

/// Bins time-varying measurements with `0 <= t < hours` into hour `floor(t)`.
pub fn discretise(timeline: &StayTimeline, hours: usize, aggregation: Aggregation) -> HourlyGrid {
    let cells = hours * N_DYNAMIC;
    let mut sum = alloc::vec![0.0; cells];
    let mut count = alloc::vec![0u32; cells];
    for e in &timeline.events {
        let Some(j) = e.concept.dynamic_index() else { continue };
        if !(e.time >= 0.0 && e.time < hours as f64) || !e.value.is_finite() {
            continue;
        }
        let k = libm::floor(e.time) as usize * N_DYNAMIC + j;
        match aggregation {
            Aggregation::Mean => sum[k] += e.value,
            // events are time-sorted, so the last write wins
            Aggregation::Last => sum[k] = e.value,
        }
        count[k] += 1;
    }
    let values = sum
        .iter()
        .zip(&count)
        .map(|(s, &n)| match (n, aggregation) {
            (0, _) => f64::NAN,
            (_, Aggregation::Mean) => s / f64::from(n),
            (_, Aggregation::Last) => *s,
        })
        .collect();
    HourlyGrid {
        stay_id: timeline.stay.stay_id.clone(),
        hours,
        values,
        observed: count.iter().map(|&n| n > 0).collect(),
        statics: static_values(timeline),
    }
}

/// Carries the last value forward; leading gaps stay missing.
pub fn locf_impute(grid: &mut HourlyGrid) {
    for j in 0..N_DYNAMIC {
        let mut last = f64::NAN;
        for h in 0..grid.hours {
            let v = &mut grid.values[h * N_DYNAMIC + j];
            if v.is_nan() {
                *v = last;
            } else {
                last = *v;
            }
        }
    }
}

/// Per-column mean and standard deviation over observed training cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl NormStats {
    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != N_VALUES || self.sd.len() != N_VALUES || self.names.len() != N_VALUES {
            return Err(Error::Invalid(alloc::format!("norm stats must have {N_VALUES} columns")));
        }
        if self.sd.iter().any(|s| !(*s > 0.0)) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Invalid("norm stats contain a non-positive sd or non-finite mean".into()));
        }
        Ok(())
    }
}

/// Observed cells of each value column. Statics count once per hour, as they
/// appear in the tensor.
fn for_each_observed(grid: &HourlyGrid, mut f: impl FnMut(usize, f64)) {
    for (i, s) in grid.statics.iter().enumerate() {
        if let Some(v) = s {
            for _ in 0..grid.hours {
                f(i, *v);
            }
        }
    }
    for h in 0..grid.hours {
        for j in 0..N_DYNAMIC {
            if grid.is_observed(h, j) {
                f(N_STATIC + j, grid.values[h * N_DYNAMIC + j]);
            }
        }
    }
}

/// Population mean and sd of observed cells, pooled across `grids`.
pub fn fit_norm_stats<'a>(grids: impl IntoIterator<Item = &'a HourlyGrid> + Clone) -> NormStats {
    let mut n = [0u64; N_VALUES];
    let mut sum = [0.0; N_VALUES];
    for g in grids.clone() {
        for_each_observed(g, |i, v| {
            n[i] += 1;
            sum[i] += v;
        });
    }
    let mean: Vec<f64> = (0..N_VALUES).map(|i| if n[i] > 0 { sum[i] / n[i] as f64 } else { 0.0 }).collect();
    let mut ss = [0.0; N_VALUES];
    for g in grids {
        for_each_observed(g, |i, v| ss[i] += (v - mean[i]) * (v - mean[i]));
    }
    let sd = (0..N_VALUES)
        .map(|i| if n[i] > 0 { libm::sqrt(ss[i] / n[i] as f64).max(SD_FLOOR) } else { 1.0 })
        .collect();
    NormStats { names: feature_names().into_iter().take(N_VALUES).collect(), mean, sd }
}

/// Model input for one stay: `hours x 104`, row-major, no missing entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub stay_id: String,
    pub hours: usize,
    pub data: Vec<f32>,
}

impl FeatureTensor {
    pub fn row(&self, hour: usize) -> &[f32] {
        &self.data[hour * N_FEATURES..(hour + 1) * N_FEATURES]
    }

    /// Truncates to the first `hours` rows.
    pub fn truncated(&self, hours: usize) -> FeatureTensor {
        let hours = hours.min(self.hours);
        FeatureTensor { stay_id: self.stay_id.clone(), hours, data: self.data[..hours * N_FEATURES].to_vec() }
    }
}

/// Standardises an imputed grid; anything still missing becomes the training
/// mean, which is zero after standardisation.
pub fn finalize(grid: &HourlyGrid, stats: &NormStats) -> FeatureTensor {
    let mut data = Vec::with_capacity(grid.hours * N_FEATURES);
    let z = |i: usize, v: Option<f64>| v.map_or(0.0, |v| (v - stats.mean[i]) / stats.sd[i]);
    for h in 0..grid.hours {
        let mut ind = [0.0f32; N_VALUES];
        for (i, s) in grid.statics.iter().enumerate() {
            data.push(z(i, *s) as f32);
            ind[i] = if s.is_some() { 0.0 } else { 1.0 };
        }
        for j in 0..N_DYNAMIC {
            data.push(z(N_STATIC + j, grid.value(h, j)) as f32);
            ind[N_STATIC + j] = if grid.is_observed(h, j) { 0.0 } else { 1.0 };
        }
        data.extend_from_slice(&ind);
    }
    FeatureTensor { stay_id: grid.stay_id.clone(), hours: grid.hours, data }
}

/// Discretised and forward-filled grid of a stay over its first `hours` hours,
/// capped at the ICU stay length.
pub fn grid_for(timeline: &StayTimeline, hours: usize, aggregation: Aggregation) -> HourlyGrid {
    let los = timeline.stay.los().unwrap_or(0.0).max(0.0);
    let t = (libm::ceil(los) as usize).min(hours);
    let mut g = discretise(timeline, t, aggregation);
    locf_impute(&mut g);
    g
}
