//! KDIGO acute kidney injury staging from creatinine and urine output.
//!
//! Creatinine measurements are staged against a rolling 7-day minimum and a
//! rolling 48-hour minimum. Urine volumes are turned into ml/kg/h rates over
//! their collection interval, and the sustained-oliguria criteria require the
//! collection intervals of qualifying observations to cover the whole window
//! ending at the observation being staged. Renal replacement therapy is not
//! an input, so stage 3 is reached through creatinine or urine only.

use alloc::vec::Vec;

use super::{OnsetReason, OnsetResult};
use crate::concept::ConceptId;
use crate::stay::StayTimeline;

pub const BASELINE_WINDOW_H: f64 = 168.0;
pub const ACUTE_WINDOW_H: f64 = 48.0;
pub const ACUTE_RISE_MG_DL: f64 = 0.3;
pub const STAGE3_ABSOLUTE_MG_DL: f64 = 4.0;
pub const DEFAULT_WEIGHT_KG: f64 = 75.0;
pub const URINE_MAX_GAP_H: f64 = 24.0;
/// Observations whose collection interval is longer than this cannot support
/// a sustained low-output window.
pub const URINE_MAX_SUPPORT_H: f64 = 12.0;
/// Slack for threshold comparisons on decimal lab values.
pub const THRESHOLD_EPS: f64 = 1e-9;

/// Lowest creatinine over `(t - 168h, t]`.
pub fn kdigo_baseline_creatinine(crea: &[(f64, f64)], t: f64) -> Option<f64> {
    window_min(crea, t, BASELINE_WINDOW_H)
}

fn window_min(series: &[(f64, f64)], t: f64, width: f64) -> Option<f64> {
    series
        .iter()
        .filter(|(ti, _)| *ti > t - width && *ti <= t)
        .map(|(_, v)| *v)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
}

/// Stage implied by a creatinine value `value` measured at `t`, given the
/// lowest values over the preceding 7 days and 48 hours (both windows include `t`).
pub fn creatinine_stage(value: f64, min_7d: f64, min_48h: f64) -> u8 {
    let acute_rise = value - min_48h >= ACUTE_RISE_MG_DL - THRESHOLD_EPS;
    let mut stage = 0;
    if acute_rise {
        stage = 1;
    }
    if min_7d > 0.0 {
        let ratio = value / min_7d;
        if ratio >= 3.0 - THRESHOLD_EPS {
            stage = 3;
        } else if ratio >= 2.0 - THRESHOLD_EPS {
            stage = stage.max(2);
        } else if ratio >= 1.5 - THRESHOLD_EPS {
            stage = stage.max(1);
        }
    }
    if acute_rise && value >= STAGE3_ABSOLUTE_MG_DL - THRESHOLD_EPS {
        stage = 3;
    }
    stage
}

/// Per-measurement creatinine stages for a time-sorted series.
pub fn creatinine_stages(crea: &[(f64, f64)]) -> Vec<u8> {
    let n = crea.len();
    let mut out = Vec::with_capacity(n);
    // `hi` is one past the last measurement at or before the current time.
    let mut hi = 0;
    let mut lo7 = 0;
    let mut lo48 = 0;
    for &(t, v) in crea {
        while hi < n && crea[hi].0 <= t {
            hi += 1;
        }
        while crea[lo7].0 <= t - BASELINE_WINDOW_H {
            lo7 += 1;
        }
        while crea[lo48].0 <= t - ACUTE_WINDOW_H {
            lo48 += 1;
        }
        let min7 = crea[lo7..hi].iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        let min48 = crea[lo48..hi].iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        out.push(creatinine_stage(v, min7, min48));
    }
    out
}

/// A urine observation converted to a rate over its collection interval `(start, time]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UrineRate {
    pub time: f64,
    pub start: f64,
    pub volume_ml: f64,
    /// ml/kg/h.
    pub rate: f64,
}

/// Converts urine volumes to per-kilogram hourly rates.
///
/// Volumes recorded at the same instant are summed. Each rate divides by
/// the hours since the previous observation; the first observation, and any
/// observation more than 24 h after its predecessor, is divided by one hour.
pub fn urine_rates(urine: &[(f64, f64)], weight_kg: Option<f64>) -> Vec<UrineRate> {
    let weight = weight_kg.filter(|w| w.is_finite() && *w > 0.0).unwrap_or(DEFAULT_WEIGHT_KG);
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(urine.len());
    for &(t, v) in urine {
        match merged.last_mut() {
            Some(last) if last.0 == t => last.1 += v,
            _ => merged.push((t, v)),
        }
    }
    let mut out = Vec::with_capacity(merged.len());
    let mut prev: Option<f64> = None;
    for (t, v) in merged {
        let start = match prev {
            Some(p) if t - p <= URINE_MAX_GAP_H => p,
            _ => t - 1.0,
        };
        out.push(UrineRate { time: t, start, volume_ml: v, rate: v / (t - start) / weight });
        prev = Some(t);
    }
    out
}

/// Rate of the most recent urine observation at or before `t`.
pub fn urine_rate(urine: &[(f64, f64)], weight_kg: Option<f64>, t: f64) -> Option<f64> {
    urine_rates(urine, weight_kg).iter().rev().find(|r| r.time <= t).map(|r| r.rate)
}

/// True when the collection intervals of the observations ending at index `k`
/// satisfy `pred` and contiguously cover `(rates[k].time - hours, rates[k].time]`.
fn sustained(rates: &[UrineRate], k: usize, hours: f64, pred: impl Fn(&UrineRate) -> bool) -> bool {
    let target = rates[k].time - hours;
    let mut j = k;
    loop {
        let r = &rates[j];
        if !pred(r) || r.time - r.start > URINE_MAX_SUPPORT_H {
            return false;
        }
        if r.start <= target {
            return true;
        }
        if j == 0 || rates[j - 1].time != r.start {
            return false;
        }
        j -= 1;
    }
}

/// Urine-output stage at observation `k`.
pub fn urine_stage_at(rates: &[UrineRate], k: usize) -> u8 {
    if sustained(rates, k, 24.0, |r| r.rate < 0.3) || sustained(rates, k, 12.0, |r| r.volume_ml <= 0.0) {
        3
    } else if sustained(rates, k, 12.0, |r| r.rate < 0.5) {
        2
    } else if sustained(rates, k, 6.0, |r| r.rate < 0.5) {
        1
    } else {
        0
    }
}

/// KDIGO stage at time `t` from the latest creatinine and urine observations at or before `t`.
pub fn kdigo_stage(crea: &[(f64, f64)], urine: &[(f64, f64)], weight_kg: Option<f64>, t: f64) -> u8 {
    let n_crea = crea.partition_point(|x| x.0 <= t);
    let crea_stage = if n_crea == 0 {
        0
    } else {
        let (tc, v) = crea[n_crea - 1];
        let min7 = kdigo_baseline_creatinine(&crea[..n_crea], tc).unwrap_or(v);
        let min48 = window_min(&crea[..n_crea], tc, ACUTE_WINDOW_H).unwrap_or(v);
        creatinine_stage(v, min7, min48)
    };
    let rates = urine_rates(urine, weight_kg);
    let n_urine = rates.partition_point(|r| r.time <= t);
    let urine_stage = if n_urine == 0 { 0 } else { urine_stage_at(&rates, n_urine - 1) };
    crea_stage.max(urine_stage)
}

/// Earliest integer hour at which the KDIGO stage is at least 1.
///
/// Stages are evaluated on the integer-hour grid using all observations up
/// to and including that hour. The search is not restricted to the ICU stay,
/// so pre-admission or post-discharge triggers are reported as outside the ICU.
pub fn aki_onset(stay: &StayTimeline) -> OnsetResult {
    let crea = stay.series(ConceptId::CREA);
    let urine = stay.series(ConceptId::URINE);
    let crea_stages = creatinine_stages(&crea);
    let rates = urine_rates(&urine, stay.stay.weight);
    let urine_stages: Vec<u8> = (0..rates.len()).map(|k| urine_stage_at(&rates, k)).collect();

    let mut hours: Vec<f64> = crea.iter().map(|x| x.0).chain(rates.iter().map(|r| r.time)).map(libm::ceil).collect();
    hours.sort_by(f64::total_cmp);
    hours.dedup();

    let (mut ci, mut ui) = (0, 0);
    for h in hours {
        while ci < crea.len() && crea[ci].0 <= h {
            ci += 1;
        }
        while ui < rates.len() && rates[ui].time <= h {
            ui += 1;
        }
        let cs = if ci > 0 { crea_stages[ci - 1] } else { 0 };
        let us = if ui > 0 { urine_stages[ui - 1] } else { 0 };
        let stage = cs.max(us);
        if stage >= 1 {
            return OnsetResult::at(h, stay, OnsetReason::Kdigo { stage });
        }
    }
    OnsetResult::none()
}
