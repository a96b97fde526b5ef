//! Sepsis-3 onset: SOFA increase of at least two points temporally coupled to
//! a suspicion of infection.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{OnsetReason, OnsetResult};
use crate::concept::ConceptId;
use crate::stay::StayTimeline;

/// Maximum gap between antibiotic doses that keeps a course continuous.
pub const ABX_MAX_GAP_H: f64 = 24.0;
/// Minimum span of a continuous course.
pub const ABX_MIN_SPAN_H: f64 = 72.0;
pub const CULTURE_AFTER_ABX_H: f64 = 24.0;
pub const ABX_AFTER_CULTURE_H: f64 = 72.0;
pub const SOFA_WINDOW_H: f64 = 24.0;
pub const SOFA_MIN_INCREASE: f64 = 2.0;
pub const ONSET_BEFORE_SUSPICION_H: f64 = 48.0;
pub const ONSET_AFTER_SUSPICION_H: f64 = 24.0;
/// Antibiotic event value marking a prescription that covers the rest of the ICU stay.
pub const ABX_WHOLE_STAY_FLAG: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuspicionMode {
    /// Antibiotics and a microbiological culture must co-occur.
    #[default]
    AbxAndCulture,
    /// For sources without microbiology, antibiotics alone.
    AbxOnly,
}

/// A continuous antibiotic course that qualifies as therapeutic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbxEpisode {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SuspicionSource {
    AbxFirst,
    CultureFirst,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuspicionEvent {
    pub time: f64,
    pub source: SuspicionSource,
}

/// Groups antibiotic doses into continuous courses and keeps those that last
/// at least 72 hours, run until death, or cover the whole remaining stay.
///
/// `doses` are `(time, value)` pairs; a value of at least 2 marks a
/// prescription-style record that extends to `discharge_time`.
pub fn antibiotic_episodes(doses: &[(f64, f64)], death_time: Option<f64>, discharge_time: Option<f64>) -> Vec<AbxEpisode> {
    let mut spans: Vec<(f64, f64, bool)> = doses
        .iter()
        .map(|&(t, v)| {
            if v >= ABX_WHOLE_STAY_FLAG {
                (t, discharge_time.map_or(t, |d| d.max(t)), discharge_time.is_some())
            } else {
                (t, t, false)
            }
        })
        .collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut out = Vec::new();
    let mut current: Option<(f64, f64, bool)> = None;
    let close = |(start, end, whole): (f64, f64, bool), out: &mut Vec<AbxEpisode>| {
        let until_death = death_time.is_some_and(|d| d >= end && d - end <= ABX_MAX_GAP_H);
        if whole || until_death || end - start >= ABX_MIN_SPAN_H {
            out.push(AbxEpisode { start, end });
        }
    };
    for span in spans {
        current = match current {
            Some((s, e, w)) if span.0 - e <= ABX_MAX_GAP_H => Some((s, e.max(span.1), w || span.2)),
            Some(done) => {
                close(done, &mut out);
                Some(span)
            }
            None => Some(span),
        };
    }
    if let Some(done) = current {
        close(done, &mut out);
    }
    out
}

/// Suspicion-of-infection times, sorted ascending.
pub fn suspicion_of_infection(episodes: &[AbxEpisode], culture_times: &[f64], mode: SuspicionMode) -> Vec<SuspicionEvent> {
    let mut out = Vec::new();
    match mode {
        SuspicionMode::AbxOnly => {
            out.extend(episodes.iter().map(|e| SuspicionEvent { time: e.start, source: SuspicionSource::AbxFirst }));
        }
        SuspicionMode::AbxAndCulture => {
            for e in episodes {
                for &c in culture_times {
                    if c >= e.start && c - e.start <= CULTURE_AFTER_ABX_H {
                        out.push(SuspicionEvent { time: e.start, source: SuspicionSource::AbxFirst });
                    } else if c < e.start && e.start - c <= ABX_AFTER_CULTURE_H {
                        out.push(SuspicionEvent { time: c, source: SuspicionSource::CultureFirst });
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.source.cmp(&b.source)));
    out.dedup();
    out
}

/// Times of SOFA measurements at least two points above the lowest value in
/// the preceding 24 hours, window `(t - 24h, t]`.
pub fn sofa_dysfunction_times(sofa: &[(f64, f64)]) -> Vec<f64> {
    let n = sofa.len();
    let mut out: Vec<f64> = Vec::new();
    let mut lo = 0;
    let mut hi = 0;
    // monotone deque of indices with increasing values over sofa[lo..hi]
    let mut dq: alloc::collections::VecDeque<usize> = alloc::collections::VecDeque::new();
    for &(t, v) in sofa {
        while hi < n && sofa[hi].0 <= t {
            while dq.back().is_some_and(|&b| sofa[b].1 >= sofa[hi].1) {
                dq.pop_back();
            }
            dq.push_back(hi);
            hi += 1;
        }
        while sofa[lo].0 <= t - SOFA_WINDOW_H {
            lo += 1;
        }
        while dq.front().is_some_and(|&f| f < lo) {
            dq.pop_front();
        }
        let min = sofa[*dq.front().expect("window holds the current measurement")].1;
        if v - min >= SOFA_MIN_INCREASE && out.last() != Some(&t) {
            out.push(t);
        }
    }
    out
}

/// Earliest organ dysfunction lying within 48 h before to 24 h after some suspicion.
pub fn sepsis_onset_from(dysfunction: &[f64], suspicion: &[SuspicionEvent]) -> Option<(f64, f64)> {
    let times: Vec<f64> = suspicion.iter().map(|s| s.time).collect();
    dysfunction.iter().find_map(|&d| {
        // need s with d - 24 <= s <= d + 48
        let i = times.partition_point(|&s| s < d - ONSET_AFTER_SUSPICION_H);
        times.get(i).filter(|&&s| s <= d + ONSET_BEFORE_SUSPICION_H).map(|&s| (d, s))
    })
}

pub fn sepsis_onset(stay: &StayTimeline, mode: SuspicionMode) -> OnsetResult {
    let death = if stay.stay.died_in_icu { stay.stay.death_time.or(stay.stay.icu_discharge) } else { None };
    let episodes = antibiotic_episodes(&stay.series(ConceptId::ANTIBIOTIC), death, stay.stay.icu_discharge);
    let cultures = stay.times(ConceptId::CULTURE);
    let suspicion = suspicion_of_infection(&episodes, &cultures, mode);
    let dysfunction = sofa_dysfunction_times(&stay.series(ConceptId::SOFA));
    match sepsis_onset_from(&dysfunction, &suspicion) {
        Some((d, s)) => OnsetResult::at(d, stay, OnsetReason::Sepsis3 { suspicion: s }),
        None => OnsetResult::none(),
    }
}
