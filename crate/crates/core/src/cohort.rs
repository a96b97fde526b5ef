//! Base and task-specific cohort exclusions with an attrition report.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::concept::ConceptId;
use crate::labels::{OnsetResult, Task};
use crate::stay::StayTimeline;

/// Thresholds of the base and task exclusions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub min_los_h: f64,
    pub min_measured_hours: usize,
    /// A span without measurements at least this long excludes the stay.
    pub max_gap_h: f64,
    pub min_onset_h: f64,
    pub max_baseline_creatinine: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            min_los_h: 6.0,
            min_measured_hours: 4,
            max_gap_h: 12.0,
            min_onset_h: 6.0,
            max_baseline_creatinine: 4.0,
        }
    }
}

/// Exclusion criteria in the order they are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Criterion {
    InvalidTimes,
    ShortStay,
    FewMeasuredHours,
    MeasurementGap,
    MortalityShortStay,
    OnsetOutsideIcu,
    EarlyOnset,
    BaselineCreatinine,
    HospitalWithoutCases,
}

impl Criterion {
    pub const BASE: [Criterion; 4] =
        [Criterion::InvalidTimes, Criterion::ShortStay, Criterion::FewMeasuredHours, Criterion::MeasurementGap];

    pub fn for_task(task: Task) -> &'static [Criterion] {
        match task {
            Task::Mortality => &[Criterion::MortalityShortStay],
            Task::Aki => &[
                Criterion::OnsetOutsideIcu,
                Criterion::EarlyOnset,
                Criterion::BaselineCreatinine,
                Criterion::HospitalWithoutCases,
            ],
            Task::Sepsis => &[Criterion::OnsetOutsideIcu, Criterion::EarlyOnset, Criterion::HospitalWithoutCases],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::InvalidTimes => "invalid_admission_discharge",
            Criterion::ShortStay => "los_under_6h",
            Criterion::FewMeasuredHours => "under_4_measured_hours",
            Criterion::MeasurementGap => "measurement_gap_12h",
            Criterion::MortalityShortStay => "stay_ends_before_30h",
            Criterion::OnsetOutsideIcu => "onset_outside_icu",
            Criterion::EarlyOnset => "onset_before_6h",
            Criterion::BaselineCreatinine => "baseline_creatinine_over_4",
            Criterion::HospitalWithoutCases => "hospital_without_cases",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Attrition for one pass of exclusions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExclusionReport {
    pub n_input: usize,
    pub n_included: usize,
    /// `(criterion, excluded count)` in application order.
    pub counts: Vec<(Criterion, usize)>,
    /// Per domain: input count and excluded count per criterion, aligned with `counts`.
    pub per_domain: BTreeMap<String, DomainAttrition>,
    pub excluded: Vec<(String, Criterion)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DomainAttrition {
    pub n_input: usize,
    pub excluded: Vec<usize>,
    pub n_included: usize,
}

impl ExclusionReport {
    fn new(criteria: &[Criterion]) -> Self {
        ExclusionReport { counts: criteria.iter().map(|c| (*c, 0)).collect(), ..Default::default() }
    }

    fn record(&mut self, stay: &StayTimeline, reason: Option<Criterion>) {
        let width = self.counts.len();
        let dom = self.per_domain.entry(stay.stay.domain_id.clone()).or_insert_with(|| DomainAttrition {
            excluded: alloc::vec![0; width],
            ..Default::default()
        });
        self.n_input += 1;
        dom.n_input += 1;
        match reason {
            None => {
                self.n_included += 1;
                dom.n_included += 1;
            }
            Some(c) => {
                let k = self.counts.iter().position(|(x, _)| *x == c).expect("criterion belongs to this pass");
                self.counts[k].1 += 1;
                dom.excluded[k] += 1;
                self.excluded.push((stay.stay.stay_id.clone(), c));
            }
        }
    }

    pub fn count(&self, c: Criterion) -> usize {
        self.counts.iter().find(|(x, _)| *x == c).map_or(0, |x| x.1)
    }

    /// `(criterion, domain, n_excluded)` rows in application order.
    pub fn rows(&self) -> Vec<(Criterion, &str, usize)> {
        let mut rows = Vec::new();
        for (k, (c, _)) in self.counts.iter().enumerate() {
            for (d, a) in &self.per_domain {
                rows.push((*c, d.as_str(), a.excluded[k]));
            }
        }
        rows
    }
}

/// Hour indices `floor(t)` of catalogue time-varying measurements with `0 <= t < los`.
pub fn measured_hourly_bins(timeline: &StayTimeline) -> BTreeSet<i64> {
    let los = timeline.stay.los().unwrap_or(0.0);
    timeline
        .events
        .iter()
        .filter(|e| e.concept.is_dynamic() && e.time >= 0.0 && e.time < los)
        .map(|e| libm::floor(e.time) as i64)
        .collect()
}

/// First base criterion the stay fails, if any.
pub fn base_exclusion(timeline: &StayTimeline, cfg: &CohortConfig) -> Option<Criterion> {
    let s = &timeline.stay;
    let Some(los) = s.los() else {
        return Some(Criterion::InvalidTimes);
    };
    if s.died_in_icu && s.death_time.is_some_and(|d| !d.is_finite() || d > los) {
        return Some(Criterion::InvalidTimes);
    }
    if los < cfg.min_los_h {
        return Some(Criterion::ShortStay);
    }
    let bins = measured_hourly_bins(timeline);
    if bins.len() < cfg.min_measured_hours {
        return Some(Criterion::FewMeasuredHours);
    }
    // Gaps between consecutive measured hours, with admission and discharge as end points.
    let mut prev = 0.0;
    for b in bins.iter().map(|b| *b as f64).chain(core::iter::once(los)) {
        if b - prev >= cfg.max_gap_h {
            return Some(Criterion::MeasurementGap);
        }
        prev = b;
    }
    None
}

pub fn apply_base_exclusions(stays: Vec<StayTimeline>, cfg: &CohortConfig) -> (Vec<StayTimeline>, ExclusionReport) {
    let mut report = ExclusionReport::new(&Criterion::BASE);
    let mut included = Vec::with_capacity(stays.len());
    for stay in stays {
        let reason = base_exclusion(&stay, cfg);
        report.record(&stay, reason);
        if reason.is_none() {
            included.push(stay);
        }
    }
    (included, report)
}

/// Creatinine used for the pre-existing renal disease exclusion: the last
/// pre-admission value if there is one, else the first value in the ICU.
pub fn admission_baseline_creatinine(timeline: &StayTimeline) -> Option<f64> {
    let crea = timeline.series(ConceptId::CREA);
    crea.iter().rev().find(|(t, _)| *t < 0.0).or_else(|| crea.iter().find(|(t, _)| *t >= 0.0)).map(|x| x.1)
}

/// A stay together with its task onset.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledStay {
    pub timeline: StayTimeline,
    pub onset: OnsetResult,
}

fn task_exclusion(stay: &LabelledStay, task: Task, cfg: &CohortConfig) -> Option<Criterion> {
    match task {
        Task::Mortality => {
            let end = stay.timeline.stay.end_time().unwrap_or(0.0);
            (end < crate::labels::MORTALITY_MIN_STAY_H).then_some(Criterion::MortalityShortStay)
        }
        Task::Aki | Task::Sepsis => {
            if stay.onset.is_outside_icu() {
                return Some(Criterion::OnsetOutsideIcu);
            }
            if stay.onset.onset_time().is_some_and(|t| t < cfg.min_onset_h) {
                return Some(Criterion::EarlyOnset);
            }
            if task == Task::Aki
                && admission_baseline_creatinine(&stay.timeline).is_some_and(|c| c > cfg.max_baseline_creatinine)
            {
                return Some(Criterion::BaselineCreatinine);
            }
            None
        }
    }
}

/// Applies the exclusions of `task` to stays that passed the base exclusions.
pub fn apply_task_exclusions(
    stays: Vec<LabelledStay>,
    task: Task,
    cfg: &CohortConfig,
) -> (Vec<LabelledStay>, ExclusionReport) {
    let mut reasons: Vec<Option<Criterion>> = stays.iter().map(|s| task_exclusion(s, task, cfg)).collect();

    if task.is_hourly() {
        let mut cases: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for (s, r) in stays.iter().zip(&reasons) {
            let key = (s.timeline.stay.domain_id.as_str(), s.timeline.stay.hospital());
            let n = cases.entry(key).or_insert(0);
            if r.is_none() && s.onset.onset_time().is_some() {
                *n += 1;
            }
        }
        for (s, r) in stays.iter().zip(reasons.iter_mut()) {
            let key = (s.timeline.stay.domain_id.as_str(), s.timeline.stay.hospital());
            if r.is_none() && cases[&key] == 0 {
                *r = Some(Criterion::HospitalWithoutCases);
            }
        }
    }

    let mut report = ExclusionReport::new(Criterion::for_task(task));
    let mut included = Vec::with_capacity(stays.len());
    for (stay, reason) in stays.into_iter().zip(reasons) {
        report.record(&stay.timeline, reason);
        if reason.is_none() {
            included.push(stay);
        }
    }
    (included, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stay::{Event, StayStatic};
    use alloc::vec;

    fn hr_at(times: &[f64]) -> Vec<Event> {
        times.iter().map(|&t| Event { time: t, concept: ConceptId::from_name("hr").unwrap(), value: 80.0 }).collect()
    }

    fn stay(los: f64, times: &[f64]) -> StayTimeline {
        StayTimeline::new(StayStatic::new("s", "d", los), hr_at(times))
    }

    fn hourly(los: f64) -> Vec<f64> {
        (0..libm::ceil(los) as usize).map(|h| h as f64 + 0.5).filter(|t| *t < los).collect()
    }

    #[test]
    fn base_examples() {
        let cfg = CohortConfig::default();
        assert_eq!(base_exclusion(&stay(5.0, &hourly(5.0)), &cfg), Some(Criterion::ShortStay));
        assert_eq!(base_exclusion(&stay(20.0, &[1.0, 1.5, 2.0, 3.5, 3.9]), &cfg), Some(Criterion::FewMeasuredHours));
        assert_eq!(base_exclusion(&stay(20.0, &[1.0, 2.0, 5.0, 9.0, 10.0, 11.0]), &cfg), None);
        let mut gap = vec![0.5, 1.0, 2.0];
        gap.extend([14.0, 15.0, 16.0, 17.0, 20.0]);
        assert_eq!(base_exclusion(&stay(22.0, &gap), &cfg), Some(Criterion::MeasurementGap));
        let mut no_gap = vec![0.5, 1.0, 2.0];
        no_gap.extend([13.9, 15.0, 16.0, 17.0, 20.0]);
        assert_eq!(base_exclusion(&stay(22.0, &no_gap), &cfg), None);

        let mut s = stay(20.0, &hourly(20.0));
        s.stay.icu_discharge = None;
        assert_eq!(base_exclusion(&s, &cfg), Some(Criterion::InvalidTimes));
        s.stay.icu_discharge = Some(-3.0);
        assert_eq!(base_exclusion(&s, &cfg), Some(Criterion::InvalidTimes));
    }

    #[test]
    fn auxiliary_events_do_not_count_as_measurements() {
        let mut s = stay(20.0, &[1.0, 2.0, 3.0]);
        s.events.push(Event { time: 5.0, concept: ConceptId::SOFA, value: 2.0 });
        assert_eq!(measured_hourly_bins(&s).len(), 3);
    }

    #[test]
    fn report_partitions_input() {
        let cfg = CohortConfig::default();
        let stays = vec![stay(5.0, &hourly(5.0)), stay(20.0, &hourly(20.0)), stay(20.0, &[1.0])];
        let (inc, rep) = apply_base_exclusions(stays, &cfg);
        assert_eq!(inc.len(), 1);
        assert_eq!(rep.n_input, 3);
        let total: usize = rep.counts.iter().map(|c| c.1).sum();
        assert_eq!(total + rep.n_included, rep.n_input);
        let (again, rep2) = apply_base_exclusions(inc, &cfg);
        assert_eq!(again.len(), 1);
        assert_eq!(rep2.n_included, 1);
    }

    #[test]
    fn task_examples() {
        let cfg = CohortConfig::default();
        let mut died = stay(29.0, &hourly(29.0));
        died.stay.died_in_icu = true;
        died.stay.death_time = Some(29.0);
        let ls = LabelledStay { timeline: died, onset: OnsetResult::none() };
        let (inc, rep) = apply_task_exclusions(vec![ls], Task::Mortality, &cfg);
        assert!(inc.is_empty());
        assert_eq!(rep.count(Criterion::MortalityShortStay), 1);

        let mut high_crea = stay(50.0, &hourly(50.0));
        high_crea.events.push(Event { time: 1.0, concept: ConceptId::CREA, value: 4.2 });
        let mut ok = stay(50.0, &hourly(50.0));
        ok.stay.stay_id = "ok".into();
        let case = OnsetResult { raw_time: Some(20.0), in_icu: true, reason: crate::labels::OnsetReason::None };
        let stays = vec![
            LabelledStay { timeline: high_crea, onset: OnsetResult::none() },
            LabelledStay { timeline: ok, onset: case },
        ];
        let (inc, rep) = apply_task_exclusions(stays, Task::Aki, &cfg);
        assert_eq!(inc.len(), 1);
        assert_eq!(rep.count(Criterion::BaselineCreatinine), 1);

        let early = OnsetResult { raw_time: Some(5.0), in_icu: true, reason: crate::labels::OnsetReason::None };
        let stays = vec![LabelledStay { timeline: stay(50.0, &hourly(50.0)), onset: early }];
        let (_, rep) = apply_task_exclusions(stays, Task::Sepsis, &cfg);
        assert_eq!(rep.count(Criterion::EarlyOnset), 1);
    }

    #[test]
    fn pre_icu_creatinine_is_the_admission_baseline() {
        let mut s = stay(50.0, &hourly(50.0));
        s.events.push(Event { time: -30.0, concept: ConceptId::CREA, value: 1.0 });
        s.events.push(Event { time: -2.0, concept: ConceptId::CREA, value: 4.5 });
        s.events.push(Event { time: 3.0, concept: ConceptId::CREA, value: 1.1 });
        let s = StayTimeline::new(s.stay, s.events);
        assert_eq!(admission_baseline_creatinine(&s), Some(4.5));
    }
}
