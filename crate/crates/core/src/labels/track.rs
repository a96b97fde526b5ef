use alloc::string::String;
use alloc::vec::Vec;

use super::{Task, MAX_TRACK_HOUR, MORTALITY_INPUT_HOURS, ONSET_WINDOW_H};
use crate::stay::StayStatic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HourLabel {
    Negative,
    Positive,
    /// Outside the labelled follow-up.
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackKind {
    SingleAt24h,
    Hourly,
}

/// Per-stay training targets for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTrack {
    pub task: Task,
    pub stay_id: String,
    pub kind: TrackKind,
    /// Labels for hours `0..hourly.len()`; empty for mortality.
    pub hourly: Vec<HourLabel>,
    pub single: Option<bool>,
    /// Integer onset hour, when an onset was found.
    pub onset_hour: Option<i64>,
}

impl LabelTrack {
    /// Label for hour `h`; hours past the end of follow-up are censored.
    pub fn label_at(&self, h: usize) -> HourLabel {
        self.hourly.get(h).copied().unwrap_or(HourLabel::Censored)
    }

    /// Number of input hours the model consumes for this track.
    pub fn input_hours(&self) -> usize {
        match self.kind {
            TrackKind::SingleAt24h => MORTALITY_INPUT_HOURS,
            TrackKind::Hourly => self.hourly.len(),
        }
    }

    /// `(hour, label)` for every labelled hour.
    pub fn labelled_hours(&self) -> Vec<(usize, bool)> {
        match self.kind {
            TrackKind::SingleAt24h => self
                .single
                .map(|y| alloc::vec![(MORTALITY_INPUT_HOURS - 1, y)])
                .unwrap_or_default(),
            TrackKind::Hourly => self
                .hourly
                .iter()
                .enumerate()
                .filter_map(|(h, l)| match l {
                    HourLabel::Negative => Some((h, false)),
                    HourLabel::Positive => Some((h, true)),
                    HourLabel::Censored => None,
                })
                .collect(),
        }
    }

    pub fn has_positive(&self) -> bool {
        match self.kind {
            TrackKind::SingleAt24h => self.single == Some(true),
            TrackKind::Hourly => self.hourly.contains(&HourLabel::Positive),
        }
    }
}

/// Builds the label track for a stay given its (in-ICU) onset time.
///
/// Hourly tracks cover hours `h` with `h < end of stay`, `h <= 168` and
/// `h <= onset + 6`; hours from `onset - 6` onwards are positive.
pub fn build_label_track(stay: &StayStatic, task: Task, onset: Option<f64>) -> LabelTrack {
    if task == Task::Mortality {
        return LabelTrack {
            task,
            stay_id: stay.stay_id.clone(),
            kind: TrackKind::SingleAt24h,
            hourly: Vec::new(),
            single: Some(super::mortality_label(stay)),
            onset_hour: None,
        };
    }
    let onset_hour = onset.map(|t| libm::ceil(t) as i64);
    let end = stay.end_time().unwrap_or(0.0);
    let mut last: i64 = libm::ceil(end) as i64 - 1;
    last = last.min(MAX_TRACK_HOUR as i64);
    if let Some(o) = onset_hour {
        last = last.min(o + ONSET_WINDOW_H);
    }
    let hourly = (0..=last)
        .map(|h| match onset_hour {
            Some(o) if h >= o - ONSET_WINDOW_H => HourLabel::Positive,
            _ => HourLabel::Negative,
        })
        .collect();
    LabelTrack { task, stay_id: stay.stay_id.clone(), kind: TrackKind::Hourly, hourly, single: None, onset_hour }
}
