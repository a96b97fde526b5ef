//! Outcome derivation for the three prediction tasks.

pub mod kdigo;
pub mod sepsis;
mod track;

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::stay::{StayStatic, StayTimeline};

pub use kdigo::{aki_onset, kdigo_baseline_creatinine, kdigo_stage, urine_rate, urine_rates, UrineRate};
pub use sepsis::{
    antibiotic_episodes, sepsis_onset, sofa_dysfunction_times, suspicion_of_infection, AbxEpisode, SuspicionEvent,
    SuspicionMode, SuspicionSource,
};
pub use track::{build_label_track, HourLabel, LabelTrack, TrackKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Mortality,
    Aki,
    Sepsis,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Mortality, Task::Aki, Task::Sepsis];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Mortality => "mortality",
            Task::Aki => "aki",
            Task::Sepsis => "sepsis",
        }
    }

    /// Number of hourly input bins the model sees at most.
    pub fn horizon_hours(self) -> usize {
        match self {
            Task::Mortality => MORTALITY_INPUT_HOURS,
            Task::Aki | Task::Sepsis => MAX_TRACK_HOUR + 1,
        }
    }

    pub fn is_hourly(self) -> bool {
        !matches!(self, Task::Mortality)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "mortality" => Ok(Task::Mortality),
            "aki" => Ok(Task::Aki),
            "sepsis" => Ok(Task::Sepsis),
            other => Err(Error::Invalid(alloc::format!("unknown task `{other}`"))),
        }
    }
}

/// Mortality is predicted once, from hours 0..=23.
pub const MORTALITY_INPUT_HOURS: usize = 24;
/// Stays must last at least this long to enter the mortality cohort.
pub const MORTALITY_MIN_STAY_H: f64 = 30.0;
/// Last labelled hour of an hourly track (7 days).
pub const MAX_TRACK_HOUR: usize = 168;
/// Hours labelled positive before and after an onset.
pub const ONSET_WINDOW_H: i64 = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OnsetReason {
    None,
    Kdigo { stage: u8 },
    Sepsis3 { suspicion: f64 },
}

/// Outcome onset for one stay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnsetResult {
    /// Onset time in hours since admission, wherever it fell.
    pub raw_time: Option<f64>,
    /// Whether `raw_time` lies inside `[0, end of stay]`.
    pub in_icu: bool,
    pub reason: OnsetReason,
}

impl OnsetResult {
    pub fn none() -> Self {
        OnsetResult { raw_time: None, in_icu: false, reason: OnsetReason::None }
    }

    pub(crate) fn at(time: f64, stay: &StayTimeline, reason: OnsetReason) -> Self {
        let in_icu = time >= 0.0 && stay.stay.end_time().is_some_and(|end| time <= end);
        OnsetResult { raw_time: Some(time), in_icu, reason }
    }

    /// Onset time when it happened during the ICU stay.
    pub fn onset_time(&self) -> Option<f64> {
        self.raw_time.filter(|_| self.in_icu)
    }

    pub fn is_outside_icu(&self) -> bool {
        self.raw_time.is_some() && !self.in_icu
    }
}

/// ICU mortality label; only meaningful for stays in the mortality cohort.
pub fn mortality_label(stay: &StayStatic) -> bool {
    stay.died_in_icu
}

/// Onset for any task; mortality has none.
pub fn task_onset(stay: &StayTimeline, task: Task, mode: SuspicionMode) -> OnsetResult {
    match task {
        Task::Mortality => OnsetResult::none(),
        Task::Aki => aki_onset(stay),
        Task::Sepsis => sepsis_onset(stay, mode),
    }
}
