//! Ingestion, cohort selection and labelling shared by the staged commands
//! and the in-memory runner.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use icudg_core::cohort::{apply_base_exclusions, apply_task_exclusions, CohortConfig, ExclusionReport, LabelledStay};
use icudg_core::features::{grid_for, Aggregation, HourlyGrid};
use icudg_core::labels::{build_label_track, task_onset, SuspicionMode, MORTALITY_INPUT_HOURS};
use icudg_core::synth::generate_multisite;
use icudg_core::{apply_plausibility_filter, assemble_stays, ConceptCatalog, StayTimeline, Task};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{AppError, AppResult};
use crate::io;

pub const MIN_AGE: f64 = 18.0;

/// Counts from ingestion, before any exclusion criterion runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestionReport {
    pub n_stays: usize,
    pub n_under_18: usize,
    pub n_implausible_values: usize,
}

/// Drops minors and implausible values.
pub fn ingest(stays: Vec<StayTimeline>, catalog: &ConceptCatalog) -> (Vec<StayTimeline>, IngestionReport) {
    let mut report = IngestionReport { n_stays: stays.len(), ..Default::default() };
    let mut out = Vec::with_capacity(stays.len());
    for s in stays {
        if s.stay.age.is_some_and(|a| a < MIN_AGE) {
            report.n_under_18 += 1;
            continue;
        }
        let (s, removed) = apply_plausibility_filter(s, catalog);
        report.n_implausible_values += removed;
        out.push(s);
    }
    (out, report)
}

/// Where the dataset files of a run live.
pub struct DataFiles {
    pub events: PathBuf,
    pub statics: PathBuf,
    pub catalog: Option<PathBuf>,
}

pub fn data_dir(run_dir: &Path) -> PathBuf {
    run_dir.join("data")
}

pub fn data_files(cfg: &ExperimentConfig, run_dir: &Path) -> DataFiles {
    match &cfg.data {
        Some(d) => DataFiles { events: d.events.clone(), statics: d.statics.clone(), catalog: d.catalog.clone() },
        None => {
            let dir = data_dir(run_dir);
            DataFiles { events: dir.join("events.csv"), statics: dir.join("statics.csv"), catalog: Some(dir.join("catalog.toml")) }
        }
    }
}

fn require(path: &Path, hint: &str) -> AppResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(AppError::Missing(format!("{} ({hint})", path.display())))
    }
}

/// Reads the dataset files and assembles stay timelines.
pub fn load_timelines(cfg: &ExperimentConfig, run_dir: &Path) -> AppResult<(Vec<StayTimeline>, ConceptCatalog)> {
    let files = data_files(cfg, run_dir);
    let hint = if cfg.synth.is_some() { "run `icudg synth` first" } else { "configured in [data]" };
    require(&files.statics, hint)?;
    require(&files.events, hint)?;
    let catalog = match &files.catalog {
        Some(p) => {
            require(p, hint)?;
            io::read_catalog(p)?
        }
        None => ConceptCatalog::default(),
    };
    let statics = io::read_statics(&files.statics)?;
    let events = io::read_events(&files.events, &catalog)?;
    Ok((assemble_stays(statics, events)?, catalog))
}

/// Generates the configured synthetic domains in memory.
pub fn synth_timelines(cfg: &ExperimentConfig) -> AppResult<Vec<StayTimeline>> {
    let gen = cfg.synth.as_ref().ok_or_else(|| AppError::config("synth", "no [synth] block in the config"))?;
    Ok(generate_multisite(gen)?.into_values().flat_map(|d| d.into_stays()).collect())
}

/// Result of the base and task exclusions.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub included: Vec<LabelledStay>,
    pub base: ExclusionReport,
    pub task: ExclusionReport,
}

pub fn select_cohort(stays: Vec<StayTimeline>, task: Task, cohort: &CohortConfig, suspicion: SuspicionMode) -> Cohort {
    let (kept, base) = apply_base_exclusions(stays, cohort);
    let labelled = kept
        .into_iter()
        .map(|timeline| LabelledStay { onset: task_onset(&timeline, task, suspicion), timeline })
        .collect();
    let (included, task_report) = apply_task_exclusions(labelled, task, cohort);
    Cohort { included, base, task: task_report }
}

/// A cohort stay ready for featurisation: its imputed hourly grid and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedStay {
    pub stay_id: String,
    pub domain: String,
    pub grid: HourlyGrid,
    /// `(hour, label)` pairs, ascending.
    pub labels: Vec<(usize, bool)>,
}

/// Hours of input a stay needs to reach its last label.
pub fn input_hours(task: Task, labels: &[(usize, bool)]) -> usize {
    match task {
        Task::Mortality => MORTALITY_INPUT_HOURS,
        _ => labels.last().map_or(0, |l| l.0 + 1),
    }
}

/// Labelled hours of each included stay.
pub fn label_cohort(included: &[LabelledStay], task: Task) -> BTreeMap<String, Vec<(usize, bool)>> {
    included
        .iter()
        .map(|s| {
            let track = build_label_track(&s.timeline.stay, task, s.onset.onset_time());
            (s.timeline.stay.stay_id.clone(), track.labelled_hours())
        })
        .collect()
}

/// Builds grids for stays that have labels within their recorded hours.
/// Stays whose labels all fall outside the grid are dropped.
pub fn prepare<'a>(
    timelines: impl IntoIterator<Item = &'a StayTimeline>,
    labels: &BTreeMap<String, Vec<(usize, bool)>>,
    task: Task,
    aggregation: Aggregation,
) -> Vec<PreparedStay> {
    let mut out = Vec::new();
    for t in timelines {
        let Some(l) = labels.get(t.id()) else { continue };
        let grid = grid_for(t, input_hours(task, l), aggregation);
        let labels: Vec<(usize, bool)> = l.iter().copied().filter(|(h, _)| *h < grid.hours).collect();
        if labels.is_empty() {
            continue;
        }
        out.push(PreparedStay { stay_id: t.stay.stay_id.clone(), domain: t.stay.domain_id.clone(), grid, labels });
    }
    out.sort_by(|a, b| a.stay_id.cmp(&b.stay_id));
    out
}

/// Everything from raw stays to prepared stays, without touching disk.
pub fn prepare_in_memory(cfg: &ExperimentConfig, stays: Vec<StayTimeline>, catalog: &ConceptCatalog) -> (Vec<PreparedStay>, Cohort) {
    let (stays, _) = ingest(stays, catalog);
    let cohort = select_cohort(stays, cfg.task, &cfg.cohort, cfg.labels.suspicion);
    let labels = label_cohort(&cohort.included, cfg.task);
    let prepared = prepare(cohort.included.iter().map(|s| &s.timeline), &labels, cfg.task, cfg.features.aggregation);
    (prepared, cohort)
}

/// Keeps the timelines whose ids are listed in the cohort file.
pub fn restrict(stays: Vec<StayTimeline>, ids: &BTreeSet<String>) -> Vec<StayTimeline> {
    stays.into_iter().filter(|s| ids.contains(s.id())).collect()
}
