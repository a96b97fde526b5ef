//! The staged commands. Each stage reads the artifacts of the previous one
//! from the run directory and fails with a missing-prerequisite error when
//! they are absent.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use icudg_core::cohort::LabelledStay;
use icudg_core::eval::Setting;
use icudg_core::features::NormStats;
use icudg_core::labels::task_onset;
use icudg_core::synth::generate_multisite;
use icudg_core::training::SplitPlan;
use icudg_core::ConceptCatalog;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{AppError, AppResult};
use crate::io::{self, tables};
use crate::pipeline::{self, PreparedStay};
use crate::runner::{CellEvaluation, Experiment};

/// Resolved paths of a run's artifacts.
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        RunLayout { root: cfg.run_dir() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn cohort_dir(&self) -> PathBuf {
        self.root.join("cohort")
    }

    pub fn cohort_stays(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.cohort_dir().join(format!("{}_stays.csv", cfg.task.as_str()))
    }

    pub fn labels_dir(&self) -> PathBuf {
        self.root.join("labels")
    }

    pub fn labels(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.labels_dir().join(format!("{}_labels.csv", cfg.task.as_str()))
    }

    pub fn features_dir(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn splits(&self) -> PathBuf {
        self.features_dir().join("splits.json")
    }

    pub fn cell_features(&self, job: &str, fold: usize) -> PathBuf {
        self.features_dir().join(job).join(format!("fold{fold}"))
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn cell_model(&self, job: &str, fold: usize) -> PathBuf {
        self.models_dir().join(job).join(format!("fold{fold}"))
    }

    pub fn results(&self) -> PathBuf {
        self.root.join("results.csv")
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.csv")
    }

    pub fn calibration_dir(&self) -> PathBuf {
        self.root.join("calibration")
    }
}

/// Creates the run directory and echoes the resolved config into it.
fn start(cfg: &ExperimentConfig) -> AppResult<RunLayout> {
    let layout = RunLayout::new(cfg);
    io::ensure_dir(&layout.root)?;
    let path = layout.config();
    std::fs::write(&path, cfg.to_toml()).map_err(|e| AppError::io(&path, e))?;
    Ok(layout)
}

/// Directory-safe name of a matrix entry.
pub fn setting_slug(s: &Setting) -> String {
    match s {
        Setting::Single(d) => format!("single_{d}"),
        Setting::PooledNMinus1(d) => format!("pooled_n_minus_1_{d}"),
        Setting::All => "all".into(),
        Setting::Oracle(d) => format!("oracle_{d}"),
    }
}

pub fn synth(cfg: &ExperimentConfig) -> AppResult<()> {
    let layout = start(cfg)?;
    let gen = cfg.synth.as_ref().ok_or_else(|| AppError::config("synth", "`synth` needs a [synth] block"))?;
    let domains = generate_multisite(gen)?;
    let dir = pipeline::data_dir(&layout.root);
    io::ensure_dir(&dir)?;
    io::write_statics(&dir.join("statics.csv"), domains.values().flat_map(|d| d.statics()))?;
    io::write_events(&dir.join("events.csv"), domains.values().flat_map(|d| d.records()))?;
    io::write_catalog(&dir.join("catalog.toml"), &ConceptCatalog::default())
}

pub fn cohort(cfg: &ExperimentConfig) -> AppResult<()> {
    let layout = start(cfg)?;
    let (stays, catalog) = pipeline::load_timelines(cfg, &layout.root)?;
    let (stays, ingestion) = pipeline::ingest(stays, &catalog);
    let cohort = pipeline::select_cohort(stays, cfg.task, &cfg.cohort, cfg.labels.suspicion);
    let dir = layout.cohort_dir();
    io::ensure_dir(&dir)?;
    io::write_json(&dir.join("ingestion.json"), &ingestion)?;
    let reports = [&cohort.base, &cohort.task];
    tables::write_attrition(&dir.join("attrition.csv"), &reports)?;
    tables::write_exclusions(&dir.join("excluded.csv"), &reports)?;
    let rows: Vec<tables::CohortRow> = cohort
        .included
        .iter()
        .map(|s| tables::CohortRow { stay_id: s.timeline.stay.stay_id.clone(), domain: s.timeline.stay.domain_id.clone() })
        .collect();
    tables::write_cohort(&layout.cohort_stays(cfg), &rows)
}

fn cohort_ids(cfg: &ExperimentConfig, layout: &RunLayout) -> AppResult<BTreeSet<String>> {
    Ok(tables::read_cohort(&layout.cohort_stays(cfg))?.into_iter().map(|r| r.stay_id).collect())
}

pub fn label(cfg: &ExperimentConfig) -> AppResult<()> {
    let layout = start(cfg)?;
    let ids = cohort_ids(cfg, &layout)?;
    let (stays, catalog) = pipeline::load_timelines(cfg, &layout.root)?;
    let (stays, _) = pipeline::ingest(stays, &catalog);
    let labelled: Vec<LabelledStay> = pipeline::restrict(stays, &ids)
        .into_iter()
        .map(|timeline| LabelledStay { onset: task_onset(&timeline, cfg.task, cfg.labels.suspicion), timeline })
        .collect();
    let labels = pipeline::label_cohort(&labelled, cfg.task);
    let mut rows = Vec::new();
    for (id, hours) in &labels {
        for &(hour, y) in hours {
            rows.push(tables::LabelRow { stay_id: id.clone(), task: cfg.task, hour, label: u8::from(y) });
        }
    }
    let onsets: Vec<tables::OnsetRow> = labelled
        .iter()
        .map(|s| tables::OnsetRow { stay_id: s.timeline.stay.stay_id.clone(), task: cfg.task, onset_hour: s.onset.onset_time() })
        .collect();
    io::ensure_dir(&layout.labels_dir())?;
    tables::write_labels(&layout.labels(cfg), &rows)?;
    tables::write_onsets(&layout.labels_dir().join(format!("{}_onsets.csv", cfg.task.as_str())), &onsets)
}

/// Cohort stays with grids and labels, rebuilt from the data and the
/// cohort and label files.
fn load_prepared(cfg: &ExperimentConfig, layout: &RunLayout) -> AppResult<Vec<PreparedStay>> {
    let ids = cohort_ids(cfg, layout)?;
    let labels = tables::read_labels(&layout.labels(cfg), cfg.task)?;
    let (stays, catalog) = pipeline::load_timelines(cfg, &layout.root)?;
    let (stays, _) = pipeline::ingest(stays, &catalog);
    let stays = pipeline::restrict(stays, &ids);
    Ok(pipeline::prepare(&stays, &labels, cfg.task, cfg.features.aggregation))
}

fn read_stats(layout: &RunLayout, exp: &Experiment) -> AppResult<Vec<NormStats>> {
    exp.cells
        .iter()
        .map(|&c| {
            let path = layout.cell_features(&exp.job_name(c), c.fold).join("norm_stats.json");
            let stats: NormStats = io::read_json(&path)?;
            stats.validate().map_err(|e| AppError::Parse { path: path.clone(), line: 0, message: e.to_string() })?;
            Ok(stats)
        })
        .collect()
}

pub fn featurize(cfg: &ExperimentConfig) -> AppResult<()> {
    let layout = start(cfg)?;
    let prepared = load_prepared(cfg, &layout)?;
    let exp = Experiment::new(cfg, &prepared)?;
    io::ensure_dir(&layout.features_dir())?;
    io::write_json(&layout.splits(), &exp.splits)?;
    let stats: Vec<NormStats> = exp.cells.par_iter().map(|&c| exp.norm_stats(c)).collect();
    for (&c, s) in exp.cells.iter().zip(&stats) {
        let dir = layout.cell_features(&exp.job_name(c), c.fold);
        io::ensure_dir(&dir)?;
        io::write_json(&dir.join("norm_stats.json"), s)?;
        if cfg.features.dump_tensors && c.fold == exp.calibration_fold() {
            let tensors: Vec<_> = prepared.iter().map(|p| exp.tensor(&p.stay_id, s)).collect();
            io::write_tensors(&dir.join("tensors.bin"), &tensors)?;
        }
    }
    Ok(())
}

fn experiment<'a>(cfg: &'a ExperimentConfig, layout: &RunLayout, prepared: &'a [PreparedStay]) -> AppResult<Experiment<'a>> {
    let splits: SplitPlan = io::read_json(&layout.splits())?;
    Experiment::with_splits(cfg, prepared, splits)
}

pub fn train(cfg: &ExperimentConfig) -> AppResult<()> {
    let layout = start(cfg)?;
    let prepared = load_prepared(cfg, &layout)?;
    let exp = experiment(cfg, &layout, &prepared)?;
    let stats = read_stats(&layout, &exp)?;
    let (trained, search) = exp.train_cells(&stats)?;
    for t in &trained {
        let dir = layout.cell_model(&exp.job_name(t.cell), t.cell.fold);
        io::ensure_dir(&dir)?;
        io::save_checkpoint(&dir.join("checkpoint.bin"), &t.model, &t.config, t.best_epoch, t.best_val_loss)?;
        tables::write_history(&dir.join("history.csv"), &t.train_domains, &t.history)?;
    }
    let rows = search.iter().map(|r| {
        [r.job.clone(), r.draw.to_string(), r.fold.to_string(), r.val_loss.to_string(), u8::from(r.selected).to_string()]
    });
    tables::write_csv(&layout.models_dir().join("search.csv"), &["job", "draw", "fold", "val_loss", "selected"], rows)
}

pub fn evaluate(cfg: &ExperimentConfig) -> AppResult<()> {
    let layout = start(cfg)?;
    let prepared = load_prepared(cfg, &layout)?;
    let exp = experiment(cfg, &layout, &prepared)?;
    let stats = read_stats(&layout, &exp)?;
    for &c in &exp.cells {
        let path = layout.cell_model(&exp.job_name(c), c.fold).join("checkpoint.bin");
        if !path.exists() {
            return Err(AppError::Missing(format!("{} (no trained model for {} fold {})", path.display(), exp.job_name(c), c.fold)));
        }
    }
    let evals: Vec<CellEvaluation> = exp
        .cells
        .par_iter()
        .zip(&stats)
        .map(|(&c, s)| {
            let (model, _) = io::load_checkpoint(&layout.cell_model(&exp.job_name(c), c.fold).join("checkpoint.bin"))?;
            exp.evaluate_cell(c, &model, s)
        })
        .collect::<AppResult<_>>()?;
    let reports = exp.reports(&evals);
    tables::write_results(&layout.results(), &reports, &cfg.folds)?;
    tables::write_summary(&layout.summary(), &reports)?;
    let dir = layout.calibration_dir();
    io::ensure_dir(&dir)?;
    for rec in evals.iter().flat_map(|e| &e.calibration) {
        let name = format!("{}_{}_{}.csv", cfg.task.as_str(), rec.test_domain, setting_slug(&rec.setting));
        tables::write_calibration(&dir.join(name), &rec.raw, &rec.recalibrated)?;
    }
    Ok(())
}

/// Every stage in order; `synth` runs only when the config has a `[synth]` block.
pub fn reproduce(cfg: &ExperimentConfig) -> AppResult<()> {
    if cfg.synth.is_some() {
        synth(cfg)?;
    }
    cohort(cfg)?;
    label(cfg)?;
    featurize(cfg)?;
    train(cfg)?;
    evaluate(cfg)
}

/// Loads a config file and applies command-line overrides.
pub fn load_config(path: &Path, output_dir: Option<&Path>, name: Option<&str>) -> AppResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(o) = output_dir {
        cfg.output_dir = o.to_path_buf();
    }
    if let Some(n) = name {
        cfg.name = n.to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}
