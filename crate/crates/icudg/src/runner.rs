//! The experiment matrix: per (job, fold) normalisation, training, search
//! and evaluation.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use icudg_core::eval::{
    auroc, calibration_curve, isotonic_fit, mean_abs_calibration_error, plan_matrix, CalibrationBin, EvalReport, Setting,
    TrainingJob,
};
use icudg_core::features::{finalize, fit_norm_stats, FeatureTensor, NormStats};
use icudg_core::nn::Model;
use icudg_core::rng::{derive_seed, hash_str};
use icudg_core::training::{
    draw_configs, make_splits, predict, select_best, train, DomainData, EpochRecord, Predictions, Sample, SplitPlan,
    TrainConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AurocMode, ExperimentConfig};
use crate::error::{AppError, AppResult};
use crate::pipeline::PreparedStay;

/// Directory-safe name of a training job.
pub fn job_name(setting: &Setting) -> String {
    match setting {
        Setting::Single(d) | Setting::Oracle(d) => format!("single_{d}"),
        Setting::PooledNMinus1(d) => format!("pooled_n_minus_1_{d}"),
        Setting::All => "all".into(),
    }
}

/// One (job, fold) pair of the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub job: usize,
    pub fold: usize,
}

/// Builds the split plan over the prepared stays of every domain.
pub fn plan_splits(stays: &[PreparedStay], seed: u64) -> AppResult<SplitPlan> {
    let mut by_domain: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for s in stays {
        by_domain.entry(&s.domain).or_default().push(s.stay_id.clone());
    }
    Ok(make_splits(by_domain.iter().map(|(d, ids)| (*d, ids.as_slice())), seed)?)
}

pub struct Experiment<'a> {
    pub cfg: &'a ExperimentConfig,
    stays: &'a [PreparedStay],
    index: HashMap<&'a str, usize>,
    pub domains: Vec<String>,
    pub splits: SplitPlan,
    pub jobs: Vec<TrainingJob>,
    pub cells: Vec<Cell>,
}

impl<'a> Experiment<'a> {
    pub fn new(cfg: &'a ExperimentConfig, stays: &'a [PreparedStay]) -> AppResult<Self> {
        let splits = plan_splits(stays, cfg.seed)?;
        Self::with_splits(cfg, stays, splits)
    }

    /// Uses a split plan from an earlier stage; every listed stay must be present.
    pub fn with_splits(cfg: &'a ExperimentConfig, stays: &'a [PreparedStay], splits: SplitPlan) -> AppResult<Self> {
        let index: HashMap<&str, usize> = stays.iter().enumerate().map(|(i, s)| (s.stay_id.as_str(), i)).collect();
        for (d, split) in &splits.domains {
            for id in split.test.iter().chain(split.folds.iter().flatten()) {
                match index.get(id.as_str()) {
                    Some(&i) if stays[i].domain == *d => {}
                    _ => return Err(AppError::Runtime(format!("split plan lists stay `{id}` not in domain `{d}` of the cohort"))),
                }
            }
        }
        let domains: Vec<String> = splits.domains.keys().cloned().collect();
        let jobs = plan_matrix(&domains, &cfg.protocols);
        if jobs.is_empty() {
            return Err(AppError::config("protocols", "the requested protocols need at least two domains"));
        }
        let cells = (0..jobs.len()).flat_map(|job| cfg.folds.iter().map(move |&fold| Cell { job, fold })).collect();
        Ok(Experiment { cfg, stays, index, domains, splits, jobs, cells })
    }

    /// Keeps only the jobs for which `keep` holds.
    pub fn retain_jobs(&mut self, keep: impl Fn(&TrainingJob) -> bool) {
        self.jobs.retain(|j| keep(j));
        let folds = &self.cfg.folds;
        self.cells = (0..self.jobs.len()).flat_map(|job| folds.iter().map(move |&fold| Cell { job, fold })).collect();
    }

    /// Normalises, trains, selects and scores every cell in memory.
    pub fn run(&self) -> AppResult<RunOutput> {
        let stats: Vec<NormStats> = self.cells.par_iter().map(|&c| self.norm_stats(c)).collect();
        let (trained, search) = self.train_cells(&stats)?;
        let evals: Vec<CellEvaluation> = trained
            .par_iter()
            .zip(&stats)
            .map(|(t, s)| self.evaluate_cell(t.cell, &t.model, s))
            .collect::<AppResult<_>>()?;
        let calibration = evals.iter().flat_map(|e| e.calibration.iter().cloned()).collect();
        Ok(RunOutput { reports: self.reports(&evals), calibration, trained, search })
    }

    fn stay(&self, id: &str) -> &'a PreparedStay {
        &self.stays[self.index[id]]
    }

    pub fn job_name(&self, cell: Cell) -> String {
        job_name(&self.jobs[cell.job].setting)
    }

    /// Training-fold stays of every training domain of the cell.
    fn training_ids(&self, cell: Cell) -> Vec<String> {
        self.jobs[cell.job].train_domains.iter().flat_map(|d| self.splits.domains[d].training(cell.fold)).collect()
    }

    /// Normalisation fitted on the cell's training folds only.
    pub fn norm_stats(&self, cell: Cell) -> NormStats {
        let ids = self.training_ids(cell);
        fit_norm_stats(ids.iter().map(|id| &self.stay(id).grid))
    }

    pub fn tensor(&self, id: &str, stats: &NormStats) -> FeatureTensor {
        finalize(&self.stay(id).grid, stats)
    }

    fn domain_data(&self, name: &str, ids: &[String], stats: &NormStats) -> DomainData {
        let samples = ids
            .iter()
            .map(|id| {
                let s = self.stay(id);
                Sample { x: Arc::new(finalize(&s.grid, stats)), labels: s.labels.clone() }
            })
            .collect();
        DomainData::new(name, samples)
    }

    /// Training and validation data of a cell, one entry per training domain.
    pub fn fold_data(&self, cell: Cell, stats: &NormStats) -> (Vec<DomainData>, Vec<DomainData>) {
        let job = &self.jobs[cell.job];
        let mut train = Vec::new();
        let mut val = Vec::new();
        for d in &job.train_domains {
            let split = &self.splits.domains[d];
            train.push(self.domain_data(d, &split.training(cell.fold), stats));
            val.push(self.domain_data(d, split.validation(cell.fold), stats));
        }
        (train, val)
    }

    pub fn test_data(&self, domain: &str, stats: &NormStats) -> DomainData {
        self.domain_data(domain, &self.splits.domains[domain].test, stats)
    }

    /// Seed of the model trained for `cell` with search draw `draw`.
    pub fn model_seed(&self, cell: Cell, draw: usize) -> u64 {
        derive_seed(&[self.cfg.seed, hash_str(&self.job_name(cell)), cell.fold as u64, draw as u64])
    }

    /// Candidate configurations; the same draws are used for every job.
    pub fn candidates(&self) -> AppResult<Vec<TrainConfig>> {
        let s = &self.cfg.search;
        if s.n_draws == 0 {
            return Ok(vec![self.cfg.train.clone()]);
        }
        Ok(draw_configs(&s.space, &self.cfg.train, s.n_draws, derive_seed(&[self.cfg.seed, hash_str("search")]))?)
    }

    /// Trains every (cell, candidate) pair and keeps, per job, the candidate
    /// with the lowest mean validation loss across folds.
    pub fn train_cells(&self, stats: &[NormStats]) -> AppResult<(Vec<TrainedCell>, Vec<SearchRow>)> {
        let candidates = self.candidates()?;
        let tasks: Vec<(usize, usize)> = (0..self.cells.len()).flat_map(|c| (0..candidates.len()).map(move |d| (c, d))).collect();
        let runs: Vec<TrainedCell> = tasks
            .par_iter()
            .map(|&(c, draw)| {
                let cell = self.cells[c];
                let mut config = candidates[draw].clone();
                config.seed = self.model_seed(cell, draw);
                let (train_data, val_data) = self.fold_data(cell, &stats[c]);
                let result = train(&config, &train_data, &val_data).map_err(|e| {
                    AppError::Runtime(format!("training {} fold {} draw {draw}: {e}", self.job_name(cell), cell.fold))
                })?;
                Ok(TrainedCell {
                    cell,
                    draw,
                    config,
                    model: result.model,
                    history: result.history,
                    best_epoch: result.best_epoch,
                    best_val_loss: result.best_val_loss,
                    train_domains: result.train_domains,
                })
            })
            .collect::<AppResult<_>>()?;

        let n_folds = self.cfg.folds.len();
        let mut selected = Vec::new();
        let mut search = Vec::new();
        let mut runs = runs.into_iter().map(Some).collect::<Vec<_>>();
        for job in 0..self.jobs.len() {
            let base = job * n_folds * candidates.len();
            let loss = |fold_k: usize, draw: usize| runs[base + fold_k * candidates.len() + draw].as_ref().expect("unselected").best_val_loss;
            let per_draw: Vec<Vec<f64>> = (0..candidates.len()).map(|d| (0..n_folds).map(|k| loss(k, d)).collect()).collect();
            let best = select_best(&per_draw).ok_or_else(|| {
                AppError::Runtime(format!("no candidate of {} reached a finite validation loss", job_name(&self.jobs[job].setting)))
            })?;
            for (d, losses) in per_draw.iter().enumerate() {
                for (k, l) in losses.iter().enumerate() {
                    search.push(SearchRow {
                        job: job_name(&self.jobs[job].setting),
                        draw: d,
                        fold: self.cfg.folds[k],
                        val_loss: *l,
                        selected: d == best,
                    });
                }
            }
            for k in 0..n_folds {
                selected.push(runs[base + k * candidates.len() + best].take().expect("selected once"));
            }
        }
        Ok((selected, search))
    }

    /// Fold whose models feed the calibration curves.
    pub fn calibration_fold(&self) -> usize {
        if self.cfg.folds.contains(&0) {
            0
        } else {
            self.cfg.folds[0]
        }
    }

    /// Scores one trained model on the test split of each domain it is evaluated on.
    pub fn evaluate_cell(&self, cell: Cell, model: &Model, stats: &NormStats) -> AppResult<CellEvaluation> {
        let job = &self.jobs[cell.job];
        let cell_name = |t: &str| format!("{} fold {} on `{t}`", self.job_name(cell), cell.fold);
        let mut preds: BTreeMap<&str, (Predictions, DomainData)> = BTreeMap::new();
        for (_, t) in &job.evaluations {
            if !preds.contains_key(t.as_str()) {
                let data = self.test_data(t, stats);
                let p = predict(model, &data).map_err(|e| AppError::Runtime(format!("{}: {e}", cell_name(t))))?;
                preds.insert(t, (p, data));
            }
        }
        let mut aurocs = Vec::new();
        for (setting, t) in &job.evaluations {
            let (p, _) = &preds[t.as_str()];
            let (scores, labels) = scored(p, self.cfg.evaluation.auroc);
            let a = auroc(&scores, &labels).map_err(|e| AppError::Runtime(format!("{}: {e}", cell_name(t))))?;
            aurocs.push((setting.clone(), t.clone(), a));
        }

        let mut calibration = Vec::new();
        if cell.fold == self.calibration_fold() {
            let (_, val) = self.fold_data(cell, stats);
            let vp = predict(model, &DomainData::pooled("val", &val))?;
            let vy: Vec<f64> = vp.labels.iter().map(|&y| f64::from(u8::from(y))).collect();
            let iso = isotonic_fit(&vp.probabilities(), &vy, None)?;
            let ev = &self.cfg.evaluation;
            let mut seen = Vec::new();
            for (setting, t) in &job.evaluations {
                if seen.contains(&t) {
                    continue;
                }
                seen.push(t);
                let (p, _) = &preds[t.as_str()];
                let raw = p.probabilities();
                let recal: Vec<f64> = raw.iter().map(|&x| iso.predict(x)).collect();
                calibration.push(CalibrationRecord {
                    setting: setting.clone(),
                    test_domain: t.clone(),
                    n: raw.len(),
                    raw: calibration_curve(&raw, &p.labels, ev.calibration_bins, ev.winsor_quantile)?,
                    recalibrated: calibration_curve(&recal, &p.labels, ev.calibration_bins, ev.winsor_quantile)?,
                });
            }
        }
        Ok(CellEvaluation { cell, aurocs, calibration })
    }

    /// Collects per-fold AUROCs into one report per matrix entry.
    pub fn reports(&self, evals: &[CellEvaluation]) -> Vec<EvalReport> {
        let mut out = Vec::new();
        for (j, job) in self.jobs.iter().enumerate() {
            for (e, (setting, t)) in job.evaluations.iter().enumerate() {
                let folds: Vec<f64> = evals.iter().filter(|c| c.cell.job == j).map(|c| c.aurocs[e].2).collect();
                out.push(EvalReport::new(self.cfg.task, setting.clone(), job.train_domains.clone(), t.clone(), folds));
            }
        }
        out
    }
}

/// Scores and labels for AUROC under the configured unit of analysis.
pub fn scored(p: &Predictions, mode: AurocMode) -> (Vec<f64>, Vec<bool>) {
    match mode {
        AurocMode::Pooled => (p.logits.clone(), p.labels.clone()),
        AurocMode::PerStay => {
            let mut per: BTreeMap<usize, (f64, bool)> = BTreeMap::new();
            for ((&s, &l), &y) in p.stay.iter().zip(&p.logits).zip(&p.labels) {
                let e = per.entry(s).or_insert((f64::NEG_INFINITY, false));
                e.0 = e.0.max(l);
                e.1 |= y;
            }
            per.into_values().unzip()
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedCell {
    pub cell: Cell,
    pub draw: usize,
    pub config: TrainConfig,
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub train_domains: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRow {
    pub job: String,
    pub draw: usize,
    pub fold: usize,
    pub val_loss: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    pub setting: Setting,
    pub test_domain: String,
    pub n: usize,
    pub raw: Vec<CalibrationBin>,
    pub recalibrated: Vec<CalibrationBin>,
}

impl CalibrationRecord {
    pub fn error_raw(&self) -> f64 {
        mean_abs_calibration_error(&self.raw)
    }

    pub fn error_recalibrated(&self) -> f64 {
        mean_abs_calibration_error(&self.recalibrated)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellEvaluation {
    pub cell: Cell,
    /// Aligned with the job's evaluations.
    pub aurocs: Vec<(Setting, String, f64)>,
    pub calibration: Vec<CalibrationRecord>,
}

/// Output of a full in-memory run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub reports: Vec<EvalReport>,
    pub calibration: Vec<CalibrationRecord>,
    pub trained: Vec<TrainedCell>,
    pub search: Vec<SearchRow>,
}

/// Runs the matrix end to end on prepared stays.
pub fn run_matrix(cfg: &ExperimentConfig, stays: &[PreparedStay]) -> AppResult<RunOutput> {
    Experiment::new(cfg, stays)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use icudg_core::training::Predictions;

    #[test]
    fn job_names_are_path_safe() {
        assert_eq!(job_name(&Setting::Single("a".into())), "single_a");
        assert_eq!(job_name(&Setting::PooledNMinus1("b".into())), "pooled_n_minus_1_b");
        assert_eq!(job_name(&Setting::All), "all");
    }

    #[test]
    fn per_stay_scoring_takes_the_maximum() {
        let p = Predictions { logits: vec![0.1, 0.9, -1.0, 0.3], labels: vec![false, true, false, false], stay: vec![0, 0, 1, 1] };
        assert_eq!(scored(&p, AurocMode::PerStay), (vec![0.9, 0.3], vec![true, false]));
        assert_eq!(scored(&p, AurocMode::Pooled).0.len(), 4);
    }
}
