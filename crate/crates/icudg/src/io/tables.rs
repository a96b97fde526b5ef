//! CSV tables exchanged between pipeline stages and written as reports.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use icudg_core::cohort::ExclusionReport;
use icudg_core::eval::{CalibrationBin, EvalReport};
use icudg_core::training::EpochRecord;
use icudg_core::Task;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::events::csv_error;
use crate::error::{AppError, AppResult};

/// Writes `header` and `rows` as CSV.
pub fn write_csv<R, I>(path: &Path, header: &[&str], rows: I) -> AppResult<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> AppResult<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> AppResult<Vec<T>> {
    if !path.exists() {
        return Err(AppError::Missing(path.display().to_string()));
    }
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    csv::Reader::from_reader(BufReader::new(file))
        .deserialize()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .collect()
}

/// `(criterion, domain, n_excluded)` rows of several exclusion passes.
pub fn write_attrition(path: &Path, reports: &[&ExclusionReport]) -> AppResult<()> {
    let mut rows = Vec::new();
    for r in reports {
        for (c, d, n) in r.rows() {
            rows.push([c.as_str().to_string(), d.to_string(), n.to_string()]);
        }
    }
    write_csv(path, &["criterion", "domain", "n_excluded"], rows)
}

pub fn write_exclusions(path: &Path, reports: &[&ExclusionReport]) -> AppResult<()> {
    let rows = reports.iter().flat_map(|r| r.excluded.iter().map(|(id, c)| [id.clone(), c.as_str().to_string()]));
    write_csv(path, &["stay_id", "criterion"], rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub stay_id: String,
    pub domain: String,
}

pub fn write_cohort(path: &Path, rows: &[CohortRow]) -> AppResult<()> {
    write_rows(path, rows)
}

pub fn read_cohort(path: &Path) -> AppResult<Vec<CohortRow>> {
    read_rows(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub stay_id: String,
    pub task: Task,
    pub hour: usize,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsetRow {
    pub stay_id: String,
    pub task: Task,
    pub onset_hour: Option<f64>,
}

pub fn write_labels(path: &Path, rows: &[LabelRow]) -> AppResult<()> {
    write_rows(path, rows)
}

/// Labelled hours per stay, in file order.
pub fn read_labels(path: &Path, task: Task) -> AppResult<BTreeMap<String, Vec<(usize, bool)>>> {
    let mut out: BTreeMap<String, Vec<(usize, bool)>> = BTreeMap::new();
    for r in read_rows::<LabelRow>(path)? {
        if r.task != task || r.label > 1 {
            return Err(AppError::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("unexpected label row for stay `{}`", r.stay_id),
            });
        }
        out.entry(r.stay_id).or_default().push((r.hour, r.label == 1));
    }
    Ok(out)
}

pub fn write_onsets(path: &Path, rows: &[OnsetRow]) -> AppResult<()> {
    write_rows(path, rows)
}

pub const RESULT_COLUMNS: [&str; 6] = ["task", "setting", "train_domains", "test_domain", "fold", "auroc"];

/// One row per (matrix cell, fold).
pub fn write_results(path: &Path, reports: &[EvalReport], folds: &[usize]) -> AppResult<()> {
    let rows = reports.iter().flat_map(|r| {
        r.fold_auroc.iter().zip(folds).map(move |(a, k)| {
            [
                r.task.as_str().to_string(),
                r.setting.kind().to_string(),
                r.train_label(),
                r.test_domain.clone(),
                k.to_string(),
                a.to_string(),
            ]
        })
    });
    write_csv(path, &RESULT_COLUMNS, rows)
}

pub fn write_summary(path: &Path, reports: &[EvalReport]) -> AppResult<()> {
    let rows = reports.iter().map(|r| {
        [
            r.task.as_str().to_string(),
            r.setting.kind().to_string(),
            r.train_label(),
            r.test_domain.clone(),
            r.mean.to_string(),
            r.se.to_string(),
            r.fold_auroc.len().to_string(),
        ]
    });
    write_csv(path, &["task", "setting", "train_domains", "test_domain", "mean_auroc", "se", "n_folds"], rows)
}

/// Calibration curves before and after recalibration.
pub fn write_calibration(path: &Path, raw: &[CalibrationBin], recalibrated: &[CalibrationBin]) -> AppResult<()> {
    let rows = [("raw", raw), ("isotonic", recalibrated)].into_iter().flat_map(|(kind, bins)| {
        bins.iter().enumerate().map(move |(k, b)| {
            [kind.to_string(), k.to_string(), b.mean_pred.to_string(), b.frac_pos.to_string(), b.n.to_string()]
        })
    });
    write_csv(path, &["curve", "bin", "mean_pred", "frac_pos", "n"], rows)
}

pub fn write_history(path: &Path, domains: &[String], history: &[EpochRecord]) -> AppResult<()> {
    let mut header: Vec<String> = vec!["epoch".into(), "train_loss".into()];
    header.extend(domains.iter().map(|d| format!("train_loss_{d}")));
    header.push("val_loss".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = history.iter().map(|h| {
        let mut r = vec![h.epoch.to_string(), h.train_loss.to_string()];
        r.extend(h.domain_losses.iter().map(f64::to_string));
        r.push(h.val_loss.to_string());
        r
    });
    write_csv(path, &header, rows)
}
