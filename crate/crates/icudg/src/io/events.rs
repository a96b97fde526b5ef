//! Clinical event streams as CSV or newline-delimited JSON.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use icudg_core::{ConceptCatalog, EventRecord};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

pub const EVENT_COLUMNS: [&str; 4] = ["stay_id", "time_hours", "concept", "value"];

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    stay_id: String,
    time_hours: f64,
    concept: String,
    value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Ndjson,
}

impl EventFormat {
    /// `.ndjson` and `.jsonl` are JSON lines; anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ndjson" | "jsonl") => EventFormat::Ndjson,
            _ => EventFormat::Csv,
        }
    }
}

struct Builder<'a> {
    catalog: &'a ConceptCatalog,
    ids: HashMap<String, Arc<str>>,
    unknown: BTreeSet<String>,
    out: Vec<EventRecord>,
}

impl Builder<'_> {
    fn push(&mut self, row: Row) {
        let Some(concept) = self.catalog.resolve(&row.concept) else {
            self.unknown.insert(row.concept);
            return;
        };
        let stay_id = match self.ids.get(&row.stay_id) {
            Some(id) => id.clone(),
            None => {
                let id: Arc<str> = Arc::from(row.stay_id.as_str());
                self.ids.insert(row.stay_id, id.clone());
                id
            }
        };
        self.out.push(EventRecord { stay_id, time: row.time_hours, concept, value: row.value });
    }

    fn finish(self, path: &Path) -> AppResult<Vec<EventRecord>> {
        if !self.unknown.is_empty() {
            let names: Vec<String> = self.unknown.into_iter().collect();
            return Err(AppError::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("unknown concepts: {}", names.join(", ")),
            });
        }
        Ok(self.out)
    }
}

/// Reads an event file. Rows naming concepts outside the catalogue are
/// collected and reported together.
pub fn read_events(path: &Path, catalog: &ConceptCatalog) -> AppResult<Vec<EventRecord>> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut b = Builder { catalog, ids: HashMap::new(), unknown: BTreeSet::new(), out: Vec::new() };
    match EventFormat::from_path(path) {
        EventFormat::Csv => {
            let mut rdr = csv::Reader::from_reader(BufReader::new(file));
            check_header(path, rdr.headers().map_err(|e| csv_error(path, e))?)?;
            for row in rdr.deserialize::<Row>() {
                b.push(row.map_err(|e| csv_error(path, e))?);
            }
        }
        EventFormat::Ndjson => {
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| AppError::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: Row = serde_json::from_str(&line).map_err(|e| AppError::Parse {
                    path: path.to_path_buf(),
                    line: i as u64 + 1,
                    message: e.to_string(),
                })?;
                b.push(row);
            }
        }
    }
    b.finish(path)
}

fn check_header(path: &Path, header: &csv::StringRecord) -> AppResult<()> {
    let got: Vec<&str> = header.iter().collect();
    if got != EVENT_COLUMNS {
        return Err(AppError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`, found `{}`", EVENT_COLUMNS.join(","), got.join(",")),
        });
    }
    Ok(())
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> AppError {
    let line = e.position().map_or(0, |p| p.line());
    AppError::Parse { path: path.to_path_buf(), line, message: e.to_string() }
}

/// Writes events as CSV or NDJSON depending on the extension.
pub fn write_events(path: &Path, records: impl IntoIterator<Item = EventRecord>) -> AppResult<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let row = |r: &EventRecord| Row {
        stay_id: r.stay_id.to_string(),
        time_hours: r.time,
        concept: r.concept.name().to_string(),
        value: r.value,
    };
    match EventFormat::from_path(path) {
        EventFormat::Csv => {
            let mut cw = csv::Writer::from_writer(w);
            for r in records {
                cw.serialize(row(&r)).map_err(|e| csv_error(path, e))?;
            }
            cw.flush().map_err(|e| AppError::io(path, e))?;
        }
        EventFormat::Ndjson => {
            for r in records {
                serde_json::to_writer(&mut w, &row(&r)).map_err(|e| AppError::Runtime(e.to_string()))?;
                w.write_all(b"\n").map_err(|e| AppError::io(path, e))?;
            }
            w.flush().map_err(|e| AppError::io(path, e))?;
        }
    }
    Ok(())
}

