//! Per-stay static table.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use icudg_core::{Sex, StayStatic};
use serde::{Deserialize, Serialize};

use super::events::csv_error;
use crate::error::{AppError, AppResult};

pub const STATIC_COLUMNS: [&str; 9] = [
    "stay_id",
    "domain",
    "age",
    "sex",
    "height",
    "weight",
    "icu_discharge_hours",
    "died_in_icu",
    "death_time_hours",
];

/// Optional trailing column naming the hospital inside a domain.
pub const HOSPITAL_COLUMN: &str = "hospital";

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    stay_id: String,
    domain: String,
    age: Option<f64>,
    sex: String,
    height: Option<f64>,
    weight: Option<f64>,
    icu_discharge_hours: Option<f64>,
    died_in_icu: String,
    death_time_hours: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hospital: Option<String>,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" | "" => Some(false),
        _ => None,
    }
}

/// Reads the statics CSV. Empty fields are missing values.
pub fn read_statics(path: &Path) -> AppResult<Vec<StayStatic>> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let header: Vec<String> = rdr.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_string).collect();
    let base_ok = header.len() >= STATIC_COLUMNS.len() && header.iter().zip(STATIC_COLUMNS).all(|(a, b)| a == b);
    let extra_ok = header.len() == STATIC_COLUMNS.len()
        || (header.len() == STATIC_COLUMNS.len() + 1 && header[STATIC_COLUMNS.len()] == HOSPITAL_COLUMN);
    if !(base_ok && extra_ok) {
        return Err(AppError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}[,{HOSPITAL_COLUMN}]`", STATIC_COLUMNS.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| AppError::Parse { path: path.to_path_buf(), line, message };
        let row: Row = rec.deserialize(Some(&csv::StringRecord::from(header.clone()))).map_err(|e| bad(e.to_string()))?;
        let sex = Sex::parse(&row.sex).ok_or_else(|| bad(format!("invalid sex `{}`", row.sex)))?;
        let died = parse_bool(&row.died_in_icu).ok_or_else(|| bad(format!("invalid died_in_icu `{}`", row.died_in_icu)))?;
        if row.stay_id.is_empty() || row.domain.is_empty() {
            return Err(bad("stay_id and domain are required".into()));
        }
        out.push(StayStatic {
            stay_id: row.stay_id,
            domain_id: row.domain,
            hospital_id: row.hospital.filter(|h| !h.is_empty()),
            age: row.age,
            sex,
            height: row.height,
            weight: row.weight,
            icu_discharge: row.icu_discharge_hours,
            died_in_icu: died,
            death_time: row.death_time_hours,
        });
    }
    Ok(out)
}

pub fn write_statics<'a>(path: &Path, stays: impl IntoIterator<Item = &'a StayStatic>) -> AppResult<()> {
    let stays: Vec<&StayStatic> = stays.into_iter().collect();
    let with_hospital = stays.iter().any(|s| s.hospital_id.is_some());
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header: Vec<&str> = STATIC_COLUMNS.to_vec();
    if with_hospital {
        header.push(HOSPITAL_COLUMN);
    }
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in stays {
        let mut rec = vec![
            s.stay_id.clone(),
            s.domain_id.clone(),
            opt(s.age),
            match s.sex {
                Sex::Unknown => String::new(),
                other => other.as_str().to_string(),
            },
            opt(s.height),
            opt(s.weight),
            opt(s.icu_discharge),
            u8::from(s.died_in_icu).to_string(),
            opt(s.death_time),
        ];
        if with_hospital {
            rec.push(s.hospital_id.clone().unwrap_or_default());
        }
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}
