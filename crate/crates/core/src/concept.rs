//! The fixed clinical concept catalogue: 4 static and 48 time-varying model
//! inputs plus the auxiliary streams consumed only by the outcome labellers.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Broad category of a concept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptKind {
    Static,
    Vital,
    Lab,
    Inout,
    /// Label-only input (SOFA, antibiotics, cultures). Never a model feature.
    Auxiliary,
}

impl ConceptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConceptKind::Static => "static",
            ConceptKind::Vital => "vital",
            ConceptKind::Lab => "lab",
            ConceptKind::Inout => "inout",
            ConceptKind::Auxiliary => "auxiliary",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "static" => ConceptKind::Static,
            "vital" => ConceptKind::Vital,
            "lab" => ConceptKind::Lab,
            "inout" => ConceptKind::Inout,
            "auxiliary" => ConceptKind::Auxiliary,
            _ => return None,
        })
    }
}

struct Canonical {
    id: &'static str,
    kind: ConceptKind,
    unit: &'static str,
    range: Option<(f64, f64)>,
}

const fn c(id: &'static str, kind: ConceptKind, unit: &'static str, lo: f64, hi: f64) -> Canonical {
    Canonical { id, kind, unit, range: Some((lo, hi)) }
}

use ConceptKind::{Inout as IO, Lab as L, Static as S, Vital as V};

const CANONICAL: [Canonical; N_CONCEPTS] = [
    c("age", S, "years", 0.0, 120.0),
    Canonical { id: "sex", kind: S, unit: "-", range: None },
    c("height", S, "cm", 50.0, 250.0),
    c("weight", S, "kg", 20.0, 400.0),
    c("sbp", V, "mmHg", 0.0, 300.0),
    c("dbp", V, "mmHg", 0.0, 200.0),
    c("hr", V, "beats/minute", 0.0, 300.0),
    c("map", V, "mmHg", 0.0, 250.0),
    c("o2sat", V, "%", 0.0, 100.0),
    c("resp", V, "breaths/minute", 0.0, 120.0),
    c("temp", V, "C", 25.0, 45.0),
    c("alb", L, "g/dL", 0.0, 10.0),
    c("alp", L, "IU/L", 0.0, 5000.0),
    c("alt", L, "IU/L", 0.0, 20000.0),
    c("ast", L, "IU/L", 0.0, 20000.0),
    c("be", L, "mmol/L", -50.0, 50.0),
    c("bicar", L, "mmol/L", 0.0, 100.0),
    c("bili", L, "mg/dL", 0.0, 100.0),
    c("bili_dir", L, "mg/dL", 0.0, 100.0),
    c("bnd", L, "%", 0.0, 100.0),
    c("bun", L, "mg/dL", 0.0, 300.0),
    c("ca", L, "mg/dL", 0.0, 30.0),
    c("cai", L, "mmol/L", 0.0, 5.0),
    c("crea", L, "mg/dL", 0.0, 30.0),
    c("ck", L, "IU/L", 0.0, 500000.0),
    c("ckmb", L, "ng/mL", 0.0, 10000.0),
    c("cl", L, "mmol/L", 50.0, 200.0),
    c("pco2", L, "mmHg", 0.0, 250.0),
    c("crp", L, "mg/L", 0.0, 1000.0),
    c("fgn", L, "mg/dL", 0.0, 2000.0),
    c("glu", L, "mg/dL", 0.0, 2000.0),
    c("hgb", L, "g/dL", 0.0, 30.0),
    c("inr_pt", L, "-", 0.0, 20.0),
    c("lact", L, "mmol/L", 0.0, 50.0),
    c("lymph", L, "%", 0.0, 100.0),
    c("mch", L, "pg", 0.0, 100.0),
    c("mchc", L, "%", 0.0, 100.0),
    c("mcv", L, "fL", 0.0, 200.0),
    c("methb", L, "%", 0.0, 100.0),
    c("mg", L, "mg/dL", 0.0, 20.0),
    c("neut", L, "%", 0.0, 100.0),
    c("po2", L, "mmHg", 0.0, 800.0),
    c("ptt", L, "sec", 0.0, 250.0),
    c("ph", L, "-", 6.3, 8.0),
    c("phos", L, "mg/dL", 0.0, 40.0),
    c("plt", L, "1000/uL", 0.0, 3000.0),
    c("k", L, "mmol/L", 0.0, 15.0),
    c("na", L, "mmol/L", 50.0, 250.0),
    c("tnt", L, "ng/mL", 0.0, 100.0),
    c("wbc", L, "1000/uL", 0.0, 500.0),
    c("fio2", IO, "%", 21.0, 100.0),
    c("urine", IO, "mL", 0.0, 5000.0),
];

const AUXILIARY: [(&str, &str); N_AUXILIARY] = [("sofa", "points"), ("antibiotic", "-"), ("culture", "-")];

/// Number of catalogue concepts (model inputs).
pub const N_CONCEPTS: usize = 52;
/// Number of static catalogue concepts.
pub const N_STATIC: usize = 4;
/// Number of time-varying catalogue concepts.
pub const N_DYNAMIC: usize = 48;
/// Number of label-only auxiliary concepts.
pub const N_AUXILIARY: usize = 3;

/// Compact identifier of a catalogue or auxiliary concept.
///
/// Indices `0..4` are static, `4..52` time-varying and `52..55` auxiliary.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConceptId(u8);

impl ConceptId {
    pub const AGE: ConceptId = ConceptId(0);
    pub const SEX: ConceptId = ConceptId(1);
    pub const HEIGHT: ConceptId = ConceptId(2);
    pub const WEIGHT: ConceptId = ConceptId(3);
    pub const CREA: ConceptId = ConceptId(23);
    pub const URINE: ConceptId = ConceptId(51);
    pub const SOFA: ConceptId = ConceptId(52);
    pub const ANTIBIOTIC: ConceptId = ConceptId(53);
    pub const CULTURE: ConceptId = ConceptId(54);

    /// Looks up a concept by its short name.
    pub fn from_name(name: &str) -> Option<Self> {
        if let Some(i) = CANONICAL.iter().position(|c| c.id == name) {
            return Some(ConceptId(i as u8));
        }
        AUXILIARY
            .iter()
            .position(|(id, _)| *id == name)
            .map(|i| ConceptId((N_CONCEPTS + i) as u8))
    }

    pub fn name(self) -> &'static str {
        let i = self.0 as usize;
        if i < N_CONCEPTS {
            CANONICAL[i].id
        } else {
            AUXILIARY[i - N_CONCEPTS].0
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn kind(self) -> ConceptKind {
        let i = self.0 as usize;
        if i < N_CONCEPTS {
            CANONICAL[i].kind
        } else {
            ConceptKind::Auxiliary
        }
    }

    /// True for the 48 time-varying model inputs.
    pub fn is_dynamic(self) -> bool {
        (N_STATIC..N_CONCEPTS).contains(&(self.0 as usize))
    }

    /// Position among the time-varying features, if this is one.
    pub fn dynamic_index(self) -> Option<usize> {
        self.is_dynamic().then(|| self.0 as usize - N_STATIC)
    }

    pub fn from_dynamic_index(j: usize) -> Self {
        assert!(j < N_DYNAMIC);
        ConceptId((N_STATIC + j) as u8)
    }

    pub fn all() -> impl Iterator<Item = ConceptId> {
        (0..(N_CONCEPTS + N_AUXILIARY) as u8).map(ConceptId)
    }

    pub fn dynamic() -> impl Iterator<Item = ConceptId> {
        (N_STATIC as u8..N_CONCEPTS as u8).map(ConceptId)
    }
}

impl fmt::Debug for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One catalogue row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptEntry {
    pub id: String,
    pub kind: ConceptKind,
    pub unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl ConceptEntry {
    pub fn plausible_range(&self) -> Option<(f64, f64)> {
        match (self.min, self.max) {
            (None, None) => None,
            (lo, hi) => Some((lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY))),
        }
    }
}

/// The 52-entry model input catalogue with editable units and plausibility bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptCatalog {
    entries: Vec<ConceptEntry>,
}

impl Default for ConceptCatalog {
    fn default() -> Self {
        let entries = CANONICAL
            .iter()
            .map(|c| ConceptEntry {
                id: c.id.to_string(),
                kind: c.kind,
                unit: c.unit.to_string(),
                min: c.range.map(|r| r.0),
                max: c.range.map(|r| r.1),
            })
            .collect();
        ConceptCatalog { entries }
    }
}

impl ConceptCatalog {
    /// Builds a catalogue from user-supplied rows, in any order.
    ///
    /// The rows must name exactly the 52 canonical concepts, once each, with
    /// their canonical kind.
    pub fn from_entries(rows: Vec<ConceptEntry>) -> Result<Self> {
        if rows.len() != N_CONCEPTS {
            return Err(Error::Catalog(alloc::format!(
                "expected {N_CONCEPTS} concepts, found {}",
                rows.len()
            )));
        }
        let mut slots: Vec<Option<ConceptEntry>> = (0..N_CONCEPTS).map(|_| None).collect();
        for row in rows {
            let id = ConceptId::from_name(&row.id)
                .filter(|c| c.index() < N_CONCEPTS)
                .ok_or_else(|| Error::Catalog(alloc::format!("unknown concept `{}`", row.id)))?;
            if row.kind != id.kind() {
                return Err(Error::Catalog(alloc::format!(
                    "concept `{}` has kind {}, expected {}",
                    row.id,
                    row.kind.as_str(),
                    id.kind().as_str()
                )));
            }
            if let (Some(lo), Some(hi)) = (row.min, row.max) {
                if !(lo <= hi) {
                    return Err(Error::Catalog(alloc::format!("concept `{}` has min > max", row.id)));
                }
            }
            let slot = &mut slots[id.index()];
            if slot.is_some() {
                return Err(Error::Catalog(alloc::format!("duplicate concept `{}`", row.id)));
            }
            *slot = Some(row);
        }
        Ok(ConceptCatalog { entries: slots.into_iter().map(|s| s.expect("all slots filled")).collect() })
    }

    pub fn entries(&self) -> &[ConceptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Plausible range for a catalogue concept; auxiliary concepts have none.
    pub fn range(&self, id: ConceptId) -> Option<(f64, f64)> {
        self.entries.get(id.index()).and_then(ConceptEntry::plausible_range)
    }

    pub fn entry(&self, id: ConceptId) -> Option<&ConceptEntry> {
        self.entries.get(id.index())
    }

    /// Resolves a concept name, accepting catalogue and auxiliary ids.
    pub fn resolve(&self, name: &str) -> Option<ConceptId> {
        ConceptId::from_name(name)
    }
}
