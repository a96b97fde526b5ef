//! Concept catalogue as TOML: one `[[concept]]` table per entry.

use std::path::Path;

use icudg_core::{ConceptCatalog, ConceptEntry};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    concept: Vec<ConceptEntry>,
}

pub fn read_catalog(path: &Path) -> AppResult<ConceptCatalog> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_catalog(&text).map_err(|(field, message)| AppError::config(format!("{}:{field}", path.display()), message))
}

/// Parses catalogue TOML; errors carry the offending field path.
pub fn parse_catalog(text: &str) -> Result<ConceptCatalog, (String, String)> {
    let de = toml::Deserializer::new(text);
    let file: CatalogFile =
        serde_path_to_error::deserialize(de).map_err(|e| (e.path().to_string(), e.inner().message().to_string()))?;
    ConceptCatalog::from_entries(file.concept).map_err(|e| ("concept".to_string(), e.to_string()))
}

pub fn catalog_to_toml(catalog: &ConceptCatalog) -> String {
    toml::to_string(&CatalogFile { concept: catalog.entries().to_vec() }).expect("catalogue entries serialise")
}

pub fn write_catalog(path: &Path, catalog: &ConceptCatalog) -> AppResult<()> {
    std::fs::write(path, catalog_to_toml(catalog)).map_err(|e| AppError::io(path, e))
}
