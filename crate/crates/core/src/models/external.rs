use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Predictions produced outside this crate, aligned to requested ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalPredictions {
    pub primary: Vec<f64>,
    pub secondary: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct Row {
    segment_id: String,
    prediction: f64,
    #[serde(default)]
    prediction2: Option<f64>,
}

/// Reads `segment_id,prediction[,prediction2]` rows and orders them like
/// `ids`. Duplicate or missing ids are errors.
pub fn load_external_predictions(path: &Path, ids: &[String]) -> Result<ExternalPredictions> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Schema(format!("{}: {other:?}", path.display())),
        })?;
    let mut rows: HashMap<String, Row> = HashMap::new();
    let mut duplicates = Vec::new();
    for rec in reader.deserialize::<Row>() {
        let row = rec?;
        if !row.prediction.is_finite() || row.prediction2.is_some_and(|v| !v.is_finite()) {
            return Err(Error::Schema(format!("non-finite prediction for {}", row.segment_id)));
        }
        if rows.contains_key(&row.segment_id) {
            duplicates.push(row.segment_id.clone());
        }
        rows.insert(row.segment_id.clone(), row);
    }
    if !duplicates.is_empty() {
        duplicates.sort();
        duplicates.dedup();
        return Err(Error::DuplicateIds(duplicates));
    }
    let missing: Vec<String> = ids.iter().filter(|id| !rows.contains_key(*id)).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds(missing));
    }
    let picked: Vec<&Row> = ids.iter().map(|id| &rows[id]).collect();
    let secondary = if picked.iter().all(|r| r.prediction2.is_some()) && !picked.is_empty() {
        Some(picked.iter().map(|r| r.prediction2.unwrap_or(f64::NAN)).collect())
    } else {
        None
    };
    Ok(ExternalPredictions { primary: picked.iter().map(|r| r.prediction).collect(), secondary })
}
