//! Canonical JSON population snapshots (`format_version` 1).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Population, Provenance, Respondent};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("malformed population document: {0}")]
    MalformedDocument(String),
}

#[derive(Serialize)]
struct DocumentRef<'a> {
    format_version: u32,
    provenance: &'a Provenance,
    respondents: &'a [Respondent],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format_version: u32,
    provenance: Provenance,
    respondents: Vec<Respondent>,
}

/// Serialize a population. Output is byte-identical for equal populations.
pub fn write_canonical_json(pop: &Population) -> Vec<u8> {
    let doc = DocumentRef {
        format_version: FORMAT_VERSION,
        provenance: pop.provenance(),
        respondents: pop.respondents(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("population is always serializable");
    out.push(b'\n');
    out
}

pub fn read_canonical_json(bytes: &[u8]) -> Result<Population, SnapshotError> {
    let doc: Document =
        serde_json::from_slice(bytes).map_err(|e| SnapshotError::MalformedDocument(e.to_string()))?;
    if doc.format_version != FORMAT_VERSION {
        return Err(SnapshotError::MalformedDocument(format!(
            "unsupported format_version {}",
            doc.format_version
        )));
    }
    Population::new(doc.respondents, doc.provenance).map_err(|e| SnapshotError::MalformedDocument(e.to_string()))
}
