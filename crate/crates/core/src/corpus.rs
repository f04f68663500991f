//! Dataset records and the structure-statistics report.
//!
//! One internal record shape (question, query, split); adapters for other
//! file layouts convert at the edge. Statistics count unique query
//! structures per split and how much of the test set falls outside the
//! structures seen in training.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::OntologySnapshot;
use crate::scaffold::decompose;
use crate::sparql::{canonicalize, PrefixTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::UnknownSplit {
                split: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub question: String,
    pub sparql: String,
    pub split: Split,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed dataset: {0}")]
    Format(#[from] serde_json::Error),
    #[error("record {index}: empty {field}")]
    EmptyField { index: usize, field: &'static str },
    #[error("unknown split {split:?} (expected train, valid, or test)")]
    UnknownSplit { split: String },
}

fn validate(records: Vec<DatasetRecord>) -> Result<Vec<DatasetRecord>, CorpusError> {
    for (index, record) in records.iter().enumerate() {
        if record.question.trim().is_empty() {
            return Err(CorpusError::EmptyField {
                index,
                field: "question",
            });
        }
        if record.sparql.trim().is_empty() {
            return Err(CorpusError::EmptyField {
                index,
                field: "sparql",
            });
        }
    }
    Ok(records)
}

/// Parse a JSON array of `{"question", "sparql", "split"}` records.
pub fn parse_dataset(text: &str) -> Result<Vec<DatasetRecord>, CorpusError> {
    validate(serde_json::from_str(text)?)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>, CorpusError> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Deserialize)]
struct LcQuadEntry {
    corrected_question: String,
    sparql_query: String,
}

/// Adapter for LC-QuAD-1.0-style files: a JSON array of objects carrying
/// `corrected_question` and `sparql_query` (other keys ignored). The file
/// does not name its split, so the caller assigns one.
pub fn parse_lcquad(text: &str, split: Split) -> Result<Vec<DatasetRecord>, CorpusError> {
    let entries: Vec<LcQuadEntry> = serde_json::from_str(text)?;
    validate(
        entries
            .into_iter()
            .map(|e| DatasetRecord {
                question: e.corrected_question,
                sparql: e.sparql_query,
                split,
            })
            .collect(),
    )
}

pub fn load_lcquad_file(
    path: impl AsRef<Path>,
    split: Split,
) -> Result<Vec<DatasetRecord>, CorpusError> {
    parse_lcquad(&std::fs::read_to_string(path)?, split)
}

/// A record the statistics pass had to skip, with its position in the input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsFailure {
    pub index: usize,
    pub split: Split,
    pub message: String,
}

/// Structure statistics over a dataset: how many distinct query structures
/// each split contains, and how much of the test set uses structures never
/// seen in training (`unseen_structures` distinct shapes, spread over
/// `unseen_questions` questions).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureStats {
    pub records: BTreeMap<Split, usize>,
    pub unique_structures: BTreeMap<Split, usize>,
    pub unseen_structures: usize,
    pub unseen_questions: usize,
    pub failures: Vec<StatsFailure>,
}

/// Canonicalize and decompose every record, then count structures per split.
/// Records that fail to canonicalize are reported in `failures` and excluded
/// from the counts; they never abort the pass.
pub fn corpus_stats(
    records: &[DatasetRecord],
    prefixes: &PrefixTable,
    ontology: Option<&OntologySnapshot>,
) -> StructureStats {
    let mut record_counts: BTreeMap<Split, usize> = Split::ALL.into_iter().map(|s| (s, 0)).collect();
    let mut structures: BTreeMap<Split, BTreeSet<String>> =
        Split::ALL.into_iter().map(|s| (s, BTreeSet::new())).collect();
    let mut failures = Vec::new();
    let mut unseen_questions = 0usize;

    let mut per_record: Vec<Option<String>> = Vec::with_capacity(records.len());
    for (index, record) in records.iter().enumerate() {
        *record_counts.get_mut(&record.split).expect("split preseeded") += 1;
        match canonicalize(&record.sparql, prefixes) {
            Ok(query) => {
                let structure = decompose(&query, ontology).structure.to_string();
                structures
                    .get_mut(&record.split)
                    .expect("split preseeded")
                    .insert(structure.clone());
                per_record.push(Some(structure));
            }
            Err(error) => {
                failures.push(StatsFailure {
                    index,
                    split: record.split,
                    message: error.to_string(),
                });
                per_record.push(None);
            }
        }
    }

    let train = &structures[&Split::Train];
    let unseen_structures = structures[&Split::Test].difference(train).count();
    for (record, structure) in records.iter().zip(&per_record) {
        if record.split == Split::Test {
            if let Some(structure) = structure {
                if !train.contains(structure) {
                    unseen_questions += 1;
                }
            }
        }
    }

    StructureStats {
        records: record_counts,
        unique_structures: structures.into_iter().map(|(s, set)| (s, set.len())).collect(),
        unseen_structures,
        unseen_questions,
        failures,
    }
}
