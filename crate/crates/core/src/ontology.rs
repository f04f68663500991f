//! Ontology snapshots, their verbalization, and prompt assembly for the two
//! generation stages.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scaffold::StructureTemplate;
use crate::Stage;

/// Task prefix shared by both prompt templates.
pub const PROMPT_PREFIX: &str = "translate the question into sparql according to the ontology:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OntologyList {
    Concepts,
    Relations,
    Entities,
}

impl fmt::Display for OntologyList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OntologyList::Concepts => write!(f, "concepts"),
            OntologyList::Relations => write!(f, "relations"),
            OntologyList::Entities => write!(f, "entities"),
        }
    }
}

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("cannot read ontology: {0}")]
    Io(#[from] std::io::Error),
    #[error("ontology is not a JSON object with concepts/relations/entities lists: {0}")]
    Format(#[from] serde_json::Error),
    #[error("label {label:?} appears in both {first} and {second}")]
    DuplicateLabel {
        label: String,
        first: OntologyList,
        second: OntologyList,
    },
    #[error("stage C prompts require a predicted structure")]
    MissingStructure,
    #[error("not a verbalized ontology: {0}")]
    Verbalization(String),
}

/// An ordered, duplicate-free snapshot of the ontology terms available to a
/// query: concept (class) labels, relation labels, and entity labels. The
/// three lists are pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OntologySnapshot {
    concepts: Vec<String>,
    relations: Vec<String>,
    entities: Vec<String>,
}

#[derive(Deserialize)]
struct RawSnapshot {
    #[serde(default)]
    concepts: Vec<String>,
    #[serde(default)]
    relations: Vec<String>,
    #[serde(default)]
    entities: Vec<String>,
}

impl OntologySnapshot {
    pub fn new(
        concepts: Vec<String>,
        relations: Vec<String>,
        entities: Vec<String>,
    ) -> Result<Self, OntologyError> {
        let lists = [
            (OntologyList::Concepts, &concepts),
            (OntologyList::Relations, &relations),
            (OntologyList::Entities, &entities),
        ];
        for (i, (name, list)) in lists.iter().enumerate() {
            for (j, label) in list.iter().enumerate() {
                if list[..j].contains(label) {
                    return Err(OntologyError::DuplicateLabel {
                        label: label.clone(),
                        first: *name,
                        second: *name,
                    });
                }
                for (other_name, other) in &lists[..i] {
                    if other.contains(label) {
                        return Err(OntologyError::DuplicateLabel {
                            label: label.clone(),
                            first: *other_name,
                            second: *name,
                        });
                    }
                }
            }
        }
        Ok(Self {
            concepts,
            relations,
            entities,
        })
    }

    pub fn empty() -> Self {
        Self {
            concepts: Vec::new(),
            relations: Vec::new(),
            entities: Vec::new(),
        }
    }

    pub fn from_json_str(json: &str) -> Result<Self, OntologyError> {
        let raw: RawSnapshot = serde_json::from_str(json)?;
        Self::new(raw.concepts, raw.relations, raw.entities)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OntologyError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    /// Which list a term surface belongs to, if any. A label matches either
    /// exactly or, when the label carries no prefix of its own, against the
    /// local name of a prefixed term (`foundedBy` matches `dbo:foundedBy`).
    pub fn lookup(&self, surface: &str) -> Option<OntologyList> {
        let local = surface.rsplit([':', '/', '#']).next().unwrap_or(surface);
        let matches = |label: &String| {
            label == surface || (!label.contains(':') && label == local)
        };
        if self.concepts.iter().any(matches) {
            return Some(OntologyList::Concepts);
        }
        if self.relations.iter().any(matches) {
            return Some(OntologyList::Relations);
        }
        if self.entities.iter().any(matches) {
            return Some(OntologyList::Entities);
        }
        None
    }

    /// Every label across the three lists, in list order.
    pub fn all_labels(&self) -> impl Iterator<Item = &str> {
        self.concepts
            .iter()
            .chain(self.relations.iter())
            .chain(self.entities.iter())
            .map(String::as_str)
    }
}

/// Flattens a snapshot into the fixed textual form
/// `ontology: concepts: <...>; relations: <...>; entities: <...>`
/// with `, `-separated labels. Empty lists leave an empty section.
pub fn verbalize(snapshot: &OntologySnapshot) -> String {
    format!(
        "ontology: concepts: {}; relations: {}; entities: {}",
        snapshot.concepts.join(", "),
        snapshot.relations.join(", "),
        snapshot.entities.join(", ")
    )
}

/// Inverse of [`verbalize`] for labels that contain no `;` or `,`.
pub fn parse_verbalization(text: &str) -> Result<OntologySnapshot, OntologyError> {
    let bad = || OntologyError::Verbalization(text.to_string());
    let rest = text.strip_prefix("ontology: concepts: ").ok_or_else(bad)?;
    let (concepts, rest) = rest.split_once("; relations: ").ok_or_else(bad)?;
    let (relations, entities) = rest.split_once("; entities: ").ok_or_else(bad)?;
    let split = |s: &str| -> Vec<String> {
        if s.is_empty() {
            Vec::new()
        } else {
            s.split(", ").map(str::to_string).collect()
        }
    };
    OntologySnapshot::new(split(concepts), split(relations), split(entities))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotName {
    #[serde(rename = "v_B")]
    Begin,
    #[serde(rename = "v_Q")]
    Question,
    #[serde(rename = "v_G")]
    Ontology,
    #[serde(rename = "v_E")]
    End,
}

/// One prompt segment: either a named learnable slot or a fixed text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Segment {
    Slot { slot: SlotName },
    Text { text: String },
}

/// Slot/text interleaving of a hybrid prompt: four slots around three texts,
/// in the order begin, task text, question slot, question, ontology slot,
/// ontology text, end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptLayout {
    pub stage: Stage,
    pub segments: Vec<Segment>,
}

/// A rendered prompt plus its slot/text layout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prompt {
    pub text: String,
    pub layout: PromptLayout,
}

/// Assembles the prompt for a stage. Stage S prompts read
/// `<prefix> <question> | <ontology>`; stage C prompts additionally embed the
/// predicted structure after the prefix and before the first separator.
pub fn build_prompt(
    stage: Stage,
    question: &str,
    snapshot: &OntologySnapshot,
    structure: Option<&StructureTemplate>,
) -> Result<Prompt, OntologyError> {
    let ontology_text = verbalize(snapshot);
    let task_text = match stage {
        Stage::Structure => PROMPT_PREFIX.to_string(),
        Stage::Content => {
            let structure = structure.ok_or(OntologyError::MissingStructure)?;
            format!("{PROMPT_PREFIX} {structure}")
        }
    };
    // Stage S has a single separator between question and ontology; stage C
    // separates all three fields.
    let text = match stage {
        Stage::Structure => format!("{task_text} {question} | {ontology_text}"),
        Stage::Content => format!("{task_text} | {question} | {ontology_text}"),
    };
    let layout = PromptLayout {
        stage,
        segments: vec![
            Segment::Slot {
                slot: SlotName::Begin,
            },
            Segment::Text { text: task_text },
            Segment::Slot {
                slot: SlotName::Question,
            },
            Segment::Text {
                text: question.to_string(),
            },
            Segment::Slot {
                slot: SlotName::Ontology,
            },
            Segment::Text {
                text: ontology_text,
            },
            Segment::Slot {
                slot: SlotName::End,
            },
        ],
    };
    Ok(Prompt { text, layout })
}
