//! Command-line surface. Every subcommand is a thin wrapper around one
//! library operation; all logic lives in the `skelql` crate.
//!
//! Exit codes: 0 success, 2 parse failure, 3 constraint failure, 4 I/O
//! failure.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use skelql::corpus::{corpus_stats, load_dataset, load_lcquad_file, Split, StructureStats};
use skelql::decode::{
    stage_c_vocabulary, stage_s_vocabulary, train_ngram, two_stage, DecodeError, Scorer,
    SubgraphMode, TwoStageConfig, TwoStageError, TwoStageOutcome, UniformScorer,
};
use skelql::grammar::{classify_structure, validate_structure_text, StructureValidation};
use skelql::kg::{question_terms, retrieve_subgraph, KgError, KgStore, RetrievalParams};
use skelql::ontology::{build_prompt, verbalize, OntologyError, OntologySnapshot};
use skelql::scaffold::{
    check_consistency, decompose, merge, ContentAssignment, ScaffoldError, StructureTemplate,
};
use skelql::sparql::{canonicalize, PrefixLoadError, PrefixTable, SparqlError};
use skelql::Stage;

const NGRAM_ALPHA: f64 = 0.1;

#[derive(Debug)]
enum CliError {
    Parse(String),
    Constraint(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Constraint(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(m) | CliError::Constraint(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<SparqlError> for CliError {
    fn from(e: SparqlError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<ScaffoldError> for CliError {
    fn from(e: ScaffoldError) -> Self {
        match e {
            ScaffoldError::TagMismatch { .. }
            | ScaffoldError::ArityMismatch { .. }
            | ScaffoldError::Merge(_) => CliError::Constraint(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

impl From<OntologyError> for CliError {
    fn from(e: OntologyError) -> Self {
        match e {
            OntologyError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

impl From<PrefixLoadError> for CliError {
    fn from(e: PrefixLoadError) -> Self {
        match e {
            PrefixLoadError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

impl From<KgError> for CliError {
    fn from(e: KgError) -> Self {
        match e {
            KgError::Io(_) => CliError::Io(e.to_string()),
            KgError::Parse { .. } => CliError::Parse(e.to_string()),
        }
    }
}

impl From<skelql::corpus::CorpusError> for CliError {
    fn from(e: skelql::corpus::CorpusError) -> Self {
        match e {
            skelql::corpus::CorpusError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

impl From<DecodeError> for CliError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::AllBeamsDead { .. } => CliError::Constraint(e.to_string()),
            DecodeError::InvalidConfig(_) => CliError::Parse(e.to_string()),
        }
    }
}

impl From<TwoStageError> for CliError {
    fn from(e: TwoStageError) -> Self {
        match e {
            TwoStageError::StructureStage(inner) | TwoStageError::ContentStage(inner) => {
                inner.into()
            }
            TwoStageError::NoStructure | TwoStageError::NoContent => {
                CliError::Constraint(e.to_string())
            }
            TwoStageError::Scaffold(inner) => inner.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StageArg {
    S,
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScorerKind {
    Uniform,
    Ngram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SubgraphModeArg {
    Hard,
    Bonus,
}

#[derive(Parser)]
#[command(name = "skelql", version, about = "Two-stage SPARQL scaffolding toolkit")]
struct Cli {
    /// Output format for structured results
    #[arg(long, value_enum, default_value_t = OutputFormat::Text, global = true)]
    format: OutputFormat,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Canonicalize a query: prologue removal, IRI compaction, variable
    /// renaming, whitespace normalization
    Preprocess {
        query: String,
        #[arg(long)]
        prefixes: Option<PathBuf>,
        /// Ontology used for placeholder classification during --check
        #[arg(long)]
        ontology: Option<PathBuf>,
        /// Also verify the decompose/merge round trip
        #[arg(long)]
        check: bool,
    },
    /// Split a query into its structure and content assignment
    Decompose {
        query: String,
        #[arg(long)]
        prefixes: Option<PathBuf>,
        #[arg(long)]
        ontology: Option<PathBuf>,
    },
    /// Reassemble a query from a structure and a content assignment
    Merge {
        #[arg(long)]
        structure: String,
        #[arg(long)]
        content: String,
    },
    /// Check a structure against the placeholder grammar
    ValidateStructure { structure: String },
    /// Render an ontology snapshot as its prompt text
    VerbalizeOntology {
        #[arg(long)]
        ontology: PathBuf,
    },
    /// Assemble the prompt for one stage
    BuildPrompt {
        #[arg(long)]
        question: String,
        #[arg(long)]
        ontology: PathBuf,
        #[arg(long, value_enum, default_value_t = StageArg::S)]
        stage: StageArg,
        /// Structure text, required for stage c
        #[arg(long)]
        structure: Option<String>,
    },
    /// Run the full two-stage decode: structure, then content, then merge
    Decode {
        #[arg(long)]
        question: String,
        /// Ontology whose labels form the content vocabulary
        #[arg(long)]
        ontology: PathBuf,
        #[arg(long)]
        prefixes: Option<PathBuf>,
        /// Dataset used to train n-gram scorers (required with --scorer ngram)
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ScorerKind::Uniform)]
        scorer: ScorerKind,
        #[arg(long, default_value_t = 2)]
        ngram_order: usize,
        #[arg(long, default_value_t = 4)]
        beam: usize,
        /// Token budget for the structure stage (end marker excluded)
        #[arg(long, default_value_t = 32)]
        max_len: usize,
        /// N-Triples store for subgraph-constrained content decoding
        #[arg(long)]
        kg: Option<PathBuf>,
        /// Topic entity to expand from (repeatable)
        #[arg(long)]
        topic: Vec<String>,
        #[arg(long, value_enum, default_value_t = SubgraphModeArg::Hard)]
        subgraph_mode: SubgraphModeArg,
        /// Score penalty for relations outside the subgraph in bonus mode
        #[arg(long, default_value_t = 1.0)]
        bonus: f64,
        #[arg(long, default_value_t = 20)]
        topk: usize,
        #[arg(long, default_value_t = 1e-5)]
        min_score: f64,
        #[arg(long, default_value_t = 2)]
        max_hops: usize,
    },
    /// Retrieve top-K relation paths from topic entities
    Subgraph {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long, required = true)]
        topic: Vec<String>,
        #[arg(long)]
        question: String,
        #[arg(long, default_value_t = 20)]
        topk: usize,
        #[arg(long, default_value_t = 1e-5)]
        min_score: f64,
        #[arg(long, default_value_t = 2)]
        max_hops: usize,
    },
    /// Structure statistics over a dataset
    Stats {
        /// Dataset in the internal record format
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// LC-QuAD-1.0-style file loaded as the train split (repeatable)
        #[arg(long)]
        lcquad_train: Vec<PathBuf>,
        /// LC-QuAD-1.0-style file loaded as the test split (repeatable)
        #[arg(long)]
        lcquad_test: Vec<PathBuf>,
        #[arg(long)]
        prefixes: Option<PathBuf>,
        #[arg(long)]
        ontology: Option<PathBuf>,
    },
}

fn load_prefixes(path: Option<&Path>) -> Result<PrefixTable, CliError> {
    match path {
        Some(p) => Ok(PrefixTable::load(p)?),
        None => Ok(PrefixTable::new()),
    }
}

fn load_ontology(path: Option<&Path>) -> Result<Option<OntologySnapshot>, CliError> {
    match path {
        Some(p) => Ok(Some(OntologySnapshot::load(p)?)),
        None => Ok(None),
    }
}

fn emit(format: OutputFormat, text: &str, json: serde_json::Value) {
    use std::io::Write;
    let line = match format {
        OutputFormat::Text => text.to_string(),
        OutputFormat::Json => json.to_string(),
    };
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = writeln!(stdout, "{line}") {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: cannot write output: {e}");
        std::process::exit(4);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.format, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(format: OutputFormat, command: Command) -> Result<(), CliError> {
    match command {
        Command::Preprocess {
            query,
            prefixes,
            ontology,
            check,
        } => {
            let table = load_prefixes(prefixes.as_deref())?;
            let snapshot = load_ontology(ontology.as_deref())?;
            let canonical = canonicalize(&query, &table)?;
            for warning in &canonical.warnings {
                eprintln!("warning: {warning}");
            }
            if check {
                let report = check_consistency(&canonical, snapshot.as_ref());
                emit(
                    format,
                    &format!("{}\n{report}", canonical.text),
                    serde_json::json!({
                        "text": canonical.text,
                        "consistent": report.is_consistent(),
                        "report": report.to_string(),
                    }),
                );
                if !report.is_consistent() {
                    return Err(CliError::Constraint(report.to_string()));
                }
            } else {
                emit(
                    format,
                    &canonical.text,
                    serde_json::json!({
                        "text": canonical.text,
                        "var_map": canonical.var_map,
                        "warnings": canonical.warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
                    }),
                );
            }
            Ok(())
        }
        Command::Decompose {
            query,
            prefixes,
            ontology,
        } => {
            let table = load_prefixes(prefixes.as_deref())?;
            let snapshot = load_ontology(ontology.as_deref())?;
            let canonical = canonicalize(&query, &table)?;
            let decomposition = decompose(&canonical, snapshot.as_ref());
            for warning in &decomposition.warnings {
                eprintln!("warning: {warning}");
            }
            emit(
                format,
                &format!(
                    "structure: {}\ncontent: {}",
                    decomposition.structure, decomposition.content
                ),
                serde_json::json!({
                    "structure": decomposition.structure.to_string(),
                    "content": decomposition.content.to_string(),
                    "warnings": decomposition.warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
                }),
            );
            Ok(())
        }
        Command::Merge { structure, content } => {
            let structure: StructureTemplate = structure.parse()?;
            let content: ContentAssignment = content.parse()?;
            let query = merge(&structure, &content)?;
            emit(
                format,
                &query.text,
                serde_json::json!({ "query": query.text }),
            );
            Ok(())
        }
        Command::ValidateStructure { structure } => {
            let validation = validate_structure_text(&structure)?;
            match &validation {
                StructureValidation::Valid => {
                    let class = classify_structure(&structure.parse()?);
                    emit(
                        format,
                        &format!("valid ({class})"),
                        serde_json::json!({ "valid": true, "class": class.to_string() }),
                    );
                    Ok(())
                }
                StructureValidation::Invalid { position, expected } => {
                    let expected: Vec<&str> =
                        expected.iter().map(|t| t.as_str()).collect();
                    emit(
                        format,
                        &validation.to_string(),
                        serde_json::json!({
                            "valid": false,
                            "position": position,
                            "expected": expected,
                        }),
                    );
                    Err(CliError::Constraint(validation.to_string()))
                }
            }
        }
        Command::VerbalizeOntology { ontology } => {
            let snapshot = OntologySnapshot::load(&ontology)?;
            let text = verbalize(&snapshot);
            emit(format, &text, serde_json::json!({ "text": text }));
            Ok(())
        }
        Command::BuildPrompt {
            question,
            ontology,
            stage,
            structure,
        } => {
            let snapshot = OntologySnapshot::load(&ontology)?;
            let structure: Option<StructureTemplate> = match structure {
                Some(s) => Some(s.parse()?),
                None => None,
            };
            let stage = match stage {
                StageArg::S => Stage::Structure,
                StageArg::C => Stage::Content,
            };
            let prompt = build_prompt(stage, &question, &snapshot, structure.as_ref())?;
            let json = serde_json::to_value(&prompt).expect("prompt serializes");
            emit(format, &prompt.text, json);
            Ok(())
        }
        Command::Decode {
            question,
            ontology,
            prefixes,
            corpus,
            scorer,
            ngram_order,
            beam,
            max_len,
            kg,
            topic,
            subgraph_mode,
            bonus,
            topk,
            min_score,
            max_hops,
        } => {
            let snapshot = OntologySnapshot::load(&ontology)?;
            let table = load_prefixes(prefixes.as_deref())?;

            let allowed_relations = match kg {
                Some(kg_path) => {
                    if topic.is_empty() {
                        return Err(CliError::Parse(
                            "--kg requires at least one --topic".into(),
                        ));
                    }
                    let store = KgStore::load_ntriples(&kg_path)?;
                    let params = RetrievalParams {
                        top_k: topk,
                        min_score,
                        max_hops,
                    };
                    let terms = question_terms(&question);
                    let subgraph = retrieve_subgraph(&store, &topic, &terms, &params);
                    for warning in &subgraph.warnings {
                        eprintln!("warning: {warning}");
                    }
                    Some(subgraph.relations)
                }
                None => None,
            };
            let mode = match subgraph_mode {
                SubgraphModeArg::Hard => SubgraphMode::Hard,
                SubgraphModeArg::Bonus => SubgraphMode::Bonus(bonus),
            };

            let outcome = match scorer {
                ScorerKind::Uniform => {
                    let structure_scorer = UniformScorer::new(stage_s_vocabulary())?;
                    let content_scorer =
                        UniformScorer::new(stage_c_vocabulary(&snapshot, []))?;
                    run_two_stage(
                        &structure_scorer,
                        &content_scorer,
                        beam,
                        max_len,
                        allowed_relations,
                        mode,
                    )?
                }
                ScorerKind::Ngram => {
                    let corpus_path = corpus.ok_or_else(|| {
                        CliError::Parse("--scorer ngram requires --corpus".into())
                    })?;
                    let records = load_dataset(&corpus_path)?;
                    let mut structures: Vec<Vec<String>> = Vec::new();
                    let mut contents: Vec<Vec<String>> = Vec::new();
                    for record in records.iter().filter(|r| r.split == Split::Train) {
                        let canonical = match canonicalize(&record.sparql, &table) {
                            Ok(c) => c,
                            Err(e) => {
                                eprintln!("warning: skipping training record: {e}");
                                continue;
                            }
                        };
                        let d = decompose(&canonical, Some(&snapshot));
                        structures.push(
                            d.structure.tokens().iter().map(|t| t.as_str().to_string()).collect(),
                        );
                        contents.push(
                            d.content
                                .pairs()
                                .iter()
                                .flat_map(|(tag, value)| {
                                    [tag.as_str().to_string(), value.clone()]
                                })
                                .collect(),
                        );
                    }
                    let structure_scorer = train_ngram(&structures, ngram_order, NGRAM_ALPHA)?;
                    let content_scorer = train_ngram(&contents, ngram_order, NGRAM_ALPHA)?;
                    run_two_stage(
                        &structure_scorer,
                        &content_scorer,
                        beam,
                        max_len,
                        allowed_relations,
                        mode,
                    )?
                }
            };

            let beams = |items: &[skelql::decode::DecodedSequence]| {
                serde_json::to_value(items).expect("beams serialize")
            };
            emit(
                format,
                &outcome.query.text,
                serde_json::json!({
                    "structure": outcome.structure.to_string(),
                    "content": outcome.content.to_string(),
                    "query": outcome.query.text,
                    "structure_beams": beams(&outcome.structure_beams),
                    "content_beams": beams(&outcome.content_beams),
                }),
            );
            Ok(())
        }
        Command::Subgraph {
            kg,
            topic,
            question,
            topk,
            min_score,
            max_hops,
        } => {
            let store = KgStore::load_ntriples(&kg)?;
            let params = RetrievalParams {
                top_k: topk,
                min_score,
                max_hops,
            };
            let terms = question_terms(&question);
            let subgraph = retrieve_subgraph(&store, &topic, &terms, &params);
            for warning in &subgraph.warnings {
                eprintln!("warning: {warning}");
            }
            let mut text = String::new();
            for path in &subgraph.paths {
                text.push_str(&format!(
                    "{:.6} {} -> {}\n",
                    path.score,
                    path.relations.join(" "),
                    path.terminal
                ));
            }
            text.push_str(&format!(
                "relations: {}",
                subgraph.relations.iter().cloned().collect::<Vec<_>>().join(" ")
            ));
            let json = serde_json::to_value(&subgraph).expect("subgraph serializes");
            emit(format, &text, json);
            Ok(())
        }
        Command::Stats {
            corpus,
            lcquad_train,
            lcquad_test,
            prefixes,
            ontology,
        } => {
            if corpus.is_none() && lcquad_train.is_empty() && lcquad_test.is_empty() {
                return Err(CliError::Parse(
                    "stats needs --corpus, --lcquad-train, or --lcquad-test".into(),
                ));
            }
            let table = load_prefixes(prefixes.as_deref())?;
            let snapshot = load_ontology(ontology.as_deref())?;
            let mut records = Vec::new();
            if let Some(path) = corpus {
                records.extend(load_dataset(&path)?);
            }
            for path in &lcquad_train {
                records.extend(load_lcquad_file(path, Split::Train)?);
            }
            for path in &lcquad_test {
                records.extend(load_lcquad_file(path, Split::Test)?);
            }
            let stats = corpus_stats(&records, &table, snapshot.as_ref());
            for failure in &stats.failures {
                eprintln!(
                    "warning: record {} ({}): {}",
                    failure.index, failure.split, failure.message
                );
            }
            emit(
                format,
                &stats_text(&stats),
                serde_json::to_value(&stats).expect("stats serialize"),
            );
            Ok(())
        }
    }
}

fn run_two_stage(
    structure_scorer: &dyn Scorer,
    content_scorer: &dyn Scorer,
    beam: usize,
    max_len: usize,
    allowed_relations: Option<BTreeSet<String>>,
    mode: SubgraphMode,
) -> Result<TwoStageOutcome, CliError> {
    Ok(two_stage(&TwoStageConfig {
        structure_scorer,
        content_scorer,
        beam_size: beam,
        structure_max_length: max_len,
        allowed_relations,
        subgraph_mode: mode,
    })?)
}

fn stats_text(stats: &StructureStats) -> String {
    let by_split = |map: &std::collections::BTreeMap<Split, usize>| {
        Split::ALL
            .iter()
            .map(|s| format!("{s}={}", map.get(s).copied().unwrap_or(0)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    format!(
        "records: {}\nunique structures: {}\nunseen test structures: {}\nunseen test questions: {}\nfailures: {}",
        by_split(&stats.records),
        by_split(&stats.unique_structures),
        stats.unseen_structures,
        stats.unseen_questions,
        stats.failures.len()
    )
}
