//! The four conversion pipelines and the run directory they produce.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Condvar, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backend::Translator;
use super::prompt::{build_prompt, PromptSpec, TemplateId, TemplateSet, NO_HISTORY_MARKER, NO_RETRIEVAL_MARKER};
use crate::chunker::{assemble, chunk_with, Assemble, Chunk, ChunkConfig};
use crate::error::{Error, Result};
use crate::kb::{
    retrieve_strategy_a, retrieve_strategy_b, KnowledgeBase, PairExample, RetrievalResult, StoreKind,
    DEFAULT_MIN_SIMILARITY_A, DEFAULT_MIN_SIMILARITY_B,
};
use crate::lexer::Dialect;
use crate::manifest::fingerprint;
use crate::profile::SourceScript;
use crate::taxonomy::FeatureTaxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Conversion,
    History,
    RagA,
    RagB,
}

impl Pipeline {
    pub const ALL: [Pipeline; 4] = [Pipeline::Conversion, Pipeline::History, Pipeline::RagA, Pipeline::RagB];

    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::Conversion => "conversion",
            Pipeline::History => "history",
            Pipeline::RagA => "rag-a",
            Pipeline::RagB => "rag-b",
        }
    }

    pub fn required_stores(self) -> &'static [StoreKind] {
        match self {
            Pipeline::RagA => &StoreKind::STRATEGY_A,
            Pipeline::RagB => &[StoreKind::PairExamples],
            _ => &[],
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown pipeline `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RagStrategy {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslationConfig {
    pub chunk: ChunkConfig,
    pub history_budget_bytes: usize,
    /// Neighbours retrieved per store.
    pub k: usize,
    pub min_similarity_a: f64,
    pub min_similarity_b: f64,
    /// Worker threads; 0 uses the available parallelism.
    pub jobs: usize,
    /// Concurrent backend calls; 0 means unlimited.
    pub max_in_flight: usize,
    /// Directory with template overrides (`direct.txt`, ...).
    pub template_dir: Option<PathBuf>,
}

impl Default for TranslationConfig {
    fn default() -> Self {
        TranslationConfig {
            chunk: ChunkConfig::default(),
            history_budget_bytes: 16384,
            k: 3,
            min_similarity_a: DEFAULT_MIN_SIMILARITY_A,
            min_similarity_b: DEFAULT_MIN_SIMILARITY_B,
            jobs: 0,
            max_in_flight: 0,
            template_dir: None,
        }
    }
}

impl TranslationConfig {
    pub fn validate(&self) -> Result<()> {
        self.chunk.validate()?;
        if self.k == 0 {
            return Err(Error::InvalidK);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub id: String,
    pub store: StoreKind,
    pub similarity: f64,
    pub rank: usize,
}

impl From<&RetrievalResult> for Retrieved {
    fn from(r: &RetrievalResult) -> Self {
        Retrieved {
            id: r.entry.id.clone(),
            store: r.entry.store,
            similarity: r.similarity,
            rank: r.rank,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy")]
pub enum RetrievalProvenance {
    A {
        oracle_context: Vec<Retrieved>,
        pg_docs: Vec<Retrieved>,
        sme_rules: Vec<Retrieved>,
    },
    B {
        examples: Vec<Retrieved>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslatedChunk {
    pub source: Chunk,
    pub output_text: String,
    pub prompt: PromptSpec,
    pub retrieval_used: Option<RetrievalProvenance>,
    pub backend_latency_ms: u64,
    pub attempt_count: u32,
}

impl Assemble for TranslatedChunk {
    fn script(&self) -> &str {
        &self.source.script_path
    }
    fn index(&self) -> usize {
        self.source.index
    }
    fn output(&self) -> &str {
        &self.output_text
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FileStatus {
    Converted,
    NotConverted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileResult {
    pub path: String,
    pub status: FileStatus,
    pub output: Option<String>,
    pub cause: Option<String>,
    pub chunks: Vec<TranslatedChunk>,
    /// Chunk indexes in the order their translations completed.
    pub completion_order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationRun {
    pub run_id: String,
    pub pipeline: Pipeline,
    pub backend: String,
    pub config: TranslationConfig,
    pub corpus_fingerprint: String,
    /// One entry per input file, in input order.
    pub files: Vec<FileResult>,
}

impl MigrationRun {
    pub fn not_converted(&self) -> impl Iterator<Item = &FileResult> {
        self.files.iter().filter(|f| f.status == FileStatus::NotConverted)
    }

    pub fn converted(&self) -> impl Iterator<Item = &FileResult> {
        self.files.iter().filter(|f| f.status == FileStatus::Converted)
    }
}

pub fn corpus_fingerprint(scripts: &[SourceScript]) -> String {
    fingerprint(scripts.iter().map(|s| (s.path.as_str(), s.text.as_bytes())))
}

pub fn run_conversion(scripts: &[SourceScript], backend: &dyn Translator, config: &TranslationConfig) -> Result<MigrationRun> {
    run_pipeline(Pipeline::Conversion, scripts, backend, None, config)
}

pub fn run_history(scripts: &[SourceScript], backend: &dyn Translator, config: &TranslationConfig) -> Result<MigrationRun> {
    run_pipeline(Pipeline::History, scripts, backend, None, config)
}

pub fn run_rag(
    scripts: &[SourceScript],
    backend: &dyn Translator,
    kb: &KnowledgeBase,
    strategy: RagStrategy,
    k: usize,
    config: &TranslationConfig,
) -> Result<MigrationRun> {
    let pipeline = match strategy {
        RagStrategy::A => Pipeline::RagA,
        RagStrategy::B => Pipeline::RagB,
    };
    let config = TranslationConfig { k, ..config.clone() };
    run_pipeline(pipeline, scripts, backend, Some(kb), &config)
}

/// Runs `pipeline` over `scripts`. Files are processed concurrently; a
/// file whose chunk exhausts the backend's attempts is recorded as not
/// converted and never affects the other files.
pub fn run_pipeline(
    pipeline: Pipeline,
    scripts: &[SourceScript],
    backend: &dyn Translator,
    kb: Option<&KnowledgeBase>,
    config: &TranslationConfig,
) -> Result<MigrationRun> {
    config.validate()?;
    let required = pipeline.required_stores();
    if !required.is_empty() {
        match kb {
            Some(kb) => kb.require(required)?,
            None => return Err(Error::StoreMissing(required.to_vec())),
        }
    }
    if let Some(bad) = scripts.iter().find(|s| s.dialect != Dialect::Oracle) {
        return Err(Error::DialectMismatch {
            expected: Dialect::Oracle,
            found: bad.dialect,
            path: Some(bad.path.clone()),
        });
    }
    let templates = match &config.template_dir {
        Some(dir) => TemplateSet::load_overrides(dir)?,
        None => TemplateSet::default(),
    };
    let ctx = Ctx {
        pipeline,
        backend,
        kb,
        config,
        templates,
        taxonomy: FeatureTaxonomy::default_for(Dialect::Oracle),
        gate: Gate::new(config.max_in_flight),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if config.jobs > 0 {
        builder = builder.num_threads(config.jobs);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let files = pool.install(|| scripts.par_iter().map(|s| ctx.run_file(s)).collect());

    let corpus_fingerprint = corpus_fingerprint(scripts);
    let config_json = serde_json::to_string(config)?;
    let run_id = fingerprint([
        ("pipeline", pipeline.as_str().as_bytes()),
        ("backend", backend.id().as_bytes()),
        ("config", config_json.as_bytes()),
        ("corpus", corpus_fingerprint.as_bytes()),
    ])[..16]
        .to_string();
    Ok(MigrationRun {
        run_id,
        pipeline,
        backend: backend.id(),
        config: config.clone(),
        corpus_fingerprint,
        files,
    })
}

struct Gate {
    max: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(max: usize) -> Self {
        Gate {
            max,
            used: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn with<T>(&self, f: impl FnOnce() -> T) -> T {
        if self.max == 0 {
            return f();
        }
        {
            let mut used = self.used.lock().expect("gate lock");
            while *used >= self.max {
                used = self.freed.wait(used).expect("gate lock");
            }
            *used += 1;
        }
        let out = f();
        *self.used.lock().expect("gate lock") -= 1;
        self.freed.notify_one();
        out
    }
}

struct Ctx<'a> {
    pipeline: Pipeline,
    backend: &'a dyn Translator,
    kb: Option<&'a KnowledgeBase>,
    config: &'a TranslationConfig,
    templates: TemplateSet,
    taxonomy: FeatureTaxonomy,
    gate: Gate,
}

impl Ctx<'_> {
    fn run_file(&self, script: &SourceScript) -> FileResult {
        let chunks = chunk_with(script, &self.taxonomy, &self.config.chunk);
        let mut done: Vec<TranslatedChunk> = Vec::with_capacity(chunks.len());
        let mut order = Vec::with_capacity(chunks.len());
        let fail = |cause: String, done: Vec<TranslatedChunk>, order: Vec<usize>| FileResult {
            path: script.path.clone(),
            status: FileStatus::NotConverted,
            output: None,
            cause: Some(cause),
            chunks: done,
            completion_order: order,
        };
        for chunk in chunks {
            let index = chunk.index;
            match self.translate_chunk(chunk, &done) {
                Ok(t) => {
                    order.push(index);
                    done.push(t);
                }
                Err(e) => return fail(format!("chunk {index}: {e}"), done, order),
            }
        }
        match assemble(&done) {
            Ok(output) => FileResult {
                path: script.path.clone(),
                status: FileStatus::Converted,
                output: Some(output),
                cause: None,
                chunks: done,
                completion_order: order,
            },
            Err(e) => fail(e.to_string(), done, order),
        }
    }

    fn translate_chunk(&self, chunk: Chunk, previous: &[TranslatedChunk]) -> Result<TranslatedChunk> {
        let mut bindings = BTreeMap::new();
        bindings.insert("CURRENT_CHUNK".to_string(), chunk.text.clone());
        let mut retrieval = None;
        let template = match self.pipeline {
            Pipeline::Conversion => TemplateId::Direct,
            Pipeline::History => {
                let outputs: Vec<&str> = previous.iter().map(|t| t.output_text.as_str()).collect();
                let window = history_window(&outputs, self.config.history_budget_bytes);
                let bound = if window.is_empty() { NO_HISTORY_MARKER.to_string() } else { window };
                bindings.insert("HISTORY".into(), bound);
                TemplateId::History
            }
            Pipeline::RagA => {
                let kb = self.kb.expect("checked before the run");
                let classes: Vec<String> = chunk.features.present_classes().map(str::to_string).collect();
                let t = retrieve_strategy_a(kb, &chunk.text, &classes, self.config.k, self.config.min_similarity_a)?;
                bindings.insert("ORACLE_CONTEXT".into(), format_results(&t.oracle_context));
                bindings.insert("POSTGRES_DOCS".into(), format_results(&t.pg_docs));
                bindings.insert("CONVERTING_RULES".into(), format_results(&t.sme_rules));
                retrieval = Some(RetrievalProvenance::A {
                    oracle_context: t.oracle_context.iter().map(Retrieved::from).collect(),
                    pg_docs: t.pg_docs.iter().map(Retrieved::from).collect(),
                    sme_rules: t.sme_rules.iter().map(Retrieved::from).collect(),
                });
                TemplateId::StrategyA
            }
            Pipeline::RagB => {
                let kb = self.kb.expect("checked before the run");
                let pairs = retrieve_strategy_b(kb, &chunk.text, self.config.k, self.config.min_similarity_b)?;
                bindings.insert("RETRIEVED_EXAMPLES".into(), format_pairs(&pairs));
                retrieval = Some(RetrievalProvenance::B {
                    examples: pairs
                        .iter()
                        .map(|p| Retrieved {
                            id: p.id.clone(),
                            store: StoreKind::PairExamples,
                            similarity: p.similarity,
                            rank: p.rank,
                        })
                        .collect(),
                });
                TemplateId::StrategyB
            }
        };
        let prompt = build_prompt(self.templates.get(template), &bindings)?;

        let started = Instant::now();
        let max = self.backend.max_attempts().max(1);
        let mut attempt = 0;
        let output = loop {
            attempt += 1;
            match self.gate.with(|| self.backend.translate(&prompt, &chunk)) {
                Ok(text) => break text,
                Err(e) if attempt >= max => {
                    return Err(Error::Backend(format!("{attempt} attempt(s) failed, last: {e}")));
                }
                Err(_) => std::thread::sleep(self.backend.backoff(attempt)),
            }
        };
        Ok(TranslatedChunk {
            source: chunk,
            output_text: output,
            prompt,
            retrieval_used: retrieval,
            backend_latency_ms: started.elapsed().as_millis() as u64,
            attempt_count: attempt,
        })
    }
}

/// Joins previous outputs most recent first, separated by newlines, within
/// `budget` bytes. The oldest output that only partly fits keeps its tail.
pub fn history_window(outputs: &[&str], budget: usize) -> String {
    let mut parts: Vec<&str> = Vec::new();
    let mut used = 0;
    for out in outputs.iter().rev() {
        let sep = usize::from(!parts.is_empty());
        if used + sep + out.len() <= budget {
            used += sep + out.len();
            parts.push(out);
            continue;
        }
        let room = budget.saturating_sub(used + sep);
        let mut start = out.len() - room.min(out.len());
        while !out.is_char_boundary(start) {
            start += 1;
        }
        if start < out.len() {
            parts.push(&out[start..]);
        }
        break;
    }
    parts.join("\n")
}

fn format_results(results: &[RetrievalResult]) -> String {
    if results.is_empty() {
        return NO_RETRIEVAL_MARKER.to_string();
    }
    results
        .iter()
        .map(|r| format!("\n[{}] {}", r.rank, r.entry.text))
        .collect()
}

fn format_pairs(pairs: &[PairExample]) -> String {
    if pairs.is_empty() {
        return NO_RETRIEVAL_MARKER.to_string();
    }
    pairs
        .iter()
        .map(|p| format!("Example {}:\nOracle:\n{}\nPostgreSQL:\n{}", p.rank, p.oracle, p.postgres))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// `run.json`: the run without per-chunk detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub pipeline: Pipeline,
    pub backend: String,
    pub config: TranslationConfig,
    pub corpus_fingerprint: String,
    pub files: Vec<FileSummary>,
    pub not_converted: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileSummary {
    pub path: String,
    /// File name under `outputs/` and `sources/`.
    pub name: String,
    pub status: FileStatus,
    pub cause: Option<String>,
    pub chunks: usize,
    pub attempts: u32,
}

#[derive(Serialize)]
struct ProvenanceLine<'a> {
    file: &'a str,
    chunk: usize,
    start: usize,
    end: usize,
    template_id: TemplateId,
    bindings: &'a BTreeMap<String, String>,
    retrieval: &'a Option<RetrievalProvenance>,
    attempt_count: u32,
    completion_seq: usize,
}

#[derive(Serialize)]
struct TimingLine<'a> {
    file: &'a str,
    chunk: usize,
    latency_ms: u64,
}

fn output_names(scripts: &[SourceScript]) -> Result<Vec<String>> {
    let mut names = Vec::with_capacity(scripts.len());
    let mut seen = std::collections::HashSet::new();
    for s in scripts {
        let name = Path::new(&s.path)
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| s.path.clone());
        if !seen.insert(name.clone()) {
            return Err(Error::InvalidConfig(format!("two inputs share the file name {name}")));
        }
        names.push(name);
    }
    Ok(names)
}

/// Writes `outputs/`, `sources/`, `run.json`, `provenance.jsonl` and `timings.jsonl` under
/// `dir` and returns the paths written.
pub fn write_run_dir(run: &MigrationRun, scripts: &[SourceScript], dir: &Path) -> Result<Vec<PathBuf>> {
    let names = output_names(scripts)?;
    let outputs = dir.join("outputs");
    let sources = dir.join("sources");
    for d in [&outputs, &sources] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut written = Vec::new();
    let mut files = Vec::new();
    for ((file, script), name) in run.files.iter().zip(scripts).zip(&names) {
        let src = sources.join(name);
        std::fs::write(&src, &script.text).map_err(|e| Error::io(&src, e))?;
        written.push(src);
        if let Some(out) = &file.output {
            let p = outputs.join(name);
            std::fs::write(&p, out).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
        files.push(FileSummary {
            path: file.path.clone(),
            name: name.clone(),
            status: file.status,
            cause: file.cause.clone(),
            chunks: file.chunks.len(),
            attempts: file.chunks.iter().map(|c| c.attempt_count).sum(),
        });
    }
    let summary = RunSummary {
        run_id: run.run_id.clone(),
        pipeline: run.pipeline,
        backend: run.backend.clone(),
        config: run.config.clone(),
        corpus_fingerprint: run.corpus_fingerprint.clone(),
        not_converted: files
            .iter()
            .filter(|f| f.status == FileStatus::NotConverted)
            .map(|f| f.name.clone())
            .collect(),
        files,
    };
    let run_json = dir.join("run.json");
    std::fs::write(&run_json, serde_json::to_string_pretty(&summary)? + "\n").map_err(|e| Error::io(&run_json, e))?;
    written.push(run_json);

    let prov = dir.join("provenance.jsonl");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&prov).map_err(|e| Error::io(&prov, e))?);
    for file in &run.files {
        for t in &file.chunks {
            let seq = file
                .completion_order
                .iter()
                .position(|&i| i == t.source.index)
                .unwrap_or(usize::MAX);
            let line = ProvenanceLine {
                file: &file.path,
                chunk: t.source.index,
                start: t.source.start,
                end: t.source.end,
                template_id: t.prompt.template_id,
                bindings: &t.prompt.placeholders_bound,
                retrieval: &t.retrieval_used,
                attempt_count: t.attempt_count,
                completion_seq: seq,
            };
            serde_json::to_writer(&mut w, &line)?;
            writeln!(w).map_err(|e| Error::io(&prov, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&prov, e))?;
    written.push(prov);

    // wall-clock data lives apart so the other artifacts stay reproducible
    let timings = dir.join("timings.jsonl");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&timings).map_err(|e| Error::io(&timings, e))?);
    for file in &run.files {
        for t in &file.chunks {
            let line = TimingLine {
                file: &file.path,
                chunk: t.source.index,
                latency_ms: t.backend_latency_ms,
            };
            serde_json::to_writer(&mut w, &line)?;
            writeln!(w).map_err(|e| Error::io(&timings, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&timings, e))?;
    written.push(timings);
    Ok(written)
}

impl RunSummary {
    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join("run.json");
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
