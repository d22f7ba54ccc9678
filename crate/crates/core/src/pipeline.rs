//! Orchestration: run augmentation methods over a corpus, build the
//! combined training sets, deduplicate, and report counts. Everything
//! downstream of a (corpus, seed, config) triple is deterministic,
//! including under parallel execution.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::aug_icl::{self, IclError, IclOutcome, ModStatus, NumericModPolicy};
use crate::aug_question_replace::{self, IdentityFixer, QuestionReplaceError, TextFixer};
use crate::aug_reverse::{self, ReverseSkip};
use crate::aug_synonym::{self, SynonymLexicon};
use crate::corpus::{self, CorpusError, MwpRecord, Provenance};
use crate::llm_client::{Completer, LlmError, PromptTemplate};
use crate::mathexpr::MathError;

/// The four augmentation methods, in the order used for reports and
/// for building combined sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    QuestionRepl,
    Reverse,
    Synonym,
    Icl,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::QuestionRepl => "question_repl",
            Method::Reverse => "reverse",
            Method::Synonym => "synonym",
            Method::Icl => "icl",
        }
    }

    pub fn parse_name(name: &str) -> Option<Method> {
        match name {
            "qr" | "question_repl" => Some(Method::QuestionRepl),
            "reverse" => Some(Method::Reverse),
            "synonym" => Some(Method::Synonym),
            "icl" => Some(Method::Icl),
            _ => None,
        }
    }

    pub const ALL: [Method; 4] = [
        Method::QuestionRepl,
        Method::Reverse,
        Method::Synonym,
        Method::Icl,
    ];
}

/// Combined training-set variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    V1,
    V2,
    V3,
    V4,
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::V1 => "v1",
            Variant::V2 => "v2",
            Variant::V3 => "v3",
            Variant::V4 => "v4",
        }
    }

    pub fn parse_name(name: &str) -> Option<Variant> {
        match name {
            "v1" => Some(Variant::V1),
            "v2" => Some(Variant::V2),
            "v3" => Some(Variant::V3),
            "v4" => Some(Variant::V4),
            _ => None,
        }
    }

    pub const ALL: [Variant; 4] = [Variant::V1, Variant::V2, Variant::V3, Variant::V4];
}

/// How combined V1 is assembled: a deduplicated union of originals,
/// question-replacement output, and reversal output — or a plain
/// concatenation of the two per-method output sets, which repeats the
/// originals. Published combined-set sizes are close to the latter;
/// both stay available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum V1Mode {
    #[default]
    Union,
    Concat,
}

impl V1Mode {
    pub fn parse_name(name: &str) -> Option<V1Mode> {
        match name {
            "union" => Some(V1Mode::Union),
            "concat" => Some(V1Mode::Concat),
            _ => None,
        }
    }
}

/// Knobs shared by every method run.
#[derive(Debug, Clone)]
pub struct AugmentConfig {
    pub seed: u64,
    /// Worker threads; 0 means the process-wide default pool.
    pub workers: usize,
    pub max_synonym_replacements: usize,
    pub policy: NumericModPolicy,
    /// Emit every reversal candidate instead of one per record.
    pub reverse_all: bool,
    pub v1_mode: V1Mode,
    /// Name used in the first column of the stats table.
    pub dataset_label: String,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            seed: 0,
            workers: 0,
            max_synonym_replacements: 3,
            policy: NumericModPolicy::default(),
            reverse_all: false,
            v1_mode: V1Mode::Union,
            dataset_label: "corpus".into(),
        }
    }
}

/// One line of the skip log. `emitted: true` marks soft notes about
/// records that were still emitted (e.g. numeric modification gave up);
/// hard skips have `emitted: false` and count toward the accounting
/// invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkipEntry {
    pub id: String,
    pub method: String,
    pub reason: String,
    pub emitted: bool,
}

/// Accounting for one method pass. `emitted_inputs` counts source
/// records that produced at least one emission, so
/// `emitted_inputs + Σ skipped == inputs` even when a record fans out
/// into several emissions.
#[derive(Debug, Clone, Serialize)]
pub struct MethodStats {
    pub method: String,
    pub inputs: usize,
    pub emitted_inputs: usize,
    pub emitted_records: usize,
    pub skipped: BTreeMap<String, usize>,
}

impl MethodStats {
    pub fn balanced(&self) -> bool {
        self.emitted_inputs + self.skipped.values().sum::<usize>() == self.inputs
    }
}

/// Everything a single method pass produced.
#[derive(Debug, Clone)]
pub struct MethodRun {
    /// Originals followed by the emissions — the training set this
    /// method defines on its own.
    pub output: Vec<MwpRecord>,
    pub emissions: Vec<MwpRecord>,
    pub skips: Vec<SkipEntry>,
    pub stats: MethodStats,
}

/// Per-method outputs collected by a full run, inputs to the combined
/// set builder.
#[derive(Debug, Default)]
pub struct MethodOutputs {
    pub question_repl: Option<MethodRun>,
    pub reverse: Option<MethodRun>,
    pub synonym: Option<MethodRun>,
    pub icl: Option<MethodRun>,
    pub icl_round2: Option<MethodRun>,
}

impl MethodOutputs {
    pub fn get(&self, method: Method) -> Option<&MethodRun> {
        match method {
            Method::QuestionRepl => self.question_repl.as_ref(),
            Method::Reverse => self.reverse.as_ref(),
            Method::Synonym => self.synonym.as_ref(),
            Method::Icl => self.icl.as_ref(),
        }
    }

    fn set(&mut self, method: Method, run: MethodRun) {
        match method {
            Method::QuestionRepl => self.question_repl = Some(run),
            Method::Reverse => self.reverse = Some(run),
            Method::Synonym => self.synonym = Some(run),
            Method::Icl => self.icl = Some(run),
        }
    }

    /// Computed runs in report order, with the second rephrase round last.
    pub fn iter(&self) -> impl Iterator<Item = &MethodRun> {
        Method::ALL
            .iter()
            .filter_map(|m| self.get(*m))
            .chain(self.icl_round2.as_ref())
    }
}

/// Whole-run accounting, serialized into the run directory.
#[derive(Debug, Clone, Serialize)]
pub struct RunStats {
    pub dataset: String,
    pub seed: u64,
    pub trainset: usize,
    pub methods: Vec<MethodStats>,
    pub variants: BTreeMap<String, usize>,
    pub skips: Vec<SkipEntry>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("method {method} requires {what}")]
    MissingResource {
        method: &'static str,
        what: &'static str,
    },
    #[error("building {variant} requires {what}")]
    MissingInputSet {
        variant: &'static str,
        what: &'static str,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("record {id}: {source}")]
    Equation { id: String, source: MathError },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stats for {0} violate emitted+skipped == inputs; refusing to emit")]
    StatsInvariant(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Fold (seed, method, record id, round) into one 64-bit stream seed
/// (FNV-1a). Every record gets its own generator, so results do not
/// depend on scheduling or worker count.
pub fn derive_seed(global_seed: u64, method: &str, record_id: &str, round: u32) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            hash = (hash ^ u64::from(b)).wrapping_mul(PRIME);
        }
        hash = (hash ^ 0xff).wrapping_mul(PRIME); // field separator
    };
    eat(&global_seed.to_le_bytes());
    eat(method.as_bytes());
    eat(record_id.as_bytes());
    eat(&round.to_le_bytes());
    hash
}

/// The per-record random stream for a method pass.
pub fn record_rng(global_seed: u64, method: &str, record_id: &str, round: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(global_seed, method, record_id, round))
}

static IDENTITY_FIXER: IdentityFixer = IdentityFixer;

/// Runs methods and builds combined sets. Resources a method needs
/// (lexicon, prompt template, completer, text fixer) are attached here;
/// a method whose resource is missing fails fast with a clear error.
pub struct Pipeline<'a> {
    pub config: AugmentConfig,
    pub lexicon: Option<&'a SynonymLexicon>,
    pub template: Option<&'a PromptTemplate>,
    pub llm: Option<&'a (dyn Completer + 'a)>,
    pub fixer: Option<&'a (dyn TextFixer + 'a)>,
}

impl<'a> Pipeline<'a> {
    pub fn new(config: AugmentConfig) -> Pipeline<'a> {
        Pipeline {
            config,
            lexicon: None,
            template: None,
            llm: None,
            fixer: None,
        }
    }

    fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        if self.config.workers == 0 {
            f()
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(self.config.workers)
                .build()
                .expect("worker pool")
                .install(f)
        }
    }

    fn require_lexicon(&self, method: &'static str) -> Result<&SynonymLexicon, PipelineError> {
        self.lexicon
            .ok_or(PipelineError::MissingResource {
                method,
                what: "a synonym lexicon",
            })
    }

    fn require_llm(
        &self,
    ) -> Result<(&PromptTemplate, &(dyn Completer + 'a)), PipelineError> {
        let template = self.template.ok_or(PipelineError::MissingResource {
            method: "icl",
            what: "a prompt template",
        })?;
        let llm = self.llm.ok_or(PipelineError::MissingResource {
            method: "icl",
            what: "a completion backend",
        })?;
        Ok((template, llm))
    }

    /// Run one method over the corpus. The output set is the originals
    /// followed by the method's emissions, in input order.
    pub fn run_method(
        &self,
        method: Method,
        corpus: &[MwpRecord],
    ) -> Result<MethodRun, PipelineError> {
        match method {
            Method::Synonym => {
                self.require_lexicon("synonym")?;
            }
            Method::Icl => {
                self.require_llm()?;
            }
            _ => {}
        }
        let round = if method == Method::Icl { 1 } else { 0 };
        let per_record: Vec<(Vec<MwpRecord>, Vec<SkipEntry>)> = self.install(|| {
            corpus
                .par_iter()
                .map(|record| self.augment_record(method, record, round))
                .collect::<Result<Vec<_>, PipelineError>>()
        })?;
        Ok(assemble_run(method.label(), corpus, per_record))
    }

    /// One record through one method; returns its emissions and skip
    /// log lines.
    fn augment_record(
        &self,
        method: Method,
        record: &MwpRecord,
        round: u32,
    ) -> Result<(Vec<MwpRecord>, Vec<SkipEntry>), PipelineError> {
        let mut rng = record_rng(self.config.seed, method.label(), &record.id, round);
        let skip = |reason: &str, emitted: bool| SkipEntry {
            id: record.id.clone(),
            method: if method == Method::Icl && round == 2 {
                "icl_round2".into()
            } else {
                method.label().into()
            },
            reason: reason.into(),
            emitted,
        };
        match method {
            Method::Synonym => {
                let lexicon = self.require_lexicon("synonym")?;
                match aug_synonym::synonym_replace(
                    record,
                    lexicon,
                    &mut rng,
                    self.config.max_synonym_replacements,
                ) {
                    Some(out) => Ok((vec![out], vec![])),
                    None => Ok((vec![], vec![skip("no_candidates", false)])),
                }
            }
            Method::QuestionRepl => {
                let fixer = self.fixer.unwrap_or(&IDENTITY_FIXER);
                match aug_question_replace::question_replace(record, &mut rng, fixer) {
                    Ok(Some(out)) => Ok((vec![out], vec![])),
                    Ok(None) => Ok((vec![], vec![skip("no_question_cue", false)])),
                    Err(QuestionReplaceError::Equation {
                        source: MathError::TemplateFormViolation,
                        ..
                    }) => Ok((vec![], vec![skip("not_template_form", false)])),
                    Err(QuestionReplaceError::Equation { id, source }) => {
                        Err(PipelineError::Equation { id, source })
                    }
                }
            }
            Method::Reverse => {
                let result = if self.config.reverse_all {
                    aug_reverse::reverse_question_all(record)
                } else {
                    aug_reverse::reverse_question(record, &mut rng)
                };
                match result {
                    Ok(outs) => Ok((outs, vec![])),
                    Err(why) => Ok((vec![], vec![skip(reverse_skip_key(&why), false)])),
                }
            }
            Method::Icl => {
                let (template, llm) = self.require_llm()?;
                let outcome = aug_icl::icl_rephrase(
                    record,
                    template,
                    llm,
                    &mut rng,
                    &self.config.policy,
                )
                .map_err(|e| match e {
                    IclError::Llm(e) => PipelineError::Llm(e),
                    IclError::Equation { id, source } => PipelineError::Equation { id, source },
                })?;
                match outcome {
                    IclOutcome::Emitted {
                        record: mut out,
                        modification,
                    } => {
                        if round == 2 {
                            out.id = format!("{}:icl2", record.id);
                            out.provenance = Provenance::IclRound2;
                        }
                        let mut notes = vec![];
                        if modification == ModStatus::RetriesExhausted {
                            notes.push(skip("numeric_mod_retries_exhausted", true));
                        }
                        Ok((vec![out], notes))
                    }
                    IclOutcome::Filtered(reason) => {
                        Ok((vec![], vec![skip(reason.as_str(), false)]))
                    }
                }
            }
        }
    }

    /// The second rephrase round for combined V4: same prompts over the
    /// original corpus, a fresh random stream, fresh numeric draws.
    fn run_icl_round2(&self, corpus: &[MwpRecord]) -> Result<MethodRun, PipelineError> {
        self.require_llm()?;
        let per_record: Vec<(Vec<MwpRecord>, Vec<SkipEntry>)> = self.install(|| {
            corpus
                .par_iter()
                .map(|record| self.augment_record(Method::Icl, record, 2))
                .collect::<Result<Vec<_>, PipelineError>>()
        })?;
        Ok(assemble_run("icl_round2", corpus, per_record))
    }

    fn dedup_union(&self, sets: &[&[MwpRecord]]) -> Result<Vec<MwpRecord>, PipelineError> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for set in sets {
            for record in *set {
                let key = record.dedup_key().map_err(|source| PipelineError::Equation {
                    id: record.id.clone(),
                    source,
                })?;
                if seen.insert(key) {
                    out.push(record.clone());
                }
            }
        }
        Ok(out)
    }

    fn union_v1(
        &self,
        corpus: &[MwpRecord],
        runs: &MethodOutputs,
    ) -> Result<Vec<MwpRecord>, PipelineError> {
        let qr = runs.question_repl.as_ref().ok_or(PipelineError::MissingInputSet {
            variant: "v1",
            what: "question replacement output",
        })?;
        let rev = runs.reverse.as_ref().ok_or(PipelineError::MissingInputSet {
            variant: "v1",
            what: "reversal output",
        })?;
        self.dedup_union(&[corpus, &qr.emissions, &rev.emissions])
    }

    /// Build one combined variant from per-method outputs. V2 runs the
    /// synonym pass over V1 in place; V3/V4 splice in the rephrase
    /// rounds. All variants except concat-mode V1 are deduplicated with
    /// first occurrence winning.
    pub fn build_combined(
        &self,
        variant: Variant,
        corpus: &[MwpRecord],
        runs: &MethodOutputs,
    ) -> Result<Vec<MwpRecord>, PipelineError> {
        match variant {
            Variant::V1 => match self.config.v1_mode {
                V1Mode::Union => self.union_v1(corpus, runs),
                V1Mode::Concat => {
                    let qr = runs.question_repl.as_ref().ok_or(PipelineError::MissingInputSet {
                        variant: "v1",
                        what: "question replacement output",
                    })?;
                    let rev = runs.reverse.as_ref().ok_or(PipelineError::MissingInputSet {
                        variant: "v1",
                        what: "reversal output",
                    })?;
                    let mut out = qr.output.clone();
                    out.extend(rev.output.iter().cloned());
                    Ok(out)
                }
            },
            Variant::V2 => {
                let lexicon = self.require_lexicon("v2 synonym pass")?;
                let v1 = self.union_v1(corpus, runs)?;
                let replaced: Vec<Option<MwpRecord>> = self.install(|| {
                    v1.par_iter()
                        .map(|record| {
                            let mut rng =
                                record_rng(self.config.seed, "synonym", &record.id, 0);
                            aug_synonym::synonym_replace(
                                record,
                                lexicon,
                                &mut rng,
                                self.config.max_synonym_replacements,
                            )
                        })
                        .collect()
                });
                let emissions: Vec<MwpRecord> = replaced.into_iter().flatten().collect();
                self.dedup_union(&[&v1, &emissions])
            }
            Variant::V3 => {
                let icl = runs.icl.as_ref().ok_or(PipelineError::MissingInputSet {
                    variant: "v3",
                    what: "rephrase output",
                })?;
                let v1 = self.union_v1(corpus, runs)?;
                self.dedup_union(&[&v1, &icl.emissions])
            }
            Variant::V4 => {
                let icl = runs.icl.as_ref().ok_or(PipelineError::MissingInputSet {
                    variant: "v4",
                    what: "rephrase output",
                })?;
                let round2 = runs.icl_round2.as_ref().ok_or(PipelineError::MissingInputSet {
                    variant: "v4",
                    what: "second-round rephrase output",
                })?;
                let v1 = self.union_v1(corpus, runs)?;
                let v3 = self.dedup_union(&[&v1, &icl.emissions])?;
                self.dedup_union(&[&v3, &round2.emissions])
            }
        }
    }

    /// Full run: execute the requested methods (plus any a combined
    /// variant needs), build the variants, and write every output file
    /// under `dir`. File contents depend only on (corpus, config, seed,
    /// completer behavior) — never on worker count or wall clock.
    pub fn run(
        &self,
        corpus: &[MwpRecord],
        methods: &[Method],
        variants: &[Variant],
        dir: &Path,
    ) -> Result<RunStats, PipelineError> {
        self.config
            .policy
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.config.max_synonym_replacements == 0 {
            return Err(PipelineError::Config(
                "max_synonym_replacements must be at least 1".into(),
            ));
        }
        fs::create_dir_all(dir).map_err(io_err(dir))?;

        let variants: BTreeSet<Variant> = variants.iter().copied().collect();
        let mut wanted: BTreeSet<Method> = methods.iter().copied().collect();
        for variant in &variants {
            wanted.insert(Method::QuestionRepl);
            wanted.insert(Method::Reverse);
            if matches!(variant, Variant::V3 | Variant::V4) {
                wanted.insert(Method::Icl);
            }
        }

        let mut runs = MethodOutputs::default();
        for method in &wanted {
            runs.set(*method, self.run_method(*method, corpus)?);
        }
        if variants.contains(&Variant::V4) {
            runs.icl_round2 = Some(self.run_icl_round2(corpus)?);
        }

        let mut built: Vec<(Variant, Vec<MwpRecord>)> = Vec::new();
        for variant in &variants {
            built.push((*variant, self.build_combined(*variant, corpus, &runs)?));
        }

        corpus::write_corpus(corpus, &dir.join("trainset.jsonl"))?;
        for run in runs.iter() {
            corpus::write_corpus(&run.output, &dir.join(format!("{}.jsonl", run.stats.method)))?;
        }
        for (variant, records) in &built {
            corpus::write_corpus(
                records,
                &dir.join(format!("combined_{}.jsonl", variant.label())),
            )?;
        }

        let stats = RunStats {
            dataset: self.config.dataset_label.clone(),
            seed: self.config.seed,
            trainset: corpus.len(),
            methods: runs.iter().map(|r| r.stats.clone()).collect(),
            variants: built
                .iter()
                .map(|(v, records)| (v.label().to_string(), records.len()))
                .collect(),
            skips: runs.iter().flat_map(|r| r.skips.iter().cloned()).collect(),
        };
        emit_stats(&stats, dir)?;
        Ok(stats)
    }
}

fn reverse_skip_key(skip: &ReverseSkip) -> &'static str {
    match skip {
        ReverseSkip::QuestionMarkCount(_) => "question_mark_count",
        ReverseSkip::QuestionNotFinal => "question_not_final",
        ReverseSkip::Equation(MathError::TemplateFormViolation) => "not_template_form",
        ReverseSkip::Equation(_) => "equation_error",
        ReverseSkip::QuestionPatternUnmatched => "question_pattern_unmatched",
        ReverseSkip::NoConvertibleStatement => "no_convertible_statement",
    }
}

fn assemble_run(
    label: &str,
    corpus: &[MwpRecord],
    per_record: Vec<(Vec<MwpRecord>, Vec<SkipEntry>)>,
) -> MethodRun {
    let mut emissions = Vec::new();
    let mut skips = Vec::new();
    let mut emitted_inputs = 0;
    let mut skipped: BTreeMap<String, usize> = BTreeMap::new();
    for (outs, notes) in per_record {
        if !outs.is_empty() {
            emitted_inputs += 1;
        }
        for note in &notes {
            if !note.emitted {
                *skipped.entry(note.reason.clone()).or_default() += 1;
            }
        }
        emissions.extend(outs);
        skips.extend(notes);
    }
    let stats = MethodStats {
        method: label.to_string(),
        inputs: corpus.len(),
        emitted_inputs,
        emitted_records: emissions.len(),
        skipped,
    };
    let mut output = corpus.to_vec();
    output.extend(emissions.iter().cloned());
    MethodRun {
        output,
        emissions,
        skips,
        stats,
    }
}

/// Table columns for the stats report, in presentation order.
pub const STATS_COLUMNS: [&str; 10] = [
    "dataset",
    "trainset",
    "question_repl",
    "reversing",
    "synonym_repl",
    "rephrase_icl",
    "combined_v1",
    "combined_v2",
    "combined_v3",
    "combined_v4",
];

/// Write `stats.tsv` (one row of set sizes) and `skips.jsonl` (one line
/// per skipped or annotated record) into `dir`. Refuses to write if any
/// method's accounting does not balance.
pub fn emit_stats(stats: &RunStats, dir: &Path) -> Result<(), PipelineError> {
    for method in &stats.methods {
        if !method.balanced() {
            return Err(PipelineError::StatsInvariant(method.method.clone()));
        }
    }

    let mut tsv = STATS_COLUMNS.join("\t");
    tsv.push('\n');
    if stats.trainset > 0 {
        let method_size = |label: &str| -> String {
            stats
                .methods
                .iter()
                .find(|m| m.method == label)
                .map(|m| (stats.trainset + m.emitted_records).to_string())
                .unwrap_or_else(|| "-".into())
        };
        let variant_size = |label: &str| -> String {
            stats
                .variants
                .get(label)
                .map(|n| n.to_string())
                .unwrap_or_else(|| "-".into())
        };
        let row = [
            stats.dataset.clone(),
            stats.trainset.to_string(),
            method_size("question_repl"),
            method_size("reverse"),
            method_size("synonym"),
            method_size("icl"),
            variant_size("v1"),
            variant_size("v2"),
            variant_size("v3"),
            variant_size("v4"),
        ];
        tsv.push_str(&row.join("\t"));
        tsv.push('\n');
    }
    let tsv_path = dir.join("stats.tsv");
    fs::write(&tsv_path, tsv).map_err(io_err(&tsv_path))?;

    let skip_path = dir.join("skips.jsonl");
    let mut buf = Vec::new();
    for entry in &stats.skips {
        serde_json::to_writer(&mut buf, entry).expect("skip entries serialize");
        buf.write_all(b"\n").expect("vec write");
    }
    fs::write(&skip_path, buf).map_err(io_err(&skip_path))?;
    Ok(())
}
