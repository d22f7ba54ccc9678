//! Whole-system checks, one test per release gate: golden fixture
//! outputs for all four augmentation methods, corpus-wide answer
//! consistency, solver round-trip recovery, output-size accounting,
//! rephrase filter accounting, combined-set structure, worker-count
//! determinism, and prompt round-trip fidelity. Each test enforces the
//! runtime budget it states.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use mwpaug_core::aug_icl::{self, IclOutcome, NumericModPolicy};
use mwpaug_core::aug_question_replace::{question_replace_with, FractionParams, IdentityFixer};
use mwpaug_core::aug_reverse::reverse_question_all;
use mwpaug_core::aug_synonym::{synonym_replace, LexiconSource, SynonymLexicon};
use mwpaug_core::corpus::{self, CorpusFormat, MwpRecord, Provenance};
use mwpaug_core::llm_client::{MockDefault, MockLlm, PromptTemplate};
use mwpaug_core::mathexpr::{self, BinOp, Equation, Expr};
use mwpaug_core::pipeline::{AugmentConfig, Method, Pipeline, Variant};

const ANSWER_TOLERANCE: f64 = 1e-6;

fn record(id: &str, text: &str, equation: &str, answer: f64) -> MwpRecord {
    let r = MwpRecord {
        id: id.into(),
        text: text.into(),
        equation: equation.into(),
        answer,
        provenance: Provenance::Original,
        parent_id: None,
    };
    r.check().expect("fixture record is consistent");
    r
}

fn fred() -> MwpRecord {
    record(
        "fred-1",
        "Fred had 7 dimes in his bank . His sister borrowed 3 of his dimes . How many dimes does Fred have now?",
        "X=7-3",
        4.0,
    )
}

/// Deterministic fixture corpus cycling five problem shapes
/// (subtraction, addition, multiplication, division, float addition),
/// six narrators, and six object nouns.
fn build_corpus(n: usize) -> Vec<MwpRecord> {
    const NAMES: [(&str, &str); 6] = [
        ("Tom", "He"),
        ("Sara", "She"),
        ("Joan", "She"),
        ("Fred", "He"),
        ("Paul", "He"),
        ("Megan", "She"),
    ];
    const NOUNS: [&str; 6] = [
        "marbles",
        "pencils",
        "apples",
        "seashells",
        "stickers",
        "cards",
    ];
    (0..n)
        .map(|i| {
            let (name, pron) = NAMES[i % 6];
            let (friend, _) = NAMES[(i + 2) % 6];
            let noun = NOUNS[(i / 3) % 6];
            let a = 10 + (i * 7) % 80;
            let b = 1 + (i * 3) % 9;
            let id = format!("gen-{i:04}");
            match i % 5 {
                0 => record(
                    &id,
                    &format!(
                        "{name} had {a} {noun} . {pron} gave {b} {noun} to {friend} . How many {noun} does {name} have now?"
                    ),
                    &format!("X={a}-{b}"),
                    (a - b) as f64,
                ),
                1 => record(
                    &id,
                    &format!(
                        "{name} found {a} {noun} . {friend} found {b} {noun} . How many {noun} did they find in all?"
                    ),
                    &format!("X={a}+{b}"),
                    (a + b) as f64,
                ),
                2 => record(
                    &id,
                    &format!(
                        "There are {a} boxes of {noun} . Each box holds {b} {noun} . How many {noun} do the boxes hold in all?"
                    ),
                    &format!("X={a}*{b}"),
                    (a * b) as f64,
                ),
                3 => {
                    let total = b * (2 + i % 7);
                    record(
                        &id,
                        &format!(
                            "{name} had {total} {noun} . {pron} put them equally into {b} bags . How many {noun} are in each bag?"
                        ),
                        &format!("X={total}/{b}"),
                        (total / b) as f64,
                    )
                }
                _ => record(
                    &id,
                    &format!(
                        "{name} walked {a}.5 miles on Monday . {pron} walked {b}.5 miles on Tuesday . How many miles did {name} walk in total?"
                    ),
                    &format!("X={a}.5+{b}.5"),
                    (a + b + 1) as f64,
                ),
            }
        })
        .collect()
}

/// Lexicon covering at least one word in every shape `build_corpus` emits.
fn corpus_lexicon() -> SynonymLexicon {
    SynonymLexicon::from_entries(
        vec![
            ("gave", vec!["handed"]),
            ("found", vec!["discovered"]),
            ("boxes", vec!["cartons"]),
            ("holds", vec!["contains"]),
            ("equally", vec!["evenly"]),
            ("bags", vec!["sacks"]),
            ("put", vec!["placed"]),
            ("walked", vec!["strolled"]),
        ],
        LexiconSource::Tsv,
    )
}

fn rephrase_mock() -> MockLlm {
    MockLlm::new(MockDefault::Template("According to the story , {text}".into()))
}

fn run_pipeline(
    corpus: &[MwpRecord],
    seed: u64,
    workers: usize,
    methods: &[Method],
    variants: &[Variant],
    dir: &Path,
) -> mwpaug_core::pipeline::RunStats {
    let lexicon = corpus_lexicon();
    let mock = rephrase_mock();
    let template = mwpaug_core::llm_client::mawps_template();
    let mut pipeline = Pipeline::new(AugmentConfig {
        seed,
        workers,
        ..AugmentConfig::default()
    });
    pipeline.lexicon = Some(&lexicon);
    pipeline.template = Some(&template);
    pipeline.llm = Some(&mock);
    pipeline
        .run(corpus, methods, variants, dir)
        .expect("pipeline run succeeds")
}

fn jsonl_files(dir: &Path) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .expect("run dir readable")
        .map(|e| e.expect("entry").path())
        .filter(|p| {
            p.extension().and_then(|e| e.to_str()) == Some("jsonl")
                && p.file_name().and_then(|n| n.to_str()) != Some("skips.jsonl")
        })
        .collect();
    out.sort();
    out
}

fn load_records(path: &Path) -> Vec<MwpRecord> {
    let outcome = corpus::load_corpus(path, CorpusFormat::UnifiedJsonl).expect("file loads");
    assert!(
        outcome.rejects.is_empty(),
        "{} holds invalid records: {:?}",
        path.display(),
        outcome.rejects
    );
    outcome.records
}

fn key_set(records: &[MwpRecord]) -> HashSet<(String, String)> {
    records
        .iter()
        .map(|r| r.dedup_key().expect("equation parses"))
        .collect()
}

fn tree_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).expect("dir readable") {
        let path = entry.expect("entry").path();
        if path.is_file() {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            out.insert(name, fs::read(&path).expect("file readable"));
        }
    }
    out
}

#[test]
fn golden_fixture_reproduces_all_four_method_outputs() {
    let start = Instant::now();
    let original = fred();

    // Synonym replacement: both lexicon words swapped, numbers and
    // equation untouched.
    let lexicon = SynonymLexicon::from_entries(
        vec![
            ("bank", vec!["depository financial institution"]),
            ("borrowed", vec!["lent"]),
        ],
        LexiconSource::Tsv,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let syn = synonym_replace(&original, &lexicon, &mut rng, 3).expect("two candidate words");
    assert_eq!(
        syn.text,
        "Fred had 7 dimes in his depository financial institution . His sister lent 3 of his dimes . How many dimes does Fred have now?"
    );
    assert_eq!(syn.equation, "X=7-3");
    assert_eq!(syn.answer, 4.0);
    syn.check().expect("synonym output is consistent");

    // Question replacement with the fraction pinned to 9/10.
    let fraction = FractionParams::from_parts(9, 10).expect("valid fraction");
    let qr = question_replace_with(&original, fraction, &IdentityFixer)
        .expect("no equation error")
        .expect("cue phrase present");
    let qr_eq = mathexpr::parse_equation(&qr.equation).expect("parses");
    assert_eq!(mathexpr::canonicalize(&qr_eq), "X=((7-3)*(9/10))");
    assert!((qr.answer - 3.6).abs() <= 1e-9);
    qr.check().expect("question replacement output is consistent");

    // Reversal: the candidate displacing the 7 restates the answer and
    // asks for the old given.
    let candidates = reverse_question_all(&original).expect("record reverses");
    let target_eq = mathexpr::parse_equation("4=X-3").expect("parses");
    let rev = candidates
        .iter()
        .find(|c| {
            let eq = mathexpr::parse_equation(&c.equation).expect("parses");
            mathexpr::canonicalize(&eq) == mathexpr::canonicalize(&target_eq)
        })
        .expect("a candidate displaces the first given");
    assert_eq!(rev.answer, 7.0);
    assert_eq!(
        rev.text,
        "Fred has 4 dimes now. His sister borrowed 3 of his dimes. How many dimes in his bank did Fred have?"
    );
    rev.check().expect("reversal output is consistent");

    // Rephrase: scripted completion, then the number draws pinned to
    // (23, 9) through the public splice path.
    let rephrased = "Fred initially had 7 dimes in his bank, but after his sister borrowed 3 dimes, how many dimes does Fred have remaining?";
    let policy = NumericModPolicy::default();
    let eq = mathexpr::parse_equation(&original.equation).expect("parses");
    let tokens = corpus::extract_numbers(rephrased);
    let alignment = corpus::align(&tokens, &eq.literals());
    assert!(alignment.equation_only.is_empty(), "rephrase keeps every literal");
    let (text, new_eq) =
        aug_icl::apply_replacements(rephrased, &tokens, &[23.0, 9.0], &eq, &alignment, &policy);
    assert_eq!(
        text,
        "Fred initially had 23 dimes in his bank, but after his sister borrowed 9 dimes, how many dimes does Fred have remaining?"
    );
    assert_eq!(new_eq.render(), "X=23-9");
    assert!((mathexpr::solve(&new_eq).expect("solves") - 14.0).abs() <= ANSWER_TOLERANCE);

    // The same scripted completion through the full entry point emits a
    // consistent record whatever the draws.
    let mock = MockLlm::new(MockDefault::Echo).with_reply(&original.text, rephrased);
    let template = mwpaug_core::llm_client::mawps_template();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    match aug_icl::icl_rephrase(&original, &template, &mock, &mut rng, &policy)
        .expect("no transport error")
    {
        IclOutcome::Emitted { record, .. } => {
            record.check().expect("rephrase output is consistent")
        }
        IclOutcome::Filtered(reason) => panic!("unexpected filter: {reason:?}"),
    }

    assert!(
        start.elapsed() < Duration::from_secs(1),
        "golden suite exceeded its 1 s budget: {:?}",
        start.elapsed()
    );
}

#[test]
fn every_emitted_record_solves_to_its_stored_answer() {
    let start = Instant::now();
    let corpus = build_corpus(200);
    let dir = TempDir::new().unwrap();
    run_pipeline(
        &corpus,
        42,
        0,
        &Method::ALL,
        &Variant::ALL,
        dir.path(),
    );

    let mut checked = 0usize;
    for path in jsonl_files(dir.path()) {
        for rec in load_records(&path) {
            let eq = mathexpr::parse_equation(&rec.equation).expect("equation parses");
            let solved = mathexpr::solve(&eq).expect("equation solves");
            assert!(
                (solved - rec.answer).abs() <= ANSWER_TOLERANCE,
                "{} in {}: solves to {solved}, stored {}",
                rec.id,
                path.display(),
                rec.answer
            );
            checked += 1;
        }
    }
    assert!(
        checked > 1000,
        "expected a substantial sweep, checked only {checked} records"
    );
    assert!(
        start.elapsed() < Duration::from_secs(10),
        "consistency sweep exceeded its 10 s budget: {:?}",
        start.elapsed()
    );
}

/// Random expression for the solver oracle: literals in [1, 50], binary
/// operator nesting at most `depth`.
fn gen_expr(rng: &mut ChaCha8Rng, depth: u32) -> Expr {
    if depth == 0 || rng.gen_bool(0.35) {
        Expr::Number(rng.gen_range(1..=50) as f64)
    } else {
        let op = match rng.gen_range(0..4) {
            0 => BinOp::Add,
            1 => BinOp::Sub,
            2 => BinOp::Mul,
            _ => BinOp::Div,
        };
        Expr::Binary(
            op,
            Box::new(gen_expr(rng, depth - 1)),
            Box::new(gen_expr(rng, depth - 1)),
        )
    }
}

/// Evaluate every subtree independently of the library and reject trees
/// with non-finite, near-zero, or huge intermediate values: those are
/// not representative of word-problem equations and put literal
/// recovery outside any fixed absolute tolerance.
fn well_conditioned(expr: &Expr) -> bool {
    fn walk(expr: &Expr, ok: &mut bool) -> f64 {
        let value = match expr {
            Expr::Number(n) => *n,
            Expr::Unknown => unreachable!("generator emits no unknowns"),
            Expr::Negate(inner) => -walk(inner, ok),
            Expr::Binary(op, l, r) => {
                let lv = walk(l, ok);
                let rv = walk(r, ok);
                match op {
                    BinOp::Add => lv + rv,
                    BinOp::Sub => lv - rv,
                    BinOp::Mul => lv * rv,
                    BinOp::Div => lv / rv,
                }
            }
        };
        if !value.is_finite() || value.abs() < 0.1 || value.abs() > 1e7 {
            *ok = false;
        }
        value
    }
    let mut ok = true;
    walk(expr, &mut ok);
    ok
}

#[test]
fn solver_recovers_every_literal_of_random_equations() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut recoveries = 0usize;
    for _ in 0..1000 {
        let body = loop {
            let candidate = gen_expr(&mut rng, 4);
            if well_conditioned(&candidate) {
                break candidate;
            }
        };
        let eq = Equation {
            lhs: Expr::Unknown,
            rhs: body,
        };
        let answer = mathexpr::solve(&eq).expect("well-conditioned equation solves");
        let literals = eq.literals();
        for (i, &expected) in literals.iter().enumerate() {
            let displaced = mathexpr::replace_literal_with_unknown(&eq, i, answer)
                .expect("template-form equation");
            let recovered = mathexpr::solve(&displaced).expect("displaced equation solves");
            assert!(
                (recovered - expected).abs() <= ANSWER_TOLERANCE,
                "literal {i} of {}: recovered {recovered}, expected {expected}",
                eq.render()
            );
            recoveries += 1;
        }
    }
    assert!(recoveries >= 1000, "oracle exercised only {recoveries} recoveries");
    assert!(
        start.elapsed() < Duration::from_secs(5),
        "solver oracle exceeded its 5 s budget: {:?}",
        start.elapsed()
    );
}

#[test]
fn synonym_pass_doubles_a_fully_covered_corpus_exactly() {
    let corpus = build_corpus(1589);
    let dir = TempDir::new().unwrap();
    let stats = run_pipeline(&corpus, 5, 0, &[Method::Synonym], &[], dir.path());

    assert_eq!(stats.trainset, 1589);
    let synonym = &stats.methods[0];
    assert_eq!(synonym.method, "synonym");
    assert_eq!(synonym.emitted_records, 1589, "every record must emit a variant");
    assert!(synonym.skipped.is_empty(), "skips: {:?}", synonym.skipped);

    let out = load_records(&dir.path().join("synonym.jsonl"));
    assert_eq!(out.len(), 2 * 1589);
    assert_eq!(out.len(), 3178);
}

#[test]
fn rephrase_filters_account_for_every_input() {
    let corpus = build_corpus(300);
    let mut mock = MockLlm::new(MockDefault::Echo);
    for (i, rec) in corpus.iter().enumerate() {
        let reply = match i % 3 {
            0 => "They counted everything and put it away .".to_string(),
            1 => rec.text.clone(),
            _ => format!("In the story , {}", rec.text),
        };
        mock = mock.with_reply(&rec.text, &reply);
    }
    let template = mwpaug_core::llm_client::mawps_template();
    let mut pipeline = Pipeline::new(AugmentConfig {
        seed: 13,
        ..AugmentConfig::default()
    });
    pipeline.template = Some(&template);
    pipeline.llm = Some(&mock);
    let dir = TempDir::new().unwrap();
    let stats = pipeline
        .run(&corpus, &[Method::Icl], &[], dir.path())
        .expect("run succeeds");

    let icl = &stats.methods[0];
    assert_eq!(icl.method, "icl");
    assert_eq!(icl.inputs, 300);
    assert_eq!(icl.emitted_records, 100, "one emission per valid rephrase");
    assert_eq!(icl.emitted_inputs, 100);
    let expected: BTreeMap<String, usize> = [
        ("identical".to_string(), 100),
        ("no_question_mark".to_string(), 100),
    ]
    .into_iter()
    .collect();
    assert_eq!(icl.skipped, expected);
}

#[test]
fn combined_sets_nest_and_carry_no_duplicate_keys() {
    let corpus = build_corpus(60);
    let dir = TempDir::new().unwrap();
    let stats = run_pipeline(&corpus, 11, 0, &Method::ALL, &Variant::ALL, dir.path());

    let v1 = key_set(&load_records(&dir.path().join("combined_v1.jsonl")));
    let v2 = key_set(&load_records(&dir.path().join("combined_v2.jsonl")));
    let v3 = key_set(&load_records(&dir.path().join("combined_v3.jsonl")));
    let v4 = key_set(&load_records(&dir.path().join("combined_v4.jsonl")));
    assert!(v1.is_subset(&v2), "v1 must be contained in v2");
    assert!(v1.is_subset(&v3), "v1 must be contained in v3");
    assert!(v3.is_subset(&v4), "v3 must be contained in v4");

    for path in jsonl_files(dir.path()) {
        let records = load_records(&path);
        let keys = key_set(&records);
        assert_eq!(
            keys.len(),
            records.len(),
            "{} holds duplicate-key records",
            path.display()
        );
    }

    // Sizes reported for the combined sets match the files.
    for (label, file) in [("v1", "combined_v1.jsonl"), ("v4", "combined_v4.jsonl")] {
        assert_eq!(
            stats.variants[label],
            load_records(&dir.path().join(file)).len()
        );
    }

    // Union arithmetic on a corpus whose method outputs are disjoint
    // from the originals and from each other.
    let toy = vec![
        record(
            "toy-1",
            "Amy had 5 pears . She gave 2 pears to Ben . How many pears does Amy have now?",
            "X=5-2",
            3.0,
        ),
        record(
            "toy-2",
            "Ben found 4 coins . Lee found 6 coins . How many coins did they find in all?",
            "X=4+6",
            10.0,
        ),
        record(
            "toy-3",
            "Cara grew 9 flowers . Dan grew 3 flowers . How many flowers did they grow in all?",
            "X=9+3",
            12.0,
        ),
        record(
            "toy-4",
            "Rita had 8 shells . She gave 5 shells to Max . How many shells does Rita have now?",
            "X=8-5",
            3.0,
        ),
    ];
    let toy_dir = TempDir::new().unwrap();
    let toy_stats = run_pipeline(&toy, 3, 0, &[], &[Variant::V1], toy_dir.path());
    let qr = toy_stats.methods.iter().find(|m| m.method == "question_repl").unwrap();
    let rev = toy_stats.methods.iter().find(|m| m.method == "reverse").unwrap();
    assert_eq!(qr.emitted_records, 4);
    assert_eq!(rev.emitted_records, 4);
    assert_eq!(
        toy_stats.variants["v1"],
        toy_stats.trainset + qr.emitted_records + rev.emitted_records,
        "v1 union must add every new record exactly once"
    );
}

#[test]
fn identical_seeds_give_byte_identical_trees_across_worker_counts() {
    let corpus = build_corpus(40);
    let serial_dir = TempDir::new().unwrap();
    let parallel_dir = TempDir::new().unwrap();
    run_pipeline(&corpus, 123, 1, &Method::ALL, &Variant::ALL, serial_dir.path());
    run_pipeline(&corpus, 123, 8, &Method::ALL, &Variant::ALL, parallel_dir.path());

    let serial = tree_bytes(serial_dir.path());
    let parallel = tree_bytes(parallel_dir.path());
    assert_eq!(
        serial.keys().collect::<Vec<_>>(),
        parallel.keys().collect::<Vec<_>>(),
        "file sets differ between worker counts"
    );
    for (name, bytes) in &serial {
        assert_eq!(
            bytes, &parallel[name],
            "file {name} differs between 1 and 8 workers"
        );
    }
}

#[test]
fn bundled_prompts_render_back_byte_for_byte() {
    for name in ["mawps.txt", "svamp.txt"] {
        let path = Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("fixtures/prompts")
            .join(name);
        let raw = fs::read_to_string(&path).expect("bundled prompt readable");
        let (template, target) =
            PromptTemplate::from_rendered(&raw).expect("bundled prompt parses");
        assert_eq!(
            template.exemplars.len(),
            15,
            "{name} must carry fifteen exemplar pairs"
        );
        assert_eq!(
            template.render(&target),
            raw,
            "{name} does not survive a parse/render round trip"
        );
    }
}
