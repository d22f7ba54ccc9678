//! Dataset ingestion and emission, record normalization, and alignment
//! between number tokens in problem text and number literals in equations.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::mathexpr::{self, MathError};

/// Which augmentation produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    Synonym,
    QuestionRepl,
    Reverse,
    Icl,
    IclRound2,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Provenance::Original => "original",
            Provenance::Synonym => "synonym",
            Provenance::QuestionRepl => "question_repl",
            Provenance::Reverse => "reverse",
            Provenance::Icl => "icl",
            Provenance::IclRound2 => "icl_round2",
        };
        f.write_str(name)
    }
}

/// One math word problem. The stored answer must always equal the value
/// obtained by solving the equation for its unknown (within 1e-6).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwpRecord {
    pub id: String,
    pub text: String,
    pub equation: String,
    pub answer: f64,
    pub provenance: Provenance,
    #[serde(default)]
    pub parent_id: Option<String>,
}

impl MwpRecord {
    /// Validate the record invariants: non-empty text, parseable
    /// single-unknown equation, and answer consistency within 1e-6.
    pub fn check(&self) -> Result<(), CorpusError> {
        if normalize_text(&self.text).is_empty() {
            return Err(CorpusError::EmptyText {
                id: self.id.clone(),
            });
        }
        let eq = mathexpr::parse_equation(&self.equation).map_err(|source| {
            CorpusError::Equation {
                id: self.id.clone(),
                source,
            }
        })?;
        let unknowns = eq.unknown_count();
        if unknowns != 1 {
            return Err(CorpusError::UnknownCount {
                id: self.id.clone(),
                count: unknowns,
            });
        }
        let solved = mathexpr::solve(&eq).map_err(|source| CorpusError::Equation {
            id: self.id.clone(),
            source,
        })?;
        if (solved - self.answer).abs() > 1e-6 {
            return Err(CorpusError::Inconsistent {
                id: self.id.clone(),
                solved,
                stated: self.answer,
            });
        }
        Ok(())
    }

    /// Key used when deduplicating combined sets: whitespace-normalized
    /// lowercased text plus the canonical equation rendering.
    pub fn dedup_key(&self) -> Result<(String, String), MathError> {
        let eq = mathexpr::parse_equation(&self.equation)?;
        Ok((
            normalize_text(&self.text).to_lowercase(),
            mathexpr::canonicalize(&eq),
        ))
    }
}

/// Collapse all interior whitespace runs to single spaces and trim the ends.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumberKind {
    Integer,
    Float,
}

/// A number spotted in problem text. `char_span` is byte offsets such that
/// `text[char_span.0..char_span.1] == surface`.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberToken {
    pub surface: String,
    pub value: f64,
    pub char_span: (usize, usize),
    pub kind: NumberKind,
}

/// Pairing between number tokens in text and number literals in the
/// equation; indices refer to `extract_numbers` order and
/// `Equation::literals` order respectively.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NumberAlignment {
    pub pairs: Vec<(usize, usize)>,
    pub text_only: Vec<usize>,
    pub equation_only: Vec<usize>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed container: {message}")]
    Container { message: String },
    #[error("record {id}: {source}")]
    Equation {
        id: String,
        #[source]
        source: MathError,
    },
    #[error("record {id}: equation has {count} unknowns, expected exactly 1")]
    UnknownCount { id: String, count: usize },
    #[error("record {id}: equation solves to {solved} but stored answer is {stated}")]
    Inconsistent { id: String, solved: f64, stated: f64 },
    #[error("record {id}: text is empty after whitespace normalization")]
    EmptyText { id: String },
}

/// A record that could not be ingested, with the reason it was set aside.
#[derive(Debug, Clone, Serialize)]
pub struct Reject {
    pub id: String,
    pub reason: String,
}

/// Result of loading a corpus file: usable records plus per-record rejects.
/// Rejects are reported, never silently dropped.
#[derive(Debug, Default)]
pub struct LoadOutcome {
    pub records: Vec<MwpRecord>,
    pub rejects: Vec<Reject>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    SvampJson,
    MawpsJson,
    UnifiedJsonl,
}

impl CorpusFormat {
    pub fn parse_name(name: &str) -> Option<CorpusFormat> {
        match name {
            "svamp_json" => Some(CorpusFormat::SvampJson),
            "mawps_json" => Some(CorpusFormat::MawpsJson),
            "unified_jsonl" => Some(CorpusFormat::UnifiedJsonl),
            _ => None,
        }
    }

    /// The name `parse_name` accepts for this format.
    pub fn name(self) -> &'static str {
        match self {
            CorpusFormat::SvampJson => "svamp_json",
            CorpusFormat::MawpsJson => "mawps_json",
            CorpusFormat::UnifiedJsonl => "unified_jsonl",
        }
    }
}

/// Load a corpus file. Records whose equation fails to parse, has the
/// wrong number of unknowns, or contradicts the stored answer land in
/// the rejects list with a reason; well-formed records are returned in
/// file order.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<LoadOutcome, CorpusError> {
    let raw = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        CorpusFormat::SvampJson => load_svamp(&raw),
        CorpusFormat::MawpsJson => load_mawps(&raw),
        CorpusFormat::UnifiedJsonl => load_unified(&raw),
    }
}

/// Write records as unified JSONL (UTF-8, LF, stable field order, input
/// order). Every record is validated first; on any violation nothing is
/// written.
pub fn write_corpus(records: &[MwpRecord], path: &Path) -> Result<(), CorpusError> {
    let mut buf = String::new();
    for record in records {
        record.check()?;
        let line = serde_json::to_string(record).map_err(|e| CorpusError::Container {
            message: e.to_string(),
        })?;
        buf.push_str(&line);
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_unified(raw: &str) -> Result<LoadOutcome, CorpusError> {
    let mut outcome = LoadOutcome::default();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: MwpRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                outcome.rejects.push(Reject {
                    id: format!("line {}", lineno + 1),
                    reason: format!("invalid record JSON: {e}"),
                });
                continue;
            }
        };
        admit(record, &mut outcome);
    }
    Ok(outcome)
}

fn load_svamp(raw: &str) -> Result<LoadOutcome, CorpusError> {
    let items = parse_array(raw)?;
    let mut outcome = LoadOutcome::default();
    for (i, item) in items.iter().enumerate() {
        let id = field_string(item, "ID").unwrap_or_else(|| format!("svamp-{i}"));
        let (body, question) = match (field_string(item, "Body"), field_string(item, "Question"))
        {
            (Some(b), Some(q)) => (b, q),
            _ => {
                outcome.rejects.push(Reject {
                    id,
                    reason: "missing Body or Question field".into(),
                });
                continue;
            }
        };
        let (equation, answer) = match (field_string(item, "Equation"), field_f64(item, "Answer"))
        {
            (Some(e), Some(a)) => (e, a),
            _ => {
                outcome.rejects.push(Reject {
                    id,
                    reason: "missing Equation or Answer field".into(),
                });
                continue;
            }
        };
        let record = MwpRecord {
            id,
            text: normalize_text(&format!("{body} {question}")),
            equation: ensure_equation_form(&equation),
            answer,
            provenance: Provenance::Original,
            parent_id: None,
        };
        admit(record, &mut outcome);
    }
    Ok(outcome)
}

fn load_mawps(raw: &str) -> Result<LoadOutcome, CorpusError> {
    let items = parse_array(raw)?;
    let mut outcome = LoadOutcome::default();
    for (i, item) in items.iter().enumerate() {
        let id = field_string(item, "iIndex").unwrap_or_else(|| format!("mawps-{i}"));
        let question = match field_string(item, "sQuestion") {
            Some(q) => q,
            None => {
                outcome.rejects.push(Reject {
                    id,
                    reason: "missing sQuestion field".into(),
                });
                continue;
            }
        };
        let equations = item
            .get("lEquations")
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default();
        let solutions = item
            .get("lSolutions")
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default();
        if equations.len() != 1 || solutions.len() != 1 {
            outcome.rejects.push(Reject {
                id,
                reason: format!(
                    "expected exactly one equation and one solution, found {} and {}",
                    equations.len(),
                    solutions.len()
                ),
            });
            continue;
        }
        let equation = match equations[0].as_str() {
            Some(e) => e.to_string(),
            None => {
                outcome.rejects.push(Reject {
                    id,
                    reason: "lEquations[0] is not a string".into(),
                });
                continue;
            }
        };
        let answer = match solutions[0].as_f64() {
            Some(a) => a,
            None => {
                outcome.rejects.push(Reject {
                    id,
                    reason: "lSolutions[0] is not a number".into(),
                });
                continue;
            }
        };
        let record = MwpRecord {
            id,
            text: normalize_text(&question),
            equation: ensure_equation_form(&equation),
            answer,
            provenance: Provenance::Original,
            parent_id: None,
        };
        admit(record, &mut outcome);
    }
    Ok(outcome)
}

fn admit(record: MwpRecord, outcome: &mut LoadOutcome) {
    match record.check() {
        Ok(()) => outcome.records.push(record),
        Err(e) => outcome.rejects.push(Reject {
            id: record.id.clone(),
            reason: e.to_string(),
        }),
    }
}

fn parse_array(raw: &str) -> Result<Vec<Value>, CorpusError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| CorpusError::Container {
        message: format!("invalid JSON: {e}"),
    })?;
    match value {
        Value::Array(items) => Ok(items),
        other => Err(CorpusError::Container {
            message: format!("expected a JSON array at top level, found {}", kind_of(&other)),
        }),
    }
}

fn kind_of(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn field_string(item: &Value, key: &str) -> Option<String> {
    match item.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn field_f64(item: &Value, key: &str) -> Option<f64> {
    item.get(key)?.as_f64()
}

/// Dataset equation fields sometimes hold a bare expression (no `=`); read
/// those as the right-hand side of `X = ...`.
fn ensure_equation_form(raw: &str) -> String {
    if raw.contains('=') {
        raw.to_string()
    } else {
        format!("X={raw}")
    }
}

/// Scan text for standalone number tokens in left-to-right order.
/// Decimal literals are matched greedily ("8.0" is one token); digits
/// attached to letters ("B2", "7th") are not numbers; currency or percent
/// signs around a number are not part of its surface.
pub fn extract_numbers(text: &str) -> Vec<NumberToken> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let prev_alpha = i > 0 && chars[i - 1].1.is_alphabetic();
        let mut j = i + 1;
        while j < chars.len() && chars[j].1.is_ascii_digit() {
            j += 1;
        }
        if j + 1 < chars.len() && chars[j].1 == '.' && chars[j + 1].1.is_ascii_digit() {
            j += 2;
            while j < chars.len() && chars[j].1.is_ascii_digit() {
                j += 1;
            }
        }
        let next_alpha = j < chars.len() && chars[j].1.is_alphabetic();
        let end = chars.get(j).map(|&(o, _)| o).unwrap_or(text.len());
        if !prev_alpha && !next_alpha {
            let surface = &text[start..end];
            // surface is digits with at most one interior dot, always parseable
            let value: f64 = surface.parse().expect("scanned number parses");
            let kind = if surface.contains('.') {
                NumberKind::Float
            } else {
                NumberKind::Integer
            };
            out.push(NumberToken {
                surface: surface.to_string(),
                value,
                char_span: (start, end),
                kind,
            });
        }
        i = j;
    }
    out
}

/// Greedy positional matching of text number tokens against equation
/// literals: walk text tokens in order, pairing each to the first
/// not-yet-paired literal of equal value (tolerance 1e-9, so "7"
/// matches "7.0").
pub fn align(tokens: &[NumberToken], literals: &[f64]) -> NumberAlignment {
    let mut paired = vec![false; literals.len()];
    let mut alignment = NumberAlignment::default();
    for (ti, token) in tokens.iter().enumerate() {
        let hit = (0..literals.len())
            .find(|&li| !paired[li] && (literals[li] - token.value).abs() <= 1e-9);
        match hit {
            Some(li) => {
                paired[li] = true;
                alignment.pairs.push((ti, li));
            }
            None => alignment.text_only.push(ti),
        }
    }
    alignment.equation_only = paired
        .iter()
        .enumerate()
        .filter(|(_, used)| !**used)
        .map(|(li, _)| li)
        .collect();
    alignment
}

/// [`align`] applied to a record's own text and equation.
pub fn align_numbers(record: &MwpRecord) -> Result<NumberAlignment, MathError> {
    let eq = mathexpr::parse_equation(&record.equation)?;
    Ok(align(&extract_numbers(&record.text), &eq.literals()))
}
