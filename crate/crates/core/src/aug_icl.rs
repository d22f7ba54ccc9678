//! Rephrase with in-context learning: prompt an LLM with bundled
//! exemplars, filter degenerate completions, then redraw the numbers so
//! the rephrased problem is not a memorized duplicate.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::corpus::{self, MwpRecord, NumberAlignment, NumberKind, NumberToken, Provenance};
use crate::llm_client::{Completer, LlmError, PromptTemplate};
use crate::mathexpr::{self, Equation, MathError};

/// How replacement numbers are drawn and when a draw is rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericModPolicy {
    /// Inclusive range for integer-token replacements.
    pub int_range: (i64, i64),
    /// Inclusive range for float-token replacements.
    pub float_range: (f64, f64),
    /// Decimal places kept on float replacements.
    pub float_decimals: u32,
    /// Full redraw attempts before giving up on modification.
    pub max_retries: u32,
}

impl Default for NumericModPolicy {
    fn default() -> Self {
        NumericModPolicy {
            int_range: (2, 100),
            float_range: (1.0, 100.0),
            float_decimals: 1,
            max_retries: 20,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("integer range {0}..{1} is empty")]
    EmptyIntRange(i64, i64),
    #[error("float range {0}..{1} is empty")]
    EmptyFloatRange(f64, f64),
    #[error("max_retries must be at least 1")]
    ZeroRetries,
}

impl NumericModPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.int_range.0 >= self.int_range.1 {
            return Err(PolicyError::EmptyIntRange(self.int_range.0, self.int_range.1));
        }
        if self.float_range.0 >= self.float_range.1 {
            return Err(PolicyError::EmptyFloatRange(
                self.float_range.0,
                self.float_range.1,
            ));
        }
        if self.max_retries == 0 {
            return Err(PolicyError::ZeroRetries);
        }
        Ok(())
    }
}

/// Why a completion was dropped instead of emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterReason {
    Empty,
    NoQuestionMark,
    Identical,
    AlignmentFailure,
}

impl FilterReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            FilterReason::Empty => "empty",
            FilterReason::NoQuestionMark => "no_question_mark",
            FilterReason::Identical => "identical",
            FilterReason::AlignmentFailure => "alignment_failure",
        }
    }
}

/// Whether numeric modification ran, had nothing to do, or gave up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModStatus {
    Modified,
    NoNumbers,
    RetriesExhausted,
}

/// Result triple of `modify_numbers`, plus what happened.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedNumbers {
    pub text: String,
    pub equation: Equation,
    pub answer: f64,
    pub status: ModStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IclOutcome {
    Emitted {
        record: MwpRecord,
        modification: ModStatus,
    },
    Filtered(FilterReason),
}

#[derive(Debug, Error)]
pub enum IclError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("record {id}: {source}")]
    Equation { id: String, source: MathError },
}

fn round_to(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (value * scale).round() / scale
}

fn format_value(value: f64, kind: NumberKind, decimals: u32) -> String {
    match kind {
        NumberKind::Integer => format!("{}", value as i64),
        NumberKind::Float => format!("{:.*}", decimals as usize, value),
    }
}

/// One fresh value per token: integers from `int_range`, floats from
/// `float_range` rounded to `float_decimals`. Values are drawn distinct
/// from each other so later value-based alignment stays unambiguous.
pub fn draw_replacements(
    tokens: &[NumberToken],
    rng: &mut impl Rng,
    policy: &NumericModPolicy,
) -> Vec<f64> {
    let mut values: Vec<f64> = Vec::with_capacity(tokens.len());
    for token in tokens {
        let mut value = 0.0;
        for _ in 0..200 {
            value = match token.kind {
                NumberKind::Integer => {
                    rng.gen_range(policy.int_range.0..=policy.int_range.1) as f64
                }
                NumberKind::Float => round_to(
                    rng.gen_range(policy.float_range.0..=policy.float_range.1),
                    policy.float_decimals,
                ),
            };
            if !values.contains(&value) {
                break;
            }
        }
        values.push(value);
    }
    values
}

/// Splice `values` over the token spans of `text` and push the same
/// values into the aligned equation literals. Text-only tokens change
/// in the text alone; equation-only literals keep their old values.
pub fn apply_replacements(
    text: &str,
    tokens: &[NumberToken],
    values: &[f64],
    eq: &Equation,
    alignment: &NumberAlignment,
    policy: &NumericModPolicy,
) -> (String, Equation) {
    debug_assert_eq!(tokens.len(), values.len());
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for (token, &value) in tokens.iter().zip(values) {
        out.push_str(&text[cursor..token.char_span.0]);
        out.push_str(&format_value(value, token.kind, policy.float_decimals));
        cursor = token.char_span.1;
    }
    out.push_str(&text[cursor..]);
    let substitutions: BTreeMap<usize, f64> = alignment
        .pairs
        .iter()
        .map(|&(ti, li)| (li, values[ti]))
        .collect();
    let new_eq =
        mathexpr::substitute_literals(eq, &substitutions).expect("aligned indices are in range");
    (out, new_eq)
}

/// Redraw every number in `text`, propagate the aligned draws into the
/// equation, and re-solve. Draws producing a non-finite answer, a
/// division by zero, or a negative answer where the original was
/// non-negative are rejected and redrawn; after `max_retries` failed
/// draws the input comes back unchanged.
pub fn modify_numbers(
    text: &str,
    eq: &Equation,
    answer: f64,
    rng: &mut impl Rng,
    policy: &NumericModPolicy,
) -> ModifiedNumbers {
    let tokens = corpus::extract_numbers(text);
    if tokens.is_empty() {
        return ModifiedNumbers {
            text: text.to_string(),
            equation: eq.clone(),
            answer,
            status: ModStatus::NoNumbers,
        };
    }
    let literals = eq.literals();
    let alignment = corpus::align(&tokens, &literals);
    for _ in 0..policy.max_retries {
        let values = draw_replacements(&tokens, rng, policy);
        let (new_text, new_eq) = apply_replacements(text, &tokens, &values, eq, &alignment, policy);
        match mathexpr::solve(&new_eq) {
            Ok(a) if a.is_finite() && (a >= 0.0 || answer < 0.0) => {
                return ModifiedNumbers {
                    text: new_text,
                    equation: new_eq,
                    answer: a,
                    status: ModStatus::Modified,
                };
            }
            _ => continue,
        }
    }
    ModifiedNumbers {
        text: text.to_string(),
        equation: eq.clone(),
        answer,
        status: ModStatus::RetriesExhausted,
    }
}

/// Full rephrase pipeline for one record: prompt the completer, filter
/// degenerate completions (empty, no '?', identical to the input, or a
/// completion that lost a number the equation needs), then redraw the
/// numbers. A completion with no digits at all is emitted as-is with
/// the original equation and answer.
pub fn icl_rephrase(
    record: &MwpRecord,
    template: &PromptTemplate,
    llm: &dyn Completer,
    rng: &mut impl Rng,
    policy: &NumericModPolicy,
) -> Result<IclOutcome, IclError> {
    let eq = mathexpr::parse_equation(&record.equation).map_err(|source| IclError::Equation {
        id: record.id.clone(),
        source,
    })?;
    let prompt = template.render(&record.text);
    let completion = llm.complete(&prompt)?;
    let rephrased = completion.trim().to_string();
    if rephrased.is_empty() {
        return Ok(IclOutcome::Filtered(FilterReason::Empty));
    }
    if !rephrased.contains('?') {
        return Ok(IclOutcome::Filtered(FilterReason::NoQuestionMark));
    }
    if rephrased == record.text {
        return Ok(IclOutcome::Filtered(FilterReason::Identical));
    }
    let tokens = corpus::extract_numbers(&rephrased);
    if !tokens.is_empty() {
        let alignment = corpus::align(&tokens, &eq.literals());
        // every equation literal must survive in the rephrased text
        if !alignment.equation_only.is_empty() {
            return Ok(IclOutcome::Filtered(FilterReason::AlignmentFailure));
        }
    }
    let modified = modify_numbers(&rephrased, &eq, record.answer, rng, policy);
    let record = MwpRecord {
        id: format!("{}:icl", record.id),
        text: modified.text,
        equation: modified.equation.render(),
        answer: modified.answer,
        provenance: Provenance::Icl,
        parent_id: Some(record.id.clone()),
    };
    Ok(IclOutcome::Emitted {
        record,
        modification: modified.status,
    })
}
