//! Question replacement: rewrite a "How many/How much" question into a
//! fractional "What is x/y of the" question, scaling the equation and
//! answer by the same fraction.

use rand::Rng;
use thiserror::Error;

use crate::corpus::{self, MwpRecord, Provenance};
use crate::llm_client::{Completer, LlmError};
use crate::mathexpr::{self, BinOp, Equation, Expr, MathError};

/// The fraction x/y spliced into the question, with x, y in [1, 10] and
/// x/y != 1 (a fraction of 1 would change nothing).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FractionParams {
    x: u32,
    y: u32,
}

#[derive(Debug, Error, PartialEq)]
pub enum FractionError {
    #[error("fraction parts must lie in [1, 10], got {x}/{y}")]
    OutOfRange { x: u32, y: u32 },
    #[error("fraction must not equal 1, got {x}/{y}")]
    Unit { x: u32, y: u32 },
}

impl FractionParams {
    pub fn from_parts(x: u32, y: u32) -> Result<FractionParams, FractionError> {
        if !(1..=10).contains(&x) || !(1..=10).contains(&y) {
            return Err(FractionError::OutOfRange { x, y });
        }
        if x == y {
            return Err(FractionError::Unit { x, y });
        }
        Ok(FractionParams { x, y })
    }

    /// Draw uniform x, y from [1, 10], redrawing while x equals y.
    pub fn draw(rng: &mut impl Rng) -> FractionParams {
        loop {
            let x = rng.gen_range(1..=10);
            let y = rng.gen_range(1..=10);
            if x != y {
                return FractionParams { x, y };
            }
        }
    }

    pub fn x(&self) -> u32 {
        self.x
    }

    pub fn y(&self) -> u32 {
        self.y
    }

    pub fn value(&self) -> f64 {
        f64::from(self.x) / f64::from(self.y)
    }
}

/// Post-edit hook for splice grammaticality. The identity fixer leaves
/// text untouched; an LLM-backed fixer may smooth the phrasing but must
/// keep every number and the terminal question mark.
pub trait TextFixer: Sync {
    fn fix(&self, text: &str) -> String;
}

/// Default: return the spliced text unchanged.
pub struct IdentityFixer;

impl TextFixer for IdentityFixer {
    fn fix(&self, text: &str) -> String {
        text.to_string()
    }
}

/// Grammar repair through a completion endpoint. If the endpoint fails
/// or its output drops a number or the question mark, the spliced text
/// is kept as-is — the fixer can only polish, never corrupt.
pub struct LlmFixer<'a> {
    completer: &'a dyn Completer,
}

impl<'a> LlmFixer<'a> {
    pub fn new(completer: &'a dyn Completer) -> LlmFixer<'a> {
        LlmFixer { completer }
    }

    fn repair(&self, text: &str) -> Result<String, LlmError> {
        let prompt = format!(
            "Correct the grammar of the following math problem without changing any number or the question being asked.\n\nText: {text}\nRephrased:"
        );
        self.completer.complete(&prompt)
    }
}

impl TextFixer for LlmFixer<'_> {
    fn fix(&self, text: &str) -> String {
        match self.repair(text) {
            Ok(fixed) if fix_preserves_content(text, &fixed) => fixed,
            _ => text.to_string(),
        }
    }
}

/// A fixed text must keep the number multiset and the terminal '?'.
fn fix_preserves_content(original: &str, fixed: &str) -> bool {
    if !fixed.trim_end().ends_with('?') {
        return false;
    }
    let mut before: Vec<f64> = corpus::extract_numbers(original).iter().map(|t| t.value).collect();
    let mut after: Vec<f64> = corpus::extract_numbers(fixed).iter().map(|t| t.value).collect();
    before.sort_by(f64::total_cmp);
    after.sort_by(f64::total_cmp);
    before == after
}

#[derive(Debug, Error)]
pub enum QuestionReplaceError {
    #[error("record {id}: {source}")]
    Equation {
        id: String,
        #[source]
        source: MathError,
    },
}

const CUES: [&str; 2] = ["how many ", "how much "];

/// Byte range of the last case-insensitive "How many " / "How much " cue.
fn last_cue(text: &str) -> Option<(usize, usize)> {
    let lower = text.to_lowercase();
    CUES.iter()
        .filter_map(|cue| lower.rfind(cue).map(|start| (start, start + cue.len())))
        .max_by_key(|&(start, _)| start)
}

/// Produce the fractional variant of a record, or `None` when the text
/// has no cue phrase. The equation template `X = f(...)` becomes
/// `X = (f(...)) * (x/y)` and the answer is re-evaluated from it.
pub fn question_replace(
    record: &MwpRecord,
    rng: &mut impl Rng,
    fixer: &dyn TextFixer,
) -> Result<Option<MwpRecord>, QuestionReplaceError> {
    let fraction = FractionParams::draw(rng);
    question_replace_with(record, fraction, fixer)
}

/// [`question_replace`] with the fraction chosen by the caller; used by
/// tests pinning (x, y).
pub fn question_replace_with(
    record: &MwpRecord,
    fraction: FractionParams,
    fixer: &dyn TextFixer,
) -> Result<Option<MwpRecord>, QuestionReplaceError> {
    let Some((cue_start, cue_end)) = last_cue(&record.text) else {
        return Ok(None);
    };
    let wrap = |source| QuestionReplaceError::Equation {
        id: record.id.clone(),
        source,
    };
    let eq = mathexpr::parse_equation(&record.equation).map_err(wrap)?;
    let body = match (&eq.lhs, &eq.rhs) {
        (Expr::Unknown, rhs) if !rhs.contains_unknown() => rhs.clone(),
        (lhs, Expr::Unknown) if !lhs.contains_unknown() => lhs.clone(),
        _ => return Err(wrap(MathError::TemplateFormViolation)),
    };
    let scaled = Equation {
        lhs: Expr::Unknown,
        rhs: Expr::Binary(
            BinOp::Mul,
            Box::new(body),
            Box::new(Expr::Binary(
                BinOp::Div,
                Box::new(Expr::Number(f64::from(fraction.x))),
                Box::new(Expr::Number(f64::from(fraction.y))),
            )),
        ),
    };
    let answer = mathexpr::evaluate(&scaled.rhs, None).map_err(wrap)?;
    let spliced = format!(
        "{}What is {}/{} of the {}",
        &record.text[..cue_start],
        fraction.x,
        fraction.y,
        &record.text[cue_end..]
    );
    Ok(Some(MwpRecord {
        id: format!("{}:qr", record.id),
        text: fixer.fix(&spliced),
        equation: scaled.render(),
        answer,
        provenance: Provenance::QuestionRepl,
        parent_id: Some(record.id.clone()),
    }))
}
