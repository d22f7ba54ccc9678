//! Reversing question: swap the roles of the question and one
//! number-bearing statement. The old answer moves into a generated
//! supporting statement, the chosen number becomes the new unknown, and
//! the equation is rebuilt around it.

use rand::Rng;
use thiserror::Error;

use crate::corpus::{self, MwpRecord, NumberToken, Provenance};
use crate::mathexpr::{self, format_number, Expr, MathError};
use crate::verbs::{VerbTable, VerbTense};

/// A record text cut into its statement sentences and the final
/// question. `token_indices` index into `tokens`, the numbers found in
/// the whole normalized text.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceSplit {
    pub statements: Vec<SentenceRef>,
    pub question: String,
    pub tokens: Vec<NumberToken>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceRef {
    pub text: String,
    pub token_indices: Vec<usize>,
}

/// Where the generated supporting statement lands in the output text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SupportPosition {
    /// Before the retained statements (matches the published example).
    #[default]
    Prepend,
    /// After the retained statements, just before the new question.
    Append,
}

/// Why a record produced no reversed variant.
#[derive(Debug, Error, PartialEq)]
pub enum ReverseSkip {
    #[error("text contains {0} question marks, expected exactly 1")]
    QuestionMarkCount(usize),
    #[error("the question is not the final sentence")]
    QuestionNotFinal,
    #[error("equation error: {0}")]
    Equation(MathError),
    #[error("question matches no reversal pattern")]
    QuestionPatternUnmatched,
    #[error("no statement has a number aligned to an equation literal and a convertible shape")]
    NoConvertibleStatement,
}

/// Split normalized text into '.'/'!'-terminated statements and the
/// final '?'-terminated question. A '.' between two digits (a decimal
/// point) never ends a sentence.
pub fn split_sentences(text: &str) -> Result<SentenceSplit, ReverseSkip> {
    let normalized = corpus::normalize_text(text);
    let marks = normalized.matches('?').count();
    if marks != 1 {
        return Err(ReverseSkip::QuestionMarkCount(marks));
    }
    let bytes = normalized.as_bytes();
    let mut sentences = Vec::new();
    let mut start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        let is_decimal_point = b == b'.'
            && i > 0
            && i + 1 < bytes.len()
            && bytes[i - 1].is_ascii_digit()
            && bytes[i + 1].is_ascii_digit();
        if (b == b'.' || b == b'!' || b == b'?') && !is_decimal_point {
            let sentence = normalized[start..=i].trim();
            if !sentence.is_empty() {
                sentences.push((start, sentence.to_string()));
            }
            start = i + 1;
        }
    }
    let tail = normalized[start..].trim();
    if !tail.is_empty() {
        sentences.push((start, tail.to_string()));
    }
    match sentences.last() {
        Some((_, last)) if last.ends_with('?') => {}
        _ => return Err(ReverseSkip::QuestionNotFinal),
    }
    let question = sentences.pop().expect("checked non-empty").1;
    let tokens = corpus::extract_numbers(&normalized);
    let statements = sentences
        .into_iter()
        .map(|(offset, text)| {
            let end = offset + text.len() + 1;
            let token_indices = tokens
                .iter()
                .enumerate()
                .filter(|(_, t)| t.char_span.0 >= offset && t.char_span.1 <= end)
                .map(|(i, _)| i)
                .collect();
            SentenceRef {
                text,
                token_indices,
            }
        })
        .collect();
    Ok(SentenceSplit {
        statements,
        question,
        tokens,
    })
}

/// Determiners and possessives that extend a subject phrase up to its
/// head noun ("his sister", "the baker").
const DETERMINERS: &[&str] = &[
    "the", "a", "an", "his", "her", "their", "my", "our", "its", "your", "this", "that", "these",
    "those", "each", "every", "all", "both",
];

/// Personal pronouns that form a complete subject on their own.
const PRONOUNS: &[&str] = &["he", "she", "they", "it", "we", "you", "i"];

fn is_determiner(token: &str) -> bool {
    DETERMINERS.contains(&token.to_lowercase().as_str())
}

/// Function words lowercased when a sentence-initial subject moves into
/// the middle of a generated question ("His sister" → "his sister").
fn is_subject_function_word(token: &str) -> bool {
    let lower = token.to_lowercase();
    DETERMINERS.contains(&lower.as_str()) || PRONOUNS.contains(&lower.as_str())
}

/// Turn a "How many/much ... does/did/do ..." question plus its answer
/// into a declarative supporting statement, e.g.
/// `("How many dimes does Fred have now?", 4)` → `"Fred has 4 dimes now."`.
/// Returns `None` for questions outside the pattern family.
pub fn question_to_statement(question: &str, answer: f64) -> Option<String> {
    let verbs = VerbTable::builtin();
    let trimmed = question.trim().strip_suffix('?')?.trim_end();
    let tokens: Vec<&str> = trimmed.split_whitespace().collect();
    if tokens.len() < 3 || !tokens[0].eq_ignore_ascii_case("how") {
        return None;
    }
    if !tokens[1].eq_ignore_ascii_case("many") && !tokens[1].eq_ignore_ascii_case("much") {
        return None;
    }
    let aux_idx = tokens
        .iter()
        .position(|t| matches!(t.to_lowercase().as_str(), "does" | "did" | "do"))?;
    let noun_phrase = &tokens[2..aux_idx];
    let after = &tokens[aux_idx + 1..];
    if noun_phrase.is_empty() || after.len() < 2 {
        return None;
    }
    // a pronoun is a whole subject; otherwise determiners + head noun
    let head = if PRONOUNS.contains(&after[0].to_lowercase().as_str()) {
        0
    } else {
        let mut h = 0;
        while h < after.len() && is_determiner(after[h]) {
            h += 1;
        }
        h
    };
    if head + 1 >= after.len() {
        return None;
    }
    let subject = &after[..head + 1];
    let verb = after[head + 1];
    let rest = &after[head + 2..];
    let conjugated = match tokens[aux_idx].to_lowercase().as_str() {
        "does" => verbs.third_person(verb),
        "did" => verbs.past(verb),
        _ => verb.to_string(),
    };
    let mut parts: Vec<String> = Vec::new();
    parts.extend(subject.iter().map(|t| t.to_string()));
    parts.push(conjugated);
    parts.push(format_number(answer));
    parts.extend(noun_phrase.iter().map(|t| t.to_string()));
    parts.extend(rest.iter().map(|t| t.to_string()));
    Some(format!("{}.", parts.join(" ")))
}

fn strip_punct(token: &str) -> &str {
    token.trim_matches(|c: char| matches!(c, ',' | '.' | ';' | ':' | '!'))
}

/// Turn a statement whose verb directly precedes `target` into a
/// question about that number, e.g. `"Fred had 7 dimes in his bank ."`
/// with target 7 → `"How many dimes in his bank did Fred have?"`.
pub fn statement_to_question(statement: &str, target: &NumberToken) -> Option<String> {
    let verbs = VerbTable::builtin();
    let trimmed = statement.trim().trim_end_matches(['.', '!']).trim_end();
    let tokens: Vec<&str> = trimmed.split_whitespace().collect();
    let num_idx = tokens
        .iter()
        .position(|t| strip_punct(t) == target.surface)?;
    // need a verb before the number and a subject before the verb
    if num_idx < 2 {
        return None;
    }
    let verb = tokens[num_idx - 1];
    let subject = &tokens[..num_idx - 1];
    let tail = &tokens[num_idx + 1..];
    let (base, tense) = verbs.base_and_tense(verb);
    if base == "be" {
        // "How many dimes did there be?" is not a sentence; skip
        return None;
    }
    let aux = match tense {
        VerbTense::Past => "did",
        VerbTense::ThirdPresent => "does",
        VerbTense::Plain => "do",
    };
    let mut parts: Vec<String> = vec!["How".into(), "many".into()];
    parts.extend(tail.iter().map(|t| t.to_string()));
    parts.push(aux.into());
    for (i, token) in subject.iter().enumerate() {
        // "His sister" reads as "his sister" once it moves mid-sentence
        if i == 0 && is_subject_function_word(token) {
            parts.push(token.to_lowercase());
        } else {
            parts.push(token.to_string());
        }
    }
    parts.push(base);
    Some(format!("{}?", parts.join(" ")))
}

/// Strip the space that pre-tokenized corpora leave before a terminal
/// '.', '!', or '?' — generated problems read "3 of his dimes." rather
/// than "3 of his dimes .".
fn tidy_sentence(sentence: &str) -> String {
    let s = sentence.trim();
    match s.char_indices().last() {
        Some((i, c)) if matches!(c, '.' | '!' | '?') => {
            format!("{}{}", s[..i].trim_end(), c)
        }
        _ => s.to_string(),
    }
}

/// All reversal candidates for a record, in statement order: one per
/// statement holding a number aligned to an equation literal, where the
/// statement also converts to a question. The error reports why no
/// candidate could be built.
pub fn reverse_question_all(record: &MwpRecord) -> Result<Vec<MwpRecord>, ReverseSkip> {
    reverse_question_all_at(record, SupportPosition::default())
}

/// `reverse_question_all` with an explicit supporting-statement position.
pub fn reverse_question_all_at(
    record: &MwpRecord,
    position: SupportPosition,
) -> Result<Vec<MwpRecord>, ReverseSkip> {
    let eq = mathexpr::parse_equation(&record.equation).map_err(ReverseSkip::Equation)?;
    let template_ok = matches!(&eq.lhs, Expr::Unknown) && !eq.rhs.contains_unknown()
        || matches!(&eq.rhs, Expr::Unknown) && !eq.lhs.contains_unknown();
    if !template_ok {
        return Err(ReverseSkip::Equation(MathError::TemplateFormViolation));
    }
    let split = split_sentences(&record.text)?;
    let supporting = question_to_statement(&split.question, record.answer)
        .ok_or(ReverseSkip::QuestionPatternUnmatched)?;
    let literals = eq.literals();
    let alignment = corpus::align(&split.tokens, &literals);
    let mut out = Vec::new();
    for (si, statement) in split.statements.iter().enumerate() {
        // first aligned number in this statement drives the candidate
        let Some((ti, li)) = statement.token_indices.iter().find_map(|&ti| {
            alignment
                .pairs
                .iter()
                .find(|&&(pt, _)| pt == ti)
                .map(|&(_, li)| (ti, li))
        }) else {
            continue;
        };
        let token = &split.tokens[ti];
        let Some(new_question) = statement_to_question(&statement.text, token) else {
            continue;
        };
        // literal indices over the whole equation equal body indices
        // because the unknown side holds no literals
        let new_eq = match mathexpr::replace_literal_with_unknown(&eq, li, record.answer) {
            Ok(eq) => eq,
            Err(_) => continue,
        };
        let mut sentences: Vec<String> = Vec::new();
        if position == SupportPosition::Prepend {
            sentences.push(tidy_sentence(&supporting));
        }
        for (sj, other) in split.statements.iter().enumerate() {
            if sj != si {
                sentences.push(tidy_sentence(&other.text));
            }
        }
        if position == SupportPosition::Append {
            sentences.push(tidy_sentence(&supporting));
        }
        sentences.push(tidy_sentence(&new_question));
        out.push(MwpRecord {
            id: format!("{}:rev{}", record.id, out.len()),
            text: sentences.join(" "),
            equation: new_eq.render(),
            answer: token.value,
            provenance: Provenance::Reverse,
            parent_id: Some(record.id.clone()),
        });
    }
    if out.is_empty() {
        return Err(ReverseSkip::NoConvertibleStatement);
    }
    Ok(out)
}

/// Emit one rng-chosen reversal candidate for the record. Published
/// dataset sizes imply at most one reversed problem per original; the
/// emit-all variant stays available as `reverse_question_all`.
pub fn reverse_question(
    record: &MwpRecord,
    rng: &mut impl Rng,
) -> Result<Vec<MwpRecord>, ReverseSkip> {
    let candidates = reverse_question_all(record)?;
    let pick = rng.gen_range(0..candidates.len());
    let mut chosen = candidates.into_iter().nth(pick).expect("index in range");
    chosen.id = format!("{}:rev", record.id);
    Ok(vec![chosen])
}
