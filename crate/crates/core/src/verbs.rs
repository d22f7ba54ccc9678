//! Verb conjugation for question/statement rewriting: a bundled
//! irregular-verb table (base, past, third-person) plus regular
//! inflection fallbacks for everything else.

use std::collections::HashMap;
use std::sync::OnceLock;

use thiserror::Error;

const BUILTIN_TSV: &str = include_str!("../fixtures/irregular_verbs.tsv");

/// Tense recovered from a surface verb form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerbTense {
    Past,
    ThirdPresent,
    Plain,
}

#[derive(Debug, Error, PartialEq)]
pub enum VerbError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// base → inflection maps in both directions. Forward maps keep the
/// first row for a base ("be" conjugates to "was"/"is"); reverse maps
/// accept every row (both "was" and "were" resolve back to "be").
#[derive(Debug, Default)]
pub struct VerbTable {
    past: HashMap<String, String>,
    third: HashMap<String, String>,
    base_of_past: HashMap<String, String>,
    base_of_third: HashMap<String, String>,
}

impl VerbTable {
    /// Parse "base<TAB>past<TAB>third" lines; '#' starts a comment.
    pub fn from_tsv(text: &str) -> Result<Self, VerbError> {
        let mut table = VerbTable::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields.iter().any(|f| f.trim().is_empty()) {
                return Err(VerbError::Malformed {
                    line: i + 1,
                    message: "expected three tab-separated verb forms".into(),
                });
            }
            let base = fields[0].trim().to_lowercase();
            let past = fields[1].trim().to_lowercase();
            let third = fields[2].trim().to_lowercase();
            table.past.entry(base.clone()).or_insert_with(|| past.clone());
            table.third.entry(base.clone()).or_insert_with(|| third.clone());
            table.base_of_past.insert(past, base.clone());
            table.base_of_third.insert(third, base);
        }
        Ok(table)
    }

    /// The bundled table, parsed once.
    pub fn builtin() -> &'static VerbTable {
        static TABLE: OnceLock<VerbTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            VerbTable::from_tsv(BUILTIN_TSV).expect("bundled verb table is well-formed")
        })
    }

    /// Third-person singular present of a base form.
    pub fn third_person(&self, verb: &str) -> String {
        let lower = verb.to_lowercase();
        if let Some(t) = self.third.get(&lower) {
            return t.clone();
        }
        let mut chars = lower.chars().rev();
        let last = chars.next();
        let prev = chars.next();
        match (prev, last) {
            (Some(p), Some('y')) if !"aeiou".contains(p) => format!("{}ies", &lower[..lower.len() - 1]),
            (_, Some('s' | 'x' | 'z' | 'o')) => format!("{lower}es"),
            _ if lower.ends_with("ch") || lower.ends_with("sh") => format!("{lower}es"),
            _ => format!("{lower}s"),
        }
    }

    /// Simple past of a base form.
    pub fn past(&self, verb: &str) -> String {
        let lower = verb.to_lowercase();
        if let Some(p) = self.past.get(&lower) {
            return p.clone();
        }
        let mut chars = lower.chars().rev();
        let last = chars.next();
        let prev = chars.next();
        match (prev, last) {
            (_, Some('e')) => format!("{lower}d"),
            (Some(p), Some('y')) if !"aeiou".contains(p) => format!("{}ied", &lower[..lower.len() - 1]),
            _ => format!("{lower}ed"),
        }
    }

    /// Recover (base form, tense) from a surface form: table lookups
    /// first, then suffix rules, else the form is taken as plain.
    pub fn base_and_tense(&self, verb: &str) -> (String, VerbTense) {
        let lower = verb.to_lowercase();
        if let Some(base) = self.base_of_past.get(&lower) {
            return (base.clone(), VerbTense::Past);
        }
        if let Some(base) = self.base_of_third.get(&lower) {
            return (base.clone(), VerbTense::ThirdPresent);
        }
        // a listed base is plain even when it happens to end in "ed"
        // ("need") or "s" — the table wins over suffix guesses
        if self.past.contains_key(&lower) {
            return (lower, VerbTense::Plain);
        }
        if lower.len() > 4 && lower.ends_with("ied") {
            return (format!("{}y", &lower[..lower.len() - 3]), VerbTense::Past);
        }
        if lower.len() > 3 && lower.ends_with("ed") {
            return (lower[..lower.len() - 2].to_string(), VerbTense::Past);
        }
        if lower.len() > 4 && lower.ends_with("ies") {
            return (format!("{}y", &lower[..lower.len() - 3]), VerbTense::ThirdPresent);
        }
        if lower.len() > 2 && lower.ends_with('s') && !lower.ends_with("ss") {
            return (lower[..lower.len() - 1].to_string(), VerbTense::ThirdPresent);
        }
        (lower, VerbTense::Plain)
    }
}
