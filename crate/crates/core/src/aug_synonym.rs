//! Synonym replacement: lexicon-driven word substitution that leaves
//! every number, the equation, and the answer untouched.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

use crate::corpus::{self, MwpRecord, Provenance};

/// Question cue words that other augmenters key on; never replaced.
const PROTECTED: &[&str] = &[
    "how", "many", "much", "what", "is", "of", "did", "does", "do", "x",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexiconSource {
    Tsv,
    WordnetFiles,
}

/// Case-insensitive word → synonyms table. Synonyms are stored lowercase
/// and an entry never lists the headword itself.
#[derive(Debug, Clone)]
pub struct SynonymLexicon {
    entries: HashMap<String, Vec<String>>,
    pub source: LexiconSource,
}

impl SynonymLexicon {
    /// Build a lexicon from (word, synonyms) pairs, applying the same
    /// normalization as the file loaders.
    pub fn from_entries<I, S>(pairs: I, source: LexiconSource) -> SynonymLexicon
    where
        I: IntoIterator<Item = (S, Vec<S>)>,
        S: AsRef<str>,
    {
        let mut entries = HashMap::new();
        for (word, synonyms) in pairs {
            let word = word.as_ref().trim().to_lowercase();
            let synonyms: Vec<String> = synonyms
                .iter()
                .map(|s| s.as_ref().trim().to_lowercase())
                .filter(|s| !s.is_empty() && *s != word)
                .collect();
            if !word.is_empty() && !synonyms.is_empty() {
                entries.insert(word, synonyms);
            }
        }
        SynonymLexicon { entries, source }
    }

    pub fn lookup(&self, word: &str) -> Option<&[String]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file} line {line}: {message}")]
    Malformed {
        file: String,
        line: usize,
        message: String,
    },
}

/// Load a lexicon from lines of `word<TAB>syn1,syn2,...`.
pub fn load_lexicon_tsv(path: &Path) -> Result<SynonymLexicon, LexiconError> {
    let raw = fs::read_to_string(path).map_err(|source| LexiconError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut pairs = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (word, rest) = line.split_once('\t').ok_or_else(|| LexiconError::Malformed {
            file: path.display().to_string(),
            line: lineno + 1,
            message: "expected `word<TAB>syn1,syn2,...`".into(),
        })?;
        let synonyms: Vec<String> = rest.split(',').map(|s| s.to_string()).collect();
        pairs.push((word.to_string(), synonyms));
    }
    Ok(SynonymLexicon::from_entries(pairs, LexiconSource::Tsv))
}

/// Read WordNet 3.0 plain-text database files (`index.noun`/`data.noun`
/// and friends) from a directory. For each indexed word the synonyms are
/// the other lemmas of its first-listed synset, with underscores turned
/// into spaces. Parts of speech are consulted in the order noun, verb,
/// adjective, adverb; the first part of speech carrying the word wins.
pub fn load_lexicon_wordnet(dir: &Path) -> Result<SynonymLexicon, LexiconError> {
    let mut entries: HashMap<String, Vec<String>> = HashMap::new();
    for pos in ["noun", "verb", "adj", "adv"] {
        let index_path = dir.join(format!("index.{pos}"));
        if !index_path.exists() {
            continue;
        }
        let data_path = dir.join(format!("data.{pos}"));
        let synsets = parse_data_file(&data_path)?;
        let raw = fs::read_to_string(&index_path).map_err(|source| LexiconError::Io {
            path: index_path.display().to_string(),
            source,
        })?;
        for (lineno, line) in raw.lines().enumerate() {
            if line.starts_with(' ') || line.trim().is_empty() {
                continue; // license header
            }
            let (lemma, first_offset) =
                parse_index_line(line).ok_or_else(|| LexiconError::Malformed {
                    file: index_path.display().to_string(),
                    line: lineno + 1,
                    message: "unparseable index line".into(),
                })?;
            let word = lemma.replace('_', " ").to_lowercase();
            if entries.contains_key(&word) {
                continue; // an earlier part of speech already claimed it
            }
            let lemmas = synsets.get(&first_offset).ok_or_else(|| {
                LexiconError::Malformed {
                    file: index_path.display().to_string(),
                    line: lineno + 1,
                    message: format!("synset offset {first_offset} missing from data.{pos}"),
                }
            })?;
            let synonyms: Vec<String> = lemmas
                .iter()
                .map(|l| l.replace('_', " ").to_lowercase())
                .filter(|l| *l != word)
                .collect();
            if !synonyms.is_empty() {
                entries.insert(word, synonyms);
            }
        }
    }
    Ok(SynonymLexicon {
        entries,
        source: LexiconSource::WordnetFiles,
    })
}

/// `lemma pos synset_cnt p_cnt ptr... sense_cnt tagsense_cnt offset...`
/// → (lemma, first offset).
fn parse_index_line(line: &str) -> Option<(String, String)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let lemma = fields.first()?;
    let synset_cnt: usize = fields.get(2)?.parse().ok()?;
    let p_cnt: usize = fields.get(3)?.parse().ok()?;
    if synset_cnt == 0 {
        return None;
    }
    let first_offset = fields.get(4 + p_cnt + 2)?;
    if fields.len() != 4 + p_cnt + 2 + synset_cnt {
        return None;
    }
    Some((lemma.to_string(), first_offset.to_string()))
}

/// Parse `data.pos` into synset offset → member lemmas.
fn parse_data_file(path: &Path) -> Result<HashMap<String, Vec<String>>, LexiconError> {
    let raw = fs::read_to_string(path).map_err(|source| LexiconError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut synsets = HashMap::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.starts_with(' ') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let malformed = |message: String| LexiconError::Malformed {
            file: path.display().to_string(),
            line: lineno + 1,
            message,
        };
        if fields.len() < 4 {
            return Err(malformed("truncated synset line".into()));
        }
        let offset = fields[0].to_string();
        // w_cnt is two-digit hexadecimal; lemmas alternate with lex ids
        let w_cnt = usize::from_str_radix(fields[3], 16)
            .map_err(|_| malformed(format!("bad word count `{}`", fields[3])))?;
        let mut lemmas = Vec::with_capacity(w_cnt);
        for k in 0..w_cnt {
            let idx = 4 + 2 * k;
            let lemma = fields
                .get(idx)
                .ok_or_else(|| malformed("fewer words than word count".into()))?;
            lemmas.push(lemma.to_string());
        }
        synsets.insert(offset, lemmas);
    }
    Ok(synsets)
}

/// Produce the synonym variant of a record: up to `max_replacements`
/// eligible words are swapped for lexicon synonyms, keeping numbers,
/// equation, and answer untouched. Returns `None` when the text offers
/// no eligible word.
///
/// Drawing order is fixed — positions via one index sample, then one
/// synonym choice per position in left-to-right order — so a given rng
/// stream always yields the same variant.
pub fn synonym_replace(
    record: &MwpRecord,
    lexicon: &SynonymLexicon,
    rng: &mut impl Rng,
    max_replacements: usize,
) -> Option<MwpRecord> {
    let text = &record.text;
    let number_spans: Vec<(usize, usize)> = corpus::extract_numbers(text)
        .iter()
        .map(|t| t.char_span)
        .collect();
    let mut candidates = Vec::new();
    for (start, token) in split_tokens(text) {
        let end = start + token.len();
        if !token.chars().all(char::is_alphabetic) {
            continue;
        }
        let lower = token.to_lowercase();
        if PROTECTED.contains(&lower.as_str()) {
            continue;
        }
        if number_spans.iter().any(|&(s, e)| start < e && s < end) {
            continue;
        }
        if lexicon.lookup(&lower).is_some() {
            candidates.push((start, end));
        }
    }
    if candidates.is_empty() {
        return None;
    }
    let k = max_replacements.min(candidates.len());
    let mut chosen: Vec<usize> = sample(rng, candidates.len(), k).into_vec();
    chosen.sort_unstable();
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for &ci in &chosen {
        let (start, end) = candidates[ci];
        let original = &text[start..end];
        let synonyms = lexicon
            .lookup(&original.to_lowercase())
            .expect("candidate came from lexicon");
        let pick = &synonyms[rng.gen_range(0..synonyms.len())];
        out.push_str(&text[cursor..start]);
        out.push_str(&match_first_letter_case(original, pick));
        cursor = end;
    }
    out.push_str(&text[cursor..]);
    Some(MwpRecord {
        id: format!("{}:syn", record.id),
        text: out,
        equation: record.equation.clone(),
        answer: record.answer,
        provenance: Provenance::Synonym,
        parent_id: Some(record.id.clone()),
    })
}

/// Whitespace-separated tokens with their starting byte offsets.
fn split_tokens(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s, &text[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, &text[s..]));
    }
    out
}

/// Copy the case of `original`'s first letter onto `replacement`.
fn match_first_letter_case(original: &str, replacement: &str) -> String {
    let uppercase = original.chars().next().is_some_and(char::is_uppercase);
    if !uppercase {
        return replacement.to_string();
    }
    let mut chars = replacement.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::extract_numbers;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fred() -> MwpRecord {
        MwpRecord {
            id: "fred".into(),
            text: "Fred had 7 dimes in his bank . His sister borrowed 3 of his dimes . How many dimes does Fred have now?".into(),
            equation: "X=7-3".into(),
            answer: 4.0,
            provenance: Provenance::Original,
            parent_id: None,
        }
    }

    fn table_lexicon() -> SynonymLexicon {
        SynonymLexicon::from_entries(
            vec![
                ("bank", vec!["depository financial institution"]),
                ("borrowed", vec!["lent"]),
            ],
            LexiconSource::Tsv,
        )
    }

    #[test]
    fn tsv_loader_basics() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lex.tsv");
        std::fs::write(
            &path,
            "bank\tdepository financial institution\ncat\tcat\nBig\tLarge, huge\n",
        )
        .unwrap();
        let lex = load_lexicon_tsv(&path).unwrap();
        assert_eq!(
            lex.lookup("bank"),
            Some(&["depository financial institution".to_string()][..])
        );
        assert_eq!(lex.lookup("cat"), None, "self-only entries are dropped");
        assert_eq!(
            lex.lookup("BIG"),
            Some(&["large".to_string(), "huge".to_string()][..])
        );
        assert_eq!(lex.len(), 2);
    }

    #[test]
    fn tsv_loader_empty_and_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.tsv");
        std::fs::write(&empty, "").unwrap();
        assert!(load_lexicon_tsv(&empty).unwrap().is_empty());

        let bad = dir.path().join("bad.tsv");
        std::fs::write(&bad, "bank\tvault\nno-tab-here\n").unwrap();
        match load_lexicon_tsv(&bad) {
            Err(LexiconError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed-line error, got {other:?}"),
        }
    }

    #[test]
    fn replaces_table_words_and_keeps_equation() {
        let record = fred();
        // two candidates, max three: both are always replaced
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let out = synonym_replace(&record, &table_lexicon(), &mut rng, 3).unwrap();
        assert!(out.text.contains("depository financial institution"));
        assert!(out.text.contains("lent"));
        assert_eq!(out.equation, "X=7-3");
        assert_eq!(out.answer, 4.0);
        assert_eq!(out.provenance, Provenance::Synonym);
        assert_eq!(out.parent_id.as_deref(), Some("fred"));
        assert_eq!(out.id, "fred:syn");
    }

    #[test]
    fn no_candidates_returns_none() {
        let record = fred();
        let lex = SynonymLexicon::from_entries(
            vec![("zebra", vec!["equine"])],
            LexiconSource::Tsv,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(synonym_replace(&record, &lex, &mut rng, 3).is_none());
    }

    #[test]
    fn protected_words_are_never_touched() {
        let record = fred();
        let lex = SynonymLexicon::from_entries(
            vec![
                ("how", vec!["zzz"]),
                ("many", vec!["zzz"]),
                ("does", vec!["zzz"]),
                ("of", vec!["zzz"]),
            ],
            LexiconSource::Tsv,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(synonym_replace(&record, &lex, &mut rng, 4).is_none());
    }

    #[test]
    fn first_letter_case_is_preserved() {
        let mut record = fred();
        record.text = "Fred counted 7 things . How many did Fred count?".into();
        let lex = SynonymLexicon::from_entries(
            vec![("fred", vec!["alfred"])],
            LexiconSource::Tsv,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = synonym_replace(&record, &lex, &mut rng, 1).unwrap();
        assert!(out.text.contains("Alfred"));
    }

    #[test]
    fn replacement_count_is_bounded() {
        let record = fred();
        let lex = SynonymLexicon::from_entries(
            vec![
                ("dimes", vec!["coins"]),
                ("sister", vec!["sibling"]),
                ("bank", vec!["vault"]),
                ("had", vec!["held"]),
            ],
            LexiconSource::Tsv,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = synonym_replace(&record, &lex, &mut rng, 2).unwrap();
        let changed = ["coins", "sibling", "vault", "held"]
            .iter()
            .filter(|w| out.text.contains(**w))
            .count();
        assert!((1..=2).contains(&changed), "got text {}", out.text);
    }

    #[test]
    fn same_seed_means_same_output() {
        let record = fred();
        let lex = table_lexicon();
        let a = synonym_replace(&record, &lex, &mut ChaCha8Rng::seed_from_u64(7), 3).unwrap();
        let b = synonym_replace(&record, &lex, &mut ChaCha8Rng::seed_from_u64(7), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wordnet_fixture_loads_deterministically() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/wordnet-mini");
        let lex = load_lexicon_wordnet(&dir).unwrap();
        assert_eq!(
            lex.lookup("bank"),
            Some(
                &[
                    "depository financial institution".to_string(),
                    "banking concern".to_string()
                ][..]
            )
        );
        assert_eq!(lex.lookup("borrow"), Some(&["take over".to_string()][..]));
        // "dog" sits alone in its synset, so it gets no entry
        assert_eq!(lex.lookup("dog"), None);
        assert_eq!(lex.lookup("absentword"), None);
        // noun reading of "store" wins over the verb reading
        assert_eq!(lex.lookup("store"), Some(&["shop".to_string()][..]));
        assert!(lex.len() >= 40, "mini fixture should cover the word list");

        let again = load_lexicon_wordnet(&dir).unwrap();
        assert_eq!(lex.lookup("grow"), again.lookup("grow"));
        assert_eq!(lex.len(), again.len());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn numbers_survive_replacement(
            seed in any::<u64>(),
            a in 1..=99u32,
            b in 1..=99u32,
        ) {
            let record = MwpRecord {
                id: "p".into(),
                text: format!(
                    "Fred had {a} dimes in his bank . His sister borrowed {b} of his dimes . How many dimes does Fred have now?"
                ),
                equation: format!("X={a}-{b}"),
                answer: (f64::from(a)) - f64::from(b),
                provenance: Provenance::Original,
                parent_id: None,
            };
            let lex = SynonymLexicon::from_entries(
                vec![
                    ("dimes", vec!["coins", "pieces"]),
                    ("bank", vec!["vault", "depository financial institution"]),
                    ("borrowed", vec!["lent", "took"]),
                    ("sister", vec!["sibling"]),
                    ("had", vec!["held"]),
                ],
                LexiconSource::Tsv,
            );
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = synonym_replace(&record, &lex, &mut rng, 3).unwrap();
            let before: Vec<f64> = extract_numbers(&record.text).iter().map(|t| t.value).collect();
            let after: Vec<f64> = extract_numbers(&out.text).iter().map(|t| t.value).collect();
            prop_assert_eq!(before, after);
            prop_assert_eq!(&out.equation, &record.equation);
            prop_assert_eq!(out.answer, record.answer);
        }
    }
}
