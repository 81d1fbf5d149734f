//! Text normalisation, tokenisation and vocabulary encoding.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MIN_COUNT: usize = 20;

/// Removal rules, applied in the order they are listed in the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StripRule {
    Urls,
    Mentions,
    /// Drops the `#` but keeps the tag text.
    HashtagMarkers,
    Emoji,
    /// Anything that is not a letter, combining mark or whitespace.
    NonLetters,
}

impl StripRule {
    pub const ALL: [StripRule; 5] = [
        StripRule::Urls,
        StripRule::Mentions,
        StripRule::HashtagMarkers,
        StripRule::Emoji,
        StripRule::NonLetters,
    ];

    fn pattern(self) -> &'static Regex {
        static PATTERNS: OnceLock<[Regex; 5]> = OnceLock::new();
        let all = PATTERNS.get_or_init(|| {
            [
                Regex::new(r"(?i)\b(?:https?://|www\.)\S*").unwrap(),
                Regex::new(r"@\w+").unwrap(),
                Regex::new(r"#").unwrap(),
                Regex::new(r"[\p{Extended_Pictographic}\p{Emoji_Modifier}\u{200D}\u{FE0F}]")
                    .unwrap(),
                Regex::new(r"[^\p{L}\p{M}\s]+").unwrap(),
            ]
        });
        &all[self as usize]
    }

    fn replacement(self) -> &'static str {
        match self {
            StripRule::HashtagMarkers => "",
            _ => " ",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    #[serde(default)]
    pub stopwords: HashSet<String>,
    #[serde(default = "default_rules")]
    pub strip_rules: Vec<StripRule>,
    /// Program and arguments of a line-in/line-out segmenter.
    #[serde(default)]
    pub external_tokenizer: Option<Vec<String>>,
    #[serde(default = "yes")]
    pub lowercase: bool,
}

fn default_rules() -> Vec<StripRule> {
    StripRule::ALL.to_vec()
}

fn yes() -> bool {
    true
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            stopwords: HashSet::new(),
            strip_rules: default_rules(),
            external_tokenizer: None,
            lowercase: true,
        }
    }
}

/// Reads one stopword per line; blank lines are ignored.
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

pub fn strip(text: &str, rules: &[StripRule]) -> String {
    let mut out = text.to_string();
    for rule in rules {
        out = rule
            .pattern()
            .replace_all(&out, rule.replacement())
            .into_owned();
    }
    out
}

fn finish(tokens: impl Iterator<Item = String>, cfg: &TokenizerConfig) -> Vec<String> {
    tokens
        .filter(|t| !t.is_empty())
        .filter_map(|t| {
            let norm = if cfg.lowercase { t.to_lowercase() } else { t };
            (!cfg.stopwords.contains(&norm)).then_some(norm)
        })
        .collect()
}

fn whitespace_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(str::to_string)
}

/// Strip, segment, drop stopwords, lowercase.
pub fn preprocess(text: &str, cfg: &TokenizerConfig) -> Vec<String> {
    preprocess_batch(&[text], cfg).pop().unwrap_or_default()
}

/// Like [`preprocess`] over many texts, running an external tokenizer at most once.
pub fn preprocess_batch<S: AsRef<str>>(texts: &[S], cfg: &TokenizerConfig) -> Vec<Vec<String>> {
    let stripped: Vec<String> = texts
        .iter()
        .map(|t| strip(t.as_ref(), &cfg.strip_rules))
        .collect();
    if let Some(cmd) = cfg.external_tokenizer.as_deref().filter(|c| !c.is_empty()) {
        match run_external(cmd, &stripped) {
            Ok(lines) => {
                return lines
                    .iter()
                    .map(|l| finish(whitespace_tokens(l), cfg))
                    .collect()
            }
            Err(msg) => log::warn!(
                "external tokenizer `{}` failed ({msg}); falling back to whitespace",
                cmd.join(" ")
            ),
        }
    }
    stripped
        .iter()
        .map(|s| finish(whitespace_tokens(s), cfg))
        .collect()
}

/// Writes one text per line to the child and reads one token line per input.
fn run_external(cmd: &[String], texts: &[String]) -> std::result::Result<Vec<String>, String> {
    let mut child = Command::new(&cmd[0])
        .args(&cmd[1..])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut stdin = child.stdin.take().ok_or("no stdin")?;
    let payload: String = texts
        .iter()
        .map(|t| t.replace(['\n', '\r'], " ") + "\n")
        .collect();
    let writer = std::thread::spawn(move || stdin.write_all(payload.as_bytes()));
    let stdout = child.stdout.take().ok_or("no stdout")?;
    let lines: Vec<String> = BufReader::new(stdout)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| e.to_string())?;
    let status = child.wait().map_err(|e| e.to_string())?;
    writer
        .join()
        .map_err(|_| "writer thread panicked".to_string())?
        .map_err(|e| e.to_string())?;
    if !status.success() {
        return Err(format!("exit status {status}"));
    }
    if lines.len() != texts.len() {
        return Err(format!(
            "expected {} lines, got {}",
            texts.len(),
            lines.len()
        ));
    }
    Ok(lines)
}

/// Dense token ids ordered by descending frequency, ties lexicographic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    #[serde(skip)]
    index: HashMap<String, u32>,
    pub min_count: usize,
}

impl Vocabulary {
    fn from_sorted(tokens: Vec<String>, counts: Vec<u64>, min_count: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            tokens,
            counts,
            index,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

pub fn build_vocabulary<S: AsRef<str>>(docs: &[Vec<S>], min_count: usize) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::InvalidInput("min_count must be at least 1".into()));
    }
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for tok in docs.iter().flatten() {
        *freq.entry(tok.as_ref()).or_default() += 1;
    }
    let mut kept: Vec<(&str, u64)> = freq
        .into_iter()
        .filter(|&(_, c)| c >= min_count as u64)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary { min_count });
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let (tokens, counts) = kept.into_iter().map(|(t, c)| (t.to_string(), c)).unzip();
    Ok(Vocabulary::from_sorted(tokens, counts, min_count))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedDoc {
    pub id: String,
    pub tokens: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedCorpus {
    pub docs: Vec<EncodedDoc>,
    pub vocab: Vocabulary,
    /// Documents removed because none of their tokens are in the vocabulary.
    pub dropped_empty: usize,
    /// Out-of-vocabulary tokens dropped from retained and removed documents.
    pub dropped_tokens: usize,
}

impl EncodedCorpus {
    pub fn total_tokens(&self) -> usize {
        self.docs.iter().map(|d| d.tokens.len()).sum()
    }

    pub fn decode(&self, doc: &EncodedDoc) -> Vec<&str> {
        doc.tokens.iter().map(|&id| self.vocab.token(id)).collect()
    }
}

/// Map tokens to ids, dropping out-of-vocabulary tokens and emptied documents.
pub fn encode<I, S>(docs: I, vocab: Vocabulary) -> EncodedCorpus
where
    I: IntoIterator<Item = (String, Vec<S>)>,
    S: AsRef<str>,
{
    let mut out = Vec::new();
    let mut dropped_empty = 0;
    let mut dropped_tokens = 0;
    for (id, tokens) in docs {
        let ids: Vec<u32> = tokens.iter().filter_map(|t| vocab.id(t.as_ref())).collect();
        dropped_tokens += tokens.len() - ids.len();
        if ids.is_empty() {
            dropped_empty += 1;
        } else {
            out.push(EncodedDoc { id, tokens: ids });
        }
    }
    EncodedCorpus {
        docs: out,
        vocab,
        dropped_empty,
        dropped_tokens,
    }
}
