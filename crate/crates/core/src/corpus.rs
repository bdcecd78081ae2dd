//! Trajectory corpora: line-delimited ingestion, the action tokenizer and
//! horizon accounting.
//!
//! A corpus file holds one JSON object per line:
//!
//! ```text
//! {"id": "t-0001", "steps": [{"observation": "...", "action": "..."}, ...]}
//! ```
//!
//! Actions are split into whitespace-delimited words grouped into sentences.
//! Every downstream count (frequencies, horizons, compression rates) is taken
//! over these word tokens.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LarError, Result};

/// Opening delimiter of latent symbols. Never survives tokenization.
pub const RESERVED_OPEN: char = '\u{27E8}';
/// Closing delimiter of latent symbols. Never survives tokenization.
pub const RESERVED_CLOSE: char = '\u{27E9}';

const OPEN_SUBSTITUTE: char = '\u{2039}';
const CLOSE_SUBSTITUTE: char = '\u{203A}';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum TokenizerMode {
    #[default]
    #[serde(rename = "words")]
    Words,
    #[serde(rename = "words+html")]
    WordsPlusHtml,
}

impl TokenizerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenizerMode::Words => "words",
            TokenizerMode::WordsPlusHtml => "words+html",
        }
    }
}

impl fmt::Display for TokenizerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TokenizerMode {
    type Err = LarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "words" => Ok(TokenizerMode::Words),
            "words+html" | "words_plus_html_tags" => Ok(TokenizerMode::WordsPlusHtml),
            other => Err(LarError::InvalidConfig(format!(
                "unknown tokenizer {other:?} (expected words or words+html)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub text: Arc<str>,
    pub sentence_index: u32,
}

impl Token {
    pub fn new(text: impl Into<Arc<str>>, sentence_index: u32) -> Self {
        Token {
            text: text.into(),
            sentence_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub observation: String,
    pub action: String,
    pub action_tokens: Vec<Token>,
}

impl Step {
    pub fn new(observation: impl Into<String>, action: impl Into<String>, mode: TokenizerMode) -> Self {
        let action = action.into();
        let action_tokens = tokenize_action(&action, mode);
        Step {
            observation: observation.into(),
            action,
            action_tokens,
        }
    }

    /// Steps whose action tokenizes to nothing take no part in mining.
    pub fn is_empty(&self) -> bool {
        self.action_tokens.is_empty()
    }

    /// Token ranges `[start, end)` of each sentence, in order.
    pub fn sentence_ranges(&self) -> SentenceRanges<'_> {
        SentenceRanges {
            tokens: &self.action_tokens,
            pos: 0,
        }
    }
}

/// Iterator over `[start, end)` token ranges sharing a sentence index.
pub struct SentenceRanges<'a> {
    tokens: &'a [Token],
    pos: usize,
}

impl Iterator for SentenceRanges<'_> {
    type Item = (usize, usize);

    fn next(&mut self) -> Option<(usize, usize)> {
        let start = self.pos;
        let first = self.tokens.get(start)?;
        let end = self.tokens[start..]
            .iter()
            .position(|t| t.sentence_index != first.sentence_index)
            .map_or(self.tokens.len(), |off| start + off);
        self.pos = end;
        Some((start, end))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub id: String,
    pub steps: Vec<Step>,
}

impl Trajectory {
    /// Flattened action-token stream across all steps.
    pub fn action_tokens(&self) -> impl Iterator<Item = &Token> + '_ {
        self.steps.iter().flat_map(|s| s.action_tokens.iter())
    }

    /// Equality of ids, observations and action tokens, ignoring raw action text.
    pub fn tokens_eq(&self, other: &Trajectory) -> bool {
        self.id == other.id
            && self.steps.len() == other.steps.len()
            && self
                .steps
                .iter()
                .zip(&other.steps)
                .all(|(a, b)| a.observation == b.observation && a.action_tokens == b.action_tokens)
    }
}

/// Effective action horizon: the total number of action tokens.
pub fn effective_horizon(trajectory: &Trajectory) -> usize {
    trajectory.steps.iter().map(|s| s.action_tokens.len()).sum()
}

/// One line of a trajectory file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub id: String,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    #[serde(default)]
    pub observation: String,
    pub action: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub trajectories: Vec<Trajectory>,
    pub tokenizer_mode: TokenizerMode,
}

impl Corpus {
    pub fn from_records(records: Vec<TrajectoryRecord>, mode: TokenizerMode) -> Result<Corpus> {
        let mut builder = CorpusBuilder::new(mode);
        for (i, record) in records.into_iter().enumerate() {
            builder.push(record, i + 1)?;
        }
        builder.finish()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn total_effective_horizon(&self) -> usize {
        self.trajectories.iter().map(effective_horizon).sum()
    }

    /// Content digest over ids, observations and action tokens.
    pub fn digest(&self) -> String {
        trajectories_digest(&self.trajectories)
    }

    /// Splits the corpus into contiguous shards with the given sizes (which
    /// must sum to `len()`).
    pub fn shards(&self, sizes: &[usize]) -> Vec<Corpus> {
        let mut out = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &n in sizes {
            out.push(Corpus {
                trajectories: self.trajectories[start..start + n].to_vec(),
                tokenizer_mode: self.tokenizer_mode,
            });
            start += n;
        }
        out
    }
}

/// SHA-256 over a canonical serialization of the trajectories.
pub fn trajectories_digest<'a>(trajectories: impl IntoIterator<Item = &'a Trajectory>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"lar-corpus-v1\n");
    for t in trajectories {
        hasher.update(t.id.as_bytes());
        hasher.update([0x1e]);
        for step in &t.steps {
            hasher.update(step.observation.as_bytes());
            hasher.update([0x1d]);
            for tok in &step.action_tokens {
                hasher.update(tok.text.as_bytes());
                hasher.update([0x1f]);
                hasher.update(tok.sentence_index.to_le_bytes());
            }
            hasher.update([0x1d]);
        }
        hasher.update([0x1c]);
    }
    to_hex(&hasher.finalize())
}

pub(crate) fn to_hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

struct CorpusBuilder {
    mode: TokenizerMode,
    interner: Interner,
    ids: HashSet<String>,
    trajectories: Vec<Trajectory>,
}

impl CorpusBuilder {
    fn new(mode: TokenizerMode) -> Self {
        CorpusBuilder {
            mode,
            interner: Interner::default(),
            ids: HashSet::new(),
            trajectories: Vec::new(),
        }
    }

    fn push(&mut self, record: TrajectoryRecord, line: usize) -> Result<()> {
        if record.steps.is_empty() {
            return Err(LarError::Parse {
                line,
                reason: "trajectory has no steps".into(),
            });
        }
        if !self.ids.insert(record.id.clone()) {
            return Err(LarError::DuplicateId { id: record.id, line });
        }
        let steps = record
            .steps
            .into_iter()
            .map(|s| {
                let mut action_tokens = Vec::new();
                tokenize_into(&s.action, self.mode, |text, sentence_index| {
                    action_tokens.push(Token {
                        text: self.interner.intern(text),
                        sentence_index,
                    })
                });
                Step {
                    observation: s.observation,
                    action: s.action,
                    action_tokens,
                }
            })
            .collect();
        self.trajectories.push(Trajectory { id: record.id, steps });
        Ok(())
    }

    fn finish(self) -> Result<Corpus> {
        if self.trajectories.is_empty() {
            return Err(LarError::EmptyCorpus);
        }
        Ok(Corpus {
            trajectories: self.trajectories,
            tokenizer_mode: self.mode,
        })
    }
}

#[derive(Default)]
struct Interner {
    set: HashSet<Arc<str>>,
}

impl Interner {
    fn intern(&mut self, text: &str) -> Arc<str> {
        if let Some(s) = self.set.get(text) {
            return Arc::clone(s);
        }
        let s: Arc<str> = Arc::from(text);
        self.set.insert(Arc::clone(&s));
        s
    }
}

/// Loads a trajectory file in strict mode.
pub fn load_corpus(path: impl AsRef<Path>, mode: TokenizerMode) -> Result<Corpus> {
    load_corpus_with(path, mode, ParseMode::Strict).map(|(c, _)| c)
}

/// Loads a trajectory file. In lenient mode malformed lines are skipped and
/// reported instead of aborting the load.
pub fn load_corpus_with(
    path: impl AsRef<Path>,
    mode: TokenizerMode,
    parse: ParseMode,
) -> Result<(Corpus, Vec<SkippedLine>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| LarError::io(path, e))?;
    read_corpus(BufReader::new(file), mode, parse).map_err(|e| match e {
        LarError::Io { source, .. } => LarError::io(path, source),
        other => other,
    })
}

pub fn read_corpus(
    reader: impl BufRead,
    mode: TokenizerMode,
    parse: ParseMode,
) -> Result<(Corpus, Vec<SkippedLine>)> {
    let mut builder = CorpusBuilder::new(mode);
    let mut skipped = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| LarError::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let outcome = serde_json::from_str::<TrajectoryRecord>(&line)
            .map_err(|e| LarError::Parse {
                line: lineno,
                reason: e.to_string(),
            })
            .and_then(|record| builder.push(record, lineno));
        match (outcome, parse) {
            (Ok(()), _) => {}
            (Err(e), ParseMode::Strict) => return Err(e),
            (Err(e), ParseMode::Lenient) => skipped.push(SkippedLine {
                line: lineno,
                reason: e.to_string(),
            }),
        }
    }
    Ok((builder.finish()?, skipped))
}

/// Splits an action into word tokens annotated with sentence ordinals.
///
/// Words are maximal non-whitespace runs. A sentence ends at a newline or
/// after a word ending in `.`, `!` or `?`. In `words+html` mode every
/// `<...>` run without whitespace or nested angle brackets is its own token
/// and sits in a sentence of its own. The reserved latent-symbol delimiters
/// are replaced by `‹`/`›`.
pub fn tokenize_action(text: &str, mode: TokenizerMode) -> Vec<Token> {
    let mut out = Vec::new();
    tokenize_into(text, mode, |t, s| out.push(Token::new(t, s)));
    out
}

struct SentenceTracker {
    index: u32,
    emitted: bool,
    pending_break: bool,
}

impl SentenceTracker {
    fn emit(&mut self, text: &str, sink: &mut impl FnMut(&str, u32)) {
        if self.pending_break && self.emitted {
            self.index += 1;
        }
        self.pending_break = false;
        self.emitted = true;
        if text.contains([RESERVED_OPEN, RESERVED_CLOSE]) {
            let cleaned: String = text
                .chars()
                .map(|c| match c {
                    RESERVED_OPEN => OPEN_SUBSTITUTE,
                    RESERVED_CLOSE => CLOSE_SUBSTITUTE,
                    c => c,
                })
                .collect();
            sink(&cleaned, self.index);
        } else {
            sink(text, self.index);
        }
    }

    fn emit_word(&mut self, word: &str, sink: &mut impl FnMut(&str, u32)) {
        self.emit(word, sink);
        if word.ends_with(['.', '!', '?']) {
            self.pending_break = true;
        }
    }
}

pub(crate) fn tokenize_into(text: &str, mode: TokenizerMode, mut sink: impl FnMut(&str, u32)) {
    let mut tracker = SentenceTracker {
        index: 0,
        emitted: false,
        pending_break: false,
    };
    let mut rest = text;
    loop {
        let ws_len = rest.len() - rest.trim_start().len();
        if rest[..ws_len].contains('\n') {
            tracker.pending_break = true;
        }
        rest = &rest[ws_len..];
        if rest.is_empty() {
            break;
        }
        let word_len = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let (word, tail) = rest.split_at(word_len);
        match mode {
            TokenizerMode::Words => tracker.emit_word(word, &mut sink),
            TokenizerMode::WordsPlusHtml => split_tags(word, &mut tracker, &mut sink),
        }
        rest = tail;
    }
}

fn split_tags(chunk: &str, tracker: &mut SentenceTracker, sink: &mut impl FnMut(&str, u32)) {
    let mut rest = chunk;
    while let Some((start, end)) = find_tag(rest) {
        if start > 0 {
            tracker.emit_word(&rest[..start], sink);
        }
        tracker.pending_break = true;
        tracker.emit(&rest[start..end], sink);
        tracker.pending_break = true;
        rest = &rest[end..];
    }
    if !rest.is_empty() {
        tracker.emit_word(rest, sink);
    }
}

/// Byte range of the first well-formed tag in a whitespace-free chunk.
fn find_tag(chunk: &str) -> Option<(usize, usize)> {
    let bytes = chunk.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            let mut j = i + 1;
            while j < bytes.len() && bytes[j] != b'<' && bytes[j] != b'>' {
                j += 1;
            }
            if j < bytes.len() && bytes[j] == b'>' && j > i + 1 {
                return Some((i, j + 1));
            }
            i = j;
        } else {
            i += 1;
        }
    }
    None
}
