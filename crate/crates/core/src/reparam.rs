//! Longest-first compression of trajectories into latent symbols, exact
//! expansion, and horizon/rate accounting.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::corpus::{effective_horizon, Corpus, Step, Token, Trajectory};
use crate::error::{LarError, Result};
use crate::vocab::{is_reserved, LatentVocabulary};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpanReplacement {
    pub step_index: usize,
    /// Offset into the original step's action tokens.
    pub token_start: usize,
    pub token_len: usize,
    pub action_rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualPair {
    pub original: Trajectory,
    pub reparameterized: Trajectory,
    /// Ordered by step, then token position.
    pub replacements: Vec<SpanReplacement>,
}

/// Whether compression may use a vocabulary mined from a different corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusCheck {
    #[default]
    Enforce,
    AllowCrossCorpus,
}

#[derive(Default)]
struct TrieNode {
    children: Vec<(u32, u32)>,
    /// Vocabulary rank of the segment ending here.
    terminal: u32,
}

/// A vocabulary compiled into a word trie for repeated compression.
pub struct Compressor<'v> {
    vocab: &'v LatentVocabulary,
    words: FxHashMap<&'v str, u32>,
    nodes: Vec<TrieNode>,
    /// Pass order of each rank: longer segments first, then lower rank.
    priority: Vec<u32>,
    symbols: Vec<Arc<str>>,
}

impl<'v> Compressor<'v> {
    pub fn new(vocab: &'v LatentVocabulary) -> Self {
        let mut words: FxHashMap<&'v str, u32> = FxHashMap::default();
        let mut nodes = vec![TrieNode {
            children: Vec::new(),
            terminal: NONE,
        }];
        for action in vocab.actions() {
            let mut node = 0usize;
            for w in &action.segment {
                let next_id = words.len() as u32;
                let wid = *words.entry(w).or_insert(next_id);
                node = match nodes[node].children.iter().find(|(c, _)| *c == wid) {
                    Some(&(_, child)) => child as usize,
                    None => {
                        nodes.push(TrieNode {
                            children: Vec::new(),
                            terminal: NONE,
                        });
                        let child = nodes.len() - 1;
                        nodes[node].children.push((wid, child as u32));
                        child
                    }
                };
            }
            if nodes[node].terminal == NONE {
                nodes[node].terminal = action.rank as u32;
            }
        }
        for n in &mut nodes {
            n.children.sort_unstable();
        }

        let mut order: Vec<usize> = (0..vocab.len()).collect();
        order.sort_by_key(|&r| (std::cmp::Reverse(vocab.actions()[r].segment.len()), r));
        let mut priority = vec![0u32; vocab.len()];
        for (p, &r) in order.iter().enumerate() {
            priority[r] = p as u32;
        }
        let symbols = vocab.actions().iter().map(|a| Arc::from(a.symbol.as_str())).collect();
        Compressor {
            vocab,
            words,
            nodes,
            priority,
            symbols,
        }
    }

    pub fn vocabulary(&self) -> &'v LatentVocabulary {
        self.vocab
    }

    fn child(&self, node: usize, word: u32) -> Option<usize> {
        let children = &self.nodes[node].children;
        children
            .binary_search_by_key(&word, |&(w, _)| w)
            .ok()
            .map(|i| children[i].1 as usize)
    }

    /// Chooses the spans of one step: `(start, len, rank)` sorted by start.
    fn match_step(&self, step: &Step) -> Vec<(usize, usize, usize)> {
        let tokens = &step.action_tokens;
        if tokens.is_empty() || self.vocab.is_empty() {
            return Vec::new();
        }
        let ids: Vec<u32> = tokens
            .iter()
            .map(|t| self.words.get(&*t.text).copied().unwrap_or(NONE))
            .collect();

        // (priority, start, len, rank)
        let mut occurrences: Vec<(u32, u32, u32, u32)> = Vec::new();
        for (start, end) in step.sentence_ranges() {
            for pos in start..end {
                let mut node = 0;
                for (off, &id) in ids[pos..end].iter().enumerate() {
                    if id == NONE {
                        break;
                    }
                    match self.child(node, id) {
                        Some(c) => node = c,
                        None => break,
                    }
                    let rank = self.nodes[node].terminal;
                    if rank != NONE {
                        occurrences.push((self.priority[rank as usize], pos as u32, off as u32 + 1, rank));
                    }
                }
            }
        }
        if occurrences.is_empty() {
            return Vec::new();
        }
        occurrences.sort_unstable();

        let mut consumed = vec![false; tokens.len()];
        let mut spans = Vec::new();
        for (_, start, len, rank) in occurrences {
            let range = start as usize..(start + len) as usize;
            if consumed[range.clone()].iter().any(|&c| c) {
                continue;
            }
            consumed[range].fill(true);
            spans.push((start as usize, len as usize, rank as usize));
        }
        spans.sort_unstable();
        spans
    }

    /// Replaces vocabulary segments with their symbols, longest segments first
    /// and left to right within each segment's pass.
    pub fn compress(&self, trajectory: &Trajectory) -> DualPair {
        let mut replacements = Vec::new();
        let steps = trajectory
            .steps
            .iter()
            .enumerate()
            .map(|(step_index, step)| {
                let spans = self.match_step(step);
                if spans.is_empty() {
                    return step.clone();
                }
                let tokens = &step.action_tokens;
                let mut out = Vec::with_capacity(tokens.len());
                let mut cursor = 0;
                for &(start, len, rank) in &spans {
                    out.extend_from_slice(&tokens[cursor..start]);
                    out.push(Token {
                        text: Arc::clone(&self.symbols[rank]),
                        sentence_index: tokens[start].sentence_index,
                    });
                    cursor = start + len;
                    replacements.push(SpanReplacement {
                        step_index,
                        token_start: start,
                        token_len: len,
                        action_rank: rank,
                    });
                }
                out.extend_from_slice(&tokens[cursor..]);
                Step {
                    observation: step.observation.clone(),
                    action: join_tokens(&out),
                    action_tokens: out,
                }
            })
            .collect();
        DualPair {
            original: trajectory.clone(),
            reparameterized: Trajectory {
                id: trajectory.id.clone(),
                steps,
            },
            replacements,
        }
    }
}

/// Action text that re-tokenizes to the same words and sentences: spaces
/// within a sentence, newlines between sentences.
fn join_tokens(tokens: &[Token]) -> String {
    let mut s = String::with_capacity(tokens.iter().map(|t| t.text.len() + 1).sum());
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            s.push(if tokens[i - 1].sentence_index == t.sentence_index { ' ' } else { '\n' });
        }
        s.push_str(&t.text);
    }
    s
}

pub fn compress(trajectory: &Trajectory, vocab: &LatentVocabulary) -> DualPair {
    Compressor::new(vocab).compress(trajectory)
}

/// Fails unless the vocabulary was mined from this corpus, the vocabulary
/// carries no corpus digest, or cross-corpus use is allowed.
pub fn check_compatibility(corpus_digest: &str, vocab: &LatentVocabulary, check: CorpusCheck) -> Result<()> {
    match (check, vocab.corpus_digest()) {
        (CorpusCheck::Enforce, Some(expected)) if expected != corpus_digest => Err(LarError::FingerprintMismatch {
            expected: expected.to_string(),
            found: corpus_digest.to_string(),
        }),
        _ => Ok(()),
    }
}

/// Compresses every trajectory of a corpus, in corpus order.
pub fn compress_corpus(corpus: &Corpus, vocab: &LatentVocabulary, check: CorpusCheck) -> Result<Vec<DualPair>> {
    if check == CorpusCheck::Enforce {
        check_compatibility(&corpus.digest(), vocab, check)?;
    }
    Ok(compress_unchecked(corpus, vocab))
}

pub(crate) fn compress_unchecked(corpus: &Corpus, vocab: &LatentVocabulary) -> Vec<DualPair> {
    let compressor = Compressor::new(vocab);
    corpus.trajectories.par_iter().map(|t| compressor.compress(t)).collect()
}

/// Replaces every latent symbol by its segment words.
pub fn expand(pair: &DualPair, vocab: &LatentVocabulary) -> Result<Trajectory> {
    expand_trajectory(&pair.reparameterized, vocab)
}

pub fn expand_trajectory(reparameterized: &Trajectory, vocab: &LatentVocabulary) -> Result<Trajectory> {
    let mut steps = Vec::with_capacity(reparameterized.steps.len());
    for (step_index, step) in reparameterized.steps.iter().enumerate() {
        if !step.action_tokens.iter().any(|t| is_reserved(&t.text)) {
            steps.push(step.clone());
            continue;
        }
        let mut tokens = Vec::with_capacity(step.action_tokens.len() * 2);
        for (position, tok) in step.action_tokens.iter().enumerate() {
            if !is_reserved(&tok.text) {
                tokens.push(tok.clone());
                continue;
            }
            let action = vocab.by_symbol(&tok.text).ok_or_else(|| LarError::UnknownSymbol {
                symbol: tok.text.to_string(),
                step: step_index,
                position,
            })?;
            tokens.extend(action.segment.iter().map(|w| Token {
                text: Arc::clone(w),
                sentence_index: tok.sentence_index,
            }));
        }
        steps.push(Step {
            observation: step.observation.clone(),
            action: join_tokens(&tokens),
            action_tokens: tokens,
        });
    }
    Ok(Trajectory {
        id: reparameterized.id.clone(),
        steps,
    })
}

/// Action-token count after reparameterization; each symbol counts once.
pub fn latent_horizon(pair: &DualPair) -> usize {
    effective_horizon(&pair.reparameterized)
}

/// Total reparameterized tokens over total original tokens.
pub fn reparameterization_rate(pairs: &[DualPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(LarError::InvalidInput("no dual pairs".into()));
    }
    let original: usize = pairs.iter().map(|p| effective_horizon(&p.original)).sum();
    let latent: usize = pairs.iter().map(latent_horizon).sum();
    if original == 0 {
        return Err(LarError::InvalidInput("all trajectories have empty actions".into()));
    }
    Ok(latent as f64 / original as f64)
}

/// Step as stored in dual-pair files: raw text plus its exact token stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedStep {
    pub observation: String,
    pub action: String,
    pub tokens: Vec<Arc<str>>,
    pub sentences: Vec<u32>,
}

impl From<&Step> for TokenizedStep {
    fn from(s: &Step) -> Self {
        TokenizedStep {
            observation: s.observation.clone(),
            action: s.action.clone(),
            tokens: s.action_tokens.iter().map(|t| Arc::clone(&t.text)).collect(),
            sentences: s.action_tokens.iter().map(|t| t.sentence_index).collect(),
        }
    }
}

impl TryFrom<TokenizedStep> for Step {
    type Error = String;

    fn try_from(s: TokenizedStep) -> std::result::Result<Self, String> {
        if s.tokens.len() != s.sentences.len() {
            return Err(format!("{} tokens but {} sentence indices", s.tokens.len(), s.sentences.len()));
        }
        if s.sentences.windows(2).any(|w| w[1] < w[0]) {
            return Err("sentence indices must be non-decreasing".into());
        }
        Ok(Step {
            observation: s.observation,
            action: s.action,
            action_tokens: s
                .tokens
                .into_iter()
                .zip(s.sentences)
                .map(|(text, sentence_index)| Token { text, sentence_index })
                .collect(),
        })
    }
}

/// One line of a dual-pair file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub id: String,
    pub original_steps: Vec<TokenizedStep>,
    pub reparameterized_steps: Vec<TokenizedStep>,
    pub replacements: Vec<SpanReplacement>,
}

impl From<&DualPair> for PairRecord {
    fn from(p: &DualPair) -> Self {
        PairRecord {
            id: p.original.id.clone(),
            original_steps: p.original.steps.iter().map(TokenizedStep::from).collect(),
            reparameterized_steps: p.reparameterized.steps.iter().map(TokenizedStep::from).collect(),
            replacements: p.replacements.clone(),
        }
    }
}

impl TryFrom<PairRecord> for DualPair {
    type Error = String;

    fn try_from(r: PairRecord) -> std::result::Result<Self, String> {
        if r.original_steps.len() != r.reparameterized_steps.len() {
            return Err("original and reparameterized step counts differ".into());
        }
        let to_steps = |steps: Vec<TokenizedStep>| steps.into_iter().map(Step::try_from).collect::<std::result::Result<Vec<_>, _>>();
        Ok(DualPair {
            original: Trajectory {
                id: r.id.clone(),
                steps: to_steps(r.original_steps)?,
            },
            reparameterized: Trajectory {
                id: r.id,
                steps: to_steps(r.reparameterized_steps)?,
            },
            replacements: r.replacements,
        })
    }
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[DualPair]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| LarError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        for p in pairs {
            serde_json::to_writer(&mut w, &PairRecord::from(p))?;
            w.write_all(b"\n")?;
        }
        w.flush()
    })();
    res.map_err(|e| LarError::io(path, e))
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<DualPair>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| LarError::io(path, e))?;
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LarError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| LarError::Parse { line: idx + 1, reason };
        let record: PairRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        pairs.push(DualPair::try_from(record).map_err(parse_err)?);
    }
    Ok(pairs)
}
