//! Latent action identification: n-gram extraction, next-token entropy,
//! frequency/entropy filtering, score ranking and redundancy-aware admission.

mod counter;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

pub use crate::config::MinerConfig;
use crate::corpus::Corpus;
use crate::error::{LarError, Result};
pub(crate) use counter::EncodedCorpus;
use counter::{count_ngrams, CountedNgram};

/// What followed an n-gram occurrence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Successor {
    Word(Arc<str>),
    /// The occurrence ended its sentence.
    EndOfSentence,
}

impl fmt::Display for Successor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Successor::Word(w) => f.write_str(w),
            Successor::EndOfSentence => f.write_str("</s>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentCandidate {
    pub words: Vec<Arc<str>>,
    pub freq: u64,
    pub successors: BTreeMap<Successor, u64>,
    pub entropy_bits: f64,
    pub score: f64,
}

impl SegmentCandidate {
    /// Builds a candidate from its successor tallies; frequency, entropy and
    /// score are derived from them.
    pub fn from_successors(words: Vec<Arc<str>>, successors: BTreeMap<Successor, u64>) -> Result<Self> {
        let freq = successors.values().sum();
        let entropy_bits = entropy_bits(successors.values().copied())
            .ok_or_else(|| LarError::EmptySuccessors(join_words(&words)))?;
        Ok(SegmentCandidate {
            words,
            freq,
            successors,
            entropy_bits,
            score: score(freq, entropy_bits),
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn text(&self) -> String {
        join_words(&self.words)
    }

    /// Recomputes the next-token entropy from the successor tallies.
    pub fn entropy(&self) -> Result<f64> {
        entropy_bits(self.successors.values().copied()).ok_or_else(|| LarError::EmptySuccessors(self.text()))
    }
}

pub(crate) fn join_words<S: AsRef<str>>(words: &[S]) -> String {
    words.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ")
}

/// Empirical Shannon entropy in bits of a count distribution. `None` when the
/// counts are empty or all zero.
///
/// Terms are summed in ascending count order so the result depends only on
/// the multiset of counts.
pub fn entropy_bits(counts: impl IntoIterator<Item = u64>) -> Option<f64> {
    let mut counts: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    counts.sort_unstable();
    let total = total as f64;
    let h = counts.iter().fold(0.0, |acc, &c| {
        let p = c as f64 / total;
        acc - p * p.log2()
    });
    Some(h.max(0.0))
}

pub fn score(freq: u64, entropy_bits: f64) -> f64 {
    freq as f64 / (entropy_bits + 1.0)
}

/// Longest common contiguous run of `a` and `b` divided by the shorter length.
pub fn overlap<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let shorter = a.len().min(b.len());
    if shorter == 0 {
        return 0.0;
    }
    longest_common_run(a, b) as f64 / shorter as f64
}

fn longest_common_run<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// True when `needle` occurs as a contiguous run inside `haystack`.
pub fn is_contiguous_subsequence<T: PartialEq>(needle: &[T], haystack: &[T]) -> bool {
    needle.is_empty() || haystack.windows(needle.len()).any(|w| w == needle)
}

/// Descending score; ties go to the longer segment, then lexicographic words.
pub fn rank_order(a: &SegmentCandidate, b: &SegmentCandidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.words.len().cmp(&a.words.len()))
        .then_with(|| a.words.cmp(&b.words))
}

/// Candidate statistics keyed by word sequence.
pub type CandidateTable = BTreeMap<Vec<Arc<str>>, SegmentCandidate>;

fn to_candidate(enc: &EncodedCorpus<'_>, ng: CountedNgram) -> SegmentCandidate {
    let lex = &enc.lexicon;
    let mut successors: BTreeMap<Successor, u64> = ng
        .successors
        .iter()
        .map(|&(w, c)| (Successor::Word(Arc::clone(lex.word(w))), c))
        .collect();
    if ng.end_of_sentence > 0 {
        successors.insert(Successor::EndOfSentence, ng.end_of_sentence);
    }
    let words = ng.words.iter().map(|&w| Arc::clone(lex.word(w))).collect();
    let c = SegmentCandidate::from_successors(words, successors).expect("counted n-grams have successors");
    debug_assert_eq!(c.freq, ng.freq);
    c
}

/// Counts every n-gram with `n` in the configured range that lies inside one
/// sentence of one action, together with its successor tallies.
pub fn extract_candidates(corpus: &Corpus, config: &MinerConfig) -> CandidateTable {
    let enc = EncodedCorpus::new(corpus);
    count_ngrams(&enc, config.n_lo, config.n_hi, 1, 1)
        .ngrams
        .into_iter()
        .map(|ng| {
            let c = to_candidate(&enc, ng);
            (c.words.clone(), c)
        })
        .collect()
}

/// Sums the successor tallies of several tables.
pub fn merge_candidates(tables: impl IntoIterator<Item = CandidateTable>) -> CandidateTable {
    let mut merged: BTreeMap<Vec<Arc<str>>, BTreeMap<Successor, u64>> = BTreeMap::new();
    for table in tables {
        for (words, cand) in table {
            let slot = merged.entry(words).or_default();
            for (s, c) in cand.successors {
                *slot.entry(s).or_insert(0) += c;
            }
        }
    }
    merged
        .into_iter()
        .map(|(words, succ)| {
            let c = SegmentCandidate::from_successors(words.clone(), succ).expect("merged tables are non-empty");
            (words, c)
        })
        .collect()
}

/// Extracts each shard in parallel and merges the partial tables.
pub fn extract_candidates_sharded(shards: &[Corpus], config: &MinerConfig) -> CandidateTable {
    let tables: Vec<CandidateTable> = shards.par_iter().map(|s| extract_candidates(s, config)).collect();
    merge_candidates(tables)
}

/// Sizes of the candidate pool after each stage of identification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct StageCounts {
    pub raw: u64,
    pub after_f_min: u64,
    pub after_h_max: u64,
    pub admitted: u64,
}

#[derive(Debug, Clone)]
pub struct Identification {
    /// The latent action set in admission order.
    pub segments: Vec<SegmentCandidate>,
    /// Candidates that passed the frequency filter, in no particular order.
    pub frequent: Vec<SegmentCandidate>,
    pub stages: StageCounts,
}

/// Runs identification and returns the admitted segments in admission order.
pub fn identify(corpus: &Corpus, config: &MinerConfig) -> Result<Vec<SegmentCandidate>> {
    config.validate()?;
    let enc = EncodedCorpus::new(corpus);
    let counted = count_ngrams(&enc, config.n_lo, config.n_hi, config.f_min, config.f_min);
    let frequent: Vec<_> = counted.ngrams.into_iter().map(|ng| to_candidate(&enc, ng)).collect();
    Ok(select(frequent, config))
}

/// Like [`identify`], but also counts the raw candidate pool (which requires
/// an unpruned pass) and keeps the frequency-filtered candidates.
pub fn identify_with_stages(corpus: &Corpus, config: &MinerConfig) -> Result<Identification> {
    config.validate()?;
    let enc = EncodedCorpus::new(corpus);
    let counted = count_ngrams(&enc, config.n_lo, config.n_hi, 1, config.f_min);
    let frequent: Vec<_> = counted.ngrams.into_iter().map(|ng| to_candidate(&enc, ng)).collect();
    let after_h_max = frequent.iter().filter(|c| c.entropy_bits <= config.h_max).count() as u64;
    let segments = select(frequent.clone(), config);
    Ok(Identification {
        stages: StageCounts {
            raw: counted.distinct,
            after_f_min: frequent.len() as u64,
            after_h_max,
            admitted: segments.len() as u64,
        },
        segments,
        frequent,
    })
}

/// Entropy filter, score ranking and greedy admission over candidates that
/// already passed the frequency filter.
pub fn select(candidates: Vec<SegmentCandidate>, config: &MinerConfig) -> Vec<SegmentCandidate> {
    let mut ranked: Vec<_> = candidates
        .into_iter()
        .filter(|c| c.freq >= config.f_min && c.entropy_bits <= config.h_max)
        .collect();
    ranked.sort_by(rank_order);

    let mut admitted: Vec<SegmentCandidate> = Vec::new();
    for cand in ranked {
        if admitted.len() >= config.k {
            break;
        }
        let redundant = admitted.iter().any(|z| {
            is_contiguous_subsequence(&cand.words, &z.words) || overlap(&cand.words, &z.words) >= config.rho
        });
        if !redundant {
            admitted.push(cand);
        }
    }
    admitted
}
