//! Level-wise n-gram counting over interned word ids.
//!
//! Level `n` entries are identified by `(parent entry at level n-1, last
//! word)`. Counting `(entry, next word)` pairs at level `n` yields both the
//! successor tallies of level `n` and the frequencies of level `n + 1`, so
//! each level costs one hash probe per surviving position. Entries below the
//! pruning threshold are dropped before extension; every extension of such an
//! entry is at most as frequent, so no n-gram reaching the threshold is lost.

use std::sync::Arc;

use rustc_hash::FxHashMap;

use crate::corpus::Corpus;

const NONE: u32 = u32::MAX;

pub(crate) struct Lexicon<'a> {
    ids: FxHashMap<&'a str, u32>,
    words: Vec<&'a Arc<str>>,
}

impl<'a> Lexicon<'a> {
    pub(crate) fn word(&self, id: u32) -> &'a Arc<str> {
        self.words[id as usize]
    }
}

/// A corpus flattened into word ids, one range per sentence.
pub(crate) struct EncodedCorpus<'a> {
    pub(crate) lexicon: Lexicon<'a>,
    tokens: Vec<u32>,
    sentences: Vec<(u32, u32)>,
    word_freq: Vec<u64>,
}

impl<'a> EncodedCorpus<'a> {
    pub(crate) fn new(corpus: &'a Corpus) -> Self {
        let mut lexicon = Lexicon {
            ids: FxHashMap::default(),
            words: Vec::new(),
        };
        let mut tokens = Vec::new();
        let mut sentences = Vec::new();
        let mut word_freq = Vec::new();
        for step in corpus.trajectories.iter().flat_map(|t| &t.steps) {
            for (start, end) in step.sentence_ranges() {
                let base = tokens.len() as u32;
                for tok in &step.action_tokens[start..end] {
                    let next = lexicon.words.len() as u32;
                    let id = *lexicon.ids.entry(&tok.text).or_insert_with(|| {
                        lexicon.words.push(&tok.text);
                        word_freq.push(0);
                        next
                    });
                    word_freq[id as usize] += 1;
                    tokens.push(id);
                }
                sentences.push((base, tokens.len() as u32));
            }
        }
        EncodedCorpus {
            lexicon,
            tokens,
            sentences,
            word_freq,
        }
    }
}

pub(crate) struct CountedNgram {
    pub(crate) words: Vec<u32>,
    pub(crate) freq: u64,
    /// `(word, count)` pairs in first-seen order, without end-of-sentence.
    pub(crate) successors: Vec<(u32, u64)>,
    pub(crate) end_of_sentence: u64,
}

pub(crate) struct CountOutput {
    /// Candidates in `[n_lo, n_hi]` with frequency at least `emit_min`.
    pub(crate) ngrams: Vec<CountedNgram>,
    /// Number of distinct n-grams in `[n_lo, n_hi]` with frequency at least
    /// the pruning threshold. With a threshold of 1 this is the raw count.
    pub(crate) distinct: u64,
}

struct Level {
    /// `(parent entry, last word)` per entry.
    meta: Vec<(u32, u32)>,
    freq: Vec<u64>,
}

pub(crate) fn count_ngrams(
    enc: &EncodedCorpus<'_>,
    n_lo: usize,
    n_hi: usize,
    prune: u64,
    emit_min: u64,
) -> CountOutput {
    debug_assert!(1 <= n_lo && n_lo <= n_hi && prune >= 1);
    let emit_min = emit_min.max(prune);

    let mut levels: Vec<Level> = Vec::with_capacity(n_hi);
    levels.push(Level {
        meta: (0..enc.word_freq.len() as u32).map(|w| (NONE, w)).collect(),
        freq: enc.word_freq.clone(),
    });

    // (position, sentence end, entry id) for every occurrence still alive.
    let mut alive: Vec<(u32, u32, u32)> = Vec::with_capacity(enc.tokens.len());
    for &(start, end) in &enc.sentences {
        for pos in start..end {
            let id = enc.tokens[pos as usize];
            if enc.word_freq[id as usize] >= prune {
                alive.push((pos, end, id));
            }
        }
    }

    let mut out = CountOutput {
        ngrams: Vec::new(),
        distinct: 0,
    };

    for n in 1..=n_hi {
        let level = &levels[n - 1];
        let in_range = n >= n_lo;
        if in_range {
            out.distinct += level.freq.iter().filter(|&&f| f >= prune).count() as u64;
        }

        let mut pair_index: FxHashMap<u64, u32> = FxHashMap::default();
        let mut pair_keys: Vec<(u32, u32)> = Vec::new();
        let mut pair_counts: Vec<u64> = Vec::new();
        let mut eos = vec![0u64; level.freq.len()];
        let mut next_pair: Vec<u32> = Vec::with_capacity(alive.len());

        for &(pos, end, id) in &alive {
            let nxt = pos + n as u32;
            if nxt < end {
                let word = enc.tokens[nxt as usize];
                let key = (u64::from(id) << 32) | u64::from(word);
                let idx = *pair_index.entry(key).or_insert_with(|| {
                    pair_keys.push((id, word));
                    pair_counts.push(0);
                    (pair_keys.len() - 1) as u32
                });
                pair_counts[idx as usize] += 1;
                next_pair.push(idx);
            } else {
                eos[id as usize] += 1;
                next_pair.push(NONE);
            }
        }
        drop(pair_index);

        if in_range {
            emit_level(&levels, n, &pair_keys, &pair_counts, &eos, emit_min, &mut out.ngrams);
        }

        if n == n_hi {
            break;
        }

        let mut remap = vec![NONE; pair_keys.len()];
        let mut meta = Vec::new();
        let mut freq = Vec::new();
        for (idx, (&key, &count)) in pair_keys.iter().zip(&pair_counts).enumerate() {
            if count >= prune {
                remap[idx] = meta.len() as u32;
                meta.push(key);
                freq.push(count);
            }
        }
        alive = alive
            .iter()
            .zip(&next_pair)
            .filter_map(|(&(pos, end, _), &pair)| {
                let id = *remap.get(pair as usize)?;
                (id != NONE).then_some((pos, end, id))
            })
            .collect();
        levels.push(Level { meta, freq });
    }
    out
}

fn emit_level(
    levels: &[Level],
    n: usize,
    pair_keys: &[(u32, u32)],
    pair_counts: &[u64],
    eos: &[u64],
    emit_min: u64,
    out: &mut Vec<CountedNgram>,
) {
    let level = &levels[n - 1];
    let mut slot = vec![NONE; level.freq.len()];
    let first = out.len();
    for (id, &f) in level.freq.iter().enumerate() {
        if f >= emit_min {
            slot[id] = (out.len() - first) as u32;
            out.push(CountedNgram {
                words: resolve(levels, n, id as u32),
                freq: f,
                successors: Vec::new(),
                end_of_sentence: eos[id],
            });
        }
    }
    for (&(id, word), &count) in pair_keys.iter().zip(pair_counts) {
        let s = slot[id as usize];
        if s != NONE {
            out[first + s as usize].successors.push((word, count));
        }
    }
}

fn resolve(levels: &[Level], n: usize, mut id: u32) -> Vec<u32> {
    let mut words = vec![0; n];
    for level in (0..n).rev() {
        let (parent, last) = levels[level].meta[id as usize];
        words[level] = last;
        id = parent;
    }
    words
}
