//! Shared fixtures for integration tests: seeded synthetic corpora and an
//! independent brute-force replay of segment identification.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use lar_core::config::MinerConfig;
use lar_core::corpus::{Corpus, StepRecord, TokenizerMode, TrajectoryRecord};
use lar_core::miner::{SegmentCandidate, Successor};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Builds a corpus from per-trajectory lists of step actions.
pub fn corpus_from_actions(trajectories: &[Vec<String>], mode: TokenizerMode) -> Corpus {
    let records = trajectories
        .iter()
        .enumerate()
        .map(|(i, steps)| TrajectoryRecord {
            id: format!("t{i:06}"),
            steps: steps
                .iter()
                .enumerate()
                .map(|(j, a)| StepRecord {
                    observation: format!("obs {i} {j}"),
                    action: a.clone(),
                })
                .collect(),
        })
        .collect();
    Corpus::from_records(records, mode).expect("synthetic corpus is valid")
}

/// Small random corpus over a tiny alphabet, so that n-grams repeat, with
/// random sentence breaks. At most `max_words` words in total.
pub fn small_actions(rng: &mut impl Rng, max_words: usize) -> Vec<Vec<String>> {
    let alphabet = rng.gen_range(2..=6);
    let budget = rng.gen_range(20..=max_words);
    let mut used = 0;
    let mut trajectories = Vec::new();
    while used < budget {
        let mut steps = Vec::new();
        for _ in 0..rng.gen_range(1..=3) {
            let len = rng.gen_range(1..=12).min(budget - used);
            if len == 0 {
                break;
            }
            used += len;
            let mut action = String::new();
            for i in 0..len {
                if i > 0 {
                    action.push(if rng.gen_bool(0.08) { '\n' } else { ' ' });
                }
                action.push((b'a' + rng.gen_range(0..alphabet) as u8) as char);
                if rng.gen_bool(0.07) {
                    action.push('.');
                }
            }
            steps.push(action);
        }
        if steps.is_empty() {
            break;
        }
        trajectories.push(steps);
    }
    trajectories
}

pub fn small_config(rng: &mut impl Rng) -> MinerConfig {
    let n_lo = rng.gen_range(1..=3);
    MinerConfig {
        n_lo,
        n_hi: n_lo + rng.gen_range(0..=3),
        f_min: rng.gen_range(1..=4),
        h_max: [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 10.0][rng.gen_range(0..7)],
        k: rng.gen_range(1..=20),
        rho: [0.3, 0.5, 0.7, 0.9, 1.0][rng.gen_range(0..5)],
    }
}

/// A candidate whose statistics do not matter, for hand-built vocabularies.
pub fn candidate(words: &[&str]) -> SegmentCandidate {
    let successors = BTreeMap::from([(Successor::EndOfSentence, 1)]);
    SegmentCandidate::from_successors(words.iter().map(|w| Arc::from(*w)).collect(), successors).unwrap()
}

/// Templated agent-style corpus: recurring scaffolds with parameter slots
/// filled from a large entity pool, Zipf-distributed template usage.
pub struct AgentCorpusSpec {
    pub target_words: usize,
    pub templates: usize,
    pub entities: usize,
    pub mode: TokenizerMode,
}

pub fn agent_actions(rng: &mut impl Rng, spec: &AgentCorpusSpec) -> Vec<Vec<String>> {
    const VERBS: &[&str] = &[
        "click", "type", "select", "scroll", "search", "open", "close", "submit", "wait", "read", "answer", "call",
        "return", "check", "press", "hover", "navigate", "filter", "sort", "copy",
    ];
    const GLUE: &[&str] = &[
        "the", "then", "on", "in", "to", "for", "with", "and", "result", "button", "field", "page", "list", "item",
        "tab", "menu", "query", "value", "next", "first",
    ];
    let html = spec.mode == TokenizerMode::WordsPlusHtml;
    let templates: Vec<Vec<Option<String>>> = (0..spec.templates)
        .map(|_| {
            let len = rng.gen_range(3..=8);
            let mut t: Vec<Option<String>> = (0..len)
                .map(|i| {
                    let w = if i == 0 {
                        VERBS[rng.gen_range(0..VERBS.len())].to_string()
                    } else {
                        GLUE[rng.gen_range(0..GLUE.len())].to_string()
                    };
                    Some(w)
                })
                .collect();
            for _ in 0..rng.gen_range(0..=2) {
                let at = rng.gen_range(1..=t.len());
                t.insert(at, None);
            }
            if html && rng.gen_bool(0.5) {
                let tag = ["<button>", "<div>", "<input>", "<a>", "</div>"][rng.gen_range(0..5)];
                t.insert(0, Some(tag.to_string()));
            }
            t
        })
        .collect();
    let template_weights = WeightedIndex::new((1..=spec.templates).map(|r| 1.0 / r as f64)).unwrap();
    let entity_weights = WeightedIndex::new((1..=spec.entities).map(|r| 1.0 / (r as f64).powf(0.8))).unwrap();

    let mut words = 0;
    let mut trajectories = Vec::new();
    while words < spec.target_words {
        let mut steps = Vec::new();
        for _ in 0..rng.gen_range(2..=6) {
            let mut action = String::new();
            for inst in 0..rng.gen_range(1..=3) {
                if inst > 0 {
                    action.push('\n');
                }
                let t = &templates[template_weights.sample(rng)];
                for (i, slot) in t.iter().enumerate() {
                    if i > 0 {
                        action.push(' ');
                    }
                    match slot {
                        Some(w) => action.push_str(w),
                        None => {
                            action.push('e');
                            action.push_str(&entity_weights.sample(rng).to_string());
                        }
                    }
                }
                words += t.len();
            }
            steps.push(action);
        }
        trajectories.push(steps);
    }
    trajectories
}

pub fn agent_corpus(seed: u64, spec: &AgentCorpusSpec) -> Corpus {
    let actions = agent_actions(&mut rng(seed), spec);
    corpus_from_actions(&actions, spec.mode)
}

/// Corpus of `total` tokens in which a single scaffold of length `ell`
/// accounts for exactly `total * f` tokens. Scaffold occurrences are whole
/// sentences; every filler word is unique.
pub fn planted_actions(rng: &mut impl Rng, total: usize, f: f64, ell: usize) -> (Vec<Vec<String>>, Vec<String>) {
    let planted_tokens = (total as f64 * f).round() as usize;
    assert_eq!(planted_tokens % ell, 0, "planted tokens must be a multiple of the scaffold length");
    let occurrences = planted_tokens / ell;
    let scaffold: Vec<String> = (0..ell).map(|i| format!("s{i}")).collect();
    let scaffold_text = scaffold.join(" ");

    // Sentence plan: scaffold sentences interleaved with filler sentences.
    let mut filler_left = total - planted_tokens;
    let mut sentences: Vec<Option<usize>> = vec![None; occurrences];
    while filler_left > 0 {
        let n = rng.gen_range(1..=8).min(filler_left);
        sentences.push(Some(n));
        filler_left -= n;
    }
    sentences.shuffle(rng);

    let mut next_filler = 0usize;
    let mut trajectories = Vec::new();
    let mut it = sentences.into_iter().peekable();
    while it.peek().is_some() {
        let mut steps = Vec::new();
        for _ in 0..rng.gen_range(1..=4) {
            let mut parts = Vec::new();
            for _ in 0..rng.gen_range(1..=4) {
                match it.next() {
                    Some(None) => parts.push(scaffold_text.clone()),
                    Some(Some(n)) => {
                        let words: Vec<String> = (next_filler..next_filler + n).map(|i| format!("w{i}")).collect();
                        next_filler += n;
                        parts.push(words.join(" "));
                    }
                    None => break,
                }
            }
            if !parts.is_empty() {
                steps.push(parts.join("\n"));
            }
        }
        if !steps.is_empty() {
            trajectories.push(steps);
        }
    }
    (trajectories, scaffold)
}

/// Independent replay of segment identification over raw action strings.
pub mod oracle {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    pub struct Segment {
        pub words: Vec<String>,
        pub freq: u64,
        pub entropy: f64,
        pub score: f64,
    }

    /// Sentences of one action under the words tokenizer.
    pub fn sentences(action: &str) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = Vec::new();
        for line in action.split('\n') {
            let mut current: Vec<String> = Vec::new();
            for word in line.split_whitespace() {
                current.push(word.to_string());
                if word.ends_with('.') || word.ends_with('!') || word.ends_with('?') {
                    out.push(std::mem::take(&mut current));
                }
            }
            if !current.is_empty() {
                out.push(current);
            }
        }
        out
    }

    /// H = log2 N - (1/N) sum c log2 c.
    pub fn entropy(counts: &[u64]) -> f64 {
        let n: u64 = counts.iter().sum();
        let n = n as f64;
        let s: f64 = counts.iter().map(|&c| c as f64 * (c as f64).log2()).sum();
        n.log2() - s / n
    }

    fn longest_common_run(a: &[String], b: &[String]) -> usize {
        let mut best = 0;
        for i in 0..a.len() {
            for j in 0..b.len() {
                let mut l = 0;
                while i + l < a.len() && j + l < b.len() && a[i + l] == b[j + l] {
                    l += 1;
                }
                best = best.max(l);
            }
        }
        best
    }

    fn inside(needle: &[String], hay: &[String]) -> bool {
        (0..=hay.len().saturating_sub(needle.len())).any(|i| hay.len() >= needle.len() && hay[i..i + needle.len()] == *needle)
    }

    /// All n-grams in range with their successor tallies (`None` = end of sentence).
    pub fn count(trajectories: &[Vec<String>], n_lo: usize, n_hi: usize) -> HashMap<Vec<String>, HashMap<Option<String>, u64>> {
        let mut table: HashMap<Vec<String>, HashMap<Option<String>, u64>> = HashMap::new();
        for steps in trajectories {
            for action in steps {
                for sentence in sentences(action) {
                    for n in n_lo..=n_hi {
                        if n > sentence.len() {
                            continue;
                        }
                        for i in 0..=sentence.len() - n {
                            let next = sentence.get(i + n).cloned();
                            *table.entry(sentence[i..i + n].to_vec()).or_default().entry(next).or_insert(0) += 1;
                        }
                    }
                }
            }
        }
        table
    }

    pub fn identify(trajectories: &[Vec<String>], cfg: &MinerConfig) -> Vec<Segment> {
        let table = count(trajectories, cfg.n_lo, cfg.n_hi);
        let mut cands: Vec<Segment> = table
            .into_iter()
            .map(|(words, succ)| {
                let counts: Vec<u64> = succ.values().copied().collect();
                let freq: u64 = counts.iter().sum();
                let entropy = entropy(&counts);
                Segment { words, freq, entropy, score: freq as f64 / (entropy + 1.0) }
            })
            .filter(|s| s.freq >= cfg.f_min)
            .filter(|s| s.entropy <= cfg.h_max)
            .collect();
        cands.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap()
                .then(b.words.len().cmp(&a.words.len()))
                .then(a.words.cmp(&b.words))
        });
        let mut z: Vec<Segment> = Vec::new();
        for c in cands {
            if z.len() == cfg.k {
                break;
            }
            let reject = z.iter().any(|s| {
                let ov = longest_common_run(&c.words, &s.words) as f64 / c.words.len().min(s.words.len()) as f64;
                inside(&c.words, &s.words) || ov >= cfg.rho
            });
            if !reject {
                z.push(c);
            }
        }
        z
    }
}

/// Violations of the admission contract, empty when sound.
pub fn soundness_violations(segments: &[SegmentCandidate], cfg: &MinerConfig) -> Vec<String> {
    let mut v = Vec::new();
    if segments.len() > cfg.k {
        v.push(format!("{} segments exceed K = {}", segments.len(), cfg.k));
    }
    for (i, s) in segments.iter().enumerate() {
        if s.freq < cfg.f_min {
            v.push(format!("{:?}: freq {} < f_min", s.text(), s.freq));
        }
        if s.entropy_bits > cfg.h_max {
            v.push(format!("{:?}: entropy {} > H_max", s.text(), s.entropy_bits));
        }
        if i > 0 && segments[i - 1].score < s.score {
            v.push(format!("score increases at position {i}"));
        }
        for t in &segments[..i] {
            let ov = lar_core::miner::overlap(&s.words, &t.words);
            if ov >= cfg.rho {
                v.push(format!("{:?} vs {:?}: overlap {ov} >= rho", s.text(), t.text()));
            }
            if lar_core::miner::is_contiguous_subsequence(&s.words, &t.words)
                || lar_core::miner::is_contiguous_subsequence(&t.words, &s.words)
            {
                v.push(format!("{:?} and {:?} are nested", s.text(), t.text()));
            }
        }
    }
    v
}
