//! Latent action vocabularies: symbol binding, priority prefixes and the
//! line-delimited vocabulary file.
//!
//! File layout (one JSON object per line):
//!
//! ```text
//! {"format":"lar-vocab","version":1,"size":2,"fingerprint":"…","checksum":"…","corpus_digest":"…","config":{…}}
//! {"symbol":"⟨LAR_0⟩","segment":["Thought:","I","need","to"],"rank":0,"score":…,"freq":…,"entropy_bits":…}
//! {"symbol":"⟨LAR_1⟩",…}
//! ```

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::corpus::{to_hex, RESERVED_CLOSE, RESERVED_OPEN};
use crate::error::{LarError, Result};
use crate::miner::SegmentCandidate;

pub const VOCAB_FORMAT: &str = "lar-vocab";
pub const VOCAB_VERSION: u32 = 1;

/// Surface form of the latent symbol with the given rank.
pub fn symbol_for(rank: usize) -> String {
    format!("{RESERVED_OPEN}LAR_{rank}{RESERVED_CLOSE}")
}

/// Rank encoded in a latent symbol, if `text` is one.
pub fn parse_symbol(text: &str) -> Option<usize> {
    let digits = text
        .strip_prefix(RESERVED_OPEN)?
        .strip_suffix(RESERVED_CLOSE)?
        .strip_prefix("LAR_")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || (digits.len() > 1 && digits.starts_with('0')) {
        return None;
    }
    digits.parse().ok()
}

/// True for any token carrying the reserved delimiters. Corpus tokens never do.
pub fn is_reserved(text: &str) -> bool {
    text.starts_with(RESERVED_OPEN) && text.ends_with(RESERVED_CLOSE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentAction {
    pub symbol: String,
    pub segment: Vec<Arc<str>>,
    pub rank: usize,
    pub score: f64,
    pub freq: u64,
    pub entropy_bits: f64,
}

/// Where a vocabulary came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    /// Configuration that produced the vocabulary, if it was mined.
    pub config: Option<PipelineConfig>,
    /// Digest of the corpus it was mined from, if any.
    pub corpus_digest: Option<String>,
}

impl Provenance {
    pub fn new(config: PipelineConfig, corpus_digest: String) -> Self {
        Provenance {
            config: Some(config),
            corpus_digest: Some(corpus_digest),
        }
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"lar-vocab-provenance-v1\n");
        h.update(self.config.as_ref().map(PipelineConfig::fingerprint).unwrap_or_default());
        h.update(b"\n");
        h.update(self.corpus_digest.as_deref().unwrap_or_default());
        to_hex(&h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentVocabulary {
    actions: Vec<LatentAction>,
    provenance: Provenance,
    fingerprint: String,
}

/// Binds one symbol to each segment, ranked by input position.
pub fn build_vocabulary(segments: &[SegmentCandidate], provenance: Provenance) -> Result<LatentVocabulary> {
    let mut seen = HashSet::new();
    let mut actions = Vec::with_capacity(segments.len());
    for (rank, s) in segments.iter().enumerate() {
        if s.words.is_empty() {
            return Err(LarError::InvalidInput("segments must contain at least one word".into()));
        }
        if !seen.insert(&s.words) {
            return Err(LarError::DuplicateSegment(s.text()));
        }
        actions.push(LatentAction {
            symbol: symbol_for(rank),
            segment: s.words.clone(),
            rank,
            score: s.score,
            freq: s.freq,
            entropy_bits: s.entropy_bits,
        });
    }
    Ok(LatentVocabulary::from_parts(actions, provenance))
}

impl LatentVocabulary {
    fn from_parts(actions: Vec<LatentAction>, provenance: Provenance) -> Self {
        let fingerprint = provenance.fingerprint();
        LatentVocabulary {
            actions,
            provenance,
            fingerprint,
        }
    }

    pub fn empty(provenance: Provenance) -> Self {
        Self::from_parts(Vec::new(), provenance)
    }

    pub fn actions(&self) -> &[LatentAction] {
        &self.actions
    }

    pub fn get(&self, rank: usize) -> Option<&LatentAction> {
        self.actions.get(rank)
    }

    /// Looks up the action bound to a symbol token.
    pub fn by_symbol(&self, symbol: &str) -> Option<&LatentAction> {
        parse_symbol(symbol).and_then(|r| self.actions.get(r))
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn config(&self) -> Option<&PipelineConfig> {
        self.provenance.config.as_ref()
    }

    pub fn corpus_digest(&self) -> Option<&str> {
        self.provenance.corpus_digest.as_deref()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// The `k` highest-priority actions. Ranks and provenance are kept.
    pub fn prefix(&self, k: usize) -> LatentVocabulary {
        LatentVocabulary {
            actions: self.actions[..k.min(self.actions.len())].to_vec(),
            provenance: self.provenance.clone(),
            fingerprint: self.fingerprint.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| LarError::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| LarError::io(path, e))
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let header = Header {
            format: VOCAB_FORMAT.into(),
            version: VOCAB_VERSION,
            size: self.actions.len(),
            fingerprint: self.fingerprint.clone(),
            checksum: actions_checksum(&self.actions),
            corpus_digest: self.provenance.corpus_digest.clone(),
            config: self.provenance.config.clone(),
        };
        serde_json::to_writer(&mut *w, &header)?;
        w.write_all(b"\n")?;
        for a in &self.actions {
            serde_json::to_writer(&mut *w, a)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LatentVocabulary> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| LarError::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }

    pub fn read_from(reader: impl BufRead) -> Result<LatentVocabulary> {
        let corrupt = |line: usize, reason: String| LarError::CorruptVocabulary { line, reason };
        let mut lines = reader.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| corrupt(1, "missing header".into()))?;
        let first = first.map_err(|e| corrupt(1, e.to_string()))?;
        let raw: serde_json::Value = serde_json::from_str(&first).map_err(|e| corrupt(1, e.to_string()))?;
        if raw.get("format").and_then(|v| v.as_str()) != Some(VOCAB_FORMAT) {
            return Err(corrupt(1, "not a vocabulary file".into()));
        }
        let version = raw.get("version").and_then(|v| v.as_u64()).ok_or_else(|| corrupt(1, "missing version".into()))?;
        if version != u64::from(VOCAB_VERSION) {
            return Err(LarError::VersionMismatch {
                kind: "vocabulary",
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: VOCAB_VERSION,
            });
        }
        let header: Header = serde_json::from_value(raw).map_err(|e| corrupt(1, e.to_string()))?;

        let mut actions = Vec::with_capacity(header.size);
        let mut seen = HashSet::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line.map_err(|e| corrupt(lineno, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let a: LatentAction = serde_json::from_str(&line).map_err(|e| corrupt(lineno, e.to_string()))?;
            let expected_rank = actions.len();
            if a.rank != expected_rank || a.symbol != symbol_for(a.rank) {
                return Err(corrupt(lineno, format!("expected rank {expected_rank} with symbol {}", symbol_for(expected_rank))));
            }
            if a.segment.is_empty() || a.segment.iter().any(|w| w.is_empty() || w.contains(char::is_whitespace) || w.contains([RESERVED_OPEN, RESERVED_CLOSE])) {
                return Err(corrupt(lineno, "invalid segment words".into()));
            }
            if !seen.insert(a.segment.clone()) {
                return Err(corrupt(lineno, "duplicate segment".into()));
            }
            actions.push(a);
        }
        if actions.len() != header.size {
            return Err(corrupt(1, format!("header declares {} actions, found {}", header.size, actions.len())));
        }
        if actions_checksum(&actions) != header.checksum {
            return Err(corrupt(1, "action records do not match the header checksum".into()));
        }
        let provenance = Provenance {
            config: header.config,
            corpus_digest: header.corpus_digest,
        };
        if provenance.fingerprint() != header.fingerprint {
            return Err(LarError::FingerprintMismatch {
                expected: provenance.fingerprint(),
                found: header.fingerprint,
            });
        }
        Ok(LatentVocabulary::from_parts(actions, provenance))
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    size: usize,
    fingerprint: String,
    checksum: String,
    corpus_digest: Option<String>,
    config: Option<PipelineConfig>,
}

/// SHA-256 over every field of every action record.
fn actions_checksum(actions: &[LatentAction]) -> String {
    let mut h = Sha256::new();
    for a in actions {
        h.update((a.rank as u64).to_le_bytes());
        h.update(a.symbol.as_bytes());
        h.update([0x1f]);
        for w in &a.segment {
            h.update(w.as_bytes());
            h.update([0x1f]);
        }
        h.update(a.freq.to_le_bytes());
        h.update(a.score.to_bits().to_le_bytes());
        h.update(a.entropy_bits.to_bits().to_le_bytes());
        h.update([0x1e]);
    }
    to_hex(&h.finalize())
}
