//! Corpus reports and the progressive-abstraction sweep.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::corpus::{trajectories_digest, Corpus};
use crate::error::{LarError, Result};
use crate::miner::{identify_with_stages, StageCounts};
use crate::reparam::{compress_unchecked, latent_horizon, reparameterization_rate, DualPair};
use crate::vocab::LatentVocabulary;

/// Width of entropy histogram bins, in bits.
pub const ENTROPY_BIN_WIDTH: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub rate: f64,
    pub mean_h_lat: f64,
    pub replaced_fraction: f64,
}

/// Compresses the corpus under each vocabulary prefix. Prefix sizes beyond
/// the vocabulary are clamped; points are returned in the order of `ks`.
pub fn sweep(corpus: &Corpus, vocab: &LatentVocabulary, ks: &[usize]) -> Result<Vec<SweepPoint>> {
    if corpus.total_effective_horizon() == 0 {
        return Err(LarError::InvalidInput("corpus has no action tokens".into()));
    }
    ks.par_iter()
        .map(|&k| {
            let pairs = compress_unchecked(corpus, &vocab.prefix(k));
            let rate = reparameterization_rate(&pairs)?;
            let total_lat: usize = pairs.iter().map(latent_horizon).sum();
            Ok(SweepPoint {
                k,
                rate,
                mean_h_lat: total_lat as f64 / pairs.len() as f64,
                replaced_fraction: 1.0 - rate,
            })
        })
        .collect()
}

/// True when the rate never rises as `k` grows.
pub fn is_monotone(points: &[SweepPoint]) -> bool {
    let mut sorted: Vec<_> = points.iter().collect();
    sorted.sort_by_key(|p| p.k);
    sorted.windows(2).all(|w| w[1].rate <= w[0].rate)
}

pub fn write_sweep_csv(points: &[SweepPoint], w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "k,rate,mean_H_lat,replaced_fraction")?;
    for p in points {
        writeln!(w, "{},{},{},{}", p.k, p.rate, p.mean_h_lat, p.replaced_fraction)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyHistogram {
    pub bin_width: f64,
    /// Counts for `[i * width, (i + 1) * width)`; the last bin is closed at H_max.
    pub bins: Vec<u64>,
    /// Frequent candidates whose entropy exceeds H_max.
    pub above_max: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub count: u64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionStats {
    pub vocabulary_size: usize,
    pub total_h_lat: u64,
    pub rate: f64,
    pub replaced_token_fraction: f64,
    pub replacements: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub n_trajectories: usize,
    pub total_h_eff: u64,
    pub stages: StageCounts,
    pub entropy_histogram: EntropyHistogram,
    pub scores: ScoreSummary,
    pub compression: CompressionStats,
}

/// Builds a report for artifacts derived from one corpus. The vocabulary
/// must carry this corpus's digest (or none), and pairs, when given, must
/// have been produced from the same trajectories.
pub fn report(
    corpus: &Corpus,
    config: &PipelineConfig,
    vocab: &LatentVocabulary,
    pairs: Option<&[DualPair]>,
) -> Result<CorpusReport> {
    let digest = corpus.digest();
    if let Some(expected) = vocab.corpus_digest() {
        if expected != digest {
            return Err(LarError::FingerprintMismatch {
                expected: expected.to_string(),
                found: digest,
            });
        }
    }
    if let Some(vc) = vocab.config() {
        if vc.fingerprint() != config.fingerprint() {
            return Err(LarError::FingerprintMismatch {
                expected: vc.fingerprint(),
                found: config.fingerprint(),
            });
        }
    }
    let owned;
    let pairs = match pairs {
        Some(p) => {
            let found = trajectories_digest(p.iter().map(|p| &p.original));
            if found != digest {
                return Err(LarError::FingerprintMismatch { expected: digest, found });
            }
            p
        }
        None => {
            owned = compress_unchecked(corpus, vocab);
            &owned
        }
    };

    let id = identify_with_stages(corpus, &config.miner)?;
    let h_max = config.miner.h_max;
    let n_bins = ((h_max / ENTROPY_BIN_WIDTH).ceil() as usize).max(1);
    let mut bins = vec![0u64; n_bins];
    let mut above_max = 0;
    for c in &id.frequent {
        if c.entropy_bits > h_max {
            above_max += 1;
        } else {
            let b = ((c.entropy_bits / ENTROPY_BIN_WIDTH) as usize).min(n_bins - 1);
            bins[b] += 1;
        }
    }

    let mut scores: Vec<f64> = id
        .frequent
        .iter()
        .filter(|c| c.entropy_bits <= h_max)
        .map(|c| c.score)
        .collect();
    scores.sort_by(f64::total_cmp);
    let summary = if scores.is_empty() {
        ScoreSummary::default()
    } else {
        let n = scores.len();
        let median = if n % 2 == 1 {
            scores[n / 2]
        } else {
            (scores[n / 2 - 1] + scores[n / 2]) / 2.0
        };
        ScoreSummary {
            count: n as u64,
            min: scores[0],
            max: scores[n - 1],
            mean: scores.iter().sum::<f64>() / n as f64,
            median,
        }
    };

    let total_h_eff = corpus.total_effective_horizon() as u64;
    let total_h_lat: u64 = pairs.iter().map(|p| latent_horizon(p) as u64).sum();
    let rate = if total_h_eff == 0 {
        1.0
    } else {
        reparameterization_rate(pairs)?
    };
    Ok(CorpusReport {
        n_trajectories: corpus.len(),
        total_h_eff,
        stages: id.stages,
        entropy_histogram: EntropyHistogram {
            bin_width: ENTROPY_BIN_WIDTH,
            bins,
            above_max,
        },
        scores: summary,
        compression: CompressionStats {
            vocabulary_size: vocab.len(),
            total_h_lat,
            rate,
            replaced_token_fraction: 1.0 - rate,
            replacements: pairs.iter().map(|p| p.replacements.len() as u64).sum(),
        },
    })
}

impl fmt::Display for CorpusReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "trajectories        {}", self.n_trajectories)?;
        writeln!(f, "action tokens       {}", self.total_h_eff)?;
        let s = &self.stages;
        writeln!(f, "candidates")?;
        writeln!(f, "  raw               {}", s.raw)?;
        writeln!(f, "  freq >= f_min     {}", s.after_f_min)?;
        writeln!(f, "  entropy <= H_max  {}", s.after_h_max)?;
        writeln!(f, "  admitted          {}", s.admitted)?;
        let sc = &self.scores;
        if sc.count > 0 {
            writeln!(
                f,
                "scores              min {:.3}  median {:.3}  mean {:.3}  max {:.3}",
                sc.min, sc.median, sc.mean, sc.max
            )?;
        }
        writeln!(f, "entropy histogram (bits)")?;
        let h = &self.entropy_histogram;
        for (i, &count) in h.bins.iter().enumerate() {
            if count > 0 {
                let lo = i as f64 * h.bin_width;
                writeln!(f, "  [{:>5.2}, {:>5.2})  {}", lo, lo + h.bin_width, count)?;
            }
        }
        if h.above_max > 0 {
            writeln!(f, "  above H_max       {}", h.above_max)?;
        }
        let c = &self.compression;
        writeln!(f, "vocabulary size     {}", c.vocabulary_size)?;
        writeln!(f, "latent tokens       {}", c.total_h_lat)?;
        writeln!(f, "replacements        {}", c.replacements)?;
        writeln!(f, "rate                {:.6}", c.rate)?;
        write!(f, "replaced fraction   {:.6}", c.replaced_token_fraction)
    }
}
