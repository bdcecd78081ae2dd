mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use lar_core::config::{MinerConfig, PipelineConfig};
use lar_core::corpus::{effective_horizon, tokenize_action, TokenizerMode};
use lar_core::distill::{kl_distill_loss, LogitMatrix};
use lar_core::metrics::report;
use lar_core::miner::{identify, identify_with_stages};
use lar_core::reparam::{compress, compress_corpus, expand, latent_horizon, reparameterization_rate, CorpusCheck};
use lar_core::vocab::{build_vocabulary, LatentVocabulary, Provenance};
use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, prop_assume, proptest, Just, ProptestConfig, Strategy};

use common::*;

fn seed() -> impl Strategy<Value = u64> {
    any::<u64>()
}

fn mined(seed: u64) -> (lar_core::corpus::Corpus, MinerConfig, LatentVocabulary) {
    let mut r = rng(seed);
    let actions = small_actions(&mut r, 200);
    let mut cfg = small_config(&mut r);
    cfg.n_lo = cfg.n_lo.max(2);
    cfg.n_hi = cfg.n_hi.max(cfg.n_lo);
    let corpus = corpus_from_actions(&actions, TokenizerMode::Words);
    let segments = identify(&corpus, &cfg).unwrap();
    let provenance = Provenance::new(PipelineConfig::new(cfg, TokenizerMode::Words), corpus.digest());
    let vocab = build_vocabulary(&segments, provenance).unwrap();
    (corpus, cfg, vocab)
}

fn passing(seed: u64, cfg: &MinerConfig) -> BTreeSet<Vec<Arc<str>>> {
    let corpus = corpus_from_actions(&small_actions(&mut rng(seed), 200), TokenizerMode::Words);
    identify_with_stages(&corpus, cfg)
        .unwrap()
        .frequent
        .into_iter()
        .filter(|c| c.entropy_bits <= cfg.h_max)
        .map(|c| c.words)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn admitted_segments_are_sound(seed in seed()) {
        let (_, cfg, vocab) = mined(seed);
        let segments: Vec<_> = vocab.actions().iter().map(|a| candidate(&a.segment.iter().map(|w| &**w).collect::<Vec<_>>())).collect();
        prop_assert!(vocab.len() <= cfg.k);
        for a in vocab.actions() {
            prop_assert!(a.freq >= cfg.f_min);
            prop_assert!(a.entropy_bits <= cfg.h_max);
        }
        prop_assert!(vocab.actions().windows(2).all(|w| w[0].score >= w[1].score));
        for (i, a) in segments.iter().enumerate() {
            for b in &segments[..i] {
                prop_assert!(lar_core::miner::overlap(&a.words, &b.words) < cfg.rho);
            }
        }
    }

    #[test]
    fn stricter_thresholds_never_add_candidates(seed in seed(), df in 0u64..4, dh in 0.0f64..2.0) {
        let cfg = small_config(&mut rng(seed ^ 0xABCD));
        let strict = MinerConfig { f_min: cfg.f_min + df, h_max: (cfg.h_max - dh).max(0.0), ..cfg };
        let loose = passing(seed, &cfg);
        let tight = passing(seed, &strict);
        prop_assert!(tight.is_subset(&loose));
    }

    #[test]
    fn report_stages_form_a_non_increasing_chain(seed in seed()) {
        let (corpus, cfg, vocab) = mined(seed);
        let rep = report(&corpus, &PipelineConfig::new(cfg, TokenizerMode::Words), &vocab, None).unwrap();
        let s = rep.stages;
        prop_assert!(s.raw >= s.after_f_min && s.after_f_min >= s.after_h_max && s.after_h_max >= s.admitted);
        prop_assert_eq!(s.admitted as usize, vocab.len());
    }

    #[test]
    fn horizons_and_rate_agree(seed in seed()) {
        let (corpus, _, vocab) = mined(seed);
        let pairs = compress_corpus(&corpus, &vocab, CorpusCheck::Enforce).unwrap();
        let mut lat = 0;
        let mut eff = 0;
        for p in &pairs {
            let h_lat = latent_horizon(p);
            let h_eff = effective_horizon(&p.original);
            // Mined segments have at least two words, so every replacement shortens.
            prop_assert!(h_lat <= h_eff);
            prop_assert_eq!(h_lat == h_eff, p.replacements.is_empty());
            let saved: usize = p.replacements.iter().map(|r| r.token_len - 1).sum();
            prop_assert_eq!(h_eff - h_lat, saved);
            lat += h_lat;
            eff += h_eff;
        }
        let rate = reparameterization_rate(&pairs).unwrap();
        prop_assert_eq!(rate, lat as f64 / eff as f64);
    }

    #[test]
    fn compression_is_deterministic_and_text_faithful(seed in seed()) {
        let (corpus, _, vocab) = mined(seed);
        let parallel = compress_corpus(&corpus, &vocab, CorpusCheck::Enforce).unwrap();
        for (t, p) in corpus.trajectories.iter().zip(&parallel) {
            prop_assert_eq!(&compress(t, &vocab), p);
            let back = expand(p, &vocab).unwrap();
            prop_assert!(back.tokens_eq(t));
            for step in &back.steps {
                prop_assert_eq!(&tokenize_action(&step.action, TokenizerMode::Words), &step.action_tokens);
            }
        }
    }

    #[test]
    fn prefixes_compose(seed in seed(), a in 0usize..25, b in 0usize..25) {
        let (_, _, vocab) = mined(seed);
        prop_assert_eq!(vocab.prefix(a).prefix(b), vocab.prefix(a.min(b)));
        let p = vocab.prefix(a);
        prop_assert_eq!(p.len(), a.min(vocab.len()));
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        prop_assert_eq!(LatentVocabulary::read_from(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn kl_loss_is_non_negative(
        (rows, cols, t, s) in (1usize..5, 2usize..9).prop_flat_map(|(r, c)| {
            let v = prop::collection::vec(-20.0f64..20.0, r * c);
            (Just(r), Just(c), v.clone(), v)
        }),
        tau in 0.1f64..8.0,
    ) {
        let t = LogitMatrix::new(rows, cols, t).unwrap();
        let s = LogitMatrix::new(rows, cols, s).unwrap();
        let loss = kl_distill_loss(&t, &s, tau).unwrap();
        prop_assert!(loss >= 0.0 && loss.is_finite());
    }

    #[test]
    fn tokenization_is_a_fixed_point_after_one_round(text in "[a-c.!? \\n<>/]{0,60}") {
        for mode in [TokenizerMode::Words, TokenizerMode::WordsPlusHtml] {
            let once = tokenize_action(&text, mode);
            let joined: Vec<&str> = once.iter().map(|t| &*t.text).collect();
            let again = tokenize_action(&joined.join(" "), TokenizerMode::Words);
            let twice: Vec<&str> = again.iter().map(|t| &*t.text).collect();
            if mode == TokenizerMode::Words {
                prop_assert_eq!(&twice, &joined);
            }
            let third = tokenize_action(&twice.join(" "), TokenizerMode::Words);
            prop_assert_eq!(third, again);
        }
    }

    #[test]
    fn tokenization_ignores_corpus_partitioning(seed in seed(), cut in 0usize..100) {
        let actions = small_actions(&mut rng(seed), 200);
        prop_assume!(actions.len() >= 2);
        let cut = 1 + cut % (actions.len() - 1);
        let whole = corpus_from_actions(&actions, TokenizerMode::Words);
        let head = corpus_from_actions(&actions[..cut], TokenizerMode::Words);
        let tail = corpus_from_actions(&actions[cut..], TokenizerMode::Words);
        let tokens = |c: &lar_core::corpus::Corpus| -> Vec<Vec<lar_core::corpus::Token>> {
            c.trajectories.iter().flat_map(|t| t.steps.iter().map(|s| s.action_tokens.clone())).collect()
        };
        let mut parts = tokens(&head);
        parts.extend(tokens(&tail));
        prop_assert_eq!(parts, tokens(&whole));
    }
}
