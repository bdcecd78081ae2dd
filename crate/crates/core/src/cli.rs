//! The `lar` command-line interface.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors, 2 on I/O errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::PipelineConfig;
use crate::corpus::{load_corpus_with, Corpus, ParseMode, TokenizerMode};
use crate::distill::{distill_record, kl_distill_loss_with, nats_to_bits, KlOptions, LogitMatrix, DEFAULT_TEMPERATURE};
use crate::error::{LarError, Result};
use crate::manifest::ManifestBuilder;
use crate::metrics::{is_monotone, report, sweep, write_sweep_csv};
use crate::miner::identify;
use crate::reparam::{compress_corpus, expand, read_pairs, reparameterization_rate, write_pairs, CorpusCheck};
use crate::vocab::{build_vocabulary, LatentVocabulary, Provenance};

#[derive(Parser, Debug)]
#[command(name = "lar", version, about = "Latent action mining and trajectory reparameterization")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Abort on the first malformed corpus line (default)
    #[arg(long, global = true, conflicts_with = "lenient")]
    strict: bool,

    /// Skip malformed corpus lines and report them on stderr
    #[arg(long, global = true)]
    lenient: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mine a latent action vocabulary from a trajectory corpus
    Identify(IdentifyArgs),
    /// Replace vocabulary segments in a corpus with latent symbols
    Compress(CompressArgs),
    /// Expand latent symbols in a dual-pair file back to words
    Expand(ExpandArgs),
    /// Print the reparameterization rate of a dual-pair file
    Rate(RateArgs),
    /// Emit teacher/student token streams with shared-position masks
    PrepDistill(PrepDistillArgs),
    /// Compression rate as a function of vocabulary prefix size
    Sweep(SweepArgs),
    /// Candidate statistics and compression summary for a corpus
    Report(ReportArgs),
    /// Inspect vocabulary files
    #[command(subcommand)]
    Vocab(VocabCommand),
    /// Reference KL distillation loss between two logit containers
    KlLoss(KlLossArgs),
}

#[derive(Args, Debug)]
struct ConfigSource {
    /// Configuration file (TOML)
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Named preset (triviaqa, kodcode, mind2web); $LAR_PRESET_DIR overrides the built-ins
    #[arg(long)]
    preset: Option<String>,
}

impl ConfigSource {
    fn resolve(&self) -> Result<PipelineConfig> {
        match (&self.config, &self.preset) {
            (Some(path), _) => PipelineConfig::load(path),
            (None, Some(name)) => PipelineConfig::preset(name),
            (None, None) => Err(LarError::InvalidConfig("--config or --preset is required".into())),
        }
    }
}

#[derive(Args, Debug)]
struct IdentifyArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    source: ConfigSource,
    /// Override the configured tokenizer: words or words+html
    #[arg(long)]
    tokenizer: Option<TokenizerMode>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CompressArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Tokenizer for the corpus (default: the one the vocabulary was mined with)
    #[arg(long)]
    tokenizer: Option<TokenizerMode>,
    /// Accept a vocabulary mined from a different corpus
    #[arg(long)]
    allow_cross_corpus: bool,
}

#[derive(Args, Debug)]
struct ExpandArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Fail unless every expansion reproduces its original trajectory
    #[arg(long)]
    verify: bool,
    /// Write expanded trajectories (trajectory file format)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RateArgs {
    #[arg(long)]
    pairs: PathBuf,
    /// Also write the rate as JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PrepDistillArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Additionally check every pair expands exactly under this vocabulary
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Comma-separated prefix sizes, ascending
    #[arg(long, value_delimiter = ',', required = true)]
    ks: Vec<usize>,
    /// CSV output (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tokenizer: Option<TokenizerMode>,
    #[arg(long)]
    allow_cross_corpus: bool,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    source: ConfigSource,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Machine-readable JSON report
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum VocabCommand {
    /// Print every latent action
    Show {
        #[arg(long)]
        vocab: PathBuf,
    },
    /// Print (or save) the k highest-priority latent actions
    Head {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct KlLossArgs {
    #[arg(long)]
    teacher: PathBuf,
    #[arg(long)]
    student: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TEMPERATURE)]
    temperature: f64,
    /// Multiply the loss by temperature squared
    #[arg(long)]
    scale_tau_squared: bool,
    /// Report in bits instead of nats
    #[arg(long)]
    bits: bool,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Some(n) = cli.threads {
        // A second call in the same process fails; the pool from the first call stays.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let parse = if cli.lenient { ParseMode::Lenient } else { ParseMode::Strict };
    match execute(cli.command, parse) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn stdout_err(e: io::Error) -> LarError {
    LarError::io("<stdout>", e)
}

fn read_corpus_file(path: &Path, mode: TokenizerMode, parse: ParseMode) -> Result<Corpus> {
    let (corpus, skipped) = load_corpus_with(path, mode, parse)?;
    for s in &skipped {
        eprintln!("warning: {}:{}: skipped: {}", path.display(), s.line, s.reason);
    }
    Ok(corpus)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| LarError::io(path, e))
}

fn execute(command: Command, parse: ParseMode) -> Result<i32> {
    match command {
        Command::Identify(a) => cmd_identify(a, parse),
        Command::Compress(a) => cmd_compress(a, parse),
        Command::Expand(a) => cmd_expand(a),
        Command::Rate(a) => cmd_rate(a),
        Command::PrepDistill(a) => cmd_prep_distill(a),
        Command::Sweep(a) => cmd_sweep(a, parse),
        Command::Report(a) => cmd_report(a, parse),
        Command::Vocab(v) => cmd_vocab(v),
        Command::KlLoss(a) => cmd_kl_loss(a),
    }
}

fn cmd_identify(a: IdentifyArgs, parse: ParseMode) -> Result<i32> {
    let mut manifest = ManifestBuilder::start("identify");
    let mut config = a.source.resolve()?;
    if let Some(t) = a.tokenizer {
        config.tokenizer = t;
    }
    let corpus = read_corpus_file(&a.corpus, config.tokenizer, parse)?;
    let digest = corpus.digest();
    let segments = identify(&corpus, &config.miner)?;
    let vocab = build_vocabulary(&segments, Provenance::new(config.clone(), digest.clone()))?;
    vocab.save(&a.out)?;
    manifest
        .input("corpus", &a.corpus)
        .config(&config)
        .corpus_digest(digest)
        .vocab_fingerprint(vocab.fingerprint());
    manifest.write(&a.out)?;
    println!("{} latent actions -> {}", vocab.len(), a.out.display());
    Ok(0)
}

fn corpus_mode(flag: Option<TokenizerMode>, vocab: &LatentVocabulary) -> TokenizerMode {
    flag.or_else(|| vocab.config().map(|c| c.tokenizer)).unwrap_or_default()
}

fn cmd_compress(a: CompressArgs, parse: ParseMode) -> Result<i32> {
    let mut manifest = ManifestBuilder::start("compress");
    let vocab = LatentVocabulary::load(&a.vocab)?;
    let corpus = read_corpus_file(&a.corpus, corpus_mode(a.tokenizer, &vocab), parse)?;
    let check = if a.allow_cross_corpus { CorpusCheck::AllowCrossCorpus } else { CorpusCheck::Enforce };
    let pairs = compress_corpus(&corpus, &vocab, check)?;
    write_pairs(&a.out, &pairs)?;
    let rate = reparameterization_rate(&pairs).ok();
    manifest
        .input("corpus", &a.corpus)
        .input("vocab", &a.vocab)
        .config(serde_json::json!({ "allow_cross_corpus": a.allow_cross_corpus, "tokenizer": corpus.tokenizer_mode, "rate": rate }))
        .corpus_digest(corpus.digest())
        .vocab_fingerprint(vocab.fingerprint());
    manifest.write(&a.out)?;
    match rate {
        Some(r) => println!("{} pairs, rate {r} -> {}", pairs.len(), a.out.display()),
        None => println!("{} pairs -> {}", pairs.len(), a.out.display()),
    }
    Ok(0)
}

fn cmd_expand(a: ExpandArgs) -> Result<i32> {
    let mut manifest = ManifestBuilder::start("expand");
    let vocab = LatentVocabulary::load(&a.vocab)?;
    let pairs = read_pairs(&a.pairs)?;
    let mut expanded = Vec::with_capacity(pairs.len());
    let mut mismatches = 0usize;
    for p in &pairs {
        let t = expand(p, &vocab)?;
        if a.verify && !t.tokens_eq(&p.original) {
            eprintln!("mismatch: trajectory {:?} does not expand to its original", p.original.id);
            mismatches += 1;
        }
        expanded.push(t);
    }
    if let Some(out) = &a.out {
        let mut w = create(out)?;
        let res: io::Result<()> = (|| {
            for t in &expanded {
                let record = crate::corpus::TrajectoryRecord {
                    id: t.id.clone(),
                    steps: t
                        .steps
                        .iter()
                        .map(|s| crate::corpus::StepRecord {
                            observation: s.observation.clone(),
                            action: s.action.clone(),
                        })
                        .collect(),
                };
                serde_json::to_writer(&mut w, &record)?;
                w.write_all(b"\n")?;
            }
            w.flush()
        })();
        res.map_err(|e| LarError::io(out, e))?;
        manifest
            .input("pairs", &a.pairs)
            .input("vocab", &a.vocab)
            .config(serde_json::json!({ "verify": a.verify }))
            .vocab_fingerprint(vocab.fingerprint());
        manifest.write(out)?;
    }
    if mismatches > 0 {
        eprintln!("error: {mismatches} of {} pairs failed round-trip verification", pairs.len());
        return Ok(1);
    }
    if a.verify {
        println!("verified {} pairs", pairs.len());
    } else {
        println!("expanded {} pairs", pairs.len());
    }
    Ok(0)
}

fn cmd_rate(a: RateArgs) -> Result<i32> {
    let mut manifest = ManifestBuilder::start("rate");
    let pairs = read_pairs(&a.pairs)?;
    let rate = reparameterization_rate(&pairs)?;
    println!("{rate}");
    if let Some(out) = &a.out {
        let text = serde_json::json!({ "pairs": pairs.len(), "rate": rate }).to_string();
        std::fs::write(out, text + "\n").map_err(|e| LarError::io(out, e))?;
        manifest.input("pairs", &a.pairs);
        manifest.write(out)?;
    }
    Ok(0)
}

fn cmd_prep_distill(a: PrepDistillArgs) -> Result<i32> {
    let mut manifest = ManifestBuilder::start("prep-distill");
    let pairs = read_pairs(&a.pairs)?;
    let vocab = a.vocab.as_ref().map(LatentVocabulary::load).transpose()?;
    let mut w = create(&a.out)?;
    let mut masked = 0usize;
    for p in &pairs {
        if let Some(v) = &vocab {
            if !expand(p, v)?.tokens_eq(&p.original) {
                return Err(LarError::InconsistentPair {
                    id: p.original.id.clone(),
                    reason: "expansion does not reproduce the original".into(),
                });
            }
        }
        let record = distill_record(p)?;
        masked += record.mask_pairs.len();
        serde_json::to_writer(&mut w, &record)
            .map_err(io::Error::from)
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| LarError::io(&a.out, e))?;
    }
    w.flush().map_err(|e| LarError::io(&a.out, e))?;
    manifest.input("pairs", &a.pairs);
    if let (Some(path), Some(v)) = (&a.vocab, &vocab) {
        manifest.input("vocab", path).vocab_fingerprint(v.fingerprint());
    }
    manifest.write(&a.out)?;
    println!("{} records, {masked} shared positions -> {}", pairs.len(), a.out.display());
    Ok(0)
}

fn cmd_sweep(a: SweepArgs, parse: ParseMode) -> Result<i32> {
    let mut manifest = ManifestBuilder::start("sweep");
    if a.ks.windows(2).any(|w| w[1] < w[0]) {
        return Err(LarError::InvalidInput("--ks must be ascending".into()));
    }
    let vocab = LatentVocabulary::load(&a.vocab)?;
    let corpus = read_corpus_file(&a.corpus, corpus_mode(a.tokenizer, &vocab), parse)?;
    let digest = corpus.digest();
    let check = if a.allow_cross_corpus { CorpusCheck::AllowCrossCorpus } else { CorpusCheck::Enforce };
    crate::reparam::check_compatibility(&digest, &vocab, check)?;
    let points = sweep(&corpus, &vocab, &a.ks)?;
    if !is_monotone(&points) {
        eprintln!("warning: compression rate increases with k somewhere in this sweep");
    }
    match &a.out {
        Some(out) => {
            let mut w = create(out)?;
            write_sweep_csv(&points, &mut w)
                .and_then(|_| w.flush())
                .map_err(|e| LarError::io(out, e))?;
            manifest
                .input("corpus", &a.corpus)
                .input("vocab", &a.vocab)
                .config(serde_json::json!({ "ks": a.ks }))
                .corpus_digest(digest)
                .vocab_fingerprint(vocab.fingerprint());
            manifest.write(out)?;
        }
        None => write_sweep_csv(&points, &mut io::stdout().lock()).map_err(stdout_err)?,
    }
    Ok(0)
}

fn cmd_report(a: ReportArgs, parse: ParseMode) -> Result<i32> {
    let mut manifest = ManifestBuilder::start("report");
    let config = a.source.resolve()?;
    let vocab = LatentVocabulary::load(&a.vocab)?;
    let corpus = read_corpus_file(&a.corpus, config.tokenizer, parse)?;
    let pairs = a.pairs.as_ref().map(read_pairs).transpose()?;
    let rep = report(&corpus, &config, &vocab, pairs.as_deref())?;
    println!("{rep}");
    if let Some(out) = &a.out {
        let text = serde_json::to_string_pretty(&rep).expect("report serializes");
        std::fs::write(out, text + "\n").map_err(|e| LarError::io(out, e))?;
        manifest
            .input("corpus", &a.corpus)
            .input("vocab", &a.vocab)
            .config(&config)
            .corpus_digest(corpus.digest())
            .vocab_fingerprint(vocab.fingerprint());
        if let Some(p) = &a.pairs {
            manifest.input("pairs", p);
        }
        manifest.write(out)?;
    }
    Ok(0)
}

fn print_vocab(vocab: &LatentVocabulary) -> Result<()> {
    let mut out = io::stdout().lock();
    let res: io::Result<()> = (|| {
        writeln!(out, "# fingerprint {}", vocab.fingerprint())?;
        if let Some(c) = vocab.config() {
            writeln!(
                out,
                "# n=[{}, {}] f_min={} H_max={} K={} rho={} tokenizer={}",
                c.miner.n_lo, c.miner.n_hi, c.miner.f_min, c.miner.h_max, c.miner.k, c.miner.rho, c.tokenizer
            )?;
        }
        writeln!(out, "rank\tsymbol\tscore\tfreq\tentropy_bits\tsegment")?;
        for a in vocab.actions() {
            writeln!(
                out,
                "{}\t{}\t{:.4}\t{}\t{:.4}\t{}",
                a.rank,
                a.symbol,
                a.score,
                a.freq,
                a.entropy_bits,
                crate::miner::join_words(&a.segment)
            )?;
        }
        Ok(())
    })();
    res.map_err(stdout_err)
}

fn cmd_vocab(cmd: VocabCommand) -> Result<i32> {
    match cmd {
        VocabCommand::Show { vocab } => print_vocab(&LatentVocabulary::load(&vocab)?)?,
        VocabCommand::Head { vocab: path, k, out } => {
            let mut manifest = ManifestBuilder::start("vocab head");
            let vocab = LatentVocabulary::load(&path)?;
            let head = vocab.prefix(k);
            match out {
                Some(out) => {
                    head.save(&out)?;
                    manifest
                        .input("vocab", &path)
                        .config(serde_json::json!({ "k": k }))
                        .vocab_fingerprint(head.fingerprint());
                    manifest.write(&out)?;
                }
                None => print_vocab(&head)?,
            }
        }
    }
    Ok(0)
}

fn read_logits(path: &Path) -> Result<LogitMatrix> {
    let mut f = io::BufReader::new(File::open(path).map_err(|e| LarError::io(path, e))?);
    LogitMatrix::read_from(&mut f)
}

fn cmd_kl_loss(a: KlLossArgs) -> Result<i32> {
    let teacher = read_logits(&a.teacher)?;
    let student = read_logits(&a.student)?;
    let opts = KlOptions {
        temperature: a.temperature,
        scale_by_temperature_sq: a.scale_tau_squared,
    };
    let loss = kl_distill_loss_with(&teacher, &student, opts)?;
    if a.bits {
        println!("{}", nats_to_bits(loss));
    } else {
        println!("{loss}");
    }
    Ok(0)
}
