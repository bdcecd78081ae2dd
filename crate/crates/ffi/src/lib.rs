//! C ABI for lar-core.
//!
//! Every function returns a [`LarStatus`]. On failure a message describing the
//! error is stored per thread and can be read with [`lar_last_error_message`].
//! Handles are opaque and must be released with their matching `_free`
//! function. Strings returned through out-parameters are owned by the caller
//! and must be released with [`lar_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lar_core::config::{MinerConfig, PipelineConfig};
use lar_core::corpus::{load_corpus, Corpus, TokenizerMode};
use lar_core::distill::{kl_distill_loss, LogitMatrix};
use lar_core::error::LarError;
use lar_core::miner::{entropy_bits, identify};
use lar_core::reparam::{compress_corpus, reparameterization_rate, CorpusCheck};
use lar_core::vocab::{build_vocabulary, LatentVocabulary, Provenance};

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LarStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    NotFound = 3,
    Io = 4,
    Parse = 5,
    InvalidConfig = 6,
    InvalidInput = 7,
    Incompatible = 8,
    OutOfRange = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LarTokenizer {
    Words = 0,
    WordsPlusHtml = 1,
}

impl From<LarTokenizer> for TokenizerMode {
    fn from(t: LarTokenizer) -> Self {
        match t {
            LarTokenizer::Words => TokenizerMode::Words,
            LarTokenizer::WordsPlusHtml => TokenizerMode::WordsPlusHtml,
        }
    }
}

impl From<TokenizerMode> for LarTokenizer {
    fn from(t: TokenizerMode) -> Self {
        match t {
            TokenizerMode::Words => LarTokenizer::Words,
            TokenizerMode::WordsPlusHtml => LarTokenizer::WordsPlusHtml,
        }
    }
}

/// Identification thresholds and tokenizer.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LarMinerConfig {
    pub n_lo: u32,
    pub n_hi: u32,
    pub f_min: u64,
    pub h_max: f64,
    pub k: u64,
    pub rho: f64,
    pub tokenizer: LarTokenizer,
}

impl LarMinerConfig {
    fn to_pipeline(self) -> PipelineConfig {
        let miner = MinerConfig {
            n_lo: self.n_lo as usize,
            n_hi: self.n_hi as usize,
            f_min: self.f_min,
            h_max: self.h_max,
            k: self.k as usize,
            rho: self.rho,
        };
        PipelineConfig::new(miner, self.tokenizer.into())
    }

    fn from_pipeline(c: &PipelineConfig) -> Self {
        LarMinerConfig {
            n_lo: c.miner.n_lo as u32,
            n_hi: c.miner.n_hi as u32,
            f_min: c.miner.f_min,
            h_max: c.miner.h_max,
            k: c.miner.k as u64,
            rho: c.miner.rho,
            tokenizer: c.tokenizer.into(),
        }
    }
}

/// A loaded trajectory corpus.
pub struct LarCorpus {
    inner: Corpus,
}

/// A latent action vocabulary.
pub struct LarVocab {
    inner: LatentVocabulary,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    let c = CString::new(msg).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &LarError) -> LarStatus {
    match e {
        LarError::NotFound { .. } => LarStatus::NotFound,
        LarError::Io { .. } => LarStatus::Io,
        LarError::Parse { .. }
        | LarError::DuplicateId { .. }
        | LarError::CorruptVocabulary { .. }
        | LarError::VersionMismatch { .. } => LarStatus::Parse,
        LarError::InvalidConfig(_) => LarStatus::InvalidConfig,
        LarError::FingerprintMismatch { .. } => LarStatus::Incompatible,
        _ => LarStatus::InvalidInput,
    }
}

struct Failure(LarStatus, String);

impl From<LarError> for Failure {
    fn from(e: LarError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LarStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LarStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            LarStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(LarStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(LarStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

fn owned_string(s: &str) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(LarStatus::InvalidInput, "string contains an interior nul byte".into()))
}

/// Message of the last failed call on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lar_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn lar_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lar_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Fills `out` with a named built-in preset.
///
/// # Safety
/// `name` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lar_config_preset(name: *const c_char, out: *mut LarMinerConfig) -> LarStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let out = out_arg(out, "out")?;
        *out = LarMinerConfig::from_pipeline(&PipelineConfig::preset(name)?);
        Ok(())
    })
}

/// Loads a JSON-lines trajectory corpus.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lar_corpus_load(
    path: *const c_char,
    tokenizer: LarTokenizer,
    out: *mut *mut LarCorpus,
) -> LarStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let corpus = load_corpus(path, tokenizer.into())?;
        *out = Box::into_raw(Box::new(LarCorpus { inner: corpus }));
        Ok(())
    })
}

/// Number of trajectories in the corpus.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lar_corpus_len(corpus: *const LarCorpus, out: *mut u64) -> LarStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(corpus, "corpus")?.inner.len() as u64;
        Ok(())
    })
}

/// Total number of action tokens across the corpus.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lar_corpus_effective_horizon(corpus: *const LarCorpus, out: *mut u64) -> LarStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(corpus, "corpus")?.inner.total_effective_horizon() as u64;
        Ok(())
    })
}

/// Releases a corpus handle. Null is ignored.
///
/// # Safety
/// `corpus` must come from [`lar_corpus_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lar_corpus_free(corpus: *mut LarCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Mines a latent action vocabulary from `corpus`.
///
/// The corpus keeps the tokenizer it was loaded with; `config.tokenizer` is
/// recorded in the vocabulary and must match it.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lar_identify(
    corpus: *const LarCorpus,
    config: *const LarMinerConfig,
    out: *mut *mut LarVocab,
) -> LarStatus {
    guard(|| {
        let corpus = &ref_arg(corpus, "corpus")?.inner;
        let config = ref_arg(config, "config")?.to_pipeline();
        let out = out_arg(out, "out")?;
        if config.tokenizer != corpus.tokenizer_mode {
            return Err(Failure(
                LarStatus::InvalidConfig,
                format!(
                    "config tokenizer {} does not match corpus tokenizer {}",
                    config.tokenizer, corpus.tokenizer_mode
                ),
            ));
        }
        let segments = identify(corpus, &config.miner)?;
        let vocab = build_vocabulary(&segments, Provenance::new(config, corpus.digest()))?;
        *out = Box::into_raw(Box::new(LarVocab { inner: vocab }));
        Ok(())
    })
}

/// Loads a vocabulary file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lar_vocab_load(path: *const c_char, out: *mut *mut LarVocab) -> LarStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(LarVocab {
            inner: LatentVocabulary::load(path)?,
        }));
        Ok(())
    })
}

/// Writes a vocabulary file.
///
/// # Safety
/// `vocab` must be a live handle; `path` must be a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lar_vocab_save(vocab: *const LarVocab, path: *const c_char) -> LarStatus {
    guard(|| {
        let vocab = &ref_arg(vocab, "vocab")?.inner;
        vocab.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Number of latent actions.
///
/// # Safety
/// `vocab` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lar_vocab_len(vocab: *const LarVocab, out: *mut u64) -> LarStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(vocab, "vocab")?.inner.len() as u64;
        Ok(())
    })
}

/// New handle holding the first `k` latent actions.
///
/// # Safety
/// `vocab` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lar_vocab_prefix(vocab: *const LarVocab, k: u64, out: *mut *mut LarVocab) -> LarStatus {
    guard(|| {
        let vocab = &ref_arg(vocab, "vocab")?.inner;
        let out = out_arg(out, "out")?;
        let k = usize::try_from(k).unwrap_or(usize::MAX);
        *out = Box::into_raw(Box::new(LarVocab { inner: vocab.prefix(k) }));
        Ok(())
    })
}

unsafe fn with_action(
    vocab: *const LarVocab,
    rank: u64,
    out: *mut *mut c_char,
    field: impl FnOnce(&lar_core::vocab::LatentAction) -> String,
) -> LarStatus {
    guard(|| {
        let vocab = &ref_arg(vocab, "vocab")?.inner;
        let out = out_arg(out, "out")?;
        let action = usize::try_from(rank)
            .ok()
            .and_then(|r| vocab.get(r))
            .ok_or_else(|| Failure(LarStatus::OutOfRange, format!("rank {rank} out of range (size {})", vocab.len())))?;
        *out = owned_string(&field(action))?;
        Ok(())
    })
}

/// Latent symbol of the action at `rank`. Free the result with [`lar_string_free`].
///
/// # Safety
/// `vocab` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lar_vocab_symbol(vocab: *const LarVocab, rank: u64, out: *mut *mut c_char) -> LarStatus {
    with_action(vocab, rank, out, |a| a.symbol.clone())
}

/// Space-joined words of the segment at `rank`. Free the result with [`lar_string_free`].
///
/// # Safety
/// `vocab` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lar_vocab_segment(vocab: *const LarVocab, rank: u64, out: *mut *mut c_char) -> LarStatus {
    with_action(vocab, rank, out, |a| a.segment.join(" "))
}

/// Releases a vocabulary handle. Null is ignored.
///
/// # Safety
/// `vocab` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lar_vocab_free(vocab: *mut LarVocab) {
    if !vocab.is_null() {
        drop(Box::from_raw(vocab));
    }
}

/// Compresses every trajectory and reports the reparameterization rate.
/// A nonzero `allow_cross_corpus` accepts vocabularies mined elsewhere.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lar_compress_rate(
    corpus: *const LarCorpus,
    vocab: *const LarVocab,
    allow_cross_corpus: i32,
    out: *mut f64,
) -> LarStatus {
    guard(|| {
        let corpus = &ref_arg(corpus, "corpus")?.inner;
        let vocab = &ref_arg(vocab, "vocab")?.inner;
        let out = out_arg(out, "out")?;
        let check = if allow_cross_corpus != 0 {
            CorpusCheck::AllowCrossCorpus
        } else {
            CorpusCheck::Enforce
        };
        let pairs = compress_corpus(corpus, vocab, check)?;
        *out = reparameterization_rate(&pairs)?;
        Ok(())
    })
}

/// Shannon entropy in bits of a successor count vector.
///
/// # Safety
/// `counts` must point to `len` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lar_entropy_bits(counts: *const u64, len: usize, out: *mut f64) -> LarStatus {
    guard(|| {
        if counts.is_null() && len > 0 {
            return Err(null("counts"));
        }
        let out = out_arg(out, "out")?;
        let counts: &[u64] = if len == 0 { &[] } else { std::slice::from_raw_parts(counts, len) };
        *out = entropy_bits(counts.iter().copied())
            .ok_or_else(|| Failure(LarStatus::InvalidInput, "counts sum to zero".into()))?;
        Ok(())
    })
}

/// Mean KL divergence in nats between row-major `rows x cols` teacher and
/// student logits at the given temperature.
///
/// # Safety
/// `teacher` and `student` must each point to `rows * cols` readable values;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lar_kl_distill_loss(
    teacher: *const f64,
    student: *const f64,
    rows: usize,
    cols: usize,
    temperature: f64,
    out: *mut f64,
) -> LarStatus {
    guard(|| {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(LarStatus::InvalidInput, "rows * cols overflows".into()))?;
        let out = out_arg(out, "out")?;
        let slice = |p: *const f64, what| -> Result<Vec<f64>, Failure> {
            if n == 0 {
                Ok(Vec::new())
            } else if p.is_null() {
                Err(null(what))
            } else {
                Ok(std::slice::from_raw_parts(p, n).to_vec())
            }
        };
        let t = LogitMatrix::new(rows, cols, slice(teacher, "teacher")?)?;
        let s = LogitMatrix::new(rows, cols, slice(student, "student")?)?;
        *out = kl_distill_loss(&t, &s, temperature)?;
        Ok(())
    })
}
