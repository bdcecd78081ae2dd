//! Teacher/student alignment masks and the reference temperature-scaled KL
//! distillation loss.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{LarError, Result};
use crate::reparam::DualPair;
use crate::vocab::{is_reserved, parse_symbol};

/// Default softening temperature.
pub const DEFAULT_TEMPERATURE: f64 = 2.0;

/// Shared-content positions `(teacher, student)` over the flattened
/// action-token streams.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AlignmentMask {
    pub pairs: Vec<(usize, usize)>,
}

impl AlignmentMask {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Derives the mask from the pair's replacement spans.
///
/// Tokens outside every replaced span map one-to-one onto the student
/// stream; replaced spans and their symbols are excluded. The pair is
/// rejected unless the untouched tokens agree and each span collapses to
/// exactly one symbol.
pub fn build_mask(pair: &DualPair) -> Result<AlignmentMask> {
    let id = &pair.original.id;
    let bad = |reason: String| LarError::InconsistentPair {
        id: id.clone(),
        reason,
    };
    if pair.original.steps.len() != pair.reparameterized.steps.len() {
        return Err(bad("step counts differ".into()));
    }

    let mut mask = Vec::new();
    let mut spans = pair.replacements.iter().peekable();
    let mut teacher_base = 0;
    let mut student_base = 0;
    for (step_index, (orig, rep)) in pair.original.steps.iter().zip(&pair.reparameterized.steps).enumerate() {
        let teacher = &orig.action_tokens;
        let student = &rep.action_tokens;
        let mut t = 0;
        let mut s = 0;
        while t < teacher.len() {
            let span = spans.peek().filter(|r| r.step_index == step_index && r.token_start == t);
            if let Some(r) = span {
                if r.token_len == 0 || t + r.token_len > teacher.len() {
                    return Err(bad(format!("span at step {step_index}, token {t} is out of range")));
                }
                match student.get(s) {
                    Some(tok) if parse_symbol(&tok.text) == Some(r.action_rank) => {}
                    _ => return Err(bad(format!("no matching latent symbol for span at step {step_index}, token {t}"))),
                }
                t += r.token_len;
                s += 1;
                spans.next();
                continue;
            }
            match student.get(s) {
                Some(tok) if tok.text == teacher[t].text && !is_reserved(&tok.text) => {
                    mask.push((teacher_base + t, student_base + s));
                }
                _ => return Err(bad(format!("token mismatch at step {step_index}, original position {t}"))),
            }
            t += 1;
            s += 1;
        }
        if s != student.len() {
            return Err(bad(format!("reparameterized step {step_index} has extra tokens")));
        }
        if spans.peek().is_some_and(|r| r.step_index == step_index) {
            return Err(bad(format!("unordered or overlapping spans in step {step_index}")));
        }
        teacher_base += teacher.len();
        student_base += student.len();
    }
    if spans.next().is_some() {
        return Err(bad("replacement refers to a missing step".into()));
    }
    Ok(AlignmentMask { pairs: mask })
}

/// One line of a distillation training file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillRecord {
    pub id: String,
    pub teacher_tokens: Vec<String>,
    pub student_tokens: Vec<String>,
    pub mask_pairs: Vec<(usize, usize)>,
}

pub fn distill_record(pair: &DualPair) -> Result<DistillRecord> {
    let mask = build_mask(pair)?;
    Ok(DistillRecord {
        id: pair.original.id.clone(),
        teacher_tokens: pair.original.action_tokens().map(|t| t.text.to_string()).collect(),
        student_tokens: pair.reparameterized.action_tokens().map(|t| t.text.to_string()).collect(),
        mask_pairs: mask.pairs,
    })
}

/// Dense row-major logits, one row per masked position.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

const LOGIT_MAGIC: &[u8; 8] = b"LARLOGIT";
const LOGIT_VERSION: u32 = 1;

impl LogitMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(values.len()) {
            return Err(LarError::InvalidInput(format!(
                "{} values cannot form a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(LarError::NonFiniteLogit {
                row: i / cols,
                col: i % cols,
            });
        }
        Ok(LogitMatrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LarError::InvalidInput("ragged logit rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Binary container: `LARLOGIT`, u32 version, u64 rows, u64 cols, then
    /// `rows * cols` f64 values, all little-endian.
    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(LOGIT_MAGIC)?;
        w.write_all(&LOGIT_VERSION.to_le_bytes())?;
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.cols as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let corrupt = |what: &str| LarError::InvalidInput(format!("logit container: {what}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| corrupt("truncated header"))?;
        if &magic != LOGIT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4).map_err(|_| corrupt("truncated header"))?;
        let version = u32::from_le_bytes(b4);
        if version != LOGIT_VERSION {
            return Err(LarError::VersionMismatch {
                kind: "logit container",
                found: version,
                expected: LOGIT_VERSION,
            });
        }
        let mut read_u64 = |r: &mut dyn Read| -> Result<usize> {
            r.read_exact(&mut b8).map_err(|_| corrupt("truncated header"))?;
            usize::try_from(u64::from_le_bytes(b8)).map_err(|_| corrupt("shape overflow"))
        };
        let rows = read_u64(r)?;
        let cols = read_u64(r)?;
        let n = rows.checked_mul(cols).ok_or_else(|| corrupt("shape overflow"))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|_| corrupt("unreadable body"))?;
        if bytes.len() != n.checked_mul(8).ok_or_else(|| corrupt("shape overflow"))? {
            return Err(corrupt("body length does not match declared shape"));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::new(rows, cols, values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlOptions {
    pub temperature: f64,
    /// Multiply the loss by `temperature²`.
    pub scale_by_temperature_sq: bool,
}

impl Default for KlOptions {
    fn default() -> Self {
        KlOptions {
            temperature: DEFAULT_TEMPERATURE,
            scale_by_temperature_sq: false,
        }
    }
}

fn log_softmax(row: &[f64], temperature: f64, out: &mut Vec<f64>) {
    out.clear();
    out.extend(row.iter().map(|z| z / temperature));
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + out.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    for v in out.iter_mut() {
        *v -= lse;
    }
}

/// Mean over rows of `KL(softmax(teacher / T) || softmax(student / T))` in
/// nats. An empty mask yields 0.
pub fn kl_distill_loss(teacher: &LogitMatrix, student: &LogitMatrix, temperature: f64) -> Result<f64> {
    kl_distill_loss_with(
        teacher,
        student,
        KlOptions {
            temperature,
            scale_by_temperature_sq: false,
        },
    )
}

pub fn kl_distill_loss_with(teacher: &LogitMatrix, student: &LogitMatrix, opts: KlOptions) -> Result<f64> {
    if !opts.temperature.is_finite() || opts.temperature <= 0.0 {
        return Err(LarError::InvalidInput(format!("temperature must be positive, got {}", opts.temperature)));
    }
    if (teacher.rows, teacher.cols) != (student.rows, student.cols) {
        return Err(LarError::ShapeMismatch {
            teacher: (teacher.rows, teacher.cols),
            student: (student.rows, student.cols),
        });
    }
    if teacher.rows == 0 {
        return Ok(0.0);
    }
    if teacher.cols == 0 {
        return Err(LarError::InvalidInput("logit rows must have at least one column".into()));
    }
    let mut lp = Vec::with_capacity(teacher.cols);
    let mut lq = Vec::with_capacity(teacher.cols);
    let mut total = 0.0;
    for i in 0..teacher.rows {
        log_softmax(teacher.row(i), opts.temperature, &mut lp);
        log_softmax(student.row(i), opts.temperature, &mut lq);
        let kl: f64 = lp.iter().zip(&lq).map(|(p, q)| p.exp() * (p - q)).sum();
        total += kl.max(0.0);
    }
    let mut loss = total / teacher.rows as f64;
    if opts.scale_by_temperature_sq {
        loss *= opts.temperature * opts.temperature;
    }
    Ok(loss)
}

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}
