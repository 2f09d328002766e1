//! Correlation power analysis engine.
//!
//! A guess-by-trace hypothesis matrix is correlated against observed power
//! (either one scalar per trace or every sample) with Pearson's r, computed
//! through mergeable one-pass accumulators so that traces can be streamed in
//! and shards combined associatively.

use crate::aes::{hypothesis_at, Block128, PowerModelKind};
use crate::leakage::TraceSet;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CpaError {
    #[error("insufficient data: need at least 2 points, have {0}")]
    InsufficientData(u64),
    #[error("byte index {0} out of range 0..16")]
    ByteIndexOutOfRange(usize),
    #[error("plaintext list is empty")]
    EmptyPlaintexts,
    #[error("{scalars} scalars but {plaintexts} plaintexts")]
    LengthMismatch { scalars: usize, plaintexts: usize },
}

/// A finalized correlation value. `degenerate` marks a zero-variance input,
/// for which the value is defined as 0 rather than NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pcc {
    pub value: f64,
    pub degenerate: bool,
}

/// One-pass Pearson accumulator over running sums.
///
/// Merging two accumulators is exact (the sums add), so shards split by
/// trace block combine in any order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PccAccumulator {
    n: u64,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl PccAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn update(&mut self, x: f64, y: f64) {
        self.n += 1;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
    }

    pub fn merge(&self, other: &Self) -> Self {
        PccAccumulator {
            n: self.n + other.n,
            sx: self.sx + other.sx,
            sy: self.sy + other.sy,
            sxx: self.sxx + other.sxx,
            syy: self.syy + other.syy,
            sxy: self.sxy + other.sxy,
        }
    }

    /// Pearson r: `(n*sxy - sx*sy) / sqrt((n*sxx - sx^2) * (n*syy - sy^2))`.
    pub fn finalize(&self) -> Result<Pcc, CpaError> {
        if self.n < 2 {
            return Err(CpaError::InsufficientData(self.n));
        }
        let n = self.n as f64;
        let var_x = n * self.sxx - self.sx * self.sx;
        let var_y = n * self.syy - self.sy * self.sy;
        if var_x <= 0.0 || var_y <= 0.0 {
            return Ok(Pcc {
                value: 0.0,
                degenerate: true,
            });
        }
        let r = (n * self.sxy - self.sx * self.sy) / (var_x * var_y).sqrt();
        Ok(Pcc {
            value: r.clamp(-1.0, 1.0),
            degenerate: false,
        })
    }
}

/// How the winning guess is selected from the 256 correlation values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    /// Largest signed r, the attack's default.
    #[default]
    MaxSigned,
    /// Largest |r|, common elsewhere in the side-channel literature.
    MaxAbs,
}

impl Selection {
    pub fn stat(&self, r: f64) -> f64 {
        match self {
            Selection::MaxSigned => r,
            Selection::MaxAbs => r.abs(),
        }
    }
}

/// Hypothetical power values for all 256 guesses by trace.
#[derive(Debug, Clone)]
pub struct HypothesisMatrix {
    values: Vec<u8>, // 256 rows of n columns
    n: usize,
    pub byte_index: usize,
    pub model: PowerModelKind,
}

impl HypothesisMatrix {
    pub fn n_traces(&self) -> usize {
        self.n
    }

    pub fn row(&self, guess: u8) -> &[u8] {
        let g = guess as usize;
        &self.values[g * self.n..(g + 1) * self.n]
    }
}

/// Builds the 256 x N hypothesis matrix for one attacked byte position.
pub fn build_hypotheses(
    plaintexts: &[Block128],
    byte_index: usize,
    model: &PowerModelKind,
) -> Result<HypothesisMatrix, CpaError> {
    if byte_index >= 16 {
        return Err(CpaError::ByteIndexOutOfRange(byte_index));
    }
    if plaintexts.is_empty() {
        return Err(CpaError::EmptyPlaintexts);
    }
    let n = plaintexts.len();
    let mut values = vec![0u8; 256 * n];
    for guess in 0..256usize {
        let row = &mut values[guess * n..(guess + 1) * n];
        for (cell, pt) in row.iter_mut().zip(plaintexts) {
            *cell = hypothesis_at(pt.bytes[byte_index], guess as u8, model, byte_index) as u8;
        }
    }
    Ok(HypothesisMatrix {
        values,
        n,
        byte_index,
        model: *model,
    })
}

/// Attack outcome: per-guess correlations (one per sample in per-sample
/// mode), the selection statistic, and the resulting ranking.
#[derive(Debug, Clone)]
pub struct CpaResult {
    /// 256 x `n_samples` correlations, row-major by guess.
    pub pcc: Vec<f64>,
    /// Degenerate-variance flag per cell of `pcc`.
    pub degenerate: Vec<bool>,
    /// Columns per guess in `pcc`; 1 in scalar mode.
    pub n_samples: usize,
    /// Selection statistic per guess.
    pub statistic: Vec<f64>,
    /// `ranking[0]`.
    pub guessed: u8,
    /// All 256 guesses, best first; ties rank the smaller guess first.
    pub ranking: Vec<u8>,
    pub n_traces_used: usize,
}

impl CpaResult {
    /// Correlation row for one guess (length `n_samples`).
    pub fn pcc_for(&self, guess: u8) -> &[f64] {
        let g = guess as usize;
        &self.pcc[g * self.n_samples..(g + 1) * self.n_samples]
    }

    /// 1-based position of `true_byte` in the ranking; 1 means disclosed.
    pub fn key_rank(&self, true_byte: u8) -> usize {
        self.ranking.iter().position(|&g| g == true_byte).unwrap() + 1
    }
}

/// Descending-statistic ranking over guesses with ties broken toward the
/// numerically smallest guess.
pub(crate) fn rank_guesses(statistic: &[f64]) -> Vec<u8> {
    debug_assert_eq!(statistic.len(), 256);
    let mut ranking: Vec<u8> = (0..=255).collect();
    ranking.sort_by(|&a, &b| {
        statistic[b as usize]
            .total_cmp(&statistic[a as usize])
            .then(a.cmp(&b))
    });
    ranking
}

fn result_from_cells(
    pcc: Vec<f64>,
    degenerate: Vec<bool>,
    n_samples: usize,
    selection: Selection,
    n_traces: usize,
) -> CpaResult {
    let statistic: Vec<f64> = (0..256)
        .map(|g| {
            pcc[g * n_samples..(g + 1) * n_samples]
                .iter()
                .map(|&r| selection.stat(r))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let ranking = rank_guesses(&statistic);
    CpaResult {
        pcc,
        degenerate,
        n_samples,
        guessed: ranking[0],
        statistic,
        ranking,
        n_traces_used: n_traces,
    }
}

/// Runs the attack against one scalar observation per trace.
pub fn run_cpa(
    scalars: &[f64],
    plaintexts: &[Block128],
    byte_index: usize,
    model: &PowerModelKind,
    selection: Selection,
) -> Result<CpaResult, CpaError> {
    if scalars.len() != plaintexts.len() {
        return Err(CpaError::LengthMismatch {
            scalars: scalars.len(),
            plaintexts: plaintexts.len(),
        });
    }
    if scalars.len() < 2 {
        return Err(CpaError::InsufficientData(scalars.len() as u64));
    }
    let hyp = build_hypotheses(plaintexts, byte_index, model)?;
    let mut pcc = vec![0.0; 256];
    let mut degenerate = vec![false; 256];
    for guess in 0..256usize {
        let mut acc = PccAccumulator::new();
        for (&h, &y) in hyp.row(guess as u8).iter().zip(scalars) {
            acc.update(h as f64, y);
        }
        let r = acc.finalize()?;
        pcc[guess] = r.value;
        degenerate[guess] = r.degenerate;
    }
    Ok(result_from_cells(
        pcc,
        degenerate,
        1,
        selection,
        scalars.len(),
    ))
}

/// Runs the attack per sample; the selection statistic for a guess is its
/// maximum over samples.
pub fn run_cpa_per_sample(
    ts: &TraceSet,
    byte_index: usize,
    model: &PowerModelKind,
    selection: Selection,
) -> Result<CpaResult, CpaError> {
    let n = ts.n_traces();
    let m = ts.n_samples();
    if n < 2 {
        return Err(CpaError::InsufficientData(n as u64));
    }
    let hyp = build_hypotheses(ts.plaintexts(), byte_index, model)?;
    let mut pcc = vec![0.0; 256 * m];
    let mut degenerate = vec![false; 256 * m];
    for guess in 0..256usize {
        let row = hyp.row(guess as u8);
        let mut accs = vec![PccAccumulator::new(); m];
        for (i, &h) in row.iter().enumerate() {
            let trace = ts.trace(i);
            for (acc, &y) in accs.iter_mut().zip(trace) {
                acc.update(h as f64, y);
            }
        }
        for (s, acc) in accs.iter().enumerate() {
            let r = acc.finalize()?;
            pcc[guess * m + s] = r.value;
            degenerate[guess * m + s] = r.degenerate;
        }
    }
    Ok(result_from_cells(pcc, degenerate, m, selection, n))
}
