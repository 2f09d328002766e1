//! Minimum-traces-to-disclosure sweeps and repeated-key experiments.
//!
//! An MTD sweep replays the attack on growing prefixes of a trace set and
//! reports the smallest prefix at which the correct subkey ranks first. A
//! repeated-key experiment runs that sweep for several randomly drawn keys
//! and fits a normal distribution to the disclosed counts.

use crate::aes::{Key128, PowerModelKind};
use crate::cpa::{build_hypotheses, rank_guesses, CpaError, PccAccumulator, Selection};
use crate::leakage::{
    derive_plaintexts, preset, reduce_to_scalar, simulate_traces, DesignConfig, DesignKind,
    LeakageError, NoiseParams, TraceSet,
};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("step must be at least 1")]
    ZeroStep,
    #[error("step {step} exceeds the {n_max} available traces")]
    StepTooLarge { step: usize, n_max: usize },
    #[error("need at least {need} values, have {have}")]
    TooFewValues { need: usize, have: usize },
    #[error("normal fit has zero standard deviation")]
    ZeroStd,
    #[error("need at least 1 key")]
    NoKeys,
    #[error(transparent)]
    Leakage(#[from] LeakageError),
    #[error(transparent)]
    Cpa(#[from] CpaError),
}

/// Disclosure criterion of an MTD sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MtdMode {
    /// Smallest prefix whose attack ranks the correct byte first.
    #[default]
    FirstHit,
    /// Smallest prefix from which the guess stays correct at every later
    /// checkpoint; immune to transient lucky ranks at small N.
    Stable,
}

/// Result of one MTD sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MtdOutcome {
    pub disclosed: bool,
    /// Traces needed; present iff disclosed.
    pub n_required: Option<usize>,
    /// Largest prefix the sweep evaluated.
    pub n_max: usize,
    pub key_byte: u8,
    pub design_label: String,
    pub seed: u64,
}

/// Attack settings shared by the sweep entry points.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AttackParams {
    pub byte_index: usize,
    pub model: PowerModelKind,
    pub selection: Selection,
}

/// Sweeps prefixes `{step, 2 step, ...}` of the trace set (always ending at
/// the full set) and applies the disclosure criterion.
pub fn mtd(
    ts: &TraceSet,
    design: &DesignConfig,
    true_byte: u8,
    params: &AttackParams,
    step: usize,
    mode: MtdMode,
) -> Result<MtdOutcome, AnalysisError> {
    let scalars = reduce_to_scalar(ts, design)?;
    mtd_on_scalars(ts, &scalars, true_byte, params, step, mode)
}

/// [`mtd`] for callers that already reduced the traces to scalars.
pub fn mtd_on_scalars(
    ts: &TraceSet,
    scalars: &[f64],
    true_byte: u8,
    params: &AttackParams,
    step: usize,
    mode: MtdMode,
) -> Result<MtdOutcome, AnalysisError> {
    let n_max = ts.n_traces();
    if scalars.len() != n_max {
        return Err(AnalysisError::Cpa(CpaError::LengthMismatch {
            scalars: scalars.len(),
            plaintexts: n_max,
        }));
    }
    if step == 0 {
        return Err(AnalysisError::ZeroStep);
    }
    if step > n_max {
        return Err(AnalysisError::StepTooLarge { step, n_max });
    }

    let mut grid: Vec<usize> = (1..)
        .map(|i| i * step)
        .take_while(|&n| n <= n_max)
        .collect();
    if grid.last() != Some(&n_max) {
        grid.push(n_max);
    }

    let hyp = build_hypotheses(ts.plaintexts(), params.byte_index, &params.model)?;

    // One pass over the traces: checkpoints share accumulator prefixes.
    let mut accs = vec![PccAccumulator::new(); 256];
    let mut correct = Vec::with_capacity(grid.len());
    let mut fed = 0usize;
    for &n in &grid {
        for (i, &y) in scalars.iter().enumerate().take(n).skip(fed) {
            for (g, acc) in accs.iter_mut().enumerate() {
                acc.update(hyp.row(g as u8)[i] as f64, y);
            }
        }
        fed = n;
        if n < 2 {
            correct.push(false);
            continue;
        }
        let mut stats = [0.0f64; 256];
        for (g, acc) in accs.iter().enumerate() {
            stats[g] = params.selection.stat(acc.finalize()?.value);
        }
        let guessed = rank_guesses(&stats)[0];
        correct.push(guessed == true_byte);
    }

    let n_required = match mode {
        MtdMode::FirstHit => correct.iter().position(|&c| c).map(|i| grid[i]),
        MtdMode::Stable => {
            // Start of the final all-correct run, if it reaches the end.
            let mut start = None;
            for (i, &c) in correct.iter().enumerate() {
                if c {
                    if start.is_none() {
                        start = Some(i);
                    }
                } else {
                    start = None;
                }
            }
            start.map(|i| grid[i])
        }
    };

    Ok(MtdOutcome {
        disclosed: n_required.is_some(),
        n_required,
        n_max,
        key_byte: true_byte,
        design_label: ts.design_label.clone(),
        seed: ts.seed,
    })
}

/// Sample mean and standard deviation (n-1 denominator) of disclosed MTDs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalFit {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl NormalFit {
    pub fn fit(values: &[f64]) -> Result<NormalFit, AnalysisError> {
        if values.len() < 2 {
            return Err(AnalysisError::TooFewValues {
                need: 2,
                have: values.len(),
            });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        Ok(NormalFit {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }

    pub fn density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        (-0.5 * z * z).exp() / (self.std * (2.0 * std::f64::consts::PI).sqrt())
    }
}

/// Samples the fitted density at `n_points` evenly spaced abscissas across
/// mean plus/minus four standard deviations.
pub fn normal_pdf_points(
    fit: &NormalFit,
    n_points: usize,
) -> Result<Vec<(f64, f64)>, AnalysisError> {
    if fit.std <= 0.0 {
        return Err(AnalysisError::ZeroStd);
    }
    if n_points < 2 {
        return Err(AnalysisError::TooFewValues {
            need: 2,
            have: n_points,
        });
    }
    let lo = fit.mean - 4.0 * fit.std;
    let span = 8.0 * fit.std;
    Ok((0..n_points)
        .map(|i| {
            let x = lo + span * i as f64 / (n_points - 1) as f64;
            (x, fit.density(x))
        })
        .collect())
}

/// Outcome of a repeated-key experiment.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub outcomes: Vec<MtdOutcome>,
    /// Fit over disclosed outcomes; absent when fewer than two disclosed.
    pub fit: Option<NormalFit>,
}

impl ExperimentResult {
    pub fn n_disclosed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.disclosed).count()
    }

    pub fn n_keys(&self) -> usize {
        self.outcomes.len()
    }
}

const CH_EXPERIMENT_KEY: u64 = 3;
const CH_EXPERIMENT_RUN: u64 = 4;

/// Runs `n_keys` independent attacks on a design preset with randomly drawn
/// keys and plaintexts; deterministic under `seed`.
///
/// Per-key sub-seeds derive from `(seed, key_index)`, so runs are
/// reproducible regardless of execution order. Disclosure uses the
/// first-hit criterion; see [`experiment_with_mode`] for stable-mode runs.
pub fn experiment(
    kind: DesignKind,
    n_keys: usize,
    n_max: usize,
    step: usize,
    seed: u64,
) -> Result<ExperimentResult, AnalysisError> {
    experiment_with_mode(kind, n_keys, n_max, step, seed, MtdMode::FirstHit)
}

/// [`experiment`] with an explicit disclosure criterion.
pub fn experiment_with_mode(
    kind: DesignKind,
    n_keys: usize,
    n_max: usize,
    step: usize,
    seed: u64,
    mode: MtdMode,
) -> Result<ExperimentResult, AnalysisError> {
    if n_keys == 0 {
        return Err(AnalysisError::NoKeys);
    }
    if step == 0 {
        return Err(AnalysisError::ZeroStep);
    }
    if step > n_max {
        return Err(AnalysisError::StepTooLarge { step, n_max });
    }

    let design = preset(kind);
    let root = StreamRng::new(seed);
    let key_stream = root.channel(CH_EXPERIMENT_KEY);
    let run_stream = root.channel(CH_EXPERIMENT_RUN);
    let params = AttackParams::default();

    let mut outcomes = Vec::with_capacity(n_keys);
    for key_index in 0..n_keys {
        let key = Key128::new(key_stream.block(key_index as u64));
        let run_seed = run_stream.value(key_index as u64);
        let plaintexts = derive_plaintexts(run_seed, n_max);
        let ts = simulate_traces(&design, &key, &plaintexts, &NoiseParams::new(run_seed))?;
        let outcome = mtd(
            &ts,
            &design,
            key.bytes[params.byte_index],
            &params,
            step,
            mode,
        )?;
        outcomes.push(outcome);
    }

    let disclosed: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.n_required.map(|n| n as f64))
        .collect();
    let fit = if disclosed.len() >= 2 {
        Some(NormalFit::fit(&disclosed)?)
    } else {
        None
    };
    Ok(ExperimentResult { outcomes, fit })
}
