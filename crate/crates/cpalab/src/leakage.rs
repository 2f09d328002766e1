//! Trace-set synthesis for the four design configurations.
//!
//! The physical-synthesis and vector-based power-report flow is replaced by a
//! parameterized leakage model: each design instance converts register bit
//! flips into a power increment at a known sample position, on top of a
//! constant baseline equal to the design's nominal power, per-instance
//! algorithmic noise, and supply (electrical) noise that scales with the
//! design's nominal power. The nominal-power constants come from the
//! physical-synthesis reports of the modeled designs.
//!
//! Sampling is 1 ns at a 2 ns clock (500 MHz), so each clock cycle spans two
//! samples: window1 covers cycle 1 (samples 0..2) and window2 covers cycle 2
//! (samples 2..4), where the intermediate register latches.

use crate::aes::{intermediate_register, Block128, Key128, PowerModelKind};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LeakageError {
    #[error("plaintext list is empty")]
    EmptyPlaintexts,
    #[error("sigma_el_rel must be non-negative, got {0}")]
    NegativeNoise(f64),
    #[error("invalid design config: {0}")]
    InvalidDesign(String),
    #[error("window {start}..{end} out of range for {n_samples} samples")]
    WindowOutOfRange {
        start: usize,
        end: usize,
        n_samples: usize,
    },
    #[error("invalid trace set: {0}")]
    InvalidTraceSet(String),
    #[error("config line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },
}

/// Default leakage coefficient, mW per flipped register bit.
pub const DEFAULT_LEAK_COEFF: f64 = 0.01;
/// Default electrical noise, as a fraction of the design's nominal power.
pub const DEFAULT_SIGMA_EL_REL: f64 = 0.001;

/// Structural variant of one AES instance inside a design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    /// Stock netlist; all register flips land at the start of window2.
    Baseline,
    /// Clock gating splits the register flips in time: a `split_fraction`
    /// share latches normally, the remainder one sample after window2.
    ClockGated,
    /// Retiming moves the attacked register past the S-box: the flips that
    /// land (time_offset samples after the start of window2) are those of
    /// the S-box output, not of p XOR k.
    Retimed,
}

impl TransformKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TransformKind::Baseline => "baseline",
            TransformKind::ClockGated => "clock_gated",
            TransformKind::Retimed => "retimed",
        }
    }
}

impl std::str::FromStr for TransformKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "baseline" => Ok(TransformKind::Baseline),
            "clock_gated" => Ok(TransformKind::ClockGated),
            "retimed" => Ok(TransformKind::Retimed),
            other => Err(format!("unknown transform {other:?}")),
        }
    }
}

/// Leakage description of one AES instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceConfig {
    pub transform: TransformKind,
    /// mW per flipped bit.
    pub leak_coeff: f64,
    /// Sample offset applied to this instance's flip positions.
    pub time_offset: usize,
    /// Fraction of register bits latched in the attacked window
    /// (clock-gated instances only).
    pub split_fraction: f64,
    /// Std of this instance's own data-independent switching noise, mW.
    pub alg_noise_sigma: f64,
    /// Nominal power of the instance, mW (reporting only).
    pub instance_power: f64,
}

/// Half-open sample range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleWindow {
    pub start: usize,
    pub end: usize,
}

impl SampleWindow {
    pub fn new(start: usize, end: usize) -> Self {
        SampleWindow { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    fn check(&self, n_samples: usize) -> Result<(), LeakageError> {
        if self.is_empty() || self.end > n_samples {
            return Err(LeakageError::WindowOutOfRange {
                start: self.start,
                end: self.end,
                n_samples,
            });
        }
        Ok(())
    }
}

/// Leakage-simulation description of a physical design.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignConfig {
    pub label: String,
    /// 1 to 3 instances.
    pub instances: Vec<InstanceConfig>,
    /// Whole-design nominal power, mW; also the baseline level of every
    /// sample and the scale of electrical noise.
    pub nominal_power: f64,
    pub samples_per_trace: usize,
    pub sample_period_ns: f64,
    /// First clock cycle.
    pub window1: SampleWindow,
    /// Second clock cycle, where the intermediate register latches.
    pub window2: SampleWindow,
}

/// The four modeled designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    Single,
    TmrIde,
    TmrOpt,
    TmrDif,
}

impl DesignKind {
    pub const ALL: [DesignKind; 4] = [
        DesignKind::Single,
        DesignKind::TmrIde,
        DesignKind::TmrOpt,
        DesignKind::TmrDif,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            DesignKind::Single => "single",
            DesignKind::TmrIde => "tmr_ide",
            DesignKind::TmrOpt => "tmr_opt",
            DesignKind::TmrDif => "tmr_dif",
        }
    }
}

impl std::str::FromStr for DesignKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "single" => Ok(DesignKind::Single),
            "tmr_ide" => Ok(DesignKind::TmrIde),
            "tmr_opt" => Ok(DesignKind::TmrOpt),
            "tmr_dif" => Ok(DesignKind::TmrDif),
            other => Err(format!("unknown design {other:?}")),
        }
    }
}

fn base_instance(leak_coeff: f64, instance_power: f64) -> InstanceConfig {
    InstanceConfig {
        transform: TransformKind::Baseline,
        leak_coeff,
        time_offset: 0,
        split_fraction: 0.0,
        alg_noise_sigma: 0.0,
        instance_power,
    }
}

/// Builds the calibrated configuration of one of the four designs.
///
/// Nominal and per-instance powers are the modeled designs' synthesis
/// figures. Leakage coefficients, the tmr_opt jitter/noise and the tmr_dif
/// per-instance noise are calibration constants of this simulator, chosen so
/// that the single design discloses well within 1000 traces while the
/// diversified TMR design stays undisclosed at 2000.
pub fn preset(kind: DesignKind) -> DesignConfig {
    let lc = DEFAULT_LEAK_COEFF;
    let instances = match kind {
        DesignKind::Single => vec![base_instance(lc, 9.44)],
        DesignKind::TmrIde => vec![base_instance(lc, 14.20); 3],
        DesignKind::TmrOpt => {
            // Independent re-optimization of each instance: +-10% on the
            // leakage coefficient plus instance-local switching noise.
            let jitter = [0.9, 1.0, 1.1];
            jitter
                .iter()
                .map(|&j| InstanceConfig {
                    alg_noise_sigma: 2.0 * lc,
                    ..base_instance(lc * j, 29.09 / 3.0)
                })
                .collect()
        }
        DesignKind::TmrDif => vec![
            InstanceConfig {
                alg_noise_sigma: 30.0 * lc,
                ..base_instance(lc, 15.84)
            },
            InstanceConfig {
                transform: TransformKind::ClockGated,
                split_fraction: 0.5,
                alg_noise_sigma: 30.0 * lc,
                ..base_instance(lc, 15.12)
            },
            InstanceConfig {
                transform: TransformKind::Retimed,
                time_offset: 2,
                alg_noise_sigma: 30.0 * lc,
                ..base_instance(lc, 16.73)
            },
        ],
    };
    let nominal_power = match kind {
        DesignKind::Single => 9.44,
        DesignKind::TmrIde => 42.60,
        DesignKind::TmrOpt => 29.09,
        DesignKind::TmrDif => 50.51,
    };
    DesignConfig {
        label: kind.label().to_string(),
        instances,
        nominal_power,
        samples_per_trace: 8,
        sample_period_ns: 1.0,
        window1: SampleWindow::new(0, 2),
        window2: SampleWindow::new(2, 4),
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<(), LeakageError> {
        let fail = |msg: String| Err(LeakageError::InvalidDesign(msg));
        if self.instances.is_empty() || self.instances.len() > 3 {
            return fail(format!("{} instances, need 1..=3", self.instances.len()));
        }
        if !self.nominal_power.is_finite() || self.nominal_power <= 0.0 {
            return fail(format!("nominal_power {} not positive", self.nominal_power));
        }
        if self.samples_per_trace < 4 {
            return fail(format!(
                "samples_per_trace {} below minimum 4",
                self.samples_per_trace
            ));
        }
        if !self.sample_period_ns.is_finite() || self.sample_period_ns <= 0.0 {
            return fail(format!(
                "sample_period_ns {} not positive",
                self.sample_period_ns
            ));
        }
        self.window1.check(self.samples_per_trace)?;
        self.window2.check(self.samples_per_trace)?;
        let disjoint =
            self.window1.end <= self.window2.start || self.window2.end <= self.window1.start;
        if !disjoint {
            return fail("window1 and window2 overlap".to_string());
        }
        for (i, inst) in self.instances.iter().enumerate() {
            if !inst.leak_coeff.is_finite() || inst.leak_coeff <= 0.0 {
                return fail(format!("instance {i}: leak_coeff must be positive"));
            }
            if !(0.0..=1.0).contains(&inst.split_fraction) {
                return fail(format!("instance {i}: split_fraction outside 0..=1"));
            }
            if !inst.alg_noise_sigma.is_finite() || inst.alg_noise_sigma < 0.0 {
                return fail(format!(
                    "instance {i}: alg_noise_sigma negative or not finite"
                ));
            }
        }
        Ok(())
    }
}

/// Noise model of a simulation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Electrical noise std as a fraction of design nominal power.
    pub sigma_el_rel: f64,
    pub model: PowerModelKind,
    pub seed: u64,
}

impl NoiseParams {
    pub fn new(seed: u64) -> Self {
        NoiseParams {
            sigma_el_rel: DEFAULT_SIGMA_EL_REL,
            model: PowerModelKind::HwZeroPrev,
            seed,
        }
    }

    /// All stochastic terms disabled; the leakage itself remains.
    pub fn noiseless() -> Self {
        NoiseParams {
            sigma_el_rel: 0.0,
            model: PowerModelKind::HwZeroPrev,
            seed: 0,
        }
    }
}

/// N plaintexts by M power samples plus the metadata needed to re-run or
/// score an attack. Immutable after construction; samples are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    plaintexts: Vec<Block128>,
    samples: Vec<f64>, // row-major n_traces x n_samples
    n_samples: usize,
    pub sample_period_ns: f64,
    pub design_label: String,
    pub seed: u64,
    pub known_key: Option<Key128>,
}

impl TraceSet {
    pub fn new(
        plaintexts: Vec<Block128>,
        samples: Vec<f64>,
        n_samples: usize,
        sample_period_ns: f64,
        design_label: String,
        seed: u64,
        known_key: Option<Key128>,
    ) -> Result<Self, LeakageError> {
        if plaintexts.is_empty() {
            return Err(LeakageError::InvalidTraceSet("no traces".to_string()));
        }
        if n_samples < 4 {
            return Err(LeakageError::InvalidTraceSet(format!(
                "{n_samples} samples per trace, need at least 4"
            )));
        }
        if samples.len() != plaintexts.len() * n_samples {
            return Err(LeakageError::InvalidTraceSet(format!(
                "{} samples for {} traces x {} samples",
                samples.len(),
                plaintexts.len(),
                n_samples
            )));
        }
        if !samples.iter().all(|s| s.is_finite()) {
            return Err(LeakageError::InvalidTraceSet(
                "non-finite sample value".to_string(),
            ));
        }
        Ok(TraceSet {
            plaintexts,
            samples,
            n_samples,
            sample_period_ns,
            design_label,
            seed,
            known_key,
        })
    }

    pub fn n_traces(&self) -> usize {
        self.plaintexts.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn plaintexts(&self) -> &[Block128] {
        &self.plaintexts
    }

    pub fn trace(&self, index: usize) -> &[f64] {
        &self.samples[index * self.n_samples..(index + 1) * self.n_samples]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

/// Register bit-flip counts of one instance for one encryption:
/// `(flips in window2, flips landing late)`.
///
/// Baseline instances put every flip in window2. Clock-gated instances latch
/// `round(split_fraction x flips)` in window2 and the remainder one sample
/// after window2. Retimed instances contribute nothing inside window2; their
/// S-box output register flips land `time_offset` samples after the start of
/// window2.
pub fn instance_target_flips(
    inst: &InstanceConfig,
    pt: &Block128,
    key: &Key128,
    model: &PowerModelKind,
) -> (u32, u32) {
    let reg = intermediate_register(pt, key);
    let prev = model.prev_block(pt);
    match inst.transform {
        TransformKind::Baseline => (reg.xor(&prev).hamming_weight(), 0),
        TransformKind::ClockGated => {
            let flips = reg.xor(&prev).hamming_weight();
            let in_window = (inst.split_fraction * flips as f64).round() as u32;
            (in_window, flips - in_window)
        }
        TransformKind::Retimed => (0, reg.sub_bytes().xor(&prev).hamming_weight()),
    }
}

// Channel ids of the deterministic noise streams.
const CH_PLAINTEXT: u64 = 1;
const CH_ELECTRICAL: u64 = 2;
const CH_ALG_BASE: u64 = 16;

/// N pseudo-random plaintext blocks derived from a seed; the stream the CLI
/// and the repeated-key experiments share.
pub fn derive_plaintexts(seed: u64, n: usize) -> Vec<Block128> {
    let stream = StreamRng::new(seed).channel(CH_PLAINTEXT);
    (0..n)
        .map(|i| Block128::new(stream.block(i as u64)))
        .collect()
}

/// Simulates one trace per plaintext.
///
/// Sample `s` of trace `t` is the design's nominal power, plus each
/// instance's `leak_coeff x flips` at that instance's sample positions, plus
/// per-instance algorithmic noise and design-level electrical noise. Every
/// noise value is addressed by `(seed, trace, sample)`, so the output is
/// independent of evaluation order.
pub fn simulate_traces(
    design: &DesignConfig,
    key: &Key128,
    plaintexts: &[Block128],
    noise: &NoiseParams,
) -> Result<TraceSet, LeakageError> {
    design.validate()?;
    if plaintexts.is_empty() {
        return Err(LeakageError::EmptyPlaintexts);
    }
    if noise.sigma_el_rel < 0.0 {
        return Err(LeakageError::NegativeNoise(noise.sigma_el_rel));
    }

    let m = design.samples_per_trace;
    let sigma_el = noise.sigma_el_rel * design.nominal_power;
    let root = StreamRng::new(noise.seed);
    let el_stream = root.channel(CH_ELECTRICAL);
    let alg_streams: Vec<StreamRng> = (0..design.instances.len())
        .map(|k| root.channel(CH_ALG_BASE + k as u64))
        .collect();

    let mut samples = vec![0.0f64; plaintexts.len() * m];
    for (t, pt) in plaintexts.iter().enumerate() {
        let row = &mut samples[t * m..(t + 1) * m];
        row.fill(design.nominal_power);
        for (k, inst) in design.instances.iter().enumerate() {
            let (flips_w2, flips_late) = instance_target_flips(inst, pt, key, &noise.model);
            let (pos_w2, pos_late) = match inst.transform {
                TransformKind::Baseline => (Some(design.window2.start + inst.time_offset), None),
                TransformKind::ClockGated => (
                    Some(design.window2.start + inst.time_offset),
                    Some(design.window2.end + inst.time_offset),
                ),
                TransformKind::Retimed => (None, Some(design.window2.start + inst.time_offset)),
            };
            // Flips that would land past the capture window are not recorded.
            if let Some(pos) = pos_w2 {
                if pos < m {
                    row[pos] += inst.leak_coeff * flips_w2 as f64;
                }
            }
            if let Some(pos) = pos_late {
                if pos < m {
                    row[pos] += inst.leak_coeff * flips_late as f64;
                }
            }
            if inst.alg_noise_sigma > 0.0 {
                for (s, sample) in row.iter_mut().enumerate() {
                    *sample += inst.alg_noise_sigma * alg_streams[k].normal((t * m + s) as u64);
                }
            }
        }
        if sigma_el > 0.0 {
            for (s, sample) in row.iter_mut().enumerate() {
                *sample += sigma_el * el_stream.normal((t * m + s) as u64);
            }
        }
    }

    TraceSet::new(
        plaintexts.to_vec(),
        samples,
        m,
        design.sample_period_ns,
        design.label.clone(),
        noise.seed,
        Some(*key),
    )
}

/// Per-trace attack observable: mean of window2 minus mean of window1.
pub fn reduce_to_scalar(ts: &TraceSet, design: &DesignConfig) -> Result<Vec<f64>, LeakageError> {
    reduce_to_scalar_windows(ts, design.window1, design.window2)
}

/// [`reduce_to_scalar`] with explicit windows, for trace sets whose design
/// config is not at hand.
pub fn reduce_to_scalar_windows(
    ts: &TraceSet,
    window1: SampleWindow,
    window2: SampleWindow,
) -> Result<Vec<f64>, LeakageError> {
    window1.check(ts.n_samples())?;
    window2.check(ts.n_samples())?;
    let mean =
        |trace: &[f64], w: SampleWindow| trace[w.start..w.end].iter().sum::<f64>() / w.len() as f64;
    Ok((0..ts.n_traces())
        .map(|i| {
            let trace = ts.trace(i);
            mean(trace, window2) - mean(trace, window1)
        })
        .collect())
}

/// The cycle-1 / cycle-2 windows every preset uses.
pub const DEFAULT_WINDOW1: SampleWindow = SampleWindow { start: 0, end: 2 };
pub const DEFAULT_WINDOW2: SampleWindow = SampleWindow { start: 2, end: 4 };

// ---------------------------------------------------------------------------
// Plain-text configuration format: one `key = value` per line, `#` comments.
// Instance fields are addressed as `instance.<index>.<field>`.

impl DesignConfig {
    /// Serializes every field in the `key = value` format.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("label", self.label.clone());
        push("nominal_power", format!("{}", self.nominal_power));
        push("samples_per_trace", format!("{}", self.samples_per_trace));
        push("sample_period_ns", format!("{}", self.sample_period_ns));
        push(
            "window1",
            format!("{}..{}", self.window1.start, self.window1.end),
        );
        push(
            "window2",
            format!("{}..{}", self.window2.start, self.window2.end),
        );
        for (i, inst) in self.instances.iter().enumerate() {
            push(
                &format!("instance.{i}.transform"),
                inst.transform.as_str().to_string(),
            );
            push(
                &format!("instance.{i}.leak_coeff"),
                format!("{}", inst.leak_coeff),
            );
            push(
                &format!("instance.{i}.time_offset"),
                format!("{}", inst.time_offset),
            );
            push(
                &format!("instance.{i}.split_fraction"),
                format!("{}", inst.split_fraction),
            );
            push(
                &format!("instance.{i}.alg_noise_sigma"),
                format!("{}", inst.alg_noise_sigma),
            );
            push(
                &format!("instance.{i}.instance_power"),
                format!("{}", inst.instance_power),
            );
        }
        out
    }

    /// Applies `key = value` overrides to this design. Only fields present
    /// in the text change; instance indices must refer to existing
    /// instances. The result is re-validated.
    pub fn apply_config_text(&mut self, text: &str) -> Result<(), LeakageError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or(LeakageError::ConfigParse {
                line,
                msg: "expected key = value".to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let err = |msg: String| LeakageError::ConfigParse { line, msg };
            match key {
                "label" => self.label = value.to_string(),
                "nominal_power" => {
                    self.nominal_power = value
                        .parse()
                        .map_err(|e| err(format!("nominal_power: {e}")))?
                }
                "samples_per_trace" => {
                    self.samples_per_trace = value
                        .parse()
                        .map_err(|e| err(format!("samples_per_trace: {e}")))?
                }
                "sample_period_ns" => {
                    self.sample_period_ns = value
                        .parse()
                        .map_err(|e| err(format!("sample_period_ns: {e}")))?
                }
                "window1" => self.window1 = parse_window(value).map_err(err)?,
                "window2" => self.window2 = parse_window(value).map_err(err)?,
                _ => {
                    let rest = key
                        .strip_prefix("instance.")
                        .ok_or_else(|| err(format!("unknown key {key:?}")))?;
                    let (idx, field) = rest
                        .split_once('.')
                        .ok_or_else(|| err(format!("unknown key {key:?}")))?;
                    let idx: usize = idx
                        .parse()
                        .map_err(|e| err(format!("instance index: {e}")))?;
                    let n = self.instances.len();
                    let inst = self
                        .instances
                        .get_mut(idx)
                        .ok_or_else(|| err(format!("instance {idx} out of range 0..{n}")))?;
                    match field {
                        "transform" => {
                            inst.transform = value.parse().map_err(err)?;
                        }
                        "leak_coeff" => {
                            inst.leak_coeff =
                                value.parse().map_err(|e| err(format!("leak_coeff: {e}")))?
                        }
                        "time_offset" => {
                            inst.time_offset = value
                                .parse()
                                .map_err(|e| err(format!("time_offset: {e}")))?
                        }
                        "split_fraction" => {
                            inst.split_fraction = value
                                .parse()
                                .map_err(|e| err(format!("split_fraction: {e}")))?
                        }
                        "alg_noise_sigma" => {
                            inst.alg_noise_sigma = value
                                .parse()
                                .map_err(|e| err(format!("alg_noise_sigma: {e}")))?
                        }
                        "instance_power" => {
                            inst.instance_power = value
                                .parse()
                                .map_err(|e| err(format!("instance_power: {e}")))?
                        }
                        other => return Err(err(format!("unknown instance field {other:?}"))),
                    }
                }
            }
        }
        self.validate()
    }
}

fn parse_window(value: &str) -> Result<SampleWindow, String> {
    let (a, b) = value
        .split_once("..")
        .ok_or_else(|| format!("expected start..end, got {value:?}"))?;
    let start = a.trim().parse().map_err(|e| format!("window start: {e}"))?;
    let end = b.trim().parse().map_err(|e| format!("window end: {e}"))?;
    Ok(SampleWindow::new(start, end))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::PowerModelKind::HwZeroPrev;

    fn block(byte0: u8) -> Block128 {
        let mut b = [0u8; 16];
        b[0] = byte0;
        Block128::new(b)
    }

    #[test]
    fn presets_match_synthesis_figures() {
        assert_eq!(preset(DesignKind::Single).nominal_power, 9.44);
        assert_eq!(preset(DesignKind::TmrIde).nominal_power, 42.60);
        assert_eq!(preset(DesignKind::TmrOpt).nominal_power, 29.09);
        assert_eq!(preset(DesignKind::TmrDif).nominal_power, 50.51);

        let ide = preset(DesignKind::TmrIde);
        assert_eq!(ide.instances.len(), 3);
        assert_eq!(ide.instances[0], ide.instances[1]);
        assert_eq!(ide.instances[1], ide.instances[2]);

        let dif = preset(DesignKind::TmrDif);
        let powers: Vec<f64> = dif.instances.iter().map(|i| i.instance_power).collect();
        assert_eq!(powers, vec![15.84, 15.12, 16.73]);
        assert_eq!(dif.instances[1].transform, TransformKind::ClockGated);
        assert_eq!(dif.instances[1].split_fraction, 0.5);
        assert_eq!(dif.instances[2].transform, TransformKind::Retimed);
        assert_eq!(dif.instances[2].time_offset, 2);

        for kind in DesignKind::ALL {
            preset(kind).validate().unwrap();
            assert_eq!(preset(kind).samples_per_trace, 8);
            assert_eq!(preset(kind).sample_period_ns, 1.0);
        }
    }

    #[test]
    fn flips_per_transform() {
        let key = Key128::new([0u8; 16]);
        let single = preset(DesignKind::Single);

        // pt == key means a zero register under the zero-previous model.
        let inst = &single.instances[0];
        assert_eq!(
            instance_target_flips(inst, &Block128::ZERO, &key, &HwZeroPrev),
            (0, 0)
        );

        // 128 flipped bits split 50/50.
        let gated = InstanceConfig {
            transform: TransformKind::ClockGated,
            split_fraction: 0.5,
            ..*inst
        };
        let all_ones = Block128::new([0xff; 16]);
        assert_eq!(
            instance_target_flips(&gated, &all_ones, &key, &HwZeroPrev),
            (64, 64)
        );

        // Retimed never contributes inside window2.
        let retimed = InstanceConfig {
            transform: TransformKind::Retimed,
            time_offset: 2,
            ..*inst
        };
        for byte0 in [0x00u8, 0x3c, 0xde, 0xff] {
            let (w2, _) = instance_target_flips(&retimed, &block(byte0), &key, &HwZeroPrev);
            assert_eq!(w2, 0);
        }
        // S-box of an all-zero register: 16 bytes of 0x63.
        let (_, late) = instance_target_flips(&retimed, &Block128::ZERO, &key, &HwZeroPrev);
        assert_eq!(late, 16 * 0x63u8.count_ones());
    }

    #[test]
    fn equal_popcount_means_equal_window2() {
        let design = preset(DesignKind::Single);
        let key = Key128::new([0u8; 16]);
        // 0x0f and 0xf0 both have popcount 4.
        let pts = vec![block(0x0f), block(0xf0)];
        let ts = simulate_traces(&design, &key, &pts, &NoiseParams::noiseless()).unwrap();
        assert_eq!(
            ts.trace(0)[design.window2.start..design.window2.end],
            ts.trace(1)[design.window2.start..design.window2.end]
        );
    }

    #[test]
    fn identical_instances_triple_the_signal() {
        let single = preset(DesignKind::Single);
        let ide = preset(DesignKind::TmrIde);
        let key = Key128::new([0x5a; 16]);
        let pts = vec![block(0x13), block(0xde), block(0x77)];
        let noiseless = NoiseParams::noiseless();
        let ts_single = simulate_traces(&single, &key, &pts, &noiseless).unwrap();
        let ts_ide = simulate_traces(&ide, &key, &pts, &noiseless).unwrap();
        for t in 0..pts.len() {
            for s in 0..8 {
                let data_single = ts_single.trace(t)[s] - single.nominal_power;
                let data_ide = ts_ide.trace(t)[s] - ide.nominal_power;
                assert!((data_ide - 3.0 * data_single).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let design = preset(DesignKind::TmrDif);
        let key = Key128::new([0xa5; 16]);
        let pts = derive_plaintexts(7, 20);
        let noise = NoiseParams::new(1234);
        let a = simulate_traces(&design, &key, &pts, &noise).unwrap();
        let b = simulate_traces(&design, &key, &pts, &noise).unwrap();
        assert_eq!(a, b);
        let other = simulate_traces(&design, &key, &pts, &NoiseParams::new(1235)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn rejects_bad_inputs() {
        let design = preset(DesignKind::Single);
        let key = Key128::new([0u8; 16]);
        assert!(matches!(
            simulate_traces(&design, &key, &[], &NoiseParams::noiseless()),
            Err(LeakageError::EmptyPlaintexts)
        ));
        let mut noise = NoiseParams::noiseless();
        noise.sigma_el_rel = -0.1;
        assert!(matches!(
            simulate_traces(&design, &key, &[Block128::ZERO], &noise),
            Err(LeakageError::NegativeNoise(_))
        ));
        let mut bad = preset(DesignKind::Single);
        bad.window2 = SampleWindow::new(6, 10);
        assert!(simulate_traces(&bad, &key, &[Block128::ZERO], &NoiseParams::noiseless()).is_err());
    }

    #[test]
    fn scalar_reduction_arithmetic() {
        // window1 {1,3}, window2 {4,6}: difference of means is 3.
        let samples = vec![1.0, 3.0, 4.0, 6.0, 0.0, 0.0, 0.0, 0.0];
        let ts = TraceSet::new(
            vec![Block128::ZERO],
            samples.clone(),
            8,
            1.0,
            "test".to_string(),
            0,
            None,
        )
        .unwrap();
        let scalars =
            reduce_to_scalar_windows(&ts, SampleWindow::new(0, 2), SampleWindow::new(2, 4))
                .unwrap();
        assert_eq!(scalars, vec![3.0]);

        // A constant trace reduces to zero; scaling doubles the scalar.
        let flat = TraceSet::new(
            vec![Block128::ZERO],
            vec![2.5; 8],
            8,
            1.0,
            "test".to_string(),
            0,
            None,
        )
        .unwrap();
        let z = reduce_to_scalar_windows(&flat, DEFAULT_WINDOW1, DEFAULT_WINDOW2).unwrap();
        assert_eq!(z, vec![0.0]);

        let doubled = TraceSet::new(
            vec![Block128::ZERO],
            samples.iter().map(|s| s * 2.0).collect(),
            8,
            1.0,
            "test".to_string(),
            0,
            None,
        )
        .unwrap();
        let s2 =
            reduce_to_scalar_windows(&doubled, SampleWindow::new(0, 2), SampleWindow::new(2, 4))
                .unwrap();
        assert_eq!(s2, vec![6.0]);

        // Window beyond the trace is refused.
        assert!(matches!(
            reduce_to_scalar_windows(&flat, DEFAULT_WINDOW1, SampleWindow::new(6, 9)),
            Err(LeakageError::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn traceset_rejects_invalid_shapes_and_values() {
        let pts = vec![Block128::ZERO];
        let err = TraceSet::new(vec![], vec![], 4, 1.0, "x".into(), 0, None);
        assert!(matches!(err, Err(LeakageError::InvalidTraceSet(_))));
        let err = TraceSet::new(pts.clone(), vec![0.0; 3], 3, 1.0, "x".into(), 0, None);
        assert!(matches!(err, Err(LeakageError::InvalidTraceSet(_))));
        let err = TraceSet::new(pts.clone(), vec![0.0; 7], 4, 1.0, "x".into(), 0, None);
        assert!(matches!(err, Err(LeakageError::InvalidTraceSet(_))));
        let err = TraceSet::new(
            pts.clone(),
            vec![0.0, f64::NAN, 0.0, 0.0],
            4,
            1.0,
            "x".into(),
            0,
            None,
        );
        assert!(matches!(err, Err(LeakageError::InvalidTraceSet(_))));
        let err = TraceSet::new(
            pts,
            vec![0.0, f64::INFINITY, 0.0, 0.0],
            4,
            1.0,
            "x".into(),
            0,
            None,
        );
        assert!(matches!(err, Err(LeakageError::InvalidTraceSet(_))));
    }

    #[test]
    fn config_text_round_trip_and_overrides() {
        for kind in DesignKind::ALL {
            let design = preset(kind);
            let mut rebuilt = preset(kind);
            rebuilt.apply_config_text(&design.to_config_text()).unwrap();
            assert_eq!(design, rebuilt);
        }

        let mut design = preset(DesignKind::Single);
        design
            .apply_config_text(
                "# bump the noise of the only instance\n\
                 instance.0.alg_noise_sigma = 0.5\n\
                 nominal_power = 11.0\n",
            )
            .unwrap();
        assert_eq!(design.instances[0].alg_noise_sigma, 0.5);
        assert_eq!(design.nominal_power, 11.0);

        let err = design.apply_config_text("instance.3.leak_coeff = 1.0");
        assert!(matches!(
            err,
            Err(LeakageError::ConfigParse { line: 1, .. })
        ));
        let err = design.apply_config_text("no_such_key = 1");
        assert!(err.is_err());
        // Overrides that break validation are refused.
        let err = design.apply_config_text("window2 = 2..12");
        assert!(matches!(err, Err(LeakageError::WindowOutOfRange { .. })));
    }
}
