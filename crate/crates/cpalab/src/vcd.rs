//! Value Change Dump ingestion.
//!
//! Covers the four-state scalar/vector core of the VCD format: `$timescale`,
//! `$scope`/`$upscope`, `$var` (bit-typed variables), `$enddefinitions`,
//! `$dumpvars`, `#` time marks, scalar changes and `b...` vector changes.
//! `$dumpall`/`$dumpon`/`$dumpoff` are treated as plain change blocks,
//! real-valued variables are rejected, and unknown declaration sections are
//! skipped with a warning. Value changes reduce to windowed toggle counts,
//! the power proxy used when feeding waveforms into the attack.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use crate::aes::Block128;
use crate::leakage::TraceSet;

#[derive(Debug, thiserror::Error)]
pub enum VcdError {
    #[error("line {line}: malformed header: {msg}")]
    MalformedHeader { line: usize, msg: String },
    #[error("line {line}: unknown id-code {id:?}")]
    UnknownId { line: usize, id: String },
    #[error("unknown id-code {id:?} in event stream")]
    UnknownIdInEvents { id: String },
    #[error("line {line}: non-monotonic timestamp {new} after {prev}")]
    NonMonotonicTimestamp { line: usize, prev: u64, new: u64 },
    #[error("line {line}: unsupported variable type {ty:?}")]
    UnsupportedVarType { line: usize, ty: String },
    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },
    #[error("ragged trace set: {0}")]
    Ragged(String),
    #[error("invalid trace set: {0}")]
    TraceSet(String),
    #[error("{path}: {source}")]
    InFile {
        path: String,
        #[source]
        source: Box<VcdError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimescaleUnit {
    S,
    Ms,
    Us,
    Ns,
    Ps,
    Fs,
}

impl TimescaleUnit {
    pub fn to_ns(self) -> f64 {
        match self {
            TimescaleUnit::S => 1e9,
            TimescaleUnit::Ms => 1e6,
            TimescaleUnit::Us => 1e3,
            TimescaleUnit::Ns => 1.0,
            TimescaleUnit::Ps => 1e-3,
            TimescaleUnit::Fs => 1e-6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TimescaleUnit::S => "s",
            TimescaleUnit::Ms => "ms",
            TimescaleUnit::Us => "us",
            TimescaleUnit::Ns => "ns",
            TimescaleUnit::Ps => "ps",
            TimescaleUnit::Fs => "fs",
        }
    }
}

impl std::str::FromStr for TimescaleUnit {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "s" => Ok(TimescaleUnit::S),
            "ms" => Ok(TimescaleUnit::Ms),
            "us" => Ok(TimescaleUnit::Us),
            "ns" => Ok(TimescaleUnit::Ns),
            "ps" => Ok(TimescaleUnit::Ps),
            "fs" => Ok(TimescaleUnit::Fs),
            other => Err(format!("unknown timescale unit {other:?}")),
        }
    }
}

/// A declared variable: reference name, bit width, enclosing scope path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarInfo {
    pub name: String,
    pub width: u32,
    pub scope: Vec<String>,
}

/// Parsed `$timescale` and variable table of a VCD file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VcdHeader {
    pub timescale: (u32, TimescaleUnit),
    pub vars: BTreeMap<String, VarInfo>,
}

impl VcdHeader {
    /// Nanoseconds per timestamp unit.
    pub fn timescale_ns(&self) -> f64 {
        self.timescale.0 as f64 * self.timescale.1.to_ns()
    }
}

/// Four-state logic value of one bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bit {
    Zero,
    One,
    X,
    Z,
}

impl Bit {
    pub fn from_char(c: char) -> Option<Bit> {
        match c {
            '0' => Some(Bit::Zero),
            '1' => Some(Bit::One),
            'x' | 'X' => Some(Bit::X),
            'z' | 'Z' => Some(Bit::Z),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Bit::Zero => '0',
            Bit::One => '1',
            Bit::X => 'x',
            Bit::Z => 'z',
        }
    }

    fn is_defined(self) -> bool {
        matches!(self, Bit::Zero | Bit::One)
    }
}

/// One value change. `init` marks changes recorded inside `$dumpvars`,
/// which set a signal's starting value without counting as activity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeEvent {
    /// Timestamp in timescale units.
    pub time: u64,
    pub id: String,
    /// MSB first, padded to the declared width.
    pub value: Vec<Bit>,
    pub init: bool,
}

// Whitespace tokenizer that remembers the current line number.
struct Tokenizer<R: BufRead> {
    reader: R,
    line: usize,
    pending: Vec<String>, // reversed tokens of the current line
}

impl<R: BufRead> Tokenizer<R> {
    fn new(reader: R) -> Self {
        Tokenizer {
            reader,
            line: 0,
            pending: Vec::new(),
        }
    }

    fn next(&mut self) -> Result<Option<String>, VcdError> {
        loop {
            if let Some(tok) = self.pending.pop() {
                return Ok(Some(tok));
            }
            let mut buf = String::new();
            if self.reader.read_line(&mut buf)? == 0 {
                return Ok(None);
            }
            self.line += 1;
            self.pending = buf.split_whitespace().rev().map(str::to_owned).collect();
        }
    }
}

#[derive(PartialEq, Eq, Clone, Copy)]
enum DumpBlock {
    Vars,
    Plain,
}

/// Streaming parser: call [`VcdParser::parse_header`], then iterate events.
pub struct VcdParser<R: BufRead> {
    tokens: Tokenizer<R>,
    header: Option<VcdHeader>,
    current_time: u64,
    open_block: Option<DumpBlock>,
    warnings: Vec<String>,
    finished: bool,
}

impl<R: BufRead> VcdParser<R> {
    pub fn new(reader: R) -> Self {
        VcdParser {
            tokens: Tokenizer::new(reader),
            header: None,
            current_time: 0,
            open_block: None,
            warnings: Vec::new(),
            finished: false,
        }
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn header(&self) -> Option<&VcdHeader> {
        self.header.as_ref()
    }

    fn line(&self) -> usize {
        self.tokens.line
    }

    fn skip_section(&mut self) -> Result<(), VcdError> {
        loop {
            match self.tokens.next()? {
                Some(tok) if tok == "$end" => return Ok(()),
                Some(_) => continue,
                None => {
                    return Err(VcdError::MalformedHeader {
                        line: self.line(),
                        msg: "unterminated $ section".to_string(),
                    })
                }
            }
        }
    }

    fn collect_section(&mut self) -> Result<Vec<String>, VcdError> {
        let mut toks = Vec::new();
        loop {
            match self.tokens.next()? {
                Some(tok) if tok == "$end" => return Ok(toks),
                Some(tok) => toks.push(tok),
                None => {
                    return Err(VcdError::MalformedHeader {
                        line: self.line(),
                        msg: "unterminated $ section".to_string(),
                    })
                }
            }
        }
    }

    /// Parses declarations through `$enddefinitions`.
    pub fn parse_header(&mut self) -> Result<VcdHeader, VcdError> {
        let mut timescale: Option<(u32, TimescaleUnit)> = None;
        let mut vars: BTreeMap<String, VarInfo> = BTreeMap::new();
        let mut scope: Vec<String> = Vec::new();

        loop {
            let tok = match self.tokens.next()? {
                Some(t) => t,
                None => {
                    return Err(VcdError::MalformedHeader {
                        line: self.line(),
                        msg: "missing $enddefinitions".to_string(),
                    })
                }
            };
            match tok.as_str() {
                "$timescale" => {
                    let body = self.collect_section()?.join(" ");
                    timescale =
                        Some(
                            parse_timescale(&body).map_err(|msg| VcdError::MalformedHeader {
                                line: self.line(),
                                msg,
                            })?,
                        );
                }
                "$scope" => {
                    let body = self.collect_section()?;
                    if body.len() != 2 {
                        return Err(VcdError::MalformedHeader {
                            line: self.line(),
                            msg: format!("$scope expects type and name, got {body:?}"),
                        });
                    }
                    scope.push(body[1].clone());
                }
                "$upscope" => {
                    let body = self.collect_section()?;
                    if !body.is_empty() {
                        return Err(VcdError::MalformedHeader {
                            line: self.line(),
                            msg: "$upscope takes no arguments".to_string(),
                        });
                    }
                    if scope.pop().is_none() {
                        return Err(VcdError::MalformedHeader {
                            line: self.line(),
                            msg: "$upscope without matching $scope".to_string(),
                        });
                    }
                }
                "$var" => {
                    let line = self.line();
                    let body = self.collect_section()?;
                    if body.len() < 4 {
                        return Err(VcdError::MalformedHeader {
                            line,
                            msg: format!("$var expects type width id name, got {body:?}"),
                        });
                    }
                    let ty = &body[0];
                    if matches!(ty.as_str(), "real" | "realtime" | "string") {
                        return Err(VcdError::UnsupportedVarType {
                            line,
                            ty: ty.clone(),
                        });
                    }
                    let width: u32 = body[1].parse().map_err(|_| VcdError::MalformedHeader {
                        line,
                        msg: format!("bad $var width {:?}", body[1]),
                    })?;
                    if width == 0 {
                        return Err(VcdError::MalformedHeader {
                            line,
                            msg: "zero-width $var".to_string(),
                        });
                    }
                    let id = body[2].clone();
                    let name = body[3..].join(" ");
                    if vars.contains_key(&id) {
                        return Err(VcdError::MalformedHeader {
                            line,
                            msg: format!("duplicate id-code {id:?}"),
                        });
                    }
                    vars.insert(
                        id,
                        VarInfo {
                            name,
                            width,
                            scope: scope.clone(),
                        },
                    );
                }
                "$enddefinitions" => {
                    self.skip_section()?;
                    let timescale = timescale.ok_or_else(|| VcdError::MalformedHeader {
                        line: self.line(),
                        msg: "missing $timescale".to_string(),
                    })?;
                    let header = VcdHeader { timescale, vars };
                    self.header = Some(header.clone());
                    return Ok(header);
                }
                "$comment" | "$date" | "$version" => {
                    self.skip_section()?;
                }
                other if other.starts_with('$') => {
                    self.warnings.push(format!(
                        "line {}: skipped unknown section {other}",
                        self.line()
                    ));
                    self.skip_section()?;
                }
                other => {
                    return Err(VcdError::MalformedHeader {
                        line: self.line(),
                        msg: format!("unexpected token {other:?} before $enddefinitions"),
                    });
                }
            }
        }
    }

    fn pad_value(&self, id: &str, bits: Vec<Bit>, line: usize) -> Result<Vec<Bit>, VcdError> {
        let header = self.header.as_ref().expect("header parsed");
        let var = header.vars.get(id).ok_or_else(|| VcdError::UnknownId {
            line,
            id: id.to_string(),
        })?;
        let width = var.width as usize;
        if bits.len() > width {
            return Err(VcdError::Invalid {
                line,
                msg: format!(
                    "value has {} bits but {id:?} is {width} bits wide",
                    bits.len()
                ),
            });
        }
        if bits.len() == width {
            return Ok(bits);
        }
        // Left-extension: x and z propagate, 0 and 1 pad with zeros.
        let fill = match bits[0] {
            Bit::X => Bit::X,
            Bit::Z => Bit::Z,
            _ => Bit::Zero,
        };
        let mut padded = vec![fill; width - bits.len()];
        padded.extend(bits);
        Ok(padded)
    }

    fn next_event(&mut self) -> Result<Option<ChangeEvent>, VcdError> {
        if self.header.is_none() {
            self.parse_header()?;
        }
        loop {
            let tok = match self.tokens.next()? {
                Some(t) => t,
                None => return Ok(None),
            };
            let line = self.line();
            if let Some(rest) = tok.strip_prefix('#') {
                let t: u64 = rest.parse().map_err(|_| VcdError::Invalid {
                    line,
                    msg: format!("bad timestamp {tok:?}"),
                })?;
                if t < self.current_time {
                    return Err(VcdError::NonMonotonicTimestamp {
                        line,
                        prev: self.current_time,
                        new: t,
                    });
                }
                self.current_time = t;
                continue;
            }
            match tok.as_str() {
                "$dumpvars" => {
                    self.open_block = Some(DumpBlock::Vars);
                    continue;
                }
                "$dumpall" | "$dumpon" | "$dumpoff" => {
                    self.open_block = Some(DumpBlock::Plain);
                    continue;
                }
                "$end" => {
                    if self.open_block.take().is_none() {
                        self.warnings.push(format!("line {line}: stray $end"));
                    }
                    continue;
                }
                "$comment" => {
                    self.skip_section()?;
                    continue;
                }
                other if other.starts_with('$') => {
                    self.warnings
                        .push(format!("line {line}: skipped unknown section {other}"));
                    self.skip_section()?;
                    continue;
                }
                _ => {}
            }

            let first = tok.chars().next().unwrap();
            let (id, bits) = match first {
                '0' | '1' | 'x' | 'X' | 'z' | 'Z' => {
                    if tok.len() < 2 {
                        return Err(VcdError::Invalid {
                            line,
                            msg: format!("scalar change {tok:?} missing id-code"),
                        });
                    }
                    (tok[1..].to_string(), vec![Bit::from_char(first).unwrap()])
                }
                'b' | 'B' => {
                    let bits: Vec<Bit> = tok[1..]
                        .chars()
                        .map(Bit::from_char)
                        .collect::<Option<_>>()
                        .ok_or_else(|| VcdError::Invalid {
                            line,
                            msg: format!("bad vector value {tok:?}"),
                        })?;
                    if bits.is_empty() {
                        return Err(VcdError::Invalid {
                            line,
                            msg: "empty vector value".to_string(),
                        });
                    }
                    let id = self.tokens.next()?.ok_or_else(|| VcdError::Invalid {
                        line,
                        msg: "vector change missing id-code".to_string(),
                    })?;
                    (id, bits)
                }
                'r' | 'R' | 's' | 'S' => {
                    return Err(VcdError::UnsupportedVarType {
                        line,
                        ty: if first == 'r' || first == 'R' {
                            "real".to_string()
                        } else {
                            "string".to_string()
                        },
                    });
                }
                _ => {
                    return Err(VcdError::Invalid {
                        line,
                        msg: format!("unexpected token {tok:?}"),
                    });
                }
            };

            let value = self.pad_value(&id, bits, line)?;
            return Ok(Some(ChangeEvent {
                time: self.current_time,
                id,
                value,
                init: self.open_block == Some(DumpBlock::Vars),
            }));
        }
    }
}

impl<R: BufRead> Iterator for VcdParser<R> {
    type Item = Result<ChangeEvent, VcdError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        match self.next_event() {
            Ok(Some(ev)) => Some(Ok(ev)),
            Ok(None) => {
                self.finished = true;
                None
            }
            Err(e) => {
                self.finished = true;
                Some(Err(e))
            }
        }
    }
}

fn parse_timescale(body: &str) -> Result<(u32, TimescaleUnit), String> {
    let compact = body.trim();
    let digits: String = compact.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() {
        return Err(format!("bad $timescale {compact:?}"));
    }
    let magnitude: u32 = digits
        .parse()
        .map_err(|_| format!("bad $timescale magnitude {digits:?}"))?;
    if magnitude == 0 {
        return Err("zero $timescale magnitude".to_string());
    }
    let unit: TimescaleUnit = compact[digits.len()..].trim().parse()?;
    Ok((magnitude, unit))
}

/// Parses a whole VCD text, for callers that do not need streaming.
pub fn parse_vcd(text: &str) -> Result<(VcdHeader, Vec<ChangeEvent>), VcdError> {
    let mut parser = VcdParser::new(text.as_bytes());
    let header = parser.parse_header()?;
    let events: Vec<ChangeEvent> = parser.by_ref().collect::<Result<_, _>>()?;
    Ok((header, events))
}

/// Weight of a transition where either side is x or z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XzWeight {
    Zero,
    #[default]
    Half,
    One,
}

impl XzWeight {
    pub fn weight(self) -> f64 {
        match self {
            XzWeight::Zero => 0.0,
            XzWeight::Half => 0.5,
            XzWeight::One => 1.0,
        }
    }
}

/// Per-window toggle activity over `[t_start_ns, t_end_ns)`.
///
/// Counts are integral when every transition is between defined bits; x/z
/// transitions contribute the configured fractional weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ToggleSeries {
    pub window_ns: f64,
    pub counts: Vec<f64>,
    pub t_start_ns: f64,
    pub t_end_ns: f64,
}

/// Folds value changes into windowed toggle counts.
///
/// Signals start as all-x; `$dumpvars` entries set starting values without
/// counting. A bit flip counts 1, a transition involving x or z counts
/// `xz.weight()`, and events outside the time range update signal state but
/// add nothing.
pub fn toggle_counts(
    events: &[ChangeEvent],
    header: &VcdHeader,
    window_ns: f64,
    t_start_ns: f64,
    t_end_ns: f64,
    xz: XzWeight,
) -> Result<ToggleSeries, VcdError> {
    if !window_ns.is_finite() || window_ns <= 0.0 {
        return Err(VcdError::Invalid {
            line: 0,
            msg: format!("window_ns must be positive, got {window_ns}"),
        });
    }
    if !t_start_ns.is_finite() || !t_end_ns.is_finite() || t_start_ns >= t_end_ns {
        return Err(VcdError::Invalid {
            line: 0,
            msg: format!("empty time range {t_start_ns}..{t_end_ns}"),
        });
    }
    let n_windows = ((t_end_ns - t_start_ns) / window_ns).ceil() as usize;
    let mut counts = vec![0.0f64; n_windows];

    let mut state: HashMap<&str, Vec<Bit>> = header
        .vars
        .iter()
        .map(|(id, var)| (id.as_str(), vec![Bit::X; var.width as usize]))
        .collect();

    let scale = header.timescale_ns();
    for ev in events {
        let prev = state
            .get_mut(ev.id.as_str())
            .ok_or_else(|| VcdError::UnknownIdInEvents { id: ev.id.clone() })?;
        if ev.value.len() != prev.len() {
            return Err(VcdError::Invalid {
                line: 0,
                msg: format!(
                    "event value width {} does not match {:?} width {}",
                    ev.value.len(),
                    ev.id,
                    prev.len()
                ),
            });
        }
        if !ev.init {
            let t_ns = ev.time as f64 * scale;
            if t_ns >= t_start_ns && t_ns < t_end_ns {
                let mut weight = 0.0;
                for (&old, &new) in prev.iter().zip(&ev.value) {
                    if old == new {
                        continue;
                    }
                    weight += if old.is_defined() && new.is_defined() {
                        1.0
                    } else {
                        xz.weight()
                    };
                }
                let idx = (((t_ns - t_start_ns) / window_ns) as usize).min(n_windows - 1);
                counts[idx] += weight;
            }
        }
        prev.copy_from_slice(&ev.value);
    }

    Ok(ToggleSeries {
        window_ns,
        counts,
        t_start_ns,
        t_end_ns,
    })
}

/// Assembles one trace per toggle series, `coeff` mW per toggle.
pub fn traceset_from_toggles(
    series: &[ToggleSeries],
    plaintexts: &[Block128],
    coeff: f64,
) -> Result<TraceSet, VcdError> {
    if series.is_empty() {
        return Err(VcdError::TraceSet("no toggle series".to_string()));
    }
    if series.len() != plaintexts.len() {
        return Err(VcdError::TraceSet(format!(
            "{} series for {} plaintexts",
            series.len(),
            plaintexts.len()
        )));
    }
    let n_samples = series[0].counts.len();
    for (i, s) in series.iter().enumerate() {
        if s.counts.len() != n_samples {
            return Err(VcdError::Ragged(format!(
                "trace 0 has {n_samples} samples but trace {i} has {}",
                s.counts.len()
            )));
        }
    }
    let samples: Vec<f64> = series
        .iter()
        .flat_map(|s| s.counts.iter().map(|&c| c * coeff))
        .collect();
    TraceSet::new(
        plaintexts.to_vec(),
        samples,
        n_samples,
        series[0].window_ns,
        "vcd".to_string(),
        0,
        None,
    )
    .map_err(|e| VcdError::TraceSet(e.to_string()))
}

/// Parses each listed VCD file and builds a trace set from its windowed
/// toggle counts.
pub fn vcd_to_traceset(
    files: &[(PathBuf, Block128)],
    window_ns: f64,
    t_start_ns: f64,
    t_end_ns: f64,
    coeff: f64,
) -> Result<TraceSet, VcdError> {
    if files.is_empty() {
        return Err(VcdError::TraceSet("no input files".to_string()));
    }
    let mut series = Vec::with_capacity(files.len());
    let mut plaintexts = Vec::with_capacity(files.len());
    for (path, pt) in files {
        let in_file = |e: VcdError| VcdError::InFile {
            path: path.display().to_string(),
            source: Box::new(e),
        };
        let file = std::fs::File::open(path).map_err(|e| in_file(e.into()))?;
        let mut parser = VcdParser::new(std::io::BufReader::new(file));
        let header = parser.parse_header().map_err(in_file)?;
        let events: Vec<ChangeEvent> =
            parser.by_ref().collect::<Result<_, _>>().map_err(in_file)?;
        let toggles = toggle_counts(
            &events,
            &header,
            window_ns,
            t_start_ns,
            t_end_ns,
            XzWeight::default(),
        )
        .map_err(in_file)?;
        series.push(toggles);
        plaintexts.push(*pt);
    }
    traceset_from_toggles(&series, &plaintexts, coeff)
}

/// Reads a trace manifest: one `path,hex-plaintext` line per trace, `#`
/// comments and blank lines ignored. Relative paths resolve against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<(PathBuf, Block128)>, VcdError> {
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (path, hex) = trimmed.rsplit_once(',').ok_or_else(|| VcdError::Invalid {
            line,
            msg: "expected path,hex-plaintext".to_string(),
        })?;
        let pt = Block128::from_hex(hex.trim()).map_err(|e| VcdError::Invalid {
            line,
            msg: format!("bad plaintext: {e}"),
        })?;
        let path = Path::new(path.trim());
        let resolved = if path.is_absolute() {
            path.to_path_buf()
        } else {
            base.join(path)
        };
        entries.push((resolved, pt));
    }
    if entries.is_empty() {
        return Err(VcdError::Invalid {
            line: 0,
            msg: "empty manifest".to_string(),
        });
    }
    Ok(entries)
}

/// Writes the supported VCD subset; inverse of [`parse_vcd`] on it.
pub fn write_vcd<W: std::io::Write>(
    header: &VcdHeader,
    events: &[ChangeEvent],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(
        w,
        "$timescale {}{} $end",
        header.timescale.0,
        header.timescale.1.as_str()
    )?;

    // Emit vars grouped into their scope tree.
    #[derive(Default)]
    struct Node<'a> {
        children: BTreeMap<&'a str, Node<'a>>,
        vars: Vec<(&'a str, &'a VarInfo)>,
    }
    let mut root = Node::default();
    for (id, var) in &header.vars {
        let mut node = &mut root;
        for part in &var.scope {
            node = node.children.entry(part.as_str()).or_default();
        }
        node.vars.push((id, var));
    }
    fn emit<W: std::io::Write>(node: &Node, w: &mut W) -> std::io::Result<()> {
        for (id, var) in &node.vars {
            writeln!(w, "$var wire {} {} {} $end", var.width, id, var.name)?;
        }
        for (name, child) in &node.children {
            writeln!(w, "$scope module {name} $end")?;
            emit(child, w)?;
            writeln!(w, "$upscope $end")?;
        }
        Ok(())
    }
    emit(&root, &mut w)?;
    writeln!(w, "$enddefinitions $end")?;

    let mut time: Option<u64> = None;
    let mut dump_open = false;
    for ev in events {
        if time != Some(ev.time) {
            if dump_open {
                writeln!(w, "$end")?;
                dump_open = false;
            }
            writeln!(w, "#{}", ev.time)?;
            time = Some(ev.time);
        }
        if ev.init && !dump_open {
            writeln!(w, "$dumpvars")?;
            dump_open = true;
        } else if !ev.init && dump_open {
            writeln!(w, "$end")?;
            dump_open = false;
        }
        if ev.value.len() == 1 {
            writeln!(w, "{}{}", ev.value[0].to_char(), ev.id)?;
        } else {
            let bits: String = ev.value.iter().map(|b| b.to_char()).collect();
            writeln!(w, "b{bits} {}", ev.id)?;
        }
    }
    if dump_open {
        writeln!(w, "$end")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
$timescale 1ns $end
$scope module top $end
$var wire 1 ! clk $end
$upscope $end
$enddefinitions $end
#0
0!
#5
1!
";

    #[test]
    fn parses_minimal_file() {
        let (header, events) = parse_vcd(MINIMAL).unwrap();
        assert_eq!(header.timescale, (1, TimescaleUnit::Ns));
        assert_eq!(header.vars.len(), 1);
        let var = &header.vars["!"];
        assert_eq!(var.name, "clk");
        assert_eq!(var.width, 1);
        assert_eq!(var.scope, vec!["top".to_string()]);

        assert_eq!(events.len(), 2);
        assert_eq!(events[0].time, 0);
        assert_eq!(events[0].value, vec![Bit::Zero]);
        assert_eq!(events[1].time, 5);
        assert_eq!(events[1].value, vec![Bit::One]);
        assert!(!events[0].init && !events[1].init);
    }

    #[test]
    fn empty_change_section() {
        let text = "$timescale 10ps $end\n$var wire 4 # bus $end\n$enddefinitions $end\n";
        let (header, events) = parse_vcd(text).unwrap();
        assert_eq!(header.timescale_ns(), 0.01);
        assert!(events.is_empty());
    }

    #[test]
    fn vector_change_and_padding() {
        let text = "\
$timescale 1ns $end
$var wire 4 # bus $end
$enddefinitions $end
#0
b1010 #
#1
b1 #
#2
bx #
";
        let (_, events) = parse_vcd(text).unwrap();
        assert_eq!(
            events[0].value,
            vec![Bit::One, Bit::Zero, Bit::One, Bit::Zero]
        );
        // Left-padded with zeros below the declared width.
        assert_eq!(
            events[1].value,
            vec![Bit::Zero, Bit::Zero, Bit::Zero, Bit::One]
        );
        // x propagates leftwards.
        assert_eq!(events[2].value, vec![Bit::X; 4]);
    }

    #[test]
    fn dumpvars_marks_initialization() {
        let text = "\
$timescale 1ns $end
$var wire 1 ! a $end
$var wire 1 \" b $end
$enddefinitions $end
#0
$dumpvars
0!
1\"
$end
#3
1!
";
        let (_, events) = parse_vcd(text).unwrap();
        assert_eq!(events.len(), 3);
        assert!(events[0].init && events[1].init);
        assert!(!events[2].init);
    }

    #[test]
    fn header_errors() {
        let missing_end = "$timescale 1ns $end\n$var wire 1 ! a $end\n#0\n";
        assert!(matches!(
            parse_vcd(missing_end),
            Err(VcdError::MalformedHeader { .. })
        ));

        let unknown_id = "$timescale 1ns $end\n$enddefinitions $end\n#0\n1!\n";
        assert!(matches!(
            parse_vcd(unknown_id),
            Err(VcdError::UnknownId { line: 4, .. })
        ));

        let backwards = "\
$timescale 1ns $end
$var wire 1 ! a $end
$enddefinitions $end
#5
0!
#3
1!
";
        assert!(matches!(
            parse_vcd(backwards),
            Err(VcdError::NonMonotonicTimestamp {
                prev: 5,
                new: 3,
                ..
            })
        ));

        let real = "$timescale 1ns $end\n$var real 64 ! v $end\n$enddefinitions $end\n";
        assert!(matches!(
            parse_vcd(real),
            Err(VcdError::UnsupportedVarType { .. })
        ));
    }

    #[test]
    fn unknown_sections_warn_but_parse() {
        let text = "\
$timescale 1ns $end
$mystery stuff here $end
$var wire 1 ! a $end
$enddefinitions $end
#0
0!
";
        let mut parser = VcdParser::new(text.as_bytes());
        parser.parse_header().unwrap();
        let events: Vec<_> = parser.by_ref().collect::<Result<_, _>>().unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(parser.warnings().len(), 1);
        assert!(parser.warnings()[0].contains("$mystery"));
    }

    fn single_toggle_fixture() -> (VcdHeader, Vec<ChangeEvent>) {
        let text = "\
$timescale 1ns $end
$var wire 1 ! sig $end
$enddefinitions $end
#0
$dumpvars
0!
$end
#5
1!
";
        parse_vcd(text).unwrap()
    }

    #[test]
    fn toggle_counts_single_flip() {
        let (header, events) = single_toggle_fixture();
        let series = toggle_counts(&events, &header, 1.0, 0.0, 10.0, XzWeight::default()).unwrap();
        assert_eq!(
            series.counts,
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn toggle_counts_empty_and_vector() {
        let (header, _) = single_toggle_fixture();
        let series = toggle_counts(&[], &header, 1.0, 0.0, 4.0, XzWeight::default()).unwrap();
        assert_eq!(series.counts, vec![0.0; 4]);

        let text = "\
$timescale 1ns $end
$var wire 4 # bus $end
$enddefinitions $end
#0
$dumpvars
b0000 #
$end
#2
b1111 #
";
        let (header, events) = parse_vcd(text).unwrap();
        let series = toggle_counts(&events, &header, 1.0, 0.0, 4.0, XzWeight::default()).unwrap();
        assert_eq!(series.counts, vec![0.0, 0.0, 4.0, 0.0]);
    }

    #[test]
    fn xz_weight_policies() {
        // Never-dumped signal starts x; first write is x->1.
        let text = "\
$timescale 1ns $end
$var wire 1 ! sig $end
$enddefinitions $end
#1
1!
";
        let (header, events) = parse_vcd(text).unwrap();
        for (policy, expect) in [
            (XzWeight::Zero, 0.0),
            (XzWeight::Half, 0.5),
            (XzWeight::One, 1.0),
        ] {
            let series = toggle_counts(&events, &header, 1.0, 0.0, 2.0, policy).unwrap();
            assert_eq!(series.counts[1], expect);
        }
    }

    #[test]
    fn events_outside_range_update_state_silently() {
        let text = "\
$timescale 1ns $end
$var wire 1 ! sig $end
$enddefinitions $end
#0
$dumpvars
0!
$end
#2
1!
#6
0!
";
        let (header, events) = parse_vcd(text).unwrap();
        // Range starts after the 0->1 edge: only the 1->0 edge counts, and it
        // counts a full bit because the state tracked through t=2.
        let series = toggle_counts(&events, &header, 1.0, 4.0, 8.0, XzWeight::Zero).unwrap();
        assert_eq!(series.counts, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn manifest_parsing() {
        let base = Path::new("/data");
        let text = "\
# traces
one.vcd,000102030405060708090a0b0c0d0e0f
/abs/two.vcd,ffeeddccbbaa99887766554433221100
";
        let entries = parse_manifest(text, base).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].0, Path::new("/data/one.vcd"));
        assert_eq!(entries[1].0, Path::new("/abs/two.vcd"));
        assert_eq!(entries[0].1.bytes[0], 0x00);

        let bad = "one.vcd,00ff";
        assert!(matches!(
            parse_manifest(bad, base),
            Err(VcdError::Invalid { line: 1, .. })
        ));
        assert!(parse_manifest("", base).is_err());
    }

    #[test]
    fn write_then_reparse_round_trip() {
        let (header, events) = single_toggle_fixture();
        let mut out = Vec::new();
        write_vcd(&header, &events, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let (header2, events2) = parse_vcd(&text).unwrap();
        assert_eq!(header, header2);
        assert_eq!(events, events2);
    }

    #[test]
    fn ragged_series_are_rejected() {
        let a = ToggleSeries {
            window_ns: 1.0,
            counts: vec![0.0; 8],
            t_start_ns: 0.0,
            t_end_ns: 8.0,
        };
        let b = ToggleSeries {
            window_ns: 1.0,
            counts: vec![0.0; 6],
            t_start_ns: 0.0,
            t_end_ns: 6.0,
        };
        let pts = vec![Block128::ZERO; 2];
        assert!(matches!(
            traceset_from_toggles(&[a, b], &pts, 1.0),
            Err(VcdError::Ragged(_))
        ));
    }
}
