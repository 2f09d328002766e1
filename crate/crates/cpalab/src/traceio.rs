//! Persistence: the SCTR binary trace format and CSV report export.
//!
//! SCTR layout, all multi-octet integers little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SCTR"
//!      4     2  version (1)
//!      6     2  flags (bit 0: known key present)
//!      8     4  n_traces
//!     12     4  n_samples
//!     16     4  sample period, picoseconds
//!     20    32  design label, zero-padded UTF-8
//!     52     8  seed
//!     60     4  reserved (zero)
//! ```
//!
//! The 64-byte header is followed by the optional 16-octet key, then
//! `n_traces` records of a 16-octet plaintext and `n_samples` IEEE-754
//! doubles. No field is platform-sized, so files port across machines.

use std::io::{Read, Write};

use crate::aes::{Block128, Key128};
use crate::analysis::MtdOutcome;
use crate::leakage::{LeakageError, TraceSet};

pub const MAGIC: [u8; 4] = *b"SCTR";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 64;
const FLAG_KNOWN_KEY: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum TraceIoError {
    #[error("not a trace file")]
    NotTraceFile,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported flags {0:#06x}")]
    UnsupportedFlags(u16),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("design label longer than 32 bytes")]
    LabelTooLong,
    #[error("design label is not valid UTF-8")]
    LabelNotUtf8,
    #[error("sample period {0} ns not representable in whole picoseconds")]
    BadSamplePeriod(f64),
    #[error(transparent)]
    Leakage(#[from] LeakageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Serializes a trace set; returns the number of bytes written.
pub fn write_traceset<W: Write>(ts: &TraceSet, mut sink: W) -> Result<u64, TraceIoError> {
    let label = ts.design_label.as_bytes();
    if label.len() > 32 {
        return Err(TraceIoError::LabelTooLong);
    }
    let period_ps = (ts.sample_period_ns * 1000.0).round();
    if period_ps.is_nan() || period_ps < 1.0 || period_ps > u32::MAX as f64 {
        return Err(TraceIoError::BadSamplePeriod(ts.sample_period_ns));
    }

    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(&MAGIC);
    header[4..6].copy_from_slice(&VERSION.to_le_bytes());
    let flags = if ts.known_key.is_some() {
        FLAG_KNOWN_KEY
    } else {
        0
    };
    header[6..8].copy_from_slice(&flags.to_le_bytes());
    header[8..12].copy_from_slice(&(ts.n_traces() as u32).to_le_bytes());
    header[12..16].copy_from_slice(&(ts.n_samples() as u32).to_le_bytes());
    header[16..20].copy_from_slice(&(period_ps as u32).to_le_bytes());
    header[20..20 + label.len()].copy_from_slice(label);
    header[52..60].copy_from_slice(&ts.seed.to_le_bytes());
    sink.write_all(&header)?;
    let mut written = HEADER_LEN as u64;

    if let Some(key) = &ts.known_key {
        sink.write_all(&key.bytes)?;
        written += 16;
    }
    for (i, pt) in ts.plaintexts().iter().enumerate() {
        sink.write_all(&pt.bytes)?;
        written += 16;
        for sample in ts.trace(i) {
            sink.write_all(&sample.to_le_bytes())?;
            written += 8;
        }
    }
    Ok(written)
}

/// Reads a trace set, validating magic, version, and that the payload ends
/// exactly where the header says it should.
pub fn read_traceset<R: Read>(mut source: R) -> Result<TraceSet, TraceIoError> {
    let mut header = [0u8; HEADER_LEN];
    read_fully(&mut source, &mut header, "header")?;
    if header[0..4] != MAGIC {
        return Err(TraceIoError::NotTraceFile);
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version > VERSION {
        return Err(TraceIoError::UnsupportedVersion(version));
    }
    let flags = u16::from_le_bytes([header[6], header[7]]);
    if flags & !FLAG_KNOWN_KEY != 0 {
        return Err(TraceIoError::UnsupportedFlags(flags));
    }
    let n_traces = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let n_samples = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let period_ps = u32::from_le_bytes(header[16..20].try_into().unwrap());
    let label_raw = &header[20..52];
    let label_end = label_raw
        .iter()
        .position(|&b| b == 0)
        .unwrap_or(label_raw.len());
    let design_label = std::str::from_utf8(&label_raw[..label_end])
        .map_err(|_| TraceIoError::LabelNotUtf8)?
        .to_string();
    let seed = u64::from_le_bytes(header[52..60].try_into().unwrap());

    let known_key = if flags & FLAG_KNOWN_KEY != 0 {
        let mut kb = [0u8; 16];
        read_fully(&mut source, &mut kb, "key")?;
        Some(Key128::new(kb))
    } else {
        None
    };

    let mut plaintexts = Vec::with_capacity(n_traces);
    let mut samples = Vec::with_capacity(n_traces * n_samples);
    let mut sample_buf = vec![0u8; n_samples * 8];
    for i in 0..n_traces {
        let mut pt = [0u8; 16];
        read_fully(&mut source, &mut pt, &format!("plaintext of trace {i}"))?;
        plaintexts.push(Block128::new(pt));
        read_fully(
            &mut source,
            &mut sample_buf,
            &format!("samples of trace {i}"),
        )?;
        samples.extend(
            sample_buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap())),
        );
    }

    let mut probe = [0u8; 1];
    if source.read(&mut probe)? != 0 {
        return Err(TraceIoError::SizeMismatch(
            "trailing bytes after last trace".to_string(),
        ));
    }

    Ok(TraceSet::new(
        plaintexts,
        samples,
        n_samples,
        period_ps as f64 / 1000.0,
        design_label,
        seed,
        known_key,
    )?)
}

fn read_fully<R: Read>(source: &mut R, buf: &mut [u8], what: &str) -> Result<(), TraceIoError> {
    source.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            TraceIoError::SizeMismatch(format!("truncated while reading {what}"))
        } else {
            TraceIoError::Io(e)
        }
    })
}

pub fn write_traceset_file(ts: &TraceSet, path: &std::path::Path) -> Result<u64, TraceIoError> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    let n = write_traceset(ts, &mut buf)?;
    buf.flush()?;
    Ok(n)
}

pub fn read_traceset_file(path: &std::path::Path) -> Result<TraceSet, TraceIoError> {
    let file = std::fs::File::open(path)?;
    read_traceset(std::io::BufReader::new(file))
}

/// One of the three CSV report schemas.
pub enum CsvReport<'a> {
    /// Columns `guess,pcc,is_guessed,is_true`; always 256 data rows.
    PccVsGuess {
        /// Selection statistic per guess, 256 entries.
        statistic: &'a [f64],
        guessed: u8,
        true_byte: Option<u8>,
    },
    /// Columns `key_index,key_byte,disclosed,n_required`; `n_required`
    /// empty for undisclosed rows.
    MtdTable(&'a [MtdOutcome]),
    /// Columns `x,density`.
    NormalFit(&'a [(f64, f64)]),
}

/// Nine significant digits, the precision contract of every CSV number.
fn fmt(x: f64) -> String {
    format!("{x:.8e}")
}

/// Writes a report with a header row and LF line endings.
pub fn export_csv<W: Write>(report: &CsvReport, mut sink: W) -> Result<(), TraceIoError> {
    match report {
        CsvReport::PccVsGuess {
            statistic,
            guessed,
            true_byte,
        } => {
            assert_eq!(statistic.len(), 256, "need one statistic per guess");
            writeln!(sink, "guess,pcc,is_guessed,is_true")?;
            for (g, stat) in statistic.iter().enumerate() {
                writeln!(
                    sink,
                    "{g},{},{},{}",
                    fmt(*stat),
                    g == *guessed as usize,
                    Some(g as u8) == *true_byte
                )?;
            }
        }
        CsvReport::MtdTable(outcomes) => {
            writeln!(sink, "key_index,key_byte,disclosed,n_required")?;
            for (i, out) in outcomes.iter().enumerate() {
                let n_req = out.n_required.map(|n| n.to_string()).unwrap_or_default();
                writeln!(sink, "{i},{},{},{n_req}", out.key_byte, out.disclosed)?;
            }
        }
        CsvReport::NormalFit(points) => {
            writeln!(sink, "x,density")?;
            for (x, density) in points.iter() {
                writeln!(sink, "{},{}", fmt(*x), fmt(*density))?;
            }
        }
    }
    Ok(())
}
