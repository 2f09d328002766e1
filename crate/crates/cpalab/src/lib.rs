//! Power side-channel laboratory for AES-128 under triple modular redundancy.
//!
//! The crate simulates register-level power leakage of an AES-128 core in four
//! physical-design configurations (a single core and three TMR variants),
//! mounts correlation power analysis against the resulting trace sets, and
//! measures the number of traces an attack needs before the correct subkey is
//! ranked first. A small VCD parser provides a real-waveform ingestion path,
//! and a compact binary trace format plus CSV reports cover persistence.

pub mod aes;
pub mod analysis;
pub mod cpa;
pub mod leakage;
pub mod rng;
pub mod traceio;
pub mod vcd;
