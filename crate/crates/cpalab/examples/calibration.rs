//! Calibration sweep over the four design presets.
//!
//! Prints, per design, the single-shot disclosure rate at the trace budgets
//! the reports use plus first-hit and stable MTD statistics, so the preset
//! noise constants can be sanity-checked after any model change.
//!
//!     cargo run --release -p cpalab --example calibration [n_keys] [base_seed]
//!
//! Scan mode runs a single design with its per-instance noise overridden,
//! for picking a new constant:
//!
//!     cargo run --release -p cpalab --example calibration 300 1 0.25 tmr_dif

use cpalab::aes::Key128;
use cpalab::analysis::{mtd_on_scalars, AttackParams, MtdMode};
use cpalab::cpa::{run_cpa, Selection};
use cpalab::leakage::{
    derive_plaintexts, preset, reduce_to_scalar, simulate_traces, DesignKind, NoiseParams,
};
use cpalab::rng::StreamRng;

fn main() {
    let mut args = std::env::args().skip(1);
    let n_keys: usize = args
        .next()
        .map(|a| a.parse().expect("n_keys"))
        .unwrap_or(40);
    let base_seed: u64 = args.next().map(|a| a.parse().expect("seed")).unwrap_or(1);
    let alg_override: Option<(String, f64)> = args
        .next()
        .map(|a| a.parse().expect("alg sigma"))
        .map(|sigma| (args.next().expect("design to override"), sigma));

    println!("design    n_traces  disclosed  mean_mtd  std_mtd  undisclosed");
    for kind in DesignKind::ALL {
        let mut design = preset(kind);
        if let Some((label, sigma)) = &alg_override {
            // Scan mode: run only the overridden design.
            if *label != design.label {
                continue;
            }
            for inst in &mut design.instances {
                inst.alg_noise_sigma = *sigma;
            }
        }
        let n_traces = match kind {
            DesignKind::TmrDif => 2000,
            _ => 1000,
        };
        let key_stream = StreamRng::new(base_seed).channel(1001);
        let run_stream = StreamRng::new(base_seed).channel(1002);

        let mut disclosed_final = 0usize;
        let mut mtds: Vec<f64> = Vec::new();
        let mut stable_mtds: Vec<f64> = Vec::new();
        let mut undisclosed_sweeps = 0usize;
        for k in 0..n_keys {
            let key = Key128::new(key_stream.block(k as u64));
            let run_seed = run_stream.value(k as u64);
            let plaintexts = derive_plaintexts(run_seed, n_traces);
            let ts =
                simulate_traces(&design, &key, &plaintexts, &NoiseParams::new(run_seed)).unwrap();
            let scalars = reduce_to_scalar(&ts, &design).unwrap();

            // Single-shot attack at the full trace budget.
            let res = run_cpa(
                &scalars,
                ts.plaintexts(),
                0,
                &NoiseParams::new(0).model,
                Selection::MaxSigned,
            )
            .unwrap();
            if res.guessed == key.bytes[0] {
                disclosed_final += 1;
            }

            for (mode, sink) in [
                (MtdMode::FirstHit, &mut mtds),
                (MtdMode::Stable, &mut stable_mtds),
            ] {
                let out = mtd_on_scalars(
                    &ts,
                    &scalars,
                    key.bytes[0],
                    &AttackParams::default(),
                    10,
                    mode,
                )
                .unwrap();
                match out.n_required {
                    Some(n) => sink.push(n as f64),
                    None => {
                        if mode == MtdMode::FirstHit {
                            undisclosed_sweeps += 1;
                        }
                    }
                }
            }
        }

        let stats = |values: &[f64]| {
            let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
            let var = values.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>()
                / (values.len().max(2) - 1) as f64;
            (mean, var.sqrt())
        };
        let (mean, std) = stats(&mtds);
        let (smean, sstd) = stats(&stable_mtds);
        println!(
            "{:8}  {:8}  {:4}/{:<4}  {:8.1}  {:7.1}  {:4}/{:<4}  stable {:8.1} {:7.1} n={}",
            design.label,
            n_traces,
            disclosed_final,
            n_keys,
            mean,
            std,
            undisclosed_sweeps,
            n_keys,
            smean,
            sstd,
            stable_mtds.len(),
        );
    }
}
