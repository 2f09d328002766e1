//! Command-line front end: simulate trace sets for the four designs, attack
//! them, sweep minimum traces to disclosure, run repeated-key experiments,
//! and ingest VCD waveforms.
//!
//! Exit codes are a stable scripting contract: 0 success (or key disclosed),
//! 1 attack ran but the key was not disclosed, 2 usage error, 3 I/O or
//! format error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cpalab::aes::{Key128, PowerModelKind};
use cpalab::analysis::{
    experiment_with_mode, mtd_on_scalars, normal_pdf_points, AttackParams, MtdMode,
};
use cpalab::cpa::{run_cpa, CpaResult, Selection};
use cpalab::leakage::{
    derive_plaintexts, preset, reduce_to_scalar_windows, simulate_traces, DesignConfig, DesignKind,
    NoiseParams, TraceSet, DEFAULT_WINDOW1, DEFAULT_WINDOW2,
};
use cpalab::traceio::{export_csv, read_traceset_file, write_traceset_file, CsvReport};
use cpalab::vcd::{parse_manifest, vcd_to_traceset};

#[derive(Parser)]
#[command(
    name = "cpalab",
    version,
    about = "AES-128 TMR leakage simulation and CPA attack"
)]
struct Cli {
    /// Seed for every pseudo-random quantity.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Print extra progress detail.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignArg {
    Single,
    TmrIde,
    TmrOpt,
    TmrDif,
}

impl From<DesignArg> for DesignKind {
    fn from(d: DesignArg) -> DesignKind {
        match d {
            DesignArg::Single => DesignKind::Single,
            DesignArg::TmrIde => DesignKind::TmrIde,
            DesignArg::TmrOpt => DesignKind::TmrOpt,
            DesignArg::TmrDif => DesignKind::TmrDif,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    /// Hamming weight of p xor k (zero previous register content).
    Hw,
    /// Hamming distance from the plaintext as previous content.
    HdPlaintext,
}

impl From<ModelArg> for PowerModelKind {
    fn from(m: ModelArg) -> PowerModelKind {
        match m {
            ModelArg::Hw => PowerModelKind::HwZeroPrev,
            ModelArg::HdPlaintext => PowerModelKind::HdPlaintextPrev,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trace set for one design and write it as an SCTR file.
    Simulate(SimulateArgs),
    /// Run the CPA attack on a trace file and write the per-guess report.
    Attack(AttackArgs),
    /// Sweep minimum traces to disclosure on a trace file.
    Mtd(MtdArgs),
    /// Repeated-key experiment: MTD per key plus a normal fit.
    Experiment(ExperimentArgs),
    /// Build an SCTR trace file from VCD waveforms listed in a manifest.
    Vcd2trace(Vcd2traceArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    design: DesignArg,
    /// Cipher key, 32 hex digits.
    #[arg(long)]
    key: String,
    #[arg(long)]
    num_traces: usize,
    #[arg(long)]
    out: PathBuf,
    /// Electrical noise std relative to nominal power.
    #[arg(long)]
    sigma_el: Option<f64>,
    /// key = value overrides applied to the design preset.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long, default_value_t = 0)]
    byte_index: usize,
    #[arg(long, value_enum, default_value = "hw")]
    model: ModelArg,
    /// Select by |r| instead of signed r.
    #[arg(long)]
    abs: bool,
    /// Where to write the pcc_vs_guess CSV.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct MtdArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    step: usize,
    /// Require the guess to stay correct at every later checkpoint.
    #[arg(long)]
    stable: bool,
    #[arg(long, default_value_t = 0)]
    byte_index: usize,
    /// Attacked byte value; defaults to the file's known key.
    #[arg(long)]
    true_byte: Option<u8>,
    /// Where to write the single-row mtd_table CSV (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    design: DesignArg,
    #[arg(long)]
    num_keys: usize,
    #[arg(long)]
    num_traces: usize,
    #[arg(long, default_value_t = 10)]
    step: usize,
    #[arg(long)]
    stable: bool,
    /// Directory receiving mtd_table.csv and normal_fit.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Vcd2traceArgs {
    /// One "path,hex-plaintext" line per trace.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    window_ns: f64,
    #[arg(long)]
    t_start: f64,
    #[arg(long)]
    t_end: f64,
    /// mW per toggle.
    #[arg(long)]
    coeff: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Command failure carrying the process exit code.
struct CmdError {
    code: u8,
    message: String,
}

impl CmdError {
    fn usage(message: impl Into<String>) -> Self {
        CmdError {
            code: 2,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        CmdError {
            code: 3,
            message: message.into(),
        }
    }
}

type CmdResult = Result<u8, CmdError>;

fn main() -> ExitCode {
    // Die quietly when a downstream pipe closes early instead of panicking
    // on the failed write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }

    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(&cli, args),
        Command::Attack(args) => cmd_attack(&cli, args),
        Command::Mtd(args) => cmd_mtd(&cli, args),
        Command::Experiment(args) => cmd_experiment(&cli, args),
        Command::Vcd2trace(args) => cmd_vcd2trace(&cli, args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn load_design(args: &SimulateArgs) -> Result<DesignConfig, CmdError> {
    let mut design = preset(args.design.into());
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CmdError::io(format!("{}: {e}", path.display())))?;
        design
            .apply_config_text(&text)
            .map_err(|e| CmdError::usage(format!("{}: {e}", path.display())))?;
    }
    Ok(design)
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> CmdResult {
    if args.num_traces == 0 {
        return Err(CmdError::usage("--num-traces must be at least 1"));
    }
    let key = Key128::from_hex(&args.key).map_err(|e| CmdError::usage(format!("--key: {e}")))?;
    let design = load_design(args)?;

    let mut noise = NoiseParams::new(cli.seed);
    if let Some(sigma) = args.sigma_el {
        if sigma < 0.0 {
            return Err(CmdError::usage("--sigma-el must be non-negative"));
        }
        noise.sigma_el_rel = sigma;
    }

    let plaintexts = derive_plaintexts(cli.seed, args.num_traces);
    let ts = simulate_traces(&design, &key, &plaintexts, &noise)
        .map_err(|e| CmdError::usage(e.to_string()))?;
    let bytes = write_traceset_file(&ts, &args.out)
        .map_err(|e| CmdError::io(format!("{}: {e}", args.out.display())))?;

    println!(
        "design {}: nominal power {} mW, {} instance(s)",
        design.label,
        design.nominal_power,
        design.instances.len()
    );
    for (i, inst) in design.instances.iter().enumerate() {
        println!(
            "  instance {i}: {} power {} mW leak {} mW/bit offset {} split {} alg-noise {} mW",
            inst.transform.as_str(),
            inst.instance_power,
            inst.leak_coeff,
            inst.time_offset,
            inst.split_fraction,
            inst.alg_noise_sigma
        );
    }
    println!(
        "wrote {} traces x {} samples ({bytes} bytes) to {}",
        ts.n_traces(),
        ts.n_samples(),
        args.out.display()
    );
    Ok(0)
}

fn read_traces(path: &Path) -> Result<TraceSet, CmdError> {
    read_traceset_file(path).map_err(|e| CmdError::io(format!("{}: {e}", path.display())))
}

fn attack_scalars(ts: &TraceSet) -> Result<Vec<f64>, CmdError> {
    reduce_to_scalar_windows(ts, DEFAULT_WINDOW1, DEFAULT_WINDOW2)
        .map_err(|e| CmdError::io(e.to_string()))
}

fn run_attack(
    ts: &TraceSet,
    byte_index: usize,
    model: PowerModelKind,
    selection: Selection,
) -> Result<CpaResult, CmdError> {
    let scalars = attack_scalars(ts)?;
    run_cpa(&scalars, ts.plaintexts(), byte_index, &model, selection)
        .map_err(|e| CmdError::usage(e.to_string()))
}

fn cmd_attack(cli: &Cli, args: &AttackArgs) -> CmdResult {
    if args.byte_index > 15 {
        return Err(CmdError::usage("--byte-index must be 0..=15"));
    }
    let ts = read_traces(&args.traces)?;
    let selection = if args.abs {
        Selection::MaxAbs
    } else {
        Selection::MaxSigned
    };
    let result = run_attack(&ts, args.byte_index, args.model.into(), selection)?;

    let report = CsvReport::PccVsGuess {
        statistic: &result.statistic,
        guessed: result.guessed,
        true_byte: ts.known_key.map(|k| k.bytes[args.byte_index]),
    };
    let file = std::fs::File::create(&args.report)
        .map_err(|e| CmdError::io(format!("{}: {e}", args.report.display())))?;
    export_csv(&report, std::io::BufWriter::new(file))
        .map_err(|e| CmdError::io(format!("{}: {e}", args.report.display())))?;

    if cli.verbose {
        println!(
            "attacked {} traces from design {}",
            result.n_traces_used, ts.design_label
        );
    }
    println!("guessed=0x{:02X} ({})", result.guessed, result.guessed);
    match ts.known_key {
        Some(key) => {
            let true_byte = key.bytes[args.byte_index];
            let rank = result.key_rank(true_byte);
            println!("true=0x{true_byte:02X} ({true_byte}) rank={rank}");
            Ok(if rank == 1 { 0 } else { 1 })
        }
        None => Ok(0),
    }
}

fn cmd_mtd(cli: &Cli, args: &MtdArgs) -> CmdResult {
    if args.byte_index > 15 {
        return Err(CmdError::usage("--byte-index must be 0..=15"));
    }
    let ts = read_traces(&args.traces)?;
    if args.step == 0 || args.step > ts.n_traces() {
        return Err(CmdError::usage(format!(
            "--step must be in 1..={}",
            ts.n_traces()
        )));
    }
    let true_byte = match (args.true_byte, &ts.known_key) {
        (Some(b), _) => b,
        (None, Some(key)) => key.bytes[args.byte_index],
        (None, None) => {
            return Err(CmdError::usage(
                "trace file has no known key; pass --true-byte",
            ))
        }
    };
    let mode = if args.stable {
        MtdMode::Stable
    } else {
        MtdMode::FirstHit
    };
    let scalars = attack_scalars(&ts)?;
    let params = AttackParams {
        byte_index: args.byte_index,
        ..AttackParams::default()
    };
    let outcome = mtd_on_scalars(&ts, &scalars, true_byte, &params, args.step, mode)
        .map_err(|e| CmdError::usage(e.to_string()))?;

    let row = [outcome.clone()];
    write_report(&CsvReport::MtdTable(&row), args.out.as_deref())?;

    if cli.verbose {
        println!(
            "swept {} traces of design {} in steps of {}",
            outcome.n_max, outcome.design_label, args.step
        );
    }
    match outcome.n_required {
        Some(n) => {
            println!("disclosed at n={n}");
            Ok(0)
        }
        None => {
            println!("not disclosed within {} traces", outcome.n_max);
            Ok(1)
        }
    }
}

fn write_report(report: &CsvReport, out: Option<&Path>) -> Result<(), CmdError> {
    match out {
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| CmdError::io(format!("{}: {e}", path.display())))?;
            export_csv(report, std::io::BufWriter::new(file))
                .map_err(|e| CmdError::io(format!("{}: {e}", path.display())))
        }
        None => {
            export_csv(report, std::io::stdout().lock()).map_err(|e| CmdError::io(e.to_string()))
        }
    }
}

fn cmd_experiment(cli: &Cli, args: &ExperimentArgs) -> CmdResult {
    if args.num_keys == 0 {
        return Err(CmdError::usage("--num-keys must be at least 1"));
    }
    if args.num_traces == 0 {
        return Err(CmdError::usage("--num-traces must be at least 1"));
    }
    if args.step == 0 || args.step > args.num_traces {
        return Err(CmdError::usage(format!(
            "--step must be in 1..={}",
            args.num_traces
        )));
    }
    let mode = if args.stable {
        MtdMode::Stable
    } else {
        MtdMode::FirstHit
    };
    let result = experiment_with_mode(
        args.design.into(),
        args.num_keys,
        args.num_traces,
        args.step,
        cli.seed,
        mode,
    )
    .map_err(|e| CmdError::usage(e.to_string()))?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CmdError::io(format!("{}: {e}", args.out.display())))?;
    let table_path = args.out.join("mtd_table.csv");
    write_report(&CsvReport::MtdTable(&result.outcomes), Some(&table_path))?;

    let disclosed = result.n_disclosed();
    match &result.fit {
        Some(fit) => {
            let points = normal_pdf_points(fit, 101).map_err(|e| CmdError::usage(e.to_string()))?;
            let fit_path = args.out.join("normal_fit.csv");
            write_report(&CsvReport::NormalFit(&points), Some(&fit_path))?;
            println!(
                "mean={:.3}, std={:.3}, disclosed={}/{}",
                fit.mean,
                fit.std,
                disclosed,
                result.n_keys()
            );
        }
        None => {
            println!(
                "disclosed={}/{} (fit omitted: fewer than 2 disclosed outcomes)",
                disclosed,
                result.n_keys()
            );
        }
    }
    if cli.verbose {
        for (i, out) in result.outcomes.iter().enumerate() {
            println!(
                "  key {i}: byte=0x{:02X} disclosed={} n_required={:?}",
                out.key_byte, out.disclosed, out.n_required
            );
        }
    }
    Ok(if disclosed > 0 { 0 } else { 1 })
}

fn cmd_vcd2trace(cli: &Cli, args: &Vcd2traceArgs) -> CmdResult {
    if !args.window_ns.is_finite() || args.window_ns <= 0.0 {
        return Err(CmdError::usage("--window-ns must be positive"));
    }
    if !args.t_start.is_finite() || !args.t_end.is_finite() || args.t_start >= args.t_end {
        return Err(CmdError::usage("--t-start must be below --t-end"));
    }
    if !args.coeff.is_finite() || args.coeff <= 0.0 {
        return Err(CmdError::usage("--coeff must be positive"));
    }
    let text = std::fs::read_to_string(&args.manifest)
        .map_err(|e| CmdError::io(format!("{}: {e}", args.manifest.display())))?;
    let base = args
        .manifest
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    let files = parse_manifest(&text, &base)
        .map_err(|e| CmdError::io(format!("{}: {e}", args.manifest.display())))?;

    let ts = vcd_to_traceset(&files, args.window_ns, args.t_start, args.t_end, args.coeff)
        .map_err(|e| CmdError::io(e.to_string()))?;
    let bytes = write_traceset_file(&ts, &args.out)
        .map_err(|e| CmdError::io(format!("{}: {e}", args.out.display())))?;
    if cli.verbose {
        println!(
            "windows of {} ns over [{}, {}) ns",
            args.window_ns, args.t_start, args.t_end
        );
    }
    println!(
        "wrote {} traces x {} samples ({bytes} bytes) to {}",
        ts.n_traces(),
        ts.n_samples(),
        args.out.display()
    );
    Ok(0)
}
