//! Experiment CLI: seeded sweeps over SNR and schemes, convergence traces,
//! and structural checks of stored channel factorizations.
//!
//! Exit codes: 0 success, 2 config error, 3 numerical-invariant violation.

mod config;
mod emit;
mod runner;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wiretap_core::channel::ChannelManifest;
use wiretap_core::matcore::{self, default_rank_tol};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "wiretap", about = "Wiretap-channel precoder experiments")]
struct Cli {
    /// Worker threads (affects the execution schedule only, never values).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmitFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run a (scheme × SNR) sweep from a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        emit: EmitFormat,
        /// Output directory (overrides the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Record per-iteration objective traces at a single SNR.
    Converge {
        #[arg(long)]
        config: PathBuf,
        /// SNR point in dB.
        #[arg(long)]
        snr: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify the factorization invariants of a stored channel fixture.
    GsvdCheck {
        /// Path to a fixture manifest (JSON) referencing matrix files.
        #[arg(long)]
        fixture: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_for_core_error(e: &wiretap_core::Error) -> u8 {
    use wiretap_core::Error::*;
    match e {
        GsvdReconstruction { .. }
        | DecouplingResidual { .. }
        | SubspaceDims { .. }
        | NotPsd { .. }
        | NotHermitian { .. }
        | SingularWhitening { .. }
        | NonFinite(_)
        | PairingInfeasible { .. }
        | MiCapExceeded { .. } => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: thread pool already initialized: {e}");
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, (u8, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| (EXIT_CONFIG, format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text).map_err(|e| (EXIT_CONFIG, e))
}

fn out_dir(cfg: &ExperimentConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn run(command: Command) -> Result<(), (u8, String)> {
    match command {
        Command::Sweep { config, emit, out } => {
            let cfg = load_config(&config)?;
            let dir = out_dir(&cfg, out);
            std::fs::create_dir_all(&dir)
                .map_err(|e| (EXIT_CONFIG, format!("cannot create {}: {e}", dir.display())))?;
            let prepared = runner::prepare_channel(&cfg)
                .map_err(|e| (exit_for_core_error(&e), e.to_string()))?;
            runner::write_fixture(&cfg, &prepared, &dir)
                .map_err(|e| (exit_for_core_error(&e), e.to_string()))?;
            let result =
                runner::run_sweep(&cfg).map_err(|e| (exit_for_core_error(&e), e.to_string()))?;
            let (name, payload) = match emit {
                EmitFormat::Csv => ("sweep.csv", emit::sweep_csv(&result)),
                EmitFormat::Json => ("sweep.json", emit::sweep_json(&result)),
            };
            let path = dir.join(name);
            std::fs::write(&path, payload)
                .map_err(|e| (EXIT_CONFIG, format!("cannot write {}: {e}", path.display())))?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Converge { config, snr, out } => {
            let cfg = load_config(&config)?;
            let dir = out_dir(&cfg, out);
            std::fs::create_dir_all(&dir)
                .map_err(|e| (EXIT_CONFIG, format!("cannot create {}: {e}", dir.display())))?;
            let traces = runner::run_convergence(&cfg, snr)
                .map_err(|e| (exit_for_core_error(&e), e.to_string()))?;
            if traces.is_empty() {
                return Err((
                    EXIT_CONFIG,
                    "no optimizing scheme in config; nothing to trace".into(),
                ));
            }
            for t in &traces {
                let path = dir.join(format!("converge_{}.csv", t.scheme));
                std::fs::write(&path, emit::convergence_csv(t)).map_err(|e| {
                    (EXIT_CONFIG, format!("cannot write {}: {e}", path.display()))
                })?;
                println!("wrote {}", path.display());
            }
            let summary = dir.join("converge_summary.json");
            std::fs::write(&summary, emit::convergence_summary_json(&traces))
                .map_err(|e| (EXIT_CONFIG, format!("cannot write {}: {e}", summary.display())))?;
            println!("wrote {}", summary.display());
            Ok(())
        }
        Command::GsvdCheck { fixture } => gsvd_check(&fixture),
    }
}

/// Loads a channel fixture and verifies every factorization invariant:
/// reconstruction residuals, unitarity, gain pairing/ordering, and the
/// subspace-dimension identities.
fn gsvd_check(fixture: &Path) -> Result<(), (u8, String)> {
    let text = std::fs::read_to_string(fixture)
        .map_err(|e| (EXIT_CONFIG, format!("cannot read {}: {e}", fixture.display())))?;
    let manifest: ChannelManifest =
        serde_json::from_str(&text).map_err(|e| (EXIT_CONFIG, format!("bad manifest: {e}")))?;
    let base = fixture.parent().unwrap_or_else(|| Path::new("."));
    let h_ba = matcore::read_matrix_text(&base.join(&manifest.h_ba_file))
        .map_err(|e| (EXIT_CONFIG, e.to_string()))?;

    let second = if let Some(ref f) = manifest.h_ea_file {
        matcore::read_matrix_text(&base.join(f)).map_err(|e| (EXIT_CONFIG, e.to_string()))?
    } else if let Some(ref f) = manifest.r_nt_file {
        let r_nt =
            matcore::read_matrix_text(&base.join(f)).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
        matcore::matrix_sqrt_factor(&r_nt).map_err(|e| (exit_for_core_error(&e), e.to_string()))?
    } else {
        return Err((
            EXIT_CONFIG,
            "manifest names neither h_ea_file nor r_nt_file".into(),
        ));
    };

    let tol = default_rank_tol(h_ba.nrows() + second.nrows(), h_ba.ncols());
    let fact = matcore::gsvd_pair(&h_ba, &second, tol)
        .map_err(|e| (exit_for_core_error(&e), e.to_string()))?;
    let violations = fact.check_invariants(&h_ba, &second);
    let dims = matcore::subspace_dims(&h_ba, &second, tol)
        .map_err(|e| (exit_for_core_error(&e), e.to_string()))?;

    println!(
        "k = {}, r = {}, s = {}, dim(S_ea) = {}, dim(S_n) = {}",
        dims.k, dims.r, dims.s, dims.dim_s_ea, dims.dim_s_n
    );
    if (fact.k, fact.r, fact.s) != (dims.k, dims.r, dims.s) {
        return Err((
            EXIT_NUMERICAL,
            format!(
                "factorization dims ({}, {}, {}) disagree with rank oracle ({}, {}, {})",
                fact.k, fact.r, fact.s, dims.k, dims.r, dims.s
            ),
        ));
    }
    if violations.is_empty() {
        println!("all factorization invariants hold");
        Ok(())
    } else {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        Err((EXIT_NUMERICAL, format!("{} violations", violations.len())))
    }
}
