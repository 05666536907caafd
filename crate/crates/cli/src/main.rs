//! `subspace-perturb`: seeded Monte Carlo experiments over matrix
//! perturbation inequalities, plus single-shot norm and alignment tools.
//!
//! Exit codes: 0 = success with no violations, 2 = violations found,
//! 1 = usage, config, or I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use perturb_core::matrix::{matrix_norm, two_to_inf_norm, DenseMatrix, NormKind};
use perturb_core::procrustes::align;
use perturb_core::subspace::OrthonormalFrame;
use perturb_harness::config::{ExperimentConfig, OutputFormat};
use perturb_harness::{experiments, HarnessError};

#[derive(Parser)]
#[command(name = "subspace-perturb", version, about = "Matrix perturbation Monte Carlo harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config replicate count.
    #[arg(long)]
    replicates: Option<usize>,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format: csv or json.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    Covariance(RunArgs),
    #[command(name = "lowrank_recovery")]
    LowrankRecovery(RunArgs),
    Omnibus(RunArgs),
    Entrywise(RunArgs),
    #[command(name = "decomposition_suite")]
    DecompositionSuite(RunArgs),
    #[command(name = "norm_suite")]
    NormSuite(RunArgs),
    /// Prints every norm of a matrix read from a text file.
    Norms {
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Aligns two orthonormal frames and prints the Procrustes residuals.
    Align {
        #[arg(long)]
        u: PathBuf,
        #[arg(long)]
        uhat: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let outcome = match cli.command {
        Command::Covariance(args) => run_experiment("covariance", args),
        Command::LowrankRecovery(args) => run_experiment("lowrank_recovery", args),
        Command::Omnibus(args) => run_experiment("omnibus", args),
        Command::Entrywise(args) => run_experiment("entrywise", args),
        Command::DecompositionSuite(args) => run_experiment("decomposition_suite", args),
        Command::NormSuite(args) => run_experiment("norm_suite", args),
        Command::Norms { matrix } => norms_command(&matrix),
        Command::Align { u, uhat } => align_command(&u, &uhat),
    };
    match outcome {
        Ok(violations) if violations > 0 => ExitCode::from(2),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}

fn run_experiment(expected: &str, args: RunArgs) -> Result<usize, HarnessError> {
    let mut config = ExperimentConfig::from_file(&args.config)?;
    if config.kind.name() != expected {
        return Err(HarnessError::Config(format!(
            "config is for experiment {:?} but the {expected:?} subcommand was invoked",
            config.kind.name()
        )));
    }
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    if let Some(replicates) = args.replicates {
        config.replicates = replicates;
    }
    if let Some(out) = args.out {
        config.output_path = Some(out);
    }
    if let Some(format) = args.format.as_deref() {
        config.output_format = OutputFormat::parse(format)?;
    }
    let report = experiments::run(&config)?;
    match &config.output_path {
        Some(path) => report.write(config.output_format, path)?,
        None => print!("{}", report.render(config.output_format)?),
    }
    Ok(report.violation_count)
}

fn read_matrix(path: &Path) -> Result<DenseMatrix, HarnessError> {
    DenseMatrix::read_text_file(path).map_err(|e| HarnessError::Config(e.to_string()))
}

fn norms_command(path: &Path) -> Result<usize, HarnessError> {
    let m = read_matrix(path)?;
    let a = m.as_dmatrix();
    let out = serde_json::json!({
        "rows": m.rows(),
        "cols": m.cols(),
        "two_to_inf": two_to_inf_norm(a),
        "spectral": matrix_norm(a, NormKind::Spectral),
        "frobenius": matrix_norm(a, NormKind::Frobenius),
        "one": matrix_norm(a, NormKind::One),
        "infinity": matrix_norm(a, NormKind::Infinity),
        "max": matrix_norm(a, NormKind::Max),
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    Ok(0)
}

fn align_command(u_path: &Path, uhat_path: &Path) -> Result<usize, HarnessError> {
    let frame = |path: &Path| -> Result<OrthonormalFrame, HarnessError> {
        OrthonormalFrame::new(read_matrix(path)?)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    };
    let u = frame(u_path)?;
    let uhat = frame(uhat_path)?;
    let result = align(&u, &uhat).map_err(|e| HarnessError::Run(e.to_string()))?;
    let w: Vec<Vec<f64>> = (0..result.w.rows())
        .map(|i| (0..result.w.cols()).map(|j| result.w.as_dmatrix()[(i, j)]).collect())
        .collect();
    let out = serde_json::json!({
        "residual_frobenius": result.residual_frobenius,
        "residual_spectral": result.residual_spectral,
        "residual_two_to_inf": result.residual_two_to_inf,
        "non_unique": result.non_unique,
        "w": w,
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    Ok(0)
}
