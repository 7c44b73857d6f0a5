//! Command-line front end: subcommand dispatch, exit-code contract, and
//! report file emission.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 numeric or data
//! failure, 4 violated hypothesis of the quantity being estimated.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::analysis::{
    dichotomy_probe, fit_decay, small_ball_estimate, smoothness_certificate,
    truncation_error_curve, DichotomyOptions, NormTag,
};
use crate::config::{RankSpec, RunConfig};
use crate::error::{KlError, Result};
use crate::grid::Grid;
use crate::kernel::KernelSpec;
use crate::report::{cached_decompose, fmt_f64, write_csv, write_decomposition, write_json};
use crate::sampling::sample_batch;
use crate::spectral::SpectralDecomposition;

#[derive(Debug, Parser)]
#[command(
    name = "kls",
    about = "Karhunen-Loeve decomposition, path sampling, and spectral path analysis",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decompose the covariance operator; writes mu.csv, efuns.csv,
    /// decomposition.json.
    Eig(CommonArgs),
    /// Draw sample paths; writes paths.csv, manifest.json.
    Sample(CommonArgs),
    /// Truncation-error curve; writes truncation.csv, truncation.json.
    Truncation(CommonArgs),
    /// Small-ball probability fit; writes smallball.csv, smallball.json.
    Smallball(CommonArgs),
    /// Eigenvalue decay fit and Besov smoothness certificate; writes
    /// decay.csv, certificate.json.
    Certify(CommonArgs),
    /// Partial-sum convergence dichotomy probe; writes probe.csv, probe.json.
    Probe(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; also hosts the decomposition cache.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (falls back to the KLS_THREADS variable, then to the
    /// number of cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Maps error classes onto the exit-code contract.
pub fn exit_code_for(err: &KlError) -> i32 {
    match err {
        KlError::InvalidArgument(_)
        | KlError::InvalidDensity(_)
        | KlError::DegenerateMeasure(_)
        | KlError::UnsupportedPoint(_)
        | KlError::GridMismatch(_)
        | KlError::Unsupported(_) => 2,
        KlError::NumericError(_)
        | KlError::DegenerateKernel(_)
        | KlError::InsufficientData(_)
        | KlError::InsufficientRank(_) => 3,
        KlError::HypothesisViolated(_) => 4,
    }
}

/// Runs a parsed invocation and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (name, args) = match &cli.command {
        Command::Eig(a) => ("eig", a),
        Command::Sample(a) => ("sample", a),
        Command::Truncation(a) => ("truncation", a),
        Command::Smallball(a) => ("smallball", a),
        Command::Certify(a) => ("certify", a),
        Command::Probe(a) => ("probe", a),
    };
    let threads = args.threads.or_else(|| {
        std::env::var("KLS_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    let body = || match execute(name, args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("kls {name}: {e}");
            exit_code_for(&e)
        }
    };
    match threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(body),
            Err(e) => {
                eprintln!("kls {name}: cannot build thread pool: {e}");
                2
            }
        },
        None => body(),
    }
}

struct Prepared {
    config: RunConfig,
    grid: Grid,
    kernel: KernelSpec,
    seed: u64,
    out: PathBuf,
}

fn prepare(args: &CommonArgs) -> Result<Prepared> {
    let config = RunConfig::load(&args.config)?;
    let grid = config.grid.build()?;
    let base_dir = args
        .config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    let (kernel, asymmetry) = config.kernel.build(&grid, &base_dir)?;
    if asymmetry > 1e-8 {
        eprintln!(
            "kls: warning: tabulated gram asymmetry {asymmetry:e} exceeds 1e-8; symmetrized as (G + G^T)/2"
        );
    }
    let seed = args.seed.unwrap_or(config.seed);
    Ok(Prepared {
        config,
        grid,
        kernel,
        seed,
        out: args.out.clone(),
    })
}

fn execute(name: &str, args: &CommonArgs) -> Result<()> {
    let p = prepare(args)?;
    let dec = cached_decompose(&p.out, &p.kernel, &p.grid, p.config.decompose_options())?;
    match name {
        "eig" => cmd_eig(&p, &dec),
        "sample" => cmd_sample(&p, &dec),
        "truncation" => cmd_truncation(&p, &dec),
        "smallball" => cmd_smallball(&p, &dec),
        "certify" => cmd_certify(&p, &dec),
        "probe" => cmd_probe(&p, &dec),
        _ => unreachable!("unknown subcommand {name}"),
    }
}

fn provenance(p: &Prepared, dec: &SpectralDecomposition) -> serde_json::Value {
    json!({
        "seed": p.seed,
        "kernel": dec.kernel_tag(),
        "law": p.config.law_or_default().tag(),
        "grid_n": p.grid.len(),
        "grid_interval": [p.grid.a(), p.grid.b()],
        "rank": dec.rank(),
        "drop_tol": dec.drop_tol(),
    })
}

fn require<T: Copy>(field: Option<T>, what: &str, cmd: &str) -> Result<T> {
    field.ok_or_else(|| KlError::InvalidArgument(format!("{cmd} needs `{what}` in the config")))
}

fn cmd_eig(p: &Prepared, dec: &SpectralDecomposition) -> Result<()> {
    // Post-hoc invariant re-check; violations are numeric failures.
    dec.validate(&p.kernel)?;
    write_decomposition(dec, &p.out)?;
    println!(
        "eig: rank {} of n {}, mu_1 = {}",
        dec.rank(),
        p.grid.len(),
        fmt_f64(dec.mu()[0])
    );
    Ok(())
}

fn cmd_sample(p: &Prepared, dec: &SpectralDecomposition) -> Result<()> {
    let replicates = require(p.config.replicates, "replicates", "sample")?;
    let m = match p.config.m {
        Some(RankSpec::Count(c)) => c,
        Some(RankSpec::All) | None => dec.rank(),
    };
    let law = p.config.law_or_default();
    let batch = sample_batch(dec, law, m, replicates, p.seed)?;
    write_csv(
        &p.out.join("paths.csv"),
        None,
        batch.iter().map(|path| {
            let mut row = Vec::with_capacity(path.values().len() + 2);
            row.push(path.seed().to_string());
            row.push(path.replicate_index().to_string());
            row.extend(path.values().iter().map(|v| fmt_f64(*v)));
            row
        }),
    )?;
    let manifest = json!({
        "seed": p.seed,
        "law": law.tag(),
        "m": m,
        "replicates": replicates,
        "grid_n": p.grid.len(),
        "kernel": dec.kernel_tag(),
        "rank": dec.rank(),
    });
    write_json(&p.out.join("manifest.json"), &manifest)?;
    println!(
        "sample: {replicates} paths of length {} at truncation {m}",
        p.grid.len()
    );
    Ok(())
}

fn cmd_truncation(p: &Prepared, dec: &SpectralDecomposition) -> Result<()> {
    let replicates = require(p.config.replicates, "replicates", "truncation")?;
    let truncations = p.config.truncations.clone().ok_or_else(|| {
        KlError::InvalidArgument("truncation needs `truncations` in the config".into())
    })?;
    let norm = match p.config.beta {
        Some(beta) => NormTag::Power { beta },
        None => NormTag::L2,
    };
    let report = truncation_error_curve(
        dec,
        p.config.law_or_default(),
        norm,
        &truncations,
        replicates,
        p.seed,
    )?;
    write_csv(
        &p.out.join("truncation.csv"),
        Some(&["m", "empirical_mse", "predicted_tail"]),
        report
            .truncations
            .iter()
            .zip(report.empirical_mse.iter().zip(&report.predicted_tail))
            .map(|(m, (e, t))| vec![m.to_string(), fmt_f64(*e), fmt_f64(*t)]),
    )?;
    write_json(
        &p.out.join("truncation.json"),
        &json!({ "report": report, "provenance": provenance(p, dec) }),
    )?;
    println!(
        "truncation: {} levels at R = {replicates}",
        report.truncations.len()
    );
    Ok(())
}

fn cmd_smallball(p: &Prepared, dec: &SpectralDecomposition) -> Result<()> {
    let replicates = require(p.config.replicates, "replicates", "smallball")?;
    let beta = require(p.config.beta, "beta", "smallball")?;
    let epsilons = p.config.epsilons.clone().ok_or_else(|| {
        KlError::InvalidArgument("smallball needs `epsilons` in the config".into())
    })?;
    let report = small_ball_estimate(
        dec,
        beta,
        &epsilons,
        replicates,
        p.seed,
        p.config.law_or_default(),
    )?;
    write_csv(
        &p.out.join("smallball.csv"),
        Some(&["epsilon", "survival"]),
        report
            .epsilons
            .iter()
            .zip(&report.survival)
            .map(|(e, s)| vec![fmt_f64(*e), fmt_f64(*s)]),
    )?;
    write_json(
        &p.out.join("smallball.json"),
        &json!({ "report": report, "provenance": provenance(p, dec) }),
    )?;
    println!(
        "smallball: fitted exponent {} (predicted {})",
        fmt_f64(report.fitted_exponent),
        fmt_f64(report.predicted_exponent)
    );
    Ok(())
}

fn cmd_certify(p: &Prepared, dec: &SpectralDecomposition) -> Result<()> {
    let fit = fit_decay(dec, p.config.fit_range)?;
    let d = p.config.d.unwrap_or(1);
    let cert = smoothness_certificate(&fit, d);
    write_csv(
        &p.out.join("decay.csv"),
        Some(&["i", "mu"]),
        dec.mu()
            .iter()
            .enumerate()
            .map(|(i, m)| vec![(i + 1).to_string(), fmt_f64(*m)]),
    )?;
    write_json(
        &p.out.join("certificate.json"),
        &json!({ "fit": fit, "certificate": cert, "provenance": provenance(p, dec) }),
    )?;
    match cert.certified_range {
        Some((lo, hi)) => println!(
            "certify: paths lie in B^s_2,2 for s in ({lo}, {hi:.6}) (upper endpoint excluded); decay alpha = {:.6}",
            fit.alpha_hat
        ),
        None => println!(
            "certify: no positive smoothness certified (m_hat = {:.6} <= d/2 = {})",
            cert.m_hat,
            d as f64 / 2.0
        ),
    }
    Ok(())
}

fn cmd_probe(p: &Prepared, dec: &SpectralDecomposition) -> Result<()> {
    let replicates = require(p.config.replicates, "replicates", "probe")?;
    let beta = require(p.config.beta, "beta", "probe")?;
    let mut opts = DichotomyOptions::default();
    if let Some(w) = p.config.probe_window {
        opts.window = w;
    }
    if let Some(t) = p.config.probe_threshold {
        opts.rel_threshold = t;
    }
    let report = dichotomy_probe(
        dec,
        p.config.law_or_default(),
        beta,
        replicates,
        p.seed,
        opts,
    )?;
    write_csv(
        &p.out.join("probe.csv"),
        Some(&["m", "mean_partial_sum"]),
        report
            .mean_partial_sums
            .iter()
            .enumerate()
            .map(|(i, s)| vec![(i + 1).to_string(), fmt_f64(*s)]),
    )?;
    write_json(
        &p.out.join("probe.json"),
        &json!({
            "converged_fraction": report.converged_fraction,
            "beta": beta,
            "window": opts.window,
            "rel_threshold": opts.rel_threshold,
            "provenance": provenance(p, dec),
        }),
    )?;
    println!(
        "probe: converged fraction {} at beta {beta}",
        fmt_f64(report.converged_fraction)
    );
    Ok(())
}
