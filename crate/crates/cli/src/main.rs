use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use oamcorr::experiment::{
    compare_profiles, contrast_row, default_symmetry_range, oracle_profile, run_experiment,
    ExperimentConfig,
};
use oamcorr::identify::{detect_symmetry_in, fit_fractional, DEFAULT_THRESHOLD};
use oamcorr::io::{
    atomic_write, companion_path, format_profile_csv, read_matrix_csv, read_profile_csv,
    render_heatmap,
};
use oamcorr::ModeMatrix;
use serde_json::json;

/// OAM-resolved ghost-correlation simulator.
#[derive(Parser, Debug)]
#[command(name = "oamcorr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every task listed in an experiment config.
    Run { config: PathBuf },
    /// Write the quadrature signal profile for a config's mask.
    Oracle {
        config: PathBuf,
        /// Output CSV; defaults to `oracle_profile.csv` in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Identify the object behind a g2 matrix CSV (stderr read from `<stem>.stderr.csv`).
    Identify {
        matrix: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Symmetry)]
        mode: Mode,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        n_min: Option<u32>,
        #[arg(long)]
        n_max: Option<u32>,
    },
    /// Render a matrix CSV as an 8-bit PGM image.
    Heatmap { matrix: PathBuf, image: PathBuf },
    /// Compare the l_r = 0 row of a g2 matrix with a signal profile.
    Compare { matrix: PathBuf, profile: PathBuf },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Symmetry,
    Fractional,
}

fn read_with_stderr(matrix: &Path) -> Result<(ModeMatrix, ModeMatrix)> {
    let g2 = read_matrix_csv(matrix)?;
    let se_path = companion_path(matrix, "stderr");
    let se = if se_path.exists() {
        read_matrix_csv(&se_path)?
    } else {
        ModeMatrix::zeros(g2.l_max)
    };
    Ok((g2, se))
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let outputs =
                run_experiment(&config).with_context(|| format!("running {}", config.display()))?;
            for f in outputs.files {
                println!("{}", f.display());
            }
        }
        Command::Oracle { config, out } => {
            let base = config.parent().unwrap_or(Path::new("."));
            let resolved = ExperimentConfig::load(&config)?.resolve(base)?;
            let profile = oracle_profile(&resolved)?;
            let out = out.unwrap_or_else(|| resolved.output_dir.join("oracle_profile.csv"));
            atomic_write(&out, format_profile_csv(&profile).as_bytes())?;
            println!("{}", out.display());
        }
        Command::Identify {
            matrix,
            mode,
            threshold,
            n_min,
            n_max,
        } => {
            let (g2, se) = read_with_stderr(&matrix)?;
            match mode {
                Mode::Symmetry => {
                    let (lo, hi) = default_symmetry_range(g2.l_max);
                    let range = (n_min.unwrap_or(lo), n_max.unwrap_or(hi));
                    let report = detect_symmetry_in(&g2, &se, range, threshold)?;
                    print_json(&json!({ "matrix": matrix, "symmetry": report }))?;
                }
                Mode::Fractional => {
                    let row = contrast_row(&g2, &se)?;
                    let l = g2.l_max as i64;
                    let fit = fit_fractional(&row, (-l, l - 1))?;
                    print_json(&json!({ "matrix": matrix, "fractional": fit }))?;
                }
            }
        }
        Command::Heatmap { matrix, image } => {
            render_heatmap(&matrix, &image)?;
            println!("{}", image.display());
        }
        Command::Compare { matrix, profile } => {
            let (g2, se) = read_with_stderr(&matrix)?;
            let reference = read_profile_csv(&profile)?;
            if g2.l_max > reference.dl_max {
                bail!(
                    "profile covers |dl| <= {} but the matrix window is l_max = {}",
                    reference.dl_max,
                    g2.l_max
                );
            }
            let report = compare_profiles(&contrast_row(&g2, &se)?, &reference)?;
            print_json(&json!({ "matrix": matrix, "profile": profile, "report": report }))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
