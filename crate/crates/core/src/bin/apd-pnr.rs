use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use apd_pnr::analysis::WidthMode;
use apd_pnr::export::{write_artifacts, Artifact};
use apd_pnr::pipeline::{self, exit_code, EXIT_NUMERIC, EXIT_OK};
use apd_pnr::runspec::{self, AnalysisOptions, RunSpec, SweepSpec};
use apd_pnr::Result;

/// Photon-number detection with a gated Si APD: simulation and analysis.
#[derive(Parser)]
#[command(name = "apd-pnr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a run and write the requested artifacts.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out_dir: PathBuf,
        /// Override the seed of the run file or preset.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a histogram file and report thresholds and errors.
    Analyze {
        histogram: PathBuf,
        /// Take the [analysis] section of this run spec.
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long, value_parser = parse_width_mode)]
        width_mode: Option<WidthMode>,
        #[arg(long)]
        discrimination_n_max: Option<usize>,
        #[arg(long)]
        closed_top_bin: bool,
    },
    /// Run a bias or flux sweep.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Sweep points run concurrently (default: available cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// List the built-in presets.
    Presets,
}

#[derive(Args)]
#[group(multiple = false)]
struct Source {
    /// Spec file (TOML).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    preset: Option<String>,
}

fn parse_width_mode(s: &str) -> std::result::Result<WidthMode, String> {
    match s {
        "constrained" => Ok(WidthMode::Constrained),
        "free" => Ok(WidthMode::Free),
        _ => Err(format!("`{s}` is not one of: constrained, free")),
    }
}

fn run_spec(src: &Source) -> Result<Option<RunSpec>> {
    match (&src.spec, &src.preset) {
        (Some(p), _) => RunSpec::load(p).map(Some),
        (_, Some(n)) => runspec::run_preset(n).map(Some),
        _ => Ok(None),
    }
}

fn sweep_spec(src: &Source) -> Result<SweepSpec> {
    match (&src.spec, &src.preset) {
        (Some(p), _) => SweepSpec::load(p),
        (_, Some(n)) => runspec::sweep_preset(n),
        _ => Err(apd_pnr::Error::Config("give --spec or --preset".into())),
    }
}

fn finish(out_dir: &Path, artifacts: &[Artifact], numeric_failure: bool) -> Result<i32> {
    for p in write_artifacts(out_dir, artifacts)? {
        println!("wrote {}", p.display());
    }
    if numeric_failure {
        eprintln!("error: fit did not converge to ordered peaks; see fit report");
        return Ok(EXIT_NUMERIC);
    }
    Ok(EXIT_OK)
}

fn run(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Simulate {
            source,
            out_dir,
            seed,
        } => {
            let mut spec = run_spec(&source)?
                .ok_or_else(|| apd_pnr::Error::Config("give --spec or --preset".into()))?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let out = pipeline::simulate(&spec)?;
            finish(&out_dir, &out.artifacts, out.numeric_failure())
        }
        Command::Analyze {
            histogram,
            source,
            out_dir,
            n_max,
            width_mode,
            discrimination_n_max,
            closed_top_bin,
        } => {
            let mut opts = run_spec(&source)?.map_or_else(AnalysisOptions::default, |s| s.analysis);
            if let Some(n) = n_max {
                opts.fit.n_max = n;
            }
            if let Some(m) = width_mode {
                opts.fit.mode = m;
            }
            if discrimination_n_max.is_some() {
                opts.discrimination_n_max = discrimination_n_max;
            }
            opts.closed_top_bin |= closed_top_bin;
            let out = pipeline::analyze_file(&histogram, &opts)?;
            for w in &out.report.fit.warnings {
                eprintln!("warning: {w:?}");
            }
            finish(&out_dir, &out.artifacts, !out.report.fit.is_valid())
        }
        Command::Sweep {
            source,
            out_dir,
            seed,
            jobs,
        } => {
            let mut spec = sweep_spec(&source)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let jobs =
                jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let out = pipeline::sweep(&spec, jobs)?;
            finish(&out_dir, &out.artifacts, out.numeric_failure())
        }
        Command::Presets => {
            for (name, _) in runspec::RUN_PRESETS {
                println!("{name}\tsimulate");
            }
            for (name, _) in runspec::SWEEP_PRESETS {
                println!("{name}\tsweep");
            }
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
