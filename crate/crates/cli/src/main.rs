//! forge: construct a second-order Darboux transformation from a config,
//! verify the resulting partner spectrum, and write the report bundle.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use darboux_cli::config::RunConfig;
use darboux_cli::pipeline::{self, PipelineFailure};

#[derive(Parser)]
#[command(name = "forge", version, about = "Darboux transformation workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Overrides {
    /// Override grid.n from the config.
    #[arg(long)]
    grid_n: Option<usize>,
    /// Override the grid half-width (sets x_max = X, x_min = -X).
    #[arg(long)]
    x_max: Option<f64>,
    /// Override spectrum.k_max from the config.
    #[arg(long)]
    k_max: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one transformation experiment from a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run every *.cfg in a directory in parallel, each into its own
    /// `<stem>.out` subdirectory.
    Suite {
        dir: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compute and export the seed spectrum only.
    Spectrum {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

const EXIT_VERIFICATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CONSTRUCTION: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, overrides } => run_one(&config, overrides, None),
        Command::Spectrum { config, overrides } => spectrum_one(&config, overrides),
        Command::Suite { dir, overrides } => suite(&dir, overrides),
    };
    ExitCode::from(code)
}

fn load(config: &Path, overrides: Overrides) -> Result<RunConfig, PipelineFailure> {
    let mut cfg = RunConfig::from_file(config)?;
    cfg.apply_overrides(overrides.grid_n, overrides.x_max, overrides.k_max);
    cfg.validate()?;
    Ok(cfg)
}

fn failure_exit(e: &PipelineFailure) -> u8 {
    match e {
        PipelineFailure::Config(_) => EXIT_CONFIG,
        PipelineFailure::Construction(_) => EXIT_CONSTRUCTION,
    }
}

fn run_one(config: &PathBuf, overrides: Overrides, outdir_override: Option<PathBuf>) -> u8 {
    let mut cfg = match load(config, overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", config.display());
            return failure_exit(&e);
        }
    };
    if let Some(dir) = outdir_override {
        cfg.output_dir = dir;
    }
    match pipeline::run_pipeline(&cfg) {
        Ok(out) => {
            for check in &out.report.checks {
                println!(
                    "{}: {} (value {:.3e}, threshold {:.3e})",
                    check.name,
                    if check.passed { "pass" } else { "FAIL" },
                    check.value,
                    check.threshold
                );
            }
            println!(
                "report: {} ({})",
                out.report_path.display(),
                if out.all_passed {
                    "all checks passed"
                } else {
                    "checks FAILED"
                }
            );
            if out.all_passed {
                0
            } else {
                EXIT_VERIFICATION
            }
        }
        Err(e) => {
            eprintln!("{}: {e}", config.display());
            failure_exit(&e)
        }
    }
}

fn spectrum_one(config: &PathBuf, overrides: Overrides) -> u8 {
    let cfg = match load(config, overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", config.display());
            return failure_exit(&e);
        }
    };
    match pipeline::run_spectrum(&cfg) {
        Ok((spec, path)) => {
            println!("k,E");
            for (k, e) in spec.levels.iter().enumerate() {
                println!("{k},{e}");
            }
            eprintln!("written: {}", path.display());
            0
        }
        Err(e) => {
            eprintln!("{}: {e}", config.display());
            failure_exit(&e)
        }
    }
}

fn suite(dir: &PathBuf, overrides: Overrides) -> u8 {
    let mut configs: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
            .collect(),
        Err(e) => {
            eprintln!("{}: {e}", dir.display());
            return EXIT_CONFIG;
        }
    };
    configs.sort();
    if configs.is_empty() {
        eprintln!("{}: no *.cfg files", dir.display());
        return EXIT_CONFIG;
    }

    let results: Vec<(PathBuf, u8)> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|path| {
                let path = path.clone();
                scope.spawn(move || {
                    let stem = path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "run".into());
                    let outdir = path.with_file_name(format!("{stem}.out"));
                    let code = run_one(&path, overrides, Some(outdir));
                    (path, code)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let mut worst = 0u8;
    for (path, code) in &results {
        println!(
            "{}: {}",
            path.display(),
            match code {
                0 => "pass".to_string(),
                c => format!("FAIL (exit {c})"),
            }
        );
        worst = worst.max(*code);
    }
    if worst == 0 {
        0
    } else {
        EXIT_VERIFICATION
    }
}
