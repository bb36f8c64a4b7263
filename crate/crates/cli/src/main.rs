use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ovdmine_cli::audit::{format_table, write_audit_csv};
use ovdmine_cli::{
    cmd_audit, cmd_simulate, cmd_sweep, CliError, ExperimentConfig, Grid, Overrides, ScoreKind, OUTPUT_ROOT_ENV,
};

#[derive(Parser)]
#[command(name = "ovdmine", version, about = "Pseudo-label mining experiments on a synthetic world")]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train in the simulator for each seed and write the run files.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Repeat the simulation over a parameter grid.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Axis as key=v1,v2,... over lambda, lambda_prime, delta,
        /// burnin_steps, gamma, indicator. Repeatable.
        #[arg(long = "grid")]
        grid: Vec<String>,
    },
    /// TP / mis-class / noise breakdown of a recorded candidate file.
    Audit {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.8")]
        thresholds: Vec<f64>,
        #[arg(long, value_enum, default_value = "clip")]
        score: ScoreKind,
        /// Novel categories; defaults to every class the candidates score.
        #[arg(long, value_delimiter = ',')]
        novel: Option<Vec<String>>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Simulate { config, overrides } => {
            let cfg = ExperimentConfig::resolve(config.as_deref(), &overrides)?;
            for s in cmd_simulate(&cfg, cli.threads)? {
                println!(
                    "seed {}: precision {:.4} recall {:.4} noise {:.4} (clip-only at matched recall {:.4}){}",
                    s.seed,
                    s.final_precision,
                    s.final_recall,
                    s.fusion.run_noise_fraction,
                    s.fusion.baseline_noise_fraction,
                    if s.clip_only_baseline { " [clip-only baseline]" } else { "" }
                );
            }
            println!("wrote {}", cfg.output_dir.display());
        }
        Cmd::Sweep { config, overrides, grid } => {
            let grid = Grid::parse(&grid)?;
            let cfg = ExperimentConfig::resolve(config.as_deref(), &overrides)?;
            let report = cmd_sweep(&cfg, &grid, cli.threads)?;
            println!("{} runs, wrote {}", report.runs.len(), cfg.output_dir.join("sweep.csv").display());
        }
        Cmd::Audit { candidates, ground_truth, thresholds, score, novel, output_dir } => {
            let rows = cmd_audit(&candidates, &ground_truth, &thresholds, score, novel.as_deref())?;
            print!("{}", format_table(&rows));
            let dir = output_dir
                .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
                .unwrap_or_else(|| ExperimentConfig::default().output_dir);
            std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
            let path = dir.join("audit.csv");
            write_audit_csv(&path, &rows)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
