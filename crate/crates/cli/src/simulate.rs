use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use ovdmine::evaluation::write_metrics_csv;
use ovdmine::formats::{export_assignments, export_candidates, export_ground_truth, export_mined, write_json};
use ovdmine::simulator::{run_training_simulation, RunResult, RunSummary};
use rayon::prelude::*;

use crate::{with_threads, CliError, ExperimentConfig, Result};

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed_{seed}"))
}

/// Runs every seed of `cfg` and writes each run's files to
/// `output_dir/seed_<n>/`. Summaries come back in seed order.
pub fn cmd_simulate(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<RunSummary>> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::io(&cfg.output_dir, e))?;
    write_json(&cfg.output_dir.join("config.json"), cfg).map_err(|e| CliError::io(&cfg.output_dir, e))?;
    with_threads(threads, || {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let run = run_training_simulation(
                    &cfg.world,
                    &cfg.mining,
                    cfg.indicator,
                    cfg.iterations,
                    cfg.log_stride,
                    seed,
                )?;
                write_run(&seed_dir(&cfg.output_dir, seed), &run)?;
                Ok(run.summary)
            })
            .collect()
    })?
}

/// metrics.csv, summary.json and the candidate, ground-truth, mined-label
/// and assignment dumps of one run.
pub fn write_run(dir: &Path, run: &RunResult) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let csv_path = dir.join("metrics.csv");
    let file = File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    write_metrics_csv(&run.metrics, BufWriter::new(file)).map_err(|e| CliError::io(&csv_path, e))?;

    let a = &run.artifacts;
    let put = |name: &str, res: ovdmine::Result<()>| res.map_err(|e| CliError::io(&dir.join(name), e));
    put("summary.json", write_json(&dir.join("summary.json"), &run.summary))?;
    put("candidates.json", write_json(&dir.join("candidates.json"), &export_candidates(a)))?;
    put("ground_truth.json", write_json(&dir.join("ground_truth.json"), &export_ground_truth(a)))?;
    put("mined_labels.json", write_json(&dir.join("mined_labels.json"), &export_mined(a)))?;
    put("assignments.json", write_json(&dir.join("assignments.json"), &export_assignments(a)))?;
    Ok(())
}
