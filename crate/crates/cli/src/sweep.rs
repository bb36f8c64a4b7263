use std::fs::File;
use std::io::BufWriter;

use ovdmine::formats::write_json;
use ovdmine::simulator::{run_training_simulation, RunSummary};
use ovdmine::ReliabilityIndicator;
use rayon::prelude::*;
use serde::Serialize;

use crate::{with_threads, CliError, ExperimentConfig, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridValue {
    Lambda(f64),
    LambdaPrime(f64),
    Delta(f64),
    BurninSteps(u64),
    Gamma(f64),
    Indicator(ReliabilityIndicator),
}

impl GridValue {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let m = &mut cfg.mining;
        match *self {
            GridValue::Lambda(v) => m.lambda = v,
            GridValue::LambdaPrime(v) => m.lambda_prime = v,
            GridValue::Delta(v) => m.delta = v,
            GridValue::BurninSteps(v) => m.burnin_steps = v,
            GridValue::Gamma(v) => m.gamma = v,
            GridValue::Indicator(v) => cfg.indicator = v,
        }
    }
}

/// Cartesian grid over mining parameters. Axes are given as
/// `key=v1,v2,...`.
#[derive(Debug, Clone, Default)]
pub struct Grid {
    axes: Vec<(String, Vec<GridValue>)>,
}

impl Grid {
    pub fn parse(specs: &[String]) -> Result<Self> {
        let mut grid = Grid::default();
        for spec in specs {
            let bad = |m: &str| CliError::Validation(format!("grid axis {spec:?}: {m}"));
            let (key, list) = spec.split_once('=').ok_or_else(|| bad("expected key=v1,v2,..."))?;
            let key = key.trim().replace('-', "_");
            if grid.axes.iter().any(|(k, _)| *k == key) {
                return Err(bad("key given twice"));
            }
            let raw: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            if raw.is_empty() {
                return Err(bad("no values"));
            }
            let float = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("{s:?} is not a number")));
            let values = raw
                .iter()
                .map(|s| {
                    Ok(match key.as_str() {
                        "lambda" => GridValue::Lambda(float(s)?),
                        "lambda_prime" => GridValue::LambdaPrime(float(s)?),
                        "delta" => GridValue::Delta(float(s)?),
                        "gamma" => GridValue::Gamma(float(s)?),
                        "burnin_steps" => {
                            GridValue::BurninSteps(s.parse().map_err(|_| bad(&format!("{s:?} is not a step count")))?)
                        }
                        "indicator" => GridValue::Indicator(s.parse()?),
                        _ => {
                            return Err(bad(
                                "key must be one of lambda, lambda_prime, delta, burnin_steps, gamma, indicator",
                            ))
                        }
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            grid.axes.push((key, values));
        }
        if grid.axes.is_empty() {
            return Err(CliError::Validation("sweep grid is empty; pass at least one --grid key=v1,v2".into()));
        }
        Ok(grid)
    }

    /// Grid points in row-major order, last axis fastest.
    pub fn points(&self) -> Vec<Vec<GridValue>> {
        let mut out = vec![Vec::new()];
        for (_, values) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(*v);
                        q
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRun {
    pub point: usize,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub runs: Vec<SweepRun>,
}

const COLUMNS: [&str; 15] = [
    "point",
    "row",
    "seed",
    "lambda",
    "lambda_prime",
    "delta",
    "burnin_steps",
    "gamma",
    "indicator",
    "final_precision",
    "final_recall",
    "noise_fraction",
    "baseline_noise_fraction",
    "mean_weight_rank_correlation",
    "final_skill",
];

fn metrics(s: &RunSummary) -> [Option<f64>; 6] {
    [
        Some(s.final_precision),
        Some(s.final_recall),
        Some(s.fusion.run_noise_fraction),
        Some(s.fusion.baseline_noise_fraction),
        s.mean_weight_rank_correlation,
        Some(s.final_skill),
    ]
}

/// Mean and sample standard deviation of the defined values.
fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Some((m, var.sqrt()))
}

/// Runs every grid point for every seed of `cfg`. Writes `sweep.csv` (one
/// row per point and seed, then `mean` and `std` rows per point) and
/// `sweep.json` with the full run summaries.
pub fn cmd_sweep(cfg: &ExperimentConfig, grid: &Grid, threads: usize) -> Result<SweepReport> {
    cfg.validate()?;
    let configs: Vec<ExperimentConfig> = grid
        .points()
        .iter()
        .map(|p| {
            let mut c = cfg.clone();
            p.iter().for_each(|v| v.apply(&mut c));
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<_>>()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::io(&cfg.output_dir, e))?;

    let jobs: Vec<(usize, u64)> = (0..configs.len()).flat_map(|p| cfg.seeds.iter().map(move |&s| (p, s))).collect();
    let runs = with_threads(threads, || {
        jobs.par_iter()
            .map(|&(point, seed)| {
                let c = &configs[point];
                let r = run_training_simulation(&c.world, &c.mining, c.indicator, c.iterations, c.log_stride, seed)?;
                Ok(SweepRun { point, summary: r.summary })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let report = SweepReport { runs };

    let path = cfg.output_dir.join("sweep.csv");
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    write_sweep_csv(&report, &configs, BufWriter::new(file)).map_err(|e| CliError::io(&path, e))?;
    let json = cfg.output_dir.join("sweep.json");
    write_json(&json, &report).map_err(|e| CliError::io(&json, e))?;
    Ok(report)
}

pub fn write_sweep_csv<W: std::io::Write>(
    report: &SweepReport,
    configs: &[ExperimentConfig],
    out: W,
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (p, c) in configs.iter().enumerate() {
        let m = &c.mining;
        let params = [
            m.lambda.to_string(),
            m.lambda_prime.to_string(),
            m.delta.to_string(),
            m.burnin_steps.to_string(),
            m.gamma.to_string(),
            c.indicator.to_string(),
        ];
        let runs: Vec<&RunSummary> = report.runs.iter().filter(|r| r.point == p).map(|r| &r.summary).collect();
        for s in &runs {
            let mut rec = vec![p.to_string(), "run".into(), s.seed.to_string()];
            rec.extend(params.iter().cloned());
            rec.extend(metrics(s).map(opt));
            w.write_record(&rec)?;
        }
        let stats: Vec<Option<(f64, f64)>> =
            (0..6).map(|k| mean_std(&runs.iter().filter_map(|s| metrics(s)[k]).collect::<Vec<_>>())).collect();
        for (label, pick) in [("mean", 0), ("std", 1)] {
            let mut rec = vec![p.to_string(), label.into(), String::new()];
            rec.extend(params.iter().cloned());
            rec.extend(stats.iter().map(|st| opt(st.map(|(m, s)| if pick == 0 { m } else { s }))));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
