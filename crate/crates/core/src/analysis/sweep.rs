use std::path::Path;

use log::{info, warn};

use crate::error::{Error, Result};
use crate::train::{train, write_manifest, RunMetrics, TrainConfig};

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_HEADER: &str = "q,n_minus_q,status,iteration,epoch,train_loss,eval_loss,rho_T,specnorm_WS,active";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRun {
    pub split: usize,
    pub hidden: usize,
    /// Metrics of a finished run, or the error that stopped it.
    pub outcome: std::result::Result<RunMetrics, String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepTable {
    pub runs: Vec<SweepRun>,
}

impl SweepTable {
    /// Combined CSV keyed by `(q, n − q)`, without wall-clock times. A failed run
    /// contributes a single row with status `failed`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SWEEP_HEADER}\n");
        for run in &self.runs {
            let key = format!("{},{}", run.split, run.hidden - run.split);
            match &run.outcome {
                Ok(metrics) => {
                    for r in &metrics.records {
                        out.push_str(&format!("{key},ok,{}\n", r.csv_row(false)));
                    }
                }
                Err(_) => out.push_str(&format!("{key},failed,,,,,,,\n")),
            }
        }
        out
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.outcome.is_err()).count()
    }
}

/// Configs must agree on every key except `split`, `hidden` and `out`.
pub fn validate_sweep(configs: &[TrainConfig]) -> Result<()> {
    let Some(first) = configs.first() else {
        return Err(Error::Config("sweep needs at least one config".into()));
    };
    let strip = |c: &TrainConfig| TrainConfig { split: 0, hidden: 0, out: None, ..c.clone() };
    let base = strip(first);
    for (i, c) in configs.iter().enumerate() {
        c.validate()?;
        if strip(c) != base {
            return Err(Error::Config(format!("sweep config {i} differs from config 0 outside split and hidden")));
        }
    }
    Ok(())
}

/// Directory name of one sweep run.
pub fn run_dir_name(cfg: &TrainConfig) -> String {
    format!("q{}_s{}", cfg.split, cfg.hidden - cfg.split)
}

/// Trains every config in order. With `out`, each run writes into its own
/// subdirectory and the combined table goes to `sweep.csv`.
pub fn sweep(configs: &[TrainConfig], out: Option<&Path>) -> Result<SweepTable> {
    validate_sweep(configs)?;
    let mut table = SweepTable::default();
    for cfg in configs {
        let dir = out.map(|d| d.join(run_dir_name(cfg)));
        if let Some(dir) = &dir {
            write_manifest(dir, "sweep", cfg, None)?;
        }
        info!("sweep run q = {}, n = {}", cfg.split, cfg.hidden);
        let outcome = match train(cfg.clone(), dir.as_deref()) {
            Ok((metrics, _)) => Ok(metrics),
            Err(e) => {
                warn!("sweep run q = {}, n = {} failed: {e}", cfg.split, cfg.hidden);
                Err(e.to_string())
            }
        };
        table.runs.push(SweepRun { split: cfg.split, hidden: cfg.hidden, outcome });
    }
    if let Some(dir) = out {
        std::fs::write(dir.join(SWEEP_FILE), table.to_csv())?;
    }
    Ok(table)
}
