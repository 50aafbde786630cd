//! Hyperparameter sweeps: a cross-product grid over a base config, one
//! results directory per cell, resumable by directory presence.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::TransferMode;
use crate::error::{Error, Result};
use crate::variant::AgentVariant;

use super::config::RunConfig;
use super::output::{emit_run_dir, parse_run_csv, write_aggregate_csv, write_svg};
use super::run::{aggregate, run, EpochRecord};

/// Search sets; an empty list keeps the base config's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub learning_rate: Vec<f64>,
    pub sync_period: Vec<u64>,
    pub eps_final: Vec<f64>,
    pub capacity: Vec<usize>,
    pub variant: Vec<String>,
    pub mode: Vec<String>,
    pub seed: Vec<u64>,
}

impl SweepGrid {
    pub fn load(path: &Path) -> Result<SweepGrid> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading grid {}", path.display()), e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// All configurations in the cross product (seeds excluded; those are
    /// expanded per cell).
    pub fn cells(&self, base: &RunConfig) -> Result<Vec<RunConfig>> {
        let lrs: Vec<Option<f64>> = if self.learning_rate.is_empty() {
            vec![base.learning_rate]
        } else {
            self.learning_rate.iter().map(|&lr| Some(lr)).collect()
        };
        let taus = or_base(&self.sync_period, base.sync_period);
        let eps = or_base(&self.eps_final, base.eps_final);
        let caps = or_base(&self.capacity, base.variant.capacity());
        let variants = if self.variant.is_empty() {
            vec![base.variant.name().to_string()]
        } else {
            self.variant.clone()
        };
        let modes = if self.mode.is_empty() {
            vec![base.mode]
        } else {
            self.mode
                .iter()
                .map(|m| parse_mode(m))
                .collect::<Result<Vec<_>>>()?
        };

        let mut cells = Vec::new();
        for &mode in &modes {
            for variant_name in &variants {
                for &capacity in &caps {
                    let variant = make_variant(variant_name, capacity, base.variant)?;
                    for &learning_rate in &lrs {
                        for &sync_period in &taus {
                            for &eps_final in &eps {
                                let mut c = base.clone();
                                c.mode = mode;
                                c.variant = variant;
                                c.learning_rate = learning_rate;
                                c.sync_period = sync_period;
                                c.eps_final = eps_final;
                                c.validate()?;
                                cells.push(c);
                            }
                        }
                    }
                }
            }
        }
        Ok(cells)
    }

    pub fn seeds(&self, base: &RunConfig) -> Vec<u64> {
        if self.seed.is_empty() {
            vec![base.seed]
        } else {
            self.seed.clone()
        }
    }
}

fn or_base<T: Copy>(set: &[T], base: T) -> Vec<T> {
    if set.is_empty() {
        vec![base]
    } else {
        set.to_vec()
    }
}

fn parse_mode(name: &str) -> Result<TransferMode> {
    match name {
        "positive" => Ok(TransferMode::Positive),
        "negative" => Ok(TransferMode::Negative),
        other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
    }
}

fn make_variant(name: &str, capacity: usize, base: AgentVariant) -> Result<AgentVariant> {
    match name {
        "standard" => Ok(AgentVariant::Standard { capacity }),
        "half" => Ok(AgentVariant::Half { capacity }),
        "option-heads" => Ok(AgentVariant::OptionHeads {
            capacity,
            heads: match base {
                AgentVariant::OptionHeads { heads, .. } => heads,
                _ => 2,
            },
        }),
        other => Err(Error::InvalidConfig(format!("unknown variant {other:?}"))),
    }
}

pub struct SweepReport {
    pub completed: Vec<PathBuf>,
    pub skipped: Vec<PathBuf>,
    pub failed: Vec<(PathBuf, String)>,
}

/// Execute the whole grid under `out_dir`. A cell-seed whose run.csv already
/// exists is skipped, so interrupted sweeps resume where they stopped.
/// Failing cells are recorded and the sweep continues.
pub fn sweep(base: &RunConfig, grid: &SweepGrid, out_dir: &Path) -> Result<SweepReport> {
    let cells = grid.cells(base)?;
    let seeds = grid.seeds(base);
    let mut report = SweepReport {
        completed: Vec::new(),
        skipped: Vec::new(),
        failed: Vec::new(),
    };
    for cell in &cells {
        let cell_dir = out_dir.join(cell.cell_name());
        let mut cell_records: Vec<Vec<EpochRecord>> = Vec::new();
        for &seed in &seeds {
            let mut config = cell.clone();
            config.seed = seed;
            let run_dir = cell_dir.join(format!("seed{seed}"));
            let csv_path = run_dir.join("run.csv");
            if csv_path.exists() {
                report.skipped.push(run_dir.clone());
                if let Ok(text) = std::fs::read_to_string(&csv_path) {
                    if let Ok(parsed) = parse_run_csv(&text) {
                        cell_records.push(
                            parsed
                                .into_iter()
                                .map(|(epoch, avg_score)| EpochRecord {
                                    epoch,
                                    avg_score,
                                    episodes: (config.validation_steps
                                        / crate::env::EPISODE_STEPS as u64)
                                        as usize,
                                    duration_secs: 0.0,
                                    supervisor_accuracy: None,
                                })
                                .collect(),
                        );
                    }
                }
                continue;
            }
            match run(&config) {
                Ok(records) => {
                    emit_run_dir(&run_dir, &config, &records)?;
                    cell_records.push(records);
                    report.completed.push(run_dir);
                }
                Err(e) => {
                    report.failed.push((run_dir, e.to_string()));
                }
            }
        }
        if cell_records.len() >= 2 {
            let curve = aggregate(&cell_records)?;
            write_aggregate_csv(&cell_dir.join("aggregate.csv"), &curve)?;
            write_svg(
                &cell_dir.join("curve.svg"),
                &[(cell.cell_name(), curve)],
                &cell.cell_name(),
            )?;
        }
    }
    if !report.failed.is_empty() {
        let mut text = String::from("run_dir,error\n");
        for (dir, err) in &report.failed {
            text.push_str(&format!("{},{}\n", dir.display(), err.replace(',', ";")));
        }
        std::fs::write(out_dir.join("failures.csv"), text)
            .map_err(|e| Error::io("writing failures.csv", e))?;
    }
    Ok(report)
}
