//! Parameter sweeps: run the cross product of sweep values and seeds,
//! aggregate final validation accuracy as mean and standard deviation.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::config::ExperimentConfig;
use crate::runner::{run_experiment, RunSummary};
use crate::CliError;

/// Which knob the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    /// Passive client count.
    L,
    /// Quantization bits.
    B,
    /// Gradient-transmission SNR in dB.
    SnrDb,
}

impl SweepVar {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVar::L => "L",
            SweepVar::B => "B",
            SweepVar::SnrDb => "snr_db",
        }
    }
}

impl FromStr for SweepVar {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L" => Ok(SweepVar::L),
            "B" => Ok(SweepVar::B),
            "snr_db" => Ok(SweepVar::SnrDb),
            other => Err(format!("unknown sweep variable '{other}' (expected L, B, or snr_db)")),
        }
    }
}

/// A parsed `--sweep VAR=v1,v2,...` argument.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub var: SweepVar,
    pub values: Vec<f64>,
}

impl FromStr for SweepSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (var, values) = s
            .split_once('=')
            .ok_or_else(|| "expected VAR=v1,v2,...".to_string())?;
        let var: SweepVar = var.trim().parse()?;
        let values: Vec<f64> = values
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad sweep value '{v}': {e}")))
            .collect::<Result<_, _>>()?;
        if values.is_empty() {
            return Err("sweep needs at least one value".into());
        }
        for &v in &values {
            let integral = v.fract() == 0.0 && v >= 0.0;
            match var {
                SweepVar::L | SweepVar::B if !integral => {
                    return Err(format!("{} values must be non-negative integers", var.as_str()));
                }
                _ => {}
            }
        }
        Ok(SweepSpec { var, values })
    }
}

/// Parses `--seeds s1,s2,...`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let seeds: Vec<u64> = s
        .split(',')
        .map(|v| v.trim().parse::<u64>().map_err(|e| format!("bad seed '{v}': {e}")))
        .collect::<Result<_, _>>()?;
    if seeds.is_empty() {
        return Err("need at least one seed".into());
    }
    Ok(seeds)
}

/// One (value, seed) run.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub value: f64,
    pub seed: u64,
    pub final_val_acc_pct: f64,
    pub final_train_loss: f64,
    pub total_symbols: u64,
}

/// Aggregated statistics for one knob value across its seeds.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub n_seeds: usize,
    pub mean_val_acc_pct: f64,
    pub std_val_acc_pct: f64,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub var: SweepVar,
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
}

fn apply(var: SweepVar, value: f64, config: &mut ExperimentConfig) {
    match var {
        SweepVar::L => config.passive = value as usize,
        SweepVar::B => config.bits = value as u32,
        SweepVar::SnrDb => config.snr_db = value,
    }
}

/// Runs the sweep cross product sequentially; each cell re-validates its
/// own derived configuration.
pub fn sweep(template: &ExperimentConfig, spec: &SweepSpec, seeds: &[u64]) -> Result<SweepTable, CliError> {
    if seeds.is_empty() {
        return Err(CliError::Config("sweep needs at least one seed".into()));
    }
    let mut cells = Vec::with_capacity(spec.values.len() * seeds.len());
    let mut rows = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let mut accs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut config = template.clone();
            apply(spec.var, value, &mut config);
            config.seed = seed;
            config.validate()?;
            let summary: RunSummary = run_experiment(&config)?;
            let acc = summary
                .footer
                .final_val_acc_pct
                .ok_or_else(|| CliError::Internal("sweep cell produced no accuracy".into()))?;
            accs.push(acc);
            cells.push(SweepCell {
                value,
                seed,
                final_val_acc_pct: acc,
                final_train_loss: summary.footer.final_train_loss.unwrap_or(f64::NAN),
                total_symbols: summary.footer.ledger_symbols.unwrap_or(0),
            });
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let std = if accs.len() > 1 {
            (accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (accs.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        rows.push(SweepRow {
            value,
            n_seeds: accs.len(),
            mean_val_acc_pct: mean,
            std_val_acc_pct: std,
        });
    }
    Ok(SweepTable {
        var: spec.var,
        rows,
        cells,
    })
}

/// Aggregated table as CSV.
pub fn render_table(table: &SweepTable) -> String {
    let mut out = String::from("variable,value,n_seeds,mean_val_acc_pct,std_val_acc_pct\n");
    for row in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            table.var.as_str(),
            row.value,
            row.n_seeds,
            row.mean_val_acc_pct,
            row.std_val_acc_pct
        )
        .expect("writing to String cannot fail");
    }
    out
}
