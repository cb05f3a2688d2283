//! Grid sweeps over the committee count.

use std::path::PathBuf;

use clap::ValueEnum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use shardcalc::simulate::{estimate_delta, SimulationPlan};
use shardcalc::sizing::{
    min_committee_size, min_committee_size_with, min_size_by, size_bracket, MinCommitteeSize,
    MinSizeOptions, SizingModel,
};
use shardcalc::{CommitteeLayout, Method, Rate};

use crate::args::{Model, SweepArgs};
use crate::commands::{evaluate, flags, Inputs};
use crate::table::{Cell, Format, Table};
use crate::{CliError, Rendered};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum SweepMode {
    /// `delta` per method at `N = n K + r` for each `K`.
    #[value(name = "sweep-K")]
    #[serde(rename = "sweep-K")]
    SweepK,
    /// Smallest committee size per method for each `K`.
    #[value(name = "sweep-n")]
    #[serde(rename = "sweep-n")]
    SweepN,
}

/// A rate written as a JSON number or as a string such as `"1/3"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateSpec {
    Number(f64),
    Text(String),
}

impl RateSpec {
    fn rate(&self) -> Result<Rate, CliError> {
        let r = match self {
            RateSpec::Number(v) => Rate::new(*v),
            RateSpec::Text(s) => s.parse(),
        };
        r.map_err(|e| CliError::Usage(format!("config: {e}")))
    }
}

impl From<Rate> for RateSpec {
    fn from(r: Rate) -> Self {
        RateSpec::Text(r.to_string())
    }
}

/// Inclusive committee-count range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KRange {
    pub start: u64,
    pub end: u64,
    #[serde(default = "one")]
    pub step: u64,
}

fn one() -> u64 {
    1
}

impl KRange {
    fn values(&self) -> Result<Vec<u64>, CliError> {
        if self.step == 0 || self.start == 0 || self.start > self.end {
            return Err(CliError::Usage(format!(
                "empty committee range {}..={} step {}",
                self.start, self.end, self.step
            )));
        }
        Ok((self.start..=self.end).step_by(self.step as usize).collect())
    }
}

impl std::str::FromStr for KRange {
    type Err = CliError;

    /// `start:end[:step]`.
    fn from_str(s: &str) -> Result<Self, CliError> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| CliError::Usage(format!("bad committee range {s:?}")))
        };
        match parts.as_slice() {
            [a, b] => Ok(KRange { start: num(a)?, end: num(b)?, step: 1 }),
            [a, b, c] => Ok(KRange { start: num(a)?, end: num(b)?, step: num(c)? }),
            _ => Err(CliError::Usage(format!("bad committee range {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub samples: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Must equal [`SCHEMA_VERSION`].
    pub schema: u32,
    pub mode: SweepMode,
    /// Node count for `sweep-K`.
    #[serde(default)]
    pub nodes: Option<u64>,
    pub committees: KRange,
    pub threshold: RateSpec,
    pub adversary_frac: RateSpec,
    /// Target for `sweep-n`.
    #[serde(default)]
    pub delta_target: Option<RateSpec>,
    pub methods: Vec<Method>,
    /// Models simulated by `monte-carlo`; average when empty.
    #[serde(default)]
    pub adversary_modes: Vec<Model>,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloConfig>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub format: Option<Format>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: SweepConfig =
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        if config.schema != SCHEMA_VERSION {
            return Err(CliError::Usage(format!(
                "config schema {} is not supported (expected {SCHEMA_VERSION})",
                config.schema
            )));
        }
        Ok(config)
    }

    fn from_flags(args: &SweepArgs) -> Result<Self, CliError> {
        let missing = |flag: &str| CliError::Usage(format!("--{flag} is required without --config"));
        let monte_carlo = match (args.samples, args.seed) {
            (None, None) => None,
            (samples, seed) => Some(MonteCarloConfig {
                samples: samples.unwrap_or(1_000_000),
                seed: seed.unwrap_or(0),
            }),
        };
        Ok(SweepConfig {
            schema: SCHEMA_VERSION,
            mode: args.mode.ok_or_else(|| missing("mode"))?,
            nodes: args.nodes,
            committees: args.k_range.as_deref().ok_or_else(|| missing("k-range"))?.parse()?,
            threshold: args.threshold.ok_or_else(|| missing("threshold"))?.into(),
            adversary_frac: args.adversary_frac.ok_or_else(|| missing("adversary-frac"))?.into(),
            delta_target: args.delta.map(Into::into),
            methods: args.methods.clone(),
            adversary_modes: args.adversary_modes.clone(),
            monte_carlo,
            workers: None,
            format: None,
            output: None,
        })
    }
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Rendered, CliError> {
    let mut config = match &args.config {
        Some(path) => SweepConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => SweepConfig::from_flags(args)?,
    };
    if let Some(w) = args.workers {
        config.workers = Some(w);
    }
    let table = run_sweep(&config)?;
    let format = args.format.or(config.format).unwrap_or_default();
    Ok(Rendered {
        text: table.render(format)?,
        path: args.output.clone().or(config.output.clone()),
    })
}

/// A method's column value and its flag text.
type Evaluated = (Cell, String);

fn failed(e: CliError) -> Evaluated {
    (Cell::Empty, format!("error: {e}"))
}

pub fn run_sweep(config: &SweepConfig) -> Result<Table, CliError> {
    let ks = config.committees.values()?;
    if config.methods.is_empty() {
        return Err(CliError::Usage("no methods requested".into()));
    }
    let threshold = config.threshold.rate()?;
    let p = config.adversary_frac.rate()?;
    let workers = config.workers.unwrap_or(1);
    if workers == 0 {
        return Err(CliError::Usage("workers must be positive".into()));
    }
    let modes = if config.adversary_modes.is_empty() {
        vec![Model::Average]
    } else {
        config.adversary_modes.clone()
    };
    let wants_mc = config.methods.contains(&Method::MonteCarlo);
    if wants_mc && config.monte_carlo.is_none() {
        return Err(CliError::Usage("monte-carlo needs samples and a seed".into()));
    }
    if let Some(mc) = &config.monte_carlo {
        if mc.samples == 0 {
            return Err(CliError::Usage("monte-carlo needs at least one sample".into()));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Io(format!("worker pool: {e}")))?;

    match config.mode {
        SweepMode::SweepK => {
            let nodes = config
                .nodes
                .ok_or_else(|| CliError::Usage("sweep-K needs nodes".into()))?;
            if ks.iter().any(|&k| k > nodes) {
                return Err(CliError::Usage(format!("committee counts must not exceed {nodes} nodes")));
            }
            let mut value_columns = Vec::new();
            for &m in &config.methods {
                if m == Method::MonteCarlo {
                    for mode in &modes {
                        let name = format!("monte-carlo-{}", model_name(*mode));
                        value_columns.push(name.clone());
                        value_columns.push(format!("{name}-se"));
                    }
                } else {
                    value_columns.push(m.tag().to_string());
                }
            }
            let rows: Vec<Vec<Cell>> = pool.install(|| {
                ks.par_iter()
                    .map(|&k| sweep_k_row(config, nodes, k, threshold, p, &modes))
                    .collect()
            });
            Ok(assemble(value_columns, rows))
        }
        SweepMode::SweepN => {
            if wants_mc {
                return Err(CliError::Usage("monte-carlo is not available in sweep-n".into()));
            }
            let target = config
                .delta_target
                .as_ref()
                .ok_or_else(|| CliError::Usage("sweep-n needs delta_target".into()))?
                .rate()?;
            let mut value_columns: Vec<String> =
                config.methods.iter().map(|m| m.tag().to_string()).collect();
            value_columns.push("bracket-lower".into());
            value_columns.push("bracket-upper".into());
            let rows: Vec<Vec<Cell>> = pool.install(|| {
                ks.par_iter()
                    .map(|&k| sweep_n_row(config, k, target, threshold, p))
                    .collect()
            });
            Ok(assemble(value_columns, rows))
        }
    }
}

fn model_name(m: Model) -> &'static str {
    match m {
        Model::Average => "average",
        Model::Exact => "exact",
    }
}

/// `K, n, r`, the value columns, then a flag column for every value column
/// except standard errors and bracket ends.
fn assemble(values: Vec<String>, rows: Vec<Vec<Cell>>) -> Table {
    let mut columns: Vec<String> = ["K", "n", "r"].iter().map(|s| s.to_string()).collect();
    let flagged: Vec<String> = values
        .iter()
        .filter(|c| !c.ends_with("-se") && !c.starts_with("bracket-"))
        .map(|c| format!("{c}-flags"))
        .collect();
    columns.extend(values);
    columns.extend(flagged);
    let mut table = Table::new(columns);
    for row in rows {
        table.push(row);
    }
    table
}

fn sweep_k_row(
    config: &SweepConfig,
    nodes: u64,
    k: u64,
    threshold: Rate,
    p: Rate,
    modes: &[Model],
) -> Vec<Cell> {
    let mut cells = vec![Cell::from(k), Cell::from(nodes / k), Cell::from(nodes % k)];
    let mut row_flags = Vec::new();
    let layout = match CommitteeLayout::from_split(nodes, k) {
        Ok(l) => l,
        Err(e) => unreachable!("validated committee count: {e}"),
    };
    let inputs = Inputs {
        layout,
        frac: Some(p),
        count: None,
        threshold,
    };
    for &m in &config.methods {
        if m == Method::MonteCarlo {
            let mc = config.monte_carlo.as_ref().expect("validated");
            for &mode in modes {
                let estimate = inputs.query(mode).and_then(|query| {
                    let plan = SimulationPlan {
                        query,
                        samples: mc.samples,
                        // Each committee count gets its own seed.
                        seed: mc.seed.wrapping_add(k),
                        workers: 1,
                    };
                    Ok(estimate_delta(&plan)?)
                });
                match estimate {
                    Ok(e) => {
                        cells.push(e.delta_hat.into());
                        cells.push(e.std_error.into());
                        row_flags.push(String::new());
                    }
                    Err(e) => {
                        cells.push(Cell::Empty);
                        cells.push(Cell::Empty);
                        row_flags.push(failed(e).1);
                    }
                }
            }
        } else {
            let (cell, flag) = match evaluate(&inputs, m) {
                Ok(r) => (Cell::from(r.delta()), flags(&r)),
                Err(e) => failed(e),
            };
            cells.push(cell);
            row_flags.push(flag);
        }
    }
    cells.extend(row_flags.into_iter().map(Cell::from));
    cells
}

fn size_solve(k: u64, target: Rate, threshold: Rate, p: Rate, m: Method) -> Result<MinCommitteeSize, CliError> {
    let solved = match m {
        Method::ExactBinomial => min_committee_size(k, target, threshold, p, SizingModel::Average)?,
        Method::ExactHypergeometric => min_committee_size(k, target, threshold, p, SizingModel::Exact)?,
        Method::Asymptotic => {
            let opts = MinSizeOptions {
                dp_node_cap: 0,
                ..MinSizeOptions::default()
            };
            min_committee_size_with(k, target, threshold, p, SizingModel::Exact, &opts)?
        }
        Method::MonteCarlo => unreachable!("rejected before the sweep"),
        bound => min_size_by(MinSizeOptions::default().max_size, target.value(), |n| {
            let inputs = Inputs {
                layout: CommitteeLayout::new(vec![n; k as usize])?,
                frac: Some(p),
                count: None,
                threshold,
            };
            let r = evaluate(&inputs, bound).map_err(|e| match e {
                CliError::Core(c) => c,
                other => shardcalc::Error::Numeric(other.to_string()),
            })?;
            Ok((r.delta(), bound))
        })?,
    };
    Ok(solved)
}

fn sweep_n_row(config: &SweepConfig, k: u64, target: Rate, threshold: Rate, p: Rate) -> Vec<Cell> {
    let base = size_solve(k, target, threshold, p, Method::ExactBinomial);
    let mut cells = vec![
        Cell::from(k),
        base.as_ref().ok().map(|s| s.n).into(),
        Cell::from(0u64),
    ];
    let mut row_flags = Vec::new();
    for &m in &config.methods {
        let solved = if m == Method::ExactBinomial {
            base.as_ref().map(Clone::clone).map_err(|e| CliError::Io(e.to_string()))
        } else {
            size_solve(k, target, threshold, p, m)
        };
        let (cell, flag) = match solved {
            // Flags a fallback, e.g. the DP handing over to the asymptotic.
            Ok(s) if s.method != m => (Cell::from(s.n), s.method.tag().to_string()),
            Ok(s) => (Cell::from(s.n), String::new()),
            Err(e) => failed(e),
        };
        cells.push(cell);
        row_flags.push(flag);
    }
    match size_bracket(k, target, threshold, p) {
        Ok(b) => {
            cells.push(b.lower.into());
            cells.push(b.upper.into());
        }
        Err(_) => {
            cells.push(Cell::Empty);
            cells.push(Cell::Empty);
        }
    }
    cells.extend(row_flags.into_iter().map(Cell::from));
    cells
}
