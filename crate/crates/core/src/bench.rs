//! Replicated experiments and their summary statistics.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annealer::{AnnealError, AnnealParams};
use crate::baselines::{classic_sa, hpfs, run_variant, ClassicParams, VariantMode};
use crate::model::{ModelError, Scenario, Schedule};
use crate::oracle::{exact_solve, OracleLimits};
use crate::scenario::{generate, load_scenario, FormatError, GeneratorConfig};

/// One-tailed 0.05 critical values of Student's t for 1..=30 degrees of freedom.
const T_CRIT_05: [f64; 30] = [
    6.314, 2.920, 2.353, 2.132, 2.015, 1.943, 1.895, 1.860, 1.833, 1.812, 1.796, 1.782, 1.771,
    1.761, 1.753, 1.746, 1.740, 1.734, 1.729, 1.725, 1.721, 1.717, 1.714, 1.711, 1.708, 1.706,
    1.703, 1.701, 1.699, 1.697,
];
/// One-tailed 0.05 quantile of the standard normal.
const Z_CRIT_05: f64 = 1.6449;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample {0} needs at least two values")]
    TooFew(&'static str),
    #[error("sample {0} contains a non-finite value")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// One-tailed test of mean(a) > mean(b) at the 0.05 level.
    pub significant: bool,
}

/// Critical value for the one-tailed 0.05 test; fractional degrees of
/// freedom are rounded down.
pub fn t_critical(df: f64) -> f64 {
    if !(df.is_finite()) || df > 30.0 {
        return Z_CRIT_05;
    }
    let k = (df.floor() as usize).clamp(1, 30);
    T_CRIT_05[k - 1]
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance t statistic with Welch-Satterthwaite degrees of freedom.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult, StatsError> {
    for (name, xs) in [("a", a), ("b", b)] {
        if xs.len() < 2 {
            return Err(StatsError::TooFew(name));
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(StatsError::NonFinite(name));
        }
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let t = match ma.partial_cmp(&mb) {
            Some(std::cmp::Ordering::Greater) => f64::INFINITY,
            Some(std::cmp::Ordering::Less) => f64::NEG_INFINITY,
            _ => 0.0,
        };
        return Ok(WelchResult {
            t,
            df: na + nb - 2.0,
            significant: t > 0.0,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchResult {
        t,
        df,
        significant: t > t_critical(df),
    })
}

/// Profit per unit of consumed memory and per unit of consumed energy,
/// summed over all orbits. Both are 0 for an empty schedule.
pub fn resource_ratios(schedule: &Schedule, scenario: &Scenario) -> (f64, f64) {
    let usage = schedule.usage(scenario);
    let memory: f64 = usage.iter().map(|u| u.memory).sum();
    let energy: f64 = usage.iter().map(|u| u.energy).sum();
    let profit = schedule.profit() as f64;
    let ratio = |d: f64| if d > 0.0 { profit / d } else { 0.0 };
    (ratio(memory), ratio(energy))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "ASA-DTC")]
    AsaDtc,
    #[serde(rename = "ASA-STC")]
    AsaStc,
    #[serde(rename = "ASA-NONTC")]
    AsaNontc,
    #[serde(rename = "CLASSIC-SA")]
    ClassicSa,
    #[serde(rename = "HPFS")]
    Hpfs,
    #[serde(rename = "ORACLE")]
    Oracle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::AsaDtc,
        Algorithm::AsaStc,
        Algorithm::AsaNontc,
        Algorithm::ClassicSa,
        Algorithm::Hpfs,
        Algorithm::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::AsaDtc => "ASA-DTC",
            Self::AsaStc => "ASA-STC",
            Self::AsaNontc => "ASA-NONTC",
            Self::ClassicSa => "CLASSIC-SA",
            Self::Hpfs => "HPFS",
            Self::Oracle => "ORACLE",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name().eq_ignore_ascii_case(name))
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Anneal(#[from] AnnealError),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSource {
    /// Path of a scenario document.
    File(PathBuf),
    /// Generator configuration. With `vary_seed`, replica `k` uses generator
    /// seed `config.seed + k`.
    Generate {
        config: GeneratorConfig,
        #[serde(default)]
        vary_seed: bool,
    },
}

fn default_replicas() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSource,
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Reference for IMP and the t-test; defaults to the first algorithm.
    #[serde(default)]
    pub reference: Option<Algorithm>,
    #[serde(default)]
    pub anneal: AnnealParams,
    #[serde(default)]
    pub classic: ClassicParams,
    /// Report wall time. Off by default so that outputs are reproducible byte for byte.
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.replicas == 0 {
            return Err(BenchError::Config("replicas must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(BenchError::Config("at least one algorithm is required".into()));
        }
        if let Some(r) = self.reference {
            if !self.algorithms.contains(&r) {
                return Err(BenchError::Config(format!("reference {r} is not among the algorithms")));
            }
        }
        self.anneal.validate()?;
        Ok(())
    }

    pub fn reference(&self) -> Algorithm {
        self.reference.unwrap_or(self.algorithms[0])
    }
}

/// Outcome of one algorithm on one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaResult {
    pub algorithm: Algorithm,
    pub replica: usize,
    pub seed: u64,
    /// `None` when the algorithm could not run (oracle over its limits).
    pub schedule: Option<Schedule>,
    pub profit: u64,
    pub finished: usize,
    pub memory: f64,
    pub energy: f64,
    pub profit_memory: f64,
    pub profit_energy: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub algorithm: Algorithm,
    pub available: bool,
    pub runs: usize,
    pub mean_profit: f64,
    pub mean_finished: f64,
    pub sd_profit: f64,
    pub mean_wall_seconds: f64,
    pub profit_memory_ratio: f64,
    pub profit_energy_ratio: f64,
    pub imp: f64,
    pub t: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub replicas: Vec<ReplicaResult>,
    pub reference: Algorithm,
    pub timing: bool,
}

fn scenario_for(source: &ScenarioSource, replica: usize, fixed: Option<&Scenario>) -> Result<Scenario, BenchError> {
    match (source, fixed) {
        (_, Some(s)) => Ok(s.clone()),
        (ScenarioSource::Generate { config, vary_seed: true }, None) => {
            let cfg = GeneratorConfig {
                seed: config.seed.wrapping_add(replica as u64),
                ..config.clone()
            };
            Ok(generate(&cfg)?)
        }
        (ScenarioSource::Generate { config, .. }, None) => Ok(generate(config)?),
        (ScenarioSource::File(path), None) => Ok(load_scenario(std::fs::File::open(path)?)?),
    }
}

/// Runs one algorithm once.
pub fn solve_once(
    scenario: &Scenario,
    algorithm: Algorithm,
    seed: u64,
    anneal: &AnnealParams,
    classic: &ClassicParams,
) -> Result<Option<Schedule>, AnnealError> {
    let params = anneal.clone().with_seed(seed);
    Ok(Some(match algorithm {
        Algorithm::AsaDtc => run_variant(scenario, VariantMode::Dtc, &params)?.best,
        Algorithm::AsaStc => run_variant(scenario, VariantMode::Stc, &params)?.best,
        Algorithm::AsaNontc => run_variant(scenario, VariantMode::Nontc, &params)?.best,
        Algorithm::ClassicSa => {
            let p = ClassicParams {
                rng_seed: seed,
                ..classic.clone()
            };
            classic_sa(scenario, &p)?.best
        }
        Algorithm::Hpfs => hpfs(scenario),
        Algorithm::Oracle => match exact_solve(scenario, &OracleLimits::default()) {
            Ok(sol) => sol.schedule,
            Err(_) => return Ok(None),
        },
    }))
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        0.0
    } else {
        mean_var(xs).1.sqrt()
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Runs every algorithm on every replica and aggregates the results.
///
/// Replicas run in parallel; results are reduced in (algorithm, replica)
/// order so the output does not depend on scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, BenchError> {
    config.validate()?;
    let fixed = match &config.scenario {
        ScenarioSource::Generate { vary_seed: true, .. } => None,
        source => Some(scenario_for(source, 0, None)?),
    };
    let scenarios: Vec<Scenario> = (0..config.replicas)
        .map(|k| scenario_for(&config.scenario, k, fixed.as_ref()))
        .collect::<Result<_, _>>()?;

    let jobs: Vec<(Algorithm, usize)> = config
        .algorithms
        .iter()
        .flat_map(|&a| (0..config.replicas).map(move |k| (a, k)))
        .collect();
    let results: Vec<ReplicaResult> = jobs
        .par_iter()
        .map(|&(algorithm, replica)| {
            let scenario = &scenarios[replica];
            let seed = config.base_seed.wrapping_add(replica as u64);
            let started = Instant::now();
            let schedule = solve_once(scenario, algorithm, seed, &config.anneal, &config.classic)?;
            let wall_seconds = started.elapsed().as_secs_f64();
            let (profit, finished, memory, energy, pm, pe) = match &schedule {
                Some(s) => {
                    let usage = s.usage(scenario);
                    let (pm, pe) = resource_ratios(s, scenario);
                    (
                        s.profit(),
                        s.finished_tasks(scenario),
                        usage.iter().map(|u| u.memory).sum(),
                        usage.iter().map(|u| u.energy).sum(),
                        pm,
                        pe,
                    )
                }
                None => (0, 0, 0.0, 0.0, 0.0, 0.0),
            };
            Ok(ReplicaResult {
                algorithm,
                replica,
                seed,
                schedule,
                profit,
                finished,
                memory,
                energy,
                profit_memory: pm,
                profit_energy: pe,
                wall_seconds,
            })
        })
        .collect::<Result<_, AnnealError>>()?;

    let reference = config.reference();
    let profits_of = |a: Algorithm| -> Vec<f64> {
        results
            .iter()
            .filter(|r| r.algorithm == a && r.schedule.is_some())
            .map(|r| r.profit as f64)
            .collect()
    };
    let ref_profits = profits_of(reference);
    let ref_mean = mean(&ref_profits);
    let rows = config
        .algorithms
        .iter()
        .map(|&a| {
            let runs: Vec<&ReplicaResult> = results
                .iter()
                .filter(|r| r.algorithm == a && r.schedule.is_some())
                .collect();
            let profits: Vec<f64> = runs.iter().map(|r| r.profit as f64).collect();
            let pick = |f: fn(&ReplicaResult) -> f64| mean(&runs.iter().map(|r| f(r)).collect::<Vec<_>>());
            let mean_profit = mean(&profits);
            let available = !runs.is_empty();
            let test = welch_t(&profits, &ref_profits).ok();
            ResultRow {
                algorithm: a,
                available,
                runs: runs.len(),
                mean_profit,
                mean_finished: pick(|r| r.finished as f64),
                sd_profit: sample_sd(&profits),
                mean_wall_seconds: pick(|r| r.wall_seconds),
                profit_memory_ratio: pick(|r| r.profit_memory),
                profit_energy_ratio: pick(|r| r.profit_energy),
                imp: if available && ref_mean > 0.0 {
                    (mean_profit - ref_mean) / ref_mean
                } else {
                    0.0
                },
                t: test.map(|w| w.t),
                significant: test.is_some_and(|w| w.significant),
            }
        })
        .collect();
    Ok(ExperimentOutput {
        rows,
        replicas: results,
        reference,
        timing: config.timing,
    })
}

fn fmt_opt_t(t: Option<f64>) -> String {
    match t {
        Some(t) if t.is_infinite() => if t > 0.0 { "inf".into() } else { "-inf".into() },
        Some(t) => format!("{t:.3}"),
        None => "-".into(),
    }
}

impl ExperimentOutput {
    pub fn row(&self, a: Algorithm) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.algorithm == a)
    }

    /// Aligned plain-text table.
    pub fn summary_text(&self) -> String {
        let mut header = vec!["algorithm", "runs", "mean_profit", "mean_finished", "sd", "profit/memory", "profit/energy", "imp", "t", "sig"];
        if self.timing {
            header.push("mean_time_s");
        }
        let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            let mut cells = if r.available {
                vec![
                    r.algorithm.to_string(),
                    r.runs.to_string(),
                    format!("{:.2}", r.mean_profit),
                    format!("{:.2}", r.mean_finished),
                    format!("{:.2}", r.sd_profit),
                    format!("{:.4}", r.profit_memory_ratio),
                    format!("{:.4}", r.profit_energy_ratio),
                    format!("{:+.4}", r.imp),
                    fmt_opt_t(r.t),
                    if r.significant { "+".into() } else { "".into() },
                ]
            } else {
                let mut v = vec![r.algorithm.to_string(), "0".into()];
                v.extend(std::iter::repeat_n("unavailable".to_string(), 8));
                v
            };
            if self.timing {
                cells.push(format!("{:.3}", r.mean_wall_seconds));
            }
            table.push(cells);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|c| table.iter().map(|row| row[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let _ = writeln!(out, "reference: {}", self.reference);
        for row in &table {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, cell)| if c == 0 { format!("{cell:<w$}", w = widths[c]) } else { format!("{cell:>w$}", w = widths[c]) })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }

    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header = String::from("algorithm,available,runs,mean_profit,mean_finished,sd_profit,profit_memory_ratio,profit_energy_ratio,imp,t,significant");
        if self.timing {
            header.push_str(",mean_wall_seconds");
        }
        writeln!(out, "{header}")?;
        for r in &self.rows {
            write!(
                out,
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
                r.algorithm,
                r.available,
                r.runs,
                r.mean_profit,
                r.mean_finished,
                r.sd_profit,
                r.profit_memory_ratio,
                r.profit_energy_ratio,
                r.imp,
                r.t.map_or(String::new(), |t| format!("{t:.6}")),
                r.significant
            )?;
            if self.timing {
                write!(out, ",{:.6}", r.mean_wall_seconds)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn write_replicas_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header = String::from("algorithm,replica,seed,available,profit,finished,memory,energy,profit_memory,profit_energy");
        if self.timing {
            header.push_str(",wall_seconds");
        }
        writeln!(out, "{header}")?;
        for r in &self.replicas {
            write!(
                out,
                "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                r.algorithm,
                r.replica,
                r.seed,
                r.schedule.is_some(),
                r.profit,
                r.finished,
                r.memory,
                r.energy,
                r.profit_memory,
                r.profit_energy
            )?;
            if self.timing {
                write!(out, ",{:.6}", r.wall_seconds)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}
