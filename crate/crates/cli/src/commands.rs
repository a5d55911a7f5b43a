//! Experiment commands. Each returns typed rows; [`Table`] renders them.

use cascade_risk::oracle::{simulate_delay_sde, Trajectory};
use cascade_risk::statistics::{stability_margin, steady_state_covariance, CovModel};
use cascade_risk::{risk_vector, Error as CoreError};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{delay_margin_message, CliError};

/// CSV body plus the metadata comment line.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn render(&self, command: &str, cfg: &ExperimentConfig) -> String {
        let mut out = format!(
            "# cascade-risk {command} config_sha256={} delta={} convention={}\n",
            cfg.hash(),
            cfg.delta,
            cfg.convention
        );
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

fn num(v: f64) -> String {
    // Display already spells NaN as `NaN`
    format!("{v}")
}

pub fn covariance(cfg: &ExperimentConfig) -> Result<CovModel, CliError> {
    covariance_at(cfg, cfg.weight)
}

fn covariance_at(cfg: &ExperimentConfig, weight: f64) -> Result<CovModel, CliError> {
    let g = cfg.graph_with_weight(weight)?;
    let spec = g.laplacian().spectrum().map_err(CliError::from_core)?;
    steady_state_covariance(&spec, cfg.b0, cfg.tau).map_err(CliError::from_core)
}

/// `(agent, risk)`, agents 1-based.
pub fn risk_profile(cfg: &ExperimentConfig) -> Result<Vec<(usize, f64)>, CliError> {
    cfg.validate()?;
    let cov = covariance(cfg)?;
    let rv = risk_vector(&cov, &cfg.failure_event()?, &cfg.ambiguity(cfg.epsilon)?)
        .map_err(CliError::from_core)?;
    Ok(rv
        .values
        .into_iter()
        .enumerate()
        .map(|(j, r)| (j + 1, r))
        .collect())
}

pub fn risk_profile_table(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let rows = risk_profile(cfg)?
        .into_iter()
        .map(|(a, r)| vec![a.to_string(), num(r)])
        .collect();
    Ok(Table {
        header: vec!["agent", "risk"],
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub weight: f64,
    pub agent: usize,
    pub risk: f64,
    pub stable: bool,
}

pub fn weight_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, CliError> {
    cfg.validate()?;
    let fe = cfg.failure_event()?;
    let amb = cfg.ambiguity(cfg.epsilon)?;
    let grid = cfg.weight_sweep.grid();
    let per_weight: Vec<Result<Vec<SweepRow>, CliError>> = grid
        .par_iter()
        .map(|&w| {
            let nan_rows = || {
                (1..=cfg.n)
                    .map(|agent| SweepRow {
                        weight: w,
                        agent,
                        risk: f64::NAN,
                        stable: false,
                    })
                    .collect()
            };
            let cov = match covariance_at(cfg, w) {
                Ok(c) => c,
                Err(CliError::Unstable(_)) => return Ok(nan_rows()),
                Err(e) => return Err(e),
            };
            let rv = risk_vector(&cov, &fe, &amb).map_err(CliError::from_core)?;
            Ok(rv
                .values
                .into_iter()
                .enumerate()
                .map(|(j, risk)| SweepRow {
                    weight: w,
                    agent: j + 1,
                    risk,
                    stable: true,
                })
                .collect())
        })
        .collect();
    let mut rows = Vec::with_capacity(grid.len() * cfg.n);
    for r in per_weight {
        rows.extend(r?);
    }
    if !rows.iter().any(|r| r.stable) {
        let g = cfg.graph_with_weight(cfg.weight_sweep.min)?;
        let spec = g.laplacian().spectrum().map_err(CliError::from_core)?;
        let limit = cfg.tau + stability_margin(&spec, cfg.tau);
        return Err(CliError::Unstable(format!(
            "no stable point in the weight sweep; at the smallest weight {}",
            delay_margin_message(cfg.tau, limit)
        )));
    }
    rows.sort_by(|a, b| a.weight.total_cmp(&b.weight).then(a.agent.cmp(&b.agent)));
    Ok(rows)
}

pub fn weight_sweep_table(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let rows = weight_sweep(cfg)?
        .into_iter()
        .map(|r| {
            vec![
                num(r.weight),
                r.agent.to_string(),
                num(r.risk),
                u8::from(r.stable).to_string(),
            ]
        })
        .collect();
    Ok(Table {
        header: vec!["weight", "agent", "risk", "stable"],
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonRow {
    pub epsilon: f64,
    pub agent: usize,
    pub risk: f64,
}

pub fn epsilon_sweep(cfg: &ExperimentConfig) -> Result<Vec<EpsilonRow>, CliError> {
    cfg.validate()?;
    let cov = covariance(cfg)?;
    let fe = cfg.failure_event()?;
    let mut eps = cfg.epsilon_list.clone();
    eps.sort_by(f64::total_cmp);
    let per_eps: Vec<Result<Vec<EpsilonRow>, CliError>> = eps
        .par_iter()
        .map(|&e| {
            let rv = risk_vector(&cov, &fe, &cfg.ambiguity(e)?).map_err(CliError::from_core)?;
            Ok(rv
                .values
                .into_iter()
                .enumerate()
                .map(|(j, risk)| EpsilonRow {
                    epsilon: e,
                    agent: j + 1,
                    risk,
                })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_eps {
        rows.extend(r?);
    }
    Ok(rows)
}

pub fn epsilon_sweep_table(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let rows = epsilon_sweep(cfg)?
        .into_iter()
        .map(|r| vec![num(r.epsilon), r.agent.to_string(), num(r.risk)])
        .collect();
    Ok(Table {
        header: vec!["epsilon", "agent", "risk"],
        rows,
    })
}

/// Long-format covariance, 1-based indices.
pub fn covariance_table(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    cfg.validate()?;
    let cov = covariance(cfg)?;
    let s = cov.sigma();
    let mut rows = Vec::with_capacity(cfg.n * cfg.n);
    for i in 0..cfg.n {
        for j in 0..cfg.n {
            rows.push(vec![
                (i + 1).to_string(),
                (j + 1).to_string(),
                num(s[(i, j)]),
            ]);
        }
    }
    Ok(Table {
        header: vec!["i", "j", "sigma_ij"],
        rows,
    })
}

/// Edge list of the configured graph, 1-based endpoints.
pub fn graph_table(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    cfg.validate()?;
    let g = cfg.graph()?;
    let mut rows = Vec::new();
    for i in 0..cfg.n {
        for j in i + 1..cfg.n {
            let w = g.weight(i, j);
            if w > 0.0 {
                rows.push(vec![(i + 1).to_string(), (j + 1).to_string(), num(w)]);
            }
        }
    }
    Ok(Table {
        header: vec!["i", "j", "weight"],
        rows,
    })
}

/// One replica of the delayed dynamics, decimated by `stride`.
pub fn simulate(cfg: &ExperimentConfig, stride: usize) -> Result<Trajectory, CliError> {
    cfg.validate()?;
    if stride == 0 {
        return Err(CliError::Config("stride must be at least 1".into()));
    }
    let g = cfg.graph()?;
    let mut sim = cfg.sim.to_sim_config();
    sim.stride = stride;
    simulate_delay_sde(&g, cfg.b0, cfg.tau, &sim).map_err(|e| match e {
        CoreError::SimConfig(m) => CliError::Config(m),
        other => CliError::from_core(other),
    })
}
