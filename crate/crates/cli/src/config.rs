//! Experiment configuration: a JSON document with one key per parameter.

use std::path::Path;

use cascade_risk::oracle::SimConfig;
use cascade_risk::risk::{AmbiguitySpec, Convention, FailureEvent};
use cascade_risk::statistics::NetworkParams;
use cascade_risk::{Topology, WeightedGraph};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSweep {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Default for WeightSweep {
    fn default() -> Self {
        Self {
            min: 0.1,
            max: 1.4,
            steps: 30,
        }
    }
}

impl WeightSweep {
    /// Evenly spaced grid including both ends.
    pub fn grid(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let h = (self.max - self.min) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| {
                if k + 1 == self.steps {
                    self.max
                } else {
                    self.min + h * k as f64
                }
            })
            .collect()
    }

    pub fn step(&self) -> f64 {
        if self.steps < 2 {
            0.0
        } else {
            (self.max - self.min) / (self.steps - 1) as f64
        }
    }
}

/// Simulation budget used by `validate` and `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub replicas: usize,
    pub seed: u64,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            dt: d.dt,
            horizon: d.horizon,
            burn_in: d.burn_in,
            replicas: d.replicas,
            seed: d.seed,
        }
    }
}

impl SimSection {
    pub fn to_sim_config(&self) -> SimConfig {
        SimConfig {
            dt: self.dt,
            horizon: self.horizon,
            burn_in: self.burn_in,
            replicas: self.replicas,
            seed: self.seed,
            initial_condition: None,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub n: usize,
    pub topology: Topology,
    pub weight: f64,
    pub weight_sweep: WeightSweep,
    pub tau: f64,
    pub b0: f64,
    pub epsilon: f64,
    pub epsilon_list: Vec<f64>,
    pub c: f64,
    /// 1-based.
    pub failed_agent: usize,
    pub delta: f64,
    pub convention: Convention,
    pub sim: SimSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 21,
            topology: Topology::Complete,
            weight: 1.0,
            weight_sweep: WeightSweep::default(),
            tau: 0.05,
            b0: 4.0,
            epsilon: 0.3,
            epsilon_list: vec![0.0, 0.1, 0.2, 0.3],
            c: 0.1,
            failed_agent: 11,
            delta: 0.1,
            convention: Convention::StdScale,
            sim: SimSection::default(),
        }
    }
}

/// Command-line overrides; `None` keeps the file (or default) value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub n: Option<usize>,
    pub topology: Option<Topology>,
    pub weight: Option<f64>,
    pub weight_min: Option<f64>,
    pub weight_max: Option<f64>,
    pub weight_steps: Option<usize>,
    pub tau: Option<f64>,
    pub b0: Option<f64>,
    pub epsilon: Option<f64>,
    pub epsilon_list: Option<Vec<f64>>,
    pub c: Option<f64>,
    pub failed_agent: Option<usize>,
    pub delta: Option<f64>,
    pub convention: Option<Convention>,
    pub sim_dt: Option<f64>,
    pub sim_horizon: Option<f64>,
    pub sim_burn_in: Option<f64>,
    pub sim_replicas: Option<usize>,
    pub sim_seed: Option<u64>,
}

macro_rules! apply {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: Overrides) {
        apply!(self.n, o.n);
        apply!(self.topology, o.topology);
        apply!(self.weight, o.weight);
        apply!(self.weight_sweep.min, o.weight_min);
        apply!(self.weight_sweep.max, o.weight_max);
        apply!(self.weight_sweep.steps, o.weight_steps);
        apply!(self.tau, o.tau);
        apply!(self.b0, o.b0);
        apply!(self.epsilon, o.epsilon);
        apply!(self.epsilon_list, o.epsilon_list);
        apply!(self.c, o.c);
        apply!(self.failed_agent, o.failed_agent);
        apply!(self.delta, o.delta);
        apply!(self.convention, o.convention);
        apply!(self.sim.dt, o.sim_dt);
        apply!(self.sim.horizon, o.sim_horizon);
        apply!(self.sim.burn_in, o.sim_burn_in);
        apply!(self.sim.replicas, o.sim_replicas);
        apply!(self.sim.seed, o.sim_seed);
    }

    /// Hex SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(compact.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.n < 2 {
            return bad(format!("n = {} must be at least 2", self.n));
        }
        if !(1..=self.n).contains(&self.failed_agent) {
            return bad(format!(
                "failed_agent = {} outside 1..={}",
                self.failed_agent, self.n
            ));
        }
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return bad(format!("weight = {} must be positive", self.weight));
        }
        let ws = &self.weight_sweep;
        if ws.steps == 0 || !(ws.min > 0.0) || !(ws.max >= ws.min) || !ws.max.is_finite() {
            return bad(format!(
                "weight_sweep needs 0 < min <= max and steps >= 1, got {}..{} x {}",
                ws.min, ws.max, ws.steps
            ));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad(format!("delta = {} must be >= 0", self.delta));
        }
        if self.epsilon_list.is_empty() {
            return bad("epsilon_list is empty".into());
        }
        for &e in self
            .epsilon_list
            .iter()
            .chain(std::iter::once(&self.epsilon))
        {
            if !(0.0..1.0).contains(&e) {
                return bad(format!("epsilon = {e} outside [0, 1)"));
            }
        }
        NetworkParams::new(self.tau, self.b0, self.epsilon, self.c).map_err(CliError::from_core)?;
        if self.sim.replicas == 0 || !(self.sim.dt > 0.0) || !(self.sim.horizon > self.sim.burn_in)
        {
            return bad("sim needs replicas >= 1, dt > 0 and horizon > burn_in".into());
        }
        self.graph().map(|_| ())
    }

    pub fn params(&self) -> NetworkParams {
        NetworkParams {
            tau: self.tau,
            b0: self.b0,
            epsilon: self.epsilon,
            c: self.c,
        }
    }

    pub fn failure_event(&self) -> Result<FailureEvent, CliError> {
        FailureEvent::new(self.failed_agent - 1, self.delta, self.c).map_err(CliError::from_core)
    }

    pub fn ambiguity(&self, epsilon: f64) -> Result<AmbiguitySpec, CliError> {
        AmbiguitySpec::new(epsilon, self.convention).map_err(CliError::from_core)
    }

    pub fn graph(&self) -> Result<WeightedGraph, CliError> {
        self.graph_with_weight(self.weight)
    }

    pub fn graph_with_weight(&self, w: f64) -> Result<WeightedGraph, CliError> {
        self.topology.build(self.n, w).map_err(CliError::from_core)
    }
}
