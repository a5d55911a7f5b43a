//! Euler–Maruyama integration of `dx = -L x(t - τ) dt + b dw` with a
//! constant history on `[-τ, 0]`.
//!
//! Replica `r` draws its noise from ChaCha8 stream `r` under the configured
//! seed, so any replica can be reproduced on its own and results do not
//! depend on how replicas are scheduled across threads.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::summation::CompensatedSum;
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;

/// `‖y‖∞` above which a trajectory is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub replicas: usize,
    pub seed: u64,
    /// History `φ` held constant on `[-τ, 0]`; `None` means zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_condition: Option<Vec<f64>>,
    /// Keep every `stride`-th post-burn-in sample in recorded trajectories.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_stride() -> usize {
    1
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 50.0,
            burn_in: 10.0,
            replicas: 200,
            seed: 0x5eed,
            initial_condition: None,
            stride: 1,
        }
    }
}

struct Schedule {
    delay_steps: usize,
    burn_steps: usize,
    total_steps: usize,
}

fn steps_of(t: f64, dt: f64) -> Result<usize> {
    let k = (t / dt).round();
    if (t / dt - k).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::SimConfig(format!(
            "{t} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(k as usize)
}

impl SimConfig {
    fn schedule(&self, n: usize, tau: f64) -> Result<Schedule> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::SimConfig(format!("dt = {} must be > 0", self.dt)));
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.horizon && self.horizon.is_finite()) {
            return Err(Error::SimConfig(format!(
                "need 0 <= burn_in ({}) < horizon ({})",
                self.burn_in, self.horizon
            )));
        }
        if self.replicas == 0 {
            return Err(Error::SimConfig("replicas must be >= 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::SimConfig("stride must be >= 1".into()));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::SimConfig(format!("tau = {tau} must be >= 0")));
        }
        if let Some(phi) = &self.initial_condition {
            if phi.len() != n {
                return Err(Error::SimConfig(format!(
                    "initial condition has {} entries, graph has {n}",
                    phi.len()
                )));
            }
        }
        let delay_steps = steps_of(tau, self.dt).map_err(|_| {
            Error::SimConfig(format!("tau / dt = {} is not an integer", tau / self.dt))
        })?;
        let total_steps = (self.horizon / self.dt).round() as usize;
        let burn_steps = (self.burn_in / self.dt).round() as usize;
        Ok(Schedule {
            delay_steps,
            burn_steps,
            total_steps,
        })
    }
}

/// Runs one replica; `visit(step, y)` is called for every post-burn-in step.
fn run_replica<F: FnMut(usize, &[f64])>(
    g: &WeightedGraph,
    b: f64,
    cfg: &SimConfig,
    sched: &Schedule,
    replica: u64,
    mut visit: F,
) -> Result<()> {
    let n = g.n();
    let lap = g.laplacian();
    let l: Vec<f64> = (0..n * n).map(|k| lap.matrix()[(k / n, k % n)]).collect();
    let phi = cfg
        .initial_condition
        .clone()
        .unwrap_or_else(|| vec![0.0; n]);

    // ring buffer holding x_{k-d}, ..., x_k
    let depth = sched.delay_steps + 1;
    let mut ring: Vec<Vec<f64>> = vec![phi; depth];
    let mut head = 0usize; // slot of x_k
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(replica);
    let noise = b * cfg.dt.sqrt();
    let mut drift = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut y = vec![0.0; n];

    for k in 0..sched.total_steps {
        let delayed = &ring[(head + 1) % depth];
        for (i, out) in drift.iter_mut().enumerate() {
            let row = &l[i * n..(i + 1) * n];
            *out = row.iter().zip(delayed).map(|(a, x)| a * x).sum();
        }
        {
            let current = &ring[head];
            for i in 0..n {
                let xi: f64 = StandardNormal.sample(&mut rng);
                next[i] = current[i] - cfg.dt * drift[i] + noise * xi;
            }
        }
        // the oldest slot (x_{k-d}) is no longer needed
        head = (head + 1) % depth;
        ring[head].copy_from_slice(&next);

        let x = &ring[head];
        let mean = x.iter().sum::<f64>() / n as f64;
        let mut norm = 0.0f64;
        for i in 0..n {
            y[i] = x[i] - mean;
            norm = norm.max(y[i].abs());
        }
        if !(norm <= DIVERGENCE_THRESHOLD) {
            return Err(Error::Diverged {
                time: (k + 1) as f64 * cfg.dt,
                norm,
            });
        }
        if k + 1 > sched.burn_steps {
            visit(k + 1, &y);
        }
    }
    Ok(())
}

/// Post-burn-in observable samples of a single replica.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
}

impl Trajectory {
    /// `t,y_1,...,y_n` with one row per recorded sample.
    pub fn to_csv(&self) -> String {
        let n = self.samples.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",y_{i}"));
        }
        out.push('\n');
        for (t, y) in self.times.iter().zip(&self.samples) {
            out.push_str(&format!("{t}"));
            for v in y {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.samples.last().map(Vec::as_slice)
    }
}

/// Simulates replica `replica`, keeping every `cfg.stride`-th sample after
/// burn-in.
pub fn simulate_replica(
    g: &WeightedGraph,
    b: f64,
    tau: f64,
    cfg: &SimConfig,
    replica: u64,
) -> Result<Trajectory> {
    check_b(b)?;
    let sched = cfg.schedule(g.n(), tau)?;
    let mut traj = Trajectory {
        times: Vec::new(),
        samples: Vec::new(),
    };
    let first = sched.burn_steps + 1;
    run_replica(g, b, cfg, &sched, replica, |step, y| {
        if (step - first) % cfg.stride == 0 {
            traj.times.push(step as f64 * cfg.dt);
            traj.samples.push(y.to_vec());
        }
    })?;
    Ok(traj)
}

/// Replica 0 of the configured run.
pub fn simulate_delay_sde(
    g: &WeightedGraph,
    b: f64,
    tau: f64,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    simulate_replica(g, b, tau, cfg, 0)
}

fn check_b(b: f64) -> Result<()> {
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "diffusion b = {b} must be >= 0"
        )));
    }
    Ok(())
}

/// Pair and threshold for a simulated `E[|y_j| given |y_i| > δ̄]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondQuery {
    pub i: usize,
    pub j: usize,
    pub delta_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondExpEstimate {
    pub value: f64,
    pub stderr: f64,
    pub accepted: usize,
}

/// Time-and-replica averaged statistics of the observables.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalStats {
    pub cov: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub cond_exp: Option<CondExpEstimate>,
    /// Standard error of each covariance entry (replica batch means).
    pub stderr: DMatrix<f64>,
    /// Post-burn-in samples per agent, summed over replicas.
    pub samples: usize,
}

struct Accum {
    count: usize,
    sum: Vec<CompensatedSum>,
    outer: Vec<CompensatedSum>,
    cond_sum: CompensatedSum,
    cond_count: usize,
}

/// Empirical covariance of `y` over all replicas.
///
/// Every replica is centred on the grand mean, which keeps the bias from
/// per-replica mean removal out of the estimate. Standard errors come from
/// the spread of per-replica estimates.
pub fn empirical_observable_covariance(
    g: &WeightedGraph,
    b: f64,
    tau: f64,
    cfg: &SimConfig,
    query: Option<CondQuery>,
) -> Result<EmpiricalStats> {
    check_b(b)?;
    let n = g.n();
    let sched = cfg.schedule(n, tau)?;
    if let Some(q) = query {
        if q.i >= n || q.j >= n {
            return Err(Error::AgentIndex {
                index: q.i.max(q.j),
                n,
            });
        }
    }
    let accums: Vec<Accum> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut acc = Accum {
                count: 0,
                sum: vec![CompensatedSum::default(); n],
                outer: vec![CompensatedSum::default(); n * n],
                cond_sum: CompensatedSum::default(),
                cond_count: 0,
            };
            run_replica(g, b, cfg, &sched, r, |_, y| {
                acc.count += 1;
                for i in 0..n {
                    acc.sum[i].add(y[i]);
                    for j in i..n {
                        acc.outer[i * n + j].add(y[i] * y[j]);
                    }
                }
                if let Some(q) = query {
                    if y[q.i].abs() > q.delta_bar {
                        acc.cond_sum.add(y[q.j].abs());
                        acc.cond_count += 1;
                    }
                }
            })?;
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;

    let total: usize = accums.iter().map(|a| a.count).sum();
    let mut mean = DVector::zeros(n);
    for i in 0..n {
        let mut s = CompensatedSum::default();
        for a in &accums {
            s.merge(&a.sum[i]);
        }
        mean[i] = s.value() / total as f64;
    }

    let per_replica: Vec<DMatrix<f64>> = accums
        .iter()
        .map(|a| {
            let m = a.count as f64;
            DMatrix::from_fn(n, n, |i, j| {
                let (p, q) = if i <= j { (i, j) } else { (j, i) };
                let s2 = a.outer[p * n + q].value() / m;
                let si = a.sum[i].value() / m;
                let sj = a.sum[j].value() / m;
                s2 - mean[i] * sj - mean[j] * si + mean[i] * mean[j]
            })
        })
        .collect();
    let r = per_replica.len() as f64;
    let cov = per_replica
        .iter()
        .fold(DMatrix::zeros(n, n), |acc, c| acc + c)
        / r;
    let stderr = if per_replica.len() > 1 {
        let var = per_replica
            .iter()
            .fold(DMatrix::zeros(n, n), |acc: DMatrix<f64>, c| {
                acc + (c - &cov).map(|d| d * d)
            })
            / (r - 1.0);
        var.map(|v| (v / r).sqrt())
    } else {
        DMatrix::from_element(n, n, f64::NAN)
    };

    let cond_exp = query.map(|_| {
        let accepted: usize = accums.iter().map(|a| a.cond_count).sum();
        let mut num = CompensatedSum::default();
        for a in &accums {
            num.merge(&a.cond_sum);
        }
        let value = num.value() / accepted as f64;
        // ratio estimator; spread of per-replica ratios weighted by acceptance
        let ratios: Vec<(f64, f64)> = accums
            .iter()
            .filter(|a| a.cond_count > 0)
            .map(|a| {
                (
                    a.cond_sum.value() / a.cond_count as f64,
                    a.cond_count as f64,
                )
            })
            .collect();
        let k = ratios.len() as f64;
        let stderr = if ratios.len() > 1 {
            let mean_w = accepted as f64 / k;
            let v = ratios
                .iter()
                .map(|(x, w)| (w / mean_w * (x - value)).powi(2))
                .sum::<f64>()
                / (k - 1.0);
            (v / k).sqrt()
        } else {
            f64::NAN
        };
        CondExpEstimate {
            value,
            stderr,
            accepted,
        }
    });

    Ok(EmpiricalStats {
        cov,
        mean,
        cond_exp,
        stderr,
        samples: total,
    })
}
