//! Time stepping of the frozen-measure equation and the Picard iteration over
//! measure flows.

mod ensemble;
mod flow;
mod law;
mod stability;

pub use ensemble::{exponential_euler_step, ParticleEnsemble};
pub(crate) use ensemble::{fill_normals, Scratch, Stepper};
pub use flow::{
    picard_measure_flow, rho_distance, simulate_frozen_flow, write_diagnostics_csv, write_flow_csv, MeasureFlow,
    PicardDiagnostics, PicardResult,
};
pub use law::InitialLaw;
pub use stability::{coupled_stability, StabilityRun};

use crate::error::{Error, Result};

/// Relative tolerance used to snap times onto mesh nodes.
const NODE_SNAP: f64 = 1e-12;

/// Time of node `j` on the uniform `n`-cell mesh of `[0, horizon]`. Every
/// module computes node times through this function, so snapshot lookups can
/// compare times exactly.
pub fn node_time(j: usize, horizon: f64, n: usize) -> f64 {
    if j == n {
        horizon
    } else {
        j as f64 * horizon / n as f64
    }
}

/// Index of the freeze cell containing `s`, with `s = T` mapped to node `n`.
fn cell_index(s: f64, horizon: f64, n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::invalid("mesh count n must be at least 1"));
    }
    if !(s >= 0.0 && s <= horizon) {
        return Err(Error::invalid(format!("time {s} outside [0, {horizon}]")));
    }
    let h = horizon / n as f64;
    let raw = s / h;
    let nearest = raw.round();
    let j = if (raw - nearest).abs() <= NODE_SNAP * n as f64 { nearest } else { raw.floor() };
    Ok((j as usize).min(n))
}

/// `η_n(s) = ⌊s / (T/n)⌋ · T/n`, with `η_n(T) = T`.
pub fn eta_mesh(s: f64, horizon: f64, n: usize) -> Result<f64> {
    Ok(node_time(cell_index(s, horizon, n)?, horizon, n))
}

/// Discretisation and Monte Carlo sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    /// Number of coefficient-freeze cells `n`.
    pub steps: usize,
    /// Number of output intervals `L`; must divide `steps`.
    pub output_points: usize,
    /// Particle count `N`.
    pub particles: usize,
    /// Points per cloud used for exact W2, `N_w`.
    pub w2_particles: usize,
    pub seed: u64,
    /// Seed replicate, for independent repetitions under one seed.
    pub replicate: u64,
    /// Exact Ornstein-Uhlenbeck increments (additive diagonal noise only).
    pub exact_convolution: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            output_points: 10,
            particles: 1000,
            w2_particles: 256,
            seed: 0,
            replicate: 0,
            exact_convolution: true,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 || self.output_points < 1 {
            return Err(Error::invalid("n and L must be at least 1"));
        }
        if self.steps % self.output_points != 0 {
            return Err(Error::invalid(format!(
                "output grid L = {} must divide the freeze mesh n = {}",
                self.output_points, self.steps
            )));
        }
        if self.w2_particles < 2 || self.particles < self.w2_particles {
            return Err(Error::invalid(format!(
                "need N >= N_w >= 2, got N = {}, N_w = {}",
                self.particles, self.w2_particles
            )));
        }
        Ok(())
    }

    /// Freeze-mesh steps per output interval.
    pub fn stride(&self) -> usize {
        self.steps / self.output_points
    }

    pub fn output_times(&self, horizon: f64) -> Vec<f64> {
        (0..=self.output_points).map(|i| node_time(i * self.stride(), horizon, self.steps)).collect()
    }

    pub fn freeze_times(&self, horizon: f64) -> Vec<f64> {
        (0..=self.steps).map(|j| node_time(j, horizon, self.steps)).collect()
    }
}
