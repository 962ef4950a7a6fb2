use super::{picard_measure_flow, InitialLaw, SchemeConfig};
use crate::error::Result;
use crate::model::ModelSpec;
use crate::spectral::dist_sq;
use crate::transport::w2_exact;

/// Synchronously coupled solutions from `μ0` and `μ0` shifted by `d·e_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRun {
    pub distance: f64,
    /// `∫_0^T E|X_t - Y_t|² dt`
    pub moment_integral: f64,
    /// `∫_0^T W2(μ_t, ν_t)² dt`
    pub w2_integral: f64,
}

impl StabilityRun {
    pub fn moment_ratio(&self) -> f64 {
        self.moment_integral / (self.distance * self.distance)
    }

    pub fn w2_ratio(&self) -> f64 {
        self.w2_integral / (self.distance * self.distance)
    }
}

/// Both solutions are Picard fixed points under the same seed, so particle
/// `i` of each shares its initial draw and its noise path.
pub fn coupled_stability(
    model: &ModelSpec,
    law: &InitialLaw,
    distance: f64,
    cfg: &SchemeConfig,
    lambda_weight: f64,
    tol: f64,
    max_iter: usize,
) -> Result<StabilityRun> {
    let mut shift = vec![0.0; model.dim()];
    shift[0] = distance;
    let mu = picard_measure_flow(model, law, cfg, lambda_weight, tol, max_iter)?.flow;
    let nu = picard_measure_flow(model, &law.shifted(&shift), cfg, lambda_weight, tol, max_iter)?.flow;
    let times = cfg.output_times(model.horizon);
    let mut moment = Vec::with_capacity(times.len());
    let mut w2 = Vec::with_capacity(times.len());
    for &t in &times {
        let (a, b) = (mu.at(t)?, nu.at(t)?);
        let sum: f64 = a.points().zip(b.points()).map(|(x, y)| dist_sq(x, y)).sum();
        moment.push(sum / a.len() as f64);
        let w = w2_exact(&a.head(cfg.w2_particles), &b.head(cfg.w2_particles))?;
        w2.push(w * w);
    }
    let trapezoid = |v: &[f64]| -> f64 {
        times.windows(2).zip(v.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
    };
    Ok(StabilityRun { distance, moment_integral: trapezoid(&moment), w2_integral: trapezoid(&w2) })
}
