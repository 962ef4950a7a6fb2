//! Girsanov weights, entropy and total-variation estimators, and the coupling
//! checks for the log-Harnack, power-Harnack and shift-Harnack inequalities.

mod checks;
mod functions;
mod report;
mod tv;

pub use checks::{
    harnack_power_check, log_harnack_entropy_check, phi_t, shift_harnack_check, CheckOutcome, CouplingConfig,
    ShiftMode,
};
pub use functions::{TestFunction, TEST_FUNCTION_IDS};
pub use report::{write_report_csv, CouplingReport};
pub use tv::{tv_lower_bound, HistogramSpec, TvEstimate};

use rayon::prelude::*;

use crate::dynamics::SchemeConfig;
use crate::error::{Error, Result};
use crate::model::NoiseOperator;
use crate::rng::{StreamKey, StreamKind};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::invalid("estimate from an empty sample"));
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Ok(Self { value: mean, std_error: (var / n as f64).sqrt() })
    }

    /// True when `target` lies within `k` standard errors.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

/// Log-weight `ℓ = -Σ⟨γ, ΔW⟩ - ½ Σ|γ|² Δt` and `q = Σ|γ|² Δt` along one path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeightPath {
    pub log_weight: f64,
    pub quad: f64,
    pub steps: usize,
}

impl WeightPath {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

/// `Q*(QQ*)^{-1} b_diff`.
pub fn drift_shift_gamma(noise: &NoiseOperator, b_diff: &[f64]) -> Result<Vec<f64>> {
    if noise.dim() != b_diff.len() {
        return Err(Error::DimensionMismatch { expected: noise.dim(), got: b_diff.len() });
    }
    noise.shift_gamma(b_diff)
}

/// Adds one step. `dw` must be the increment that advanced the path.
pub fn accumulate_weight(wp: &mut WeightPath, gamma: &[f64], dw: &[f64], dt: f64) -> Result<()> {
    if gamma.len() != dw.len() {
        return Err(Error::DimensionMismatch { expected: gamma.len(), got: dw.len() });
    }
    let g2: f64 = gamma.iter().map(|g| g * g).sum();
    let gw: f64 = gamma.iter().zip(dw).map(|(g, w)| g * w).sum();
    wp.log_weight -= gw + 0.5 * g2 * dt;
    wp.quad += g2 * dt;
    wp.steps += 1;
    Ok(())
}

/// Both entropy estimators and the weight normalisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyEstimate {
    /// `mean(e^ℓ ℓ)`
    pub direct: Estimate,
    /// `½ mean(e^ℓ q)`
    pub girsanov: Estimate,
    /// `mean(e^ℓ)`, which should be one
    pub mean_weight: Estimate,
}

impl EntropyEstimate {
    /// `|direct - girsanov|` in units of their combined standard error.
    pub fn discrepancy(&self) -> f64 {
        let se = self.direct.std_error.hypot(self.girsanov.std_error);
        let d = (self.direct.value - self.girsanov.value).abs();
        if se > 0.0 {
            d / se
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

pub fn entropy_estimate(weights: &[WeightPath]) -> Result<EntropyEstimate> {
    if weights.is_empty() {
        return Err(Error::invalid("entropy estimate of an empty ensemble"));
    }
    let direct: Vec<f64> = weights.iter().map(|w| w.weight() * w.log_weight).collect();
    let girsanov: Vec<f64> = weights.iter().map(|w| 0.5 * w.weight() * w.quad).collect();
    let mean_weight: Vec<f64> = weights.iter().map(WeightPath::weight).collect();
    Ok(EntropyEstimate {
        direct: Estimate::from_samples(&direct)?,
        girsanov: Estimate::from_samples(&girsanov)?,
        mean_weight: Estimate::from_samples(&mean_weight)?,
    })
}

/// Weights of the deterministic shift `γ ≡ gamma` on `[0, horizon]`, with
/// increments from the path streams of `cfg`.
pub fn constant_shift_weights(gamma: &[f64], horizon: f64, cfg: &SchemeConfig) -> Result<Vec<WeightPath>> {
    cfg.validate()?;
    let dt = horizon / cfg.steps as f64;
    let sqrt_dt = dt.sqrt();
    (0..cfg.particles as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = StreamKey::new(cfg.seed, StreamKind::Path, i).with_replicate(cfg.replicate).rng();
            let mut dw = vec![0.0; gamma.len()];
            let mut wp = WeightPath::default();
            for _ in 0..cfg.steps {
                crate::dynamics::fill_normals(&mut rng, &mut dw);
                dw.iter_mut().for_each(|w| *w *= sqrt_dt);
                accumulate_weight(&mut wp, gamma, &dw, dt)?;
            }
            Ok(wp)
        })
        .collect()
}
