//! Built-in models, addressed by name from the runner configuration.

use crate::error::{Error, Result};
use crate::model::fields::{DriftField, ModelSpec, NoiseField, NoiseOperator};
use crate::model::modulus::DiniModulus;
use crate::spectral::OperatorSpectrum;
use crate::transport::EmpiricalCloud;

pub const MODEL_NAMES: [&str; 4] = ["ou", "meanfield-linear", "dini-drift", "sign-drift"];

/// Constants of the registry models. Unused fields are ignored by models that
/// do not read them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Noise amplitude: `Q = σ·I`.
    pub sigma: f64,
    /// Mean-field coupling strength.
    pub a: f64,
    /// Strength of the confining drift `-θ·clip_R(x)`.
    pub theta: f64,
    /// Clip radius `R`.
    pub radius: f64,
    /// Declared modulus parameters (for dini-drift: the parameters of `g`).
    pub modulus_k: f64,
    pub modulus_delta: f64,
    pub modulus_c: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { sigma: 1.0, a: 0.5, theta: 0.0, radius: 10.0, modulus_k: 1.0, modulus_delta: 1.0, modulus_c: 10.0 }
    }
}

fn clip(x: &[f64], radius: f64, out: &mut [f64], scale: f64) {
    let n = crate::spectral::norm(x);
    let f = if n > radius { radius / n } else { 1.0 };
    for (o, v) in out.iter_mut().zip(x) {
        *o += scale * f * v;
    }
}

/// Modulus covering `-θ·clip_R`: `|clip(x) - clip(y)| <= min(s, 2R) <= sqrt(2R s)`.
fn confining_modulus(p: &ModelParams) -> Result<DiniModulus> {
    if p.theta == 0.0 {
        DiniModulus::canonical(p.modulus_k, p.modulus_delta, p.modulus_c)
    } else {
        DiniModulus::holder(p.theta.abs() * (2.0 * p.radius).sqrt(), 0.5)
    }
}

/// `g(s) = -sign(s) · K / log^{1+δ}(c + 1/|s|)`, a Dini-continuous restoring force.
pub fn dini_profile(k: f64, delta: f64, c: f64, s: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    -s.signum() * k / (c + 1.0 / s.abs()).ln().powf(1.0 + delta)
}

pub fn build(name: &str, p: &ModelParams, spectrum: OperatorSpectrum, horizon: f64) -> Result<ModelSpec> {
    let m = spectrum.dim();
    if !(p.sigma > 0.0) {
        return Err(Error::invalid(format!("sigma = {} must be positive", p.sigma)));
    }
    if !(p.radius > 0.0) {
        return Err(Error::invalid(format!("radius = {} must be positive", p.radius)));
    }
    let noise = NoiseField::additive(NoiseOperator::scaled_identity(m, p.sigma));
    let (theta, radius, a) = (p.theta, p.radius, p.a);
    let drift = match name {
        "ou" => DriftField::new(
            move |_t: f64, x: &[f64], _mu: &EmpiricalCloud, out: &mut [f64]| {
                out.iter_mut().for_each(|o| *o = 0.0);
                clip(x, radius, out, -theta);
            },
            confining_modulus(p)?,
            0.0,
            theta.abs() * radius,
        )
        .measure_free(true)
        .x_free(theta == 0.0),
        "meanfield-linear" => DriftField::new(
            move |_t: f64, x: &[f64], mu: &EmpiricalCloud, out: &mut [f64]| {
                let mean = mu.mean();
                for (o, mk) in out.iter_mut().zip(mean) {
                    *o = a * mk;
                }
                clip(x, radius, out, -theta);
            },
            confining_modulus(p)?,
            a.abs(),
            (theta.abs() + a.abs()) * radius,
        )
        .x_free(theta == 0.0),
        "dini-drift" => {
            let (k, delta, c) = (p.modulus_k, p.modulus_delta, p.modulus_c);
            DriftField::new(
                move |_t: f64, x: &[f64], mu: &EmpiricalCloud, out: &mut [f64]| {
                    let mean = mu.mean();
                    for (o, mk) in out.iter_mut().zip(mean) {
                        *o = a * mk;
                    }
                    out[0] += dini_profile(k, delta, c, x[0]);
                },
                // opposite-sign pairs need twice the profile modulus
                DiniModulus::canonical(2.0 * k, delta, c)?,
                a.abs(),
                k + a.abs() * radius,
            )
        }
        "sign-drift" => DriftField::new(
            |_t: f64, x: &[f64], _mu: &EmpiricalCloud, out: &mut [f64]| {
                out.iter_mut().for_each(|o| *o = 0.0);
                out[0] = if x[0] >= 0.0 { 1.0 } else { -1.0 };
            },
            DiniModulus::canonical(p.modulus_k, p.modulus_delta, p.modulus_c)?,
            0.0,
            1.0,
        )
        .measure_free(true),
        other => {
            return Err(Error::invalid(format!("unknown model '{other}' (known: {})", MODEL_NAMES.join(", "))));
        }
    };
    ModelSpec::new(name, spectrum, drift, noise, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum() -> OperatorSpectrum {
        OperatorSpectrum::power_law(1.0, 2.0, 4, 0.25).unwrap()
    }

    #[test]
    fn all_names_build() {
        for name in MODEL_NAMES {
            let m = build(name, &ModelParams::default(), spectrum(), 1.0).unwrap();
            assert_eq!(m.dim(), 4);
        }
        assert!(build("nope", &ModelParams::default(), spectrum(), 1.0).is_err());
    }

    #[test]
    fn meanfield_drift_reads_the_mean() {
        let m = build("meanfield-linear", &ModelParams::default(), spectrum(), 1.0).unwrap();
        let mu = EmpiricalCloud::from_flat(4, vec![1.0, 0.0, 0.0, 0.0, 3.0, 2.0, 0.0, 0.0]).unwrap();
        let b = m.drift.eval(0.0, &[5.0, 5.0, 5.0, 5.0], &mu);
        assert_eq!(b, vec![1.0, 0.5, 0.0, 0.0]);
        assert!(!m.measure_free());
    }

    #[test]
    fn dini_profile_is_odd_and_restoring() {
        assert_eq!(dini_profile(1.0, 1.0, 10.0, 0.0), 0.0);
        let v = dini_profile(1.0, 1.0, 10.0, 0.3);
        assert!(v < 0.0);
        assert_eq!(dini_profile(1.0, 1.0, 10.0, -0.3), -v);
    }

    #[test]
    fn ou_with_theta_clips() {
        let p = ModelParams { theta: 2.0, radius: 1.0, ..Default::default() };
        let m = build("ou", &p, spectrum(), 1.0).unwrap();
        let b = m.drift.eval(0.0, &[3.0, 4.0, 0.0, 0.0], &EmpiricalCloud::empty(4));
        assert!((b[0] + 1.2).abs() < 1e-15 && (b[1] + 1.6).abs() < 1e-15);
    }
}
