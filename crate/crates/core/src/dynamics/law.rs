use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Law of the initial condition. Coordinate vectors shorter than the model
/// dimension are padded with zeros; a one-entry `std` is broadcast.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Point(Vec<f64>),
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    /// `weight · δ_a + (1 - weight) · δ_b`
    TwoPoint { a: Vec<f64>, b: Vec<f64>, weight: f64 },
}

fn padded(v: &[f64], dim: usize) -> Result<Vec<f64>> {
    if v.len() > dim {
        return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
    }
    let mut out = v.to_vec();
    out.resize(dim, 0.0);
    Ok(out)
}

impl InitialLaw {
    pub fn point(x: impl Into<Vec<f64>>) -> Self {
        InitialLaw::Point(x.into())
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let all_finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            InitialLaw::Point(x) => {
                padded(x, dim)?;
                if !all_finite(x) {
                    return Err(Error::invalid("point mass has non-finite coordinates"));
                }
            }
            InitialLaw::Gaussian { mean, std } => {
                padded(mean, dim)?;
                if std.len() != 1 {
                    padded(std, dim)?;
                }
                if !all_finite(mean) || std.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                    return Err(Error::invalid("gaussian law needs finite mean and nonnegative std"));
                }
            }
            InitialLaw::TwoPoint { a, b, weight } => {
                padded(a, dim)?;
                padded(b, dim)?;
                if !(0.0..=1.0).contains(weight) || !all_finite(a) || !all_finite(b) {
                    return Err(Error::invalid(format!("two-point law: weight {weight} outside [0,1]")));
                }
            }
        }
        Ok(())
    }

    /// The mean of the law.
    pub fn mean(&self, dim: usize) -> Result<Vec<f64>> {
        self.validate(dim)?;
        Ok(match self {
            InitialLaw::Point(x) => padded(x, dim)?,
            InitialLaw::Gaussian { mean, .. } => padded(mean, dim)?,
            InitialLaw::TwoPoint { a, b, weight } => {
                let (a, b) = (padded(a, dim)?, padded(b, dim)?);
                a.iter().zip(&b).map(|(x, y)| weight * x + (1.0 - weight) * y).collect()
            }
        })
    }

    /// Same law pushed forward by `x ↦ x + v`.
    pub fn shifted(&self, v: &[f64]) -> Self {
        let add = |x: &[f64]| {
            let n = x.len().max(v.len());
            (0..n).map(|k| x.get(k).copied().unwrap_or(0.0) + v.get(k).copied().unwrap_or(0.0)).collect::<Vec<_>>()
        };
        match self {
            InitialLaw::Point(x) => InitialLaw::Point(add(x)),
            InitialLaw::Gaussian { mean, std } => InitialLaw::Gaussian { mean: add(mean), std: std.clone() },
            InitialLaw::TwoPoint { a, b, weight } => InitialLaw::TwoPoint { a: add(a), b: add(b), weight: *weight },
        }
    }

    /// Writes one draw into `out`. Always consumes the same number of random
    /// values for a given law and dimension.
    pub fn sample_into<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let dim = out.len();
        let get = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
        match self {
            InitialLaw::Point(x) => (0..dim).for_each(|k| out[k] = get(x, k)),
            InitialLaw::Gaussian { mean, std } => {
                for k in 0..dim {
                    let s = if std.len() == 1 { std[0] } else { get(std, k) };
                    let z: f64 = rng.sample(StandardNormal);
                    out[k] = get(mean, k) + s * z;
                }
            }
            InitialLaw::TwoPoint { a, b, weight } => {
                let pick_a = rng.random::<f64>() < *weight;
                let src = if pick_a { a } else { b };
                (0..dim).for_each(|k| out[k] = get(src, k));
            }
        }
    }
}
