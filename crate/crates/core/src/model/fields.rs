use std::borrow::Cow;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::modulus::DiniModulus;
use crate::spectral::{OperatorSpectrum, StepFactors};
use crate::transport::EmpiricalCloud;

/// Singular values below this fraction of the largest are treated as zero.
const SINGULAR_RTOL: f64 = 1e-12;

/// `b_t(x, μ̂)`. Implementations must be pure: they are called concurrently
/// from particle workers.
pub trait DriftEval: Send + Sync {
    fn eval(&self, t: f64, x: &[f64], mu: &EmpiricalCloud, out: &mut [f64]);
}

impl<F> DriftEval for F
where
    F: Fn(f64, &[f64], &EmpiricalCloud, &mut [f64]) + Send + Sync,
{
    fn eval(&self, t: f64, x: &[f64], mu: &EmpiricalCloud, out: &mut [f64]) {
        self(t, x, mu, out)
    }
}

#[derive(Clone)]
pub struct DriftField {
    evaluator: Arc<dyn DriftEval>,
    /// φ in `|b(x,μ) - b(y,ν)| <= φ(|x-y|) + K_b W2(μ,ν)`.
    pub modulus: DiniModulus,
    /// `K_b`.
    pub measure_lipschitz: f64,
    /// Declared `sup |b|`; diagnostics only.
    pub sup_bound: f64,
    pub measure_free: bool,
    pub x_free: bool,
}

impl std::fmt::Debug for DriftField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DriftField")
            .field("modulus", &self.modulus)
            .field("measure_lipschitz", &self.measure_lipschitz)
            .field("sup_bound", &self.sup_bound)
            .field("measure_free", &self.measure_free)
            .field("x_free", &self.x_free)
            .finish_non_exhaustive()
    }
}

impl DriftField {
    pub fn new(evaluator: impl DriftEval + 'static, modulus: DiniModulus, measure_lipschitz: f64, sup_bound: f64) -> Self {
        Self {
            evaluator: Arc::new(evaluator),
            modulus,
            measure_lipschitz,
            sup_bound,
            measure_free: false,
            x_free: false,
        }
    }

    pub fn measure_free(mut self, yes: bool) -> Self {
        self.measure_free = yes;
        self
    }

    pub fn x_free(mut self, yes: bool) -> Self {
        self.x_free = yes;
        self
    }

    pub fn eval_into(&self, t: f64, x: &[f64], mu: &EmpiricalCloud, out: &mut [f64]) {
        self.evaluator.eval(t, x, mu, out)
    }

    pub fn eval(&self, t: f64, x: &[f64], mu: &EmpiricalCloud) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.evaluator.eval(t, x, mu, &mut out);
        out
    }
}

/// `Q_t(x, μ̂)` on the truncated space.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseOperator {
    Diagonal(Vec<f64>),
    /// Row-major `dim × dim` matrix.
    Dense { dim: usize, data: Vec<f64> },
}

impl NoiseOperator {
    pub fn identity(dim: usize) -> Self {
        NoiseOperator::Diagonal(vec![1.0; dim])
    }

    pub fn scaled_identity(dim: usize, sigma: f64) -> Self {
        NoiseOperator::Diagonal(vec![sigma; dim])
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseOperator::Diagonal(q) => q.len(),
            NoiseOperator::Dense { dim, .. } => *dim,
        }
    }

    fn matrix(&self) -> DMatrix<f64> {
        match self {
            NoiseOperator::Diagonal(q) => DMatrix::from_diagonal(&DVector::from_column_slice(q)),
            NoiseOperator::Dense { dim, data } => DMatrix::from_row_slice(*dim, *dim, data),
        }
    }

    /// `out = Q dw`.
    pub fn apply(&self, dw: &[f64], out: &mut [f64]) {
        match self {
            NoiseOperator::Diagonal(q) => {
                for ((o, q), w) in out.iter_mut().zip(q).zip(dw) {
                    *o = q * w;
                }
            }
            NoiseOperator::Dense { dim, data } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = data[i * dim..(i + 1) * dim].iter().zip(dw).map(|(a, b)| a * b).sum();
                }
            }
        }
    }

    /// Singular values in ascending order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s = match self {
            NoiseOperator::Diagonal(q) => q.iter().map(|x| x.abs()).collect(),
            NoiseOperator::Dense { .. } => self.matrix().singular_values().as_slice().to_vec(),
        };
        s.sort_by(f64::total_cmp);
        s
    }

    /// `||Q||` and `||(QQ*)^{-1}||`.
    pub fn norms(&self) -> (f64, f64) {
        let s = self.singular_values();
        let smin = s[0];
        let smax = *s.last().unwrap();
        (smax, if smin > 0.0 { 1.0 / (smin * smin) } else { f64::INFINITY })
    }

    /// `||Q - R||²_HS`.
    pub fn hs_distance_sq(&self, other: &NoiseOperator) -> f64 {
        match (self, other) {
            (NoiseOperator::Diagonal(a), NoiseOperator::Diagonal(b)) => {
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
            }
            _ => (self.matrix() - other.matrix()).norm_squared(),
        }
    }

    /// `γ = Q*(QQ*)^{-1} v`: the noise-space shift whose image under `Q` is `v`.
    pub fn shift_gamma(&self, v: &[f64]) -> Result<Vec<f64>> {
        match self {
            NoiseOperator::Diagonal(q) => q
                .iter()
                .zip(v)
                .enumerate()
                .map(|(k, (q, x))| {
                    if *q == 0.0 {
                        Err(Error::SingularNoise { mode: k + 1, singular_value: 0.0 })
                    } else {
                        Ok(x / q)
                    }
                })
                .collect(),
            NoiseOperator::Dense { .. } => {
                let q = self.matrix();
                let sv = q.clone().svd(false, false).singular_values;
                let smax = sv.max();
                if let Some((k, s)) =
                    sv.iter().enumerate().find(|(_, s)| !(**s > SINGULAR_RTOL * smax)).map(|(k, s)| (k, *s))
                {
                    return Err(Error::SingularNoise { mode: k + 1, singular_value: s });
                }
                let qq = &q * q.transpose();
                let rhs = DVector::from_column_slice(v);
                let ch = qq.cholesky().ok_or(Error::SingularNoise { mode: 1, singular_value: sv.min() })?;
                Ok((q.transpose() * ch.solve(&rhs)).as_slice().to_vec())
            }
        }
    }
}

/// `Q_t(x, μ̂)` as a function, for state- or measure-dependent noise.
pub trait NoiseEval: Send + Sync {
    fn eval(&self, t: f64, x: &[f64], mu: &EmpiricalCloud) -> NoiseOperator;
}

impl<F> NoiseEval for F
where
    F: Fn(f64, &[f64], &EmpiricalCloud) -> NoiseOperator + Send + Sync,
{
    fn eval(&self, t: f64, x: &[f64], mu: &EmpiricalCloud) -> NoiseOperator {
        self(t, x, mu)
    }
}

#[derive(Clone)]
enum NoiseSource {
    Constant(NoiseOperator),
    Evaluator(Arc<dyn NoiseEval>),
}

#[derive(Clone)]
pub struct NoiseField {
    source: NoiseSource,
    pub x_free: bool,
    pub measure_free: bool,
    /// Declared `sup ||Q||`.
    pub op_norm_bound: f64,
    /// Declared `K_Q = sup ||(QQ*)^{-1}||`.
    pub inverse_bound: f64,
    /// Declared constant in `||Q(x,μ) - Q(x,ν)||²_HS <= K W2(μ,ν)²`.
    pub measure_lipschitz: f64,
}

impl std::fmt::Debug for NoiseField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut d = f.debug_struct("NoiseField");
        if let NoiseSource::Constant(op) = &self.source {
            d.field("constant", op);
        }
        d.field("x_free", &self.x_free)
            .field("measure_free", &self.measure_free)
            .field("op_norm_bound", &self.op_norm_bound)
            .field("inverse_bound", &self.inverse_bound)
            .finish_non_exhaustive()
    }
}

impl NoiseField {
    /// Additive noise; the declared bounds are read off the operator.
    pub fn additive(op: NoiseOperator) -> Self {
        let (norm, inv) = op.norms();
        Self {
            source: NoiseSource::Constant(op),
            x_free: true,
            measure_free: true,
            op_norm_bound: norm,
            inverse_bound: inv,
            measure_lipschitz: 0.0,
        }
    }

    pub fn general(
        evaluator: impl NoiseEval + 'static,
        x_free: bool,
        measure_free: bool,
        op_norm_bound: f64,
        inverse_bound: f64,
        measure_lipschitz: f64,
    ) -> Self {
        Self {
            source: NoiseSource::Evaluator(Arc::new(evaluator)),
            x_free,
            measure_free,
            op_norm_bound,
            inverse_bound,
            measure_lipschitz,
        }
    }

    pub fn is_additive(&self) -> bool {
        self.x_free && self.measure_free
    }

    pub fn constant(&self) -> Option<&NoiseOperator> {
        match &self.source {
            NoiseSource::Constant(op) => Some(op),
            NoiseSource::Evaluator(_) => None,
        }
    }

    pub fn eval(&self, t: f64, x: &[f64], mu: &EmpiricalCloud) -> Cow<'_, NoiseOperator> {
        match &self.source {
            NoiseSource::Constant(op) => Cow::Borrowed(op),
            NoiseSource::Evaluator(f) => Cow::Owned(f.eval(t, x, mu)),
        }
    }

    /// Amplitudes for exact stochastic-convolution increments, when the noise
    /// is additive and diagonal.
    pub fn exact_amplitudes(&self) -> Option<&[f64]> {
        match &self.source {
            NoiseSource::Constant(NoiseOperator::Diagonal(q)) => Some(q),
            _ => None,
        }
    }
}

/// The SPDE `dX = {AX + b_t(X, L_X)} dt + Q_t(X, L_X) dW` up to the horizon.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub name: String,
    pub spectrum: OperatorSpectrum,
    pub drift: DriftField,
    pub noise: NoiseField,
    pub horizon: f64,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, spectrum: OperatorSpectrum, drift: DriftField, noise: NoiseField, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon T = {horizon} must be positive")));
        }
        let m = spectrum.dim();
        if let Some(op) = noise.constant() {
            spectrum.check_dim(op.dim())?;
        }
        let probe = EmpiricalCloud::from_flat(m, vec![0.0; m])?;
        let x = vec![0.0; m];
        spectrum.check_dim(noise.eval(0.0, &x, &probe).dim())?;
        let b = drift.eval(0.0, &x, &probe);
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("drift is not finite at the origin"));
        }
        Ok(Self { name: name.into(), spectrum, drift, noise, horizon })
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    /// True when neither coefficient reads the law argument.
    pub fn measure_free(&self) -> bool {
        self.drift.measure_free && self.noise.measure_free
    }

    /// The single increasing `K(T)` covering both (a2) and (a3).
    pub fn k_union(&self) -> f64 {
        self.noise
            .op_norm_bound
            .max(self.noise.inverse_bound)
            .max(self.noise.measure_lipschitz)
            .max(self.drift.measure_lipschitz)
    }

    pub(crate) fn step_factors(&self, dt: f64) -> StepFactors {
        StepFactors::new(&self.spectrum, dt)
    }
}
