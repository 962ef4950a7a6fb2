//! Truncated spectral calculus for the linear part `A`.
//!
//! `-A` is diagonal in the basis `e_1, e_2, ...` with eigenvalues
//! `0 < λ_1 <= λ_2 <= ...`. The basis is never materialized: a state is its
//! list of the first `M` coefficients, and `e^{At}` acts mode-wise as
//! multiplication by `e^{-λ_k t}`.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::quad;

/// Relative spread allowed when checking that the last quartile of an explicit
/// eigenvalue list follows the declared `c·k^p` tail.
pub const TAIL_FIT_TOLERANCE: f64 = 0.05;

/// A vector of the truncated Hilbert space, stored as its `⟨x, e_k⟩`
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct HilbertVector(Vec<f64>);

impl HilbertVector {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if let Some(k) = coefficients.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("coefficient {k} is not finite")));
        }
        Ok(Self(coefficients))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// The basis vector `e_k` (1-based `k`, as in the mode numbering).
    pub fn unit(dim: usize, k: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[k - 1] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|c| c * factor).collect())
    }
}

impl Deref for HilbertVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for HilbertVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<HilbertVector> for Vec<f64> {
    fn from(v: HilbertVector) -> Self {
        v.0
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub(crate) fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Declared asymptotics `λ_k ~ coefficient · k^exponent` beyond the explicit modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTail {
    pub exponent: f64,
    pub coefficient: f64,
}

/// Eigenvalues of `-A` up to the truncation level, with the trace exponent ε
/// of assumption (a1).
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpectrum {
    eigenvalues: Vec<f64>,
    trace_exponent: f64,
    tail: Option<PowerTail>,
}

impl OperatorSpectrum {
    /// `λ_k = c · k^p` for `k = 1..=m`, with the same law declared as the tail.
    pub fn power_law(c: f64, p: f64, m: usize, eps: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidSpectrum(format!("coefficient c = {c} must be positive")));
        }
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidSpectrum(format!("tail exponent p = {p} must be positive")));
        }
        let eigenvalues = (1..=m).map(|k| c * (k as f64).powf(p)).collect();
        Self::build(eigenvalues, eps, Some(PowerTail { exponent: p, coefficient: c }))
    }

    /// An explicit ascending list. When `tail_exponent` is given, the tail
    /// coefficient is fitted on the last quartile, which must follow `k^p`
    /// within [`TAIL_FIT_TOLERANCE`].
    pub fn from_eigenvalues(eigenvalues: Vec<f64>, eps: f64, tail_exponent: Option<f64>) -> Result<Self> {
        let tail = match tail_exponent {
            None => None,
            Some(p) => {
                if !(p > 0.0 && p.is_finite()) {
                    return Err(Error::InvalidSpectrum(format!("tail exponent p = {p} must be positive")));
                }
                let m = eigenvalues.len();
                let start = (3 * m) / 4;
                let ratios: Vec<f64> = (start..m)
                    .map(|i| eigenvalues[i] / ((i + 1) as f64).powf(p))
                    .collect();
                let (lo, hi) = ratios
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)));
                if ratios.is_empty() || !(lo > 0.0) || hi / lo - 1.0 > TAIL_FIT_TOLERANCE {
                    return Err(Error::InvalidSpectrum(format!(
                        "last quartile does not follow k^{p}: λ_k/k^p ranges over [{lo}, {hi}]"
                    )));
                }
                Some(PowerTail { exponent: p, coefficient: *ratios.last().unwrap() })
            }
        };
        Self::build(eigenvalues, eps, tail)
    }

    fn build(eigenvalues: Vec<f64>, eps: f64, tail: Option<PowerTail>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidSpectrum("at least one eigenvalue is required".into()));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidSpectrum(format!("trace_exponent out of (0,1): {eps}")));
        }
        if !(eigenvalues[0] > 0.0) {
            return Err(Error::InvalidSpectrum(format!("λ_1 = {} must be positive", eigenvalues[0])));
        }
        for (i, w) in eigenvalues.windows(2).enumerate() {
            if !(w[0] <= w[1]) || !w[1].is_finite() {
                return Err(Error::InvalidSpectrum(format!(
                    "eigenvalues not ascending at modes {} and {}",
                    i + 1,
                    i + 2
                )));
            }
        }
        Ok(Self { eigenvalues, trace_exponent: eps, tail })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Truncation level `M`.
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn trace_exponent(&self) -> f64 {
        self.trace_exponent
    }

    pub fn tail(&self) -> Option<PowerTail> {
        self.tail
    }

    pub(crate) fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got });
        }
        Ok(())
    }
}

/// `e^{At} v`, mode-wise `e^{-λ_k t} v_k`.
pub fn semigroup_apply(spec: &OperatorSpectrum, t: f64, v: &HilbertVector) -> Result<HilbertVector> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    spec.check_dim(v.dim())?;
    Ok(HilbertVector(
        spec.eigenvalues.iter().zip(v.iter()).map(|(l, x)| (-l * t).exp() * x).collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceVerdict {
    /// The declared tail makes `Σ λ_k^{ε-1}` finite.
    Convergent,
    /// No tail declared: only the explicit modes were summed.
    Truncated,
    /// The declared tail decays like `k^exponent` with `exponent >= -1`.
    Divergent { exponent: f64 },
}

/// Outcome of the trace-class check of assumption (a1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSum {
    /// `Σ_{k<=M} λ_k^{ε-1}`.
    pub partial: f64,
    /// Integral-test upper bound on the tail `Σ_{k>M}`; `None` without a tail.
    pub tail_bound: Option<f64>,
    /// Midpoint (Euler-Maclaurin) estimate of the tail.
    pub tail_estimate: Option<f64>,
    pub verdict: TraceVerdict,
}

impl TraceSum {
    /// Best estimate of the full sum.
    pub fn estimate(&self) -> f64 {
        self.partial + self.tail_estimate.unwrap_or(0.0)
    }

    /// Rigorous upper bound on the full sum (the partial sum when truncated).
    pub fn upper(&self) -> f64 {
        self.partial + self.tail_bound.unwrap_or(0.0)
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self.verdict, TraceVerdict::Divergent { .. })
    }

    pub fn require_convergent(&self) -> Result<&Self> {
        match self.verdict {
            TraceVerdict::Divergent { exponent } => Err(Error::TraceClassDivergent { exponent }),
            _ => Ok(self),
        }
    }
}

/// `Σ λ_k^{ε-1}` over the explicit modes plus the integral-test tail.
pub fn trace_class_sum(spec: &OperatorSpectrum) -> TraceSum {
    let e = spec.trace_exponent - 1.0;
    let partial = spec.eigenvalues.iter().map(|l| l.powf(e)).sum();
    let Some(tail) = spec.tail else {
        return TraceSum { partial, tail_bound: None, tail_estimate: None, verdict: TraceVerdict::Truncated };
    };
    // λ_k^{ε-1} ~ c^{ε-1} k^{p(ε-1)}
    let exponent = tail.exponent * e;
    if exponent >= -1.0 {
        return TraceSum {
            partial,
            tail_bound: Some(f64::INFINITY),
            tail_estimate: Some(f64::INFINITY),
            verdict: TraceVerdict::Divergent { exponent },
        };
    }
    let m = spec.dim() as f64;
    let scale = tail.coefficient.powf(e);
    let from = |x: f64| scale * x.powf(exponent + 1.0) / -(exponent + 1.0);
    TraceSum {
        partial,
        tail_bound: Some(from(m)),
        tail_estimate: Some(from(m + 0.5)),
        verdict: TraceVerdict::Convergent,
    }
}

/// Quadrature value of `∫_0^t r^{-ε} ||e^{Ar}||²_HS dr` over the explicit
/// modes together with the bound `2^{ε-1} Γ(1-ε) Σ λ_k^{ε-1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsConvolution {
    pub integral: f64,
    pub integral_error: f64,
    pub bound: f64,
}

pub fn hs_convolution_bound(spec: &OperatorSpectrum, t: f64) -> Result<HsConvolution> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    let sum = trace_class_sum(spec);
    sum.require_convergent()?;
    let eps = spec.trace_exponent;
    let bound = 2f64.powf(eps - 1.0) * statrs::function::gamma::gamma(1.0 - eps) * sum.upper();

    // r = u^{1/(1-ε)} turns r^{-ε} dr into du/(1-ε)
    let power = 1.0 / (1.0 - eps);
    let integrand = |u: f64| {
        let r = u.powf(power);
        spec.eigenvalues.iter().map(|l| (-2.0 * l * r).exp()).sum::<f64>() * power
    };
    let upper = if t.is_infinite() { f64::INFINITY } else { t.powf(1.0 - eps) };
    let q = if upper.is_infinite() {
        // the lowest mode decays like e^{-2λ_1 r}; 60/λ_1 in r is far past machine precision
        let cut = (60.0 / spec.eigenvalues[0]).powf(1.0 - eps);
        quad::integrate(integrand, 0.0, cut, 1e-13, 1e-11)
    } else {
        quad::integrate(integrand, 0.0, upper, 1e-13, 1e-11)
    };
    Ok(HsConvolution { integral: q.value, integral_error: q.error, bound })
}

/// Per-mode variance of the stochastic convolution `∫_0^dt e^{A(dt-s)} q dW_s`
/// for diagonal x-free noise: `q_k² (1 - e^{-2λ_k dt}) / (2λ_k)`.
pub fn stochastic_convolution_variance(spec: &OperatorSpectrum, q: &[f64], dt: f64) -> Result<Vec<f64>> {
    if dt < 0.0 || dt.is_nan() {
        return Err(Error::NegativeTime(dt));
    }
    spec.check_dim(q.len())?;
    if let Some(k) = q.iter().position(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("noise amplitude {k} is not finite")));
    }
    Ok(spec
        .eigenvalues
        .iter()
        .zip(q)
        .map(|(l, qk)| {
            if dt.is_infinite() {
                qk * qk / (2.0 * l)
            } else {
                qk * qk * -(-2.0 * l * dt).exp_m1() / (2.0 * l)
            }
        })
        .collect())
}

/// Mode-wise factors of one exponential-Euler step of length `dt`.
#[derive(Debug, Clone)]
pub(crate) struct StepFactors {
    /// `e^{-λ_k dt}`
    pub decay: Vec<f64>,
    /// `(1 - e^{-λ_k dt}) / λ_k`, the integrated semigroup
    pub drift: Vec<f64>,
    /// `sqrt((1 - e^{-2λ_k dt}) / (2λ_k))`, exact convolution std per unit amplitude
    pub exact_std: Vec<f64>,
}

impl StepFactors {
    pub fn new(spec: &OperatorSpectrum, dt: f64) -> Self {
        let l = &spec.eigenvalues;
        Self {
            decay: l.iter().map(|l| (-l * dt).exp()).collect(),
            drift: l.iter().map(|l| -(-l * dt).exp_m1() / l).collect(),
            exact_std: l.iter().map(|l| (-(-2.0 * l * dt).exp_m1() / (2.0 * l)).sqrt()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_mode() -> OperatorSpectrum {
        OperatorSpectrum::from_eigenvalues(vec![1.0, 4.0], 0.5, None).unwrap()
    }

    #[test]
    fn semigroup_identity_and_values() {
        let s = two_mode();
        let v = HilbertVector::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(semigroup_apply(&s, 0.0, &v).unwrap(), v);
        let r = semigroup_apply(&s, 1.0, &v).unwrap();
        assert!((r[0] - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!((r[1] - 0.018_315_638_888_734_18).abs() < 1e-15);
    }

    #[test]
    fn semigroup_contracts_at_rate_lambda_one() {
        let s = two_mode();
        let v = HilbertVector::new(vec![0.6, 0.8]).unwrap();
        let r = semigroup_apply(&s, 1.0, &v).unwrap();
        assert!(r.norm() <= (-1.0f64).exp() + 1e-15);
    }

    #[test]
    fn semigroup_rejects_negative_time_and_bad_dim() {
        let s = two_mode();
        let v = HilbertVector::zeros(2);
        assert!(matches!(semigroup_apply(&s, -0.1, &v), Err(Error::NegativeTime(_))));
        let w = HilbertVector::zeros(3);
        assert!(matches!(semigroup_apply(&s, 0.1, &w), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn spectrum_invariants() {
        assert!(OperatorSpectrum::from_eigenvalues(vec![0.0, 1.0], 0.5, None).is_err());
        assert!(OperatorSpectrum::from_eigenvalues(vec![2.0, 1.0], 0.5, None).is_err());
        assert!(OperatorSpectrum::from_eigenvalues(vec![1.0, 1.0], 0.5, None).is_ok());
        assert!(OperatorSpectrum::from_eigenvalues(vec![1.0], 1.0, None).is_err());
        assert!(OperatorSpectrum::from_eigenvalues(vec![1.0], 0.0, None).is_err());
        let bad_tail: Vec<f64> = (1..=8).map(|k| (k as f64).powi(3)).collect();
        assert!(OperatorSpectrum::from_eigenvalues(bad_tail, 0.25, Some(2.0)).is_err());
        let good: Vec<f64> = (1..=8).map(|k| 3.0 * (k as f64).powi(2)).collect();
        let s = OperatorSpectrum::from_eigenvalues(good, 0.25, Some(2.0)).unwrap();
        assert!((s.tail().unwrap().coefficient - 3.0).abs() < 1e-12);
    }

    #[test]
    fn trace_sum_single_term() {
        let s = OperatorSpectrum::from_eigenvalues(vec![2.0], 0.5, None).unwrap();
        let t = trace_class_sum(&s);
        assert!((t.estimate() - 0.707_106_781_186_547_5).abs() < 1e-15);
        assert_eq!(t.verdict, TraceVerdict::Truncated);
    }

    #[test]
    fn trace_sum_divergent_exponent() {
        let s = OperatorSpectrum::power_law(1.0, 2.0, 8, 0.6).unwrap();
        let t = trace_class_sum(&s);
        match t.verdict {
            TraceVerdict::Divergent { exponent } => assert!((exponent + 0.8).abs() < 1e-12),
            v => panic!("expected divergence, got {v:?}"),
        }
        assert!(matches!(t.require_convergent(), Err(Error::TraceClassDivergent { .. })));
        assert!(matches!(hs_convolution_bound(&s, 1.0), Err(Error::TraceClassDivergent { .. })));
    }

    #[test]
    fn variance_limits() {
        let s = OperatorSpectrum::power_law(1.0, 2.0, 3, 0.25).unwrap();
        assert_eq!(stochastic_convolution_variance(&s, &[1.0; 3], 0.0).unwrap(), vec![0.0; 3]);
        let v = stochastic_convolution_variance(&s, &[1.0; 3], 1.0).unwrap();
        assert!((v[0] - 0.432_332_358_381_693_65).abs() < 1e-15);
        let v = stochastic_convolution_variance(&s, &[1.0; 3], f64::INFINITY).unwrap();
        assert_eq!(v[0], 0.5);
        assert!(stochastic_convolution_variance(&s, &[1.0; 3], -1.0).is_err());
    }

    #[test]
    fn hs_integral_vanishes_at_zero() {
        let s = OperatorSpectrum::power_law(1.0, 2.0, 16, 0.25).unwrap();
        let h = hs_convolution_bound(&s, 0.0).unwrap();
        assert_eq!(h.integral, 0.0);
        assert!(h.bound > 0.0);
    }
}
