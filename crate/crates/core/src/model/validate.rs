//! Sampling spot-checks of assumptions (a1)-(a3).
//!
//! These are not proofs: (a2) and (a3) quantify over uncountable sets, and the
//! report only says no violation was found among the sampled points.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::model::fields::ModelSpec;
use crate::rng::{stream, StreamKind};
use crate::spectral::{dist_sq, trace_class_sum, TraceVerdict};
use crate::transport::{w2_exact, EmpiricalCloud};

/// Points per sampled measure argument.
const CLOUD_SIZE: usize = 8;

/// Relative round-off allowance when comparing a sampled value with its bound.
const ROUNDOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clause {
    /// Trace-class condition on `(-A)^{ε-1}`.
    A1,
    /// The declared modulus belongs to the Dini class.
    Modulus,
    /// Noise bounds, invertibility and declared independence flags.
    A2,
    /// Continuity of the noise in the law argument.
    A2Continuity,
    /// Modulus-plus-W2 continuity of the drift.
    A3,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Clause::A1 => "a1",
            Clause::Modulus => "modulus",
            Clause::A2 => "a2",
            Clause::A2Continuity => "a2-measure-continuity",
            Clause::A3 => "a3",
        })
    }
}

/// Sampled arguments at which a clause failed, with the (negative) margin.
#[derive(Debug, Clone)]
pub struct Witness {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mu: EmpiricalCloud,
    pub nu: EmpiricalCloud,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct ClauseReport {
    pub clause: Clause,
    pub passed: bool,
    pub detail: String,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub model: String,
    pub samples: usize,
    pub seed: u64,
    pub clauses: Vec<ClauseReport>,
}

impl ValidationReport {
    pub const NOTE: &'static str = "sampling spot-check, not a proof";

    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn clause(&self, clause: Clause) -> &ClauseReport {
        self.clauses.iter().find(|c| c.clause == clause).expect("every clause is reported")
    }
}

fn sample_vec<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn sample_cloud<R: Rng>(rng: &mut R, dim: usize) -> EmpiricalCloud {
    let data = sample_vec(rng, dim * CLOUD_SIZE, 1.0);
    EmpiricalCloud::from_flat(dim, data).expect("whole number of points")
}

/// Spot-checks each clause on `samples` random argument tuples.
pub fn validate_assumptions(model: &ModelSpec, samples: usize, seed: u64) -> Result<ValidationReport> {
    let m = model.dim();
    let mut rng = stream(seed, StreamKind::Validation, 0);
    let mut clauses = Vec::new();

    let trace = trace_class_sum(&model.spectrum);
    clauses.push(match trace.verdict {
        TraceVerdict::Divergent { exponent } => ClauseReport {
            clause: Clause::A1,
            passed: false,
            detail: format!("assumption (a1) violated: tail terms decay like k^{exponent} (exponent >= -1)"),
            witness: None,
        },
        TraceVerdict::Convergent => ClauseReport {
            clause: Clause::A1,
            passed: true,
            detail: format!("sum lambda_k^(eps-1) = {:.6} (upper bound {:.6})", trace.estimate(), trace.upper()),
            witness: None,
        },
        TraceVerdict::Truncated => ClauseReport {
            clause: Clause::A1,
            passed: true,
            detail: format!("truncated verdict: sum over {m} explicit modes = {:.6}, no tail declared", trace.partial),
            witness: None,
        },
    });

    let cert = model.drift.modulus.certificate();
    clauses.push(ClauseReport { clause: Clause::Modulus, passed: cert.passed(), detail: cert.summary(), witness: None });

    // (a2): bounds, invertibility, declared flags; (1.3): measure continuity
    let mut max_norm: f64 = 0.0;
    let mut max_inv: f64 = 0.0;
    let mut max_ratio: f64 = 0.0;
    let mut flag_violation: Option<(String, Witness)> = None;
    let mut a2_witness: Option<Witness> = None;
    let mut cont_witness: Option<Witness> = None;
    // (a3)
    let mut worst_margin = f64::INFINITY;
    let mut margin_sum = 0.0;
    let mut a3_witness: Option<Witness> = None;

    for i in 0..samples {
        let t = rng.random::<f64>() * model.horizon;
        // pairs at scales 10^0 .. 10^-6; odd samples straddle the origin
        let scale = 10f64.powf(-6.0 * rng.random::<f64>());
        let (x, y) = if i % 2 == 0 {
            let x = sample_vec(&mut rng, m, 1.0);
            let d = sample_vec(&mut rng, m, scale);
            let y = x.iter().zip(&d).map(|(a, b)| a + b).collect();
            (x, y)
        } else {
            (sample_vec(&mut rng, m, scale), sample_vec(&mut rng, m, scale))
        };
        let mu = sample_cloud(&mut rng, m);
        let nu = if i % 3 == 0 {
            mu.clone()
        } else {
            let shift_scale = 10f64.powf(-3.0 * rng.random::<f64>());
            let shift = sample_vec(&mut rng, m, shift_scale);
            let jitter_scale = 0.1 * rng.random::<f64>();
            let jitter = sample_vec(&mut rng, m * CLOUD_SIZE, jitter_scale);
            let data = mu.as_flat().iter().zip(&jitter).enumerate().map(|(j, (v, e))| v + e + shift[j % m]).collect();
            EmpiricalCloud::from_flat(m, data)?
        };
        let w2 = w2_exact(&mu, &nu)?;
        let witness = |margin: f64| Witness { t, x: x.clone(), y: y.clone(), mu: mu.clone(), nu: nu.clone(), margin };

        let qx = model.noise.eval(t, &x, &mu);
        let (norm, inv) = qx.norms();
        max_norm = max_norm.max(norm);
        max_inv = max_inv.max(inv);
        let a2_margin = (model.noise.op_norm_bound - norm).min(model.noise.inverse_bound - inv);
        if a2_margin < -ROUNDOFF * (1.0 + norm.max(inv)) && a2_witness.as_ref().is_none_or(|w| a2_margin < w.margin) {
            a2_witness = Some(witness(a2_margin));
        }
        if model.noise.x_free && flag_violation.is_none() && model.noise.eval(t, &y, &mu).hs_distance_sq(&qx) > 0.0 {
            flag_violation = Some(("noise declared x-free but depends on x".into(), witness(-1.0)));
        }
        let qnu = model.noise.eval(t, &x, &nu);
        let hs = qnu.hs_distance_sq(&qx);
        if model.noise.measure_free && hs > 0.0 && flag_violation.is_none() {
            flag_violation = Some(("noise declared measure-free but depends on the law".into(), witness(-1.0)));
        }
        if hs > 0.0 {
            let ratio = if w2 > 0.0 { hs / (w2 * w2) } else { f64::INFINITY };
            max_ratio = max_ratio.max(ratio);
            let margin = model.noise.measure_lipschitz * w2 * w2 - hs;
            if margin < -ROUNDOFF * (1.0 + hs) && cont_witness.as_ref().is_none_or(|w| margin < w.margin) {
                cont_witness = Some(witness(margin));
            }
        }

        let bx = model.drift.eval(t, &x, &mu);
        let by = model.drift.eval(t, &y, &nu);
        let diff = dist_sq(&bx, &by).sqrt();
        let bound = model.drift.modulus.eval(dist_sq(&x, &y).sqrt()) + model.drift.measure_lipschitz * w2;
        let margin = bound - diff;
        worst_margin = worst_margin.min(margin);
        margin_sum += margin;
        if margin < -ROUNDOFF * (1.0 + diff) && a3_witness.as_ref().is_none_or(|w| margin < w.margin) {
            a3_witness = Some(witness(margin));
        }
    }

    let a2_passed = a2_witness.is_none() && flag_violation.is_none();
    let mut a2_detail = format!(
        "max ||Q|| = {max_norm:.6} (declared {}), max ||(QQ*)^-1|| = {max_inv:.6} (declared K_Q = {})",
        model.noise.op_norm_bound, model.noise.inverse_bound
    );
    if let Some((msg, _)) = &flag_violation {
        a2_detail.push_str("; ");
        a2_detail.push_str(msg);
    }
    clauses.push(ClauseReport {
        clause: Clause::A2,
        passed: a2_passed,
        detail: a2_detail,
        witness: a2_witness.or(flag_violation.map(|(_, w)| w)),
    });
    clauses.push(ClauseReport {
        clause: Clause::A2Continuity,
        passed: cont_witness.is_none(),
        detail: format!(
            "max ||Q(x,mu)-Q(x,nu)||_HS^2 / W2^2 = {max_ratio:.6} (declared {})",
            model.noise.measure_lipschitz
        ),
        witness: cont_witness,
    });
    let mean_margin = if samples > 0 { margin_sum / samples as f64 } else { 0.0 };
    clauses.push(ClauseReport {
        clause: Clause::A3,
        passed: a3_witness.is_none(),
        detail: format!(
            "phi(|x-y|) + K_b W2 - |b(x,mu)-b(y,nu)|: min {worst_margin:.6e}, mean {mean_margin:.6e} (K_b = {})",
            model.drift.measure_lipschitz
        ),
        witness: a3_witness,
    });

    Ok(ValidationReport { model: model.name.clone(), samples, seed, clauses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::registry::{build, ModelParams};
    use crate::spectral::OperatorSpectrum;

    fn spectrum(eps: f64) -> OperatorSpectrum {
        OperatorSpectrum::power_law(1.0, 2.0, 4, eps).unwrap()
    }

    #[test]
    fn ou_passes() {
        let p = ModelParams { theta: 1.0, radius: 5.0, ..Default::default() };
        let model = build("ou", &p, spectrum(0.25), 1.0).unwrap();
        let r = validate_assumptions(&model, 400, 3).unwrap();
        assert!(r.passed(), "{:#?}", r.clauses);
        // measure-free noise: continuity ratio is identically zero
        assert!(r.clause(Clause::A2Continuity).detail.contains("= 0.000000"));
    }

    #[test]
    fn sign_drift_fails_a3_with_straddling_witness() {
        let model = build("sign-drift", &ModelParams::default(), spectrum(0.25), 1.0).unwrap();
        let r = validate_assumptions(&model, 200, 3).unwrap();
        let a3 = r.clause(Clause::A3);
        assert!(!a3.passed);
        let w = a3.witness.as_ref().unwrap();
        assert!(w.x[0] * w.y[0] < 0.0, "witness should straddle the jump: {w:?}");
        assert!(w.margin < -0.5);
    }

    #[test]
    fn divergent_trace_fails_a1() {
        let model = build("ou", &ModelParams::default(), spectrum(0.6), 1.0).unwrap();
        let r = validate_assumptions(&model, 10, 3).unwrap();
        assert!(!r.clause(Clause::A1).passed);
        assert!(r.clause(Clause::A1).detail.contains("(a1)"));
    }

    #[test]
    fn deterministic_given_seed() {
        let model = build("dini-drift", &ModelParams::default(), spectrum(0.25), 1.0).unwrap();
        let a = validate_assumptions(&model, 100, 11).unwrap();
        let b = validate_assumptions(&model, 100, 11).unwrap();
        let details = |r: &ValidationReport| r.clauses.iter().map(|c| c.detail.clone()).collect::<Vec<_>>();
        assert_eq!(details(&a), details(&b));
    }
}
