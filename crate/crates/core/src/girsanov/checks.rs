use rayon::prelude::*;

use super::{
    accumulate_weight, entropy_estimate, tv_lower_bound, CouplingReport, EntropyEstimate, Estimate, HistogramSpec,
    TestFunction, WeightPath,
};
use crate::dynamics::{
    fill_normals, node_time, picard_measure_flow, InitialLaw, MeasureFlow, PicardResult, SchemeConfig, Scratch,
    Stepper,
};
use crate::error::{Error, Result};
use crate::model::{DiniModulus, ModelSpec};
use crate::rng::{StreamKey, StreamKind};
use crate::spectral::{dist_sq, norm};
use crate::transport::{w2_exact, EmpiricalCloud};

/// Relative tolerance of the terminal coupling identities.
const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConfig {
    pub scheme: SchemeConfig,
    pub lambda_weight: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Cells per axis of the TV histogram.
    pub histogram_cells: usize,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self { scheme: SchemeConfig::default(), lambda_weight: 1.0, tol: 1e-6, max_iter: 20, histogram_cells: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShiftMode {
    Log,
    Power(f64),
}

/// Report rows plus the diagnostics behind them.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub rows: Vec<CouplingReport>,
    pub entropy: EntropyEstimate,
    /// Largest `|terminal identity residual| / (1 + |shift|)` over paths.
    pub max_identity_error: Option<f64>,
    /// Picard iteration counts of the flows used.
    pub picard_iterations: Vec<usize>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn row(&self, inequality: &str, f_id: Option<&str>) -> Option<&CouplingReport> {
        self.rows.iter().find(|r| r.inequality == inequality && r.f_id.as_deref() == f_id)
    }
}

/// `K (4T φ(d)² + CW2sq + 2d²/T)`.
pub fn phi_t(k: f64, horizon: f64, phi: &DiniModulus, d: f64, cw2sq: f64) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(Error::invalid(format!("phi_T needs T > 0, got {horizon}")));
    }
    if k < 0.0 || d < 0.0 || cw2sq < 0.0 {
        return Err(Error::invalid("phi_T inputs must be nonnegative"));
    }
    let p = phi.eval(d);
    Ok(k * (4.0 * horizon * p * p + cw2sq + 2.0 * d * d / horizon))
}

enum Construction<'a> {
    /// Same initial point, drift switched from the μ-flow to the ν-flow.
    DriftShift { nu: &'a MeasureFlow },
    /// `Y_t = X_t + e^{At}(T-t)(Y_0-X_0)/T`, with `Y` driven by the ν-flow.
    Bridge { nu: &'a MeasureFlow, nu0: &'a InitialLaw },
    /// `Y_t = X_t + e^{At} t y / T`.
    Shift { y: &'a [f64] },
}

struct PathOutcome {
    weight: WeightPath,
    x_terminal: Vec<f64>,
    /// `X̄_T` for the drift shift; unused otherwise.
    partner_terminal: Vec<f64>,
    initial_gap: f64,
    identity_error: f64,
    /// `Σ |Φ(t*)|² Δt` before applying the inverse noise.
    phi_sq: f64,
}

fn snapshot<'a>(model: &ModelSpec, flow: &'a MeasureFlow, t: f64, placeholder: &'a EmpiricalCloud) -> Result<&'a EmpiricalCloud> {
    if model.measure_free() { Ok(placeholder) } else { flow.at(t) }
}

fn weighted_run(
    model: &ModelSpec,
    mu0: &InitialLaw,
    mu: &MeasureFlow,
    construction: &Construction<'_>,
    cfg: &SchemeConfig,
) -> Result<Vec<PathOutcome>> {
    let (m, horizon, n) = (model.dim(), model.horizon, cfg.steps);
    let h = horizon / n as f64;
    // Girsanov weights need the Brownian increments that drive the path.
    let stepper = Stepper::new(model, h, false)?;
    let placeholder = EmpiricalCloud::empty(m);
    let lambdas = model.spectrum.eigenvalues();
    let semigroup: Vec<Vec<f64>> =
        (0..=n).map(|j| lambdas.iter().map(|l| (-l * node_time(j, horizon, n)).exp()).collect()).collect();
    let mut mus = Vec::with_capacity(n);
    let mut nus = Vec::with_capacity(n);
    for j in 0..n {
        let t = node_time(j, horizon, n);
        mus.push(snapshot(model, mu, t, &placeholder)?);
        match construction {
            Construction::DriftShift { nu } | Construction::Bridge { nu, .. } => nus.push(snapshot(model, nu, t, &placeholder)?),
            Construction::Shift { .. } => {}
        }
    }
    if let Construction::Shift { y } = construction {
        model.spectrum.check_dim(y.len())?;
    }

    (0..cfg.particles as u64)
        .into_par_iter()
        .map(|i| {
            let init_key = StreamKey::new(cfg.seed, StreamKind::Initial, i).with_replicate(cfg.replicate);
            let mut x = vec![0.0; m];
            mu0.sample_into(&mut init_key.rng(), &mut x);
            let mut gap = vec![0.0; m];
            if let Construction::Bridge { nu0, .. } = construction {
                let mut y0 = vec![0.0; m];
                nu0.sample_into(&mut init_key.rng(), &mut y0);
                gap.iter_mut().zip(&y0).zip(&x).for_each(|((g, y), x)| *g = y - x);
            }
            let mut xbar = x.clone();
            let mut rng = StreamKey::new(cfg.seed, StreamKind::Path, i).with_replicate(cfg.replicate).rng();
            let mut s = Scratch::new(m);
            let (mut anchor, mut anchor_bar) = (vec![0.0; m], vec![0.0; m]);
            let (mut b1, mut b2, mut ypos, mut phi) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
            let mut wp = WeightPath::default();
            let mut phi_sq = 0.0;
            for j in 0..n {
                let t = node_time(j, horizon, n);
                let e = &semigroup[j];
                anchor.copy_from_slice(&x);
                model.drift.eval_into(t, &anchor, mus[j], &mut b1);
                match construction {
                    Construction::DriftShift { .. } => {
                        model.drift.eval_into(t, &anchor, nus[j], &mut b2);
                        for k in 0..m {
                            phi[k] = b1[k] - b2[k];
                        }
                    }
                    Construction::Bridge { .. } => {
                        let c = (horizon - t) / horizon;
                        for k in 0..m {
                            ypos[k] = anchor[k] + e[k] * c * gap[k];
                        }
                        model.drift.eval_into(t, &ypos, nus[j], &mut b2);
                        for k in 0..m {
                            phi[k] = b1[k] - b2[k] - e[k] * gap[k] / horizon;
                        }
                    }
                    Construction::Shift { y } => {
                        let c = t / horizon;
                        for k in 0..m {
                            ypos[k] = anchor[k] + e[k] * c * y[k];
                        }
                        model.drift.eval_into(t, &ypos, mus[j], &mut b2);
                        for k in 0..m {
                            phi[k] = b1[k] - b2[k] + e[k] * y[k] / horizon;
                        }
                    }
                }
                phi_sq += phi.iter().map(|v| v * v).sum::<f64>() * h;
                let gamma = model.noise.eval(t, &anchor, mus[j]).shift_gamma(&phi)?;
                fill_normals(&mut rng, &mut s.xi);
                stepper.advance(t, &mut x, &anchor, mus[j], &mut s);
                accumulate_weight(&mut wp, &gamma, &s.dw, h)?;
                if let Construction::DriftShift { .. } = construction {
                    anchor_bar.copy_from_slice(&xbar);
                    stepper.advance(t, &mut xbar, &anchor_bar, nus[j], &mut s);
                }
            }
            let e = &semigroup[n];
            let (initial_gap, identity_error) = match construction {
                Construction::DriftShift { .. } => (0.0, 0.0),
                Construction::Bridge { .. } => {
                    // bridge factor (T - t)/T at t = T
                    let c = (horizon - node_time(n, horizon, n)) / horizon;
                    let y_t: Vec<f64> = (0..m).map(|k| x[k] + e[k] * c * gap[k]).collect();
                    let g = norm(&gap);
                    (g, dist_sq(&y_t, &x).sqrt() / (1.0 + g))
                }
                Construction::Shift { y } => {
                    let y_t: Vec<f64> = (0..m).map(|k| x[k] + e[k] * (node_time(n, horizon, n) / horizon) * y[k]).collect();
                    let r: f64 = (0..m).map(|k| (y_t[k] - x[k] - e[k] * y[k]).powi(2)).sum::<f64>().sqrt();
                    (norm(y), r / (1.0 + norm(y)))
                }
            };
            Ok(PathOutcome { weight: wp, x_terminal: x, partner_terminal: xbar, initial_gap, identity_error, phi_sq })
        })
        .collect()
}

fn cloud_of(dim: usize, rows: impl Iterator<Item = Vec<f64>>) -> Result<EmpiricalCloud> {
    EmpiricalCloud::from_flat(dim, rows.flatten().collect())
}

fn picard(model: &ModelSpec, law: &InitialLaw, cfg: &CouplingConfig) -> Result<PicardResult> {
    picard_measure_flow(model, law, &cfg.scheme, cfg.lambda_weight, cfg.tol, cfg.max_iter)
}

fn initial_w2(mu: &MeasureFlow, nu: &MeasureFlow, n_w: usize) -> Result<f64> {
    w2_exact(&mu.at(0.0)?.head(n_w), &nu.at(0.0)?.head(n_w))
}

/// `(mean, se)` of `g` over the terminal points.
fn mean_of(points: &[PathOutcome], g: impl Fn(&PathOutcome) -> f64) -> Result<Estimate> {
    Estimate::from_samples(&points.iter().map(g).collect::<Vec<_>>())
}

fn pinsker_row(
    a: &EmpiricalCloud,
    b: &EmpiricalCloud,
    ent: &EntropyEstimate,
    cfg: &CouplingConfig,
    horizon: f64,
    w2_initial: f64,
) -> Result<CouplingReport> {
    let tv = tv_lower_bound(a, b, &HistogramSpec::pooled(a, b, cfg.histogram_cells))?;
    Ok(CouplingReport::new(
        "pinsker",
        horizon,
        (2.0 * tv.value * tv.value, 4.0 * tv.value * tv.std_error),
        (ent.direct.value, ent.direct.std_error),
        w2_initial,
        cfg.scheme.seed,
    ))
}

fn identity_row(err: f64, horizon: f64, w2_initial: f64, seed: u64) -> CouplingReport {
    CouplingReport::new("coupling-identity", horizon, (err, 0.0), (IDENTITY_TOL, 0.0), w2_initial, seed)
}

/// Entropy, log-Harnack and Pinsker rows for the drift-shift coupling of the
/// solutions from `mu0` and `nu0`.
pub fn log_harnack_entropy_check(
    model: &ModelSpec,
    mu0: &InitialLaw,
    nu0: &InitialLaw,
    fs: &[TestFunction],
    cfg: &CouplingConfig,
) -> Result<CheckOutcome> {
    if !model.noise.measure_free {
        return Err(Error::Hypothesis("log-Harnack needs noise independent of the law".into()));
    }
    let horizon = model.horizon;
    let seed = cfg.scheme.seed;
    let mu = picard(model, mu0, cfg)?;
    let nu = picard(model, nu0, cfg)?;
    let w2_initial = initial_w2(&mu.flow, &nu.flow, cfg.scheme.w2_particles)?;
    let paths = weighted_run(model, mu0, &mu.flow, &Construction::DriftShift { nu: &nu.flow }, &cfg.scheme)?;
    let weights: Vec<WeightPath> = paths.iter().map(|p| p.weight).collect();
    let ent = entropy_estimate(&weights)?;

    let mut rows = vec![CouplingReport::new(
        "log-harnack-entropy",
        horizon,
        (ent.direct.value, ent.direct.std_error),
        (ent.girsanov.value, ent.girsanov.std_error),
        w2_initial,
        seed,
    )];
    for f in fs {
        let lhs = mean_of(&paths, |p| p.weight.weight() * f.eval(&p.x_terminal).ln())?;
        let base = mean_of(&paths, |p| f.eval(&p.x_terminal))?;
        let rhs = base.value.ln() + ent.direct.value;
        let rhs_se = (base.std_error / base.value).hypot(ent.direct.std_error);
        rows.push(
            CouplingReport::new("log-harnack", horizon, (lhs.value, lhs.std_error), (rhs, rhs_se), w2_initial, seed)
                .with_f(f.id()),
        );
    }
    let m = model.dim();
    let x_t = cloud_of(m, paths.iter().map(|p| p.x_terminal.clone()))?;
    let xbar_t = cloud_of(m, paths.iter().map(|p| p.partner_terminal.clone()))?;
    rows.push(pinsker_row(&x_t, &xbar_t, &ent, cfg, horizon, w2_initial)?);
    Ok(CheckOutcome {
        rows,
        entropy: ent,
        max_identity_error: None,
        picard_iterations: vec![mu.iterations(), nu.iterations()],
    })
}

/// Power-`p` Harnack rows for the bridge coupling from `mu0` to `nu0`.
pub fn harnack_power_check(
    model: &ModelSpec,
    mu0: &InitialLaw,
    nu0: &InitialLaw,
    p: f64,
    fs: &[TestFunction],
    cfg: &CouplingConfig,
) -> Result<CheckOutcome> {
    if !model.noise.is_additive() {
        return Err(Error::Hypothesis("power Harnack needs additive noise".into()));
    }
    if !(p > 1.0) {
        return Err(Error::invalid(format!("Harnack power p = {p} must exceed 1")));
    }
    let horizon = model.horizon;
    let seed = cfg.scheme.seed;
    let n_w = cfg.scheme.w2_particles;
    let mu = picard(model, mu0, cfg)?;
    let nu = picard(model, nu0, cfg)?;
    let w2_initial = initial_w2(&mu.flow, &nu.flow, n_w)?;
    let paths = weighted_run(model, mu0, &mu.flow, &Construction::Bridge { nu: &nu.flow, nu0 }, &cfg.scheme)?;
    let weights: Vec<WeightPath> = paths.iter().map(|p| p.weight).collect();
    let ent = entropy_estimate(&weights)?;

    // measured replacement of the C(T) W2(μ0,ν0)² term: 4 K_b² ∫ W2(μ_t,ν_t)² dt
    let times = cfg.scheme.output_times(horizon);
    let w2sq = times
        .iter()
        .map(|&t| Ok(w2_exact(&mu.flow.at(t)?.head(n_w), &nu.flow.at(t)?.head(n_w))?.powi(2)))
        .collect::<Result<Vec<f64>>>()?;
    let integral: f64 = times.windows(2).zip(w2sq.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum();
    let kb = if model.drift.measure_free { 0.0 } else { model.drift.measure_lipschitz };
    let cw2sq = 4.0 * kb * kb * integral;
    let k = model.noise.inverse_bound;
    let phis = paths
        .iter()
        .map(|pth| phi_t(k, horizon, &model.drift.modulus, pth.initial_gap, cw2sq))
        .collect::<Result<Vec<f64>>>()?;
    let c = p / (2.0 * (p - 1.0) * (p - 1.0));
    let moment = Estimate::from_samples(&phis.iter().map(|phi| (c * phi).exp()).collect::<Vec<_>>())?;
    let factor = moment.value.powf(p - 1.0);
    let factor_se = (p - 1.0) * moment.value.powf(p - 2.0) * moment.std_error;
    let phi_mean = phis.iter().sum::<f64>() / phis.len() as f64;

    let mut rows = Vec::new();
    for f in fs {
        let weighted = mean_of(&paths, |pth| pth.weight.weight() * f.eval(&pth.x_terminal))?;
        let direct = mean_of(&paths, |pth| f.eval(&pth.x_terminal).powf(p))?;
        let lhs = weighted.value.powf(p);
        let lhs_se = p * weighted.value.powf(p - 1.0) * weighted.std_error;
        let rhs = direct.value * factor;
        let rhs_se = (factor * direct.std_error).hypot(direct.value * factor_se);
        rows.push(
            CouplingReport::new("harnack-power", horizon, (lhs, lhs_se), (rhs, rhs_se), w2_initial, seed)
                .with_p(p)
                .with_f(f.id())
                .with_phi_t(phi_mean),
        );
    }
    let max_err = paths.iter().map(|p| p.identity_error).fold(0.0, f64::max);
    rows.push(identity_row(max_err, horizon, w2_initial, seed).with_p(p));
    let m = model.dim();
    let x_t = cloud_of(m, paths.iter().map(|p| p.x_terminal.clone()))?;
    let nu_t = nu.flow.last().expect("flow has a terminal snapshot").head(x_t.len());
    rows.push(pinsker_row(&x_t, &nu_t, &ent, cfg, horizon, w2_initial)?.with_p(p));
    Ok(CheckOutcome {
        rows,
        entropy: ent,
        max_identity_error: Some(max_err),
        picard_iterations: vec![mu.iterations(), nu.iterations()],
    })
}

/// Shift-Harnack rows for `Y_t = X_t + e^{At} t y / T`.
pub fn shift_harnack_check(
    model: &ModelSpec,
    mu0: &InitialLaw,
    y: &[f64],
    mode: ShiftMode,
    fs: &[TestFunction],
    cfg: &CouplingConfig,
) -> Result<CheckOutcome> {
    if !model.noise.x_free {
        return Err(Error::Hypothesis("shift Harnack needs noise independent of x".into()));
    }
    if let ShiftMode::Power(p) = mode {
        if !(p > 1.0) {
            return Err(Error::invalid(format!("Harnack power p = {p} must exceed 1")));
        }
    }
    if let (ShiftMode::Log, Some(f)) = (mode, fs.iter().find(|f| f.bounds().0 < 0.0)) {
        return Err(Error::invalid(format!("log mode needs a positive test function, {} is not", f.id())));
    }
    let horizon = model.horizon;
    let seed = cfg.scheme.seed;
    let mu = picard(model, mu0, cfg)?;
    let paths = weighted_run(model, mu0, &mu.flow, &Construction::Shift { y }, &cfg.scheme)?;
    let weights: Vec<WeightPath> = paths.iter().map(|p| p.weight).collect();
    let ent = entropy_estimate(&weights)?;

    let m = model.dim();
    let shift_t: Vec<f64> =
        model.spectrum.eigenvalues().iter().zip(y).map(|(l, v)| (-l * horizon).exp() * v).collect();
    let shifted = |x: &[f64]| -> Vec<f64> { x.iter().zip(&shift_t).map(|(a, b)| a + b).collect() };
    let ny = norm(y);
    let phi_y = model.drift.modulus.eval(ny);
    let k = model.noise.inverse_bound;
    let cost = k * (horizon * phi_y * phi_y + ny * ny / horizon);

    let mut rows = Vec::new();
    for f in fs {
        let moved = |pth: &PathOutcome| f.eval(&shifted(&pth.x_terminal));
        let row = match mode {
            ShiftMode::Log => {
                let lhs = mean_of(&paths, |pth| f.eval(&pth.x_terminal).ln())?;
                let base = mean_of(&paths, moved)?;
                let rhs = base.value.ln() + cost;
                CouplingReport::new(
                    "shift-harnack-log",
                    horizon,
                    (lhs.value, lhs.std_error),
                    (rhs, base.std_error / base.value),
                    0.0,
                    seed,
                )
            }
            ShiftMode::Power(p) => {
                let direct = mean_of(&paths, |pth| f.eval(&pth.x_terminal))?;
                let base = mean_of(&paths, |pth| moved(pth).powf(p))?;
                let factor = (p / (p - 1.0) * cost).exp();
                CouplingReport::new(
                    "shift-harnack-power",
                    horizon,
                    (direct.value.powf(p), p * direct.value.powf(p - 1.0) * direct.std_error),
                    (base.value * factor, base.std_error * factor),
                    0.0,
                    seed,
                )
                .with_p(p)
            }
        };
        rows.push(row.with_f(f.id()).with_phi_t(cost));
    }
    let worst = paths.iter().map(|p| p.phi_sq).fold(0.0, f64::max);
    let bound = 2.0 * horizon * phi_y * phi_y + 2.0 * ny * ny / horizon;
    // round-off allowance on the accumulated sum
    let slack = 1e-12 * (1.0 + bound);
    rows.push(CouplingReport::new("shift-harnack-pathwise", horizon, (worst, 0.0), (bound + slack, 0.0), 0.0, seed));
    let max_err = paths.iter().map(|p| p.identity_error).fold(0.0, f64::max);
    rows.push(identity_row(max_err, horizon, 0.0, seed));
    let x_t = cloud_of(m, paths.iter().map(|p| p.x_terminal.clone()))?;
    rows.push(pinsker_row(&x_t, &x_t.translated(&shift_t), &ent, cfg, horizon, 0.0)?);
    if let ShiftMode::Power(p) = mode {
        for r in rows.iter_mut().filter(|r| r.p.is_none()) {
            r.p = Some(p);
        }
    }
    Ok(CheckOutcome {
        rows,
        entropy: ent,
        max_identity_error: Some(max_err),
        picard_iterations: vec![mu.iterations()],
    })
}
