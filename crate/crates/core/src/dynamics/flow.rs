use std::io::Write;

use super::{node_time, InitialLaw, ParticleEnsemble, SchemeConfig, Stepper};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::transport::{w2_exact, EmpiricalCloud};

/// Snapshots `t ↦ μ̂_t` on an ascending time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureFlow {
    times: Vec<f64>,
    clouds: Vec<EmpiricalCloud>,
}

impl MeasureFlow {
    pub fn new(times: Vec<f64>, clouds: Vec<EmpiricalCloud>) -> Result<Self> {
        if times.len() != clouds.len() {
            return Err(Error::SizeMismatch(times.len(), clouds.len()));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("flow time grid must be strictly ascending"));
        }
        if let Some(first) = clouds.first() {
            if let Some(bad) = clouds.iter().find(|c| c.dim() != first.dim()) {
                return Err(Error::DimensionMismatch { expected: first.dim(), got: bad.dim() });
            }
        }
        Ok(Self { times, clouds })
    }

    /// A flow with no snapshots, for measure-free models.
    pub fn empty() -> Self {
        Self { times: Vec::new(), clouds: Vec::new() }
    }

    /// `μ_t = cloud` for every `t` in `times`.
    pub fn constant(times: Vec<f64>, cloud: &EmpiricalCloud) -> Result<Self> {
        let clouds = vec![cloud.clone(); times.len()];
        Self::new(times, clouds)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn clouds(&self) -> &[EmpiricalCloud] {
        &self.clouds
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The snapshot stored at exactly `t`.
    pub fn at(&self, t: f64) -> Result<&EmpiricalCloud> {
        self.times
            .binary_search_by(|s| s.total_cmp(&t))
            .map(|i| &self.clouds[i])
            .map_err(|_| Error::MissingSnapshot(t))
    }

    /// The sub-flow on `times`, each of which must be stored.
    pub fn restrict(&self, times: &[f64]) -> Result<Self> {
        let clouds = times.iter().map(|&t| self.at(t).cloned()).collect::<Result<Vec<_>>>()?;
        Self::new(times.to_vec(), clouds)
    }

    pub fn last(&self) -> Option<&EmpiricalCloud> {
        self.clouds.last()
    }
}

/// Solves the equation with the law argument replaced by `input`.
///
/// The returned flow holds every freeze node when the model reads the law
/// (so it can be fed back as an input), and only the output grid otherwise.
pub fn simulate_frozen_flow(
    model: &ModelSpec,
    input: &MeasureFlow,
    law: &InitialLaw,
    cfg: &SchemeConfig,
) -> Result<MeasureFlow> {
    cfg.validate()?;
    let (horizon, n) = (model.horizon, cfg.steps);
    let stepper = Stepper::new(model, horizon / n as f64, cfg.exact_convolution)?;
    let mut ens = ParticleEnsemble::sample(law, model.dim(), cfg.particles, cfg.seed, cfg.replicate)?;
    let keep_all = !model.measure_free();
    let placeholder = EmpiricalCloud::empty(model.dim());
    let mut times = vec![0.0];
    let mut clouds = vec![ens.cloud()];
    for j in 0..n {
        let t_star = node_time(j, horizon, n);
        ens.set_anchor(t_star);
        let mu = if keep_all { input.at(t_star)? } else { &placeholder };
        ens.advance(&stepper, t_star, mu);
        let t = node_time(j + 1, horizon, n);
        ens.set_time(t);
        if keep_all || (j + 1) % cfg.stride() == 0 {
            times.push(t);
            clouds.push(ens.cloud());
        }
    }
    MeasureFlow::new(times, clouds)
}

/// `ρ(a, b) = (∫ e^{-2λt} W2(a_t, b_t)² dt)^{1/2}`, trapezoid rule on `times`,
/// W2 computed exactly on the first `n_w` points of each snapshot.
pub fn rho_distance(a: &MeasureFlow, b: &MeasureFlow, times: &[f64], lambda: f64, n_w: usize) -> Result<f64> {
    let vals = times
        .iter()
        .map(|&t| {
            let w = w2_exact(&a.at(t)?.head(n_w), &b.at(t)?.head(n_w))?;
            Ok((-2.0 * lambda * t).exp() * w * w)
        })
        .collect::<Result<Vec<f64>>>()?;
    let integral: f64 = times.windows(2).zip(vals.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum();
    Ok(integral.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardDiagnostics {
    /// `rhos[k-1] = ρ(μ^{k+1}, μ^k)`.
    pub rhos: Vec<f64>,
}

impl PicardDiagnostics {
    /// `ρ_k / ρ_{k-1}`; undefined for the first iteration or after an exact zero.
    pub fn contraction_factors(&self) -> Vec<Option<f64>> {
        (0..self.rhos.len())
            .map(|k| if k == 0 || self.rhos[k - 1] == 0.0 { None } else { Some(self.rhos[k] / self.rhos[k - 1]) })
            .collect()
    }

    /// True when the last two contraction factors both exceed one.
    pub fn non_contraction(&self) -> bool {
        let f = self.contraction_factors();
        f.len() >= 3 && f[f.len() - 2..].iter().all(|c| c.is_some_and(|c| c > 1.0))
    }
}

#[derive(Debug, Clone)]
pub struct PicardResult {
    pub flow: MeasureFlow,
    pub diagnostics: PicardDiagnostics,
}

impl PicardResult {
    pub fn iterations(&self) -> usize {
        self.diagnostics.rhos.len()
    }
}

/// Fixed point of `μ ↦ law of the frozen-μ solution`, started from the
/// initial cloud held constant in time. All iterations reuse the same random
/// streams.
pub fn picard_measure_flow(
    model: &ModelSpec,
    law: &InitialLaw,
    cfg: &SchemeConfig,
    lambda_weight: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PicardResult> {
    cfg.validate()?;
    if !(lambda_weight > 0.0) {
        return Err(Error::invalid(format!("lambda_weight = {lambda_weight} must be positive")));
    }
    if max_iter == 0 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }
    let horizon = model.horizon;
    let out_times = cfg.output_times(horizon);
    let initial = ParticleEnsemble::sample(law, model.dim(), cfg.particles, cfg.seed, cfg.replicate)?.cloud();
    let grid = if model.measure_free() { out_times.clone() } else { cfg.freeze_times(horizon) };
    let mu0 = MeasureFlow::constant(grid, &initial)?;
    let mut prev = simulate_frozen_flow(model, &mu0, law, cfg)?;
    let mut rhos = Vec::new();
    for _ in 0..max_iter {
        let next = simulate_frozen_flow(model, &prev, law, cfg)?;
        let rho = rho_distance(&next, &prev, &out_times, lambda_weight, cfg.w2_particles)?;
        rhos.push(rho);
        prev = next;
        if rho < tol {
            return Ok(PicardResult { flow: prev, diagnostics: PicardDiagnostics { rhos } });
        }
    }
    Err(Error::NotConverged { rhos })
}

/// `t, particle_id, c_1..c_M`, one row per particle per snapshot.
pub fn write_flow_csv<W: Write>(flow: &MeasureFlow, mut w: W) -> Result<()> {
    let dim = flow.clouds.first().map_or(0, |c| c.dim());
    write!(w, "t,particle_id")?;
    for k in 1..=dim {
        write!(w, ",c_{k}")?;
    }
    writeln!(w)?;
    for (t, cloud) in flow.times.iter().zip(&flow.clouds) {
        for (i, p) in cloud.points().enumerate() {
            write!(w, "{t},{i}")?;
            for v in p {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// `iteration, rho, contraction_factor`; the factor is empty where undefined.
pub fn write_diagnostics_csv<W: Write>(diag: &PicardDiagnostics, mut w: W) -> Result<()> {
    writeln!(w, "iteration,rho,contraction_factor")?;
    for (k, (rho, c)) in diag.rhos.iter().zip(diag.contraction_factors()).enumerate() {
        match c {
            Some(c) => writeln!(w, "{},{rho},{c}", k + 1)?,
            None => writeln!(w, "{},{rho},", k + 1)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelParams};
    use crate::spectral::OperatorSpectrum;

    fn spectrum(m: usize) -> OperatorSpectrum {
        OperatorSpectrum::power_law(1.0, 2.0, m, 0.25).unwrap()
    }

    fn cfg(particles: usize) -> SchemeConfig {
        SchemeConfig { steps: 40, output_points: 4, particles, w2_particles: particles.min(64), seed: 5, ..Default::default() }
    }

    #[test]
    fn flow_lookup_is_exact() {
        let c = EmpiricalCloud::from_flat(1, vec![0.0]).unwrap();
        let f = MeasureFlow::constant(vec![0.0, 0.5, 1.0], &c).unwrap();
        assert!(f.at(0.5).is_ok());
        assert!(matches!(f.at(0.25), Err(Error::MissingSnapshot(_))));
        assert!(MeasureFlow::constant(vec![0.0, 0.0], &c).is_err());
    }

    #[test]
    fn measure_free_output_ignores_input() {
        let model = build_model("ou", &ModelParams::default(), spectrum(3), 1.0).unwrap();
        let law = InitialLaw::point(vec![1.0]);
        let a = simulate_frozen_flow(&model, &MeasureFlow::empty(), &law, &cfg(50)).unwrap();
        let junk = EmpiricalCloud::from_flat(3, vec![9.0; 3]).unwrap();
        let input = MeasureFlow::constant(cfg(50).freeze_times(1.0), &junk).unwrap();
        let b = simulate_frozen_flow(&model, &input, &law, &cfg(50)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.times(), cfg(50).output_times(1.0).as_slice());
    }

    #[test]
    fn measure_free_picard_stops_at_one() {
        let model = build_model("ou", &ModelParams::default(), spectrum(3), 1.0).unwrap();
        let r = picard_measure_flow(&model, &InitialLaw::point(vec![1.0]), &cfg(100), 1.0, 1e-10, 5).unwrap();
        assert_eq!(r.diagnostics.rhos, vec![0.0]);
    }

    #[test]
    fn meanfield_converges_and_contracts() {
        let p = ModelParams { a: 0.5, ..Default::default() };
        let model = build_model("meanfield-linear", &p, spectrum(2), 1.0).unwrap();
        let law = InitialLaw::Gaussian { mean: vec![1.0, 0.5], std: vec![0.5] };
        let r = picard_measure_flow(&model, &law, &cfg(200), 1.0, 1e-9, 20).unwrap();
        let rhos = &r.diagnostics.rhos;
        assert!(rhos.len() <= 10, "{rhos:?}");
        assert!(rhos.windows(2).all(|w| w[1] < w[0]), "{rhos:?}");
        assert!(!r.diagnostics.non_contraction());
    }

    #[test]
    fn not_converged_carries_rhos() {
        let model = build_model("meanfield-linear", &ModelParams::default(), spectrum(2), 1.0).unwrap();
        let law = InitialLaw::point(vec![1.0]);
        match picard_measure_flow(&model, &law, &cfg(20), 1.0, 0.0, 2) {
            Err(Error::NotConverged { rhos }) => assert_eq!(rhos.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_layout() {
        let c = EmpiricalCloud::from_flat(2, vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let f = MeasureFlow::constant(vec![0.0, 1.0], &c).unwrap();
        let mut buf = Vec::new();
        write_flow_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("t,particle_id,c_1,c_2"));
        assert_eq!(text.lines().nth(2), Some("0,1,2,0.25"));
        assert_eq!(text.lines().count(), 5);
        let mut buf = Vec::new();
        write_diagnostics_csv(&PicardDiagnostics { rhos: vec![0.5, 0.25] }, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iteration,rho,contraction_factor\n1,0.5,\n2,0.25,0.5\n");
    }
}
