use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{cell_index, node_time, InitialLaw, MeasureFlow, SchemeConfig, NODE_SNAP};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::rng::{StreamKey, StreamKind};
use crate::spectral::StepFactors;
use crate::transport::EmpiricalCloud;

/// Per-worker buffers for one particle update.
pub(crate) struct Scratch {
    pub drift: Vec<f64>,
    pub dw: Vec<f64>,
    pub noise: Vec<f64>,
    pub xi: Vec<f64>,
}

impl Scratch {
    pub fn new(dim: usize) -> Self {
        Self { drift: vec![0.0; dim], dw: vec![0.0; dim], noise: vec![0.0; dim], xi: vec![0.0; dim] }
    }
}

/// One exponential-Euler step of fixed length with frozen coefficients.
pub(crate) struct Stepper<'a> {
    pub model: &'a ModelSpec,
    pub factors: StepFactors,
    exact_std: Option<Vec<f64>>,
    sqrt_dt: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a ModelSpec, dt: f64, exact_convolution: bool) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("step dt = {dt} must be positive")));
        }
        let factors = model.step_factors(dt);
        let exact_std = if exact_convolution {
            let amp = model.noise.exact_amplitudes().ok_or_else(|| {
                Error::invalid("exact_convolution requires additive diagonal noise")
            })?;
            Some(amp.iter().zip(&factors.exact_std).map(|(q, s)| q * s).collect())
        } else {
            None
        };
        Ok(Self { model, factors, exact_std, sqrt_dt: dt.sqrt() })
    }

    /// Advances `x` by one step given standard normals `s.xi`. The drift and
    /// noise are read at `(t_star, anchor, mu)`. In the Maruyama branch the
    /// Brownian increment used is left in `s.dw`.
    pub fn advance(&self, t_star: f64, x: &mut [f64], anchor: &[f64], mu: &EmpiricalCloud, s: &mut Scratch) {
        let f = &self.factors;
        self.model.drift.eval_into(t_star, anchor, mu, &mut s.drift);
        match &self.exact_std {
            Some(std) => {
                for k in 0..x.len() {
                    x[k] = f.decay[k] * x[k] + f.drift[k] * s.drift[k] + std[k] * s.xi[k];
                }
            }
            None => {
                for (w, z) in s.dw.iter_mut().zip(&s.xi) {
                    *w = self.sqrt_dt * z;
                }
                self.model.noise.eval(t_star, anchor, mu).apply(&s.dw, &mut s.noise);
                for k in 0..x.len() {
                    x[k] = f.decay[k] * (x[k] + s.noise[k]) + f.drift[k] * s.drift[k];
                }
            }
        }
    }
}

pub(crate) fn fill_normals<R: Rng>(rng: &mut R, out: &mut [f64]) {
    for z in out {
        *z = rng.sample(StandardNormal);
    }
}

/// `N` particles in the truncated space, each with its own noise stream.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    dim: usize,
    time: f64,
    seed: u64,
    replicate: u64,
    states: Vec<f64>,
    anchors: Vec<f64>,
    anchor_time: Option<f64>,
    stream_ids: Vec<u64>,
    rngs: Vec<ChaCha8Rng>,
}

impl ParticleEnsemble {
    /// Draws `n` particles from `law` at time 0, with stream ids `0..n`.
    pub fn sample(law: &InitialLaw, dim: usize, n: usize, seed: u64, replicate: u64) -> Result<Self> {
        Self::sample_with_ids(law, dim, (0..n as u64).collect(), seed, replicate)
    }

    /// Draws one particle per stream id; particle `i` uses the initial and
    /// path streams of `ids[i]`.
    pub fn sample_with_ids(law: &InitialLaw, dim: usize, ids: Vec<u64>, seed: u64, replicate: u64) -> Result<Self> {
        law.validate(dim)?;
        if ids.is_empty() {
            return Err(Error::invalid("ensemble needs at least one particle"));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("stream ids must be unique"));
        }
        let mut states = vec![0.0; dim * ids.len()];
        states.par_chunks_mut(dim).zip(ids.par_iter()).for_each(|(x, &id)| {
            let mut rng = StreamKey::new(seed, StreamKind::Initial, id).with_replicate(replicate).rng();
            law.sample_into(&mut rng, x);
        });
        let rngs = ids.iter().map(|&id| StreamKey::new(seed, StreamKind::Path, id).with_replicate(replicate).rng()).collect();
        Ok(Self { dim, time: 0.0, seed, replicate, anchors: Vec::new(), anchor_time: None, states, stream_ids: ids, rngs })
    }

    pub fn len(&self) -> usize {
        self.stream_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stream_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replicate(&self) -> u64 {
        self.replicate
    }

    pub fn stream_ids(&self) -> &[u64] {
        &self.stream_ids
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn cloud(&self) -> EmpiricalCloud {
        EmpiricalCloud::from_flat(self.dim, self.states.clone()).expect("whole number of particles")
    }

    /// One stepper step from the freeze node `t_star`, where
    /// the anchors must already hold the states at `t_star`.
    pub(crate) fn advance(&mut self, stepper: &Stepper<'_>, t_star: f64, mu: &EmpiricalCloud) {
        let dim = self.dim;
        self.states
            .par_chunks_mut(dim)
            .zip(self.anchors.par_chunks(dim))
            .zip(self.rngs.par_iter_mut())
            .for_each_init(
                || Scratch::new(dim),
                |s, ((x, anchor), rng)| {
                    fill_normals(rng, &mut s.xi);
                    stepper.advance(t_star, x, anchor, mu, s);
                },
            );
    }

    pub(crate) fn set_anchor(&mut self, t_star: f64) {
        self.anchors.clone_from(&self.states);
        self.anchor_time = Some(t_star);
    }

    pub(crate) fn set_time(&mut self, t: f64) {
        self.time = t;
    }
}

/// Advances every particle from `ens.time()` to `ens.time() + dt`.
///
/// Coefficients are frozen at `t* = η_n(t)`, at the particle state and the
/// `frozen` snapshot there. The step may not cross the next freeze node.
pub fn exponential_euler_step(
    ens: &mut ParticleEnsemble,
    model: &ModelSpec,
    frozen: &MeasureFlow,
    dt: f64,
    cfg: &SchemeConfig,
) -> Result<()> {
    cfg.validate()?;
    model.spectrum.check_dim(ens.dim())?;
    let (horizon, n) = (model.horizon, cfg.steps);
    let j = cell_index(ens.time, horizon, n)?;
    if j == n {
        return Err(Error::invalid(format!("ensemble is already at the horizon T = {horizon}")));
    }
    let t_star = node_time(j, horizon, n);
    let next = node_time(j + 1, horizon, n);
    let end = ens.time + dt;
    if end > next + NODE_SNAP * horizon {
        return Err(Error::CrossesFreezeNode { node: next });
    }
    if ens.anchor_time != Some(t_star) {
        if (ens.time - t_star).abs() > NODE_SNAP * horizon {
            return Err(Error::invalid(format!("no anchor state at freeze node {t_star}")));
        }
        ens.set_anchor(t_star);
    }
    let stepper = Stepper::new(model, dt, cfg.exact_convolution)?;
    let placeholder;
    let mu = if model.measure_free() {
        placeholder = EmpiricalCloud::empty(ens.dim());
        &placeholder
    } else {
        frozen.at(t_star)?
    };
    ens.advance(&stepper, t_star, mu);
    ens.time = if (end - next).abs() <= NODE_SNAP * horizon { next } else { end };
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, DiniModulus, DriftField, ModelParams, NoiseField, NoiseOperator};
    use crate::spectral::OperatorSpectrum;

    fn quiet_model(drift: f64) -> ModelSpec {
        let spec = OperatorSpectrum::from_eigenvalues(vec![1.0, 4.0], 0.5, None).unwrap();
        let b = DriftField::new(
            move |_t: f64, _x: &[f64], _mu: &EmpiricalCloud, out: &mut [f64]| out.iter_mut().for_each(|o| *o = drift),
            DiniModulus::linear(1.0).unwrap(),
            0.0,
            drift.abs(),
        )
        .measure_free(true)
        .x_free(true);
        let noise = NoiseField::additive(NoiseOperator::Diagonal(vec![0.0, 0.0]));
        ModelSpec::new("quiet", spec, b, noise, 1.0).unwrap()
    }

    fn cfg(steps: usize) -> SchemeConfig {
        SchemeConfig { steps, output_points: 1, particles: 4, w2_particles: 2, ..Default::default() }
    }

    #[test]
    fn pure_semigroup_decay() {
        let model = quiet_model(0.0);
        let mut ens = ParticleEnsemble::sample(&InitialLaw::point(vec![1.0, 1.0]), 2, 4, 1, 0).unwrap();
        let flow = MeasureFlow::empty();
        exponential_euler_step(&mut ens, &model, &flow, 0.5, &cfg(2)).unwrap();
        assert_eq!(ens.particle(3), &[(-0.5f64).exp(), (-2.0f64).exp()]);
        assert_eq!(ens.time(), 0.5);
    }

    #[test]
    fn tiny_step_is_continuous() {
        let model = quiet_model(3.0);
        let mut ens = ParticleEnsemble::sample(&InitialLaw::point(vec![0.7, -1.3]), 2, 4, 1, 0).unwrap();
        exponential_euler_step(&mut ens, &model, &MeasureFlow::empty(), 1e-15, &cfg(2)).unwrap();
        assert!((ens.particle(0)[0] - 0.7).abs() < 1e-12 * 0.7);
        assert!((ens.particle(0)[1] + 1.3).abs() < 1e-12 * 1.3);
    }

    #[test]
    fn rejects_crossing_a_node() {
        let model = quiet_model(0.0);
        let mut ens = ParticleEnsemble::sample(&InitialLaw::point(vec![1.0]), 2, 4, 1, 0).unwrap();
        let err = exponential_euler_step(&mut ens, &model, &MeasureFlow::empty(), 0.3, &cfg(4)).unwrap_err();
        assert!(matches!(err, Error::CrossesFreezeNode { .. }));
        // split steps inside one cell are fine
        exponential_euler_step(&mut ens, &model, &MeasureFlow::empty(), 0.1, &cfg(4)).unwrap();
        exponential_euler_step(&mut ens, &model, &MeasureFlow::empty(), 0.15, &cfg(4)).unwrap();
        assert_eq!(ens.time(), 0.25);
    }

    #[test]
    fn exact_convolution_needs_diagonal_noise() {
        let spec = OperatorSpectrum::from_eigenvalues(vec![1.0, 4.0], 0.5, None).unwrap();
        let mut model = build_model("ou", &ModelParams::default(), spec, 1.0).unwrap();
        model.noise = NoiseField::additive(NoiseOperator::Dense { dim: 2, data: vec![1.0, 0.5, 0.0, 1.0] });
        assert!(Stepper::new(&model, 0.1, true).is_err());
        assert!(Stepper::new(&model, 0.1, false).is_ok());
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(ParticleEnsemble::sample_with_ids(&InitialLaw::point(vec![0.0]), 1, vec![1, 2, 1], 0, 0).is_err());
    }
}
