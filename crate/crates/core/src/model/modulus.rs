//! Continuity moduli of the Dini class and their numerical certificates.
//!
//! A modulus `φ: [0, ∞) -> [0, ∞)` belongs to the class when `φ(0) = 0`, `φ`
//! is nondecreasing, `φ²` is concave and `∫_0^1 φ(s)/s ds < ∞`. The first
//! three properties are checked on a geometric grid of `(0, 1]`; the integral
//! is computed in the variable `u = -ln s`, where it becomes `∫_0^∞ φ(e^{-u}) du`.

use std::f64::consts::{E, LN_2};

use crate::error::{Error, Result};
use crate::quad;

/// Relative slack of the grid monotonicity and concavity tests.
pub const GRID_SLACK: f64 = 1e-10;

/// Default number of geometric grid points for certificates.
pub const DEFAULT_GRID_POINTS: usize = 4001;

#[derive(Debug, Clone, PartialEq)]
pub enum ModulusFamily {
    /// `φ(s) = k / log^{1+δ}(c + 1/s)`.
    Canonical { k: f64, delta: f64, c: f64 },
    /// `φ(s) = k s`.
    Linear { k: f64 },
    /// `φ(s) = k s^α`.
    Holder { k: f64, alpha: f64 },
    /// Piecewise-linear through `(0, 0)` and the given `(s, φ(s))` nodes,
    /// constant beyond the last node.
    Tabulated { nodes: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiniModulus {
    family: ModulusFamily,
    grid_points: usize,
}

impl DiniModulus {
    /// The canonical family. `c >= e` keeps `log(c + 1/s) >= 1` on `(0, 1]`.
    pub fn canonical(k: f64, delta: f64, c: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::invalid(format!("modulus K = {k} must be positive")));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!("modulus δ = {delta} must be nonnegative")));
        }
        if !(c >= E && c.is_finite()) {
            return Err(Error::invalid(format!("modulus c = {c} must be at least e")));
        }
        Ok(Self::from_family(ModulusFamily::Canonical { k, delta, c }))
    }

    pub fn linear(k: f64) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::invalid(format!("modulus slope {k} must be nonnegative")));
        }
        Ok(Self::from_family(ModulusFamily::Linear { k }))
    }

    pub fn holder(k: f64, alpha: f64) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) || !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid(format!("Hölder modulus needs k >= 0, α in (0,1]; got k = {k}, α = {alpha}")));
        }
        Ok(Self::from_family(ModulusFamily::Holder { k, alpha }))
    }

    pub fn tabulated(mut nodes: Vec<(f64, f64)>) -> Result<Self> {
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        if nodes.is_empty() || nodes.iter().any(|(s, v)| !(*s > 0.0) || !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("tabulated modulus needs positive abscissae and nonnegative values"));
        }
        Ok(Self::from_family(ModulusFamily::Tabulated { nodes }))
    }

    fn from_family(family: ModulusFamily) -> Self {
        Self { family, grid_points: DEFAULT_GRID_POINTS }
    }

    pub fn with_grid_points(mut self, n: usize) -> Self {
        self.grid_points = n.max(3);
        self
    }

    pub fn family(&self) -> &ModulusFamily {
        &self.family
    }

    pub fn grid_points(&self) -> usize {
        self.grid_points
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match &self.family {
            ModulusFamily::Canonical { k, delta, c } => k / (c + 1.0 / s).ln().powf(1.0 + delta),
            ModulusFamily::Linear { k } => k * s,
            ModulusFamily::Holder { k, alpha } => k * s.powf(*alpha),
            ModulusFamily::Tabulated { nodes } => {
                let mut prev = (0.0, 0.0);
                for &(x, v) in nodes {
                    if s <= x {
                        return prev.1 + (v - prev.1) * (s - prev.0) / (x - prev.0);
                    }
                    prev = (x, v);
                }
                prev.1
            }
        }
    }

    /// `φ(e^{-u})`, evaluated without underflow for large `u`.
    pub fn eval_log(&self, u: f64) -> f64 {
        match &self.family {
            ModulusFamily::Canonical { k, delta, c } => {
                // log(c + e^u) = u + log(1 + c e^{-u})
                let l = if u > 0.0 { u + (c * (-u).exp()).ln_1p() } else { (c + u.exp()).ln() };
                k / l.powf(1.0 + delta)
            }
            ModulusFamily::Linear { k } => k * (-u).exp(),
            ModulusFamily::Holder { k, alpha } => k * (-alpha * u).exp(),
            ModulusFamily::Tabulated { .. } => self.eval((-u).exp()),
        }
    }

    /// Geometric grid `s_i` on `(0, 1]`, preceded by `0`.
    fn grid(&self) -> Vec<f64> {
        let n = self.grid_points;
        let lo: f64 = 1e-12;
        let mut g = Vec::with_capacity(n + 1);
        g.push(0.0);
        g.extend((0..n).map(|i| lo.powf(1.0 - i as f64 / (n - 1) as f64)));
        g
    }

    /// Runs the grid tests and the Dini integral.
    pub fn certificate(&self) -> ModulusCertificate {
        let grid = self.grid();
        let values: Vec<f64> = grid.iter().map(|&s| self.eval(s)).collect();
        let scale = values.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);

        let zero_at_origin = self.eval(0.0) == 0.0;

        let mut monotone = GridCheck::pass();
        for i in 1..grid.len() {
            let drop = values[i - 1] - values[i];
            if drop > GRID_SLACK * scale && -drop < monotone.margin {
                monotone = GridCheck::fail(-drop, vec![grid[i - 1], grid[i]]);
            }
        }

        let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
        let sq_scale = scale * scale;
        let mut concave_square = GridCheck::pass();
        for i in 1..grid.len() - 1 {
            let (a, m, b) = (grid[i - 1], grid[i], grid[i + 1]);
            let chord = sq[i - 1] + (sq[i + 1] - sq[i - 1]) * (m - a) / (b - a);
            let margin = sq[i] - chord;
            if margin < -GRID_SLACK * sq_scale && margin < concave_square.margin {
                concave_square = GridCheck::fail(margin, vec![a, m, b]);
            }
        }

        ModulusCertificate {
            zero_at_origin,
            monotone,
            concave_square,
            dini: dini_integral(self, 1e-8),
        }
    }
}

/// One grid test. `margin` is the most negative violation found (0 when none)
/// and `witness` the grid points where it occurred.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCheck {
    pub passed: bool,
    pub margin: f64,
    pub witness: Option<Vec<f64>>,
}

impl GridCheck {
    fn pass() -> Self {
        Self { passed: true, margin: 0.0, witness: None }
    }

    fn fail(margin: f64, witness: Vec<f64>) -> Self {
        Self { passed: false, margin, witness: Some(witness) }
    }
}

#[derive(Debug)]
pub struct ModulusCertificate {
    pub zero_at_origin: bool,
    pub monotone: GridCheck,
    pub concave_square: GridCheck,
    pub dini: Result<DiniIntegral>,
}

impl ModulusCertificate {
    pub fn passed(&self) -> bool {
        self.zero_at_origin && self.monotone.passed && self.concave_square.passed && self.dini.is_ok()
    }

    pub fn summary(&self) -> String {
        let dini = match &self.dini {
            Ok(d) => format!("dini integral {:.10} (±{:.1e})", d.value, d.error),
            Err(e) => e.to_string(),
        };
        let grid = |c: &GridCheck| match &c.witness {
            None => "ok".to_string(),
            Some(w) => format!("violated by {:.3e} at s = {w:?}", -c.margin),
        };
        format!(
            "phi(0)=0: {}; nondecreasing: {}; phi^2 concave: {}; {dini}",
            self.zero_at_origin,
            grid(&self.monotone),
            grid(&self.concave_square)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiniIntegral {
    pub value: f64,
    pub error: f64,
}

/// `∫_0^1 φ(s)/s ds`, accumulated over the geometric cells `[2^{-(j+1)}, 2^{-j}]`
/// (uniform cells of width `ln 2` in `u = -ln s`), with a power-law tail
/// extrapolation whose local exponent decides convergence.
pub fn dini_integral(phi: &DiniModulus, tol: f64) -> Result<DiniIntegral> {
    let g = |u: f64| phi.eval_log(u);
    let mut partial = 0.0;
    let mut quad_err = 0.0;
    let mut u = 0.0;
    let mut previous: Option<f64> = None;
    // cells of width ln 2 up to s = 2^{-64}, then cells doubling in u
    for j in 0.. {
        let width = if j < 64 { LN_2 } else { u };
        let q = quad::integrate(g, u, u + width, 1e-300, tol * 1e-3);
        partial += q.value;
        quad_err += q.error;
        u += width;
        if j < 8 {
            continue;
        }
        let (gu, g2u) = (g(u), g(2.0 * u));
        if gu == 0.0 {
            return Ok(DiniIntegral { value: partial, error: quad_err });
        }
        let exponent = if g2u > 0.0 { (gu / g2u).ln() / LN_2 } else { f64::INFINITY };
        let scale = (-u).exp();
        if exponent <= 1.0 {
            if u >= 32.0 * LN_2 {
                return Err(Error::DiniDivergent { scale, exponent });
            }
            previous = None;
            continue;
        }
        let tail = if exponent.is_infinite() { 0.0 } else { gu * u / (exponent - 1.0) };
        let value = partial + tail;
        if let Some(prev) = previous {
            let change = (value - prev).abs();
            if change <= tol * value.abs() && tail <= value.abs() {
                return Ok(DiniIntegral { value, error: change + quad_err });
            }
        }
        previous = Some(value);
        if u > 1e15 {
            return Err(Error::DiniDivergent { scale, exponent });
        }
    }
    unreachable!()
}
