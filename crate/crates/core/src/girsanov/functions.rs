use crate::error::{Error, Result};

pub const TEST_FUNCTION_IDS: [&str; 3] = ["f1", "f2", "f3"];

/// Width of the logistic edge of the smoothed ball indicator.
const BALL_EDGE: f64 = 0.1;

/// Bounded positive test functions used by the Harnack checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    /// `1 + tanh x_1`
    Tanh,
    /// `exp(-|x|² / (2σ²)) + 1`
    GaussianBump { sigma: f64 },
    /// `1 + 1 / (1 + exp((|x| - 1) / 0.1))`, a smoothed unit-ball indicator
    SmoothBall,
}

impl TestFunction {
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "f1" => Ok(TestFunction::Tanh),
            "f2" => Ok(TestFunction::GaussianBump { sigma: 1.0 }),
            "f3" => Ok(TestFunction::SmoothBall),
            other => Err(Error::invalid(format!("unknown test function '{other}' (known: f1, f2, f3)"))),
        }
    }

    pub fn all() -> Vec<Self> {
        TEST_FUNCTION_IDS.iter().map(|id| Self::from_id(id).expect("registered")).collect()
    }

    pub fn id(&self) -> &'static str {
        match self {
            TestFunction::Tanh => "f1",
            TestFunction::GaussianBump { .. } => "f2",
            TestFunction::SmoothBall => "f3",
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Tanh => 1.0 + x[0].tanh(),
            TestFunction::GaussianBump { sigma } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                (-r2 / (2.0 * sigma * sigma)).exp() + 1.0
            }
            TestFunction::SmoothBall => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                1.0 + 1.0 / (1.0 + ((r - 1.0) / BALL_EDGE).exp())
            }
        }
    }

    /// `(inf f, sup f)`.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            TestFunction::Tanh => (0.0, 2.0),
            TestFunction::GaussianBump { .. } | TestFunction::SmoothBall => (1.0, 2.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_respect_bounds() {
        let pts: [&[f64]; 5] = [&[0.0, 0.0], &[3.0, -1.0], &[-40.0, 0.0], &[0.9, 0.1], &[1e3, 1e3]];
        for f in TestFunction::all() {
            let (lo, hi) = f.bounds();
            for x in pts {
                let v = f.eval(x);
                assert!(v >= lo && v <= hi, "{} at {x:?} = {v}", f.id());
            }
        }
        assert_eq!(TestFunction::Tanh.eval(&[0.0]), 1.0);
        assert_eq!(TestFunction::from_id("f2").unwrap().eval(&[0.0, 0.0]), 2.0);
        assert!(TestFunction::from_id("f9").is_err());
    }
}
