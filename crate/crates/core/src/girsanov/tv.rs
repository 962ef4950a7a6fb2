use crate::error::{Error, Result};
use crate::transport::EmpiricalCloud;

/// Uniform cells on a few coordinates. Points beyond `[lo, hi]` fall into the
/// end cells, so the cells partition the whole space.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSpec {
    /// `(coordinate, lo, hi, cells)` per axis.
    pub axes: Vec<(usize, f64, f64, usize)>,
}

impl HistogramSpec {
    pub fn uniform(coord: usize, lo: f64, hi: f64, cells: usize) -> Self {
        Self { axes: vec![(coord, lo, hi, cells)] }
    }

    /// `cells` per axis on the first `min(2, dim)` coordinates, over the
    /// pooled range of both clouds.
    pub fn pooled(a: &EmpiricalCloud, b: &EmpiricalCloud, cells: usize) -> Self {
        let axes = (0..a.dim().min(2))
            .map(|k| {
                let (lo, hi) = a
                    .points()
                    .chain(b.points())
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[k]), hi.max(p[k])));
                (k, lo, hi, cells)
            })
            .collect();
        Self { axes }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::invalid("histogram needs at least one axis"));
        }
        for &(k, lo, hi, cells) in &self.axes {
            if k >= dim || cells == 0 || !(lo <= hi) {
                return Err(Error::invalid(format!("bad histogram axis ({k}, {lo}, {hi}, {cells})")));
            }
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.3).product()
    }

    pub fn cell_of(&self, x: &[f64]) -> usize {
        self.axes.iter().fold(0, |acc, &(k, lo, hi, cells)| {
            let width = (hi - lo) / cells as f64;
            let c = if width > 0.0 { ((x[k] - lo) / width).floor() } else { 0.0 };
            acc * cells + (c.max(0.0) as usize).min(cells - 1)
        })
    }
}

/// `½ Σ_i |p_i - q_i|` over the histogram cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvEstimate {
    pub value: f64,
    /// Standard error treating point `j` of `a` and of `b` as a pair; exact
    /// for independent clouds and for synchronously coupled ones.
    pub std_error: f64,
}

pub fn tv_lower_bound(a: &EmpiricalCloud, b: &EmpiricalCloud, spec: &HistogramSpec) -> Result<TvEstimate> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("total variation of an empty cloud"));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    spec.validate(a.dim())?;
    let cells = spec.cell_count();
    let (ca, cb): (Vec<usize>, Vec<usize>) =
        (a.points().map(|p| spec.cell_of(p)).collect(), b.points().map(|p| spec.cell_of(p)).collect());
    let mut p = vec![0.0; cells];
    let mut q = vec![0.0; cells];
    ca.iter().for_each(|&c| p[c] += 1.0 / a.len() as f64);
    cb.iter().for_each(|&c| q[c] += 1.0 / b.len() as f64);
    let value = 0.5 * p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let std_error = if a.len() == b.len() && a.len() > 1 {
        let sign: Vec<f64> = p.iter().zip(&q).map(|(x, y)| (x - y).signum()).collect();
        let z: Vec<f64> = ca.iter().zip(&cb).map(|(&i, &j)| 0.5 * (sign[i] - sign[j])).collect();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(TvEstimate { value: value.min(1.0), std_error })
}
