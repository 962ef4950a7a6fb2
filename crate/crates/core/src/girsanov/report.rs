use std::io::Write;

use crate::error::Result;

/// One checked inequality `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingReport {
    pub inequality: String,
    pub horizon: f64,
    pub p: Option<f64>,
    pub f_id: Option<String>,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    /// `rhs - lhs`
    pub margin: f64,
    /// `margin >= -3 sqrt(lhs_se² + rhs_se²)`
    pub pass: bool,
    pub w2_initial: f64,
    pub phi_t: Option<f64>,
    pub seed: u64,
}

impl CouplingReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        inequality: impl Into<String>,
        horizon: f64,
        (lhs, lhs_se): (f64, f64),
        (rhs, rhs_se): (f64, f64),
        w2_initial: f64,
        seed: u64,
    ) -> Self {
        let margin = rhs - lhs;
        Self {
            inequality: inequality.into(),
            horizon,
            p: None,
            f_id: None,
            lhs,
            lhs_se,
            rhs,
            rhs_se,
            margin,
            pass: margin >= -3.0 * lhs_se.hypot(rhs_se),
            w2_initial,
            phi_t: None,
            seed,
        }
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = Some(p);
        self
    }

    pub fn with_f(mut self, f_id: &str) -> Self {
        self.f_id = Some(f_id.to_string());
        self
    }

    pub fn with_phi_t(mut self, phi_t: f64) -> Self {
        self.phi_t = Some(phi_t);
        self
    }

    pub fn combined_se(&self) -> f64 {
        self.lhs_se.hypot(self.rhs_se)
    }
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

pub fn write_report_csv<W: Write>(rows: &[CouplingReport], mut w: W) -> Result<()> {
    writeln!(w, "inequality,T,p,f_id,lhs,lhs_se,rhs,rhs_se,margin,pass,w2_initial,phiT,seed")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.inequality,
            r.horizon,
            opt(&r.p),
            opt(&r.f_id),
            r.lhs,
            r.lhs_se,
            r.rhs,
            r.rhs_se,
            r.margin,
            r.pass,
            r.w2_initial,
            opt(&r.phi_t),
            r.seed
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_rule() {
        let r = CouplingReport::new("x", 1.0, (1.0, 0.3), (0.0, 0.4), 0.0, 1);
        assert_eq!(r.margin, -1.0);
        assert!(r.pass); // -1 >= -3 * 0.5
        let r = CouplingReport::new("x", 1.0, (1.0, 0.0), (0.0, 0.0), 0.0, 1);
        assert!(!r.pass);
    }

    #[test]
    fn csv_row() {
        let r = CouplingReport::new("shift-harnack", 1.0, (0.5, 0.0), (1.0, 0.0), 0.0, 7).with_p(2.0).with_f("f1");
        let mut buf = Vec::new();
        write_report_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1), Some("shift-harnack,1,2,f1,0.5,0,1,0,0.5,true,0,,7"));
    }
}
