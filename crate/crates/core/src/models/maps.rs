//! Nonlinear right-hand sides `f` of `u' + Au = f(u)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::transform::TransformPair;

/// A nonlinear map on eigen-coefficients.
///
/// Implementations must be pure: concurrent calls on one instance may not
/// interfere, so any scratch space is allocated per call.
pub trait NonlinearMap: Send + Sync + fmt::Debug {
    fn apply(&self, u: &[f64], out: &mut [f64]);

    /// Short human-readable formula, recorded in reports.
    fn describe(&self) -> String;

    /// `true` when `f` vanishes identically.
    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroMap;

impl NonlinearMap for ZeroMap {
    fn apply(&self, _u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }

    fn describe(&self) -> String {
        "f = 0".into()
    }

    fn is_zero(&self) -> bool {
        true
    }
}

/// `(x, y) -> (-x^3, x^3)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CubicDrift;

impl NonlinearMap for CubicDrift {
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let x3 = u[0] * u[0] * u[0];
        out[0] = -x3;
        out[1] = x3;
    }

    fn describe(&self) -> String {
        "f(x, y) = (-x^3, x^3)".into()
    }
}

/// `(x, y) -> (0, |x|^{1+p} + |x|^{1+q})`.
#[derive(Debug, Clone, Copy)]
pub struct PowerForcing {
    pub p: f64,
    pub q: f64,
}

impl NonlinearMap for PowerForcing {
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let ax = u[0].abs();
        out[0] = 0.0;
        out[1] = ax.powf(1.0 + self.p) + ax.powf(1.0 + self.q);
    }

    fn describe(&self) -> String {
        format!("f(x, y) = (0, |x|^{} + |x|^{})", 1.0 + self.p, 1.0 + self.q)
    }
}

/// `psi(s) = c |s|^p s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPsi {
    pub c: f64,
    pub p: f64,
}

impl PowerPsi {
    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        let mag = if self.p == 2.0 {
            s * s
        } else if self.p.fract() == 0.0 && self.p <= 16.0 && (self.p as i32) % 2 == 0 {
            s.powi(self.p as i32)
        } else {
            s.abs().powf(self.p)
        };
        self.c * mag * s
    }
}

/// `[f(u)](x) = -psi(u(x))`, evaluated by collocation and projected back.
#[derive(Debug, Clone)]
pub struct PointwisePsi {
    pub psi: PowerPsi,
    pub transform: TransformPair,
}

impl NonlinearMap for PointwisePsi {
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let mut grid = vec![0.0; self.transform.grid_size()];
        self.transform.synthesis(u, &mut grid);
        grid.iter_mut().for_each(|g| *g = -self.psi.eval(*g));
        self.transform.analysis(&grid, out);
    }

    fn describe(&self) -> String {
        format!(
            "f(u) = -{} |u|^{} u on a {}-point {:?} grid",
            self.psi.c,
            self.psi.p,
            self.transform.grid_size(),
            self.transform.kind()
        )
    }
}

/// One monomial `coeff * prod_m u_m^{e_m}` contributing to `f_output`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyTerm {
    pub output: usize,
    pub coeff: f64,
    /// `(mode, exponent)` pairs.
    pub powers: Vec<(usize, u32)>,
}

/// Polynomial nonlinearity given term by term in coefficient space.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialMap {
    pub terms: Vec<PolyTerm>,
}

impl PolynomialMap {
    /// Smallest total degree over all terms, `None` when there are no terms.
    pub fn min_degree(&self) -> Option<u32> {
        self.terms
            .iter()
            .map(|t| t.powers.iter().map(|&(_, e)| e).sum())
            .min()
    }
}

impl NonlinearMap for PolynomialMap {
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in &self.terms {
            let mono: f64 = t.powers.iter().map(|&(m, e)| u[m].powi(e as i32)).product();
            out[t.output] += t.coeff * mono;
        }
    }

    fn describe(&self) -> String {
        format!("polynomial with {} terms", self.terms.len())
    }

    fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coeff == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_matches_definition() {
        for &(c, p) in &[(1.0, 2.0), (0.5, 1.0), (2.0, 1.5), (1.0, 4.0)] {
            let psi = PowerPsi { c, p };
            for &s in &[-1.3, -0.2, 0.0, 0.7, 2.0] {
                let expect = c * f64::abs(s).powf(p) * s;
                assert!((psi.eval(s) - expect).abs() <= 1e-14 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn polynomial_terms() {
        let m = PolynomialMap {
            terms: vec![
                PolyTerm { output: 0, coeff: -1.0, powers: vec![(0, 3)] },
                PolyTerm { output: 1, coeff: 2.0, powers: vec![(0, 1), (1, 2)] },
            ],
        };
        let mut out = [0.0; 2];
        m.apply(&[2.0, 3.0], &mut out);
        assert_eq!(out, [-8.0, 36.0]);
        assert_eq!(m.min_degree(), Some(3));
    }
}
