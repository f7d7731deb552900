//! Dirichlet quotients `Q_d = |A^{1/2}u|^2 / |u|^{2+d}` and numerical checks
//! of their differential inequalities along trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::models::ProblemDefinition;
use crate::spectral::{SpectrumSpec, StateVector};

/// Below this `|u|` quotients are reported as missing.
pub const MIN_QUOTIENT_NORM: f64 = 1e-150;

/// `Q_d` from `|u|` and `|A^{1/2}u|`; `None` if it does not fit in an `f64`.
pub fn quotient_from_norms(norm_h: f64, norm_ahalf: f64, d: f64) -> Option<f64> {
    if norm_h < MIN_QUOTIENT_NORM {
        return None;
    }
    let r = norm_ahalf / norm_h;
    let v = r * r / norm_h.powf(d);
    v.is_finite().then_some(v)
}

pub fn quotient(spectrum: &SpectrumSpec, u: &StateVector, d: f64) -> Result<f64> {
    let nh = u.norm_h();
    if nh == 0.0 {
        return Err(Error::QuotientAtZero);
    }
    quotient_from_norms(nh, spectrum.norm_ahalf(u), d).ok_or(Error::QuotientAtZero)
}

/// Outcome of comparing `Q_d'` with the right-hand side of its inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientCheckReport {
    pub d: f64,
    pub samples_checked: usize,
    /// Largest `Q_d' - rhs - tolerance`; nonpositive means no violation.
    pub max_margin: f64,
    pub argmax_t: f64,
    /// Tolerance in force at `argmax_t`.
    pub tolerance: f64,
    pub violations: usize,
    pub pass: bool,
}

/// Relative floor of the check tolerance.
const REL_TOL: f64 = 1e-6;
/// Multiplier of the `h^2 |Q''|` discretisation allowance.
const CURVATURE_C: f64 = 1.0;

/// Three-point derivatives `(f', f'')` on a non-uniform grid.
fn centred(t: [f64; 3], f: [f64; 3]) -> (f64, f64) {
    let h1 = t[1] - t[0];
    let h2 = t[2] - t[1];
    let d1 = -h2 / (h1 * (h1 + h2)) * f[0] + (h2 - h1) / (h1 * h2) * f[1] + h1 / (h2 * (h1 + h2)) * f[2];
    let d2 = 2.0 * (f[0] / (h1 * (h1 + h2)) - f[1] / (h1 * h2) + f[2] / (h2 * (h1 + h2)));
    (d1, d2)
}

/// Checks `Q' <= -|Au - Qu|^2/|u|^2 + |g|^2/|u|^2` (for `d = 0`) or
/// `Q_d' <= -nu Q_d + 2(2+d)|u|^d Q_d^2 + (3+d)|g|^2/|u|^{2+d}` (for `d > 0`)
/// at every interior sample, with `g = f(u)`.
pub fn check_quotient_inequalities(
    traj: &Trajectory,
    prob: &ProblemDefinition,
    d: f64,
) -> Result<QuotientCheckReport> {
    if !(d >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "d",
            reason: format!("must be nonnegative, got {d}"),
        });
    }
    let states = traj.states()?;
    let spectrum = &prob.spectrum;
    let nu = if d > 0.0 {
        spectrum.gap().ok_or(Error::InvalidParameter {
            name: "d",
            reason: "positive d needs a spectral gap".into(),
        })?
    } else {
        0.0
    };

    let qd: Vec<Option<f64>> = states
        .iter()
        .map(|u| quotient_from_norms(u.norm_h(), spectrum.norm_ahalf(u), d))
        .collect();
    if qd.iter().filter(|q| q.is_some()).count() < 3 {
        return Err(Error::TooFewSamples(qd.iter().flatten().count()));
    }

    let mut report = QuotientCheckReport {
        d,
        samples_checked: 0,
        max_margin: f64::NEG_INFINITY,
        argmax_t: f64::NAN,
        tolerance: 0.0,
        violations: 0,
        pass: true,
    };
    for k in 1..states.len() - 1 {
        let (Some(q0), Some(q1), Some(q2)) = (qd[k - 1], qd[k], qd[k + 1]) else {
            continue;
        };
        let t = [traj.times[k - 1], traj.times[k], traj.times[k + 1]];
        let (dq, ddq) = centred(t, [q0, q1, q2]);
        let u = &states[k];
        let g = prob.eval_unchecked(u);
        let nh2 = u.norm_h_sq();
        let (rhs, scale) = if d == 0.0 {
            let au = spectrum.apply_a(u);
            let mut res = 0.0;
            for j in 0..u.len() {
                let r = au[j] - q1 * u[j];
                res += r * r;
            }
            let a = res / nh2;
            let b = g.norm_h_sq() / nh2;
            (b - a, a + b)
        } else {
            let nh = nh2.sqrt();
            let a = nu * q1;
            let b = 2.0 * (2.0 + d) * nh.powf(d) * q1 * q1;
            let c = (3.0 + d) * g.norm_h_sq() / nh.powf(2.0 + d);
            (b + c - a, a + b + c)
        };
        let h = (t[2] - t[0]) / 2.0;
        let tol = (REL_TOL * (1.0 + scale + dq.abs())).max(CURVATURE_C * h * h * ddq.abs());
        let margin = dq - rhs - tol;
        report.samples_checked += 1;
        if margin > 0.0 {
            report.violations += 1;
        }
        if margin > report.max_margin {
            report.max_margin = margin;
            report.argmax_t = t[1];
            report.tolerance = tol;
        }
    }
    report.pass = report.violations == 0;
    Ok(report)
}
