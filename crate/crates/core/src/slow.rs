//! Explicit open set of slow solutions.
//!
//! With `K1 = 4 K0^2 (3+2p) / nu` and `sigma0` small enough, every nonzero
//! `u0` with `|u0| < sigma0` and `|A^{1/2}u0|^2 < K1 |u0|^{2+2p}` generates a
//! slow solution. This module computes the constants, tests membership and
//! monitors the estimates along a run.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorConfig, Termination};
use crate::models::{ConstantsProvenance, OrderBounds, ProblemDefinition};
use crate::spectral::{SpectrumSpec, StateVector};

/// Slack demanded in both smallness conditions on `sigma0`.
pub const SIGMA_SLACK: f64 = 0.1;
const SIGMA_MIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyOptions {
    /// Compute constants even when the sign condition is not known to hold.
    /// The resulting certificate is flagged and carries no guarantee.
    pub waive_sign_condition: bool,
}

/// Relative slack `1 - lhs/rhs` of the two conditions on `sigma0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaSlack {
    pub ball: f64,
    pub quotient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowCertificate {
    pub k0: f64,
    pub p: f64,
    pub q: f64,
    pub k1: f64,
    pub sigma0: f64,
    pub radius: f64,
    pub nu: f64,
    pub slack: SigmaSlack,
    pub sign_condition_waived: bool,
    pub provenance: ConstantsProvenance,
}

/// `K1 = 4 K0^2 (3 + 2p) / nu`.
pub fn k1(k0: f64, p: f64, nu: f64) -> f64 {
    4.0 * k0 * k0 * (3.0 + 2.0 * p) / nu
}

/// Slacks of `sigma^2 + K1 sigma^{2+2p} < R^2` and of
/// `4(1+p) sigma^{2p} K1^2 + 2K0^2(3+2p) K1^{1+q} sigma^{(2+2p)q} <= 2K0^2(3+2p)`.
pub fn sigma_slack(sigma: f64, k0: f64, p: f64, q: f64, k1: f64, radius: f64) -> SigmaSlack {
    let ball = 1.0 - (sigma * sigma + k1 * sigma.powf(2.0 + 2.0 * p)) / (radius * radius);
    let c = 2.0 * k0 * k0 * (3.0 + 2.0 * p);
    let lhs = 4.0 * (1.0 + p) * sigma.powf(2.0 * p) * k1 * k1 + c * k1.powf(1.0 + q) * sigma.powf((2.0 + 2.0 * p) * q);
    let quotient = if c > 0.0 { 1.0 - lhs / c } else { f64::NEG_INFINITY };
    SigmaSlack { ball, quotient }
}

pub fn compute_constants(bounds: &OrderBounds, nu: f64) -> Result<SlowCertificate> {
    compute_constants_with(bounds, nu, &CertifyOptions::default())
}

/// `K1` and the largest `sigma0 = R 2^{-k}` meeting both conditions with
/// [`SIGMA_SLACK`] to spare.
pub fn compute_constants_with(bounds: &OrderBounds, nu: f64, opts: &CertifyOptions) -> Result<SlowCertificate> {
    if !bounds.sign_condition && !opts.waive_sign_condition {
        return Err(Error::SignConditionMissing);
    }
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::InvalidParameter {
            name: "nu",
            reason: format!("must be positive, got {nu}"),
        });
    }
    if !(bounds.k0 > 0.0) {
        return Err(Error::DegenerateConstants);
    }
    let (k0, p, q) = (bounds.k0, bounds.p, bounds.q);
    let k1 = k1(k0, p, nu);
    let radius = if bounds.radius.is_finite() { bounds.radius } else { 1.0 };
    let mut sigma = radius;
    while sigma > SIGMA_MIN {
        let slack = sigma_slack(sigma, k0, p, q, k1, radius);
        if slack.ball >= SIGMA_SLACK && slack.quotient >= SIGMA_SLACK {
            return Ok(SlowCertificate {
                k0,
                p,
                q,
                k1,
                sigma0: sigma,
                radius,
                nu,
                slack,
                sign_condition_waived: !bounds.sign_condition,
                provenance: bounds.provenance.clone(),
            });
        }
        sigma *= 0.5;
    }
    Err(Error::DegenerateConstants)
}

/// Certificate for a problem: checks the kernel and takes `nu` from the gap.
pub fn certificate_for(prob: &ProblemDefinition, opts: &CertifyOptions) -> Result<SlowCertificate> {
    if !prob.spectrum.has_kernel() {
        return Err(Error::TrivialKernel);
    }
    let nu = prob.spectrum.gap().ok_or(Error::InvalidParameter {
        name: "nu",
        reason: "spectrum has no positive eigenvalue".into(),
    })?;
    compute_constants_with(&prob.bounds, nu, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    pub nonzero: bool,
    /// `1 - |u0| / sigma0`.
    pub norm_slack: f64,
    /// `1 - |A^{1/2}u0|^2 / (K1 |u0|^{2+2p})`.
    pub quotient_slack: f64,
}

pub fn certify(u0: &StateVector, spectrum: &SpectrumSpec, cert: &SlowCertificate) -> Membership {
    let nh = u0.norm_h();
    let nonzero = nh > 0.0;
    let norm_slack = 1.0 - nh / cert.sigma0;
    let quotient_slack = if nonzero {
        let a = spectrum.norm_ahalf(u0);
        1.0 - a * a / (cert.k1 * nh.powf(2.0 + 2.0 * cert.p))
    } else {
        f64::NEG_INFINITY
    };
    Membership {
        member: nonzero && norm_slack > 0.0 && quotient_slack > 0.0,
        nonzero,
        norm_slack,
        quotient_slack,
    }
}

/// Random member of the certified set.
///
/// The kernel part has norm in `(0.1, 0.9) sigma0`; the range part uses
/// between 5% and 50% of the quotient budget.
pub fn sample_member<R: Rng + ?Sized>(spectrum: &SpectrumSpec, cert: &SlowCertificate, rng: &mut R) -> StateVector {
    let n = spectrum.total_dim();
    let kernel = spectrum.kernel_range();
    loop {
        let mut u = StateVector::zeros(n);
        for j in kernel.clone() {
            u[j] = rng.sample(StandardNormal);
        }
        let a = cert.sigma0 * rng.random_range(0.1..0.9);
        u = u.scaled(a / u.norm_h());
        let mut w = StateVector::zeros(n);
        let decay: f64 = rng.random_range(0.5..2.0);
        for j in kernel.end..n {
            let z: f64 = rng.sample(StandardNormal);
            w[j] = z * (1.0 + spectrum.mode_eigenvalues()[j]).powf(-decay);
        }
        let aw = spectrum.norm_ahalf(&w);
        if aw > 0.0 {
            let budget = cert.k1 * a.powf(2.0 + 2.0 * cert.p) * rng.random_range(0.05..0.5);
            u.axpy(budget.sqrt() / aw, &w);
        }
        if certify(&u, spectrum, cert).member {
            return u;
        }
    }
}

/// Radius of a `D(A^{1/2})` ball around `u0` that lies inside the certified set.
///
/// A perturbation `h` with `|h|_D <= eps` moves `|u|` and `|A^{1/2}u|` by at
/// most `eps`, so the ball is inside when `|u0| + eps < sigma0` and
/// `(|A^{1/2}u0| + eps)^2 < K1 (|u0| - eps)^{2+2p}`. The largest such `eps` is
/// found by bisection; zero when `u0` is not a member.
pub fn openness_radius(u0: &StateVector, spectrum: &SpectrumSpec, cert: &SlowCertificate) -> f64 {
    if !certify(u0, spectrum, cert).member {
        return 0.0;
    }
    let nh = u0.norm_h();
    let na = spectrum.norm_ahalf(u0);
    let inside = |e: f64| nh + e < cert.sigma0 && (na + e).powi(2) < cert.k1 * (nh - e).powf(2.0 + 2.0 * cert.p);
    let (mut lo, mut hi) = (0.0, (cert.sigma0 - nh).min(nh));
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpennessReport {
    pub tried: usize,
    /// Ball radius from [`openness_radius`].
    pub radius: f64,
    /// `|h|_D` of every perturbation.
    pub size: f64,
    pub certified: usize,
    /// The radius is positive and every perturbation was certified.
    pub pass: bool,
}

/// Perturbs `u0` in random directions by `fraction` of its openness radius
/// and certifies every perturbed datum.
pub fn openness_probe<R: Rng + ?Sized>(
    u0: &StateVector,
    spectrum: &SpectrumSpec,
    cert: &SlowCertificate,
    count: usize,
    fraction: f64,
    rng: &mut R,
) -> OpennessReport {
    let n = spectrum.total_dim();
    let radius = openness_radius(u0, spectrum, cert);
    let size = fraction * radius;
    let mut certified = 0;
    for _ in 0..count {
        let mut dir = StateVector::zeros(n);
        for j in 0..n {
            dir[j] = rng.sample(StandardNormal);
        }
        let v = u0.add(&dir.scaled(size / spectrum.norm_d(&dir)));
        certified += certify(&v, spectrum, cert).member as usize;
    }
    OpennessReport {
        tried: count,
        radius,
        size,
        certified,
        pass: radius > 0.0 && certified == count,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorViolation {
    NormIncreased,
    QuotientBound,
    LowerBoundDrift,
    RunAborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub membership: Membership,
    pub t_end: f64,
    pub samples: usize,
    /// `inf |u(t)| (1+t)^{1/p}`.
    pub m1_hat: f64,
    /// Relative change of that infimum over the last decade.
    pub m1_drift: f64,
    /// `max Q_{2p}(t)`, to compare with `K1`.
    pub max_q2p: f64,
    pub first_violation: Option<(MonitorViolation, f64)>,
    pub pass: bool,
}

const MONOTONE_REL: f64 = 1e-10;
const M1_DRIFT_TOL: f64 = 0.05;

/// Integrates from a certified `u0` and checks, sample by sample, that `|u|`
/// does not increase, that `Q_{2p} < K1` and that `|u|(1+t)^{1/p}` stays
/// bounded below.
pub fn monitor_certified_run(
    prob: &ProblemDefinition,
    u0: &StateVector,
    cert: &SlowCertificate,
    cfg: &IntegratorConfig,
) -> Result<MonitorReport> {
    let membership = certify(u0, &prob.spectrum, cert);
    if !membership.member {
        return Err(Error::InvalidParameter {
            name: "u0",
            reason: "initial datum is not in the certified set".into(),
        });
    }
    let mut cfg = cfg.clone();
    cfg.store_states = false;
    let traj = integrate(prob, u0, &cfg)?;
    let p = cert.p;
    let d = 2.0 * p;
    let mut first: Option<(MonitorViolation, f64)> = None;
    let mut flag = |kind, t| {
        if first.is_none() {
            first = Some((kind, t));
        }
    };
    let mut max_q = 0.0f64;
    let mut m1 = f64::INFINITY;
    let mut m1_early = f64::INFINITY;
    let t_end = traj.final_time();
    for k in 0..traj.len() {
        let t = traj.times[k];
        let nh = traj.norm_h[k];
        if k > 0 && nh > traj.norm_h[k - 1] * (1.0 + MONOTONE_REL) {
            flag(MonitorViolation::NormIncreased, t);
        }
        let q = if traj.quotient_d == d {
            traj.q_d[k]
        } else {
            crate::quotients::quotient_from_norms(nh, traj.norm_ahalf[k], d)
        };
        if let Some(q) = q {
            max_q = max_q.max(q);
            if q >= cert.k1 {
                flag(MonitorViolation::QuotientBound, t);
            }
        }
        let a = nh * (1.0 + t).powf(1.0 / p);
        m1 = m1.min(a);
        if t <= t_end / 10.0 {
            m1_early = m1_early.min(a);
        }
    }
    let m1_drift = (m1_early - m1).abs() / m1;
    if !(m1 > 0.0) || m1_drift >= M1_DRIFT_TOL {
        flag(MonitorViolation::LowerBoundDrift, t_end);
    }
    if traj.terminated != Termination::Completed {
        flag(MonitorViolation::RunAborted, t_end);
    }
    Ok(MonitorReport {
        membership,
        t_end,
        samples: traj.len(),
        m1_hat: m1,
        m1_drift,
        max_q2p: max_q,
        pass: first.is_none(),
        first_violation: first,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_dirichlet_interval, make_neumann_interval, make_ode2_slow};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bounds(k0: f64, p: f64) -> OrderBounds {
        OrderBounds {
            k0,
            p,
            q: p,
            lipschitz: 1.0,
            sign_condition: true,
            radius: 1.0,
            provenance: ConstantsProvenance::Supplied,
        }
    }

    #[test]
    fn k1_formula() {
        assert_eq!(compute_constants(&bounds(1.0, 1.0), 1.0).unwrap().k1, 20.0);
        let c = compute_constants(&bounds(1.0, 2.0), 3.0).unwrap();
        assert!((c.k1 - 28.0 / 3.0).abs() < 1e-14);
        let c2 = compute_constants(&bounds(1.0, 2.0), 6.0).unwrap();
        assert!((c2.k1 * 2.0 - c.k1).abs() < 1e-14);
    }

    #[test]
    fn sigma0_is_largest_dyadic_with_slack() {
        let b = bounds(1.3, 2.0);
        let c = compute_constants(&b, 1.0).unwrap();
        assert!(c.slack.ball >= SIGMA_SLACK && c.slack.quotient >= SIGMA_SLACK);
        let k = (b.radius / c.sigma0).log2();
        assert!((k - k.round()).abs() < 1e-12);
        if c.sigma0 < b.radius {
            let s = sigma_slack(2.0 * c.sigma0, b.k0, b.p, b.q, c.k1, b.radius);
            assert!(s.ball < SIGMA_SLACK || s.quotient < SIGMA_SLACK);
        }
    }

    #[test]
    fn sign_condition_is_required() {
        let mut b = bounds(1.0, 2.0);
        b.sign_condition = false;
        assert_eq!(compute_constants(&b, 1.0), Err(Error::SignConditionMissing));
        let c = compute_constants_with(&b, 1.0, &CertifyOptions { waive_sign_condition: true }).unwrap();
        assert!(c.sign_condition_waived);
    }

    #[test]
    fn membership_examples() {
        let prob = make_neumann_interval(8, 2.0, 1.0).unwrap();
        let cert = certificate_for(&prob, &CertifyOptions::default()).unwrap();
        let s = &prob.spectrum;
        assert!(certify(&StateVector::unit(8, 0).scaled(0.5 * cert.sigma0), s, &cert).member);
        assert!(!certify(&StateVector::zeros(8), s, &cert).member);
        // orthogonal to the kernel with twice the allowed quotient
        // |A^{1/2}v|^2 = 4 s^2 = 2 K1 s^{2+2p}
        let v = StateVector::unit(8, 2).scaled((2.0 / cert.k1).powf(1.0 / (2.0 * cert.p)));
        let m = certify(&v, s, &cert);
        assert!(!m.member && (m.quotient_slack + 1.0).abs() < 1e-9, "{m:?}");
    }

    #[test]
    fn trivial_kernel_is_rejected() {
        let prob = make_dirichlet_interval(4, 2.0, 1.0, false).unwrap();
        assert_eq!(
            certificate_for(&prob, &CertifyOptions::default()),
            Err(Error::TrivialKernel)
        );
    }

    #[test]
    fn sampled_members_are_open() {
        let prob = make_neumann_interval(8, 2.0, 1.0).unwrap();
        let cert = certificate_for(&prob, &CertifyOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let u = sample_member(&prob.spectrum, &cert, &mut rng);
            let r = openness_probe(&u, &prob.spectrum, &cert, 100, 0.99, &mut rng);
            assert!(r.pass && r.radius > 0.0, "{r:?}");
        }
        let outside = StateVector::unit(8, 0).scaled(2.0 * cert.sigma0);
        assert_eq!(openness_radius(&outside, &prob.spectrum, &cert), 0.0);
    }

    #[test]
    fn openness_radius_is_sharp_on_the_kernel() {
        // u0 = a e_0: the radius is limited by sigma0 - a or by the quotient condition
        let prob = make_neumann_interval(8, 2.0, 1.0).unwrap();
        let cert = certificate_for(&prob, &CertifyOptions::default()).unwrap();
        let a = 0.5 * cert.sigma0;
        let r = openness_radius(&StateVector::unit(8, 0).scaled(a), &prob.spectrum, &cert);
        let inside = |e: f64| a + e < cert.sigma0 && e * e < cert.k1 * (a - e).powf(2.0 + 2.0 * cert.p);
        assert!(r > 0.0 && inside(r) && !inside(r * (1.0 + 1e-9)), "{r}");
    }

    #[test]
    fn ode2_slow_monitor_with_waiver() {
        let prob = make_ode2_slow();
        let cert = certificate_for(&prob, &CertifyOptions { waive_sign_condition: true }).unwrap();
        let x0 = cert.sigma0 / 2.0;
        let u0 = StateVector(vec![x0, 0.0]);
        let cfg = IntegratorConfig {
            diag_stride: 10,
            ..IntegratorConfig::geometric(1e-2, 1e4, 1e-3)
        };
        let r = monitor_certified_run(&prob, &u0, &cert, &cfg).unwrap();
        assert!(r.pass, "{r:?}");
        // (1+t)/(x0^{-2}+2t) increases when x0^2 < 1/2, so the infimum sits at t = 0
        assert!(x0 * x0 < 0.5);
        assert!((r.m1_hat / x0 - 1.0).abs() < 1e-12, "{} {}", r.m1_hat, x0);
    }
}
