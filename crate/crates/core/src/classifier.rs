//! Decay-rate classification of trajectories: null, slow (power law) or
//! fast (exponential at an eigenvalue), with profile extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::models::ProblemDefinition;
use crate::spectral::{SpectralPart, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Null,
    Slow,
    Fast,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierOptions {
    /// All norms below this mean the zero solution.
    pub null_threshold: f64,
    /// Required ratio of final to initial `D(A^{1/2})` norm.
    pub decay_ratio: f64,
    /// Relative variation below which a trajectory counts as stationary.
    pub stationary_tol: f64,
    /// Fraction of `[0, T]` used for the exponential fit.
    pub fit_fraction: f64,
    /// Decades of `t` used for the power-law fit.
    pub slow_decades: f64,
    /// Allowed relative slope drift between the two half-windows.
    pub drift_tol: f64,
    pub snap_rel: f64,
    /// Samples with `|u|` below this are ignored by the fits.
    pub floor: f64,
    /// Samples below this fraction of the largest `|u|` are treated as
    /// roundoff and ignored by the fits.
    pub roundoff_floor: f64,
    pub bracket_low: f64,
    pub bracket_high: f64,
    /// Multiplicative margin of the remainder bracket test.
    pub bracket_margin: f64,
}

impl Default for ClassifierOptions {
    fn default() -> Self {
        Self {
            null_threshold: 1e-13,
            decay_ratio: 1e-3,
            stationary_tol: 1e-12,
            fit_fraction: 0.4,
            slow_decades: 2.0,
            drift_tol: 0.02,
            snap_rel: 0.05,
            floor: 1e-150,
            roundoff_floor: 1e-15,
            bracket_low: 0.9,
            bracket_high: 1.1,
            bracket_margin: 2.0,
        }
    }
}

/// Index of the last sample above both the absolute and the roundoff floor.
fn usable_end(traj: &Trajectory, opts: &ClassifierOptions) -> usize {
    let peak = traj.norm_h.iter().cloned().fold(0.0, f64::max);
    let floor = opts.floor.max(opts.roundoff_floor * peak);
    (0..traj.len()).rev().find(|&k| traj.norm_h[k] > floor).unwrap_or(0)
}

/// Least-squares line through `(x, y)` with slope drift between halves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub window: (f64, f64),
    pub points: usize,
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    pub half_slopes: (f64, f64),
    pub drift: f64,
}

impl LineFit {
    pub fn stable(&self, tol: f64) -> bool {
        self.drift.is_finite() && self.drift < tol
    }
}

fn least_squares(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Some((slope, intercept, (rss / nf).sqrt()))
}

/// Fits `y` against `x` on `[lo, hi]` (in `x`) and on both halves.
fn fit_window(x: &[f64], y: &[f64], lo: f64, hi: f64, min_points: usize) -> Option<LineFit> {
    let mid = 0.5 * (lo + hi);
    let pick = |a: f64, b: f64| -> (Vec<f64>, Vec<f64>) {
        x.iter()
            .zip(y)
            .filter(|(xi, yi)| **xi >= a && **xi <= b && yi.is_finite())
            .map(|(a, b)| (*a, *b))
            .unzip()
    };
    let (xs, ys) = pick(lo, hi);
    if xs.len() < min_points {
        return None;
    }
    let (slope, intercept, rms) = least_squares(&xs, &ys)?;
    let (x1, y1) = pick(lo, mid);
    let (x2, y2) = pick(mid, hi);
    let s1 = least_squares(&x1, &y1).map_or(f64::NAN, |f| f.0);
    let s2 = least_squares(&x2, &y2).map_or(f64::NAN, |f| f.0);
    let drift = (s1 - s2).abs() / slope.abs();
    Some(LineFit {
        window: (lo, hi),
        points: xs.len(),
        slope,
        intercept,
        rms_residual: rms,
        half_slopes: (s1, s2),
        drift,
    })
}

const MIN_FIT_POINTS: usize = 8;

/// Verified remainder window around `eta = min{beta, (1+p)lambda, (1+q)lambda}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaWindow {
    pub eta: f64,
    pub lower: f64,
    pub upper: f64,
    /// Fitted exponential rate of `|u - v0 e^{-lambda t}|_{D(A^{1/2})}`.
    pub remainder_rate: Option<f64>,
    pub remainder_fit: Option<LineFit>,
    /// Remainder at roundoff level throughout.
    pub remainder_vanishes: bool,
    /// `remainder * e^{lower t}` decreasing or flat.
    pub decays_at_lower: bool,
    /// `remainder * e^{upper t}` growing.
    pub grows_at_upper: bool,
}

impl GammaWindow {
    pub fn verified(&self) -> bool {
        self.remainder_vanishes || (self.decays_at_lower && self.grows_at_upper)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Evidence {
    pub slow_fit: Option<LineFit>,
    pub fast_fit: Option<LineFit>,
    /// `|u - P_K u| / |u|` at the last usable sample.
    pub range_fraction: Option<f64>,
    pub initial_norm_d: f64,
    pub final_norm_d: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    pub stationary: bool,
    pub p_hat: Option<f64>,
    pub lambda_hat: Option<f64>,
    pub lambda_snapped: Option<f64>,
    pub v0_hat: Option<StateVector>,
    pub gamma_window: Option<GammaWindow>,
    pub evidence: Evidence,
}

impl ClassificationReport {
    fn new(verdict: Verdict, evidence: Evidence) -> Self {
        Self {
            verdict,
            stationary: false,
            p_hat: None,
            lambda_hat: None,
            lambda_snapped: None,
            v0_hat: None,
            gamma_window: None,
            evidence,
        }
    }
}

/// Block index of the eigenvalue that `rate` snaps to, if any.
pub fn snap_eigenvalue(prob: &ProblemDefinition, rate: f64, rel: f64) -> Option<usize> {
    let ev = prob.spectrum.eigenvalues();
    let (b, dist) = ev
        .iter()
        .enumerate()
        .map(|(i, &l)| (i, (rate - l).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    let lam = ev[b];
    let mut tol = rel * lam;
    if b > 0 {
        tol = tol.min(0.5 * (lam - ev[b - 1]));
    }
    if b + 1 < ev.len() {
        tol = tol.min(0.5 * (ev[b + 1] - lam));
    }
    (lam > 0.0 && dist <= tol).then_some(b)
}

pub fn classify(traj: &Trajectory, prob: &ProblemDefinition) -> Result<ClassificationReport> {
    classify_with(traj, prob, &ClassifierOptions::default())
}

pub fn classify_with(
    traj: &Trajectory,
    prob: &ProblemDefinition,
    opts: &ClassifierOptions,
) -> Result<ClassificationReport> {
    let n = traj.len();
    if n < 3 {
        return Err(Error::TooFewSamples(n));
    }
    let nd: Vec<f64> = (0..n).map(|k| traj.norm_d(k)).collect();
    let mut evidence = Evidence {
        initial_norm_d: nd[0],
        final_norm_d: nd[n - 1],
        ..Evidence::default()
    };

    if nd.iter().all(|&v| v < opts.null_threshold) {
        return Ok(ClassificationReport::new(Verdict::Null, evidence));
    }

    let (lo, hi) = traj
        .norm_h
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi > 0.0 && (hi - lo) / hi < opts.stationary_tol {
        evidence.notes.push("stationary: norm constant along the trajectory".into());
        let mut r = ClassificationReport::new(Verdict::Slow, evidence);
        r.stationary = true;
        return Ok(r);
    }

    let ratio = nd[n - 1] / nd[0];
    if !(ratio < opts.decay_ratio) {
        return Err(Error::NotDecayed { ratio });
    }

    // last sample above the floor bounds every fit window
    let eff = usable_end(traj, opts);
    let t_eff = traj.times[eff];
    let t: &[f64] = &traj.times[..=eff];
    let log_u: Vec<f64> = traj.norm_h[..=eff].iter().map(|v| v.ln()).collect();

    if let Some(states) = traj.states.as_ref() {
        let u = &states[eff];
        let split = kernel_split(prob);
        let pk = prob.spectrum.project(u, &split, SpectralPart::Kernel);
        evidence.range_fraction = Some(u.sub(&pk).norm_h() / u.norm_h());
    }

    // power law: log|u| against log t over the last decades
    let log_t: Vec<f64> = t.iter().map(|&s| if s > 0.0 { s.ln() } else { f64::NAN }).collect();
    let slow_lo = t_eff.ln() - opts.slow_decades * std::f64::consts::LN_10;
    let slow_fit = fit_window(&log_t, &log_u, slow_lo, t_eff.ln(), MIN_FIT_POINTS);
    if let Some(f) = &slow_fit {
        if f.stable(opts.drift_tol) && f.slope < 0.0 {
            let mut r = ClassificationReport::new(Verdict::Slow, evidence);
            r.p_hat = Some(-1.0 / f.slope);
            r.evidence.slow_fit = slow_fit;
            return Ok(r);
        }
    }
    evidence.slow_fit = slow_fit;

    // exponential: log|u| against t over the final fraction of [0, t_eff]
    let fast_fit = fit_window(t, &log_u, (1.0 - opts.fit_fraction) * t_eff, t_eff, MIN_FIT_POINTS);
    let Some(fit) = fast_fit.clone().filter(|f| f.stable(opts.drift_tol) && f.slope < 0.0) else {
        evidence.fast_fit = fast_fit;
        evidence.notes.push("no stable power-law or exponential rate".into());
        return Ok(ClassificationReport::new(Verdict::Inconclusive, evidence));
    };
    evidence.fast_fit = fast_fit;
    let rate = -fit.slope;
    let max_ev = prob.spectrum.max_eigenvalue();
    let snapped = snap_eigenvalue(prob, rate, opts.snap_rel);
    if snapped.is_none() && rate > max_ev {
        evidence.notes.push(format!(
            "rate {rate:.6} exceeds the largest retained eigenvalue {max_ev}: super-exponential decay or unresolved modes"
        ));
    }
    let Some(block) = snapped else {
        evidence.notes.push(format!("rate {rate:.6} is not near an eigenvalue"));
        let mut r = ClassificationReport::new(Verdict::Inconclusive, evidence);
        r.lambda_hat = Some(rate);
        return Ok(r);
    };
    let lambda = prob.spectrum.eigenvalues()[block];
    let (v0, gamma) = extract_profile_with(traj, prob, lambda, opts)?;
    let mut r = ClassificationReport::new(Verdict::Fast, evidence);
    r.lambda_hat = Some(rate);
    r.lambda_snapped = Some(lambda);
    r.v0_hat = Some(v0);
    r.gamma_window = Some(gamma);
    Ok(r)
}

fn kernel_split(prob: &ProblemDefinition) -> crate::spectral::SpectralSplit {
    prob.spectrum.split(0)
}

/// `eta = min{beta, (1+p)lambda, (1+q)lambda}` for the block of `lambda`.
pub fn remainder_eta(prob: &ProblemDefinition, block: usize) -> f64 {
    let lam = prob.spectrum.eigenvalues()[block];
    let beta = prob.spectrum.beta_above(block).unwrap_or(f64::INFINITY);
    let b = &prob.bounds;
    beta.min((1.0 + b.p) * lam).min((1.0 + b.q) * lam)
}

pub fn extract_profile(
    traj: &Trajectory,
    prob: &ProblemDefinition,
    lambda: f64,
) -> Result<(StateVector, GammaWindow)> {
    extract_profile_with(traj, prob, lambda, &ClassifierOptions::default())
}

/// Profile `v0 = lim e^{lambda t} P_lambda u(t)` and the remainder bracket.
pub fn extract_profile_with(
    traj: &Trajectory,
    prob: &ProblemDefinition,
    lambda: f64,
    opts: &ClassifierOptions,
) -> Result<(StateVector, GammaWindow)> {
    let states = traj.states()?;
    let spectrum = &prob.spectrum;
    let block = spectrum
        .block_of_eigenvalue(lambda)
        .ok_or(Error::NotAnEigenvalue(lambda))?;
    let split = spectrum.split(block);
    let eff = usable_end(traj, opts);
    let t_eff = traj.times[eff];

    // average over the final tenth of the usable window
    let late: Vec<usize> = (0..=eff).filter(|&k| traj.times[k] >= 0.9 * t_eff).collect();
    let mut v0 = StateVector::zeros(spectrum.total_dim());
    for &k in &late {
        let p = spectrum.project(&states[k], &split, SpectralPart::Lambda);
        v0.axpy((lambda * traj.times[k]).exp() / late.len() as f64, &p);
    }
    if v0.norm_h() < 1e-12 {
        return Err(Error::ProfileVanishes);
    }

    let eta = remainder_eta(prob, block);
    let remainder: Vec<f64> = (0..=eff)
        .map(|k| {
            let t = traj.times[k];
            spectrum.norm_d(&states[k].sub(&v0.scaled((-lambda * t).exp())))
        })
        .collect();
    // roundoff level of the subtraction
    let resolved: Vec<bool> = (0..=eff).map(|k| remainder[k] > 1e-11 * traj.norm_d(k)).collect();

    let (w_lo, w_hi) = (0.25 * t_eff, 0.55 * t_eff);
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..=eff)
        .filter(|&k| resolved[k] && traj.times[k] >= w_lo && traj.times[k] <= w_hi)
        .map(|k| (traj.times[k], remainder[k].ln()))
        .unzip();
    let mut gamma = GammaWindow {
        eta,
        lower: opts.bracket_low * eta,
        upper: opts.bracket_high * eta,
        remainder_rate: None,
        remainder_fit: None,
        remainder_vanishes: false,
        decays_at_lower: false,
        grows_at_upper: false,
    };
    if !resolved.iter().skip(1).any(|&r| r) {
        gamma.remainder_vanishes = true;
        gamma.decays_at_lower = true;
        return Ok((v0, gamma));
    }
    if let Some(fit) = fit_window(&xs, &ys, w_lo, w_hi, MIN_FIT_POINTS) {
        let (t0, t1) = (xs[0], xs[xs.len() - 1]);
        let (r0, r1) = (ys[0], ys[ys.len() - 1]);
        let growth = |g: f64| (r1 + g * t1) - (r0 + g * t0);
        let m = opts.bracket_margin.ln();
        gamma.decays_at_lower = growth(gamma.lower) <= m;
        gamma.grows_at_upper = growth(gamma.upper) >= m;
        gamma.remainder_rate = Some(-fit.slope);
        gamma.remainder_fit = Some(fit);
    }
    Ok((v0, gamma))
}

/// Lower and upper constants of the slow branch measured on a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowConclusions {
    pub p: f64,
    /// `inf |u(t)| (1+t)^{1/p}`.
    pub m1_hat: f64,
    /// `sup |A^{1/2}u(t)| / |u(t)|^{1+p}`.
    pub m2_hat: f64,
    /// Relative change of the running inf/sup over the last decade.
    pub m1_drift: f64,
    pub m2_drift: f64,
    pub pass: bool,
}

const SLOW_STABILITY: f64 = 0.05;

/// Checks `|u| >= M1 (1+t)^{-1/p}` and `|A^{1/2}u| <= M2 |u|^{1+p}` with the
/// problem's own `p`.
pub fn verify_slow_conclusions(
    traj: &Trajectory,
    prob: &ProblemDefinition,
    report: &ClassificationReport,
) -> Result<SlowConclusions> {
    if report.verdict != Verdict::Slow {
        return Err(Error::InvalidParameter {
            name: "verdict",
            reason: format!("slow conclusions need a slow verdict, got {:?}", report.verdict),
        });
    }
    let p = prob.bounds.p;
    let n = traj.len();
    let t_end = traj.final_time();
    let split_t = t_end / 10.0;
    let (mut m1, mut m2) = (f64::INFINITY, 0.0f64);
    let (mut m1_early, mut m2_early) = (f64::INFINITY, 0.0f64);
    for k in 0..n {
        let t = traj.times[k];
        let a = traj.norm_h[k] * (1.0 + t).powf(1.0 / p);
        let b = if traj.norm_h[k] > 0.0 {
            traj.norm_ahalf[k] / traj.norm_h[k].powf(1.0 + p)
        } else {
            f64::INFINITY
        };
        m1 = m1.min(a);
        m2 = m2.max(b);
        if t <= split_t {
            m1_early = m1_early.min(a);
            m2_early = m2_early.max(b);
        }
    }
    let m1_drift = (m1_early - m1).abs() / m1;
    let m2_drift = if m2 > 0.0 { (m2 - m2_early).abs() / m2 } else { 0.0 };
    let pass = m1 > 0.0
        && m1.is_finite()
        && m2.is_finite()
        && m1_drift < SLOW_STABILITY
        && m2_drift < SLOW_STABILITY;
    Ok(SlowConclusions {
        p,
        m1_hat: m1,
        m2_hat: m2,
        m1_drift,
        m2_drift,
        pass,
    })
}
