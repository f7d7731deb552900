//! Fixed-point construction of fast solutions with a prescribed profile.
//!
//! For an eigenvalue `lambda` with eigenvector `v0` and an upper datum `w0`
//! in `H+` we look for `u(t) = v0 e^{-lambda t} + g(t) e^{-delta t}`. The map
//! `g -> g_bar` solves the lower modes backwards from infinity and the upper
//! modes forwards from `w0`; it is a contraction for small data.
//!
//! Everything is carried in the scaled variables `g = (u - v0 e^{-lambda t})
//! e^{delta t}` and `phi~ = f(u) e^{delta t}`, so the kernels in both
//! Duhamel integrals decay and the quadrature never sees large exponentials.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorConfig, Termination};
use crate::models::ProblemDefinition;
use crate::quadrature::linear_weights;
use crate::spectral::{SpectralPart, SpectralSplit, StateVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FastOptions {
    /// Uniform grid step on `[0, T]`.
    pub grid_step: f64,
    /// `T` is chosen with `e^{-(delta - lambda) T}` below this.
    pub tail_tol: f64,
    /// Stop once successive iterates are this close.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FastOptions {
    fn default() -> Self {
        Self {
            grid_step: 5e-3,
            tail_tol: 1e-10,
            tolerance: 1e-12,
            max_iterations: 200,
        }
    }
}

/// The two smallness conditions evaluated at the final `r0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smallness {
    /// `R - 2 r1`.
    pub ball_slack: f64,
    /// `2L(2r1)^p (sqrt(lambda+1)/(delta-lambda) + sqrt(beta+1)/(beta-delta))`,
    /// required to be at most 1/2.
    pub contraction_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastParams {
    pub lambda: f64,
    pub block: usize,
    /// Next eigenvalue above `lambda`; `None` stands for `+infinity`.
    pub beta: Option<f64>,
    pub delta: f64,
    pub r0_requested: f64,
    pub r0: f64,
    pub r1: f64,
    pub halvings: u32,
    pub smallness: Smallness,
    pub t_max: f64,
    pub grid_step: f64,
    pub grid_len: usize,
    /// Decay rate assumed for `phi~` beyond `t_max`.
    pub tail_rate: f64,
}

impl FastParams {
    pub fn grid(&self) -> Vec<f64> {
        (0..self.grid_len).map(|k| k as f64 * self.grid_step).collect()
    }
}

const R0_MIN: f64 = 1e-12;

fn smallness(prob: &ProblemDefinition, lambda: f64, beta: Option<f64>, delta: f64, r1: f64) -> Smallness {
    let b = &prob.bounds;
    let upper = match beta {
        Some(beta) => (beta + 1.0).sqrt() / (beta - delta),
        None => 0.0,
    };
    Smallness {
        ball_slack: b.radius - 2.0 * r1,
        contraction_bound: 2.0 * b.lipschitz * (2.0 * r1).powf(b.p) * ((lambda + 1.0).sqrt() / (delta - lambda) + upper),
    }
}

pub fn choose_params(prob: &ProblemDefinition, lambda: f64, r0: f64) -> Result<FastParams> {
    choose_params_with(prob, lambda, r0, &FastOptions::default())
}

/// `delta` at the midpoint of `(lambda, min{beta, (1+p) lambda})`, `T` from
/// the tail tolerance, and `r0` halved until both smallness conditions hold.
pub fn choose_params_with(prob: &ProblemDefinition, lambda: f64, r0: f64, opts: &FastOptions) -> Result<FastParams> {
    let spectrum = &prob.spectrum;
    let block = spectrum
        .block_of_eigenvalue(lambda)
        .ok_or(Error::NotAnEigenvalue(lambda))?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: "fast solutions need a positive eigenvalue".into(),
        });
    }
    if !(r0 > 0.0) || !r0.is_finite() {
        return Err(Error::InvalidParameter {
            name: "r0",
            reason: format!("must be positive, got {r0}"),
        });
    }
    if !(opts.grid_step > 0.0) || !(opts.tail_tol > 0.0 && opts.tail_tol < 1.0) {
        return Err(Error::InvalidParameter {
            name: "grid_step",
            reason: "grid step and tail tolerance must be positive".into(),
        });
    }
    let p = prob.bounds.p;
    let beta = spectrum.beta_above(block);
    let cap = beta.unwrap_or(f64::INFINITY).min((1.0 + p) * lambda);
    let delta = lambda + 0.5 * (cap - lambda);
    let r1_factor = 2.0 * (1.0 + beta.map_or(0.0, |b| 1.0 / b)).sqrt();

    let mut r = r0;
    let mut halvings = 0;
    let small = loop {
        let s = smallness(prob, lambda, beta, delta, r1_factor * r);
        if s.ball_slack > 0.0 && s.contraction_bound <= 0.5 {
            break s;
        }
        r *= 0.5;
        halvings += 1;
        if r < R0_MIN {
            return Err(Error::SmallnessUnattainable);
        }
    };

    let t_max = -opts.tail_tol.ln() / (delta - lambda);
    let grid_len = (t_max / opts.grid_step).ceil() as usize + 1;
    Ok(FastParams {
        lambda,
        block,
        beta,
        delta,
        r0_requested: r0,
        r0: r,
        r1: r1_factor * r,
        halvings,
        smallness: small,
        t_max: (grid_len - 1) as f64 * opts.grid_step,
        grid_step: opts.grid_step,
        grid_len,
        tail_rate: (1.0 + p) * lambda - delta,
    })
}

/// A function `g: [0, T] -> D(A^{1/2})` sampled on the parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointIterate {
    pub values: Vec<StateVector>,
    /// `sup_t |g(t)|_{D(A^{1/2})}`.
    pub sup_norm: f64,
}

impl FixedPointIterate {
    pub fn zero(params: &FastParams, dim: usize) -> Self {
        Self {
            values: vec![StateVector::zeros(dim); params.grid_len],
            sup_norm: 0.0,
        }
    }

    pub fn from_values(prob: &ProblemDefinition, values: Vec<StateVector>) -> Self {
        let sup_norm = values.iter().map(|v| prob.spectrum.norm_d(v)).fold(0.0, f64::max);
        Self { values, sup_norm }
    }

    /// Linear interpolation on the grid, exponential tail `e^{-(delta-lambda)(t-T)}` beyond it.
    pub fn at(&self, params: &FastParams, t: f64) -> StateVector {
        let h = params.grid_step;
        let last = self.values.len() - 1;
        if t >= params.t_max {
            return self.values[last].scaled((-(params.delta - params.lambda) * (t - params.t_max)).exp());
        }
        let x = (t / h).max(0.0);
        let k = (x.floor() as usize).min(last - 1);
        let th = x - k as f64;
        let mut v = self.values[k].scaled(1.0 - th);
        v.axpy(th, &self.values[k + 1]);
        v
    }
}

/// `sup_k |a_k - b_k|_{D(A^{1/2})}`.
pub fn distance(prob: &ProblemDefinition, a: &FixedPointIterate, b: &FixedPointIterate) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| prob.spectrum.norm_d(&x.sub(y)))
        .fold(0.0, f64::max)
}

fn check_data(prob: &ProblemDefinition, params: &FastParams, v0: &StateVector, w0: &StateVector) -> Result<SpectralSplit> {
    let spectrum = &prob.spectrum;
    spectrum.check_state(v0)?;
    spectrum.check_state(w0)?;
    let split = spectrum.split(params.block);
    if !v0.supported_in(split.range(SpectralPart::Lambda)) {
        return Err(Error::ProfileNotEigenvector);
    }
    if !w0.supported_in(split.range(SpectralPart::Plus)) {
        return Err(Error::UpperComponentNotInHPlus);
    }
    Ok(split)
}

/// One application `g -> g_bar` of the construction map.
pub fn apply_f(
    g: &FixedPointIterate,
    params: &FastParams,
    prob: &ProblemDefinition,
    v0: &StateVector,
    w0: &StateVector,
) -> Result<FixedPointIterate> {
    let split = check_data(prob, params, v0, w0)?;
    apply_f_unchecked(g, params, prob, v0, w0, &split)
}

fn apply_f_unchecked(
    g: &FixedPointIterate,
    params: &FastParams,
    prob: &ProblemDefinition,
    v0: &StateVector,
    w0: &StateVector,
    split: &SpectralSplit,
) -> Result<FixedPointIterate> {
    let spectrum = &prob.spectrum;
    let n = spectrum.total_dim();
    let (lambda, delta, h) = (params.lambda, params.delta, params.grid_step);
    let len = params.grid_len;
    if g.values.len() != len {
        return Err(Error::DimensionMismatch {
            expected: len,
            got: g.values.len(),
        });
    }

    // phi~(t_k) = f(v0 e^{-lambda t} + g e^{-delta t}) e^{delta t}
    let phi: Vec<StateVector> = if prob.is_linear() {
        vec![StateVector::zeros(n); len]
    } else {
        (0..len)
            .into_par_iter()
            .map(|k| {
                let t = k as f64 * h;
                let mut u = v0.scaled((-lambda * t).exp());
                u.axpy((-delta * t).exp(), &g.values[k]);
                let f = prob.eval_nonlinearity(&u).map_err(|e| match e {
                    Error::OutsideValidityBall { .. } => Error::LeftValidityBall { t },
                    other => other,
                })?;
                Ok(f.scaled((delta * t).exp()))
            })
            .collect::<Result<_>>()?
    };

    let mut out = vec![StateVector::zeros(n); len];
    let mus = spectrum.mode_eigenvalues();
    for j in split.range(SpectralPart::Minus) {
        // -int_t^inf e^{-(delta - mu)(s - t)} phi~(s) ds, swept backwards
        let kappa = delta - mus[j];
        let (wa, wb) = linear_weights(kappa, h);
        let decay = (-kappa * h).exp();
        let mut acc = phi[len - 1][j] / (kappa + params.tail_rate);
        out[len - 1][j] = -acc;
        for k in (0..len - 1).rev() {
            acc = decay * acc + wb * phi[k][j] + wa * phi[k + 1][j];
            out[k][j] = -acc;
        }
    }
    for j in split.range(SpectralPart::Plus) {
        // e^{-(mu - delta) t} w0 + int_0^t e^{-(mu - delta)(t - s)} phi~(s) ds
        let c = mus[j] - delta;
        let (wa, wb) = linear_weights(c, h);
        let decay = (-c * h).exp();
        let mut acc = 0.0;
        out[0][j] = w0[j];
        for k in 1..len {
            acc = decay * acc + wa * phi[k - 1][j] + wb * phi[k][j];
            out[k][j] = (-c * k as f64 * h).exp() * w0[j] + acc;
        }
    }
    Ok(FixedPointIterate::from_values(prob, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSolution {
    pub params: FastParams,
    pub v0: StateVector,
    pub w0: StateVector,
    /// Lower component of the initial datum.
    pub w1: StateVector,
    /// `w0 + w1`.
    pub u0: StateVector,
    pub g_star: FixedPointIterate,
    pub iterations: usize,
    /// `dist(g_{k+1}, g_k)` for each application of the map.
    pub distances: Vec<f64>,
    pub contraction_ratios: Vec<f64>,
    pub residual: f64,
    /// Largest `sup_norm` over all iterates, to compare with `r1`.
    pub max_sup_norm: f64,
}

const STALL_RATIO: f64 = 0.9;
const STALL_COUNT: usize = 10;

pub fn solve_fixed_point(
    prob: &ProblemDefinition,
    v0: &StateVector,
    w0: &StateVector,
    params: &FastParams,
) -> Result<FixedPointSolution> {
    solve_fixed_point_with(prob, v0, w0, params, &FastOptions::default())
}

/// Picard iteration from `g = 0` until successive iterates agree.
pub fn solve_fixed_point_with(
    prob: &ProblemDefinition,
    v0: &StateVector,
    w0: &StateVector,
    params: &FastParams,
    opts: &FastOptions,
) -> Result<FixedPointSolution> {
    let split = check_data(prob, params, v0, w0)?;
    let spectrum = &prob.spectrum;
    let sum = spectrum.norm_d(v0) + spectrum.norm_d(w0);
    if sum > params.r0 * (1.0 + 1e-12) {
        return Err(Error::DataTooLarge { sum, r0: params.r0 });
    }

    let mut g = FixedPointIterate::zero(params, spectrum.total_dim());
    let mut distances = Vec::new();
    let mut ratios = Vec::new();
    let mut max_sup: f64 = 0.0;
    let mut stalled = 0;
    loop {
        let next = apply_f_unchecked(&g, params, prob, v0, w0, &split)?;
        let d = distance(prob, &next, &g);
        max_sup = max_sup.max(next.sup_norm);
        if let Some(&prev) = distances.last() {
            let r = if prev > 0.0 { d / prev } else { 0.0 };
            ratios.push(r);
            stalled = if r > STALL_RATIO { stalled + 1 } else { 0 };
        }
        distances.push(d);
        g = next;
        if d <= opts.tolerance {
            break;
        }
        if stalled >= STALL_COUNT {
            return Err(Error::NoContraction);
        }
        if distances.len() >= opts.max_iterations {
            return Err(Error::NotConverged(distances.len()));
        }
    }

    // u_g(0) = v0 + g(0); its lower part is w1, its upper part is w0
    let u_at_0 = v0.add(&g.values[0]);
    let w1 = spectrum.project(&u_at_0, &split, SpectralPart::Minus);
    let u0 = w0.add(&w1);
    Ok(FixedPointSolution {
        params: params.clone(),
        v0: v0.clone(),
        w0: w0.clone(),
        w1,
        u0,
        residual: *distances.last().unwrap(),
        iterations: distances.len(),
        distances,
        contraction_ratios: ratios,
        g_star: g,
        max_sup_norm: max_sup,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub integrator: IntegratorConfig,
    /// Late window where `|e^{lambda t} u(t) - v0|_{D(A^{1/2})}` is checked.
    pub window: (f64, f64),
    /// Read `dt`, `t_end`, the output times and the window in units of
    /// `1/(delta - lambda)`, the natural decay time of the remainder.
    pub scale_with_gap: bool,
    pub window_tol: f64,
    /// Allowed gap between the integrated solution and `v0 e^{-lambda t} + g e^{-delta t}`
    /// at sample times that fall on the construction grid.
    pub match_tol: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig {
                store_states: true,
                ..IntegratorConfig::uniform(1e-3, 8.0)
            },
            window: (2.0, 8.0),
            scale_with_gap: true,
            window_tol: 1e-4,
            match_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub window_error: f64,
    pub window_argmax_t: f64,
    pub match_error: f64,
    pub match_argmax_t: f64,
    pub termination: Termination,
    pub pass: bool,
}

/// Integrates forward from `u0` and compares with the constructed solution.
pub fn validate_solution(
    sol: &FixedPointSolution,
    prob: &ProblemDefinition,
    params: &FastParams,
    cfg: &ValidationConfig,
) -> Result<ValidationReport> {
    validate_from(&sol.u0, sol, prob, params, cfg)
}

/// As [`validate_solution`], starting from an arbitrary datum.
pub fn validate_from(
    u0: &StateVector,
    sol: &FixedPointSolution,
    prob: &ProblemDefinition,
    params: &FastParams,
    cfg: &ValidationConfig,
) -> Result<ValidationReport> {
    let (lambda, delta) = (params.lambda, params.delta);
    let unit = if cfg.scale_with_gap { 1.0 / (delta - lambda) } else { 1.0 };
    let mut icfg = cfg.integrator.clone();
    icfg.store_states = true;
    icfg.dt *= unit;
    icfg.t_end *= unit;
    icfg.dt_max = icfg.dt_max.map(|h| h * unit);
    icfg.output_times.iter_mut().for_each(|t| *t *= unit);
    let window = (cfg.window.0 * unit, cfg.window.1 * unit);
    let traj = integrate(prob, u0, &icfg)?;
    let states = traj.states()?;
    let spectrum = &prob.spectrum;
    let mut report = ValidationReport {
        window_error: 0.0,
        window_argmax_t: f64::NAN,
        match_error: 0.0,
        match_argmax_t: f64::NAN,
        termination: traj.terminated,
        pass: false,
    };
    let mut covered = false;
    for (k, u) in states.iter().enumerate() {
        let t = traj.times[k];
        if t >= window.0 && t <= window.1 {
            covered = true;
            let e = spectrum.norm_d(&u.scaled((lambda * t).exp()).sub(&sol.v0));
            if e > report.window_error {
                report.window_error = e;
                report.window_argmax_t = t;
            }
        }
        // compare on grid nodes only, where g is known without interpolation
        let node = (t / params.grid_step).round();
        if t <= params.t_max && (t / params.grid_step - node).abs() < 1e-6 {
            let mut expect = sol.v0.scaled((-lambda * t).exp());
            expect.axpy((-delta * t).exp(), &sol.g_star.values[node as usize]);
            let e = spectrum.norm_d(&u.sub(&expect));
            if e > report.match_error {
                report.match_error = e;
                report.match_argmax_t = t;
            }
        }
    }
    report.pass = covered
        && traj.terminated == Termination::Completed
        && report.window_error < cfg.window_tol
        && report.match_error < cfg.match_tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_linear, make_neumann_interval, make_ode2_fast};
    use crate::spectral::SpectrumSpec;

    #[test]
    fn delta_and_r1() {
        let prob = make_neumann_interval(8, 2.0, 1.0).unwrap();
        let fp = choose_params(&prob, 1.0, 1e-3).unwrap();
        assert_eq!(fp.beta, Some(4.0));
        assert_eq!(fp.delta, 2.0);
        assert!((fp.r1 - 2.0 * 1.25f64.sqrt() * fp.r0).abs() < 1e-15);

        let prob = make_linear(SpectrumSpec::simple(vec![0.0, 1.0, 2.0]).unwrap());
        let fp = choose_params(&prob, 2.0, 0.1).unwrap();
        assert_eq!(fp.beta, None);
        assert_eq!(fp.delta, 2.0 + 0.5 * prob.bounds.p * 2.0);
        let fp = choose_params(&prob, 1.0, 0.1).unwrap();
        assert!((fp.r1 - 2.0 * 1.5f64.sqrt() * 0.1).abs() < 1e-15);
        assert!((fp.r1 - 0.24495).abs() < 1e-5);
    }

    #[test]
    fn smallness_holds_after_halving() {
        let prob = make_neumann_interval(8, 2.0, 1.0).unwrap();
        let fp = choose_params(&prob, 1.0, 1.0).unwrap();
        assert!(fp.halvings > 0);
        assert!(fp.smallness.ball_slack > 0.0 && fp.smallness.contraction_bound <= 0.5);
        assert!((-(fp.delta - fp.lambda) * fp.t_max).exp() < 1e-10);
        assert!(matches!(choose_params(&prob, 2.0, 0.1), Err(Error::NotAnEigenvalue(_))));
    }

    #[test]
    fn linear_map_examples() {
        let prob = make_linear(SpectrumSpec::simple(vec![0.0, 1.0, 3.0]).unwrap());
        let fp = choose_params(&prob, 1.0, 0.5).unwrap();
        let v0 = StateVector(vec![0.0, 0.2, 0.0]);
        let zero = FixedPointIterate::zero(&fp, 3);
        let g = apply_f(&zero, &fp, &prob, &v0, &StateVector::zeros(3)).unwrap();
        assert_eq!(g.sup_norm, 0.0);
        let w0 = StateVector(vec![0.0, 0.0, 0.1]);
        let g = apply_f(&zero, &fp, &prob, &v0, &w0).unwrap();
        assert!((g.sup_norm - prob.spectrum.norm_d(&w0)).abs() < 1e-15);
        for (k, v) in g.values.iter().enumerate() {
            let t = k as f64 * fp.grid_step;
            assert!((v[2] - 0.1 * (-(3.0 - fp.delta) * t).exp()).abs() < 1e-15);
        }
        let sol = solve_fixed_point(&prob, &v0, &w0, &fp).unwrap();
        assert!(sol.iterations <= 2);
        assert!(sol.u0.sub(&v0.add(&w0)).norm_h() < 1e-12);
        assert_eq!(sol.w1, v0);
    }

    #[test]
    fn zero_data_is_a_fixed_point() {
        let prob = make_neumann_interval(6, 2.0, 1.0).unwrap();
        let fp = choose_params(&prob, 1.0, 0.01).unwrap();
        let z = StateVector::zeros(6);
        let sol = solve_fixed_point(&prob, &z, &z, &fp).unwrap();
        assert!(sol.u0.is_zero() && sol.w1.is_zero() && sol.residual == 0.0);
    }

    #[test]
    fn closed_form_fixed_point_is_reproduced() {
        // x = a e^{-t}, y' + 10 y = 2 a^2 e^{-2t}, y(0) = b
        let prob = make_ode2_fast(1.0, 10.0, 1.0, 1.0).unwrap();
        let fp = choose_params(&prob, 1.0, 0.01).unwrap();
        let (a, b) = (0.004, 0.002);
        let y = |t: f64| b * (-10.0 * t).exp() + 0.25 * a * a * ((-2.0 * t).exp() - (-10.0 * t).exp());
        let exact: Vec<StateVector> = fp
            .grid()
            .iter()
            .map(|&t| StateVector(vec![0.0, y(t) * (fp.delta * t).exp()]))
            .collect();
        let g = FixedPointIterate::from_values(&prob, exact);
        let v0 = StateVector(vec![a, 0.0]);
        let w0 = StateVector(vec![0.0, b]);
        let gb = apply_f(&g, &fp, &prob, &v0, &w0).unwrap();
        let d = distance(&prob, &gb, &g);
        assert!(d < 1e-9 * g.sup_norm, "{d}");
    }

    #[test]
    fn data_checks() {
        let prob = make_neumann_interval(6, 2.0, 1.0).unwrap();
        let fp = choose_params(&prob, 1.0, 0.01).unwrap();
        let z = StateVector::zeros(6);
        assert_eq!(
            solve_fixed_point(&prob, &StateVector::unit(6, 2).scaled(1e-4), &z, &fp).unwrap_err(),
            Error::ProfileNotEigenvector
        );
        assert_eq!(
            solve_fixed_point(&prob, &z, &StateVector::unit(6, 0).scaled(1e-4), &fp).unwrap_err(),
            Error::UpperComponentNotInHPlus
        );
        assert!(matches!(
            solve_fixed_point(&prob, &StateVector::unit(6, 1), &z, &fp),
            Err(Error::DataTooLarge { .. })
        ));
    }
}
