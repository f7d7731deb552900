//! Exponential time differencing for `u' + Au = f(u)` in eigencoordinates.
//!
//! The linear part is integrated exactly mode by mode, so stiff modes never
//! restrict the step. Steps are either uniform or grow geometrically with `t`
//! (`step_growth`), which lets one run cover many decades of time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ProblemDefinition;
use crate::quadrature::{linear_weights, phi1, phi2};
use crate::quotients::{quotient_from_norms, MIN_QUOTIENT_NORM};
use crate::spectral::{SpectrumSpec, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Etd1,
    #[default]
    Etd2rk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    /// Base step.
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Record every `diag_stride`-th step.
    pub diag_stride: usize,
    pub blowup_norm: f64,
    /// When set, the step is `max(dt, step_growth * t)`, capped by `dt_max`.
    pub step_growth: Option<f64>,
    pub dt_max: Option<f64>,
    /// Times the stepper lands on exactly; each is always recorded.
    pub output_times: Vec<f64>,
    pub store_states: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 10.0,
            scheme: Scheme::Etd2rk,
            diag_stride: 1,
            blowup_norm: 1e6,
            step_growth: None,
            dt_max: None,
            output_times: Vec::new(),
            store_states: true,
        }
    }
}

impl IntegratorConfig {
    pub fn uniform(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            ..Self::default()
        }
    }

    /// Geometric stepping: `h = max(dt, growth * t)`.
    pub fn geometric(dt: f64, t_end: f64, growth: f64) -> Self {
        Self {
            dt,
            t_end,
            step_growth: Some(growth),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::EmptyTimeSpan);
        }
        if !(self.dt > 0.0) || self.dt >= self.t_end {
            return bad("dt", format!("need 0 < dt < t_end, got dt = {}", self.dt));
        }
        if self.diag_stride == 0 {
            return bad("diag_stride", "must be positive".into());
        }
        if !(self.blowup_norm > 0.0) {
            return bad("blowup_norm", "must be positive".into());
        }
        if let Some(g) = self.step_growth {
            if !(g > 0.0 && g < 1.0) {
                return bad("step_growth", format!("must lie in (0, 1), got {g}"));
            }
        }
        if let Some(m) = self.dt_max {
            if !(m >= self.dt) {
                return bad("dt_max", "must be at least dt".into());
            }
        }
        Ok(())
    }

    fn step_at(&self, t: f64) -> f64 {
        let mut h = match self.step_growth {
            Some(g) => self.dt.max(g * t),
            None => self.dt,
        };
        if let Some(m) = self.dt_max {
            h = h.min(m);
        }
        h
    }

    fn sorted_outputs(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .output_times
            .iter()
            .copied()
            .filter(|&t| t > 0.0 && t < self.t_end)
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Blowup,
    LeftBall,
}

/// Time samples of a solution with norm and quotient diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Option<Vec<StateVector>>,
    pub norm_h: Vec<f64>,
    pub norm_ahalf: Vec<f64>,
    /// `|A^{1/2}u|^2 / |u|^2`; `None` where `|u|` is too small.
    pub q: Vec<Option<f64>>,
    /// `|A^{1/2}u|^2 / |u|^{2+d}` with `d = quotient_d`.
    pub q_d: Vec<Option<f64>>,
    pub quotient_d: f64,
    pub terminated: Termination,
    pub steps: usize,
}

impl Trajectory {
    fn new(quotient_d: f64, store: bool) -> Self {
        Self {
            times: Vec::new(),
            states: store.then(Vec::new),
            norm_h: Vec::new(),
            norm_ahalf: Vec::new(),
            q: Vec::new(),
            q_d: Vec::new(),
            quotient_d,
            terminated: Termination::Completed,
            steps: 0,
        }
    }

    fn record(&mut self, spectrum: &SpectrumSpec, t: f64, u: &StateVector) {
        let nh = u.norm_h();
        let na = spectrum.norm_ahalf(u);
        self.times.push(t);
        self.norm_h.push(nh);
        self.norm_ahalf.push(na);
        let (q, qd) = if nh >= MIN_QUOTIENT_NORM {
            (
                quotient_from_norms(nh, na, 0.0),
                quotient_from_norms(nh, na, self.quotient_d),
            )
        } else {
            (None, None)
        };
        self.q.push(q);
        self.q_d.push(qd);
        if let Some(s) = self.states.as_mut() {
            s.push(u.clone());
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `|u|_{D(A^{1/2})}` at sample `k`.
    pub fn norm_d(&self, k: usize) -> f64 {
        self.norm_h[k].hypot(self.norm_ahalf[k])
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn states(&self) -> Result<&[StateVector]> {
        self.states.as_deref().ok_or(Error::StatesNotStored)
    }

    /// Index of the sample with time closest to `t`.
    pub fn nearest(&self, t: f64) -> Option<usize> {
        if self.times.is_empty() {
            return None;
        }
        let i = self.times.partition_point(|&s| s < t);
        if i == 0 {
            return Some(0);
        }
        if i == self.times.len() {
            return Some(i - 1);
        }
        Some(if t - self.times[i - 1] <= self.times[i] - t { i - 1 } else { i })
    }

    /// Keeps every `stride`-th sample (the last one always survives).
    pub fn resample(&self, stride: usize) -> Self {
        let stride = stride.max(1);
        let n = self.len();
        let keep: Vec<usize> = (0..n).filter(|&k| k % stride == 0 || k + 1 == n).collect();
        let pick = |v: &[f64]| keep.iter().map(|&k| v[k]).collect::<Vec<_>>();
        let pick_opt = |v: &[Option<f64>]| keep.iter().map(|&k| v[k]).collect::<Vec<_>>();
        Self {
            times: pick(&self.times),
            states: self
                .states
                .as_ref()
                .map(|s| keep.iter().map(|&k| s[k].clone()).collect()),
            norm_h: pick(&self.norm_h),
            norm_ahalf: pick(&self.norm_ahalf),
            q: pick_opt(&self.q),
            q_d: pick_opt(&self.q_d),
            quotient_d: self.quotient_d,
            terminated: self.terminated,
            steps: self.steps,
        }
    }
}

struct Clock {
    outputs: Vec<f64>,
    next_output: usize,
}

impl Clock {
    /// Next step length from `t`, clamped so the stepper lands on output
    /// times and on `t_end`. Returns the step and, for clamped steps, the
    /// exact landing time.
    fn step(&mut self, cfg: &IntegratorConfig, t: f64) -> (f64, Option<f64>) {
        let mut h = cfg.step_at(t);
        let mut landing = None;
        while self.next_output < self.outputs.len() && self.outputs[self.next_output] <= t {
            self.next_output += 1;
        }
        let target = self
            .outputs
            .get(self.next_output)
            .copied()
            .unwrap_or(cfg.t_end)
            .min(cfg.t_end);
        // avoid a sliver step right before a landing point
        if t + h >= target * (1.0 - 1e-12) || t + 1.01 * h > target {
            h = target - t;
            landing = Some(target);
            if target < cfg.t_end {
                self.next_output += 1;
            }
        }
        (h, landing)
    }
}

fn mode_factors(spectrum: &SpectrumSpec, h: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut e = Vec::with_capacity(spectrum.total_dim());
    let mut p1 = Vec::with_capacity(spectrum.total_dim());
    let mut p2 = Vec::with_capacity(spectrum.total_dim());
    for &lam in spectrum.mode_eigenvalues() {
        let z = -h * lam;
        e.push(z.exp());
        p1.push(h * phi1(z));
        p2.push(h * phi2(z));
    }
    (e, p1, p2)
}

/// Integrates `u' + Au = f(u)` from `u0`.
pub fn integrate(prob: &ProblemDefinition, u0: &StateVector, cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let spectrum = &prob.spectrum;
    spectrum.check_state(u0)?;
    let radius = prob.bounds.radius;
    let n0 = spectrum.norm_d(u0);
    if n0 >= radius {
        return Err(Error::OutsideValidityBall { norm: n0, radius });
    }

    let n = spectrum.total_dim();
    let linear = prob.is_linear();
    let mut traj = Trajectory::new(2.0 * prob.bounds.p, cfg.store_states);
    let mut clock = Clock {
        outputs: cfg.sorted_outputs(),
        next_output: 0,
    };
    let mut u = u0.clone();
    let mut t = 0.0;
    traj.record(spectrum, t, &u);

    let mut cached_h = f64::NAN;
    let (mut e, mut p1, mut p2) = (Vec::new(), Vec::new(), Vec::new());
    let mut nu = vec![0.0; n];
    let mut na = vec![0.0; n];
    let mut a = StateVector::zeros(n);
    let mut step = 0usize;

    while t < cfg.t_end {
        let (h, landing) = clock.step(cfg, t);
        let forced = landing.is_some();
        if h != cached_h {
            (e, p1, p2) = mode_factors(spectrum, h);
            cached_h = h;
        }
        if linear {
            for j in 0..n {
                u[j] *= e[j];
            }
        } else {
            prob.nonlinearity.apply(u.as_slice(), &mut nu);
            for j in 0..n {
                a[j] = e[j] * u[j] + p1[j] * nu[j];
            }
            match cfg.scheme {
                Scheme::Etd1 => std::mem::swap(&mut u, &mut a),
                Scheme::Etd2rk => {
                    prob.nonlinearity.apply(a.as_slice(), &mut na);
                    for j in 0..n {
                        u[j] = a[j] + p2[j] * (na[j] - nu[j]);
                    }
                }
            }
        }
        t = landing.unwrap_or(t + h);
        step += 1;

        if u.as_slice().iter().any(|x| !x.is_finite()) {
            traj.terminated = Termination::Blowup;
            break;
        }
        let nd = spectrum.norm_d(&u);
        if nd > cfg.blowup_norm {
            traj.record(spectrum, t, &u);
            traj.terminated = Termination::Blowup;
            break;
        }
        if nd >= radius {
            traj.record(spectrum, t, &u);
            traj.terminated = Termination::LeftBall;
            break;
        }
        let last = t >= cfg.t_end;
        if forced || last || step.is_multiple_of(cfg.diag_stride) {
            traj.record(spectrum, t, &u);
        }
        if last {
            break;
        }
    }
    traj.steps = step;
    Ok(traj)
}

/// Forcing `g(t)` sampled on a grid and interpolated linearly in between.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledForcing {
    pub times: Vec<f64>,
    pub values: Vec<StateVector>,
}

impl SampledForcing {
    pub fn from_fn(times: Vec<f64>, g: impl Fn(f64) -> StateVector) -> Self {
        let values = times.iter().map(|&t| g(t)).collect();
        Self { times, values }
    }

    /// Uniform grid `0, h, ..., >= t_end`.
    pub fn uniform(h: f64, t_end: f64, g: impl Fn(f64) -> StateVector) -> Self {
        let n = (t_end / h).ceil() as usize;
        Self::from_fn((0..=n).map(|k| k as f64 * h).collect(), g)
    }

    fn interval_of(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1).min(self.times.len() - 2)
    }

    fn value_at(&self, t: f64) -> StateVector {
        let i = self.interval_of(t);
        let (a, b) = (self.times[i], self.times[i + 1]);
        let th = (t - a) / (b - a);
        let mut v = self.values[i].scaled(1.0 - th);
        v.axpy(th, &self.values[i + 1]);
        v
    }
}

/// Mild solution of `w' + Aw = g(t)`, exact for piecewise-linear `g`.
///
/// Steps never straddle a forcing node, so within a step the integrand is
/// affine and the exponential weights integrate it without error.
pub fn integrate_linear_forced(
    spectrum: &SpectrumSpec,
    u0: &StateVector,
    forcing: &SampledForcing,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    spectrum.check_state(u0)?;
    if forcing.times.len() < 2 || forcing.times.len() != forcing.values.len() {
        return Err(Error::TooFewSamples(forcing.times.len()));
    }
    if forcing.times[0] > 0.0 || forcing.times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter {
            name: "forcing",
            reason: "grid must start at 0 and increase strictly".into(),
        });
    }
    for v in &forcing.values {
        spectrum.check_state(v)?;
    }
    let grid_end = *forcing.times.last().unwrap();
    if grid_end < cfg.t_end * (1.0 - 1e-12) {
        return Err(Error::ForcingTooShort {
            grid_end,
            t_end: cfg.t_end,
        });
    }

    let n = spectrum.total_dim();
    let lams = spectrum.mode_eigenvalues();
    let mut traj = Trajectory::new(2.0, cfg.store_states);
    let mut clock = Clock {
        outputs: cfg.sorted_outputs(),
        next_output: 0,
    };
    let mut u = u0.clone();
    let mut t = 0.0;
    let mut g_start = forcing.value_at(0.0);
    traj.record(spectrum, t, &u);
    let mut step = 0usize;
    while t < cfg.t_end {
        let (mut h, mut landing) = clock.step(cfg, t);
        let node = forcing.times[forcing.interval_of(t) + 1];
        if t + h > node {
            h = node - t;
            landing = None;
        }
        let forced = landing.is_some();
        let t_next = landing.unwrap_or(t + h);
        let g_end = forcing.value_at(t_next);
        for j in 0..n {
            let (wa, wb) = linear_weights(lams[j], h);
            u[j] = (-lams[j] * h).exp() * u[j] + wa * g_start[j] + wb * g_end[j];
        }
        t = t_next;
        g_start = g_end;
        step += 1;
        if u.as_slice().iter().any(|x| !x.is_finite()) || spectrum.norm_d(&u) > cfg.blowup_norm {
            traj.terminated = Termination::Blowup;
            break;
        }
        let last = t >= cfg.t_end;
        if forced || last || step.is_multiple_of(cfg.diag_stride) {
            traj.record(spectrum, t, &u);
        }
        if last {
            break;
        }
    }
    traj.steps = step;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_linear, make_neumann_interval, make_ode2_slow};

    fn x_exact(x0: f64, t: f64) -> f64 {
        (x0.powi(-2) + 2.0 * t).powf(-0.5)
    }

    #[test]
    fn ode2_slow_hits_closed_form() {
        let prob = make_ode2_slow();
        let tr = integrate(&prob, &StateVector(vec![1.0, 0.0]), &IntegratorConfig::uniform(1e-3, 4.0)).unwrap();
        assert_eq!(tr.terminated, Termination::Completed);
        assert!((tr.final_time() - 4.0).abs() < 1e-12);
        let x = tr.states().unwrap().last().unwrap()[0];
        assert!((x - 1.0 / 3.0).abs() < 1e-6, "{x}");
    }

    #[test]
    fn linear_part_is_exact() {
        let spec = SpectrumSpec::simple(vec![0.0, 2.0]).unwrap();
        let prob = make_linear(spec);
        let t_end = std::f64::consts::LN_2;
        for dt in [0.3, 0.01] {
            let tr = integrate(&prob, &StateVector(vec![1.0, 1.0]), &IntegratorConfig::uniform(dt, t_end)).unwrap();
            let u = tr.states().unwrap().last().unwrap();
            assert!((u[0] - 1.0).abs() < 1e-15 && (u[1] - 0.25).abs() < 1e-14, "{u:?}");
        }
    }

    #[test]
    fn second_order_convergence() {
        let prob = make_ode2_slow();
        let err = |dt: f64| {
            let tr = integrate(&prob, &StateVector(vec![1.0, 0.0]), &IntegratorConfig::uniform(dt, 1.0)).unwrap();
            (tr.states().unwrap().last().unwrap()[0] - x_exact(1.0, 1.0)).abs()
        };
        let (e1, e2) = (err(0.02), err(0.01));
        assert!(e1 / e2 >= 3.5, "{e1} {e2}");
        let first = |dt: f64| {
            let cfg = IntegratorConfig {
                scheme: Scheme::Etd1,
                ..IntegratorConfig::uniform(dt, 1.0)
            };
            let tr = integrate(&prob, &StateVector(vec![1.0, 0.0]), &cfg).unwrap();
            (tr.states().unwrap().last().unwrap()[0] - x_exact(1.0, 1.0)).abs()
        };
        let r = first(0.02) / first(0.01);
        assert!((1.7..2.3).contains(&r), "{r}");
    }

    #[test]
    fn homogeneous_neumann_datum() {
        let prob = make_neumann_interval(8, 2.0, 1.0).unwrap();
        let a = 0.1;
        let cfg = IntegratorConfig {
            output_times: vec![1.0, 10.0],
            ..IntegratorConfig::geometric(1e-3, 100.0, 1e-3)
        };
        let tr = integrate(&prob, &StateVector::unit(8, 0).scaled(a), &cfg).unwrap();
        for t in [1.0, 10.0, 100.0] {
            let k = tr.nearest(t).unwrap();
            assert_eq!(tr.times[k], t);
            let exact = (a.powi(-2) + 2.0 * t).powf(-0.5);
            assert!((tr.norm_h[k] - exact).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn forcing_oracles() {
        let spec = SpectrumSpec::simple(vec![1.0]).unwrap();
        let cfg = IntegratorConfig::uniform(1e-2, 5.0);
        let g = SampledForcing::uniform(1e-4, 5.0, |s| StateVector(vec![(-2.0 * s).exp()]));
        let tr = integrate_linear_forced(&spec, &StateVector::zeros(1), &g, &cfg).unwrap();
        for (t, u) in tr.times.iter().zip(tr.states().unwrap()) {
            assert!((u[0] - ((-t).exp() - (-2.0 * t).exp())).abs() < 1e-8);
        }
        let g = SampledForcing::uniform(1e-4, 5.0, |s| StateVector(vec![(-s).exp()]));
        let tr = integrate_linear_forced(&spec, &StateVector::zeros(1), &g, &cfg).unwrap();
        for (t, u) in tr.times.iter().zip(tr.states().unwrap()) {
            assert!((u[0] - t * (-t).exp()).abs() < 1e-8);
        }
        let short = SampledForcing::uniform(0.1, 1.0, |_| StateVector(vec![0.0]));
        assert!(matches!(
            integrate_linear_forced(&spec, &StateVector::zeros(1), &short, &cfg),
            Err(Error::ForcingTooShort { .. })
        ));
    }

    #[test]
    fn bad_configs_are_rejected() {
        let prob = make_ode2_slow();
        let u0 = StateVector(vec![0.5, 0.0]);
        assert!(matches!(
            integrate(&prob, &u0, &IntegratorConfig::uniform(1e-3, 0.0)),
            Err(Error::EmptyTimeSpan)
        ));
        assert!(integrate(&prob, &u0, &IntegratorConfig::uniform(2.0, 1.0)).is_err());
    }

    #[test]
    fn geometric_steps_reach_far() {
        let prob = make_ode2_slow();
        let cfg = IntegratorConfig {
            diag_stride: 50,
            store_states: false,
            ..IntegratorConfig::geometric(1e-3, 1e8, 1e-3)
        };
        let tr = integrate(&prob, &StateVector(vec![1.0, 0.0]), &cfg).unwrap();
        assert!(tr.steps < 30_000, "{}", tr.steps);
        let x = tr.norm_h.last().unwrap();
        assert!((x / x_exact(1.0, 1e8) - 1.0).abs() < 1e-3);
    }
}
