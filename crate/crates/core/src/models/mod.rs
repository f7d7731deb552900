//! Problem library: concrete pairs `(A, f)` with their order constants.

mod maps;
mod sampling;
mod transform;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use maps::{CubicDrift, NonlinearMap, PointwisePsi, PolyTerm, PolynomialMap, PowerForcing, PowerPsi, ZeroMap};
pub use sampling::{estimate_constants, sample_in_ball, SampledConstants, SamplingOptions};
pub use transform::{BasisKind, TransformPair};

use crate::error::{Error, Result};
use crate::spectral::{SpectrumSpec, StateVector};

/// Where the numbers in [`OrderBounds`] came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstantsProvenance {
    /// Closed-form bounds derived by hand for the instance.
    Formula,
    /// Maximised ratios over a random sample, times a safety factor.
    Sampled {
        options: SamplingOptions,
        raw: SampledConstants,
    },
    /// Supplied verbatim by the user.
    Supplied,
}

/// Order and Lipschitz data of `f` on the ball `B_R` of `D(A^{1/2})`.
///
/// `|f(u)| <= k0 (|u|^{1+p} + |A^{1/2}u|^{1+q})` and
/// `|f(u)-f(v)| <= lipschitz (|u|_D^p + |v|_D^p) |u-v|_D` on `B_R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderBounds {
    pub k0: f64,
    pub p: f64,
    pub q: f64,
    pub lipschitz: f64,
    /// `<u, f(u)> <= 0` on `B_R`.
    pub sign_condition: bool,
    pub radius: f64,
    pub provenance: ConstantsProvenance,
}

impl OrderBounds {
    fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.into(),
            })
        };
        if !(self.p > 0.0) {
            return bad("p", "must be positive");
        }
        if !(self.q > 0.0) {
            return bad("q", "must be positive");
        }
        if !(self.radius > 0.0) {
            return bad("R", "must be positive");
        }
        if !(self.k0 >= 0.0) || !(self.lipschitz >= 0.0) {
            return bad("K0", "order constants must be nonnegative");
        }
        Ok(())
    }
}

/// Knobs for the interval (PDE) instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeOptions {
    /// Collocation points; defaults to `2(N + 1)`.
    pub grid_size: Option<usize>,
    pub radius: f64,
    pub sampling: SamplingOptions,
}

impl Default for PdeOptions {
    fn default() -> Self {
        Self {
            grid_size: None,
            radius: 1.0,
            sampling: SamplingOptions::default(),
        }
    }
}

/// The evolution problem `u' + Au = f(u)`.
#[derive(Debug, Clone)]
pub struct ProblemDefinition {
    pub name: String,
    pub spectrum: SpectrumSpec,
    pub nonlinearity: Arc<dyn NonlinearMap>,
    pub bounds: OrderBounds,
    pub transform: Option<TransformPair>,
}

impl ProblemDefinition {
    pub fn dim(&self) -> usize {
        self.spectrum.total_dim()
    }

    /// `f(u)` in eigencoordinates, refusing states outside `B_R`.
    pub fn eval_nonlinearity(&self, u: &StateVector) -> Result<StateVector> {
        self.spectrum.check_state(u)?;
        let norm = self.spectrum.norm_d(u);
        if norm >= self.bounds.radius {
            return Err(Error::OutsideValidityBall {
                norm,
                radius: self.bounds.radius,
            });
        }
        Ok(self.eval_unchecked(u))
    }

    /// `f(u)` without the ball check.
    pub fn eval_unchecked(&self, u: &StateVector) -> StateVector {
        let mut out = StateVector::zeros(u.len());
        self.nonlinearity.apply(u.as_slice(), out.as_mut_slice());
        out
    }

    pub fn is_linear(&self) -> bool {
        self.nonlinearity.is_zero()
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be a positive finite number, got {v}"),
        })
    }
}

/// `x' = -x^3`, `y' + y = x^3` on `R^2`: spectrum `{0, 1}`, `p = q = 2`.
///
/// From `x(0) = 1` the first component is `(1 + 2t)^{-1/2}`.
pub fn make_ode2_slow() -> ProblemDefinition {
    ProblemDefinition {
        name: "ode2_slow".into(),
        spectrum: SpectrumSpec::simple(vec![0.0, 1.0]).expect("static spectrum"),
        nonlinearity: Arc::new(CubicDrift),
        bounds: OrderBounds {
            // |f| = sqrt(2)|x|^3 <= sqrt(2)|u|^3
            k0: std::f64::consts::SQRT_2,
            p: 2.0,
            q: 2.0,
            // |x^3 - x'^3| <= 1.5 (x^2 + x'^2) |x - x'|
            lipschitz: 1.5 * std::f64::consts::SQRT_2,
            // <u, f(u)> = x^3 (y - x) changes sign away from the slow manifold
            sign_condition: false,
            radius: 4.0,
            provenance: ConstantsProvenance::Formula,
        },
        transform: None,
    }
}

/// `x' + lambda x = 0`, `y' + beta y = |x|^{1+p} + |x|^{1+q}`.
///
/// The stored exponents are sorted so that `bounds.p <= bounds.q`; the
/// forcing is symmetric in them.
pub fn make_ode2_fast(lambda: f64, beta: f64, p: f64, q: f64) -> Result<ProblemDefinition> {
    positive("lambda", lambda)?;
    positive("beta", beta)?;
    positive("p", p)?;
    positive("q", q)?;
    if beta <= lambda {
        return Err(Error::NoGapAboveLambda { lambda, beta });
    }
    let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
    let radius: f64 = 4.0;
    Ok(ProblemDefinition {
        name: "ode2_fast".into(),
        spectrum: SpectrumSpec::simple(vec![lambda, beta])?,
        nonlinearity: Arc::new(PowerForcing { p, q }),
        bounds: OrderBounds {
            // |x|^{1+lo} <= |u|^{1+lo}, |x|^{1+hi} <= lambda^{-(1+hi)/2} |A^{1/2}u|^{1+hi}
            k0: 1f64.max(lambda.powf(-(1.0 + hi) / 2.0)),
            p: lo,
            q: hi,
            // (1+s)|x|^s Lipschitz factors, |x|^hi <= R^{hi-lo} |x|^lo on the ball
            lipschitz: (1.0 + lo) + (1.0 + hi) * radius.powf(hi - lo),
            sign_condition: false,
            radius,
            provenance: ConstantsProvenance::Formula,
        },
        transform: None,
    })
}

fn interval_problem(
    name: &str,
    spectrum: SpectrumSpec,
    kind: BasisKind,
    p: f64,
    c: f64,
    opts: &PdeOptions,
) -> Result<ProblemDefinition> {
    positive("p", p)?;
    positive("c", c)?;
    positive("R", opts.radius)?;
    let n = spectrum.total_dim();
    let grid = opts.grid_size.unwrap_or(2 * (n + 1));
    if grid < 2 * n {
        return Err(Error::InvalidParameter {
            name: "grid_size",
            reason: format!("{grid} < 2N = {}", 2 * n),
        });
    }
    let transform = TransformPair::with_grid(kind, n, grid);
    let map = PointwisePsi {
        psi: PowerPsi { c, p },
        transform: transform.clone(),
    };
    let raw = estimate_constants(&spectrum, &map, p, p, opts.radius, &opts.sampling);
    let bounds = OrderBounds {
        k0: raw.k0,
        p,
        q: p,
        lipschitz: raw.lipschitz,
        // psi(s) s = c |s|^{2+p} >= 0, and the quadrature inner product
        // <u, f(u)> = -mean_j psi(u_j) u_j inherits the sign exactly
        sign_condition: true,
        radius: opts.radius,
        provenance: ConstantsProvenance::Sampled {
            options: opts.sampling,
            raw,
        },
    };
    bounds.validate()?;
    Ok(ProblemDefinition {
        name: name.into(),
        spectrum,
        nonlinearity: Arc::new(map),
        bounds,
        transform: Some(transform),
    })
}

/// `u_t - u_xx + c|u|^p u = 0` on `(0, pi)` with Neumann conditions,
/// truncated to the cosine modes `k = 0..N`.
pub fn make_neumann_interval(modes: usize, p: f64, c: f64) -> Result<ProblemDefinition> {
    make_neumann_interval_with(modes, p, c, &PdeOptions::default())
}

pub fn make_neumann_interval_with(modes: usize, p: f64, c: f64, opts: &PdeOptions) -> Result<ProblemDefinition> {
    if modes < 2 {
        return Err(Error::InvalidParameter {
            name: "modes",
            reason: "need at least 2 modes".into(),
        });
    }
    let spectrum = SpectrumSpec::simple((0..modes).map(|k| (k * k) as f64).collect())?;
    interval_problem("neumann_interval", spectrum, BasisKind::Cosine, p, c, opts)
}

/// Shift used for the subcritical Dirichlet instance.
pub const SUBCRITICAL_SHIFT: f64 = 0.5;

/// `u_t - u_xx - lambda u + c|u|^p u = 0` on `(0, pi)` with Dirichlet
/// conditions; `critical` takes `lambda = lambda_1 = 1`, otherwise
/// [`SUBCRITICAL_SHIFT`].
pub fn make_dirichlet_interval(modes: usize, p: f64, c: f64, critical: bool) -> Result<ProblemDefinition> {
    let shift = if critical { 1.0 } else { SUBCRITICAL_SHIFT };
    make_dirichlet_interval_with(modes, p, c, shift, &PdeOptions::default())
}

pub fn make_dirichlet_interval_with(
    modes: usize,
    p: f64,
    c: f64,
    shift: f64,
    opts: &PdeOptions,
) -> Result<ProblemDefinition> {
    if modes < 2 {
        return Err(Error::InvalidParameter {
            name: "modes",
            reason: "need at least 2 modes".into(),
        });
    }
    if !(shift <= 1.0) || !shift.is_finite() {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: format!("shift {shift} must not exceed the first Dirichlet eigenvalue 1"),
        });
    }
    let spectrum = SpectrumSpec::simple((1..=modes).map(|k| (k * k) as f64 - shift).collect())?;
    interval_problem("dirichlet_interval", spectrum, BasisKind::Sine, p, c, opts)
}

/// `f = 0` on the given spectrum.
pub fn make_linear(spectrum: SpectrumSpec) -> ProblemDefinition {
    ProblemDefinition {
        name: "linear".into(),
        spectrum,
        nonlinearity: Arc::new(ZeroMap),
        bounds: OrderBounds {
            k0: 0.0,
            p: 1.0,
            q: 1.0,
            lipschitz: 0.0,
            sign_condition: true,
            radius: f64::INFINITY,
            provenance: ConstantsProvenance::Formula,
        },
        transform: None,
    }
}

/// User-defined spectrum with a polynomial nonlinearity.
///
/// With `bounds = None` the exponents default to `p = q = d - 1` for the
/// smallest total degree `d`, and `K0`, `L` and the sign flag are sampled.
pub fn make_custom(
    spectrum: SpectrumSpec,
    terms: Vec<PolyTerm>,
    bounds: Option<OrderBounds>,
    radius: f64,
    sampling: &SamplingOptions,
) -> Result<ProblemDefinition> {
    let n = spectrum.total_dim();
    for t in &terms {
        if t.output >= n || t.powers.iter().any(|&(m, _)| m >= n) {
            return Err(Error::InvalidParameter {
                name: "terms",
                reason: format!("term {t:?} references a mode outside 0..{n}"),
            });
        }
    }
    let map = PolynomialMap { terms };
    let bounds = match bounds {
        Some(b) => b,
        None => {
            let deg = map.min_degree().unwrap_or(2);
            if deg < 2 {
                return Err(Error::InvalidParameter {
                    name: "terms",
                    reason: "nonlinearity must have order greater than one".into(),
                });
            }
            let p = f64::from(deg - 1);
            let raw = estimate_constants(&spectrum, &map, p, p, radius, sampling);
            OrderBounds {
                k0: raw.k0,
                p,
                q: p,
                lipschitz: raw.lipschitz,
                sign_condition: raw.max_sign_product <= 0.0,
                radius,
                provenance: ConstantsProvenance::Sampled {
                    options: *sampling,
                    raw,
                },
            }
        }
    };
    bounds.validate()?;
    let linear = map.is_zero();
    Ok(ProblemDefinition {
        name: "custom".into(),
        spectrum,
        nonlinearity: if linear { Arc::new(ZeroMap) } else { Arc::new(map) },
        bounds,
        transform: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ode2_slow_rhs() {
        let prob = make_ode2_slow();
        let f = prob.eval_nonlinearity(&StateVector(vec![1.0, 0.0])).unwrap();
        assert_eq!(f.0, vec![-1.0, 1.0]);
        assert!(prob.eval_nonlinearity(&StateVector::zeros(2)).unwrap().is_zero());
    }

    #[test]
    fn ode2_fast_requires_gap() {
        assert!(matches!(
            make_ode2_fast(1.0, 1.0, 1.0, 1.0),
            Err(Error::NoGapAboveLambda { .. })
        ));
        let prob = make_ode2_fast(1.0, 10.0, 1.0, 1.0).unwrap();
        let f = prob.eval_nonlinearity(&StateVector(vec![0.5, 0.3])).unwrap();
        assert_eq!(f.0, vec![0.0, 0.5]);
    }

    #[test]
    fn interval_spectra() {
        let n = make_neumann_interval(4, 2.0, 1.0).unwrap();
        assert_eq!(n.spectrum.eigenvalues(), &[0.0, 1.0, 4.0, 9.0]);
        assert_eq!(n.spectrum.gap(), Some(1.0));
        let d = make_dirichlet_interval(3, 2.0, 1.0, true).unwrap();
        assert_eq!(d.spectrum.eigenvalues(), &[0.0, 3.0, 8.0]);
        assert_eq!(d.spectrum.kernel_range(), 0..1);
        let s = make_dirichlet_interval(2, 2.0, 1.0, false).unwrap();
        assert_eq!(s.spectrum.eigenvalues(), &[0.5, 3.5]);
        assert!(!s.spectrum.has_kernel());
    }

    #[test]
    fn cube_of_constant_stays_in_kernel() {
        let prob = make_neumann_interval(8, 2.0, 1.0).unwrap();
        let c = 0.3;
        let f = prob.eval_nonlinearity(&StateVector::unit(8, 0).scaled(c)).unwrap();
        assert!((f[0] + c * c * c).abs() < 1e-15);
        assert!(f.as_slice()[1..].iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn outside_ball_is_an_error() {
        let prob = make_neumann_interval(4, 2.0, 1.0).unwrap();
        let u = StateVector::unit(4, 1).scaled(0.8); // |u|_D = 0.8 sqrt(2)
        assert!(matches!(
            prob.eval_nonlinearity(&u),
            Err(Error::OutsideValidityBall { .. })
        ));
    }

    fn builtin() -> Vec<ProblemDefinition> {
        vec![
            make_ode2_slow(),
            make_ode2_fast(1.0, 10.0, 1.0, 1.0).unwrap(),
            make_ode2_fast(1.0, 1.5, 1.0, 3.0).unwrap(),
            make_neumann_interval(8, 2.0, 1.0).unwrap(),
            make_neumann_interval(6, 1.0, 0.5).unwrap(),
            make_dirichlet_interval(8, 2.0, 1.0, true).unwrap(),
            make_dirichlet_interval(8, 2.0, 1.0, false).unwrap(),
        ]
    }

    #[test]
    fn order_bound_holds_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for prob in builtin() {
            let b = &prob.bounds;
            for _ in 0..1000 {
                let u = sample_in_ball(&prob.spectrum, b.radius / 2.0, &mut rng);
                let f = prob.eval_nonlinearity(&u).unwrap();
                let bound = b.k0
                    * (u.norm_h().powf(1.0 + b.p) + prob.spectrum.norm_ahalf(&u).powf(1.0 + b.q));
                assert!(f.norm_h() <= bound * (1.0 + 1e-12), "{}: {} > {}", prob.name, f.norm_h(), bound);
            }
        }
    }

    #[test]
    fn sign_condition_holds_where_claimed() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for prob in builtin().into_iter().filter(|p| p.bounds.sign_condition) {
            for _ in 0..1000 {
                let u = sample_in_ball(&prob.spectrum, prob.bounds.radius / 2.0, &mut rng);
                let f = prob.eval_nonlinearity(&u).unwrap();
                assert!(u.dot(&f) <= 1e-10, "{}", prob.name);
            }
        }
    }

    #[test]
    fn lipschitz_bound_holds_on_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for prob in builtin() {
            let b = &prob.bounds;
            let s = &prob.spectrum;
            for i in 0..1000 {
                let u = sample_in_ball(s, b.radius / 2.0, &mut rng);
                let v = if i % 2 == 0 {
                    sample_in_ball(s, b.radius / 2.0, &mut rng)
                } else {
                    let d = sample_in_ball(s, 1e-3 * s.norm_d(&u), &mut rng);
                    u.add(&d)
                };
                let lhs = prob.eval_unchecked(&u).sub(&prob.eval_unchecked(&v)).norm_h();
                let rhs = b.lipschitz * (s.norm_d(&u).powf(b.p) + s.norm_d(&v).powf(b.p)) * s.norm_d(&u.sub(&v));
                assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-300, "{}: {lhs} > {rhs}", prob.name);
            }
        }
    }

    #[test]
    fn custom_polynomial_defaults() {
        let spec = SpectrumSpec::simple(vec![0.0, 2.0]).unwrap();
        let terms = vec![PolyTerm { output: 0, coeff: -1.0, powers: vec![(0, 3)] }];
        let prob = make_custom(spec, terms, None, 1.0, &SamplingOptions::default()).unwrap();
        assert_eq!(prob.bounds.p, 2.0);
        assert!(prob.bounds.sign_condition);
        let lin = make_custom(SpectrumSpec::simple(vec![1.0]).unwrap(), vec![], None, 1.0, &SamplingOptions::default()).unwrap();
        assert!(lin.is_linear());
    }
}
