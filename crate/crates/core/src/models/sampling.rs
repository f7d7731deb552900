//! Sampled estimates of the order constant `K0` and the Lipschitz factor `L`.
//!
//! Both are suprema of explicit ratios over the validity ball; we maximise
//! them over a seeded random sample and multiply by a safety factor. The
//! result is a plausible, not a certified, constant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::maps::NonlinearMap;
use crate::spectral::{SpectrumSpec, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingOptions {
    pub seed: u64,
    pub samples: usize,
    pub safety: f64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            seed: 0x5eed_0001,
            samples: 10_000,
            safety: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledConstants {
    /// `max |f(u)| / (|u|^{1+p} + |A^{1/2}u|^{1+q})` over the sample.
    pub max_order_ratio: f64,
    /// `max |f(u)-f(v)| / ((|u|_D^p + |v|_D^p) |u-v|_D)` over sampled pairs.
    pub max_lipschitz_ratio: f64,
    /// Largest `<u, f(u)>` seen; the sign condition is plausible when `<= 0`.
    pub max_sign_product: f64,
    pub k0: f64,
    pub lipschitz: f64,
}

/// Random point of the ball `|u|_D < radius`.
///
/// Directions mix smooth (spectrally decaying) and rough profiles, single
/// modes, and pure kernel elements, so the sup of scale-free ratios is
/// probed from several sides.
pub fn sample_in_ball<R: Rng + ?Sized>(spectrum: &SpectrumSpec, radius: f64, rng: &mut R) -> StateVector {
    let n = spectrum.total_dim();
    let kind: f64 = rng.random();
    let mut u = StateVector::zeros(n);
    if kind < 0.15 {
        u[rng.random_range(0..n)] = 1.0;
    } else if kind < 0.25 && spectrum.has_kernel() {
        for j in spectrum.kernel_range() {
            u[j] = rng.sample(StandardNormal);
        }
    } else {
        let decay: f64 = rng.random_range(0.0..1.5);
        for (j, &ev) in spectrum.mode_eigenvalues().iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            u[j] = z * (1.0 + ev).powf(-decay);
        }
    }
    let d = spectrum.norm_d(&u);
    if d == 0.0 {
        u[0] = 1.0;
        return sample_in_ball(spectrum, radius, rng);
    }
    let r = radius * rng.random_range(1e-3..0.999f64);
    u.scaled(r / spectrum.norm_d(&u))
}

pub fn estimate_constants(
    spectrum: &SpectrumSpec,
    map: &dyn NonlinearMap,
    p: f64,
    q: f64,
    radius: f64,
    opts: &SamplingOptions,
) -> SampledConstants {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = spectrum.total_dim();
    let mut fu = vec![0.0; n];
    let mut fv = vec![0.0; n];
    let mut order: f64 = 0.0;
    let mut lip: f64 = 0.0;
    let mut sign = f64::NEG_INFINITY;
    for i in 0..opts.samples {
        let u = sample_in_ball(spectrum, radius, &mut rng);
        map.apply(u.as_slice(), &mut fu);
        let fnorm = fu.iter().map(|x| x * x).sum::<f64>().sqrt();
        let denom = u.norm_h().powf(1.0 + p) + spectrum.norm_ahalf(&u).powf(1.0 + q);
        if denom > 0.0 {
            order = order.max(fnorm / denom);
        }
        sign = sign.max(u.as_slice().iter().zip(&fu).map(|(a, b)| a * b).sum());

        let v = if i % 2 == 0 {
            sample_in_ball(spectrum, radius, &mut rng)
        } else {
            let dir = sample_in_ball(spectrum, 1.0, &mut rng);
            let eps = spectrum.norm_d(&u) * 10f64.powf(-rng.random_range(1.0..4.0));
            let mut v = u.clone();
            v.axpy(eps / spectrum.norm_d(&dir), &dir);
            if spectrum.norm_d(&v) >= radius {
                continue;
            }
            v
        };
        map.apply(v.as_slice(), &mut fv);
        let diff = fu.iter().zip(&fv).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let uv = spectrum.norm_d(&u.sub(&v));
        let denom = (spectrum.norm_d(&u).powf(p) + spectrum.norm_d(&v).powf(p)) * uv;
        if denom > 0.0 {
            lip = lip.max(diff / denom);
        }
    }
    SampledConstants {
        max_order_ratio: order,
        max_lipschitz_ratio: lip,
        max_sign_product: sign,
        k0: opts.safety * order,
        lipschitz: opts.safety * lip,
    }
}
